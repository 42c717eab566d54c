use image::RgbImage;
use synthcohort::Magnification;

use crate::StainError;

#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub magnification: Magnification,
    pub image: RgbImage,
    /// Linear scale relative to the base image.
    pub scale: f64,
}

/// Magnification pyramid of one spot: the base at x40, 2x area-average
/// downsamples at x20/x10/x5, and the whole-spot thumbnail at x0.
#[derive(Debug, Clone)]
pub struct TilePyramid {
    pub levels: Vec<PyramidLevel>,
}

impl TilePyramid {
    pub fn level(&self, m: Magnification) -> Option<&PyramidLevel> {
        self.levels.iter().find(|l| l.magnification == m)
    }
}

/// Halve both dimensions by averaging 2x2 blocks (trailing odd row/column
/// dropped).
fn downsample_half(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width() / 2, img.height() / 2);
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0u32; 3];
            for dy in 0..2 {
                for dx in 0..2 {
                    let p = img.get_pixel(2 * x + dx, 2 * y + dy);
                    for c in 0..3 {
                        acc[c] += p.0[c] as u32;
                    }
                }
            }
            let p = out.get_pixel_mut(x, y);
            for c in 0..3 {
                p.0[c] = ((acc[c] as f64) / 4.0).round() as u8;
            }
        }
    }
    out
}

/// Box-filter resize (area average), used for the whole-spot thumbnail.
pub(crate) fn resize_area(img: &RgbImage, out_w: u32, out_h: u32) -> RgbImage {
    let (in_w, in_h) = (img.width() as f64, img.height() as f64);
    let mut out = RgbImage::new(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let x0 = x as f64 * in_w / out_w as f64;
            let x1 = (x + 1) as f64 * in_w / out_w as f64;
            let y0 = y as f64 * in_h / out_h as f64;
            let y1 = (y + 1) as f64 * in_h / out_h as f64;
            let mut acc = [0.0f64; 3];
            let mut area = 0.0;
            let (ix0, ix1) = (x0.floor() as u32, (x1.ceil() as u32).min(img.width()));
            let (iy0, iy1) = (y0.floor() as u32, (y1.ceil() as u32).min(img.height()));
            for sy in iy0..iy1 {
                for sx in ix0..ix1 {
                    let wx = (x1.min((sx + 1) as f64) - x0.max(sx as f64)).max(0.0);
                    let wy = (y1.min((sy + 1) as f64) - y0.max(sy as f64)).max(0.0);
                    let w = wx * wy;
                    if w > 0.0 {
                        let p = img.get_pixel(sx, sy);
                        for c in 0..3 {
                            acc[c] += w * p.0[c] as f64;
                        }
                        area += w;
                    }
                }
            }
            let p = out.get_pixel_mut(x, y);
            for c in 0..3 {
                p.0[c] = (acc[c] / area).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Build the five-level pyramid from a base spot image.
pub fn build_pyramid(spot: &RgbImage, tile_px: u32) -> Result<TilePyramid, StainError> {
    if spot.width() < tile_px || spot.height() < tile_px {
        return Err(StainError::Size(format!(
            "base image {}x{} smaller than tile size {tile_px}",
            spot.width(),
            spot.height()
        )));
    }
    let x20 = downsample_half(spot);
    let x10 = downsample_half(&x20);
    let x5 = downsample_half(&x10);
    let x0 = resize_area(spot, tile_px, tile_px);
    let base_w = spot.width() as f64;
    Ok(TilePyramid {
        levels: vec![
            PyramidLevel {
                magnification: Magnification::X40,
                image: spot.clone(),
                scale: 1.0,
            },
            PyramidLevel {
                magnification: Magnification::X20,
                image: x20,
                scale: 0.5,
            },
            PyramidLevel {
                magnification: Magnification::X10,
                image: x10,
                scale: 0.25,
            },
            PyramidLevel {
                magnification: Magnification::X5,
                image: x5,
                scale: 0.125,
            },
            PyramidLevel {
                magnification: Magnification::X0,
                image: x0,
                scale: tile_px as f64 / base_w,
            },
        ],
    })
}
