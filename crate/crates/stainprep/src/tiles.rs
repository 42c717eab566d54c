use std::collections::BTreeSet;

use image::RgbImage;
use synthcohort::{TissueMask, TissueType};

use crate::StainError;

/// One extracted grid tile with its grid position and pixel origin.
#[derive(Debug, Clone)]
pub struct GridTile {
    pub row: u32,
    pub col: u32,
    pub x: u32,
    pub y: u32,
    pub image: RgbImage,
}

/// Cut the level into an axis-aligned grid of `tile_px` squares from the
/// origin; partial edge remainders are dropped. A level smaller than one
/// tile yields no tiles.
pub fn extract_tiles(level: &RgbImage, tile_px: u32) -> Result<Vec<GridTile>, StainError> {
    if tile_px < 16 {
        return Err(StainError::Size(format!(
            "tile size must be at least 16, got {tile_px}"
        )));
    }
    let (cols, rows) = (level.width() / tile_px, level.height() / tile_px);
    let mut out = Vec::with_capacity((cols * rows) as usize);
    for row in 0..rows {
        for col in 0..cols {
            let (x, y) = (col * tile_px, row * tile_px);
            let mut image = RgbImage::new(tile_px, tile_px);
            for ty in 0..tile_px {
                for tx in 0..tile_px {
                    image.put_pixel(tx, ty, *level.get_pixel(x + tx, y + ty));
                }
            }
            out.push(GridTile { row, col, x, y, image });
        }
    }
    Ok(out)
}

/// Majority mask label of each tile, looked up in base-image coordinates
/// (`scale` is the level's linear scale relative to the base). `None` means
/// the majority is background.
pub fn derive_tile_labels(
    tiles: &[GridTile],
    mask: &TissueMask,
    scale: f64,
    tile_px: u32,
) -> Result<Vec<Option<TissueType>>, StainError> {
    if scale <= 0.0 {
        return Err(StainError::Size(format!("non-positive scale {scale}")));
    }
    let mut labels = Vec::with_capacity(tiles.len());
    for t in tiles {
        let x0 = (t.x as f64 / scale).floor() as u32;
        let y0 = (t.y as f64 / scale).floor() as u32;
        let span = (tile_px as f64 / scale).round() as u32;
        let x1 = (x0 + span).min(mask.width);
        let y1 = (y0 + span).min(mask.height);
        if x0 >= mask.width || y0 >= mask.height {
            return Err(StainError::Metadata(format!(
                "tile at ({}, {}) maps outside the {}x{} mask",
                t.x, t.y, mask.width, mask.height
            )));
        }
        let mut counts = [0usize; 5];
        for y in y0..y1 {
            for x in x0..x1 {
                counts[mask.code_at(x, y) as usize] += 1;
            }
        }
        let majority = counts
            .iter()
            .enumerate()
            .max_by_key(|(code, &c)| (c, 5 - code))
            .map(|(code, _)| code as u8)
            .unwrap();
        labels.push(TissueMask::code_to_tissue(majority));
    }
    Ok(labels)
}

/// Keep tiles whose tissue label is in `keep`. Background-majority tiles
/// (label `None`) are discarded first.
pub fn filter_roi(
    tiles: Vec<GridTile>,
    labels: &[Option<TissueType>],
    keep: &BTreeSet<TissueType>,
) -> Result<Vec<(GridTile, TissueType)>, StainError> {
    if labels.len() != tiles.len() {
        return Err(StainError::Metadata(format!(
            "{} labels for {} tiles",
            labels.len(),
            tiles.len()
        )));
    }
    Ok(tiles
        .into_iter()
        .zip(labels.iter())
        .filter_map(|(t, l)| l.and_then(|tissue| keep.contains(&tissue).then_some((t, tissue))))
        .collect())
}

/// Bilinear square resize; identical sizes return the input unchanged.
pub fn resize_tile(tile: &RgbImage, out_px: u32) -> Result<RgbImage, StainError> {
    if tile.width() != tile.height() {
        return Err(StainError::Size(format!(
            "resize_tile needs a square input, got {}x{}",
            tile.width(),
            tile.height()
        )));
    }
    if out_px == 0 {
        return Err(StainError::Size("output size must be positive".into()));
    }
    let in_px = tile.width();
    if in_px == out_px {
        return Ok(tile.clone());
    }
    let scale = in_px as f64 / out_px as f64;
    let mut out = RgbImage::new(out_px, out_px);
    for y in 0..out_px {
        for x in 0..out_px {
            let sx = ((x as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_px - 1) as f64);
            let sy = ((y as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_px - 1) as f64);
            let (x0, y0) = (sx.floor() as u32, sy.floor() as u32);
            let (x1, y1) = ((x0 + 1).min(in_px - 1), (y0 + 1).min(in_px - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let p = out.get_pixel_mut(x, y);
            for c in 0..3 {
                let v00 = tile.get_pixel(x0, y0).0[c] as f64;
                let v10 = tile.get_pixel(x1, y0).0[c] as f64;
                let v01 = tile.get_pixel(x0, y1).0[c] as f64;
                let v11 = tile.get_pixel(x1, y1).0[c] as f64;
                let v = v00 * (1.0 - fx) * (1.0 - fy)
                    + v10 * fx * (1.0 - fy)
                    + v01 * (1.0 - fx) * fy
                    + v11 * fx * fy;
                p.0[c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}
