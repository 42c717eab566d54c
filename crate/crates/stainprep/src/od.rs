use image::RgbImage;

/// Optical densities per pixel, row-major.
#[derive(Debug, Clone)]
pub struct OdImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f64; 3]>,
}

impl OdImage {
    pub fn at(&self, x: u32, y: u32) -> [f64; 3] {
        self.data[(y * self.width + x) as usize]
    }
}

/// OD = -log10((I + 1) / 256) per channel.
pub fn rgb_to_od(img: &RgbImage) -> OdImage {
    let data = img
        .pixels()
        .map(|p| {
            let f = |v: u8| -(((v as f64) + 1.0) / 256.0).log10();
            [f(p.0[0]), f(p.0[1]), f(p.0[2])]
        })
        .collect();
    OdImage {
        width: img.width(),
        height: img.height(),
        data,
    }
}

/// Inverse of [`rgb_to_od`]; intensities are rounded and clamped to [0, 255].
pub fn od_to_rgb(od: &OdImage) -> RgbImage {
    let mut img = RgbImage::new(od.width, od.height);
    for (i, p) in img.pixels_mut().enumerate() {
        for c in 0..3 {
            let v = 256.0 * 10f64.powf(-od.data[i][c]) - 1.0;
            p.0[c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    img
}
