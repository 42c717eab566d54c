use image::RgbImage;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::od::{od_to_rgb, rgb_to_od, OdImage};
use crate::StainError;

/// OD-norm threshold below which a pixel counts as background.
pub const DEFAULT_BETA: f64 = 0.15;
/// Robust angle percentile for the extreme stain directions.
pub const DEFAULT_ALPHA: f64 = 1.0;

const MIN_TISSUE_PIXELS: usize = 100;

/// Estimated stain basis: two unit OD direction columns (hematoxylin first)
/// plus the per-stain 99th-percentile concentration references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StainProfile {
    /// 3x2, columns are unit stain vectors in OD space.
    pub stain_matrix: [[f64; 2]; 3],
    pub concentration_percentiles: [f64; 2],
}

impl StainProfile {
    pub fn column(&self, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.stain_matrix[0][k],
            self.stain_matrix[1][k],
            self.stain_matrix[2][k],
        )
    }
}

fn percentile(sorted: &[f64], pct: f64) -> f64 {
    // linear interpolation between closest ranks
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn tissue_od_pixels(od: &OdImage, beta: f64) -> Vec<Vector3<f64>> {
    od.data
        .iter()
        .filter(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() > beta)
        .map(|p| Vector3::new(p[0], p[1], p[2]))
        .collect()
}

/// Least-squares stain concentrations of each pixel against a stain basis.
fn concentrations(od_pixels: &[Vector3<f64>], profile: &StainProfile) -> Vec<[f64; 2]> {
    let m0 = profile.column(0);
    let m1 = profile.column(1);
    // normal equations for the 3x2 basis
    let a = m0.dot(&m0);
    let b = m0.dot(&m1);
    let d = m1.dot(&m1);
    let det = a * d - b * b;
    od_pixels
        .iter()
        .map(|p| {
            let r0 = m0.dot(p);
            let r1 = m1.dot(p);
            if det.abs() < 1e-12 {
                [0.0, 0.0]
            } else {
                [(d * r0 - b * r1) / det, (a * r1 - b * r0) / det]
            }
        })
        .collect()
}

/// Macenko stain-basis estimation: project tissue OD pixels onto the plane of
/// their top two singular directions and take the extreme robust angles.
pub fn estimate_stain_matrix(
    img: &RgbImage,
    od_threshold: f64,
    angle_percentile: f64,
) -> Result<StainProfile, StainError> {
    let od = rgb_to_od(img);
    let pixels = tissue_od_pixels(&od, od_threshold);
    if pixels.len() < MIN_TISSUE_PIXELS {
        return Err(StainError::Estimation(format!(
            "only {} pixels above OD threshold {od_threshold} (need {MIN_TISSUE_PIXELS})",
            pixels.len()
        )));
    }

    let mut second_moment = Matrix3::zeros();
    for p in &pixels {
        second_moment += p * p.transpose();
    }
    second_moment /= pixels.len() as f64;
    let eig = second_moment.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    if eig.eigenvalues[order[1]] <= 1e-9 * eig.eigenvalues[order[0]].max(1e-30) {
        return Err(StainError::DegenerateStain(
            "OD cloud is effectively one-dimensional (grayscale input)".into(),
        ));
    }
    let mut e1: Vector3<f64> = eig.eigenvectors.column(order[0]).into();
    let mut e2: Vector3<f64> = eig.eigenvectors.column(order[1]).into();

    // orient the basis toward the data so the angle spread stays in one branch
    let mean: Vector3<f64> = pixels.iter().sum::<Vector3<f64>>() / pixels.len() as f64;
    if e1.dot(&mean) < 0.0 {
        e1 = -e1;
    }
    if e2.iter().cloned().fold(0.0, |acc: f64, v| if v.abs() > acc.abs() { v } else { acc }) < 0.0 {
        e2 = -e2;
    }

    let mut angles: Vec<f64> = pixels
        .iter()
        .map(|p| {
            let t1 = p.dot(&e1);
            let t2 = p.dot(&e2);
            t2.atan2(t1)
        })
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let phi_lo = percentile(&angles, angle_percentile);
    let phi_hi = percentile(&angles, 100.0 - angle_percentile);

    let make_stain = |phi: f64| -> Vector3<f64> {
        let mut v = e1 * phi.cos() + e2 * phi.sin();
        if v.sum() < 0.0 {
            v = -v;
        }
        // stain absorption cannot be negative
        v = v.map(|x| x.max(0.0));
        let norm = v.norm();
        if norm > 1e-12 {
            v / norm
        } else {
            v
        }
    };
    let v_lo = make_stain(phi_lo);
    let v_hi = make_stain(phi_hi);

    // hematoxylin first: larger blue-channel OD
    let (hema, eosin) = if v_lo[2] >= v_hi[2] {
        (v_lo, v_hi)
    } else {
        (v_hi, v_lo)
    };

    let mut profile = StainProfile {
        stain_matrix: [
            [hema[0], eosin[0]],
            [hema[1], eosin[1]],
            [hema[2], eosin[2]],
        ],
        concentration_percentiles: [1.0, 1.0],
    };
    let conc = concentrations(&pixels, &profile);
    for k in 0..2 {
        let mut col: Vec<f64> = conc.iter().map(|c| c[k]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        profile.concentration_percentiles[k] = percentile(&col, 99.0).max(1e-6);
    }
    Ok(profile)
}

/// Normalize an image to a target stain profile: decompose every pixel into
/// source-basis concentrations, rescale by the 99th-percentile ratio, and
/// recompose with the target basis.
pub fn normalize_macenko(img: &RgbImage, target: &StainProfile) -> Result<RgbImage, StainError> {
    let source = estimate_stain_matrix(img, DEFAULT_BETA, DEFAULT_ALPHA)?;
    let od = rgb_to_od(img);
    let all_pixels: Vec<Vector3<f64>> = od
        .data
        .iter()
        .map(|p| Vector3::new(p[0], p[1], p[2]))
        .collect();
    let conc = concentrations(&all_pixels, &source);

    let scale = [
        target.concentration_percentiles[0] / source.concentration_percentiles[0],
        target.concentration_percentiles[1] / source.concentration_percentiles[1],
    ];
    let t0 = target.column(0);
    let t1 = target.column(1);

    let mut out = OdImage {
        width: od.width,
        height: od.height,
        data: Vec::with_capacity(od.data.len()),
    };
    for c in &conc {
        let v = t0 * (c[0].max(0.0) * scale[0]) + t1 * (c[1].max(0.0) * scale[1]);
        out.data.push([v[0], v[1], v[2]]);
    }
    Ok(od_to_rgb(&out))
}

/// Average a set of profiles into a cohort-level profile: mean stain vectors
/// (renormalized) and mean percentiles.
pub fn average_profiles(profiles: &[StainProfile]) -> Result<StainProfile, StainError> {
    if profiles.is_empty() {
        return Err(StainError::Estimation("no profiles to average".into()));
    }
    let mut cols = [Vector3::zeros(), Vector3::zeros()];
    let mut pct = [0.0f64; 2];
    for p in profiles {
        for k in 0..2 {
            cols[k] += p.column(k);
            pct[k] += p.concentration_percentiles[k];
        }
    }
    let n = profiles.len() as f64;
    for k in 0..2 {
        let norm = cols[k].norm();
        if norm < 1e-12 {
            return Err(StainError::Estimation("averaged stain vector vanished".into()));
        }
        cols[k] /= norm;
        pct[k] /= n;
    }
    Ok(StainProfile {
        stain_matrix: [
            [cols[0][0], cols[1][0]],
            [cols[0][1], cols[1][1]],
            [cols[0][2], cols[1][2]],
        ],
        concentration_percentiles: pct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // classic H&E OD directions for constructing synthetic inputs
    fn planted_matrix() -> (Vector3<f64>, Vector3<f64>) {
        let h = Vector3::new(0.65, 0.70, 0.29);
        let e = Vector3::new(0.07, 0.99, 0.11);
        (h / h.norm(), e / e.norm())
    }

    /// Mix a synthetic image from a known stain basis and random non-negative
    /// concentrations.
    fn synthetic_image(
        h: &Vector3<f64>,
        e: &Vector3<f64>,
        seed: u64,
        size: u32,
    ) -> (RgbImage, Vec<[f64; 2]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut od = OdImage {
            width: size,
            height: size,
            data: Vec::new(),
        };
        let mut fields = Vec::new();
        for _ in 0..(size * size) {
            // mostly pure-ish stains at the extremes, mixtures in between
            let t: f64 = rng.gen_range(0.0..1.0);
            let strength: f64 = rng.gen_range(0.4..1.4);
            let (c_h, c_e) = (strength * (1.0 - t), strength * t);
            let v = h * c_h + e * c_e;
            od.data.push([v[0], v[1], v[2]]);
            fields.push([c_h, c_e]);
        }
        (od_to_rgb(&od), fields)
    }

    fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos().to_degrees()
    }

    #[test]
    fn recovers_planted_stains_within_five_degrees() {
        let (h, e) = planted_matrix();
        let (img, _) = synthetic_image(&h, &e, 11, 64);
        let profile = estimate_stain_matrix(&img, DEFAULT_BETA, DEFAULT_ALPHA).unwrap();
        let got_h = profile.column(0);
        let got_e = profile.column(1);
        assert!(angle_deg(&got_h, &h) < 5.0, "hema off by {}", angle_deg(&got_h, &h));
        assert!(angle_deg(&got_e, &e) < 5.0, "eosin off by {}", angle_deg(&got_e, &e));
    }

    #[test]
    fn all_white_image_cannot_be_estimated() {
        let img = RgbImage::from_pixel(64, 64, image::Rgb([255, 255, 255]));
        assert!(matches!(
            estimate_stain_matrix(&img, DEFAULT_BETA, DEFAULT_ALPHA),
            Err(StainError::Estimation(_))
        ));
    }

    #[test]
    fn grayscale_input_is_degenerate() {
        let mut img = RgbImage::new(64, 64);
        for (i, p) in img.pixels_mut().enumerate() {
            let v = (i % 200) as u8;
            *p = image::Rgb([v, v, v]);
        }
        assert!(matches!(
            estimate_stain_matrix(&img, DEFAULT_BETA, DEFAULT_ALPHA),
            Err(StainError::DegenerateStain(_))
        ));
    }

    #[test]
    fn stain_order_is_independent_of_planted_order() {
        let (h, e) = planted_matrix();
        let (img_a, _) = synthetic_image(&h, &e, 5, 64);
        let (img_b, _) = synthetic_image(&e, &h, 5, 64);
        let pa = estimate_stain_matrix(&img_a, DEFAULT_BETA, DEFAULT_ALPHA).unwrap();
        let pb = estimate_stain_matrix(&img_b, DEFAULT_BETA, DEFAULT_ALPHA).unwrap();
        // hematoxylin-first convention: both estimates order by blue OD
        assert!(pa.stain_matrix[2][0] >= pa.stain_matrix[2][1]);
        assert!(pb.stain_matrix[2][0] >= pb.stain_matrix[2][1]);
    }

    #[test]
    fn self_target_normalization_is_near_identity() {
        let (h, e) = planted_matrix();
        let (img, _) = synthetic_image(&h, &e, 23, 64);
        let profile = estimate_stain_matrix(&img, DEFAULT_BETA, DEFAULT_ALPHA).unwrap();
        let out = normalize_macenko(&img, &profile).unwrap();
        let mut abs_err = 0.0;
        for (a, b) in img.pixels().zip(out.pixels()) {
            for c in 0..3 {
                abs_err += (a.0[c] as f64 - b.0[c] as f64).abs();
            }
        }
        let mae = abs_err / (img.width() * img.height() * 3) as f64;
        assert!(mae <= 2.0, "self-target MAE = {mae}");
    }

    #[test]
    fn different_stains_converge_after_normalization() {
        let (h, e) = planted_matrix();
        // second rendition: same concentrations through a rotated basis
        let h2 = Vector3::new(0.55, 0.75, 0.37);
        let e2 = Vector3::new(0.15, 0.95, 0.20);
        let (h2, e2) = (h2 / h2.norm(), e2 / e2.norm());
        let (img_a, _) = synthetic_image(&h, &e, 99, 64);
        let (img_b, _) = synthetic_image(&h2, &e2, 99, 64);

        let target = estimate_stain_matrix(&img_a, DEFAULT_BETA, DEFAULT_ALPHA).unwrap();
        let norm_a = normalize_macenko(&img_a, &target).unwrap();
        let norm_b = normalize_macenko(&img_b, &target).unwrap();
        let mut abs_err = 0.0;
        for (a, b) in norm_a.pixels().zip(norm_b.pixels()) {
            for c in 0..3 {
                abs_err += (a.0[c] as f64 - b.0[c] as f64).abs();
            }
        }
        let mae = abs_err / (norm_a.width() * norm_a.height() * 3) as f64;
        assert!(mae <= 3.0, "cross-stain MAE after normalization = {mae}");
    }

    #[test]
    fn normalization_is_idempotent_within_one_unit() {
        let (h, e) = planted_matrix();
        let (img, _) = synthetic_image(&h, &e, 7, 64);
        let target = estimate_stain_matrix(&img, DEFAULT_BETA, DEFAULT_ALPHA).unwrap();
        let once = normalize_macenko(&img, &target).unwrap();
        let twice = normalize_macenko(&once, &target).unwrap();
        let mut abs_err = 0.0;
        for (a, b) in once.pixels().zip(twice.pixels()) {
            for c in 0..3 {
                abs_err += (a.0[c] as f64 - b.0[c] as f64).abs();
            }
        }
        let mae = abs_err / (once.width() * once.height() * 3) as f64;
        assert!(mae <= 1.0, "idempotence MAE = {mae}");
    }
}
