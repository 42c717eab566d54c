//! Synthetic stained spot rendering.
//!
//! A spot is a circular tissue disk on a white background. The class signal
//! is planted as texture blob density, project/glass/patient effects as
//! global stain-channel shifts (negative, since stain absorbs light), and a
//! per-pixel mask labels the tissue regions.

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::Rng;

use crate::generate::{assign_glasses, draw_patients, PatientInfo};
use crate::records::{TilePayload, TissueType};
use crate::spec::CohortSpec;
use crate::streams::{substream_rng, substream_seed};
use crate::SynthError;

pub const SPOT_SIZE: u32 = 512;
pub const DISK_RADIUS: f64 = 240.0;
pub const TILE_PX: u32 = 128;

const BASE_TISSUE: [f64; 3] = [225.0, 190.0, 205.0];
const LYM_TINT: [f64; 3] = [212.0, 178.0, 218.0];
const MUC_TINT: [f64; 3] = [218.0, 200.0, 220.0];
const OTHER_TINT: [f64; 3] = [232.0, 198.0, 196.0];
const BLOB_COLOR: [f64; 3] = [90.0, 60.0, 120.0];

/// Per-pixel tissue labels; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TissueMask {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl TissueMask {
    pub const BACKGROUND: u8 = 0;

    fn new(width: u32, height: u32) -> Self {
        TissueMask {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    fn set(&mut self, x: u32, y: u32, code: u8) {
        self.data[(y * self.width + x) as usize] = code;
    }

    pub fn code_at(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    /// Tissue type at a pixel, `None` for background.
    pub fn label_at(&self, x: u32, y: u32) -> Option<TissueType> {
        Self::code_to_tissue(self.code_at(x, y))
    }

    pub fn code_to_tissue(code: u8) -> Option<TissueType> {
        match code {
            1 => Some(TissueType::Tum),
            2 => Some(TissueType::Lym),
            3 => Some(TissueType::Muc),
            4 => Some(TissueType::Other),
            _ => None,
        }
    }

    pub fn tissue_to_code(t: TissueType) -> u8 {
        match t {
            TissueType::Tum => 1,
            TissueType::Lym => 2,
            TissueType::Muc => 3,
            TissueType::Other => 4,
        }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([self.code_at(x, y)]))
    }

    pub fn from_image(img: &GrayImage) -> Self {
        TissueMask {
            width: img.width(),
            height: img.height(),
            data: img.pixels().map(|p| p.0[0]).collect(),
        }
    }
}

/// A rendered spot with its tissue mask.
#[derive(Debug, Clone)]
pub struct SpotRender {
    pub image: RgbImage,
    pub mask: TissueMask,
}

fn shift_3(spec: &CohortSpec, tag: &str, idx: usize, amplitude: f64) -> [f64; 3] {
    let mut rng = substream_rng(spec.seed, tag, idx as u64);
    [
        amplitude * rng.gen_range(-8.0..0.0),
        amplitude * rng.gen_range(-8.0..0.0),
        amplitude * rng.gen_range(-8.0..0.0),
    ]
}

/// Planted global stain shift of one glass (already scaled by `amplitudes.glass`).
pub fn glass_rgb_shift(spec: &CohortSpec, glass_global_idx: usize) -> [f64; 3] {
    shift_3(spec, "rgb_glass", glass_global_idx, spec.amplitudes.glass)
}

pub fn project_rgb_shift(spec: &CohortSpec, project_idx: usize) -> [f64; 3] {
    shift_3(spec, "rgb_project", project_idx, spec.amplitudes.project)
}

pub fn patient_rgb_shift(spec: &CohortSpec, patient_idx: usize) -> [f64; 3] {
    shift_3(spec, "rgb_patient", patient_idx, spec.amplitudes.patient)
}

fn inside_disk(x: u32, y: u32) -> bool {
    let c = SPOT_SIZE as f64 / 2.0;
    let dx = x as f64 + 0.5 - c;
    let dy = y as f64 + 0.5 - c;
    dx * dx + dy * dy <= DISK_RADIUS * DISK_RADIUS
}

pub(crate) fn render_spot_indexed(
    spec: &CohortSpec,
    patients: &[PatientInfo],
    glass_assignment: &[Vec<usize>],
    patient_idx: usize,
    spot_idx: usize,
) -> SpotRender {
    let patient = &patients[patient_idx];
    let glass_idx = glass_assignment[patient_idx][spot_idx];

    let mut px = vec![[255.0f64; 3]; (SPOT_SIZE * SPOT_SIZE) as usize];
    let mut mask = TissueMask::new(SPOT_SIZE, SPOT_SIZE);

    for y in 0..SPOT_SIZE {
        for x in 0..SPOT_SIZE {
            if inside_disk(x, y) {
                px[(y * SPOT_SIZE + x) as usize] = BASE_TISSUE;
                mask.set(x, y, TissueMask::tissue_to_code(TissueType::Tum));
            }
        }
    }

    // tissue patches: a few soft disks of LYM/MUC/other inside the spot
    let layout_seed = substream_seed(
        substream_seed(spec.seed, "spot_layout", patient_idx as u64),
        "s",
        spot_idx as u64,
    );
    let mut layout = substream_rng(layout_seed, "patches", 0);
    let paint_patch = |rng: &mut rand_chacha::ChaCha8Rng,
                           px: &mut Vec<[f64; 3]>,
                           mask: &mut TissueMask,
                           tissue: TissueType,
                           tint: [f64; 3]| {
        let c = SPOT_SIZE as f64 / 2.0;
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let dist = rng.gen_range(0.0..DISK_RADIUS - 50.0);
        let (cx, cy) = (c + dist * angle.cos(), c + dist * angle.sin());
        let r = rng.gen_range(30.0..70.0);
        let (x0, x1) = ((cx - r).max(0.0) as u32, ((cx + r) as u32 + 1).min(SPOT_SIZE));
        let (y0, y1) = ((cy - r).max(0.0) as u32, ((cy + r) as u32 + 1).min(SPOT_SIZE));
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= r * r && inside_disk(x, y) {
                    px[(y * SPOT_SIZE + x) as usize] = tint;
                    mask.set(x, y, TissueMask::tissue_to_code(tissue));
                }
            }
        }
    };
    for _ in 0..3 {
        paint_patch(&mut layout, &mut px, &mut mask, TissueType::Lym, LYM_TINT);
    }
    for _ in 0..2 {
        paint_patch(&mut layout, &mut px, &mut mask, TissueType::Muc, MUC_TINT);
    }
    for _ in 0..2 {
        paint_patch(&mut layout, &mut px, &mut mask, TissueType::Other, OTHER_TINT);
    }

    // class texture blobs; density carries the class signal
    let blob_count = if patient.label == crate::records::ClassLabel::MsiH {
        (spec.amplitudes.class * 25.0).round() as usize
    } else {
        (spec.amplitudes.class * 10.0).round() as usize
    };
    let mut blob_rng = substream_rng(layout_seed, "blobs", 1);
    let c = SPOT_SIZE as f64 / 2.0;
    for _ in 0..blob_count {
        let angle = blob_rng.gen_range(0.0..std::f64::consts::TAU);
        let dist = blob_rng.gen_range(0.0..DISK_RADIUS - 8.0);
        let (cx, cy) = (c + dist * angle.cos(), c + dist * angle.sin());
        let r = blob_rng.gen_range(2.0..5.0);
        let (x0, x1) = ((cx - r).max(0.0) as u32, ((cx + r) as u32 + 1).min(SPOT_SIZE));
        let (y0, y1) = ((cy - r).max(0.0) as u32, ((cy + r) as u32 + 1).min(SPOT_SIZE));
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= r * r {
                    px[(y * SPOT_SIZE + x) as usize] = BLOB_COLOR;
                }
            }
        }
    }

    // global stain shift: glass covers the whole spot, background included
    let sp = project_rgb_shift(spec, patient.project_idx);
    let sg = glass_rgb_shift(spec, glass_idx);
    let su = patient_rgb_shift(spec, patient_idx);
    let total = [sp[0] + sg[0] + su[0], sp[1] + sg[1] + su[1], sp[2] + sg[2] + su[2]];

    let mut image = RgbImage::new(SPOT_SIZE, SPOT_SIZE);
    for y in 0..SPOT_SIZE {
        for x in 0..SPOT_SIZE {
            let v = px[(y * SPOT_SIZE + x) as usize];
            let to_u8 = |f: f64| (f.round().clamp(0.0, 255.0)) as u8;
            image.put_pixel(
                x,
                y,
                Rgb([
                    to_u8(v[0] + total[0]),
                    to_u8(v[1] + total[1]),
                    to_u8(v[2] + total[2]),
                ]),
            );
        }
    }
    SpotRender { image, mask }
}

/// Render one spot by patient and spot id (ids as emitted by the generator).
pub fn render_spot_image(
    spec: &CohortSpec,
    patient_id: &str,
    spot_id: &str,
) -> Result<SpotRender, SynthError> {
    spec.validate()?;
    let patients = draw_patients(spec);
    let patient_idx = patients
        .iter()
        .position(|p| p.id == patient_id)
        .ok_or_else(|| SynthError::UnknownId(format!("patient '{patient_id}'")))?;
    let prefix = format!("{patient_id}_S");
    let spot_idx: usize = spot_id
        .strip_prefix(&prefix)
        .and_then(|s| s.parse().ok())
        .filter(|&s: &usize| s < spec.spots_per_patient)
        .ok_or_else(|| SynthError::UnknownId(format!("spot '{spot_id}'")))?;
    let glass_assignment = assign_glasses(spec, &patients);
    Ok(render_spot_indexed(
        spec,
        &patients,
        &glass_assignment,
        patient_idx,
        spot_idx,
    ))
}

/// Cut up to `max_tiles` non-background grid tiles out of a rendered spot.
/// A tile's tissue is the majority non-background mask label; tiles whose
/// majority is background are skipped.
pub(crate) fn spot_tiles(render: &SpotRender, max_tiles: usize) -> Vec<(TissueType, TilePayload)> {
    let mut out = Vec::new();
    let per_side = SPOT_SIZE / TILE_PX;
    'grid: for row in 0..per_side {
        for col in 0..per_side {
            if out.len() >= max_tiles {
                break 'grid;
            }
            let (ox, oy) = (col * TILE_PX, row * TILE_PX);
            let mut counts = [0usize; 5];
            for y in 0..TILE_PX {
                for x in 0..TILE_PX {
                    counts[render.mask.code_at(ox + x, oy + y) as usize] += 1;
                }
            }
            let majority = counts
                .iter()
                .enumerate()
                .max_by_key(|(code, &c)| (c, 5 - code))
                .map(|(code, _)| code as u8)
                .unwrap();
            if majority == TissueMask::BACKGROUND {
                continue;
            }
            let tissue = TissueMask::code_to_tissue(majority).unwrap();
            let mut data = Vec::with_capacity((TILE_PX * TILE_PX * 3) as usize);
            for y in 0..TILE_PX {
                for x in 0..TILE_PX {
                    let p = render.image.get_pixel(ox + x, oy + y);
                    data.extend_from_slice(&p.0);
                }
            }
            out.push((
                tissue,
                TilePayload::Rgb {
                    width: TILE_PX,
                    height: TILE_PX,
                    data,
                },
            ));
        }
    }
    out
}
