use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use image::RgbImage;
use stainprep::{average_profiles, estimate_stain_matrix, process_spot, StainProfile};
use synthcohort::{
    save_manifest, ClassLabel, TilePayload, TileRecord, TissueMask,
};

use crate::config::{atomic_write, RunConfig};
use crate::errors::CliError;

struct SpotEntry {
    patient_id: String,
    spot: String,
    glass_id: String,
    project_id: String,
    label: ClassLabel,
    image: RgbImage,
    mask: TissueMask,
}

fn read_spots(dir: &Path) -> Result<Vec<SpotEntry>, CliError> {
    let csv_path = dir.join(super::synth::SPOTS_CSV);
    if !csv_path.exists() {
        return Err(CliError::missing(format!(
            "spot listing {} not found",
            csv_path.display()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(&csv_path)?;
    let expected = [
        "patient_id",
        "spot",
        "glass_id",
        "project_id",
        "label",
        "image",
        "mask",
    ];
    if rdr.headers()?.iter().collect::<Vec<_>>() != expected {
        return Err(CliError::config(format!(
            "{} must have columns {expected:?}",
            csv_path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("").to_string();
        let image_path = dir.join(get(5));
        let mask_path = dir.join(get(6));
        if !image_path.exists() {
            return Err(CliError::missing(format!(
                "spot image {} not found",
                image_path.display()
            )));
        }
        if !mask_path.exists() {
            return Err(CliError::config(format!(
                "spot {} is missing its tissue mask {}",
                get(1),
                mask_path.display()
            )));
        }
        let image = image::open(&image_path)?.into_rgb8();
        let mask = TissueMask::from_image(&image::open(&mask_path)?.into_luma8());
        let label = ClassLabel::from_str(&get(4)).map_err(CliError::config)?;
        out.push(SpotEntry {
            patient_id: get(0),
            spot: get(1),
            glass_id: get(2),
            project_id: get(3),
            label,
            image,
            mask,
        });
    }
    if out.is_empty() {
        return Err(CliError::runtime("no spots listed".to_string()));
    }
    Ok(out)
}

/// Run the stain-normalization + pyramid + tiling pipeline over a spot
/// directory and emit PNG tiles plus a manifest in the cohort schema.
pub fn run(
    config: &RunConfig,
    spots_dir: &Path,
    out: &Path,
    cohort_pass: bool,
) -> Result<(), CliError> {
    let spots = read_spots(spots_dir)?;
    std::fs::create_dir_all(out)?;

    let mut cfg = config.preprocess.clone();
    let mut profiles: Vec<StainProfile> = Vec::new();
    let mut target: Option<StainProfile> = None;
    if cfg.normalize {
        for entry in &spots {
            match estimate_stain_matrix(&entry.image, cfg.od_beta, cfg.angle_percentile) {
                Ok(p) => {
                    if target.is_none() {
                        target = Some(p.clone());
                    }
                    profiles.push(p);
                }
                Err(e) => {
                    eprintln!(
                        "spot {}_{}: stain estimation failed ({e}); spot skipped",
                        entry.patient_id, entry.spot
                    );
                }
            }
        }
        if target.is_none() {
            return Err(CliError::runtime(
                "stain estimation failed for every spot".to_string(),
            ));
        }
        if cohort_pass {
            cfg.cohort_profile = Some(average_profiles(&profiles)?);
        }
    }
    let target = target.unwrap_or(StainProfile {
        stain_matrix: [[0.65, 0.07], [0.70, 0.99], [0.29, 0.11]],
        concentration_percentiles: [1.0, 1.0],
    });

    let mut tiles: Vec<TileRecord> = Vec::new();
    let mut skipped = 0usize;
    for entry in &spots {
        let processed = match process_spot(&entry.image, &entry.mask, &target, &cfg) {
            Ok(t) => t,
            Err(stainprep::StainError::Estimation(e)) => {
                eprintln!(
                    "spot {}_{}: skipped ({e})",
                    entry.patient_id, entry.spot
                );
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for t in processed {
            let tile_id = format!(
                "{}_{}_{}_{}_{}",
                entry.patient_id, entry.spot, t.magnification, t.row, t.col
            );
            tiles.push(TileRecord {
                tile_id,
                patient_id: entry.patient_id.clone(),
                spot_id: format!("{}_{}", entry.patient_id, entry.spot),
                glass_id: entry.glass_id.clone(),
                project_id: entry.project_id.clone(),
                label: entry.label,
                tissue: t.tissue,
                magnification: t.magnification,
                payload: TilePayload::Rgb {
                    width: t.image.width(),
                    height: t.image.height(),
                    data: t.image.into_raw(),
                },
            });
        }
    }
    if tiles.is_empty() {
        return Err(CliError::runtime("preprocessing produced no tiles".to_string()));
    }
    save_manifest(out, &tiles)?;
    atomic_write(
        &out.join("config.json"),
        serde_json::to_string_pretty(config)?.as_bytes(),
    )?;

    let stdout = std::io::stdout();
    let mut o = stdout.lock();
    let _ = writeln!(
        o,
        "preprocessed {} spots ({} skipped) into {} tiles",
        spots.len(),
        skipped,
        tiles.len()
    );
    Ok(())
}
