use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use synthcohort::{generate_cohort, save_cohort, CohortMode};

use crate::config::{atomic_write, RunConfig};
use crate::errors::CliError;

pub const SPOTS_DIR: &str = "spots";
pub const SPOTS_CSV: &str = "spots.csv";
pub const MASK_LEGEND: &str = "mask_legend.json";

pub fn run(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let cohort = generate_cohort(&config.cohort)?;
    std::fs::create_dir_all(out)?;
    save_cohort(&cohort, out)?;

    if config.cohort.mode == CohortMode::SpotImage {
        write_spot_images(config, &cohort, out)?;
    }

    atomic_write(
        &out.join("config.json"),
        serde_json::to_string_pretty(config)?.as_bytes(),
    )?;

    print_summary(&cohort);
    Ok(())
}

fn write_spot_images(
    config: &RunConfig,
    cohort: &synthcohort::Cohort,
    out: &Path,
) -> Result<(), CliError> {
    let dir = out.join(SPOTS_DIR);
    std::fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join(SPOTS_CSV))?;
    w.write_record([
        "patient_id",
        "spot",
        "glass_id",
        "project_id",
        "label",
        "image",
        "mask",
    ])?;
    for patient in &cohort.patients {
        for s in 0..config.cohort.spots_per_patient {
            let spot_id = format!("{}_S{s}", patient.id);
            let render = synthcohort::render_spot_image(&config.cohort, &patient.id, &spot_id)?;
            let image_name = format!("{spot_id}.png");
            let mask_name = format!("{spot_id}_mask.png");
            render.image.save(dir.join(&image_name))?;
            render.mask.to_image().save(dir.join(&mask_name))?;
            let tile = cohort
                .tiles
                .iter()
                .find(|t| t.patient_id == patient.id && t.spot_id == spot_id);
            let (glass, project) = tile
                .map(|t| (t.glass_id.clone(), t.project_id.clone()))
                .unwrap_or_default();
            w.write_record([
                patient.id.as_str(),
                &format!("S{s}"),
                &glass,
                &project,
                &patient.label.to_string(),
                &image_name,
                &mask_name,
            ])?;
        }
    }
    w.flush()?;
    atomic_write(
        &dir.join(MASK_LEGEND),
        serde_json::to_string_pretty(&serde_json::json!({
            "0": "background", "1": "TUM", "2": "LYM", "3": "MUC", "4": "other"
        }))?
        .as_bytes(),
    )?;
    Ok(())
}

fn print_summary(cohort: &synthcohort::Cohort) {
    let mut per_class: BTreeMap<String, usize> = BTreeMap::new();
    for p in &cohort.patients {
        *per_class.entry(p.label.to_string()).or_default() += 1;
    }
    let mut patients_per_project: BTreeMap<&str, std::collections::HashSet<&str>> = BTreeMap::new();
    let mut patients_per_glass: BTreeMap<&str, std::collections::HashSet<&str>> = BTreeMap::new();
    for t in &cohort.tiles {
        patients_per_project
            .entry(&t.project_id)
            .or_default()
            .insert(&t.patient_id);
        patients_per_glass
            .entry(&t.glass_id)
            .or_default()
            .insert(&t.patient_id);
    }
    let counts = |m: &BTreeMap<&str, std::collections::HashSet<&str>>| -> BTreeMap<String, usize> {
        m.iter().map(|(k, v)| (k.to_string(), v.len())).collect()
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(
        out,
        "cohort: {} patients, {} tiles",
        cohort.patients.len(),
        cohort.tiles.len()
    );
    let _ = writeln!(out, "patients per class: {per_class:?}");
    let _ = writeln!(out, "patients per project: {:?}", counts(&patients_per_project));
    let _ = writeln!(out, "patients per glass: {:?}", counts(&patients_per_glass));
}
