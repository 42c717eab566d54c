use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::generate::{draw_directions, draw_patients, Cohort};
use crate::records::{ClassLabel, Magnification, TilePayload, TileRecord, TissueType};
use crate::spec::CohortSpec;
use crate::SynthError;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const PAYLOAD_FILE: &str = "payloads.bin";
pub const SPEC_FILE: &str = "spec.json";
pub const TILE_DIR: &str = "tiles";

const HEADER: [&str; 9] = [
    "tile_id",
    "patient_id",
    "spot_id",
    "glass_id",
    "project_id",
    "label",
    "tissue",
    "magnification",
    "payload_ref",
];

/// How tile payloads are stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadStore {
    /// All payloads are held inline in the records (after loading).
    Inline,
}

/// A tile listing with inline payloads; the on-disk schema is shared by the
/// cohort generator and the image preprocessing pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub tiles: Vec<TileRecord>,
    pub payload_store: PayloadStore,
}

fn write_payload_matrix(path: &Path, rows: &[&[f32]]) -> Result<(), SynthError> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(rows.len() as u32).to_le_bytes())?;
    w.write_all(&(cols as u32).to_le_bytes())?;
    for row in rows {
        for v in *row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_payload_matrix(path: &Path) -> Result<Vec<Vec<f32>>, SynthError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let rows = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let cols = u32::from_le_bytes(buf4) as usize;
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut row = Vec::with_capacity(cols);
        for _ in 0..cols {
            r.read_exact(&mut buf4)?;
            row.push(f32::from_le_bytes(buf4));
        }
        out.push(row);
    }
    Ok(out)
}

/// Write a manifest CSV plus payloads (binary float matrix for feature
/// vectors, PNG files for image tiles) under `dir`.
pub fn save_manifest(dir: &Path, tiles: &[TileRecord]) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    let mut wtr = csv::Writer::from_path(dir.join(MANIFEST_FILE))?;
    wtr.write_record(HEADER)?;

    let mut feature_rows: Vec<&[f32]> = Vec::new();
    let mut has_png = false;
    for t in tiles {
        let payload_ref = match &t.payload {
            TilePayload::Features(v) => {
                let r = format!("row:{}", feature_rows.len());
                feature_rows.push(v.as_slice());
                r
            }
            TilePayload::Rgb { width, height, data } => {
                has_png = true;
                let rel = format!("{TILE_DIR}/{}.png", t.tile_id);
                let path = dir.join(&rel);
                std::fs::create_dir_all(path.parent().unwrap())?;
                let img = image::RgbImage::from_raw(*width, *height, data.clone())
                    .expect("payload dims consistent with data");
                img.save(&path)?;
                rel
            }
        };
        wtr.write_record([
            t.tile_id.as_str(),
            t.patient_id.as_str(),
            t.spot_id.as_str(),
            t.glass_id.as_str(),
            t.project_id.as_str(),
            &t.label.to_string(),
            &t.tissue.to_string(),
            &t.magnification.to_string(),
            &payload_ref,
        ])?;
    }
    wtr.flush()?;
    if !feature_rows.is_empty() || !has_png {
        write_payload_matrix(&dir.join(PAYLOAD_FILE), &feature_rows)?;
    }
    Ok(())
}

fn parse_field<T: FromStr<Err = String>>(
    s: &str,
    line: usize,
    column: &str,
) -> Result<T, SynthError> {
    s.parse().map_err(|message| SynthError::Parse {
        line,
        column: column.to_string(),
        message,
    })
}

/// Load a manifest from `dir`, inlining all payloads. Errors name the
/// offending line and column.
pub fn load_manifest(dir: &Path) -> Result<Manifest, SynthError> {
    let path = dir.join(MANIFEST_FILE);
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(&path)?;
    {
        let got = rdr.headers()?;
        if got.iter().collect::<Vec<_>>() != HEADER {
            return Err(SynthError::Parse {
                line: 1,
                column: "header".into(),
                message: format!("expected columns {HEADER:?}, got {got:?}"),
            });
        }
    }

    let matrix = {
        let p = dir.join(PAYLOAD_FILE);
        if p.exists() {
            Some(read_payload_matrix(&p)?)
        } else {
            None
        }
    };

    let mut tiles = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(i + 2);
        let field = |idx: usize| record.get(idx).unwrap_or("").to_string();

        let tile_id = field(0);
        if !seen.insert(tile_id.clone()) {
            return Err(SynthError::Parse {
                line,
                column: "tile_id".into(),
                message: format!("duplicate tile_id '{tile_id}'"),
            });
        }
        let label: ClassLabel = parse_field(&field(5), line, "label")?;
        let tissue: TissueType = parse_field(&field(6), line, "tissue")?;
        let magnification: Magnification = parse_field(&field(7), line, "magnification")?;

        let payload_ref = field(8);
        let payload = if let Some(row) = payload_ref.strip_prefix("row:") {
            let idx: usize = row.parse().map_err(|_| SynthError::Parse {
                line,
                column: "payload_ref".into(),
                message: format!("bad row reference '{payload_ref}'"),
            })?;
            let matrix = matrix.as_ref().ok_or_else(|| SynthError::Parse {
                line,
                column: "payload_ref".into(),
                message: format!("'{payload_ref}' but no {PAYLOAD_FILE} present"),
            })?;
            let row = matrix.get(idx).ok_or_else(|| SynthError::Parse {
                line,
                column: "payload_ref".into(),
                message: format!("row {idx} out of range ({} rows)", matrix.len()),
            })?;
            TilePayload::Features(row.clone())
        } else if payload_ref.ends_with(".png") {
            let img = image::open(dir.join(&payload_ref))
                .map_err(|e| SynthError::Parse {
                    line,
                    column: "payload_ref".into(),
                    message: format!("cannot read '{payload_ref}': {e}"),
                })?
                .into_rgb8();
            TilePayload::Rgb {
                width: img.width(),
                height: img.height(),
                data: img.into_raw(),
            }
        } else {
            return Err(SynthError::Parse {
                line,
                column: "payload_ref".into(),
                message: format!("unrecognized payload reference '{payload_ref}'"),
            });
        };

        tiles.push(TileRecord {
            tile_id,
            patient_id: field(1),
            spot_id: field(2),
            glass_id: field(3),
            project_id: field(4),
            label,
            tissue,
            magnification,
            payload,
        });
    }
    Ok(Manifest {
        tiles,
        payload_store: PayloadStore::Inline,
    })
}

/// Save a full cohort: manifest + payloads + the generating spec.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<(), SynthError> {
    save_manifest(dir, &cohort.tiles)?;
    let f = File::create(dir.join(SPEC_FILE))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &cohort.spec)?;
    Ok(())
}

/// Load a cohort saved by [`save_cohort`]. Patients and direction vectors are
/// reconstructed deterministically from the stored spec.
pub fn load_cohort(dir: &Path) -> Result<Cohort, SynthError> {
    let f = File::open(dir.join(SPEC_FILE))?;
    let spec: CohortSpec = serde_json::from_reader(BufReader::new(f))?;
    spec.validate()?;
    let manifest = load_manifest(dir)?;
    if manifest.tiles.is_empty() {
        return Err(SynthError::EmptyCohort);
    }
    Ok(Cohort {
        patients: draw_patients(&spec),
        directions: draw_directions(&spec),
        tiles: manifest.tiles,
        spec,
    })
}
