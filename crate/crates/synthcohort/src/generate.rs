use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::records::{ClassLabel, Magnification, TilePayload, TileRecord, TissueType};
use crate::spec::{CohortMode, CohortSpec};
use crate::streams::{substream_rng, substream_seed};
use crate::{Manifest, PayloadStore, SynthError};

/// One patient with its drawn class and project assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientInfo {
    pub id: String,
    pub label: ClassLabel,
    pub project_idx: usize,
}

/// Fixed unit direction vectors per entity, drawn once from dedicated
/// sub-streams of the master seed so that growing the cohort never reshuffles
/// existing entities.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    pub class: Vec<Vec<f64>>,
    pub project: Vec<Vec<f64>>,
    pub patient: Vec<Vec<f64>>,
    pub glass: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub spec: CohortSpec,
    pub patients: Vec<PatientInfo>,
    pub tiles: Vec<TileRecord>,
    pub directions: Directions,
}

impl Cohort {
    pub fn n_tiles(&self) -> usize {
        self.tiles.len()
    }

    pub fn glass_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .tiles
            .iter()
            .map(|t| t.glass_id.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        ids.sort();
        ids
    }

    pub fn into_manifest(self) -> Manifest {
        Manifest {
            tiles: self.tiles,
            payload_store: PayloadStore::Inline,
        }
    }
}

fn unit_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub(crate) fn patient_id(i: usize) -> String {
    format!("P{i:05}")
}

pub(crate) fn spot_id(patient: &str, s: usize) -> String {
    format!("{patient}_S{s}")
}

pub(crate) fn glass_id(project: &str, g: usize) -> String {
    format!("G_{project}_{g}")
}

/// Draw the patient population: class via the MSI rate, project via the
/// per-class assignment probabilities. Each patient uses its own sub-stream.
pub(crate) fn draw_patients(spec: &CohortSpec) -> Vec<PatientInfo> {
    (0..spec.n_patients)
        .map(|i| {
            let mut rng = substream_rng(spec.seed, "patient", i as u64);
            let label = if rng.gen_range(0.0..1.0) < spec.msi_rate {
                ClassLabel::MsiH
            } else {
                ClassLabel::Mss
            };
            let u: f64 = rng.gen_range(0.0..1.0);
            let mut acc = 0.0;
            let mut project_idx = spec.projects.len() - 1;
            for (p, proj) in spec.projects.iter().enumerate() {
                acc += match label {
                    ClassLabel::Mss => proj.prob_mss,
                    ClassLabel::MsiH => proj.prob_msi,
                };
                if u < acc {
                    project_idx = p;
                    break;
                }
            }
            PatientInfo {
                id: patient_id(i),
                label,
                project_idx,
            }
        })
        .collect()
}

/// Map every (patient index, spot index) to a global glass index.
///
/// Within each project, spots go round-robin over the project's glasses; with
/// `single_class_glasses` the project's glasses are split between the classes
/// proportionally to their spot counts and each class round-robins over its
/// own glasses only.
pub(crate) fn assign_glasses(spec: &CohortSpec, patients: &[PatientInfo]) -> Vec<Vec<usize>> {
    let g_per = spec.glasses_per_project;
    let mut assignment = vec![vec![0usize; spec.spots_per_patient]; patients.len()];
    for (p_idx, _) in spec.projects.iter().enumerate() {
        let members: Vec<usize> = (0..patients.len())
            .filter(|&i| patients[i].project_idx == p_idx)
            .collect();
        let base = p_idx * g_per;
        if !spec.single_class_glasses {
            let mut counter = 0usize;
            for &i in &members {
                for s in 0..spec.spots_per_patient {
                    assignment[i][s] = base + counter % g_per;
                    counter += 1;
                }
            }
        } else {
            let mss: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| patients[i].label == ClassLabel::Mss)
                .collect();
            let msi: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| patients[i].label == ClassLabel::MsiH)
                .collect();
            let total = (mss.len() + msi.len()) * spec.spots_per_patient;
            let mut g_mss = if mss.is_empty() {
                0
            } else if msi.is_empty() {
                g_per
            } else {
                let share = (mss.len() * spec.spots_per_patient) as f64 / total as f64;
                ((g_per as f64 * share).round() as usize).clamp(1, g_per - 1)
            };
            if g_mss == 0 && !mss.is_empty() {
                g_mss = 1;
            }
            let fill = |group: &[usize], offset: usize, count: usize, out: &mut Vec<Vec<usize>>| {
                if count == 0 {
                    return;
                }
                let mut counter = 0usize;
                for &i in group {
                    for s in 0..spec.spots_per_patient {
                        out[i][s] = base + offset + counter % count;
                        counter += 1;
                    }
                }
            };
            fill(&mss, 0, g_mss, &mut assignment);
            fill(&msi, g_mss, g_per - g_mss, &mut assignment);
        }
    }
    assignment
}

pub(crate) fn draw_directions(spec: &CohortSpec) -> Directions {
    let dim = spec.feature_dim;
    let n_glasses = spec.projects.len() * spec.glasses_per_project;
    Directions {
        class: (0..2)
            .map(|i| unit_vector(dim, substream_seed(spec.seed, "dir_class", i)))
            .collect(),
        project: (0..spec.projects.len())
            .map(|i| unit_vector(dim, substream_seed(spec.seed, "dir_project", i as u64)))
            .collect(),
        patient: (0..spec.n_patients)
            .map(|i| unit_vector(dim, substream_seed(spec.seed, "dir_patient", i as u64)))
            .collect(),
        glass: (0..n_glasses)
            .map(|i| unit_vector(dim, substream_seed(spec.seed, "dir_glass", i as u64)))
            .collect(),
    }
}

/// Per-tile metadata draw shared by both modes.
pub(crate) fn draw_tile_meta(
    spec: &CohortSpec,
    patient_idx: usize,
    spot: usize,
    tile: usize,
) -> (TissueType, Magnification) {
    let seed = substream_seed(
        substream_seed(spec.seed, "tile_meta", patient_idx as u64),
        "st",
        (spot * 104_729 + tile) as u64,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: f64 = rng.gen_range(0.0..1.0);
    let tissue = if t < 0.55 {
        TissueType::Tum
    } else if t < 0.75 {
        TissueType::Lym
    } else if t < 0.90 {
        TissueType::Muc
    } else {
        TissueType::Other
    };
    let m: f64 = rng.gen_range(0.0..1.0);
    let magnification = if m < 0.60 {
        Magnification::X40
    } else if m < 0.80 {
        Magnification::X20
    } else if m < 0.90 {
        Magnification::X10
    } else if m < 0.97 {
        Magnification::X5
    } else {
        Magnification::X0
    };
    (tissue, magnification)
}

/// Generate the full synthetic cohort described by `spec`, deterministically.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Cohort, SynthError> {
    spec.validate()?;
    let patients = draw_patients(spec);

    let n_msi = patients.iter().filter(|p| p.label == ClassLabel::MsiH).count();
    if n_msi == 0 || n_msi == patients.len() {
        return Err(SynthError::DegenerateCohort(format!(
            "drew {n_msi} MSI-H patients out of {}; both classes must be present",
            patients.len()
        )));
    }

    let glass_assignment = assign_glasses(spec, &patients);
    let directions = draw_directions(spec);

    let mut tiles = Vec::with_capacity(spec.n_patients * spec.spots_per_patient * spec.tiles_per_spot);
    match spec.mode {
        CohortMode::FeatureVector => {
            let a = spec.amplitudes;
            for (i, patient) in patients.iter().enumerate() {
                let class_dir = &directions.class[patient.label.index()];
                let project_dir = &directions.project[patient.project_idx];
                let patient_dir = &directions.patient[i];
                for s in 0..spec.spots_per_patient {
                    let glass_idx = glass_assignment[i][s];
                    let glass_dir = &directions.glass[glass_idx];
                    let sid = spot_id(&patient.id, s);
                    let gid = glass_id(&spec.projects[patient.project_idx].id, glass_idx % spec.glasses_per_project);
                    for t in 0..spec.tiles_per_spot {
                        let noise_seed = substream_seed(
                            substream_seed(spec.seed, "tile_noise", i as u64),
                            "st",
                            (s * 104_729 + t) as u64,
                        );
                        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
                        let payload: Vec<f32> = (0..spec.feature_dim)
                            .map(|d| {
                                let eps: f64 = StandardNormal.sample(&mut rng);
                                (a.class * class_dir[d]
                                    + a.project * project_dir[d]
                                    + a.patient * patient_dir[d]
                                    + a.glass * glass_dir[d]
                                    + a.noise * eps) as f32
                            })
                            .collect();
                        let (tissue, magnification) = draw_tile_meta(spec, i, s, t);
                        tiles.push(TileRecord {
                            tile_id: format!("{sid}_T{t}"),
                            patient_id: patient.id.clone(),
                            spot_id: sid.clone(),
                            glass_id: gid.clone(),
                            project_id: spec.projects[patient.project_idx].id.clone(),
                            label: patient.label,
                            tissue,
                            magnification,
                            payload: TilePayload::Features(payload),
                        });
                    }
                }
            }
        }
        CohortMode::SpotImage => {
            for (i, patient) in patients.iter().enumerate() {
                for s in 0..spec.spots_per_patient {
                    let glass_idx = glass_assignment[i][s];
                    let gid = glass_id(&spec.projects[patient.project_idx].id, glass_idx % spec.glasses_per_project);
                    let sid = spot_id(&patient.id, s);
                    let render = crate::image_mode::render_spot_indexed(
                        spec,
                        &patients,
                        &glass_assignment,
                        i,
                        s,
                    );
                    let crops = crate::image_mode::spot_tiles(&render, spec.tiles_per_spot);
                    for (t, (tissue, payload)) in crops.into_iter().enumerate() {
                        tiles.push(TileRecord {
                            tile_id: format!("{sid}_T{t}"),
                            patient_id: patient.id.clone(),
                            spot_id: sid.clone(),
                            glass_id: gid.clone(),
                            project_id: spec.projects[patient.project_idx].id.clone(),
                            label: patient.label,
                            tissue,
                            magnification: Magnification::X40,
                            payload,
                        });
                    }
                }
            }
        }
    }

    if tiles.is_empty() {
        return Err(SynthError::EmptyCohort);
    }
    Ok(Cohort {
        spec: spec.clone(),
        patients,
        tiles,
        directions,
    })
}
