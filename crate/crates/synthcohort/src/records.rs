use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Task class of a patient and all of its tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "MSS")]
    Mss,
    #[serde(rename = "MSI-H")]
    MsiH,
}

impl ClassLabel {
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Mss => 0,
            ClassLabel::MsiH => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ClassLabel::Mss),
            1 => Some(ClassLabel::MsiH),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassLabel::Mss => "MSS",
            ClassLabel::MsiH => "MSI-H",
        })
    }
}

impl FromStr for ClassLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MSS" => Ok(ClassLabel::Mss),
            "MSI-H" => Ok(ClassLabel::MsiH),
            other => Err(format!("unknown class label token '{other}'")),
        }
    }
}

/// Tissue region a tile was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TissueType {
    #[serde(rename = "TUM")]
    Tum,
    #[serde(rename = "LYM")]
    Lym,
    #[serde(rename = "MUC")]
    Muc,
    #[serde(rename = "other")]
    Other,
}

impl fmt::Display for TissueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TissueType::Tum => "TUM",
            TissueType::Lym => "LYM",
            TissueType::Muc => "MUC",
            TissueType::Other => "other",
        })
    }
}

impl FromStr for TissueType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TUM" => Ok(TissueType::Tum),
            "LYM" => Ok(TissueType::Lym),
            "MUC" => Ok(TissueType::Muc),
            "other" => Ok(TissueType::Other),
            other => Err(format!("unknown tissue token '{other}'")),
        }
    }
}

/// Tile magnification level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Magnification {
    #[serde(rename = "x40")]
    X40,
    #[serde(rename = "x20")]
    X20,
    #[serde(rename = "x10")]
    X10,
    #[serde(rename = "x5")]
    X5,
    #[serde(rename = "x0")]
    X0,
}

impl Magnification {
    pub const ALL: [Magnification; 5] = [
        Magnification::X40,
        Magnification::X20,
        Magnification::X10,
        Magnification::X5,
        Magnification::X0,
    ];
}

impl fmt::Display for Magnification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Magnification::X40 => "x40",
            Magnification::X20 => "x20",
            Magnification::X10 => "x10",
            Magnification::X5 => "x5",
            Magnification::X0 => "x0",
        })
    }
}

impl FromStr for Magnification {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x40" => Ok(Magnification::X40),
            "x20" => Ok(Magnification::X20),
            "x10" => Ok(Magnification::X10),
            "x5" => Ok(Magnification::X5),
            "x0" => Ok(Magnification::X0),
            other => Err(format!("unknown magnification token '{other}'")),
        }
    }
}

/// Tile contents: a feature vector or an RGB tile.
#[derive(Debug, Clone, PartialEq)]
pub enum TilePayload {
    Features(Vec<f32>),
    Rgb {
        width: u32,
        height: u32,
        data: Vec<u8>,
    },
}

/// One tile with its full metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TileRecord {
    pub tile_id: String,
    pub patient_id: String,
    pub spot_id: String,
    pub glass_id: String,
    pub project_id: String,
    pub label: ClassLabel,
    pub tissue: TissueType,
    pub magnification: Magnification,
    pub payload: TilePayload,
}
