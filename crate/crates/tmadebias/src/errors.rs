use std::fmt;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_MISSING: i32 = 4;

/// A command failure with its exit code; main prints it as a JSON line on
/// stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_MISSING,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

fn io_code(e: &std::io::Error) -> i32 {
    if e.kind() == std::io::ErrorKind::NotFound {
        EXIT_MISSING
    } else {
        EXIT_RUNTIME
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: io_code(&e),
            message: format!("io error: {e}"),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::config(format!("config error: {e}"))
    }
}

impl From<synthcohort::SynthError> for CliError {
    fn from(e: synthcohort::SynthError) -> Self {
        use synthcohort::SynthError::*;
        let code = match &e {
            Config(_) | Parse { .. } | Json(_) | UnknownId(_) => EXIT_CONFIG,
            DegenerateCohort(_) | EmptyCohort | Image(_) | Csv(_) => EXIT_RUNTIME,
            Io(io) => io_code(io),
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<debias_trainer::TrainError> for CliError {
    fn from(e: debias_trainer::TrainError) -> Self {
        use debias_trainer::TrainError::*;
        let code = match &e {
            Config(_) | Stratification(_) | Json(_) => EXIT_CONFIG,
            EmptyInput(_) | Diverged { .. } | Net(_) | Stats(_) | Stain(_) | Csv(_) => {
                EXIT_RUNTIME
            }
            Synth(s) => return CliError::from(synthcohort_err(s)),
            Io(io) => io_code(io),
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn synthcohort_err(e: &synthcohort::SynthError) -> synthcohort::SynthError {
    // SynthError is not Clone; rebuild the classification-relevant shape
    use synthcohort::SynthError::*;
    match e {
        Config(m) => Config(m.clone()),
        DegenerateCohort(m) => DegenerateCohort(m.clone()),
        EmptyCohort => EmptyCohort,
        Parse {
            line,
            column,
            message,
        } => Parse {
            line: *line,
            column: column.clone(),
            message: message.clone(),
        },
        UnknownId(m) => UnknownId(m.clone()),
        Io(io) => Io(std::io::Error::new(io.kind(), io.to_string())),
        other => Config(other.to_string()),
    }
}

impl From<neuralcore::NetError> for CliError {
    fn from(e: neuralcore::NetError) -> Self {
        use neuralcore::NetError::*;
        let code = match &e {
            Format(_) | Json(_) => EXIT_CONFIG,
            Io(io) => io_code(io),
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<clinmetrics::MetricsError> for CliError {
    fn from(e: clinmetrics::MetricsError) -> Self {
        use clinmetrics::MetricsError::*;
        let code = match &e {
            Domain(_) | Json(_) => EXIT_CONFIG,
            Io(io) => io_code(io),
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<stainprep::StainError> for CliError {
    fn from(e: stainprep::StainError) -> Self {
        use stainprep::StainError::*;
        let code = match &e {
            Metadata(_) | Size(_) => EXIT_CONFIG,
            Estimation(_) | DegenerateStain(_) => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<depstats::StatsError> for CliError {
    fn from(e: depstats::StatsError) -> Self {
        CliError::runtime(e.to_string())
    }
}

impl From<image::ImageError> for CliError {
    fn from(e: image::ImageError) -> Self {
        CliError::runtime(format!("image error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::config(format!("csv error: {e}"))
    }
}
