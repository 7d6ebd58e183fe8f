//! Config files and flag resolution. Precedence: flags, then the config
//! file, then built-in defaults.

use std::fmt;
use std::path::Path;

use fockscan::detector::{DetectorModel, ReferenceWeights};
use serde::{Deserialize, Serialize};

use crate::cli::{DetectorArgs, ReferenceArgs};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<fockscan::Error> for CliError {
    fn from(e: fockscan::Error) -> Self {
        use fockscan::Error as E;
        match e {
            E::Config(_) => CliError::Config(e.to_string()),
            E::Io(_) | E::Schema { .. } => CliError::Io(e.to_string()),
            E::Domain(_) | E::Calibration { .. } | E::IllConditioned(_) => CliError::Numeric(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Everything a config file may contain. A scan's `meta.txt` parses as one.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifact_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subrayleigh: Option<SubrayleighTable>,
    /// Values computed during the run; informational only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived: Option<DerivedTable>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(v) = file.artifact_version {
            if v > ARTIFACT_VERSION {
                return Err(CliError::Config(format!(
                    "{}: artifact_version {v} is newer than this build ({ARTIFACT_VERSION})",
                    path.display()
                )));
            }
        }
        Ok(file)
    }
}

/// Threshold placement as recorded in a sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Poisson,
    Uniform,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScanTable {
    pub n_max: Option<f64>,
    pub pulses: Option<u64>,
    pub points: Option<usize>,
    pub seed: Option<u64>,
    pub rep_rate: Option<f64>,
    pub k_max: Option<usize>,
    pub reference: Option<Reference>,
    pub reference_mean: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateTable {
    pub n_max: Option<f64>,
    pub pulses: Option<u64>,
    pub seed: Option<u64>,
    pub k_max: Option<usize>,
    pub bin_width: Option<f64>,
    pub reference: Option<Reference>,
    pub reference_mean: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorTable {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ideal: Option<bool>,
    pub gain: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma0: Option<f64>,
    pub dark_mean: Option<f64>,
    pub saturation_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitTable {
    pub rep_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityTable {
    pub n_max: Option<f64>,
    pub k: Option<Vec<u32>>,
    pub pulses: Option<u64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SubrayleighTable {
    pub k: Option<usize>,
    pub n_max: Option<f64>,
    pub points: Option<usize>,
    pub shifts: Option<Vec<usize>>,
    pub wavelength: Option<f64>,
    pub normalize: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedTable {
    pub thresholds: Vec<f64>,
}

pub fn detector_model(args: &DetectorArgs, file: Option<&DetectorTable>) -> DetectorModel {
    let file = file.cloned().unwrap_or_default();
    let ideal = args.ideal || file.ideal.unwrap_or(false);
    let base = if ideal {
        DetectorModel::ideal()
    } else {
        DetectorModel::default()
    };
    // an ideal flag on the command line overrides noise values from the file
    let from_file = |v: Option<f64>| if args.ideal { None } else { v };
    DetectorModel {
        gain: args.gain.or(file.gain).unwrap_or(base.gain),
        sigma1: args.sigma1.or(from_file(file.sigma1)).unwrap_or(base.sigma1),
        sigma0: args.sigma0.or(from_file(file.sigma0)).unwrap_or(base.sigma0),
        dark_mean: args.dark_mean.or(from_file(file.dark_mean)).unwrap_or(base.dark_mean),
        saturation_rate: args
            .saturation_rate
            .or(file.saturation_rate)
            .unwrap_or(base.saturation_rate),
    }
}

pub fn detector_table(model: &DetectorModel) -> DetectorTable {
    DetectorTable {
        ideal: None,
        gain: Some(model.gain),
        sigma1: Some(model.sigma1),
        sigma0: Some(model.sigma0),
        dark_mean: Some(model.dark_mean),
        saturation_rate: Some(model.saturation_rate),
    }
}

/// Requested threshold placement. `explicit` is false when the choice fell
/// through to the default, in which case a failed Poisson calibration may
/// fall back to uniform weights.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceChoice {
    pub weights: ReferenceWeights,
    pub explicit: bool,
}

pub fn reference_choice(
    args: &ReferenceArgs,
    file_reference: Option<Reference>,
    file_mean: Option<f64>,
    n_max: f64,
) -> ReferenceChoice {
    if args.uniform_reference {
        return ReferenceChoice {
            weights: ReferenceWeights::Uniform,
            explicit: true,
        };
    }
    if let Some(mean) = args.reference_mean {
        return ReferenceChoice {
            weights: ReferenceWeights::Poisson(mean),
            explicit: true,
        };
    }
    match file_reference {
        Some(Reference::Uniform) => ReferenceChoice {
            weights: ReferenceWeights::Uniform,
            explicit: true,
        },
        Some(Reference::Poisson) => ReferenceChoice {
            weights: ReferenceWeights::Poisson(file_mean.unwrap_or(n_max)),
            explicit: true,
        },
        None => match file_mean {
            Some(mean) => ReferenceChoice {
                weights: ReferenceWeights::Poisson(mean),
                explicit: true,
            },
            None => ReferenceChoice {
                weights: ReferenceWeights::Poisson(n_max),
                explicit: false,
            },
        },
    }
}

pub fn reference_fields(weights: ReferenceWeights) -> (Reference, Option<f64>) {
    match weights {
        ReferenceWeights::Poisson(m) => (Reference::Poisson, Some(m)),
        ReferenceWeights::Uniform => (Reference::Uniform, None),
    }
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn to_toml(file: &ConfigFile) -> CliResult<String> {
    toml::to_string(file).map_err(|e| CliError::Config(format!("cannot serialize metadata: {e}")))
}
