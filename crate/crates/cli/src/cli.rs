use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "fockscan",
    version,
    about = "Fock-state phase-scan simulator and analysis tools"
)]
pub struct Cli {
    /// TOML file with defaults for the chosen subcommand; a scan's meta.txt
    /// works here. Command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo phase scan with a photon-number-resolving detector.
    Scan(ScanArgs),
    /// Pulse-height histogram and threshold placement.
    Calibrate(CalibrateArgs),
    /// Fit n_max to the single-photon curve of a scan.
    Fit(FitArgs),
    /// Phase sensitivity of mean-photon and Fock-state readouts.
    Sensitivity(SensitivityArgs),
    /// Shifted superposition of a k-photon pattern and its spectrum.
    Subrayleigh(SubrayleighArgs),
}

#[derive(Debug, Args, Default)]
pub struct DetectorArgs {
    /// Noise-free detector: no avalanche spread, pedestal or dark counts.
    #[arg(long)]
    pub ideal: bool,
    /// Electrons per avalanche (sets the units of all levels).
    #[arg(long)]
    pub gain: Option<f64>,
    /// Single-avalanche pulse-height spread.
    #[arg(long, conflicts_with = "ideal")]
    pub sigma1: Option<f64>,
    /// Empty-gate pedestal spread.
    #[arg(long, conflicts_with = "ideal")]
    pub sigma0: Option<f64>,
    /// Mean dark events per gate.
    #[arg(long, conflicts_with = "ideal")]
    pub dark_mean: Option<f64>,
    /// Count rate above which a saturation warning is printed, Hz.
    #[arg(long)]
    pub saturation_rate: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ReferenceArgs {
    /// Mean photon number of the Poisson populations used to place
    /// thresholds. Defaults to n_max.
    #[arg(long)]
    pub reference_mean: Option<f64>,
    /// Place thresholds assuming equal peak populations.
    #[arg(long, conflicts_with = "reference_mean")]
    pub uniform_reference: bool,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Mean detected photon number at the bright fringe.
    #[arg(long)]
    pub nmax: Option<f64>,
    /// Pulses per phase point.
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Phase points over one period [0, 2π).
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Source repetition rate, Hz.
    #[arg(long)]
    pub rep_rate: Option<f64>,
    /// Number of thresholds K; pulses above the last are recorded as K.
    #[arg(long)]
    pub k_max: Option<usize>,
    #[command(flatten)]
    pub reference: ReferenceArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "runs/scan")]
    pub out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Mean photon number of the calibration light.
    #[arg(long)]
    pub nmax: Option<f64>,
    /// Gates recorded for the histogram.
    #[arg(long)]
    pub pulses: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Comparator window width, in electrons.
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[command(flatten)]
    pub reference: ReferenceArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long, default_value = "runs/calibrate")]
    pub out: PathBuf,
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Scan CSV to fit.
    #[arg(long)]
    pub input: PathBuf,
    /// Repetition rate for scan files that do not record one, Hz.
    #[arg(long)]
    pub rep_rate: Option<f64>,
    #[arg(long, default_value = "runs/fit")]
    pub out: PathBuf,
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub nmax: Option<f64>,
    /// Fock readouts to evaluate; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<u32>,
    /// Pulses N entering the shot-noise scaling.
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Grid points over (0, 2π).
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, default_value = "runs/sensitivity")]
    pub out: PathBuf,
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct SubrayleighArgs {
    /// Scan CSV whose k column serves as the base pattern. Without it the
    /// closed-form rate is used.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Photon number of the pattern.
    #[arg(long)]
    pub k: Option<usize>,
    /// n_max of the closed-form pattern.
    #[arg(long)]
    pub nmax: Option<f64>,
    /// Grid points of the closed-form pattern.
    #[arg(long)]
    pub points: Option<usize>,
    /// Numbers of shifted copies; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    pub shifts: Vec<usize>,
    /// Wavelength used for fringe spacings, nm.
    #[arg(long)]
    pub wavelength: Option<f64>,
    /// Divide each superposition by its number of copies.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value = "runs/subrayleigh")]
    pub out: PathBuf,
    #[arg(long)]
    pub plots: bool,
}
