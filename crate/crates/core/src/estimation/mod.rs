//! Parameter fitting, detector-response correction and phase sensitivity.

mod correction;
mod fit;
mod sensitivity;

pub use correction::{correct_counts, CorrectedCounts, MAX_CONDITION_NUMBER};
pub use fit::{fit_nmax, fit_single_photon_curve, single_photon_model, FitResult};
pub use sensitivity::{optimal_phase, sensitivity_curve, sensitivity_fock, sensitivity_mean, Scheme, SensitivityCurve};
