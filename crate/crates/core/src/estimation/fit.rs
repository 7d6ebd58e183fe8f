use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::experiment::ScanResult;
use crate::optimize::{levenberg_marquardt, LeastSquares, LmOptions};

/// Upper bound on the fitted bright-fringe mean.
const N_MAX_UPPER: f64 = 100.0;
const N_MAX_LOWER: f64 = 1e-9;
const MIN_POINTS: usize = 10;

/// Least-squares estimate of the single-photon curve parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub n_max_hat: f64,
    /// Offset between the scan's phase origin and the dark fringe.
    pub phase_offset_hat: f64,
    /// Rate scale; equals the repetition rate for lossless, well-aligned data.
    pub amplitude_scale_hat: f64,
    pub residual_sum_squares: f64,
    pub converged: bool,
}

/// `A · x e^{-x}` with `x = m sin²((φ - φ₀)/2)`.
pub fn single_photon_model(phi: f64, n_max: f64, phase_offset: f64, amplitude: f64) -> f64 {
    let s = (0.5 * (phi - phase_offset)).sin();
    let x = n_max * s * s;
    amplitude * x * (-x).exp()
}

struct SinglePhotonCurve<'a> {
    phases: &'a [f64],
    rates: &'a [f64],
}

impl LeastSquares<3> for SinglePhotonCurve<'_> {
    // params = [m, φ₀, A]
    fn evaluate(&self, p: &[f64; 3], r: &mut Vec<f64>, jac: &mut Vec<[f64; 3]>) {
        r.clear();
        jac.clear();
        let [m, phi0, a] = *p;
        for (&phi, &y) in self.phases.iter().zip(self.rates) {
            let half = 0.5 * (phi - phi0);
            let (s, c) = half.sin_cos();
            let s2 = s * s;
            let x = m * s2;
            let e = (-x).exp();
            r.push(a * x * e - y);
            let shape = a * e * (1.0 - x);
            jac.push([shape * s2, -shape * m * s * c, x * e]);
        }
    }

    fn project(&self, p: &mut [f64; 3]) {
        p[0] = p[0].clamp(N_MAX_LOWER, N_MAX_UPPER);
        p[1] = wrap_phase(p[1]);
        p[2] = p[2].max(f64::MIN_POSITIVE);
    }

    fn data_norm(&self) -> f64 {
        self.rates.iter().map(|y| y * y).sum::<f64>().sqrt()
    }
}

/// Reduces to `[-π, π)`.
fn wrap_phase(phi: f64) -> f64 {
    (phi + PI).rem_euclid(2.0 * PI) - PI
}

/// Fits the single-photon count rate `R₁(φ)` of a scan.
pub fn fit_nmax(result: &ScanResult) -> Result<FitResult> {
    if result.k_max() < 1 {
        return Err(Error::domain("scan has no single-photon column"));
    }
    fit_single_photon_curve(&result.phases, &result.rates(1))
}

/// Multi-start Levenberg-Marquardt fit of `R₁(φ) = A x e^{-x}`,
/// `x = m sin²((φ-φ₀)/2)` with `m ∈ (0, 100]` and `φ₀ ∈ [-π, π)`.
pub fn fit_single_photon_curve(phases: &[f64], rates: &[f64]) -> Result<FitResult> {
    if phases.len() != rates.len() {
        return Err(Error::domain("phases and rates differ in length"));
    }
    if phases.len() < MIN_POINTS {
        return Err(Error::domain(format!(
            "need at least {MIN_POINTS} phase points, got {}",
            phases.len()
        )));
    }
    if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::domain("rates must be finite and non-negative"));
    }
    if rates.iter().all(|&r| r == 0.0) {
        return Err(Error::domain("single-photon rate is zero everywhere; nothing to fit"));
    }

    let problem = SinglePhotonCurve { phases, rates };
    let opts = LmOptions::default();
    let mut best: Option<crate::optimize::LmOutcome<3>> = None;
    for &m0 in &[0.3, 0.7, 1.5, 3.0, 6.0, 12.0, 25.0, 50.0] {
        for s in 0..8 {
            let phi0 = -PI + s as f64 * PI / 4.0;
            let a0 = linear_amplitude(phases, rates, m0, phi0);
            let out = levenberg_marquardt(&problem, [m0, phi0, a0], opts);
            if best.is_none_or(|b| out.rss < b.rss) {
                best = Some(out);
            }
        }
    }
    let best = best.expect("at least one start");
    Ok(FitResult {
        n_max_hat: best.params[0],
        phase_offset_hat: best.params[1],
        amplitude_scale_hat: best.params[2],
        residual_sum_squares: best.rss,
        converged: best.converged,
    })
}

/// Best amplitude for fixed shape parameters (the model is linear in `A`).
fn linear_amplitude(phases: &[f64], rates: &[f64], m: f64, phi0: f64) -> f64 {
    let (mut fy, mut ff) = (0.0, 0.0);
    for (&phi, &y) in phases.iter().zip(rates) {
        let f = single_photon_model(phi, m, phi0, 1.0);
        fy += f * y;
        ff += f * f;
    }
    if ff > 0.0 && fy > 0.0 {
        fy / ff
    } else {
        1.0
    }
}
