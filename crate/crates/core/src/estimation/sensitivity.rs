use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::optimize::brent_minimize;
use crate::quantum::ln_poisson_pmf;

/// `|sin|` or `|cos|` values below this count as exact zeros.
const BLIND_TOL: f64 = 1e-12;

/// Grid used to bracket the optimum before refinement.
const OPTIMUM_GRID: usize = 4000;

/// Readout used to estimate the phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Mean photon number `⟨n̂⟩`.
    MeanPhoton,
    /// `k`-photon count rate.
    Fock(u32),
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::MeanPhoton => write!(f, "mean"),
            Scheme::Fock(k) => write!(f, "k{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityCurve {
    pub phases: Vec<f64>,
    /// Phase uncertainty; `+inf` at blind points.
    pub delta_phi: Vec<f64>,
    pub scheme: Scheme,
    pub n_max: f64,
    pub n_pulses: u64,
}

fn check_common(n_max: f64, n_pulses: u64) -> Result<()> {
    if !(n_max.is_finite() && n_max > 0.0) {
        return Err(Error::domain(format!("n_max must be positive, got {n_max}")));
    }
    if n_pulses == 0 {
        return Err(Error::domain("n_pulses must be at least 1"));
    }
    Ok(())
}

/// Intensity readout: `Δφ = 1 / (√(N n_max) |cos(φ/2)|)`; `+inf` at `φ = π`.
///
/// `N = 1` gives the per-pulse value.
pub fn sensitivity_mean(n_max: f64, phi: f64, n_pulses: u64) -> Result<f64> {
    check_common(n_max, n_pulses)?;
    let c = (0.5 * phi).cos().abs();
    if c < BLIND_TOL {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / ((n_pulses as f64 * n_max).sqrt() * c))
}

/// `k`-photon readout:
/// `Δφ = 2√(1/p_k - 1) / (√N |k/x - 1| n_max |sin φ|)`, `x = n_max sin²(φ/2)`.
///
/// Returns `+inf` where `x = k` (the rate is stationary) and where
/// `sin φ = 0` at the bright fringe. At the dark fringe the `k = 1` curve
/// takes its limit `1/√(N n_max)`; higher `k` diverge there.
pub fn sensitivity_fock(k: u32, n_max: f64, phi: f64, n_pulses: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("the k-photon sensitivity is defined for k ≥ 1"));
    }
    check_common(n_max, n_pulses)?;
    let n = n_pulses as f64;
    let half_sin = (0.5 * phi).sin();
    if half_sin.abs() < BLIND_TOL {
        return Ok(if k == 1 {
            1.0 / (n * n_max).sqrt()
        } else {
            f64::INFINITY
        });
    }
    let kf = k as f64;
    let x = n_max * half_sin * half_sin;
    let sin_phi = phi.sin().abs();
    if (x - kf).abs() <= BLIND_TOL * kf || sin_phi < BLIND_TOL {
        return Ok(f64::INFINITY);
    }
    let ln_p = ln_poisson_pmf(x, k as u64);
    // √((1 - p)/p) without underflow for tiny p
    let spread = (0.5 * ((-ln_p.exp()).ln_1p() - ln_p)).exp();
    let slope = (kf / x - 1.0).abs() * n_max * sin_phi;
    Ok(2.0 * spread / (n.sqrt() * slope))
}

pub fn sensitivity_curve(scheme: Scheme, n_max: f64, phases: &[f64], n_pulses: u64) -> Result<SensitivityCurve> {
    let delta_phi = phases
        .iter()
        .map(|&phi| match scheme {
            Scheme::MeanPhoton => sensitivity_mean(n_max, phi, n_pulses),
            Scheme::Fock(k) => sensitivity_fock(k, n_max, phi, n_pulses),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityCurve {
        phases: phases.to_vec(),
        delta_phi,
        scheme,
        n_max,
        n_pulses,
    })
}

/// Phase in `(0, π)` that minimizes the `k`-photon `Δφ`, to about 1e-6 rad.
///
/// A dense grid picks the best basin; Brent's method refines inside it.
pub fn optimal_phase(k: u32, n_max: f64, n_pulses: u64) -> Result<f64> {
    sensitivity_fock(k, n_max, 0.5 * PI, n_pulses)?;
    let eval = |phi: f64| sensitivity_fock(k, n_max, phi, n_pulses).unwrap_or(f64::INFINITY);
    let step = PI / OPTIMUM_GRID as f64;
    let grid = |i: usize| (i as f64 + 0.5) * step;
    let best = (0..OPTIMUM_GRID)
        .map(|i| (i, eval(grid(i))))
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::domain("sensitivity is infinite on the whole half period"))?;
    let edge = 1e-9;
    let lo = if best == 0 { edge } else { grid(best - 1) };
    let hi = if best + 1 == OPTIMUM_GRID {
        PI - edge
    } else {
        grid(best + 1)
    };
    Ok(brent_minimize(eval, lo, hi, 1e-8).x)
}
