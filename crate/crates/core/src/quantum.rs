//! Coherent states, the interferometer map and the k-photon count rate.
//!
//! Everything here is closed-form and serves as the reference that the
//! Monte Carlo chain in [`crate::experiment`] is checked against.
//!
//! Photon-number probabilities are evaluated in log space,
//! `ln p_k = -n + k ln n - ln k!`. `ln k!` comes from an exact factorial
//! table for `k <= 170` (170! is the last factorial representable in `f64`)
//! and from `ln Γ(k + 1)` above that, so `k` is unbounded in practice.

use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Largest `k` whose factorial is taken from the exact table rather than `ln Γ`.
pub const LN_FACTORIAL_TABLE_MAX: u64 = 170;

/// Single-mode coherent field `|α⟩`. Only `|α|` is kept; no observable in
/// this crate depends on the phase of `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentField {
    amplitude: f64,
}

impl CoherentField {
    pub fn new(amplitude: f64) -> Result<Self> {
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(Error::domain(format!(
                "field amplitude must be finite and non-negative, got {amplitude}"
            )));
        }
        Ok(Self { amplitude })
    }

    pub fn from_mean_photon(mean: f64) -> Result<Self> {
        if !mean.is_finite() || mean < 0.0 {
            return Err(Error::domain(format!(
                "mean photon number must be finite and non-negative, got {mean}"
            )));
        }
        Ok(Self { amplitude: mean.sqrt() })
    }

    pub fn vacuum() -> Self {
        Self { amplitude: 0.0 }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// `⟨n⟩ = |α|²`.
    pub fn mean_photon(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    /// Loss with total efficiency `η²` maps `|α⟩ → |ηα⟩`.
    pub fn attenuate(&self, efficiency_sq: f64) -> Result<Self> {
        check_efficiency(efficiency_sq)?;
        Ok(Self {
            amplitude: self.amplitude * efficiency_sq.sqrt(),
        })
    }
}

fn check_efficiency(efficiency_sq: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&efficiency_sq) {
        return Err(Error::domain(format!(
            "detection efficiency must lie in [0, 1], got {efficiency_sq}"
        )));
    }
    Ok(())
}

/// Operating point of the interferometer.
///
/// `n_max` is the mean *detected* photon number at the bright fringe, so it
/// already includes `efficiency_sq`. The phase is any real number; nothing in
/// this module reduces it modulo 2π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferometerSetting {
    pub n_max: f64,
    pub phase: f64,
    pub efficiency_sq: f64,
}

impl InterferometerSetting {
    /// Setting expressed directly in detected units (`η² = 1`).
    pub fn new(n_max: f64, phase: f64) -> Result<Self> {
        if !n_max.is_finite() || n_max < 0.0 {
            return Err(Error::domain(format!(
                "n_max must be finite and non-negative, got {n_max}"
            )));
        }
        if !phase.is_finite() {
            return Err(Error::domain("phase must be finite"));
        }
        Ok(Self {
            n_max,
            phase,
            efficiency_sq: 1.0,
        })
    }

    /// Setting for a given input field and loss; `n_max = η²|α|²`.
    pub fn for_input(input: &CoherentField, phase: f64, efficiency_sq: f64) -> Result<Self> {
        check_efficiency(efficiency_sq)?;
        let mut setting = Self::new(input.mean_photon() * efficiency_sq, phase)?;
        setting.efficiency_sq = efficiency_sq;
        Ok(setting)
    }

    /// `n_max · sin²(φ/2)`.
    pub fn detected_mean(&self) -> f64 {
        detected_mean(self.n_max, self.phase)
    }
}

/// Mean detected photon number at phase `phi`.
#[inline]
pub fn detected_mean(n_max: f64, phi: f64) -> f64 {
    let s = (0.5 * phi).sin();
    n_max * s * s
}

/// Interferometer output `|α sin(φ/2)⟩` before any loss.
pub fn output_field(input: &CoherentField, setting: &InterferometerSetting) -> CoherentField {
    CoherentField {
        amplitude: (input.amplitude * (0.5 * setting.phase).sin()).abs(),
    }
}

/// Field at the detector, `|η α sin(φ/2)⟩`.
pub fn detected_field(input: &CoherentField, setting: &InterferometerSetting) -> CoherentField {
    let out = output_field(input, setting);
    CoherentField {
        amplitude: out.amplitude * setting.efficiency_sq.sqrt(),
    }
}

/// `ln P(X = k)` for `X ~ Poisson(mean)`. Returns `-inf` for impossible outcomes.
pub fn ln_poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -mean + k as f64 * mean.ln() - ln_factorial(k)
}

/// `P(X = k)` for `X ~ Poisson(mean)`.
pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    ln_poisson_pmf(mean, k).exp()
}

/// `|⟨k|α⟩|² = e^{-⟨n⟩} ⟨n⟩^k / k!`.
pub fn fock_overlap(field: &CoherentField, k: u64) -> f64 {
    poisson_pmf(field.mean_photon(), k)
}

/// Expected k-photon count rate
/// `R_k = R_rep e^{-n_max sin²(φ/2)} (n_max sin²(φ/2))^k / k!`.
pub fn expected_rate(k: u64, n_max: f64, phi: f64, rep_rate: f64) -> f64 {
    debug_assert!(rep_rate > 0.0 && n_max >= 0.0);
    rep_rate * poisson_pmf(detected_mean(n_max, phi), k)
}

/// `n_max · sin²(φ/2)` at every phase; the target of the weighted sum `Σ k p_k`.
pub fn mean_photon_curve(n_max: f64, phases: &[f64]) -> Vec<f64> {
    phases.iter().map(|&phi| detected_mean(n_max, phi)).collect()
}

/// Photon-number distribution truncated at `k_max` with the remaining
/// probability kept as an explicit tail.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    probs: Vec<f64>,
    tail_mass: f64,
}

impl PhotonDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `Σ_{k > k_max} p_k`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn k_max(&self) -> usize {
        self.probs.len() - 1
    }

    /// `Σ_k k p_k` over the retained outcomes.
    pub fn truncated_mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }
}

/// Poisson distribution of the given mean over `0..=k_max`.
///
/// The tail is `1 - Σ p_k` clamped to `[0, 1]`. Its absolute error is a few
/// `(k_max + 1) · ε`, so tails below ~1e-14 are not resolved.
pub fn photon_distribution(mean: f64, k_max: usize) -> Result<PhotonDistribution> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::domain(format!(
            "mean photon number must be finite and non-negative, got {mean}"
        )));
    }
    let probs: Vec<f64> = (0..=k_max as u64).map(|k| poisson_pmf(mean, k)).collect();
    let tail_mass = (1.0 - probs.iter().sum::<f64>()).clamp(0.0, 1.0);
    Ok(PhotonDistribution { probs, tail_mass })
}
