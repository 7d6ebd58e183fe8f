//! Sub-Rayleigh fringes from shifted superposition of k-photon patterns.
//!
//! A pattern sampled on `P` uniform phases over one period is summed with
//! copies of itself rotated by `2π/n`. On the grid this is an exact rotation,
//! and the shift theorem multiplies harmonic `m` by `Σ_s e^{2πi ms/n}`, which
//! is `n` when `n | m` and zero otherwise. What survives is the content of
//! the pattern at harmonics `n, 2n, …`, i.e. fringes `n` times finer than the
//! ordinary `λ/2` spacing.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::experiment::ScanResult;
use crate::quantum::expected_rate;

/// Grid size used when a pattern is generated analytically; divisible by
/// 2, 3, 4, 5, 6, 8, 9 and 10.
pub const DEFAULT_PATTERN_POINTS: usize = 720;

/// A non-negative periodic curve on the grid `φ_i = 2πi/P`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    values: Vec<f64>,
}

impl Pattern {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("pattern needs at least one sample"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("pattern values must be finite and non-negative"));
        }
        Ok(Self { values })
    }

    /// Samples `f` on `points` uniform phases.
    pub fn from_fn(points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..points).map(|i| f(grid_phase(i, points))).collect())
    }

    /// Accepts samples only if `phases` is the uniform grid `2πi/P` (to 1e-9 rad).
    pub fn from_samples(phases: &[f64], values: Vec<f64>) -> Result<Self> {
        if phases.len() != values.len() {
            return Err(Error::domain("phases and values differ in length"));
        }
        let p = phases.len();
        for (i, &phi) in phases.iter().enumerate() {
            if (phi - grid_phase(i, p)).abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "phase {i} is {phi}, expected {} on a uniform grid over [0, 2π)",
                    grid_phase(i, p)
                )));
            }
        }
        Self::new(values)
    }

    /// Normalized k-photon probability `p̂_k(φ)` of a scan on a uniform grid.
    pub fn from_scan(result: &ScanResult, k: usize) -> Result<Self> {
        if k > result.k_max() {
            return Err(Error::domain(format!(
                "scan records at most {} photons",
                result.k_max()
            )));
        }
        Self::from_samples(&result.phases, result.probabilities(k))
    }

    /// `R_k(φ)/R_rep` from the closed-form rate.
    pub fn analytic_rate(k: u64, n_max: f64, points: usize) -> Result<Self> {
        Self::from_fn(points, |phi| expected_rate(k, n_max, phi, 1.0))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn phases(&self) -> Vec<f64> {
        (0..self.len()).map(|i| grid_phase(i, self.len())).collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::MAX, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    /// Rotation by `shift` samples: `out[i] = self[(i + shift) mod P]`.
    pub fn rotated(&self, shift: usize) -> Self {
        let p = self.len();
        Self {
            values: (0..p).map(|i| self.values[(i + shift) % p]).collect(),
        }
    }
}

fn grid_phase(i: usize, points: usize) -> f64 {
    2.0 * PI * i as f64 / points as f64
}

/// Real-DFT magnitudes `|c_m|`, `m = 0..=P/2`, scaled so that
/// `A cos(mφ + θ)` has `|c_m| = A` and a constant has `|c_0|` equal to it.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpectrum {
    magnitudes: Vec<f64>,
    points: usize,
}

impl HarmonicSpectrum {
    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn get(&self, m: usize) -> f64 {
        self.magnitudes.get(m).copied().unwrap_or(0.0)
    }

    pub fn fundamental_index(&self) -> usize {
        1
    }

    /// Harmonic `m ≥ 1` of largest magnitude (lowest index on ties).
    pub fn dominant_harmonic(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (m, &c) in self.magnitudes.iter().enumerate().skip(1) {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((m, c));
            }
        }
        best.map(|(m, _)| m)
    }

    /// Mean square of the pattern reconstructed from the magnitudes
    /// (Parseval).
    pub fn mean_square(&self) -> f64 {
        let p = self.points;
        self.magnitudes
            .iter()
            .enumerate()
            .map(|(m, c)| {
                if m == 0 || (p.is_multiple_of(2) && m == p / 2) {
                    c * c
                } else {
                    0.5 * c * c
                }
            })
            .sum()
    }
}

pub fn harmonic_spectrum(pattern: &Pattern) -> HarmonicSpectrum {
    let p = pattern.len();
    let mut buf: Vec<Complex<f64>> = pattern.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(p).process(&mut buf);
    let magnitudes = (0..=p / 2)
        .map(|m| {
            let edge = m == 0 || (p.is_multiple_of(2) && m == p / 2);
            let scale = if edge { 1.0 } else { 2.0 };
            scale * buf[m].norm() / p as f64
        })
        .collect();
    HarmonicSpectrum { magnitudes, points: p }
}

fn check_divides(pattern: &Pattern, n: usize) -> Result<()> {
    if n == 0 || !pattern.len().is_multiple_of(n) {
        return Err(Error::domain(format!(
            "{n} shifts do not divide the {}-point grid; resampling is not supported",
            pattern.len()
        )));
    }
    Ok(())
}

/// `out[i] = Σ_{s<n} base[(i + s·P/n) mod P]`. A sum, not an average; use
/// [`Pattern::scaled`] with `1/n` to compare on the original scale.
pub fn superimpose(base: &Pattern, n_shifts: usize) -> Result<Pattern> {
    check_divides(base, n_shifts)?;
    let p = base.len();
    let stride = p / n_shifts;
    let values = (0..p)
        .map(|i| (0..n_shifts).map(|s| base.values[(i + s * stride) % p]).sum())
        .collect();
    Ok(Pattern { values })
}

/// Peak-to-peak variation of the `n`-fold superposition over its mean.
/// Zero exactly when `p` has no content at nonzero multiples of `n`.
pub fn residual_variation(pattern: &Pattern, n: usize) -> Result<f64> {
    let s = superimpose(pattern, n)?;
    let mean = s.mean();
    if mean == 0.0 {
        return Ok(0.0);
    }
    Ok((s.max() - s.min()) / mean)
}

/// `(max - min)/(max + min)`; zero for an identically zero pattern.
pub fn visibility(pattern: &Pattern) -> f64 {
    let (hi, lo) = (pattern.max(), pattern.min());
    if hi + lo == 0.0 {
        0.0
    } else {
        (hi - lo) / (hi + lo)
    }
}

/// Fringe spacing in the units of `wavelength`: `(λ/2)/m*` with `m*` the
/// dominant harmonic. `λ/2` is the ordinary two-beam (Rayleigh) spacing.
pub fn fringe_spacing(pattern: &Pattern, wavelength: f64) -> Result<f64> {
    let spectrum = harmonic_spectrum(pattern);
    let scale = spectrum.get(0).max(pattern.max()).max(f64::MIN_POSITIVE);
    match spectrum.dominant_harmonic() {
        Some(m) if spectrum.get(m) > 1e-12 * scale => Ok(0.5 * wavelength / m as f64),
        _ => Err(Error::domain("pattern is flat; it has no fringes")),
    }
}

/// `cos²(nφ/2)`, the N-photon absorption pattern of an ideal entangled
/// two-mode state.
pub fn boto_pattern(n: u32, points: usize) -> Result<Pattern> {
    if n == 0 {
        return Err(Error::domain("photon number must be at least 1"));
    }
    Pattern::from_fn(points, |phi| (0.5 * n as f64 * phi).cos().powi(2))
}

/// `Σ_i I_i^m`: dose of an `m`-photon absorber exposed to pulses of
/// intensities `I_i = E_i E_i*`.
pub fn bentley_absorption(m: u32, intensities: &[f64]) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("absorption order must be at least 1"));
    }
    if intensities.iter().any(|i| !(i.is_finite() && *i >= 0.0)) {
        return Err(Error::domain("intensities must be finite and non-negative"));
    }
    Ok(intensities.iter().map(|i| i.powi(m as i32)).sum())
}

/// Absorption pattern of an `m`-photon resist exposed to `n_pulses` two-beam
/// fringes `cos²((φ + 2πs/n_pulses)/2)`, `s = 0..n_pulses`.
pub fn bentley_pattern(m: u32, n_pulses: usize, points: usize) -> Result<Pattern> {
    if n_pulses == 0 {
        return Err(Error::domain("need at least one pulse"));
    }
    let values = (0..points)
        .map(|i| {
            let phi = grid_phase(i, points);
            let intensities: Vec<f64> = (0..n_pulses)
                .map(|s| (0.5 * (phi + 2.0 * PI * s as f64 / n_pulses as f64)).cos().powi(2))
                .collect();
            bentley_absorption(m, &intensities)
        })
        .collect::<Result<Vec<_>>>()?;
    Pattern::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::mean_photon_curve;
    use proptest::prelude::*;

    /// Direct O(P²) DFT with the same normalization.
    fn naive_spectrum(v: &[f64]) -> Vec<f64> {
        let p = v.len();
        (0..=p / 2)
            .map(|m| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, x) in v.iter().enumerate() {
                    let a = -2.0 * PI * (m * i) as f64 / p as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                let edge = m == 0 || (p.is_multiple_of(2) && m == p / 2);
                (if edge { 1.0 } else { 2.0 }) * (re * re + im * im).sqrt() / p as f64
            })
            .collect()
    }

    fn r7() -> Pattern {
        Pattern::analytic_rate(7, 3.95, DEFAULT_PATTERN_POINTS).unwrap()
    }

    #[test]
    fn fft_agrees_with_direct_sum() {
        let p = Pattern::analytic_rate(3, 3.95, 90).unwrap();
        let fast = harmonic_spectrum(&p);
        for (a, b) in fast.magnitudes().iter().zip(naive_spectrum(p.values())) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn spectrum_normalization() {
        let c = Pattern::new(vec![2.5; 64]).unwrap();
        let s = harmonic_spectrum(&c);
        assert!((s.get(0) - 2.5).abs() < 1e-12);
        assert!(s.magnitudes()[1..].iter().all(|&m| m < 1e-12));

        let b = boto_pattern(3, 64).unwrap();
        let s = harmonic_spectrum(&b);
        for m in 0..=32 {
            let expected = if m == 0 || m == 3 { 0.5 } else { 0.0 };
            assert!((s.get(m) - expected).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn single_photon_curve_is_non_sinusoidal() {
        let s = harmonic_spectrum(&Pattern::analytic_rate(1, 3.95, DEFAULT_PATTERN_POINTS).unwrap());
        // numpy.fft.rfft of the same samples: |c_2|/|c_1| = 2.1118262
        assert!((s.get(2) / s.get(1) - 2.1118262).abs() < 1e-6);
    }

    #[test]
    fn mean_photon_curve_has_only_the_fundamental() {
        let curve = mean_photon_curve(3.95, &Pattern::new(vec![0.0; 256]).unwrap().phases());
        let s = harmonic_spectrum(&Pattern::new(curve).unwrap());
        assert!((s.get(0) - 3.95 / 2.0).abs() < 1e-12);
        assert!((s.get(1) - 3.95 / 2.0).abs() < 1e-12);
        for m in 2..=128 {
            assert!(s.get(m) <= 1e-10 * s.get(1));
        }
    }

    #[test]
    fn superimpose_examples() {
        let base = r7();
        assert_eq!(superimpose(&base, 1).unwrap(), base);

        let fringe = boto_pattern(1, DEFAULT_PATTERN_POINTS).unwrap();
        let flat = superimpose(&fringe, 2).unwrap();
        assert!(flat.values().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let s5 = harmonic_spectrum(&superimpose(&base, 5).unwrap());
        let c0 = s5.get(0);
        for m in 1..s5.magnitudes().len() {
            if m % 5 != 0 {
                assert!(s5.get(m) < 1e-10 * c0, "m={m}");
            }
        }
        assert!(s5.get(5) > 0.0);
        assert!(superimpose(&base, 7).is_err());
    }

    #[test]
    fn residual_variation_examples() {
        assert_eq!(
            residual_variation(&Pattern::new(vec![3.0; 40]).unwrap(), 5).unwrap(),
            0.0
        );
        let b5 = boto_pattern(5, DEFAULT_PATTERN_POINTS).unwrap();
        assert!((residual_variation(&b5, 5).unwrap() - 2.0).abs() < 1e-12);
        assert!(residual_variation(&r7(), 5).unwrap() > 0.0);
    }

    #[test]
    fn fringe_spacing_examples() {
        let ordinary = boto_pattern(1, DEFAULT_PATTERN_POINTS).unwrap();
        assert!((fringe_spacing(&ordinary, 780.0).unwrap() - 390.0).abs() < 1e-9);
        let fine = superimpose(&r7(), 5).unwrap();
        assert!((fringe_spacing(&fine, 780.0).unwrap() - 78.0).abs() < 1e-9);
        let b3 = boto_pattern(3, DEFAULT_PATTERN_POINTS).unwrap();
        assert!((fringe_spacing(&b3, 1.0).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert!(fringe_spacing(&Pattern::new(vec![1.0; 16]).unwrap(), 780.0).is_err());
    }

    #[test]
    fn boto_examples() {
        assert_eq!(
            boto_pattern(1, 8).unwrap(),
            Pattern::from_fn(8, |p| (0.5 * p).cos().powi(2)).unwrap()
        );
        let b = Pattern::from_fn(10, |phi| (2.5 * phi).cos().powi(2)).unwrap();
        assert!(b.values()[1] < 1e-30);
        for n in 1..=7 {
            assert!((visibility(&boto_pattern(n, 720).unwrap()) - 1.0).abs() < 1e-12);
        }
        assert!(boto_pattern(0, 8).is_err());
    }

    #[test]
    fn bentley_examples() {
        assert_eq!(bentley_absorption(1, &[0.25, 0.5, 1.0]).unwrap(), 1.75);
        assert!((bentley_absorption(3, &[0.5; 4]).unwrap() - 4.0 * 0.125).abs() < 1e-15);
        let p = bentley_pattern(7, 5, DEFAULT_PATTERN_POINTS).unwrap();
        let s = harmonic_spectrum(&p);
        for m in 1..s.magnitudes().len() {
            if m % 5 != 0 {
                assert!(s.get(m) < 1e-10 * s.get(0), "m={m}");
            }
        }
        assert!(s.get(5) > 1e-3 * s.get(0));
        assert!(bentley_absorption(0, &[1.0]).is_err());
    }

    #[test]
    fn superposition_visibility_is_below_ideal() {
        let v = visibility(&superimpose(&r7(), 5).unwrap());
        assert!(v > 0.0 && v < 1.0, "{v}");
    }

    #[test]
    fn from_samples_requires_uniform_grid() {
        assert!(Pattern::from_samples(&[0.0, PI], vec![1.0, 2.0]).is_ok());
        assert!(Pattern::from_samples(&[0.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(Pattern::new(vec![-1.0]).is_err());
    }

    fn arbitrary_pattern() -> impl Strategy<Value = Pattern> {
        prop::collection::vec(0.0f64..10.0, 60).prop_map(|v| Pattern::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn shift_theorem(p in arbitrary_pattern(), n in prop::sample::select(vec![1usize, 2, 3, 4, 5, 6, 10])) {
            let base = harmonic_spectrum(&p);
            let sup = harmonic_spectrum(&superimpose(&p, n).unwrap());
            let top = sup.magnitudes().iter().copied().fold(0.0, f64::max);
            for m in 0..sup.magnitudes().len() {
                if m % n != 0 {
                    prop_assert!(sup.get(m) <= 1e-10 * top);
                } else {
                    prop_assert!((sup.get(m) - n as f64 * base.get(m)).abs() <= 1e-9 * top.max(1.0));
                }
            }
        }

        #[test]
        fn superposition_is_rotation_invariant(p in arbitrary_pattern(), n in prop::sample::select(vec![2usize, 3, 5])) {
            let a = superimpose(&p, n).unwrap();
            let b = superimpose(&p.rotated(p.len() / n), n).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn parseval(p in arbitrary_pattern()) {
            let direct = p.values().iter().map(|v| v * v).sum::<f64>() / p.len() as f64;
            let s = harmonic_spectrum(&p);
            prop_assert!((s.mean_square() - direct).abs() <= 1e-9 * direct.max(1e-300));
        }

        #[test]
        fn visibility_never_exceeds_one(p in arbitrary_pattern(), n in prop::sample::select(vec![1usize, 2, 3, 5])) {
            prop_assert!(visibility(&superimpose(&p, n).unwrap()) <= 1.0);
        }

        #[test]
        fn residual_zero_iff_no_multiples(a in 0.1f64..2.0, m in 1usize..12) {
            // 1 + a cos(mφ)/ (1+a) stays non-negative
            let p = Pattern::from_fn(60, |phi| 1.0 + a / (1.0 + a) * (m as f64 * phi).cos()).unwrap();
            for n in [2usize, 3, 4, 5, 6] {
                let r = residual_variation(&p, n).unwrap();
                if m % n == 0 {
                    prop_assert!(r > 1e-6);
                } else {
                    prop_assert!(r < 1e-10);
                }
            }
        }
    }
}
