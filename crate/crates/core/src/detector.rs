//! Readout chain of an avalanche photon-number-resolving counter.
//!
//! `n` absorbed photons (real or dark) produce `n` independent avalanches,
//! so the pulse height is Gaussian with mean `n·gain` and standard deviation
//! `√n·σ₁`. Empty pulses sit on a zero-mean electronic pedestal of width
//! `σ₀`. Comparator levels `L_1 < … < L_K` bin each pulse into a photon
//! number; pulses above `L_K` are recorded as `K`.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::optimize::brent_minimize;
use crate::quantum::ln_poisson_pmf;
use crate::rng::{sample_poisson, PulseStream};

/// Avalanche gain, noise widths and dark rate of the counter.
///
/// Units are electrons; the defaults normalize the single-photon avalanche
/// to `gain = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub gain: f64,
    /// Width of the one-photon peak. Zero is the noiseless limit.
    pub sigma1: f64,
    /// Width of the empty-pulse pedestal.
    pub sigma0: f64,
    /// Mean dark events per detection gate.
    pub dark_mean: f64,
    /// Photon rate (Hz) above which the counter begins to saturate.
    pub saturation_rate: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            gain: 1.0,
            sigma1: 0.15,
            sigma0: 0.08,
            dark_mean: 0.02,
            saturation_rate: 5.0e6,
        }
    }
}

impl DetectorModel {
    /// Perfect resolution: no multiplication noise, no pedestal, no dark counts.
    pub fn ideal() -> Self {
        Self {
            sigma1: 0.0,
            sigma0: 0.0,
            dark_mean: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.gain.is_finite() && self.gain > 0.0) {
            bad.push(format!("gain must be positive, got {}", self.gain));
        }
        if !(self.sigma1.is_finite() && self.sigma1 >= 0.0) {
            bad.push(format!("sigma1 must be non-negative, got {}", self.sigma1));
        } else if self.sigma1 >= 0.5 * self.gain {
            bad.push(format!(
                "sigma1 ({}) must be below gain/2 ({}) for resolvable peaks",
                self.sigma1,
                0.5 * self.gain
            ));
        }
        if !(self.sigma0.is_finite() && self.sigma0 >= 0.0) {
            bad.push(format!("sigma0 must be non-negative, got {}", self.sigma0));
        }
        if !(self.dark_mean.is_finite() && self.dark_mean >= 0.0) {
            bad.push(format!("dark_mean must be non-negative, got {}", self.dark_mean));
        }
        if !(self.saturation_rate > 0.0) {
            bad.push(format!(
                "saturation_rate must be positive, got {}",
                self.saturation_rate
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    /// Pulse-height distribution for `k` avalanches, with unit weight.
    pub fn peak(&self, k: usize) -> Peak {
        let std = if k == 0 {
            self.sigma0
        } else {
            (k as f64).sqrt() * self.sigma1
        };
        Peak {
            weight: 1.0,
            mean: k as f64 * self.gain,
            std,
        }
    }
}

/// One weighted Gaussian component of the pulse-height mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

impl Peak {
    fn ln_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        self.weight.ln() - 0.5 * z * z - self.std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// `P(height < x)`. A zero-width peak is a point mass at `mean`.
    pub fn prob_below(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return 1.0;
        }
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        if self.std == 0.0 {
            return if x > self.mean { 1.0 } else { 0.0 };
        }
        0.5 * erfc(-(x - self.mean) / (self.std * std::f64::consts::SQRT_2))
    }
}

/// Comparator levels `L_1 < L_2 < … < L_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    levels: Vec<f64>,
}

impl ThresholdSet {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::domain("threshold set needs at least one level"));
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::domain("threshold levels must be finite"));
        }
        if levels[0] <= 0.0 {
            return Err(Error::domain(format!(
                "first threshold must be positive, got {}",
                levels[0]
            )));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("threshold levels must be strictly increasing"));
        }
        Ok(Self { levels })
    }

    /// Levels halfway between neighbouring peak centres.
    pub fn midpoints(gain: f64, k_max: usize) -> Result<Self> {
        Self::new((1..=k_max).map(|k| (k as f64 - 0.5) * gain).collect())
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Highest recordable photon number.
    pub fn k_max(&self) -> usize {
        self.levels.len()
    }

    /// Lower edge of class `k` (`-inf` for `k = 0`).
    pub fn lower_edge(&self, k: usize) -> f64 {
        if k == 0 {
            f64::NEG_INFINITY
        } else {
            self.levels[k - 1]
        }
    }

    /// Upper edge of class `k` (`+inf` for the overflow class `K`).
    pub fn upper_edge(&self, k: usize) -> f64 {
        self.levels.get(k).copied().unwrap_or(f64::INFINITY)
    }

    /// Photon number recorded for a pulse of height `height`.
    #[inline]
    pub fn classify(&self, height: f64) -> usize {
        self.levels.partition_point(|&l| l <= height)
    }
}

/// Free-function form of [`ThresholdSet::classify`].
pub fn classify(height: f64, thresholds: &ThresholdSet) -> usize {
    thresholds.classify(height)
}

/// Pulse height (electrons) produced by `true_k` avalanches.
pub fn sample_pulse_height<R: Rng + ?Sized>(true_k: u64, model: &DetectorModel, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if true_k == 0 {
        z * model.sigma0
    } else {
        true_k as f64 * model.gain + (true_k as f64).sqrt() * model.sigma1 * z
    }
}

/// Adds Poisson-distributed dark events to a photon number.
pub fn add_dark_counts<R: Rng + ?Sized>(photon_k: u64, model: &DetectorModel, rng: &mut R) -> u64 {
    photon_k + sample_poisson(model.dark_mean, rng)
}

/// Relative peak populations assumed while placing thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceWeights {
    /// Poisson populations with the given mean photon number.
    Poisson(f64),
    Uniform,
}

impl ReferenceWeights {
    fn ln_weight(&self, k: usize) -> f64 {
        match *self {
            ReferenceWeights::Poisson(mean) => ln_poisson_pmf(mean, k as u64),
            ReferenceWeights::Uniform => 0.0,
        }
    }
}

/// Density minimum of a two-peak mixture on the open interval between the
/// peak centres, located to within `xtol`.
///
/// If either peak has zero width the midpoint is returned. Fails when the
/// mixture is monotone on the interval (the peaks have merged). A local
/// minimum counts even if the lighter peak's centre sits lower than it.
pub fn mixture_minimum(left: &Peak, right: &Peak, xtol: f64) -> std::result::Result<f64, String> {
    let (lo, hi) = (left.mean, right.mean);
    if left.std == 0.0 || right.std == 0.0 {
        return Ok(0.5 * (lo + hi));
    }
    if !(left.weight > 0.0 && right.weight > 0.0) {
        return Err("a peak has zero reference weight".into());
    }
    let ln_mix = |x: f64| {
        let a = left.ln_density(x);
        let b = right.ln_density(x);
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln()
    };
    let found = brent_minimize(ln_mix, lo, hi, xtol);
    let margin = 2.0 * xtol;
    if found.x - lo <= margin || hi - found.x <= margin {
        return Err(format!(
            "mixture density is monotone between {lo} and {hi}; peaks merged"
        ));
    }
    Ok(found.x)
}

/// Places `L_1..L_K` at the density minima between neighbouring peaks,
/// assuming `weights` for the peak populations.
pub fn calibrate_thresholds(model: &DetectorModel, k_max: usize, weights: ReferenceWeights) -> Result<ThresholdSet> {
    model.validate()?;
    if k_max == 0 {
        return Err(Error::domain("k_max must be at least 1"));
    }
    let xtol = 1e-6 * model.gain;
    let mut levels = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let mut left = model.peak(k);
        let mut right = model.peak(k + 1);
        left.weight = weights.ln_weight(k).exp();
        right.weight = weights.ln_weight(k + 1).exp();
        let level = mixture_minimum(&left, &right, xtol).map_err(|reason| Error::Calibration {
            lower: k,
            upper: k + 1,
            reason,
        })?;
        levels.push(level);
    }
    ThresholdSet::new(levels)
}

/// Comparator sweep used to acquire a pulse-height histogram: windows
/// `[start + i·w, start + (i+1)·w)` for `i < bins`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSweep {
    pub start: f64,
    pub bin_width: f64,
    pub bins: usize,
}

impl LevelSweep {
    /// Sweep covering `[start, stop)` in windows of `bin_width`.
    pub fn covering(start: f64, stop: f64, bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::domain(format!("bin width must be positive, got {bin_width}")));
        }
        if !(stop > start) {
            return Err(Error::domain("sweep stop must exceed start"));
        }
        let bins = ((stop - start) / bin_width).ceil() as usize;
        Ok(Self { start, bin_width, bins })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseHeightHistogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
}

impl PulseHeightHistogram {
    pub fn new(bin_edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if bin_edges.len() != counts.len() + 1 {
            return Err(Error::domain(format!(
                "{} edges cannot bound {} bins",
                bin_edges.len(),
                counts.len()
            )));
        }
        if bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("histogram edges must be strictly increasing"));
        }
        Ok(Self { bin_edges, counts })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_centre(&self, i: usize) -> f64 {
        0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
    }

    /// Index of the most populated bin.
    pub fn mode(&self) -> Option<usize> {
        (0..self.counts.len()).max_by_key(|&i| (self.counts[i], std::cmp::Reverse(i)))
    }

    /// Bins that hold the maximum of their `±half_window` neighbourhood and at
    /// least `min_count` pulses. Plateaus report their first bin.
    pub fn local_maxima(&self, half_window: usize, min_count: u64) -> Vec<usize> {
        let n = self.counts.len();
        (0..n)
            .filter(|&i| {
                let c = self.counts[i];
                if c < min_count {
                    return false;
                }
                let lo = i.saturating_sub(half_window);
                let hi = (i + half_window).min(n - 1);
                (lo..i).all(|j| self.counts[j] < c) && (i + 1..=hi).all(|j| self.counts[j] <= c)
            })
            .collect()
    }
}

/// Histogram of pulse heights as acquired by sweeping a pair of closely
/// spaced comparator levels; equivalent to fixed-width binning. Heights
/// outside the sweep are not counted.
pub fn scan_histogram<I>(heights: I, sweep: LevelSweep) -> PulseHeightHistogram
where
    I: IntoIterator<Item = f64>,
{
    let bin_edges: Vec<f64> = (0..=sweep.bins)
        .map(|i| sweep.start + i as f64 * sweep.bin_width)
        .collect();
    let mut counts = vec![0u64; sweep.bins];
    for h in heights {
        let pos = (h - sweep.start) / sweep.bin_width;
        if pos >= 0.0 && pos < sweep.bins as f64 {
            counts[pos as usize] += 1;
        }
    }
    PulseHeightHistogram { bin_edges, counts }
}

/// Pulse heights for `n_pulses` gates of a coherent source with the given
/// detected mean, including dark events. Pulse `j` uses auxiliary stream `j`.
pub fn simulate_heights(model: &DetectorModel, mean: f64, n_pulses: u64, seed: u64) -> Vec<f64> {
    (0..n_pulses)
        .map(|j| {
            let mut rng = PulseStream::auxiliary(seed, j);
            let k = sample_poisson(mean, &mut rng);
            let k = add_dark_counts(k, model, &mut rng);
            sample_pulse_height(k, model, &mut rng)
        })
        .collect()
}

/// `p[k][j]`: probability that `k` avalanches are recorded as `j` photons.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    p: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn from_rows(p: Vec<Vec<f64>>) -> Result<Self> {
        let n = p.len();
        if n == 0 || p.iter().any(|row| row.len() != n) {
            return Err(Error::domain("confusion matrix must be square and non-empty"));
        }
        for (k, row) in p.iter().enumerate() {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::domain(format!("row {k} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::domain(format!("row {k} sums to {s}, not 1")));
            }
        }
        Ok(Self { p })
    }

    pub fn size(&self) -> usize {
        self.p.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn get(&self, true_k: usize, recorded: usize) -> f64 {
        self.p[true_k][recorded]
    }

    /// Recorded distribution `truthᵀ · p` for a true photon-number distribution.
    pub fn forward(&self, truth: &[f64]) -> Vec<f64> {
        let n = self.size();
        let mut out = vec![0.0; n];
        for (k, &t) in truth.iter().enumerate().take(n) {
            for (j, o) in out.iter_mut().enumerate() {
                *o += t * self.p[k][j];
            }
        }
        out
    }
}

/// Analytic classification probabilities for `k = 0..=K` avalanches, with
/// `K = thresholds.k_max()`.
pub fn confusion_matrix(model: &DetectorModel, thresholds: &ThresholdSet) -> ConfusionMatrix {
    let size = thresholds.k_max() + 1;
    let p = (0..size)
        .map(|k| {
            let peak = model.peak(k);
            let below: Vec<f64> = (0..=size)
                .map(|j| {
                    if j == 0 {
                        0.0
                    } else if j == size {
                        1.0
                    } else {
                        peak.prob_below(thresholds.lower_edge(j))
                    }
                })
                .collect();
            below.windows(2).map(|w| (w[1] - w[0]).clamp(0.0, 1.0)).collect()
        })
        .collect();
    ConfusionMatrix { p }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_thresholds() -> ThresholdSet {
        calibrate_thresholds(&DetectorModel::default(), 7, ReferenceWeights::Poisson(3.95)).unwrap()
    }

    #[test]
    fn noiseless_pedestal_is_exactly_zero() {
        let model = DetectorModel {
            sigma0: 0.0,
            ..DetectorModel::default()
        };
        let mut rng = PulseStream::new(1, 2, 3);
        for _ in 0..100 {
            assert_eq!(sample_pulse_height(0, &model, &mut rng), 0.0);
        }
    }

    #[test]
    fn pulse_height_moments() {
        let model = DetectorModel::default();
        let n = 1_000_000u64;
        let draw = |k: u64| -> (f64, f64) {
            let xs: Vec<f64> = (0..n)
                .map(|j| sample_pulse_height(k, &model, &mut PulseStream::auxiliary(k, j)))
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (mean, var.sqrt())
        };
        let (mean4, _) = draw(4);
        let se = 2.0 * model.sigma1 / 1e3;
        assert!((mean4 - 4.0 * model.gain).abs() < 5.0 * se, "{mean4}");
        let (_, sd9) = draw(9);
        // sample std of 10^6 normals has relative se ~ 1/sqrt(2n) ≈ 7e-4
        assert!((sd9 / (3.0 * model.sigma1) - 1.0).abs() < 5e-3, "{sd9}");
    }

    #[test]
    fn dark_counts() {
        let quiet = DetectorModel {
            dark_mean: 0.0,
            ..DetectorModel::default()
        };
        let mut rng = PulseStream::new(0, 0, 0);
        assert_eq!(add_dark_counts(2, &quiet, &mut rng), 2);

        let model = DetectorModel {
            dark_mean: 0.02,
            ..DetectorModel::default()
        };
        let n = 1_000_000u64;
        let (mut zeros, mut total) = (0u64, 0u64);
        for j in 0..n {
            let k = add_dark_counts(0, &model, &mut PulseStream::auxiliary(5, j));
            total += k;
            zeros += (k == 0) as u64;
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 0.02).abs() < 0.0015, "{mean}");
        let p0 = (-0.02f64).exp();
        let sd = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((zeros as f64 / n as f64 - p0).abs() < 5.0 * sd);
    }

    #[test]
    fn classify_examples() {
        let t = ThresholdSet::midpoints(1.0, 7).unwrap();
        assert_eq!(t.classify(2.2), 2);
        assert_eq!(classify(-5.0, &t), 0);
        assert_eq!(t.classify(12.0), 7);
        assert_eq!(t.classify(0.5), 1);
        assert_eq!(t.classify(0.499_999), 0);
    }

    #[test]
    fn threshold_set_validation() {
        assert!(ThresholdSet::new(vec![]).is_err());
        assert!(ThresholdSet::new(vec![0.0, 1.0]).is_err());
        assert!(ThresholdSet::new(vec![1.0, 1.0]).is_err());
        assert!(ThresholdSet::new(vec![1.0, f64::NAN]).is_err());
        assert!(ThresholdSet::new(vec![0.5, 1.5]).is_ok());
    }

    #[test]
    fn symmetric_peaks_split_at_midpoint() {
        let left = Peak {
            weight: 1.0,
            mean: 2.0,
            std: 0.2,
        };
        let right = Peak {
            weight: 1.0,
            mean: 3.0,
            std: 0.2,
        };
        let x = mixture_minimum(&left, &right, 1e-9).unwrap();
        assert!((x - 2.5).abs() < 1e-6, "{x}");
    }

    #[test]
    fn zero_width_peaks_split_at_midpoint() {
        let t = calibrate_thresholds(&DetectorModel::ideal(), 5, ReferenceWeights::Uniform).unwrap();
        assert_eq!(t.levels(), ThresholdSet::midpoints(1.0, 5).unwrap().levels());
    }

    #[test]
    fn wider_upper_peak_pushes_level_down() {
        let model = DetectorModel {
            sigma1: 0.15,
            ..DetectorModel::default()
        };
        let mut left = model.peak(3);
        let mut right = model.peak(4);
        left.weight = 1.0;
        right.weight = 1.0;
        let x = mixture_minimum(&left, &right, 1e-9).unwrap();
        // scipy bounded minimization of the same log-mixture: 3.496489676
        assert!(x < 3.5);
        assert!((x - 3.496_489_676).abs() < 1e-6, "{x}");
    }

    #[test]
    fn calibrated_levels_match_reference_minimizer() {
        // scipy.optimize.minimize_scalar on the Poisson(3.95)-weighted mixture
        let expected = [0.3463, 1.4147, 2.4587, 3.4979, 4.5484, 5.6218, 6.7598];
        for (l, e) in default_thresholds().levels().iter().zip(expected) {
            assert!((l - e).abs() < 1e-3, "{l} vs {e}");
        }
    }

    #[test]
    fn merged_peaks_fail_calibration() {
        let blurry = DetectorModel {
            sigma1: 0.45,
            ..DetectorModel::default()
        };
        let err = calibrate_thresholds(&blurry, 12, ReferenceWeights::Poisson(3.95)).unwrap_err();
        assert!(matches!(err, Error::Calibration { .. }), "{err}");
    }

    #[test]
    fn histogram_basics() {
        let sweep = LevelSweep::covering(-0.5, 8.5, 0.05).unwrap();
        let empty = scan_histogram(std::iter::empty(), sweep);
        assert_eq!(empty.total(), 0);
        assert_eq!(empty.counts().len(), 180);
        assert!(LevelSweep::covering(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_photon_histogram_mode_at_gain() {
        let model = DetectorModel::default();
        let sweep = LevelSweep::covering(-0.5, 3.0, 0.02).unwrap();
        let heights = (0..1_000_000u64).map(|j| sample_pulse_height(1, &model, &mut PulseStream::auxiliary(3, j)));
        let h = scan_histogram(heights, sweep);
        let mode = h.mode().unwrap();
        assert!(
            (h.bin_centre(mode) - model.gain).abs() <= sweep.bin_width,
            "{}",
            h.bin_centre(mode)
        );
    }

    #[test]
    fn coherent_histogram_is_multi_peaked() {
        let model = DetectorModel::default();
        let heights = simulate_heights(&model, 3.95, 1_000_000, 11);
        let h = scan_histogram(heights, LevelSweep::covering(-0.5, 10.0, 0.05).unwrap());
        let peaks = h.local_maxima(5, 1000);
        assert!(peaks.len() >= 4, "{peaks:?}");
        // The resolved peaks sit near integer multiples of the gain.
        for &i in peaks.iter().take(4) {
            let x = h.bin_centre(i);
            assert!((x - x.round()).abs() < 0.2, "peak at {x}");
        }
    }

    #[test]
    fn confusion_rows_sum_to_one() {
        let cm = confusion_matrix(&DetectorModel::default(), &default_thresholds());
        assert_eq!(cm.size(), 8);
        for row in cm.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_confusion_is_identity() {
        let t = ThresholdSet::midpoints(1.0, 7).unwrap();
        let cm = confusion_matrix(&DetectorModel::ideal(), &t);
        for k in 0..8 {
            for j in 0..8 {
                assert_eq!(cm.get(k, j), if k == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn diagonal_falls_with_photon_number() {
        let model = DetectorModel::default();
        let t = ThresholdSet::midpoints(model.gain, 7).unwrap();
        let cm = confusion_matrix(&model, &t);
        // midpoint half-width 0.5 is 0.5/(√k·0.15) standard deviations
        let oracle = |k: f64| statrs::function::erf::erf(0.5 / (k.sqrt() * 0.15) / std::f64::consts::SQRT_2);
        assert!((cm.get(1, 1) - oracle(1.0)).abs() < 1e-12);
        assert!((cm.get(4, 4) - oracle(4.0)).abs() < 1e-12);
        assert!(cm.get(1, 1) > cm.get(4, 4));
        for k in 1..7 {
            assert!(cm.get(k, k) >= cm.get(k + 1, k + 1) || k + 1 == 7);
        }
    }

    #[test]
    fn confusion_matches_monte_carlo() {
        let model = DetectorModel::default();
        let t = default_thresholds();
        let cm = confusion_matrix(&model, &t);
        let n = 100_000u64;
        for k in 0..=7usize {
            let mut tally = [0u64; 8];
            for j in 0..n {
                let h = sample_pulse_height(k as u64, &model, &mut PulseStream::new(42, k as u64, j));
                tally[t.classify(h)] += 1;
            }
            for (jcls, &c) in tally.iter().enumerate() {
                let p = cm.get(k, jcls);
                let sd = (p * (1.0 - p) / n as f64).sqrt();
                let phat = c as f64 / n as f64;
                assert!(
                    (phat - p).abs() <= 4.0 * sd + 1.0 / n as f64,
                    "k={k} j={jcls}: {phat} vs {p}"
                );
            }
        }
    }

    #[test]
    fn noiseless_chain_is_identity() {
        let model = DetectorModel::ideal();
        let t = calibrate_thresholds(&model, 7, ReferenceWeights::Poisson(3.95)).unwrap();
        let mut rng = PulseStream::new(1, 1, 1);
        for k in 0..=7u64 {
            let with_dark = add_dark_counts(k, &model, &mut rng);
            let h = sample_pulse_height(with_dark, &model, &mut rng);
            assert_eq!(t.classify(h), k as usize);
        }
    }

    #[test]
    fn model_validation_lists_every_violation() {
        let bad = DetectorModel {
            gain: -1.0,
            sigma0: -0.1,
            dark_mean: -1.0,
            ..DetectorModel::default()
        };
        match bad.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 4, "{v:?}"),
            other => panic!("{other:?}"),
        }
        let wide = DetectorModel {
            sigma1: 0.6,
            ..DetectorModel::default()
        };
        assert!(wide.validate().is_err());
    }

    proptest! {
        #[test]
        fn classify_is_monotone(a in -2.0f64..12.0, b in -2.0f64..12.0) {
            let t = default_thresholds();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(t.classify(lo) <= t.classify(hi));
        }

        #[test]
        fn calibrated_levels_are_interior(sigma1 in 0.02f64..0.15, mean in 3.5f64..8.0) {
            let model = DetectorModel { sigma1, ..DetectorModel::default() };
            let t = calibrate_thresholds(&model, 7, ReferenceWeights::Poisson(mean)).unwrap();
            for (i, &l) in t.levels().iter().enumerate() {
                prop_assert!(l > i as f64 * model.gain && l < (i + 1) as f64 * model.gain);
            }
            prop_assert!(t.levels().windows(2).all(|w| w[1] > w[0]));
        }
    }
}
