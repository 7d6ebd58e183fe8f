//! Shot-by-shot Monte Carlo of an interferometer phase scan.
//!
//! Every pulse at phase `φ_i` goes through: photon number
//! `k ~ Poisson(n_max sin²(φ_i/2))`, dark events, avalanche pulse height,
//! comparator classification. Pulse `(i, j)` draws only from
//! [`PulseStream::new(master_seed, i, j)`](PulseStream::new), and tallies are
//! merged by summation, so results are independent of the worker count.

use std::f64::consts::PI;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::detector::{add_dark_counts, sample_pulse_height, DetectorModel, ThresholdSet};
use crate::error::{Error, Result};
use crate::quantum::{detected_mean, expected_rate};
use crate::rng::{sample_poisson, PulseStream};

/// Repetition rate of the pulsed source, Hz.
pub const DEFAULT_REP_RATE: f64 = 40_000.0;
pub const DEFAULT_PHASE_POINTS: usize = 100;

/// Pulses handled per parallel work item within one phase point.
const PULSE_BLOCK: u64 = 8192;

/// `points` phases `2πi/points`, covering one fringe period `[0, 2π)`.
pub fn periodic_phase_grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| 2.0 * PI * i as f64 / points as f64).collect()
}

/// `points` equally spaced phases from `start` to `stop` inclusive.
pub fn linear_phase_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points)
            .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// Mean detected photon number at the bright fringe.
    pub n_max: f64,
    pub rep_rate: f64,
    pub pulses_per_point: u64,
    pub phases: Vec<f64>,
    pub detector: DetectorModel,
    pub thresholds: ThresholdSet,
    pub master_seed: u64,
}

impl ScanConfig {
    /// Checks every field and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.n_max.is_finite() && self.n_max >= 0.0) {
            bad.push(format!("n_max must be finite and non-negative, got {}", self.n_max));
        }
        if !(self.rep_rate.is_finite() && self.rep_rate > 0.0) {
            bad.push(format!("rep_rate must be positive, got {}", self.rep_rate));
        }
        if self.pulses_per_point == 0 {
            bad.push("pulses_per_point must be at least 1".to_string());
        }
        if self.phases.is_empty() {
            bad.push("phase grid is empty".to_string());
        } else if self.phases.iter().any(|p| !p.is_finite()) {
            bad.push("phase grid contains non-finite values".to_string());
        } else if self.phases.len() > 1 {
            let increasing = self.phases.windows(2).all(|w| w[1] > w[0]);
            let decreasing = self.phases.windows(2).all(|w| w[1] < w[0]);
            if !(increasing || decreasing) {
                bad.push("phase grid must be strictly monotone".to_string());
            }
        }
        if let Err(Error::Config(v)) = self.detector.validate() {
            bad.extend(v.into_iter().map(|m| format!("detector: {m}")));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    /// Advisory notes that do not block a run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let photon_rate = self.n_max * self.rep_rate;
        if photon_rate > self.detector.saturation_rate {
            out.push(format!(
                "peak photon rate {:.3e} Hz exceeds the detector saturation rate {:.3e} Hz",
                photon_rate, self.detector.saturation_rate
            ));
        }
        out
    }

    pub fn k_max(&self) -> usize {
        self.thresholds.k_max()
    }

    /// SHA-256 over the bit patterns of every field, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"fockscan-scan-config-v1");
        h.update(self.n_max.to_bits().to_le_bytes());
        h.update(self.rep_rate.to_bits().to_le_bytes());
        h.update(self.pulses_per_point.to_le_bytes());
        h.update((self.phases.len() as u64).to_le_bytes());
        for p in &self.phases {
            h.update(p.to_bits().to_le_bytes());
        }
        let d = &self.detector;
        for x in [d.gain, d.sigma1, d.sigma0, d.dark_mean, d.saturation_rate] {
            h.update(x.to_bits().to_le_bytes());
        }
        h.update((self.thresholds.k_max() as u64).to_le_bytes());
        for l in self.thresholds.levels() {
            h.update(l.to_bits().to_le_bytes());
        }
        h.update(self.master_seed.to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// Classified tallies of a phase scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub phases: Vec<f64>,
    /// `counts[i][k]`: pulses at phase `i` recorded as `k` photons.
    pub counts: Vec<Vec<u64>>,
    pub pulses_per_point: u64,
    pub rep_rate: f64,
    pub config_fingerprint: String,
}

impl ScanResult {
    /// Builds a result from external tallies, checking that every row holds
    /// exactly `pulses_per_point` pulses.
    pub fn from_counts(
        phases: Vec<f64>,
        counts: Vec<Vec<u64>>,
        pulses_per_point: u64,
        rep_rate: f64,
        config_fingerprint: String,
    ) -> Result<Self> {
        if phases.len() != counts.len() {
            return Err(Error::domain("one count row is required per phase"));
        }
        if pulses_per_point == 0 {
            return Err(Error::domain("pulses_per_point must be at least 1"));
        }
        let width = counts.first().map_or(0, Vec::len);
        for (i, row) in counts.iter().enumerate() {
            if row.len() != width || width == 0 {
                return Err(Error::domain(format!(
                    "row {i} has {} classes, expected {width}",
                    row.len()
                )));
            }
            let total: u64 = row.iter().sum();
            if total != pulses_per_point {
                return Err(Error::domain(format!(
                    "row {i} tallies {total} pulses, expected {pulses_per_point}"
                )));
            }
        }
        if !(rep_rate > 0.0) {
            return Err(Error::domain("rep_rate must be positive"));
        }
        Ok(Self {
            phases,
            counts,
            pulses_per_point,
            rep_rate,
            config_fingerprint,
        })
    }

    /// Highest recorded photon number `K`.
    pub fn k_max(&self) -> usize {
        self.counts.first().map_or(0, |r| r.len() - 1)
    }

    /// Empirical `p̂_k` at each phase.
    pub fn probabilities(&self, k: usize) -> Vec<f64> {
        let n = self.pulses_per_point as f64;
        self.counts
            .iter()
            .map(|row| row.get(k).map_or(0.0, |&c| c as f64 / n))
            .collect()
    }

    /// Count rate estimates `R̂_k = p̂_k · R_rep`.
    pub fn rates(&self, k: usize) -> Vec<f64> {
        self.probabilities(k).into_iter().map(|p| p * self.rep_rate).collect()
    }
}

/// Runs the scan on the global rayon pool.
pub fn run_scan(config: &ScanConfig) -> Result<ScanResult> {
    config.validate()?;
    Ok(scan_inner(config))
}

/// Runs the scan on a dedicated pool of `workers` threads.
pub fn run_scan_with_workers(config: &ScanConfig, workers: usize) -> Result<ScanResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| scan_inner(config)))
}

fn scan_inner(config: &ScanConfig) -> ScanResult {
    let classes = config.k_max() + 1;
    let n = config.pulses_per_point;
    let blocks = n.div_ceil(PULSE_BLOCK);
    let counts = config
        .phases
        .par_iter()
        .enumerate()
        .map(|(i, &phi)| {
            let mean = detected_mean(config.n_max, phi);
            (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let mut tally = vec![0u64; classes];
                    let end = ((b + 1) * PULSE_BLOCK).min(n);
                    for j in b * PULSE_BLOCK..end {
                        let mut rng = PulseStream::new(config.master_seed, i as u64, j);
                        let k = record_pulse(mean, &config.detector, &config.thresholds, &mut rng);
                        tally[k] += 1;
                    }
                    tally
                })
                .reduce(
                    || vec![0u64; classes],
                    |mut a, b| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        a
                    },
                )
        })
        .collect();
    ScanResult {
        phases: config.phases.clone(),
        counts,
        pulses_per_point: n,
        rep_rate: config.rep_rate,
        config_fingerprint: config.fingerprint(),
    }
}

/// One detection gate: photons, dark events, pulse height, recorded class.
#[inline]
pub fn record_pulse(mean: f64, detector: &DetectorModel, thresholds: &ThresholdSet, rng: &mut PulseStream) -> usize {
    let photons = sample_poisson(mean, rng);
    let k = add_dark_counts(photons, detector, rng);
    let h = sample_pulse_height(k, detector, rng);
    thresholds.classify(h)
}

/// `rates[i][k]` from the closed-form count rate, `k = 0..=k_max`.
pub fn analytic_scan(n_max: f64, phases: &[f64], rep_rate: f64, k_max: usize) -> Vec<Vec<f64>> {
    phases
        .iter()
        .map(|&phi| {
            (0..=k_max as u64)
                .map(|k| expected_rate(k, n_max, phi, rep_rate))
                .collect()
        })
        .collect()
}

/// Weighted sum `Σ_k k · counts[i][k] / N` at each phase.
pub fn mean_from_counts(result: &ScanResult) -> Vec<f64> {
    let n = result.pulses_per_point as f64;
    result
        .counts
        .iter()
        .map(|row| row.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / n)
        .collect()
}

/// Circular moving average with a window of `2·half_width + 1` points.
pub fn smooth_periodic(values: &[f64], half_width: usize) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let w = 2 * half_width + 1;
    (0..n)
        .map(|i| {
            (0..w)
                .map(|d| values[(i as isize + d as isize - half_width as isize).rem_euclid(n as isize) as usize])
                .sum::<f64>()
                / w as f64
        })
        .collect()
}

/// Whether a one-period curve sampled on [`periodic_phase_grid`] dips at the
/// bright fringe `φ = π`: the value there must sit more than `margin` below
/// the highest value on the half period `(0, π)`. Requires an even number of
/// points so that `π` is on the grid.
pub fn has_bright_fringe_dip(values: &[f64], margin: f64) -> Result<bool> {
    let n = values.len();
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::domain("need an even number (≥ 4) of points on a periodic grid"));
    }
    let centre = values[n / 2];
    let flank = values[1..n / 2].iter().copied().fold(f64::MIN, f64::max);
    Ok(centre < flank - margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::calibrate_thresholds;
    use crate::detector::ReferenceWeights;
    use crate::quantum::photon_distribution;

    fn ideal_config(n_max: f64, k_max: usize, pulses: u64, phases: Vec<f64>) -> ScanConfig {
        ScanConfig {
            n_max,
            rep_rate: DEFAULT_REP_RATE,
            pulses_per_point: pulses,
            phases,
            detector: DetectorModel::ideal(),
            thresholds: ThresholdSet::midpoints(1.0, k_max).unwrap(),
            master_seed: 2024,
        }
    }

    #[test]
    fn grids() {
        let g = periodic_phase_grid(4);
        assert_eq!(g, vec![0.0, PI / 2.0, PI, 1.5 * PI]);
        let l = linear_phase_grid(0.0, 2.0 * PI, 3);
        assert_eq!(l, vec![0.0, PI, 2.0 * PI]);
    }

    #[test]
    fn no_light_no_dark_is_all_vacuum() {
        let cfg = ScanConfig {
            detector: DetectorModel {
                dark_mean: 0.0,
                sigma0: 0.01,
                ..DetectorModel::default()
            },
            thresholds: ThresholdSet::midpoints(1.0, 7).unwrap(),
            ..ideal_config(0.0, 7, 1000, periodic_phase_grid(20))
        };
        let r = run_scan(&cfg).unwrap();
        assert!(r.counts.iter().all(|row| row[0] == 1000));
        assert_eq!(mean_from_counts(&r), vec![0.0; 20]);
    }

    #[test]
    fn conservation_holds_with_default_detector() {
        let detector = DetectorModel::default();
        let cfg = ScanConfig {
            detector,
            thresholds: calibrate_thresholds(&detector, 7, ReferenceWeights::Poisson(3.95)).unwrap(),
            ..ideal_config(3.95, 7, 5000, periodic_phase_grid(16))
        };
        let r = run_scan(&cfg).unwrap();
        for row in &r.counts {
            assert_eq!(row.iter().sum::<u64>(), 5000);
        }
    }

    #[test]
    fn single_photon_rate_at_bright_fringe() {
        let cfg = ideal_config(3.95, 20, 100_000, vec![PI]);
        let r = run_scan(&cfg).unwrap();
        let p = (-3.95f64).exp() * 3.95;
        let sd = (p * (1.0 - p) / 1e5).sqrt();
        assert!((r.probabilities(1)[0] - p).abs() <= 4.0 * sd);
    }

    #[test]
    fn overflow_class_absorbs_the_tail() {
        let cfg = ideal_config(3.95, 7, 100_000, vec![PI]);
        let r = run_scan(&cfg).unwrap();
        let d = photon_distribution(3.95, 7).unwrap();
        let expected = d.probs()[7] + d.tail_mass();
        let sd = (expected * (1.0 - expected) / 1e5).sqrt();
        assert!((r.probabilities(7)[0] - expected).abs() <= 4.0 * sd);
    }

    #[test]
    fn weighted_mean_tracks_intensity() {
        let n = 20_000u64;
        let cfg = ideal_config(3.95, 25, n, periodic_phase_grid(24));
        let r = run_scan(&cfg).unwrap();
        for (m, phi) in mean_from_counts(&r).iter().zip(&r.phases) {
            let target = detected_mean(3.95, *phi);
            assert!((m - target).abs() <= 4.0 * (3.95 / n as f64).sqrt(), "phi={phi}");
        }
    }

    #[test]
    fn truncation_biases_weighted_mean_low() {
        let n = 100_000u64;
        let r = run_scan(&ideal_config(3.95, 7, n, vec![PI])).unwrap();
        let m = mean_from_counts(&r)[0];
        // Σ_{k≥8} (k-7) p_k at mean 3.95, mpmath
        let bias = 0.079_356_059_988_651_29;
        let sd = (3.95 / n as f64).sqrt();
        assert!(((3.95 - m) - bias).abs() <= 4.0 * sd, "{m}");
        assert!(m < 3.95);
    }

    #[test]
    fn worker_count_does_not_change_tallies() {
        let detector = DetectorModel::default();
        let cfg = ScanConfig {
            detector,
            thresholds: calibrate_thresholds(&detector, 7, ReferenceWeights::Poisson(3.95)).unwrap(),
            ..ideal_config(3.95, 7, 20_000, periodic_phase_grid(10))
        };
        let a = run_scan_with_workers(&cfg, 1).unwrap();
        let b = run_scan_with_workers(&cfg, 8).unwrap();
        assert_eq!(a, b);
        let other_seed = ScanConfig {
            master_seed: 2025,
            ..cfg.clone()
        };
        assert_ne!(run_scan(&other_seed).unwrap().counts, a.counts);
        assert_ne!(other_seed.fingerprint(), cfg.fingerprint());
    }

    #[test]
    fn validation_reports_every_field() {
        let mut cfg = ideal_config(-1.0, 7, 0, vec![]);
        cfg.rep_rate = 0.0;
        match cfg.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 4, "{v:?}"),
            other => panic!("{other:?}"),
        }
        let mut cfg = ideal_config(1.0, 7, 10, vec![0.0, 1.0, 0.5]);
        assert!(run_scan(&cfg).is_err());
        cfg.phases = vec![1.0, 0.5, 0.0];
        assert!(run_scan(&cfg).is_ok());
    }

    #[test]
    fn saturation_is_advisory() {
        let mut cfg = ideal_config(3.95, 7, 10, vec![0.0]);
        assert!(cfg.warnings().is_empty());
        cfg.rep_rate = 5.0e6;
        assert_eq!(cfg.warnings().len(), 1);
        assert!(run_scan(&cfg).is_ok());
    }

    #[test]
    fn analytic_scan_matches_rate_formula() {
        let rates = analytic_scan(3.95, &[PI, 0.0], 40_000.0, 3);
        assert!((rates[0][1] - 3_042.242_880_511_134).abs() < 1e-8);
        assert_eq!(rates[1][0], 40_000.0);
        assert_eq!(rates[1][2], 0.0);
    }

    #[test]
    fn dip_detector() {
        let phases = periodic_phase_grid(100);
        let curve = |n: f64| -> Vec<f64> { phases.iter().map(|&p| expected_rate(1, n, p, 1.0)).collect() };
        assert!(!has_bright_fringe_dip(&curve(0.463), 0.0).unwrap());
        assert!(!has_bright_fringe_dip(&curve(0.99), 0.0).unwrap());
        assert!(has_bright_fringe_dip(&curve(1.99), 0.0).unwrap());
        assert!(has_bright_fringe_dip(&curve(7.18), 0.0).unwrap());
        assert!(has_bright_fringe_dip(&[1.0; 5], 0.0).is_err());
    }

    #[test]
    fn smoothing_preserves_constants_and_mean() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = smooth_periodic(&v, 2);
        assert!((s.iter().sum::<f64>() - v.iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(smooth_periodic(&[2.0; 7], 3), vec![2.0; 7]);
        assert!((s[0] - (8.0 + 9.0 + 0.0 + 1.0 + 2.0) / 5.0).abs() < 1e-12);
    }
}
