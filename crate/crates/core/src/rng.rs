//! Counter-based random streams and the Poisson sampler.
//!
//! A stream is a pure function of `(master_seed, phase_index, pulse_index)`:
//! the three words are folded into a 64-bit key with the SplitMix64
//! finalizer, and draw `t` of the stream is `mix(key + t·γ)`. No stream
//! carries state that depends on which worker ran it or in what order, so a
//! scan tallies to the same counts under any scheduling.
//!
//! Poisson variates use sequential-search inversion for means up to
//! [`POISSON_INVERSION_MAX_MEAN`] (one uniform per draw) and Hörmann's PTRS
//! transformed rejection above it. Gaussian variates come from
//! `rand_distr::StandardNormal` (ziggurat). Counts are bit-exact within this
//! implementation; other implementations of the same contract agree in
//! distribution only.

use rand::{Rng, RngCore};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const PHASE_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const PULSE_SALT: u64 = 0xABC9_8388_FB8F_AC03;

/// Means at or below this use inversion; above it, PTRS.
pub const POISSON_INVERSION_MAX_MEAN: f64 = 10.0;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream owned by one (phase point, pulse) pair.
#[derive(Debug, Clone)]
pub struct PulseStream {
    key: u64,
    counter: u64,
}

impl PulseStream {
    pub fn new(master_seed: u64, phase_index: u64, pulse_index: u64) -> Self {
        let mut key = mix64(master_seed.wrapping_add(GAMMA));
        key = mix64(key ^ mix64(phase_index.wrapping_add(PHASE_SALT)));
        key = mix64(key ^ mix64(pulse_index.wrapping_add(PULSE_SALT)));
        Self { key, counter: 0 }
    }

    /// Stream for auxiliary sampling that is not tied to a scan grid, e.g.
    /// histogram acquisition during calibration.
    pub fn auxiliary(master_seed: u64, index: u64) -> Self {
        Self::new(master_seed, u64::MAX, index)
    }
}

impl RngCore for PulseStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Draw from `Poisson(mean)`. A non-positive mean yields 0.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        0
    } else if mean <= POISSON_INVERSION_MAX_MEAN {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        let next = cdf + p;
        // cdf can stall just below 1 in floating point
        if next == cdf {
            break;
        }
        cdf = next;
    }
    k
}

/// Hörmann (1993), "The transformed rejection method for generating Poisson
/// random variables", algorithm PTRS.
fn poisson_ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - statrs::function::gamma::ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::poisson_pmf;

    #[test]
    fn stream_is_pure_function_of_indices() {
        let mut a = PulseStream::new(7, 3, 11);
        let mut b = PulseStream::new(7, 3, 11);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let first = PulseStream::new(7, 3, 11).next_u64();
        assert_ne!(first, PulseStream::new(7, 3, 12).next_u64());
        assert_ne!(first, PulseStream::new(7, 4, 11).next_u64());
        assert_ne!(first, PulseStream::new(8, 3, 11).next_u64());
    }

    #[test]
    fn neighbouring_streams_look_uniform() {
        // first draw of consecutive pulses, binned into 16 cells
        let n = 160_000u64;
        let mut cells = [0u64; 16];
        for j in 0..n {
            let u: f64 = PulseStream::new(1, 0, j).random();
            cells[(u * 16.0) as usize] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = cells.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 15 dof, p = 1e-4 critical value ≈ 44.3
        assert!(chi2 < 44.3, "chi2={chi2}");
    }

    fn check_poisson(mean: f64) {
        let n = 200_000u64;
        let mut hist = vec![0u64; 200];
        let mut sum = 0.0;
        for j in 0..n {
            let k = sample_poisson(mean, &mut PulseStream::new(99, 5, j));
            sum += k as f64;
            if (k as usize) < hist.len() {
                hist[k as usize] += 1;
            }
        }
        let sample_mean = sum / n as f64;
        let se = (mean / n as f64).sqrt();
        assert!((sample_mean - mean).abs() < 5.0 * se, "mean {mean}: {sample_mean}");
        for (k, &c) in hist.iter().enumerate() {
            let p = poisson_pmf(mean, k as u64);
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            let phat = c as f64 / n as f64;
            assert!((phat - p).abs() <= 5.0 * sd + 1e-5, "mean {mean} k {k}: {phat} vs {p}");
        }
    }

    #[test]
    fn inversion_matches_pmf() {
        check_poisson(0.02);
        check_poisson(3.95);
        check_poisson(10.0);
    }

    #[test]
    fn ptrs_matches_pmf() {
        check_poisson(10.5);
        check_poisson(45.0);
    }

    #[test]
    fn zero_mean_is_zero() {
        let mut s = PulseStream::new(0, 0, 0);
        assert_eq!(sample_poisson(0.0, &mut s), 0);
    }
}
