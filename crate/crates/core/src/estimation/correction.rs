use nalgebra::{DMatrix, DVector};

use crate::detector::ConfusionMatrix;
use crate::error::{Error, Result};

/// Systems whose condition number exceeds this are refused.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedCounts {
    pub values: Vec<f64>,
    /// Set when negative components were clipped to zero before renormalizing.
    pub clipped: bool,
}

/// Undoes detector misclassification: solves `observedᵀ = truthᵀ · p` for
/// `truth`.
///
/// Negative components of the solution are clipped to zero and the result is
/// rescaled to the observed total, which is what an unclipped solution sums to
/// anyway because the rows of `p` sum to one.
pub fn correct_counts(observed: &[f64], cm: &ConfusionMatrix) -> Result<CorrectedCounts> {
    let n = cm.size();
    if observed.len() != n {
        return Err(Error::domain(format!(
            "observed vector has {} entries, confusion matrix is {n}×{n}",
            observed.len()
        )));
    }
    let p = DMatrix::from_fn(n, n, |i, j| cm.get(i, j));
    let pt = p.transpose();
    let sv = pt.clone().singular_values();
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION_NUMBER) {
        return Err(Error::IllConditioned(cond));
    }
    let rhs = DVector::from_column_slice(observed);
    let solution = pt.lu().solve(&rhs).ok_or(Error::IllConditioned(cond))?;

    let total: f64 = observed.iter().sum();
    let clipped = solution.iter().any(|&x| x < 0.0);
    let mut values: Vec<f64> = solution.iter().map(|&x| x.max(0.0)).collect();
    if clipped {
        let s: f64 = values.iter().sum();
        if s > 0.0 {
            values.iter_mut().for_each(|v| *v *= total / s);
        }
    }
    Ok(CorrectedCounts { values, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{calibrate_thresholds, confusion_matrix, DetectorModel, ReferenceWeights};
    use crate::quantum::photon_distribution;

    fn identity(n: usize) -> ConfusionMatrix {
        ConfusionMatrix::from_rows(
            (0..n)
                .map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect())
                .collect(),
        )
        .unwrap()
    }

    fn default_cm() -> ConfusionMatrix {
        let model = DetectorModel::default();
        let t = calibrate_thresholds(&model, 7, ReferenceWeights::Poisson(3.95)).unwrap();
        confusion_matrix(&model, &t)
    }

    #[test]
    fn identity_leaves_input_alone() {
        let obs = [0.1, 0.2, 0.3, 0.4];
        let out = correct_counts(&obs, &identity(4)).unwrap();
        assert_eq!(out.values, obs.to_vec());
        assert!(!out.clipped);
    }

    #[test]
    fn inverts_forward_mixing() {
        let cm = default_cm();
        let truth = photon_distribution(2.5, 7).unwrap().probs().to_vec();
        let observed = cm.forward(&truth);
        let out = correct_counts(&observed, &cm).unwrap();
        for (a, b) in out.values.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn clips_and_flags_negative_components() {
        let cm = default_cm();
        let truth = [0.5, 0.3, 0.15, 0.05, 0.0, 0.0, 0.0, 0.0];
        let mut observed = cm.forward(&truth);
        // remove slightly more four-photon records than the mixing produced
        observed[4] -= 0.004;
        observed[3] += 0.004;
        let out = correct_counts(&observed, &cm).unwrap();
        assert!(out.clipped);
        assert!(out.values.iter().all(|&v| v >= 0.0));
        let total: f64 = observed.iter().sum();
        assert!((out.values.iter().sum::<f64>() - total).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_refused() {
        let rows = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let cm = ConfusionMatrix::from_rows(rows).unwrap();
        assert!(matches!(
            correct_counts(&[0.5, 0.5], &cm),
            Err(Error::IllConditioned(_))
        ));
        assert!(correct_counts(&[1.0], &identity(2)).is_err());
    }
}
