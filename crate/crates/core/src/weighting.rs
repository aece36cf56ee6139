//! Data-adaptive repetition weights.
//!
//! A weight may depend on the pooled (calibration + test) scores of its own
//! repetition only through their unordered multiset; both statistics here are
//! symmetric functions of the pool, which is what keeps the weighted e-value
//! aggregation valid.

use serde::{Deserialize, Serialize};

use crate::conformal::WeightVector;
use crate::error::{Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.1;

/// Cap applied when the pooled scores have zero within-group variance but a
/// nonzero gap between group means, where the t-statistic diverges.
pub const TTEST_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightingKind {
    #[default]
    Uniform,
    TTest,
    TrimmedMean,
}

/// Weighting choice plus the tail fraction used by the adaptive kinds.
/// `gamma = None` defers to the harness default (the synthetic outlier
/// proportion when known, otherwise [`DEFAULT_GAMMA`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct WeightingScheme {
    pub kind: WeightingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter {
            name: "gamma",
            value: format!("{gamma}"),
            reason: "must lie in (0, 1)",
        });
    }
    Ok(())
}

fn check_scores(pooled: &[f64]) -> Result<()> {
    for (index, &value) in pooled.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { context: "pooled scores", index, value });
        }
    }
    Ok(())
}

/// Equal weights 1/K.
pub fn uniform_weight(k: usize) -> Result<WeightVector> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "K",
            value: "0".into(),
            reason: "need at least one repetition",
        });
    }
    Ok(WeightVector { weights: vec![1.0 / k as f64; k] })
}

/// Absolute two-sample t-statistic between the top `ceil(gamma * N)` pooled
/// scores and the rest. Large values signal a pool whose upper tail separates
/// cleanly, i.e. a repetition worth trusting.
pub fn ttest_weight(pooled: &[f64], gamma: f64) -> Result<f64> {
    check_scores(pooled)?;
    check_gamma(gamma)?;
    let n = pooled.len();
    if n < 3 {
        return Err(Error::InsufficientTraining {
            needed: 3,
            got: n,
            what: "pooled scores for the t-statistic",
        });
    }
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n2 = (gamma * n as f64).ceil() as usize;
    let n1 = n - n2;
    if n1 == 0 || n2 == 0 {
        return Err(Error::DegenerateSplit { n1, n2 });
    }
    let (low, high) = sorted.split_at(n1);
    let mu1 = low.iter().sum::<f64>() / n1 as f64;
    let mu2 = high.iter().sum::<f64>() / n2 as f64;
    let ss1: f64 = low.iter().map(|&x| (x - mu1).powi(2)).sum();
    let ss2: f64 = high.iter().map(|&x| (x - mu2).powi(2)).sum();
    let z = (ss1 + ss2) / (n1 + n2 - 2) as f64;
    if z == 0.0 {
        return Ok(if mu1 == mu2 { 0.0 } else { TTEST_CAP });
    }
    let t = (mu1 - mu2) / (z * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    Ok(t.abs())
}

/// `exp(-sum of the N - ceil(gamma * N) smallest pooled scores)`. A pool whose
/// bulk sits low (typical of a repetition that ranks outliers high and the
/// rest near zero) gets a large weight.
pub fn trimmed_mean_weight(pooled: &[f64], gamma: f64) -> Result<f64> {
    check_scores(pooled)?;
    check_gamma(gamma)?;
    let n = pooled.len();
    let trimmed = n.saturating_sub((gamma * n as f64).ceil() as usize);
    if trimmed == 0 {
        return Err(Error::InsufficientTraining {
            needed: 1,
            got: 0,
            what: "scores left after trimming",
        });
    }
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sum: f64 = sorted[..trimmed].iter().sum();
    Ok((-sum).exp())
}

/// Scales raw weights to sum to 1. An all-zero vector falls back to uniform
/// weights so an analysis never dies on a degenerate statistic.
pub fn normalize(raw: &[f64]) -> Result<WeightVector> {
    if raw.is_empty() {
        return Err(Error::InvalidParameter {
            name: "raw",
            value: "[]".into(),
            reason: "need at least one weight",
        });
    }
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { context: "raw weights", index, value });
        }
        if value < 0.0 {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return uniform_weight(raw.len());
    }
    Ok(WeightVector { weights: raw.iter().map(|&w| w / total).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: standard pooled two-sample t-statistic computed from
    /// sample variances, not from the accumulation used by the implementation.
    fn pooled_t_oracle(values: &[f64], gamma: f64) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let n2 = (gamma * n as f64).ceil() as usize;
        let n1 = n - n2;
        let (a, b) = sorted.split_at(n1);
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let var = |xs: &[f64], m: f64| {
            if xs.len() < 2 {
                return 0.0;
            }
            xs.iter().map(|&x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        };
        let (m1, m2) = (mean(a), mean(b));
        let sp2 = ((n1 - 1) as f64 * var(a, m1) + (n2 - 1) as f64 * var(b, m2))
            / (n1 + n2 - 2) as f64;
        ((m1 - m2) / (sp2 * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt()).abs()
    }

    #[test]
    fn ttest_weight_matches_frozen_example_and_oracle() {
        let scores = [1.0, 2.0, 3.0, 4.0, 10.0, 12.0];
        let w = ttest_weight(&scores, 1.0 / 3.0).unwrap();
        // n2 = 2, mu1 = 2.5, mu2 = 11, z = 1.75 => |t| = 8.5/sqrt(1.3125).
        assert!((w - 7.419408268023742).abs() < 1e-12);
        assert!((w - pooled_t_oracle(&scores, 1.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn ttest_weight_agrees_with_oracle_on_random_pools() {
        use rand::Rng;
        let mut rng = crate::seeding::stream(11, "weight-test", &[]);
        for trial in 0..200 {
            let n = rng.random_range(3..40);
            let scores: Vec<f64> =
                (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let gamma = rng.random_range(0.05..0.8);
            let n2 = (gamma * n as f64).ceil() as usize;
            if n2 == 0 || n2 >= n {
                continue;
            }
            let got = ttest_weight(&scores, gamma).unwrap();
            let want = pooled_t_oracle(&scores, gamma);
            assert!(
                (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                "trial {trial}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn ttest_weight_is_permutation_invariant() {
        let scores = [0.3, -1.2, 4.0, 2.2, 0.3, 9.1];
        let shuffled = [9.1, 0.3, 2.2, -1.2, 4.0, 0.3];
        let a = ttest_weight(&scores, 0.25).unwrap();
        let b = ttest_weight(&shuffled, 0.25).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn ttest_weight_caps_zero_variance_gap() {
        let w = ttest_weight(&[1.0, 1.0, 2.0, 2.0], 0.5).unwrap();
        assert_eq!(w, TTEST_CAP);
        let z = ttest_weight(&[3.0, 3.0, 3.0, 3.0], 0.5).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn ttest_weight_needs_three_scores() {
        assert!(ttest_weight(&[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn trimmed_weight_exponentiates_the_kept_sum() {
        // N=4, gamma=0.5: keep the 2 smallest, sum = 3, weight = exp(-3).
        let w = trimmed_mean_weight(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert!((w - 0.049787068367863944).abs() < 1e-15);
    }

    #[test]
    fn trimmed_weight_is_permutation_invariant() {
        let a = trimmed_mean_weight(&[4.0, 1.0, 3.0, 2.0], 0.5).unwrap();
        let b = trimmed_mean_weight(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn trimmed_weight_rejects_full_trim() {
        assert!(trimmed_mean_weight(&[1.0], 0.9).is_err());
    }

    #[test]
    fn normalize_scales_to_unit_sum() {
        let w = normalize(&[1.0, 3.0]).unwrap();
        assert_eq!(w.weights, vec![0.25, 0.75]);
    }

    #[test]
    fn normalize_falls_back_to_uniform_on_zero_sum() {
        let w = normalize(&[0.0, 0.0, 0.0]).unwrap();
        for &x in &w.weights {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_rejects_negative_and_non_finite() {
        assert!(matches!(
            normalize(&[0.5, -0.1]),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        assert!(normalize(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn uniform_weight_requires_positive_k() {
        assert!(uniform_weight(0).is_err());
        assert_eq!(uniform_weight(4).unwrap().weights, vec![0.25; 4]);
    }

    #[test]
    fn gamma_outside_unit_interval_is_rejected() {
        assert!(ttest_weight(&[1.0, 2.0, 3.0], 0.0).is_err());
        assert!(ttest_weight(&[1.0, 2.0, 3.0], 1.0).is_err());
        assert!(trimmed_mean_weight(&[1.0, 2.0, 3.0], -0.2).is_err());
    }
}
