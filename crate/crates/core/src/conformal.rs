//! Conformal p-values, false discovery proportion estimates, data-adaptive
//! rejection thresholds, and the per-repetition e-values they induce.
//!
//! Scores follow the convention "higher = more anomalous". One [`ScoreSet`]
//! holds the calibration and test scores produced by a single trained model
//! (one repetition); aggregation across repetitions happens on e-values via
//! [`aggregate_evalues`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// Calibration and test scores for one repetition of an analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub cal: Vec<f64>,
    pub test: Vec<f64>,
    /// 1-based repetition index.
    pub repetition: usize,
}

impl ScoreSet {
    /// Builds a score set, rejecting non-finite scores.
    pub fn new(cal: Vec<f64>, test: Vec<f64>, repetition: usize) -> Result<Self> {
        check_finite("calibration scores", &cal)?;
        check_finite("test scores", &test)?;
        Ok(Self { cal, test, repetition })
    }

    /// Builds a score set after applying tie-breaking jitter to the pooled
    /// calibration+test scores, so all `n_cal + n_test` values are pairwise
    /// distinct and ranks are unambiguous.
    pub fn with_tie_breaking(
        cal: Vec<f64>,
        test: Vec<f64>,
        repetition: usize,
        seed: u64,
    ) -> Result<Self> {
        let n_cal = cal.len();
        let mut pooled = cal;
        pooled.extend_from_slice(&test);
        let jittered = break_ties(&pooled, seed)?;
        let test_part = jittered[n_cal..].to_vec();
        let mut cal_part = jittered;
        cal_part.truncate(n_cal);
        Ok(Self { cal: cal_part, test: test_part, repetition })
    }

    pub fn n_cal(&self) -> usize {
        self.cal.len()
    }

    pub fn n_test(&self) -> usize {
        self.test.len()
    }

    /// True when the pooled calibration+test scores are pairwise distinct.
    pub fn scores_distinct(&self) -> bool {
        let mut pooled: Vec<f64> = self.cal.iter().chain(self.test.iter()).copied().collect();
        pooled.sort_by(f64::total_cmp);
        pooled.windows(2).all(|w| w[0] < w[1])
    }
}

fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { context, index, value });
        }
    }
    Ok(())
}

/// Conformal p-values for each test score, with the calibration size they
/// were computed against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueVector {
    pub values: Vec<f64>,
    pub n_cal: usize,
}

/// One conformal p-value per test point:
/// `p_j = (1 + #{cal_i >= test_j}) / (1 + n_cal)`.
///
/// Values live on the grid `{1/(1+n_cal), ..., 1}` and are stochastically
/// larger than uniform when calibration and test points are exchangeable.
pub fn conformal_pvalues(scores: &ScoreSet) -> Result<PValueVector> {
    let n_cal = scores.n_cal();
    if n_cal == 0 {
        return Err(Error::EmptyCalibration);
    }
    let mut sorted_cal = scores.cal.clone();
    sorted_cal.sort_by(f64::total_cmp);
    let denom = (1 + n_cal) as f64;
    let values = scores
        .test
        .iter()
        .map(|&s| {
            let below = sorted_cal.partition_point(|&c| c < s);
            (1 + n_cal - below) as f64 / denom
        })
        .collect();
    Ok(PValueVector { values, n_cal })
}

/// Which false discovery proportion estimate to use when scanning thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdpVariant {
    /// `n_test/(1+n_cal) * (1 + #{cal >= t}) / #{test >= t}`; the variant whose
    /// threshold reproduces the BH filter on conformal p-values.
    PlusOne,
    /// `n_test/n_cal * #{cal >= t} / #{test >= t}`; drops the constant term so
    /// the estimate is a supermartingale along the pooled score order, which is
    /// what licenses the e-value construction.
    NoPlusOne,
}

/// Estimated false discovery proportion when rejecting at threshold `t`.
/// Returns `f64::INFINITY` when no test score clears `t`.
pub fn fdp_estimate(scores: &ScoreSet, t: f64, variant: FdpVariant) -> Result<f64> {
    if scores.n_cal() == 0 {
        return Err(Error::EmptyCalibration);
    }
    if t.is_nan() {
        return Err(Error::InvalidParameter {
            name: "t",
            value: "NaN".into(),
            reason: "threshold must be a number or the +inf sentinel",
        });
    }
    let cal_ge = scores.cal.iter().filter(|&&c| c >= t).count();
    let test_ge = scores.test.iter().filter(|&&s| s >= t).count();
    if test_ge == 0 {
        return Ok(f64::INFINITY);
    }
    let n_cal = scores.n_cal() as f64;
    let n_test = scores.n_test() as f64;
    let estimate = match variant {
        FdpVariant::PlusOne => n_test / (1.0 + n_cal) * (1.0 + cal_ge as f64) / test_ge as f64,
        FdpVariant::NoPlusOne => n_test / n_cal * cal_ge as f64 / test_ge as f64,
    };
    Ok(estimate)
}

/// Smallest pooled score `t` with `fdp_estimate(t) <= alpha_bh`, scanning the
/// candidate set `{cal scores} U {test scores}`. Returns `f64::INFINITY` when
/// no candidate qualifies; rejecting at the sentinel rejects nothing.
pub fn bh_threshold(scores: &ScoreSet, alpha_bh: f64, variant: FdpVariant) -> Result<f64> {
    if scores.n_cal() == 0 {
        return Err(Error::EmptyCalibration);
    }
    if !(alpha_bh > 0.0 && alpha_bh < 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha_bh",
            value: format!("{alpha_bh}"),
            reason: "must lie in (0, 1)",
        });
    }
    let mut sorted_cal = scores.cal.clone();
    sorted_cal.sort_by(f64::total_cmp);
    let mut sorted_test = scores.test.clone();
    sorted_test.sort_by(f64::total_cmp);

    let n_cal = sorted_cal.len() as f64;
    let n_test = sorted_test.len() as f64;

    let mut candidates: Vec<f64> = Vec::with_capacity(sorted_cal.len() + sorted_test.len());
    candidates.extend_from_slice(&sorted_cal);
    candidates.extend_from_slice(&sorted_test);
    candidates.sort_by(f64::total_cmp);

    for &t in &candidates {
        let cal_ge = sorted_cal.len() - sorted_cal.partition_point(|&c| c < t);
        let test_ge = sorted_test.len() - sorted_test.partition_point(|&s| s < t);
        if test_ge == 0 {
            continue;
        }
        let estimate = match variant {
            FdpVariant::PlusOne => {
                n_test / (1.0 + n_cal) * (1.0 + cal_ge as f64) / test_ge as f64
            }
            FdpVariant::NoPlusOne => n_test / n_cal * cal_ge as f64 / test_ge as f64,
        };
        if estimate <= alpha_bh {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// Per-test e-values induced by rejecting at `t_hat`:
/// `e_j = (1 + n_cal) * 1{test_j >= t_hat} / (1 + #{cal >= t_hat})`.
///
/// With the sentinel threshold every e-value is 0. Support is
/// `{0} U {(1+n_cal)/(1+m) : m = 0..=n_cal}`.
pub fn evalues_at_threshold(scores: &ScoreSet, t_hat: f64) -> Result<Vec<f64>> {
    if scores.n_cal() == 0 {
        return Err(Error::EmptyCalibration);
    }
    if t_hat.is_nan() {
        return Err(Error::InvalidParameter {
            name: "t_hat",
            value: "NaN".into(),
            reason: "threshold must be a number or the +inf sentinel",
        });
    }
    let n_test = scores.n_test();
    if t_hat == f64::INFINITY {
        return Ok(vec![0.0; n_test]);
    }
    let cal_ge = scores.cal.iter().filter(|&&c| c >= t_hat).count();
    let scale = (1 + scores.n_cal()) as f64 / (1 + cal_ge) as f64;
    Ok(scores
        .test
        .iter()
        .map(|&s| if s >= t_hat { scale } else { 0.0 })
        .collect())
}

/// Normalized weights over repetitions; always sums to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Weighted average of per-repetition e-value rows:
/// `e_bar_j = sum_k w_k * e_{k,j}`.
pub fn aggregate_evalues(per_rep: &[Vec<f64>], weights: &WeightVector) -> Result<Vec<f64>> {
    if per_rep.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "weight vector vs repetitions",
            expected: per_rep.len(),
            got: weights.len(),
        });
    }
    if per_rep.is_empty() {
        return Err(Error::InvalidParameter {
            name: "per_rep",
            value: "[]".into(),
            reason: "need at least one repetition",
        });
    }
    let n_test = per_rep[0].len();
    for (k, row) in per_rep.iter().enumerate() {
        if row.len() != n_test {
            return Err(Error::LengthMismatch {
                what: "e-value row",
                expected: n_test,
                got: row.len(),
            });
        }
        check_finite("e-values", row)?;
        if let Some((index, &value)) = row
            .iter()
            .enumerate()
            .find(|(_, &v)| v < 0.0)
        {
            return Err(Error::InvalidParameter {
                name: "per_rep",
                value: format!("per_rep[{k}][{index}] = {value}"),
                reason: "e-values must be nonnegative",
            });
        }
    }
    let mut aggregated = vec![0.0; n_test];
    for (row, &w) in per_rep.iter().zip(&weights.weights) {
        for (acc, &e) in aggregated.iter_mut().zip(row) {
            *acc += w * e;
        }
    }
    Ok(aggregated)
}

/// Per-repetition e-values plus their weighted aggregate for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EValueMatrix {
    /// K rows of n_test e-values.
    pub per_rep: Vec<Vec<f64>>,
    pub aggregated: Vec<f64>,
    /// Threshold level the per-rep e-values were computed at; `None` for
    /// constructions that do not scan a threshold (calibrated, soft-rank).
    pub alpha_bh: Option<f64>,
    /// Per-repetition thresholds; the +inf sentinel serializes as null.
    #[serde(with = "inf_as_null")]
    pub thresholds: Vec<f64>,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        let mapped: Vec<Option<f64>> = values
            .iter()
            .map(|&v| if v.is_finite() { Some(v) } else { None })
            .collect();
        mapped.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        let mapped = Vec::<Option<f64>>::deserialize(de)?;
        Ok(mapped
            .into_iter()
            .map(|v| v.unwrap_or(f64::INFINITY))
            .collect())
    }
}

/// Adds deterministic jitter so all scores become pairwise distinct while the
/// relative order of originally distinct values is preserved.
///
/// The jitter is uniform on `(-delta, delta)` with
/// `delta = 1e-9 * max(1, max|score|)`, shrunk below half the smallest
/// positive gap so distinct values cannot swap. The draw is keyed by `seed`
/// and is independent of everything else derived from the same seed.
pub fn break_ties(scores: &[f64], seed: u64) -> Result<Vec<f64>> {
    check_finite("scores", scores)?;
    if scores.len() < 2 {
        return Ok(scores.to_vec());
    }

    let max_abs = scores.iter().fold(0.0_f64, |acc, &s| acc.max(s.abs()));
    let mut delta = 1e-9 * max_abs.max(1.0);

    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);
    if min_gap.is_finite() {
        delta = delta.min(min_gap / 4.0);
    }

    let mut rng = seeding::stream(seed, "tie-break", &[]);
    for _ in 0..64 {
        let jittered: Vec<f64> = scores
            .iter()
            .map(|&s| s + rand::Rng::random_range(&mut rng, -delta..delta))
            .collect();
        if pairwise_distinct(&jittered) && order_preserved(scores, &jittered) {
            return Ok(jittered);
        }
        delta /= 2.0;
        if delta == 0.0 {
            break;
        }
    }
    Err(Error::Internal(
        "tie-breaking jitter failed to separate scores".into(),
    ))
}

fn pairwise_distinct(values: &[f64]) -> bool {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).all(|w| w[0] < w[1])
}

fn order_preserved(original: &[f64], jittered: &[f64]) -> bool {
    let mut idx: Vec<usize> = (0..original.len()).collect();
    idx.sort_by(|&a, &b| original[a].total_cmp(&original[b]));
    idx.windows(2).all(|w| {
        original[w[0]] == original[w[1]] || jittered[w[0]] < jittered[w[1]]
    })
}
