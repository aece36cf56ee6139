//! Step-up multiple testing filters: BH on p-values and its e-value analogue.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Indices of rejected test points (0-based, sorted ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionSet {
    pub indices: Vec<usize>,
    pub n_test: usize,
    pub alpha: f64,
}

impl RejectionSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_test];
        for &j in &self.indices {
            mask[j] = true;
        }
        mask
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: format!("{alpha}"),
            reason: "must lie in (0, 1)",
        });
    }
    Ok(())
}

/// Benjamini-Hochberg step-up on p-values: with `p_(1) <= ... <= p_(N)`,
/// find the largest `i` with `p_(i) <= alpha * i / N` and reject every
/// hypothesis with `p_j <= p_(i)`.
pub fn bh_filter(pvalues: &[f64], alpha: f64) -> Result<RejectionSet> {
    check_alpha(alpha)?;
    let n = pvalues.len();
    for (index, &p) in pvalues.iter().enumerate() {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidParameter {
                name: "pvalues",
                value: format!("pvalues[{index}] = {p}"),
                reason: "p-values must lie in [0, 1]",
            });
        }
    }
    if n == 0 {
        return Ok(RejectionSet { indices: vec![], n_test: 0, alpha });
    }
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cutoff = None;
    for (i, &p) in sorted.iter().enumerate().rev() {
        if p <= alpha * (i + 1) as f64 / n as f64 {
            cutoff = Some(p);
            break;
        }
    }
    let indices = match cutoff {
        Some(c) => (0..n).filter(|&j| pvalues[j] <= c).collect(),
        None => vec![],
    };
    Ok(RejectionSet { indices, n_test: n, alpha })
}

/// e-value analogue of BH: with `e_(1) >= ... >= e_(N)`, find the largest `i`
/// with `e_(i) >= N / (alpha * i)` and reject every hypothesis with
/// `e_j >= e_(i)`. Controls FDR at `alpha * n_nulls / N` whenever the
/// e-values satisfy the average-validity bound.
pub fn ebh_filter(evalues: &[f64], alpha: f64) -> Result<RejectionSet> {
    check_alpha(alpha)?;
    let n = evalues.len();
    for (index, &e) in evalues.iter().enumerate() {
        if !e.is_finite() || e < 0.0 {
            return Err(Error::InvalidParameter {
                name: "evalues",
                value: format!("evalues[{index}] = {e}"),
                reason: "e-values must be finite and nonnegative",
            });
        }
    }
    if n == 0 {
        return Ok(RejectionSet { indices: vec![], n_test: 0, alpha });
    }
    let mut sorted = evalues.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cutoff = None;
    for (i, &e) in sorted.iter().enumerate().rev() {
        if e >= n as f64 / (alpha * (i + 1) as f64) {
            cutoff = Some(e);
            break;
        }
    }
    let indices = match cutoff {
        Some(c) => (0..n).filter(|&j| evalues[j] >= c).collect(),
        None => vec![],
    };
    Ok(RejectionSet { indices, n_test: n, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bh_rejects_only_the_small_pvalue() {
        let r = bh_filter(&[0.01, 0.9], 0.1).unwrap();
        assert_eq!(r.indices, vec![0]);
    }

    #[test]
    fn bh_step_up_rescues_the_larger_pvalue() {
        // p_(2) = 0.09 <= 0.1 * 2/2, so both are rejected even though
        // 0.09 > 0.1 * 1/2.
        let r = bh_filter(&[0.04, 0.09], 0.1).unwrap();
        assert_eq!(r.indices, vec![0, 1]);
    }

    #[test]
    fn bh_empty_when_nothing_qualifies() {
        let r = bh_filter(&[0.8, 0.9, 0.95], 0.05).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.n_test, 3);
    }

    #[test]
    fn ebh_boundary_equality_counts() {
        // e_(1) = 4 >= 2/(0.5*1) = 4 exactly.
        let r = ebh_filter(&[4.0, 0.0], 0.5).unwrap();
        assert_eq!(r.indices, vec![0]);
    }

    #[test]
    fn ebh_step_up_includes_the_second_evalue() {
        // e_(2) = 2 >= 2/(0.5*2) = 2, so both go.
        let r = ebh_filter(&[4.0, 2.0], 0.5).unwrap();
        assert_eq!(r.indices, vec![0, 1]);
    }

    #[test]
    fn ebh_all_zero_rejects_nothing() {
        let r = ebh_filter(&[0.0, 0.0, 0.0], 0.2).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn filters_validate_inputs() {
        assert!(bh_filter(&[0.5], 0.0).is_err());
        assert!(bh_filter(&[1.5], 0.1).is_err());
        assert!(ebh_filter(&[-1.0], 0.1).is_err());
        assert!(ebh_filter(&[f64::INFINITY], 0.1).is_err());
    }

    #[test]
    fn empty_inputs_give_empty_rejections() {
        assert!(bh_filter(&[], 0.1).unwrap().is_empty());
        assert!(ebh_filter(&[], 0.1).unwrap().is_empty());
    }

    #[test]
    fn mask_round_trips_indices() {
        let r = RejectionSet { indices: vec![1, 3], n_test: 4, alpha: 0.1 };
        assert_eq!(r.as_mask(), vec![false, true, false, true]);
    }
}
