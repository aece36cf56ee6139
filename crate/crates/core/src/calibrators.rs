//! Alternative e-value constructions: p-value-to-e-value calibrators and
//! soft-rank e-values computed directly from a score pool.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// p-to-e calibrators. All except [`CalibratorKind::Vs`] integrate to at most
/// 1 over the unit interval and therefore yield valid e-values; VS is kept for
/// comparison but must be flagged wherever FDR guarantees are claimed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibratorKind {
    /// `1/sqrt(u) - 1`.
    #[default]
    Shafer,
    /// `epsilon * u^(epsilon - 1)` for a fixed `epsilon` in (0, 1).
    EpsilonFamily { epsilon: f64 },
    /// `-1/(e * u * ln u)` below `1/e`, else 1. Not a valid e-value density:
    /// its integral diverges, so downstream FDR claims do not hold.
    Vs,
    /// The epsilon-family averaged over epsilon:
    /// `(1 - u + u ln u) / (u (ln u)^2)`, continuously extended to 1/2 at u=1.
    Integral,
}

impl CalibratorKind {
    /// Whether the calibrated output is a bona fide e-value (mean at most 1
    /// under the null).
    pub fn is_valid_evalue(&self) -> bool {
        !matches!(self, CalibratorKind::Vs)
    }
}

/// Applies a calibrator to one p-value in (0, 1].
pub fn p_to_e(u: f64, kind: &CalibratorKind) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) || !u.is_finite() {
        return Err(Error::PValueOutOfRange { value: u });
    }
    let e = match kind {
        CalibratorKind::Shafer => 1.0 / u.sqrt() - 1.0,
        CalibratorKind::EpsilonFamily { epsilon } => {
            if !(*epsilon > 0.0 && *epsilon < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "epsilon",
                    value: format!("{epsilon}"),
                    reason: "must lie in (0, 1)",
                });
            }
            epsilon * u.powf(epsilon - 1.0)
        }
        CalibratorKind::Vs => {
            if u <= (-1.0_f64).exp() {
                -(-1.0_f64).exp() / (u * u.ln())
            } else {
                1.0
            }
        }
        CalibratorKind::Integral => integral_calibrator(u),
    };
    Ok(e)
}

/// `(1 - u + u ln u) / (u (ln u)^2)` loses all precision as u -> 1 (0/0), so
/// the last 1e-4 of the domain switches to the series expansion in x = 1 - u:
/// `1/2 + x/6 + x^2/8 + O(x^3)`.
fn integral_calibrator(u: f64) -> f64 {
    if u > 1.0 - 1e-4 {
        let x = 1.0 - u;
        return 0.5 + x / 6.0 + x * x / 8.0;
    }
    let ln_u = u.ln();
    (1.0 - u + u * ln_u) / (u * ln_u * ln_u)
}

/// Parameters for soft-rank e-values. `r` tunes how sharply the normalized
/// rank transform concentrates on the pool maximum; `r = 0` is the linear
/// (min-max) transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftRankParams {
    pub r: f64,
}

impl SoftRankParams {
    /// `r = 500` suits probability-scale binary-classifier scores.
    pub const BINARY_DEFAULT: Self = Self { r: 500.0 };
    /// `r = 75` suits one-class distance scores.
    pub const ONE_CLASS_DEFAULT: Self = Self { r: 75.0 };
}

/// Soft-rank e-value of one test score against a calibration pool.
///
/// Pooling the test score with the calibration scores, each score `S_b` maps
/// to `L_b = (S_b - S_min)/(S_max - S_min)`, then to
/// `R_b = (exp(r L_b) - exp(r L_min))/r` (or `L_b - L_min` at `r = 0`), and
/// the e-value is `(n_cal + 1) * R_test / sum_b R_b`. Averaged over which pool
/// member plays the test role this is exactly 1, which is what makes it an
/// e-value under exchangeability. A degenerate pool (all scores equal)
/// returns 1.
pub fn soft_rank_evalue(test_score: f64, cal_scores: &[f64], params: SoftRankParams) -> Result<f64> {
    if !test_score.is_finite() {
        return Err(Error::NonFinite { context: "test score", index: 0, value: test_score });
    }
    for (index, &value) in cal_scores.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { context: "calibration scores", index, value });
        }
    }
    let r = params.r;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter {
            name: "r",
            value: format!("{r}"),
            reason: "must be finite and nonnegative",
        });
    }

    let lo = cal_scores.iter().copied().fold(test_score, f64::min);
    let hi = cal_scores.iter().copied().fold(test_score, f64::max);
    if lo == hi {
        return Ok(1.0);
    }
    let span = hi - lo;
    let level = |s: f64| (s - lo) / span;

    // The pool maximum always has L = 1, so for r > 0 the transform is
    // computed rescaled by exp(-r): exponents stay nonpositive and the ratio
    // is unchanged, which keeps r as large as desired from overflowing.
    let transformed = |s: f64| {
        let l = level(s);
        if r > 0.0 {
            (r * (l - 1.0)).exp() - (-r).exp()
        } else {
            l
        }
    };

    let r_test = transformed(test_score);
    let total: f64 = r_test + cal_scores.iter().map(|&s| transformed(s)).sum::<f64>();
    Ok((cal_scores.len() + 1) as f64 * r_test / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shafer_matches_closed_form() {
        assert!((p_to_e(0.25, &CalibratorKind::Shafer).unwrap() - 1.0).abs() < 1e-15);
        // Smallest possible conformal p-value with n_cal = 9 caps the payoff.
        let max_e = p_to_e(0.1, &CalibratorKind::Shafer).unwrap();
        assert!((max_e - 2.1622776601683795).abs() < 1e-12);
    }

    #[test]
    fn epsilon_family_matches_closed_form() {
        let e = p_to_e(0.04, &CalibratorKind::EpsilonFamily { epsilon: 0.5 }).unwrap();
        assert!((e - 0.5 / 0.2).abs() < 1e-12);
        assert!(p_to_e(0.5, &CalibratorKind::EpsilonFamily { epsilon: 1.5 }).is_err());
    }

    #[test]
    fn vs_matches_closed_form_and_clamps_above_the_knee() {
        let u = (-2.0_f64).exp();
        let e = p_to_e(u, &CalibratorKind::Vs).unwrap();
        assert!((e - 1.3591409142295225).abs() < 1e-12); // e/2
        assert_eq!(p_to_e(0.9, &CalibratorKind::Vs).unwrap(), 1.0);
    }

    #[test]
    fn integral_calibrator_matches_closed_form_and_limit() {
        let e = p_to_e((-1.0_f64).exp(), &CalibratorKind::Integral).unwrap();
        assert!((e - 0.7182818284590451).abs() < 1e-12); // e - 2
        assert!((p_to_e(1.0, &CalibratorKind::Integral).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integral_series_joins_the_direct_branch_smoothly() {
        // Evaluate a whisker either side of the switch point: the true value
        // changes by ~3e-13 over this straddle, so any visible gap would be
        // branch disagreement.
        let direct = p_to_e(1.0 - 1e-4 - 1e-12, &CalibratorKind::Integral).unwrap();
        let series = p_to_e(1.0 - 1e-4 + 1e-12, &CalibratorKind::Integral).unwrap();
        assert!((direct - series).abs() < 1e-11, "gap {}", (direct - series).abs());
        // And the series branch stays monotone down to u = 1.
        let near_one = p_to_e(1.0 - 1e-9, &CalibratorKind::Integral).unwrap();
        assert!(near_one > 0.5 && near_one < series);
    }

    #[test]
    fn calibrators_reject_out_of_range_p() {
        for kind in [
            CalibratorKind::Shafer,
            CalibratorKind::EpsilonFamily { epsilon: 0.5 },
            CalibratorKind::Vs,
            CalibratorKind::Integral,
        ] {
            assert!(p_to_e(0.0, &kind).is_err());
            assert!(p_to_e(1.0 + 1e-12, &kind).is_err());
            assert!(p_to_e(f64::NAN, &kind).is_err());
        }
    }

    #[test]
    fn only_vs_is_flagged_invalid() {
        assert!(CalibratorKind::Shafer.is_valid_evalue());
        assert!(CalibratorKind::Integral.is_valid_evalue());
        assert!(CalibratorKind::EpsilonFamily { epsilon: 0.3 }.is_valid_evalue());
        assert!(!CalibratorKind::Vs.is_valid_evalue());
    }

    /// Brute-force oracle straight from the defining formulas, without the
    /// overflow rescaling.
    fn soft_rank_oracle(test: f64, cal: &[f64], r: f64) -> f64 {
        let pool: Vec<f64> = std::iter::once(test).chain(cal.iter().copied()).collect();
        let lo = pool.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pool.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return 1.0;
        }
        let ls: Vec<f64> = pool.iter().map(|&s| (s - lo) / (hi - lo)).collect();
        let rs: Vec<f64> = ls
            .iter()
            .map(|&l| if r > 0.0 { ((r * l).exp() - 1.0) / r } else { l })
            .collect();
        pool.len() as f64 * rs[0] / rs.iter().sum::<f64>()
    }

    #[test]
    fn soft_rank_linear_cases_match_oracle() {
        let p = SoftRankParams { r: 0.0 };
        // Midpoint of [0, 10]: L = [0.5, 0, 1], e = 3 * 0.5 / 1.5.
        assert!((soft_rank_evalue(5.0, &[0.0, 10.0], p).unwrap() - 1.0).abs() < 1e-12);
        // Test score is the pool max: e = 3 * 1 / 1.5.
        assert!((soft_rank_evalue(10.0, &[0.0, 5.0], p).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn soft_rank_exponential_case_matches_oracle() {
        let e = soft_rank_evalue(5.0, &[0.0, 10.0], SoftRankParams { r: 1.0 }).unwrap();
        assert!((e - 0.822205857183591).abs() < 1e-12);
        assert!((e - soft_rank_oracle(5.0, &[0.0, 10.0], 1.0)).abs() < 1e-12);
    }

    #[test]
    fn soft_rank_degenerate_pool_returns_one() {
        let p = SoftRankParams { r: 500.0 };
        assert_eq!(soft_rank_evalue(2.0, &[2.0, 2.0, 2.0], p).unwrap(), 1.0);
        assert_eq!(soft_rank_evalue(7.0, &[], p).unwrap(), 1.0);
    }

    #[test]
    fn soft_rank_survives_large_r_without_overflow() {
        // Direct exp(r * L) would overflow near r ~ 710; the rescaled form
        // must keep working far beyond it.
        for &r in &[500.0, 2000.0] {
            let e = soft_rank_evalue(9.0, &[1.0, 5.0, 10.0], SoftRankParams { r }).unwrap();
            assert!(e.is_finite() && e >= 0.0, "r={r} gave {e}");
        }
        // At r = 500 the rescaled form still matches the direct formula.
        let got = soft_rank_evalue(0.9, &[0.1, 0.4, 1.0], SoftRankParams { r: 500.0 }).unwrap();
        let want = soft_rank_oracle(0.9, &[0.1, 0.4, 1.0], 500.0);
        assert!((got - want).abs() < 1e-9 * want.max(1.0));
    }

    #[test]
    fn soft_rank_position_average_is_exactly_one() {
        use rand::Rng;
        let mut rng = crate::seeding::stream(23, "soft-rank-test", &[]);
        for &r in &[0.0, 1.0, 75.0, 500.0] {
            for _ in 0..25 {
                let n = rng.random_range(2..=10usize);
                let pool: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let mean: f64 = (0..n)
                    .map(|b| {
                        let cal: Vec<f64> = pool
                            .iter()
                            .enumerate()
                            .filter(|&(i, _)| i != b)
                            .map(|(_, &s)| s)
                            .collect();
                        soft_rank_evalue(pool[b], &cal, SoftRankParams { r }).unwrap()
                    })
                    .sum::<f64>()
                    / n as f64;
                assert!((mean - 1.0).abs() < 1e-12, "r={r}: mean {mean}");
            }
        }
    }

    #[test]
    fn soft_rank_rejects_bad_r() {
        assert!(soft_rank_evalue(1.0, &[0.0], SoftRankParams { r: -1.0 }).is_err());
        assert!(soft_rank_evalue(1.0, &[0.0], SoftRankParams { r: f64::NAN }).is_err());
    }
}
