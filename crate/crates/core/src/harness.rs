//! End-to-end detection pipelines and the Monte Carlo experiment harness.
//!
//! A pipeline turns a dataset into a rejection set: split the reference
//! sample, train a scorer per repetition, score calibration and test points,
//! convert to e-values (threshold-based, calibrated, or soft-rank), weight and
//! aggregate across repetitions, and filter. The harness repeats an analysis M
//! times to estimate power, FDR, and selection variance.
//!
//! Every random draw is keyed by `(master_seed, purpose, analysis, repetition)`,
//! so reports are bit-identical under any degree of parallelism.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrators::{self, CalibratorKind, SoftRankParams};
use crate::conformal::{self, EValueMatrix, FdpVariant, ScoreSet};
use crate::data::{self, Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::multiple_testing::{self, RejectionSet};
use crate::scoring::{self, IngestedScores, TrainSpec};
use crate::seeding;
use crate::weighting::{self, WeightingKind, WeightingScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Derandomized one-class conformal detection via aggregated e-values.
    EConformal,
    /// Derandomized classifier-based detection via aggregated e-values.
    EAdaDetect,
    /// Single-split one-class conformal detection via BH on p-values.
    RandomizedConformal,
    /// Single-split classifier-based detection via BH on p-values.
    RandomizedAdaDetect,
    /// e-values obtained by calibrating conformal p-values.
    PToECalibrated,
    /// Soft-rank e-values computed directly from the score pool.
    SoftRank,
}

impl Method {
    pub fn is_randomized(self) -> bool {
        matches!(self, Method::RandomizedConformal | Method::RandomizedAdaDetect)
    }

    /// Methods that scan an FDP-estimate threshold per repetition.
    pub fn uses_threshold_evalues(self) -> bool {
        matches!(self, Method::EConformal | Method::EAdaDetect)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaBhRule {
    /// `alpha/10` for binary scorers, `alpha/2` for one-class scorers.
    #[serde(rename = "auto")]
    Auto,
    #[serde(rename = "alpha/10")]
    AlphaOverTen,
    #[serde(rename = "alpha/2")]
    AlphaOverTwo,
}

/// The level the per-repetition threshold scan runs at: a fixed number, a rule
/// tied to `alpha`, or a grid whose aggregated e-values are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaBh {
    Rule(AlphaBhRule),
    Fixed(f64),
    Grid { grid: Vec<f64> },
}

impl Default for AlphaBh {
    fn default() -> Self {
        AlphaBh::Rule(AlphaBhRule::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    OneClassKnn,
    BinaryLogistic,
    /// Scores are ingested from a file instead of trained; only valid with
    /// [`run_from_scores`].
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScorerConfig {
    #[serde(default)]
    pub kind: ScorerKind,
    #[serde(flatten)]
    pub train: TrainSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// One dataset, M analyses differing only in split randomness.
    #[default]
    Fixed,
    /// M dataset realizations, one analysis each.
    Fresh,
}

fn default_k() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.1
}

fn default_m() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: Method,
    /// Number of repetitions aggregated per analysis.
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    /// Target FDR level.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub alpha_bh: AlphaBh,
    #[serde(default)]
    pub weighting: WeightingScheme,
    #[serde(default)]
    pub scorer: ScorerConfig,
    pub n_cal: usize,
    /// Number of Monte Carlo analyses.
    #[serde(rename = "M", default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub data_mode: DataMode,
    /// Calibrator for the [`Method::PToECalibrated`] pipeline.
    #[serde(default)]
    pub calibrator: CalibratorKind,
    /// Sharpness for [`Method::SoftRank`]; defaults to 500 for binary scorers
    /// and 75 for one-class scorers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_rank_r: Option<f64>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha = {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("M must be at least 1".into()));
        }
        if self.n_cal == 0 {
            return Err(Error::InvalidConfig("n_cal must be at least 1".into()));
        }
        if let Some(gamma) = self.weighting.gamma {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "gamma = {gamma} must lie in (0, 1)"
                )));
            }
        }
        if let Some(r) = self.soft_rank_r {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "soft_rank_r = {r} must be finite and nonnegative"
                )));
            }
        }
        if let CalibratorKind::EpsilonFamily { epsilon } = self.calibrator {
            if !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "calibrator epsilon = {epsilon} must lie in (0, 1)"
                )));
            }
        }
        let kind = self.scorer.kind;
        let compatible = match self.method {
            Method::EConformal | Method::RandomizedConformal => {
                matches!(kind, ScorerKind::OneClassKnn | ScorerKind::External)
            }
            Method::EAdaDetect | Method::RandomizedAdaDetect => {
                matches!(kind, ScorerKind::BinaryLogistic | ScorerKind::External)
            }
            Method::PToECalibrated | Method::SoftRank => true,
        };
        if !compatible {
            return Err(Error::InvalidConfig(format!(
                "scorer kind {kind:?} is incompatible with method {:?}",
                self.method
            )));
        }
        self.resolved_alpha_bh()?;
        Ok(())
    }

    /// The threshold levels scanned per repetition (one element unless a grid
    /// was configured).
    pub fn resolved_alpha_bh(&self) -> Result<Vec<f64>> {
        let points = match &self.alpha_bh {
            AlphaBh::Rule(AlphaBhRule::Auto) => match self.scorer.kind {
                ScorerKind::OneClassKnn => vec![self.alpha / 2.0],
                ScorerKind::BinaryLogistic | ScorerKind::External => vec![self.alpha / 10.0],
            },
            AlphaBh::Rule(AlphaBhRule::AlphaOverTen) => vec![self.alpha / 10.0],
            AlphaBh::Rule(AlphaBhRule::AlphaOverTwo) => vec![self.alpha / 2.0],
            AlphaBh::Fixed(x) => vec![*x],
            AlphaBh::Grid { grid } => grid.clone(),
        };
        if points.is_empty() {
            return Err(Error::InvalidConfig("alpha_bh grid is empty".into()));
        }
        for &p in &points {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "alpha_bh value {p} must lie in (0, 1)"
                )));
            }
        }
        Ok(points)
    }

    fn resolved_gamma(&self) -> f64 {
        self.weighting.gamma.unwrap_or(weighting::DEFAULT_GAMMA)
    }

    fn resolved_soft_rank(&self) -> SoftRankParams {
        match self.soft_rank_r {
            Some(r) => SoftRankParams { r },
            None => match self.scorer.kind {
                ScorerKind::BinaryLogistic => SoftRankParams::BINARY_DEFAULT,
                _ => SoftRankParams::ONE_CLASS_DEFAULT,
            },
        }
    }
}

/// Scores one repetition: split the reference set, train, score, break ties.
fn repetition_scores(data: &Dataset, cfg: &PipelineConfig, k: usize) -> Result<ScoreSet> {
    let (train_idx, cal_idx) = data::split_reference(data, cfg.n_cal, k, cfg.master_seed)?;
    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| data.reference[i].clone()).collect();
    let cal_rows: Vec<Vec<f64>> = cal_idx.iter().map(|&i| data.reference[i].clone()).collect();

    let scorer = match cfg.scorer.kind {
        ScorerKind::OneClassKnn => scoring::train_one_class(&train_rows, &cfg.scorer.train)?,
        ScorerKind::BinaryLogistic => {
            // The classifier sees the calibration and test points as one
            // unordered bag; train_binary is permutation invariant, which is
            // exactly the property that keeps scores exchangeable.
            let mut bag = cal_rows.clone();
            bag.extend(data.test.iter().cloned());
            scoring::train_binary(&train_rows, &bag, &cfg.scorer.train)?
        }
        ScorerKind::External => {
            return Err(Error::InvalidConfig(
                "external scorer requires ingested scores; use run_from_scores".into(),
            ))
        }
    };
    let cal_scores = scoring::score_batch(&scorer, &cal_rows)?;
    let test_scores = scoring::score_batch(&scorer, &data.test)?;
    let jitter_seed = seeding::derive_u64(cfg.master_seed, "jitter", &[k as u64]);
    ScoreSet::with_tie_breaking(cal_scores, test_scores, k, jitter_seed)
}

fn raw_weight(scores: &ScoreSet, scheme: &WeightingScheme, gamma: f64) -> Result<f64> {
    match scheme.kind {
        WeightingKind::Uniform => Ok(1.0),
        WeightingKind::TTest | WeightingKind::TrimmedMean => {
            let pooled: Vec<f64> =
                scores.cal.iter().chain(scores.test.iter()).copied().collect();
            match scheme.kind {
                WeightingKind::TTest => weighting::ttest_weight(&pooled, gamma),
                _ => weighting::trimmed_mean_weight(&pooled, gamma),
            }
        }
    }
}

/// Builds per-repetition e-values and aggregates them. Returns one matrix per
/// scanned threshold level (a single one for the calibrated and soft-rank
/// constructions) plus the final aggregated vector fed to the e-value filter.
fn evalue_matrices(
    score_sets: &[ScoreSet],
    cfg: &PipelineConfig,
) -> Result<(Vec<EValueMatrix>, Vec<f64>)> {
    let gamma = cfg.resolved_gamma();
    let raws: Vec<f64> = score_sets
        .iter()
        .map(|s| raw_weight(s, &cfg.weighting, gamma))
        .collect::<Result<_>>()?;
    let weights = weighting::normalize(&raws)?;

    let matrices: Vec<EValueMatrix> = if cfg.method.uses_threshold_evalues() {
        cfg.resolved_alpha_bh()?
            .iter()
            .map(|&level| {
                let mut per_rep = Vec::with_capacity(score_sets.len());
                let mut thresholds = Vec::with_capacity(score_sets.len());
                for scores in score_sets {
                    let t = conformal::bh_threshold(scores, level, FdpVariant::NoPlusOne)?;
                    per_rep.push(conformal::evalues_at_threshold(scores, t)?);
                    thresholds.push(t);
                }
                let aggregated = conformal::aggregate_evalues(&per_rep, &weights)?;
                Ok(EValueMatrix { per_rep, aggregated, alpha_bh: Some(level), thresholds })
            })
            .collect::<Result<_>>()?
    } else {
        let per_rep: Vec<Vec<f64>> = score_sets
            .iter()
            .map(|scores| match cfg.method {
                Method::PToECalibrated => {
                    let pvalues = conformal::conformal_pvalues(scores)?;
                    pvalues
                        .values
                        .iter()
                        .map(|&u| calibrators::p_to_e(u, &cfg.calibrator))
                        .collect::<Result<Vec<f64>>>()
                }
                Method::SoftRank => {
                    let params = cfg.resolved_soft_rank();
                    scores
                        .test
                        .iter()
                        .map(|&s| calibrators::soft_rank_evalue(s, &scores.cal, params))
                        .collect::<Result<Vec<f64>>>()
                }
                _ => Err(Error::InvalidConfig(format!(
                    "method {:?} does not build baseline e-values",
                    cfg.method
                ))),
            })
            .collect::<Result<_>>()?;
        let aggregated = conformal::aggregate_evalues(&per_rep, &weights)?;
        vec![EValueMatrix { per_rep, aggregated, alpha_bh: None, thresholds: vec![] }]
    };

    // A grid of threshold levels is combined by an equal-weight average of the
    // aggregated vectors, which preserves average validity.
    let n_test = matrices[0].aggregated.len();
    let mut combined = vec![0.0; n_test];
    for matrix in &matrices {
        for (acc, &e) in combined.iter_mut().zip(&matrix.aggregated) {
            *acc += e / matrices.len() as f64;
        }
    }
    Ok((matrices, combined))
}

fn collect_score_sets(data: &Dataset, cfg: &PipelineConfig) -> Result<Vec<ScoreSet>> {
    (1..=cfg.k)
        .into_par_iter()
        .map(|k| repetition_scores(data, cfg, k))
        .collect()
}

fn aggregated_run(data: &Dataset, cfg: &PipelineConfig) -> Result<RejectionSet> {
    let score_sets = collect_score_sets(data, cfg)?;
    let (_, aggregated) = evalue_matrices(&score_sets, cfg)?;
    multiple_testing::ebh_filter(&aggregated, cfg.alpha)
}

/// One aggregated analysis with threshold-based e-values: K repetitions,
/// weighted aggregation, e-value filter.
pub fn run_derandomized(data: &Dataset, cfg: &PipelineConfig) -> Result<RejectionSet> {
    cfg.validate()?;
    if !cfg.method.uses_threshold_evalues() {
        return Err(Error::InvalidConfig(format!(
            "method {:?} does not aggregate threshold-based e-values; \
             use run_randomized or run_baseline_evalues",
            cfg.method
        )));
    }
    aggregated_run(data, cfg)
}

/// Same aggregation with the calibrated or soft-rank e-value constructions
/// in place of the per-repetition threshold scan.
pub fn run_baseline_evalues(data: &Dataset, cfg: &PipelineConfig) -> Result<RejectionSet> {
    cfg.validate()?;
    if !matches!(cfg.method, Method::PToECalibrated | Method::SoftRank) {
        return Err(Error::InvalidConfig(format!(
            "method {:?} is not a baseline e-value construction",
            cfg.method
        )));
    }
    aggregated_run(data, cfg)
}

/// One single-split analysis: BH on conformal p-values. The equivalent
/// threshold-scan formulation is computed alongside and cross-checked; a
/// disagreement is an internal error, never a silent choice.
pub fn run_randomized(data: &Dataset, cfg: &PipelineConfig) -> Result<RejectionSet> {
    cfg.validate()?;
    if !cfg.method.is_randomized() {
        return Err(Error::InvalidConfig(
            "aggregating methods go through run_derandomized".into(),
        ));
    }
    let scores = repetition_scores(data, cfg, 1)?;
    let pvalues = conformal::conformal_pvalues(&scores)?;
    let by_pvalue = multiple_testing::bh_filter(&pvalues.values, cfg.alpha)?;

    let t_hat = conformal::bh_threshold(&scores, cfg.alpha, FdpVariant::PlusOne)?;
    let by_threshold: Vec<usize> = scores
        .test
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s >= t_hat)
        .map(|(j, _)| j)
        .collect();
    if by_pvalue.indices != by_threshold {
        return Err(Error::Internal(format!(
            "BH filter and threshold scan disagree: {:?} vs {:?}",
            by_pvalue.indices, by_threshold
        )));
    }
    Ok(by_pvalue)
}

/// Monte Carlo estimates over M analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub power_hat: Option<f64>,
    pub fdr_hat: Option<f64>,
    pub variance_hat: f64,
    pub warnings: Vec<String>,
}

fn selection_variances(rejections: &[Vec<bool>]) -> Vec<f64> {
    let m = rejections.len();
    let n_test = rejections.first().map_or(0, Vec::len);
    if m < 2 {
        return vec![0.0; n_test];
    }
    (0..n_test)
        .map(|j| {
            let mean =
                rejections.iter().map(|row| row[j] as u8 as f64).sum::<f64>() / m as f64;
            rejections
                .iter()
                .map(|row| (row[j] as u8 as f64 - mean).powi(2))
                .sum::<f64>()
                / (m - 1) as f64
        })
        .collect()
}

/// Power, FDR, and selection-variance estimates from an M x n_test rejection
/// matrix. `labels` marks true outliers; without labels only the variance is
/// estimable. M = 1 reports zero variance with a warning.
pub fn evaluate(rejections: &[Vec<bool>], labels: Option<&[bool]>) -> Result<Metrics> {
    let m = rejections.len();
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "rejections",
            value: "[]".into(),
            reason: "need at least one analysis",
        });
    }
    let n_test = rejections[0].len();
    for row in rejections {
        if row.len() != n_test {
            return Err(Error::LengthMismatch { what: "rejection row", expected: n_test, got: row.len() });
        }
    }
    if let Some(ls) = labels {
        if ls.len() != n_test {
            return Err(Error::LengthMismatch { what: "labels", expected: n_test, got: ls.len() });
        }
    }

    let mut warnings = Vec::new();
    let variances = selection_variances(rejections);
    let variance_hat = if n_test == 0 {
        0.0
    } else {
        variances.iter().sum::<f64>() / n_test as f64
    };
    if m == 1 {
        warnings.push("selection variance is undefined for M = 1; reported as 0".into());
    }

    let (power_hat, fdr_hat) = match labels {
        None => (None, None),
        Some(ls) => {
            let n_out = ls.iter().filter(|&&o| o).count();
            let mut fdps = Vec::with_capacity(m);
            let mut powers = Vec::with_capacity(m);
            for row in rejections {
                let rejected = row.iter().filter(|&&r| r).count();
                let false_pos = row.iter().zip(ls).filter(|&(&r, &o)| r && !o).count();
                let true_pos = rejected - false_pos;
                fdps.push(false_pos as f64 / (rejected.max(1)) as f64);
                if n_out > 0 {
                    powers.push(true_pos as f64 / n_out as f64);
                }
            }
            let fdr = fdps.iter().sum::<f64>() / m as f64;
            let power = if n_out == 0 {
                warnings.push("no outliers in labels; power is undefined".into());
                None
            } else {
                Some(powers.iter().sum::<f64>() / m as f64)
            };
            (power, Some(fdr))
        }
    };

    Ok(Metrics { power_hat, fdr_hat, variance_hat, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub analysis: usize,
    pub n_rejections: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: PipelineConfig,
    pub data_fingerprint: String,
    pub library_version: String,
}

/// Everything one experiment produces; serializes to the report JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub n_test: usize,
    pub analyses: usize,
    pub power_hat: Option<f64>,
    pub fdr_hat: Option<f64>,
    pub variance_hat: f64,
    /// False when the configuration carries no FDR guarantee (the VS
    /// calibrator).
    pub fdr_guaranteed: bool,
    pub warnings: Vec<String>,
    pub per_analysis: Vec<AnalysisSummary>,
    pub rejections: Vec<Vec<bool>>,
    pub provenance: Provenance,
}

/// Where an experiment's data comes from.
#[derive(Debug, Clone, Copy)]
pub enum DataSource<'a> {
    Fixed(&'a Dataset),
    Synthetic(&'a SyntheticConfig),
}

fn fdr_guaranteed(cfg: &PipelineConfig) -> bool {
    !(matches!(cfg.method, Method::PToECalibrated) && !cfg.calibrator.is_valid_evalue())
}

fn synth_fingerprint(synth: &SyntheticConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"synthetic/v1");
    hasher.update(serde_json::to_vec(synth).expect("config serializes"));
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn analysis_config(cfg: &PipelineConfig, analysis: usize) -> PipelineConfig {
    let mut local = cfg.clone();
    local.master_seed = seeding::derive_u64(cfg.master_seed, "analysis", &[analysis as u64]);
    local
}

fn single_analysis_mask(data: &Dataset, cfg: &PipelineConfig, analysis: usize) -> Result<Vec<bool>> {
    let local = analysis_config(cfg, analysis);
    let rejections = if cfg.method.is_randomized() {
        run_randomized(data, &local)?
    } else if cfg.method.uses_threshold_evalues() {
        run_derandomized(data, &local)?
    } else {
        run_baseline_evalues(data, &local)?
    };
    Ok(rejections.as_mask())
}

fn summaries(rejections: &[Vec<bool>], labels: Option<&[bool]>) -> Vec<AnalysisSummary> {
    rejections
        .iter()
        .enumerate()
        .map(|(analysis, row)| {
            let n_rejections = row.iter().filter(|&&r| r).count();
            let (power, fdp) = match labels {
                None => (None, None),
                Some(ls) => {
                    let n_out = ls.iter().filter(|&&o| o).count();
                    let false_pos = row.iter().zip(ls).filter(|&(&r, &o)| r && !o).count();
                    let true_pos = n_rejections - false_pos;
                    let power = (n_out > 0).then(|| true_pos as f64 / n_out as f64);
                    (power, Some(false_pos as f64 / n_rejections.max(1) as f64))
                }
            };
            AnalysisSummary { analysis, n_rejections, power, fdp }
        })
        .collect()
}

/// Runs M analyses and assembles the report.
///
/// `data_mode = fixed` draws or accepts one dataset and varies only the split
/// randomness across analyses; `fresh` generates a new synthetic dataset per
/// analysis (and therefore requires a synthetic source).
pub fn run_experiment(cfg: &PipelineConfig, source: DataSource<'_>) -> Result<RunReport> {
    cfg.validate()?;
    let mut effective = cfg.clone();
    if effective.weighting.gamma.is_none() {
        let hint = match source {
            DataSource::Synthetic(synth) if synth.outlier_prop > 0.0 => Some(synth.outlier_prop),
            _ => None,
        };
        effective.weighting.gamma = Some(hint.unwrap_or(weighting::DEFAULT_GAMMA));
    }
    let mut warnings = Vec::new();
    if effective.method.is_randomized() && effective.k > 1 {
        warnings.push(format!(
            "randomized method ignores K = {}; a single split is used",
            effective.k
        ));
    }

    match (effective.data_mode, source) {
        (DataMode::Fresh, DataSource::Fixed(_)) => Err(Error::InvalidConfig(
            "fresh data mode requires a synthetic data source".into(),
        )),
        (DataMode::Fixed, DataSource::Fixed(dataset)) => {
            run_fixed(&effective, dataset, data::dataset_fingerprint(dataset), warnings)
        }
        (DataMode::Fixed, DataSource::Synthetic(synth)) => {
            let dataset = data::generate_synthetic(synth)?;
            let fingerprint = data::dataset_fingerprint(&dataset);
            run_fixed(&effective, &dataset, fingerprint, warnings)
        }
        (DataMode::Fresh, DataSource::Synthetic(synth)) => run_fresh(&effective, synth, warnings),
    }
}

fn run_fixed(
    cfg: &PipelineConfig,
    dataset: &Dataset,
    data_fingerprint: String,
    mut warnings: Vec<String>,
) -> Result<RunReport> {
    let rejections: Vec<Vec<bool>> = (0..cfg.m)
        .into_par_iter()
        .map(|analysis| single_analysis_mask(dataset, cfg, analysis))
        .collect::<Result<_>>()?;
    let labels = dataset.test_labels.as_deref();
    let metrics = evaluate(&rejections, labels)?;
    warnings.extend(metrics.warnings.iter().cloned());
    if labels.is_none() {
        warnings.push("dataset has no labels; power and FDR are not estimable".into());
    }
    Ok(RunReport {
        method: cfg.method,
        n_test: dataset.n_test(),
        analyses: cfg.m,
        power_hat: metrics.power_hat,
        fdr_hat: metrics.fdr_hat,
        variance_hat: metrics.variance_hat,
        fdr_guaranteed: fdr_guaranteed(cfg),
        warnings: dedup_warnings(warnings, cfg),
        per_analysis: summaries(&rejections, labels),
        rejections,
        provenance: Provenance {
            config: cfg.clone(),
            data_fingerprint,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

fn run_fresh(
    cfg: &PipelineConfig,
    synth: &SyntheticConfig,
    mut warnings: Vec<String>,
) -> Result<RunReport> {
    let outcomes: Vec<(Vec<bool>, Option<Vec<bool>>)> = (0..cfg.m)
        .into_par_iter()
        .map(|analysis| {
            let mut local_synth = synth.clone();
            local_synth.seed = seeding::derive_u64(synth.seed, "dataset", &[analysis as u64]);
            let dataset = data::generate_synthetic(&local_synth)?;
            let mask = single_analysis_mask(&dataset, cfg, analysis)?;
            Ok((mask, dataset.test_labels))
        })
        .collect::<Result<_>>()?;

    let rejections: Vec<Vec<bool>> = outcomes.iter().map(|(mask, _)| mask.clone()).collect();
    let per_analysis: Vec<AnalysisSummary> = outcomes
        .iter()
        .enumerate()
        .map(|(analysis, (mask, labels))| {
            let mut s = summaries(std::slice::from_ref(mask), labels.as_deref());
            s[0].analysis = analysis;
            s.remove(0)
        })
        .collect();

    let powers: Vec<f64> = per_analysis.iter().filter_map(|s| s.power).collect();
    let fdps: Vec<f64> = per_analysis.iter().filter_map(|s| s.fdp).collect();
    let power_hat =
        (!powers.is_empty()).then(|| powers.iter().sum::<f64>() / powers.len() as f64);
    let fdr_hat = (!fdps.is_empty()).then(|| fdps.iter().sum::<f64>() / fdps.len() as f64);

    let variances = selection_variances(&rejections);
    let variance_hat = if variances.is_empty() {
        0.0
    } else {
        variances.iter().sum::<f64>() / variances.len() as f64
    };
    if cfg.m == 1 {
        warnings.push("selection variance is undefined for M = 1; reported as 0".into());
    } else {
        warnings.push(
            "fresh data mode: selection variance mixes dataset and split randomness".into(),
        );
    }

    Ok(RunReport {
        method: cfg.method,
        n_test: synth.n_test,
        analyses: cfg.m,
        power_hat,
        fdr_hat,
        variance_hat,
        fdr_guaranteed: fdr_guaranteed(cfg),
        warnings: dedup_warnings(warnings, cfg),
        per_analysis,
        rejections,
        provenance: Provenance {
            config: cfg.clone(),
            data_fingerprint: synth_fingerprint(synth),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

fn dedup_warnings(mut warnings: Vec<String>, cfg: &PipelineConfig) -> Vec<String> {
    if !fdr_guaranteed(cfg) {
        warnings.push(
            "VS calibrator is not a valid e-value; FDR control is not guaranteed".into(),
        );
    }
    warnings.dedup();
    warnings
}

fn scores_fingerprint(sets: &[ScoreSet]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"scores/v1");
    for set in sets {
        hasher.update((set.repetition as u64).to_le_bytes());
        for group in [&set.cal, &set.test] {
            hasher.update((group.len() as u64).to_le_bytes());
            for &v in group {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs one analysis on externally computed scores. The repetition count
/// comes from the file; labels are unknown, so only rejections and the
/// variance convention are reported.
pub fn run_from_scores(cfg: &PipelineConfig, ingested: &IngestedScores) -> Result<RunReport> {
    cfg.validate()?;
    let sets = &ingested.sets;
    let mut warnings = Vec::new();

    let rejections = if cfg.method.is_randomized() {
        if sets.len() > 1 {
            warnings.push(format!(
                "randomized method uses repetition 1 of {}",
                sets.len()
            ));
        }
        let scores = &sets[0];
        let pvalues = conformal::conformal_pvalues(scores)?;
        let by_pvalue = multiple_testing::bh_filter(&pvalues.values, cfg.alpha)?;
        let t_hat = conformal::bh_threshold(scores, cfg.alpha, FdpVariant::PlusOne)?;
        let by_threshold: Vec<usize> = scores
            .test
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s >= t_hat)
            .map(|(j, _)| j)
            .collect();
        if by_pvalue.indices != by_threshold {
            return Err(Error::Internal(format!(
                "BH filter and threshold scan disagree: {:?} vs {:?}",
                by_pvalue.indices, by_threshold
            )));
        }
        by_pvalue
    } else {
        if cfg.k != sets.len() {
            warnings.push(format!(
                "score file declares {} repetitions; configured K = {} ignored",
                sets.len(),
                cfg.k
            ));
        }
        let (_, aggregated) = evalue_matrices(sets, cfg)?;
        multiple_testing::ebh_filter(&aggregated, cfg.alpha)?
    };

    let mask = rejections.as_mask();
    let n_test = mask.len();
    warnings.push("selection variance is undefined for M = 1; reported as 0".into());
    warnings.push("ingested scores carry no labels; power and FDR are not estimable".into());
    let per_analysis = summaries(std::slice::from_ref(&mask), None);
    Ok(RunReport {
        method: cfg.method,
        n_test,
        analyses: 1,
        power_hat: None,
        fdr_hat: None,
        variance_hat: 0.0,
        fdr_guaranteed: fdr_guaranteed(cfg),
        warnings: dedup_warnings(warnings, cfg),
        per_analysis,
        rejections: vec![mask],
        provenance: Provenance {
            config: cfg.clone(),
            data_fingerprint: scores_fingerprint(sets),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Writes the rejection matrix as long-format CSV
/// (`analysis,test_index,rejected`).
pub fn write_rejections_csv(path: &Path, rejections: &[Vec<bool>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["analysis", "test_index", "rejected"])?;
    for (analysis, row) in rejections.iter().enumerate() {
        for (j, &rejected) in row.iter().enumerate() {
            writer.write_record([
                analysis.to_string(),
                j.to_string(),
                (rejected as u8).to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads the CSV written by [`write_rejections_csv`], validating that it
/// covers a full M x n_test rectangle.
pub fn read_rejections_csv(path: &Path) -> Result<Vec<Vec<bool>>> {
    let display = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: display.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["analysis", "test_index", "rejected"] {
        return Err(parse_err(
            1,
            format!("expected header `analysis,test_index,rejected`, got {headers:?}"),
        ));
    }
    let mut cells: Vec<(usize, usize, bool)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let analysis: usize = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid analysis {:?}", &record[0])))?;
        let j: usize = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid test_index {:?}", &record[1])))?;
        let rejected = match &record[2] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(line, format!("rejected must be 0 or 1, got {other:?}"))),
        };
        cells.push((analysis, j, rejected));
    }
    if cells.is_empty() {
        return Err(parse_err(0, "no rejection rows".into()));
    }
    let m = cells.iter().map(|&(a, _, _)| a).max().expect("nonempty") + 1;
    let n_test = cells.iter().map(|&(_, j, _)| j).max().expect("nonempty") + 1;
    if cells.len() != m * n_test {
        return Err(parse_err(
            0,
            format!("expected {m} x {n_test} = {} cells, got {}", m * n_test, cells.len()),
        ));
    }
    let mut seen = vec![vec![false; n_test]; m];
    let mut matrix = vec![vec![false; n_test]; m];
    for (a, j, rejected) in cells {
        if seen[a][j] {
            return Err(parse_err(0, format!("duplicate cell ({a}, {j})")));
        }
        seen[a][j] = true;
        matrix[a][j] = rejected;
    }
    Ok(matrix)
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), report)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// A one-axis parameter sweep: grid values for exactly one of `amplitude`,
/// `K`, `alpha_bh`, or `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SweepGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Vec<f64>>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_bh: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub pipeline: PipelineConfig,
    pub synthetic: SyntheticConfig,
    pub grid: SweepGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub param: &'static str,
    pub value: f64,
    pub report: RunReport,
}

/// Runs the sweep cell by cell. The tidy summary identifies a cell by a
/// single param/value pair, so exactly one grid axis may be populated.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepCell>> {
    let axes = [
        cfg.grid.amplitude.is_some(),
        cfg.grid.k.is_some(),
        cfg.grid.alpha_bh.is_some(),
        cfg.grid.gamma.is_some(),
    ]
    .iter()
    .filter(|&&s| s)
    .count();
    if axes != 1 {
        return Err(Error::InvalidConfig(format!(
            "sweep grid must set exactly one axis, got {axes}"
        )));
    }

    let mut cells = Vec::new();
    if let Some(values) = &cfg.grid.amplitude {
        for &amplitude in values {
            let synth = SyntheticConfig { amplitude, ..cfg.synthetic.clone() };
            let report = run_experiment(&cfg.pipeline, DataSource::Synthetic(&synth))?;
            cells.push(SweepCell { param: "amplitude", value: amplitude, report });
        }
    } else if let Some(values) = &cfg.grid.k {
        for &k in values {
            let pipeline = PipelineConfig { k, ..cfg.pipeline.clone() };
            let report = run_experiment(&pipeline, DataSource::Synthetic(&cfg.synthetic))?;
            cells.push(SweepCell { param: "K", value: k as f64, report });
        }
    } else if let Some(values) = &cfg.grid.alpha_bh {
        for &level in values {
            let pipeline =
                PipelineConfig { alpha_bh: AlphaBh::Fixed(level), ..cfg.pipeline.clone() };
            let report = run_experiment(&pipeline, DataSource::Synthetic(&cfg.synthetic))?;
            cells.push(SweepCell { param: "alpha_bh", value: level, report });
        }
    } else if let Some(values) = &cfg.grid.gamma {
        for &gamma in values {
            let mut pipeline = cfg.pipeline.clone();
            pipeline.weighting.gamma = Some(gamma);
            let report = run_experiment(&pipeline, DataSource::Synthetic(&cfg.synthetic))?;
            cells.push(SweepCell { param: "gamma", value: gamma, report });
        }
    }
    Ok(cells)
}

fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Writes the tidy long-format sweep summary
/// (`param,value,metric,estimate,stderr`). Undefined estimates leave the
/// estimate and stderr fields empty.
pub fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["param", "value", "metric", "estimate", "stderr"])?;
    for cell in cells {
        let report = &cell.report;
        let powers: Vec<f64> = report.per_analysis.iter().filter_map(|s| s.power).collect();
        let fdps: Vec<f64> = report.per_analysis.iter().filter_map(|s| s.fdp).collect();
        let variances = selection_variances(&report.rejections);

        let rows: [(&str, Option<f64>, f64); 3] = [
            (
                "power",
                report.power_hat,
                sd(&powers) / (powers.len().max(1) as f64).sqrt(),
            ),
            (
                "fdr",
                report.fdr_hat,
                sd(&fdps) / (fdps.len().max(1) as f64).sqrt(),
            ),
            (
                "variance",
                Some(report.variance_hat),
                sd(&variances) / (variances.len().max(1) as f64).sqrt(),
            ),
        ];
        for (metric, estimate, stderr) in rows {
            let (est, se) = match estimate {
                Some(e) => (format!("{e}"), format!("{stderr}")),
                None => (String::new(), String::new()),
            };
            writer.write_record([cell.param, &format!("{}", cell.value), metric, &est, &se])?;
        }
    }
    writer.flush()?;
    Ok(())
}
