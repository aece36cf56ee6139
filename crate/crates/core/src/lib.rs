//! Derandomized novelty detection with false discovery rate control.
//!
//! Conformal p-values depend on how a reference sample is split into training
//! and calibration halves, so two runs of a split-based detector can disagree
//! on the same data. This crate removes that run-to-run randomness: each of K
//! independent splits is converted into a vector of e-values supported on
//! `{0} ∪ {(1 + n_cal) / (1 + m)}`, the vectors are combined by a weighted
//! average whose weights depend only on the pooled score multiset, and the
//! aggregate is thresholded by an e-value analogue of the
//! Benjamini–Hochberg filter. Average FDR control survives both the
//! aggregation and data-driven weighting.
//!
//! The crate provides:
//!
//! - [`conformal`]: p-values, FDP estimates, threshold selection, per-split
//!   e-values, and weighted aggregation;
//! - [`multiple_testing`]: the BH filter for p-values and its e-value
//!   counterpart;
//! - [`weighting`]: data-driven split weights (two-sample t-statistics,
//!   trimmed-mean weights) and normalization;
//! - [`calibrators`]: p-value-to-e-value calibrators and the soft-rank
//!   e-value construction;
//! - [`scoring`]: a k-NN one-class scorer, a deterministic logistic
//!   classifier whose fits are invariant to permutations of the unordered
//!   test bag, and ingestion of externally computed scores;
//! - [`data`]: the Gaussian mean-shift benchmark generator, reference
//!   splitting, and dataset CSV I/O;
//! - [`harness`]: end-to-end pipelines, Monte Carlo experiments with power /
//!   FDR / selection-variance estimates, and parameter sweeps.
//!
//! All randomness is drawn from counter-based streams keyed by
//! `(master_seed, purpose, indices)`, so every result is reproducible
//! bit-for-bit regardless of thread count.

pub mod calibrators;
pub mod conformal;
pub mod data;
pub mod error;
pub mod harness;
pub mod multiple_testing;
pub mod scoring;
pub mod seeding;
pub mod weighting;

pub use calibrators::{p_to_e, soft_rank_evalue, CalibratorKind, SoftRankParams};
pub use conformal::{
    aggregate_evalues, bh_threshold, conformal_pvalues, evalues_at_threshold, fdp_estimate,
    EValueMatrix, FdpVariant, PValueVector, ScoreSet, WeightVector,
};
pub use data::{
    generate_synthetic, load_dataset, load_labels, split_reference, write_dataset, write_labels,
    Dataset, SubsampleSpec, SyntheticConfig,
};
pub use error::{Error, Result};
pub use harness::{
    evaluate, run_baseline_evalues, run_derandomized, run_experiment, run_from_scores,
    run_randomized, run_sweep, AlphaBh, AlphaBhRule, DataMode, DataSource, Method, Metrics,
    PipelineConfig, RunReport, ScorerConfig, ScorerKind, SweepConfig, SweepGrid,
};
pub use multiple_testing::{bh_filter, ebh_filter, RejectionSet};
pub use scoring::{ingest_scores, score_batch, train_binary, train_one_class, Scorer, TrainSpec};
pub use weighting::{
    normalize, trimmed_mean_weight, ttest_weight, uniform_weight, WeightingKind, WeightingScheme,
};
