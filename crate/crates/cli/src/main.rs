//! Command-line driver: generate benchmarks, run detection pipelines,
//! recompute metrics, and sweep parameter grids.
//!
//! Configs are JSON documents with the same field names the library
//! serializes; every scalar field can be overridden by a flag of the same
//! name. The process exits 0 only when everything it was asked to do
//! succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use econformal::harness::{self, AlphaBh, DataSource, PipelineConfig, RunReport, SweepConfig};
use econformal::{data, scoring, CalibratorKind, SubsampleSpec, SyntheticConfig};

#[derive(Parser)]
#[command(name = "econformal", version, about = "FDR-controlled novelty detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset as CSV.
    Simulate(SimulateArgs),
    /// Run a detection pipeline and write its report.
    Run(RunArgs),
    /// Recompute power, FDR, and selection variance from saved rejections.
    Metrics(MetricsArgs),
    /// Run a one-axis parameter sweep and write a tidy summary CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Where to write the dataset CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optionally also write a `test_index,is_outlier` labels CSV.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// JSON file with generator settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Reference (inlier) rows to generate.
    #[arg(long)]
    n_ref: Option<usize>,
    /// Test rows to generate.
    #[arg(long)]
    n_test: Option<usize>,
    /// Fraction of the test set drawn as outliers.
    #[arg(long)]
    outlier_prop: Option<f64>,
    /// Mean shift applied to each signal coordinate of the outliers.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Number of leading coordinates that carry the shift.
    #[arg(long)]
    signal_dims: Option<usize>,
    /// Generator seed; the dataset is a pure function of the settings.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Default)]
struct PipelineOverrides {
    /// Method: e_conformal, e_ada_detect, randomized_conformal,
    /// randomized_ada_detect, p_to_e_calibrated, or soft_rank.
    #[arg(long)]
    method: Option<String>,
    /// Repetitions aggregated per analysis.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Target FDR level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Threshold level: "auto", "alpha/10", "alpha/2", a number, or a
    /// comma-separated grid.
    #[arg(long)]
    alpha_bh: Option<String>,
    /// Weighting scheme: uniform, t_test, or trimmed_mean.
    #[arg(long)]
    weighting: Option<String>,
    /// Assumed outlier fraction used by the adaptive weights.
    #[arg(long)]
    gamma: Option<f64>,
    /// Scorer: one_class_knn, binary_logistic, or external.
    #[arg(long)]
    scorer: Option<String>,
    /// Calibration rows held out of each reference split.
    #[arg(long)]
    n_cal: Option<usize>,
    /// Monte Carlo analyses per experiment.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Root seed; every split, jitter, and draw is derived from it.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Data mode: fixed or fresh.
    #[arg(long)]
    data_mode: Option<String>,
    /// Calibrator: shafer, epsilon_family, vs, or integral.
    #[arg(long)]
    calibrator: Option<String>,
    /// Exponent for the epsilon_family calibrator.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Sharpness of the soft-rank transform.
    #[arg(long)]
    soft_rank_r: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config JSON (field names as serialized by the library).
    #[arg(long)]
    config: PathBuf,
    /// Dataset CSV with a `role` column (and `is_outlier` for labeled data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Generator settings JSON to synthesize the data instead.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    /// Pre-computed score CSV (`repetition,role,score`).
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Where to write the report JSON.
    #[arg(long)]
    report: PathBuf,
    /// Optionally write the rejection matrix as `analysis,test_index,rejected`.
    #[arg(long)]
    rejections: Option<PathBuf>,
    /// With --data: draw this many reference rows from the labeled pool.
    #[arg(long, requires_all = ["subsample_n_test", "subsample_outlier_prop"])]
    subsample_n_ref: Option<usize>,
    /// With --data: test-set size of the subsampled benchmark.
    #[arg(long, requires = "subsample_n_ref")]
    subsample_n_test: Option<usize>,
    /// With --data: outlier fraction of the subsampled test set.
    #[arg(long, requires = "subsample_n_ref")]
    subsample_outlier_prop: Option<f64>,
    /// Seed for the subsampling draw.
    #[arg(long, requires = "subsample_n_ref")]
    subsample_seed: Option<u64>,
    #[command(flatten)]
    overrides: PipelineOverrides,
}

#[derive(Args)]
struct MetricsArgs {
    /// Rejections CSV produced by `run`.
    #[arg(long)]
    rejections: PathBuf,
    /// Labels CSV (`test_index,is_outlier`); omit to report variance only.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Where to write the metrics JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config JSON: `{"pipeline": ..., "synthetic": ..., "grid": ...}`
    /// with exactly one grid axis (amplitude, K, alpha_bh, or gamma).
    #[arg(long)]
    config: PathBuf,
    /// Where to write the tidy `param,value,metric,estimate,stderr` CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optionally write each cell's full report JSON into this directory.
    #[arg(long)]
    report_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: PipelineOverrides,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {what} from {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

/// Parses an enum-ish flag value through the same serde names the JSON
/// configs use, so flags and config files never drift apart.
fn parse_variant<T: serde::de::DeserializeOwned>(value: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .with_context(|| format!("invalid {what} {value:?}"))
}

fn parse_alpha_bh(value: &str) -> Result<AlphaBh> {
    if matches!(value, "auto" | "alpha/10" | "alpha/2") {
        return parse_variant::<harness::AlphaBhRule>(value, "alpha_bh rule").map(AlphaBh::Rule);
    }
    if value.contains(',') {
        let grid = value
            .split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("invalid alpha_bh grid entry {s:?}")))
            .collect::<Result<Vec<f64>>>()?;
        return Ok(AlphaBh::Grid { grid });
    }
    value
        .parse::<f64>()
        .map(AlphaBh::Fixed)
        .with_context(|| format!("invalid alpha_bh {value:?}"))
}

impl PipelineOverrides {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        if let Some(method) = &self.method {
            cfg.method = parse_variant(method, "method")?;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
        if let Some(alpha_bh) = &self.alpha_bh {
            cfg.alpha_bh = parse_alpha_bh(alpha_bh)?;
        }
        if let Some(weighting) = &self.weighting {
            cfg.weighting.kind = parse_variant(weighting, "weighting")?;
        }
        if let Some(gamma) = self.gamma {
            cfg.weighting.gamma = Some(gamma);
        }
        if let Some(scorer) = &self.scorer {
            cfg.scorer.kind = parse_variant(scorer, "scorer")?;
        }
        if let Some(n_cal) = self.n_cal {
            cfg.n_cal = n_cal;
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(master_seed) = self.master_seed {
            cfg.master_seed = master_seed;
        }
        if let Some(data_mode) = &self.data_mode {
            cfg.data_mode = parse_variant(data_mode, "data_mode")?;
        }
        if let Some(calibrator) = &self.calibrator {
            cfg.calibrator = match (calibrator.as_str(), self.epsilon) {
                ("epsilon_family", Some(epsilon)) => CalibratorKind::EpsilonFamily { epsilon },
                ("epsilon_family", None) => {
                    bail!("--calibrator epsilon_family requires --epsilon")
                }
                _ => serde_json::from_value(serde_json::json!({ "kind": calibrator }))
                    .with_context(|| format!("invalid calibrator {calibrator:?}"))?,
            };
        } else if self.epsilon.is_some() {
            bail!("--epsilon only applies with --calibrator epsilon_family");
        }
        if let Some(r) = self.soft_rank_r {
            cfg.soft_rank_r = Some(r);
        }
        Ok(())
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg: SyntheticConfig = match &args.config {
        Some(path) => read_json(path, "generator config")?,
        None => SyntheticConfig::default(),
    };
    if let Some(d) = args.d {
        cfg.d = d;
    }
    if let Some(n_ref) = args.n_ref {
        cfg.n_ref = n_ref;
    }
    if let Some(n_test) = args.n_test {
        cfg.n_test = n_test;
    }
    if let Some(outlier_prop) = args.outlier_prop {
        cfg.outlier_prop = outlier_prop;
    }
    if let Some(amplitude) = args.amplitude {
        cfg.amplitude = amplitude;
    }
    if let Some(signal_dims) = args.signal_dims {
        cfg.signal_dims = signal_dims;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }

    let dataset = data::generate_synthetic(&cfg)?;
    data::write_dataset(&args.out, &dataset)?;
    if let Some(labels_out) = &args.labels_out {
        let labels = dataset.test_labels.as_ref().expect("generator always labels");
        data::write_labels(labels_out, labels)?;
    }
    let n_out = dataset
        .test_labels
        .as_ref()
        .map_or(0, |ls| ls.iter().filter(|&&o| o).count());
    println!(
        "wrote {} (d={}, n_ref={}, n_test={}, outliers={})",
        args.out.display(),
        cfg.d,
        cfg.n_ref,
        cfg.n_test,
        n_out
    );
    Ok(())
}

fn print_report_summary(report: &RunReport) {
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "method={:?} analyses={} power={} fdr={} variance={:.6} fdr_guaranteed={}",
        report.method,
        report.analyses,
        fmt(report.power_hat),
        fmt(report.fdr_hat),
        report.variance_hat,
        report.fdr_guaranteed
    );
}

fn run(args: &RunArgs) -> Result<()> {
    let mut cfg: PipelineConfig = read_json(&args.config, "pipeline config")?;
    args.overrides.apply(&mut cfg)?;

    let sources =
        [args.data.is_some(), args.synthetic.is_some(), args.scores.is_some()]
            .iter()
            .filter(|&&s| s)
            .count();
    if sources != 1 {
        bail!("provide exactly one of --data, --synthetic, --scores");
    }

    let report = if let Some(scores_path) = &args.scores {
        let ingested = scoring::ingest_scores(scores_path)?;
        harness::run_from_scores(&cfg, &ingested)?
    } else if let Some(synth_path) = &args.synthetic {
        let synth: SyntheticConfig = read_json(synth_path, "generator config")?;
        harness::run_experiment(&cfg, DataSource::Synthetic(&synth))?
    } else {
        let data_path = args.data.as_ref().expect("one source is set");
        let subsample = args.subsample_n_ref.map(|n_ref| SubsampleSpec {
            n_ref,
            n_test: args.subsample_n_test.expect("clap enforces the group"),
            outlier_prop: args.subsample_outlier_prop.expect("clap enforces the group"),
            seed: args.subsample_seed.unwrap_or(0),
        });
        let dataset = data::load_dataset(data_path, subsample.as_ref())?;
        harness::run_experiment(&cfg, DataSource::Fixed(&dataset))?
    };

    harness::write_report(&args.report, &report)?;
    if let Some(rejections_path) = &args.rejections {
        harness::write_rejections_csv(rejections_path, &report.rejections)?;
    }
    print_report_summary(&report);
    Ok(())
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    let rejections = harness::read_rejections_csv(&args.rejections)?;
    let labels = match &args.labels {
        Some(path) => Some(data::load_labels(path)?),
        None => None,
    };
    let metrics = harness::evaluate(&rejections, labels.as_deref())?;
    for warning in &metrics.warnings {
        eprintln!("warning: {warning}");
    }
    let json = serde_json::to_string_pretty(&metrics)?;
    match &args.out {
        Some(path) => fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg: SweepConfig = read_json(&args.config, "sweep config")?;
    args.overrides.apply(&mut cfg.pipeline)?;

    let cells = harness::run_sweep(&cfg)?;
    harness::write_sweep_csv(&args.out, &cells)?;
    if let Some(dir) = &args.report_dir {
        fs::create_dir_all(dir)?;
        for cell in &cells {
            let path = dir.join(format!("report-{}-{}.json", cell.param, cell.value));
            harness::write_report(&path, &cell.report)?;
        }
    }
    for cell in &cells {
        print!("{}={} ", cell.param, cell.value);
        print_report_summary(&cell.report);
    }
    println!("wrote {} ({} cells)", args.out.display(), cells.len());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Run(args) => run(args),
        Command::Metrics(args) => metrics(args),
        Command::Sweep(args) => sweep(args),
    }
}
