//! Subcommand definitions and their implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use csgs::io::{self, Structure};
use csgs::model::{kl_divergence, pseudo_log_likelihood, sample, synth_model};
use csgs::{Dataset, LearnerConfig, LogLinearModel, NodeOrder};

use crate::manifest::{manifest_path, RunManifest};
use crate::pipeline::{self, structure_features, Algorithm, DEFAULT_REG};
use crate::sweep::{self, Sweep};

#[derive(Debug, Parser)]
#[command(
    name = "csgs",
    version,
    about = "Context-specific structure learning for Markov networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic context-specific model and its canonical ground truth.
    GenModel(GenModelArgs),
    /// Sample a dataset from a model file.
    GenData(GenDataArgs),
    /// Learn a structure from a CSV dataset.
    Learn(LearnArgs),
    /// Fit pseudo-likelihood weights for a structure or feature set.
    Fit(FitArgs),
    /// KL divergence of a model (or a structure, fitted first) from a reference model.
    Eval(EvalArgs),
    /// Run an experiment grid and write a CSV table.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenModelArgs {
    #[arg(short = 'n', long = "vars")]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Uniform weight range as `lo,hi`.
    #[arg(long, default_value = "-1,1", allow_hyphen_values = true)]
    pub weight_range: String,
    /// Output directory for model.json and truth.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// The CSV has no header line.
    #[arg(long)]
    pub no_header: bool,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<Dataset> {
        Dataset::load_csv(&self.data, !self.no_header)
            .with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "csgs")]
    pub algorithm: String,
    #[arg(long, default_value_t = csgs::indep::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = csgs::counts::DEFAULT_LEAF_THRESHOLD)]
    pub leaf_threshold: usize,
    /// Node order: `asc`, `desc` or a comma-separated permutation.
    #[arg(long, default_value = "asc")]
    pub order: String,
    /// Learn canonical graphs concurrently.
    #[arg(long)]
    pub parallel: bool,
    /// Report per-context progress on standard error.
    #[arg(long)]
    pub progress: bool,
    /// Structure output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Stats output file [default: <out>.stats.json].
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Also write the generated feature set (CSGS only).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Also dump ADTree statistics as JSON.
    #[arg(long)]
    pub index_stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(
        long,
        required_unless_present = "features",
        conflicts_with = "features"
    )]
    pub structure: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_REG)]
    pub reg: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file, or structure file (fitted on --data first).
    #[arg(long)]
    pub model: PathBuf,
    /// Reference (ground-truth) model file.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub no_header: bool,
    #[arg(long, default_value_t = DEFAULT_REG)]
    pub reg: f64,
    /// Also write the record to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub sweep: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run grid cells concurrently.
    #[arg(long)]
    pub parallel: bool,
}

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
    Numerical(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e:#}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        let numerical = e
            .chain()
            .filter_map(|c| c.downcast_ref::<csgs::Error>())
            .any(csgs::Error::is_numerical);
        if numerical {
            CliError::Numerical(e)
        } else {
            CliError::Data(e)
        }
    }
}

impl From<csgs::Error> for CliError {
    fn from(e: csgs::Error) -> Self {
        CliError::from(anyhow::Error::new(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn parse_weight_range(s: &str) -> CliResult<(f64, f64)> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| usage(format!("--weight-range expects lo,hi, got {s:?}")))?;
    let parse = |t: &str| {
        t.trim()
            .replace('\u{2212}', "-")
            .parse::<f64>()
            .map_err(|_| usage(format!("bad number {t:?} in --weight-range")))
    };
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(usage("--weight-range needs finite lo <= hi"));
    }
    Ok((lo, hi))
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_reg(reg: f64) -> CliResult<()> {
    if reg.is_finite() && reg >= 0.0 {
        Ok(())
    } else {
        Err(usage(format!(
            "--reg must be a non-negative number, got {reg}"
        )))
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    write_text(path, &(text + "\n"))
}

fn read(path: &Path) -> CliResult<String> {
    Ok(io::read_to_string(path)?)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenModel(a) => gen_model(a),
        Command::GenData(a) => gen_data(a),
        Command::Learn(a) => learn(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    }
}

#[derive(Serialize)]
struct TruthDoc {
    format: &'static str,
    w_index: usize,
    structure: serde_json::Value,
}

fn gen_model(a: GenModelArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("gen-model");
    let (lo, hi) = parse_weight_range(&a.weight_range)?;
    if a.n < 3 {
        return Err(usage(format!("-n must be at least 3, got {}", a.n)));
    }
    let gt = synth_model(a.n, lo, hi, a.seed)?;
    let model_path = a.out.join("model.json");
    let truth_path = a.out.join("truth.json");
    write_text(&model_path, &(io::model_to_json(&gt.model)? + "\n"))?;
    let structure = io::structure_to_json(&Structure::Canonical(gt.canonical.clone()))?;
    let truth = TruthDoc {
        format: io::FORMAT,
        w_index: gt.w_index,
        structure: serde_json::from_str(&structure).map_err(anyhow::Error::from)?,
    };
    write_json(&truth_path, &truth)?;
    manifest
        .param("n", a.n)
        .param("weight_range", [lo, hi])
        .output(&model_path)
        .output(&truth_path);
    manifest.seed = Some(a.seed);
    manifest
        .finish(&a.out.join("manifest.json"))
        .context("writing manifest")?;
    Ok(())
}

fn gen_data(a: GenDataArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("gen-data");
    if a.rows == 0 {
        return Err(usage("--rows must be positive"));
    }
    let model = io::model_from_json(&read(&a.model)?)?;
    let d = sample(&model, a.rows, a.seed)?;
    let mut buf = Vec::new();
    d.write_csv(&mut buf)?;
    write_text(
        &a.out,
        &String::from_utf8(buf).map_err(anyhow::Error::from)?,
    )?;
    manifest
        .param("rows", a.rows)
        .input(&a.model)
        .output(&a.out);
    manifest.seed = Some(a.seed);
    manifest
        .finish(&manifest_path(&a.out))
        .context("writing manifest")?;
    Ok(())
}

fn learn(a: LearnArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("learn");
    let algorithm: Algorithm = a.algorithm.parse().map_err(usage)?;
    check_alpha(a.alpha)?;
    if a.leaf_threshold == 0 {
        return Err(usage("--leaf-threshold must be at least 1"));
    }
    let node_order = NodeOrder::parse(&a.order).map_err(|e| usage(e.to_string()))?;
    let d = a.data.load()?;
    node_order
        .resolve(d.n())
        .map_err(|e| usage(e.to_string()))?;
    let cfg = LearnerConfig {
        alpha: a.alpha,
        node_order,
        leaf_threshold: a.leaf_threshold,
        parallel: a.parallel,
    };
    let learned = pipeline::learn(algorithm, &d, &cfg, a.progress)?;
    let bound = 2 * learned.stats.m as u64 * (d.n() as u64).pow(2);
    if algorithm == Algorithm::Csgs && learned.stats.tests_total > bound {
        return Err(CliError::Numerical(anyhow!(
            "test count {} exceeds 2·m·n² = {bound}",
            learned.stats.tests_total
        )));
    }

    write_text(&a.out, &(io::structure_to_json(&learned.structure)? + "\n"))?;
    let stats_path = a
        .stats
        .clone()
        .unwrap_or_else(|| sibling(&a.out, ".stats.json"));
    write_json(&stats_path, &learned.stats)?;
    manifest.output(&a.out).output(&stats_path);
    if let Some(path) = &a.features {
        let feats = learned
            .features
            .clone()
            .unwrap_or_else(|| structure_features(&learned.structure));
        write_text(path, &(io::features_to_json(&feats)? + "\n"))?;
        manifest.output(path);
    }
    if let Some(path) = &a.index_stats {
        write_json(path, &learned.index)?;
        manifest.output(path);
    }
    manifest
        .param("algorithm", algorithm)
        .param("alpha", a.alpha)
        .param("leaf_threshold", a.leaf_threshold)
        .param("order", &a.order)
        .param("parallel", a.parallel)
        .param("header", !a.data.no_header)
        .input(&a.data.data);
    manifest
        .finish(&manifest_path(&a.out))
        .context("writing manifest")?;
    Ok(())
}

fn fit(a: FitArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("fit");
    check_reg(a.reg)?;
    let d = a.data.load()?;
    let feats: Vec<csgs::Feature> = match (&a.structure, &a.features) {
        (Some(path), _) => {
            manifest.input(path);
            let s = io::structure_from_json(&read(path)?)?;
            structure_features(&s).into_iter().collect()
        }
        (None, Some(path)) => {
            manifest.input(path);
            io::features_from_json(&read(path)?)?
                .into_iter()
                .map(|(f, _)| f)
                .collect()
        }
        (None, None) => return Err(usage("one of --structure or --features is required")),
    };
    let model = csgs::model::fit_weights(&feats, &d, a.reg)?;
    write_text(&a.out, &(io::model_to_json(&model)? + "\n"))?;
    manifest
        .param("reg", a.reg)
        .param("header", !a.data.no_header)
        .input(&a.data.data)
        .output(&a.out);
    manifest
        .finish(&manifest_path(&a.out))
        .context("writing manifest")?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct KlRecord {
    format: &'static str,
    model: PathBuf,
    truth: PathBuf,
    fitted: bool,
    features: usize,
    kl: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pll: Option<f64>,
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("eval");
    check_reg(a.reg)?;
    let truth = io::model_from_json(&read(&a.truth)?)?;
    let text = read(&a.model)?;
    let is_structure = serde_json::from_str::<serde_json::Value>(&text)
        .map(|v| v.get("kind").is_some())
        .unwrap_or(false);
    let data = match &a.data {
        Some(path) => Some(
            Dataset::load_csv(path, !a.no_header)
                .with_context(|| format!("loading {}", path.display()))?,
        ),
        None => None,
    };
    let model: LogLinearModel = if is_structure {
        let s = io::structure_from_json(&text)?;
        let d = data
            .as_ref()
            .ok_or_else(|| usage("evaluating a structure needs --data to fit weights"))?;
        pipeline::fit_structure(&s, d, a.reg)?
    } else {
        io::model_from_json(&text)?
    };
    let kl = kl_divergence(&truth, &model)?;
    let pll = match &data {
        Some(d) => Some(pseudo_log_likelihood(&model, d)?),
        None => None,
    };
    let record = KlRecord {
        format: io::FORMAT,
        model: a.model.clone(),
        truth: a.truth.clone(),
        fitted: is_structure,
        features: model.features().len(),
        kl,
        pll,
    };
    println!(
        "{}",
        serde_json::to_string(&record).map_err(anyhow::Error::from)?
    );
    manifest.param("reg", a.reg).input(&a.model).input(&a.truth);
    if let Some(p) = &a.data {
        manifest.input(p);
    }
    if let Some(out) = &a.out {
        write_json(out, &record)?;
        manifest.output(out);
        manifest
            .finish(&manifest_path(out))
            .context("writing manifest")?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("bench");
    let text = read(&a.sweep)?;
    let sweep = Sweep::parse(&text).map_err(CliError::Data)?;
    let opts = sweep.options();
    let cells = sweep.cells();
    let results = if a.parallel {
        cells
            .par_iter()
            .map(|&c| pipeline::run_cell(c, &opts))
            .collect::<csgs::Result<Vec<_>>>()?
    } else {
        cells
            .iter()
            .map(|&c| pipeline::run_cell(c, &opts))
            .collect::<csgs::Result<Vec<_>>>()?
    };
    write_text(&a.out, &sweep::to_csv(&results))?;
    manifest
        .param("cells", cells.len())
        .param("parallel", a.parallel)
        .input(&a.sweep)
        .output(&a.out);
    manifest
        .finish(&manifest_path(&a.out))
        .context("writing manifest")?;
    Ok(())
}
