//! Learn → fit → evaluate steps shared by the subcommands and the bench sweep.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use csgs::counts::IndexStats;
use csgs::io::Structure;
use csgs::learners::{csgs_on_index, gsmn_on_index};
use csgs::model::{fit_weights, kl_divergence, sample, synth_model};
use csgs::structures::{clique_features, generate_features};
use csgs::{
    unique_rows, CountIndex, Dataset, Feature, LearnerConfig, LearnerStats, LogLinearModel, Result,
};

/// Seed offset separating the sampling stream from the weight draw.
pub const SAMPLE_SEED_SALT: u64 = 0x5eed_da7a;

pub const DEFAULT_REG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Csgs,
    Gsmn,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Csgs => "csgs",
            Algorithm::Gsmn => "gsmn",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csgs" => Ok(Algorithm::Csgs),
            "gsmn" => Ok(Algorithm::Gsmn),
            other => Err(format!(
                "unknown algorithm {other:?} (expected csgs or gsmn)"
            )),
        }
    }
}

/// Per-run learner statistics as emitted next to a learned structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub rows: usize,
    pub m: usize,
    pub tests_grow: u64,
    pub tests_shrink: u64,
    pub tests_total: u64,
    pub unreliable: u64,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_context_tests: Vec<u64>,
}

impl StatsRecord {
    pub fn new(algorithm: Algorithm, d: &Dataset, m: usize, stats: &LearnerStats) -> Self {
        StatsRecord {
            algorithm,
            n: d.n(),
            rows: d.num_rows(),
            m,
            tests_grow: stats.grow_tests,
            tests_shrink: stats.shrink_tests,
            tests_total: stats.total_tests(),
            unreliable: stats.unreliable_tests,
            wall_ms: stats.wall_time.as_millis() as u64,
            per_context_tests: stats.per_context_tests.values().copied().collect(),
        }
    }
}

/// Everything a learning run produces.
#[derive(Debug, Clone)]
pub struct Learned {
    pub structure: Structure,
    pub stats: StatsRecord,
    /// Present for CSGS: features generated from the canonical model.
    pub features: Option<BTreeSet<Feature>>,
    pub index: IndexStats,
}

/// Learns a structure with the chosen algorithm.
pub fn learn(
    algorithm: Algorithm,
    d: &Dataset,
    cfg: &LearnerConfig,
    progress: bool,
) -> Result<Learned> {
    let ix = CountIndex::build(d, cfg.leaf_threshold)?;
    let m = unique_rows(d)?.len();
    let (structure, stats, features) = match algorithm {
        Algorithm::Csgs => {
            let r = csgs_on_index(&ix, cfg, |i, tests| {
                if progress {
                    eprintln!("context {i}: {tests} tests");
                }
            })?;
            let stats = StatsRecord::new(algorithm, d, m, &r.stats);
            (Structure::Canonical(r.model), stats, Some(r.features))
        }
        Algorithm::Gsmn => {
            let (graph, stats) = gsmn_on_index(&ix, cfg)?;
            let schema = d.schema().clone();
            let stats = StatsRecord::new(algorithm, d, m, &stats);
            (Structure::Graph { schema, graph }, stats, None)
        }
    };
    Ok(Learned {
        structure,
        stats,
        features,
        index: ix.stats(),
    })
}

/// Feature set a structure induces: per-context clique projections for a
/// canonical model, full clique tables for a single graph.
pub fn structure_features(s: &Structure) -> BTreeSet<Feature> {
    match s {
        Structure::Canonical(cm) => generate_features(cm),
        Structure::Graph { schema, graph } => clique_features(graph, schema),
    }
}

pub fn fit_structure(s: &Structure, d: &Dataset, reg: f64) -> Result<LogLinearModel> {
    fit_weights(&structure_features(s), d, reg)
}

/// One cell of an experiment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub n: usize,
    pub rows: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct CellOptions {
    pub alpha: f64,
    pub weight_low: f64,
    pub weight_high: f64,
    pub reg: f64,
    pub leaf_threshold: usize,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            alpha: csgs::indep::DEFAULT_ALPHA,
            weight_low: -1.0,
            weight_high: 1.0,
            reg: DEFAULT_REG,
            leaf_threshold: csgs::counts::DEFAULT_LEAF_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub kl: f64,
    pub tests: u64,
    pub wall_ms: u64,
    pub structure: Structure,
}

/// Generates the ground truth for `seed`, samples `rows` points from it
/// (prefix-consistent across row counts), learns, fits and scores.
pub fn run_cell(cell: Cell, opts: &CellOptions) -> Result<CellResult> {
    let start = Instant::now();
    let truth = synth_model(cell.n, opts.weight_low, opts.weight_high, cell.seed)?;
    let data = sample(&truth.model, cell.rows, cell.seed ^ SAMPLE_SEED_SALT)?;
    let cfg = LearnerConfig {
        alpha: opts.alpha,
        leaf_threshold: opts.leaf_threshold,
        ..LearnerConfig::default()
    };
    let learned = learn(cell.algorithm, &data, &cfg, false)?;
    let fitted = fit_structure(&learned.structure, &data, opts.reg)?;
    let kl = kl_divergence(&truth.model, &fitted)?;
    Ok(CellResult {
        cell,
        kl,
        tests: learned.stats.tests_total,
        wall_ms: start.elapsed().as_millis() as u64,
        structure: learned.structure,
    })
}
