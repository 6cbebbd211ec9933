//! Grow-Shrink structure learners: CSGS over canonical contexts and the GSMN
//! single-graph baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::counts::{CountIndex, DEFAULT_LEAF_THRESHOLD};
use crate::dataset::{unique_rows, Context, Dataset};
use crate::error::{Error, Result};
use crate::indep::{conditional_independent, context_independent, TestResult, DEFAULT_ALPHA};
use crate::structures::{generate_features, CanonicalGraph, CanonicalModel, Feature, UGraph};

/// Order in which nodes (and grow candidates) are visited.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum NodeOrder {
    #[default]
    Ascending,
    Descending,
    Explicit(Vec<usize>),
}

impl NodeOrder {
    /// Parses `asc`, `desc` or a comma-separated permutation such as `2,0,1`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.trim() {
            "asc" | "ascending" => Ok(NodeOrder::Ascending),
            "desc" | "descending" => Ok(NodeOrder::Descending),
            list => list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Precondition(format!("bad node id {t:?} in order")))
                })
                .collect::<Result<Vec<_>>>()
                .map(NodeOrder::Explicit),
        }
    }

    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        match self {
            NodeOrder::Ascending => Ok((0..n).collect()),
            NodeOrder::Descending => Ok((0..n).rev().collect()),
            NodeOrder::Explicit(order) => {
                let mut sorted = order.clone();
                sorted.sort_unstable();
                if sorted != (0..n).collect::<Vec<_>>() {
                    return Err(Error::Precondition(format!(
                        "node order {order:?} is not a permutation of 0..{n}"
                    )));
                }
                Ok(order.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub node_order: NodeOrder,
    pub leaf_threshold: usize,
    pub parallel: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            alpha: DEFAULT_ALPHA,
            node_order: NodeOrder::Ascending,
            leaf_threshold: DEFAULT_LEAF_THRESHOLD,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LearnerStats {
    pub grow_tests: u64,
    pub shrink_tests: u64,
    pub unreliable_tests: u64,
    /// Tests per canonical context index (CSGS only).
    pub per_context_tests: BTreeMap<usize, u64>,
    pub wall_time: Duration,
}

impl LearnerStats {
    pub fn total_tests(&self) -> u64 {
        self.grow_tests + self.shrink_tests
    }

    fn record(&mut self, grow: bool, r: &TestResult) {
        if grow {
            self.grow_tests += 1;
        } else {
            self.shrink_tests += 1;
        }
        if !r.reliable {
            self.unreliable_tests += 1;
        }
    }

    fn absorb(&mut self, other: &LearnerStats) {
        self.grow_tests += other.grow_tests;
        self.shrink_tests += other.shrink_tests;
        self.unreliable_tests += other.unreliable_tests;
    }
}

/// Grow-shrink skeleton shared by both learners. `test(a, b, blanket)` decides
/// `X_a ⊥ X_b` given the current blanket of `a` (excluding `b`).
pub(crate) fn grow_shrink<F>(
    graph: &mut UGraph,
    order: &[usize],
    stats: &mut LearnerStats,
    mut test: F,
) -> Result<()>
where
    F: FnMut(usize, usize, &BTreeSet<usize>) -> Result<TestResult>,
{
    for &a in order {
        for &b in order {
            if b == a || graph.has_edge(a, b) {
                continue;
            }
            let blanket = graph.neighbors(a).clone();
            let r = test(a, b, &blanket)?;
            stats.record(true, &r);
            if !r.independent() {
                graph.add_edge(a, b);
            }
        }
        let grown = graph.neighbors(a).clone();
        let snapshot: Vec<usize> = order
            .iter()
            .copied()
            .filter(|b| grown.contains(b))
            .collect();
        for b in snapshot {
            if !graph.has_edge(a, b) {
                continue;
            }
            let mut blanket = graph.neighbors(a).clone();
            blanket.remove(&b);
            let r = test(a, b, &blanket)?;
            stats.record(false, &r);
            if r.independent() {
                graph.remove_edge(a, b);
            }
        }
        debug_assert!(graph.is_symmetric());
        debug_assert!(graph.neighbors(a).is_subset(&grown));
    }
    Ok(())
}

/// Refines one canonical graph with context-instantiated tests: each test
/// conditions on the graph's own context restricted to the current blanket.
pub fn gs_pass(
    g: CanonicalGraph,
    ix: &CountIndex,
    cfg: &LearnerConfig,
    stats: &mut LearnerStats,
) -> Result<CanonicalGraph> {
    let order = cfg.node_order.resolve(g.graph.n())?;
    let CanonicalGraph { mut graph, context } = g;
    grow_shrink(&mut graph, &order, stats, |a, b, blanket| {
        let ctx = context.restrict(blanket.iter().copied());
        context_independent(ix, a, b, &ctx, cfg.alpha)
    })?;
    Ok(CanonicalGraph { graph, context })
}

/// Output of a CSGS run.
#[derive(Debug, Clone)]
pub struct CsgsResult {
    pub model: CanonicalModel,
    pub features: BTreeSet<Feature>,
    pub stats: LearnerStats,
    /// Number of canonical contexts (unique rows).
    pub m: usize,
}

/// Learns a canonical model with one empty initial graph per unique row.
pub fn csgs(d: &Dataset, cfg: &LearnerConfig) -> Result<CsgsResult> {
    csgs_with_progress(d, cfg, |_, _| {})
}

/// [`csgs`] with a callback invoked as `(context index, tests)` when each
/// canonical graph finishes.
pub fn csgs_with_progress<P>(d: &Dataset, cfg: &LearnerConfig, progress: P) -> Result<CsgsResult>
where
    P: Fn(usize, u64) + Sync,
{
    let ix = CountIndex::build(d, cfg.leaf_threshold)?;
    csgs_on_index(&ix, cfg, progress)
}

/// CSGS over an existing count index (whose dataset supplies the contexts).
pub fn csgs_on_index<P>(ix: &CountIndex, cfg: &LearnerConfig, progress: P) -> Result<CsgsResult>
where
    P: Fn(usize, u64) + Sync,
{
    let start = Instant::now();
    let d = ix.dataset();
    let contexts = unique_rows(d)?;
    let n = d.n();
    cfg.node_order.resolve(n)?;

    let learn =
        |(i, (ctx, _)): (usize, &(Context, usize))| -> Result<(CanonicalGraph, LearnerStats)> {
            let mut stats = LearnerStats::default();
            let g = CanonicalGraph::new(UGraph::empty(n), ctx.clone())?;
            let g = gs_pass(g, ix, cfg, &mut stats)?;
            progress(i, stats.total_tests());
            Ok((g, stats))
        };
    let learned: Vec<(CanonicalGraph, LearnerStats)> = if cfg.parallel {
        contexts
            .par_iter()
            .enumerate()
            .map(learn)
            .collect::<Result<_>>()?
    } else {
        contexts
            .iter()
            .enumerate()
            .map(learn)
            .collect::<Result<_>>()?
    };

    let mut stats = LearnerStats::default();
    let mut graphs = Vec::with_capacity(learned.len());
    for (i, (g, s)) in learned.into_iter().enumerate() {
        stats.absorb(&s);
        stats.per_context_tests.insert(i, s.total_tests());
        graphs.push(g);
    }
    let m = graphs.len();
    let bound = 2 * (m as u64) * (n as u64).pow(2);
    assert!(
        stats.total_tests() <= bound,
        "test count {} exceeds 2·m·n² = {bound}",
        stats.total_tests()
    );

    let model = CanonicalModel::new(d.schema().clone(), graphs)?;
    let features = generate_features(&model);
    stats.wall_time = start.elapsed();
    Ok(CsgsResult {
        model,
        features,
        stats,
        m,
    })
}

/// Learns a single graph with tests conditioned on the blanket variables.
pub fn gsmn(d: &Dataset, cfg: &LearnerConfig) -> Result<(UGraph, LearnerStats)> {
    if d.is_empty() {
        return Err(Error::EmptyData);
    }
    gsmn_on_index(&CountIndex::build(d, cfg.leaf_threshold)?, cfg)
}

pub fn gsmn_on_index(ix: &CountIndex, cfg: &LearnerConfig) -> Result<(UGraph, LearnerStats)> {
    let start = Instant::now();
    let d = ix.dataset();
    let order = cfg.node_order.resolve(d.n())?;
    let mut graph = UGraph::empty(d.n());
    let mut stats = LearnerStats::default();
    grow_shrink(&mut graph, &order, &mut stats, |a, b, blanket| {
        let cond: Vec<usize> = blanket.iter().copied().collect();
        conditional_independent(ix, a, b, &cond, cfg.alpha)
    })?;
    stats.wall_time = start.elapsed();
    Ok((graph, stats))
}
