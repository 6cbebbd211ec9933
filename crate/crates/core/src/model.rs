//! Log-linear Markov networks at enumeration scale: exact inference, sampling,
//! pseudo-likelihood fitting and the synthetic context-specific generator.

use std::collections::{BTreeSet, VecDeque};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{unique_rows, Context, Dataset, VariableSchema};
use crate::error::{Error, Result};
use crate::structures::{CanonicalGraph, CanonicalModel, Feature, UGraph};

/// Largest joint state space enumerated exactly.
pub const ENUMERATION_CAP: u128 = 1 << 24;

/// p(x) ∝ exp(Σ_j w_j f_j(x)).
#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearModel {
    schema: VariableSchema,
    features: Vec<Feature>,
    weights: Vec<f64>,
}

impl LogLinearModel {
    pub fn new(schema: VariableSchema, features: Vec<Feature>, weights: Vec<f64>) -> Result<Self> {
        if features.len() != weights.len() {
            return Err(Error::Format(format!(
                "{} features but {} weights",
                features.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::Format(format!("non-finite weight {w}")));
        }
        for f in &features {
            f.validate(&schema)?;
        }
        Ok(LogLinearModel {
            schema,
            features,
            weights,
        })
    }

    pub fn zero(schema: VariableSchema, features: Vec<Feature>) -> Result<Self> {
        let w = vec![0.0; features.len()];
        Self::new(schema, features, w)
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn with_weights(&self, weights: Vec<f64>) -> Self {
        LogLinearModel {
            schema: self.schema.clone(),
            features: self.features.clone(),
            weights,
        }
    }

    /// Unnormalized log-probability.
    pub fn log_score(&self, x: &[u32]) -> f64 {
        self.features
            .iter()
            .zip(&self.weights)
            .filter(|(f, _)| f.matches(x))
            .map(|(_, w)| w)
            .sum()
    }

    /// log Z by exhaustive enumeration.
    pub fn log_partition(&self) -> Result<f64> {
        let scores = self.all_scores()?;
        Ok(log_sum_exp(&scores))
    }

    /// Normalized log-probabilities of every joint state, in enumeration order.
    pub fn log_probabilities(&self) -> Result<Vec<f64>> {
        let mut scores = self.all_scores()?;
        let log_z = log_sum_exp(&scores);
        for s in &mut scores {
            *s -= log_z;
        }
        Ok(scores)
    }

    fn all_scores(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for_each_state(&self.schema, |x| out.push(self.log_score(x)))?;
        Ok(out)
    }
}

/// Calls `f` on every joint state, last variable varying fastest.
pub fn for_each_state<F: FnMut(&[u32])>(schema: &VariableSchema, mut f: F) -> Result<()> {
    let states = schema.state_count().unwrap_or(u128::MAX);
    if states > ENUMERATION_CAP {
        return Err(Error::StateSpace {
            states,
            cap: ENUMERATION_CAP,
        });
    }
    let n = schema.len();
    let mut x = vec![0u32; n];
    loop {
        f(&x);
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            x[i] += 1;
            if (x[i] as usize) < schema.arity(i) {
                break;
            }
            x[i] = 0;
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// KL(p ‖ q) in nats by full enumeration.
pub fn kl_divergence(p: &LogLinearModel, q: &LogLinearModel) -> Result<f64> {
    if p.schema.arities() != q.schema.arities() {
        return Err(Error::Schema(
            "KL divergence needs models over the same variables".into(),
        ));
    }
    let lp = p.log_probabilities()?;
    let lq = q.log_probabilities()?;
    let kl: f64 = lp.iter().zip(&lq).map(|(&a, &b)| a.exp() * (a - b)).sum();
    if kl < -1e-12 {
        return Err(Error::Numerical(format!("negative KL divergence {kl}")));
    }
    Ok(kl.max(0.0))
}

/// Per-variable log-conditionals `log p(x_a = v | x_{V∖a})` for every `v`.
fn conditionals(mdl: &LogLinearModel, x: &[u32], a: usize, scratch: &mut [u32]) -> Vec<f64> {
    scratch.copy_from_slice(x);
    let r = mdl.schema.arity(a);
    let mut scores = Vec::with_capacity(r);
    for v in 0..r {
        scratch[a] = v as u32;
        let s: f64 = mdl
            .features
            .iter()
            .zip(&mdl.weights)
            .filter(|(f, _)| f.contains(a) && f.matches(scratch))
            .map(|(_, w)| w)
            .sum();
        scores.push(s);
    }
    let lse = log_sum_exp(&scores);
    scores.iter().map(|s| s - lse).collect()
}

fn check_schema(mdl: &LogLinearModel, d: &Dataset) -> Result<()> {
    if mdl.schema.arities() != d.schema().arities() {
        return Err(Error::Schema(
            "model and dataset disagree on variables".into(),
        ));
    }
    Ok(())
}

/// Σ_rows Σ_a log p(x_a | x_{V∖a}).
pub fn pseudo_log_likelihood(mdl: &LogLinearModel, d: &Dataset) -> Result<f64> {
    check_schema(mdl, d)?;
    let rows = unique_rows(d)?;
    Ok(pll_and_gradient(mdl, &rows, false).0)
}

/// Gradient of [`pseudo_log_likelihood`] with respect to the weights.
pub fn pll_gradient(mdl: &LogLinearModel, d: &Dataset) -> Result<Vec<f64>> {
    check_schema(mdl, d)?;
    let rows = unique_rows(d)?;
    Ok(pll_and_gradient(mdl, &rows, true).1)
}

fn pll_and_gradient(
    mdl: &LogLinearModel,
    rows: &[(Context, usize)],
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let n = mdl.schema.len();
    let mut pll = 0.0;
    let mut grad = vec![0.0; if want_grad { mdl.features.len() } else { 0 }];
    let mut scratch = vec![0u32; n];
    for (ctx, count) in rows {
        let x = ctx.values();
        let weight = *count as f64;
        for a in 0..n {
            let cond = conditionals(mdl, x, a, &mut scratch);
            pll += weight * cond[x[a] as usize];
            if !want_grad {
                continue;
            }
            for (j, f) in mdl.features.iter().enumerate() {
                if !f.contains(a) {
                    continue;
                }
                let observed = if f.matches(x) { 1.0 } else { 0.0 };
                // only the value f fixes for `a` can fire
                let v = f.value_of(a).expect("scope contains a") as usize;
                scratch.copy_from_slice(x);
                scratch[a] = v as u32;
                let expected = if f.matches(&scratch) {
                    cond[v].exp()
                } else {
                    0.0
                };
                grad[j] += weight * (observed - expected);
            }
        }
    }
    (pll, grad)
}

/// Fitting controls; defaults follow the documented convergence rule.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub reg: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            reg: 1.0,
            max_iter: 500,
            grad_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub grad_norm: f64,
}

/// Maximizes PLL − reg·‖w‖²/2 from zero weights.
pub fn fit_weights<'a, I>(feats: I, d: &Dataset, reg: f64) -> Result<LogLinearModel>
where
    I: IntoIterator<Item = &'a Feature>,
{
    let opts = FitOptions {
        reg,
        ..FitOptions::default()
    };
    fit_weights_with(feats, d, &opts).map(|(m, _)| m)
}

/// L-BFGS ascent with Armijo backtracking; falls back to the gradient
/// direction whenever the quasi-Newton direction is not an ascent direction.
pub fn fit_weights_with<'a, I>(
    feats: I,
    d: &Dataset,
    opts: &FitOptions,
) -> Result<(LogLinearModel, FitReport)>
where
    I: IntoIterator<Item = &'a Feature>,
{
    const HISTORY: usize = 10;
    const ARMIJO: f64 = 1e-4;

    let features: Vec<Feature> = feats.into_iter().cloned().collect();
    let mut model = LogLinearModel::zero(d.schema().clone(), features)?;
    let rows = unique_rows(d)?;
    let k = model.features.len();
    let eval = |m: &LogLinearModel| -> Result<(f64, Vec<f64>)> {
        let (pll, mut g) = pll_and_gradient(m, &rows, true);
        let penalty: f64 = m.weights.iter().map(|w| w * w).sum::<f64>() * opts.reg / 2.0;
        for (gj, wj) in g.iter_mut().zip(&m.weights) {
            *gj -= opts.reg * wj;
        }
        let obj = pll - penalty;
        if !obj.is_finite() {
            return Err(Error::Numerical(format!("objective became {obj}")));
        }
        Ok((obj, g))
    };
    let sup = |g: &[f64]| g.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let (mut obj, mut grad) = eval(&model)?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    while iterations < opts.max_iter && sup(&grad) >= opts.grad_tol && k > 0 {
        iterations += 1;
        let mut dir = lbfgs_direction(&grad, &history);
        let mut slope = dot(&dir, &grad);
        if slope <= 0.0 || !slope.is_finite() {
            dir = grad.clone();
            slope = dot(&grad, &grad);
            history.clear();
        }
        let mut step = if history.is_empty() {
            1.0 / sup(&grad).max(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let w: Vec<f64> = model
                .weights
                .iter()
                .zip(&dir)
                .map(|(w, d)| w + step * d)
                .collect();
            let trial = model.with_weights(w);
            if let Ok((o, g)) = eval(&trial) {
                if o >= obj + ARMIJO * step * slope {
                    accepted = Some((trial, o, g));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, o, g)) = accepted else {
            break;
        };
        let s: Vec<f64> = trial
            .weights
            .iter()
            .zip(&model.weights)
            .map(|(a, b)| a - b)
            .collect();
        // ascent: y = -(g_new - g_old) keeps the curvature pair positive
        let y: Vec<f64> = grad.iter().zip(&g).map(|(old, new)| old - new).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let improved = o - obj;
        model = trial;
        obj = o;
        grad = g;
        if improved.abs() <= f64::EPSILON * obj.abs() && sup(&grad) < 1e3 * opts.grad_tol {
            break;
        }
    }
    let grad_norm = sup(&grad);
    Ok((
        model,
        FitReport {
            iterations,
            converged: grad_norm < opts.grad_tol,
            objective: obj,
            grad_norm,
        },
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lbfgs_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}

/// Exact categorical sampling from the enumerated joint. Smaller sample
/// counts under the same seed yield prefixes of larger ones.
pub fn sample(mdl: &LogLinearModel, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Precondition("sample count must be positive".into()));
    }
    let logp = mdl.log_probabilities()?;
    let mut states = Vec::with_capacity(logp.len());
    for_each_state(&mdl.schema, |x| states.push(x.to_vec()))?;
    let mut cdf = Vec::with_capacity(logp.len());
    let mut acc = 0.0;
    for lp in &logp {
        acc += lp.exp();
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0, acc);
    let mut data = Vec::with_capacity(count * mdl.schema.len());
    for _ in 0..count {
        let u = unit.sample(&mut rng);
        let i = cdf.partition_point(|&c| c <= u).min(states.len() - 1);
        data.extend_from_slice(&states[i]);
    }
    Dataset::from_flat(mdl.schema.clone(), data)
}

/// Synthetic model with a complete graph when `x_w = 0` and a star around
/// `w` when `x_w = 1`, plus the expanded canonical ground truth.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub model: LogLinearModel,
    pub canonical: CanonicalModel,
    pub w_index: usize,
}

impl GroundTruth {
    /// Target instantiated graph for a full context.
    pub fn target_graph(&self, ctx: &Context) -> UGraph {
        let n = self.model.schema.len();
        if ctx.get(self.w_index) == Some(0) {
            UGraph::complete(n)
        } else {
            UGraph::star(n, self.w_index)
        }
    }
}

/// The feature layout of the synthetic generator, before weights are drawn.
pub fn synth_features(n: usize) -> Result<Vec<Feature>> {
    if n < 3 {
        return Err(Error::Precondition(format!(
            "the synthetic generator needs n >= 3, got {n}"
        )));
    }
    let w = 0;
    let others: Vec<usize> = (1..n).collect();
    let mut feats = Vec::new();
    for (i, &a) in others.iter().enumerate() {
        for &b in &others[i + 1..] {
            for va in 0..2 {
                for vb in 0..2 {
                    feats.push(Feature::new(vec![w, a, b], vec![0, va, vb])?);
                }
            }
        }
    }
    for &a in &others {
        for vw in 0..2 {
            for va in 0..2 {
                feats.push(Feature::new(vec![w, a], vec![vw, va])?);
            }
        }
    }
    for a in 0..n {
        for v in 0..2 {
            feats.push(Feature::new(vec![a], vec![v])?);
        }
    }
    Ok(feats)
}

pub fn synth_model(n: usize, weight_low: f64, weight_high: f64, seed: u64) -> Result<GroundTruth> {
    if !(weight_low.is_finite() && weight_high.is_finite() && weight_low <= weight_high) {
        return Err(Error::Precondition(format!(
            "invalid weight range [{weight_low}, {weight_high}]"
        )));
    }
    let features = synth_features(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = if weight_low == weight_high {
        vec![weight_low; features.len()]
    } else {
        let dist = Uniform::new_inclusive(weight_low, weight_high);
        features.iter().map(|_| dist.sample(&mut rng)).collect()
    };
    let schema = VariableSchema::binary(n);
    let model = LogLinearModel::new(schema.clone(), features, weights)?;

    let w_index = 0;
    let mut graphs = Vec::new();
    for_each_state(&schema, |x| {
        let g = if x[w_index] == 0 {
            UGraph::complete(n)
        } else {
            UGraph::star(n, w_index)
        };
        graphs.push(CanonicalGraph {
            graph: g,
            context: Context::full(x),
        });
    })?;
    let canonical = CanonicalModel::new(schema, graphs)?;
    Ok(GroundTruth {
        model,
        canonical,
        w_index,
    })
}

/// Largest violation of `X_a ⊥ X_b | X_U, x_W` in the exact joint, where
/// `x_W = ctx` and `U` is every remaining variable: the maximum over `u`, `x_a`
/// and `x_b` of `|p(x_a | x_b, u, x_W) − p(x_a | u, x_W)|`. Zero means the
/// context-specific independence holds exactly.
pub fn csi_violation(mdl: &LogLinearModel, a: usize, b: usize, ctx: &Context) -> Result<f64> {
    let schema = &mdl.schema;
    if a == b || a >= schema.len() || b >= schema.len() || ctx.contains(a) || ctx.contains(b) {
        return Err(Error::Precondition(format!("invalid CSI query ({a}, {b})")));
    }
    ctx.validate(schema)?;
    let logp = mdl.log_probabilities()?;
    let (ra, rb) = (schema.arity(a), schema.arity(b));
    // joint table of (x_a, x_b) per stratum u of the free variables
    let mut strata: std::collections::BTreeMap<Vec<u32>, Vec<f64>> = Default::default();
    let mut i = 0;
    for_each_state(schema, |x| {
        if ctx.matches(x) {
            let key: Vec<u32> = (0..schema.len())
                .filter(|&v| v != a && v != b && !ctx.contains(v))
                .map(|v| x[v])
                .collect();
            let cell = x[a] as usize * rb + x[b] as usize;
            strata.entry(key).or_insert_with(|| vec![0.0; ra * rb])[cell] += logp[i].exp();
        }
        i += 1;
    })?;
    let mut worst = 0.0f64;
    for table in strata.values() {
        let total: f64 = table.iter().sum();
        if total <= 0.0 {
            continue;
        }
        for u in 0..ra {
            let marginal: f64 = (0..rb).map(|v| table[u * rb + v]).sum::<f64>() / total;
            for v in 0..rb {
                let col: f64 = (0..ra).map(|k| table[k * rb + v]).sum();
                if col > 0.0 {
                    worst = worst.max((table[u * rb + v] / col - marginal).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Union of features, deduplicated, in sorted order.
pub fn feature_list<'a, I: IntoIterator<Item = &'a Feature>>(feats: I) -> Vec<Feature> {
    feats
        .into_iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
