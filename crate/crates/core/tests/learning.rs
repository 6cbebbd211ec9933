//! End-to-end behaviour of the learners, weight fitting and evaluation on
//! synthetic data with a known context-specific structure.

use std::collections::BTreeSet;

use csgs::learners::{csgs, gs_pass, gsmn};
use csgs::model::{
    fit_weights, fit_weights_with, kl_divergence, pll_gradient, pseudo_log_likelihood, sample,
    synth_model, FitOptions,
};
use csgs::structures::{generate_features, induce_graph};
use csgs::{
    CanonicalGraph, Context, CountIndex, Dataset, Feature, LearnerConfig, LearnerStats,
    LogLinearModel, NodeOrder, UGraph, VariableSchema,
};

/// log p(x_a | x_rest) by summing scores over the values of `a`.
fn brute_pll(m: &LogLinearModel, d: &Dataset) -> f64 {
    let score = |x: &[u32]| -> f64 {
        m.features()
            .iter()
            .zip(m.weights())
            .filter(|(f, _)| {
                f.scope()
                    .iter()
                    .zip(f.values())
                    .all(|(&v, &val)| x[v] == val)
            })
            .map(|(_, w)| w)
            .sum()
    };
    let mut total = 0.0;
    for row in d.rows() {
        for a in 0..d.n() {
            let mut x = row.to_vec();
            let mut norm = 0.0;
            for v in 0..d.schema().arity(a) as u32 {
                x[a] = v;
                norm += score(&x).exp();
            }
            total += score(row) - norm.ln();
        }
    }
    total
}

#[test]
fn pll_matches_direct_conditionals() {
    let gt = synth_model(5, -1.0, 1.0, 3).unwrap();
    let d = sample(&gt.model, 300, 4).unwrap();
    let got = pseudo_log_likelihood(&gt.model, &d).unwrap();
    let want = brute_pll(&gt.model, &d);
    assert!((got - want).abs() <= 1e-9 * want.abs(), "{got} vs {want}");
}

#[test]
fn fitted_weights_are_stationary() {
    let gt = synth_model(4, -1.0, 1.0, 8).unwrap();
    let d = sample(&gt.model, 2000, 9).unwrap();
    let reg = 1.0;
    let opts = FitOptions {
        reg,
        ..FitOptions::default()
    };
    let (m, report) = fit_weights_with(gt.model.features(), &d, &opts).unwrap();
    assert!(report.converged, "{report:?}");
    let g = pll_gradient(&m, &d).unwrap();
    let worst = g
        .iter()
        .zip(m.weights())
        .map(|(g, w)| (g - reg * w).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "penalized gradient {worst}");
    let zero = LogLinearModel::zero(d.schema().clone(), gt.model.features().to_vec()).unwrap();
    assert!(pseudo_log_likelihood(&m, &d).unwrap() > pseudo_log_likelihood(&zero, &d).unwrap());
}

#[test]
fn samples_track_the_joint() {
    let gt = synth_model(3, -1.0, 1.0, 5).unwrap();
    let d = sample(&gt.model, 200_000, 6).unwrap();
    let probs = gt.model.log_probabilities().unwrap();
    let mut counts = vec![0usize; probs.len()];
    for row in d.rows() {
        let idx = row.iter().fold(0usize, |acc, &v| acc * 2 + v as usize);
        counts[idx] += 1;
    }
    for (c, lp) in counts.iter().zip(&probs) {
        let p = lp.exp();
        let freq = *c as f64 / d.num_rows() as f64;
        let sd = (p * (1.0 - p) / d.num_rows() as f64).sqrt();
        assert!((freq - p).abs() < 5.0 * sd + 1e-9, "freq {freq} vs p {p}");
    }
    let small = sample(&gt.model, 500, 6).unwrap();
    assert!(small.rows().zip(d.rows()).all(|(a, b)| a == b));
}

#[test]
fn csgs_beats_empty_structure_and_recovers_stars() {
    let gt = synth_model(4, -1.0, 1.0, 2).unwrap();
    let d = sample(&gt.model, 50_000, 12).unwrap();
    let r = csgs(&d, &LearnerConfig::default()).unwrap();
    assert_eq!(r.m, r.model.graphs().len());
    assert!(r.stats.total_tests() <= 2 * (r.m * 16) as u64);

    let learned = fit_weights(&r.features, &d, 1.0).unwrap();
    let unary: Vec<Feature> = (0..4)
        .flat_map(|a| (0..2).map(move |v| Feature::new(vec![a], vec![v]).unwrap()))
        .collect();
    let baseline = fit_weights(&unary, &d, 1.0).unwrap();
    let kl_learned = kl_divergence(&gt.model, &learned).unwrap();
    let kl_base = kl_divergence(&gt.model, &baseline).unwrap();
    assert!(kl_learned < kl_base, "{kl_learned} vs {kl_base}");

    let mean_distance: f64 = r
        .model
        .graphs()
        .iter()
        .map(|g| g.graph.hamming(&gt.target_graph(&g.context)) as f64)
        .sum::<f64>()
        / r.m as f64;
    assert!(mean_distance < 2.0, "mean Hamming {mean_distance}");
}

#[test]
fn gs_pass_contexts_stay_within_their_row() {
    let gt = synth_model(4, -1.0, 1.0, 21).unwrap();
    let d = sample(&gt.model, 3000, 22).unwrap();
    let ix = CountIndex::build(&d, 16).unwrap();
    let ctx = Context::full(d.row(0));
    let start = CanonicalGraph::new(UGraph::empty(4), ctx.clone()).unwrap();
    let mut stats = LearnerStats::default();
    let out = gs_pass(start, &ix, &LearnerConfig::default(), &mut stats).unwrap();
    assert_eq!(out.context, ctx);
    assert!(out.graph.is_symmetric());
    assert!(stats.total_tests() <= 2 * 16);
}

#[test]
fn node_order_changes_only_the_visit_sequence() {
    let gt = synth_model(5, -1.0, 1.0, 30).unwrap();
    let d = sample(&gt.model, 4000, 31).unwrap();
    for order in [
        NodeOrder::Ascending,
        NodeOrder::Descending,
        NodeOrder::parse("2,0,4,1,3").unwrap(),
    ] {
        let cfg = LearnerConfig {
            node_order: order,
            ..LearnerConfig::default()
        };
        let a = csgs(&d, &cfg).unwrap();
        let b = csgs(&d, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        let (g1, s1) = gsmn(&d, &cfg).unwrap();
        let (g2, s2) = gsmn(&d, &cfg).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(s1.total_tests(), s2.total_tests());
    }
}

#[test]
fn generated_features_induce_the_union_graph() {
    let gt = synth_model(5, -1.0, 1.0, 1).unwrap();
    let feats = generate_features(&gt.canonical);
    let union = induce_graph(&feats, 5);
    assert_eq!(union, UGraph::complete(5));
    // one full-scope feature per x_w = 0 context, one {w, a} pair per star edge
    let full: BTreeSet<_> = feats.iter().filter(|f| f.scope().len() == 5).collect();
    assert_eq!(full.len(), 16);
    assert!(full.iter().all(|f| f.values()[0] == 0));
    let pairs: BTreeSet<_> = feats.iter().filter(|f| f.scope().len() == 2).collect();
    assert!(pairs
        .iter()
        .all(|f| f.scope()[0] == 0 && f.values()[0] == 1));
    assert_eq!(pairs.len(), 4 * 2);
}

#[test]
fn learners_reject_degenerate_input() {
    let schema = VariableSchema::binary(1);
    let d = Dataset::new(schema, vec![vec![0], vec![1]]).unwrap();
    let r = csgs(&d, &LearnerConfig::default()).unwrap();
    assert_eq!(r.stats.total_tests(), 0);
    let bad = LearnerConfig {
        node_order: NodeOrder::Explicit(vec![0, 0]),
        ..LearnerConfig::default()
    };
    let d2 = Dataset::new(VariableSchema::binary(2), vec![vec![0, 1]]).unwrap();
    assert!(csgs(&d2, &bad).is_err());
}
