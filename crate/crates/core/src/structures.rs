//! Undirected graphs, canonical models and the features they induce.

use std::collections::{BTreeSet, HashSet};

use crate::dataset::{Context, VariableSchema};
use crate::error::{Error, Result};

/// Simple undirected graph over nodes `0..n`, stored as sorted adjacency sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl UGraph {
    pub fn empty(n: usize) -> Self {
        UGraph {
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = UGraph::empty(n);
        for a in 0..n {
            for b in a + 1..n {
                g.add_edge(a, b);
            }
        }
        g
    }

    pub fn star(n: usize, center: usize) -> Self {
        let mut g = UGraph::empty(n);
        for a in (0..n).filter(|&a| a != center) {
            g.add_edge(center, a);
        }
        g
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = UGraph::empty(n);
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(Error::Format(format!(
                    "invalid edge ({a}, {b}) for n = {n}"
                )));
            }
            g.add_edge(a, b);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        assert!(a != b, "self-loops are not allowed");
        self.adj[a].insert(b);
        self.adj[b].insert(a);
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.adj[a].remove(&b);
        self.adj[b].remove(&a);
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    pub fn neighbors(&self, a: usize) -> &BTreeSet<usize> {
        &self.adj[a]
    }

    /// Edges as `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, nb)| nb.range(a + 1..).map(move |&b| (a, b)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Number of node pairs on which the two graphs disagree.
    pub fn hamming(&self, other: &UGraph) -> usize {
        assert_eq!(self.n(), other.n());
        (0..self.n())
            .map(|a| self.adj[a].symmetric_difference(&other.adj[a]).count())
            .sum::<usize>()
            / 2
    }

    /// Whether every adjacency is mirrored; always true for graphs built
    /// through the public API.
    pub fn is_symmetric(&self) -> bool {
        self.adj
            .iter()
            .enumerate()
            .all(|(a, nb)| !nb.contains(&a) && nb.iter().all(|&b| self.adj[b].contains(&a)))
    }
}

/// The Markov blanket of `a`: its neighbours.
pub fn markov_blanket(g: &UGraph, a: usize) -> BTreeSet<usize> {
    g.neighbors(a).clone()
}

/// All inclusion-maximal cliques, each sorted, listed in lexicographic order.
pub fn maximal_cliques(g: &UGraph) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if g.n() == 0 {
        return out;
    }
    let all: BTreeSet<usize> = (0..g.n()).collect();
    bron_kerbosch(g, &mut Vec::new(), all, BTreeSet::new(), &mut out);
    for c in &mut out {
        c.sort_unstable();
    }
    out.sort();
    out
}

fn bron_kerbosch(
    g: &UGraph,
    r: &mut Vec<usize>,
    mut p: BTreeSet<usize>,
    mut x: BTreeSet<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() {
        if x.is_empty() {
            out.push(r.clone());
        }
        return;
    }
    // pivot maximizing |P ∩ N(u)|
    let pivot = p
        .union(&x)
        .copied()
        .max_by_key(|&u| (p.intersection(g.neighbors(u)).count(), std::cmp::Reverse(u)))
        .expect("P is non-empty");
    let candidates: Vec<usize> = p.difference(g.neighbors(pivot)).copied().collect();
    for v in candidates {
        let nv = g.neighbors(v);
        r.push(v);
        bron_kerbosch(
            g,
            r,
            p.intersection(nv).copied().collect(),
            x.intersection(nv).copied().collect(),
            out,
        );
        r.pop();
        p.remove(&v);
        x.insert(v);
    }
}

/// Indicator `f_D(x) = [x_D = values]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Feature {
    scope: Vec<usize>,
    values: Vec<u32>,
}

impl Feature {
    pub fn new(scope: Vec<usize>, values: Vec<u32>) -> Result<Self> {
        if scope.is_empty() {
            return Err(Error::Format("feature scope must be non-empty".into()));
        }
        if scope.len() != values.len() {
            return Err(Error::Format(
                "feature scope and values differ in length".into(),
            ));
        }
        if scope.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format(
                "feature scope must be strictly increasing".into(),
            ));
        }
        Ok(Feature { scope, values })
    }

    /// Projection of an assignment that covers `scope`.
    pub fn project(scope: &[usize], ctx: &Context) -> Self {
        let values = scope
            .iter()
            .map(|&v| ctx.get(v).expect("context must cover the scope"))
            .collect();
        Feature {
            scope: scope.to_vec(),
            values,
        }
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn contains(&self, var: usize) -> bool {
        self.scope.binary_search(&var).is_ok()
    }

    pub fn value_of(&self, var: usize) -> Option<u32> {
        self.scope.binary_search(&var).ok().map(|i| self.values[i])
    }

    pub fn matches(&self, x: &[u32]) -> bool {
        self.scope
            .iter()
            .zip(&self.values)
            .all(|(&v, &val)| x[v] == val)
    }

    pub fn validate(&self, schema: &VariableSchema) -> Result<()> {
        for (&v, &x) in self.scope.iter().zip(&self.values) {
            if v >= schema.len() || x as usize >= schema.arity(v) {
                return Err(Error::Format(format!(
                    "feature assignment {v}={x} is outside the schema"
                )));
            }
        }
        Ok(())
    }
}

/// An instantiated graph `G(x)` for a full assignment `x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalGraph {
    pub graph: UGraph,
    pub context: Context,
}

impl CanonicalGraph {
    pub fn new(graph: UGraph, context: Context) -> Result<Self> {
        if context.len() != graph.n() || context.vars().iter().enumerate().any(|(i, &v)| i != v) {
            return Err(Error::Context(
                "a canonical graph needs a context assigning every variable".into(),
            ));
        }
        Ok(CanonicalGraph { graph, context })
    }
}

/// A set of canonical contexts with one instantiated graph each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalModel {
    schema: VariableSchema,
    graphs: Vec<CanonicalGraph>,
}

impl CanonicalModel {
    pub fn new(schema: VariableSchema, graphs: Vec<CanonicalGraph>) -> Result<Self> {
        let mut seen = HashSet::new();
        for g in &graphs {
            if g.graph.n() != schema.len() {
                return Err(Error::Format("graph size differs from the schema".into()));
            }
            g.context.validate(&schema)?;
            if !seen.insert(g.context.values()) {
                return Err(Error::Format(format!(
                    "duplicate canonical context {:?}",
                    g.context.values()
                )));
            }
        }
        Ok(CanonicalModel { schema, graphs })
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn graphs(&self) -> &[CanonicalGraph] {
        &self.graphs
    }

    pub fn graph_for(&self, ctx: &Context) -> Option<&UGraph> {
        self.graphs
            .iter()
            .find(|g| &g.context == ctx)
            .map(|g| &g.graph)
    }
}

/// One feature per maximal clique of each canonical graph, projected on that
/// graph's context; duplicates across contexts collapse.
pub fn generate_features(cm: &CanonicalModel) -> BTreeSet<Feature> {
    let mut out = BTreeSet::new();
    for cg in cm.graphs() {
        for clique in maximal_cliques(&cg.graph) {
            out.insert(Feature::project(&clique, &cg.context));
        }
    }
    out
}

/// Every value assignment of every maximal clique: the standard log-linear
/// parameterization of a single graph.
pub fn clique_features(g: &UGraph, schema: &VariableSchema) -> BTreeSet<Feature> {
    let mut out = BTreeSet::new();
    for clique in maximal_cliques(g) {
        let mut values = vec![0u32; clique.len()];
        'outer: loop {
            out.insert(Feature {
                scope: clique.clone(),
                values: values.clone(),
            });
            for i in (0..clique.len()).rev() {
                values[i] += 1;
                if (values[i] as usize) < schema.arity(clique[i]) {
                    continue 'outer;
                }
                values[i] = 0;
            }
            break;
        }
    }
    out
}

/// Graph with an edge between every pair of variables sharing a feature scope.
pub fn induce_graph<'a, I>(feats: I, n: usize) -> UGraph
where
    I: IntoIterator<Item = &'a Feature>,
{
    let mut g = UGraph::empty(n);
    for f in feats {
        for (i, &a) in f.scope.iter().enumerate() {
            for &b in &f.scope[i + 1..] {
                g.add_edge(a, b);
            }
        }
    }
    g
}

/// True iff no feature consistent with `ctx` (covering its variables with the
/// same values) has both `a` and `b` in its scope.
pub fn encodes_context_independence<'a, I>(feats: I, a: usize, b: usize, ctx: &Context) -> bool
where
    I: IntoIterator<Item = &'a Feature>,
{
    !feats.into_iter().any(|f| {
        f.contains(a) && f.contains(b) && ctx.iter().all(|(v, x)| f.value_of(v) == Some(x))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feature(scope: &[usize], values: &[u32]) -> Feature {
        Feature::new(scope.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn blankets() {
        let e = UGraph::empty(3);
        assert!((0..3).all(|a| markov_blanket(&e, a).is_empty()));
        let s = UGraph::star(3, 0);
        assert_eq!(markov_blanket(&s, 0), BTreeSet::from([1, 2]));
        assert_eq!(markov_blanket(&s, 1), BTreeSet::from([0]));
        let k = UGraph::complete(5);
        assert!((0..5).all(|a| markov_blanket(&k, a).len() == 4));
    }

    #[test]
    fn cliques_of_small_graphs() {
        assert_eq!(
            maximal_cliques(&UGraph::empty(3)),
            vec![vec![0], vec![1], vec![2]]
        );
        assert_eq!(maximal_cliques(&UGraph::complete(3)), vec![vec![0, 1, 2]]);
        let path = UGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(maximal_cliques(&path), vec![vec![0, 1], vec![1, 2]]);
        assert_eq!(maximal_cliques(&UGraph::empty(0)), Vec::<Vec<usize>>::new());
    }

    fn brute_force_cliques(g: &UGraph) -> Vec<Vec<usize>> {
        let n = g.n();
        let is_clique = |mask: u32| {
            (0..n).all(|a| {
                mask & (1 << a) == 0 || (a + 1..n).all(|b| mask & (1 << b) == 0 || g.has_edge(a, b))
            })
        };
        let cliques: Vec<u32> = (1u32..1 << n).filter(|&m| is_clique(m)).collect();
        let mut out: Vec<Vec<usize>> = cliques
            .iter()
            .filter(|&&m| !cliques.iter().any(|&o| o != m && o & m == m))
            .map(|&m| (0..n).filter(|&a| m & (1 << a) != 0).collect())
            .collect();
        out.sort();
        out
    }

    fn graph_strategy(max_n: usize) -> impl Strategy<Value = UGraph> {
        (1..=max_n).prop_flat_map(|n| {
            proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
                let mut g = UGraph::empty(n);
                let mut k = 0;
                for a in 0..n {
                    for b in a + 1..n {
                        if bits[k] {
                            g.add_edge(a, b);
                        }
                        k += 1;
                    }
                }
                g
            })
        })
    }

    #[test]
    fn star_features() {
        let g = UGraph::star(3, 0);
        let cm = CanonicalModel::new(
            VariableSchema::binary(3),
            vec![CanonicalGraph::new(g, Context::full(&[1, 0, 0])).unwrap()],
        )
        .unwrap();
        let feats: Vec<Feature> = generate_features(&cm).into_iter().collect();
        assert_eq!(
            feats,
            vec![feature(&[0, 1], &[1, 0]), feature(&[0, 2], &[1, 0])]
        );
    }

    #[test]
    fn shared_clique_assignments_collapse() {
        let g = UGraph::from_edges(3, &[(0, 1)]).unwrap();
        let cm = CanonicalModel::new(
            VariableSchema::binary(3),
            vec![
                CanonicalGraph::new(g.clone(), Context::full(&[1, 0, 0])).unwrap(),
                CanonicalGraph::new(g, Context::full(&[1, 0, 1])).unwrap(),
            ],
        )
        .unwrap();
        let feats = generate_features(&cm);
        // {0,1}=(1,0) shared; {2}=0 and {2}=1 distinct
        assert_eq!(feats.len(), 3);
    }

    #[test]
    fn empty_graphs_give_singletons() {
        let graphs = (0..4u32)
            .map(|s| {
                CanonicalGraph::new(UGraph::empty(2), Context::full(&[s & 1, s >> 1])).unwrap()
            })
            .collect();
        let cm = CanonicalModel::new(VariableSchema::binary(2), graphs).unwrap();
        let feats: Vec<Feature> = generate_features(&cm).into_iter().collect();
        let expect = vec![
            feature(&[0], &[0]),
            feature(&[0], &[1]),
            feature(&[1], &[0]),
            feature(&[1], &[1]),
        ];
        assert_eq!(feats, expect);
    }

    #[test]
    fn canonical_model_rejects_duplicates() {
        let g = CanonicalGraph::new(UGraph::empty(2), Context::full(&[0, 1])).unwrap();
        assert!(CanonicalModel::new(VariableSchema::binary(2), vec![g.clone(), g]).is_err());
        assert!(CanonicalGraph::new(UGraph::empty(3), Context::full(&[0, 1])).is_err());
    }

    #[test]
    fn induced_graphs() {
        let g = induce_graph(&[feature(&[0, 1], &[0, 0])], 3);
        assert_eq!(g.edges(), vec![(0, 1)]);
        let g = induce_graph(&[feature(&[0], &[0]), feature(&[2], &[1])], 3);
        assert_eq!(g.edge_count(), 0);
        let g = induce_graph(&[feature(&[0, 1, 2], &[0, 0, 0])], 3);
        assert_eq!(g, UGraph::complete(3));
    }

    #[test]
    fn context_independence_encoding() {
        let (w, a, b) = (0, 1, 2);
        let feats = [feature(&[w, a, b], &[0, 1, 1])];
        assert!(encodes_context_independence(
            &feats,
            a,
            b,
            &Context::empty().with(w, 1)
        ));
        assert!(!encodes_context_independence(
            &feats,
            a,
            b,
            &Context::empty().with(w, 0)
        ));
        let pairs = [feature(&[w, a], &[0, 0]), feature(&[w, b], &[1, 1])];
        for v in 0..2 {
            assert!(encodes_context_independence(
                &pairs,
                a,
                b,
                &Context::empty().with(w, v)
            ));
        }
    }

    #[test]
    fn clique_features_enumerate_tables() {
        let schema =
            VariableSchema::new(vec!["a".into(), "b".into(), "c".into()], vec![2, 3, 2]).unwrap();
        let g = UGraph::from_edges(3, &[(0, 1)]).unwrap();
        let feats = clique_features(&g, &schema);
        assert_eq!(feats.len(), 6 + 2);
    }

    proptest! {
        #[test]
        fn cliques_match_brute_force(g in graph_strategy(8)) {
            prop_assert_eq!(maximal_cliques(&g), brute_force_cliques(&g));
        }

        #[test]
        fn single_graph_round_trip(g in graph_strategy(7), seed in any::<u64>()) {
            let n = g.n();
            let values: Vec<u32> = (0..n).map(|i| ((seed >> i) & 1) as u32).collect();
            let cm = CanonicalModel::new(
                VariableSchema::binary(n),
                vec![CanonicalGraph::new(g.clone(), Context::full(&values)).unwrap()],
            ).unwrap();
            prop_assert_eq!(induce_graph(&generate_features(&cm), n), g);
        }

        #[test]
        fn feature_generation_ignores_graph_order(
            gs in proptest::collection::vec(graph_strategy(4).prop_filter("n=4", |g| g.n() == 4), 1..6),
            rot in 0usize..6,
        ) {
            let graphs: Vec<CanonicalGraph> = gs.into_iter().enumerate().map(|(i, g)| {
                let values: Vec<u32> = (0..4).map(|b| ((i >> b) & 1) as u32).collect();
                CanonicalGraph::new(g, Context::full(&values)).unwrap()
            }).collect();
            let mut rotated = graphs.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            rotated.reverse();
            let a = CanonicalModel::new(VariableSchema::binary(4), graphs).unwrap();
            let b = CanonicalModel::new(VariableSchema::binary(4), rotated).unwrap();
            prop_assert_eq!(generate_features(&a), generate_features(&b));
        }
    }
}
