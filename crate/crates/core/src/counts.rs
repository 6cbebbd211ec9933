//! Count queries over a dataset, answered by a lazily expanded ADTree.
//!
//! Every node stands for a conjunction of `(var = value)` pairs over strictly
//! increasing variable ids. A node owns the ids of the rows it matches and, for
//! each variable after its last conditioned one, a "vary" slot that is
//! partitioned by value on first use. Zero-count children are never
//! materialized. Nodes matching fewer than `leaf_threshold` rows are leaves and
//! answer deeper queries by scanning their row list.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use serde::Serialize;

use crate::dataset::{Context, Dataset, VariableSchema};
use crate::error::{Error, Result};

pub const DEFAULT_LEAF_THRESHOLD: usize = 16;

struct Node {
    count: usize,
    rows: Box<[u32]>,
    /// First variable this node may still split on.
    first_var: usize,
    /// One slot per variable in `first_var..n`; empty for leaves.
    vary: Box<[OnceLock<VaryNode>]>,
}

struct VaryNode {
    children: Box<[Option<Box<Node>>]>,
}

/// ADTree over a dataset, shared read-only between learners.
pub struct CountIndex {
    data: Dataset,
    root: Node,
    leaf_threshold: usize,
    nodes: AtomicUsize,
    queries: AtomicUsize,
    lookups: AtomicUsize,
    expansions: AtomicUsize,
    max_depth: AtomicUsize,
}

/// Snapshot of tree statistics for debugging dumps.
#[derive(Debug, Clone, Serialize)]
pub struct IndexStats {
    pub rows: usize,
    pub leaf_threshold: usize,
    pub nodes: usize,
    pub max_depth: usize,
    pub queries: usize,
    pub expansions: usize,
    /// Vary-node lookups answered from memoized children.
    pub cache_hits: usize,
}

impl CountIndex {
    pub fn build(d: &Dataset, leaf_threshold: usize) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::EmptyData);
        }
        if leaf_threshold == 0 {
            return Err(Error::Precondition(
                "leaf_threshold must be at least 1".into(),
            ));
        }
        let rows: Box<[u32]> = (0..d.num_rows() as u32).collect();
        let root = Node::new(rows, 0, d.n(), leaf_threshold);
        Ok(CountIndex {
            data: d.clone(),
            root,
            leaf_threshold,
            nodes: AtomicUsize::new(1),
            queries: AtomicUsize::new(0),
            lookups: AtomicUsize::new(0),
            expansions: AtomicUsize::new(0),
            max_depth: AtomicUsize::new(0),
        })
    }

    pub fn schema(&self) -> &VariableSchema {
        self.data.schema()
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn total(&self) -> usize {
        self.root.count
    }

    /// Number of rows matching every pair of `ctx`.
    pub fn count(&self, ctx: &Context) -> Result<usize> {
        ctx.validate(self.schema())?;
        self.queries.fetch_add(1, Ordering::Relaxed);
        let mut node = &self.root;
        for (depth, (var, value)) in ctx.iter().enumerate() {
            if node.is_leaf() {
                let rest: Vec<(usize, u32)> = ctx.iter().skip(depth).collect();
                return Ok(node
                    .rows
                    .iter()
                    .filter(|&&r| {
                        let row = self.data.row(r as usize);
                        rest.iter().all(|&(v, x)| row[v] == x)
                    })
                    .count());
            }
            let vary = self.vary(node, var);
            match &vary.children[value as usize] {
                Some(child) => node = child,
                None => return Ok(0),
            }
            self.max_depth.fetch_max(depth + 1, Ordering::Relaxed);
        }
        Ok(node.count)
    }

    fn vary<'a>(&'a self, node: &'a Node, var: usize) -> &'a VaryNode {
        self.lookups.fetch_add(1, Ordering::Relaxed);
        node.vary[var - node.first_var].get_or_init(|| {
            self.expansions.fetch_add(1, Ordering::Relaxed);
            let arity = self.schema().arity(var);
            let mut parts: Vec<Vec<u32>> = vec![Vec::new(); arity];
            for &r in node.rows.iter() {
                parts[self.data.row(r as usize)[var] as usize].push(r);
            }
            let children = parts
                .into_iter()
                .map(|rows| {
                    if rows.is_empty() {
                        None
                    } else {
                        self.nodes.fetch_add(1, Ordering::Relaxed);
                        Some(Box::new(Node::new(
                            rows.into_boxed_slice(),
                            var + 1,
                            self.data.n(),
                            self.leaf_threshold,
                        )))
                    }
                })
                .collect();
            VaryNode { children }
        })
    }

    /// Two-way table of `a` against `b` restricted to the rows matching `ctx`.
    pub fn contingency(&self, a: usize, b: usize, ctx: &Context) -> Result<ContingencyTable> {
        let n = self.schema().len();
        if a == b {
            return Err(Error::Precondition(format!(
                "contingency of {a} with itself"
            )));
        }
        if a >= n || b >= n {
            return Err(Error::Context(format!("variable out of range for n = {n}")));
        }
        if ctx.contains(a) || ctx.contains(b) {
            return Err(Error::Precondition(format!(
                "tested variables {a}, {b} must not appear in the context"
            )));
        }
        let (ra, rb) = (self.schema().arity(a), self.schema().arity(b));
        let mut cells = vec![0u64; ra * rb];
        for u in 0..ra {
            let with_a = ctx.with(a, u as u32);
            if self.count(&with_a)? == 0 {
                continue;
            }
            for v in 0..rb {
                cells[u * rb + v] = self.count(&with_a.with(b, v as u32))? as u64;
            }
        }
        let table = ContingencyTable::new(a, b, ra, rb, cells, ctx.clone());
        debug_assert_eq!(table.total as usize, self.count(ctx)?);
        Ok(table)
    }

    pub fn stats(&self) -> IndexStats {
        let queries = self.queries.load(Ordering::Relaxed);
        let expansions = self.expansions.load(Ordering::Relaxed);
        IndexStats {
            rows: self.total(),
            leaf_threshold: self.leaf_threshold,
            nodes: self.nodes.load(Ordering::Relaxed),
            max_depth: self.max_depth.load(Ordering::Relaxed),
            queries,
            expansions,
            cache_hits: self
                .lookups
                .load(Ordering::Relaxed)
                .saturating_sub(expansions),
        }
    }
}

impl Node {
    fn new(rows: Box<[u32]>, first_var: usize, n: usize, leaf_threshold: usize) -> Self {
        let count = rows.len();
        let vary = if count < leaf_threshold || first_var >= n {
            Box::default()
        } else {
            (first_var..n).map(|_| OnceLock::new()).collect()
        };
        Node {
            count,
            rows,
            first_var,
            vary,
        }
    }

    fn is_leaf(&self) -> bool {
        self.vary.is_empty()
    }
}

/// Brute-force count by scanning every row; the oracle for [`CountIndex::count`].
pub fn linear_count(d: &Dataset, ctx: &Context) -> usize {
    d.rows().filter(|row| ctx.matches(row)).count()
}

/// Counts of `a × b` within a context stratum, row-major in `a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub var_a: usize,
    pub var_b: usize,
    rows: usize,
    cols: usize,
    cells: Vec<u64>,
    pub total: u64,
    pub context: Context,
}

impl ContingencyTable {
    pub fn new(
        var_a: usize,
        var_b: usize,
        rows: usize,
        cols: usize,
        cells: Vec<u64>,
        context: Context,
    ) -> Self {
        assert_eq!(cells.len(), rows * cols, "cell count must match dimensions");
        let total = cells.iter().sum();
        ContingencyTable {
            var_a,
            var_b,
            rows,
            cols,
            cells,
            total,
            context,
        }
    }

    /// Table from nested rows, mainly for tests and direct χ² use.
    pub fn from_rows(cells: &[Vec<u64>]) -> Self {
        let rows = cells.len();
        let cols = cells.first().map_or(0, Vec::len);
        let flat = cells.iter().flatten().copied().collect();
        Self::new(0, 1, rows, cols, flat, Context::empty())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, u: usize, v: usize) -> u64 {
        self.cells[u * self.cols + v]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.cells
            .chunks_exact(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut out = vec![0; self.cols];
        for row in self.cells.chunks_exact(self.cols) {
            for (o, &c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }

    /// The same table with `a` and `b` swapped.
    pub fn transposed(&self) -> Self {
        let mut cells = vec![0; self.cells.len()];
        for u in 0..self.rows {
            for v in 0..self.cols {
                cells[v * self.rows + u] = self.get(u, v);
            }
        }
        ContingencyTable::new(
            self.var_b,
            self.var_a,
            self.cols,
            self.rows,
            cells,
            self.context.clone(),
        )
    }
}
