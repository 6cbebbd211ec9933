//! Experiment grid files for `bench`.
//!
//! ```json
//! {
//!   "format": "csgs-v1",
//!   "n": [6],
//!   "rows": [100, 1000, 10000],
//!   "seeds": [1, 2, 3],
//!   "algorithms": ["csgs", "gsmn"],
//!   "alpha": 0.05,
//!   "weight_range": [-1.0, 1.0]
//! }
//! ```

use std::fmt::Write as _;

use anyhow::{bail, Context as _, Result};
use serde::Deserialize;

use crate::pipeline::{Algorithm, Cell, CellOptions, CellResult, DEFAULT_REG};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub format: String,
    pub n: Vec<usize>,
    pub rows: Vec<usize>,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub weight_range: Option<(f64, f64)>,
    #[serde(default)]
    pub reg: Option<f64>,
    #[serde(default)]
    pub leaf_threshold: Option<usize>,
}

/// 1-based line of the first occurrence of `"key"`, for error messages.
fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map_or(1, |i| i + 1)
}

impl Sweep {
    pub fn parse(text: &str) -> Result<Self> {
        let sweep: Sweep = serde_json::from_str(text).context("malformed sweep file")?;
        let fail = |key: &str, msg: &str| -> Result<()> {
            bail!(
                "malformed sweep file: line {}: {key}: {msg}",
                line_of(text, key)
            )
        };
        if sweep.format != csgs::io::FORMAT {
            fail("format", &format!("expected {:?}", csgs::io::FORMAT))?;
        }
        for (key, empty) in [
            ("n", sweep.n.is_empty()),
            ("rows", sweep.rows.is_empty()),
            ("seeds", sweep.seeds.is_empty()),
            ("algorithms", sweep.algorithms.is_empty()),
        ] {
            if empty {
                fail(key, "list must not be empty")?;
            }
        }
        if sweep.n.iter().any(|&n| !(3..=20).contains(&n)) {
            fail("n", "every n must lie in 3..=20")?;
        }
        if sweep.rows.contains(&0) {
            fail("rows", "row counts must be positive")?;
        }
        if let Some(a) = sweep.alpha {
            if !(a > 0.0 && a < 1.0) {
                fail("alpha", "must lie in (0, 1)")?;
            }
        }
        if let Some((lo, hi)) = sweep.weight_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                fail("weight_range", "need finite lo <= hi")?;
            }
        }
        if let Some(r) = sweep.reg {
            if !(r.is_finite() && r >= 0.0) {
                fail("reg", "must be a non-negative number")?;
            }
        }
        if sweep.leaf_threshold == Some(0) {
            fail("leaf_threshold", "must be at least 1")?;
        }
        Ok(sweep)
    }

    pub fn options(&self) -> CellOptions {
        let d = CellOptions::default();
        let (weight_low, weight_high) = self.weight_range.unwrap_or((d.weight_low, d.weight_high));
        CellOptions {
            alpha: self.alpha.unwrap_or(d.alpha),
            weight_low,
            weight_high,
            reg: self.reg.unwrap_or(DEFAULT_REG),
            leaf_threshold: self.leaf_threshold.unwrap_or(d.leaf_threshold),
        }
    }

    /// Grid cells sorted by (algorithm, n, rows, seed).
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &algorithm in &self.algorithms {
            for &n in &self.n {
                for &rows in &self.rows {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            algorithm,
                            n,
                            rows,
                            seed,
                        });
                    }
                }
            }
        }
        out.sort_by(|a, b| {
            (a.algorithm, a.n, a.rows, a.seed).cmp(&(b.algorithm, b.n, b.rows, b.seed))
        });
        out.dedup();
        out
    }
}

pub const CSV_HEADER: &str = "algorithm,n,rows,seed,kl,tests,wall_ms";

/// Renders results as CSV, sorted by (algorithm, n, rows, seed).
pub fn to_csv(results: &[CellResult]) -> String {
    let mut sorted: Vec<&CellResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        let key = |r: &CellResult| (r.cell.algorithm, r.cell.n, r.cell.rows, r.cell.seed);
        key(a).cmp(&key(b))
    });
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        let c = r.cell;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.algorithm, c.n, c.rows, c.seed, r.kl, r.tests, r.wall_ms
        )
        .expect("writing to a String");
    }
    out
}
