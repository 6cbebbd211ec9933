//! Pearson χ² tests of context-specific and conditional independence.

use serde::{Deserialize, Serialize};

use crate::counts::{ContingencyTable, CountIndex};
use crate::dataset::Context;
use crate::error::{Error, Result};
use crate::special::chi_square_sf;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Tests with fewer than this many samples per degree of freedom abstain.
pub const MIN_SAMPLES_PER_DOF: u64 = 5;

/// Largest stratified dof accepted before refusing to test.
pub const MAX_DOF: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Independent,
    Dependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    pub effective_n: u64,
    pub decision: Decision,
    /// False when the sample-size rule fired and the test abstained.
    pub reliable: bool,
}

impl TestResult {
    pub fn independent(&self) -> bool {
        self.decision == Decision::Independent
    }
}

/// Sums per-stratum statistics; a single stratum is the plain χ² test.
struct Stratified {
    statistic: f64,
    dof: u64,
    effective_n: u64,
    nominal_dof: u64,
}

impl Stratified {
    fn new(nominal_dof: u64) -> Self {
        Stratified {
            statistic: 0.0,
            dof: 0,
            effective_n: 0,
            nominal_dof,
        }
    }

    fn add(&mut self, table: &ContingencyTable) {
        if table.total == 0 {
            return;
        }
        let (r, c) = table.dims();
        let rows = table.row_sums();
        let cols = table.col_sums();
        let total = table.total as f64;
        let mut stat = 0.0;
        for (u, &ru) in rows.iter().enumerate() {
            for (v, &cv) in cols.iter().enumerate() {
                let expected = ru as f64 * cv as f64 / total;
                if expected > 0.0 {
                    let diff = table.get(u, v) as f64 - expected;
                    stat += diff * diff / expected;
                }
            }
        }
        let zero_rows = rows.iter().filter(|&&s| s == 0).count();
        let zero_cols = cols.iter().filter(|&&s| s == 0).count();
        let dof = ((r - 1) * (c - 1)).saturating_sub(zero_rows + zero_cols);
        self.statistic += stat;
        self.dof += dof as u64;
        self.effective_n += table.total;
    }

    fn finish(self, alpha: f64) -> TestResult {
        if self.effective_n == 0 {
            return TestResult {
                statistic: 0.0,
                dof: self.nominal_dof.max(1),
                p_value: 1.0,
                effective_n: 0,
                decision: Decision::Independent,
                reliable: false,
            };
        }
        let dof = self.dof.max(1);
        let p_value = chi_square_sf(self.statistic, dof as f64);
        let reliable = self.effective_n >= MIN_SAMPLES_PER_DOF * dof;
        let decision = if !reliable || p_value > alpha {
            Decision::Independent
        } else {
            Decision::Dependent
        };
        TestResult {
            statistic: self.statistic,
            dof,
            p_value,
            effective_n: self.effective_n,
            decision,
            reliable,
        }
    }
}

/// Pearson's χ² test of independence on a two-way table.
pub fn chi_square(table: &ContingencyTable, alpha: f64) -> Result<TestResult> {
    let (r, c) = table.dims();
    if r < 2 || c < 2 {
        return Err(Error::Precondition(format!(
            "contingency table must be at least 2x2, got {r}x{c}"
        )));
    }
    let mut acc = Stratified::new(((r - 1) * (c - 1)) as u64);
    acc.add(table);
    Ok(acc.finish(alpha))
}

/// Tests `X_a ⊥ X_b` in the stratum of rows matching the assignment `ctx`.
pub fn context_independent(
    ix: &CountIndex,
    a: usize,
    b: usize,
    ctx: &Context,
    alpha: f64,
) -> Result<TestResult> {
    chi_square(&ix.contingency(a, b, ctx)?, alpha)
}

/// Tests `X_a ⊥ X_b | X_U` by summing χ² over every assignment of `cond`.
pub fn conditional_independent(
    ix: &CountIndex,
    a: usize,
    b: usize,
    cond: &[usize],
    alpha: f64,
) -> Result<TestResult> {
    let schema = ix.schema();
    let n = schema.len();
    if a == b || a >= n || b >= n {
        return Err(Error::Precondition(format!("invalid test pair ({a}, {b})")));
    }
    let mut vars = cond.to_vec();
    vars.sort_unstable();
    vars.dedup();
    if vars.iter().any(|&v| v >= n || v == a || v == b) {
        return Err(Error::Precondition(format!(
            "conditioning set {cond:?} must exclude {a} and {b} and lie within n = {n}"
        )));
    }
    let pair_dof = ((schema.arity(a) - 1) * (schema.arity(b) - 1)) as u128;
    let strata = vars
        .iter()
        .try_fold(1u128, |acc, &v| acc.checked_mul(schema.arity(v) as u128))
        .unwrap_or(u128::MAX);
    let nominal = pair_dof.saturating_mul(strata);
    if nominal > MAX_DOF {
        return Err(Error::DofOverflow { dof: nominal });
    }

    let mut acc = Stratified::new(nominal as u64);
    let mut values = vec![0u32; vars.len()];
    loop {
        let ctx = Context::new(vars.clone(), values.clone())?;
        if ix.count(&ctx)? > 0 {
            acc.add(&ix.contingency(a, b, &ctx)?);
        }
        // odometer over val(U), last variable fastest
        let mut i = vars.len();
        loop {
            if i == 0 {
                return Ok(acc.finish(alpha));
            }
            i -= 1;
            values[i] += 1;
            if (values[i] as usize) < schema.arity(vars[i]) {
                break;
            }
            values[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, VariableSchema};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(rows: &[Vec<u64>]) -> ContingencyTable {
        ContingencyTable::from_rows(rows)
    }

    /// n(ad − bc)² / ((a+b)(c+d)(a+c)(b+d))
    fn closed_form_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
        let n = a + b + c + d;
        n * (a * d - b * c).powi(2) / ((a + b) * (c + d) * (a + c) * (b + d))
    }

    #[test]
    fn two_by_two_closed_form() {
        let r = chi_square(&table(&[vec![10, 20], vec![20, 10]]), 0.05).unwrap();
        assert!((r.statistic - closed_form_2x2(10.0, 20.0, 20.0, 10.0)).abs() < 1e-9);
        assert!((r.statistic - 6.666_666_666_666_667).abs() < 1e-9);
        assert_eq!(r.dof, 1);
        assert!((r.p_value - 0.009_823).abs() < 1e-5, "{}", r.p_value);
        assert_eq!(r.decision, Decision::Dependent);
        assert!(r.reliable);
    }

    #[test]
    fn uniform_table_is_independent() {
        let r = chi_square(&table(&[vec![5, 5], vec![5, 5]]), 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(r.independent());
    }

    #[test]
    fn degenerate_stratum_abstains() {
        let r = chi_square(&table(&[vec![3, 0], vec![0, 0]]), 0.05).unwrap();
        assert!(!r.reliable);
        assert!(r.independent());
        let empty = chi_square(&table(&[vec![0, 0], vec![0, 0]]), 0.05).unwrap();
        assert!(!empty.reliable);
        assert_eq!(empty.effective_n, 0);
        assert_eq!(empty.dof, 1);
        assert!(chi_square(&table(&[vec![1, 2]]), 0.05).is_err());
    }

    #[test]
    fn zero_rows_reduce_dof() {
        let r = chi_square(
            &table(&[vec![10, 20, 5], vec![0, 0, 0], vec![20, 10, 5]]),
            0.05,
        )
        .unwrap();
        assert_eq!(r.dof, 3);
    }

    fn binary_data(rows: Vec<Vec<u32>>) -> CountIndex {
        let n = rows[0].len();
        CountIndex::build(&Dataset::new(VariableSchema::binary(n), rows).unwrap(), 16).unwrap()
    }

    #[test]
    fn perfect_association_is_dependent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = (0..1000)
            .map(|_| {
                let x = rng.gen_range(0..2);
                vec![x, x, rng.gen_range(0..2)]
            })
            .collect();
        let ix = binary_data(rows);
        let r = context_independent(&ix, 0, 1, &Context::empty(), 0.05).unwrap();
        assert!((r.statistic - 1000.0).abs() < 1e-9);
        assert_eq!(r.decision, Decision::Dependent);
        let r = conditional_independent(&ix, 0, 1, &[2], 0.05).unwrap();
        assert_eq!(r.decision, Decision::Dependent);
        assert_eq!(r.dof, 2);
    }

    #[test]
    fn empty_context_abstains() {
        let ix = binary_data(vec![vec![0, 0, 0], vec![1, 1, 0]]);
        let r = context_independent(&ix, 0, 1, &Context::empty().with(2, 1), 0.05).unwrap();
        assert!(!r.reliable);
        assert!(r.independent());
    }

    #[test]
    fn conditional_with_empty_set_matches_context_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = (0..300)
            .map(|_| (0..3).map(|_| rng.gen_range(0..2)).collect())
            .collect();
        let ix = binary_data(rows);
        let a = conditional_independent(&ix, 0, 2, &[], 0.05).unwrap();
        let b = context_independent(&ix, 0, 2, &Context::empty(), 0.05).unwrap();
        assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_rejects_bad_sets() {
        let ix = binary_data(vec![vec![0, 0, 0]]);
        assert!(conditional_independent(&ix, 0, 1, &[1], 0.05).is_err());
        assert!(conditional_independent(&ix, 0, 0, &[], 0.05).is_err());
        assert!(conditional_independent(&ix, 0, 1, &[7], 0.05).is_err());
    }

    #[test]
    fn dof_overflow_is_reported() {
        let n = 24;
        let ix = binary_data(vec![vec![0; n]]);
        let cond: Vec<usize> = (2..n).collect();
        assert!(matches!(
            conditional_independent(&ix, 0, 1, &cond, 0.05),
            Err(Error::DofOverflow { .. })
        ));
    }

    #[test]
    fn independent_given_common_cause() {
        let mut hits = 0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let rows = (0..5000)
                .map(|_| {
                    let c = rng.gen_range(0..2u32);
                    let a = c ^ u32::from(rng.gen_bool(0.2));
                    let b = c ^ u32::from(rng.gen_bool(0.2));
                    vec![a, b, c]
                })
                .collect();
            let ix = binary_data(rows);
            if conditional_independent(&ix, 0, 1, &[2], 0.05)
                .unwrap()
                .independent()
            {
                hits += 1;
            }
        }
        assert!(hits >= 45, "{hits}/50");
    }

    #[test]
    fn false_positive_rate_near_alpha() {
        let mut dependent = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = (0..1000)
                .map(|_| vec![rng.gen_range(0..2), rng.gen_range(0..2)])
                .collect();
            let ix = binary_data(rows);
            let r = context_independent(&ix, 0, 1, &Context::empty(), 0.05).unwrap();
            if !r.independent() {
                dependent += 1;
            }
        }
        let rate = dependent as f64 / 200.0;
        assert!((rate - 0.05).abs() <= 0.05, "rate {rate}");
    }

    fn small_table() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..5, 2usize..5).prop_flat_map(|(r, c)| {
            proptest::collection::vec(proptest::collection::vec(0u64..60, c), r)
        })
    }

    proptest! {
        #[test]
        fn symmetric_in_variables(cells in small_table()) {
            let t = table(&cells);
            let a = chi_square(&t, 0.05).unwrap();
            let b = chi_square(&t.transposed(), 0.05).unwrap();
            prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
            prop_assert_eq!(a.dof, b.dof);
            prop_assert!((a.p_value - b.p_value).abs() <= 1e-9);
        }

        #[test]
        fn statistic_scales_with_counts(cells in small_table(), k in 1u64..20) {
            let t = table(&cells);
            let scaled: Vec<Vec<u64>> = cells.iter().map(|r| r.iter().map(|&c| c * k).collect()).collect();
            let a = chi_square(&t, 0.05).unwrap();
            let b = chi_square(&table(&scaled), 0.05).unwrap();
            prop_assert!((b.statistic - k as f64 * a.statistic).abs() <= 1e-9 * b.statistic.max(1.0));
            prop_assert_eq!(a.dof, b.dof);
        }

        #[test]
        fn outer_products_have_zero_statistic(
            rows in proptest::collection::vec(0u64..10, 2..5),
            cols in proptest::collection::vec(0u64..10, 2..5),
        ) {
            let cells: Vec<Vec<u64>> = rows.iter().map(|&r| cols.iter().map(|&c| r * c).collect()).collect();
            let res = chi_square(&table(&cells), 0.05).unwrap();
            prop_assert!(res.statistic.abs() < 1e-9);
        }

        #[test]
        fn result_invariants(cells in small_table(), alpha in 0.001f64..0.5, bump in 0.0f64..0.4) {
            let r = chi_square(&table(&cells), alpha).unwrap();
            prop_assert!(r.statistic >= 0.0);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert!(r.dof >= 1);
            prop_assert_eq!(r.independent(), r.p_value > alpha || !r.reliable);
            if !r.independent() {
                let wider = chi_square(&table(&cells), (alpha + bump).min(1.0)).unwrap();
                prop_assert!(!wider.independent());
            }
        }
    }
}
