//! Column-by-column dynamic programming over a [`FactorGraph`].
//!
//! Variables are grouped into ordered columns. Every factor must live inside
//! one column or span two consecutive columns; with `wrap` set, factors may
//! also join the last column to the first, which covers rings and tori.

use crate::error::{Error, Result};
use crate::lattice::{Spin, MINUS, PLUS};
use crate::par::{self, LogSumExp};

use super::factor::FactorGraph;

/// Widest column (free variables) the DP accepts.
pub const MAX_COLUMN_WIDTH: usize = 12;

#[derive(Clone, Debug)]
pub struct ColumnPlan {
    columns: Vec<Vec<usize>>,
    /// Per factor: the column it is charged to, or `None` for a wrap factor.
    owner: Vec<Option<usize>>,
    wrap: bool,
}

impl ColumnPlan {
    /// Groups variables by `key` (ascending key order = column order).
    pub fn new(graph: &FactorGraph, key: &[i64], wrap: bool) -> Result<Self> {
        if key.len() != graph.n_vars() {
            return Err(Error::InvalidArgument("one column key per variable".into()));
        }
        let mut keys: Vec<i64> = key.to_vec();
        keys.sort_unstable();
        keys.dedup();
        let col_of: Vec<usize> = key.iter().map(|k| keys.binary_search(k).expect("key present")).collect();
        let mut columns = vec![Vec::new(); keys.len()];
        for (v, &c) in col_of.iter().enumerate() {
            columns[c].push(v);
        }
        let n_cols = columns.len();
        for col in &columns {
            let free = col.iter().filter(|&&v| graph.fixed()[v].is_none()).count();
            if free > MAX_COLUMN_WIDTH {
                return Err(Error::SizeCap {
                    what: "column width".into(),
                    needed: free as u64,
                    cap: MAX_COLUMN_WIDTH as u64,
                });
            }
        }
        let mut owner = Vec::with_capacity(graph.factors().len());
        for f in graph.factors() {
            let cols: Vec<usize> = f.vars().map(|v| col_of[v]).collect();
            let lo = *cols.iter().min().unwrap_or(&0);
            let hi = *cols.iter().max().unwrap_or(&0);
            if hi - lo <= 1 {
                owner.push(Some(hi));
            } else if wrap && lo == 0 && hi == n_cols - 1 && cols.iter().all(|&c| c == 0 || c == n_cols - 1) {
                owner.push(None);
            } else {
                return Err(Error::Engine("factor spans non-adjacent columns".into()));
            }
        }
        Ok(Self { columns, owner, wrap })
    }

    /// Groups by the first coordinate after integer division by `group`.
    pub fn by_x(graph: &FactorGraph, xs: &[i64], group: i64, wrap: bool) -> Result<Self> {
        let key: Vec<i64> = xs.iter().map(|x| x.div_euclid(group)).collect();
        Self::new(graph, &key, wrap)
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }
}

/// Exact `log Z` by the column recursion.
pub fn log_partition(graph: &FactorGraph, plan: &ColumnPlan) -> Result<f64> {
    if plan.owner.len() != graph.factors().len() {
        return Err(Error::InvalidArgument("plan built for a different graph".into()));
    }
    let c0_free = free_of(graph, &plan.columns[0]);
    let has_wrap = plan.wrap && plan.owner.iter().any(|o| o.is_none());
    if !has_wrap {
        return Ok(sweep(graph, plan, None));
    }
    // fix the first column, close the ring at the end
    let parts = par::map_range(1usize << c0_free.len(), |s0| sweep(graph, plan, Some(s0 as u64)));
    let mut acc = LogSumExp::default();
    for p in parts {
        acc.push(p);
    }
    Ok(acc.value())
}

/// Marginal law of `vars` by clamping; index bit `k` is `vars[k] == +`.
pub fn marginal(graph: &FactorGraph, plan: &ColumnPlan, vars: &[usize]) -> Result<Vec<f64>> {
    let k = vars.len();
    if k > 16 {
        return Err(Error::SizeCap { what: "clamped marginal".into(), needed: k as u64, cap: 16 });
    }
    let mut logs = Vec::with_capacity(1 << k);
    for c in 0u64..(1 << k) {
        let clamps: Vec<(usize, Spin)> =
            vars.iter().enumerate().map(|(j, &v)| (v, if c >> j & 1 == 1 { PLUS } else { MINUS })).collect();
        // a clamp contradicting a fixed variable has zero weight
        if clamps.iter().any(|&(v, s)| graph.fixed()[v].is_some_and(|f| f != s)) {
            logs.push(f64::NEG_INFINITY);
            continue;
        }
        logs.push(log_partition(&graph.with_fixed(&clamps), plan)?);
    }
    par::normalize_log(&logs).ok_or_else(|| Error::Engine("zero total weight".into()))
}

fn free_of(graph: &FactorGraph, col: &[usize]) -> Vec<usize> {
    col.iter().copied().filter(|&v| graph.fixed()[v].is_none()).collect()
}

fn set_state(assign: &mut [Spin], free: &[usize], s: u64) {
    for (j, &v) in free.iter().enumerate() {
        assign[v] = if s >> j & 1 == 1 { PLUS } else { MINUS };
    }
}

fn sweep(graph: &FactorGraph, plan: &ColumnPlan, first: Option<u64>) -> f64 {
    let mut assign: Vec<Spin> = graph.fixed().iter().map(|f| f.unwrap_or(MINUS)).collect();
    let by_col: Vec<Vec<usize>> = {
        let mut v = vec![Vec::new(); plan.columns.len()];
        for (i, o) in plan.owner.iter().enumerate() {
            if let Some(c) = o {
                v[*c].push(i);
            }
        }
        v
    };
    let wrap_factors: Vec<usize> = plan.owner.iter().enumerate().filter(|(_, o)| o.is_none()).map(|(i, _)| i).collect();
    let eval = |assign: &[Spin], ids: &[usize]| -> f64 {
        ids.iter().map(|&i| graph.factors()[i].eval(assign)).sum()
    };

    let free0 = free_of(graph, &plan.columns[0]);
    let states0: Vec<u64> = match first {
        Some(s) => vec![s],
        None => (0..1u64 << free0.len()).collect(),
    };
    // alpha indexed by state of the current column
    let mut alpha = vec![f64::NEG_INFINITY; 1 << free0.len()];
    for &s in &states0 {
        set_state(&mut assign, &free0, s);
        alpha[s as usize] = eval(&assign, &by_col[0]);
    }
    let mut prev_free = free0.clone();
    for c in 1..plan.columns.len() {
        let free = free_of(graph, &plan.columns[c]);
        let mut next = vec![f64::NEG_INFINITY; 1 << free.len()];
        for (s, slot) in next.iter_mut().enumerate() {
            set_state(&mut assign, &free, s as u64);
            let mut acc = LogSumExp::default();
            for (sp, &a) in alpha.iter().enumerate() {
                if a == f64::NEG_INFINITY {
                    continue;
                }
                set_state(&mut assign, &prev_free, sp as u64);
                acc.push(a + eval(&assign, &by_col[c]));
            }
            *slot = acc.value();
        }
        alpha = next;
        prev_free = free;
    }
    if let Some(s0) = first {
        set_state(&mut assign, &free0, s0);
        let mut acc = LogSumExp::default();
        let last = plan.columns.len() - 1;
        let free_last = free_of(graph, &plan.columns[last]);
        for (s, &a) in alpha.iter().enumerate() {
            if a == f64::NEG_INFINITY {
                continue;
            }
            set_state(&mut assign, &free_last, s as u64);
            acc.push(a + eval(&assign, &wrap_factors));
        }
        return acc.value();
    }
    par::log_sum_exp(&alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize, k: f64, ring: bool) -> FactorGraph {
        let mut g = FactorGraph::new(n);
        for i in 0..n - 1 {
            g.add_coupling(i, i + 1, k);
            g.add_unary(i, -0.2, 0.2);
        }
        g.add_unary(n - 1, -0.2, 0.2);
        if ring {
            g.add_coupling(n - 1, 0, k);
        }
        g
    }

    #[test]
    fn matches_enumeration_open_and_ring() {
        for ring in [false, true] {
            let g = chain(10, 0.7, ring);
            let xs: Vec<i64> = (0..10).collect();
            let plan = ColumnPlan::by_x(&g, &xs, 1, ring).unwrap();
            let a = log_partition(&g, &plan).unwrap();
            let b = g.log_partition().unwrap();
            assert!((a - b).abs() < 1e-12, "{a} {b}");
            let m1 = marginal(&g, &plan, &[3, 4]).unwrap();
            let m2 = g.marginal(&[3, 4]).unwrap();
            for (x, y) in m1.iter().zip(&m2) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grouped_columns_and_fixed_sites() {
        let mut g = chain(12, 0.4, false);
        g.add_coupling(2, 4, 0.3);
        g.fix(7, PLUS);
        let xs: Vec<i64> = (0..12).collect();
        assert!(ColumnPlan::by_x(&g, &xs, 1, false).is_err());
        let plan = ColumnPlan::by_x(&g, &xs, 2, false).unwrap();
        assert!((log_partition(&g, &plan).unwrap() - g.log_partition().unwrap()).abs() < 1e-12);
    }
}
