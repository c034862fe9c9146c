//! Factor graphs over ±1 variables and exhaustive enumeration.
//!
//! Every exact engine in the crate works on a [`FactorGraph`]: a list of
//! variables (some possibly fixed) and log-factors over small variable sets.
//! Enumeration walks the free variables in Gray-code order inside a fixed
//! number of chunks, updating log-weights incrementally; chunk results are
//! combined in chunk order so the outcome is independent of the thread count.

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::lattice::{bit_of, Spin, MINUS, PLUS};
use crate::par::{self, LogSumExp};

/// Largest number of free variables exhaustive enumeration accepts.
pub const MAX_ENUMERATION_VARS: usize = 26;

const CHUNK_BITS: usize = 8;

/// Log-factor over a few variables; table index bit `k` is `vars[k] == +`.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    vars: SmallVec<[u32; 4]>,
    log_table: Vec<f64>,
}

impl Factor {
    pub fn new(vars: &[usize], log_table: Vec<f64>) -> Result<Self> {
        if log_table.len() != 1 << vars.len() {
            return Err(Error::InvalidArgument("factor table size mismatch".into()));
        }
        if log_table.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidArgument("factor entries must be < +inf".into()));
        }
        Ok(Self { vars: vars.iter().map(|&v| v as u32).collect(), log_table })
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.vars.iter().map(|&v| v as usize)
    }

    #[inline]
    pub fn eval(&self, assign: &[Spin]) -> f64 {
        let mut idx = 0usize;
        for (k, &v) in self.vars.iter().enumerate() {
            idx |= (bit_of(assign[v as usize]) as usize) << k;
        }
        self.log_table[idx]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorGraph {
    fixed: Vec<Option<Spin>>,
    factors: Vec<Factor>,
    incident: Vec<Vec<u32>>,
}

impl FactorGraph {
    pub fn new(n_vars: usize) -> Self {
        Self { fixed: vec![None; n_vars], factors: Vec::new(), incident: vec![Vec::new(); n_vars] }
    }

    pub fn n_vars(&self) -> usize {
        self.fixed.len()
    }

    pub fn fixed(&self) -> &[Option<Spin>] {
        &self.fixed
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn fix(&mut self, var: usize, spin: Spin) {
        self.fixed[var] = Some(spin);
    }

    pub fn with_fixed(&self, clamps: &[(usize, Spin)]) -> Self {
        let mut g = self.clone();
        for &(v, s) in clamps {
            g.fix(v, s);
        }
        g
    }

    pub fn add_factor(&mut self, factor: Factor) {
        let id = self.factors.len() as u32;
        for v in factor.vars() {
            if !self.incident[v].contains(&id) {
                self.incident[v].push(id);
            }
        }
        self.factors.push(factor);
    }

    /// Adds `log_weight(-)`, `log_weight(+)` for one variable.
    pub fn add_unary(&mut self, var: usize, minus: f64, plus: f64) {
        if minus == 0.0 && plus == 0.0 {
            return;
        }
        self.add_factor(Factor::new(&[var], vec![minus, plus]).expect("2 entries"));
    }

    /// Adds `k · s_a · s_b`.
    pub fn add_coupling(&mut self, a: usize, b: usize, k: f64) {
        if k == 0.0 {
            return;
        }
        self.add_factor(Factor::new(&[a, b], vec![k, -k, -k, k]).expect("4 entries"));
    }

    pub fn free_vars(&self) -> Vec<usize> {
        (0..self.n_vars()).filter(|&v| self.fixed[v].is_none()).collect()
    }

    pub fn log_weight(&self, assign: &[Spin]) -> f64 {
        self.factors.iter().map(|f| f.eval(assign)).sum()
    }

    /// Log-weight change when `var` flips from its current value.
    #[inline]
    pub fn flip_delta(&self, assign: &mut [Spin], var: usize) -> f64 {
        let before: f64 = self.incident[var].iter().map(|&f| self.factors[f as usize].eval(assign)).sum();
        assign[var] = -assign[var];
        let after: f64 = self.incident[var].iter().map(|&f| self.factors[f as usize].eval(assign)).sum();
        assign[var] = -assign[var];
        after - before
    }

    /// Log-weights of `var = -` and `var = +` up to a common constant.
    #[inline]
    pub fn local_log_weights(&self, assign: &mut [Spin], var: usize) -> (f64, f64) {
        let saved = assign[var];
        assign[var] = MINUS;
        let m: f64 = self.incident[var].iter().map(|&f| self.factors[f as usize].eval(assign)).sum();
        assign[var] = PLUS;
        let p: f64 = self.incident[var].iter().map(|&f| self.factors[f as usize].eval(assign)).sum();
        assign[var] = saved;
        (m, p)
    }

    fn check_size(&self) -> Result<usize> {
        let k = self.free_vars().len();
        if k > MAX_ENUMERATION_VARS {
            return Err(Error::SizeCap {
                what: "exhaustive enumeration (free variables)".into(),
                needed: k as u64,
                cap: MAX_ENUMERATION_VARS as u64,
            });
        }
        Ok(k)
    }

    /// Exact `log Σ exp(log_weight)` over all free assignments.
    pub fn log_partition(&self) -> Result<f64> {
        let chunks = enumerate(&[self], LogSumExp::default, |acc, _, _, lw| acc.push(lw[0]))?;
        let mut total = LogSumExp::default();
        for c in chunks {
            total.merge(c);
        }
        Ok(total.value())
    }

    /// Marginal law of `vars` (any order); index bit `k` is `vars[k] == +`.
    pub fn marginal(&self, vars: &[usize]) -> Result<Vec<f64>> {
        let k = vars.len();
        let chunks = enumerate(
            &[self],
            || vec![LogSumExp::default(); 1 << k],
            |acc, assign, _, lw| {
                let mut idx = 0usize;
                for (j, &v) in vars.iter().enumerate() {
                    idx |= (bit_of(assign[v]) as usize) << j;
                }
                acc[idx].push(lw[0]);
            },
        )?;
        let mut total = vec![LogSumExp::default(); 1 << k];
        for c in chunks {
            for (t, x) in total.iter_mut().zip(c) {
                t.merge(x);
            }
        }
        let logs: Vec<f64> = total.iter().map(|t| t.value()).collect();
        par::normalize_log(&logs).ok_or_else(|| Error::Engine("zero total weight".into()))
    }

    /// Normalized probabilities of all `2^n` full assignments (bit `v` = var `v`).
    pub fn dense_law(&self) -> Result<Vec<f64>> {
        let n = self.n_vars();
        if n > MAX_ENUMERATION_VARS {
            return Err(Error::SizeCap { what: "dense law".into(), needed: n as u64, cap: MAX_ENUMERATION_VARS as u64 });
        }
        let chunks = enumerate(&[self], Vec::new, |acc: &mut Vec<(u64, f64)>, _, code, lw| acc.push((code, lw[0])))?;
        let mut logw = vec![f64::NEG_INFINITY; 1usize << n];
        for c in chunks {
            for (code, w) in c {
                logw[code as usize] = w;
            }
        }
        par::normalize_log(&logw).ok_or_else(|| Error::Engine("zero total weight".into()))
    }
}

/// Visits every assignment of the free variables of `graphs[0]` (all graphs
/// must share variables and fixed values). The visitor receives the chunk
/// accumulator, the assignment, its full bit code and each graph's log-weight.
pub fn enumerate<R, I, V>(graphs: &[&FactorGraph], init: I, visit: V) -> Result<Vec<R>>
where
    R: Send,
    I: Fn() -> R + Sync + Send,
    V: Fn(&mut R, &[Spin], u64, &[f64]) + Sync + Send,
{
    let base = graphs[0];
    let k = base.check_size()?;
    if graphs.iter().any(|g| g.fixed != base.fixed) {
        return Err(Error::InvalidArgument("graphs must share fixed variables".into()));
    }
    let free = base.free_vars();
    let top = k.min(CHUNK_BITS);
    let low = k - top;
    let n_chunks = 1usize << top;
    Ok(par::map_range(n_chunks, |chunk| {
        let mut acc = init();
        let mut assign: Vec<Spin> = base.fixed.iter().map(|f| f.unwrap_or(MINUS)).collect();
        for t in 0..top {
            if chunk >> t & 1 == 1 {
                assign[free[low + t]] = PLUS;
            }
        }
        let mut code = assign.iter().enumerate().fold(0u64, |a, (i, &s)| a | bit_of(s) << i);
        let mut lw: SmallVec<[f64; 4]> = graphs.iter().map(|g| g.log_weight(&assign)).collect();
        visit(&mut acc, &assign, code, &lw);
        for step in 1u64..(1u64 << low) {
            let v = free[step.trailing_zeros() as usize];
            for (w, g) in lw.iter_mut().zip(graphs) {
                let d = g.flip_delta(&mut assign, v);
                *w += d;
            }
            assign[v] = -assign[v];
            code ^= 1 << v;
            // -inf arithmetic: recompute when a hard constraint was involved
            if lw.iter().any(|w| w.is_nan()) {
                for (w, g) in lw.iter_mut().zip(graphs) {
                    *w = g.log_weight(&assign);
                }
            }
            visit(&mut acc, &assign, code, &lw);
        }
        acc
    }))
}
