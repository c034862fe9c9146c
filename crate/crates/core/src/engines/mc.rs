//! Heat-bath Monte Carlo with counter-addressed randomness.
//!
//! The uniform used for variable `v` in sweep `t` of chain `c` is the
//! `v`-th 64-bit output of ChaCha8 keyed by `seed`, stream `c`, starting at
//! word position `2 · n_vars · t`. Every variable consumes one draw per sweep
//! whether or not it is fixed, so draws never depend on the schedule.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{bit_of, Boundary, Interaction, LocalFunction, Region, Site, Spin, MINUS, PLUS};
use crate::par;

use super::factor::FactorGraph;
use super::ising_graph;

/// Batches per chain for the batch-means error bar.
pub const BATCHES_PER_CHAIN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub seed: u64,
    pub chains: u32,
    /// Total sweeps per chain, burn-in included.
    pub sweeps: u64,
    pub burn_in: u64,
    pub sweeps_per_sample: u64,
}

impl McConfig {
    pub fn new(seed: u64, chains: u32, sweeps: u64, burn_in: u64) -> Self {
        Self { seed, chains, sweeps, burn_in, sweeps_per_sample: 1 }
    }

    fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.sweeps_per_sample == 0 {
            return invalid("need at least one chain and a positive sample spacing");
        }
        if self.sweeps <= self.burn_in {
            return invalid("sweeps must exceed burn-in");
        }
        Ok(())
    }

    pub fn samples_per_chain(&self) -> usize {
        ((self.sweeps - self.burn_in) / self.sweeps_per_sample) as usize
    }
}

/// Recorded Monte Carlo output on a window.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStream {
    pub config: McConfig,
    pub window: Region,
    pub constraints: Vec<(Site, Spin)>,
    /// Per chain, samples concatenated (`window.len()` spins each).
    pub samples: Vec<Vec<Spin>>,
}

impl SampleStream {
    pub fn n_sites(&self) -> usize {
        self.window.len()
    }

    pub fn chain_samples(&self, chain: usize) -> impl Iterator<Item = &[Spin]> {
        self.samples[chain].chunks(self.window.len().max(1))
    }
}

fn uniform_stream(seed: u64, chain: u32, sweep: u64, n_vars: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng.set_word_pos(2 * n_vars as u128 * sweep as u128);
    rng
}

#[inline]
fn to_unit(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn heat_bath(graph: &FactorGraph, state: &mut [Spin], v: usize, u: f64) {
    let (m, p) = graph.local_log_weights(state, v);
    let p_plus = if p == f64::NEG_INFINITY {
        0.0
    } else if m == f64::NEG_INFINITY {
        1.0
    } else {
        1.0 / (1.0 + (m - p).exp())
    };
    state[v] = if u < p_plus { PLUS } else { MINUS };
}

fn initial_state(graph: &FactorGraph, start: Spin) -> Vec<Spin> {
    graph.fixed().iter().map(|f| f.unwrap_or(start)).collect()
}

fn run_chain(graph: &FactorGraph, cfg: &McConfig, chain: u32) -> Vec<Spin> {
    let start = if chain.is_multiple_of(2) { PLUS } else { MINUS };
    let mut state = initial_state(graph, start);
    let n = graph.n_vars();
    let free = graph.free_vars();
    let mut out = Vec::with_capacity(cfg.samples_per_chain() * n);
    for t in 0..cfg.sweeps {
        let mut rng = uniform_stream(cfg.seed, chain, t, n);
        let mut fi = 0;
        for v in 0..n {
            let u = to_unit(rng.next_u64());
            if fi < free.len() && free[fi] == v {
                heat_bath(graph, &mut state, v, u);
                fi += 1;
            }
        }
        if t >= cfg.burn_in && (t + 1 - cfg.burn_in).is_multiple_of(cfg.sweeps_per_sample) {
            out.extend_from_slice(&state);
        }
    }
    out
}

/// Samples a factor graph whose variables are the sites of `window`.
pub fn mc_sample_graph(graph: &FactorGraph, window: &Region, cfg: &McConfig) -> Result<SampleStream> {
    cfg.validate()?;
    if graph.n_vars() != window.len() {
        return Err(Error::RegionMismatch("graph variables must match the window".into()));
    }
    let samples = par::map_range(cfg.chains as usize, |c| run_chain(graph, cfg, c as u32));
    let constraints = graph
        .fixed()
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.map(|s| (window.sites()[i], s)))
        .collect();
    Ok(SampleStream { config: *cfg, window: window.clone(), constraints, samples })
}

/// Heat-bath sampling of the Ising model on `window`.
pub fn mc_sample(
    phi: &Interaction,
    window: &Region,
    boundary: &Boundary,
    constraints: &[(Site, Spin)],
    cfg: &McConfig,
) -> Result<SampleStream> {
    let g = ising_graph(phi, window, boundary, constraints)?;
    mc_sample_graph(&g, window, cfg)
}

/// Two chains driven by the same uniforms, one started below the other.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledRun {
    pub lower: SampleStream,
    pub upper: SampleStream,
    /// Sweeps (all chains, burn-in included) where lower ≤ upper sitewise.
    pub dominated_sweeps: u64,
    pub total_sweeps: u64,
}

/// Runs `lower` from all-minus and `upper` from all-plus with shared
/// randomness. The graphs must share variables and fixed sites.
pub fn mc_coupled(lower: &FactorGraph, upper: &FactorGraph, window: &Region, cfg: &McConfig) -> Result<CoupledRun> {
    cfg.validate()?;
    if lower.n_vars() != window.len() || upper.n_vars() != window.len() {
        return Err(Error::RegionMismatch("graph variables must match the window".into()));
    }
    let free = lower.free_vars();
    if free != upper.free_vars() {
        return invalid("coupled graphs must fix the same variables");
    }
    let n = window.len();
    let runs = par::map_range(cfg.chains as usize, |c| {
        let mut lo = initial_state(lower, MINUS);
        let mut hi = initial_state(upper, PLUS);
        let mut out_lo = Vec::new();
        let mut out_hi = Vec::new();
        let mut dominated = 0u64;
        for t in 0..cfg.sweeps {
            let mut rng = uniform_stream(cfg.seed, c as u32, t, n);
            let mut fi = 0;
            for v in 0..n {
                let u = to_unit(rng.next_u64());
                if fi < free.len() && free[fi] == v {
                    heat_bath(lower, &mut lo, v, u);
                    heat_bath(upper, &mut hi, v, u);
                    fi += 1;
                }
            }
            if lo.iter().zip(&hi).all(|(a, b)| a <= b) {
                dominated += 1;
            }
            if t >= cfg.burn_in && (t + 1 - cfg.burn_in).is_multiple_of(cfg.sweeps_per_sample) {
                out_lo.extend_from_slice(&lo);
                out_hi.extend_from_slice(&hi);
            }
        }
        (out_lo, out_hi, dominated)
    });
    let mut dominated_sweeps = 0;
    let mut s_lo = Vec::new();
    let mut s_hi = Vec::new();
    for (a, b, d) in runs {
        s_lo.push(a);
        s_hi.push(b);
        dominated_sweeps += d;
    }
    let cons = |g: &FactorGraph| -> Vec<(Site, Spin)> {
        g.fixed().iter().enumerate().filter_map(|(i, f)| f.map(|s| (window.sites()[i], s))).collect()
    };
    Ok(CoupledRun {
        lower: SampleStream { config: *cfg, window: window.clone(), constraints: cons(lower), samples: s_lo },
        upper: SampleStream { config: *cfg, window: window.clone(), constraints: cons(upper), samples: s_hi },
        dominated_sweeps,
        total_sweeps: cfg.sweeps * cfg.chains as u64,
    })
}

/// Batch-means estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
    pub batches: usize,
}

/// Error bar formula recorded in manifests.
pub const ERROR_BAR_FORMULA: &str =
    "each chain split into 10 equal consecutive batches; SE = sd(batch means) / sqrt(#batches), pooled over chains";

/// Mean of `f` with a batch-means standard error.
pub fn empirical_estimate(stream: &SampleStream, f: &LocalFunction) -> Result<Estimate> {
    let pos = stream.window.positions_of(f.support())?;
    let per_chain = stream.config.samples_per_chain();
    let batch = per_chain / BATCHES_PER_CHAIN;
    if batch == 0 {
        return invalid("too few samples for batch means");
    }
    let mut means = Vec::new();
    for c in 0..stream.samples.len() {
        let values: Vec<f64> = stream
            .chain_samples(c)
            .map(|s| {
                let code = pos.iter().enumerate().fold(0u64, |a, (k, &p)| a | bit_of(s[p]) << k);
                f.value(code)
            })
            .collect();
        for b in 0..BATCHES_PER_CHAIN {
            let chunk = &values[b * batch..(b + 1) * batch];
            means.push(par::ordered_sum(chunk) / batch as f64);
        }
    }
    let nb = means.len();
    let mean = par::ordered_sum(&means) / nb as f64;
    let var = if nb > 1 { means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (nb - 1) as f64 } else { 0.0 };
    Ok(Estimate { mean, standard_error: (var / nb as f64).sqrt(), batches: nb })
}

/// Autocorrelation of `f` at lags `1..=max_lag`, averaged over chains.
pub fn autocorrelation(stream: &SampleStream, f: &LocalFunction, max_lag: usize) -> Result<Vec<f64>> {
    let pos = stream.window.positions_of(f.support())?;
    let mut acc = vec![0.0; max_lag];
    for c in 0..stream.samples.len() {
        let x: Vec<f64> = stream
            .chain_samples(c)
            .map(|s| f.value(pos.iter().enumerate().fold(0u64, |a, (k, &p)| a | bit_of(s[p]) << k)))
            .collect();
        let n = x.len();
        let m = x.iter().sum::<f64>() / n as f64;
        let v: f64 = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n as f64;
        for lag in 1..=max_lag.min(n.saturating_sub(1)) {
            let cov: f64 = (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64;
            acc[lag - 1] += if v > 0.0 { cov / v } else { 0.0 };
        }
    }
    let k = stream.samples.len() as f64;
    Ok(acc.into_iter().map(|a| a / k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Dim;

    #[test]
    fn deterministic_and_constraint_respecting() {
        let w = Region::cube(3, Dim::One);
        let cfg = McConfig::new(7, 2, 60, 10);
        let cons = [(Site::d1(0), PLUS)];
        let a = mc_sample(&Interaction::ising(0.8), &w, &Boundary::Free, &cons, &cfg).unwrap();
        let b = mc_sample(&Interaction::ising(0.8), &w, &Boundary::Free, &cons, &cfg).unwrap();
        assert_eq!(a, b);
        for c in 0..2 {
            assert!(a.chain_samples(c).all(|s| s[3] == PLUS));
        }
    }

    #[test]
    fn constant_function_has_zero_error() {
        let w = Region::cube(1, Dim::One);
        let s = mc_sample(&Interaction::ising(0.0), &w, &Boundary::Free, &[], &McConfig::new(1, 1, 30, 0)).unwrap();
        let e = empirical_estimate(&s, &LocalFunction::constant(Dim::One, 2.5)).unwrap();
        assert_eq!(e.mean, 2.5);
        assert_eq!(e.standard_error, 0.0);
    }
}
