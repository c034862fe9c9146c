use serde::Serialize;

use crate::engines::factor::{enumerate, MAX_ENUMERATION_VARS};
use crate::error::{invalid, Error, Result};
use crate::lattice::{project_config, Region};
use crate::par;
use crate::specification::FiniteMeasure;

use super::recipe::MeasureRecipe;

/// `H(μ|ν) = Σ μ log(μ/ν)`; `+∞` when `μ` charges a `ν`-null configuration.
pub fn relative_entropy(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<f64> {
    if mu.support() != nu.support() {
        return Err(Error::RegionMismatch("relative entropy needs a common support".into()));
    }
    let mut h = Vec::with_capacity(mu.probs().len());
    for (&p, &q) in mu.probs().iter().zip(nu.probs()) {
        if p > 0.0 {
            if q == 0.0 {
                return Ok(f64::INFINITY);
            }
            h.push(p * (p / q).ln());
        }
    }
    Ok(par::ordered_sum(&h).max(0.0))
}

/// `H_Λ(μ|ν)` from two recipes, streamed over factorized log-densities when
/// both are available.
pub fn relative_entropy_on(mu: &MeasureRecipe, nu: &MeasureRecipe, region: &Region) -> Result<f64> {
    if region.len() <= MAX_ENUMERATION_VARS {
        if let (Some(a), Some(b)) = (mu.log_density(region)?, nu.log_density(region)?) {
            let (na, nb) = (a.log_norm, b.log_norm);
            let chunks = enumerate(&[&a.graph, &b.graph], || (Vec::new(), false), |acc, _, _, lw| {
                let lm = lw[0] - na;
                if lm == f64::NEG_INFINITY {
                    return;
                }
                let ln = lw[1] - nb;
                if ln == f64::NEG_INFINITY {
                    acc.1 = true;
                } else {
                    acc.0.push(lm.exp() * (lm - ln));
                }
            })?;
            let mut parts = Vec::with_capacity(chunks.len());
            for (terms, inf) in chunks {
                if inf {
                    return Ok(f64::INFINITY);
                }
                parts.push(par::ordered_sum(&terms));
            }
            return Ok(par::ordered_sum(&parts).max(0.0));
        }
    }
    relative_entropy(&mu.marginal(region)?, &nu.marginal(region)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyEntry {
    pub n: u32,
    pub sites: usize,
    pub h: f64,
    pub per_site: f64,
    /// `(H_n − H_{n−1}) / (|Λ_n| − |Λ_{n−1}|)`; absent at the first entry.
    pub increment: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropySeries {
    pub entries: Vec<EntropyEntry>,
    pub last_value: f64,
    pub last_increment: Option<f64>,
    pub method: &'static str,
}

impl EntropySeries {
    /// The per-added-site increment when available, else the last per-site value.
    pub fn estimate(&self) -> f64 {
        self.last_increment.unwrap_or(self.last_value)
    }
}

/// `H_{Λ_n}(μ|ν)` and `H/|Λ_n|` for `n = 0..=n_max`, entries computed concurrently.
pub fn entropy_density_series(mu: &MeasureRecipe, nu: &MeasureRecipe, n_max: u32) -> Result<EntropySeries> {
    if mu.dim() != nu.dim() {
        return invalid("measures live on different lattices");
    }
    let dim = mu.dim();
    let hs = par::map_range(n_max as usize + 1, |n| relative_entropy_on(mu, nu, &Region::cube(n as u32, dim)));
    let hs = hs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut entries: Vec<EntropyEntry> = Vec::with_capacity(hs.len());
    for (n, &h) in hs.iter().enumerate() {
        let sites = Region::cube(n as u32, dim).len();
        let increment = entries.last().map(|p| (h - p.h) / (sites - p.sites) as f64);
        entries.push(EntropyEntry { n: n as u32, sites, h, per_site: h / sites as f64, increment });
    }
    let last = entries.last().expect("n = 0 is always present");
    Ok(EntropySeries {
        last_value: last.per_site,
        last_increment: last.increment,
        method: "last per-site value and per-added-site increment",
        entries,
    })
}

/// `[H_Δ − H_{Δ'}] − ½ (Σ_σ ν(σ) |g_Δ(σ) − g_{Δ'}(σ)|)²` for `μ`, `ν` on `Δ`.
pub fn csiszar_gap(mu: &FiniteMeasure, nu: &FiniteMeasure, delta_prime: &Region) -> Result<f64> {
    let delta = mu.support();
    if !delta_prime.is_subset(delta) {
        return invalid("Δ' must lie inside Δ");
    }
    let h = relative_entropy(mu, nu)?;
    let mu_p = mu.marginal(delta_prime)?;
    let nu_p = nu.marginal(delta_prime)?;
    let hp = relative_entropy(&mu_p, &nu_p)?;
    if !h.is_finite() || !hp.is_finite() {
        return Err(Error::NotAbsolutelyContinuous("infinite relative entropy".into()));
    }
    let pos = delta.positions_of(delta_prime)?;
    let mut l1 = Vec::with_capacity(nu.probs().len());
    for (c, (&p, &q)) in mu.probs().iter().zip(nu.probs()).enumerate() {
        if q == 0.0 {
            continue;
        }
        let s = project_config(c as u64, &pos);
        let gp = mu_p.prob(s) / nu_p.prob(s);
        l1.push(q * (p / q - gp).abs());
    }
    let l1 = par::ordered_sum(&l1);
    Ok(h - hp - 0.5 * l1 * l1)
}
