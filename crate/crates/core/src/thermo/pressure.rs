use serde::{Deserialize, Serialize};

use crate::engines::{Factor, FactorGraph};
use crate::error::{invalid, Result};
use crate::lattice::{Dim, LocalFunction, Region, Site};
use crate::par::{self, LogSumExp};

use super::recipe::{log_partition_auto, MeasureRecipe};

/// How `ν[exp Σ_{x∈Λ_n} τ_x f]` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureMode {
    /// Ring or torus of side `2n+1`, translates wrapped.
    Periodic,
    /// Marginal of `ν` on `Λ_n` enlarged by the support of `f`.
    Open,
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureEntry {
    pub n: u32,
    pub sites: usize,
    pub log_z: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureSeries {
    pub entries: Vec<PressureEntry>,
    pub estimate: f64,
    pub method: &'static str,
}

/// Per-site growth rate of `Z_k = e^{L_k}` from the last four entries,
/// assuming `Z_k = a r_1^k + b r_2^k` with equal site increments. `None`
/// when the fit is degenerate.
pub fn prony_rate(log_z: &[f64], sites: &[usize]) -> Option<f64> {
    let k = log_z.len();
    if k < 4 {
        return None;
    }
    let l = &log_z[k - 4..];
    let s = &sites[k - 4..];
    let step = s[1] - s[0];
    if s[2] - s[1] != step || s[3] - s[2] != step || step == 0 {
        return None;
    }
    let shift = l[3] - l[2];
    let y: Vec<f64> = (0..4).map(|i| (l[i] - l[3] + (3 - i) as f64 * shift).exp()).collect();
    let det = y[1] * y[1] - y[0] * y[2];
    let scale = (y[1] * y[1]).max((y[0] * y[2]).abs());
    if !(det.abs() > 1e-8 * scale) {
        return None;
    }
    let c1 = (y[2] * y[1] - y[0] * y[3]) / det;
    let c2 = (y[1] * y[3] - y[2] * y[2]) / det;
    let disc = c1 * c1 + 4.0 * c2;
    if disc < 0.0 {
        return None;
    }
    let r = 0.5 * (c1 + disc.sqrt());
    if !(r > 0.0) {
        return None;
    }
    Some((shift + r.ln()) / step as f64)
}

fn wrap_coord(c: i64, n: i64) -> i64 {
    (c + n).rem_euclid(2 * n + 1) - n
}

fn translates(f: &LocalFunction, lambda: &Region, periodic: Option<i64>) -> Result<Vec<LocalFunction>> {
    lambda
        .sites()
        .iter()
        .map(|x| {
            let t = f.translate(x.coords)?;
            match periodic {
                None => Ok(t),
                Some(n) => {
                    let dim = lambda.dim();
                    let sites: Vec<Site> = t
                        .support()
                        .sites()
                        .iter()
                        .map(|s| match dim {
                            Dim::One => Site::d1(wrap_coord(s.coords[0], n)),
                            Dim::Two => Site::d2(wrap_coord(s.coords[0], n), wrap_coord(s.coords[1], n)),
                        })
                        .collect();
                    // a wrapped support keeps its bit order only up to sorting
                    let support = Region::explicit(dim, sites.clone())?;
                    LocalFunction::from_fn(support.clone(), |spins| {
                        t.eval_by(|site| {
                            let i = t.support().index_of(site).expect("translate site");
                            spins[support.index_of(sites[i]).expect("wrapped site")]
                        })
                    })
                }
            }
        })
        .collect()
}

fn add_translates(g: &mut FactorGraph, window: &Region, fs: &[LocalFunction]) -> Result<()> {
    for t in fs {
        let vars = window.positions_of(t.support())?;
        g.add_factor(Factor::new(&vars, t.table().to_vec())?);
    }
    Ok(())
}

fn log_z_open(f: &LocalFunction, nu: &MeasureRecipe, lambda: &Region) -> Result<f64> {
    let fs = translates(f, lambda, None)?;
    let mut w = lambda.clone();
    for t in &fs {
        w = w.union(t.support());
    }
    match nu.log_density(&w)? {
        Some(d) => {
            let mut g = d.graph;
            add_translates(&mut g, &w, &fs)?;
            Ok(log_partition_auto(&g, &d.xs, false)? - d.log_norm)
        }
        None => {
            let m = nu.marginal(&w)?;
            let pos: Vec<Vec<usize>> = fs.iter().map(|t| w.positions_of(t.support())).collect::<Result<_>>()?;
            let mut acc = LogSumExp::default();
            for (c, &p) in m.probs().iter().enumerate() {
                if p > 0.0 {
                    let s: f64 =
                        fs.iter().zip(&pos).map(|(t, q)| t.value(crate::lattice::project_config(c as u64, q))).sum();
                    acc.push(p.ln() + s);
                }
            }
            Ok(acc.value())
        }
    }
}

fn ring_graph(nu: &MeasureRecipe, lambda: &Region) -> Result<FactorGraph> {
    let n = lambda.len();
    let mut g = FactorGraph::new(n);
    if let MeasureRecipe::Product { p_plus, .. } = nu.simplify() {
        for i in 0..n {
            g.add_unary(i, (1.0 - p_plus).ln(), p_plus.ln());
        }
        return Ok(g);
    }
    match (nu.as_markov(), lambda.dim()) {
        (Some(c), Dim::One) => {
            let p = c.transition();
            let table = vec![p[0][0].ln(), p[1][0].ln(), p[0][1].ln(), p[1][1].ln()];
            for i in 0..n {
                g.add_factor(Factor::new(&[i, (i + 1) % n], table.clone())?);
            }
            Ok(g)
        }
        _ => invalid("periodic evaluation needs a product measure or a chain"),
    }
}

/// `(log Z_f, log Z_0)` on the ring: tilted and untilted unnormalized sums.
fn log_z_periodic(f: &LocalFunction, nu: &MeasureRecipe, n: u32) -> Result<(f64, f64)> {
    let lambda = Region::cube(n, nu.dim());
    let fs = translates(f, &lambda, Some(n as i64))?;
    let xs: Vec<i64> = lambda.sites().iter().map(|s| s.coords[0]).collect();
    let base = ring_graph(nu, &lambda)?;
    let z0 = log_partition_auto(&base, &xs, true)?;
    let mut g = base;
    add_translates(&mut g, &lambda, &fs)?;
    Ok((log_partition_auto(&g, &xs, true)?, z0))
}

fn rate(log_z: &[f64], sites: &[usize]) -> Option<f64> {
    if log_z.iter().all(|&v| v == 0.0) {
        return Some(0.0);
    }
    prony_rate(log_z, sites)
}

/// `(1/|Λ_n|) log ν[exp Σ_{x∈Λ_n} τ_x f]` for `n` up to `n_max`, with an
/// extrapolated estimate (two-exponential fit on each sum, else its last
/// per-added-site increment).
pub fn pressure_estimate(f: &LocalFunction, nu: &MeasureRecipe, n_max: u32, mode: PressureMode) -> Result<PressureSeries> {
    if f.support().dim() != nu.dim() {
        return invalid("f and ν live on different lattices");
    }
    let width = f.support().radius().max(0) as u32;
    let n_min = match mode {
        PressureMode::Open => 0,
        PressureMode::Periodic => width,
    };
    if n_max < n_min {
        return invalid("n_max too small for the support of f");
    }
    let ns: Vec<u32> = (n_min..=n_max).collect();
    let pairs = par::map_slice(&ns, |&n| match mode {
        PressureMode::Open => log_z_open(f, nu, &Region::cube(n, nu.dim())).map(|l| (l, 0.0)),
        PressureMode::Periodic => log_z_periodic(f, nu, n),
    });
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    let logs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let entries: Vec<PressureEntry> = ns
        .iter()
        .zip(&logs)
        .map(|(&n, &l)| {
            let sites = Region::cube(n, nu.dim()).len();
            PressureEntry { n, sites, log_z: l, value: l / sites as f64 }
        })
        .collect();
    let sites: Vec<usize> = entries.iter().map(|e| e.sites).collect();
    // on the ring both sums are traces of matrix powers, so each is fitted on its own
    let tilted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let base: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (estimate, method) = if entries.len() >= 2 {
        // a degenerate fit means the sum is already a single exponential
        let increment = |v: &[f64]| {
            let k = v.len();
            (v[k - 1] - v[k - 2]) / (sites[k - 1] - sites[k - 2]) as f64
        };
        match (rate(&tilted, &sites), rate(&base, &sites)) {
            (Some(a), Some(b)) => (a - b, "two-exponential fit"),
            (None, None) => (increment(&logs), "per-added-site increment"),
            (a, b) => (
                a.unwrap_or_else(|| increment(&tilted)) - b.unwrap_or_else(|| increment(&base)),
                "two-exponential fit with increment",
            ),
        }
    } else {
        (entries[0].value, "last value")
    };
    Ok(PressureSeries { entries, estimate, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Interaction;

    #[test]
    fn single_site_field_on_uniform_product() {
        let f = LocalFunction::spin_at(Site::d1(0), Dim::One).scaled(0.3);
        let s = pressure_estimate(&f, &MeasureRecipe::uniform(Dim::One), 4, PressureMode::Open).unwrap();
        for e in &s.entries {
            assert!((e.value - 0.3f64.cosh().ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn open_chain_pressure_is_a_tilted_eigenvalue() {
        let nu = MeasureRecipe::gibbs_1d(&Interaction::ising(0.5));
        let f = LocalFunction::spin_product(Dim::One, [Site::d1(0), Site::d1(1)]).unwrap();
        let s = pressure_estimate(&f, &nu, 8, PressureMode::Open).unwrap();
        let p = nu.as_markov().unwrap().transition();
        let m = [[p[0][0] * 1f64.exp(), p[0][1] / 1f64.exp()], [p[1][0] / 1f64.exp(), p[1][1] * 1f64.exp()]];
        let want = crate::engines::transfer::eigenvalues(&m)[0].ln();
        assert!((s.estimate - want).abs() < 1e-10, "{} {}", s.estimate, want);
    }
}
