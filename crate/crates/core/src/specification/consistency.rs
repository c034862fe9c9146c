use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{LocalFunction, Region, Tail, TailedConfiguration};
use crate::par;

use super::{filled, FiniteMeasure, GibbsSpecification, KernelRecipe};

/// Default cap on `2^{|Λ'| + |Λ|}` for [`consistency_check`].
pub const DEFAULT_COMPOSITE_CAP: u64 = 1 << 24;

/// TV distance between `γ_{Λ'}(·|ω)` and `(γ_{Λ'} γ_Λ)(·|ω)`, with `outer`
/// supplying `γ_{Λ'}` and `inner` supplying `γ_Λ`.
pub fn consistency_check(
    outer: &dyn KernelRecipe,
    inner: &dyn KernelRecipe,
    lambda: &Region,
    lambda_prime: &Region,
    boundary: &TailedConfiguration,
    cap: u64,
) -> Result<f64> {
    if !lambda.is_subset(lambda_prime) {
        return invalid("Λ must be contained in Λ'");
    }
    let bits = lambda_prime.len() + lambda.len();
    if bits >= 64 || 1u64 << bits > cap {
        return Err(Error::SizeCap { what: "composite states".into(), needed: bits as u64, cap });
    }
    let p = outer.kernel(lambda_prime, boundary)?;
    let rest = lambda_prime.difference(lambda);
    let pos_rest = lambda_prime.positions_of(&rest)?;
    let pos_lam = lambda_prime.positions_of(lambda)?;
    let pm = p.marginal(&rest)?;
    let inner_rows = par::map_range(1usize << rest.len(), |xi| -> Result<Option<FiniteMeasure>> {
        if pm.prob(xi as u64) == 0.0 {
            return Ok(None);
        }
        let eta = filled(&rest, xi as u64, boundary);
        inner.kernel(lambda, &eta).map(Some)
    });
    let inner_rows = inner_rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut comp = vec![0.0; p.probs().len()];
    for (c, slot) in comp.iter_mut().enumerate() {
        let xi = crate::lattice::project_config(c as u64, &pos_rest);
        if let Some(q) = &inner_rows[xi as usize] {
            let s = crate::lattice::project_config(c as u64, &pos_lam);
            *slot = pm.prob(xi) * q.prob(s);
        }
    }
    Ok(0.5 * p.probs().iter().zip(&comp).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// TV distance between `μ` on `W` and `μ γ_Λ`. The kernel's dependence set
/// must lie inside `W \ Λ`.
pub fn dlr_residual(mu: &FiniteMeasure, recipe: &dyn KernelRecipe, lambda: &Region) -> Result<f64> {
    let w = mu.support();
    if !lambda.is_subset(w) {
        return invalid("Λ must lie inside the measure's window");
    }
    let rest = w.difference(lambda);
    let dep = recipe
        .dependence_set(lambda)
        .ok_or_else(|| Error::InvalidArgument("kernel has no finite dependence set".into()))?;
    if !dep.is_subset(&rest) {
        return invalid("Λ touches the window edge: the kernel reads spins outside W");
    }
    let pos_dep = w.positions_of(&dep)?;
    let pos_rest = w.positions_of(&rest)?;
    let pos_lam = w.positions_of(lambda)?;
    let fill = TailedConfiguration::uniform(w.dim(), Tail::AllPlus);
    let rows = par::map_range(1usize << dep.len(), |c| recipe.kernel(lambda, &filled(&dep, c as u64, &fill)));
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let pm = mu.marginal(&rest)?;
    let mut out = vec![0.0; mu.probs().len()];
    for (c, slot) in out.iter_mut().enumerate() {
        let c = c as u64;
        let d = crate::lattice::project_config(c, &pos_dep);
        let xi = crate::lattice::project_config(c, &pos_rest);
        let s = crate::lattice::project_config(c, &pos_lam);
        *slot = pm.prob(xi) * rows[d as usize].prob(s);
    }
    Ok(0.5 * mu.probs().iter().zip(&out).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Outcome of [`consistency_sweep`].
#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    /// Nested pairs `Λ ⊆ Λ'` examined (Λ may be empty or equal to Λ').
    pub pairs: u64,
    /// Boundary rows covered, summed over `Λ'`.
    pub rows: u64,
    /// Distinct boundary field classes actually evaluated.
    pub classes: u64,
    pub max_residual: f64,
    /// Sites of the worst `Λ'` and `Λ`.
    pub worst: Option<(Vec<[i64; 2]>, Vec<[i64; 2]>)>,
}

/// Consistency residual for every nested pair inside `container` and every
/// boundary row of `Λ'`.
///
/// For nearest-neighbor Ising kernels both `γ_{Λ'}(·|ω)` and every inner
/// `γ_Λ(·|η_{Λ'\Λ} ω)` depend on the `Λ'`-boundary only through the number of
/// `+` exterior neighbors of each site of `Λ'`, so boundary rows are grouped
/// into classes with identical residuals and each class is evaluated once.
pub fn consistency_sweep(
    outer: &GibbsSpecification,
    inner: &GibbsSpecification,
    container: &Region,
) -> Result<SweepReport> {
    let n_c = container.len();
    if n_c > 16 {
        return Err(Error::SizeCap { what: "sweep container".into(), needed: n_c as u64, cap: 16 });
    }
    let mut report = SweepReport { pairs: 0, rows: 0, classes: 0, max_residual: 0.0, worst: None };
    let dim = container.dim();
    for mask in 1u64..(1 << n_c) {
        let sites: Vec<_> = (0..n_c).filter(|i| mask >> i & 1 == 1).map(|i| container.sites()[i]).collect();
        let lp = Region::explicit(dim, sites)?;
        let n = lp.len();
        let boundary = lp.outer_boundary();
        if boundary.len() > 20 {
            return Err(Error::SizeCap { what: "boundary rows".into(), needed: boundary.len() as u64, cap: 20 });
        }
        let ext: Vec<Vec<usize>> = lp
            .sites()
            .iter()
            .map(|s| s.neighbors(dim).filter_map(|y| boundary.index_of(y)).collect())
            .collect();
        let mut edges = Vec::new();
        for (i, s) in lp.sites().iter().enumerate() {
            for y in s.neighbors(dim) {
                if let Some(j) = lp.index_of(y) {
                    if j > i {
                        edges.push((i, j));
                    }
                }
            }
        }
        let mut classes: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
        for c in 0u64..(1 << boundary.len()) {
            let key: Vec<u8> = ext.iter().map(|nb| nb.iter().filter(|&&b| c >> b & 1 == 1).count() as u8).collect();
            *classes.entry(key).or_default() += 1;
        }
        let keys: Vec<Vec<u8>> = classes.keys().cloned().collect();
        let results = par::map_range(keys.len(), |k| {
            let counts = &keys[k];
            let field = |spec: &GibbsSpecification, i: usize| {
                let kk = spec.phi.k();
                spec.phi.hb() + kk * (2.0 * counts[i] as f64 - ext[i].len() as f64)
            };
            let fo: Vec<f64> = (0..n).map(|i| field(outer, i)).collect();
            let fi: Vec<f64> = (0..n).map(|i| field(inner, i)).collect();
            class_residual(n, &edges, outer.phi.k(), &fo, inner.phi.k(), &fi)
        });
        report.pairs += 1 << n;
        report.rows += 1 << boundary.len();
        report.classes += keys.len() as u64;
        for (res, lam_mask) in results {
            if res > report.max_residual || report.worst.is_none() {
                if res > report.max_residual {
                    report.max_residual = res;
                }
                let lam: Vec<[i64; 2]> =
                    (0..n).filter(|i| lam_mask >> i & 1 == 1).map(|i| lp.sites()[i].coords).collect();
                report.worst = Some((lp.sites().iter().map(|s| s.coords).collect(), lam));
            }
        }
    }
    Ok(report)
}

/// Outcome of [`properness_sweep`].
#[derive(Clone, Debug, Serialize)]
pub struct PropernessReport {
    pub volumes: u64,
    pub rows: u64,
    pub max_residual: f64,
}

/// Properness residual of `γ_Λ` for every nonempty `Λ ⊆ container`, every
/// boundary row, and the events `{ω_∂Λ ≡ +}` and `{ω_y = +}` at the first
/// boundary site `y`.
pub fn properness_sweep(spec: &GibbsSpecification, container: &Region) -> Result<PropernessReport> {
    let n_c = container.len();
    if n_c > 16 {
        return Err(Error::SizeCap { what: "sweep container".into(), needed: n_c as u64, cap: 16 });
    }
    let dim = container.dim();
    let mut report = PropernessReport { volumes: 0, rows: 0, max_residual: 0.0 };
    for mask in 1u64..(1 << n_c) {
        let lam = Region::explicit(dim, (0..n_c).filter(|i| mask >> i & 1 == 1).map(|i| container.sites()[i]))?;
        let n = lam.len();
        let boundary = lam.outer_boundary();
        if boundary.len() > 20 {
            return Err(Error::SizeCap { what: "boundary rows".into(), needed: boundary.len() as u64, cap: 20 });
        }
        let ext: Vec<Vec<usize>> =
            lam.sites().iter().map(|s| s.neighbors(dim).filter_map(|y| boundary.index_of(y)).collect()).collect();
        let mut edges = Vec::new();
        for (i, s) in lam.sites().iter().enumerate() {
            for y in s.neighbors(dim) {
                if let Some(j) = lam.index_of(y) {
                    if j > i {
                        edges.push((i, j));
                    }
                }
            }
        }
        let all_plus = LocalFunction::all_plus_indicator(dim, boundary.sites().iter().copied())?;
        let first = LocalFunction::all_plus_indicator(dim, [boundary.sites()[0]])?;
        // each event site reads either a spin of Λ (from σ) or a boundary spin (from the row)
        let events: Vec<(LocalFunction, Vec<(bool, usize)>)> = [all_plus, first]
            .into_iter()
            .map(|e| {
                let src = e
                    .support()
                    .sites()
                    .iter()
                    .map(|&s| match lam.index_of(s) {
                        Some(i) => (true, i),
                        None => (false, boundary.index_of(s).expect("event on the boundary")),
                    })
                    .collect();
                (e, src)
            })
            .collect();
        let (k, hb) = (spec.phi.k(), spec.phi.hb());
        let residuals = par::map_range(1usize << boundary.len(), |row| {
            let field: Vec<f64> = ext
                .iter()
                .map(|nb| hb + k * nb.iter().map(|&b| if row >> b & 1 == 1 { 1.0 } else { -1.0 }).sum::<f64>())
                .collect();
            let p = par::normalize_log(&log_weights(n, &edges, k, &field)).expect("finite Ising weights");
            let mut worst: f64 = 0.0;
            for (e, src) in &events {
                let code = |sigma: usize| {
                    src.iter().enumerate().fold(0u64, |a, (j, &(inside, i))| {
                        let bit = if inside { sigma >> i & 1 } else { row >> i & 1 };
                        a | (bit as u64) << j
                    })
                };
                let base = e.value(src.iter().enumerate().fold(0u64, |a, (j, &(_, i))| a | ((row >> i & 1) as u64) << j));
                let r: f64 = p.iter().enumerate().map(|(sigma, &q)| q * (e.value(code(sigma)) - base).abs()).sum();
                worst = worst.max(r);
            }
            worst
        });
        report.volumes += 1;
        report.rows += residuals.len() as u64;
        report.max_residual = residuals.into_iter().fold(report.max_residual, f64::max);
    }
    Ok(report)
}

fn log_weights(n: usize, edges: &[(usize, usize)], k: f64, field: &[f64]) -> Vec<f64> {
    (0u64..1 << n)
        .map(|c| {
            let s = |i: usize| if c >> i & 1 == 1 { 1.0 } else { -1.0 };
            let mut e: f64 = (0..n).map(|i| field[i] * s(i)).sum();
            for &(i, j) in edges {
                e += k * s(i) * s(j);
            }
            e
        })
        .collect()
}

/// Worst residual over all `Λ ⊆ Λ'` for one boundary class, and its `Λ` mask.
fn class_residual(n: usize, edges: &[(usize, usize)], ko: f64, fo: &[f64], ki: f64, fi: &[f64]) -> (f64, u64) {
    let size = 1usize << n;
    let lo = log_weights(n, edges, ko, fo);
    let p = par::normalize_log(&lo).expect("finite Ising weights");
    let li = log_weights(n, edges, ki, fi);
    let mx = li.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = li.iter().map(|v| (v - mx).exp()).collect();
    let full = size - 1;
    let mut pm = vec![0.0; size];
    let mut zi = vec![0.0; size];
    let mut best = (0.0, 0u64);
    for lam in 0..size {
        let rest = full ^ lam;
        pm.iter_mut().for_each(|v| *v = 0.0);
        zi.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..size {
            let r = s & rest;
            pm[r] += p[s];
            zi[r] += w[s];
        }
        // reuse pm as the ratio pm / zi on the rest configurations
        let mut r = rest;
        loop {
            pm[r] /= zi[r];
            if r == 0 {
                break;
            }
            r = (r - 1) & rest;
        }
        let mut tv = 0.0;
        for s in 0..size {
            tv += (p[s] - pm[s & rest] * w[s]).abs();
        }
        tv *= 0.5;
        if tv > best.0 {
            best = (tv, lam as u64);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Dim, Interaction, Site};

    #[test]
    fn sweep_agrees_with_direct_composition() {
        let a = GibbsSpecification::new(Interaction::ising(1.0), Dim::One);
        let b = GibbsSpecification::new(Interaction::ising(0.5), Dim::One);
        let c = Region::cube(1, Dim::One);
        let same = consistency_sweep(&a, &a, &c).unwrap();
        assert!(same.max_residual < 1e-13);
        let mixed = consistency_sweep(&a, &b, &c).unwrap();
        let lam = Region::explicit(Dim::One, [Site::d1(0)]).unwrap();
        let mut direct: f64 = 0.0;
        for bc in 0..4u64 {
            let omega = filled(&c.outer_boundary(), bc, &TailedConfiguration::all_plus(Dim::One));
            for sub in 1u64..8 {
                let l = Region::explicit(Dim::One, (0..3).filter(|i| sub >> i & 1 == 1).map(|i| c.sites()[i])).unwrap();
                direct = direct.max(consistency_check(&a, &b, &l, &c, &omega, DEFAULT_COMPOSITE_CAP).unwrap());
            }
        }
        assert!(mixed.max_residual >= direct - 1e-12);
        let single = consistency_check(&a, &b, &lam, &c, &TailedConfiguration::all_plus(Dim::One), DEFAULT_COMPOSITE_CAP);
        assert!(single.unwrap() > 0.0);
    }
}
