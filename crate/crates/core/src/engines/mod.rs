//! Compute backends: exact enumeration, column dynamic programming,
//! 1-D transfer matrices and heat-bath Monte Carlo.

pub mod column;
pub mod factor;
pub mod manifest;
pub mod mc;
pub mod transfer;

use crate::error::{invalid, Error, Result};
use crate::lattice::{Boundary, Dim, Interaction, Region, Site, Spin};
use crate::specification::FiniteMeasure;

pub use column::ColumnPlan;
pub use factor::{Factor, FactorGraph};
pub use manifest::RunManifest;
pub use mc::{empirical_estimate, mc_coupled, mc_sample, mc_sample_graph, CoupledRun, Estimate, McConfig, SampleStream};
pub use transfer::{transfer_matrix_1d, ChainBoundary, ChainSolution, MarkovChain};

/// Cap on unconstrained sites for [`enumerate_measure`].
pub const ENUMERATION_CAP: usize = 24;

/// Nearest-neighbor Ising factor graph on `region` (variables in region order).
///
/// Fixed boundaries contribute unary terms from exterior neighbors. Periodic
/// boundaries wrap an interval (`d = 1`) or a rectangle (`d = 2`).
pub fn ising_graph(
    phi: &Interaction,
    region: &Region,
    boundary: &Boundary,
    constraints: &[(Site, Spin)],
) -> Result<FactorGraph> {
    let n = region.len();
    let dim = region.dim();
    let mut g = FactorGraph::new(n);
    let k = phi.k();
    let hb = phi.hb();
    for (i, s) in region.sites().iter().enumerate() {
        let mut field = hb;
        for y in s.neighbors(dim) {
            match region.index_of(y) {
                Some(j) if j > i => g.add_coupling(i, j, k),
                Some(_) => {}
                None => {
                    if let Boundary::Fixed(omega) = boundary {
                        field += k * omega.spin_at(y) as f64;
                    }
                }
            }
        }
        g.add_unary(i, -field, field);
    }
    if let Boundary::Periodic = boundary {
        add_wrap_bonds(&mut g, region, k)?;
    }
    for &(site, spin) in constraints {
        let i = region
            .index_of(site)
            .ok_or_else(|| Error::RegionMismatch(format!("constrained site {site} outside the window")))?;
        g.fix(i, spin);
    }
    Ok(g)
}

fn add_wrap_bonds(g: &mut FactorGraph, region: &Region, k: f64) -> Result<()> {
    let sites = region.sites();
    let lo = |a: usize| sites.iter().map(|s| s.coords[a]).min().unwrap_or(0);
    let hi = |a: usize| sites.iter().map(|s| s.coords[a]).max().unwrap_or(0);
    let axes = match region.dim() {
        Dim::One => 1,
        Dim::Two => 2,
    };
    let mut expected = 1usize;
    for a in 0..axes {
        expected *= (hi(a) - lo(a) + 1) as usize;
    }
    if expected != sites.len() {
        return invalid("periodic boundary needs a full interval or rectangle");
    }
    for a in 0..axes {
        if hi(a) == lo(a) {
            continue;
        }
        for (i, s) in sites.iter().enumerate() {
            if s.coords[a] != hi(a) {
                continue;
            }
            let mut c = s.coords;
            c[a] = lo(a);
            let j = region.index_of(Site { layer: s.layer, coords: c }).expect("rectangle");
            g.add_coupling(i, j, k);
        }
    }
    Ok(())
}

/// Exact Boltzmann law on `window` with the given boundary and constraints.
pub fn enumerate_measure(
    phi: &Interaction,
    window: &Region,
    boundary: &Boundary,
    constraints: &[(Site, Spin)],
) -> Result<FiniteMeasure> {
    let g = ising_graph(phi, window, boundary, constraints)?;
    let free = g.free_vars().len();
    if free > ENUMERATION_CAP {
        return Err(Error::SizeCap { what: "unconstrained sites".into(), needed: free as u64, cap: ENUMERATION_CAP as u64 });
    }
    FiniteMeasure::new(window.clone(), g.dense_law()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{TailedConfiguration, PLUS};

    #[test]
    fn two_site_free_chain() {
        let w = Region::explicit(Dim::One, [Site::d1(0), Site::d1(1)]).unwrap();
        let m = enumerate_measure(&Interaction::ising(1.0), &w, &Boundary::Free, &[]).unwrap();
        let e = 1f64.exp();
        assert!((m.prob(3) - e / (2.0 * e + 2.0 / e)).abs() < 1e-15);
    }

    #[test]
    fn fully_constrained_is_a_point_mass() {
        let w = Region::cube(1, Dim::One);
        let cons: Vec<_> = w.sites().iter().map(|&s| (s, PLUS)).collect();
        let b = Boundary::Fixed(TailedConfiguration::all_minus(Dim::One));
        let m = enumerate_measure(&Interaction::ising(0.7), &w, &b, &cons).unwrap();
        assert_eq!(m.prob(7), 1.0);
    }

    #[test]
    fn periodic_ring_matches_transfer() {
        let phi = Interaction::new(1.0, 0.2, 0.6).unwrap();
        let w = Region::cube(4, Dim::One);
        let g = ising_graph(&phi, &w, &Boundary::Periodic, &[]).unwrap();
        let tm = transfer_matrix_1d(&phi, 9, ChainBoundary::Periodic).unwrap();
        assert!((g.log_partition().unwrap() - tm.log_partition).abs() < 1e-11);
    }
}
