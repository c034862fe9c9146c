//! Finite-volume kernels, specification axioms and directional limits.

mod consistency;
mod measure;
mod monotone;

use std::sync::Arc;

use serde::Serialize;

use crate::engines::{ising_graph, FactorGraph};
use crate::error::{invalid, Error, Result};
use crate::lattice::{Boundary, Dim, Interaction, LocalFunction, Region, Spin, Tail, TailedConfiguration, PLUS};
use crate::par;

pub use consistency::{
    consistency_check, consistency_sweep, dlr_residual, properness_sweep, PropernessReport, SweepReport,
    DEFAULT_COMPOSITE_CAP,
};
pub use measure::{FiniteMeasure, MASS_TOLERANCE};
pub use monotone::{
    increasing_catalogue, max_upset_gap, monotonicity_check, sandwich_check, stochastic_domination, upsets,
    DominationVerdict, IncreasingEvent, MonotonicityVerdict, SandwichReport, MONOTONE_TOLERANCE,
};

/// A rule producing `γ_Λ(·|ω)` for finite `Λ`.
pub trait KernelRecipe: Send + Sync {
    fn dim(&self) -> Dim;

    fn kernel(&self, lambda: &Region, omega: &TailedConfiguration) -> Result<FiniteMeasure>;

    /// Exterior sites the kernel reads, when finitely many.
    fn dependence_set(&self, lambda: &Region) -> Option<Region>;

    /// `γ_Λ(f)(ω)`; `f` may depend on sites outside `Λ`.
    fn expectation(&self, lambda: &Region, omega: &TailedConfiguration, f: &LocalFunction) -> Result<f64> {
        Ok(self.kernel(lambda, omega)?.expectation_with(f, omega))
    }

    /// The volume `Λ_M` used for `M`-dependent constructions.
    fn window(&self, m: u32) -> Region {
        Region::cube(m, self.dim())
    }
}

impl<T: KernelRecipe + ?Sized> KernelRecipe for Arc<T> {
    fn dim(&self) -> Dim {
        (**self).dim()
    }
    fn kernel(&self, lambda: &Region, omega: &TailedConfiguration) -> Result<FiniteMeasure> {
        (**self).kernel(lambda, omega)
    }
    fn dependence_set(&self, lambda: &Region) -> Option<Region> {
        (**self).dependence_set(lambda)
    }
    fn expectation(&self, lambda: &Region, omega: &TailedConfiguration, f: &LocalFunction) -> Result<f64> {
        (**self).expectation(lambda, omega, f)
    }
    fn window(&self, m: u32) -> Region {
        (**self).window(m)
    }
}

/// Nearest-neighbor Ising specification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GibbsSpecification {
    pub phi: Interaction,
    pub dim: Dim,
}

impl GibbsSpecification {
    pub fn new(phi: Interaction, dim: Dim) -> Self {
        Self { phi, dim }
    }

    fn graph(&self, lambda: &Region, omega: &TailedConfiguration) -> Result<FactorGraph> {
        ising_graph(&self.phi, lambda, &Boundary::Fixed(omega.clone()), &[])
    }
}

impl KernelRecipe for GibbsSpecification {
    fn dim(&self) -> Dim {
        self.dim
    }

    fn kernel(&self, lambda: &Region, omega: &TailedConfiguration) -> Result<FiniteMeasure> {
        if lambda.dim() != self.dim {
            return Err(Error::RegionMismatch("volume dimension differs from the specification".into()));
        }
        FiniteMeasure::new(lambda.clone(), self.graph(lambda, omega)?.dense_law()?)
    }

    fn dependence_set(&self, lambda: &Region) -> Option<Region> {
        Some(lambda.outer_boundary())
    }
}

/// `γ_Λ(·|boundary)` for the Ising interaction.
pub fn gibbs_kernel(phi: &Interaction, lambda: &Region, boundary: &TailedConfiguration) -> Result<FiniteMeasure> {
    GibbsSpecification::new(*phi, lambda.dim()).kernel(lambda, boundary)
}

/// The configuration equal to `config` on `window` and to `fill` elsewhere.
pub fn filled(window: &Region, config: u64, fill: &TailedConfiguration) -> TailedConfiguration {
    let base = TailedConfiguration::from_config(window.clone(), config, Tail::AllPlus);
    let tail = Tail::Named { name: "fill".into(), config: Arc::new(fill.clone()) };
    TailedConfiguration::new(window.clone(), base.values().to_vec(), tail).expect("valid spins")
}

/// A kernel tabulated over every configuration of its dependence set.
#[derive(Clone, Debug)]
pub struct KernelTable {
    volume: Region,
    dependence_set: Region,
    rows: Vec<FiniteMeasure>,
    fill: TailedConfiguration,
}

impl KernelTable {
    /// Rows are indexed by dependence-set configurations; `fill` supplies
    /// spins the kernel does not read.
    pub fn build(recipe: &dyn KernelRecipe, volume: &Region, fill: &TailedConfiguration) -> Result<Self> {
        let dep = recipe
            .dependence_set(volume)
            .ok_or_else(|| Error::InvalidArgument("kernel has no finite dependence set".into()))?;
        if !dep.is_disjoint(volume) {
            return invalid("dependence set meets the volume");
        }
        let n = dep.config_count()?;
        let rows = par::map_range(n as usize, |c| recipe.kernel(volume, &filled(&dep, c as u64, fill)));
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self { volume: volume.clone(), dependence_set: dep, rows, fill: fill.clone() })
    }

    pub fn volume(&self) -> &Region {
        &self.volume
    }

    pub fn dependence_set(&self) -> &Region {
        &self.dependence_set
    }

    pub fn rows(&self) -> &[FiniteMeasure] {
        &self.rows
    }

    pub fn row(&self, config: u64) -> &FiniteMeasure {
        &self.rows[config as usize]
    }

    pub fn row_for(&self, omega: &TailedConfiguration) -> &FiniteMeasure {
        self.row(omega.config_on(&self.dependence_set))
    }

    /// Boundary configuration that row `config` was built from.
    pub fn boundary(&self, config: u64) -> TailedConfiguration {
        filled(&self.dependence_set, config, &self.fill)
    }
}

/// `Σ_σ γ_Λ(σ|ω) |1_B(σ_Λ ω_{Λ^c}) − 1_B(ω)|`, which vanishes exactly for a
/// proper kernel. `event` must be an indicator of exterior spins.
pub fn properness_check(table: &KernelTable, event: &LocalFunction, omega: &TailedConfiguration) -> Result<f64> {
    if !event.support().is_disjoint(table.volume()) {
        return invalid("event reads sites inside the volume");
    }
    if event.table().iter().any(|&v| v != 0.0 && v != 1.0) {
        return invalid("event must be an indicator");
    }
    let row = table.row_for(omega);
    let at_omega = event.eval(omega);
    let mut residual = 0.0;
    for (c, &p) in row.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let sigma = TailedConfiguration::from_config(table.volume().clone(), c as u64, Tail::AllPlus);
        let spliced = TailedConfiguration::splice(&sigma, omega, table.volume())?;
        residual += p * (event.eval(&spliced) - at_omega).abs();
    }
    Ok(residual)
}

/// Result of a directional limit evaluation.
#[derive(Clone, Debug)]
pub struct DirectionalLimit {
    pub measure: FiniteMeasure,
    /// True when `S` already covers the kernel's dependence set.
    pub stabilized: bool,
}

/// `γ_Λ(·|ω_S ±_{S^c})`.
pub fn directional_limit_kernel(
    recipe: &dyn KernelRecipe,
    lambda: &Region,
    omega: &TailedConfiguration,
    sign: Spin,
    s: &Region,
) -> Result<DirectionalLimit> {
    if !lambda.is_subset(s) {
        return invalid("S must contain Λ");
    }
    let fill = TailedConfiguration::uniform(omega.dim(), Tail::constant(sign));
    let boundary = omega.with_exterior(s, &fill);
    let stabilized = recipe.dependence_set(lambda).is_some_and(|d| d.is_subset(s));
    Ok(DirectionalLimit { measure: recipe.kernel(lambda, &boundary)?, stabilized })
}

/// `γ^{M,θ}_Λ`: the base kernel with the exterior of `Λ_M` frozen to `θ`.
#[derive(Clone)]
pub struct DirectionalKernel<K> {
    pub base: K,
    pub m: u32,
    pub theta: TailedConfiguration,
}

impl<K: KernelRecipe> DirectionalKernel<K> {
    pub fn new(base: K, m: u32, theta: TailedConfiguration) -> Self {
        Self { base, m, theta }
    }

    pub fn outer(&self) -> Region {
        self.base.window(self.m)
    }
}

impl<K: KernelRecipe> KernelRecipe for DirectionalKernel<K> {
    fn dim(&self) -> Dim {
        self.base.dim()
    }

    fn kernel(&self, lambda: &Region, omega: &TailedConfiguration) -> Result<FiniteMeasure> {
        let outer = self.outer();
        if !lambda.is_subset(&outer) {
            return invalid("Λ must lie inside Λ_M");
        }
        self.base.kernel(lambda, &omega.with_exterior(&outer, &self.theta))
    }

    fn dependence_set(&self, lambda: &Region) -> Option<Region> {
        let annulus = self.outer().difference(lambda);
        match self.base.dependence_set(lambda) {
            Some(d) => Some(d.intersection(&annulus)),
            None => Some(annulus),
        }
    }

    fn window(&self, m: u32) -> Region {
        self.base.window(m)
    }
}

/// A configuration that is `+` on the window and `tail` elsewhere.
pub fn plus_on(window: &Region, tail: Tail) -> TailedConfiguration {
    TailedConfiguration::new(window.clone(), vec![PLUS; window.len()], tail).expect("valid spins")
}
