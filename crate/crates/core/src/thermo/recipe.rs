use crate::engines::factor::MAX_ENUMERATION_VARS;
use crate::engines::{column, ising_graph, ColumnPlan, FactorGraph, MarkovChain};
use crate::error::{invalid, Error, Result};
use crate::lattice::{project_config, spin_of, Boundary, Dim, Interaction, Region, Site};
use crate::renormalization::{pushforward_to, Transformation};
use crate::specification::FiniteMeasure;

/// How a measure's finite-volume marginals are produced.
#[derive(Clone, Debug)]
pub enum MeasureRecipe {
    /// Independent spins with `P(+) = p_plus`.
    Product { p_plus: f64, dim: Dim },
    /// A stationary chain on `Z`.
    Markov(MarkovChain),
    /// The image under decimation with spacing `b`.
    Decimated { base: Box<MeasureRecipe>, b: u32 },
    /// The Boltzmann law on a fixed window; marginals inside the window only.
    FiniteGibbs { phi: Interaction, window: Region, boundary: Boundary },
    Explicit(FiniteMeasure),
}

/// A normalized log-density: `log μ(σ) = graph.log_weight(σ) − log_norm`.
pub struct LogDensity {
    pub graph: FactorGraph,
    pub log_norm: f64,
    /// First coordinate of each variable, for column plans.
    pub xs: Vec<i64>,
}

impl MeasureRecipe {
    pub fn gibbs_1d(phi: &Interaction) -> Self {
        Self::Markov(MarkovChain::gibbs(phi))
    }

    pub fn uniform(dim: Dim) -> Self {
        Self::Product { p_plus: 0.5, dim }
    }

    pub fn dim(&self) -> Dim {
        match self {
            Self::Product { dim, .. } => *dim,
            Self::Markov(_) => Dim::One,
            Self::Decimated { base, .. } => base.dim(),
            Self::FiniteGibbs { window, .. } => window.dim(),
            Self::Explicit(m) => m.support().dim(),
        }
    }

    pub fn is_translation_invariant(&self) -> bool {
        match self {
            Self::Product { .. } | Self::Markov(_) => true,
            Self::Decimated { base, .. } => base.is_translation_invariant(),
            _ => false,
        }
    }

    /// Collapses decimations of products and chains.
    pub fn simplify(&self) -> Self {
        match self {
            Self::Decimated { base, b } => match base.simplify() {
                Self::Product { p_plus, dim } => Self::Product { p_plus, dim },
                Self::Markov(c) => Self::Markov(c.decimated(*b as u64)),
                Self::Decimated { base: inner, b: b0 } => Self::Decimated { base: inner, b: b0 * b },
                other => Self::Decimated { base: Box::new(other), b: *b },
            },
            other => other.clone(),
        }
    }

    /// The chain describing this measure in `d = 1`, when it is Markov.
    pub fn as_markov(&self) -> Option<MarkovChain> {
        match self.simplify() {
            Self::Markov(c) => Some(c),
            Self::Product { p_plus, dim: Dim::One } => MarkovChain::iid(p_plus).ok(),
            _ => None,
        }
    }

    fn check_dim(&self, region: &Region) -> Result<()> {
        if region.dim() != self.dim() {
            return Err(Error::RegionMismatch("region dimension differs from the measure".into()));
        }
        Ok(())
    }

    /// The marginal law on `region`.
    pub fn marginal(&self, region: &Region) -> Result<FiniteMeasure> {
        self.check_dim(region)?;
        match self.simplify() {
            Self::Product { p_plus, .. } => FiniteMeasure::product(region.clone(), &vec![p_plus; region.len()]),
            Self::Markov(c) => {
                let xs: Vec<i64> = region.sites().iter().map(|s| s.coords[0]).collect();
                let n = region.config_count()?;
                let probs = (0..n)
                    .map(|code| {
                        let spins: Vec<_> = (0..xs.len()).map(|i| spin_of(code, i)).collect();
                        c.cylinder_prob(&xs, &spins)
                    })
                    .collect();
                FiniteMeasure::new(region.clone(), probs)
            }
            Self::Decimated { base, b } => {
                let t = Transformation::decimation(b, region.dim())?;
                let mut src: Vec<Site> = region.sites().iter().flat_map(|&x| t.block(x).sites().to_vec()).collect();
                src.sort();
                src.dedup();
                let src = Region::explicit(region.dim(), src)?;
                pushforward_to(&base.marginal(&src)?, &t, region)
            }
            Self::FiniteGibbs { phi, window, boundary } => {
                if !region.is_subset(&window) {
                    return Err(Error::RegionMismatch("marginal region leaves the Gibbs window".into()));
                }
                let g = ising_graph(&phi, &window, &boundary, &[])?;
                FiniteMeasure::new(window.clone(), g.dense_law()?)?.marginal(region)
            }
            Self::Explicit(m) => m.marginal(region),
        }
    }

    /// A factorized log-density on `region`, when the recipe has one.
    pub fn log_density(&self, region: &Region) -> Result<Option<LogDensity>> {
        self.check_dim(region)?;
        let xs: Vec<i64> = region.sites().iter().map(|s| s.coords[0]).collect();
        let n = region.len();
        let mut g = FactorGraph::new(n);
        match self.simplify() {
            Self::Product { p_plus, .. } => {
                for i in 0..n {
                    g.add_unary(i, (1.0 - p_plus).ln(), p_plus.ln());
                }
                Ok(Some(LogDensity { graph: g, log_norm: 0.0, xs }))
            }
            Self::Markov(c) => {
                if n == 0 {
                    return Ok(Some(LogDensity { graph: g, log_norm: 0.0, xs }));
                }
                let pi = c.pi();
                g.add_unary(0, pi[0].ln(), pi[1].ln());
                for i in 1..n {
                    let m = c.step((xs[i] - xs[i - 1]) as u64);
                    let table = vec![m[0][0].ln(), m[1][0].ln(), m[0][1].ln(), m[1][1].ln()];
                    g.add_factor(crate::engines::Factor::new(&[i - 1, i], table)?);
                }
                Ok(Some(LogDensity { graph: g, log_norm: 0.0, xs }))
            }
            Self::FiniteGibbs { phi, window, boundary } if &window == region => {
                let g = ising_graph(&phi, &window, &boundary, &[])?;
                let log_norm = log_partition_auto(&g, &xs, false)?;
                Ok(Some(LogDensity { graph: g, log_norm, xs }))
            }
            _ => Ok(None),
        }
    }

    /// Laws of `sa`, `sb` and the joint table indexed `a · 2^{|sb|} + b`.
    /// Product recipes return the literal outer product.
    pub fn block_pair(&self, sa: &Region, sb: &Region) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if !sa.is_disjoint(sb) {
            return invalid("blocks must be disjoint");
        }
        let ma = self.marginal(sa)?;
        let mb = self.marginal(sb)?;
        let nb = mb.probs().len();
        if let Self::Product { .. } = self.simplify() {
            let joint = ma.probs().iter().flat_map(|&a| mb.probs().iter().map(move |&b| a * b)).collect();
            return Ok((ma.probs().to_vec(), mb.probs().to_vec(), joint));
        }
        let u = sa.union(sb);
        let mu = self.marginal(&u)?;
        let pa = u.positions_of(sa)?;
        let pb = u.positions_of(sb)?;
        let mut joint = vec![0.0; ma.probs().len() * nb];
        for (c, &p) in mu.probs().iter().enumerate() {
            let a = project_config(c as u64, &pa) as usize;
            let b = project_config(c as u64, &pb) as usize;
            joint[a * nb + b] += p;
        }
        let ra: Vec<f64> = (0..ma.probs().len()).map(|a| joint[a * nb..(a + 1) * nb].iter().sum()).collect();
        let rb: Vec<f64> = (0..nb).map(|b| (0..ra.len()).map(|a| joint[a * nb + b]).sum()).collect();
        Ok((ra, rb, joint))
    }
}

/// Below this many free variables enumeration is used even if columns fit.
const SMALL_ENUMERATION: usize = 18;

/// `log Z` by enumeration or, for longer systems, the column DP keyed by `xs`.
pub fn log_partition_auto(g: &FactorGraph, xs: &[i64], wrap: bool) -> Result<f64> {
    let free = g.free_vars().len();
    if free > SMALL_ENUMERATION || free > MAX_ENUMERATION_VARS {
        for group in 1..=4 {
            if let Ok(plan) = ColumnPlan::by_x(g, xs, group, wrap) {
                return column::log_partition(g, &plan);
            }
        }
    }
    g.log_partition()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimated_chain_marginal_matches_pushforward() {
        let base = MeasureRecipe::gibbs_1d(&Interaction::ising(0.7));
        let direct = MeasureRecipe::Decimated { base: Box::new(base.clone()), b: 2 };
        let region = Region::cube(1, Dim::One);
        let a = direct.marginal(&region).unwrap();
        let t = Transformation::decimation(2, Dim::One).unwrap();
        let src = Region::cube(2, Dim::One);
        let b = crate::renormalization::pushforward(&base.marginal(&src).unwrap(), &t).unwrap();
        assert_eq!(a.support().sites(), b.support().sites());
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn chain_log_density_is_normalized() {
        let r = MeasureRecipe::gibbs_1d(&Interaction::new(1.0, 0.3, 0.6).unwrap());
        let region = Region::cube(3, Dim::One);
        let d = r.log_density(&region).unwrap().unwrap();
        assert!(d.graph.log_partition().unwrap().abs() < 1e-13);
    }
}
