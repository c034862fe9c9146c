use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::lattice::{bit_of, project_config, LocalFunction, Region, Site, Spin, TailedConfiguration};

/// Tolerance on the total mass of a [`FiniteMeasure`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A probability measure on the configurations of a finite region,
/// indexed in the region's canonical configuration order.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMeasure {
    support: Region,
    probs: Arc<[f64]>,
}

impl FiniteMeasure {
    pub fn new(support: Region, probs: Vec<f64>) -> Result<Self> {
        let n = support.config_count()?;
        if probs.len() as u64 != n {
            return invalid("probability table does not match the support");
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return invalid("probabilities must be finite and nonnegative");
        }
        let total = crate::par::ordered_sum(&probs);
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return invalid(format!("probabilities sum to {total}"));
        }
        Ok(Self { support, probs: probs.into() })
    }

    /// Normalizes unnormalized log-weights (entries may be `-inf`).
    pub fn from_log_weights(support: Region, log_weights: &[f64]) -> Result<Self> {
        let probs = crate::par::normalize_log(log_weights)
            .ok_or_else(|| Error::Engine("all configurations have zero weight".into()))?;
        Self::new(support, probs)
    }

    pub fn point_mass(support: Region, config: u64) -> Result<Self> {
        let n = support.config_count()?;
        if config >= n {
            return invalid("configuration index out of range");
        }
        let mut p = vec![0.0; n as usize];
        p[config as usize] = 1.0;
        Self::new(support, p)
    }

    pub fn uniform(support: Region) -> Result<Self> {
        let n = support.config_count()?;
        Self::new(support, vec![1.0 / n as f64; n as usize])
    }

    /// Independent spins with `P(+)` given per site.
    pub fn product(support: Region, p_plus: &[f64]) -> Result<Self> {
        if p_plus.len() != support.len() || p_plus.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("need one probability in [0,1] per site");
        }
        let n = support.config_count()?;
        let probs = (0..n)
            .map(|c| {
                p_plus
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| if c >> i & 1 == 1 { p } else { 1.0 - p })
                    .product()
            })
            .collect();
        Self::new(support, probs)
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, config: u64) -> f64 {
        self.probs[config as usize]
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Marginal on `sub ⊂ support`.
    pub fn marginal(&self, sub: &Region) -> Result<Self> {
        let pos = self.support.positions_of(sub)?;
        let mut out = vec![0.0; 1usize << sub.len()];
        for (c, &p) in self.probs.iter().enumerate() {
            out[project_config(c as u64, &pos) as usize] += p;
        }
        Ok(Self { support: sub.clone(), probs: out.into() })
    }

    /// `μ(f)`; the support of `f` must lie inside the measure's support.
    pub fn expectation(&self, f: &LocalFunction) -> Result<f64> {
        let pos = self.support.positions_of(f.support())?;
        Ok(self
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(c, &p)| p * f.value(project_config(c as u64, &pos)))
            .sum())
    }

    /// `Σ_σ μ(σ) f(σ_S ω_{S^c})` where `S` is the support; `f` may read sites outside it.
    pub fn expectation_with(&self, f: &LocalFunction, exterior: &TailedConfiguration) -> f64 {
        let mut base = 0u64;
        let mut map: Vec<(usize, usize)> = Vec::new();
        for (k, s) in f.support().sites().iter().enumerate() {
            match self.support.index_of(*s) {
                Some(i) => map.push((i, k)),
                None => base |= bit_of(exterior.spin_at(*s)) << k,
            }
        }
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(c, &p)| {
                let code = map.iter().fold(base, |a, &(i, k)| a | ((c as u64) >> i & 1) << k);
                p * f.value(code)
            })
            .sum()
    }

    /// Total-variation distance `½ Σ |μ − ν|`.
    pub fn tv_distance(&self, other: &FiniteMeasure) -> Result<f64> {
        if self.support != other.support && self.support.sites() != other.support.sites() {
            return Err(Error::RegionMismatch("TV distance needs a common support".into()));
        }
        Ok(0.5 * self.probs.iter().zip(other.probs.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Spins of configuration `config` as a vector in site order.
    pub fn spins(&self, config: u64) -> Vec<Spin> {
        (0..self.support.len()).map(|i| crate::lattice::spin_of(config, i)).collect()
    }

    pub fn translate(&self, by: [i64; 2]) -> Result<Self> {
        Ok(Self { support: self.support.translate(by)?, probs: self.probs.clone() })
    }

    /// Same probabilities indexed by a region with the same site count and order.
    pub fn relabel(&self, support: Region) -> Result<Self> {
        if support.len() != self.support.len() {
            return invalid("relabel needs the same number of sites");
        }
        Ok(Self { support, probs: self.probs.clone() })
    }

    /// Probability that the sites take the listed spins.
    pub fn cylinder_prob(&self, sites: &[Site], spins: &[Spin]) -> Result<f64> {
        let r = Region::explicit(self.support.dim(), sites.iter().copied())?;
        let m = self.marginal(&r)?;
        let mut c = 0u64;
        for (s, v) in sites.iter().zip(spins) {
            let i = r.index_of(*s).expect("site in region");
            c |= bit_of(*v) << i;
        }
        Ok(m.prob(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Dim;

    #[test]
    fn product_marginal_and_expectation() {
        let r = Region::cube(1, Dim::One);
        let m = FiniteMeasure::product(r.clone(), &[0.25, 0.5, 0.75]).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        let one = Region::explicit(Dim::One, [Site::d1(1)]).unwrap();
        assert_eq!(m.marginal(&one).unwrap().probs(), &[0.25, 0.75]);
        let f = LocalFunction::spin_at(Site::d1(-1), Dim::One);
        assert!((m.expectation(&f).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let r = Region::cube(0, Dim::One);
        assert!(FiniteMeasure::new(r.clone(), vec![0.5, 0.6]).is_err());
        assert!(FiniteMeasure::new(r.clone(), vec![-0.1, 1.1]).is_err());
        let pm = FiniteMeasure::point_mass(r.clone(), 1).unwrap();
        let u = FiniteMeasure::uniform(r).unwrap();
        assert_eq!(pm.tv_distance(&u).unwrap(), 0.5);
    }
}
