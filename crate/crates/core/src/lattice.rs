//! Sites, regions, tailed configurations, local functions and interactions.
//!
//! Configurations of a region are encoded as `u64` bit patterns: bit `i`
//! is set when the `i`-th site of the region (in lexicographic order)
//! carries spin `+1`. Index `0` is therefore the all-minus configuration.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Spin = i8;
pub const PLUS: Spin = 1;
pub const MINUS: Spin = -1;

/// Largest absolute coordinate accepted after a translation.
pub const COORD_LIMIT: i64 = 1 << 40;

/// Largest region whose configurations can be tabulated.
pub const MAX_TABLE_SITES: usize = 26;

#[inline]
pub fn spin_of(config: u64, i: usize) -> Spin {
    if config >> i & 1 == 1 {
        PLUS
    } else {
        MINUS
    }
}

#[inline]
pub fn bit_of(spin: Spin) -> u64 {
    (spin > 0) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn as_usize(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }

    pub fn from_usize(d: usize) -> Result<Dim> {
        match d {
            1 => Ok(Dim::One),
            2 => Ok(Dim::Two),
            _ => invalid(format!("dimension {d} not supported (1 or 2)")),
        }
    }
}

/// A lattice site. `layer` separates source (0) from image (1) variables so
/// that joint systems on Ω × Ω' can be indexed by one region. In `d = 1`
/// the second coordinate is always zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub layer: u8,
    pub coords: [i64; 2],
}

impl Site {
    pub const ORIGIN: Site = Site { layer: 0, coords: [0, 0] };

    pub fn d1(x: i64) -> Site {
        Site { layer: 0, coords: [x, 0] }
    }

    pub fn d2(x: i64, y: i64) -> Site {
        Site { layer: 0, coords: [x, y] }
    }

    pub fn on_layer(self, layer: u8) -> Site {
        Site { layer, ..self }
    }

    pub fn offset(self, by: [i64; 2]) -> Result<Site> {
        let x = self.coords[0] + by[0];
        let y = self.coords[1] + by[1];
        if x.abs() > COORD_LIMIT || y.abs() > COORD_LIMIT {
            return Err(Error::OutOfBounds);
        }
        Ok(Site { layer: self.layer, coords: [x, y] })
    }

    /// Sup-norm radius.
    pub fn radius(self) -> i64 {
        self.coords[0].abs().max(self.coords[1].abs())
    }

    pub fn neighbors(self, dim: Dim) -> impl Iterator<Item = Site> {
        let [x, y] = self.coords;
        let l = self.layer;
        let all = [[x - 1, y], [x + 1, y], [x, y - 1], [x, y + 1]];
        let take = match dim {
            Dim::One => 2,
            Dim::Two => 4,
        };
        all.into_iter().take(take).map(move |c| Site { layer: l, coords: c })
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.layer == 0 {
            write!(f, "({},{})", self.coords[0], self.coords[1])
        } else {
            write!(f, "'({},{})", self.coords[0], self.coords[1])
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Cube(u32),
    Explicit,
    Annulus { outer: Box<Region>, inner: Box<Region> },
}

/// An ordered, duplicate-free set of sites. Equality ignores provenance.
#[derive(Clone, Debug)]
pub struct Region {
    dim: Dim,
    sites: Arc<[Site]>,
    provenance: Provenance,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.sites == other.sites
    }
}

impl Region {
    /// The cube `[-n, n]^d` on layer 0.
    pub fn cube(n: u32, dim: Dim) -> Region {
        Region::cube_on_layer(n, dim, 0)
    }

    pub fn cube_on_layer(n: u32, dim: Dim, layer: u8) -> Region {
        let n = n as i64;
        let mut sites = Vec::new();
        match dim {
            Dim::One => {
                for x in -n..=n {
                    sites.push(Site { layer, coords: [x, 0] });
                }
            }
            Dim::Two => {
                for x in -n..=n {
                    for y in -n..=n {
                        sites.push(Site { layer, coords: [x, y] });
                    }
                }
            }
        }
        Region { dim, sites: sites.into(), provenance: Provenance::Cube(n as u32) }
    }

    /// Builds a region from arbitrary sites, sorting them. Duplicates are an error.
    pub fn explicit(dim: Dim, sites: impl IntoIterator<Item = Site>) -> Result<Region> {
        let mut v: Vec<Site> = sites.into_iter().collect();
        v.sort();
        if v.windows(2).any(|w| w[0] == w[1]) {
            return invalid("duplicate site in region");
        }
        if dim == Dim::One && v.iter().any(|s| s.coords[1] != 0) {
            return invalid("d = 1 region with nonzero second coordinate");
        }
        Ok(Region { dim, sites: v.into(), provenance: Provenance::Explicit })
    }

    pub fn empty(dim: Dim) -> Region {
        Region { dim, sites: Arc::from(Vec::new()), provenance: Provenance::Explicit }
    }

    /// `outer \ inner`; `inner` must be a subset of `outer`.
    pub fn annulus(outer: &Region, inner: &Region) -> Result<Region> {
        if !inner.is_subset(outer) {
            return invalid("annulus inner region is not contained in the outer region");
        }
        let sites: Vec<Site> = outer.sites.iter().copied().filter(|s| !inner.contains(*s)).collect();
        Ok(Region {
            dim: outer.dim,
            sites: sites.into(),
            provenance: Provenance::Annulus { outer: Box::new(outer.clone()), inner: Box::new(inner.clone()) },
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn index_of(&self, site: Site) -> Option<usize> {
        self.sites.binary_search(&site).ok()
    }

    pub fn contains(&self, site: Site) -> bool {
        self.index_of(site).is_some()
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| other.contains(*s))
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| !other.contains(*s))
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut v: Vec<Site> = self.sites.iter().chain(other.sites.iter()).copied().collect();
        v.sort();
        v.dedup();
        Region { dim: self.dim, sites: v.into(), provenance: Provenance::Explicit }
    }

    pub fn difference(&self, other: &Region) -> Region {
        let v: Vec<Site> = self.sites.iter().copied().filter(|s| !other.contains(*s)).collect();
        Region { dim: self.dim, sites: v.into(), provenance: Provenance::Explicit }
    }

    pub fn intersection(&self, other: &Region) -> Region {
        let v: Vec<Site> = self.sites.iter().copied().filter(|s| other.contains(*s)).collect();
        Region { dim: self.dim, sites: v.into(), provenance: Provenance::Explicit }
    }

    /// Sup-norm radius of the smallest centered cube containing the region.
    pub fn radius(&self) -> i64 {
        self.sites.iter().map(|s| s.radius()).max().unwrap_or(0)
    }

    /// Nearest-neighbor sites outside the region.
    pub fn outer_boundary(&self) -> Region {
        let mut v: Vec<Site> = self
            .sites
            .iter()
            .flat_map(|s| s.neighbors(self.dim))
            .filter(|s| !self.contains(*s))
            .collect();
        v.sort();
        v.dedup();
        Region { dim: self.dim, sites: v.into(), provenance: Provenance::Explicit }
    }

    pub fn translate(&self, by: [i64; 2]) -> Result<Region> {
        if self.dim == Dim::One && by[1] != 0 {
            return invalid("d = 1 translation with nonzero second component");
        }
        let v = self.sites.iter().map(|s| s.offset(by)).collect::<Result<Vec<_>>>()?;
        Ok(Region { dim: self.dim, sites: v.into(), provenance: Provenance::Explicit })
    }

    /// Number of configurations, guarded by [`MAX_TABLE_SITES`].
    pub fn config_count(&self) -> Result<u64> {
        if self.len() > MAX_TABLE_SITES {
            return Err(Error::SizeCap {
                what: "configuration table".into(),
                needed: self.len() as u64,
                cap: MAX_TABLE_SITES as u64,
            });
        }
        Ok(1u64 << self.len())
    }

    /// Positions of `sub`'s sites inside `self`; errors when `sub ⊄ self`.
    pub fn positions_of(&self, sub: &Region) -> Result<Vec<usize>> {
        sub.sites
            .iter()
            .map(|s| {
                self.index_of(*s)
                    .ok_or_else(|| Error::RegionMismatch(format!("site {s} not in region")))
            })
            .collect()
    }
}

/// Projects a configuration of a parent region onto sites at `positions`.
#[inline]
pub fn project_config(config: u64, positions: &[usize]) -> u64 {
    let mut out = 0u64;
    for (k, &p) in positions.iter().enumerate() {
        out |= (config >> p & 1) << k;
    }
    out
}

/// Periodic exterior pattern: `base` everywhere except residues in `flips`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicPattern {
    period: [u64; 2],
    base: Spin,
    flips: Vec<[u64; 2]>,
}

impl PeriodicPattern {
    pub fn new(period: [u64; 2], base: Spin, mut flips: Vec<[u64; 2]>) -> Result<Self> {
        if period[0] == 0 || period[1] == 0 {
            return invalid("period must be positive");
        }
        if base != PLUS && base != MINUS {
            return invalid("base spin must be ±1");
        }
        if flips.iter().any(|r| r[0] >= period[0] || r[1] >= period[1]) {
            return invalid("flip residue outside the period");
        }
        flips.sort();
        flips.dedup();
        Ok(Self { period, base, flips })
    }

    /// Dense pattern over one period in row-major residue order.
    pub fn from_dense(period: [u64; 2], values: &[Spin]) -> Result<Self> {
        if values.len() as u64 != period[0] * period[1] {
            return invalid("pattern length does not match the period");
        }
        let flips = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == MINUS)
            .map(|(i, _)| [i as u64 / period[1], i as u64 % period[1]])
            .collect();
        Self::new(period, PLUS, flips)
    }

    pub fn period(&self) -> [u64; 2] {
        self.period
    }

    pub fn base(&self) -> Spin {
        self.base
    }

    pub fn flips(&self) -> &[[u64; 2]] {
        &self.flips
    }

    pub fn spin_at(&self, coords: [i64; 2]) -> Spin {
        let r = [
            coords[0].rem_euclid(self.period[0] as i64) as u64,
            coords[1].rem_euclid(self.period[1] as i64) as u64,
        ];
        if self.flips.binary_search(&r).is_ok() {
            -self.base
        } else {
            self.base
        }
    }

    fn shifted(&self, by: [i64; 2]) -> PeriodicPattern {
        let flips = self
            .flips
            .iter()
            .map(|r| {
                [
                    (r[0] as i64 + by[0]).rem_euclid(self.period[0] as i64) as u64,
                    (r[1] as i64 + by[1]).rem_euclid(self.period[1] as i64) as u64,
                ]
            })
            .collect();
        PeriodicPattern::new(self.period, self.base, flips).expect("shift keeps residues valid")
    }
}

/// Rule giving the spin outside a configuration's window.
#[derive(Clone, Debug, PartialEq)]
pub enum Tail {
    AllPlus,
    AllMinus,
    Periodic(PeriodicPattern),
    Named { name: String, config: Arc<TailedConfiguration> },
}

impl Tail {
    pub fn alternating(dim: Dim) -> Tail {
        let p = match dim {
            Dim::One => PeriodicPattern::new([2, 1], PLUS, vec![[1, 0]]),
            Dim::Two => PeriodicPattern::new([2, 2], PLUS, vec![[0, 1], [1, 0]]),
        };
        Tail::Periodic(p.expect("valid alternating pattern"))
    }

    pub fn constant(spin: Spin) -> Tail {
        if spin > 0 {
            Tail::AllPlus
        } else {
            Tail::AllMinus
        }
    }

    pub fn spin_at(&self, site: Site) -> Spin {
        match self {
            Tail::AllPlus => PLUS,
            Tail::AllMinus => MINUS,
            Tail::Periodic(p) => p.spin_at(site.coords),
            Tail::Named { config, .. } => config.spin_at(site),
        }
    }

    fn translate(&self, by: [i64; 2]) -> Result<Tail> {
        Ok(match self {
            Tail::AllPlus | Tail::AllMinus => self.clone(),
            Tail::Periodic(p) => Tail::Periodic(p.shifted(by)),
            Tail::Named { name, config } => {
                Tail::Named { name: name.clone(), config: Arc::new(config.translate(by)?) }
            }
        })
    }
}

/// Verdict of the coordinatewise partial order on a horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderVerdict {
    Equal,
    Less,
    Greater,
    Incomparable,
}

/// A total spin configuration: explicit values on a window, `tail` elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct TailedConfiguration {
    window: Region,
    values: Arc<[Spin]>,
    tail: Tail,
}

impl TailedConfiguration {
    pub fn new(window: Region, values: Vec<Spin>, tail: Tail) -> Result<Self> {
        if values.len() != window.len() {
            return invalid("value count does not match the window");
        }
        if values.iter().any(|&v| v != PLUS && v != MINUS) {
            return invalid("spins must be ±1");
        }
        Ok(Self { window, values: values.into(), tail })
    }

    /// A configuration that equals `tail` everywhere.
    /// The same window values (shared, not copied) with another tail.
    pub fn with_tail(&self, tail: Tail) -> Self {
        Self { window: self.window.clone(), values: Arc::clone(&self.values), tail }
    }

    pub fn uniform(dim: Dim, tail: Tail) -> Self {
        Self { window: Region::empty(dim), values: Arc::from(Vec::new()), tail }
    }

    pub fn all_plus(dim: Dim) -> Self {
        Self::uniform(dim, Tail::AllPlus)
    }

    pub fn all_minus(dim: Dim) -> Self {
        Self::uniform(dim, Tail::AllMinus)
    }

    /// A window configuration encoded as bits over `window`.
    pub fn from_config(window: Region, config: u64, tail: Tail) -> Self {
        let values: Vec<Spin> = (0..window.len()).map(|i| spin_of(config, i)).collect();
        Self { window, values: values.into(), tail }
    }

    pub fn window(&self) -> &Region {
        &self.window
    }

    pub fn values(&self) -> &[Spin] {
        &self.values
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn dim(&self) -> Dim {
        self.window.dim()
    }

    pub fn spin_at(&self, site: Site) -> Spin {
        match self.window.index_of(site) {
            Some(i) => self.values[i],
            None => self.tail.spin_at(site),
        }
    }

    /// Bits of the configuration restricted to `region`.
    pub fn config_on(&self, region: &Region) -> u64 {
        debug_assert!(region.len() <= 64);
        region
            .sites()
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, s)| acc | bit_of(self.spin_at(*s)) << i)
    }

    pub fn restrict(&self, region: &Region) -> Vec<Spin> {
        region.sites().iter().map(|s| self.spin_at(*s)).collect()
    }

    /// Same configuration with the window widened to `region ∪ window`.
    pub fn materialize(&self, region: &Region) -> TailedConfiguration {
        let window = self.window.union(region);
        let values = window.sites().iter().map(|s| self.spin_at(*s)).collect::<Vec<_>>();
        TailedConfiguration { window, values: values.into(), tail: self.tail.clone() }
    }

    /// `inner` on `lambda`, `outer` everywhere else.
    pub fn splice(inner: &TailedConfiguration, outer: &TailedConfiguration, lambda: &Region) -> Result<Self> {
        if !lambda.is_subset(&inner.window) {
            return invalid("inner configuration window does not cover the splice region");
        }
        let window = outer.window.union(lambda);
        let values: Vec<Spin> = window
            .sites()
            .iter()
            .map(|s| if lambda.contains(*s) { inner.spin_at(*s) } else { outer.spin_at(*s) })
            .collect();
        Ok(Self { window, values: values.into(), tail: outer.tail.clone() })
    }

    /// Shorthand for `ω_Λ θ_{Λ^c}` where `omega` is read on `lambda`.
    pub fn with_exterior(&self, lambda: &Region, exterior: &TailedConfiguration) -> Self {
        let inner = self.materialize(lambda);
        Self::splice(&inner, exterior, lambda).expect("materialized window covers lambda")
    }

    pub fn compare(a: &TailedConfiguration, b: &TailedConfiguration, horizon: &Region) -> OrderVerdict {
        let mut le = true;
        let mut ge = true;
        for s in horizon.sites() {
            let (x, y) = (a.spin_at(*s), b.spin_at(*s));
            le &= x <= y;
            ge &= x >= y;
        }
        match (le, ge) {
            (true, true) => OrderVerdict::Equal,
            (true, false) => OrderVerdict::Less,
            (false, true) => OrderVerdict::Greater,
            (false, false) => OrderVerdict::Incomparable,
        }
    }

    pub fn translate(&self, by: [i64; 2]) -> Result<Self> {
        Ok(Self { window: self.window.translate(by)?, values: self.values.clone(), tail: self.tail.translate(by)? })
    }
}

/// A function of the spins on a finite support, tabulated over its configurations.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFunction {
    support: Region,
    table: Arc<[f64]>,
}

impl LocalFunction {
    pub fn new(support: Region, table: Vec<f64>) -> Result<Self> {
        let n = support.config_count()?;
        if table.len() as u64 != n {
            return invalid("table length does not match the support");
        }
        if table.iter().any(|v| !v.is_finite()) {
            return invalid("local function values must be finite");
        }
        Ok(Self { support, table: table.into() })
    }

    pub fn from_fn(support: Region, f: impl Fn(&[Spin]) -> f64) -> Result<Self> {
        let n = support.config_count()?;
        let mut spins = vec![MINUS; support.len()];
        let table = (0..n)
            .map(|c| {
                for (i, s) in spins.iter_mut().enumerate() {
                    *s = spin_of(c, i);
                }
                f(&spins)
            })
            .collect();
        Self::new(support, table)
    }

    pub fn constant(dim: Dim, c: f64) -> Self {
        Self::new(Region::empty(dim), vec![c]).expect("finite constant")
    }

    pub fn spin_at(site: Site, dim: Dim) -> Self {
        Self::new(Region::explicit(dim, [site]).expect("single site"), vec![-1.0, 1.0]).expect("valid")
    }

    /// Product of spins over `sites`.
    pub fn spin_product(dim: Dim, sites: impl IntoIterator<Item = Site>) -> Result<Self> {
        let r = Region::explicit(dim, sites)?;
        Self::from_fn(r, |s| s.iter().map(|&v| v as f64).product())
    }

    /// Indicator that every spin in `sites` is `+`.
    pub fn all_plus_indicator(dim: Dim, sites: impl IntoIterator<Item = Site>) -> Result<Self> {
        let r = Region::explicit(dim, sites)?;
        Self::from_fn(r, |s| if s.iter().all(|&v| v > 0) { 1.0 } else { 0.0 })
    }

    /// Indicator of the given bit mask of configurations.
    pub fn indicator(support: Region, accept: impl Fn(u64) -> bool) -> Result<Self> {
        let n = support.config_count()?;
        Self::new(support, (0..n).map(|c| if accept(c) { 1.0 } else { 0.0 }).collect())
    }

    pub fn magnetization(region: &Region) -> Result<Self> {
        Self::from_fn(region.clone(), |s| s.iter().map(|&v| v as f64).sum())
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn value(&self, config: u64) -> f64 {
        self.table[config as usize]
    }

    pub fn eval_by(&self, spin: impl Fn(Site) -> Spin) -> f64 {
        let c = self
            .support
            .sites()
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, s)| acc | bit_of(spin(*s)) << i);
        self.value(c)
    }

    pub fn eval(&self, omega: &TailedConfiguration) -> f64 {
        self.eval_by(|s| omega.spin_at(s))
    }

    pub fn sup_norm(&self) -> f64 {
        self.table.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when the function is nondecreasing in every spin.
    pub fn is_increasing(&self) -> bool {
        let n = self.support.len();
        (0..self.table.len() as u64).all(|c| {
            (0..n).all(|i| c >> i & 1 == 1 || self.table[c as usize] <= self.table[(c | 1 << i) as usize])
        })
    }

    pub fn translate(&self, by: [i64; 2]) -> Result<Self> {
        // translation preserves lexicographic order, so the table carries over
        Ok(Self { support: self.support.translate(by)?, table: self.table.clone() })
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { support: self.support.clone(), table: self.table.iter().map(|v| v * k).collect::<Vec<_>>().into() }
    }
}

/// Nearest-neighbor Ising interaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub coupling: f64,
    pub field: f64,
    pub beta: f64,
}

impl Interaction {
    pub fn new(coupling: f64, field: f64, beta: f64) -> Result<Self> {
        if !(coupling.is_finite() && field.is_finite() && beta.is_finite()) || beta < 0.0 {
            return invalid("interaction parameters must be finite with β ≥ 0");
        }
        Ok(Self { coupling, field, beta })
    }

    pub fn ising(beta: f64) -> Self {
        Self::new(1.0, 0.0, beta).expect("finite")
    }

    /// βJ
    pub fn k(&self) -> f64 {
        self.beta * self.coupling
    }

    /// βh
    pub fn hb(&self) -> f64 {
        self.beta * self.field
    }

    pub fn range(&self) -> i64 {
        1
    }
}

/// Boundary condition for finite-volume laws.
#[derive(Clone, Debug, PartialEq)]
pub enum Boundary {
    Free,
    Periodic,
    Fixed(TailedConfiguration),
}

impl From<TailedConfiguration> for Boundary {
    fn from(c: TailedConfiguration) -> Self {
        Boundary::Fixed(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cubes_have_the_right_size() {
        let c = Region::cube(0, Dim::Two);
        assert_eq!(c.sites(), &[Site::ORIGIN]);
        assert_eq!(Region::cube(1, Dim::Two).len(), 9);
        let line = Region::cube(2, Dim::One);
        let xs: Vec<i64> = line.sites().iter().map(|s| s.coords[0]).collect();
        assert_eq!(xs, vec![-2, -1, 0, 1, 2]);
    }

    #[test]
    fn explicit_rejects_duplicates_and_annulus_needs_subset() {
        assert!(Region::explicit(Dim::One, [Site::d1(1), Site::d1(1)]).is_err());
        let outer = Region::cube(1, Dim::One);
        let inner = Region::cube(2, Dim::One);
        assert!(Region::annulus(&outer, &inner).is_err());
        let a = Region::annulus(&inner, &outer).unwrap();
        assert_eq!(a.len(), 2);
        assert!(matches!(a.provenance(), Provenance::Annulus { .. }));
    }

    #[test]
    fn splice_plus_inside_minus_outside() {
        let lambda = Region::cube(1, Dim::One);
        let plus = TailedConfiguration::all_plus(Dim::One).materialize(&lambda);
        let minus = TailedConfiguration::all_minus(Dim::One);
        let s = TailedConfiguration::splice(&plus, &minus, &lambda).unwrap();
        assert_eq!(s.spin_at(Site::d1(1)), PLUS);
        assert_eq!(s.spin_at(Site::d1(2)), MINUS);
        assert_eq!(s.spin_at(Site::d1(-40)), MINUS);
        // inner window must cover Λ
        let bare = TailedConfiguration::all_plus(Dim::One);
        assert!(TailedConfiguration::splice(&bare, &minus, &lambda).is_err());
        // splicing the outer's own restriction changes nothing
        let alt = TailedConfiguration::uniform(Dim::One, Tail::alternating(Dim::One));
        let same = TailedConfiguration::splice(&alt.materialize(&lambda), &alt, &lambda).unwrap();
        for x in -5..=5 {
            assert_eq!(same.spin_at(Site::d1(x)), alt.spin_at(Site::d1(x)));
        }
    }

    #[test]
    fn compare_examples() {
        let h = Region::explicit(Dim::One, [Site::d1(0), Site::d1(1)]).unwrap();
        let mk = |a: Spin, b: Spin| TailedConfiguration::new(h.clone(), vec![a, b], Tail::AllPlus).unwrap();
        assert_eq!(TailedConfiguration::compare(&mk(1, 1), &mk(1, -1), &h), OrderVerdict::Greater);
        assert_eq!(TailedConfiguration::compare(&mk(1, -1), &mk(-1, 1), &h), OrderVerdict::Incomparable);
        assert_eq!(TailedConfiguration::compare(&mk(-1, 1), &mk(-1, 1), &h), OrderVerdict::Equal);
    }

    #[test]
    fn translate_spin_function_by_one() {
        let f = LocalFunction::spin_at(Site::ORIGIN, Dim::One);
        let g = f.translate([1, 0]).unwrap();
        assert_eq!(g.support().sites(), &[Site::d1(1)]);
        let two = Region::explicit(Dim::One, [Site::d1(0), Site::d1(1)]).unwrap();
        for c in 0..4u64 {
            let w = TailedConfiguration::from_config(two.clone(), c, Tail::AllPlus);
            // (τ_i f)(ω) = f(τ_{-i} ω) and (τ_{-i} ω)_0 = ω_1
            let shifted = w.translate([-1, 0]).unwrap();
            assert_eq!(g.eval(&w), f.eval(&shifted));
            assert_eq!(g.eval(&w), spin_of(c, 1) as f64);
        }
        assert!(f.translate([COORD_LIMIT * 2, 0]).is_err());
    }

    #[test]
    fn alternating_tail_alternates() {
        let t = Tail::alternating(Dim::Two);
        assert_eq!(t.spin_at(Site::d2(0, 0)), PLUS);
        assert_eq!(t.spin_at(Site::d2(1, 0)), MINUS);
        assert_eq!(t.spin_at(Site::d2(1, 1)), PLUS);
        assert_eq!(t.spin_at(Site::d2(-3, 0)), MINUS);
    }

    fn small_config(bits: u64, tail_plus: bool) -> TailedConfiguration {
        let w = Region::cube(1, Dim::One);
        TailedConfiguration::from_config(w, bits, if tail_plus { Tail::AllPlus } else { Tail::AllMinus })
    }

    proptest! {
        #[test]
        fn compare_is_a_partial_order(a in 0u64..8, b in 0u64..8, c in 0u64..8) {
            let h = Region::cube(1, Dim::One);
            let (x, y, z) = (small_config(a, true), small_config(b, true), small_config(c, true));
            let le = |p: &TailedConfiguration, q: &TailedConfiguration| matches!(
                TailedConfiguration::compare(p, q, &h), OrderVerdict::Less | OrderVerdict::Equal);
            prop_assert!(le(&x, &x));
            if le(&x, &y) && le(&y, &x) { prop_assert_eq!(a, b); }
            if le(&x, &y) && le(&y, &z) { prop_assert!(le(&x, &z)); }
        }

        #[test]
        fn splice_agrees_inside_and_outside(a in 0u64..256, b in 0u64..256, tail in any::<bool>()) {
            let w = Region::explicit(Dim::One, (-4..4).map(Site::d1)).unwrap();
            let inner = TailedConfiguration::from_config(w.clone(), a, Tail::AllPlus);
            let outer = TailedConfiguration::from_config(w.clone(), b, Tail::constant(if tail {1} else {-1}));
            let lambda = Region::cube(1, Dim::One);
            let s = TailedConfiguration::splice(&inner, &outer, &lambda).unwrap();
            for x in -8..8 {
                let site = Site::d1(x);
                let want = if lambda.contains(site) { inner.spin_at(site) } else { outer.spin_at(site) };
                prop_assert_eq!(s.spin_at(site), want);
            }
        }

        #[test]
        fn translation_is_a_group_action(i in -5i64..5, j in -5i64..5, bits in 0u64..8) {
            let c = TailedConfiguration::from_config(Region::cube(1, Dim::One), bits, Tail::alternating(Dim::One));
            let two = c.translate([i, 0]).unwrap().translate([j, 0]).unwrap();
            let once = c.translate([i + j, 0]).unwrap();
            for x in -12..12 {
                prop_assert_eq!(two.spin_at(Site::d1(x)), once.spin_at(Site::d1(x)));
                // (τ_i ω)_x = ω_{x - i}
                prop_assert_eq!(once.spin_at(Site::d1(x)), c.spin_at(Site::d1(x - i - j)));
            }
            let back = c.translate([i, 0]).unwrap().translate([-i, 0]).unwrap();
            for x in -12..12 { prop_assert_eq!(back.spin_at(Site::d1(x)), c.spin_at(Site::d1(x))); }
        }

        #[test]
        fn local_function_ignores_outside_spins(a in 0u64..64, b in 0u64..64) {
            let w = Region::explicit(Dim::One, (0..6).map(Site::d1)).unwrap();
            let f = LocalFunction::from_fn(
                Region::explicit(Dim::One, [Site::d1(1), Site::d1(3)]).unwrap(),
                |s| s[0] as f64 * 2.0 + s[1] as f64).unwrap();
            let x = TailedConfiguration::from_config(w.clone(), a, Tail::AllPlus);
            // same spins at 1 and 3, arbitrary elsewhere
            let mask = 0b001010u64;
            let y = TailedConfiguration::from_config(w, (a & mask) | (b & !mask), Tail::AllMinus);
            prop_assert_eq!(f.eval(&x), f.eval(&y));
        }
    }
}
