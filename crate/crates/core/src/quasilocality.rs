//! Continuity diagnostics: variations, directional discrepancies, bad-set
//! probabilities, continuity rates and a function that is quasilocal in every
//! direction at a point without being quasilocal there.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{Dim, LocalFunction, PeriodicPattern, Region, Site, Tail, TailedConfiguration, MINUS, PLUS};
use crate::par;
use crate::specification::KernelRecipe;
use crate::thermo::MeasureRecipe;

/// A real function of a total configuration.
pub trait ConfigFunction: Sync {
    fn eval(&self, eta: &TailedConfiguration) -> Result<f64>;

    fn sup_norm(&self) -> f64;

    /// Sites the value depends on, when finitely many.
    fn dependence(&self) -> Option<Region>;
}

impl ConfigFunction for LocalFunction {
    fn eval(&self, eta: &TailedConfiguration) -> Result<f64> {
        Ok(LocalFunction::eval(self, eta))
    }

    fn sup_norm(&self) -> f64 {
        LocalFunction::sup_norm(self)
    }

    fn dependence(&self) -> Option<Region> {
        Some(self.support().clone())
    }
}

/// `ω ↦ γ_Λ(f)(ω)`.
pub struct KernelFunction<'a> {
    pub recipe: &'a dyn KernelRecipe,
    pub lambda: Region,
    pub f: LocalFunction,
}

impl ConfigFunction for KernelFunction<'_> {
    fn eval(&self, eta: &TailedConfiguration) -> Result<f64> {
        self.recipe.expectation(&self.lambda, eta, &self.f)
    }

    fn sup_norm(&self) -> f64 {
        self.f.sup_norm()
    }

    fn dependence(&self) -> Option<Region> {
        let d = self.recipe.dependence_set(&self.lambda)?;
        Some(d.union(&self.f.support().difference(&self.lambda)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Variation {
    pub value: f64,
    /// True when every exterior configuration that matters was enumerated;
    /// otherwise `value` is a lower bound over the probe set.
    pub exact: bool,
    pub evaluations: usize,
}

/// Largest exterior dependence enumerated exactly by [`variation_at`].
pub const EXACT_VARIATION_SITES: usize = 16;

/// `sup |F(ω_Λ σ_{Λ^c}) − F(ω_Λ η_{Λ^c})|`, exact for finite-range `F`,
/// otherwise over `ω_Λ` followed by each probe's exterior.
pub fn variation_at(
    func: &dyn ConfigFunction,
    omega: &TailedConfiguration,
    lambda: &Region,
    probes: &[TailedConfiguration],
) -> Result<Variation> {
    let values: Vec<f64> = match func.dependence() {
        Some(d) if d.difference(lambda).len() <= EXACT_VARIATION_SITES => {
            let ext = d.difference(lambda);
            let vals = par::map_range(1usize << ext.len(), |c| {
                let inner = TailedConfiguration::from_config(ext.clone(), c as u64, Tail::AllPlus);
                func.eval(&TailedConfiguration::splice(&inner, omega, &ext)?)
            });
            let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
            let (lo, hi) = min_max(&vals);
            return Ok(Variation { value: hi - lo, exact: true, evaluations: vals.len() });
        }
        _ => {
            let base = omega.materialize(lambda);
            let etas: Vec<TailedConfiguration> = probes
                .iter()
                .map(|s| if s.window().is_empty() { base.with_tail(s.tail().clone()) } else { omega.with_exterior(lambda, s) })
                .collect();
            par::map_slice(&etas, |e| func.eval(e)).into_iter().collect::<Result<_>>()?
        }
    };
    let (lo, hi) = min_max(&values);
    Ok(Variation { value: if values.is_empty() { 0.0 } else { hi - lo }, exact: false, evaluations: values.len() })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DirectionalDelta {
    pub value: f64,
    pub m: u32,
    /// `γ_Λ(f)` is replaced by the kernel with `θ` beyond `Λ_{m_ref}`.
    pub m_ref: u32,
}

/// `|γ_Λ(f | ω_{Λ_M} θ) − γ_Λ(f | ω_{Λ_{M_ref}} θ)|`.
#[allow(clippy::too_many_arguments)]
pub fn directional_delta(
    gamma: &dyn KernelRecipe,
    lambda: &Region,
    m: u32,
    f: &LocalFunction,
    theta: &TailedConfiguration,
    omega: &TailedConfiguration,
    m_ref: u32,
) -> Result<DirectionalDelta> {
    if m >= m_ref {
        return invalid("need M < M_ref");
    }
    let near = gamma.expectation(lambda, &omega.with_exterior(&gamma.window(m), theta), f)?;
    let far = gamma.expectation(lambda, &omega.with_exterior(&gamma.window(m_ref), theta), f)?;
    Ok(DirectionalDelta { value: (near - far).abs(), m, m_ref })
}

/// How `η ~ μ` is handled by [`bad_set_probability`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sampling {
    /// Sum over every annulus configuration.
    Exact,
    /// Independent draws from the exact annulus marginal.
    Iid { seed: u64, samples: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BadSetEntry {
    pub m: u32,
    pub probability: f64,
    pub standard_error: f64,
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BadSetRecord {
    pub theta: String,
    pub lambda: Vec<[i64; 2]>,
    pub f: String,
    pub eps: f64,
    pub m_ref_offset: u32,
    pub entries: Vec<BadSetEntry>,
}

/// Cap on annulus sites tabulated for [`bad_set_probability`].
pub const BAD_SET_SITES: usize = 22;

/// `μ{η : δ^θ_{Λ,M}(f)(η) > ε}` with `γ_Λ f` taken at `M_ref`.
#[allow(clippy::too_many_arguments)]
pub fn bad_set_probability(
    mu: &MeasureRecipe,
    gamma: &dyn KernelRecipe,
    theta: &TailedConfiguration,
    lambda: &Region,
    f: &LocalFunction,
    eps: f64,
    m: u32,
    m_ref: u32,
    sampling: Sampling,
) -> Result<BadSetEntry> {
    if m >= m_ref {
        return invalid("need M < M_ref");
    }
    let exact = matches!(sampling, Sampling::Exact);
    if eps >= 2.0 * f.sup_norm() {
        return Ok(BadSetEntry { m, probability: 0.0, standard_error: 0.0, exact });
    }
    let lm = gamma.window(m);
    let w = gamma.window(m_ref);
    let ann = lm.difference(lambda);
    let annw = w.difference(lambda);
    if annw.len() > BAD_SET_SITES {
        return Err(Error::Budget(format!("{} annulus sites exceed {BAD_SET_SITES}", annw.len())));
    }
    let law = mu.marginal(&annw)?;
    let eval = |z: u64| -> Result<f64> {
        let eta = TailedConfiguration::from_config(annw.clone(), z, Tail::AllPlus);
        let near = gamma.expectation(lambda, &eta.with_exterior(&ann, theta), f)?;
        let far = gamma.expectation(lambda, &eta.with_exterior(&annw, theta), f)?;
        Ok((near - far).abs())
    };
    match sampling {
        Sampling::Exact => {
            let codes: Vec<u64> = (0..law.probs().len() as u64).filter(|&z| law.prob(z) > 0.0).collect();
            let deltas = par::map_slice(&codes, |&z| eval(z)).into_iter().collect::<Result<Vec<_>>>()?;
            let terms: Vec<f64> =
                codes.iter().zip(&deltas).map(|(&z, &d)| if d > eps { law.prob(z) } else { 0.0 }).collect();
            Ok(BadSetEntry { m, probability: par::ordered_sum(&terms).min(1.0), standard_error: 0.0, exact: true })
        }
        Sampling::Iid { seed, samples } => {
            if samples == 0 {
                return invalid("need at least one sample");
            }
            let mut cdf = Vec::with_capacity(law.probs().len());
            let mut acc = 0.0;
            for &p in law.probs() {
                acc += p;
                cdf.push(acc);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draws: Vec<u64> = (0..samples)
                .map(|_| {
                    let u = (rng.next_u64() >> 11) as f64 * acc / (1u64 << 53) as f64;
                    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64
                })
                .collect();
            let all = draws.clone();
            draws.sort_unstable();
            draws.dedup();
            let deltas = par::map_slice(&draws, |&z| eval(z)).into_iter().collect::<Result<Vec<_>>>()?;
            let bad = all
                .iter()
                .filter(|z| deltas[draws.binary_search(z).expect("drawn code")] > eps)
                .count();
            let p = bad as f64 / samples as f64;
            Ok(BadSetEntry { m, probability: p, standard_error: (p * (1.0 - p) / samples as f64).sqrt(), exact: false })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateEntry {
    pub m: u32,
    pub alpha: f64,
    /// `(1/α_M) log μ[A]`, `-∞` when the probability is zero.
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateSeries {
    pub entries: Vec<RateEntry>,
    /// Largest entry over the upper half of the computed range.
    pub limsup_estimate: f64,
}

pub fn continuity_rate(record: &BadSetRecord, alpha: &[f64]) -> Result<RateSeries> {
    if record.entries.is_empty() {
        return invalid("empty bad-set record");
    }
    if alpha.len() != record.entries.len() {
        return invalid("one α_M per record entry");
    }
    let entries: Vec<RateEntry> = record
        .entries
        .iter()
        .zip(alpha)
        .map(|(e, &a)| RateEntry {
            m: e.m,
            alpha: a,
            value: if e.probability > 0.0 { e.probability.ln() / a } else { f64::NEG_INFINITY },
        })
        .collect();
    let half = entries.len() / 2;
    let limsup_estimate = entries[half..].iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
    Ok(RateSeries { entries, limsup_estimate })
}

/// `(1/(α_M δ)) e^{α_M (δ − c)} + H_{Λ_M}(μ|ν) / (α_M δ)` per `M`.
pub fn prop1_bound(h: &[f64], alpha: &[f64], c: f64, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta < c) {
        return invalid("need 0 < δ < c");
    }
    if h.len() != alpha.len() {
        return invalid("H and α series differ in length");
    }
    Ok(h.iter().zip(alpha).map(|(&h, &a)| ((a * (delta - c)).exp() + h) / (a * delta)).collect())
}

/// `ω = +` and tails `χ^(m)`, `m ≥ 1`, equal to `+` exactly on `x ≡ 1 (mod m+2)`.
#[derive(Clone, Debug)]
pub struct TailFamily {
    base: TailedConfiguration,
}

impl Default for TailFamily {
    fn default() -> Self {
        Self { base: TailedConfiguration::all_plus(Dim::One) }
    }
}

impl TailFamily {
    pub fn base(&self) -> &TailedConfiguration {
        &self.base
    }

    pub fn pattern(m: u64) -> Result<PeriodicPattern> {
        if m == 0 {
            return invalid("the family starts at m = 1");
        }
        PeriodicPattern::new([m + 2, 1], MINUS, vec![[1, 0]])
    }

    pub fn chi(&self, m: u64) -> Result<TailedConfiguration> {
        Ok(TailedConfiguration::uniform(Dim::One, Tail::Periodic(Self::pattern(m)?)))
    }

    /// Checks `χ^(m)_0 ≠ ω_0` and that distinct members differ outside
    /// `[−n, n]` for every `n ≤ n_max`.
    pub fn certify_distinct(&self, m_max: u64, n_max: i64) -> Result<()> {
        let pats: Vec<PeriodicPattern> = (1..=m_max).map(Self::pattern).collect::<Result<_>>()?;
        for (i, p) in pats.iter().enumerate() {
            if p.spin_at([0, 0]) == self.base.spin_at(Site::d1(0)) {
                return Err(Error::Ambiguous(format!("χ^({}) agrees with ω at the origin", i + 1)));
            }
        }
        let pairs: Vec<(usize, usize)> =
            (0..pats.len()).flat_map(|i| (i + 1..pats.len()).map(move |j| (i, j))).collect();
        let bad = par::map_slice(&pairs, |&(i, j)| {
            // a difference beyond n_max serves every smaller n
            let q = pats[i].period()[0].max(pats[j].period()[0]) as i64;
            let hit = (n_max + 1..=n_max + 1 + 2 * q).any(|x| pats[i].spin_at([x, 0]) != pats[j].spin_at([x, 0]));
            (!hit).then_some((i + 1, j + 1))
        });
        match bad.into_iter().flatten().next() {
            Some((a, b)) => Err(Error::Ambiguous(format!("χ^({a}) and χ^({b}) agree beyond {n_max}"))),
            None => Ok(()),
        }
    }

    /// The `m` with `tail = χ^(m)`, after reducing the tail to its minimal period.
    pub fn identify(&self, tail: &Tail) -> Result<Option<u64>> {
        let Tail::Periodic(p) = tail else {
            return Ok(None);
        };
        let q0 = p.period()[0];
        if q0 > 100_000_000 {
            return Err(Error::SizeCap { what: "tail period".into(), needed: q0, cap: 100_000_000 });
        }
        let row: Vec<u64> = p.flips().iter().filter(|r| r[1] == 0).map(|r| r[0]).collect();
        let plus: Vec<u64> = if p.base() == MINUS {
            row
        } else {
            if (q0 as usize).saturating_sub(row.len()) > 1_000_000 {
                return Ok(None);
            }
            (0..q0).filter(|r| row.binary_search(r).is_err()).collect()
        };
        if plus.is_empty() {
            return Ok(None);
        }
        let q = minimal_period(&plus, q0);
        if plus.len() as u64 * q != q0 || q < 3 || plus[0] % q != 1 {
            return Ok(None);
        }
        Ok(Some(q - 2))
    }
}

fn minimal_period(plus: &[u64], q0: u64) -> u64 {
    let mut divs: Vec<u64> = Vec::new();
    let mut d = 1;
    while d * d <= q0 {
        if q0.is_multiple_of(d) {
            divs.push(d);
            divs.push(q0 / d);
        }
        d += 1;
    }
    divs.sort_unstable();
    divs.dedup();
    for d in divs {
        if q0.is_multiple_of(d) && (plus.len() as u64 * d).is_multiple_of(q0) && plus.iter().all(|&r| plus.binary_search(&((r + d) % q0)).is_ok()) {
            return d;
        }
    }
    q0
}

/// Resolves named tails into an explicit window and a non-named tail.
fn flatten(eta: &TailedConfiguration) -> TailedConfiguration {
    let mut cur = eta.clone();
    while let Tail::Named { config, .. } = cur.tail() {
        let inner = flatten(config);
        let window = cur.window().union(inner.window());
        let values = window.sites().iter().map(|&s| cur.spin_at(s)).collect();
        cur = TailedConfiguration::new(window, values, inner.tail().clone()).expect("valid spins");
    }
    cur
}

/// `m/(n+m)` when `η = ω_{[−n,n]} χ^(m)` outside `[−n,n]`, else `0`;
/// matches with `n > n_max` or `m > m_max` count as no match.
pub fn counterexample_f(eta: &TailedConfiguration, family: &TailFamily, n_max: u64, m_max: u64) -> Result<f64> {
    if eta.dim() != Dim::One {
        return invalid("the counterexample lives on the 1-D lattice");
    }
    let eta = flatten(eta);
    let Some(m) = family.identify(eta.tail())? else {
        return Ok(0.0);
    };
    if m > m_max {
        return Ok(0.0);
    }
    let chi = TailFamily::pattern(m)?;
    // beyond the window η is its tail, already identified with χ^(m)
    let reach = eta.window().radius().max(0) + 3;
    let omega = |x: i64| family.base().spin_at(Site::d1(x));
    // r: the first distance where η leaves ω; the match forces n = r − 1
    let mut r = None;
    for d in 0..=reach {
        if eta.spin_at(Site::d1(d)) != omega(d) || eta.spin_at(Site::d1(-d)) != omega(-d) {
            r = Some(d);
            break;
        }
    }
    let Some(r) = r else {
        return Ok(0.0);
    };
    if r == 0 {
        return Ok(0.0);
    }
    for d in r..=reach {
        for x in [d, -d] {
            if eta.spin_at(Site::d1(x)) != chi.spin_at([x, 0]) {
                return Ok(0.0);
            }
        }
    }
    let n = (r - 1) as u64;
    if n > n_max {
        return Ok(0.0);
    }
    // a second representation would need χ^(m) = ω at both ±(n+1), impossible for period ≥ 3
    if chi.spin_at([n as i64 + 1, 0]) == PLUS && chi.spin_at([-(n as i64) - 1, 0]) == PLUS {
        return Err(Error::Ambiguous(format!("two representations at n = {n}")));
    }
    Ok(m as f64 / (n + m) as f64)
}

/// The counterexample as a [`ConfigFunction`].
#[derive(Clone, Debug)]
pub struct Counterexample {
    pub family: TailFamily,
    pub n_max: u64,
    pub m_max: u64,
}

impl ConfigFunction for Counterexample {
    fn eval(&self, eta: &TailedConfiguration) -> Result<f64> {
        counterexample_f(eta, &self.family, self.n_max, self.m_max)
    }

    fn sup_norm(&self) -> f64 {
        1.0
    }

    fn dependence(&self) -> Option<Region> {
        None
    }
}

/// Named exterior directions: all minus, alternating, all plus, `χ^(1)`, `χ^(10)`.
pub fn preset_directions(family: &TailFamily) -> Result<Vec<(String, TailedConfiguration)>> {
    Ok(vec![
        ("all_minus".into(), TailedConfiguration::all_minus(Dim::One)),
        ("alternating".into(), TailedConfiguration::uniform(Dim::One, Tail::alternating(Dim::One))),
        ("all_plus".into(), TailedConfiguration::all_plus(Dim::One)),
        ("chi_1".into(), family.chi(1)?),
        ("chi_10".into(), family.chi(10)?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_value() {
        let fam = TailFamily::default();
        let lam = Region::cube(3, Dim::One);
        let eta = fam.base().with_exterior(&lam, &fam.chi(2).unwrap());
        assert!((counterexample_f(&eta, &fam, 1000, 1000).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(counterexample_f(fam.base(), &fam, 1000, 1000).unwrap(), 0.0);
    }

    #[test]
    fn doubled_period_reduces() {
        let fam = TailFamily::default();
        let p = PeriodicPattern::new([10, 1], MINUS, vec![[1, 0], [6, 0]]).unwrap();
        assert_eq!(fam.identify(&Tail::Periodic(p)).unwrap(), Some(3));
        let q = PeriodicPattern::new([10, 1], MINUS, vec![[1, 0], [7, 0]]).unwrap();
        assert_eq!(fam.identify(&Tail::Periodic(q)).unwrap(), None);
    }

    #[test]
    fn synthetic_rate_and_bound() {
        let rec = BadSetRecord {
            theta: "+".into(),
            lambda: vec![[0, 0]],
            f: "s0".into(),
            eps: 0.1,
            m_ref_offset: 1,
            entries: (1..=6)
                .map(|m| BadSetEntry { m, probability: (-0.7 * m as f64).exp(), standard_error: 0.0, exact: true })
                .collect(),
        };
        let a: Vec<f64> = (1..=6).map(|m| m as f64).collect();
        let r = continuity_rate(&rec, &a).unwrap();
        assert!(r.entries.iter().all(|e| (e.value + 0.7).abs() < 1e-12));
        let b = prop1_bound(&[0.0; 6], &a, 1.0, 0.5).unwrap();
        for (m, v) in (1..=6).zip(b) {
            assert!((v - 2.0 / m as f64 * (-(m as f64) / 2.0).exp()).abs() < 1e-15);
        }
    }
}
