use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::engines::{FactorGraph, MarkovChain};
use crate::error::{invalid, Error, Result};
use crate::lattice::{Boundary, Dim, LocalFunction, Region, Site};
use crate::specification::FiniteMeasure;

use super::entropy::relative_entropy;
use super::pressure::{pressure_estimate, PressureMode};
use super::recipe::MeasureRecipe;

/// Translation-invariant trial measures for the variational principle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrialFamily {
    /// Stationary two-state chains, parameterized by both flip probabilities.
    Markov1,
    /// Independent spins.
    Product,
    /// Nearest-neighbor Gibbs laws on a `side × side` torus with free
    /// horizontal and vertical couplings and field.
    TiltedTorus { side: u32 },
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    /// Largest deviation between the best trial and the tilted Gibbs law.
    pub max_deviation: f64,
    pub passed: bool,
}

/// Spot-check of the reverse conjugacy: `max_g [μ(g) − p(g|ν)] ≤ h(μ|ν)`.
#[derive(Clone, Debug, Serialize)]
pub struct ReverseCheck {
    pub h: f64,
    pub lower_bound: f64,
    pub dictionary_size: usize,
    pub consistent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LegendreReport {
    pub family: TrialFamily,
    pub pressure: f64,
    pub best_trial_value: f64,
    pub gap: f64,
    pub best_mu_f: f64,
    pub best_h: f64,
    pub params: Vec<f64>,
    pub iterations: u64,
    pub certificate: Option<Certificate>,
    /// The gap exceeds tolerance and the family cannot contain the maximizer.
    pub family_limited: bool,
    pub reverse: Option<ReverseCheck>,
}

const CERTIFICATE_TOLERANCE: f64 = 1e-4;
const GAP_TOLERANCE: f64 = 1e-9;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct Objective<F: Fn(&[f64]) -> Result<(f64, f64)>> {
    eval: F,
}

impl<F: Fn(&[f64]) -> Result<(f64, f64)>> CostFunction for Objective<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        match (self.eval)(p) {
            Ok((mf, h)) if (mf - h).is_finite() => Ok(h - mf),
            Ok(_) => Ok(f64::INFINITY),
            Err(e) => Err(argmin::core::Error::msg(e.to_string())),
        }
    }
}

fn maximize<F>(eval: F, start: Vec<f64>) -> Result<(Vec<f64>, u64)>
where
    F: Fn(&[f64]) -> Result<(f64, f64)>,
{
    let mut simplex = vec![start.clone()];
    for i in 0..start.len() {
        let mut v = start.clone();
        v[i] += 0.5;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-15)
        .map_err(|e| Error::Engine(e.to_string()))?;
    let res = Executor::new(Objective { eval }, solver)
        .configure(|s| s.max_iters(5000))
        .run()
        .map_err(|e| Error::Engine(e.to_string()))?;
    let state = res.state();
    let converged = matches!(state.get_termination_status(), TerminationStatus::Terminated(TerminationReason::SolverConverged));
    let best = state.get_best_param().cloned().ok_or_else(|| Error::Engine("optimizer returned no point".into()))?;
    if !converged {
        return Err(Error::NonConvergence(format!(
            "Nelder-Mead stopped after {} iterations at {:?}",
            state.get_iter(),
            best
        )));
    }
    Ok((best, state.get_iter()))
}

fn chain_value(f: &LocalFunction, nu: &MarkovChain, mu: &MarkovChain) -> Result<(f64, f64)> {
    let mf = MeasureRecipe::Markov(*mu).marginal(f.support())?.expectation(f)?;
    Ok((mf, mu.relative_entropy_rate(nu)))
}

/// Largest `|P_a − P*_a|` against the Doob transform of `P_ν e^{f}`, for `f`
/// supported on two consecutive sites.
fn chain_certificate(f: &LocalFunction, nu: &MarkovChain, best: &MarkovChain) -> Option<Certificate> {
    let sites = f.support().sites();
    let x0 = sites.first()?.coords[0];
    if sites.len() > 2 || sites.last()?.coords[0] > x0 + 1 {
        return None;
    }
    let p = nu.transition();
    let mut m = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let spin = |s: Site| if s.coords[0] == x0 { [-1i8, 1][a] } else { [-1i8, 1][b] };
            let fv = if sites.len() == 1 {
                // a single-site f tilts the later spin
                f.eval_by(|_| [-1i8, 1][b])
            } else {
                f.eval_by(spin)
            };
            m[a][b] = p[a][b] * fv.exp();
        }
    }
    let star = MarkovChain::from_positive_matrix(&m);
    let (q, r) = (best.transition(), star.transition());
    let dev = (0..2).flat_map(|a| (0..2).map(move |b| (q[a][b] - r[a][b]).abs())).fold(0.0, f64::max);
    Some(Certificate { max_deviation: dev, passed: dev < CERTIFICATE_TOLERANCE })
}

fn reverse_check(mu: &MarkovChain, nu_recipe: &MeasureRecipe, nu: &MarkovChain, n_max: u32) -> Result<ReverseCheck> {
    let h = mu.relative_entropy_rate(nu);
    let mut dict = Vec::new();
    for t in [-1.0, -0.5, 0.5, 1.0] {
        dict.push(LocalFunction::spin_at(Site::d1(0), Dim::One).scaled(t));
        dict.push(LocalFunction::spin_product(Dim::One, [Site::d1(0), Site::d1(1)])?.scaled(t));
    }
    let mut lb = f64::NEG_INFINITY;
    for g in &dict {
        let p = pressure_estimate(g, nu_recipe, n_max, PressureMode::Open)?.estimate;
        let mg = MeasureRecipe::Markov(*mu).marginal(g.support())?.expectation(g)?;
        lb = lb.max(mg - p);
    }
    Ok(ReverseCheck { h, lower_bound: lb, dictionary_size: dict.len(), consistent: lb <= h + GAP_TOLERANCE })
}

fn torus_region(side: u32) -> Region {
    let s = side as i64;
    Region::explicit(Dim::Two, (0..s).flat_map(|x| (0..s).map(move |y| Site::d2(x, y)))).expect("distinct")
}

/// `Σ_x τ_x f` on the torus, as a table over torus configurations.
fn torus_sum(f: &LocalFunction, torus: &Region, side: u32) -> Result<Vec<f64>> {
    let s = side as i64;
    let n = torus.config_count()?;
    let pos: Vec<Vec<usize>> = torus
        .sites()
        .iter()
        .map(|x| {
            f.support()
                .sites()
                .iter()
                .map(|y| {
                    let w = Site::d2((y.coords[0] + x.coords[0]).rem_euclid(s), (y.coords[1] + x.coords[1]).rem_euclid(s));
                    torus.index_of(w).expect("torus site")
                })
                .collect()
        })
        .collect();
    Ok((0..n)
        .map(|c| {
            pos.iter()
                .map(|p| {
                    let code = p.iter().enumerate().fold(0u64, |a, (j, &i)| a | (c >> i & 1) << j);
                    f.value(code)
                })
                .sum()
        })
        .collect())
}

/// Torus Gibbs law with horizontal coupling `q[0]`, vertical coupling `q[1]` and field `q[2]`.
fn torus_law(q: &[f64], torus: &Region, side: u32) -> Result<FiniteMeasure> {
    let s = side as i64;
    let mut g = FactorGraph::new(torus.len());
    for (i, x) in torus.sites().iter().enumerate() {
        g.add_unary(i, -q[2], q[2]);
        for (axis, k) in [(0usize, q[0]), (1, q[1])] {
            let mut c = x.coords;
            c[axis] = (c[axis] + 1).rem_euclid(s);
            g.add_coupling(i, torus.index_of(Site::d2(c[0], c[1])).expect("torus site"), k);
        }
    }
    FiniteMeasure::new(torus.clone(), g.dense_law()?)
}

fn torus_gap(f: &LocalFunction, nu: &MeasureRecipe, side: u32) -> Result<LegendreReport> {
    if !(3..=5).contains(&side) {
        return invalid("torus side must lie in 3..=5");
    }
    let torus = torus_region(side);
    let vol = torus.len() as f64;
    let (nu_t, start) = match nu.simplify() {
        MeasureRecipe::Product { p_plus, dim: Dim::Two } => {
            (FiniteMeasure::product(torus.clone(), &vec![p_plus; torus.len()])?, vec![0.0, 0.0, (2.0 * p_plus - 1.0).atanh()])
        }
        MeasureRecipe::FiniteGibbs { phi, window, boundary: Boundary::Periodic } if window.len() == torus.len() => {
            let q = vec![phi.k(), phi.k(), phi.hb()];
            (torus_law(&q, &torus, side)?, q)
        }
        _ => return invalid("torus trials need a product measure or a periodic Gibbs law of the same side"),
    };
    let sum_f = torus_sum(f, &torus, side)?;
    let mut acc = crate::par::LogSumExp::default();
    for (p, s) in nu_t.probs().iter().zip(&sum_f) {
        if *p > 0.0 {
            acc.push(p.ln() + s);
        }
    }
    let pressure = acc.value() / vol;
    let value = |q: &[f64]| -> Result<(f64, f64)> {
        let mu = torus_law(q, &torus, side)?;
        let mf: f64 = mu.probs().iter().zip(&sum_f).map(|(p, s)| p * s).sum();
        Ok((mf / vol, relative_entropy(&mu, &nu_t)? / vol))
    };
    let (best, iterations) = maximize(value, start)?;
    let (mf, h) = value(&best)?;
    let mu = torus_law(&best, &torus, side)?;
    let tilted = FiniteMeasure::from_log_weights(
        torus.clone(),
        &nu_t.probs().iter().zip(&sum_f).map(|(p, s)| p.ln() + s).collect::<Vec<_>>(),
    )?;
    let dev = mu.tv_distance(&tilted)?;
    let certificate = Certificate { max_deviation: dev, passed: dev < CERTIFICATE_TOLERANCE };
    let gap = pressure - (mf - h);
    Ok(LegendreReport {
        family: TrialFamily::TiltedTorus { side },
        pressure,
        best_trial_value: mf - h,
        gap,
        best_mu_f: mf,
        best_h: h,
        params: best,
        iterations,
        family_limited: gap > GAP_TOLERANCE && !certificate.passed,
        certificate: Some(certificate),
        reverse: None,
    })
}

/// `p(f|ν) − max_{μ ∈ family} [μ(f) − h(μ|ν)]`.
pub fn legendre_gap(f: &LocalFunction, nu: &MeasureRecipe, family: TrialFamily, n_max: u32) -> Result<LegendreReport> {
    if let TrialFamily::TiltedTorus { side } = family {
        return torus_gap(f, nu, side);
    }
    let nu_c = nu.as_markov().ok_or_else(|| Error::InvalidArgument("chain trials need a 1-D Markov or product ν".into()))?;
    let pressure = pressure_estimate(f, nu, n_max, PressureMode::Open)?.estimate;
    let p = nu_c.transition();
    let clamp = |x: f64| x.clamp(1e-9, 1.0 - 1e-9);
    let (start, build): (Vec<f64>, Box<dyn Fn(&[f64]) -> Result<MarkovChain>>) = match family {
        TrialFamily::Markov1 => (
            vec![logit(clamp(p[0][1])), logit(clamp(p[1][0]))],
            Box::new(|q: &[f64]| MarkovChain::from_flip_probs(sigmoid(q[0]), sigmoid(q[1]))),
        ),
        TrialFamily::Product => {
            (vec![logit(clamp(nu_c.pi()[1]))], Box::new(|q: &[f64]| MarkovChain::iid(sigmoid(q[0]))))
        }
        TrialFamily::TiltedTorus { .. } => unreachable!(),
    };
    let value = |q: &[f64]| chain_value(f, &nu_c, &build(q)?);
    let (best, iterations) = maximize(value, start)?;
    let mu = build(&best)?;
    let (mf, h) = chain_value(f, &nu_c, &mu)?;
    let certificate = match family {
        TrialFamily::Markov1 => chain_certificate(f, &nu_c, &mu),
        _ => None,
    };
    let gap = pressure - (mf - h);
    Ok(LegendreReport {
        family,
        pressure,
        best_trial_value: mf - h,
        gap,
        best_mu_f: mf,
        best_h: h,
        params: best.iter().map(|&x| sigmoid(x)).collect(),
        iterations,
        family_limited: gap > GAP_TOLERANCE && !certificate.as_ref().is_some_and(|c| c.passed),
        certificate,
        reverse: Some(reverse_check(&mu, nu, &nu_c, n_max)?),
    })
}
