use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{project_config, LocalFunction, Region, Tail, TailedConfiguration};
use crate::par;
use crate::specification::KernelRecipe;

use super::recipe::MeasureRecipe;

/// The terms of `μ(γ_Λ f − f) = A_M + B_M + C_M`, with `γ_Λ f` replaced by
/// the reference `γ^{M_ref,θ}_Λ f`.
#[derive(Clone, Debug, Serialize)]
pub struct CmReport {
    pub m: u32,
    pub m_ref: u32,
    /// `μ[γ_Λ f − γ^{M,θ}_Λ f]`.
    pub a: f64,
    /// `ν[(g_{Λ_M\Λ} − g_{Λ_M}) f]`.
    pub b: f64,
    /// `ν[g_{Λ_M\Λ} (γ^{M,θ}_Λ f − γ_Λ f)]`.
    pub c: f64,
    /// `μ(γ_Λ f − f)`.
    pub lhs: f64,
    /// `|lhs − (a + b + c)|`; nonzero when `ν` is not exactly consistent
    /// with the kernel on the reference window.
    pub residual: f64,
}

fn conditional(
    gamma: &dyn KernelRecipe,
    lambda: &Region,
    annulus: &Region,
    code: u64,
    theta: &TailedConfiguration,
    f: &LocalFunction,
) -> Result<f64> {
    let omega = TailedConfiguration::from_config(annulus.clone(), code, Tail::AllPlus).with_exterior(annulus, theta);
    gamma.expectation(lambda, &omega, f)
}

fn density(mu: f64, nu: f64) -> Result<f64> {
    if nu == 0.0 {
        if mu > 0.0 {
            return Err(Error::NotAbsolutelyContinuous("μ charges a ν-null annulus configuration".into()));
        }
        return Ok(0.0);
    }
    Ok(mu / nu)
}

#[allow(clippy::too_many_arguments)]
pub fn cm_term(
    mu: &MeasureRecipe,
    nu: &MeasureRecipe,
    gamma: &dyn KernelRecipe,
    lambda: &Region,
    m: u32,
    theta: &TailedConfiguration,
    f: &LocalFunction,
    m_ref: u32,
) -> Result<CmReport> {
    if m_ref <= m {
        return invalid("the reference radius must exceed M");
    }
    let lm = gamma.window(m);
    let w = gamma.window(m_ref);
    if !lambda.is_subset(&lm) || !lm.is_subset(&w) {
        return invalid("need Λ ⊆ Λ_M ⊆ Λ_{M_ref}");
    }
    if !f.support().is_subset(&lm) {
        return invalid("f must be supported in Λ_M");
    }
    let ann = lm.difference(lambda);
    let annw = w.difference(lambda);
    if annw.len() > 22 {
        return Err(Error::SizeCap { what: "reference annulus".into(), needed: annw.len() as u64, cap: 22 });
    }
    let k_m = par::map_range(1usize << ann.len(), |c| conditional(gamma, lambda, &ann, c as u64, theta, f));
    let k_m = k_m.into_iter().collect::<Result<Vec<_>>>()?;
    let k_ref = par::map_range(1usize << annw.len(), |c| conditional(gamma, lambda, &annw, c as u64, theta, f));
    let k_ref = k_ref.into_iter().collect::<Result<Vec<_>>>()?;

    let mu_w = mu.marginal(&annw)?;
    let nu_w = nu.marginal(&annw)?;
    let mu_a = mu_w.marginal(&ann)?;
    let nu_a = nu_w.marginal(&ann)?;
    let g_ann: Vec<f64> =
        mu_a.probs().iter().zip(nu_a.probs()).map(|(&p, &q)| density(p, q)).collect::<Result<_>>()?;
    let pos = annw.positions_of(&ann)?;
    let (mut a, mut c, mut ref_mean) = (Vec::new(), Vec::new(), Vec::new());
    for (z, (&pm, &pn)) in mu_w.probs().iter().zip(nu_w.probs()).enumerate() {
        let xi = project_config(z as u64, &pos) as usize;
        a.push(pm * (k_ref[z] - k_m[xi]));
        c.push(pn * g_ann[xi] * (k_m[xi] - k_ref[z]));
        ref_mean.push(pm * k_ref[z]);
    }

    let mu_m = mu.marginal(&lm)?;
    let nu_m = nu.marginal(&lm)?;
    let pos_a = lm.positions_of(&ann)?;
    let pos_f = lm.positions_of(f.support())?;
    let (mut b, mut mu_f) = (Vec::new(), Vec::new());
    for (e, (&pm, &pn)) in mu_m.probs().iter().zip(nu_m.probs()).enumerate() {
        let fv = f.value(project_config(e as u64, &pos_f));
        let ga = g_ann[project_config(e as u64, &pos_a) as usize];
        let gm = density(pm, pn)?;
        b.push(pn * (ga - gm) * fv);
        mu_f.push(pm * fv);
    }
    let (a, b, c) = (par::ordered_sum(&a), par::ordered_sum(&b), par::ordered_sum(&c));
    let lhs = par::ordered_sum(&ref_mean) - par::ordered_sum(&mu_f);
    Ok(CmReport { m, m_ref, a, b, c, lhs, residual: (lhs - (a + b + c)).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Dim, Interaction, Site};
    use crate::specification::GibbsSpecification;

    #[test]
    fn identical_measures_with_stabilized_kernel() {
        let phi = Interaction::ising(0.8);
        let nu = MeasureRecipe::gibbs_1d(&phi);
        let gamma = GibbsSpecification::new(phi, Dim::One);
        let lam = Region::explicit(Dim::One, [Site::d1(0)]).unwrap();
        let f = LocalFunction::spin_at(Site::d1(0), Dim::One);
        let theta = TailedConfiguration::all_minus(Dim::One);
        let r = cm_term(&nu, &nu, &gamma, &lam, 2, &theta, &f, 4).unwrap();
        assert_eq!(r.c, 0.0);
        assert!(r.a.abs() < 1e-15 && r.b.abs() < 1e-15);
        assert!(r.residual < 1e-14, "{}", r.residual);
    }
}
