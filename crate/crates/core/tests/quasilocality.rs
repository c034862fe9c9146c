use gibbslab::lattice::{Dim, Interaction, LocalFunction, Region, Site, Tail, TailedConfiguration};
use gibbslab::quasilocality::{
    bad_set_probability, continuity_rate, counterexample_f, directional_delta, preset_directions, prop1_bound,
    variation_at, BadSetEntry, BadSetRecord, ConfigFunction, Counterexample, KernelFunction, Sampling, TailFamily,
};
use gibbslab::renormalization::{Geometry, RenormalizedKernel, SourceModel, Transformation};
use gibbslab::specification::GibbsSpecification;
use gibbslab::thermo::MeasureRecipe;
use proptest::prelude::*;

fn tails() -> Vec<TailedConfiguration> {
    vec![
        TailedConfiguration::all_plus(Dim::One),
        TailedConfiguration::all_minus(Dim::One),
        TailedConfiguration::uniform(Dim::One, Tail::alternating(Dim::One)),
    ]
}

fn record(probs: &[f64]) -> BadSetRecord {
    BadSetRecord {
        theta: "plus".into(),
        lambda: vec![[0, 0]],
        f: "spin".into(),
        eps: 0.1,
        m_ref_offset: 2,
        entries: probs
            .iter()
            .enumerate()
            .map(|(m, &p)| BadSetEntry { m: m as u32 + 1, probability: p, standard_error: 0.0, exact: true })
            .collect(),
    }
}

#[test]
fn gibbs_kernel_is_insensitive_beyond_its_range() {
    let spec = GibbsSpecification::new(Interaction::new(1.0, 0.3, 0.8).unwrap(), Dim::One);
    let lam = Region::cube(0, Dim::One);
    let f = LocalFunction::spin_at(Site::ORIGIN, Dim::One);
    for theta in tails() {
        for omega in tails() {
            for m in 1..4 {
                assert_eq!(directional_delta(&spec, &lam, m, &f, &theta, &omega, m + 2).unwrap().value, 0.0);
            }
        }
    }
    let plus = TailedConfiguration::all_plus(Dim::One);
    let minus = TailedConfiguration::all_minus(Dim::One);
    assert!(directional_delta(&spec, &lam, 0, &f, &minus, &plus, 2).unwrap().value > 0.0);
    assert!(directional_delta(&spec, &lam, 3, &f, &plus, &plus, 3).is_err());
}

#[test]
fn variation_of_finite_range_functions() {
    let omega = TailedConfiguration::all_plus(Dim::One);
    let c = LocalFunction::constant(Dim::One, 2.5);
    let v = variation_at(&c, &omega, &Region::cube(0, Dim::One), &[]).unwrap();
    assert!(v.exact);
    assert_eq!(v.value, 0.0);

    let spec = GibbsSpecification::new(Interaction::ising(0.9), Dim::One);
    let kf = KernelFunction { recipe: &spec, lambda: Region::cube(0, Dim::One), f: LocalFunction::spin_at(Site::ORIGIN, Dim::One) };
    assert!(kf.dependence().is_some());
    let inside = variation_at(&kf, &omega, &Region::cube(1, Dim::One), &[]).unwrap();
    assert!(inside.exact);
    assert_eq!(inside.value, 0.0);
    let outside = variation_at(&kf, &omega, &Region::cube(0, Dim::One), &[]).unwrap();
    assert!(outside.exact);
    let k = 0.9f64;
    assert!((outside.value - ((2.0 * k).tanh() - (-2.0 * k).tanh())).abs() < 1e-12, "{}", outside.value);
}

#[test]
fn bad_set_examples() {
    let phi = Interaction::ising(1.0);
    let mu = MeasureRecipe::gibbs_1d(&phi);
    let spec = GibbsSpecification::new(phi, Dim::One);
    let lam = Region::cube(0, Dim::One);
    let f = LocalFunction::spin_at(Site::ORIGIN, Dim::One);
    let theta = TailedConfiguration::all_minus(Dim::One);
    for m in 1..3 {
        let e = bad_set_probability(&mu, &spec, &theta, &lam, &f, 0.0, m, m + 2, Sampling::Exact).unwrap();
        assert_eq!(e.probability, 0.0);
    }
    let big = bad_set_probability(&mu, &spec, &theta, &lam, &f, 2.0, 0, 2, Sampling::Exact).unwrap();
    assert_eq!(big.probability, 0.0);
    let at_zero = bad_set_probability(&mu, &spec, &theta, &lam, &f, 0.01, 0, 2, Sampling::Exact).unwrap();
    assert!(at_zero.probability > 0.5, "{}", at_zero.probability);
}

#[test]
fn decimated_chain_bad_set_shrinks() {
    let phi = Interaction::ising(1.0);
    let mu = MeasureRecipe::Decimated { base: Box::new(MeasureRecipe::gibbs_1d(&phi)), b: 2 };
    let t = Transformation::decimation(2, Dim::One).unwrap();
    let src = SourceModel { phi, dim: Dim::One, geometry: Geometry::Lattice };
    let lam = Region::cube(0, Dim::One);
    let f = LocalFunction::spin_at(Site::ORIGIN, Dim::One);
    let theta = TailedConfiguration::all_plus(Dim::One);
    let mut by_eps = Vec::new();
    for eps in [0.001, 0.01, 0.1] {
        let mut ps = Vec::new();
        for m in 0..3 {
            let kernel = RenormalizedKernel::new(src, t, m + 2, 2).unwrap();
            ps.push(bad_set_probability(&mu, &kernel, &theta, &lam, &f, eps, m, m + 2, Sampling::Exact).unwrap().probability);
        }
        assert!(ps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "eps={eps}: {ps:?}");
        by_eps.push(ps);
    }
    for w in by_eps.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| b <= a), "{by_eps:?}");
    }
}

#[test]
fn sampled_bad_set_is_reproducible() {
    let phi = Interaction::ising(1.0);
    let mu = MeasureRecipe::Decimated { base: Box::new(MeasureRecipe::gibbs_1d(&phi)), b: 2 };
    let t = Transformation::decimation(2, Dim::One).unwrap();
    let src = SourceModel { phi, dim: Dim::One, geometry: Geometry::Lattice };
    let kernel = RenormalizedKernel::new(src, t, 3, 2).unwrap();
    let lam = Region::cube(0, Dim::One);
    let f = LocalFunction::spin_at(Site::ORIGIN, Dim::One);
    let theta = TailedConfiguration::all_plus(Dim::One);
    let run = |seed| {
        bad_set_probability(&mu, &kernel, &theta, &lam, &f, 0.01, 1, 3, Sampling::Iid { seed, samples: 4000 }).unwrap()
    };
    let exact = bad_set_probability(&mu, &kernel, &theta, &lam, &f, 0.01, 1, 3, Sampling::Exact).unwrap();
    let a = run(7);
    assert_eq!(a, run(7));
    assert!((a.probability - exact.probability).abs() <= 4.0 * a.standard_error.max(1e-3), "{a:?} vs {exact:?}");
}

#[test]
fn continuity_rate_examples() {
    let zero = continuity_rate(&record(&[0.0; 4]), &[2.0, 3.0, 4.0, 5.0]).unwrap();
    assert_eq!(zero.limsup_estimate, f64::NEG_INFINITY);
    let c = 1.3;
    let probs: Vec<f64> = (1..=8).map(|m| (-c * m as f64).exp()).collect();
    let alpha: Vec<f64> = (1..=8).map(f64::from).collect();
    let r = continuity_rate(&record(&probs), &alpha).unwrap();
    assert!((r.limsup_estimate + c).abs() < 1e-12);
    assert!(continuity_rate(&record(&probs), &alpha[1..]).is_err());
    assert!(continuity_rate(&record(&[]), &[]).is_err());
}

#[test]
fn prop1_examples() {
    let alpha: Vec<f64> = (1..=40).map(f64::from).collect();
    let zero = prop1_bound(&vec![0.0; alpha.len()], &alpha, 1.0, 0.5).unwrap();
    for (a, v) in alpha.iter().zip(&zero) {
        assert!((v - 2.0 / a * (-a / 2.0).exp()).abs() < 1e-15);
    }
    let linear = prop1_bound(&alpha, &alpha, 1.0, 0.5).unwrap();
    assert!((linear.last().unwrap() - 2.0).abs() < 1e-6);
    assert!(prop1_bound(&[0.0], &[1.0], 1.0, 1.0).is_err());
    assert!(prop1_bound(&[0.0], &[1.0], 1.0, 0.0).is_err());
    assert!(prop1_bound(&[0.0, 0.0], &[1.0], 1.0, 0.5).is_err());
}

#[test]
fn counterexample_examples() {
    let fam = TailFamily::default();
    let lam = Region::cube(3, Dim::One);
    let eta = fam.base().with_exterior(&lam, &fam.chi(2).unwrap());
    let f = Counterexample { family: fam.clone(), n_max: 1000, m_max: 1000 };
    assert!((f.eval(&eta).unwrap() - 0.4).abs() < 1e-15);
    assert_eq!(f.eval(fam.base()).unwrap(), 0.0);
    assert_eq!(f.eval(&TailedConfiguration::all_minus(Dim::One)).unwrap(), 0.0);
    assert!(counterexample_f(&TailedConfiguration::all_plus(Dim::Two), &fam, 10, 10).is_err());
    fam.certify_distinct(20, 50).unwrap();
}

#[test]
fn counterexample_is_directionally_continuous_but_not_quasilocal() {
    let fam = TailFamily::default();
    let f = Counterexample { family: fam.clone(), n_max: 10_000, m_max: 10_000 };
    for (name, theta) in preset_directions(&fam).unwrap() {
        let values: Vec<f64> = [4, 16, 64, 256]
            .iter()
            .map(|&n| f.eval(&fam.base().with_exterior(&Region::cube(n, Dim::One), &theta)).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]), "{name}: {values:?}");
        assert!(values[3] <= 0.04, "{name}: {values:?}");
    }
    // along χ^(n) the jump at Λ_n stays at one half
    for n in [4u32, 16, 64, 256] {
        let eta = fam.base().with_exterior(&Region::cube(n, Dim::One), &fam.chi(n as u64).unwrap());
        assert!((f.eval(&eta).unwrap() - 0.5).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn directional_delta_is_bounded(j in -1.5f64..1.5, h in -1.0f64..1.0, beta in 0.0f64..2.0, scale in 0.1f64..3.0,
                                    t in 0usize..3, o in 0usize..3, m in 0u32..3) {
        let spec = GibbsSpecification::new(Interaction::new(j, h, beta).unwrap(), Dim::One);
        let f = LocalFunction::spin_at(Site::ORIGIN, Dim::One).scaled(scale);
        let d = directional_delta(&spec, &Region::cube(0, Dim::One), m, &f, &tails()[t], &tails()[o], m + 1).unwrap();
        prop_assert!(d.value >= 0.0 && d.value <= 2.0 * f.sup_norm() + 1e-12);
    }

    #[test]
    fn prop1_bound_decreases_without_entropy(c in 0.1f64..3.0, frac in 0.05f64..0.95) {
        let alpha: Vec<f64> = (1..=30).map(f64::from).collect();
        let b = prop1_bound(&vec![0.0; alpha.len()], &alpha, c, frac * c).unwrap();
        prop_assert!(b.windows(2).all(|w| w[1] <= w[0]));
    }
}
