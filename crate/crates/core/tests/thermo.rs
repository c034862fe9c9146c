use approx::assert_abs_diff_eq;
use gibbslab::engines::MarkovChain;
use gibbslab::lattice::{Dim, Interaction, LocalFunction, Region, Site, Spin, TailedConfiguration};
use gibbslab::renormalization::{Geometry, RenormalizedKernel, SourceModel, Transformation};
use gibbslab::specification::{FiniteMeasure, GibbsSpecification};
use gibbslab::thermo::{
    cm_term, csiszar_gap, decoupling_constant, entropy_density_series, legendre_gap, pressure_estimate,
    relative_entropy, CylinderFamily, MeasureRecipe, PressureMode, TrialFamily,
};
use proptest::prelude::*;

fn site(dim: Dim) -> Region {
    Region::explicit(dim, [Site::ORIGIN]).unwrap()
}

#[test]
fn relative_entropy_examples() {
    let r = site(Dim::One);
    let mu = FiniteMeasure::new(r.clone(), vec![0.5, 0.5]).unwrap();
    // index 1 is +, so ν(+) = 3/4
    let nu = FiniteMeasure::new(r.clone(), vec![0.25, 0.75]).unwrap();
    let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
    assert_abs_diff_eq!(relative_entropy(&mu, &nu).unwrap(), want, epsilon = 1e-15);
    assert_abs_diff_eq!(want, 0.143841, epsilon = 1e-6);
    assert_eq!(relative_entropy(&mu, &mu).unwrap(), 0.0);
    let point = FiniteMeasure::point_mass(r.clone(), 1).unwrap();
    let minus = FiniteMeasure::point_mass(r, 0).unwrap();
    assert_eq!(relative_entropy(&point, &minus).unwrap(), f64::INFINITY);
}

#[test]
fn product_entropy_density_is_constant() {
    let mu = MeasureRecipe::Product { p_plus: 0.5, dim: Dim::Two };
    let nu = MeasureRecipe::Product { p_plus: 0.75, dim: Dim::Two };
    let s = entropy_density_series(&mu, &nu, 2).unwrap();
    let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
    for e in &s.entries {
        assert_abs_diff_eq!(e.per_site, want, epsilon = 1e-12);
    }
}

#[test]
fn identical_chains_have_zero_density() {
    let g = MeasureRecipe::gibbs_1d(&Interaction::ising(0.5));
    let s = entropy_density_series(&g, &g, 12).unwrap();
    assert!(s.entries.iter().all(|e| e.per_site.abs() < 1e-10));
}

#[test]
fn chain_entropy_density_approaches_the_rate() {
    let a = MarkovChain::from_flip_probs(0.2, 0.35).unwrap();
    let b = MarkovChain::gibbs(&Interaction::new(1.0, 0.2, 0.4).unwrap());
    let s = entropy_density_series(&MeasureRecipe::Markov(a), &MeasureRecipe::Markov(b), 10).unwrap();
    let rate = a.relative_entropy_rate(&b);
    assert!((s.estimate() - rate).abs() / rate < 0.01);
    // entries grow with the volume
    assert!(s.entries.windows(2).all(|w| w[1].h >= w[0].h - 1e-12));
}

#[test]
fn pressure_examples() {
    let uniform = MeasureRecipe::uniform(Dim::One);
    let zero = LocalFunction::constant(Dim::One, 0.0);
    let s = pressure_estimate(&zero, &uniform, 6, PressureMode::Periodic).unwrap();
    assert!(s.entries.iter().all(|e| e.value == 0.0));
    let f = LocalFunction::spin_at(Site::ORIGIN, Dim::One);
    let s = pressure_estimate(&f, &uniform, 6, PressureMode::Open).unwrap();
    for e in &s.entries {
        assert_abs_diff_eq!(e.value, 1f64.cosh().ln(), epsilon = 1e-12);
    }
    assert_abs_diff_eq!(1f64.cosh().ln(), 0.433781, epsilon = 1e-6);
}

#[test]
fn nearest_neighbor_pressure_in_two_dimensions_is_bounded() {
    // |p(f|ν)| ≤ ‖f‖ and p(c|ν) = c
    let nu = MeasureRecipe::uniform(Dim::Two);
    let f = LocalFunction::spin_product(Dim::Two, [Site::ORIGIN, Site::d2(1, 0)]).unwrap().scaled(0.3);
    let s = pressure_estimate(&f, &nu, 2, PressureMode::Periodic).unwrap();
    assert!(s.entries.iter().all(|e| e.value.abs() <= 0.3 + 1e-12));
    let c = pressure_estimate(&LocalFunction::constant(Dim::Two, 0.7), &nu, 2, PressureMode::Periodic).unwrap();
    assert!(c.entries.iter().all(|e| (e.value - 0.7).abs() < 1e-12));
}

#[test]
fn decoupling_examples() {
    let product = MeasureRecipe::Product { p_plus: 0.3, dim: Dim::Two };
    assert_eq!(decoupling_constant(&product, 1, 1, CylinderFamily::Cylinders { width: 1 }).unwrap().c, 0.0);
    let nu = MeasureRecipe::gibbs_1d(&Interaction::ising(0.5));
    let cs: Vec<f64> = (1..6).map(|g| decoupling_constant(&nu, 1, g, CylinderFamily::SingleSite).unwrap().c).collect();
    assert!(cs[0] > 0.0);
    assert!(cs.windows(2).all(|w| w[1] < w[0]));
    let img = MeasureRecipe::Decimated { base: Box::new(nu.clone()), b: 2 };
    let base = decoupling_constant(&nu, 1, 1, CylinderFamily::SingleSite).unwrap().c;
    let c = decoupling_constant(&img, 1, 1, CylinderFamily::SingleSite).unwrap().c;
    assert!(c.is_finite() && c > 0.0 && c < 10.0 * base);
}

#[test]
fn legendre_examples() {
    let nu = MeasureRecipe::gibbs_1d(&Interaction::ising(0.5));
    let pair = LocalFunction::spin_product(Dim::One, [Site::d1(0), Site::d1(1)]).unwrap();
    let markov = legendre_gap(&pair, &nu, TrialFamily::Markov1, 8).unwrap();
    assert!(markov.gap.abs() < 0.01);
    assert!(markov.certificate.as_ref().is_some_and(|c| c.passed));
    let product = legendre_gap(&pair, &nu, TrialFamily::Product, 8).unwrap();
    assert!(product.gap > 1e-3);
    assert!(product.family_limited);
    let zero = legendre_gap(&LocalFunction::constant(Dim::One, 0.0), &nu, TrialFamily::Markov1, 8).unwrap();
    assert!(zero.pressure.abs() < 1e-12 && zero.gap < 1e-9);
}

#[test]
fn legendre_gap_on_the_torus_family() {
    let nu = MeasureRecipe::uniform(Dim::Two);
    let f = LocalFunction::spin_at(Site::ORIGIN, Dim::Two).scaled(0.4);
    let r = legendre_gap(&f, &nu, TrialFamily::TiltedTorus { side: 3 }, 2).unwrap();
    assert!(r.gap >= -1e-9, "{r:?}");
    assert!(r.gap < 1e-3, "{r:?}");
}

#[test]
fn cm_term_examples() {
    let phi = Interaction::ising(0.8);
    let spec = GibbsSpecification::new(phi, Dim::One);
    let nu = MeasureRecipe::gibbs_1d(&phi);
    let lam = Region::cube(0, Dim::One);
    let f = LocalFunction::spin_at(Site::ORIGIN, Dim::One);
    let theta = TailedConfiguration::all_minus(Dim::One);
    for m in 1..4 {
        let r = cm_term(&nu, &nu, &spec, &lam, m, &theta, &f, 5).unwrap();
        assert_eq!(r.c, 0.0);
    }
    // at M = 0 the density is 1 and C_M is ν(γ^{0,θ} f − γ f)
    let r = cm_term(&nu, &nu, &spec, &lam, 0, &theta, &f, 5).unwrap();
    let near = gibbslab::specification::gibbs_kernel(&phi, &lam, &theta).unwrap().expectation(&f).unwrap();
    let want = near - nu.marginal(&lam).unwrap().expectation(&f).unwrap();
    assert_abs_diff_eq!(r.c, want, epsilon = 1e-12);

    let t = Transformation::decimation(2, Dim::One).unwrap();
    let src = SourceModel { phi: Interaction::ising(1.0), dim: Dim::One, geometry: Geometry::Lattice };
    let kernel = RenormalizedKernel::new(src, t, 8, 2).unwrap();
    let img = MeasureRecipe::Decimated { base: Box::new(MeasureRecipe::gibbs_1d(&Interaction::ising(1.0))), b: 2 };
    let r = cm_term(&img, &img, &kernel, &lam, 6, &theta, &f, 8).unwrap();
    assert!(r.c.abs() < 1e-8);
}

fn random_law(support: &Region, w: &[f64]) -> FiniteMeasure {
    let n = 1usize << support.len();
    let z: f64 = w[..n].iter().sum();
    FiniteMeasure::new(support.clone(), w[..n].iter().map(|x| x / z).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn relative_entropy_is_nonnegative_and_vanishes_only_at_equality(
        k in 1usize..5,
        a in prop::collection::vec(0.01f64..1.0, 16),
        b in prop::collection::vec(0.01f64..1.0, 16),
    ) {
        let r = Region::explicit(Dim::One, (0..k as i64).map(Site::d1)).unwrap();
        let (mu, nu) = (random_law(&r, &a), random_law(&r, &b));
        let h = relative_entropy(&mu, &nu).unwrap();
        prop_assert!(h >= -1e-12);
        prop_assert!(relative_entropy(&mu, &mu).unwrap().abs() <= 1e-12);
        if mu.tv_distance(&nu).unwrap() > 1e-6 {
            prop_assert!(h > 0.0);
        }
    }

    #[test]
    fn csiszar_and_volume_monotonicity(
        k in 1usize..5,
        mask in 0u8..16,
        a in prop::collection::vec(0.01f64..1.0, 16),
        b in prop::collection::vec(0.01f64..1.0, 16),
    ) {
        let sites: Vec<Site> = (0..k as i64).map(Site::d1).collect();
        let r = Region::explicit(Dim::One, sites.iter().copied()).unwrap();
        let sub = Region::explicit(Dim::One, sites.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, s)| *s)).unwrap();
        let (mu, nu) = (random_law(&r, &a), random_law(&r, &b));
        prop_assert!(csiszar_gap(&mu, &nu, &sub).unwrap() >= -1e-12);
        prop_assert_eq!(csiszar_gap(&mu, &nu, &r).unwrap(), 0.0);
        let h_sub = relative_entropy(&mu.marginal(&sub).unwrap(), &nu.marginal(&sub).unwrap()).unwrap();
        prop_assert!(h_sub <= relative_entropy(&mu, &nu).unwrap() + 1e-12);
    }

    #[test]
    fn pressure_is_convex_along_pencils(k in -1.0f64..1.0, h in -1.0f64..1.0, g in -1.0f64..1.0, beta in 0.0f64..1.2) {
        let nu = MeasureRecipe::gibbs_1d(&Interaction::ising(beta));
        let pair = Region::explicit(Dim::One, [Site::d1(0), Site::d1(1)]).unwrap();
        let p = |t: f64| {
            let f = LocalFunction::from_fn(pair.clone(), |s: &[Spin]| k * (s[0] * s[1]) as f64 + (h + t * g) * s[0] as f64).unwrap();
            pressure_estimate(&f, &nu, 6, PressureMode::Periodic).unwrap().estimate
        };
        let ts = [-0.6, -0.3, 0.0, 0.3, 0.6];
        let v: Vec<f64> = ts.iter().map(|&t| p(t)).collect();
        for w in v.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn legendre_gap_is_never_negative(beta in 0.0f64..1.0, k in -0.8f64..0.8, h in -0.5f64..0.5, product in any::<bool>()) {
        let nu = MeasureRecipe::gibbs_1d(&Interaction::ising(beta));
        let pair = Region::explicit(Dim::One, [Site::d1(0), Site::d1(1)]).unwrap();
        let f = LocalFunction::from_fn(pair, |s: &[Spin]| k * (s[0] * s[1]) as f64 + h * s[0] as f64).unwrap();
        let family = if product { TrialFamily::Product } else { TrialFamily::Markov1 };
        let r = legendre_gap(&f, &nu, family, 6).unwrap();
        prop_assert!(r.gap >= -1e-9, "{:?}", r);
    }

    #[test]
    fn chain_decoupling_decreases_with_the_gap(beta in 0.1f64..1.5, h in -0.5f64..0.5, n in 0u32..3) {
        let nu = MeasureRecipe::gibbs_1d(&Interaction::new(1.0, h, beta).unwrap());
        let cs: Vec<f64> = (0..6).map(|g| decoupling_constant(&nu, n, g, CylinderFamily::SingleSite).unwrap().c).collect();
        prop_assert!(cs.iter().all(|&c| c >= 0.0));
        prop_assert!(cs.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{:?}", cs);
    }
}
