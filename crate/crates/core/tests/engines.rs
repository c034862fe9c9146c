use gibbslab::engines::{
    empirical_estimate, enumerate_measure, ising_graph, mc_coupled, mc_sample, transfer_matrix_1d, ChainBoundary,
    McConfig, ENUMERATION_CAP,
};
use gibbslab::lattice::{Boundary, Dim, Interaction, LocalFunction, Region, Site, TailedConfiguration, MINUS, PLUS};
use proptest::prelude::*;

fn chain(n: usize) -> Region {
    Region::explicit(Dim::One, (0..n as i64).map(Site::d1)).unwrap()
}

fn spin(x: i64) -> LocalFunction {
    LocalFunction::spin_at(Site::d1(x), Dim::One)
}

fn pair(x: i64) -> LocalFunction {
    LocalFunction::spin_product(Dim::One, [Site::d1(x), Site::d1(x + 1)]).unwrap()
}

fn boundaries() -> [(Boundary, ChainBoundary); 4] {
    [
        (Boundary::Free, ChainBoundary::Free),
        (Boundary::Fixed(TailedConfiguration::all_plus(Dim::One)), ChainBoundary::Plus),
        (Boundary::Fixed(TailedConfiguration::all_minus(Dim::One)), ChainBoundary::Minus),
        (Boundary::Periodic, ChainBoundary::Periodic),
    ]
}

fn compare(phi: &Interaction, n: usize) {
    let w = chain(n);
    for (b, cb) in boundaries() {
        let mu = enumerate_measure(phi, &w, &b, &[]).unwrap();
        let tm = transfer_matrix_1d(phi, n, cb).unwrap();
        let log_z = ising_graph(phi, &w, &b, &[]).unwrap().log_partition().unwrap();
        assert!((log_z - tm.log_partition).abs() < 1e-10, "{cb:?} n={n}: {log_z} vs {}", tm.log_partition);
        for (i, m) in tm.marginals.iter().enumerate() {
            let e = mu.expectation(&spin(i as i64)).unwrap();
            assert!((e - (2.0 * m - 1.0)).abs() < 1e-10, "{cb:?} site {i}");
        }
        for i in 0..n - 1 {
            let e = mu.expectation(&pair(i as i64)).unwrap();
            assert!((e - tm.pair_correlations[i]).abs() < 1e-10, "{cb:?} bond {i}");
        }
    }
}

#[test]
fn enumeration_matches_transfer_on_a_long_chain() {
    compare(&Interaction::new(1.0, -0.15, 0.7).unwrap(), 20);
}

#[test]
fn transfer_examples() {
    let per_site = transfer_matrix_1d(&Interaction::ising(1.0), 400, ChainBoundary::Periodic).unwrap().log_partition_per_site;
    let e = 1f64.exp();
    assert!((per_site - (e + 1.0 / e).ln()).abs() < 1e-12);
    assert!((per_site - 1.126928).abs() < 1e-6);

    let free = transfer_matrix_1d(&Interaction::new(0.0, 0.4, 1.5).unwrap(), 7, ChainBoundary::Plus).unwrap();
    assert!(free.marginals.iter().all(|m| (2.0 * m - 1.0 - 0.6f64.tanh()).abs() < 1e-14));

    let hot = transfer_matrix_1d(&Interaction::new(1.0, 0.7, 0.0).unwrap(), 9, ChainBoundary::Minus).unwrap();
    assert!((hot.log_partition_per_site - 2f64.ln()).abs() < 1e-14);
    assert!(transfer_matrix_1d(&Interaction::ising(1.0), 0, ChainBoundary::Free).is_err());
}

#[test]
fn enumeration_is_capped() {
    let w = chain(ENUMERATION_CAP + 1);
    assert!(enumerate_measure(&Interaction::ising(1.0), &w, &Boundary::Free, &[]).is_err());
    let cons = [(Site::d1(0), PLUS)];
    assert!(enumerate_measure(&Interaction::ising(1.0), &w, &Boundary::Free, &cons).is_ok());
}

#[test]
fn monte_carlo_is_deterministic_and_respects_constraints() {
    let phi = Interaction::ising(0.8);
    let w = Region::cube(2, Dim::Two);
    let cons = [(Site::ORIGIN, MINUS), (Site::d2(1, 1), PLUS)];
    let cfg = McConfig::new(11, 2, 200, 20);
    let b = Boundary::Fixed(TailedConfiguration::all_plus(Dim::Two));
    let a = mc_sample(&phi, &w, &b, &cons, &cfg).unwrap();
    assert_eq!(a, mc_sample(&phi, &w, &b, &cons, &cfg).unwrap());
    assert_ne!(a, mc_sample(&phi, &w, &b, &cons, &McConfig { seed: 12, ..cfg }).unwrap());
    let i0 = w.index_of(Site::ORIGIN).unwrap();
    let i1 = w.index_of(Site::d2(1, 1)).unwrap();
    for c in 0..2 {
        assert_eq!(a.chain_samples(c).count(), cfg.samples_per_chain());
        assert!(a.chain_samples(c).all(|s| s[i0] == MINUS && s[i1] == PLUS));
    }
    assert!(mc_sample(&phi, &w, &b, &cons, &McConfig::new(1, 1, 10, 10)).is_err());
}

#[test]
fn infinite_temperature_magnetization() {
    let w = chain(12);
    let s = mc_sample(&Interaction::new(1.0, 0.0, 0.0).unwrap(), &w, &Boundary::Free, &[], &McConfig::new(3, 4, 2000, 100)).unwrap();
    for x in [0, 5, 11] {
        let e = empirical_estimate(&s, &spin(x)).unwrap();
        assert!(e.mean.abs() <= 3.0 * e.standard_error + 1e-3, "{e:?}");
    }
    let c = empirical_estimate(&s, &LocalFunction::constant(Dim::One, 1.7)).unwrap();
    assert_eq!(c.standard_error, 0.0);
    assert!((c.mean - 1.7).abs() < 1e-14);
}

#[test]
fn monte_carlo_agrees_with_exact_answers() {
    let phi = Interaction::new(1.0, 0.2, 0.5).unwrap();
    let w = chain(12);
    let cfg = McConfig::new(5, 4, 4000, 200);
    let ring = mc_sample(&phi, &w, &Boundary::Periodic, &[], &cfg).unwrap();
    let tm = transfer_matrix_1d(&phi, 12, ChainBoundary::Periodic).unwrap();
    let e = empirical_estimate(&ring, &pair(4)).unwrap();
    assert!((e.mean - tm.pair_correlations[4]).abs() <= 3.0 * e.standard_error, "{e:?} vs {}", tm.pair_correlations[4]);

    let b = Boundary::Fixed(TailedConfiguration::all_minus(Dim::One));
    let open = mc_sample(&phi, &w, &b, &[], &cfg).unwrap();
    let exact = enumerate_measure(&phi, &w, &b, &[]).unwrap();
    for f in [spin(0), spin(6), pair(2)] {
        let e = empirical_estimate(&open, &f).unwrap();
        let want = exact.expectation(&f).unwrap();
        assert!((e.mean - want).abs() <= 3.0 * e.standard_error, "{e:?} vs {want}");
    }
}

#[test]
fn coupled_chains_stay_ordered_for_ferromagnets() {
    let phi = Interaction::new(1.0, -0.1, 0.6).unwrap();
    let w = Region::cube(2, Dim::Two);
    let lower = ising_graph(&phi, &w, &Boundary::Fixed(TailedConfiguration::all_minus(Dim::Two)), &[]).unwrap();
    let upper = ising_graph(&phi, &w, &Boundary::Fixed(TailedConfiguration::all_plus(Dim::Two)), &[]).unwrap();
    let run = mc_coupled(&lower, &upper, &w, &McConfig::new(9, 2, 300, 20)).unwrap();
    assert_eq!(run.dominated_sweeps, run.total_sweeps);
    let lo = empirical_estimate(&run.lower, &LocalFunction::spin_at(Site::ORIGIN, Dim::Two)).unwrap();
    let hi = empirical_estimate(&run.upper, &LocalFunction::spin_at(Site::ORIGIN, Dim::Two)).unwrap();
    assert!(lo.mean <= hi.mean);
    let constrained = lower.with_fixed(&[(0, PLUS)]);
    assert!(mc_coupled(&constrained, &upper, &w, &McConfig::new(9, 1, 30, 2)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn enumeration_matches_transfer(j in -1.5f64..1.5, h in -1.0f64..1.0, beta in 0.0f64..2.0, n in 2usize..11) {
        compare(&Interaction::new(j, h, beta).unwrap(), n);
    }
}
