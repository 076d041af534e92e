use nlirf::model::DEFAULT_BURN_IN;
use nlirf::rng::replication_seed;
use nlirf::{builtin_dgp, estimated_irf, fit_two_step, population_irf, simulate, RelaxationFn, ShockSpec, SievePlan};

#[test]
fn dgp2_estimated_irf_close_to_population() {
    let spec = builtin_dgp(2).unwrap();
    let shock = ShockSpec::new(1.0, RelaxationFn::bump(3.0, 4.0), 12);
    let pop = population_irf(&spec, &shock, 50_000, 31).unwrap();
    let se = pop.se.clone().unwrap();
    let mut errors = vec![Vec::new(); 13];
    for s in 0..50u64 {
        let path = simulate(&spec, 2400, replication_seed(32, s), DEFAULT_BURN_IN).unwrap();
        let fit = fit_two_step(&path, &SievePlan::cubic(vec![0.0]), 1).unwrap();
        let est = estimated_irf(&fit, &path, &shock).unwrap();
        for (h, e) in errors.iter_mut().enumerate() {
            e.push((est.values[(h, 1)] - pop.values[(h, 1)]).abs());
        }
    }
    for (h, mut e) in errors.into_iter().enumerate() {
        e.sort_by(|a, b| a.total_cmp(b));
        let med = 0.5 * (e[24] + e[25]);
        assert!(med <= 3.0 * se[(h, 1)] + 0.05, "h={h}: median error {med}");
    }
}

#[test]
fn zero_shock_gives_zero_curves() {
    let spec = builtin_dgp(6).unwrap();
    let path = simulate(&spec, 300, 1, DEFAULT_BURN_IN).unwrap();
    let fit = fit_two_step(&path, &SievePlan::cubic(vec![0.0]), 1).unwrap();
    let shock = ShockSpec::new(0.0, RelaxationFn::bump(3.0, 4.0), 6);
    assert_eq!(estimated_irf(&fit, &path, &shock).unwrap().values.amax(), 0.0);
    assert_eq!(population_irf(&spec, &shock, 100, 2).unwrap().values.amax(), 0.0);
}
