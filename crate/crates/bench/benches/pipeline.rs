use criterion::{criterion_group, criterion_main, Criterion};
use nlirf::model::DEFAULT_BURN_IN;
use nlirf::{
    builtin_dgp, estimated_irf, find_h_star, fit_two_step, population_irf, simulate, RelaxationFn, ShockSpec,
    SievePlan,
};
use std::hint::black_box;

fn pipeline(c: &mut Criterion) {
    let spec = builtin_dgp(2).unwrap();
    let plan = SievePlan::cubic(vec![0.0]);
    let shock = ShockSpec::new(1.0, RelaxationFn::bump(3.0, 4.0), 12);
    let path = simulate(&spec, 2400, 1, DEFAULT_BURN_IN).unwrap();
    let fit = fit_two_step(&path, &plan, 1).unwrap();

    c.bench_function("simulate_dgp2_n2400", |b| b.iter(|| simulate(black_box(&spec), 2400, 1, DEFAULT_BURN_IN)));
    c.bench_function("fit_two_step_dgp2_n2400", |b| b.iter(|| fit_two_step(black_box(&path), &plan, 1)));
    c.bench_function("estimated_irf_dgp2_n2400_h12", |b| b.iter(|| estimated_irf(black_box(&fit), &path, &shock)));
    c.bench_function("population_irf_dgp2_1000_reps", |b| b.iter(|| population_irf(black_box(&spec), &shock, 1000, 7)));

    let dgp7 = builtin_dgp(7).unwrap();
    let path7 = simulate(&dgp7, 2400, 1, DEFAULT_BURN_IN).unwrap();
    let plan7 = SievePlan::cubic(vec![-3.0, -1.0, 1.0, 3.0]);
    c.bench_function("fit_two_step_dgp7_n2400", |b| b.iter(|| fit_two_step(black_box(&path7), &plan7, 1)));
    c.bench_function("find_h_star_dgp2", |b| b.iter(|| find_h_star(black_box(&spec), 10, 50, 1)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = pipeline
}
criterion_main!(benches);
