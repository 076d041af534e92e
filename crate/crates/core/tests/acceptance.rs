//! Acceptance gate. Runs every criterion, prints one line each and exits
//! non-zero if any fails. `ACCEPTANCE_ONLY=3,5` restricts the run.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use nlirf::basis::{bspline_eval, KnotVector};
use nlirf::irf::{check_compatibility, relax_eval};
use nlirf::linalg::spectral_radius;
use nlirf::model::{iterate, structural_dgp, DEFAULT_BURN_IN};
use nlirf::rng::replication_seed;
use nlirf::{
    builtin_dgp, check_contractivity, draw_innovations, estimate_delta_r, estimated_irf, find_h_star, first_stage,
    fit_two_step, linear_irf, population_irf, run_study, run_study_variant_phi_shift, scalar_ar, simulate,
    ColumnLabel, EstimatorKind, History, RelaxationFn, ShockSpec, SievePlan, StudyConfig, StudyResult,
};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn bump34() -> RelaxationFn {
    RelaxationFn::bump(3.0, 4.0)
}

fn linear_oracle() -> Verdict {
    let spec = builtin_dgp(2).unwrap().without_nonlinear();
    let path = simulate(&spec, 240, 11, DEFAULT_BURN_IN).unwrap();
    let fit = fit_two_step(&path, &SievePlan::linear(), 1).unwrap();
    let shock = ShockSpec::new(1.0, RelaxationFn::ConstantOne, 12);
    let est = estimated_irf(&fit, &path, &shock).unwrap();
    let lin = linear_irf(&fit.spec.a, &fit.spec.b0_21, 1.0, 12).unwrap();
    let gap = (&est.values - &lin.values).amax();

    let truth = builtin_dgp(2).unwrap().linear_part();
    let hand = linear_irf(&truth.a, &truth.b0_21, 1.0, 12).unwrap();
    let c0 = (hand.values[(0, 1)] - 0.5).abs();
    let c1 = (hand.values[(1, 1)] - 0.80).abs();
    verdict(
        gap < 1e-6 && c0 < 1e-10 && c1 < 1e-10,
        format!("max |estimated - linear| = {gap:.2e}; hand checkpoints off by {c0:.1e}, {c1:.1e}"),
    )
}

fn population_oracle() -> Verdict {
    let spec = builtin_dgp(1).unwrap();
    let rho = bump34();
    let pop = population_irf(&spec, &ShockSpec::new(1.0, rho, 0), 200_000, 2024).unwrap();
    let se = pop.se.clone().unwrap();

    // Independent generator and direct evaluation of the impact equations.
    let mut rng = rand::rngs::StdRng::seed_from_u64(0x0a11_ce);
    let draws = 1_000_000;
    let (mut sx, mut sx2, mut sy, mut sy2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let e: f64 = rng.sample::<f64, _>(StandardNormal).clamp(-3.0, 3.0);
        let w = relax_eval(&rho, e);
        let y = 0.5 * w - 0.4 * ((e + w).max(0.0) - e.max(0.0));
        sx += w;
        sx2 += w * w;
        sy += y;
        sy2 += y * y;
    }
    let n = draws as f64;
    let (mx, my) = (sx / n, sy / n);
    let sex = ((sx2 / n - mx * mx) / n).sqrt();
    let sey = ((sy2 / n - my * my) / n).sqrt();
    let zx = (pop.values[(0, 0)] - mx).abs() / (se[(0, 0)].hypot(sex));
    let zy = (pop.values[(0, 1)] - my).abs() / (se[(0, 1)].hypot(sey));
    verdict(
        zx <= 3.0 && zy <= 3.0 && mx > 0.0 && mx < 1.0,
        format!(
            "X: {:.5} vs oracle {mx:.5} ({zx:.2} se); Y: {:.5} vs oracle {my:.5} ({zy:.2} se)",
            pop.values[(0, 0)],
            pop.values[(0, 1)]
        ),
    )
}

fn row(res: &StudyResult, est: EstimatorKind, h: usize) -> &nlirf::StudyRow {
    res.get(est, res.config.deltas[0], "Y1", h).expect("study row")
}

fn dgp2_study() -> Verdict {
    let cfg = StudyConfig::desk(2).unwrap();
    let res = run_study(&cfg).unwrap();
    let (p, s) = (EstimatorKind::ParametricTrue, EstimatorKind::Sieve);
    let mut ok = true;
    let mut ratios = Vec::new();
    for h in 0..=2 {
        let r = row(&res, s, h).mse / row(&res, p, h).mse;
        ratios.push(format!("{r:.3}"));
        ok &= (1.0..2.0).contains(&r);
    }
    let mut worst = 0.0f64;
    for h in 0..=6 {
        let (a, b) = (row(&res, s, h), row(&res, p, h));
        let z = (a.bias.abs() - b.bias.abs()).abs() / a.se.hypot(b.se);
        worst = worst.max(z);
    }
    ok &= worst <= 2.0;
    verdict(
        ok,
        format!("MSE ratio sieve/true at h=0..2: [{}]; max |bias| gap {worst:.2} se (h<=6)", ratios.join(", ")),
    )
}

fn abs_bias_sum(res: &StudyResult, est: EstimatorKind) -> f64 {
    (0..=3).map(|h| row(res, est, h).bias.abs()).sum()
}

fn dgp7_study() -> Verdict {
    let cfg = StudyConfig::desk(7).unwrap();
    let phi = run_study(&cfg).unwrap();
    let shift = run_study_variant_phi_shift(&cfg).unwrap();
    let (m, s) = (EstimatorKind::ParametricMax0, EstimatorKind::Sieve);
    let ratios: Vec<f64> = (0..=3).map(|h| row(&phi, m, h).mse / row(&phi, s, h).mse).collect();
    let shrinks = (0..=3).all(|h| row(&shift, m, h).bias.abs() < row(&phi, m, h).bias.abs());
    let (pm, ps) = (abs_bias_sum(&phi, m), abs_bias_sum(&phi, s));
    let (qm, qs) = (abs_bias_sum(&shift, m), abs_bias_sum(&shift, s));
    let ok = ratios.iter().all(|r| *r >= 2.0) && shrinks && pm > ps && qm < qs;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    verdict(
        ok,
        format!(
            "MSE max0/sieve at h=0..3: [{}]; sum|bias| h<=3 phi: max0 {pm:.4} sieve {ps:.4}; \
             shifted: max0 {qm:.4} sieve {qs:.4}; max0 bias shrinks: {shrinks}",
            shown.join(", ")
        ),
    )
}

fn consistency_sweep() -> Verdict {
    let spec = builtin_dgp(2).unwrap();
    let rho = bump34();
    let deltas = [-1.0, -0.5, 0.5, 1.0];
    let pops: Vec<_> = deltas
        .iter()
        .enumerate()
        .map(|(k, &d)| population_irf(&spec, &ShockSpec::new(d, rho, 12), 100_000, 900 + k as u64).unwrap())
        .collect();
    let plan = SievePlan::cubic(vec![0.0]);
    let errors = |n: usize| -> Vec<f64> {
        (0..50u64)
            .map(|s| {
                let path = simulate(&spec, n, replication_seed(5, s), DEFAULT_BURN_IN).unwrap();
                let fit = fit_two_step(&path, &plan, 1).unwrap();
                deltas
                    .iter()
                    .zip(&pops)
                    .map(|(&d, pop)| {
                        let est = estimated_irf(&fit, &path, &ShockSpec::new(d, rho, 12)).unwrap();
                        (&est.values - &pop.values).amax()
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    };
    let small = median(errors(240));
    let large = median(errors(2400));
    verdict(large < small, format!("median max error n=240: {small:.4}, n=2400: {large:.4}"))
}

fn grid(a: f64, b: f64, m: usize) -> impl Iterator<Item = f64> {
    (0..m).map(move |i| (a + (b - a) * i as f64 / (m - 1) as f64).min(b))
}

fn property_suites() -> Verdict {
    let mut rng = rand::rngs::StdRng::seed_from_u64(6);
    let mut failures = Vec::new();
    for _ in 0..200 {
        let degree = rng.random_range(0..5usize);
        let a = rng.random_range(-5.0..0.0);
        let b = a + rng.random_range(0.5..5.0);
        let mut fr: Vec<f64> = (0..rng.random_range(0..6)).map(|_| rng.random_range(0.01..0.99)).collect();
        fr.sort_by(|x, y| x.total_cmp(y));
        fr.dedup_by(|x, y| (*x - *y).abs() < 1e-3);
        let kv = KnotVector::new(degree, fr.iter().map(|f| a + f * (b - a)).collect(), (a, b)).unwrap();
        let u = kv.full_knots().to_vec();
        let greville: Vec<f64> =
            (0..kv.dim()).map(|i| u[i + 1..=i + degree].iter().sum::<f64>() / degree.max(1) as f64).collect();
        for x in grid(a, b, 400) {
            let v = bspline_eval(&kv, x);
            if (v.iter().sum::<f64>() - 1.0).abs() >= 1e-10 {
                failures.push("partition of unity");
            }
            if v.iter().enumerate().any(|(i, &e)| e != 0.0 && (x < u[i] || x > u[i + degree + 1])) {
                failures.push("local support");
            }
            if degree >= 1 && (kv.combine(&greville, x).0 - x).abs() >= 1e-8 {
                failures.push("linear reproduction");
            }
        }
    }

    let rho = bump34();
    if relax_eval(&rho, 0.0) != 1.0 || relax_eval(&rho, 3.0) != 0.0 || relax_eval(&rho, -3.0) != 0.0 {
        failures.push("relaxation identities");
    }
    for (d, want) in [(1.0, true), (-1.0, true), (5.0, false), (-5.0, false)] {
        if check_compatibility(&rho, d, (-3.0, 3.0)).compatible != want {
            failures.push("compatibility verdict");
        }
    }

    let path = simulate(&builtin_dgp(2).unwrap(), 600, 3, DEFAULT_BURN_IN).unwrap();
    let fit = fit_two_step(&path, &SievePlan::cubic(vec![0.0]), 1).unwrap();
    let mut g = vec![0.0; fit.p];
    g.extend_from_slice(&fit.first_stage.residuals);
    let design = fit.basis.design(&path.x, &path.y, &g).unwrap();
    let n = design.values.nrows() as f64;
    let orth = (design.values.transpose() * fit.residuals.column(0)).amax() / n;
    if orth >= 1e-8 {
        failures.push("residual orthogonality");
    }

    let mut equiv = 0.0f64;
    for id in 4..=6 {
        let st = structural_dgp(id).unwrap();
        let pr = st.to_pseudo_reduced().unwrap();
        let eps = draw_innovations(&pr, 5000, id as u64);
        let direct = st.iterate(&eps).unwrap();
        let (reduced, _) = iterate(&pr, History::zeros(3, 1), &eps).unwrap();
        equiv = equiv.max((&direct - &reduced).amax());
    }
    if equiv >= 1e-10 {
        failures.push("structural equivalence");
    }

    let mut cfg = StudyConfig::desk(4).unwrap();
    cfg.mc_replications = 16;
    cfg.pop_replications = 1000;
    let run = |t: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(|| {
            let pop = population_irf(&builtin_dgp(2).unwrap(), &ShockSpec::new(1.0, rho, 8), 3000, 1).unwrap();
            (run_study(&cfg).unwrap(), pop)
        })
    };
    let one = run(1);
    if [2, 5, 8].iter().any(|&t| run(t) != one) {
        failures.push("thread determinism");
    }
    failures.dedup();
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "spline suites over 200 knot vectors, orthogonality {orth:.1e}, equivalence {equiv:.1e}, threads 1/2/5/8"
            )
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn dependence_diagnostics() -> Verdict {
    let ar1 = scalar_ar(&[0.5], 3.0);
    let prof = estimate_delta_r(&ar1, 2.0, 10, 10_000, 7).unwrap();
    let a2 = prof.fit.as_ref().map_or(f64::NAN, |f| f.a2);
    let a2_ok = (a2 / 2f64.ln() - 1.0).abs() <= 0.25;

    let mut rng = rand::rngs::StdRng::seed_from_u64(77);
    let (mut violated, mut checked, mut found) = (0, 0, 0);
    let mut misses = Vec::new();
    for _ in 0..20 {
        // Uniform draw from the stationarity triangle |b1| < 1 - b2, |b2| < 1.
        let (b1, b2) = loop {
            let b2: f64 = rng.random_range(-1.0..1.0);
            let b1: f64 = rng.random_range(-2.0..2.0);
            if b1.abs() < 1.0 - b2 {
                break (b1, b2);
            }
        };
        let spec = scalar_ar(&[b1, b2], 3.0);
        if !check_contractivity(&spec, 50, 1).unwrap().contractive {
            violated += 1;
        }
        let radius = spectral_radius(&DMatrix::from_row_slice(2, 2, &[b1, b2, 1.0, 0.0]));
        if radius < 0.9 {
            checked += 1;
            match find_h_star(&spec, 10, 50, 1).unwrap().h_star {
                Some(_) => found += 1,
                None => misses.push(format!("({b1:.3}, {b2:.3}) radius {radius:.3}")),
            }
        }
    }
    verdict(
        a2_ok && violated == 20 && found == checked,
        format!(
            "AR(1) a2 = {a2:.4} (log 2 = {:.4}); AR(2) non-contractive {violated}/20; \
             h_star <= 10 for {found}/{checked} with radius < 0.9{}",
            2f64.ln(),
            if misses.is_empty() { String::new() } else { format!("; misses: {}", misses.join(", ")) }
        ),
    )
}

fn first_stage_rate() -> Verdict {
    let spec = builtin_dgp(2).unwrap();
    let truth = |label: ColumnLabel| match label {
        ColumnLabel::Intercept => spec.mu[0],
        ColumnLabel::LinearX { lag } => spec.a.coeffs[lag - 1][(0, 0)],
        ColumnLabel::LinearY { lag, component } => spec.a.coeffs[lag - 1][(0, 1 + component)],
        _ => unreachable!("not a first-stage regressor"),
    };
    let medians: Vec<f64> = [240usize, 960, 3840]
        .iter()
        .map(|&n| {
            median(
                (0..200u64)
                    .map(|s| {
                        let path = simulate(&spec, n, replication_seed(8, s), DEFAULT_BURN_IN).unwrap();
                        let fs = first_stage(&path, 1, true).unwrap();
                        let err = DVector::from_iterator(
                            fs.labels.len(),
                            fs.labels.iter().zip(&fs.pi1_hat).map(|(&l, &v)| v - truth(l)),
                        );
                        (n as f64).sqrt() * err.norm()
                    })
                    .collect(),
            )
        })
        .collect();
    let hi = medians.iter().copied().fold(f64::MIN, f64::max);
    let lo = medians.iter().copied().fold(f64::MAX, f64::min);
    verdict(
        hi / lo <= 2.0,
        format!(
            "median sqrt(n)|Pi_hat - Pi| at n = 240/960/3840: {:.3} / {:.3} / {:.3}",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn main() {
    let criteria: [(u8, &str, fn() -> Verdict); 8] = [
        (1, "linear oracle equivalence", linear_oracle),
        (2, "population IRF oracle", population_oracle),
        (3, "DGP 2 study ordering", dgp2_study),
        (4, "DGP 7 study ordering", dgp7_study),
        (5, "consistency sweep", consistency_sweep),
        (6, "property suites", property_suites),
        (7, "dependence diagnostics", dependence_diagnostics),
        (8, "first-stage rate", first_stage_rate),
    ];
    let only: Option<Vec<u8>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {id} {}: {name} ({secs:.1}s): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
