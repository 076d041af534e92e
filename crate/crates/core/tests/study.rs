use nlirf::study::TargetMode;
use nlirf::{
    builtin_dgp, run_study, run_study_variant_phi_shift, target_mode, EstimatorKind, RelaxationFn, StudyConfig,
    StudyResult,
};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

fn y1(res: &StudyResult, est: EstimatorKind, h: usize) -> &nlirf::StudyRow {
    res.get(est, res.config.deltas[0], "Y1", h).unwrap()
}

fn sieve_only(dgp: u8) -> StudyConfig {
    let mut c = StudyConfig::desk(dgp).unwrap();
    c.estimators = vec![EstimatorKind::Sieve];
    c
}

#[test]
fn unrelaxed_target_raises_short_horizon_bias() {
    let cfg = sieve_only(2);
    let matched = run_study(&cfg).unwrap();
    let unrelaxed = target_mode(&cfg, TargetMode::NonrelaxedTarget).unwrap();
    let short = |r: &StudyResult| (0..=2).map(|h| y1(r, EstimatorKind::Sieve, h).bias.abs()).sum::<f64>();
    assert!(short(&unrelaxed) > short(&matched), "{} vs {}", short(&unrelaxed), short(&matched));
}

#[test]
fn unrelaxed_estimator_has_higher_impact_mse() {
    let mut rel = Vec::new();
    let mut unrel = Vec::new();
    for seed in 1..=5 {
        let mut cfg = sieve_only(2);
        cfg.master_seed = seed;
        cfg.target = TargetMode::NonrelaxedTarget;
        rel.push(y1(&run_study(&cfg).unwrap(), EstimatorKind::Sieve, 0).mse);
        cfg.estimator_relaxation = Some(RelaxationFn::ConstantOne);
        unrel.push(y1(&run_study(&cfg).unwrap(), EstimatorKind::Sieve, 0).mse);
    }
    let (r, u) = (median(rel), median(unrel));
    assert!(u >= r, "unrelaxed {u} vs relaxed {r}");
}

#[test]
fn linear_truth_mse_scales_like_inverse_n() {
    let mut base = StudyConfig::desk(2).unwrap();
    base.model = Some(builtin_dgp(2).unwrap().linear_part());
    base.estimators = vec![EstimatorKind::ParametricTrue];
    base.pop_replications = 100_000;
    let sizes = [240usize, 960, 3840];
    let runs: Vec<StudyResult> = sizes
        .iter()
        .map(|&n| {
            let mut c = base.clone();
            c.n = n;
            run_study(&c).unwrap()
        })
        .collect();
    let pop_se = runs[0].population[0].se.clone().unwrap();
    let names = runs[0].population[0].var_names();
    for (k, var) in names.iter().enumerate() {
        for h in 0..=base.horizon {
            let scaled: Vec<f64> = runs
                .iter()
                .zip(sizes)
                .map(|(r, n)| r.get(EstimatorKind::ParametricTrue, 1.0, var, h).unwrap().mse * n as f64)
                .collect();
            let centre = scaled.iter().map(|v| v.ln()).sum::<f64>() / 3.0;
            for v in &scaled {
                assert!((v.ln() - centre).abs() <= 2f64.ln(), "{var} h={h}: n*MSE = {scaled:?}");
            }
            let last = runs[2].get(EstimatorKind::ParametricTrue, 1.0, var, h).unwrap();
            let first = runs[0].get(EstimatorKind::ParametricTrue, 1.0, var, h).unwrap();
            let tol = 3.0 * last.se.hypot(pop_se[(h, k)]);
            assert!(last.bias.abs() <= tol.max(first.bias.abs()), "{var} h={h}: bias {}", last.bias);
        }
    }
}

#[test]
fn shifted_phi_keeps_sieve_bias_comparable() {
    let cfg = StudyConfig::desk(7).unwrap();
    let phi = run_study(&cfg).unwrap();
    let shift = run_study_variant_phi_shift(&cfg).unwrap();
    for h in 0..=3 {
        let (a, b) = (y1(&phi, EstimatorKind::Sieve, h).bias.abs(), y1(&shift, EstimatorKind::Sieve, h).bias.abs());
        let (m_phi, m_shift) =
            (y1(&phi, EstimatorKind::ParametricMax0, h).bias.abs(), y1(&shift, EstimatorKind::ParametricMax0, h).bias.abs());
        assert!(m_shift < m_phi, "h={h}: max0 bias {m_shift} vs {m_phi}");
        let ratio = a.max(1e-12) / b.max(1e-12);
        assert!((0.2..=5.0).contains(&ratio), "h={h}: sieve bias {a} vs {b}");
    }
}
