use qmetro::experiments::{build_nv, build_ramsey, random_instance, NvPrep, NvScenario, RamseyAnsatz, RamseyScenario};
use qmetro::fisher::{cost_gradient, model_cost, CostConfig, Reparam};
use qmetro::gradients::finite_diff_grad;
use qmetro::optimize::{random_init, Objective};

fn relative_deviation(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().chain(analytic).fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}

#[test]
fn random_models_match_finite_differences() {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let inst = random_instance(3, 1000 + seed).unwrap();
        let b = Reparam::identity(3);
        let cfg = CostConfig::identity(3);
        let g = cost_gradient(&inst.model, &inst.theta, &inst.phi, &inst.mu, &b, &cfg).unwrap();
        let n_theta = inst.theta.len();
        let x: Vec<f64> = inst.theta.iter().chain(&inst.mu).copied().collect();
        let f = |x: &[f64]| {
            let (t, m) = x.split_at(n_theta);
            model_cost(&inst.model, t, &inst.phi, m, &b, &cfg).unwrap()
        };
        let fd = finite_diff_grad(f, &x, 1e-5);
        let analytic: Vec<f64> = g.theta.iter().chain(&g.mu).copied().collect();
        assert!((g.cost - f(&x)).abs() <= 1e-12 * g.cost, "{} vs {}", g.cost, f(&x));
        worst = worst.max(relative_deviation(&analytic, &fd));
    }
    assert!(worst <= 1e-5, "worst relative deviation {worst:e}");
}

#[test]
fn scenario_gradients_match_finite_differences() {
    let setups = [
        build_ramsey(&RamseyScenario { dephasing: 0.2, ansatz: RamseyAnsatz::Full }).unwrap(),
        build_nv(&NvScenario::ground_truth(0.05, NvPrep::ShallowEntangled)).unwrap(),
    ];
    for (k, s) in setups.iter().enumerate() {
        let obj = s.objective();
        for seed in 0..3 {
            let x = random_init(obj.dim(), 40 * k as u64 + seed);
            let (_, analytic) = obj.cost_and_gradient(&x).unwrap();
            let fd = finite_diff_grad(|y| obj.cost(y).unwrap(), &x, 1e-5);
            let dev = relative_deviation(&analytic, &fd);
            assert!(dev <= 1e-5, "setup {k}, seed {seed}: {dev:e}");
        }
    }
}

