use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_6};

use nalgebra::DMatrix;
use qmetro::experiments::{
    average_phase_reparam, build_ramsey, random_instance, random_pure_instance, ramsey_reference_costs,
    RamseyAnsatz, RamseyScenario,
};
use qmetro::fisher::{
    model_cfim, model_cost, qfim_pure, reparametrize, van_trees_expected_cfim, weighted_crb_cost, CostConfig,
    FisherMatrix, Reparam, REGULARIZATION,
};
use qmetro::optimize::{descend, OptimizerConfig};
use qmetro::qalg::{CVector, C64};
use rand::Rng;

fn ramsey(p: f64, ansatz: RamseyAnsatz) -> qmetro::experiments::Setup {
    build_ramsey(&RamseyScenario { dephasing: p, ansatz }).unwrap()
}

/// Probabilities of GHZ · R_Z(φ)^{⊗3} read out in the Hadamard basis, by brute force over amplitudes.
fn ghz_hadamard_probs(phi: &[f64]) -> Vec<f64> {
    let mut amp = vec![C64::new(0.0, 0.0); 8];
    let total: f64 = phi.iter().sum();
    amp[0] = C64::from_polar(FRAC_1_SQRT_2, -total / 2.0);
    amp[7] = C64::from_polar(FRAC_1_SQRT_2, total / 2.0);
    (0..8)
        .map(|l: usize| {
            // ⟨l|H⊗H⊗H|b⟩ = (−1)^{popcount(l & b)} / √8
            let a: C64 = (0..8usize)
                .map(|b| amp[b] * if (l & b).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
                .sum::<C64>()
                / 8f64.sqrt();
            a.norm_sqr()
        })
        .collect()
}

#[test]
fn ghz_cfim_is_all_ones() {
    let s = ramsey(0.0, RamseyAnsatz::GhzReference);
    let f = model_cfim(&s.model, &[], &s.phases, &[]).unwrap();
    assert!((f.data() - DMatrix::from_element(3, 3, 1.0)).amax() <= 1e-9);
    assert_eq!(f.eigenvalues().iter().filter(|&&e| e > 1e-9).count(), 1);

    // brute-force oracle with central differences
    let phi = [FRAC_PI_6; 3];
    let p = ghz_hadamard_probs(&phi);
    let sim = s.model.probabilities(&[], &phi, &[]).unwrap();
    for (a, b) in p.iter().zip(&sim) {
        assert!((a - b).abs() < 1e-14);
    }
    let h = 1e-6;
    let mut oracle = DMatrix::zeros(3, 3);
    let dp: Vec<Vec<f64>> = (0..3)
        .map(|j| {
            let mut up = phi;
            let mut down = phi;
            up[j] += h;
            down[j] -= h;
            let (a, b) = (ghz_hadamard_probs(&up), ghz_hadamard_probs(&down));
            a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect()
        })
        .collect();
    for l in 0..8 {
        if p[l] < 1e-12 {
            continue;
        }
        for j in 0..3 {
            for k in 0..3 {
                oracle[(j, k)] += dp[j][l] * dp[k][l] / p[l];
            }
        }
    }
    assert!((f.data() - oracle).amax() <= 1e-8);
}

/// The regularized cost of a rank-deficient CFIM whose information on the
/// target lives in one decoupled direction: `1 / (1/C + ε)`.
fn regularized(c: f64) -> f64 {
    1.0 / (1.0 / c + REGULARIZATION)
}

#[test]
fn reference_probes_match_closed_forms_on_the_grid() {
    for i in 0..11 {
        let p = 0.045 * i as f64;
        let v = 1.0 - 2.0 * p;
        let (ghz, local) = ramsey_reference_costs(p).unwrap();

        let g = ramsey(p, RamseyAnsatz::GhzReference);
        let fg = model_cfim(&g.model, &[], &g.phases, &[]).unwrap();
        let expect = DMatrix::from_element(3, 3, v.powi(6));
        assert!((fg.data() - &expect).amax() <= 1e-9 * expect.amax().max(1.0), "p = {p}");
        let cg = g.cost_at(&[], &[]).unwrap();
        assert!((cg - regularized(ghz)).abs() <= 1e-9 * ghz, "p = {p}: {cg} vs {ghz}");

        let r = ramsey(p, RamseyAnsatz::LocalReference);
        let fr = model_cfim(&r.model, &[], &r.phases, &[]).unwrap();
        assert!((fr.data() - DMatrix::identity(3, 3) * v * v).amax() <= 1e-9, "p = {p}");
        let cr = r.cost_at(&[], &[]).unwrap();
        assert!((cr - regularized(local)).abs() <= 1e-9 * local, "p = {p}: {cr} vs {local}");
    }
}

#[test]
fn ghz_cost_is_one_ninth() {
    let s = ramsey(0.0, RamseyAnsatz::GhzReference);
    assert!((s.cost_at(&[], &[]).unwrap() - 1.0 / 9.0).abs() <= 1e-9);
}

fn selected_cost(i_phi: &FisherMatrix, completion: &DMatrix<f64>, epsilon: f64) -> f64 {
    let mut w = DMatrix::zeros(3, 3);
    w[(0, 0)] = 1.0;
    let cfg = CostConfig::new(w, epsilon, 1).unwrap();
    weighted_crb_cost(&reparametrize(i_phi, &average_phase_reparam(completion).unwrap()).unwrap(), &cfg).unwrap()
}

#[test]
fn average_phase_bound_ignores_the_completion() {
    let standard = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 1.0, 1.0, -2.0]);
    let arbitrary = [
        DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 3, &[2.0, 0.5, -1.0, -0.3, 1.0, 4.0]),
    ];
    // an orthogonal mix of the standard rows keeps their Gram matrix, so even
    // the regularized bound is unchanged
    let (c, sn) = (0.3f64.cos(), 0.3f64.sin());
    let rotated = DMatrix::from_row_slice(2, 2, &[c, -sn, sn, c]) * &standard;
    for seed in 0..10 {
        let inst = random_instance(3, 500 + seed).unwrap();
        let i_phi = model_cfim(&inst.model, &inst.theta, &inst.phi, &inst.mu).unwrap();
        // unregularized regime: any completion
        let base = selected_cost(&i_phi, &standard, 1e-300);
        for m in &arbitrary {
            let other = selected_cost(&i_phi, m, 1e-300);
            assert!((other - base).abs() <= 1e-8 * base, "{base} vs {other}");
        }
        let a = selected_cost(&i_phi, &standard, REGULARIZATION);
        let b = selected_cost(&i_phi, &rotated, REGULARIZATION);
        assert!((a - b).abs() <= 1e-8 * a, "{a} vs {b}");
    }
    // GHZ: rank-one information, regularization on
    let g = ramsey(0.1, RamseyAnsatz::GhzReference);
    let i_phi = model_cfim(&g.model, &[], &g.phases, &[]).unwrap();
    let other = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, -1.0, 2.0, -1.0, -1.0]);
    let a = selected_cost(&i_phi, &standard, REGULARIZATION);
    let b = selected_cost(&i_phi, &other, REGULARIZATION);
    assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
}

#[test]
fn cfim_never_exceeds_qfim_for_pure_probes() {
    for seed in 0..50 {
        let inst = random_pure_instance(3, 700 + seed).unwrap();
        let rho = inst.model.encode(&inst.model.prepare(&inst.theta).unwrap(), &inst.phi).unwrap();
        let psi = rho.pure_state_vector().unwrap();
        let q = qfim_pure(&psi, inst.model.generators()).unwrap();
        let c = model_cfim(&inst.model, &inst.theta, &inst.phi, &inst.mu).unwrap();
        let gap = FisherMatrix::new(q.data() - c.data()).map(|f| f.min_eigenvalue());
        let min = gap.unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(min >= -1e-8, "seed {seed}: {min:e}");
    }
}

#[test]
fn qfim_of_a_generator_eigenstate_vanishes_on_that_entry() {
    let s = ramsey(0.0, RamseyAnsatz::Full);
    let mut zero = CVector::zeros(8);
    zero[0] = C64::new(1.0, 0.0);
    let q = qfim_pure(&zero, s.model.generators()).unwrap();
    assert!(q.data().amax() < 1e-15);
}

#[test]
fn van_trees_examples() {
    let inst = random_instance(3, 9).unwrap();
    let (m, th, mu) = (&inst.model, &inst.theta, &inst.mu);
    let phi0 = inst.phi.clone();
    let phi1: Vec<f64> = phi0.iter().map(|x| x + 0.7).collect();

    let delta = van_trees_expected_cfim(m, th, mu, |_| phi0.clone(), 5, 1).unwrap();
    assert_eq!(delta.mean.data(), model_cfim(m, th, &phi0, mu).unwrap().data());

    let single = van_trees_expected_cfim(m, th, mu, |rng| if rng.gen_bool(0.5) { phi0.clone() } else { phi1.clone() }, 1, 4)
        .unwrap();
    let i0 = model_cfim(m, th, &phi0, mu).unwrap();
    let i1 = model_cfim(m, th, &phi1, mu).unwrap();
    assert!(single.mean.data() == i0.data() || single.mean.data() == i1.data());

    let two = |rng: &mut rand_chacha::ChaCha8Rng| if rng.gen_bool(0.5) { phi0.clone() } else { phi1.clone() };
    let avg = van_trees_expected_cfim(m, th, mu, two, 10_000, 11).unwrap();
    let again = van_trees_expected_cfim(m, th, mu, two, 10_000, 11).unwrap();
    assert_eq!(avg, again);
    let target = (i0.data() + i1.data()) / 2.0;
    for j in 0..3 {
        for k in 0..3 {
            let dev = (avg.mean.data()[(j, k)] - target[(j, k)]).abs();
            assert!(dev <= 3.0 * avg.std_err[(j, k)] + 1e-15, "({j},{k}) {dev:e}");
        }
    }
    assert!(van_trees_expected_cfim(m, th, mu, two, 0, 1).is_err());
}

#[test]
fn converged_run_is_stationary() {
    // one qubit, R_Y preparation and R_Y readout around a dephased fringe
    let mut prep = qmetro::ParamCircuit::new(1, 1);
    prep.rotation("Y", &[0], 0).unwrap();
    let mut meas = qmetro::ParamCircuit::new(1, 1);
    meas.rotation("Y", &[0], 0).unwrap();
    let model = qmetro::MetrologyModel::new(
        prep,
        qmetro::circuits::local_z_encoding(1).unwrap(),
        vec![qmetro::channels::dephasing(0.1, 0).unwrap().into()],
        qmetro::Povm::new(meas),
    )
    .unwrap();
    let (b, cfg) = (Reparam::identity(1), CostConfig::identity(1));
    let phases = [0.3];
    let obj = qmetro::optimize::CrbObjective { model: &model, phases: &phases, reparam: &b, cost: &cfg };
    let t = descend(&obj, vec![1.0, 2.0], &OptimizerConfig::ramsey(0)).unwrap();
    let (theta, mu) = t.params.split_at(1);
    let g = qmetro::fisher::cost_gradient(&model, theta, &phases, mu, &b, &cfg).unwrap();
    let norm = g.theta.iter().chain(&g.mu).map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm <= 1e-4, "gradient norm {norm:e}");
    // no readout reaches the y axis, so the bound stays above 1/(1 − 2p)²
    assert!(t.final_cost >= 1.0 / 0.64 - 1e-9);
    assert!((model_cost(&model, theta, &phases, mu, &b, &cfg).unwrap() - t.final_cost).abs() < 1e-12);
}
