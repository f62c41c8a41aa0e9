use nalgebra::DMatrix;
use qmetro::channels::{apply, dephasing, depolarizing, Channel, ConvexChannel, KrausChannel};
use qmetro::circuits::{local_z_encoding, Slot};
use qmetro::experiments::{build_ramsey, random_instance, RamseyAnsatz, RamseyScenario};
use qmetro::fisher::model_cfim;
use qmetro::gradients::{
    cfim_via_expectations, convex_channel_grad, evaluation_count_audit, finite_diff_grad, shift_grad_probs,
};
use qmetro::qalg::{max_abs, CMatrix, DensityMatrix, C64};
use qmetro::{MetrologyModel, ParamCircuit, Povm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn slot_fd(
    model: &MetrologyModel,
    theta: &[f64],
    phi: &[f64],
    mu: &[f64],
    slot: Slot,
    h: f64,
) -> DMatrix<f64> {
    let n = model.param_count(slot);
    let mut out = DMatrix::zeros(n, model.n_outcomes());
    for l in 0..model.n_outcomes() {
        let f = |x: &[f64]| {
            let p = match slot {
                Slot::Prep => model.probabilities(x, phi, mu),
                Slot::Encoding => model.probabilities(theta, x, mu),
                Slot::Measurement => model.probabilities(theta, phi, x),
            };
            p.unwrap()[l]
        };
        let x = match slot {
            Slot::Prep => theta,
            Slot::Encoding => phi,
            Slot::Measurement => mu,
        };
        for (i, g) in finite_diff_grad(f, x, h).into_iter().enumerate() {
            out[(i, l)] = g;
        }
    }
    out
}

#[test]
fn noisy_circuits_obey_the_shift_rule() {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let inst = random_instance(3, seed).unwrap();
        for slot in [Slot::Prep, Slot::Encoding, Slot::Measurement] {
            let analytic = shift_grad_probs(&inst.model, &inst.theta, &inst.phi, &inst.mu, slot).unwrap();
            let numeric = slot_fd(&inst.model, &inst.theta, &inst.phi, &inst.mu, slot, 1e-5);
            worst = worst.max((analytic - numeric).amax());
        }
    }
    assert!(worst <= 1e-6, "max deviation {worst:e}");
}

#[test]
fn derivative_rows_sum_to_zero() {
    let inst = random_instance(3, 99).unwrap();
    for slot in [Slot::Prep, Slot::Encoding, Slot::Measurement] {
        let g = shift_grad_probs(&inst.model, &inst.theta, &inst.phi, &inst.mu, slot).unwrap();
        for row in g.row_iter() {
            assert!(row.sum().abs() < 1e-12);
        }
    }
}

fn random_state(rng: &mut ChaCha8Rng, n_qubits: usize) -> DensityMatrix {
    let dim = 1 << n_qubits;
    let a = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    DensityMatrix::new(rho / tr).unwrap()
}

fn random_convex(rng: &mut ChaCha8Rng) -> ConvexChannel {
    match rng.gen_range(0..3) {
        0 => dephasing(rng.gen(), rng.gen_range(0..2)).unwrap(),
        1 => depolarizing(rng.gen(), &[0, 1]).unwrap(),
        _ => {
            // amplitude damping against identity
            let g: f64 = rng.gen();
            let mut k0 = CMatrix::zeros(2, 2);
            k0[(0, 0)] = C64::new(1.0, 0.0);
            k0[(1, 1)] = C64::new((1.0 - g).sqrt(), 0.0);
            let mut k1 = CMatrix::zeros(2, 2);
            k1[(0, 1)] = C64::new(g.sqrt(), 0.0);
            let q = rng.gen_range(0..2);
            ConvexChannel::new(
                rng.gen(),
                KrausChannel::identity(vec![q]),
                KrausChannel::new(vec![k0, k1], vec![q]).unwrap(),
            )
            .unwrap()
        }
    }
}

#[test]
fn convex_channel_derivative_is_point_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let rho = random_state(&mut rng, 2);
        let ch = random_convex(&mut rng);
        let analytic = apply(&Channel::Kraus(ch.branch_b().clone()), &rho).unwrap().into_data()
            - apply(&Channel::Kraus(ch.branch_a().clone()), &rho).unwrap().into_data();
        let (q1, q2) = (rng.gen::<f64>(), rng.gen::<f64>());
        let g = convex_channel_grad(&rho, &ch, q1, q2).unwrap();
        assert!(max_abs(&(&g - &analytic)) <= 1e-12);
        let g01 = convex_channel_grad(&rho, &ch, 1.0, 0.0).unwrap();
        assert!(max_abs(&(&g - &g01)) <= 1e-12);
    }
}

#[test]
fn expectation_pathway_matches_probability_pathway() {
    let mut worst = 0.0f64;
    for seed in 200..250 {
        let inst = random_instance(3, seed).unwrap();
        let a = model_cfim(&inst.model, &inst.theta, &inst.phi, &inst.mu).unwrap();
        let b = cfim_via_expectations(&inst.model, &inst.theta, &inst.phi, &inst.mu).unwrap();
        worst = worst.max((a.data() - b.data()).amax());
    }
    assert!(worst <= 1e-9, "max deviation {worst:e}");
}

#[test]
fn audit_counts_seven_for_three_phases() {
    let s = build_ramsey(&RamseyScenario { dephasing: 0.1, ansatz: RamseyAnsatz::Full }).unwrap();
    assert_eq!(evaluation_count_audit(&s.model).unwrap(), 7);
}

#[test]
fn prep_acting_trivially_has_zero_gradient() {
    // R_Z on |0⟩ only contributes a global phase
    let mut prep = ParamCircuit::new(2, 1);
    prep.rotation("Z", &[0], 0).unwrap();
    prep.fixed_rotation("Y", &[0], 0.4).unwrap();
    prep.fixed_rotation("Y", &[1], 1.1).unwrap();
    let mut meas = ParamCircuit::new(2, 0);
    meas.fixed_rotation("Y", &[0], -0.3).unwrap();
    let model = MetrologyModel::new(prep, local_z_encoding(2).unwrap(), vec![], Povm::new(meas)).unwrap();
    let g = qmetro::fisher::cost_gradient(
        &model,
        &[0.8],
        &[0.2, 0.9],
        &[],
        &qmetro::Reparam::identity(2),
        &qmetro::CostConfig::identity(2),
    )
    .unwrap();
    assert!(g.theta[0].abs() < 1e-9 * g.cost, "{:?}", g);
}
