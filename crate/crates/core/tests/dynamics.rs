mod common;

use rand::{Rng, SeedableRng};

use common::{bruce, five_bar};
use linkforge::differential::DifferentialParams;
use linkforge::dynamics::{backlash_probe, BacklashRig};
use linkforge::dynamics::{
    constraint_accel, mechanical_energy, step, step_in_place, Constraint, ConstraintSet, DynState, ImpedanceParams,
    MassMatrix, StepScratch,
};
use linkforge::error::DynamicsError;
use linkforge::model::{SimLayout, VariantSpec};

fn rigid(stiffness: f64, damping: f64) -> ImpedanceParams {
    ImpedanceParams { stiffness, damping, d_min: 1.0, d_max: 1.0, ..Default::default() }
}

#[test]
fn closed_state_at_rest_stays_put() {
    let set = ConstraintSet::new(vec![Constraint::gear("g", 2.0, [0, 1], [0.1, 0.2], ImpedanceParams::default())])
        .unwrap();
    let s = DynState::new(vec![0.1, 0.2], vec![0.0, 0.0], MassMatrix::Diagonal(vec![1.0, 0.5])).unwrap();
    let next = step(&s, &set, 1e-3).unwrap();
    assert!((next.q[0] - 0.1).abs() < 1e-12 && (next.q[1] - 0.2).abs() < 1e-12);
    assert!(next.qdot.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn constraint_accel_interpolation_identity() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    for _ in 0..1000 {
        let d = rng.random_range(0.0..1.0);
        let p = ImpedanceParams { d_min: d, d_max: d, stiffness: rng.random_range(0.0..1e4), damping: rng.random_range(0.0..300.0), ..Default::default() };
        let (r, v, a0) = (rng.random_range(-0.01..0.01), rng.random_range(-1.0..1.0), rng.random_range(-50.0..50.0));
        let a1 = constraint_accel(&p, r, v, a0);
        let scale = 1.0 + a0.abs() + p.damping * v.abs() + p.stiffness * r.abs();
        assert!((a1 + d * (p.damping * v + p.stiffness * r) - (1.0 - d) * a0).abs() <= 1e-14 * scale);
    }
}

#[test]
fn satisfied_constraint_leaves_pendulum_untouched() {
    // dof 0 is a free pendulum; dofs 1 and 2 are geared and at rest
    let set = ConstraintSet::new(vec![Constraint::gear("g", 1.5, [1, 2], [0.0, 0.0], rigid(1e4, 200.0))]).unwrap();
    let (m, g, l, c) = (0.3, 9.81, 0.25, 0.01);
    let inertia = m * l * l;
    let mut s = DynState::new(vec![1.0, 0.0, 0.0], vec![0.0; 3], MassMatrix::Diagonal(vec![inertia, 1.0, 2.0])).unwrap();
    let mut scratch = StepScratch::default();
    let (mut q, mut v) = (1.0f64, 0.0f64);
    let dt = 1e-3;
    for _ in 0..2000 {
        s.applied[0] = -m * g * l * s.q[0].sin() - c * s.qdot[0];
        step_in_place(&mut s, &set, dt, &mut scratch).unwrap();
        v += dt * (-m * g * l * q.sin() - c * v) / inertia;
        q += dt * v;
        assert!((s.q[0] - q).abs() <= 1e-12 && (s.qdot[0] - v).abs() <= 1e-12);
    }
    assert_eq!(s.q[1], 0.0);
    assert_eq!(s.q[2], 0.0);
}

/// One gear row with unit masses; the constraint coordinate follows the
/// discrete spring-damper recursion exactly.
fn gear_response(k: f64, b: f64, r0: f64, dt: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let set = ConstraintSet::new(vec![Constraint::gear("g", 1.0, [0, 1], [0.0, 0.0], rigid(k, b))]).unwrap();
    let mut s = DynState::new(vec![0.0, r0], vec![0.0, 0.0], MassMatrix::Diagonal(vec![1.0, 1.0])).unwrap();
    let mut scratch = StepScratch::default();
    let (mut r, mut v) = (r0, 0.0);
    let (mut sim, mut oracle) = (Vec::new(), Vec::new());
    for _ in 0..steps {
        step_in_place(&mut s, &set, dt, &mut scratch).unwrap();
        v += dt * -(b * v + k * r);
        r += dt * v;
        sim.push(s.q[1] - s.q[0]);
        oracle.push(r);
    }
    (sim, oracle)
}

#[test]
fn stiffness_sets_the_constraint_oscillation() {
    let dt = 1e-5;
    let mut crossings = Vec::new();
    for k in [1e2, 4e2, 1.6e3] {
        let (sim, oracle) = gear_response(k, 0.0, 0.01, dt, 40_000);
        for (a, b) in sim.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12, "k={k}: {a} vs {b}");
        }
        let first = sim.iter().position(|r| *r <= 0.0).expect("oscillates") as f64 * dt;
        // quarter period of sqrt(k)
        assert!((first - std::f64::consts::FRAC_PI_2 / k.sqrt()).abs() < 2e-3 * first + 2.0 * dt);
        crossings.push(first);
    }
    assert!((crossings[1] / crossings[0] - 0.5).abs() < 0.01);
    assert!((crossings[2] / crossings[1] - 0.5).abs() < 0.01);
}

#[test]
fn damping_sets_the_decay() {
    let (sim, oracle) = gear_response(1e4, 200.0, 0.01, 1e-4, 2000);
    for (a, b) in sim.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-12);
    }
    // critically damped: no overshoot, decays toward zero
    assert!(sim.iter().all(|r| *r >= -1e-12));
    assert!(sim.last().unwrap().abs() < 1e-6);
}

#[test]
fn deadband_is_transparent() {
    let p = ImpedanceParams::backlash(0.01);
    let set = ConstraintSet::new(vec![Constraint::gear("g", 2.0, [0, 1], [0.0, 0.0], p)]).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    for _ in 0..200 {
        let qa = rng.random_range(-0.1..0.1);
        let r = rng.random_range(-0.009..0.009);
        let mut s = DynState::new(
            vec![qa, 2.0 * qa + r],
            vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            MassMatrix::Diagonal(vec![0.7, 0.2]),
        )
        .unwrap();
        s.applied = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let dt = 1e-3;
        let next = step(&s, &set, dt).unwrap();
        for i in 0..2 {
            let a = (next.qdot[i] - s.qdot[i]) / dt;
            let a0 = s.applied[i] / [0.7, 0.2][i];
            assert!((a - a0).abs() <= 1e-12 * (1.0 + a0.abs()), "{a} vs {a0}");
        }
    }
}

#[test]
fn backlash_free_play_tracks_the_deadband() {
    let play = |eps: f64| backlash_probe(&BacklashRig::new(ImpedanceParams::backlash(eps))).unwrap().free_play;
    // with no deadband only the impedance transition is soft
    let zero = play(0.0);
    assert!(zero < 0.1 * ImpedanceParams::backlash(0.0).width, "{zero}");
    let mid = play(0.01);
    assert!((0.005..=0.02).contains(&mid), "{mid}");
    let levels = [play(0.005), mid, play(0.02)];
    assert!(levels[0] < levels[1] && levels[1] < levels[2], "{levels:?}");
}

#[test]
fn five_bar_violation_stays_bounded_under_random_torques() {
    let model = bruce();
    let (p, j) = five_bar(&model, "knee_l");
    let q0: Vec<f64> = j.iter().map(|&k| model.q_nom[k]).collect();
    let imp = ImpedanceParams { stiffness: 1e4, damping: 200.0, ..Default::default() };
    let set = ConstraintSet::new(vec![Constraint::five_bar("knee", p, [0, 1, 2, 3], imp)]).unwrap();
    let mut s = DynState::new(q0, vec![0.0; 4], MassMatrix::Diagonal(vec![0.02, 0.004, 0.002, 0.004])).unwrap();
    let mut scratch = StepScratch::default();
    let mut rng = rand::rngs::StdRng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        for k in 0..4 {
            s.applied[k] = -0.02 * s.qdot[k];
        }
        s.applied[0] += rng.random_range(-0.3..0.3);
        s.applied[3] += rng.random_range(-0.3..0.3);
        step_in_place(&mut s, &set, 1e-3, &mut scratch).unwrap();
        worst = worst.max(set.max_violation(&s.q));
    }
    assert!(worst < 1e-3, "max closure violation {worst}");
}

#[test]
fn dissipative_rollout_never_gains_energy() {
    let diff = DifferentialParams::new(1.0, 1.0).unwrap();
    let imp = ImpedanceParams { deadband: 0.002, midpoint: 0.003, width: 0.004, d_min: 0.2, ..Default::default() };
    let set = ConstraintSet::new(vec![
        Constraint::differential("hip", &diff, [0, 1, 2, 3], [0.0; 4], imp),
        Constraint::gear("g", 0.5, [4, 5], [0.0, 0.0], imp),
    ])
    .unwrap();
    let mut s = DynState::new(
        vec![0.01, -0.02, 0.03, 0.01, 0.02, -0.01],
        vec![0.5, -0.3, 0.2, 0.1, -0.4, 0.6],
        MassMatrix::Diagonal(vec![0.05, 0.05, 0.02, 0.03, 0.04, 0.01]),
    )
    .unwrap();
    let mut scratch = StepScratch::default();
    let mut e = mechanical_energy(&s, &set);
    let e0 = e;
    for i in 0..1000 {
        step_in_place(&mut s, &set, 1e-3, &mut scratch).unwrap();
        let next = mechanical_energy(&s, &set);
        assert!(next <= e + 1e-6, "step {i}: {e} -> {next}");
        e = next;
    }
    assert!(e < e0);
}

#[test]
fn block_and_global_paths_agree_on_the_full_robot() {
    let model = bruce();
    let layout = SimLayout::new(&model, VariantSpec::all()).unwrap();
    let set = layout.constraints().clone();
    let n = layout.num_dofs();
    let mut rng = rand::rngs::StdRng::seed_from_u64(17);
    let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.002..0.05)).collect();
    let q0: Vec<f64> = layout.dof_joints().iter().map(|&j| model.q_nom[j] + rng.random_range(-0.01..0.01)).collect();
    let v0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut diag = DynState::new(q0.clone(), v0.clone(), MassMatrix::Diagonal(masses.clone())).unwrap();
    let dense_m = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(masses));
    let mut dense = DynState::new(q0, v0, MassMatrix::Dense(dense_m)).unwrap();
    let (mut s1, mut s2) = (StepScratch::default(), StepScratch::default());
    for _ in 0..300 {
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
        diag.applied.copy_from_slice(&f);
        dense.applied.copy_from_slice(&f);
        step_in_place(&mut diag, &set, 1e-3, &mut s1).unwrap();
        step_in_place(&mut dense, &set, 1e-3, &mut s2).unwrap();
    }
    for (a, b) in diag.q.iter().zip(&dense.q) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn blow_up_names_the_constraint() {
    let set = ConstraintSet::new(vec![Constraint::gear("ankle_gear", 1.0, [0, 1], [0.0, 0.0], rigid(1e9, 0.0))]).unwrap();
    let mut s = DynState::new(vec![0.0, 0.01], vec![0.0, 0.0], MassMatrix::Diagonal(vec![1.0, 1.0])).unwrap();
    let mut scratch = StepScratch::default();
    let err = (0..10_000)
        .find_map(|_| step_in_place(&mut s, &set, 1e-2, &mut scratch).err())
        .expect("unstable step size diverges");
    match err {
        DynamicsError::NonFinite { constraint, .. } => assert_eq!(constraint, "ankle_gear"),
        other => panic!("{other:?}"),
    }
}
