mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DVector, Vector2, Vector3};
use proptest::prelude::*;

use common::{bruce, circle_intersections, cross, five_bar, fixture, wrap};
use linkforge::differential::{diff_forward_vel, diff_inverse_vel, diff_torque_map, DifferentialParams};
use linkforge::error::KinematicsError;
use linkforge::five_bar::{FiveBarConfig, FiveBarParams};
use linkforge::four_bar::FourBarParams;
use linkforge::geometry::{finite_diff_jacobian, polar, Transform3};
use linkforge::model::{load_model, Mechanism, MechanismModel};

fn knee() -> (FiveBarParams, FiveBarConfig) {
    let model = bruce();
    let (p, j) = five_bar(&model, "knee_l");
    let q = &model.q_nom;
    (p, FiveBarConfig::new(q[j[0]], q[j[1]], q[j[2]], q[j[3]]))
}

fn ankle(model: &MechanismModel) -> FourBarParams {
    match model.mechanism("ankle_l") {
        Some(Mechanism::FourBar { params, .. }) => *params,
        other => panic!("ankle_l: {other:?}"),
    }
}

#[test]
fn bundled_knee_is_coaxial_and_planar() {
    let (p, home) = knee();
    assert_eq!(p.l0(), 0.0);
    assert!(p.is_planar());
    assert!(p.closure_residual(&home).norm() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn five_bar_solution_is_a_circle_intersection(d1 in -0.3f64..0.3, d4 in -0.3f64..0.3) {
        let (p, home) = knee();
        let [l1, l2, l3, l4] = p.lengths();
        let (t1, t4) = (home.theta1 + d1, home.theta4 + d4);
        // both chains share the base point, so everything lives in the A plane
        let b = polar(t1, l1);
        let e = polar(t4, l4);
        let Some(cands) = circle_intersections(b, l2, e, l3) else {
            prop_assert!(p.solve_passive(t1, t4, home.passive()).is_err());
            return Ok(());
        };
        let c_home = polar(home.theta1, l1) + polar(home.theta2, l2);
        let side = cross(polar(home.theta1, l1), polar(home.theta4, l4), c_home).signum();
        let want = if cross(b, e, cands[0]).signum() == side { cands[0] } else { cands[1] };
        prop_assume!((cands[0] - cands[1]).norm() > 1e-3);

        let cfg = p.solve_passive(t1, t4, home.passive()).unwrap();
        prop_assert!(p.closure_residual(&cfg).norm() <= 1e-10);
        let theta2 = (want - b).y.atan2((want - b).x);
        let theta3 = (want - e).y.atan2((want - e).x);
        prop_assert!(wrap(cfg.theta2 - theta2).abs() < 1e-8, "theta2 {} vs {}", cfg.theta2, theta2);
        prop_assert!(wrap(cfg.theta3 - theta3).abs() < 1e-8, "theta3 {} vs {}", cfg.theta3, theta3);
    }

    #[test]
    fn differential_round_trip_and_power(
        rl in 0.2f64..5.0, rr in 0.2f64..5.0,
        a in -3.0f64..3.0, b in -3.0f64..3.0,
        ta in -10.0f64..10.0, tb in -10.0f64..10.0,
    ) {
        let p = DifferentialParams::new(rl, rr).unwrap();
        let qa = Vector2::new(a, b);
        let back = diff_inverse_vel(&p, diff_forward_vel(&p, qa));
        prop_assert!((back - qa).amax() <= 1e-12);
        let tau_out = Vector2::new(ta, tb);
        let p_out = tau_out.dot(&diff_forward_vel(&p, qa));
        let p_act = diff_torque_map(&p, tau_out).dot(&qa);
        prop_assert!((p_out - p_act).abs() <= 1e-12 * (1.0 + p_out.abs()));
        prop_assert!((p.inverse_torque_map(diff_torque_map(&p, tau_out)) - tau_out).amax() <= 1e-12);
    }

    #[test]
    fn four_bar_solve_closes_the_loop(x in 1.1707963267948966f64..1.9707963267948965) {
        let model = bruce();
        let p = ankle(&model);
        let j = match model.mechanism("ankle_l") {
            Some(Mechanism::FourBar { joints, .. }) => *joints,
            _ => unreachable!(),
        };
        let cfg = p.solve_output(x, model.q_nom[j[2]]).unwrap();
        prop_assert!(p.loop_residual(&cfg).norm() <= 1e-10);
    }
}

#[test]
fn differential_hand_values() {
    let p = DifferentialParams::new(2.0, 3.0).unwrap();
    let out = diff_forward_vel(&p, Vector2::new(1.0, 1.0));
    assert!((out - Vector2::new(1.0, -0.2)).amax() < 1e-15);
    let back = diff_inverse_vel(&p, Vector2::new(1.0, -0.2));
    assert!((back - Vector2::new(1.0, 1.0)).amax() < 1e-15);
    let tau = diff_torque_map(&p, Vector2::new(0.0, 1.0));
    assert!((tau - Vector2::new(0.4, -0.6)).amax() < 1e-15);
}

#[test]
fn unreachable_five_bar_pair_is_rejected() {
    let p = FiveBarParams::planar([0.1, 0.1, 0.1, 0.1], 0.1).unwrap();
    // cranks pointing apart leave the passive pair too short: gap 0.3 > 0.2
    let (t1, t4) = (PI, 0.0);
    let gap = (polar(t4, 0.1) + Vector2::new(0.1, 0.0) - polar(t1, 0.1)).norm();
    assert!(gap > 0.2);
    match p.solve_passive(t1, t4, (1.2, 1.9)) {
        Err(KinematicsError::NoConvergence { .. }) | Err(KinematicsError::SingularJacobian { .. }) => {}
        other => panic!("expected a solver error, got {other:?}"),
    }
}

#[test]
fn collinear_passive_links_are_flagged() {
    let p = FiveBarParams::planar([0.1, 0.1, 0.1, 0.1], 0.1).unwrap();
    let c = FiveBarConfig::new(FRAC_PI_2, 0.3, 0.3, FRAC_PI_2);
    assert!(p.singularity_metric(&c) < 1e-8);
    assert!(p.is_near_singular(&c));
    assert!(matches!(p.endpoint_jacobian(&c), Err(KinematicsError::SingularJacobian { .. })));
}

#[test]
fn closure_residual_jacobians_match_central_differences_off_plane() {
    // tilted, offset bases exercise the full 3D residual
    let a = Transform3::from_rpy_translation([0.3, -0.2, 0.5], Vector3::new(0.01, 0.02, -0.03));
    let off = a.apply_vector(&Vector3::new(0.05, 0.0, 0.0));
    let f = Transform3 { translation: a.translation + off, ..a };
    let p = FiveBarParams::new([0.1, 0.12, 0.12, 0.1], 0.05, a, f).unwrap();
    let c = FiveBarConfig::new(1.9, 0.8, 2.2, 1.3);
    let x = DVector::from_vec(vec![c.theta1, c.theta2, c.theta3, c.theta4]);
    let fd = finite_diff_jacobian(
        |v: &DVector<f64>| {
            let r = p.closure_residual(&FiveBarConfig::new(v[0], v[1], v[2], v[3]));
            DVector::from_column_slice(r.as_slice())
        },
        &x,
        1e-6,
    )
    .unwrap();
    let jp = p.passive_jacobian(&c);
    let ja = p.actuated_jacobian(&c);
    for row in 0..3 {
        assert!((fd[(row, 0)] - ja[(row, 0)]).abs() < 1e-6);
        assert!((fd[(row, 1)] - jp[(row, 0)]).abs() < 1e-6);
        assert!((fd[(row, 2)] - jp[(row, 1)]).abs() < 1e-6);
        assert!((fd[(row, 3)] - ja[(row, 1)]).abs() < 1e-6);
    }
}

#[test]
fn parallelogram_fit_is_the_identity_map() {
    let model = load_model(fixture("parallelogram.json")).unwrap();
    let (p, poly) = match model.mechanism("para") {
        Some(Mechanism::FourBar { params, poly: Some(poly), .. }) => (*params, poly.clone()),
        other => panic!("{other:?}"),
    };
    assert_eq!(poly.degree(), 1);
    assert!((poly.coeffs[1] - 1.0).abs() < 1e-10);
    assert!(poly.coeffs[0].abs() < 1e-10);
    assert!((poly.x0 - poly.y0).abs() < 1e-10);
    let (lo, hi) = poly.fit_domain;
    for i in 0..=50 {
        let x = lo + (hi - lo) * i as f64 / 50.0;
        let exact = p.solve_output(x, x).unwrap();
        assert!((exact.output - x).abs() < 1e-10);
        assert!((poly.eval(x).unwrap() - exact.output).abs() < 1e-10);
    }
    assert!(poly.eval(hi + 0.1).is_err());
}

#[test]
fn bundled_ankle_poly_tracks_loop_at_domain_edges() {
    let model = bruce();
    let p = ankle(&model);
    let poly = match model.mechanism("ankle_l") {
        Some(Mechanism::FourBar { poly: Some(poly), .. }) => poly.clone(),
        other => panic!("{other:?}"),
    };
    let rows = p.validation_rows(&poly, 801).unwrap();
    let worst = rows.iter().map(|r| r[3].abs()).fold(0.0, f64::max);
    assert!(worst <= poly.max_residual * (1.0 + 1e-9) + 1e-15, "{worst} vs {}", poly.max_residual);
    for r in [rows.first().unwrap(), rows.last().unwrap()] {
        assert!((r[2] - r[1]).abs() <= poly.max_residual + 1e-15);
    }
}

#[test]
fn fit_domain_through_a_pole_is_singular() {
    let model = bruce();
    let p = ankle(&model);
    let err = p.fit_poly_ratio(5, (0.0, 3.1), 200, FRAC_PI_2).unwrap_err();
    assert!(matches!(err, KinematicsError::SingularDomain { .. }), "{err:?}");
}

#[test]
fn actuator_kinematic_round_trip() {
    use rand::{Rng, SeedableRng};
    let model = bruce();
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let nominal = model.nominal_actuators();
    let mut done = 0;
    for _ in 0..2000 {
        if done == 500 {
            break;
        }
        let q_act: Vec<f64> = model
            .actuators
            .iter()
            .zip(&nominal)
            .map(|(a, q0)| {
                let (lo, hi) = model.joints[a.joint].limits;
                (q0 + rng.random_range(-0.2..0.2)).clamp(lo, hi)
            })
            .collect();
        let Ok(q_kin) = model.actuator_to_kinematic(&q_act, None) else { continue };
        assert!(model.max_closure_residual(&q_kin) <= 1e-10);
        let back = model.kinematic_to_actuator(&q_kin).unwrap();
        for (x, y) in back.iter().zip(&q_act) {
            assert!((x - y).abs() <= 1e-9);
        }
        done += 1;
    }
    assert_eq!(done, 500);
}

#[test]
fn nominal_actuators_map_to_nominal_joints() {
    let model = bruce();
    let q = model.actuator_to_kinematic(&model.nominal_actuators(), None).unwrap();
    for (a, b) in q.iter().zip(&model.q_nom) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn equal_differential_offsets_are_pure_roll() {
    let model = load_model(fixture("differential_only.json")).unwrap();
    let (motors, outputs) = match model.mechanism("wrist") {
        Some(Mechanism::Differential { motors, outputs, .. }) => (*motors, *outputs),
        other => panic!("{other:?}"),
    };
    let w = 0.07;
    let mut q_act = model.nominal_actuators();
    for (k, a) in model.actuators.iter().enumerate() {
        if motors.contains(&a.joint) {
            q_act[k] += w;
        }
    }
    let q = model.actuator_to_kinematic(&q_act, None).unwrap();
    assert!((q[outputs[0]] - model.q_nom[outputs[0]] - w).abs() < 1e-12);
    assert!((q[outputs[1]] - model.q_nom[outputs[1]]).abs() < 1e-12);
}
