#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::Vector2;

use linkforge::env::reward::{FootState, RewardInput, RewardWeights, TermVector};
use linkforge::five_bar::FiveBarParams;
use linkforge::model::{load_model, Mechanism, MechanismModel};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn bruce_path() -> PathBuf {
    repo_root().join("models/bruce.json")
}

pub fn bruce() -> MechanismModel {
    load_model(bruce_path()).expect("bundled model loads")
}

/// Five-bar parameters and joint indices of the named mechanism.
pub fn five_bar(model: &MechanismModel, name: &str) -> (FiveBarParams, [usize; 4]) {
    match model.mechanism(name) {
        Some(Mechanism::FiveBar { params, joints, .. }) => (*params, *joints),
        other => panic!("{name} is not a five-bar: {other:?}"),
    }
}

/// Both intersections of the circles `|x − b| = rb` and `|x − e| = re`, or
/// `None` when they do not meet.
pub fn circle_intersections(b: Vector2<f64>, rb: f64, e: Vector2<f64>, re: f64) -> Option<[Vector2<f64>; 2]> {
    let d = (e - b).norm();
    if d == 0.0 || d > rb + re || d < (rb - re).abs() {
        return None;
    }
    let along = (rb * rb - re * re + d * d) / (2.0 * d);
    let h = (rb * rb - along * along).max(0.0).sqrt();
    let u = (e - b) / d;
    let n = Vector2::new(-u.y, u.x);
    let mid = b + u * along;
    Some([mid + n * h, mid - n * h])
}

/// z-component of `(p − a) × (q − a)`.
pub fn cross(a: Vector2<f64>, p: Vector2<f64>, q: Vector2<f64>) -> f64 {
    (p - a).perp(&(q - a))
}

pub fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    a - t * ((a + std::f64::consts::PI) / t).floor()
}

/// Second implementation of the unweighted reward terms, written from the
/// term definitions without sharing code with the library.
pub fn reward_oracle(s: &RewardInput, w: &RewardWeights) -> TermVector {
    let sq = |x: f64| x * x;
    let speed_cmd = sq(s.command[0]) + sq(s.command[1]) + sq(s.command[2]);
    let eps2 = sq(w.command_epsilon);
    let standing = speed_cmd < eps2;
    let moving = speed_cmd > eps2;

    let lin_err = sq(s.command[0] - s.lin_vel[0]) + sq(s.command[1] - s.lin_vel[1]);
    let tracking_lin = f64::exp(-lin_err / (2.0 * sq(w.sigma_lin_vel)));
    let tracking_ang = f64::exp(-sq(s.command[2] - s.ang_vel[2]) / (2.0 * sq(w.sigma_ang_vel)));
    let ang_vel_xy = -(sq(s.ang_vel[0]) + sq(s.ang_vel[1]));
    let orientation = -(sq(s.projected_gravity[0]) + sq(s.projected_gravity[1]));

    let mut l1 = 0.0;
    let mut l2sq = 0.0;
    for t in s.torques {
        l1 += t.abs();
        l2sq += t * t;
    }
    let torques = -l1 - l2sq.sqrt();

    let mut action_rate = 0.0;
    for i in 0..s.action.len() {
        action_rate -= sq(s.action[i] - s.prev_action[i]);
    }

    let norm3 = |v: [f64; 3]| (sq(v[0]) + sq(v[1]) + sq(v[2])).sqrt();
    let feet: &[FootState] = s.feet;
    let air: f64 = feet.iter().filter(|f| f.first_contact).map(|f| f.air_time - w.air_time_threshold_s).sum();
    let slip: f64 =
        feet.iter().filter(|f| f.contact).map(|f| -(norm3(f.velocity) + norm3(f.angular_velocity))).sum();
    let height_err: f64 = feet.iter().map(|f| sq(f.z - f.z_ref)).sum();

    let mut stand_still = 0.0;
    if standing {
        for (q, d) in s.joint_pos.iter().zip(s.joint_default) {
            stand_still += (q - d).abs();
        }
    }
    [
        tracking_lin,
        tracking_ang,
        ang_vel_xy,
        orientation,
        torques,
        action_rate,
        if moving { air } else { 0.0 },
        slip,
        if moving { f64::exp(-height_err / (2.0 * sq(w.sigma_phase))) } else { 0.0 },
        stand_still,
        if s.done && s.t < s.t_max { -1.0 } else { 0.0 },
    ]
}
