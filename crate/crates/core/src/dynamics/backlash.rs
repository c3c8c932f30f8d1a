//! Free-play probe on a one-stage gear.
//!
//! An actuator tracks a slow sinusoid through a PD loop while a lightly
//! damped passive joint is coupled to it by a single gear constraint
//! `r = q_p − ratio·q_a`. Half the peak-to-peak swing of `r` over the last
//! cycle is the measured free play.

use std::f64::consts::TAU;

use super::{step_in_place, Constraint, ConstraintSet, DynState, ImpedanceParams, MassMatrix, StepScratch};
use crate::error::DynamicsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacklashRig {
    pub ratio: f64,
    pub actuator_inertia: f64,
    pub passive_inertia: f64,
    /// Viscous friction on the passive joint, N·m·s/rad.
    pub passive_damping: f64,
    pub amplitude: f64,
    pub period: f64,
    pub kp: f64,
    pub kd: f64,
    pub dt: f64,
    pub cycles: usize,
    pub impedance: ImpedanceParams,
}

impl BacklashRig {
    pub fn new(impedance: ImpedanceParams) -> Self {
        Self {
            ratio: 1.0,
            actuator_inertia: 1.0,
            passive_inertia: 0.01,
            passive_damping: 1e-4,
            amplitude: 0.1,
            period: 40.0,
            kp: 400.0,
            kd: 40.0,
            dt: 1e-3,
            cycles: 2,
            impedance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacklashReport {
    pub free_play: f64,
    pub min_residual: f64,
    pub max_residual: f64,
    pub steps: usize,
}

pub fn backlash_probe(rig: &BacklashRig) -> Result<BacklashReport, DynamicsError> {
    if rig.cycles == 0 || !(rig.period > 0.0) || !(rig.dt > 0.0) {
        return Err(DynamicsError::Invalid("probe needs positive period, dt and at least one cycle".into()));
    }
    let set = ConstraintSet::new(vec![Constraint::gear("gear", rig.ratio, [0, 1], [0.0, 0.0], rig.impedance)])?;
    let mut state = DynState::new(
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        MassMatrix::Diagonal(vec![rig.actuator_inertia, rig.passive_inertia]),
    )?;
    let w = TAU / rig.period;
    let per_cycle = (rig.period / rig.dt).round() as usize;
    let total = per_cycle * rig.cycles;
    let mut scratch = StepScratch::default();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..total {
        let t = i as f64 * rig.dt;
        // reference starts at rest: a·(1 − cos ωt)
        let q_ref = rig.amplitude * (1.0 - (w * t).cos());
        let v_ref = rig.amplitude * w * (w * t).sin();
        let a_ref = rig.amplitude * w * w * (w * t).cos();
        state.applied[0] = rig.kp * (q_ref - state.q[0]) + rig.kd * (v_ref - state.qdot[0]) + rig.actuator_inertia * a_ref;
        state.applied[1] = -rig.passive_damping * state.qdot[1];
        step_in_place(&mut state, &set, rig.dt, &mut scratch).map_err(|e| match e {
            DynamicsError::NonFinite { constraint, .. } => DynamicsError::NonFinite { constraint, substep: i as u64 },
            other => other,
        })?;
        if i >= total - per_cycle {
            let r = state.q[1] - rig.ratio * state.q[0];
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok(BacklashReport { free_play: 0.5 * (hi - lo), min_residual: lo, max_residual: hi, steps: total })
}
