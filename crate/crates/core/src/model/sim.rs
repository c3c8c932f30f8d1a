//! Generalized-coordinate simulation of a model under one variant.
//!
//! Enabled mechanisms keep every joint as a coordinate and close the loop
//! with a soft constraint. Disabled mechanisms are serialized: passive
//! joints are frozen at their nominal angles or follow the linearized
//! ratio at the nominal configuration, and their inertia, damping and load
//! are reflected onto the remaining coordinates.

use std::sync::Arc;

use super::{Mechanism, MechanismModel, Representation, VariantSpec};
use crate::dynamics::{step_in_place, Constraint, ConstraintSet, DynState, MassMatrix, StepScratch};
use crate::error::{DynamicsError, ModelError};
use crate::four_bar::FourBarConfig;

#[derive(Debug, Clone, PartialEq)]
enum JointSource {
    Dof(usize),
    Frozen(f64),
    /// `base + Σ c_k (q[dof_k] − home_k)`
    Affine { dofs: [usize; 2], coeffs: [f64; 2], home: [f64; 2], base: f64 },
    /// Coupler angle recovered from the input and output cranks.
    Coupler { input: usize, output: usize, l0: f64, l1: f64, l3: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum ActBinding {
    Dof(usize),
    /// Motor angle of a serialized differential, reconstructed from roll and pitch.
    Virtual { dofs: [usize; 2], coeffs: [f64; 2], home_out: [f64; 2], home: f64 },
}

/// Coordinate layout and constraints for one (model, variant) pair; shared by all instances.
#[derive(Debug, Clone, PartialEq)]
pub struct SimLayout {
    pub variant: VariantSpec,
    dof_joint: Vec<usize>,
    joint_source: Vec<JointSource>,
    act: Vec<ActBinding>,
    inertia: Vec<f64>,
    damping: Vec<f64>,
    bias: Vec<f64>,
    q0: Vec<f64>,
    constraints: ConstraintSet,
}

impl SimLayout {
    pub fn new(model: &MechanismModel, variant: VariantSpec) -> Result<Self, ModelError> {
        model.check_variant(&variant)?;
        let nj = model.num_joints();
        let mut b = Builder {
            model,
            dof_joint: Vec::new(),
            source: vec![JointSource::Frozen(f64::NAN); nj],
            inertia: Vec::new(),
            damping: Vec::new(),
            bias: Vec::new(),
            constraints: Vec::new(),
        };
        let mut virtual_act: Vec<Option<ActBinding>> = vec![None; nj];
        let imp = model.impedance;
        for m in &model.mechanisms {
            match m {
                Mechanism::Serial { joint, .. } => {
                    b.dof(*joint);
                }
                Mechanism::Differential { name, params, motors, outputs } => {
                    if variant.enable_differential {
                        let d = [b.dof(motors[0]), b.dof(motors[1]), b.dof(outputs[0]), b.dof(outputs[1])];
                        let nominal = [motors[0], motors[1], outputs[0], outputs[1]].map(|j| model.q_nom[j]);
                        b.constraints.push(Constraint::differential(name, params, d, nominal, imp));
                    } else {
                        let d = [b.dof(outputs[0]), b.dof(outputs[1])];
                        let minv = params.inverse_velocity_matrix();
                        let home_out = [model.q_nom[outputs[0]], model.q_nom[outputs[1]]];
                        for (row, &mj) in motors.iter().enumerate() {
                            let coeffs = [minv[(row, 0)], minv[(row, 1)]];
                            b.source[mj] =
                                JointSource::Affine { dofs: d, coeffs, home: home_out, base: model.q_nom[mj] };
                            virtual_act[mj] = Some(ActBinding::Virtual { dofs: d, coeffs, home_out, home: model.q_nom[mj] });
                            // reflect motor inertia, damping and load through q_m = M⁻¹ q_out
                            let jm = &model.joints[mj];
                            for k in 0..2 {
                                b.inertia[d[k]] += coeffs[k] * coeffs[k] * jm.inertia;
                                b.damping[d[k]] += coeffs[k] * coeffs[k] * jm.damping;
                                b.bias[d[k]] += coeffs[k] * jm.bias_torque;
                            }
                        }
                    }
                }
                Mechanism::FiveBar { name, params, joints, .. } => {
                    if variant.enable_fivebar {
                        let d = joints.map(|j| b.dof(j));
                        b.constraints.push(Constraint::five_bar(name, *params, d, imp));
                    } else {
                        b.dof(joints[0]);
                        b.dof(joints[3]);
                        b.source[joints[1]] = JointSource::Frozen(model.q_nom[joints[1]]);
                        b.source[joints[2]] = JointSource::Frozen(model.q_nom[joints[2]]);
                    }
                }
                Mechanism::FourBar { name, params, joints, representation, poly } => {
                    let [l0, l1, _, l3] = params.lengths();
                    if variant.enable_fourbar {
                        match (representation, poly) {
                            (Representation::Polynomial, Some(p)) => {
                                let di = b.dof(joints[0]);
                                let dout = b.dof(joints[2]);
                                b.source[joints[1]] = JointSource::Coupler { input: di, output: dout, l0, l1, l3 };
                                b.constraints.push(Constraint::four_bar_poly(name, p.clone(), [di, dout], imp));
                            }
                            _ => {
                                let d = joints.map(|j| b.dof(j));
                                b.constraints.push(Constraint::four_bar_loop(name, *params, d, imp));
                            }
                        }
                    } else {
                        let di = b.dof(joints[0]);
                        let cfg = FourBarConfig {
                            input: model.q_nom[joints[0]],
                            coupler: model.q_nom[joints[1]],
                            output: model.q_nom[joints[2]],
                        };
                        let slope = params.transmission_ratio(&cfg).map_err(|e| {
                            ModelError::validation(format!("mechanisms.{name}"), format!("cannot linearize at nominal: {e}"))
                        })?;
                        b.source[joints[1]] = JointSource::Frozen(cfg.coupler);
                        b.source[joints[2]] = JointSource::Affine {
                            dofs: [di, di],
                            coeffs: [slope, 0.0],
                            home: [cfg.input, cfg.input],
                            base: cfg.output,
                        };
                        let jo = &model.joints[joints[2]];
                        b.inertia[di] += slope * slope * jo.inertia;
                        b.damping[di] += slope * slope * jo.damping;
                        b.bias[di] += slope * jo.bias_torque;
                    }
                }
            }
        }
        let act = model
            .actuators
            .iter()
            .map(|a| match (&b.source[a.joint], virtual_act[a.joint].take()) {
                (JointSource::Dof(d), _) => Ok(ActBinding::Dof(*d)),
                (_, Some(v)) => Ok(v),
                _ => Err(ModelError::validation("actuators", format!("actuator `{}` lost its coordinate", a.name))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let constraints = ConstraintSet::new(b.constraints).map_err(|e| ModelError::validation("impedance", e.to_string()))?;
        let q0 = b.dof_joint.iter().map(|&j| model.q_nom[j]).collect();
        Ok(Self {
            variant,
            dof_joint: b.dof_joint,
            joint_source: b.source,
            act,
            inertia: b.inertia,
            damping: b.damping,
            bias: b.bias,
            q0,
            constraints,
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_joint.len()
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    /// Kinematic joint represented by each coordinate.
    pub fn dof_joints(&self) -> &[usize] {
        &self.dof_joint
    }
}

struct Builder<'a> {
    model: &'a MechanismModel,
    dof_joint: Vec<usize>,
    source: Vec<JointSource>,
    inertia: Vec<f64>,
    damping: Vec<f64>,
    bias: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl Builder<'_> {
    fn dof(&mut self, joint: usize) -> usize {
        let d = self.dof_joint.len();
        let j = &self.model.joints[joint];
        self.dof_joint.push(joint);
        self.source[joint] = JointSource::Dof(d);
        self.inertia.push(j.inertia);
        self.damping.push(j.damping);
        self.bias.push(j.bias_torque);
        d
    }
}

/// One simulated robot: shared layout plus its own state and actuator gains.
#[derive(Debug, Clone)]
pub struct Simulator {
    layout: Arc<SimLayout>,
    pub state: DynState,
    kp: Vec<f64>,
    kd: Vec<f64>,
    torque_limit: Vec<f64>,
    torques: Vec<f64>,
    bias_scale: f64,
    scratch: StepScratch,
    substeps: u64,
}

impl Simulator {
    pub fn new(model: &MechanismModel, variant: VariantSpec) -> Result<Self, ModelError> {
        Ok(Self::from_layout(model, Arc::new(SimLayout::new(model, variant)?)))
    }

    pub fn from_layout(model: &MechanismModel, layout: Arc<SimLayout>) -> Self {
        let n = layout.num_dofs();
        let state = DynState::new(layout.q0.clone(), vec![0.0; n], MassMatrix::Diagonal(layout.inertia.clone()))
            .expect("layout inertias are validated positive");
        Self {
            state,
            kp: model.actuators.iter().map(|a| a.kp).collect(),
            kd: model.actuators.iter().map(|a| a.kd).collect(),
            torque_limit: model.actuators.iter().map(|a| a.torque_limit).collect(),
            torques: vec![0.0; model.num_actuators()],
            bias_scale: 1.0,
            scratch: StepScratch::default(),
            substeps: 0,
            layout,
        }
    }

    pub fn layout(&self) -> &Arc<SimLayout> {
        &self.layout
    }

    /// Back to the nominal configuration at rest; gains and scales are kept.
    pub fn reset(&mut self) {
        self.state.q.copy_from_slice(&self.layout.q0);
        self.state.qdot.iter_mut().for_each(|v| *v = 0.0);
        self.torques.iter_mut().for_each(|t| *t = 0.0);
        self.substeps = 0;
    }

    /// Scale every inertia and the load torques (mass randomization).
    pub fn set_mass_scale(&mut self, scale: f64) {
        self.state.mass = MassMatrix::Diagonal(self.layout.inertia.iter().map(|m| m * scale).collect());
        self.bias_scale = scale;
    }

    pub fn set_kp(&mut self, kp: &[f64]) {
        self.kp.copy_from_slice(kp);
    }

    pub fn kp(&self) -> &[f64] {
        &self.kp
    }

    pub fn num_actuators(&self) -> usize {
        self.kp.len()
    }

    /// Torques of the last substep, one per actuator.
    pub fn actuator_torques(&self) -> &[f64] {
        &self.torques
    }

    pub fn substeps(&self) -> u64 {
        self.substeps
    }

    fn actuator_state(&self, k: usize) -> (f64, f64) {
        let (q, v) = (&self.state.q, &self.state.qdot);
        match &self.layout.act[k] {
            ActBinding::Dof(d) => (q[*d], v[*d]),
            ActBinding::Virtual { dofs, coeffs, home_out, home } => (
                home + coeffs[0] * (q[dofs[0]] - home_out[0]) + coeffs[1] * (q[dofs[1]] - home_out[1]),
                coeffs[0] * v[dofs[0]] + coeffs[1] * v[dofs[1]],
            ),
        }
    }

    pub fn actuator_positions(&self, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.actuator_state(k).0;
        }
    }

    pub fn actuator_velocities(&self, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.actuator_state(k).1;
        }
    }

    /// Full kinematic joint vector for the current state.
    pub fn joint_positions(&self, out: &mut [f64]) {
        let q = &self.state.q;
        for (o, src) in out.iter_mut().zip(&self.layout.joint_source) {
            *o = match src {
                JointSource::Dof(d) => q[*d],
                JointSource::Frozen(v) => *v,
                JointSource::Affine { dofs, coeffs, home, base } => {
                    base + coeffs[0] * (q[dofs[0]] - home[0]) + coeffs[1] * (q[dofs[1]] - home[1])
                }
                JointSource::Coupler { input, output, l0, l1, l3 } => {
                    let (si, ci) = q[*input].sin_cos();
                    let (so, co) = q[*output].sin_cos();
                    (l3 * so - l1 * si).atan2(l0 + l3 * co - l1 * ci)
                }
            };
        }
    }

    /// Advance `n` substeps of `dt` while tracking actuator position targets.
    pub fn step(&mut self, targets: &[f64], dt: f64, n: usize) -> Result<(), DynamicsError> {
        if targets.len() != self.kp.len() {
            return Err(DynamicsError::Invalid(format!(
                "expected {} actuator targets, got {}",
                self.kp.len(),
                targets.len()
            )));
        }
        for _ in 0..n {
            for k in 0..self.kp.len() {
                let (q, v) = self.actuator_state(k);
                let lim = self.torque_limit[k];
                self.torques[k] = (self.kp[k] * (targets[k] - q) - self.kd[k] * v).clamp(-lim, lim);
            }
            let layout = &*self.layout;
            for i in 0..layout.num_dofs() {
                self.state.applied[i] = self.bias_scale * layout.bias[i] - layout.damping[i] * self.state.qdot[i];
            }
            for (k, b) in layout.act.iter().enumerate() {
                match b {
                    ActBinding::Dof(d) => self.state.applied[*d] += self.torques[k],
                    ActBinding::Virtual { dofs, coeffs, .. } => {
                        self.state.applied[dofs[0]] += coeffs[0] * self.torques[k];
                        self.state.applied[dofs[1]] += coeffs[1] * self.torques[k];
                    }
                }
            }
            step_in_place(&mut self.state, &layout.constraints, dt, &mut self.scratch).map_err(|e| match e {
                DynamicsError::NonFinite { constraint, .. } => {
                    DynamicsError::NonFinite { constraint, substep: self.substeps }
                }
                other => other,
            })?;
            self.substeps += 1;
        }
        Ok(())
    }

    pub fn constraint_residuals(&self) -> Vec<f64> {
        self.layout.constraints.residuals(&self.state.q)
    }

    /// FNV-1a over the bit patterns of positions and velocities.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in self.state.q.iter().chain(&self.state.qdot) {
            for byte in x.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}
