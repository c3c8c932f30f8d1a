//! Leg and robot assembly from a model document.
//!
//! A model is a list of kinematic joints and the mechanisms that own them.
//! Actuators bind to mechanism inputs: a serial joint, the two differential
//! motors, the two five-bar cranks, or the four-bar input crank. Every other
//! joint is passive and follows from closure.

mod schema;
mod sim;

pub use schema::{ActuatorDoc, JointDoc, MechanismDoc, ModelDoc, Representation, VariantSpec, FORMAT_VERSION};
pub use sim::{Simulator, SimLayout};

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use crate::differential::DifferentialParams;
use crate::dynamics::ImpedanceParams;
use crate::error::{KinematicsError, ModelError};
use crate::five_bar::{FiveBarConfig, FiveBarParams};
use crate::four_bar::{FourBarConfig, FourBarParams, PolyRatioModel};
use crate::geometry::Transform3;

pub const FULL_ROBOT_ACTUATORS: usize = 16;
/// Closure tolerance when reading back a kinematic state.
pub const CLOSURE_CHECK_TOL: f64 = 1e-8;
/// How far a supplied nominal passive angle may sit from the solved one.
pub const NOMINAL_REFINE_TOL: f64 = 1e-2;
const POLY_FIT_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub nominal: f64,
    pub limits: (f64, f64),
    pub inertia: f64,
    pub damping: f64,
    pub bias_torque: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actuator {
    pub name: String,
    pub joint: usize,
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MechanismKind {
    Serial,
    Differential,
    FiveBar,
    FourBar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mechanism {
    Serial {
        name: String,
        joint: usize,
    },
    Differential {
        name: String,
        params: DifferentialParams,
        motors: [usize; 2],
        outputs: [usize; 2],
    },
    FiveBar {
        name: String,
        params: FiveBarParams,
        /// theta1..theta4
        joints: [usize; 4],
        foot: Option<String>,
    },
    FourBar {
        name: String,
        params: FourBarParams,
        /// input, coupler, output
        joints: [usize; 3],
        representation: Representation,
        poly: Option<PolyRatioModel>,
    },
}

impl Mechanism {
    pub fn name(&self) -> &str {
        match self {
            Mechanism::Serial { name, .. }
            | Mechanism::Differential { name, .. }
            | Mechanism::FiveBar { name, .. }
            | Mechanism::FourBar { name, .. } => name,
        }
    }

    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::Serial { .. } => MechanismKind::Serial,
            Mechanism::Differential { .. } => MechanismKind::Differential,
            Mechanism::FiveBar { .. } => MechanismKind::FiveBar,
            Mechanism::FourBar { .. } => MechanismKind::FourBar,
        }
    }

    /// Joints that actuators may bind to.
    pub fn inputs(&self) -> Vec<usize> {
        match self {
            Mechanism::Serial { joint, .. } => vec![*joint],
            Mechanism::Differential { motors, .. } => motors.to_vec(),
            Mechanism::FiveBar { joints, .. } => vec![joints[0], joints[3]],
            Mechanism::FourBar { joints, .. } => vec![joints[0]],
        }
    }

    pub fn joints(&self) -> Vec<usize> {
        match self {
            Mechanism::Serial { joint, .. } => vec![*joint],
            Mechanism::Differential { motors, outputs, .. } => vec![motors[0], motors[1], outputs[0], outputs[1]],
            Mechanism::FiveBar { joints, .. } => joints.to_vec(),
            Mechanism::FourBar { joints, .. } => joints.to_vec(),
        }
    }

    /// Largest closure residual of this mechanism at `q` (0 for serial and differential
    /// joints, whose outputs are computed rather than constrained here).
    fn closure_error(&self, q: &[f64], q_nom: &[f64]) -> f64 {
        match self {
            Mechanism::Serial { .. } => 0.0,
            Mechanism::Differential { params, motors, outputs, .. } => {
                let dm = Vector2::new(q[motors[0]] - q_nom[motors[0]], q[motors[1]] - q_nom[motors[1]]);
                let out = params.forward_position(dm);
                let got = Vector2::new(q[outputs[0]] - q_nom[outputs[0]], q[outputs[1]] - q_nom[outputs[1]]);
                (out - got).amax()
            }
            Mechanism::FiveBar { params, joints, .. } => {
                params.closure_residual(&five_bar_config(q, joints)).norm()
            }
            Mechanism::FourBar { params, joints, .. } => {
                params.loop_residual(&four_bar_config(q, joints)).norm()
            }
        }
    }
}

fn five_bar_config(q: &[f64], j: &[usize; 4]) -> FiveBarConfig {
    FiveBarConfig::new(q[j[0]], q[j[1]], q[j[2]], q[j[3]])
}

fn four_bar_config(q: &[f64], j: &[usize; 3]) -> FourBarConfig {
    FourBarConfig { input: q[j[0]], coupler: q[j[1]], output: q[j[2]] }
}

/// Validated, immutable robot description.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismModel {
    pub name: String,
    pub description: String,
    pub full_robot: bool,
    pub joints: Vec<Joint>,
    pub actuators: Vec<Actuator>,
    pub mechanisms: Vec<Mechanism>,
    /// Nominal kinematic configuration, refined to closure at load.
    pub q_nom: Vec<f64>,
    pub variants: VariantSpec,
    pub impedance: ImpedanceParams,
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MechanismModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    MechanismModel::from_json_str(&text)
}

impl MechanismModel {
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    pub fn from_doc(doc: ModelDoc) -> Result<Self, ModelError> {
        if doc.format_version != FORMAT_VERSION {
            return Err(ModelError::validation(
                "format_version",
                format!("unsupported version {} (expected {FORMAT_VERSION})", doc.format_version),
            ));
        }
        let joints = validate_joints(&doc.joints)?;
        let index: HashMap<&str, usize> = doc.joints.iter().enumerate().map(|(i, j)| (j.name.as_str(), i)).collect();
        let mut owner: Vec<Option<usize>> = vec![None; joints.len()];
        let mut mechanisms = Vec::with_capacity(doc.mechanisms.len());
        let mut names = HashMap::new();
        for (mi, m) in doc.mechanisms.iter().enumerate() {
            let path = format!("mechanisms[{mi}]");
            if names.insert(m.name().to_string(), mi).is_some() {
                return Err(ModelError::validation(format!("{path}.name"), format!("duplicate mechanism `{}`", m.name())));
            }
            let mech = build_mechanism(m, &path, &index, &joints)?;
            for j in mech.joints() {
                if let Some(other) = owner[j] {
                    return Err(ModelError::validation(
                        &path,
                        format!("joint `{}` already belongs to mechanism `{}`", joints[j].name, doc.mechanisms[other].name()),
                    ));
                }
                owner[j] = Some(mi);
            }
            mechanisms.push(mech);
        }
        if let Some(j) = owner.iter().position(Option::is_none) {
            return Err(ModelError::validation(
                format!("joints[{j}]"),
                format!("joint `{}` is not part of any mechanism", joints[j].name),
            ));
        }

        let actuators = validate_actuators(&doc.actuators, &index, &mechanisms)?;
        if doc.full_robot && actuators.len() != FULL_ROBOT_ACTUATORS {
            return Err(ModelError::validation(
                "actuators",
                format!("full robot needs {FULL_ROBOT_ACTUATORS} actuators, found {}", actuators.len()),
            ));
        }
        let impedance = doc.impedance.unwrap_or_default();
        impedance.validate().map_err(|e| ModelError::validation("impedance", e))?;

        let mut model = MechanismModel {
            name: doc.name.clone(),
            description: doc.description.clone(),
            full_robot: doc.full_robot,
            q_nom: joints.iter().map(|j| j.nominal).collect(),
            joints,
            actuators,
            mechanisms,
            variants: doc.variants,
            impedance,
        };
        model.refine_nominal(&doc)?;
        model.fit_polynomials(&doc)?;
        Ok(model)
    }

    /// Solve every passive joint from the nominal inputs so closure holds to
    /// solver precision; the supplied angles act as the branch guess.
    fn refine_nominal(&mut self, doc: &ModelDoc) -> Result<(), ModelError> {
        let q_in = self.q_nom.clone();
        let act: Vec<f64> = self.actuators.iter().map(|a| q_in[a.joint]).collect();
        let solved = self.actuator_to_kinematic(&act, Some(&q_in)).map_err(|e| {
            ModelError::validation("joints", format!("nominal configuration cannot be closed: {e}"))
        })?;
        for (i, (a, b)) in q_in.iter().zip(&solved).enumerate() {
            if (a - b).abs() > NOMINAL_REFINE_TOL {
                return Err(ModelError::validation(
                    format!("joints[{i}].nominal_rad"),
                    format!(
                        "nominal `{}` = {a} is {:.3e} rad from the closed configuration ({b})",
                        doc.joints[i].name,
                        (a - b).abs()
                    ),
                ));
            }
            let (lo, hi) = self.joints[i].limits;
            if *b < lo || *b > hi {
                return Err(ModelError::validation(
                    format!("joints[{i}].nominal_rad"),
                    format!("closed nominal {b} lies outside limits [{lo}, {hi}]"),
                ));
            }
        }
        for (j, v) in self.joints.iter_mut().zip(&solved) {
            j.nominal = *v;
        }
        self.q_nom = solved;
        Ok(())
    }

    fn fit_polynomials(&mut self, doc: &ModelDoc) -> Result<(), ModelError> {
        let q_nom = self.q_nom.clone();
        for (mi, (m, d)) in self.mechanisms.iter_mut().zip(&doc.mechanisms).enumerate() {
            if let (Mechanism::FourBar { params, joints, representation, poly, .. }, MechanismDoc::FourBar { degree, .. }) =
                (m, d)
            {
                if *representation != Representation::Polynomial {
                    continue;
                }
                let fitted = params
                    .fit_poly_ratio(*degree, params.input_limits(), POLY_FIT_SAMPLES, q_nom[joints[2]])
                    .map_err(|e| ModelError::validation(format!("mechanisms[{mi}].input_limits_rad"), e.to_string()))?;
                *poly = Some(fitted);
            }
        }
        Ok(())
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn num_actuators(&self) -> usize {
        self.actuators.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn mechanism(&self, name: &str) -> Option<&Mechanism> {
        self.mechanisms.iter().find(|m| m.name() == name)
    }

    pub fn has_kind(&self, kind: MechanismKind) -> bool {
        self.mechanisms.iter().any(|m| m.kind() == kind)
    }

    /// Error when `variant` enables a mechanism type the model does not contain.
    pub fn check_variant(&self, variant: &VariantSpec) -> Result<(), ModelError> {
        for (on, kind, label) in [
            (variant.enable_differential, MechanismKind::Differential, "differential"),
            (variant.enable_fivebar, MechanismKind::FiveBar, "five_bar"),
            (variant.enable_fourbar, MechanismKind::FourBar, "four_bar"),
        ] {
            if on && !self.has_kind(kind) {
                return Err(ModelError::validation(
                    "variants",
                    format!("variant {} enables {label} but the model has none", variant.name()),
                ));
            }
        }
        Ok(())
    }

    /// Nominal actuator positions.
    pub fn nominal_actuators(&self) -> Vec<f64> {
        self.actuators.iter().map(|a| self.q_nom[a.joint]).collect()
    }

    /// Full kinematic joint vector from actuator positions. Passive joints are
    /// solved per mechanism, warm-started from `guess` (or the nominal).
    pub fn actuator_to_kinematic(&self, q_act: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>, KinematicsError> {
        if q_act.len() != self.actuators.len() {
            return Err(KinematicsError::InvalidArgument(format!(
                "expected {} actuator positions, got {}",
                self.actuators.len(),
                q_act.len()
            )));
        }
        let mut q = match guess {
            Some(g) if g.len() == self.joints.len() => g.to_vec(),
            Some(g) => {
                return Err(KinematicsError::InvalidArgument(format!(
                    "guess has {} joints, model has {}",
                    g.len(),
                    self.joints.len()
                )))
            }
            None => self.q_nom.clone(),
        };
        for (a, v) in self.actuators.iter().zip(q_act) {
            let (lo, hi) = self.joints[a.joint].limits;
            if !(v.is_finite() && *v >= lo && *v <= hi) {
                return Err(KinematicsError::OutOfDomain { value: *v, min: lo, max: hi }.in_mechanism(&a.name));
            }
            q[a.joint] = *v;
        }
        for m in &self.mechanisms {
            match m {
                Mechanism::Serial { .. } => {}
                Mechanism::Differential { params, motors, outputs, .. } => {
                    let dm = Vector2::new(q[motors[0]] - self.q_nom[motors[0]], q[motors[1]] - self.q_nom[motors[1]]);
                    let out = params.forward_position(dm);
                    q[outputs[0]] = self.q_nom[outputs[0]] + out.x;
                    q[outputs[1]] = self.q_nom[outputs[1]] + out.y;
                }
                Mechanism::FiveBar { name, params, joints, .. } => {
                    let cfg = params
                        .solve_passive(q[joints[0]], q[joints[3]], (q[joints[1]], q[joints[2]]))
                        .map_err(|e| e.in_mechanism(name))?;
                    q[joints[1]] = cfg.theta2;
                    q[joints[2]] = cfg.theta3;
                }
                Mechanism::FourBar { name, params, joints, .. } => {
                    let cfg = params.solve_output(q[joints[0]], q[joints[2]]).map_err(|e| e.in_mechanism(name))?;
                    q[joints[1]] = cfg.coupler;
                    q[joints[2]] = cfg.output;
                }
            }
        }
        Ok(q)
    }

    /// Actuator positions that reproduce `q_kin`. Closed loops must already
    /// be assembled; differential motors follow from roll and pitch.
    pub fn kinematic_to_actuator(&self, q_kin: &[f64]) -> Result<Vec<f64>, KinematicsError> {
        if q_kin.len() != self.joints.len() {
            return Err(KinematicsError::InvalidArgument(format!(
                "expected {} joint positions, got {}",
                self.joints.len(),
                q_kin.len()
            )));
        }
        let mut q = q_kin.to_vec();
        for m in &self.mechanisms {
            match m {
                Mechanism::Differential { params, motors, outputs, .. } => {
                    let dout =
                        Vector2::new(q[outputs[0]] - self.q_nom[outputs[0]], q[outputs[1]] - self.q_nom[outputs[1]]);
                    let dm = params.inverse_position(dout);
                    q[motors[0]] = self.q_nom[motors[0]] + dm.x;
                    q[motors[1]] = self.q_nom[motors[1]] + dm.y;
                }
                Mechanism::FiveBar { name, .. } | Mechanism::FourBar { name, .. } => {
                    let err = m.closure_error(&q, &self.q_nom);
                    if !(err <= CLOSURE_CHECK_TOL) {
                        return Err(KinematicsError::Unreachable {
                            reason: format!("closure residual {err:.3e} exceeds {CLOSURE_CHECK_TOL:.0e}"),
                        }
                        .in_mechanism(name));
                    }
                }
                Mechanism::Serial { .. } => {}
            }
        }
        Ok(self.actuators.iter().map(|a| q[a.joint]).collect())
    }

    /// Largest closure residual over all mechanisms.
    pub fn max_closure_residual(&self, q_kin: &[f64]) -> f64 {
        self.mechanisms.iter().map(|m| m.closure_error(q_kin, &self.q_nom)).fold(0.0, f64::max)
    }

    /// Per-mechanism closure residuals, in model order.
    pub fn closure_residuals(&self, q_kin: &[f64]) -> Vec<(String, f64)> {
        self.mechanisms.iter().map(|m| (m.name().to_string(), m.closure_error(q_kin, &self.q_nom))).collect()
    }

    /// Five-bar endpoints tagged as feet, as `(label, mechanism index)`.
    pub fn feet(&self) -> Vec<(String, usize)> {
        self.mechanisms
            .iter()
            .enumerate()
            .filter_map(|(i, m)| match m {
                Mechanism::FiveBar { foot: Some(label), .. } => Some((label.clone(), i)),
                _ => None,
            })
            .collect()
    }

    /// Lifted endpoint of a five-bar mechanism at `q_kin`.
    pub fn five_bar_endpoint(&self, mechanism: usize, q_kin: &[f64]) -> Option<Vector3<f64>> {
        match &self.mechanisms[mechanism] {
            Mechanism::FiveBar { params, joints, .. } => {
                Some(params.chain_endpoint_c(q_kin[joints[0]], q_kin[joints[1]]))
            }
            _ => None,
        }
    }
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

fn validate_joints(docs: &[JointDoc]) -> Result<Vec<Joint>, ModelError> {
    if docs.is_empty() {
        return Err(ModelError::validation("joints", "model has no joints"));
    }
    let mut seen = HashMap::new();
    let mut out = Vec::with_capacity(docs.len());
    for (i, j) in docs.iter().enumerate() {
        let path = format!("joints[{i}]");
        if j.name.is_empty() {
            return Err(ModelError::validation(format!("{path}.name"), "empty joint name"));
        }
        if seen.insert(j.name.as_str(), i).is_some() {
            return Err(ModelError::validation(format!("{path}.name"), format!("duplicate joint `{}`", j.name)));
        }
        let [lo, hi] = j.limits_rad;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ModelError::validation(format!("{path}.limits_rad"), format!("need min < max, got [{lo}, {hi}]")));
        }
        if !j.nominal_rad.is_finite() {
            return Err(ModelError::validation(format!("{path}.nominal_rad"), "not finite"));
        }
        if !(j.inertia_kgm2 > 0.0 && j.inertia_kgm2.is_finite()) {
            return Err(ModelError::validation(format!("{path}.inertia_kgm2"), format!("must be > 0, got {}", j.inertia_kgm2)));
        }
        if !finite_nonneg(j.damping_nms_per_rad) {
            return Err(ModelError::validation(format!("{path}.damping_nms_per_rad"), "must be >= 0"));
        }
        if !j.bias_torque_nm.is_finite() {
            return Err(ModelError::validation(format!("{path}.bias_torque_nm"), "not finite"));
        }
        out.push(Joint {
            name: j.name.clone(),
            nominal: j.nominal_rad,
            limits: (lo, hi),
            inertia: j.inertia_kgm2,
            damping: j.damping_nms_per_rad,
            bias_torque: j.bias_torque_nm,
        });
    }
    Ok(out)
}

fn lookup(index: &HashMap<&str, usize>, name: &str, path: String) -> Result<usize, ModelError> {
    index.get(name).copied().ok_or_else(|| ModelError::validation(path, format!("unknown joint `{name}`")))
}

fn check_lengths(lengths: &[f64; 4], path: &str) -> Result<(), ModelError> {
    for (k, l) in lengths.iter().enumerate() {
        if !(*l > 0.0 && l.is_finite()) {
            return Err(ModelError::validation(format!("{path}.lengths_m[{k}]"), format!("length must be > 0, got {l}")));
        }
    }
    Ok(())
}

fn build_mechanism(
    m: &MechanismDoc,
    path: &str,
    index: &HashMap<&str, usize>,
    joints: &[Joint],
) -> Result<Mechanism, ModelError> {
    Ok(match m {
        MechanismDoc::Serial { name, joint } => {
            Mechanism::Serial { name: name.clone(), joint: lookup(index, joint, format!("{path}.joint"))? }
        }
        MechanismDoc::Differential { name, rho_left, rho_right, motor_left, motor_right, roll, pitch } => {
            let params = DifferentialParams::new(*rho_left, *rho_right)
                .map_err(|e| ModelError::validation(format!("{path}.rho_left"), e.to_string()))?;
            Mechanism::Differential {
                name: name.clone(),
                params,
                motors: [
                    lookup(index, motor_left, format!("{path}.motor_left"))?,
                    lookup(index, motor_right, format!("{path}.motor_right"))?,
                ],
                outputs: [lookup(index, roll, format!("{path}.roll"))?, lookup(index, pitch, format!("{path}.pitch"))?],
            }
        }
        MechanismDoc::FiveBar { name, lengths_m, base_separation_m, plane_rpy_rad, foot, theta1, theta2, theta3, theta4 } => {
            check_lengths(lengths_m, path)?;
            if !finite_nonneg(*base_separation_m) {
                return Err(ModelError::validation(format!("{path}.base_separation_m"), "must be >= 0"));
            }
            let base_a = Transform3::from_rpy_translation(*plane_rpy_rad, Vector3::zeros());
            let base_f = base_a.compose(&Transform3::from_translation(Vector3::new(*base_separation_m, 0.0, 0.0)));
            let params = FiveBarParams::new(*lengths_m, *base_separation_m, base_a, base_f)
                .map_err(|e| ModelError::validation(path, e.to_string()))?;
            Mechanism::FiveBar {
                name: name.clone(),
                params,
                joints: [
                    lookup(index, theta1, format!("{path}.theta1"))?,
                    lookup(index, theta2, format!("{path}.theta2"))?,
                    lookup(index, theta3, format!("{path}.theta3"))?,
                    lookup(index, theta4, format!("{path}.theta4"))?,
                ],
                foot: foot.clone(),
            }
        }
        MechanismDoc::FourBar { name, lengths_m, input, coupler, output, input_limits_rad, representation, degree } => {
            check_lengths(lengths_m, path)?;
            let [lo, hi] = *input_limits_rad;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ModelError::validation(format!("{path}.input_limits_rad"), "need min < max"));
            }
            if *degree > 12 {
                return Err(ModelError::validation(format!("{path}.degree"), "degree above 12 is not supported"));
            }
            let [l0, l1, l2, l3] = *lengths_m;
            let params = FourBarParams::new(l0, l1, l2, l3, (lo, hi))
                .map_err(|e| ModelError::validation(path, e.to_string()))?;
            let input_joint = lookup(index, input, format!("{path}.input"))?;
            let jl = joints[input_joint].limits;
            if lo < jl.0 || hi > jl.1 {
                return Err(ModelError::validation(
                    format!("{path}.input_limits_rad"),
                    format!("[{lo}, {hi}] exceeds the input joint limits [{}, {}]", jl.0, jl.1),
                ));
            }
            Mechanism::FourBar {
                name: name.clone(),
                params,
                joints: [
                    input_joint,
                    lookup(index, coupler, format!("{path}.coupler"))?,
                    lookup(index, output, format!("{path}.output"))?,
                ],
                representation: *representation,
                poly: None,
            }
        }
    })
}

fn validate_actuators(
    docs: &[ActuatorDoc],
    index: &HashMap<&str, usize>,
    mechanisms: &[Mechanism],
) -> Result<Vec<Actuator>, ModelError> {
    let inputs: HashMap<usize, &str> =
        mechanisms.iter().flat_map(|m| m.inputs().into_iter().map(move |j| (j, m.name()))).collect();
    let mut bound: HashMap<usize, usize> = HashMap::new();
    let mut names = HashMap::new();
    let mut out = Vec::with_capacity(docs.len());
    for (i, a) in docs.iter().enumerate() {
        let path = format!("actuators[{i}]");
        if names.insert(a.name.as_str(), i).is_some() {
            return Err(ModelError::validation(format!("{path}.name"), format!("duplicate actuator `{}`", a.name)));
        }
        let joint = lookup(index, &a.joint, format!("{path}.joint"))?;
        if !inputs.contains_key(&joint) {
            return Err(ModelError::validation(
                format!("{path}.joint"),
                format!("`{}` is not an input of any mechanism", a.joint),
            ));
        }
        if let Some(prev) = bound.insert(joint, i) {
            return Err(ModelError::validation(
                format!("{path}.joint"),
                format!("`{}` is already driven by `{}`", a.joint, docs[prev].name),
            ));
        }
        if !(a.kp_nm_per_rad > 0.0 && a.kp_nm_per_rad.is_finite()) {
            return Err(ModelError::validation(format!("{path}.kp_nm_per_rad"), "must be > 0"));
        }
        if !finite_nonneg(a.kd_nms_per_rad) {
            return Err(ModelError::validation(format!("{path}.kd_nms_per_rad"), "must be >= 0"));
        }
        let torque_limit = match a.torque_limit_nm {
            Some(t) if t > 0.0 => t,
            Some(t) => return Err(ModelError::validation(format!("{path}.torque_limit_nm"), format!("must be > 0, got {t}"))),
            None => f64::INFINITY,
        };
        out.push(Actuator { name: a.name.clone(), joint, kp: a.kp_nm_per_rad, kd: a.kd_nms_per_rad, torque_limit });
    }
    let mut unbound: Vec<(usize, &str)> = inputs.iter().filter(|(j, _)| !bound.contains_key(j)).map(|(j, m)| (*j, *m)).collect();
    unbound.sort();
    if let Some((_, mech)) = unbound.first() {
        return Err(ModelError::validation("actuators", format!("an input of mechanism `{mech}` has no actuator")));
    }
    Ok(out)
}
