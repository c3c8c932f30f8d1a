//! Soft equality-constraint dynamics.
//!
//! Each constraint row with violation `r` and violation rate `v` is driven
//! toward the constrained acceleration
//!
//! ```text
//! a_c1 = (1 − D(r))·a_c0 − D(r)·(b_v·v + k_v·r)
//! ```
//!
//! where `a_c0` is the row's unconstrained acceleration and `D(r)` the
//! impedance. Constraint-space accelerations are mapped back to the joints
//! through the `M⁻¹Jᵀ` projection, which fixes the units of `k_v` (1/s²)
//! and `b_v` (1/s) independently of the joint inertias. Integration is
//! semi-implicit Euler: velocities first, then positions with the new
//! velocities.

mod backlash;

pub use backlash::{backlash_probe, BacklashReport, BacklashRig};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::differential::DifferentialParams;
use crate::error::DynamicsError;
use crate::five_bar::{FiveBarConfig, FiveBarParams};
use crate::four_bar::{FourBarConfig, FourBarParams, PolyRatioModel};

pub const MAX_ROWS: usize = 3;
pub const MAX_DOFS: usize = 4;

/// Constraint impedance and spring-damper gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceParams {
    /// `k_v`, 1/s².
    pub stiffness: f64,
    /// `b_v`, 1/s.
    pub damping: f64,
    /// Half-width `ε_q` of the low-impedance band, constraint units.
    #[serde(default)]
    pub deadband: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Transition width beyond `midpoint`.
    pub width: f64,
    /// The transition spans `[deadband, midpoint + width]`.
    #[serde(default)]
    pub midpoint: f64,
}

impl Default for ImpedanceParams {
    fn default() -> Self {
        Self { stiffness: 1e4, damping: 200.0, deadband: 0.0, d_min: 0.9, d_max: 0.95, width: 1e-3, midpoint: 0.0 }
    }
}

impl ImpedanceParams {
    /// Low impedance inside `±deadband`, stiff outside: models free play.
    pub fn backlash(deadband: f64) -> Self {
        Self { deadband, midpoint: deadband, d_min: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.stiffness, self.damping, self.deadband, self.d_min, self.d_max, self.width, self.midpoint]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err("impedance parameters must be finite".into());
        }
        if !(0.0 <= self.d_min && self.d_min <= self.d_max && self.d_max <= 1.0) {
            return Err(format!("need 0 <= d_min <= d_max <= 1, got d_min={} d_max={}", self.d_min, self.d_max));
        }
        if self.stiffness < 0.0 || self.damping < 0.0 {
            return Err("stiffness and damping must be >= 0".into());
        }
        if self.deadband < 0.0 {
            return Err("deadband must be >= 0".into());
        }
        if self.width <= 0.0 {
            return Err("width must be > 0".into());
        }
        if self.midpoint < self.deadband {
            return Err("midpoint must be >= deadband".into());
        }
        Ok(())
    }

    fn transition_end(&self) -> f64 {
        self.midpoint.max(self.deadband) + self.width
    }

    /// `D(r)`: `d_min` on the deadband plateau, a quintic smoothstep up to
    /// `d_max` across the transition, `d_max` beyond. C¹ and even in `r`.
    pub fn impedance(&self, r: f64) -> f64 {
        let s = r.abs();
        if s <= self.deadband {
            return self.d_min;
        }
        let end = self.transition_end();
        let x = (s - self.deadband) / (end - self.deadband);
        if x >= 1.0 {
            return self.d_max;
        }
        let smooth = x * x * x * (x * (6.0 * x - 15.0) + 10.0);
        self.d_min + (self.d_max - self.d_min) * smooth
    }

    /// `k_v ∫₀^|r| D(s)·s ds`, the potential of the impedance-scaled spring.
    pub fn potential(&self, r: f64) -> f64 {
        let s = r.abs();
        let eps = self.deadband;
        let end = self.transition_end();
        let mut acc = 0.5 * self.d_min * s.min(eps).powi(2);
        if s > eps {
            // D(s)·s is a degree-6 polynomial on the transition; 4-point Gauss-Legendre is exact
            let (a, b) = (eps, s.min(end));
            const NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
            const WEIGHTS: [f64; 4] = [0.347_854_845_137_453_8, 0.652_145_154_862_546_2, 0.652_145_154_862_546_2, 0.347_854_845_137_453_8];
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            acc += half * NODES.iter().zip(WEIGHTS).map(|(n, w)| {
                let x = mid + half * n;
                w * self.impedance(x) * x
            }).sum::<f64>();
        }
        if s > end {
            acc += 0.5 * self.d_max * (s * s - end * end);
        }
        self.stiffness * acc
    }
}

pub fn impedance(params: &ImpedanceParams, r: f64) -> f64 {
    params.impedance(r)
}

/// Solve the impedance relation for the constrained acceleration.
#[inline]
pub fn constraint_accel(params: &ImpedanceParams, r: f64, v: f64, a_c0: f64) -> f64 {
    let d = params.impedance(r);
    (1.0 - d) * a_c0 - d * (params.damping * v + params.stiffness * r)
}

/// Residual semantics of a constraint block.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// `r = C·q + offset`, `C` row-major `rows × dofs`.
    Linear { rows: usize, coeffs: Vec<f64>, offset: Vec<f64> },
    /// Planar five-bar closure over `(theta1, theta2, theta3, theta4)`.
    FiveBar(FiveBarParams),
    /// Four-bar loop over `(input, coupler, output)`.
    FourBarLoop(FourBarParams),
    /// Polynomial input→output map over `(input, output)`.
    FourBarPoly(PolyRatioModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub dofs: Vec<usize>,
    pub kind: ConstraintKind,
    pub impedance: ImpedanceParams,
}

impl Constraint {
    pub fn linear(
        name: &str,
        dofs: Vec<usize>,
        rows: usize,
        coeffs: Vec<f64>,
        offset: Vec<f64>,
        impedance: ImpedanceParams,
    ) -> Self {
        assert_eq!(coeffs.len(), rows * dofs.len());
        assert_eq!(offset.len(), rows);
        Self { name: name.into(), dofs, kind: ConstraintKind::Linear { rows, coeffs, offset }, impedance }
    }

    /// `(roll, pitch) − home = M·((q_L, q_R) − home)` over dofs `[q_L, q_R, roll, pitch]`.
    pub fn differential(
        name: &str,
        params: &DifferentialParams,
        dofs: [usize; 4],
        nominal: [f64; 4],
        impedance: ImpedanceParams,
    ) -> Self {
        let m = params.velocity_matrix();
        let coeffs = vec![-m[(0, 0)], -m[(0, 1)], 1.0, 0.0, -m[(1, 0)], -m[(1, 1)], 0.0, 1.0];
        let offset = (0..2)
            .map(|row| -(0..4).map(|k| coeffs[row * 4 + k] * nominal[k]).sum::<f64>())
            .collect();
        Self::linear(name, dofs.to_vec(), 2, coeffs, offset, impedance)
    }

    /// `q_p − p0 = ratio·(q_a − a0)` over dofs `[actuator, passive]`.
    pub fn gear(name: &str, ratio: f64, dofs: [usize; 2], nominal: [f64; 2], impedance: ImpedanceParams) -> Self {
        let coeffs = vec![-ratio, 1.0];
        let offset = vec![ratio * nominal[0] - nominal[1]];
        Self::linear(name, dofs.to_vec(), 1, coeffs, offset, impedance)
    }

    pub fn five_bar(name: &str, params: FiveBarParams, dofs: [usize; 4], impedance: ImpedanceParams) -> Self {
        Self { name: name.into(), dofs: dofs.to_vec(), kind: ConstraintKind::FiveBar(params), impedance }
    }

    pub fn four_bar_loop(name: &str, params: FourBarParams, dofs: [usize; 3], impedance: ImpedanceParams) -> Self {
        Self { name: name.into(), dofs: dofs.to_vec(), kind: ConstraintKind::FourBarLoop(params), impedance }
    }

    pub fn four_bar_poly(name: &str, model: PolyRatioModel, dofs: [usize; 2], impedance: ImpedanceParams) -> Self {
        Self { name: name.into(), dofs: dofs.to_vec(), kind: ConstraintKind::FourBarPoly(model), impedance }
    }

    pub fn rows(&self) -> usize {
        match &self.kind {
            ConstraintKind::Linear { rows, .. } => *rows,
            ConstraintKind::FiveBar(_) | ConstraintKind::FourBarLoop(_) => 2,
            ConstraintKind::FourBarPoly(_) => 1,
        }
    }

    /// Residual rows and their Jacobian with respect to `self.dofs`.
    pub fn evaluate(&self, q: &[f64], r: &mut [f64; MAX_ROWS], jac: &mut [[f64; MAX_DOFS]; MAX_ROWS]) {
        let d = &self.dofs;
        match &self.kind {
            ConstraintKind::Linear { rows, coeffs, offset } => {
                let n = d.len();
                for row in 0..*rows {
                    let mut acc = offset[row];
                    for k in 0..n {
                        let c = coeffs[row * n + k];
                        acc += c * q[d[k]];
                        jac[row][k] = c;
                    }
                    r[row] = acc;
                }
            }
            ConstraintKind::FiveBar(p) => {
                let cfg = FiveBarConfig::new(q[d[0]], q[d[1]], q[d[2]], q[d[3]]);
                let (res, j) = p.planar_eval(&cfg);
                for row in 0..2 {
                    r[row] = res[row];
                    for k in 0..4 {
                        jac[row][k] = j[(row, k)];
                    }
                }
            }
            ConstraintKind::FourBarLoop(p) => {
                let cfg = FourBarConfig { input: q[d[0]], coupler: q[d[1]], output: q[d[2]] };
                let res = p.loop_residual(&cfg);
                let j = p.loop_jacobian(&cfg);
                for row in 0..2 {
                    r[row] = res[row];
                    for k in 0..3 {
                        jac[row][k] = j[k][row];
                    }
                }
            }
            ConstraintKind::FourBarPoly(m) => {
                let (x, y) = (q[d[0]], q[d[1]]);
                r[0] = m.residual(x, y);
                jac[0][0] = -m.slope_unchecked(x);
                jac[0][1] = 1.0;
            }
        }
    }

    /// Residual rows as a vector (convenience for traces and tests).
    pub fn residual(&self, q: &[f64]) -> Vec<f64> {
        let mut r = [0.0; MAX_ROWS];
        let mut j = [[0.0; MAX_DOFS]; MAX_ROWS];
        self.evaluate(q, &mut r, &mut j);
        r[..self.rows()].to_vec()
    }

    /// Dense `rows × n` Jacobian over the full coordinate vector.
    pub fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let mut r = [0.0; MAX_ROWS];
        let mut j = [[0.0; MAX_DOFS]; MAX_ROWS];
        self.evaluate(q, &mut r, &mut j);
        let mut out = DMatrix::zeros(self.rows(), q.len());
        for row in 0..self.rows() {
            for (k, &dof) in self.dofs.iter().enumerate() {
                out[(row, dof)] += j[row][k];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    constraints: Vec<Constraint>,
    disjoint: bool,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Constraint>) -> Result<Self, DynamicsError> {
        let mut seen = std::collections::HashSet::new();
        let mut disjoint = true;
        for c in &constraints {
            c.impedance.validate().map_err(|e| DynamicsError::Invalid(format!("{}: {e}", c.name)))?;
            if c.dofs.len() > MAX_DOFS || c.rows() > MAX_ROWS {
                return Err(DynamicsError::Invalid(format!("{}: block too large", c.name)));
            }
            for &d in &c.dofs {
                disjoint &= seen.insert(d);
            }
        }
        Ok(Self { constraints, disjoint })
    }

    pub fn empty() -> Self {
        Self { constraints: Vec::new(), disjoint: true }
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn total_rows(&self) -> usize {
        self.constraints.iter().map(Constraint::rows).sum()
    }

    /// All residual rows, concatenated in constraint order.
    pub fn residuals(&self, q: &[f64]) -> Vec<f64> {
        self.constraints.iter().flat_map(|c| c.residual(q)).collect()
    }

    pub fn max_violation(&self, q: &[f64]) -> f64 {
        self.residuals(q).iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MassMatrix {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl MassMatrix {
    pub fn dim(&self) -> usize {
        match self {
            MassMatrix::Diagonal(d) => d.len(),
            MassMatrix::Dense(m) => m.nrows(),
        }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        match self {
            MassMatrix::Diagonal(d) => {
                if d.iter().all(|m| *m > 0.0 && m.is_finite()) {
                    Ok(())
                } else {
                    Err(DynamicsError::Invalid("diagonal masses must be positive".into()))
                }
            }
            MassMatrix::Dense(m) => {
                if m.nrows() != m.ncols() || (m - m.transpose()).amax() > 1e-12 * m.amax() {
                    return Err(DynamicsError::Invalid("mass matrix must be symmetric".into()));
                }
                if m.clone().cholesky().is_none() {
                    return Err(DynamicsError::Invalid("mass matrix must be positive definite".into()));
                }
                Ok(())
            }
        }
    }
}

/// Generalized positions, velocities, mass model and applied forces.
#[derive(Debug, Clone, PartialEq)]
pub struct DynState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub mass: MassMatrix,
    pub applied: Vec<f64>,
}

impl DynState {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>, mass: MassMatrix) -> Result<Self, DynamicsError> {
        if q.len() != qdot.len() || q.len() != mass.dim() {
            return Err(DynamicsError::Invalid(format!(
                "dimension mismatch: q {}, qdot {}, mass {}",
                q.len(),
                qdot.len(),
                mass.dim()
            )));
        }
        mass.validate()?;
        let n = q.len();
        Ok(Self { q, qdot, mass, applied: vec![0.0; n] })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn kinetic_energy(&self) -> f64 {
        match &self.mass {
            MassMatrix::Diagonal(m) => 0.5 * m.iter().zip(&self.qdot).map(|(m, v)| m * v * v).sum::<f64>(),
            MassMatrix::Dense(m) => {
                let v = DVector::from_column_slice(&self.qdot);
                0.5 * v.dot(&(m * &v))
            }
        }
    }
}

/// Reusable buffers for [`step_in_place`].
#[derive(Debug, Clone, Default)]
pub struct StepScratch {
    a0: Vec<f64>,
    a: Vec<f64>,
}

/// One semi-implicit Euler step; the input state is left untouched.
pub fn step(state: &DynState, constraints: &ConstraintSet, dt: f64) -> Result<DynState, DynamicsError> {
    let mut next = state.clone();
    step_in_place(&mut next, constraints, dt, &mut StepScratch::default())?;
    Ok(next)
}

pub fn step_in_place(
    state: &mut DynState,
    constraints: &ConstraintSet,
    dt: f64,
    scratch: &mut StepScratch,
) -> Result<(), DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::Invalid(format!("dt must be positive, got {dt}")));
    }
    let n = state.dim();
    if state.applied.len() != n {
        return Err(DynamicsError::Invalid("applied force width mismatch".into()));
    }
    scratch.a0.resize(n, 0.0);
    scratch.a.resize(n, 0.0);
    match &state.mass {
        MassMatrix::Diagonal(m) if constraints.disjoint => {
            for i in 0..n {
                scratch.a0[i] = state.applied[i] / m[i];
            }
            scratch.a.copy_from_slice(&scratch.a0);
            for c in &constraints.constraints {
                project_block(c, &state.q, &state.qdot, m, &scratch.a0, &mut scratch.a);
            }
        }
        _ => project_global(state, constraints, &mut scratch.a0, &mut scratch.a)?,
    }
    for i in 0..n {
        state.qdot[i] += dt * scratch.a[i];
        state.q[i] += dt * state.qdot[i];
    }
    if state.q.iter().chain(&state.qdot).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(DynamicsError::NonFinite { constraint: blame(constraints, &state.q), substep: 0 })
    }
}

fn blame(constraints: &ConstraintSet, q: &[f64]) -> String {
    let mut worst = ("unconstrained".to_string(), -1.0);
    for c in &constraints.constraints {
        for r in c.residual(q) {
            let score = if r.is_finite() { r.abs() } else { f64::INFINITY };
            if score > worst.1 {
                worst = (c.name.clone(), score);
            }
        }
    }
    worst.0
}

/// Per-block projection, valid when blocks share no coordinates and `M` is diagonal.
fn project_block(c: &Constraint, q: &[f64], qdot: &[f64], m: &[f64], a0: &[f64], a: &mut [f64]) {
    let mut r = [0.0; MAX_ROWS];
    let mut j = [[0.0; MAX_DOFS]; MAX_ROWS];
    c.evaluate(q, &mut r, &mut j);
    match (c.rows(), c.dofs.len()) {
        (1, 2) => project_fixed::<1, 2>(c, &r, &j, qdot, m, a0, a),
        (2, 3) => project_fixed::<2, 3>(c, &r, &j, qdot, m, a0, a),
        (2, 4) => project_fixed::<2, 4>(c, &r, &j, qdot, m, a0, a),
        (1, 1) => project_fixed::<1, 1>(c, &r, &j, qdot, m, a0, a),
        (1, 3) => project_fixed::<1, 3>(c, &r, &j, qdot, m, a0, a),
        (1, 4) => project_fixed::<1, 4>(c, &r, &j, qdot, m, a0, a),
        (2, 2) => project_fixed::<2, 2>(c, &r, &j, qdot, m, a0, a),
        (3, 3) => project_fixed::<3, 3>(c, &r, &j, qdot, m, a0, a),
        (3, 4) => project_fixed::<3, 4>(c, &r, &j, qdot, m, a0, a),
        // more rows than coordinates: the block matrix is singular, nothing to project
        _ => {}
    }
}

#[inline(always)]
fn project_fixed<const R: usize, const D: usize>(
    c: &Constraint,
    r: &[f64; MAX_ROWS],
    j: &[[f64; MAX_DOFS]; MAX_ROWS],
    qdot: &[f64],
    m: &[f64],
    a0: &[f64],
    a: &mut [f64],
) {
    let dofs: [usize; D] = std::array::from_fn(|k| c.dofs[k]);
    let minv: [f64; D] = std::array::from_fn(|k| 1.0 / m[dofs[k]]);
    let v_dof: [f64; D] = std::array::from_fn(|k| qdot[dofs[k]]);
    let a_dof: [f64; D] = std::array::from_fn(|k| a0[dofs[k]]);
    let mut rhs = [0.0; MAX_ROWS];
    let mut mat = [[0.0; MAX_ROWS]; MAX_ROWS];
    for row in 0..R {
        let mut v = 0.0;
        let mut ac0 = 0.0;
        for k in 0..D {
            v += j[row][k] * v_dof[k];
            ac0 += j[row][k] * a_dof[k];
        }
        let ac1 = constraint_accel(&c.impedance, r[row], v, ac0);
        debug_assert!(eq10_holds(&c.impedance, r[row], v, ac0, ac1));
        rhs[row] = ac1 - ac0;
        for col in 0..=row {
            let mut s = 0.0;
            for k in 0..D {
                s += j[row][k] * minv[k] * j[col][k];
            }
            mat[row][col] = s;
            mat[col][row] = s;
        }
    }
    let solved = match R {
        1 => {
            rhs[0] /= mat[0][0];
            mat[0][0] != 0.0
        }
        2 => {
            let det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0];
            let (x, y) = (rhs[0], rhs[1]);
            rhs[0] = (mat[1][1] * x - mat[0][1] * y) / det;
            rhs[1] = (mat[0][0] * y - mat[1][0] * x) / det;
            det.abs() > 1e-300
        }
        _ => solve_small(&mut mat, &mut rhs, R),
    };
    if !solved {
        return;
    }
    for k in 0..D {
        let mut f = 0.0;
        for row in 0..R {
            f += j[row][k] * rhs[row];
        }
        a[dofs[k]] += minv[k] * f;
    }
}

fn project_global(
    state: &DynState,
    constraints: &ConstraintSet,
    a0: &mut [f64],
    a: &mut [f64],
) -> Result<(), DynamicsError> {
    let n = state.dim();
    let minv = match &state.mass {
        MassMatrix::Diagonal(m) => DMatrix::from_diagonal(&DVector::from_iterator(n, m.iter().map(|x| 1.0 / x))),
        MassMatrix::Dense(m) => m
            .clone()
            .cholesky()
            .ok_or_else(|| DynamicsError::Invalid("mass matrix lost definiteness".into()))?
            .inverse(),
    };
    let f = DVector::from_column_slice(&state.applied);
    let acc0 = &minv * f;
    a0.copy_from_slice(acc0.as_slice());
    a.copy_from_slice(acc0.as_slice());
    let rows = constraints.total_rows();
    if rows == 0 {
        return Ok(());
    }
    let mut jac = DMatrix::zeros(rows, n);
    let mut target = DVector::zeros(rows);
    let qdot = DVector::from_column_slice(&state.qdot);
    let mut offset = 0;
    for c in &constraints.constraints {
        let jc = c.jacobian(&state.q);
        let rc = c.residual(&state.q);
        let vc = &jc * &qdot;
        let ac0 = &jc * &acc0;
        for row in 0..c.rows() {
            let ac1 = constraint_accel(&c.impedance, rc[row], vc[row], ac0[row]);
            debug_assert!(eq10_holds(&c.impedance, rc[row], vc[row], ac0[row], ac1));
            target[offset + row] = ac1 - ac0[row];
        }
        jac.view_mut((offset, 0), (c.rows(), n)).copy_from(&jc);
        offset += c.rows();
    }
    let minv_jt = &minv * jac.transpose();
    let amat = &jac * &minv_jt;
    let lambda = match amat.clone().cholesky() {
        Some(ch) => ch.solve(&target),
        None => match amat.svd(true, true).solve(&target, 1e-14) {
            Ok(l) => l,
            Err(_) => return Ok(()),
        },
    };
    let corr = minv_jt * lambda;
    for i in 0..n {
        a[i] += corr[i];
    }
    Ok(())
}

fn eq10_holds(p: &ImpedanceParams, r: f64, v: f64, ac0: f64, ac1: f64) -> bool {
    let d = p.impedance(r);
    let spring = d * (p.damping * v + p.stiffness * r);
    let rhs = (1.0 - d) * ac0;
    let scale = ac1.abs() + spring.abs() + rhs.abs();
    // a diverging step is reported by the caller, not here
    !scale.is_finite() || (ac1 + spring - rhs).abs() <= 1e-9 * (1.0 + scale)
}

/// Gaussian elimination with partial pivoting on the leading `n × n` block.
fn solve_small(a: &mut [[f64; MAX_ROWS]; MAX_ROWS], b: &mut [f64; MAX_ROWS], n: usize) -> bool {
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return false;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * b[k];
        }
        b[col] = s / a[col][col];
    }
    true
}

/// Kinetic energy plus the impedance-spring potential of every row, each
/// scaled by its effective constraint-space mass `1/(J M⁻¹ Jᵀ)_ii`. Exact
/// for constant-Jacobian rows that are decoupled under `M⁻¹`.
pub fn mechanical_energy(state: &DynState, constraints: &ConstraintSet) -> f64 {
    let minv: Vec<f64> = match &state.mass {
        MassMatrix::Diagonal(m) => m.iter().map(|x| 1.0 / x).collect(),
        MassMatrix::Dense(m) => {
            let inv = m.clone().try_inverse().expect("SPD mass matrix");
            (0..state.dim()).map(|i| inv[(i, i)]).collect()
        }
    };
    let mut energy = state.kinetic_energy();
    for c in &constraints.constraints {
        let mut r = [0.0; MAX_ROWS];
        let mut j = [[0.0; MAX_DOFS]; MAX_ROWS];
        c.evaluate(&state.q, &mut r, &mut j);
        for row in 0..c.rows() {
            let a_ii: f64 = c.dofs.iter().enumerate().map(|(k, &d)| j[row][k] * j[row][k] * minv[d]).sum();
            energy += c.impedance.potential(r[row]) / a_ii;
        }
    }
    energy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impedance_plateau_and_saturation() {
        let p = ImpedanceParams::backlash(0.01);
        assert_eq!(p.impedance(0.0), p.d_min);
        assert_eq!(p.impedance(0.009), p.d_min);
        let far = 10.0 * (p.midpoint + p.width);
        assert!((p.impedance(far) - p.d_max).abs() < 1e-6);
        assert_eq!(p.impedance(-0.0105), p.impedance(0.0105));
    }

    #[test]
    fn impedance_is_monotone_and_c1() {
        let p = ImpedanceParams { deadband: 0.002, midpoint: 0.003, width: 0.004, d_min: 0.1, ..Default::default() };
        let mut last = p.impedance(0.0);
        let h = 1e-7;
        for i in 1..2000 {
            let r = i as f64 * 1e-5;
            let d = p.impedance(r);
            assert!(d >= last - 1e-15);
            last = d;
            // one-sided slopes agree everywhere, including the knots
            let left = (p.impedance(r) - p.impedance(r - h)) / h;
            let right = (p.impedance(r + h) - p.impedance(r)) / h;
            assert!((left - right).abs() < 1e-2 * (1.0 + left.abs()), "slope jump at {r}");
        }
    }

    #[test]
    fn constraint_accel_limits() {
        let transparent = ImpedanceParams { d_min: 0.0, d_max: 0.0, ..Default::default() };
        assert_eq!(constraint_accel(&transparent, 0.3, -1.0, 2.5), 2.5);
        let rigid = ImpedanceParams { d_min: 1.0, d_max: 1.0, ..Default::default() };
        let (r, v) = (0.01, -0.2);
        let expect = -(rigid.damping * v + rigid.stiffness * r);
        assert_eq!(constraint_accel(&rigid, r, v, 7.0), expect);
    }

    #[test]
    fn potential_matches_quadrature() {
        let p = ImpedanceParams { deadband: 0.001, midpoint: 0.002, width: 0.003, d_min: 0.2, ..Default::default() };
        for &r in &[0.0005, 0.0015, 0.004, 0.02, -0.003] {
            let n = 200_000;
            let s = f64::abs(r);
            let h = s / n as f64;
            let trap: f64 = (0..n)
                .map(|i| {
                    let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                    0.5 * h * (p.impedance(a) * a + p.impedance(b) * b)
                })
                .sum();
            let expect = p.stiffness * trap;
            assert!((p.potential(r) - expect).abs() < 1e-6 * (1.0 + expect), "r={r}");
        }
    }

    #[test]
    fn validation_catches_bad_params() {
        assert!(ImpedanceParams { d_min: 0.96, ..Default::default() }.validate().is_err());
        assert!(ImpedanceParams { width: 0.0, ..Default::default() }.validate().is_err());
        assert!(ImpedanceParams { deadband: 0.01, midpoint: 0.0, ..Default::default() }.validate().is_err());
        assert!(ImpedanceParams::backlash(0.01).validate().is_ok());
    }

    #[test]
    fn small_solver_matches_nalgebra() {
        let mut a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let mut b = [1.0, -2.0, 0.5];
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let x = m.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        assert!(solve_small(&mut a, &mut b, 3));
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn block_and_global_paths_agree() {
        let fb = FiveBarParams::planar([0.2, 0.06, 0.2, 0.06], 0.0).unwrap();
        let diff = DifferentialParams::new(1.0, 1.3).unwrap();
        let set = ConstraintSet::new(vec![
            Constraint::five_bar("knee", fb, [0, 1, 2, 3], ImpedanceParams::default()),
            Constraint::differential("hip", &diff, [4, 5, 6, 7], [0.0; 4], ImpedanceParams::default()),
        ])
        .unwrap();
        let q = vec![-0.8, -2.3, -0.79, -2.31, 0.1, -0.05, 0.02, 0.07];
        let qdot = vec![0.3, -0.1, 0.2, 0.05, 1.0, -0.4, 0.3, 0.2];
        let masses = vec![0.02, 0.004, 0.005, 0.01, 0.03, 0.03, 0.05, 0.06];
        let mut diag = DynState::new(q.clone(), qdot.clone(), MassMatrix::Diagonal(masses.clone())).unwrap();
        diag.applied = vec![0.5, 0.0, 0.1, -0.2, 0.3, 0.0, -0.1, 0.05];
        let mut dense = DynState::new(
            q,
            qdot,
            MassMatrix::Dense(DMatrix::from_diagonal(&DVector::from_vec(masses))),
        )
        .unwrap();
        dense.applied = diag.applied.clone();
        for _ in 0..200 {
            diag = step(&diag, &set, 1e-3).unwrap();
            dense = step(&dense, &set, 1e-3).unwrap();
        }
        for i in 0..8 {
            assert!((diag.q[i] - dense.q[i]).abs() < 1e-10, "q[{i}]");
            assert!((diag.qdot[i] - dense.qdot[i]).abs() < 1e-8, "qdot[{i}]");
        }
    }

    #[test]
    fn rejects_mismatched_state() {
        assert!(DynState::new(vec![0.0; 2], vec![0.0; 3], MassMatrix::Diagonal(vec![1.0; 2])).is_err());
        assert!(DynState::new(vec![0.0; 2], vec![0.0; 2], MassMatrix::Diagonal(vec![1.0, 0.0])).is_err());
        let s = DynState::new(vec![0.0], vec![0.0], MassMatrix::Diagonal(vec![1.0])).unwrap();
        assert!(step(&s, &ConstraintSet::empty(), 0.0).is_err());
    }
}
