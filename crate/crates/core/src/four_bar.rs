//! Ankle four-bar linkage.
//!
//! Labeling: the ground link `L0` runs from the input pivot `O1 = (0, 0)` to
//! the output pivot `O3 = (L0, 0)`. The actuated crank `L1` turns by
//! `input`, the coupler `L2` by `coupler`, and the output crank `L3` by
//! `output`, all absolute angles from the ground direction. The loop closes
//! when
//!
//! ```text
//! L1·e(input) + L2·e(coupler) = L0·e(0) + L3·e(output)
//! ```
//!
//! Two representations are offered: the exact loop solve, and a polynomial
//! fit of `output` as a function of `input` that is only valid inside its
//! fit domain.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::KinematicsError;
use crate::five_bar::SolverOptions;
use crate::geometry::{polar, polar_deriv};

/// Below this `|denominator|` the transmission ratio is treated as a pole.
pub const RATIO_POLE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourBarParams {
    l0: f64,
    l1: f64,
    l2: f64,
    l3: f64,
    input_limits: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FourBarConfig {
    pub input: f64,
    pub coupler: f64,
    pub output: f64,
}

impl FourBarParams {
    pub fn new(l0: f64, l1: f64, l2: f64, l3: f64, input_limits: (f64, f64)) -> Result<Self, KinematicsError> {
        for (name, l) in [("L0", l0), ("L1", l1), ("L2", l2), ("L3", l3)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(KinematicsError::InvalidArgument(format!("{name} must be positive, got {l}")));
            }
        }
        if !(input_limits.0 <= input_limits.1) || !input_limits.0.is_finite() || !input_limits.1.is_finite() {
            return Err(KinematicsError::InvalidArgument(format!("bad input limits {input_limits:?}")));
        }
        Ok(Self { l0, l1, l2, l3, input_limits })
    }

    pub fn lengths(&self) -> [f64; 4] {
        [self.l0, self.l1, self.l2, self.l3]
    }

    pub fn input_limits(&self) -> (f64, f64) {
        self.input_limits
    }

    pub fn loop_residual(&self, c: &FourBarConfig) -> Vector2<f64> {
        polar(c.input, self.l1) + polar(c.coupler, self.l2) - Vector2::new(self.l0, 0.0) - polar(c.output, self.l3)
    }

    /// Jacobian of [`Self::loop_residual`] with columns (input, coupler, output).
    pub fn loop_jacobian(&self, c: &FourBarConfig) -> [Vector2<f64>; 3] {
        [polar_deriv(c.input, self.l1), polar_deriv(c.coupler, self.l2), -polar_deriv(c.output, self.l3)]
    }

    /// Solve coupler and output for a given input angle, starting near `guess_output`.
    pub fn solve_output(&self, input: f64, guess_output: f64) -> Result<FourBarConfig, KinematicsError> {
        self.solve_output_with(input, guess_output, &SolverOptions::default())
    }

    pub fn solve_output_with(
        &self,
        input: f64,
        guess_output: f64,
        opts: &SolverOptions,
    ) -> Result<FourBarConfig, KinematicsError> {
        let b = polar(input, self.l1);
        let o3 = Vector2::new(self.l0, 0.0);
        let gap = (o3 - b).norm();
        let (reach, min_reach) = (self.l2 + self.l3, (self.l2 - self.l3).abs());
        if gap > reach * (1.0 + 1e-12) || gap < min_reach * (1.0 - 1e-12) {
            return Err(KinematicsError::NoConvergence {
                iterations: 0,
                residual: (gap - reach).max(min_reach - gap),
            });
        }
        // coupler initial guess points from B to the guessed output joint
        let d = o3 + polar(guess_output, self.l3) - b;
        let mut cfg = FourBarConfig { input, coupler: d.y.atan2(d.x), output: guess_output };
        let mut r = self.loop_residual(&cfg);
        let mut norm = r.norm();
        let singular_eps = self.l2 * self.l3 * 1e-10;
        for _ in 0..opts.max_iterations {
            if norm <= opts.tolerance {
                return Ok(self.polish(cfg, norm));
            }
            let [_, jc, jo] = self.loop_jacobian(&cfg);
            let det = jc.x * jo.y - jc.y * jo.x;
            if det.abs() <= singular_eps {
                return Err(KinematicsError::SingularJacobian { metric: det.abs() });
            }
            let dc = -(jo.y * r.x - jo.x * r.y) / det;
            let dout = -(-jc.y * r.x + jc.x * r.y) / det;
            let mut step = 1.0;
            loop {
                let trial = FourBarConfig { input, coupler: cfg.coupler + step * dc, output: cfg.output + step * dout };
                let tr = self.loop_residual(&trial);
                let tn = tr.norm();
                if tn < norm || step < 1e-6 {
                    cfg = trial;
                    r = tr;
                    norm = tn;
                    break;
                }
                step *= 0.5;
            }
        }
        if norm <= opts.tolerance {
            Ok(self.polish(cfg, norm))
        } else {
            Err(KinematicsError::NoConvergence { iterations: opts.max_iterations, residual: norm })
        }
    }

    /// One extra Newton step, kept only if it lowers the residual.
    fn polish(&self, cfg: FourBarConfig, norm: f64) -> FourBarConfig {
        let r = self.loop_residual(&cfg);
        let [_, jc, jo] = self.loop_jacobian(&cfg);
        let det = jc.x * jo.y - jc.y * jo.x;
        if det == 0.0 {
            return cfg;
        }
        let trial = FourBarConfig {
            input: cfg.input,
            coupler: cfg.coupler - (jo.y * r.x - jo.x * r.y) / det,
            output: cfg.output - (-jc.y * r.x + jc.x * r.y) / det,
        };
        if self.loop_residual(&trial).norm() < norm {
            trial
        } else {
            cfg
        }
    }

    /// Velocity transmission ratio `d(output)/d(input)` under the loop constraint:
    ///
    /// `ρ₄ = L1·sin(input − coupler) / (L3·sin(output − coupler))`
    ///
    /// The pole sits where coupler and output crank are collinear. For a
    /// parallelogram (`L1 = L3`, `L2 = L0`) the ratio is the constant `L1/L3`.
    pub fn transmission_ratio(&self, c: &FourBarConfig) -> Result<f64, KinematicsError> {
        let num = self.l1 * (c.input - c.coupler).sin();
        let den = self.l3 * (c.output - c.coupler).sin();
        if den.abs() < RATIO_POLE_EPS {
            return Err(KinematicsError::SingularJacobian { metric: den.abs() });
        }
        Ok(num / den)
    }

    /// Torque transmission ratio, the reciprocal of the velocity ratio.
    pub fn torque_ratio(&self, c: &FourBarConfig) -> Result<f64, KinematicsError> {
        let rho = self.transmission_ratio(c)?;
        if rho.abs() < RATIO_POLE_EPS {
            return Err(KinematicsError::SingularJacobian { metric: rho.abs() });
        }
        Ok(1.0 / rho)
    }

    /// Smallest `|sin|` of the angle between adjacent links; 0 iff some pair is collinear.
    pub fn collinearity_metric(&self, c: &FourBarConfig) -> f64 {
        let angles = [0.0, c.input, c.coupler, c.output];
        // ground → input crank → coupler → output crank → ground
        let pairs = [(0, 1), (1, 2), (2, 3), (3, 0)];
        pairs.iter().map(|&(a, b)| (angles[b] - angles[a]).sin().abs()).fold(f64::INFINITY, f64::min)
    }

    /// Least-squares polynomial of `output` in `(input − x0)` over `domain`,
    /// sampled from the loop solve. `x0` is the domain midpoint.
    pub fn fit_poly_ratio(
        &self,
        degree: usize,
        domain: (f64, f64),
        n_samples: usize,
        guess_output: f64,
    ) -> Result<PolyRatioModel, KinematicsError> {
        if !(domain.0 < domain.1) {
            return Err(KinematicsError::InvalidArgument(format!("empty fit domain {domain:?}")));
        }
        if n_samples <= degree + 1 {
            return Err(KinematicsError::InvalidArgument(format!(
                "need more than {} samples for degree {degree}, got {n_samples}",
                degree + 1
            )));
        }
        let x0 = 0.5 * (domain.0 + domain.1);
        let mid = self.solve_checked(x0, guess_output)?;
        let y0 = mid.output;

        let xs = linspace(domain.0, domain.1, n_samples);
        let ys = self.sweep(&xs, x0, y0)?;

        let mut design = DMatrix::zeros(n_samples, degree + 1);
        for (i, &x) in xs.iter().enumerate() {
            let mut p = 1.0;
            for k in 0..=degree {
                design[(i, k)] = p;
                p *= x - x0;
            }
        }
        let rhs = DVector::from_iterator(n_samples, ys.iter().map(|y| y - y0));
        let coeffs = design
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| KinematicsError::InvalidArgument(format!("least squares failed: {e}")))?;

        let mut model = PolyRatioModel {
            coeffs: coeffs.iter().copied().collect(),
            x0,
            y0,
            fit_domain: domain,
            max_residual: 0.0,
        };
        let fit_residual = xs.iter().zip(&ys).map(|(x, y)| (model.eval_unchecked(*x) - y).abs()).fold(0.0, f64::max);
        // held-out validation on a 10x denser grid, endpoints included
        let dense = linspace(domain.0, domain.1, 10 * n_samples + 1);
        let dense_ys = self.sweep(&dense, x0, y0)?;
        let held_out =
            dense.iter().zip(&dense_ys).map(|(x, y)| (model.eval_unchecked(*x) - y).abs()).fold(0.0, f64::max);
        model.max_residual = fit_residual.max(held_out);
        Ok(model)
    }

    /// `(theta_in, theta_out_loop, theta_out_poly, residual)` on `n` evenly
    /// spaced inputs across the model's fit domain.
    pub fn validation_rows(&self, model: &PolyRatioModel, n: usize) -> Result<Vec<[f64; 4]>, KinematicsError> {
        let xs = linspace(model.fit_domain.0, model.fit_domain.1, n.max(2));
        let ys = self.sweep(&xs, model.x0, model.y0)?;
        Ok(xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let p = model.eval_unchecked(x);
                [x, y, p, p - y]
            })
            .collect())
    }

    fn solve_checked(&self, x: f64, guess: f64) -> Result<FourBarConfig, KinematicsError> {
        let cfg = self.solve_output(x, guess).map_err(|_| KinematicsError::SingularDomain { at: x })?;
        if self.transmission_ratio(&cfg).is_err() || self.collinearity_metric(&cfg) < 1e-6 {
            return Err(KinematicsError::SingularDomain { at: x });
        }
        Ok(cfg)
    }

    /// Warm-started solves outward from `x0` so every sample stays on one branch.
    fn sweep(&self, xs: &[f64], x0: f64, y0: f64) -> Result<Vec<f64>, KinematicsError> {
        let mut ys = vec![0.0; xs.len()];
        let split = xs.partition_point(|&x| x < x0);
        let mut guess = y0;
        for i in split..xs.len() {
            guess = self.solve_checked(xs[i], guess)?.output;
            ys[i] = guess;
        }
        guess = y0;
        for i in (0..split).rev() {
            guess = self.solve_checked(xs[i], guess)?.output;
            ys[i] = guess;
        }
        Ok(ys)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// `output = y0 + Σ a_k (input − x0)^k`, valid on `fit_domain` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyRatioModel {
    pub coeffs: Vec<f64>,
    pub x0: f64,
    pub y0: f64,
    pub fit_domain: (f64, f64),
    /// Largest |poly − loop solve| seen on the fit and held-out samples (rad).
    pub max_residual: f64,
}

impl PolyRatioModel {
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.fit_domain.0.abs().max(self.fit_domain.1.abs()));
        x >= self.fit_domain.0 - slack && x <= self.fit_domain.1 + slack
    }

    pub fn eval(&self, x: f64) -> Result<f64, KinematicsError> {
        if !self.contains(x) {
            return Err(KinematicsError::OutOfDomain { value: x, min: self.fit_domain.0, max: self.fit_domain.1 });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Horner evaluation without the domain check.
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        let dx = x - self.x0;
        self.y0 + self.coeffs.iter().rev().fold(0.0, |acc, a| acc * dx + a)
    }

    /// `d(output)/d(input)` of the polynomial.
    pub fn slope_unchecked(&self, x: f64) -> f64 {
        let dx = x - self.x0;
        let n = self.coeffs.len();
        (1..n).rev().fold(0.0, |acc, k| acc * dx + k as f64 * self.coeffs[k])
    }

    /// Residual `y − y0 − aᵀφ(x − x0)` of the polynomial constraint.
    pub fn residual(&self, x: f64, y: f64) -> f64 {
        y - self.eval_unchecked(x)
    }
}

pub fn eval_poly_ratio(m: &PolyRatioModel, theta_in: f64) -> Result<f64, KinematicsError> {
    m.eval(theta_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn parallelogram() -> FourBarParams {
        FourBarParams::new(0.1, 0.04, 0.1, 0.04, (FRAC_PI_2 - 0.5, FRAC_PI_2 + 0.5)).unwrap()
    }

    #[test]
    fn parallelogram_output_follows_input() {
        let p = parallelogram();
        let mut guess = FRAC_PI_2 - 0.5;
        for i in 0..=100 {
            let x = FRAC_PI_2 - 0.5 + 0.01 * i as f64;
            let c = p.solve_output(x, guess).unwrap();
            assert!((c.output - x).abs() < 1e-12);
            assert!(p.loop_residual(&c).norm() <= 1e-10);
            let rho = p.transmission_ratio(&c).unwrap();
            assert!((rho - 1.0).abs() < 1e-12);
            guess = c.output;
        }
    }

    #[test]
    fn right_angle_parallelogram_metric_is_one() {
        let p = parallelogram();
        let c = p.solve_output(FRAC_PI_2, FRAC_PI_2 + 0.05).unwrap();
        assert!((p.collinearity_metric(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stretched_straight_is_collinear() {
        // L1 + L2 = L0 + L3: fully stretched along the ground at input 0
        let p = FourBarParams::new(0.1, 0.05, 0.09, 0.04, (-1.0, 1.0)).unwrap();
        let c = FourBarConfig { input: 0.0, coupler: 0.0, output: 0.0 };
        assert!(p.loop_residual(&c).norm() < 1e-15);
        assert!(p.collinearity_metric(&c) < 1e-10);
        assert!(p.transmission_ratio(&c).is_err());
        match p.solve_output(0.0, 0.3) {
            Err(KinematicsError::SingularJacobian { .. }) | Err(KinematicsError::NoConvergence { .. }) => {}
            Ok(c) => assert!(p.collinearity_metric(&c) < 1e-4),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn input_outside_assembly_range() {
        let p = FourBarParams::new(0.1, 0.035, 0.1, 0.04, (0.0, 3.0)).unwrap();
        // |O3 − B| ≈ 0.130 at input 2.5: closes with L2 + L3 = 0.14, not with 0.12
        let short = FourBarParams::new(0.1, 0.035, 0.08, 0.04, (0.0, 3.0)).unwrap();
        assert!(p.solve_output(2.5, 2.0).is_ok());
        assert!(matches!(
            short.solve_output(2.5, 2.0),
            Err(KinematicsError::NoConvergence { .. })
        ));
    }

    #[test]
    fn torque_ratio_is_reciprocal() {
        let p = FourBarParams::new(0.1, 0.035, 0.1, 0.04, (1.0, 2.0)).unwrap();
        let c = p.solve_output(FRAC_PI_2, 1.2).unwrap();
        let v = p.transmission_ratio(&c).unwrap();
        let t = p.torque_ratio(&c).unwrap();
        assert!((v * t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poly_eval_at_expansion_point_and_out_of_domain() {
        let m = PolyRatioModel { coeffs: vec![0.0, 2.0, 0.5], x0: 1.0, y0: 3.0, fit_domain: (0.5, 1.5), max_residual: 0.0 };
        assert_eq!(m.eval(1.0).unwrap(), 3.0);
        assert!((m.eval(1.5).unwrap() - (3.0 + 1.0 + 0.125)).abs() < 1e-15);
        assert!((m.slope_unchecked(1.5) - (2.0 + 0.5)).abs() < 1e-15);
        assert!(matches!(m.eval(1.6), Err(KinematicsError::OutOfDomain { .. })));
        assert!(matches!(eval_poly_ratio(&m, 0.0), Err(KinematicsError::OutOfDomain { .. })));
    }

    #[test]
    fn parallelogram_linear_fit_is_exact() {
        let p = parallelogram();
        let m = p.fit_poly_ratio(1, (FRAC_PI_2 - 0.4, FRAC_PI_2 + 0.4), 41, FRAC_PI_2).unwrap();
        assert!(m.coeffs[0].abs() < 1e-10);
        assert!((m.coeffs[1] - 1.0).abs() < 1e-10);
        assert!((m.x0 - m.y0).abs() < 1e-10);
        assert!(m.max_residual < 1e-10);
    }

    #[test]
    fn constant_fit_underfits_by_half_range() {
        let p = FourBarParams::new(0.1, 0.035, 0.1, 0.04, (1.0, 2.0)).unwrap();
        let dom = (FRAC_PI_2 - 0.4, FRAC_PI_2 + 0.4);
        let m = p.fit_poly_ratio(0, dom, 41, 1.2).unwrap();
        let lo = p.solve_output(dom.0, 1.0).unwrap().output;
        let hi = p.solve_output(dom.1, 1.5).unwrap().output;
        assert!(m.max_residual >= 0.5 * (hi - lo).abs() - 1e-12);
    }

    #[test]
    fn fit_rejects_too_few_samples() {
        let p = parallelogram();
        assert!(p.fit_poly_ratio(5, (1.2, 1.8), 6, 1.5).is_err());
    }
}
