//! Second-order Butterworth lowpass and deadband.

use std::f64::consts::{PI, SQRT_2};

use crate::error::EnvError;

/// Biquad coefficients, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Bilinear transform of `1 / (s² + √2 s + 1)` with the cutoff prewarped.
    pub fn butterworth_lowpass(cutoff_hz: f64, sample_hz: f64) -> Result<Self, EnvError> {
        if !(cutoff_hz > 0.0 && sample_hz > 0.0 && cutoff_hz < 0.5 * sample_hz) {
            return Err(EnvError::Config(format!(
                "butterworth cutoff must lie in (0, {}) Hz, got {cutoff_hz}",
                0.5 * sample_hz
            )));
        }
        let k = (PI * cutoff_hz / sample_hz).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Ok(Self { b0, b1: 2.0 * b0, b2: b0, a1: 2.0 * (k2 - 1.0) * norm, a2: (1.0 - SQRT_2 * k + k2) * norm })
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

/// One channel in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Butterworth2 {
    coeffs: Biquad,
    s1: f64,
    s2: f64,
}

impl Butterworth2 {
    pub fn new(cutoff_hz: f64, sample_hz: f64) -> Result<Self, EnvError> {
        Ok(Self::from_coeffs(Biquad::butterworth_lowpass(cutoff_hz, sample_hz)?))
    }

    pub fn from_coeffs(coeffs: Biquad) -> Self {
        Self { coeffs, s1: 0.0, s2: 0.0 }
    }

    pub fn coeffs(&self) -> &Biquad {
        &self.coeffs
    }

    /// Put the filter at rest on a constant input `x`.
    pub fn reset(&mut self, x: f64) {
        let c = &self.coeffs;
        let y = x * c.dc_gain();
        self.s1 = y - c.b0 * x;
        self.s2 = c.b2 * x - c.a2 * y;
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let c = &self.coeffs;
        let y = c.b0 * x + self.s1;
        self.s1 = c.b1 * x - c.a1 * y + self.s2;
        self.s2 = c.b2 * x - c.a2 * y;
        y
    }
}

/// Filter a whole signal from rest.
pub fn butterworth2(signal: &[f64], cutoff_hz: f64, sample_hz: f64) -> Result<Vec<f64>, EnvError> {
    let mut f = Butterworth2::new(cutoff_hz, sample_hz)?;
    Ok(signal.iter().map(|&x| f.process(x)).collect())
}

/// Zero inside `±half_width`, shifted toward zero by `half_width` outside.
#[inline]
pub fn deadband(x: f64, half_width: f64) -> f64 {
    if x > half_width {
        x - half_width
    } else if x < -half_width {
        x + half_width
    } else {
        0.0
    }
}

/// Lowpass then deadband on each of `n` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    lowpass: Option<Vec<Butterworth2>>,
    half_width: f64,
}

impl FilterBank {
    pub fn new(n: usize, cutoff_hz: Option<f64>, sample_hz: f64, half_width: f64) -> Result<Self, EnvError> {
        if !(half_width >= 0.0 && half_width.is_finite()) {
            return Err(EnvError::Config(format!("deadband half width must be >= 0, got {half_width}")));
        }
        let lowpass = match cutoff_hz {
            Some(fc) => Some(vec![Butterworth2::new(fc, sample_hz)?; n]),
            None => None,
        };
        Ok(Self { lowpass, half_width })
    }

    pub fn reset(&mut self, values: &[f64]) {
        if let Some(lp) = &mut self.lowpass {
            for (f, &v) in lp.iter_mut().zip(values) {
                f.reset(v);
            }
        }
    }

    pub fn apply(&mut self, values: &mut [f64]) {
        if let Some(lp) = &mut self.lowpass {
            for (f, v) in lp.iter_mut().zip(values.iter_mut()) {
                *v = f.process(*v);
            }
        }
        if self.half_width > 0.0 {
            for v in values.iter_mut() {
                *v = deadband(*v, self.half_width);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_settles() {
        let y = butterworth2(&vec![2.5; 2000], 4.0, 50.0).unwrap();
        assert!((y.last().unwrap() - 2.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_cutoff() {
        assert!(Butterworth2::new(0.0, 50.0).is_err());
        assert!(Butterworth2::new(25.0, 50.0).is_err());
        assert!(Butterworth2::new(30.0, 50.0).is_err());
    }

    #[test]
    fn reset_is_steady_state() {
        let mut f = Butterworth2::new(3.0, 50.0).unwrap();
        f.reset(0.7);
        for _ in 0..10 {
            assert!((f.process(0.7) - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn deadband_convention() {
        assert_eq!(deadband(0.3, 0.0), 0.3);
        assert_eq!(deadband(0.05, 0.1), 0.0);
        assert_eq!(deadband(-0.1, 0.1), 0.0);
        assert!((deadband(0.2, 0.1) - 0.1).abs() < 1e-15);
        assert!((deadband(-0.25, 0.1) + 0.15).abs() < 1e-15);
    }

    #[test]
    fn bank_without_lowpass_is_deadband_only() {
        let mut bank = FilterBank::new(3, None, 50.0, 0.01).unwrap();
        let mut v = [0.005, 0.02, -0.5];
        bank.apply(&mut v);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.01).abs() < 1e-15);
        assert!((v[2] + 0.49).abs() < 1e-15);
    }
}
