//! Two-axis quantities in a frame rotating at the grid frequency.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A d/q pair of volts or amps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqVector {
    pub d: f64,
    pub q: f64,
}

impl DqVector {
    pub const ZERO: DqVector = DqVector { d: 0.0, q: 0.0 };

    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    /// Vector with the given amplitude at angle `theta` from the d-axis.
    pub fn from_polar(amplitude: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(amplitude * c, amplitude * s)
    }

    /// 2-norm, `sqrt(d² + q²)`.
    pub fn amplitude(self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn norm_squared(self) -> f64 {
        self.d * self.d + self.q * self.q
    }

    pub fn dot(self, other: DqVector) -> f64 {
        self.d * other.d + self.q * other.q
    }

    /// Counter-clockwise rotation by `phi`.
    pub fn rotate(self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::new(c * self.d - s * self.q, s * self.d + c * self.q)
    }

    /// `[[0, 1], [-1, 0]] · self`, the cross-coupling produced by the rotating frame.
    pub fn cross_coupled(self) -> Self {
        Self::new(self.q, -self.d)
    }

    pub fn is_finite(self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

impl Add for DqVector {
    type Output = DqVector;
    fn add(self, rhs: DqVector) -> DqVector {
        DqVector::new(self.d + rhs.d, self.q + rhs.q)
    }
}

impl AddAssign for DqVector {
    fn add_assign(&mut self, rhs: DqVector) {
        self.d += rhs.d;
        self.q += rhs.q;
    }
}

impl Sub for DqVector {
    type Output = DqVector;
    fn sub(self, rhs: DqVector) -> DqVector {
        DqVector::new(self.d - rhs.d, self.q - rhs.q)
    }
}

impl Neg for DqVector {
    type Output = DqVector;
    fn neg(self) -> DqVector {
        DqVector::new(-self.d, -self.q)
    }
}

impl Mul<f64> for DqVector {
    type Output = DqVector;
    fn mul(self, k: f64) -> DqVector {
        DqVector::new(self.d * k, self.q * k)
    }
}

impl Mul<DqVector> for f64 {
    type Output = DqVector;
    fn mul(self, v: DqVector) -> DqVector {
        v * self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplitude_is_two_norm() {
        assert_eq!(DqVector::new(3.0, 4.0).amplitude(), 5.0);
        assert_eq!(DqVector::new(3.0, 4.0).norm_squared(), 25.0);
    }

    #[test]
    fn rotation_preserves_amplitude() {
        let v = DqVector::new(283.0, -118.0);
        let r = v.rotate(1.234);
        assert!((r.amplitude() - v.amplitude()).abs() < 1e-12);
        let back = r.rotate(-1.234);
        assert!((back - v).amplitude() < 1e-12);
    }

    #[test]
    fn cross_coupling_is_orthogonal() {
        let v = DqVector::new(1.5, -2.0);
        assert_eq!(v.dot(v.cross_coupled()), 0.0);
        assert_eq!(v.cross_coupled().cross_coupled(), -v);
    }
}
