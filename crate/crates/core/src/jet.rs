//! Truncated Taylor series ("jets") for computing exact initial derivatives.
//!
//! A jet holds the coefficients `c_0, …, c_K` of `x(t) = Σ c_k t^k`. The
//! arithmetic below is exact for polynomial vector fields, which is all the
//! Taylor-mode initialization needs.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<f64>,
}

impl Jet {
    /// Jet with the given coefficients; the truncation order is `len - 1`.
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least one coefficient");
        Self { coeffs }
    }

    pub fn constant(value: f64, len: usize) -> Self {
        let mut coeffs = vec![0.0; len.max(1)];
        coeffs[0] = value;
        Self { coeffs }
    }

    /// The independent variable `t0 + t`.
    pub fn variable(t0: f64, len: usize) -> Self {
        let mut j = Self::constant(t0, len);
        if len > 1 {
            j.coeffs[1] = 1.0;
        }
        j
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    fn zip_with(self, rhs: Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        let len = self.len().min(rhs.len());
        Jet {
            coeffs: (0..len).map(|k| f(self.coeffs[k], rhs.coeffs[k])).collect(),
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let len = self.len().min(rhs.len());
        let coeffs = (0..len)
            .map(|k| (0..=k).map(|i| self.coeffs[i] * rhs.coeffs[k - i]).sum())
            .collect();
        Jet { coeffs }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

/// Scalars a vector field can be evaluated on: plain floats and jets.
pub trait FieldScalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Neg<Output = Self>
{
    /// A constant with the same shape as `self`.
    fn constant_like(&self, c: f64) -> Self;
}

impl FieldScalar for f64 {
    fn constant_like(&self, c: f64) -> Self {
        c
    }
}

impl FieldScalar for Jet {
    fn constant_like(&self, c: f64) -> Self {
        Jet::constant(c, self.len())
    }
}
