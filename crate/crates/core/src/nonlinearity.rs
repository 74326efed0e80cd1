//! The bistable reaction term `f`, its primitive `F(m) = ∫_{-1}^m f` and
//! Lipschitz data.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A balanced bistable nonlinearity.
///
/// Zeros at `-1, 0, 1`, `f'(±1) < 0 < f'(0)`, and `F(1) = 0`, so that
/// standing waves connect `∓1` and `F < 0` on `(-1, 1)`.
#[derive(Clone)]
pub struct Nonlinearity {
    f: ScalarFn,
    primitive: ScalarFn,
    fprime: ScalarFn,
    diff: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
    lip: f64,
    sup_f: f64,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity").field("lip", &self.lip).field("sup_f", &self.sup_f).finish_non_exhaustive()
    }
}

impl Default for Nonlinearity {
    fn default() -> Self {
        default_nonlinearity()
    }
}

/// `f(m) = m(1 - m²)`, `F(m) = -(1 - m²)²/4`, `‖f'‖∞ = 2`.
pub fn default_nonlinearity() -> Nonlinearity {
    Nonlinearity {
        f: Arc::new(|m| m * (1.0 - m * m)),
        primitive: Arc::new(|m| {
            let s = 1.0 - m * m;
            -0.25 * s * s
        }),
        fprime: Arc::new(|m| 1.0 - 3.0 * m * m),
        // F(a) - F(b) = (a - b)(a + b)(2 - a² - b²)/4, free of cancellation
        diff: Some(Arc::new(|a, b| 0.25 * (a - b) * (a + b) * (2.0 - a * a - b * b))),
        lip: 2.0,
        sup_f: 2.0 / (3.0 * 3f64.sqrt()),
    }
}

const VALIDATION_GRID: usize = 10_000;

impl Nonlinearity {
    /// Builds a user nonlinearity and checks the bistable/balanced invariants.
    pub fn new<F, P, D>(f: F, primitive: P, fprime: D, lip: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lip.is_finite() && lip >= 0.0) {
            return Err(Error::param("lip", "must be finite and nonnegative"));
        }
        let f: ScalarFn = Arc::new(f);
        let sup_f =
            (0..=VALIDATION_GRID).map(|i| f(-1.0 + 2.0 * i as f64 / VALIDATION_GRID as f64).abs()).fold(0.0, f64::max);
        let nl = Nonlinearity { f, primitive: Arc::new(primitive), fprime: Arc::new(fprime), diff: None, lip, sup_f };
        nl.validate()?;
        Ok(nl)
    }

    pub fn validate(&self) -> Result<()> {
        for z in [-1.0, 0.0, 1.0] {
            if self.f(z).abs() > 1e-12 {
                return Err(Error::param("f", format!("f({z}) = {} is not zero", self.f(z))));
            }
        }
        if !(self.fprime(-1.0) < 0.0 && self.fprime(1.0) < 0.0 && self.fprime(0.0) > 0.0) {
            return Err(Error::param("fprime", "need f'(-1) < 0, f'(1) < 0 and f'(0) > 0"));
        }
        if self.primitive(-1.0).abs() > 1e-10 {
            return Err(Error::param("F", "F(-1) must vanish"));
        }
        let balance = quad::integrate(|m| self.f(m), -1.0, 1.0, 1e-13);
        if balance.abs() > 1e-10 || self.primitive(1.0).abs() > 1e-10 {
            return Err(Error::param("f", format!("not balanced: ∫f = {balance:.3e}")));
        }
        for i in 1..VALIDATION_GRID {
            let m = -1.0 + 2.0 * i as f64 / VALIDATION_GRID as f64;
            if self.primitive(m) >= 0.0 {
                return Err(Error::param("F", format!("F({m}) >= 0 inside (-1, 1)")));
            }
        }
        let sampled_lip = (0..=VALIDATION_GRID)
            .map(|i| self.fprime(-1.0 + 2.0 * i as f64 / VALIDATION_GRID as f64).abs())
            .fold(0.0, f64::max);
        if sampled_lip > self.lip * (1.0 + 1e-9) {
            return Err(Error::param("lip", format!("sup|f'| = {sampled_lip} exceeds lip")));
        }
        Ok(())
    }

    #[inline]
    pub fn f(&self, m: f64) -> f64 {
        (self.f)(m)
    }

    /// `F(m) = ∫_{-1}^m f`.
    #[inline]
    pub fn primitive(&self, m: f64) -> f64 {
        (self.primitive)(m)
    }

    #[inline]
    pub fn fprime(&self, m: f64) -> f64 {
        (self.fprime)(m)
    }

    /// `F(a) - F(b)`, accurate when `a ≈ b`.
    pub fn primitive_diff(&self, a: f64, b: f64) -> f64 {
        match &self.diff {
            Some(d) => d(a, b),
            None if (a - b).abs() < 1e-2 => quad::integrate(|m| self.f(m), b, a, 1e-14),
            None => self.primitive(a) - self.primitive(b),
        }
    }

    /// `sup |f'|` on `[-1, 1]`.
    pub fn lip(&self) -> f64 {
        self.lip
    }

    /// `sup |f|` on `[-1, 1]` (sampled for user nonlinearities).
    pub fn sup_abs_f(&self) -> f64 {
        self.sup_f
    }

    /// The point `m` on the requested side of 0 with `F(m) = level`, for
    /// `F(0) <= level <= 0`.
    pub fn level_point(&self, level: f64, positive: bool) -> Result<f64> {
        let f0 = self.primitive(0.0);
        if level < f0 - 1e-15 || level > 0.0 {
            return Err(Error::LevelNotReached(format!("F = {level} outside [F(0), 0] = [{f0}, 0]")));
        }
        if level <= f0 {
            return Ok(0.0);
        }
        let end = if positive { 1.0 } else { -1.0 };
        quad::bisect(|m| self.primitive(m) - level, 0.0, end, 1e-16)
    }

    /// The turning point on the opposite side of 0 sharing the value of `F`
    /// with `m` (for the default `f`, simply `-m`).
    pub fn conjugate(&self, m: f64) -> Result<f64> {
        if m == 0.0 {
            return Ok(0.0);
        }
        self.level_point(self.primitive(m), m < 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_values() {
        let nl = default_nonlinearity();
        assert_eq!(nl.f(0.0), 0.0);
        assert_eq!(nl.primitive(1.0), 0.0);
        assert_eq!(nl.lip(), 2.0);
        // F(1) from integrating m - m³ on [-1, 1]
        assert!(quad::integrate(|m| nl.f(m), -1.0, 1.0, 1e-14).abs() < 1e-15);
        nl.validate().unwrap();
    }

    #[test]
    fn primitive_nonpositive_with_zeros_at_saddles() {
        let nl = default_nonlinearity();
        for i in 0..=20_000 {
            let m = -1.0 + i as f64 / 10_000.0;
            let v = nl.primitive(m);
            assert!(v <= 0.0);
            if v == 0.0 {
                assert!((m.abs() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn primitive_derivative_matches_f() {
        let nl = default_nonlinearity();
        for &m in &[-0.9, -0.3, 0.1, 0.55, 0.97] {
            let h = 1e-6;
            let d = (nl.primitive(m + h) - nl.primitive(m - h)) / (2.0 * h);
            assert!((d - nl.f(m)).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_unbalanced_and_wrong_sign() {
        // f = m(m+1)(m-1) has f'(0) = -1
        let bad = Nonlinearity::new(
            |m| m * (m * m - 1.0),
            |m| 0.25 * (1.0 - m * m) * (1.0 - m * m),
            |m| 3.0 * m * m - 1.0,
            2.0,
        );
        assert!(bad.is_err());
        // unbalanced: (1 - m²)(m + 0.2)
        let unbalanced =
            Nonlinearity::new(|m| (1.0 - m * m) * (m + 0.2), |_| 0.0, |m| 1.0 - 3.0 * m * m - 0.4 * m, 3.0);
        assert!(unbalanced.is_err());
    }

    #[test]
    fn primitive_diff_matches_subtraction() {
        let nl = default_nonlinearity();
        for &(a, b) in &[(0.3, -0.7), (0.9, 0.2), (-0.5, -0.5)] {
            let d = nl.primitive(a) - nl.primitive(b);
            assert!((nl.primitive_diff(a, b) - d).abs() < 1e-15);
        }
        // near-equal arguments: relative accuracy survives
        let a = 0.5 + 1e-10;
        let exact = nl.f(0.5) * 1e-10;
        assert!((nl.primitive_diff(a, 0.5) / exact - 1.0).abs() < 1e-6);
    }

    #[test]
    fn conjugate_of_symmetric_f() {
        let nl = default_nonlinearity();
        let c = nl.conjugate(0.63).unwrap();
        assert!((c + 0.63).abs() < 1e-12);
        assert!((nl.level_point(nl.primitive(-0.2), true).unwrap() - 0.2).abs() < 1e-12);
    }
}
