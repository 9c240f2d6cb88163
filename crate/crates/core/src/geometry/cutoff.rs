//! The C² truncation `ψ_N` used to make the transport drift bounded.
//!
//! `ψ_N(ξ) = ξ` for `|ξ| ≤ N`, `ψ_N(ξ) = 0` for `|ξ| ≥ 2N`, and on `N < |ξ| < 2N`
//! it follows the quintic bridge `N·q(t)`, `t = (|ξ| - N)/N`, with
//! `q(t) = (1 - t)³ (1 + 4t + 9t²)`. The bridge matches value, slope and
//! curvature at both ends and satisfies `q(t) < 1 + t`, hence `|ψ_N(ξ)| ≤ |ξ|`.
//! The function is odd.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    level: f64,
}

impl Cutoff {
    pub fn new(level: f64) -> Result<Self> {
        if !(level.is_finite() && level > 0.0) {
            return Err(Error::invalid("truncation", "N must be positive and finite"));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn value(&self, xi: f64) -> f64 {
        self.eval(xi).0
    }

    /// `(ψ(ξ), ψ'(ξ), ψ''(ξ))`.
    pub fn eval(&self, xi: f64) -> (f64, f64, f64) {
        let n = self.level;
        let a = xi.abs();
        if a <= n {
            return (xi, 1.0, 0.0);
        }
        if a >= 2.0 * n {
            return (0.0, 0.0, 0.0);
        }
        let s = xi.signum();
        let t = (a - n) / n;
        let u = 1.0 - t;
        let q = u * u * u * (1.0 + 4.0 * t + 9.0 * t * t);
        let dq = u * u * (1.0 + 2.0 * t - 45.0 * t * t);
        let ddq = u * t * (180.0 * t - 96.0);
        (s * n * q, dq, s * ddq / n)
    }
}
