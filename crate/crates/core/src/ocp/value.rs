use serde::Serialize;

use super::direct::{solve_direct, DirectOptions};
use super::pmp::{solve_pmp_shooting, CostateSolution, ShootingOptions};
use super::problem::OcpProblem;
use crate::error::{Error, Result};

/// Constant `C2` of the control bound `‖α‖∞ ≤ C2 (1 + |x1| + |x2|)`, fitted on the
/// test corpus.
pub const CONTROL_BOUND_C2: f64 = 2.0;

/// `C2 (1 + |x1| + |x2|)`.
pub fn control_bound(x: &[f64]) -> f64 {
    let h: f64 = x.iter().take(2).map(|v| v.abs()).sum();
    CONTROL_BOUND_C2 * (1.0 + h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueOptions {
    pub shooting: ShootingOptions,
    /// Also run the direct-transcription oracle.
    pub direct: Option<DirectOptions>,
}

impl Default for ValueOptions {
    fn default() -> Self {
        Self {
            shooting: ShootingOptions::default(),
            direct: Some(DirectOptions::default()),
        }
    }
}

impl ValueOptions {
    pub fn pmp_only() -> Self {
        Self {
            direct: None,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ValueSource {
    Pmp,
    Direct,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueReport {
    pub value: f64,
    pub source: ValueSource,
    pub pmp: Option<f64>,
    pub direct: Option<f64>,
    pub multiplicity: usize,
    #[serde(skip)]
    pub solution: Option<CostateSolution>,
}

/// `u(x, t)` as the smallest cost among the shooting candidates and the direct oracle.
pub fn value(problem: &OcpProblem, x: &[f64], t: f64, opts: &ValueOptions) -> Result<ValueReport> {
    value_from(problem, x, t, &[], opts)
}

/// [`value`] with explicit shooting starts (defaults when empty).
pub fn value_from(problem: &OcpProblem, x: &[f64], t: f64, starts: &[Vec<f64>], opts: &ValueOptions) -> Result<ValueReport> {
    let shot = solve_pmp_shooting(problem, x, t, starts, &opts.shooting);
    let direct = match &opts.direct {
        Some(d) => Some(solve_direct(problem, x, t, control_bound(x), d)?),
        None => None,
    };
    let (pmp, multiplicity, solution, failure) = match shot {
        Ok(r) => (Some(r.best.cost), r.multiplicity, Some(r.best), None),
        Err(e) => (None, 0, None, Some(e)),
    };
    let dval = direct.as_ref().map(|d| d.cost);
    let (value, source) = match (pmp, dval) {
        (Some(a), Some(b)) if b < a => (b, ValueSource::Direct),
        (Some(a), _) => (a, ValueSource::Pmp),
        (None, Some(b)) => (b, ValueSource::Direct),
        (None, None) => return Err(failure.unwrap_or(Error::ShootingFailed { best_residual: f64::INFINITY })),
    };
    Ok(ValueReport {
        value,
        source,
        pmp,
        direct: dval,
        multiplicity,
        solution,
    })
}
