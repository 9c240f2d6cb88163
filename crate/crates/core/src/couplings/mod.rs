//! Measure couplings `F[m]`, `G[m]` and the frozen costs `f(x, t)`, `g(x)` they induce.

pub mod explicit;
pub mod field;
pub mod kernel;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::transport::{wasserstein1, MeasurePath, ParticleMeasure};

pub use explicit::ExplicitFunction;
pub use field::{CostField, Derivs};
pub use kernel::Kernel;

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingKind {
    Zero,
    /// `κ (φ * m)`.
    Convolution(Kernel),
    /// `κ f(x)`, independent of the measure.
    Explicit(ExplicitFunction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    kind: CouplingKind,
    strength: f64,
    monotone: bool,
}

impl CouplingSpec {
    pub fn zero() -> Self {
        Self {
            kind: CouplingKind::Zero,
            strength: 0.0,
            monotone: false,
        }
    }

    pub fn convolution(dim: usize, radius: f64, strength: f64) -> Result<Self> {
        check_strength(strength)?;
        Ok(Self {
            kind: CouplingKind::Convolution(Kernel::bump(dim, radius)?),
            strength,
            monotone: false,
        })
    }

    /// `κ (φ * φ * m)` with `κ > 0`, which is monotone.
    pub fn monotone(dim: usize, radius: f64, strength: f64) -> Result<Self> {
        check_strength(strength)?;
        if strength <= 0.0 {
            return Err(Error::invalid("coupling.strength", "the monotone coupling needs a positive strength"));
        }
        Ok(Self {
            kind: CouplingKind::Convolution(Kernel::autocorrelation(dim, radius)?),
            strength,
            monotone: true,
        })
    }

    pub fn explicit(f: ExplicitFunction, strength: f64) -> Result<Self> {
        check_strength(strength)?;
        Ok(Self {
            kind: CouplingKind::Explicit(f),
            strength,
            monotone: false,
        })
    }

    pub fn kind(&self) -> &CouplingKind {
        &self.kind
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn is_zero(&self) -> bool {
        self.strength == 0.0
            || match &self.kind {
                CouplingKind::Zero => true,
                CouplingKind::Convolution(_) => false,
                CouplingKind::Explicit(f) => f.is_zero(),
            }
    }

    /// True when the coupling does not depend on the measure.
    pub fn is_measure_independent(&self) -> bool {
        !matches!(self.kind, CouplingKind::Convolution(_)) || self.is_zero()
    }

    /// Writes `F[m](x)` and derivatives up to `order` into `out`.
    pub fn eval(&self, m: &ParticleMeasure, x: &[f64], order: usize, out: &mut Derivs) {
        out.n = x.len();
        out.clear();
        self.accumulate(m, x, 1.0, order, out);
    }

    fn accumulate(&self, m: &ParticleMeasure, x: &[f64], scale: f64, order: usize, out: &mut Derivs) {
        if self.is_zero() {
            return;
        }
        let k = scale * self.strength;
        match &self.kind {
            CouplingKind::Zero => {}
            CouplingKind::Convolution(kernel) => kernel.accumulate_cloud(m.points(), m.weights(), x, k, order, out),
            CouplingKind::Explicit(f) => f.accumulate(x, k, order, out),
        }
    }

    pub fn value(&self, m: &ParticleMeasure, x: &[f64]) -> f64 {
        let mut d = Derivs::new(x.len());
        self.eval(m, x, 0, &mut d);
        d.value
    }

    /// The constant `C` with `‖F[m]‖_{C²} ≤ C` for every probability measure `m`.
    /// `None` for explicit functions without a known bound.
    pub fn c2_bound(&self) -> Option<f64> {
        if self.is_zero() {
            return Some(0.0);
        }
        match &self.kind {
            CouplingKind::Zero => Some(0.0),
            CouplingKind::Convolution(kernel) => Some(self.strength.abs() * kernel.c2_norm()),
            CouplingKind::Explicit(_) => None,
        }
    }

    /// Upper bound on `sup |F[m]|`.
    pub fn sup_bound(&self) -> Option<f64> {
        if self.is_zero() {
            return Some(0.0);
        }
        match &self.kind {
            CouplingKind::Zero => Some(0.0),
            CouplingKind::Convolution(kernel) => Some(self.strength.abs() * kernel.derivative_sups().0),
            CouplingKind::Explicit(f) => f.sup_norm_bound().map(|b| b * self.strength.abs()),
        }
    }

    /// `L` with `sup_x |F[m1](x) - F[m2](x)| ≤ L d₁(m1, m2)`.
    pub fn measure_lipschitz(&self) -> f64 {
        if self.is_measure_independent() {
            return 0.0;
        }
        match &self.kind {
            CouplingKind::Convolution(kernel) => self.strength.abs() * kernel.lipschitz(),
            _ => 0.0,
        }
    }
}

fn check_strength(strength: f64) -> Result<()> {
    if strength.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("coupling.strength", "must be finite"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub sup_difference: f64,
    pub distance: f64,
    pub distance_exact: bool,
    pub ratio: f64,
    pub bound: f64,
    pub holds: bool,
}

const LIPSCHITZ_SLACK: f64 = 1e-9;

/// Compares `sup |F[m1] - F[m2]|` over `probes` (flattened points) with `d₁(m1, m2)`.
pub fn lipschitz_in_measure_check(
    spec: &CouplingSpec,
    m1: &ParticleMeasure,
    m2: &ParticleMeasure,
    probes: &[f64],
) -> Result<LipschitzReport> {
    let n = m1.dim();
    if probes.len() % n != 0 {
        return Err(Error::invalid("probes", "length must be a multiple of the dimension"));
    }
    let d = wasserstein1(m1, m2)?;
    let sup_difference = probes
        .chunks(n)
        .map(|x| (spec.value(m1, x) - spec.value(m2, x)).abs())
        .fold(0.0, f64::max);
    let ratio = if sup_difference == 0.0 {
        0.0
    } else if d.value == 0.0 {
        f64::INFINITY
    } else {
        sup_difference / d.value
    };
    let bound = spec.measure_lipschitz();
    Ok(LipschitzReport {
        sup_difference,
        distance: d.value,
        distance_exact: d.exact,
        ratio,
        bound,
        holds: ratio <= bound + LIPSCHITZ_SLACK,
    })
}

/// `g(x) = G[m](x)` for a fixed measure.
#[derive(Debug, Clone)]
pub struct FrozenMeasureCost {
    spec: CouplingSpec,
    measure: Arc<ParticleMeasure>,
}

impl FrozenMeasureCost {
    pub fn new(spec: CouplingSpec, measure: Arc<ParticleMeasure>) -> Self {
        Self { spec, measure }
    }

    pub fn measure(&self) -> &ParticleMeasure {
        &self.measure
    }
}

impl CostField for FrozenMeasureCost {
    fn eval(&self, x: &[f64], _t: f64, order: usize, out: &mut Derivs) {
        self.spec.eval(&self.measure, x, order, out);
    }

    fn sup_bound(&self) -> Option<f64> {
        self.spec.sup_bound()
    }

    fn is_zero(&self) -> bool {
        self.spec.is_zero()
    }
}

/// `f(x, t) = F[m_t](x)` along a measure path.
///
/// The path is sampled at every node and every midpoint, which are the stage
/// times of a classical Runge-Kutta step on the same grid; midpoint positions are
/// linear in time between nodes. Between samples the cost is linear in `t`.
#[derive(Debug, Clone)]
pub struct FrozenPathCost {
    spec: CouplingSpec,
    t0: f64,
    half_step: f64,
    levels: Vec<ParticleMeasure>,
}

impl FrozenPathCost {
    pub fn new(spec: CouplingSpec, path: &MeasurePath) -> Result<Self> {
        let times = path.times();
        if times.len() < 2 {
            return Err(Error::invalid("measure path", "needs at least two nodes"));
        }
        let t0 = times[0];
        let half_step = 0.5 * (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
        let mut levels = Vec::with_capacity(2 * times.len() - 1);
        if spec.is_measure_independent() {
            levels.push(path.measure(0).clone());
        } else {
            for k in 0..times.len() {
                levels.push(path.measure(k).clone());
                if k + 1 < times.len() {
                    let a = path.measure(k);
                    let b = path.measure(k + 1);
                    let mid: Vec<f64> = a.points().iter().zip(b.points()).map(|(x, y)| 0.5 * (x + y)).collect();
                    levels.push(a.with_points(mid));
                }
            }
        }
        Ok(Self {
            spec,
            t0,
            half_step,
            levels,
        })
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    fn locate(&self, t: f64) -> (usize, usize, f64) {
        let last = self.levels.len() - 1;
        if last == 0 {
            return (0, 0, 0.0);
        }
        let s = ((t - self.t0) / self.half_step).clamp(0.0, last as f64);
        let r = s.round();
        if (s - r).abs() < 1e-9 {
            let j = r as usize;
            return (j, j, 0.0);
        }
        let j = (s.floor() as usize).min(last - 1);
        (j, j + 1, s - j as f64)
    }
}

impl CostField for FrozenPathCost {
    fn eval(&self, x: &[f64], t: f64, order: usize, out: &mut Derivs) {
        out.n = x.len();
        out.clear();
        let (a, b, lambda) = self.locate(t);
        if a == b {
            self.spec.accumulate(&self.levels[a], x, 1.0, order, out);
        } else {
            self.spec.accumulate(&self.levels[a], x, 1.0 - lambda, order, out);
            self.spec.accumulate(&self.levels[b], x, lambda, order, out);
        }
    }

    fn sup_bound(&self) -> Option<f64> {
        self.spec.sup_bound()
    }

    fn is_zero(&self) -> bool {
        self.spec.is_zero()
    }
}
