use std::fmt;
use std::sync::Arc;

use super::path::ControlledPath;
use crate::couplings::{CostField, Derivs};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianSpec;

/// Optimal control data: dynamics, frozen running cost `f(x, t)`, terminal cost
/// `g(x)`, final time `T` and the number of grid steps on `[0, T]`.
#[derive(Clone)]
pub struct OcpProblem {
    spec: HamiltonianSpec,
    running: Arc<dyn CostField>,
    terminal: Arc<dyn CostField>,
    horizon: f64,
    steps: usize,
}

impl fmt::Debug for OcpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcpProblem")
            .field("spec", &self.spec)
            .field("horizon", &self.horizon)
            .field("steps", &self.steps)
            .finish_non_exhaustive()
    }
}

pub const DEFAULT_STEPS: usize = 200;

impl OcpProblem {
    pub fn new(
        spec: HamiltonianSpec,
        running: Arc<dyn CostField>,
        terminal: Arc<dyn CostField>,
        horizon: f64,
        steps: usize,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon", "must be positive and finite"));
        }
        if steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        Ok(Self {
            spec,
            running,
            terminal,
            horizon,
            steps,
        })
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn running(&self) -> &dyn CostField {
        &*self.running
    }

    pub fn terminal(&self) -> &dyn CostField {
        &*self.terminal
    }

    pub fn running_arc(&self) -> Arc<dyn CostField> {
        self.running.clone()
    }

    pub fn terminal_arc(&self) -> Arc<dyn CostField> {
        self.terminal.clone()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn control_dim(&self) -> usize {
        self.spec.control_dim()
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.spec.clone(), self.running.clone(), self.terminal.clone(), self.horizon, steps)
    }

    pub fn with_spec(&self, spec: HamiltonianSpec) -> Self {
        Self { spec, ..self.clone() }
    }

    /// Steps used from `t0` to `T`, keeping the step length of the base grid.
    pub fn steps_from(&self, t0: f64) -> Result<usize> {
        if !(t0.is_finite() && t0 < self.horizon) {
            return Err(Error::invalid("t0", "start time must precede the horizon"));
        }
        Ok((((self.horizon - t0) / self.dt()).round() as usize).max(1))
    }

    /// `(g(x), Dg(x))`.
    pub fn terminal_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut d = Derivs::new(x.len());
        self.terminal.eval(x, self.horizon, 1, &mut d);
        (d.value, d.gradient().to_vec())
    }
}

/// Trapezoidal `∫ [½|α|^{γ'} + f(x(s), s)] ds + g(x(T))` over the path nodes.
pub fn cost(path: &ControlledPath, spec: &HamiltonianSpec, f: &dyn CostField, g: &dyn CostField) -> f64 {
    let h = path.dt();
    let m = path.steps();
    let mut acc = 0.0;
    for k in 0..=m {
        let w = if k == 0 || k == m { 0.5 } else { 1.0 };
        let x = path.state(k);
        acc += w * (spec.control_cost(path.control(k)) + f.value(x, path.time(k)));
    }
    h * acc + g.value(path.end(), path.horizon())
}
