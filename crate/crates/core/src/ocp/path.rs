use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{HTypeStructure, MAX_DIM};

/// A trajectory and its control sampled on the uniform grid `t0 + k (T - t0) / M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlledPath {
    t0: f64,
    horizon: f64,
    steps: usize,
    dim: usize,
    control_dim: usize,
    states: Vec<f64>,
    controls: Vec<f64>,
}

impl ControlledPath {
    pub fn new(
        t0: f64,
        horizon: f64,
        dim: usize,
        control_dim: usize,
        states: Vec<f64>,
        controls: Vec<f64>,
    ) -> Result<Self> {
        if !(horizon > t0) {
            return Err(Error::invalid("horizon", "final time must exceed the start time"));
        }
        if dim == 0 || states.len() % dim != 0 || states.len() < 2 * dim {
            return Err(Error::invalid("states", "need at least two nodes of the given dimension"));
        }
        let nodes = states.len() / dim;
        Error::check_dim(nodes * control_dim, controls.len())?;
        Ok(Self {
            t0,
            horizon,
            steps: nodes - 1,
            dim,
            control_dim,
            states,
            controls,
        })
    }

    pub fn at_rest(x: &[f64], t0: f64, horizon: f64, steps: usize, control_dim: usize) -> Result<Self> {
        let states = x.repeat(steps + 1);
        Self::new(t0, horizon, x.len(), control_dim, states, vec![0.0; (steps + 1) * control_dim])
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn control(&self, k: usize) -> &[f64] {
        &self.controls[k * self.control_dim..(k + 1) * self.control_dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn start(&self) -> &[f64] {
        self.state(0)
    }

    pub fn end(&self) -> &[f64] {
        self.state(self.steps)
    }

    /// Linear interpolation of the state at time `t` (clamped to the grid).
    pub fn state_at(&self, t: f64, out: &mut [f64]) {
        let s = ((t - self.t0) / self.dt()).clamp(0.0, self.steps as f64);
        let k = (s.floor() as usize).min(self.steps - 1);
        let w = s - k as f64;
        let a = self.state(k);
        let b = self.state(k + 1);
        for i in 0..self.dim {
            out[i] = if w == 0.0 { a[i] } else { a[i] + w * (b[i] - a[i]) };
        }
    }

    /// Trapezoidal `(∫ |α|² ds)^{1/2}`.
    pub fn control_l2_norm(&self) -> f64 {
        let h = self.dt();
        let sq = |k: usize| self.control(k).iter().map(|a| a * a).sum::<f64>();
        let mut acc = 0.5 * (sq(0) + sq(self.steps));
        for k in 1..self.steps {
            acc += sq(k);
        }
        (h * acc).sqrt()
    }

    pub fn control_sup_norm(&self) -> f64 {
        (0..=self.steps)
            .map(|k| self.control(k).iter().map(|a| a * a).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest trapezoidal defect `|x_{k+1} - x_k - Δt (B α)_{k+½}|` over the steps.
    pub fn dynamics_defect(&self, s: &HTypeStructure) -> f64 {
        let n = self.dim;
        let h = self.dt();
        let mut jet = s.new_jet();
        let mut v0 = [0.0; MAX_DIM];
        let mut v1 = [0.0; MAX_DIM];
        let mut worst = 0.0f64;
        s.eval_jet(self.state(0), 0, &mut jet);
        jet.b_times(self.control(0), &mut v0);
        for k in 0..self.steps {
            s.eval_jet(self.state(k + 1), 0, &mut jet);
            jet.b_times(self.control(k + 1), &mut v1);
            let a = self.state(k);
            let b = self.state(k + 1);
            let d: f64 = (0..n)
                .map(|i| {
                    let r = b[i] - a[i] - 0.5 * h * (v0[i] + v1[i]);
                    r * r
                })
                .sum();
            worst = worst.max(d.sqrt());
            v0[..n].copy_from_slice(&v1[..n]);
        }
        worst
    }

    /// Sup-norm distance between two paths on nodes at or after time `tau`.
    pub fn sup_distance_after(&self, other: &ControlledPath, tau: f64) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..=self.steps.min(other.steps) {
            if self.time(k) + 1e-12 < tau {
                continue;
            }
            let d = self
                .state(k)
                .iter()
                .zip(other.state(k))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(d);
        }
        worst
    }
}
