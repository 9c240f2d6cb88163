use serde::Serialize;

use crate::error::{Error, Result};
use crate::ocp::ControlledPath;

/// Tolerance on the total mass of a particle measure.
pub const MASS_TOL: f64 = 1e-12;

/// A weighted particle cloud in `R^n`, stored as a flat row-major array.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleMeasure {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if weights.is_empty() {
            return Err(Error::invalid("particles", "a measure needs at least one particle"));
        }
        Error::check_dim(dim * weights.len(), points.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights", "must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid("weights", format!("sum to {total}, expected 1")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("particles", "coordinates must be finite"));
        }
        Ok(Self { dim, points, weights })
    }

    /// Equal weights `1/count`.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::invalid("particles", "length must be a multiple of the dimension"));
        }
        let count = points.len() / dim;
        Self::new(dim, points, vec![1.0 / count as f64; count])
    }

    pub fn dirac(x: &[f64]) -> Self {
        Self::new(x.len(), x.to_vec(), vec![1.0]).expect("valid dirac")
    }

    /// Same weights, new positions.
    pub(crate) fn with_points(&self, points: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), self.points.len());
        Self {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_equal_weight(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }

    /// `(Σ w_i |ξ_i|, Σ w_i |ξ_i|²)`.
    pub fn moments(&self) -> (f64, f64) {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            let r2: f64 = self.point(i).iter().map(|x| x * x).sum();
            m1 += w * r2.sqrt();
            m2 += w * r2;
        }
        (m1, m2)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (m, x) in mu.iter_mut().zip(self.point(i)) {
                *m += w * x;
            }
        }
        mu
    }

    /// Weighted per-axis standard deviations.
    pub fn std_dev(&self) -> Vec<f64> {
        let mu = self.mean();
        let mut var = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (k, x) in self.point(i).iter().enumerate() {
                var[k] += w * (x - mu[k]) * (x - mu[k]);
            }
        }
        var.into_iter().map(f64::sqrt).collect()
    }
}

/// Time-indexed particle measures together with the arcs that generated them.
///
/// `measures[k].point(i) == arcs[i].state(k)` holds bit for bit.
#[derive(Debug, Clone)]
pub struct MeasurePath {
    times: Vec<f64>,
    weights: Vec<f64>,
    arcs: Vec<ControlledPath>,
    measures: Vec<ParticleMeasure>,
}

impl MeasurePath {
    pub fn from_arcs(weights: Vec<f64>, arcs: Vec<ControlledPath>) -> Result<Self> {
        let first = arcs.first().ok_or_else(|| Error::invalid("arcs", "empty measure path"))?;
        Error::check_dim(arcs.len(), weights.len())?;
        let times = first.times();
        let dim = first.dim();
        for a in &arcs {
            if a.dim() != dim || a.steps() != first.steps() || a.t0() != first.t0() || a.horizon() != first.horizon() {
                return Err(Error::invalid("arcs", "arcs must share dimension and time grid"));
            }
        }
        let measures = (0..times.len())
            .map(|k| {
                let mut pts = Vec::with_capacity(arcs.len() * dim);
                for a in &arcs {
                    pts.extend_from_slice(a.state(k));
                }
                ParticleMeasure::new(dim, pts, weights.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times,
            weights,
            arcs,
            measures,
        })
    }

    /// Constant-in-time path of a measure (every particle at rest) on `steps` intervals.
    pub fn stationary(m: &ParticleMeasure, t0: f64, horizon: f64, steps: usize, control_dim: usize) -> Result<Self> {
        let arcs = (0..m.len())
            .map(|i| ControlledPath::at_rest(m.point(i), t0, horizon, steps, control_dim))
            .collect::<Result<Vec<_>>>()?;
        Self::from_arcs(m.weights().to_vec(), arcs)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.arcs[0].dim()
    }

    pub fn particle_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn arcs(&self) -> &[ControlledPath] {
        &self.arcs
    }

    pub fn into_arcs(self) -> Vec<ControlledPath> {
        self.arcs
    }

    pub fn measure(&self, k: usize) -> &ParticleMeasure {
        &self.measures[k]
    }

    pub fn measures(&self) -> &[ParticleMeasure] {
        &self.measures
    }

    pub fn initial(&self) -> &ParticleMeasure {
        &self.measures[0]
    }

    /// Re-extracts node `k` from the arcs.
    pub fn measure_from_arcs(&self, k: usize) -> ParticleMeasure {
        let dim = self.dim();
        let mut pts = Vec::with_capacity(self.arcs.len() * dim);
        for a in &self.arcs {
            pts.extend_from_slice(a.state(k));
        }
        self.measures[k].with_points(pts)
    }

    /// Positions at an arbitrary time, linear in time between nodes.
    pub fn positions_at(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        for a in &self.arcs {
            let start = out.len();
            out.resize(start + a.dim(), 0.0);
            a.state_at(t, &mut out[start..]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_examples() {
        assert_eq!(ParticleMeasure::dirac(&[0.0, 0.0, 0.0]).moments(), (0.0, 0.0));
        assert_eq!(ParticleMeasure::dirac(&[3.0, 4.0, 0.0]).moments(), (5.0, 25.0));
        let m = ParticleMeasure::uniform(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.moments(), (1.0, 1.0));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(ParticleMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(ParticleMeasure::new(1, vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
        assert!(ParticleMeasure::new(1, vec![], vec![]).is_err());
        assert!(ParticleMeasure::new(2, vec![0.0, 1.0, 2.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn stationary_path_repeats_the_measure() {
        let m = ParticleMeasure::uniform(2, vec![0.5, 1.0, -1.0, 2.0]).unwrap();
        let path = MeasurePath::stationary(&m, 0.0, 1.0, 10, 2).unwrap();
        assert_eq!(path.len(), 11);
        for k in 0..path.len() {
            assert_eq!(path.measure(k), &m);
            assert_eq!(path.measure_from_arcs(k), m);
        }
    }
}
