use std::fmt;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::measure::ParticleMeasure;
use crate::couplings::kernel::bump_constant;
use crate::error::{Error, Result};

/// A compactly supported initial density.
#[derive(Clone)]
pub enum InitialDensity {
    /// Uniform on `[-half_width, half_width]^dim`.
    UniformBox { dim: usize, half_width: f64 },
    /// The normalized polynomial bump of the given radius around `center`.
    Bump { center: Vec<f64>, radius: f64 },
    /// Arbitrary density with its support box and an upper bound of its values.
    Custom {
        lo: Vec<f64>,
        hi: Vec<f64>,
        sup: f64,
        density: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for InitialDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialDensity::UniformBox { dim, half_width } => write!(f, "UniformBox({dim}, {half_width})"),
            InitialDensity::Bump { center, radius } => write!(f, "Bump({center:?}, {radius})"),
            InitialDensity::Custom { lo, hi, sup, .. } => write!(f, "Custom({lo:?}, {hi:?}, {sup})"),
        }
    }
}

/// Proposals after which a low acceptance rate aborts sampling.
const MIN_PROPOSALS: usize = 10_000;
const MIN_EFFICIENCY: f64 = 1e-3;

impl InitialDensity {
    pub fn dim(&self) -> usize {
        match self {
            InitialDensity::UniformBox { dim, .. } => *dim,
            InitialDensity::Bump { center, .. } => center.len(),
            InitialDensity::Custom { lo, .. } => lo.len(),
        }
    }

    pub fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            InitialDensity::UniformBox { dim, half_width } => (vec![-half_width; *dim], vec![*half_width; *dim]),
            InitialDensity::Bump { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            InitialDensity::Custom { lo, hi, .. } => (lo.clone(), hi.clone()),
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        match self {
            InitialDensity::UniformBox { dim, half_width } => {
                if x.iter().all(|v| v.abs() <= *half_width) {
                    (2.0 * half_width).powi(*dim as i32).recip()
                } else {
                    0.0
                }
            }
            InitialDensity::Bump { center, radius } => {
                let u: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / (radius * radius);
                if u < 1.0 {
                    bump_constant(center.len(), *radius) * (1.0 - u).powi(4)
                } else {
                    0.0
                }
            }
            InitialDensity::Custom { density, .. } => density(x),
        }
    }

    fn sup(&self) -> f64 {
        match self {
            InitialDensity::UniformBox { dim, half_width } => (2.0 * half_width).powi(*dim as i32).recip(),
            InitialDensity::Bump { center, radius } => bump_constant(center.len(), *radius),
            InitialDensity::Custom { sup, .. } => *sup,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support_box();
        if lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::invalid("m0", "support box must be bounded and nondegenerate"));
        }
        if !(self.sup().is_finite() && self.sup() > 0.0) {
            return Err(Error::invalid("m0", "density bound must be positive"));
        }
        Ok(())
    }
}

/// Equal-weight particles drawn from `m0` by rejection against the uniform
/// proposal on its support box.
pub fn sample_initial(m0: &InitialDensity, count: usize, seed: u64) -> Result<ParticleMeasure> {
    if count == 0 {
        return Err(Error::invalid("particles", "count must be at least 1"));
    }
    m0.validate()?;
    let (lo, hi) = m0.support_box();
    let n = lo.len();
    let sup = m0.sup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count * n);
    let mut x = vec![0.0; n];
    let mut proposals = 0usize;
    let mut accepted = 0usize;
    while accepted < count {
        for k in 0..n {
            x[k] = lo[k] + (hi[k] - lo[k]) * rng.random::<f64>();
        }
        proposals += 1;
        if rng.random::<f64>() * sup < m0.density(&x) {
            points.extend_from_slice(&x);
            accepted += 1;
        }
        if proposals >= MIN_PROPOSALS {
            let efficiency = accepted as f64 / proposals as f64;
            if efficiency < MIN_EFFICIENCY {
                return Err(Error::DegenerateDensity { efficiency });
            }
        }
    }
    ParticleMeasure::uniform(n, points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_box_samples_stay_inside() {
        let m0 = InitialDensity::UniformBox { dim: 3, half_width: 1.0 };
        let m = sample_initial(&m0, 4, 7).unwrap();
        assert_eq!(m.len(), 4);
        assert!(m.points().iter().all(|x| x.abs() <= 1.0));
        assert!(m.weights().iter().all(|&w| w == 0.25));
        assert_eq!(m, sample_initial(&m0, 4, 7).unwrap());
    }

    #[test]
    fn single_particle_has_unit_weight() {
        let m0 = InitialDensity::Bump { center: vec![0.0; 3], radius: 1.0 };
        let m = sample_initial(&m0, 1, 1).unwrap();
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn bump_sample_mean_shrinks_like_inverse_root() {
        let m0 = InitialDensity::Bump { center: vec![0.0; 3], radius: 1.0 };
        for (count, seed) in [(400usize, 1u64), (6400, 2)] {
            let m = sample_initial(&m0, count, seed).unwrap();
            let mu = m.mean();
            let r = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            // per-axis variance of the unit bump in 3D is 1/11
            assert!(r < 4.0 * (3.0 / 11.0 / count as f64).sqrt(), "{count}: {r}");
        }
    }

    #[test]
    fn degenerate_density_aborts() {
        let m0 = InitialDensity::Custom {
            lo: vec![-1.0; 3],
            hi: vec![1.0; 3],
            sup: 1e6,
            density: Arc::new(|x: &[f64]| if x.iter().all(|v| v.abs() < 0.01) { 1.25e5 } else { 0.0 }),
        };
        assert!(matches!(sample_initial(&m0, 10, 0), Err(Error::DegenerateDensity { .. })));
    }
}
