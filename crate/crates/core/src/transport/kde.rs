use std::f64::consts::PI;

use serde::Serialize;

use super::measure::ParticleMeasure;
use crate::error::{Error, Result};

/// Gaussian kernel density estimate with a scalar bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kde {
    pub bandwidth: f64,
}

impl Kde {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth", "must be positive"));
        }
        Ok(Self { bandwidth })
    }

    /// Normal-reference rule `h = (4/(n+2))^{1/(n+4)} N^{-1/(n+4)} σ̄`, `σ̄` the mean
    /// per-axis standard deviation.
    pub fn normal_reference(m: &ParticleMeasure) -> Result<Self> {
        let n = m.dim() as f64;
        let sd = m.std_dev();
        let sigma = sd.iter().sum::<f64>() / sd.len() as f64;
        if sigma <= 0.0 {
            return Err(Error::invalid("bandwidth", "particles have zero spread"));
        }
        let h = (4.0 / (n + 2.0)).powf(1.0 / (n + 4.0)) * (m.len() as f64).powf(-1.0 / (n + 4.0)) * sigma;
        Self::new(h)
    }

    pub fn density(&self, m: &ParticleMeasure, x: &[f64]) -> f64 {
        let n = m.dim();
        let h2 = self.bandwidth * self.bandwidth;
        let norm = (2.0 * PI * h2).powf(-(n as f64) / 2.0);
        let mut acc = 0.0;
        for (i, w) in m.weights().iter().enumerate() {
            let r2: f64 = m.point(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            acc += w * (-0.5 * r2 / h2).exp();
        }
        norm * acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_and_tail() {
        let m = ParticleMeasure::dirac(&[0.0, 0.0, 0.0]);
        let k = Kde::new(0.3).unwrap();
        assert!((k.density(&m, &[0.0; 3]) - (2.0 * PI * 0.09f64).powf(-1.5)).abs() < 1e-12);
        assert!(k.density(&m, &[3.0, 0.0, 0.0]) < 1e-20);
    }

    #[test]
    fn midpoint_is_symmetric() {
        let m = ParticleMeasure::uniform(3, vec![-1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let k = Kde::new(0.5).unwrap();
        let single = Kde::new(0.5).unwrap().density(&ParticleMeasure::dirac(&[1.0, 0.0, 0.0]), &[0.0; 3]);
        assert!((k.density(&m, &[0.0; 3]) - single).abs() < 1e-15);
    }

    #[test]
    fn integrates_to_one_over_covering_box() {
        let m = ParticleMeasure::uniform(3, vec![0.2, -0.1, 0.0, -0.4, 0.3, 0.5, 0.0, 0.0, -0.6]).unwrap();
        let k = Kde::normal_reference(&m).unwrap();
        let l = 0.6 + 6.0 * k.bandwidth;
        let cells = 60;
        let h = 2.0 * l / cells as f64;
        let mut total = 0.0;
        for i in 0..cells {
            for j in 0..cells {
                for q in 0..cells {
                    let x = [-l + (i as f64 + 0.5) * h, -l + (j as f64 + 0.5) * h, -l + (q as f64 + 0.5) * h];
                    total += k.density(&m, &x);
                }
            }
        }
        total *= h * h * h;
        assert!(total >= 0.995 && total <= 1.0 + 1e-6, "{total}");
    }
}
