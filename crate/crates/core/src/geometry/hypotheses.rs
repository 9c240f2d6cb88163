//! Sampling-based audit of the structural assumptions on `B`.
//!
//! The zero pattern and the variable dependence are enforced (hard errors); growth,
//! boundedness and the degenerate-set fraction are only measured on samples and
//! reported.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::structure::{HTypeStructure, MAX_DIM};
use crate::error::{Error, Result};

/// Axis-aligned box `[lo_k, hi_k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn cube(n: usize, half_width: f64) -> Self {
        Self {
            lo: vec![-half_width; n],
            hi: vec![half_width; n],
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.lo[k] + (self.hi[k] - self.lo[k]) * rng.random::<f64>();
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub samples: usize,
    /// Every coefficient grows at most linearly and has a bounded sampled gradient.
    pub linear_growth: bool,
    /// Rows `1..=min(n-1, m)` are bounded on the enlarged box.
    pub bounded_rows: bool,
    /// 1-based entries of the designated rows that failed the boundedness test.
    pub unbounded_entries: Vec<(usize, usize)>,
    /// Fraction of samples where `|h_11 h_22 ⋯ h_mm| ≤ 1e-12`.
    pub degenerate_fraction: f64,
}

const GROWTH_SCALE: f64 = 8.0;
const DEGENERATE_TOL: f64 = 1e-12;

pub fn check_hypotheses(s: &HTypeStructure, sample_box: &SampleBox, samples: usize, seed: u64) -> Result<HypothesisReport> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    let n = s.n();
    Error::check_dim(n, sample_box.lo.len())?;
    Error::check_dim(n, sample_box.hi.len())?;
    s.check_pattern()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = s.entries();
    let mut sup_inner = vec![0.0f64; entries.len()];
    let mut sup_outer = vec![0.0f64; entries.len()];
    let mut grad_inner = vec![0.0f64; entries.len()];
    let mut grad_outer = vec![0.0f64; entries.len()];
    let mut degenerate = 0usize;

    let mut x = [0.0; MAX_DIM];
    let mut y = [0.0; MAX_DIM];
    let mut big = [0.0; MAX_DIM];
    let mut g = [0.0; MAX_DIM];
    let origin = [0.0; MAX_DIM];
    for _ in 0..samples {
        sample_box.sample(&mut rng, &mut x[..n]);
        for k in 0..n {
            big[k] = GROWTH_SCALE * x[k];
        }
        for (e_idx, e) in entries.iter().enumerate() {
            let v = e.coef.value(&x[..n]);
            let allowed = s.allowed_vars(e.row);
            if allowed < n {
                y[..n].copy_from_slice(&x[..n]);
                for yk in y.iter_mut().take(n).skip(allowed) {
                    *yk = 10.0 * (2.0 * rng.random::<f64>() - 1.0);
                }
                let w = e.coef.value(&y[..n]);
                if (v - w).abs() > 1e-12 * (1.0 + v.abs()) {
                    return Err(Error::Structure {
                        row: e.row + 1,
                        col: e.col + 1,
                        reason: format!("depends on a variable outside x_1..x_{allowed}"),
                    });
                }
            }
            sup_inner[e_idx] = sup_inner[e_idx].max(v.abs());
            sup_outer[e_idx] = sup_outer[e_idx].max(e.coef.value(&big[..n]).abs());
            e.coef.eval(&x[..n], &mut g[..n], None);
            grad_inner[e_idx] = grad_inner[e_idx].max(norm(&g[..n]));
            e.coef.eval(&big[..n], &mut g[..n], None);
            grad_outer[e_idx] = grad_outer[e_idx].max(norm(&g[..n]));
        }
        let mut prod = 1.0;
        for i in 0..s.m() {
            prod *= entries
                .iter()
                .find(|e| e.row == i && e.col == i)
                .map_or(0.0, |e| e.coef.value(&x[..n]));
        }
        if prod.abs() <= DEGENERATE_TOL {
            degenerate += 1;
        }
    }

    let mut linear_growth = true;
    let mut unbounded_entries = Vec::new();
    let designated = s.m().min(n.saturating_sub(1));
    for (e_idx, e) in entries.iter().enumerate() {
        let h0 = e.coef.value(&origin[..n]).abs();
        if sup_outer[e_idx] > (GROWTH_SCALE + 1.0) * (sup_inner[e_idx] + h0) + 1e-9 {
            linear_growth = false;
        }
        if grad_outer[e_idx] > 2.0 * grad_inner[e_idx] + 1e-9 {
            linear_growth = false;
        }
        if e.row < designated && sup_outer[e_idx] > 2.0 * sup_inner[e_idx] + 1e-9 {
            unbounded_entries.push((e.row + 1, e.col + 1));
        }
    }

    Ok(HypothesisReport {
        samples,
        linear_growth,
        bounded_rows: unbounded_entries.is_empty(),
        unbounded_entries,
        degenerate_fraction: degenerate as f64 / samples as f64,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::structure::{Coefficient, CoefficientFn};

    #[test]
    fn heisenberg_passes_with_no_degeneracy() {
        let s = HTypeStructure::heisenberg();
        let r = check_hypotheses(&s, &SampleBox::cube(3, 2.0), 500, 1).unwrap();
        assert!(r.linear_growth && r.bounded_rows);
        assert_eq!(r.degenerate_fraction, 0.0);
    }

    #[test]
    fn grushin_degenerate_line_is_not_hit() {
        let r = check_hypotheses(&HTypeStructure::grushin(), &SampleBox::cube(2, 2.0), 2000, 3).unwrap();
        assert!(r.linear_growth && r.bounded_rows);
        assert!(r.degenerate_fraction < 1e-3);
    }

    #[test]
    fn upper_entry_is_a_hard_failure() {
        let s = HTypeStructure::unchecked(
            "bad",
            3,
            2,
            vec![
                (0, 0, Coefficient::Constant(1.0)),
                (0, 1, Coefficient::Constant(1.0)),
                (1, 1, Coefficient::Constant(1.0)),
            ],
        )
        .unwrap();
        let err = check_hypotheses(&s, &SampleBox::cube(3, 1.0), 10, 0).unwrap_err();
        assert!(matches!(err, Error::Structure { row: 1, col: 2, .. }));
    }

    #[test]
    fn hidden_dependence_is_detected_by_sampling() {
        let s = HTypeStructure::new(
            "bad",
            3,
            2,
            vec![
                (0, 0, Coefficient::Constant(1.0)),
                (1, 1, Coefficient::Function(CoefficientFn::new(|x: &[f64]| 1.0 + x[2].sin()))),
            ],
        )
        .unwrap();
        let err = check_hypotheses(&s, &SampleBox::cube(3, 1.0), 10, 0).unwrap_err();
        assert!(matches!(err, Error::Structure { row: 2, col: 2, .. }));
    }

    #[test]
    fn linear_growth_example_is_not_bounded() {
        let s = HTypeStructure::linear_growth_example();
        let r = check_hypotheses(&s, &SampleBox::cube(4, 1.0), 400, 5).unwrap();
        assert!(r.linear_growth);
        assert!(!r.bounded_rows);
        assert!(r.unbounded_entries.contains(&(2, 2)));
        assert!(r.unbounded_entries.contains(&(3, 1)));
        assert!(!r.unbounded_entries.contains(&(2, 1)));
    }

    #[test]
    fn quadratic_coefficient_fails_growth() {
        let s = HTypeStructure::new(
            "quad",
            3,
            2,
            vec![
                (0, 0, Coefficient::Constant(1.0)),
                (1, 1, Coefficient::Constant(1.0)),
                (2, 0, Coefficient::Function(CoefficientFn::new(|x: &[f64]| x[0] * x[0]))),
            ],
        )
        .unwrap();
        let r = check_hypotheses(&s, &SampleBox::cube(3, 1.0), 200, 2).unwrap();
        assert!(!r.linear_growth);
    }

    #[test]
    fn completely_degenerate_structure_passes() {
        let s = HTypeStructure::degenerate(4, 2).unwrap();
        let r = check_hypotheses(&s, &SampleBox::cube(4, 1.0), 100, 2).unwrap();
        assert!(r.linear_growth && r.bounded_rows);
        assert_eq!(r.degenerate_fraction, 0.0);
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(check_hypotheses(&HTypeStructure::heisenberg(), &SampleBox::cube(3, 1.0), 0, 0).is_err());
    }
}
