use serde::{Deserialize, Serialize};

use super::field::{CostField, Derivs};

/// Measure-independent costs used as frozen `f`, `g` or as explicit couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExplicitFunction {
    Zero,
    Constant { value: f64 },
    /// `offset + Σ coefficients[k] x_k`.
    Linear {
        #[serde(default)]
        offset: f64,
        coefficients: Vec<f64>,
    },
    /// `height · exp(-|x - center|² / (2 width²))`.
    Gaussian { center: Vec<f64>, width: f64, height: f64 },
    /// `scale · R² q / (R² + q)` with `q = x1² + x2²`; bounded by `scale · R²`.
    TruncatedQuadratic { scale: f64, radius: f64 },
    Sum { terms: Vec<ExplicitFunction> },
}

impl ExplicitFunction {
    pub fn linear(coefficients: &[f64]) -> Self {
        ExplicitFunction::Linear {
            offset: 0.0,
            coefficients: coefficients.to_vec(),
        }
    }

    /// Adds `scale ·` the function (and derivatives up to `order`) into `out`.
    pub fn accumulate(&self, x: &[f64], scale: f64, order: usize, out: &mut Derivs) {
        let n = x.len();
        match self {
            ExplicitFunction::Zero => {}
            ExplicitFunction::Constant { value } => out.value += scale * value,
            ExplicitFunction::Linear { offset, coefficients } => {
                let mut v = *offset;
                for (c, xi) in coefficients.iter().zip(x) {
                    v += c * xi;
                }
                out.value += scale * v;
                if order >= 1 {
                    for (g, c) in out.grad.iter_mut().zip(coefficients).take(n) {
                        *g += scale * c;
                    }
                }
            }
            ExplicitFunction::Gaussian { center, width, height } => {
                let w2 = width * width;
                let mut r2 = 0.0;
                for k in 0..n {
                    let d = x[k] - center.get(k).copied().unwrap_or(0.0);
                    r2 += d * d;
                }
                let v = scale * height * (-0.5 * r2 / w2).exp();
                out.value += v;
                if order >= 1 {
                    for k in 0..n {
                        let dk = x[k] - center.get(k).copied().unwrap_or(0.0);
                        out.grad[k] -= v * dk / w2;
                        if order >= 2 {
                            for l in 0..n {
                                let dl = x[l] - center.get(l).copied().unwrap_or(0.0);
                                let id = if k == l { 1.0 } else { 0.0 };
                                out.hess[k * n + l] += v * (dk * dl / (w2 * w2) - id / w2);
                            }
                        }
                    }
                }
            }
            ExplicitFunction::TruncatedQuadratic { scale: s, radius } => {
                let r2 = radius * radius;
                let q = x[0] * x[0] + if n > 1 { x[1] * x[1] } else { 0.0 };
                let den = r2 + q;
                out.value += scale * s * r2 * q / den;
                if order >= 1 {
                    let d1 = scale * s * r2 * r2 / (den * den);
                    let planar = n.min(2);
                    for k in 0..planar {
                        out.grad[k] += d1 * 2.0 * x[k];
                    }
                    if order >= 2 {
                        let d2 = -2.0 * scale * s * r2 * r2 / (den * den * den);
                        for k in 0..planar {
                            for l in 0..planar {
                                out.hess[k * n + l] += d2 * 4.0 * x[k] * x[l];
                            }
                            out.hess[k * n + k] += 2.0 * d1;
                        }
                    }
                }
            }
            ExplicitFunction::Sum { terms } => {
                for t in terms {
                    t.accumulate(x, scale, order, out);
                }
            }
        }
    }

    pub fn sup_norm_bound(&self) -> Option<f64> {
        match self {
            ExplicitFunction::Zero => Some(0.0),
            ExplicitFunction::Constant { value } => Some(value.abs()),
            ExplicitFunction::Linear { coefficients, offset } => {
                if coefficients.iter().all(|&c| c == 0.0) {
                    Some(offset.abs())
                } else {
                    None
                }
            }
            ExplicitFunction::Gaussian { height, .. } => Some(height.abs()),
            ExplicitFunction::TruncatedQuadratic { scale, radius } => Some((scale * radius * radius).abs()),
            ExplicitFunction::Sum { terms } => terms.iter().map(|t| t.sup_norm_bound()).sum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ExplicitFunction::Zero => true,
            ExplicitFunction::Constant { value } => *value == 0.0,
            ExplicitFunction::Linear { offset, coefficients } => *offset == 0.0 && coefficients.iter().all(|&c| c == 0.0),
            ExplicitFunction::Gaussian { height, .. } => *height == 0.0,
            ExplicitFunction::TruncatedQuadratic { scale, .. } => *scale == 0.0,
            ExplicitFunction::Sum { terms } => terms.iter().all(|t| t.is_zero()),
        }
    }
}

impl CostField for ExplicitFunction {
    fn eval(&self, x: &[f64], _t: f64, order: usize, out: &mut Derivs) {
        out.n = x.len();
        out.clear();
        self.accumulate(x, 1.0, order, out);
    }

    fn sup_bound(&self) -> Option<f64> {
        self.sup_norm_bound()
    }

    fn is_zero(&self) -> bool {
        ExplicitFunction::is_zero(self)
    }
}
