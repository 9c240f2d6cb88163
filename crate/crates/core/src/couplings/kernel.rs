//! Compactly supported radial mollifiers.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::field::Derivs;
use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, unit_sphere_area, PiecewiseChebyshev};

/// `φ(z) = c (1 - |z|²/r²)⁴` on the ball of radius `r`, normalized to unit mass in
/// `R^n`, or its self-convolution `φ * φ` (supported on the ball of radius `2r`,
/// three dimensions only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Bump { dim: usize, radius: f64, c: f64 },
    Autocorrelation { radius: f64 },
}

impl Kernel {
    pub fn bump(dim: usize, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        Ok(Kernel::Bump {
            dim,
            radius,
            c: bump_constant(dim, radius),
        })
    }

    pub fn autocorrelation(dim: usize, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        if dim != 3 {
            return Err(Error::invalid("coupling.monotone", "the self-convolved kernel is available in three dimensions only"));
        }
        Ok(Kernel::Autocorrelation { radius })
    }

    pub fn support_radius(&self) -> f64 {
        match *self {
            Kernel::Bump { radius, .. } => radius,
            Kernel::Autocorrelation { radius } => 2.0 * radius,
        }
    }

    /// Radial profile `(k(s), k'(s), k''(s))`.
    pub fn profile(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            Kernel::Bump { radius, c, .. } => {
                let u = (s / radius).powi(2);
                if u >= 1.0 {
                    return (0.0, 0.0, 0.0);
                }
                let w = 1.0 - u;
                let w2 = w * w;
                let r2 = radius * radius;
                (
                    c * w2 * w2,
                    -8.0 * c * s / r2 * w2 * w,
                    -8.0 * c / r2 * (w2 * w - 6.0 * u * w2),
                )
            }
            Kernel::Autocorrelation { radius } => {
                let t = s / radius;
                if t >= 2.0 {
                    return (0.0, 0.0, 0.0);
                }
                let (v, d, dd) = unit_autocorrelation().eval(t);
                let r3 = radius * radius * radius;
                (v / r3, d / (r3 * radius), dd / (r3 * radius * radius))
            }
        }
    }

    /// Adds `scale · k(z)` and, up to `order`, its derivatives into `out`.
    #[inline]
    pub fn accumulate(&self, z: &[f64], scale: f64, order: usize, out: &mut Derivs) {
        let n = z.len();
        let s2: f64 = z.iter().map(|a| a * a).sum();
        match *self {
            Kernel::Bump { radius, c, .. } => {
                let r2 = radius * radius;
                let u = s2 / r2;
                if u >= 1.0 {
                    return;
                }
                let w = 1.0 - u;
                let w2 = w * w;
                out.value += scale * c * w2 * w2;
                if order == 0 {
                    return;
                }
                let g = -8.0 * scale * c / r2 * w2 * w;
                for k in 0..n {
                    out.grad[k] += g * z[k];
                }
                if order == 1 {
                    return;
                }
                let a = -8.0 * scale * c / r2;
                let diag = a * w2 * w;
                let off = -6.0 * a * w2 / r2;
                for i in 0..n {
                    for j in 0..n {
                        out.hess[i * n + j] += off * z[i] * z[j];
                    }
                    out.hess[i * n + i] += diag;
                }
            }
            Kernel::Autocorrelation { radius } => {
                let rr = 2.0 * radius;
                if s2 >= rr * rr {
                    return;
                }
                let s = s2.sqrt();
                let (v, d, dd) = self.profile(s);
                out.value += scale * v;
                if order == 0 {
                    return;
                }
                // tangential curvature k'(s)/s tends to k''(0)
                let tang = if s > 1e-7 * radius { d / s } else { dd };
                for k in 0..n {
                    out.grad[k] += scale * tang * z[k];
                }
                if order == 1 {
                    return;
                }
                let radial = if s > 1e-7 * radius { (dd - tang) / s2 } else { 0.0 };
                for i in 0..n {
                    for j in 0..n {
                        out.hess[i * n + j] += scale * radial * z[i] * z[j];
                    }
                    out.hess[i * n + i] += scale * tang;
                }
            }
        }
    }

    /// `Σ_i scale·w_i k(x - ξ_i)` over a particle cloud with flat point storage.
    pub fn accumulate_cloud(&self, points: &[f64], weights: &[f64], x: &[f64], scale: f64, order: usize, out: &mut Derivs) {
        match (*self, x.len()) {
            (Kernel::Autocorrelation { radius }, 3) => autocorrelation_cloud(radius, points, weights, x, scale, order, out),
            _ => {
                let n = x.len();
                let mut z = [0.0; crate::geometry::MAX_DIM];
                for (xi, &w) in points.chunks_exact(n).zip(weights) {
                    for d in 0..n {
                        z[d] = x[d] - xi[d];
                    }
                    self.accumulate(&z[..n], scale * w, order, out);
                }
            }
        }
    }

    fn dim(&self) -> usize {
        match *self {
            Kernel::Bump { dim, .. } => dim,
            Kernel::Autocorrelation { .. } => 3,
        }
    }

    /// Sampled `(sup|k|, sup|∇k|, sup ‖∇²k‖_F)` on a fine radial grid.
    pub fn derivative_sups(&self) -> (f64, f64, f64) {
        let n = self.dim() as f64;
        let rmax = self.support_radius();
        let samples = 20_000;
        let mut sups = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..=samples {
            let s = rmax * i as f64 / samples as f64;
            let (v, d, dd) = self.profile(s);
            let tang = if s > 0.0 { d / s } else { dd };
            sups.0 = sups.0.max(v.abs());
            sups.1 = sups.1.max(d.abs());
            sups.2 = sups.2.max((dd * dd + (n - 1.0) * tang * tang).sqrt());
        }
        // grid refinement slack
        let pad = 1.0 + 1e-6;
        (sups.0 * pad, sups.1 * pad, sups.2 * pad)
    }

    /// `‖k‖_{C²}` as the sum of the three sup norms.
    pub fn c2_norm(&self) -> f64 {
        let (a, b, c) = self.derivative_sups();
        a + b + c
    }

    /// Lipschitz constant `sup |k'|`.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Kernel::Bump { radius, c, .. } => 8.0 * c * (6.0f64 / 7.0).powi(3) / (7f64.sqrt() * radius),
            Kernel::Autocorrelation { .. } => self.derivative_sups().1,
        }
    }
}

fn autocorrelation_cloud(radius: f64, points: &[f64], weights: &[f64], x: &[f64], scale: f64, order: usize, out: &mut Derivs) {
    let series = unit_autocorrelation();
    let rr = 4.0 * radius * radius;
    let inv_r = 1.0 / radius;
    let (c0, c1, c2) = (inv_r.powi(3), inv_r.powi(4), inv_r.powi(5));
    let x = [x[0], x[1], x[2]];
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    let mut hess = [0.0; 6];
    for (xi, &w) in points.chunks_exact(3).zip(weights) {
        let z = [x[0] - xi[0], x[1] - xi[1], x[2] - xi[2]];
        let s2 = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
        if s2 >= rr {
            continue;
        }
        let s = s2.sqrt();
        let (v, d, dd) = series.eval(s * inv_r);
        value += w * v;
        if order == 0 {
            continue;
        }
        let (d, dd) = (d * c1 / c0, dd * c2 / c0);
        let tang = if s > 1e-7 * radius { d / s } else { dd };
        let wt = w * tang;
        grad[0] += wt * z[0];
        grad[1] += wt * z[1];
        grad[2] += wt * z[2];
        if order == 1 {
            continue;
        }
        let radial = if s > 1e-7 * radius { w * (dd - tang) / s2 } else { 0.0 };
        hess[0] += radial * z[0] * z[0] + wt;
        hess[1] += radial * z[0] * z[1];
        hess[2] += radial * z[0] * z[2];
        hess[3] += radial * z[1] * z[1] + wt;
        hess[4] += radial * z[1] * z[2];
        hess[5] += radial * z[2] * z[2] + wt;
    }
    let k = scale * c0;
    out.value += k * value;
    if order == 0 {
        return;
    }
    for i in 0..3 {
        out.grad[i] += k * grad[i];
    }
    if order == 1 {
        return;
    }
    let idx = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
    for i in 0..3 {
        for j in 0..3 {
            out.hess[i * 3 + j] += k * hess[idx[i][j]];
        }
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("coupling.radius", "must be positive and finite"))
    }
}

/// Normalizing constant of the bump in `R^n`: `∫ (1 - |z|²/r²)⁴ dz = ω_{n-1} r^n B(n/2, 5) / 2`.
pub fn bump_constant(dim: usize, radius: f64) -> f64 {
    let a = dim as f64 / 2.0;
    let beta = 24.0 / (a * (a + 1.0) * (a + 2.0) * (a + 3.0) * (a + 4.0));
    1.0 / (unit_sphere_area(dim) * radius.powi(dim as i32) * 0.5 * beta)
}

const AUTOCORRELATION_PIECES: usize = 32;
const AUTOCORRELATION_DEGREE: usize = 10;

/// `φ₁ * φ₁` for the unit-radius three-dimensional bump, as a function of `|z|` on `[0, 2]`.
fn unit_autocorrelation() -> &'static PiecewiseChebyshev {
    static SERIES: OnceLock<PiecewiseChebyshev> = OnceLock::new();
    SERIES.get_or_init(|| PiecewiseChebyshev::fit(0.0, 2.0, AUTOCORRELATION_PIECES, AUTOCORRELATION_DEGREE, radial_self_convolution))
}

/// Radial formula for radial `f, g` in three dimensions:
/// `(f*g)(s) = (2π/s) ∫ r f(r) [G(s+r) - G(|s-r|)] dr` with `G' (ρ) = ρ g(ρ)`.
fn radial_self_convolution(s: f64) -> f64 {
    let c = bump_constant(3, 1.0);
    let phi = |r: f64| if r < 1.0 { c * (1.0 - r * r).powi(4) } else { 0.0 };
    let big_g = |rho: f64| if rho < 1.0 { -(c / 10.0) * (1.0 - rho * rho).powi(5) } else { 0.0 };
    if s <= 0.0 {
        let (x, w) = gauss_legendre(16);
        return 4.0 * PI * x.iter().zip(&w).map(|(x, w)| {
            let r = 0.5 * (x + 1.0);
            0.5 * w * r * r * phi(r) * phi(r)
        }).sum::<f64>();
    }
    let mut cuts = vec![0.0, 1.0];
    for b in [1.0 - s, s, s - 1.0] {
        if b > 0.0 && b < 1.0 {
            cuts.push(b);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let (x, w) = gauss_legendre(16);
    let mut acc = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        for (xi, wi) in x.iter().zip(&w) {
            let r = a + half * (xi + 1.0);
            acc += half * wi * r * phi(r) * (big_g(s + r) - big_g((s - r).abs()));
        }
    }
    2.0 * PI * acc / s
}
