//! Small quadrature and approximation helpers.

use std::f64::consts::PI;

/// `Γ(k/2)` for a positive integer `k`.
pub fn gamma_half(k: usize) -> f64 {
    assert!(k > 0);
    if k % 2 == 0 {
        (1..k / 2).map(|i| i as f64).product()
    } else {
        // Γ(1/2) = √π, Γ(x + 1) = x Γ(x)
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x < k as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Surface area of the unit sphere in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma_half(n)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order {
        let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(order, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if order == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=order {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = order as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Chebyshev series on `[a, b]` with its first two derivative series.
#[derive(Debug, Clone)]
pub struct ChebyshevSeries {
    a: f64,
    b: f64,
    c0: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
}

impl ChebyshevSeries {
    /// Interpolates `f` at `degree + 1` Chebyshev points of the first kind.
    pub fn fit(a: f64, b: f64, degree: usize, f: impl Fn(f64) -> f64) -> Self {
        let n = degree + 1;
        let vals: Vec<f64> = (0..n)
            .map(|k| {
                let t = (PI * (k as f64 + 0.5) / n as f64).cos();
                f(0.5 * (a + b) + 0.5 * (b - a) * t)
            })
            .collect();
        let c0: Vec<f64> = (0..n)
            .map(|j| {
                let s: f64 = (0..n)
                    .map(|k| vals[k] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                    .sum();
                let scale = if j == 0 { 1.0 } else { 2.0 };
                scale * s / n as f64
            })
            .collect();
        let scale = 2.0 / (b - a);
        let c1 = derivative(&c0, scale);
        let c2 = derivative(&c1, scale);
        Self { a, b, c0, c1, c2 }
    }

    fn t(&self, x: f64) -> f64 {
        (2.0 * x - self.a - self.b) / (self.b - self.a)
    }

    pub fn value(&self, x: f64) -> f64 {
        clenshaw(&self.c0, self.t(x))
    }

    /// `(f, f', f'')` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let t = self.t(x);
        (clenshaw(&self.c0, t), clenshaw(&self.c1, t), clenshaw(&self.c2, t))
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c0
    }
}

/// Equal-width pieces of low-degree Chebyshev interpolants on `[a, b]`, stored in the
/// power basis of the local variable `u ∈ [-1, 1]` of each piece.
#[derive(Debug, Clone)]
pub struct PiecewiseChebyshev {
    a: f64,
    b: f64,
    half_width: f64,
    inv_width: f64,
    stride: usize,
    coef: Vec<f64>,
}

impl PiecewiseChebyshev {
    pub fn fit(a: f64, b: f64, pieces: usize, degree: usize, f: impl Fn(f64) -> f64) -> Self {
        assert!(pieces > 0 && b > a);
        let w = (b - a) / pieces as f64;
        let stride = degree + 1;
        let basis = chebyshev_power_basis(degree);
        let mut coef = Vec::with_capacity(pieces * stride);
        for k in 0..pieces {
            let lo = a + k as f64 * w;
            let cheb = ChebyshevSeries::fit(lo, lo + w, degree, &f);
            for i in 0..stride {
                coef.push((0..stride).map(|j| cheb.coefficients()[j] * basis[j * stride + i]).sum());
            }
        }
        Self {
            a,
            b,
            half_width: 0.5 * w,
            inv_width: 1.0 / w,
            stride,
            coef,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// `(f, f', f'')` at `x`; the end pieces are extended outside `[a, b]`.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let pieces = self.coef.len() / self.stride;
        let k = (((x.clamp(self.a, self.b) - self.a) * self.inv_width) as usize).min(pieces - 1);
        let center = self.a + (2 * k + 1) as f64 * self.half_width;
        let u = (x - center) / self.half_width;
        let c = &self.coef[k * self.stride..(k + 1) * self.stride];
        let (mut p, mut d, mut dd) = (c[self.stride - 1], 0.0, 0.0);
        for &ci in c[..self.stride - 1].iter().rev() {
            dd = dd * u + 2.0 * d;
            d = d * u + p;
            p = p * u + ci;
        }
        let s = 1.0 / self.half_width;
        (p, d * s, dd * s * s)
    }
}

/// Row `j` holds the power-basis coefficients of `T_j`.
fn chebyshev_power_basis(degree: usize) -> Vec<f64> {
    let n = degree + 1;
    let mut t = vec![0.0; n * n];
    t[0] = 1.0;
    if n > 1 {
        t[n + 1] = 1.0;
    }
    for j in 2..n {
        for i in 0..n {
            let up = if i > 0 { 2.0 * t[(j - 1) * n + i - 1] } else { 0.0 };
            t[j * n + i] = up - t[(j - 2) * n + i];
        }
    }
    t
}

fn derivative(c: &[f64], scale: f64) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n];
    for k in (0..n - 1).rev() {
        let next = if k + 2 < n { d[k + 2] } else { 0.0 };
        d[k] = next + 2.0 * (k + 1) as f64 * c[k + 1];
    }
    d[0] *= 0.5;
    d.truncate(n - 1);
    d.iter_mut().for_each(|v| *v *= scale);
    d
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_at_half_integers() {
        assert_eq!(gamma_half(2), 1.0);
        assert_eq!(gamma_half(8), 6.0);
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(10);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((i - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn piecewise_chebyshev_matches_the_function() {
        let s = PiecewiseChebyshev::fit(0.0, 2.0, 16, 10, |x| (1.3 * x).sin() * x.exp());
        for k in 0..=400 {
            let x = 0.005 * k as f64;
            let (v, d, _) = s.eval(x);
            assert!((v - (1.3 * x).sin() * x.exp()).abs() < 1e-14, "x={x}");
            let exact = x.exp() * ((1.3 * x).sin() + 1.3 * (1.3 * x).cos());
            assert!((d - exact).abs() < 1e-11, "x={x}");
        }
    }

    #[test]
    fn chebyshev_derivatives() {
        let s = ChebyshevSeries::fit(0.0, 2.0, 30, |x| (1.3 * x).sin());
        for k in 0..20 {
            let x = 0.1 * k as f64;
            let (v, d, dd) = s.eval(x);
            assert!((v - (1.3 * x).sin()).abs() < 1e-13);
            assert!((d - 1.3 * (1.3 * x).cos()).abs() < 1e-11);
            assert!((dd + 1.69 * (1.3 * x).sin()).abs() < 1e-9);
        }
    }
}
