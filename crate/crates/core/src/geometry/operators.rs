//! Exact polynomial arithmetic in three variables and the left-invariant fields
//! `X1 = ∂1 - x2 ∂3`, `X2 = ∂2 + x1 ∂3` acting on it.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

type Exponent = [u32; 3];

/// A polynomial `Σ c_α x^α` with sparse monomial storage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly3 {
    terms: BTreeMap<Exponent, f64>,
}

impl Poly3 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(coef: f64, exp: [u32; 3]) -> Self {
        let mut p = Self::zero();
        p.add_term(exp, coef);
        p
    }

    pub fn from_terms(terms: &[(f64, [u32; 3])]) -> Self {
        let mut p = Self::zero();
        for &(c, e) in terms {
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, exp: Exponent, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let c = self.terms.entry(exp).or_insert(0.0);
        *c += coef;
        if *c == 0.0 {
            self.terms.remove(&exp);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32; 3], &f64)> {
        self.terms.iter()
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32))
            .sum()
    }

    pub fn partial(&self, k: usize) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            if e[k] > 0 {
                let mut d = *e;
                d[k] -= 1;
                out.add_term(d, c * e[k] as f64);
            }
        }
        out
    }

    /// Multiplication by `x_k`.
    pub fn times_var(&self, k: usize) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            let mut d = *e;
            d[k] += 1;
            out.add_term(d, *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            out.add_term(*e, c * s);
        }
        out
    }
}

impl Add for &Poly3 {
    type Output = Poly3;

    fn add(self, rhs: &Poly3) -> Poly3 {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, *c);
        }
        out
    }
}

impl Sub for &Poly3 {
    type Output = Poly3;

    fn sub(self, rhs: &Poly3) -> Poly3 {
        self + &rhs.scale(-1.0)
    }
}

impl Neg for &Poly3 {
    type Output = Poly3;

    fn neg(self) -> Poly3 {
        self.scale(-1.0)
    }
}

impl Mul for &Poly3 {
    type Output = Poly3;

    fn mul(self, rhs: &Poly3) -> Poly3 {
        let mut out = Poly3::zero();
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                out.add_term([a[0] + b[0], a[1] + b[1], a[2] + b[2]], ca * cb);
            }
        }
        out
    }
}

/// `X1 u = ∂1 u - x2 ∂3 u`.
pub fn apply_x1(u: &Poly3) -> Poly3 {
    &u.partial(0) - &u.partial(2).times_var(1)
}

/// `X2 u = ∂2 u + x1 ∂3 u`.
pub fn apply_x2(u: &Poly3) -> Poly3 {
    &u.partial(1) + &u.partial(2).times_var(0)
}

/// `X1 X2 u - X2 X1 u`, which equals `2 ∂3 u` for these fields.
pub fn commutator(u: &Poly3) -> Poly3 {
    &apply_x1(&apply_x2(u)) - &apply_x2(&apply_x1(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_on_coordinates() {
        let x1 = Poly3::monomial(1.0, [1, 0, 0]);
        let x3 = Poly3::monomial(1.0, [0, 0, 1]);
        assert_eq!(apply_x1(&x1), Poly3::monomial(1.0, [0, 0, 0]));
        assert_eq!(apply_x1(&x3), Poly3::monomial(-1.0, [0, 1, 0]));
        assert_eq!(apply_x2(&x3), Poly3::monomial(1.0, [1, 0, 0]));
    }

    #[test]
    fn commutator_is_twice_the_vertical_derivative() {
        let x3 = Poly3::monomial(1.0, [0, 0, 1]);
        assert_eq!(commutator(&x3), Poly3::monomial(2.0, [0, 0, 0]));
        let u = Poly3::from_terms(&[(1.0, [2, 1, 3]), (-4.0, [0, 3, 1]), (0.5, [1, 1, 1])]);
        assert_eq!(commutator(&u), u.partial(2).scale(2.0));
    }

    #[test]
    fn arithmetic_cancels_exactly() {
        let p = Poly3::from_terms(&[(2.0, [1, 2, 0]), (-3.0, [0, 0, 4])]);
        assert!((&p - &p).is_zero());
        let sq = &p * &p;
        assert_eq!(sq.eval([1.0, 1.0, 1.0]), 1.0);
        assert_eq!(p.partial(2), Poly3::monomial(-12.0, [0, 0, 3]));
    }
}
