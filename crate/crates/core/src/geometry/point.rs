use std::ops::Neg;

use serde::{Deserialize, Serialize};

/// A point of the first Heisenberg group, in exponential coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeisenbergPoint {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl HeisenbergPoint {
    pub const IDENTITY: HeisenbergPoint = HeisenbergPoint {
        x1: 0.0,
        x2: 0.0,
        x3: 0.0,
    };

    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn from_slice(x: &[f64]) -> Option<Self> {
        match x {
            [x1, x2, x3] => Some(Self::new(*x1, *x2, *x3)),
            _ => None,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    /// The group law `x ⊕ y`.
    pub fn group_op(&self, y: &HeisenbergPoint) -> HeisenbergPoint {
        HeisenbergPoint {
            x1: self.x1 + y.x1,
            x2: self.x2 + y.x2,
            x3: self.x3 + y.x3 - self.x2 * y.x1 + self.x1 * y.x2,
        }
    }

    pub fn inverse(&self) -> HeisenbergPoint {
        -*self
    }

    /// Homogeneous gauge `((x1² + x2²)² + x3²)^{1/4}`.
    pub fn h_norm(&self) -> f64 {
        let r2 = self.x1 * self.x1 + self.x2 * self.x2;
        (r2 * r2 + self.x3 * self.x3).sqrt().sqrt()
    }

    /// Gauge distance `‖x ⊕ y⁻¹‖`.
    pub fn h_distance(&self, y: &HeisenbergPoint) -> f64 {
        self.group_op(&y.inverse()).h_norm()
    }
}

impl Neg for HeisenbergPoint {
    type Output = HeisenbergPoint;

    fn neg(self) -> Self::Output {
        HeisenbergPoint::new(-self.x1, -self.x2, -self.x3)
    }
}

/// Generator `X1(x) = (1, 0, -x2)`.
pub fn x1_field(x: &HeisenbergPoint) -> [f64; 3] {
    [1.0, 0.0, -x.x2]
}

/// Generator `X2(x) = (0, 1, x1)`.
pub fn x2_field(x: &HeisenbergPoint) -> [f64; 3] {
    [0.0, 1.0, x.x1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(a: f64, b: f64, c: f64) -> HeisenbergPoint {
        HeisenbergPoint::new(a, b, c)
    }

    #[test]
    fn group_law_examples() {
        assert_eq!(p(1.0, 0.0, 0.0).group_op(&p(0.0, 1.0, 0.0)), p(1.0, 1.0, 1.0));
        assert_eq!(p(0.0, 1.0, 0.0).group_op(&p(1.0, 0.0, 0.0)), p(1.0, 1.0, -1.0));
        let a = p(0.3, -2.0, 7.5);
        assert_eq!(a.group_op(&HeisenbergPoint::IDENTITY), a);
    }

    #[test]
    fn gauge_examples() {
        assert_eq!(HeisenbergPoint::IDENTITY.h_norm(), 0.0);
        assert!((p(1.0, 1.0, 1.0).h_norm() - 5f64.powf(0.25)).abs() < 1e-15);
        assert!((p(1.0, 1.0, 1.0).h_norm() - 1.495349).abs() < 1e-6);
        assert_eq!(p(0.0, 0.0, 4.0).h_norm(), 2.0);
    }

    #[test]
    fn gauge_is_homogeneous_under_dilation() {
        let x = p(0.7, -1.1, 2.3);
        let lam = 1.7;
        let dil = p(lam * x.x1, lam * x.x2, lam * lam * x.x3);
        assert!((dil.h_norm() - lam * x.h_norm()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn group_is_associative(a in prop::array::uniform3(-10.0f64..10.0),
                                b in prop::array::uniform3(-10.0f64..10.0),
                                c in prop::array::uniform3(-10.0f64..10.0)) {
            let (a, b, c) = (p(a[0], a[1], a[2]), p(b[0], b[1], b[2]), p(c[0], c[1], c[2]));
            let l = a.group_op(&b).group_op(&c);
            let r = a.group_op(&b.group_op(&c));
            let scale = 1.0 + l.x3.abs();
            prop_assert!((l.x1 - r.x1).abs() <= 1e-12);
            prop_assert!((l.x2 - r.x2).abs() <= 1e-12);
            prop_assert!((l.x3 - r.x3).abs() <= 1e-12 * scale * 100.0);
        }

        #[test]
        fn inverse_and_identity(a in prop::array::uniform3(-10.0f64..10.0)) {
            let a = p(a[0], a[1], a[2]);
            prop_assert_eq!(a.group_op(&a.inverse()), HeisenbergPoint::IDENTITY);
            prop_assert_eq!(a.inverse().group_op(&a), HeisenbergPoint::IDENTITY);
            prop_assert_eq!(HeisenbergPoint::IDENTITY.group_op(&a), a);
        }
    }
}
