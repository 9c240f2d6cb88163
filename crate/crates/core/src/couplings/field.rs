use crate::geometry::MAX_DIM;

/// Value, gradient and row-major Hessian of a scalar field at one point.
#[derive(Debug, Clone)]
pub struct Derivs {
    pub n: usize,
    pub value: f64,
    pub grad: [f64; MAX_DIM],
    pub hess: [f64; MAX_DIM * MAX_DIM],
}

impl Derivs {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            value: 0.0,
            grad: [0.0; MAX_DIM],
            hess: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    pub fn clear(&mut self) {
        self.value = 0.0;
        self.grad[..self.n].fill(0.0);
        self.hess[..self.n * self.n].fill(0.0);
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad[..self.n]
    }

    pub fn hessian(&self) -> &[f64] {
        &self.hess[..self.n * self.n]
    }

    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.n + j]
    }
}

/// A cost `f(x, t)` that is C² in `x`. Terminal costs ignore `t`.
///
/// `eval` overwrites `out`; entries beyond the requested `order` (0, 1 or 2) may
/// be left stale.
pub trait CostField: Send + Sync {
    fn eval(&self, x: &[f64], t: f64, order: usize, out: &mut Derivs);

    fn value(&self, x: &[f64], t: f64) -> f64 {
        let mut d = Derivs::new(x.len());
        self.eval(x, t, 0, &mut d);
        d.value
    }

    /// Upper bound on `sup |f|` when known.
    fn sup_bound(&self) -> Option<f64> {
        None
    }

    /// True when the field is identically zero.
    fn is_zero(&self) -> bool {
        false
    }
}

impl<T: CostField + ?Sized> CostField for std::sync::Arc<T> {
    fn eval(&self, x: &[f64], t: f64, order: usize, out: &mut Derivs) {
        (**self).eval(x, t, order, out)
    }

    fn sup_bound(&self) -> Option<f64> {
        (**self).sup_bound()
    }

    fn is_zero(&self) -> bool {
        (**self).is_zero()
    }
}

impl<T: CostField + ?Sized> CostField for &T {
    fn eval(&self, x: &[f64], t: f64, order: usize, out: &mut Derivs) {
        (**self).eval(x, t, order, out)
    }

    fn sup_bound(&self) -> Option<f64> {
        (**self).sup_bound()
    }

    fn is_zero(&self) -> bool {
        (**self).is_zero()
    }
}
