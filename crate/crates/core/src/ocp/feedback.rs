use std::sync::Arc;

use super::path::ControlledPath;
use super::pmp::CostateSolution;
use crate::error::{Error, Result};
use crate::geometry::MAX_DIM;
use crate::hamiltonian::HamiltonianSpec;

/// Spatial gradient `Du(x, t)` of a value function.
pub trait FeedbackField: Send + Sync {
    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()>;
}

impl<T: FeedbackField + ?Sized> FeedbackField for Arc<T> {
    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        (**self).gradient(x, t, out)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl FeedbackField for ZeroField {
    fn gradient(&self, x: &[f64], _t: f64, out: &mut [f64]) -> Result<()> {
        out[..x.len()].fill(0.0);
        Ok(())
    }
}

/// A closure `(x, t, out)` used as a gradient field.
pub struct FnField<F>(pub F);

impl<F> FeedbackField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) -> Result<()> + Send + Sync,
{
    fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        (self.0)(x, t, out)
    }
}

/// `Du(γ(t), t) = -p(t)` along one Pontryagin arc, interpolated in time.
#[derive(Debug, Clone)]
pub struct ArcCostateField {
    solution: Arc<CostateSolution>,
}

impl ArcCostateField {
    pub fn new(solution: Arc<CostateSolution>) -> Self {
        Self { solution }
    }

    pub fn solution(&self) -> &CostateSolution {
        &self.solution
    }
}

impl FeedbackField for ArcCostateField {
    fn gradient(&self, _x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.solution.costate_at(t, out);
        let n = self.solution.path.dim();
        out[..n].iter_mut().for_each(|v| *v = -*v);
        Ok(())
    }
}

struct FlowWork<'a> {
    spec: &'a HamiltonianSpec,
    field: &'a dyn FeedbackField,
    jet: crate::geometry::Jet,
    du: [f64; MAX_DIM],
    q: [f64; MAX_DIM],
}

impl FlowWork<'_> {
    fn eval(&mut self, x: &[f64], t: f64, a: &mut [f64], v: &mut [f64]) -> Result<()> {
        let n = x.len();
        let c = self.spec.control_dim();
        if self.field.gradient(x, t, &mut self.du).is_err() || self.du[..n].iter().any(|d| !d.is_finite()) {
            return Err(Error::FieldFailure { t, x: x.to_vec() });
        }
        self.spec.structure().eval_jet(x, 0, &mut self.jet);
        for d in self.du[..n].iter_mut() {
            *d = -*d;
        }
        self.jet.row_times_b(&self.du, &mut self.q);
        self.spec.optimal_control(&self.q[..c], a);
        self.jet.b_times(&a[..c], v);
        Ok(())
    }
}

/// RK4 integration of `x' = B a*(-Du B)` from `(x0, t0)` to `horizon`, with
/// `α(s) = a*(-Du(γ(s), s) B(γ(s)))` recorded at every node.
pub fn feedback_flow(
    spec: &HamiltonianSpec,
    x0: &[f64],
    field: &dyn FeedbackField,
    t0: f64,
    horizon: f64,
    steps: usize,
) -> Result<ControlledPath> {
    let n = spec.n();
    let c = spec.control_dim();
    Error::check_dim(n, x0.len())?;
    if steps == 0 || !(horizon > t0) {
        return Err(Error::invalid("grid", "need at least one step of positive length"));
    }
    let h = (horizon - t0) / steps as f64;
    let mut w = FlowWork {
        spec,
        field,
        jet: spec.structure().new_jet(),
        du: [0.0; MAX_DIM],
        q: [0.0; MAX_DIM],
    };
    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut controls = vec![0.0; (steps + 1) * c];
    let mut x = x0.to_vec();
    let mut a = [0.0; MAX_DIM];
    let mut k = [[0.0; MAX_DIM]; 4];
    let mut z = [0.0; MAX_DIM];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        states.extend_from_slice(&x);
        w.eval(&x, t, &mut controls[s * c..(s + 1) * c], &mut k[0])?;
        let coef = [0.5, 0.5, 1.0];
        for st in 1..4 {
            for i in 0..n {
                z[i] = x[i] + coef[st - 1] * h * k[st - 1][i];
            }
            let ts = if st == 3 { if s + 1 == steps { horizon } else { t + h } } else { t + 0.5 * h };
            let mut v = [0.0; MAX_DIM];
            w.eval(&z[..n], ts, &mut a, &mut v)?;
            k[st] = v;
        }
        for i in 0..n {
            x[i] += h / 6.0 * (k[0][i] + 2.0 * (k[1][i] + k[2][i]) + k[3][i]);
        }
    }
    states.extend_from_slice(&x);
    let mut v = [0.0; MAX_DIM];
    w.eval(&x, horizon, &mut controls[steps * c..], &mut v)?;
    ControlledPath::new(t0, horizon, n, c, states, controls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HTypeStructure;

    fn linear_field() -> FnField<impl Fn(&[f64], f64, &mut [f64]) -> Result<()> + Send + Sync> {
        FnField(|_x: &[f64], _t: f64, out: &mut [f64]| {
            out[..3].copy_from_slice(&[1.0, 1.0, 0.0]);
            Ok(())
        })
    }

    #[test]
    fn zero_field_keeps_the_point() {
        let spec = HamiltonianSpec::quadratic(HTypeStructure::heisenberg());
        let p = feedback_flow(&spec, &[0.3, -0.2, 1.0], &ZeroField, 0.0, 1.0, 20).unwrap();
        assert!(p.states().chunks(3).all(|x| x == [0.3, -0.2, 1.0]));
    }

    #[test]
    fn linear_value_gives_diagonal_line() {
        for eps in [0.0, 0.3] {
            let spec = HamiltonianSpec::quadratic(HTypeStructure::heisenberg().with_epsilon(eps).unwrap());
            let p = feedback_flow(&spec, &[0.0; 3], &linear_field(), 0.0, 1.0, 200).unwrap();
            for k in 0..=200 {
                let s = p.time(k);
                let x = p.state(k);
                assert!((x[0] + s).abs() < 1e-13 && (x[1] + s).abs() < 1e-13 && x[2].abs() < 1e-13);
                assert_eq!(&p.control(k)[..2], &[-1.0, -1.0]);
            }
        }
    }

    #[test]
    fn field_failure_reports_position() {
        let spec = HamiltonianSpec::quadratic(HTypeStructure::heisenberg());
        let bad = FnField(|x: &[f64], t: f64, _out: &mut [f64]| {
            if t > 0.5 {
                Err(Error::FieldFailure { t, x: x.to_vec() })
            } else {
                Ok(())
            }
        });
        let z = FnField(|x: &[f64], t: f64, out: &mut [f64]| {
            out[..3].fill(0.0);
            bad.gradient(x, t, out)
        });
        assert!(matches!(feedback_flow(&spec, &[0.0; 3], &z, 0.0, 1.0, 10), Err(Error::FieldFailure { .. })));
    }
}
