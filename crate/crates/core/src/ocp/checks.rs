//! Structural checks on optimal controls and value functions.

use serde::Serialize;

use super::pmp::{solve_pmp_shooting, CostateSolution, ShootingOptions};
use super::problem::OcpProblem;
use super::value::CONTROL_BOUND_C2;
use crate::error::{Error, Result};
use crate::geometry::MAX_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackIdentityReport {
    /// `max_k |α(s_k) - a*(p̂_k B(x_k))|`.
    pub max_mismatch: f64,
    pub nodes: usize,
}

/// Compares the stored controls with the feedback law evaluated at the value
/// gradient `Du(x_k, s_k) = -p̂_k`, where `p̂_k` is the initial costate of an
/// independent multi-start solve from `(x_k, s_k)`.
pub fn feedback_identity(problem: &OcpProblem, sol: &CostateSolution, opts: &ShootingOptions) -> Result<FeedbackIdentityReport> {
    let path = &sol.path;
    let c = path.control_dim();
    let spec = problem.spec();
    let mut jet = spec.structure().new_jet();
    let mut q = [0.0; MAX_DIM];
    let mut a = [0.0; MAX_DIM];
    let mut worst = 0.0f64;
    for k in 0..=path.steps() {
        let x = path.state(k);
        let p = if k == path.steps() {
            let (_, dg) = problem.terminal_gradient(x);
            dg.iter().map(|v| -v).collect()
        } else {
            solve_pmp_shooting(problem, x, path.time(k), &[], opts)?.best.initial_costate
        };
        spec.structure().eval_jet(x, 0, &mut jet);
        jet.row_times_b(&p, &mut q);
        spec.optimal_control(&q[..c], &mut a);
        let d = (0..c).map(|j| (a[j] - path.control(k)[j]).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(d);
    }
    Ok(FeedbackIdentityReport {
        max_mismatch: worst,
        nodes: path.steps() + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlBoundReport {
    /// `‖α‖∞ / (1 + |x1| + |x2|)` at the start point.
    pub ratio: f64,
    pub constant: f64,
    pub holds: bool,
}

pub fn control_bound_check(sol: &CostateSolution) -> ControlBoundReport {
    let x = sol.path.start();
    let ratio = sol.path.control_sup_norm() / (1.0 + x.iter().take(2).map(|v| v.abs()).sum::<f64>());
    ControlBoundReport {
        ratio,
        constant: CONTROL_BOUND_C2,
        holds: ratio <= CONTROL_BOUND_C2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub tau: f64,
    pub sup_before: f64,
    pub sup_after: f64,
    pub cost_gap: f64,
    pub holds: bool,
}

/// Two optimal solutions from the same start must coincide on `[τ, T]`.
/// Refused at ε = 0, where the flow is not known to be unique.
pub fn uniqueness_after_start_check(
    problem: &OcpProblem,
    sol1: &CostateSolution,
    sol2: &CostateSolution,
    tau: f64,
    tol: f64,
) -> Result<UniquenessReport> {
    if problem.spec().structure().epsilon() == 0.0 {
        return Err(Error::Precondition("uniqueness after the initial time needs ε > 0".into()));
    }
    let same_start = sol1.path.t0() == sol2.path.t0()
        && sol1.path.start().iter().zip(sol2.path.start()).all(|(a, b)| (a - b).abs() <= 1e-12);
    if !same_start {
        return Err(Error::Precondition("solutions must share their initial point and time".into()));
    }
    let sup_before = sol1.path.sup_distance_after(&sol2.path, sol1.path.t0());
    let sup_after = sol1.path.sup_distance_after(&sol2.path, tau);
    Ok(UniquenessReport {
        tau,
        sup_before,
        sup_after,
        cost_gap: (sol1.cost - sol2.cost).abs(),
        holds: sup_after <= tol,
    })
}

/// `[λ u(y) + (1-λ) u(x) - u(λy + (1-λ)x)] / (λ(1-λ)|y-x|²)`.
pub fn semiconcavity_ratio(ux: f64, uy: f64, umid: f64, lambda: f64, x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (lambda * uy + (1.0 - lambda) * ux - umid) / (lambda * (1.0 - lambda) * d2)
}

/// `|u(x) - u(y)| / |x - y|`.
pub fn lipschitz_ratio(ux: f64, uy: f64, x: &[f64], y: &[f64]) -> f64 {
    let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (ux - uy).abs() / d
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::couplings::{CostField, ExplicitFunction};
    use crate::geometry::HTypeStructure;
    use crate::hamiltonian::HamiltonianSpec;

    fn problem(eps: f64) -> OcpProblem {
        let f: Arc<dyn CostField> = Arc::new(ExplicitFunction::Zero);
        let g: Arc<dyn CostField> = Arc::new(ExplicitFunction::linear(&[1.0, 1.0, 0.0]));
        let s = HTypeStructure::heisenberg().with_epsilon(eps).unwrap();
        OcpProblem::new(HamiltonianSpec::quadratic(s), f, g, 1.0, 40).unwrap()
    }

    #[test]
    fn uniqueness_guard_and_identical_solutions() {
        let o = ShootingOptions::default();
        let p0 = problem(0.0);
        let s = solve_pmp_shooting(&p0, &[0.0; 3], 0.0, &[], &o).unwrap().best;
        assert!(matches!(uniqueness_after_start_check(&p0, &s, &s, 0.1, 1e-6), Err(Error::Precondition(_))));
        let p = problem(0.1);
        let r = solve_pmp_shooting(&p, &[0.0; 3], 0.0, &[], &o).unwrap();
        let rep = uniqueness_after_start_check(&p, &r.best, &r.best, 0.1, 1e-6).unwrap();
        assert!(rep.holds && rep.sup_after == 0.0);
        for c in &r.candidates {
            assert!(uniqueness_after_start_check(&p, &r.best, c, 0.1, 1e-6).unwrap().holds);
        }
    }

    #[test]
    fn feedback_identity_on_closed_form() {
        let p = problem(0.1);
        let o = ShootingOptions::default();
        let s = solve_pmp_shooting(&p, &[0.2, 0.0, 0.0], 0.0, &[], &o).unwrap().best;
        assert!(feedback_identity(&p, &s, &o).unwrap().max_mismatch < 1e-10);
        assert!(control_bound_check(&s).holds);
    }

    #[test]
    fn chord_ratios() {
        // u = |x|² has semiconcavity constant exactly 1 and Lipschitz ratio |x + y|
        let x = [1.0, 0.0];
        let y = [0.0, 2.0];
        let u = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let mid = [0.75, 0.5];
        assert!((semiconcavity_ratio(u(&x), u(&y), u(&mid), 0.25, &x, &y) - 1.0).abs() < 1e-14);
        assert!((lipschitz_ratio(u(&x), u(&y), &x, &y) - 3.0 / 5f64.sqrt()).abs() < 1e-14);
    }
}
