//! Desk-scale run of every module invariant with fixed seeds.
//!
//! Each check yields one [`InvariantResult`]. A [`Mutation`] swaps a library
//! routine for a deliberately broken copy, so that the suite can be shown to
//! catch it.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{cost_cases, start_points};
use crate::couplings::{lipschitz_in_measure_check, CostField, CouplingSpec, Derivs, ExplicitFunction};
use crate::error::Result;
use crate::geometry::operators::{commutator, Poly3};
use crate::geometry::{check_hypotheses, Cutoff, HTypeStructure, HeisenbergPoint, SampleBox};
use crate::hamiltonian::HamiltonianSpec;
use crate::hjb_grid::{solve_hjb, GridSpec};
use crate::mfg::{apply_t, mild_certificate, solve_equilibrium, spread_probes, MfgOptions, MfgProblem, MfgStatus};
use crate::ocp::{
    control_bound_check, cost, feedback_identity, pmp_rhs, solve_direct, solve_pmp_shooting, value, ControlledPath,
    DirectOptions, FnField, OcpProblem, ShootingOptions, ValueOptions,
};
use crate::transport::{pushforward, sample_initial, InitialDensity, Kde, MeasurePath, ParticleMeasure};

/// Deliberate defects used to check that the suite detects them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mutation {
    /// The group law adds `-y3` instead of `y3` in the third coordinate.
    GroupLawSignFlip,
    /// The drift omits the contribution of the ε columns of `B^ε`.
    DropEpsilonDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Pass,
    Fail,
    /// Not applicable to the configured structure.
    Skip,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Skip => "skip",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantResult {
    /// `module.check`.
    pub name: &'static str,
    pub outcome: Outcome,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub structure: String,
    pub epsilon: f64,
    pub seed: u64,
    pub mutation: Option<Mutation>,
    pub results: Vec<InvariantResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.outcome != Outcome::Fail)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.results.iter().filter(|r| r.outcome == Outcome::Fail).map(|r| r.name).collect()
    }

    pub fn result(&self, name: &str) -> Option<&InvariantResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

fn check(name: &'static str, measured: f64, threshold: f64, passed: bool, detail: impl Into<String>) -> InvariantResult {
    InvariantResult {
        name,
        outcome: if passed { Outcome::Pass } else { Outcome::Fail },
        measured,
        threshold,
        detail: detail.into(),
    }
}

fn at_most(name: &'static str, measured: f64, threshold: f64, detail: impl Into<String>) -> InvariantResult {
    check(name, measured, threshold, measured <= threshold, detail)
}

fn skip(name: &'static str, detail: impl Into<String>) -> InvariantResult {
    InvariantResult {
        name,
        outcome: Outcome::Skip,
        measured: f64::NAN,
        threshold: f64::NAN,
        detail: detail.into(),
    }
}

fn errored(name: &'static str, e: crate::Error) -> InvariantResult {
    check(name, f64::NAN, f64::NAN, false, format!("error: {e}"))
}

fn run(name: &'static str, f: impl FnOnce() -> Result<InvariantResult>) -> InvariantResult {
    f().unwrap_or_else(|e| errored(name, e))
}

/// Runs the whole suite on `structure` (its ε and truncation included).
pub fn validate(structure: &HTypeStructure, seed: u64, mutation: Option<Mutation>) -> ValidationReport {
    let mut results = Vec::new();
    results.extend(geometry_suite(structure, seed, mutation));
    results.extend(hamiltonian_suite(structure, seed, mutation));
    results.extend(coupling_suite(structure, seed));
    results.extend(ocp_suite(structure));
    results.extend(hjb_suite(structure));
    results.extend(transport_suite(structure, seed));
    results.extend(mfg_suite(structure, seed));
    ValidationReport {
        structure: structure.name().to_string(),
        epsilon: structure.epsilon(),
        seed,
        mutation,
        results,
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-half_width..half_width)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn group_op(x: [f64; 3], y: [f64; 3], mutation: Option<Mutation>) -> [f64; 3] {
    let mut z = HeisenbergPoint::new(x[0], x[1], x[2])
        .group_op(&HeisenbergPoint::new(y[0], y[1], y[2]))
        .to_array();
    if mutation == Some(Mutation::GroupLawSignFlip) {
        z[2] -= 2.0 * y[2];
    }
    z
}

const GROUP_TOL: f64 = 1e-12;

fn geometry_suite(s: &HTypeStructure, seed: u64, mutation: Option<Mutation>) -> Vec<InvariantResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut assoc = 0.0f64;
    let mut ident = 0.0f64;
    for _ in 0..1000 {
        let p = |r: &mut ChaCha8Rng| -> [f64; 3] { [0, 1, 2].map(|_| r.random_range(-2.0..2.0)) };
        let (x, y, z) = (p(&mut rng), p(&mut rng), p(&mut rng));
        let l = group_op(group_op(x, y, mutation), z, mutation);
        let r = group_op(x, group_op(y, z, mutation), mutation);
        assoc = assoc.max(max_abs_diff(&l, &r) / (1.0 + norm(&l)));
        let inv = HeisenbergPoint::new(x[0], x[1], x[2]).inverse().to_array();
        ident = ident
            .max(max_abs_diff(&group_op(x, [0.0; 3], mutation), &x))
            .max(max_abs_diff(&group_op([0.0; 3], x, mutation), &x))
            .max(norm(&group_op(x, inv, mutation)))
            .max(norm(&group_op(inv, x, mutation)));
    }
    out.push(at_most("geometry.associativity", assoc, GROUP_TOL, "1000 random triples in [-2,2]^3, relative"));
    out.push(at_most("geometry.identity_inverse", ident, GROUP_TOL, "x+0, 0+x, x+x^-1 on 1000 points"));

    let polys = [
        Poly3::from_terms(&[(1.0, [0, 0, 1])]),
        Poly3::from_terms(&[(2.0, [1, 1, 1]), (-1.0, [0, 2, 0])]),
        Poly3::from_terms(&[(0.5, [2, 0, 2]), (3.0, [0, 1, 3]), (1.0, [3, 0, 0])]),
        Poly3::from_terms(&[(1.0, [1, 2, 2]), (-2.0, [2, 1, 1]), (0.25, [0, 0, 4])]),
    ];
    let mut comm = 0.0f64;
    for u in &polys {
        let target = u.partial(2).scale(2.0);
        for _ in 0..50 {
            let x = [0, 1, 2].map(|_| rng.random_range(-2.0..2.0));
            comm = comm.max((commutator(u).eval(x) - target.eval(x)).abs());
        }
    }
    out.push(at_most("geometry.commutator", comm, 1e-10, "X1X2u - X2X1u = 2 d3 u on test polynomials"));

    out.push(run("geometry.rank", || {
        let n = s.n();
        let eps = s.epsilon();
        let mut extreme = if eps > 0.0 { f64::INFINITY } else { 0.0f64 };
        for _ in 0..200 {
            let x = uniform(&mut rng, n, 2.0);
            let b = s.matrix_b(&x)?;
            let g = &b * b.transpose();
            if eps > 0.0 {
                let lmin = g.symmetric_eigen().eigenvalues.min();
                extreme = extreme.min(lmin / (eps * eps));
            } else {
                let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max).powi(n as i32);
                extreme = extreme.max(g.determinant().abs() / scale);
            }
        }
        Ok(if eps > 0.0 {
            check("geometry.rank", extreme, 1e-8, extreme >= 1e-8, "min eigenvalue of B B^T over eps^2")
        } else if s.control_dim() < n {
            at_most("geometry.rank", extreme, 1e-12, "relative |det B B^T| at eps = 0")
        } else {
            skip("geometry.rank", "B is square at eps = 0")
        })
    }));

    let mut cut = (0.0f64, 0.0f64, 0.0f64);
    let base = Cutoff::new(1.0).expect("positive level");
    let mut base_sup = (0.0f64, 0.0f64);
    for k in 0..=4000 {
        let t = -3.0 + 6.0 * k as f64 / 4000.0;
        let (_, d, dd) = base.eval(t);
        base_sup = (base_sup.0.max(d.abs()), base_sup.1.max(dd.abs()));
    }
    for level in [1.0, 2.0, 5.0, 10.0] {
        let c = Cutoff::new(level).expect("positive level");
        for k in 0..=4000 {
            let xi = -3.0 * level + 6.0 * level * k as f64 / 4000.0;
            let (v, d, dd) = c.eval(xi);
            if xi.abs() <= level {
                cut.0 = cut.0.max((v - xi).abs());
            } else if xi.abs() >= 2.0 * level {
                cut.0 = cut.0.max(v.abs());
            }
            cut.1 = cut.1.max(d.abs() / base_sup.0);
            cut.2 = cut.2.max(dd.abs() / base_sup.1);
        }
    }
    out.push(check(
        "geometry.cutoff",
        cut.0,
        0.0,
        cut.0 == 0.0 && cut.1 <= 1.0 + 1e-12 && cut.2 <= 1.0 + 1e-12,
        format!("N in {{1,2,5,10}}; derivative sups over the N = 1 sups: {:.6}, {:.6}", cut.1, cut.2),
    ));

    out.push(run("geometry.hypotheses", || {
        let r = check_hypotheses(s, &SampleBox::cube(s.n(), 2.0), 2000, seed)?;
        Ok(check(
            "geometry.hypotheses",
            r.degenerate_fraction,
            f64::NAN,
            r.linear_growth,
            format!("linear growth {}, bounded rows {}", r.linear_growth, r.bounded_rows),
        ))
    }));
    out
}

fn drift_with(spec: &HamiltonianSpec, x: &[f64], p: &[f64], mutation: Option<Mutation>) -> Result<Vec<f64>> {
    if mutation == Some(Mutation::DropEpsilonDrift) {
        let stripped = spec.with_structure(spec.structure().clone().with_epsilon(0.0)?);
        return Ok(stripped.drift(x, p)?.velocity);
    }
    Ok(spec.drift(x, p)?.velocity)
}

/// Smallest eps used by the ε-sensitive checks when the structure has ε = 0.
const PROBE_EPSILON: f64 = 0.1;
const DRIFT_FD_STEP: f64 = 1e-6;
pub const DRIFT_FD_TOL: f64 = 1e-5;

/// Largest relative error between the drift and central differences of the
/// Hamiltonian in `p` over `samples` points with `|pB| ≥ 0.1`.
pub fn drift_fd_error(spec: &HamiltonianSpec, samples: usize, seed: u64, mutation: Option<Mutation>) -> Result<f64> {
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut taken = 0;
    let mut q = vec![0.0; spec.control_dim()];
    while taken < samples {
        let x = uniform(&mut rng, n, 2.0);
        let p = uniform(&mut rng, n, 2.0);
        let b = spec.structure().matrix_b(&x)?;
        for (j, qj) in q.iter_mut().enumerate() {
            *qj = (0..n).map(|i| p[i] * b[(i, j)]).sum();
        }
        if norm(&q) < 0.1 {
            continue;
        }
        taken += 1;
        let d = drift_with(spec, &x, &p, mutation)?;
        let mut fd = vec![0.0; n];
        let mut pp = p.clone();
        for i in 0..n {
            pp[i] = p[i] + DRIFT_FD_STEP;
            let hp = spec.hamiltonian(&x, &pp)?;
            pp[i] = p[i] - DRIFT_FD_STEP;
            let hm = spec.hamiltonian(&x, &pp)?;
            pp[i] = p[i];
            fd[i] = (hp - hm) / (2.0 * DRIFT_FD_STEP);
        }
        let diff: Vec<f64> = d.iter().zip(&fd).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / norm(&fd).max(1e-300));
    }
    Ok(worst)
}

fn hamiltonian_suite(s: &HTypeStructure, seed: u64, mutation: Option<Mutation>) -> Vec<InvariantResult> {
    let n = s.n();
    let mut out = Vec::new();
    out.push(run("hamiltonian.legendre", || {
        let spec = HamiltonianSpec::quadratic(s.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
        let points = 41;
        let mut worst = 0.0f64;
        let mut bound = 0.0f64;
        for _ in 0..200 {
            let x = uniform(&mut rng, n, 2.0);
            let p = uniform(&mut rng, n, 1.0);
            let b = s.matrix_b(&x)?;
            let c = spec.control_dim();
            let q: Vec<f64> = (0..c).map(|j| (0..n).map(|i| p[i] * b[(i, j)]).sum()).collect();
            let r = q.iter().map(|v| v.abs()).fold(0.0, f64::max) + 1.0;
            let h = 2.0 * r / (points - 1) as f64;
            // the objective is separable in the control coordinates
            let grid_max: f64 = q
                .iter()
                .map(|qj| {
                    (0..points)
                        .map(|k| {
                            let a = -r + k as f64 * h;
                            -qj * a - 0.5 * a * a
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum();
            let exact = spec.hamiltonian(&x, &p)?;
            let tol = 0.5 * c as f64 * (0.5 * h) * (0.5 * h) + 1e-12;
            if grid_max > exact + 1e-12 {
                worst = f64::INFINITY;
            }
            worst = worst.max((exact - grid_max) / tol);
            bound = bound.max(tol);
        }
        Ok(at_most("hamiltonian.legendre", worst, 1.0, format!("gap over grid resolution bound, 41 points per axis, max bound {bound:.3e}")))
    }));

    let mut eps_levels = vec![s.epsilon()];
    if s.epsilon() == 0.0 {
        eps_levels.push(PROBE_EPSILON);
    }
    out.push(run("hamiltonian.drift_fd", || {
        let mut worst = 0.0f64;
        for &eps in &eps_levels {
            for gamma in [2.0, 1.5, 1.0] {
                let spec = HamiltonianSpec::power(s.clone().with_epsilon(eps)?, gamma)?;
                worst = worst.max(drift_fd_error(&spec, 1000, seed, mutation)?);
            }
        }
        Ok(at_most("hamiltonian.drift_fd", worst, DRIFT_FD_TOL, format!("gamma in {{2,1.5,1}}, eps in {eps_levels:?}, 1000 samples each")))
    }));

    if s.name().starts_with("heisenberg") && n == 3 {
        out.push(run("hamiltonian.sublinearity", || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x22);
            let mut worst = 0.0f64;
            for gamma in [2.0, 1.5, 1.0] {
                let spec = HamiltonianSpec::power(s.clone(), gamma)?;
                let c = 1.0 + s.epsilon() * s.epsilon();
                for _ in 0..1000 {
                    let x = uniform(&mut rng, 3, 3.0);
                    let p = uniform(&mut rng, 3, 3.0);
                    let d = norm(&spec.drift(&x, &p)?.velocity);
                    let bound = gamma * (1.0 + x[0].abs() + x[1].abs()).powi(2) * norm(&p).max(1.0).powf(gamma - 1.0) * c;
                    worst = worst.max(d / bound);
                }
            }
            Ok(at_most("hamiltonian.sublinearity", worst, 1.0, "|drift| over gamma (1+|x1|+|x2|)^2 max(1,|p|)^(gamma-1) (1+eps^2)"))
        }));
    } else {
        out.push(skip("hamiltonian.sublinearity", "bound is stated for the Heisenberg instance"));
    }
    out
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Result<ParticleMeasure> {
    let points = (0..count * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ParticleMeasure::uniform(n, points)
}

fn coupling_suite(s: &HTypeStructure, seed: u64) -> Vec<InvariantResult> {
    let n = s.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x33);
    let mut out = Vec::new();
    let spec = match CouplingSpec::convolution(n, 1.0, 0.7) {
        Ok(c) => c,
        Err(e) => return vec![errored("couplings.c2_bound", e)],
    };
    out.push(run("couplings.c2_bound", || {
        let bound = spec.c2_bound().unwrap_or(f64::INFINITY);
        let mut sup = (0.0f64, 0.0f64, 0.0f64);
        let mut d = Derivs::new(n);
        for _ in 0..20 {
            let m = random_measure(&mut rng, n, 50)?;
            for _ in 0..50 {
                let x = uniform(&mut rng, n, 1.5);
                spec.eval(&m, &x, 2, &mut d);
                sup.0 = sup.0.max(d.value.abs());
                sup.1 = sup.1.max(norm(d.gradient()));
                sup.2 = sup.2.max(norm(d.hessian()));
            }
        }
        let total = sup.0 + sup.1 + sup.2;
        Ok(at_most("couplings.c2_bound", total, bound, "sampled C2 norm over 20 measures, 50 points each"))
    }));
    out.push(run("couplings.derivatives_fd", || {
        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut d = Derivs::new(n);
        let mut dp = Derivs::new(n);
        let mut dm = Derivs::new(n);
        for _ in 0..10 {
            let m = random_measure(&mut rng, n, 30)?;
            for _ in 0..10 {
                let x = uniform(&mut rng, n, 0.8);
                spec.eval(&m, &x, 2, &mut d);
                let mut fd_g = vec![0.0; n];
                let mut fd_h = vec![0.0; n * n];
                let mut xp = x.clone();
                for i in 0..n {
                    xp[i] = x[i] + h;
                    spec.eval(&m, &xp, 1, &mut dp);
                    xp[i] = x[i] - h;
                    spec.eval(&m, &xp, 1, &mut dm);
                    xp[i] = x[i];
                    fd_g[i] = (dp.value - dm.value) / (2.0 * h);
                    for j in 0..n {
                        fd_h[i * n + j] = (dp.grad[j] - dm.grad[j]) / (2.0 * h);
                    }
                }
                let eg: Vec<f64> = fd_g.iter().zip(d.gradient()).map(|(a, b)| a - b).collect();
                let eh: Vec<f64> = fd_h.iter().zip(d.hessian()).map(|(a, b)| a - b).collect();
                let scale_g = norm(d.gradient()).max(1e-3);
                let scale_h = norm(d.hessian()).max(1e-3);
                worst = worst.max(norm(&eg) / scale_g).max(norm(&eh) / scale_h);
            }
        }
        Ok(at_most("couplings.derivatives_fd", worst, 1e-5, "relative error of gradient and Hessian, step 1e-5"))
    }));
    out.push(run("couplings.lipschitz_in_measure", || {
        let mut worst = 0.0f64;
        let mut holds = true;
        for _ in 0..10 {
            let m1 = random_measure(&mut rng, n, 40)?;
            let shift = rng.random_range(0.01..0.5);
            let pts: Vec<f64> = m1.points().iter().map(|v| v + shift * rng.random_range(-1.0..1.0)).collect();
            let m2 = ParticleMeasure::uniform(n, pts)?;
            let probes: Vec<f64> = (0..40 * n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let r = lipschitz_in_measure_check(&spec, &m1, &m2, &probes)?;
            holds &= r.holds;
            worst = worst.max(r.ratio / r.bound);
        }
        Ok(check("couplings.lipschitz_in_measure", worst, 1.0, holds, "sup |F[m1]-F[m2]| / (L d1) over 10 perturbed pairs"))
    }));
    out
}

fn corpus_problem(s: &HTypeStructure, case: usize, steps: usize) -> Result<OcpProblem> {
    let c = &cost_cases()[case];
    let f: Arc<dyn CostField> = Arc::new(c.running.clone());
    let g: Arc<dyn CostField> = Arc::new(c.terminal.clone());
    OcpProblem::new(HamiltonianSpec::quadratic(s.clone()), f, g, 1.0, steps)
}

/// RK4 reintegration of the Hamiltonian system from the stored initial costate with
/// `refine` substeps per grid step; sup distance to the stored nodes.
fn integration_defect(problem: &OcpProblem, x0: &[f64], p0: &[f64], stored: &crate::ocp::CostateSolution, refine: usize) -> Result<f64> {
    let n = x0.len();
    let steps = stored.path.steps();
    let h = stored.path.dt() / refine as f64;
    let mut x = x0.to_vec();
    let mut p = p0.to_vec();
    let mut worst = 0.0f64;
    for k in 0..steps {
        for r in 0..refine {
            let t = stored.path.time(k) + r as f64 * h;
            let (k1x, k1p) = pmp_rhs(problem, &x, &p, t)?;
            let mid = |a: &[f64], d: &[f64], s: f64| -> Vec<f64> { a.iter().zip(d).map(|(u, v)| u + s * v).collect() };
            let (k2x, k2p) = pmp_rhs(problem, &mid(&x, &k1x, 0.5 * h), &mid(&p, &k1p, 0.5 * h), t + 0.5 * h)?;
            let (k3x, k3p) = pmp_rhs(problem, &mid(&x, &k2x, 0.5 * h), &mid(&p, &k2p, 0.5 * h), t + 0.5 * h)?;
            let (k4x, k4p) = pmp_rhs(problem, &mid(&x, &k3x, h), &mid(&p, &k3p, h), t + h)?;
            for i in 0..n {
                x[i] += h / 6.0 * (k1x[i] + 2.0 * (k2x[i] + k3x[i]) + k4x[i]);
                p[i] += h / 6.0 * (k1p[i] + 2.0 * (k2p[i] + k3p[i]) + k4p[i]);
            }
        }
        worst = worst
            .max(max_abs_diff(&x, stored.path.state(k + 1)))
            .max(max_abs_diff(&p, stored.costate(k + 1)));
    }
    Ok(worst)
}

fn ocp_suite(s: &HTypeStructure) -> Vec<InvariantResult> {
    let n = s.n();
    let eps = if s.epsilon() > 0.0 { s.epsilon() } else { PROBE_EPSILON };
    let se = match s.clone().with_epsilon(eps) {
        Ok(v) => v,
        Err(e) => return vec![errored("ocp.closed_form", e)],
    };
    let x0 = start_points(n)[1].clone();
    let shooting = ShootingOptions::default();
    let mut out = Vec::new();

    out.push(run("ocp.closed_form", || {
        let h = HTypeStructure::heisenberg();
        let p = corpus_problem(&h, 0, 200)?;
        let r = solve_pmp_shooting(&p, &[0.0; 3], 0.0, &[], &shooting)?;
        Ok(at_most("ocp.closed_form", (r.best.cost + 1.0).abs(), 1e-6, "g = x1 + x2 on the Heisenberg group, value -1 at the origin"))
    }));

    out.push(run("ocp.feedback_identity", || {
        let p = corpus_problem(&se, 3, 200)?;
        let r = solve_pmp_shooting(&p, &x0, 0.0, &[], &shooting)?;
        let f = feedback_identity(&p, &r.best, &shooting)?;
        Ok(at_most("ocp.feedback_identity", f.max_mismatch, 1e-8, format!("gaussian-pair at eps {eps}")))
    }));

    out.push(run("ocp.rk4_order", || {
        let mut defects = Vec::new();
        for steps in [20, 40] {
            let p = corpus_problem(&se, 3, steps)?;
            let r = solve_pmp_shooting(&p, &x0, 0.0, &[], &shooting)?;
            defects.push(integration_defect(&p, &x0, &r.best.initial_costate, &r.best, 16)?);
        }
        let ratio = defects[0] / defects[1];
        Ok(check(
            "ocp.rk4_order",
            ratio,
            16.0,
            (10.0..=22.0).contains(&ratio),
            format!("defect {:.3e} at 20 steps, {:.3e} at 40 steps", defects[0], defects[1]),
        ))
    }));

    out.push(run("ocp.pmp_vs_direct", || {
        let p = corpus_problem(&se, 3, 100)?;
        let r = solve_pmp_shooting(&p, &x0, 0.0, &[], &shooting)?;
        let d = solve_direct(&p, &x0, 0.0, crate::ocp::control_bound(&x0), &DirectOptions { restarts: 5, ..DirectOptions::default() })?;
        Ok(at_most("ocp.pmp_vs_direct", (r.best.cost - d.cost).abs(), 1e-3, "gaussian-pair, 100 steps, 5 restarts"))
    }));

    out.push(run("ocp.value_dominance_and_control_bound", || {
        let mut worst_gap = f64::NEG_INFINITY;
        let mut bound_ok = true;
        let mut worst_ratio = 0.0f64;
        for case in 0..cost_cases().len() {
            let p = corpus_problem(&se, case, 100)?;
            for x in start_points(n) {
                let r = solve_pmp_shooting(&p, &x, 0.0, &[], &shooting)?;
                let rest = ControlledPath::at_rest(&x, 0.0, 1.0, 100, p.control_dim())?;
                worst_gap = worst_gap.max(r.best.cost - cost(&rest, p.spec(), p.running(), p.terminal()));
                let b = control_bound_check(&r.best);
                bound_ok &= b.holds;
                worst_ratio = worst_ratio.max(b.ratio);
            }
        }
        Ok(check(
            "ocp.value_dominance_and_control_bound",
            worst_gap,
            0.0,
            worst_gap <= 1e-12 && bound_ok,
            format!("value minus zero-control cost; worst control ratio {worst_ratio:.4}"),
        ))
    }));
    out
}

fn hjb_suite(s: &HTypeStructure) -> Vec<InvariantResult> {
    if s.n() > 3 {
        return vec![
            skip("hjb.monotonicity", "grid solver suite runs in dimension at most 3"),
            skip("hjb.comparison", "grid solver suite runs in dimension at most 3"),
        ];
    }
    let grid = GridSpec {
        half_width: 2.0,
        resolution: 13,
        time_steps: 5,
        control_points: 5,
    };
    let solve = |f: ExplicitFunction, g: ExplicitFunction| -> Result<Vec<f64>> {
        let p = OcpProblem::new(HamiltonianSpec::quadratic(s.clone()), Arc::new(f), Arc::new(g), 1.0, 5)?;
        Ok(solve_hjb(&p, grid)?.level(0).to_vec())
    };
    let mono = run("hjb.monotonicity", || {
        let g = ExplicitFunction::TruncatedQuadratic { scale: 0.5, radius: 2.0 };
        let bumped = ExplicitFunction::Sum {
            terms: vec![
                g.clone(),
                ExplicitFunction::Gaussian {
                    center: vec![0.3, -0.2, 0.1],
                    width: 0.7,
                    height: 0.4,
                },
            ],
        };
        let u1 = solve(ExplicitFunction::Zero, g)?;
        let u2 = solve(ExplicitFunction::Zero, bumped)?;
        let worst = u1.iter().zip(&u2).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        Ok(at_most("hjb.monotonicity", worst, 0.0, "max of u(g) - u(g + bump) over nodes"))
    });
    let comp = run("hjb.comparison", || {
        let g = ExplicitFunction::linear(&[0.5, -0.5]);
        let u1 = solve(ExplicitFunction::Constant { value: 0.1 }, g.clone())?;
        let u2 = solve(ExplicitFunction::Constant { value: 0.3 }, g)?;
        let worst = u1.iter().zip(&u2).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        Ok(at_most("hjb.comparison", worst, 0.0, "max of u(f = 0.1) - u(f = 0.3) over nodes"))
    });
    vec![mono, comp]
}

fn gradient_field(n: usize, seed: u64) -> FnField<impl Fn(&[f64], f64, &mut [f64]) -> Result<()> + Send + Sync> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    FnField(move |x: &[f64], t: f64, out: &mut [f64]| {
        for i in 0..x.len() {
            out[i] = a[i] + 0.2 * x[i] * t;
        }
        Ok(())
    })
}

fn transport_suite(s: &HTypeStructure, seed: u64) -> Vec<InvariantResult> {
    let n = s.n();
    let spec = HamiltonianSpec::quadratic(s.clone());
    let path = sample_initial(&InitialDensity::UniformBox { dim: n, half_width: 1.0 }, 200, seed)
        .and_then(|m| pushforward(&m, &gradient_field(n, seed), &spec, 0.0, 1.0, 50).map(|p| (m, p)));
    let (m, path): (ParticleMeasure, MeasurePath) = match path {
        Ok(v) => v,
        Err(e) => return vec![errored("transport.mass_conservation", e)],
    };
    let mut out = Vec::new();
    let mass0 = m.total_mass();
    let drift = path.measures().iter().map(|mk| (mk.total_mass() - mass0).abs()).fold(0.0, f64::max);
    out.push(check("transport.mass_conservation", drift, 0.0, drift == 0.0, "total weight at every node against the initial one"));
    let same = (0..path.len()).all(|k| {
        let a = path.measure_from_arcs(k);
        let b = path.measure(k);
        a.points() == b.points() && a.weights() == b.weights()
    });
    out.push(check("transport.provenance", if same { 0.0 } else { 1.0 }, 0.0, same, "measures re-extracted from the arcs are bit-identical"));
    if n <= 3 {
        out.push(run("transport.kde_normalization", || {
            let end = path.measure(path.len() - 1);
            let kde = Kde::normal_reference(end)?;
            let mut lo = vec![f64::INFINITY; n];
            let mut hi = vec![f64::NEG_INFINITY; n];
            for i in 0..end.len() {
                for (k, v) in end.point(i).iter().enumerate() {
                    lo[k] = lo[k].min(*v);
                    hi[k] = hi[k].max(*v);
                }
            }
            let pad = 5.0 * kde.bandwidth;
            let cells = 40usize;
            let widths: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 2.0 * pad) / cells as f64).collect();
            let volume: f64 = widths.iter().product();
            let total_cells = cells.pow(n as u32);
            let mut x = vec![0.0; n];
            let mut integral = 0.0;
            for c in 0..total_cells {
                let mut r = c;
                for k in 0..n {
                    x[k] = lo[k] - pad + (r % cells) as f64 * widths[k] + 0.5 * widths[k];
                    r /= cells;
                }
                integral += kde.density(end, &x) * volume;
            }
            Ok(check("transport.kde_normalization", integral, 0.995, integral >= 0.995, "midpoint rule, 40 cells per axis"))
        }));
    } else {
        out.push(skip("transport.kde_normalization", "grid quadrature runs in dimension at most 3"));
    }
    out
}

fn mfg_suite(s: &HTypeStructure, seed: u64) -> Vec<InvariantResult> {
    let n = s.n();
    let m0 = InitialDensity::UniformBox { dim: n, half_width: 1.0 };
    let base = MfgOptions {
        particles: 30,
        steps: 50,
        epsilons: vec![0.5, 0.25],
        seed,
        ..MfgOptions::default()
    };
    let spec = HamiltonianSpec::quadratic(s.clone());
    let mut out = Vec::new();

    out.push(run("mfg.zero_coupling", || {
        let p = MfgProblem::new(spec.clone(), CouplingSpec::zero(), CouplingSpec::zero(), m0.clone(), 1.0, base.clone())?;
        let sol = solve_equilibrium(&p)?;
        let first = sol.levels[0].residual_history.clone();
        let passed = first.len() == 1 && first[0] <= 1e-12 && sol.status == MfgStatus::Converged;
        Ok(check("mfg.zero_coupling", first[0], 1e-12, passed, format!("{} evaluations at the first level", first.len())))
    }));

    let coupled = (|| -> Result<MfgProblem> {
        MfgProblem::new(
            spec.clone(),
            if n == 3 {
                CouplingSpec::monotone(n, 1.0, 0.2)?
            } else {
                CouplingSpec::convolution(n, 1.0, 0.2)?
            },
            CouplingSpec::explicit(ExplicitFunction::TruncatedQuadratic { scale: 0.5, radius: 2.0 }, 1.0)?,
            m0.clone(),
            1.0,
            base.clone(),
        )
    })();
    let p = match coupled {
        Ok(p) => p,
        Err(e) => {
            out.push(errored("mfg.probability_paths", e));
            return out;
        }
    };
    out.push(run("mfg.probability_paths", || {
        let rest = MeasurePath::stationary(p.initial(), 0.0, 1.0, base.steps, spec.control_dim())?;
        let r = apply_t(&p, &rest, 0.5)?;
        let worst = r.path.measures().iter().map(|m| (m.total_mass() - 1.0).abs()).fold(0.0, f64::max);
        Ok(at_most("mfg.probability_paths", worst, 1e-12, "mass of the best response at every node"))
    }));

    let sol = match solve_equilibrium(&p) {
        Ok(s) => s,
        Err(e) => {
            out.push(errored("mfg.equilibrium_residual", e));
            return out;
        }
    };
    out.push(check(
        "mfg.equilibrium_residual",
        sol.residual(),
        base.tol,
        sol.status == MfgStatus::Converged && sol.residual() <= base.tol,
        format!("30 particles, eps schedule {:?}", base.epsilons),
    ));
    let moment = sol.levels.iter().map(|l| l.max_second_moment()).fold(0.0, f64::max);
    let moment_bound = n as f64 * 4.0;
    out.push(at_most("mfg.second_moment", moment, moment_bound, "max over levels and nodes of the second moment"));
    let opts = ValueOptions::pmp_only();
    out.push(run("mfg.certificate", || {
        let c = mild_certificate(&sol, &spread_probes(base.particles, 5), 1e-2, &opts)?;
        Ok(check("mfg.certificate", c.max_gap, 1e-2, c.holds, format!("min gap {:.3e}", c.min_gap)))
    }));
    out.push(run("mfg.value_bound", || {
        let bound = p.value_bound().unwrap_or(f64::INFINITY);
        let mut worst = 0.0f64;
        for i in spread_probes(base.particles, 5) {
            worst = worst.max(value(sol.frozen_problem(), p.initial().point(i), 0.0, &opts)?.value.abs());
        }
        Ok(at_most("mfg.value_bound", worst, bound, "|u(x,0)| at 5 probes against C(T+1)"))
    }));
    out
}
