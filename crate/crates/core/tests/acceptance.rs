//! Acceptance criteria, one line each.
//!
//! `ACCEPTANCE_ONLY=1,4,10` restricts the run to the listed criteria.
//! Criteria 6, 7 and 9 reuse the equilibrium of criterion 8.

use std::sync::Arc;
use std::time::{Duration, Instant};

use hmfg_core::corpus::{cost_cases, start_points};
use hmfg_core::couplings::{CostField, CouplingSpec, ExplicitFunction};
use hmfg_core::geometry::operators::{commutator, Poly3};
use hmfg_core::geometry::HTypeStructure;
use hmfg_core::hamiltonian::HamiltonianSpec;
use hmfg_core::hjb_grid::{solve_hjb, GridSpec};
use hmfg_core::mfg::{mild_certificate, path_distance, solve_equilibrium, spread_probes, InitialGuess, MfgOptions, MfgProblem, MfgSolution, MfgStatus};
use hmfg_core::ocp::{
    control_bound, default_starts, feedback_identity, lipschitz_ratio, semiconcavity_ratio, solve_direct, solve_pmp_shooting,
    uniqueness_after_start_check, value, DirectOptions, OcpProblem, ShootingOptions, ValueOptions,
};
use hmfg_core::transport::{sup_distance, InitialDensity, MASS_TOL};
use hmfg_core::validate::drift_fd_error;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEPS: usize = 200;

const C1_PMP_TOL: f64 = 1e-6;
const C1_DIRECT_TOL: f64 = 1e-3;
const C1_GRID_TOL: f64 = 0.05;
const C1_SOLVER_BUDGET: Duration = Duration::from_secs(60);
const C1_GRID_BUDGET: Duration = Duration::from_secs(600);
const C2_TOL: f64 = 1e-8;
const C3_TOL: f64 = 1e-5;
const C3_SAMPLES: usize = 1000;
const C4_POINTS: usize = 100;
const C4_TOL: f64 = 1e-12;
const C5_TRIPLES: usize = 1000;
const C5_SEED: u64 = 5;
const FIT_MARGIN: f64 = 1.1;
const C6_MASS_TOL: f64 = MASS_TOL;
const C8_RESIDUAL: f64 = 1e-3;
const C8_ITERATIONS: usize = 50;
const C8_SEED_DISTANCE: f64 = 5e-2;
const C8_BUDGET: Duration = Duration::from_secs(900);
const C9_PROBES: usize = 50;
const C9_MAX_GAP: f64 = 1e-2;
const C9_MIN_GAP: f64 = -1e-4;
const C10_PROBLEMS: usize = 20;
const C10_TAU: f64 = 0.1;
const C10_TOL: f64 = 1e-6;
const C10_COST_TIE: f64 = 1e-9;

/// Criteria that fail by analysis; their lines still read FAIL but do not fail the process.
const EXPECTED_RED: &[u32] = &[4];

struct Line {
    id: u32,
    pass: bool,
    detail: String,
}

fn line(id: u32, pass: bool, detail: String) -> Line {
    Line { id, pass, detail }
}

fn problem(spec: HamiltonianSpec, f: &ExplicitFunction, g: &ExplicitFunction) -> OcpProblem {
    let f: Arc<dyn CostField> = Arc::new(f.clone());
    let g: Arc<dyn CostField> = Arc::new(g.clone());
    OcpProblem::new(spec, f, g, 1.0, STEPS).unwrap()
}

fn heisenberg(eps: f64) -> HTypeStructure {
    HTypeStructure::heisenberg().with_epsilon(eps).unwrap()
}

fn closed_form() -> Line {
    let mut pass = true;
    let mut parts = vec![];
    for eps in [0.0, 0.1] {
        let p = problem(HamiltonianSpec::quadratic(heisenberg(eps)), &ExplicitFunction::Zero, &ExplicitFunction::linear(&[1.0, 1.0]));
        let x = [0.0; 3];
        let t = Instant::now();
        let pmp = solve_pmp_shooting(&p, &x, 0.0, &[], &ShootingOptions::default()).unwrap().best.cost;
        let direct = solve_direct(&p, &x, 0.0, control_bound(&x), &DirectOptions::default()).unwrap().cost;
        let solver_time = t.elapsed();
        let t = Instant::now();
        let (grid, contaminated) = solve_hjb(&p, GridSpec::default()).unwrap().interpolate(&x, 0.0);
        let grid_time = t.elapsed();
        pass &= (pmp + 1.0).abs() < C1_PMP_TOL
            && (direct + 1.0).abs() < C1_DIRECT_TOL
            && (grid + 1.0).abs() < C1_GRID_TOL
            && !contaminated
            && solver_time < C1_SOLVER_BUDGET
            && grid_time < C1_GRID_BUDGET;
        parts.push(format!(
            "eps={eps}: |pmp+1|={:.1e} |direct+1|={:.1e} |grid+1|={:.3} ({:.0?}, grid {:.0?})",
            (pmp + 1.0).abs(),
            (direct + 1.0).abs(),
            (grid + 1.0).abs(),
            solver_time,
            grid_time
        ));
    }
    line(1, pass, parts.join("; "))
}

fn feedback_on_corpus(spec: &HamiltonianSpec) -> (f64, usize) {
    let o = ShootingOptions::default();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for case in cost_cases() {
        let p = problem(spec.clone(), &case.running, &case.terminal);
        for x in start_points(spec.n()) {
            let sol = solve_pmp_shooting(&p, &x, 0.0, &[], &o).unwrap().best;
            worst = worst.max(feedback_identity(&p, &sol, &o).unwrap().max_mismatch);
            cases += 1;
        }
    }
    (worst, cases)
}

fn feedback() -> Line {
    let (worst, cases) = feedback_on_corpus(&HamiltonianSpec::quadratic(heisenberg(0.1)));
    line(2, worst < C2_TOL, format!("max node mismatch {worst:.2e} over {cases} cases (tol {C2_TOL:e})"))
}

fn drift_errors(s: &HTypeStructure, gammas: &[f64]) -> Vec<(f64, f64)> {
    gammas
        .iter()
        .map(|&g| {
            let spec = HamiltonianSpec::power(s.clone(), g).unwrap();
            (g, drift_fd_error(&spec, C3_SAMPLES, 3, None).unwrap())
        })
        .collect()
}

fn drift() -> Line {
    let mut worst = 0.0f64;
    let mut parts = vec![];
    for eps in [0.0, 0.1] {
        for (g, e) in drift_errors(&heisenberg(eps), &[2.0, 1.5, 1.0]) {
            worst = worst.max(e);
            parts.push(format!("eps={eps} gamma={g}: {e:.1e}"));
        }
    }
    line(3, worst < C3_TOL, format!("max relative error {worst:.2e} ({})", parts.join(", ")))
}

fn commutator_sign() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut stated = 0.0f64;
    let mut opposite = 0.0f64;
    for _ in 0..C4_POINTS {
        let terms: Vec<(f64, [u32; 3])> = (0..4)
            .map(|_| (rng.random_range(-2.0..2.0), [0, 0, 0].map(|_: u32| rng.random_range(0..4u32))))
            .collect();
        let u = Poly3::from_terms(&terms);
        let x = [0, 0, 0].map(|_: i32| rng.random_range(-2.0..2.0));
        let lhs = commutator(&u).eval(x);
        let d3 = u.partial(2).eval(x);
        let scale = 1.0 + lhs.abs() + d3.abs();
        stated = stated.max((lhs + 2.0 * d3).abs() / scale);
        opposite = opposite.max((lhs - 2.0 * d3).abs() / scale);
    }
    line(
        4,
        stated <= C4_TOL,
        format!("[X1,X2]u + 2 d3 u: max scaled residual {stated:.2e}; [X1,X2]u - 2 d3 u: {opposite:.2e} (tol {C4_TOL:e})"),
    )
}

fn semiconcavity() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(C5_SEED);
    let triples: Vec<([f64; 3], [f64; 3], f64)> = (0..C5_TRIPLES)
        .map(|_| {
            let x = [0, 0, 0].map(|_: i32| rng.random_range(-2.0..2.0));
            let y = [0, 0, 0].map(|_: i32| rng.random_range(-2.0..2.0));
            (x, y, rng.random_range(0.0..1.0))
        })
        .collect();
    let case = &cost_cases()[3];
    let opts = ValueOptions::pmp_only();
    let maxima: Vec<(f64, f64, f64)> = [0.5, 0.1, 0.02]
        .iter()
        .map(|&eps| {
            let p = problem(HamiltonianSpec::quadratic(heisenberg(eps)), &case.running, &case.terminal);
            let u = |z: &[f64]| value(&p, z, 0.0, &opts).unwrap().value;
            let (mut sc, mut lip) = (f64::NEG_INFINITY, 0.0f64);
            for (x, y, l) in &triples {
                let mid: Vec<f64> = (0..3).map(|k| l * y[k] + (1.0 - l) * x[k]).collect();
                let (ux, uy) = (u(x), u(y));
                sc = sc.max(semiconcavity_ratio(ux, uy, u(&mid), *l, x, y));
                lip = lip.max(lipschitz_ratio(ux, uy, x, y));
            }
            (eps, sc, lip)
        })
        .collect();
    let c = FIT_MARGIN * maxima[0].1.max(0.0);
    let l = FIT_MARGIN * maxima[0].2;
    let pass = maxima[1..].iter().all(|&(_, sc, lip)| sc <= c && lip <= l);
    let raw: Vec<String> = maxima.iter().map(|(e, sc, lip)| format!("eps={e}: {sc:.5}/{lip:.5}")).collect();
    line(5, pass, format!("C={c:.5} L={l:.5} fitted at eps=0.5; raw semiconcavity/Lipschitz maxima {}", raw.join(", ")))
}

struct Moments {
    mass_error: f64,
    second_moment: f64,
    bound: f64,
}

fn moments(levels: &[&MfgSolution], n: usize) -> Moments {
    let mut mass_error = 0.0f64;
    let mut second_moment = 0.0f64;
    for sol in levels {
        for level in &sol.levels {
            for m in level.path.measures() {
                mass_error = mass_error.max((m.total_mass() - 1.0).abs());
                second_moment = second_moment.max(m.moments().1);
            }
        }
    }
    Moments {
        mass_error,
        second_moment,
        bound: 4.0 * n as f64,
    }
}

impl Moments {
    fn holds(&self) -> bool {
        self.mass_error <= C6_MASS_TOL && self.second_moment <= self.bound
    }

    fn describe(&self) -> String {
        format!("|mass-1|={:.1e}, second moment {:.3} <= K={}", self.mass_error, self.second_moment, self.bound)
    }
}

/// ε-continuation run used for the transport moments on each structure.
fn continuation_run(s: HTypeStructure) -> MfgSolution {
    let n = s.n();
    let running = if n == 3 {
        CouplingSpec::monotone(3, 1.0, 0.2).unwrap()
    } else {
        CouplingSpec::convolution(n, 1.0, 0.2).unwrap()
    };
    let p = MfgProblem::new(
        HamiltonianSpec::quadratic(s),
        running,
        CouplingSpec::zero(),
        InitialDensity::UniformBox { dim: n, half_width: 1.0 },
        1.0,
        MfgOptions {
            particles: 100,
            steps: 100,
            epsilons: vec![0.5, 0.25, 0.1],
            ..MfgOptions::default()
        },
    )
    .unwrap();
    solve_equilibrium(&p).unwrap()
}

fn equilibrium_problem(seed: u64) -> MfgProblem {
    MfgProblem::new(
        HamiltonianSpec::quadratic(HTypeStructure::heisenberg()),
        CouplingSpec::monotone(3, 1.0, 0.2).unwrap(),
        CouplingSpec::zero(),
        InitialDensity::UniformBox { dim: 3, half_width: 1.0 },
        1.0,
        MfgOptions {
            particles: 500,
            steps: STEPS,
            epsilons: vec![0.1],
            tol: C8_RESIDUAL,
            max_iterations: C8_ITERATIONS,
            initial_guess: InitialGuess::RandomGradient { seed, amplitude: 0.5 },
            ..MfgOptions::default()
        },
    )
    .unwrap()
}

fn fixed_point() -> (Line, MfgSolution) {
    let t = Instant::now();
    let a = solve_equilibrium(&equilibrium_problem(1)).unwrap();
    let b = solve_equilibrium(&equilibrium_problem(2)).unwrap();
    let elapsed = t.elapsed();
    let d = path_distance(&a.measure_path, &b.measure_path).unwrap();
    let ok = |s: &MfgSolution| s.status == MfgStatus::Converged && s.residual() < C8_RESIDUAL && s.residual_history.len() <= C8_ITERATIONS;
    let pass = ok(&a) && ok(&b) && d <= C8_SEED_DISTANCE && elapsed < C8_BUDGET;
    let detail = format!(
        "residuals {:.2e}/{:.2e} after {}/{} iterations, seed distance {d:.2e} (tol {C8_SEED_DISTANCE:e}), {elapsed:.0?} for both runs",
        a.residual(),
        b.residual(),
        a.residual_history.len(),
        b.residual_history.len()
    );
    (line(8, pass, detail), a)
}

fn transport_moments(sol: &MfgSolution) -> Line {
    let heis = continuation_run(HTypeStructure::heisenberg());
    let m = moments(&[sol, &heis], 3);
    line(6, m.holds(), format!("heisenberg, equilibrium run and eps [0.5,0.25,0.1]: {}", m.describe()))
}

fn holder(sol: &MfgSolution) -> Line {
    let path = &sol.measure_path;
    let steps = path.len() - 1;
    let ratios: Vec<(usize, f64, bool)> = [4usize, 2, 1]
        .iter()
        .map(|&lag| {
            let pairs: Vec<_> = (0..path.len() - lag).map(|k| (path.measure(k), path.measure(k + lag))).collect();
            let s = sup_distance(&pairs).unwrap();
            let dt = lag as f64 / steps as f64;
            (steps / lag, s.value / dt.sqrt(), s.exact)
        })
        .collect();
    let k = FIT_MARGIN * ratios[0].1;
    let pass = ratios.iter().all(|r| r.2) && ratios[1..].iter().all(|r| r.1 <= k);
    let raw: Vec<String> = ratios.iter().map(|(n, r, _)| format!("dt=1/{n}: {r:.5}")).collect();
    line(7, pass, format!("K={k:.5} fitted at dt=1/{}; sup d1/sqrt(dt) {}", ratios[0].0, raw.join(", ")))
}

fn certificate(sol: &MfgSolution) -> Line {
    let probes = spread_probes(sol.measure_path.measure(0).len(), C9_PROBES);
    let c = mild_certificate(sol, &probes, C9_MAX_GAP, &ValueOptions::pmp_only()).unwrap();
    let pass = c.probes.len() == C9_PROBES && c.max_gap <= C9_MAX_GAP && c.min_gap >= C9_MIN_GAP;
    line(9, pass, format!("{} probes: max gap {:.2e}, min gap {:.2e}, mean {:.2e}", c.probes.len(), c.max_gap, c.min_gap, c.mean_gap))
}

fn random_gaussian(rng: &mut ChaCha8Rng) -> ExplicitFunction {
    ExplicitFunction::Gaussian {
        center: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
        width: rng.random_range(0.5..1.5),
        height: rng.random_range(-0.5..0.5),
    }
}

fn uniqueness() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let o = ShootingOptions::default();
    let mut worst = 0.0f64;
    let mut pairs = 0;
    let mut split_at_start = 0;
    for _ in 0..C10_PROBLEMS {
        let f = random_gaussian(&mut rng);
        let g = ExplicitFunction::Sum {
            terms: vec![
                ExplicitFunction::linear(&[0, 0, 0].map(|_: i32| rng.random_range(-1.0..1.0))),
                random_gaussian(&mut rng),
            ],
        };
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = problem(HamiltonianSpec::quadratic(heisenberg(0.1)), &f, &g);
        let mut starts = default_starts(&p, &x);
        starts.extend((0..6).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>()));
        let r = solve_pmp_shooting(&p, &x, 0.0, &starts, &o).unwrap();
        let best = &r.best;
        for c in &r.candidates {
            if (c.cost - best.cost).abs() > C10_COST_TIE * (1.0 + best.cost.abs()) {
                continue;
            }
            let u = uniqueness_after_start_check(&p, best, c, C10_TAU, C10_TOL).unwrap();
            worst = worst.max(u.sup_after);
            pairs += 1;
            if u.sup_before > C10_TOL {
                split_at_start += 1;
            }
        }
    }
    line(
        10,
        worst < C10_TOL,
        format!("{pairs} cost-equal pairs over {C10_PROBLEMS} problems ({split_at_start} distinct before tau): max sup after tau {worst:.2e}"),
    )
}

fn generalizations() -> Line {
    let mut pass = true;
    let mut parts = vec![];
    let structures = [
        HTypeStructure::grushin(),
        HTypeStructure::degenerate(3, 2).unwrap(),
        HTypeStructure::heisenberg_d(2).unwrap(),
    ];
    for s in structures {
        let (fb, _) = feedback_on_corpus(&HamiltonianSpec::quadratic(s.clone()));
        let dr = drift_errors(&s, &[2.0, 1.5, 1.0]).iter().map(|e| e.1).fold(0.0, f64::max);
        let m = moments(&[&continuation_run(s.clone())], s.n());
        let ok = fb < C2_TOL && dr < C3_TOL && m.holds();
        pass &= ok;
        parts.push(format!("{}: c2 {fb:.1e}, c3 {dr:.1e}, c6 {}", s.name(), m.describe()));
    }
    let s = heisenberg(0.1);
    let (fb, _) = feedback_on_corpus(&HamiltonianSpec::power(s.clone(), 1.5).unwrap());
    let dr = drift_errors(&s, &[1.5])[0].1;
    pass &= fb < C2_TOL && dr < C3_TOL;
    parts.push(format!("gamma=1.5: c2 {fb:.1e}, c3 {dr:.1e}"));
    line(11, pass, parts.join("; "))
}

fn selected() -> Option<Vec<u32>> {
    let v = std::env::var("ACCEPTANCE_ONLY").ok()?;
    Some(v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

fn main() {
    // libtest flags such as --nocapture are passed through by cargo; this target takes none
    let only = selected();
    let want = |id: u32| only.as_ref().is_none_or(|v| v.contains(&id));
    let checks: [(u32, fn() -> Line); 6] = [
        (1, closed_form),
        (2, feedback),
        (3, drift),
        (4, commutator_sign),
        (5, semiconcavity),
        (10, uniqueness),
    ];
    let mut lines = vec![];
    let mut report = |l: Line, t: Instant| {
        let status = if l.pass { "PASS" } else { "FAIL" };
        println!("criterion {:2}: {status} {} [{:.0?}]", l.id, l.detail, t.elapsed());
        lines.push(l);
    };
    for (id, f) in checks {
        if want(id) {
            let t = Instant::now();
            report(f(), t);
        }
    }
    if [6, 7, 8, 9].iter().any(|&id| want(id)) {
        let t = Instant::now();
        let (l8, sol) = fixed_point();
        if want(8) {
            report(l8, t);
        }
        let dependents: [(u32, fn(&MfgSolution) -> Line); 3] = [(6, transport_moments), (7, holder), (9, certificate)];
        for (id, f) in dependents {
            if want(id) {
                let t = Instant::now();
                report(f(&sol), t);
            }
        }
    }
    if want(11) {
        let t = Instant::now();
        report(generalizations(), t);
    }
    lines.sort_by_key(|l| l.id);
    let failed: Vec<u32> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    let unexpected: Vec<u32> = failed.iter().copied().filter(|id| !EXPECTED_RED.contains(id)).collect();
    println!("acceptance: {} of {} criteria pass; failing {:?}", lines.len() - failed.len(), lines.len(), failed);
    if !unexpected.is_empty() {
        eprintln!("acceptance: unexpected failures {unexpected:?}");
        std::process::exit(1);
    }
}
