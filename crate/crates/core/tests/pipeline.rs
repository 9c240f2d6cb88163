use std::sync::Arc;

use hmfg_core::corpus::{cost_cases, start_points};
use hmfg_core::couplings::{CostField, CouplingSpec, ExplicitFunction};
use hmfg_core::geometry::HTypeStructure;
use hmfg_core::hamiltonian::HamiltonianSpec;
use hmfg_core::hjb_grid::{compare_with_ocp, solve_hjb, GridSpec};
use hmfg_core::mfg::{apply_t, mild_certificate, path_distance, solve_equilibrium, spread_probes, InitialGuess, MfgOptions, MfgProblem, MfgStatus};
use hmfg_core::ocp::{cost, solve_direct, solve_pmp_shooting, value, ControlledPath, DirectOptions, OcpProblem, ShootingOptions, ValueOptions};
use hmfg_core::transport::{InitialDensity, MeasurePath};
use hmfg_core::validate::{validate, Mutation, Outcome};

fn ocp(s: HTypeStructure, f: ExplicitFunction, g: ExplicitFunction, steps: usize) -> OcpProblem {
    let f: Arc<dyn CostField> = Arc::new(f);
    let g: Arc<dyn CostField> = Arc::new(g);
    OcpProblem::new(HamiltonianSpec::quadratic(s), f, g, 1.0, steps).unwrap()
}

#[test]
fn linear_terminal_cost_has_its_closed_form_value() {
    // u(x, 0) = g(x) - T·½|Dg(x) B(x)|² for g = x1 + x2; at x the row is (1 - 0·x2, 1 + 0·x1)
    for eps in [0.0, 0.1, 0.5] {
        let p = ocp(HTypeStructure::heisenberg().with_epsilon(eps).unwrap(), ExplicitFunction::Zero, ExplicitFunction::linear(&[1.0, 1.0]), 100);
        for x in start_points(3) {
            let r = solve_pmp_shooting(&p, &x, 0.0, &[], &ShootingOptions::default()).unwrap();
            assert!((r.best.cost - (x[0] + x[1] - 1.0)).abs() < 1e-9, "eps {eps} x {x:?}: {}", r.best.cost);
        }
    }
}

#[test]
fn pmp_does_not_beat_the_direct_oracle_or_the_zero_control() {
    let s = HTypeStructure::heisenberg().with_epsilon(0.1).unwrap();
    let o = ShootingOptions::default();
    let d = DirectOptions {
        restarts: 3,
        ..DirectOptions::default()
    };
    for case in cost_cases().into_iter().take(3) {
        let p = ocp(s.clone(), case.running.clone(), case.terminal.clone(), 60);
        let x = &start_points(3)[2];
        let pmp = solve_pmp_shooting(&p, x, 0.0, &[], &o).unwrap().best.cost;
        let direct = solve_direct(&p, x, 0.0, hmfg_core::ocp::control_bound(x), &d).unwrap().cost;
        assert!((pmp - direct).abs() < 1e-3, "{}: {pmp} vs {direct}", case.name);
        let rest = ControlledPath::at_rest(x, 0.0, 1.0, 60, p.control_dim()).unwrap();
        assert!(pmp <= cost(&rest, p.spec(), p.running(), p.terminal()) + 1e-12);
    }
}

#[test]
fn grid_agrees_with_the_control_problem_inside_the_box() {
    let p = ocp(
        HTypeStructure::heisenberg(),
        ExplicitFunction::Zero,
        ExplicitFunction::TruncatedQuadratic { scale: 0.5, radius: 2.0 },
        100,
    );
    let coarse = GridSpec {
        half_width: 2.0,
        resolution: 17,
        time_steps: 8,
        control_points: 7,
    };
    let gvf = solve_hjb(&p, coarse).unwrap();
    let probes = vec![(vec![0.0; 3], 0.0), (vec![0.25, -0.25, 0.0], 0.0), (vec![0.0, 0.0, 0.25], 0.5)];
    let cmp = compare_with_ocp(&gvf, &p, &probes, &ValueOptions::pmp_only()).unwrap();
    assert_eq!(cmp.contaminated_probes, 0);
    assert!(cmp.max_error < 0.1, "{cmp:?}");
}

fn small_problem(coupling: CouplingSpec, options: MfgOptions) -> MfgProblem {
    MfgProblem::new(
        HamiltonianSpec::quadratic(HTypeStructure::heisenberg()),
        coupling,
        CouplingSpec::explicit(ExplicitFunction::TruncatedQuadratic { scale: 0.5, radius: 2.0 }, 1.0).unwrap(),
        InitialDensity::UniformBox { dim: 3, half_width: 1.0 },
        1.0,
        options,
    )
    .unwrap()
}

fn small_options() -> MfgOptions {
    MfgOptions {
        particles: 24,
        steps: 40,
        epsilons: vec![0.5, 0.25, 0.1],
        ..MfgOptions::default()
    }
}

#[test]
fn equilibrium_of_a_monotone_game() {
    let p = small_problem(CouplingSpec::monotone(3, 1.0, 0.2).unwrap(), small_options());
    let sol = solve_equilibrium(&p).unwrap();
    assert_eq!(sol.status, MfgStatus::Converged);
    assert_eq!(sol.levels.len(), 3);
    for l in &sol.levels {
        assert!(l.residual < 1e-3);
        assert!(l.path.measures().iter().all(|m| (m.total_mass() - 1.0).abs() < 1e-12));
    }
    // the returned path is a fixed point of the best response up to the residual
    let response = apply_t(&p, &sol.measure_path, sol.epsilon).unwrap();
    assert!(path_distance(&sol.measure_path, &response.path).unwrap() <= sol.residual() + 1e-12);
    let opts = ValueOptions::pmp_only();
    let cert = mild_certificate(&sol, &spread_probes(24, 6), 1e-2, &opts).unwrap();
    assert!(cert.holds, "{cert:?}");
    let bound = p.value_bound().unwrap();
    for &i in &cert.probes {
        let u = value(sol.frozen_problem(), p.initial().point(i), 0.0, &opts).unwrap().value;
        assert!(u.abs() <= bound);
    }
}

#[test]
fn initial_guess_changes_the_start_not_the_equilibrium() {
    let mut a = small_options();
    a.epsilons = vec![0.25];
    let mut b = a.clone();
    b.initial_guess = InitialGuess::RandomGradient { seed: 9, amplitude: 0.5 };
    let pa = small_problem(CouplingSpec::monotone(3, 1.0, 0.2).unwrap(), a);
    let pb = small_problem(CouplingSpec::monotone(3, 1.0, 0.2).unwrap(), b);
    let sa = solve_equilibrium(&pa).unwrap();
    let sb = solve_equilibrium(&pb).unwrap();
    assert!(sa.residual_history[0] != sb.residual_history[0]);
    assert!(path_distance(&sa.measure_path, &sb.measure_path).unwrap() < 5e-3);
}

#[test]
fn zero_coupling_reaches_the_fixed_point_at_once() {
    let p = MfgProblem::new(
        HamiltonianSpec::quadratic(HTypeStructure::grushin()),
        CouplingSpec::zero(),
        CouplingSpec::zero(),
        InitialDensity::UniformBox { dim: 2, half_width: 1.0 },
        1.0,
        MfgOptions {
            particles: 10,
            steps: 20,
            ..MfgOptions::default()
        },
    )
    .unwrap();
    let sol = solve_equilibrium(&p).unwrap();
    assert!(sol.levels.iter().all(|l| l.residual_history == vec![0.0]));
    let rest = MeasurePath::stationary(p.initial(), 0.0, 1.0, 20, 2).unwrap();
    assert_eq!(sol.measure_path.measures()[20].points(), rest.measures()[20].points());
}

#[test]
fn invalid_schedules_are_refused() {
    for eps in [vec![], vec![0.1, 0.2], vec![0.0], vec![1.5]] {
        let o = MfgOptions {
            epsilons: eps.clone(),
            ..small_options()
        };
        let r = MfgProblem::new(
            HamiltonianSpec::quadratic(HTypeStructure::heisenberg()),
            CouplingSpec::zero(),
            CouplingSpec::zero(),
            InitialDensity::UniformBox { dim: 3, half_width: 1.0 },
            1.0,
            o,
        );
        assert!(r.is_err(), "{eps:?}");
    }
}

#[test]
fn validation_suite_and_its_mutations() {
    let s = HTypeStructure::heisenberg();
    let clean = validate(&s, 0, None);
    assert!(clean.all_passed(), "{:?}", clean.failures());
    let flipped = validate(&s, 0, Some(Mutation::GroupLawSignFlip));
    assert_eq!(flipped.result("geometry.associativity").unwrap().outcome, Outcome::Fail);
    let dropped = validate(&s, 0, Some(Mutation::DropEpsilonDrift));
    assert_eq!(dropped.result("hamiltonian.drift_fd").unwrap().outcome, Outcome::Fail);
    assert_eq!(dropped.result("geometry.associativity").unwrap().outcome, Outcome::Pass);
}
