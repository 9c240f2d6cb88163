//! The fixed cost configurations and start points used by the validation suites.

use crate::couplings::ExplicitFunction;

#[derive(Debug, Clone)]
pub struct CostCase {
    pub name: &'static str,
    pub running: ExplicitFunction,
    pub terminal: ExplicitFunction,
}

fn gaussian(center: &[f64], width: f64, height: f64) -> ExplicitFunction {
    ExplicitFunction::Gaussian {
        center: center.to_vec(),
        width,
        height,
    }
}

/// Five running/terminal pairs; all are dimension-agnostic (missing coordinates read as 0).
pub fn cost_cases() -> Vec<CostCase> {
    vec![
        CostCase {
            name: "linear-terminal",
            running: ExplicitFunction::Zero,
            terminal: ExplicitFunction::linear(&[1.0, 1.0]),
        },
        CostCase {
            name: "gaussian-running",
            running: gaussian(&[0.0, 0.0, 0.0], 1.0, 0.5),
            terminal: ExplicitFunction::Zero,
        },
        CostCase {
            name: "truncated-quadratic-terminal",
            running: ExplicitFunction::Zero,
            terminal: ExplicitFunction::TruncatedQuadratic { scale: 0.5, radius: 2.0 },
        },
        CostCase {
            name: "gaussian-pair",
            running: gaussian(&[0.5, -0.5, 0.0], 0.8, -0.4),
            terminal: gaussian(&[-0.3, 0.2, 0.5], 1.0, 1.0),
        },
        CostCase {
            name: "mixed",
            running: ExplicitFunction::Sum {
                terms: vec![ExplicitFunction::Constant { value: 0.3 }, gaussian(&[0.2, 0.4, -0.2], 0.7, 0.6)],
            },
            terminal: ExplicitFunction::Sum {
                terms: vec![
                    ExplicitFunction::linear(&[0.3, -0.2, 0.4]),
                    ExplicitFunction::TruncatedQuadratic { scale: 0.2, radius: 1.5 },
                ],
            },
        },
    ]
}

/// Three start points in dimension `n` (extra coordinates zero).
pub fn start_points(n: usize) -> Vec<Vec<f64>> {
    [[0.0, 0.0, 0.0], [0.5, -0.3, 0.2], [-0.8, 0.4, -0.5]]
        .iter()
        .map(|p| (0..n).map(|i| p.get(i).copied().unwrap_or(0.0)).collect())
        .collect()
}
