//! Analytic constrained problems (minimize f subject to g <= 0) with known
//! optima and strictly feasible starts, used to exercise the optimizers in
//! isolation.

use crate::error::{Error, Result};

pub const ANALYTIC_PROBLEM_IDS: [&str; 3] = ["ball-projection", "linear-cut", "noisy-quadratic"];

#[derive(Clone)]
pub struct AnalyticProblem {
    pub id: &'static str,
    pub dim: usize,
    pub objective: fn(&[f64]) -> f64,
    pub objective_grad: fn(&[f64]) -> Vec<f64>,
    pub constraint: fn(&[f64]) -> f64,
    pub constraint_grad: fn(&[f64]) -> Vec<f64>,
    /// Reference solution of the constrained problem.
    pub optimum: [f64; 2],
    /// Start with constraint(start) < 0 strictly.
    pub start: [f64; 2],
}

/// Look up one of the registered problems.
///
/// - `ball-projection`: min ||x - (2,0)||^2 s.t. ||x||^2 - 1 <= 0, optimum (1, 0).
/// - `linear-cut`: min (x1-1)^2 + (x2-1)^2 s.t. x1 + x2 - 1 <= 0, optimum (0.5, 0.5).
/// - `noisy-quadratic`: min x1^2 + 2 x2^2 s.t. 0.5 - x1 - x2 <= 0, optimum (1/3, 1/6);
///   intended to be run with evaluation noise wrapped around f and g.
pub fn analytic_problem(id: &str) -> Result<AnalyticProblem> {
    match id {
        "ball-projection" => Ok(AnalyticProblem {
            id: "ball-projection",
            dim: 2,
            objective: |x| (x[0] - 2.0).powi(2) + x[1].powi(2),
            objective_grad: |x| vec![2.0 * (x[0] - 2.0), 2.0 * x[1]],
            constraint: |x| x[0] * x[0] + x[1] * x[1] - 1.0,
            constraint_grad: |x| vec![2.0 * x[0], 2.0 * x[1]],
            optimum: [1.0, 0.0],
            start: [0.0, 0.0],
        }),
        "linear-cut" => Ok(AnalyticProblem {
            id: "linear-cut",
            dim: 2,
            objective: |x| (x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2),
            objective_grad: |x| vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] - 1.0)],
            constraint: |x| x[0] + x[1] - 1.0,
            constraint_grad: |_| vec![1.0, 1.0],
            optimum: [0.5, 0.5],
            start: [0.0, 0.0],
        }),
        "noisy-quadratic" => Ok(AnalyticProblem {
            id: "noisy-quadratic",
            dim: 2,
            objective: |x| x[0] * x[0] + 2.0 * x[1] * x[1],
            objective_grad: |x| vec![2.0 * x[0], 4.0 * x[1]],
            constraint: |x| 0.5 - x[0] - x[1],
            constraint_grad: |_| vec![-1.0, -1.0],
            optimum: [1.0 / 3.0, 1.0 / 6.0],
            start: [1.0, 1.0],
        }),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}
