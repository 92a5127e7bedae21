//! Optimizer-only benchmark runs on the analytic constrained problems, with
//! optional zero-mean Gaussian evaluation noise on values and gradients.
//!
//! Under noise the barrier arm averages `noise_avg` draws per query and adds
//! a pessimistic margin of `margin_sigmas * sigma / sqrt(noise_avg)` to the
//! constraint, the same move the RL stack makes against model uncertainty:
//! prefer a conservatively shifted constraint over trusting a noisy point
//! estimate. The feasibility ledger records the (margined) observable; the
//! true-constraint audit is separate and reported in the outcome.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::agent::OptimizerArm;
use crate::env::{analytic_problem, AnalyticProblem};
use crate::error::Result;
use crate::opt::{BarrierConfig, BarrierOptState, LagrangianConfig, LagrangianOptState, LedgerEntry};

#[derive(Clone, Debug)]
pub struct BenchOptSpec {
    pub problem: String,
    pub optimizer: OptimizerArm,
    /// Std of the evaluation noise on f, g and their gradients (0 = noiseless).
    pub noise_scale: f64,
    /// Draws averaged per noisy query.
    pub noise_avg: usize,
    /// Pessimistic constraint margin in units of the averaged noise std.
    pub margin_sigmas: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BenchOptSpec {
    fn default() -> Self {
        BenchOptSpec {
            problem: "ball-projection".into(),
            optimizer: OptimizerArm::Lbsgd,
            noise_scale: 0.0,
            noise_avg: 512,
            margin_sigmas: 5.0,
            epochs: 400,
            steps_per_epoch: 40,
            lr: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptOutcome {
    pub problem: String,
    pub optimizer: String,
    pub noise_scale: f64,
    pub final_point: Vec<f64>,
    /// Euclidean distance to the reference optimum.
    pub final_error: f64,
    /// Every iterate the optimizer moved through (accepted points).
    pub iterates: Vec<Vec<f64>>,
    pub ledger: Vec<LedgerEntry>,
    /// Accepted iterates whose TRUE constraint value was >= 0.
    pub true_violations: usize,
    /// Total optimizer steps taken.
    pub steps: usize,
}

struct NoisyEval<'a> {
    problem: &'a AnalyticProblem,
    scale: f64,
    avg: usize,
    margin: f64,
    rng: ChaCha8Rng,
}

impl<'a> NoisyEval<'a> {
    fn new(problem: &'a AnalyticProblem, spec: &BenchOptSpec) -> Self {
        let margin = if spec.noise_scale > 0.0 {
            spec.margin_sigmas * spec.noise_scale / (spec.noise_avg as f64).sqrt()
        } else {
            0.0
        };
        NoisyEval {
            problem,
            scale: spec.noise_scale,
            avg: spec.noise_avg.max(1),
            margin,
            rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0B5E),
        }
    }

    fn noisy(&mut self, truth: f64) -> f64 {
        if self.scale == 0.0 {
            return truth;
        }
        let mut acc = 0.0;
        for _ in 0..self.avg {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            acc += truth + self.scale * z;
        }
        acc / self.avg as f64
    }

    fn noisy_vec(&mut self, truth: Vec<f64>) -> Vec<f64> {
        truth.into_iter().map(|v| self.noisy(v)).collect()
    }

    /// Objective value/gradient in maximize-J convention (J = -f).
    fn j(&mut self, x: &[f64]) -> f64 {
        -self.noisy((self.problem.objective)(x))
    }

    fn grad_j(&mut self, x: &[f64]) -> Vec<f64> {
        self.noisy_vec((self.problem.objective_grad)(x)).into_iter().map(|v| -v).collect()
    }

    /// Constraint with the pessimistic margin already folded in.
    fn g(&mut self, x: &[f64]) -> f64 {
        self.noisy((self.problem.constraint)(x)) + self.margin
    }

    fn grad_g(&mut self, x: &[f64]) -> Vec<f64> {
        self.noisy_vec((self.problem.constraint_grad)(x))
    }
}

pub fn bench_opt(spec: &BenchOptSpec) -> Result<BenchOptOutcome> {
    let problem = analytic_problem(&spec.problem)?;
    let mut eval = NoisyEval::new(&problem, spec);
    let mut x = problem.start.to_vec();
    let mut iterates = vec![x.clone()];
    let mut true_violations = 0usize;
    let mut steps = 0usize;

    // Under noise the barrier floor must keep the boundary clearance a
    // multiple of the averaged noise std, or the entry feasibility check
    // starts tripping on estimation error alone.
    let eta_min = if spec.noise_scale > 0.0 { 3e-3 } else { 1e-3 };
    let mut barrier =
        BarrierOptState::new(BarrierConfig { lr: spec.lr, eta_min, ..Default::default() });
    let mut lagrangian =
        LagrangianOptState::new(LagrangianConfig { lr: spec.lr, ..Default::default() });

    for _epoch in 0..spec.epochs {
        for _step in 0..spec.steps_per_epoch {
            let g_j = eval.grad_j(&x);
            let g_gc = eval.grad_g(&x);
            let j = eval.j(&x);
            let j_c = eval.g(&x);
            x = match spec.optimizer {
                OptimizerArm::Lbsgd => {
                    barrier.step(&x, &g_j, &g_gc, j, j_c, |cand| Ok(eval.g(cand)))?
                }
                OptimizerArm::Lagrangian => lagrangian.step(&x, &g_j, &g_gc, j_c),
            };
            steps += 1;
            if (problem.constraint)(&x) >= 0.0 {
                true_violations += 1;
            }
            iterates.push(x.clone());
        }
        if spec.optimizer == OptimizerArm::Lbsgd {
            barrier.decay_eta();
        }
    }

    let final_error = x
        .iter()
        .zip(problem.optimum.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(BenchOptOutcome {
        problem: problem.id.to_string(),
        optimizer: spec.optimizer.name().to_string(),
        noise_scale: spec.noise_scale,
        final_point: x,
        final_error,
        iterates,
        ledger: barrier.ledger,
        true_violations,
        steps,
    })
}
