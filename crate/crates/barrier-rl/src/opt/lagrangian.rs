//! Augmented-Lagrangian baseline: ascent on `J - lambda*J_c - (mu/2)*max(0, J_c)^2`
//! with a projected dual update. Iterates may be transiently infeasible.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianConfig {
    pub lambda0: f64,
    pub mu0: f64,
    pub lr_lambda: f64,
    /// Penalty growth factor applied while violations persist.
    pub growth: f64,
    pub lr: f64,
    /// Primal steps between dual updates; the primal needs time to track
    /// the Lagrangian's maximizer or the dual oscillates.
    pub dual_interval: u64,
    /// Norm cap on the ascent gradient before stepping.
    pub grad_clip: f64,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        LagrangianConfig {
            lambda0: 0.0,
            mu0: 1.0,
            lr_lambda: 0.05,
            growth: 1.5,
            lr: 0.05,
            dual_interval: 25,
            grad_clip: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LagrangianOptState {
    pub lambda: f64,
    pub mu: f64,
    pub iterate: u64,
    cfg: LagrangianConfig,
    prev_check_jc: Option<f64>,
}

const MU_MAX: f64 = 1e6;

impl LagrangianOptState {
    pub fn new(cfg: LagrangianConfig) -> Self {
        assert!(cfg.lambda0 >= 0.0 && cfg.mu0 > 0.0);
        LagrangianOptState {
            lambda: cfg.lambda0,
            mu: cfg.mu0,
            iterate: 0,
            cfg,
            prev_check_jc: None,
        }
    }

    pub fn config(&self) -> &LagrangianConfig {
        &self.cfg
    }

    /// One primal ascent step; every `dual_interval` steps the multiplier is
    /// updated as `lambda <- max(0, lambda + lr_lambda * J_c)` and the penalty
    /// grows while violations persist across dual checks. No feasibility
    /// requirement anywhere.
    pub fn step(&mut self, params: &[f64], g_j: &[f64], g_jc: &[f64], j_c: f64) -> Vec<f64> {
        let penalty = self.mu * j_c.max(0.0);
        let g: Vec<f64> = g_j
            .iter()
            .zip(g_jc)
            .map(|(&gj, &gc)| gj - self.lambda * gc - penalty * gc)
            .collect();
        let gnorm = crate::tensor::norms::l2(&g);
        let scale = if gnorm > self.cfg.grad_clip { self.cfg.grad_clip / gnorm } else { 1.0 };
        let next: Vec<f64> =
            params.iter().zip(&g).map(|(&p, &gi)| p + self.cfg.lr * scale * gi).collect();

        self.iterate += 1;
        if self.iterate % self.cfg.dual_interval == 0 {
            self.dual_update(j_c);
        }
        next
    }

    /// Projected dual ascent plus penalty growth on persistent violation:
    /// the penalty grows only when the violation failed to shrink at all
    /// between consecutive dual checks (growing it while the dual ascent is
    /// already closing the gap destabilizes the primal).
    pub fn dual_update(&mut self, j_c: f64) {
        self.lambda = (self.lambda + self.cfg.lr_lambda * j_c).max(0.0);
        if j_c > 0.0 {
            if let Some(prev) = self.prev_check_jc {
                if prev > 0.0 && j_c >= prev {
                    self.mu = (self.mu * self.cfg.growth).min(MU_MAX);
                }
            }
        }
        self.prev_check_jc = Some(j_c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::analytic_problem;

    #[test]
    fn inactive_constraint_reduces_to_plain_sgd() {
        let mut state = LagrangianOptState::new(LagrangianConfig::default());
        // lambda = 0, j_c < 0: step is lr * g_j exactly
        let next = state.step(&[1.0, -2.0], &[0.5, 0.25], &[3.0, 3.0], -1.0);
        assert_eq!(next, vec![1.0 + 0.05 * 0.5, -2.0 + 0.05 * 0.25]);
    }

    #[test]
    fn dual_update_clamps_at_zero() {
        let mut state = LagrangianOptState::new(LagrangianConfig {
            lambda0: 0.05,
            lr_lambda: 0.1,
            ..Default::default()
        });
        state.dual_update(-1.0);
        assert_eq!(state.lambda, 0.0);
    }

    #[test]
    fn penalty_grows_under_persistent_violation() {
        let mut state = LagrangianOptState::new(LagrangianConfig::default());
        let mu0 = state.mu;
        state.dual_update(0.5);
        assert_eq!(state.mu, mu0, "one violation alone must not grow mu");
        state.dual_update(0.5);
        assert!(state.mu > mu0, "stalled violation must grow mu");

        // a violation that is shrinking fast enough does not grow mu
        let mut state = LagrangianOptState::new(LagrangianConfig::default());
        state.dual_update(0.5);
        state.dual_update(0.4);
        assert_eq!(state.mu, 1.0);
    }

    #[test]
    fn linear_cut_converges_possibly_through_infeasible_iterates() {
        let p = analytic_problem("linear-cut").unwrap();
        let mut state = LagrangianOptState::new(LagrangianConfig::default());
        let mut x = p.start.to_vec();
        let mut saw_infeasible = false;
        for _ in 0..6000 {
            let j_c = (p.constraint)(&x);
            saw_infeasible |= j_c > 0.0;
            let g_j: Vec<f64> = (p.objective_grad)(&x).iter().map(|v| -v).collect();
            let g_jc = (p.constraint_grad)(&x);
            x = state.step(&x, &g_j, &g_jc, j_c);
        }
        let err = ((x[0] - p.optimum[0]).powi(2) + (x[1] - p.optimum[1]).powi(2)).sqrt();
        assert!(err <= 1e-2, "final {x:?}, err {err}, lambda {}", state.lambda);
        // from (0,0) the unconstrained pull toward (1,1) crosses the cut
        assert!(saw_infeasible, "baseline was expected to overshoot the boundary");
    }
}
