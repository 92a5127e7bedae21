//! Log-barrier stochastic gradient ascent with feasible iterates.
//!
//! The optimizer maximizes `J` subject to `J_c < 0` by ascending the barrier
//! `B_eta = J + eta * log(-J_c)`, which diverges to minus infinity at the
//! constraint boundary so ascent keeps its distance from the interior side.
//! (This is the standard minimization log-barrier `f - eta*log(-g)` mapped
//! through `J = -f`; writing the barrier with the opposite sign makes ascent
//! seek the boundary and wedge against the feasibility guard.)
//!
//! The step size is capped so the first-order predicted change of `J_c`
//! stays below half the distance to the boundary, and a backtracking guard
//! re-evaluates the constraint at the candidate point, halving the step
//! until the candidate is strictly feasible (or rejecting it outright).
//! Entering a step with `J_c >= 0` is not a recoverable condition: it aborts
//! with [`Error::InfeasibleIterate`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::norms::{dot, l2};

/// Value of the log-barrier: `J + eta * log(-J_c)`. Requires `J_c < 0`.
pub fn barrier_value(j: f64, j_c: f64, eta: f64) -> Result<f64> {
    if j_c >= 0.0 {
        return Err(Error::InfeasibleIterate(j_c));
    }
    assert!(eta > 0.0, "barrier coefficient must be positive");
    Ok(j + eta * (-j_c).ln())
}

/// Ascent gradient of the barrier: `gJ - eta * gJ_c / (-J_c)` elementwise
/// (the exact gradient of [`barrier_value`]).
pub fn barrier_gradient(g_j: &[f64], g_jc: &[f64], j_c: f64, eta: f64) -> Result<Vec<f64>> {
    if j_c >= 0.0 {
        return Err(Error::InfeasibleIterate(j_c));
    }
    assert!(eta > 0.0, "barrier coefficient must be positive");
    assert_eq!(g_j.len(), g_jc.len(), "gradient length mismatch");
    let scale = eta / (-j_c);
    Ok(g_j.iter().zip(g_jc).map(|(&a, &b)| a - scale * b).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    pub eta0: f64,
    pub eta_decay: f64,
    pub eta_min: f64,
    /// Base learning rate; the adaptive rule only ever shrinks it.
    pub lr: f64,
    pub m2_init: f64,
    /// EMA retention for the curvature estimate.
    pub m2_ema: f64,
    pub max_backtracks: u32,
    /// Norm cap on the objective gradient `gJ` before the barrier combine.
    /// Caps the reward pull without ever muting the barrier's push away from
    /// the boundary.
    pub grad_clip: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig {
            eta0: 0.1,
            eta_decay: 0.97,
            eta_min: 1e-3,
            lr: 0.05,
            m2_init: 1.0,
            m2_ema: 0.9,
            max_backtracks: 10,
            grad_clip: 10.0,
        }
    }
}

/// One optimizer step in the feasibility ledger.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub iterate: u64,
    pub eta: f64,
    /// Final step size after backtracking (0 for rejected steps).
    pub gamma: f64,
    pub j: f64,
    /// Constraint value at the pre-step iterate (always < 0).
    pub j_c: f64,
    /// Constraint value at the accepted iterate (equals `j_c` when rejected).
    pub j_c_next: f64,
    pub accepted: bool,
    pub backtracks: u32,
}

#[derive(Clone, Debug)]
pub struct BarrierOptState {
    pub eta: f64,
    /// Running curvature estimate (EMA of ||dg|| / ||dx|| over accepted steps).
    pub m2: f64,
    pub iterate: u64,
    pub ledger: Vec<LedgerEntry>,
    cfg: BarrierConfig,
    prev_params: Option<Vec<f64>>,
    prev_grad: Option<Vec<f64>>,
}

impl BarrierOptState {
    pub fn new(cfg: BarrierConfig) -> Self {
        assert!(cfg.eta0 > 0.0 && cfg.eta_min > 0.0, "eta must stay positive");
        BarrierOptState {
            eta: cfg.eta0,
            m2: cfg.m2_init,
            iterate: 0,
            ledger: Vec::new(),
            cfg,
            prev_params: None,
            prev_grad: None,
        }
    }

    pub fn config(&self) -> &BarrierConfig {
        &self.cfg
    }

    /// The adaptive step size: `min(lr, (-J_c) / (2*(|<gJ_c, ghat>| + M2*(-J_c))))`.
    /// Far from the boundary (gJ_c ~ 0, -J_c large) this reduces to plain SGD
    /// at the base rate; near the boundary it shrinks with the distance.
    pub fn step_size(&self, g: &[f64], g_jc: &[f64], j_c: f64) -> f64 {
        let margin = -j_c;
        debug_assert!(margin > 0.0);
        let gnorm = l2(g);
        if gnorm < 1e-300 {
            return self.cfg.lr;
        }
        let proj = (dot(g_jc, g) / gnorm).abs();
        let alpha = margin / (2.0 * (proj + self.m2 * margin));
        self.cfg.lr.min(alpha)
    }

    /// One ascent step. `eval_c` must return a fresh model-evaluated
    /// constraint value at the candidate parameters; candidates failing
    /// strict feasibility are halved up to `max_backtracks` times, then the
    /// step is rejected (parameters unchanged).
    pub fn step(
        &mut self,
        params: &[f64],
        g_j: &[f64],
        g_jc: &[f64],
        j: f64,
        j_c: f64,
        mut eval_c: impl FnMut(&[f64]) -> Result<f64>,
    ) -> Result<Vec<f64>> {
        if j_c >= 0.0 {
            return Err(Error::InfeasibleIterate(j_c));
        }
        let gj_norm = l2(g_j);
        let clipped: Vec<f64>;
        let g_j = if gj_norm > self.cfg.grad_clip {
            let scale = self.cfg.grad_clip / gj_norm;
            clipped = g_j.iter().map(|v| v * scale).collect();
            &clipped[..]
        } else {
            g_j
        };
        let g = barrier_gradient(g_j, g_jc, j_c, self.eta)?;
        let gnorm = l2(&g);
        if gnorm < 1e-300 {
            // nothing to do; a zero-gradient step is trivially feasible
            self.push_entry(0.0, j, j_c, j_c, true, 0);
            return Ok(params.to_vec());
        }

        let mut gamma = self.step_size(&g, g_jc, j_c);
        let mut backtracks = 0;
        loop {
            let candidate: Vec<f64> =
                params.iter().zip(&g).map(|(&p, &gi)| p + gamma * gi).collect();
            let jc_next = eval_c(&candidate)?;
            if jc_next < 0.0 {
                self.update_curvature(&candidate, &g);
                self.push_entry(gamma, j, j_c, jc_next, true, backtracks);
                return Ok(candidate);
            }
            if backtracks >= self.cfg.max_backtracks {
                self.push_entry(0.0, j, j_c, j_c, false, backtracks);
                return Ok(params.to_vec());
            }
            gamma *= 0.5;
            backtracks += 1;
        }
    }

    /// Decay the barrier coefficient once per training epoch:
    /// `eta <- max(eta_min, eta * decay)`.
    pub fn decay_eta(&mut self) {
        self.eta = (self.eta * self.cfg.eta_decay).max(self.cfg.eta_min);
    }

    fn update_curvature(&mut self, new_params: &[f64], new_grad: &[f64]) {
        if let (Some(pp), Some(pg)) = (&self.prev_params, &self.prev_grad) {
            let dp = l2(&new_params.iter().zip(pp).map(|(a, b)| a - b).collect::<Vec<_>>());
            let dg = l2(&new_grad.iter().zip(pg).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dp > 1e-12 {
                let ratio = dg / dp;
                if ratio.is_finite() {
                    self.m2 = self.cfg.m2_ema * self.m2 + (1.0 - self.cfg.m2_ema) * ratio;
                }
            }
        }
        self.prev_params = Some(new_params.to_vec());
        self.prev_grad = Some(new_grad.to_vec());
    }

    fn push_entry(&mut self, gamma: f64, j: f64, j_c: f64, j_c_next: f64, accepted: bool, backtracks: u32) {
        self.ledger.push(LedgerEntry {
            iterate: self.iterate,
            eta: self.eta,
            gamma,
            j,
            j_c,
            j_c_next,
            accepted,
            backtracks,
        });
        self.iterate += 1;
    }

    /// Ledger export as line-delimited JSON.
    pub fn export_ledger(&self, mut w: impl std::io::Write) -> Result<()> {
        for entry in &self.ledger {
            let line = serde_json::to_string(entry)
                .map_err(|e| Error::Config(format!("ledger serialize: {e}")))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
