//! Stochastic tanh-squashed Gaussian policy.
//!
//! A small tanh network maps the state to an action mean and a clamped
//! log-std; actions are sampled by reparameterization and squashed through
//! tanh into the action box, so emitted actions always respect the bounds
//! and gradients flow through sampling on rollout tapes.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBounds {
    pub fn unit(dim: usize) -> Self {
        ActionBounds { low: vec![-1.0; dim], high: vec![1.0; dim] }
    }

    /// Per-dimension half-range and midpoint of the box.
    fn scale_shift(&self) -> (Vec<f64>, Vec<f64>) {
        let scale = self.low.iter().zip(&self.high).map(|(l, h)| (h - l) / 2.0).collect();
        let shift = self.low.iter().zip(&self.high).map(|(l, h)| (l + h) / 2.0).collect();
        (scale, shift)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub state: usize,
    pub action: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub dims: PolicyDims,
    pub bounds: ActionBounds,
    pub w0: Tensor,
    pub b0: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w_mu: Tensor,
    pub b_mu: Tensor,
    pub w_ls: Tensor,
    pub b_ls: Tensor,
}

impl Policy {
    /// Conservative initialization: the head layers are zero, so the
    /// pre-squash mean is exactly zero everywhere and the log-std sits at
    /// `init_log_std`.
    pub fn init(
        rng: &mut impl rand::Rng,
        dims: PolicyDims,
        bounds: ActionBounds,
        init_log_std: f64,
    ) -> Self {
        let (n, m, h) = (dims.state, dims.action, dims.hidden);
        let g = |rng: &mut dyn rand::RngCore, rows: usize, cols: usize| -> Tensor {
            let scale = 1.0 / (rows as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * scale
                })
                .collect();
            Tensor::from_vec(&[rows, cols], data).expect("init shape")
        };
        Policy {
            dims,
            bounds,
            w0: g(rng, n, h),
            b0: Tensor::zeros(&[h]),
            w1: g(rng, h, h),
            b1: Tensor::zeros(&[h]),
            w_mu: Tensor::zeros(&[h, m]),
            b_mu: Tensor::zeros(&[m]),
            w_ls: Tensor::zeros(&[h, m]),
            b_ls: Tensor::filled(&[m], init_log_std),
        }
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 8] {
        [
            ("w0", &self.w0),
            ("b0", &self.b0),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w_mu", &self.w_mu),
            ("b_mu", &self.b_mu),
            ("w_ls", &self.w_ls),
            ("b_ls", &self.b_ls),
        ]
    }

    fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 8] {
        [
            ("w0", &mut self.w0),
            ("b0", &mut self.b0),
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w_mu", &mut self.w_mu),
            ("b_mu", &mut self.b_mu),
            ("w_ls", &mut self.w_ls),
            ("b_ls", &mut self.b_ls),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Parameters as one flat vector, in `named()` order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, t) in self.named() {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "flat parameter vector has {} entries, policy needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for (_, t) in self.named_mut() {
            let len = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Gradient map (as returned by a tape with prefix `pi`) to a flat vector
    /// in `named()` order.
    pub fn grads_to_flat(
        &self,
        grads: &std::collections::BTreeMap<String, Tensor>,
        prefix: &str,
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.param_count());
        for (name, t) in self.named() {
            let key = format!("{prefix}.{name}");
            let g = grads
                .get(&key)
                .ok_or_else(|| Error::UnboundInput(key.clone()))?;
            if g.shape() != t.shape() {
                return Err(Error::ShapeMismatch(format!("gradient shape for {key}")));
            }
            out.extend_from_slice(g.data());
        }
        Ok(out)
    }

    /// Input bindings for a tape whose policy parameters were registered
    /// under `prefix`.
    pub fn bindings(&self, prefix: &str) -> crate::autodiff::Bindings {
        self.named()
            .iter()
            .map(|(name, t)| (format!("{prefix}.{name}"), (*t).clone()))
            .collect()
    }

    /// Plain forward: state(s) to (pre-squash mean, clamped log-std).
    pub fn forward(&self, state: &Tensor) -> Result<(Tensor, Tensor)> {
        let h0 = tensor::affine(state, &self.w0, &self.b0)?.map(f64::tanh);
        let h1 = tensor::affine(&h0, &self.w1, &self.b1)?.map(f64::tanh);
        let mu = tensor::affine(&h1, &self.w_mu, &self.b_mu)?;
        let log_std = tensor::affine(&h1, &self.w_ls, &self.b_ls)?
            .map(|v| tensor::softclamp(v, LOG_STD_MIN, LOG_STD_MAX));
        Ok((mu, log_std))
    }

    /// Squash a pre-squash value into the action box.
    pub fn squash(&self, z: &[f64]) -> Vec<f64> {
        let (scale, shift) = self.bounds.scale_shift();
        z.iter()
            .zip(scale.iter().zip(&shift))
            .map(|(&v, (&sc, &sh))| v.tanh() * sc + sh)
            .collect()
    }

    /// Select an action for one state.
    pub fn act(&self, state: &[f64], mode: ActMode, rng: &mut impl rand::Rng) -> Result<Vec<f64>> {
        if !state.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("policy state input".into()));
        }
        let s = Tensor::vector(state.to_vec());
        let (mu, log_std) = self.forward(&s)?;
        let z: Vec<f64> = match mode {
            ActMode::Mean => mu.data().to_vec(),
            ActMode::Stochastic => mu
                .data()
                .iter()
                .zip(log_std.data())
                .map(|(&m, &ls)| {
                    let xi: f64 = StandardNormal.sample(rng);
                    m + ls.exp() * xi
                })
                .collect(),
        };
        Ok(self.squash(&z))
    }
}

/// Node ids of policy parameters registered on a tape.
#[derive(Clone, Copy)]
pub(crate) struct PolicyTapeParams {
    w0: NodeId,
    b0: NodeId,
    w1: NodeId,
    b1: NodeId,
    w_mu: NodeId,
    b_mu: NodeId,
    w_ls: NodeId,
    b_ls: NodeId,
}

impl PolicyTapeParams {
    pub(crate) fn inputs(tape: &mut Tape, prefix: &str, policy: &Policy) -> Result<Self> {
        let mut ids = Vec::with_capacity(8);
        for (name, t) in policy.named() {
            ids.push(tape.input(&format!("{prefix}.{name}"), t.shape())?);
        }
        Ok(PolicyTapeParams {
            w0: ids[0],
            b0: ids[1],
            w1: ids[2],
            b1: ids[3],
            w_mu: ids[4],
            b_mu: ids[5],
            w_ls: ids[6],
            b_ls: ids[7],
        })
    }
}

pub(crate) struct PolicyNodes {
    pub mu: NodeId,
    pub log_std: NodeId,
}

/// Policy network on the tape, mirroring [`Policy::forward`].
pub(crate) fn policy_forward_tape(
    tape: &mut Tape,
    p: &PolicyTapeParams,
    state: NodeId,
) -> Result<PolicyNodes> {
    let h0pre = tape.affine(state, p.w0, p.b0)?;
    let h0 = tape.tanh(h0pre);
    let h1pre = tape.affine(h0, p.w1, p.b1)?;
    let h1 = tape.tanh(h1pre);
    let mu = tape.affine(h1, p.w_mu, p.b_mu)?;
    let ls_raw = tape.affine(h1, p.w_ls, p.b_ls)?;
    let log_std = tape.softclamp(ls_raw, LOG_STD_MIN, LOG_STD_MAX)?;
    Ok(PolicyNodes { mu, log_std })
}

/// Squash pre-squash actions into the box on the tape: `tanh(z)*scale + shift`.
pub(crate) fn squash_tape(
    tape: &mut Tape,
    z: NodeId,
    bounds: &ActionBounds,
    batch: usize,
) -> Result<NodeId> {
    let (scale, shift) = bounds.scale_shift();
    let t = tape.tanh(z);
    let scale_t = tape.constant(tensor::tile_row(&Tensor::vector(scale), batch));
    let shift_t = tape.constant(tensor::tile_row(&Tensor::vector(shift), batch));
    let scaled = tape.mul(t, scale_t)?;
    tape.add(scaled, shift_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_policy(seed: u64, init_log_std: f64) -> Policy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Policy::init(
            &mut rng,
            PolicyDims { state: 4, action: 2, hidden: 16 },
            ActionBounds::unit(2),
            init_log_std,
        )
    }

    #[test]
    fn freshly_initialized_mean_action_is_zero() {
        let policy = test_policy(0, -2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = policy.act(&[0.3, -0.9, 0.1, 0.0], ActMode::Mean, &mut rng).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn actions_respect_bounds() {
        let mut policy = test_policy(2, 0.5);
        // blow up the mean head so pre-squash values get huge
        for v in policy.w_mu.data_mut() {
            *v = 50.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..100 {
            let s = [(i as f64 * 0.17).sin() * 2.0, 0.5, -0.5, 1.0];
            let a = policy.act(&s, ActMode::Stochastic, &mut rng).unwrap();
            assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)), "{a:?}");
        }
    }

    #[test]
    fn saturated_mean_hits_the_bound() {
        let mut policy = test_policy(2, -2.0);
        policy.b_mu.data_mut()[0] = 1e6; // pre-squash +inf surrogate
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = policy.act(&[0.0; 4], ActMode::Mean, &mut rng).unwrap();
        assert_eq!(a[0], 1.0);
    }

    #[test]
    fn floor_log_std_makes_modes_agree() {
        // raw bias far below the clamp floor: log_std clamps to -5 everywhere,
        // so pre-squash noise has sigma = exp(-5) ~ 6.7e-3
        let sigma_min = LOG_STD_MIN.exp();
        let mut policy = test_policy(4, -30.0);
        let s = [0.1, 0.2, -0.4, 0.8];

        // near zero mean: modes agree to within a few noise widths
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean = policy.act(&s, ActMode::Mean, &mut rng).unwrap();
        let stoch = policy.act(&s, ActMode::Stochastic, &mut rng).unwrap();
        for (m, st) in mean.iter().zip(&stoch) {
            assert!((m - st).abs() <= 6.0 * sigma_min, "mean {m} vs stochastic {st}");
        }

        // saturated mean: tanh flattens the vanishing noise below the 7th
        // significant digit of the action
        policy.b_mu.data_mut()[0] = 10.0;
        policy.b_mu.data_mut()[1] = 10.0;
        for trial in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let mean = policy.act(&s, ActMode::Mean, &mut rng).unwrap();
            let stoch = policy.act(&s, ActMode::Stochastic, &mut rng).unwrap();
            for (m, st) in mean.iter().zip(&stoch) {
                assert!(
                    (m - st).abs() <= 1e-7 * m.abs(),
                    "trial {trial}: mean {m} vs stochastic {st}"
                );
            }
        }
    }

    #[test]
    fn stochastic_actions_reproduce_under_fixed_seed() {
        let policy = test_policy(6, -1.0);
        let s = [0.4, -0.2, 0.0, 0.3];
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            policy.act(&s, ActMode::Stochastic, &mut r1).unwrap(),
            policy.act(&s, ActMode::Stochastic, &mut r2).unwrap()
        );
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let policy = test_policy(8, -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(policy.act(&[f64::INFINITY, 0.0, 0.0, 0.0], ActMode::Mean, &mut rng).is_err());
    }

    #[test]
    fn log_std_clamped_into_declared_range() {
        let mut policy = test_policy(10, 0.0);
        for v in policy.w_ls.data_mut() {
            *v = 100.0;
        }
        let (_, log_std) = policy.forward(&Tensor::vector(vec![1.0, 1.0, 1.0, 1.0])).unwrap();
        for &ls in log_std.data() {
            assert!((LOG_STD_MIN..=LOG_STD_MAX).contains(&ls));
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let policy = test_policy(11, -1.5);
        let flat = policy.flatten();
        let mut other = test_policy(99, 0.0);
        other.assign_from_flat(&flat).unwrap();
        assert_eq!(policy.w0, other.w0);
        assert_eq!(policy.b_ls, other.b_ls);
        assert_eq!(other.flatten(), flat);
    }

    #[test]
    fn tape_and_plain_forward_agree_bitwise() {
        use crate::autodiff::Tape;
        let policy = test_policy(12, -1.0);
        let states = Tensor::from_vec(&[3, 4], (0..12).map(|i| (i as f64) * 0.1 - 0.5).collect())
            .unwrap();
        let mut tape = Tape::new();
        let p = PolicyTapeParams::inputs(&mut tape, "pi", &policy).unwrap();
        let s = tape.constant(states.clone());
        let nodes = policy_forward_tape(&mut tape, &p, s).unwrap();
        let out = tape.sum(nodes.mu);
        tape.set_output(out);
        tape.forward(&policy.bindings("pi")).unwrap();
        let (mu, log_std) = policy.forward(&states).unwrap();
        assert_eq!(tape.value(nodes.mu).unwrap(), &mu);
        assert_eq!(tape.value(nodes.log_std).unwrap(), &log_std);
    }
}
