//! Probabilistic ensemble of learned dynamics/reward/cost models.
//!
//! Each member is a small tanh network mapping a normalized `(state, action)`
//! pair to a Gaussian over the state *delta*, a reward estimate, and a cost
//! logit. The ensemble realizes the set of plausible models: members differ
//! by independent initialization and bootstrap-resampled training data, and
//! their disagreement stands in for epistemic uncertainty.

mod buffer;
mod fit;
mod net;

pub use buffer::{ReplayBuffer, Transition};
pub use fit::{fit, FitConfig, FitReport};
pub(crate) use fit::splitmix as fit_splitmix;
pub(crate) use net::{member_forward_tape, MemberTapeParams};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Clamp bounds for the predictive log-variance (normalized-delta space).
pub const LOG_VAR_MIN: f64 = -13.815510557964274; // ln(1e-6)
pub const LOG_VAR_MAX: f64 = 4.605170185988092; // ln(1e2)

/// Floor applied to every normalization std.
pub const NORM_STD_FLOOR: f64 = 1e-8;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn from_rows<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> Self {
        let mut mean = vec![0.0; dim];
        let mut count = 0usize;
        for row in rows.clone() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
            count += 1;
        }
        let n = count.max(1) as f64;
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(NORM_STD_FLOOR)).collect();
        NormStats { mean, std }
    }

    pub fn normalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Stats over concatenated (state, action) inputs.
    pub input: NormStats,
    /// Stats over state deltas (next_state - state).
    pub delta: NormStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub state: usize,
    pub action: usize,
    pub hidden: usize,
}

/// Parameters of one ensemble member. Two hidden tanh layers; the first layer
/// keeps separate weights for the state and action halves of the input so a
/// rollout tape can feed them as distinct nodes. Four output heads: delta
/// mean, delta log-variance, reward, cost logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberParams {
    pub w_s: Tensor,
    pub w_a: Tensor,
    pub b0: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w_mu: Tensor,
    pub b_mu: Tensor,
    pub w_lv: Tensor,
    pub b_lv: Tensor,
    pub w_r: Tensor,
    pub b_r: Tensor,
    pub w_c: Tensor,
    pub b_c: Tensor,
}

/// Raw (pre-clamp denotes: log-variance already clamped) member outputs in
/// normalized-delta space.
pub struct MemberRaw {
    pub mu: Tensor,
    pub log_var: Tensor,
    pub reward: Tensor,
    pub cost_logit: Tensor,
}

impl MemberParams {
    pub fn init(rng: &mut impl rand::Rng, dims: ModelDims) -> Self {
        let (n, m, h) = (dims.state, dims.action, dims.hidden);
        let g = |rng: &mut dyn rand::RngCore, rows: usize, cols: usize, gain: f64| -> Tensor {
            let scale = gain / (rows as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * scale
                })
                .collect();
            Tensor::from_vec(&[rows, cols], data).expect("init shape")
        };
        // Dynamics and reward heads start an order of magnitude quieter than
        // the trunk so early predictions sit near the head biases. The cost
        // head keeps a loud init on purpose: member disagreement away from
        // the data is what makes the worst-case evaluation cautious there.
        MemberParams {
            w_s: g(rng, n, h, 1.0),
            w_a: g(rng, m, h, 1.0),
            b0: Tensor::zeros(&[h]),
            w1: g(rng, h, h, 1.0),
            b1: Tensor::zeros(&[h]),
            w_mu: g(rng, h, n, 0.1),
            b_mu: Tensor::zeros(&[n]),
            w_lv: g(rng, h, n, 0.1),
            b_lv: Tensor::zeros(&[n]),
            w_r: g(rng, h, 1, 0.1),
            b_r: Tensor::zeros(&[1]),
            w_c: g(rng, h, 1, 1.0),
            b_c: Tensor::zeros(&[1]),
        }
    }

    /// Names and tensors in a fixed order shared by the tape builders and the
    /// flat-parameter views.
    pub fn named(&self) -> [(&'static str, &Tensor); 13] {
        [
            ("w_s", &self.w_s),
            ("w_a", &self.w_a),
            ("b0", &self.b0),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w_mu", &self.w_mu),
            ("b_mu", &self.b_mu),
            ("w_lv", &self.w_lv),
            ("b_lv", &self.b_lv),
            ("w_r", &self.w_r),
            ("b_r", &self.b_r),
            ("w_c", &self.w_c),
            ("b_c", &self.b_c),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 13] {
        [
            ("w_s", &mut self.w_s),
            ("w_a", &mut self.w_a),
            ("b0", &mut self.b0),
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w_mu", &mut self.w_mu),
            ("b_mu", &mut self.b_mu),
            ("w_lv", &mut self.w_lv),
            ("b_lv", &mut self.b_lv),
            ("w_r", &mut self.w_r),
            ("b_r", &mut self.b_r),
            ("w_c", &mut self.w_c),
            ("b_c", &mut self.b_c),
        ]
    }

    /// Plain forward pass on normalized inputs (rank 1 or batch rank 2).
    /// The log-variance head is already clamped.
    pub fn forward(&self, s_norm: &Tensor, a_norm: &Tensor) -> Result<MemberRaw> {
        let pre = tensor::affine(s_norm, &self.w_s, &self.b0)?
            .add(&a_norm.matmul(&self.w_a)?)?;
        let h0 = pre.map(f64::tanh);
        let h1 = tensor::affine(&h0, &self.w1, &self.b1)?.map(f64::tanh);
        let mu = tensor::affine(&h1, &self.w_mu, &self.b_mu)?;
        let log_var = tensor::affine(&h1, &self.w_lv, &self.b_lv)?
            .map(|v| tensor::softclamp(v, LOG_VAR_MIN, LOG_VAR_MAX));
        let reward = tensor::affine(&h1, &self.w_r, &self.b_r)?;
        let cost_logit = tensor::affine(&h1, &self.w_c, &self.b_c)?;
        Ok(MemberRaw { mu, log_var, reward, cost_logit })
    }
}

/// One member's prediction for a single `(s, a)` pair, denormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Mean of the next state (absolute, not a delta).
    pub mean: Vec<f64>,
    /// Predictive variance of the next state per dimension.
    pub var: Vec<f64>,
    /// Log-variance in normalized-delta space; always within the clamp bounds.
    pub log_var_norm: Vec<f64>,
    pub reward: f64,
    pub cost_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub version: u32,
    pub dims: ModelDims,
    pub members: Vec<MemberParams>,
    pub norm: Normalization,
}

impl EnsembleModel {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    fn split_input_norm(&self, s: &[f64], a: &[f64]) -> Result<(Tensor, Tensor)> {
        let (n, m) = (self.dims.state, self.dims.action);
        if s.len() != n || a.len() != m {
            return Err(Error::ShapeMismatch(format!(
                "predict on state {} / action {}, model wants {n} / {m}",
                s.len(),
                a.len()
            )));
        }
        if !s.iter().chain(a.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("predict input".into()));
        }
        let mut joint = Vec::with_capacity(n + m);
        joint.extend_from_slice(s);
        joint.extend_from_slice(a);
        let norm = self.norm.input.normalize(&joint);
        Ok((Tensor::vector(norm[..n].to_vec()), Tensor::vector(norm[n..].to_vec())))
    }

    /// Deterministic per-member prediction.
    pub fn predict(&self, member: usize, s: &[f64], a: &[f64]) -> Result<Prediction> {
        let (s_norm, a_norm) = self.split_input_norm(s, a)?;
        let raw = self.members[member].forward(&s_norm, &a_norm)?;
        let n = self.dims.state;
        let mut mean = Vec::with_capacity(n);
        let mut var = Vec::with_capacity(n);
        for k in 0..n {
            let d_std = self.norm.delta.std[k];
            mean.push(s[k] + raw.mu.data()[k] * d_std + self.norm.delta.mean[k]);
            var.push(raw.log_var.data()[k].exp() * d_std * d_std);
        }
        Ok(Prediction {
            mean,
            var,
            log_var_norm: raw.log_var.data().to_vec(),
            reward: raw.reward.data()[0],
            cost_prob: tensor::sigmoid(raw.cost_logit.data()[0]),
        })
    }

    /// Reparameterized one-step sample with caller-supplied standard normal
    /// noise: `s' = mean + sqrt(var) * xi`.
    pub fn sample_next_with_noise(
        &self,
        member: usize,
        s: &[f64],
        a: &[f64],
        xi: &[f64],
    ) -> Result<Vec<f64>> {
        let pred = self.predict(member, s, a)?;
        Ok(pred
            .mean
            .iter()
            .zip(pred.var.iter().zip(xi))
            .map(|(&mu, (&v, &x))| mu + v.sqrt() * x)
            .collect())
    }

    /// One-step sample drawing noise from `rng`.
    pub fn sample_next(
        &self,
        member: usize,
        s: &[f64],
        a: &[f64],
        rng: &mut impl rand::Rng,
    ) -> Result<Vec<f64>> {
        let xi: Vec<f64> = (0..self.dims.state).map(|_| StandardNormal.sample(rng)).collect();
        self.sample_next_with_noise(member, s, a, &xi)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Config(format!("checkpoint serialize: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("checkpoint {}: {e}", path.display())))?;
        let model: EnsembleModel = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("checkpoint parse: {e}")))?;
        if model.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                model.version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn arbitrary_model(seed: u64, dims: ModelDims, members: usize) -> EnsembleModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_in = dims.state + dims.action;
        EnsembleModel {
            version: CHECKPOINT_VERSION,
            dims,
            members: (0..members).map(|_| MemberParams::init(&mut rng, dims)).collect(),
            norm: Normalization {
                input: NormStats { mean: vec![0.1; n_in], std: vec![0.7; n_in] },
                delta: NormStats { mean: vec![0.0; dims.state], std: vec![0.2; dims.state] },
            },
        }
    }

    #[test]
    fn predict_is_deterministic() {
        let model = arbitrary_model(1, ModelDims { state: 4, action: 2, hidden: 16 }, 3);
        let s = [0.3, -0.2, 0.05, 0.0];
        let a = [0.5, -0.5];
        let p1 = model.predict(1, &s, &a).unwrap();
        let p2 = model.predict(1, &s, &a).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn predictions_finite_at_normalization_extremes() {
        let model = arbitrary_model(2, ModelDims { state: 4, action: 2, hidden: 16 }, 2);
        // +-5 std in raw units around the stored mean
        let s = [0.1 + 5.0 * 0.7, 0.1 - 5.0 * 0.7, 0.1, 0.1];
        let a = [0.1 + 5.0 * 0.7, 0.1 - 5.0 * 0.7];
        let p = model.predict(0, &s, &a).unwrap();
        assert!(p.mean.iter().all(|v| v.is_finite()));
        assert!(p.var.iter().all(|v| v.is_finite()));
        assert!(p.reward.is_finite());
        assert!((0.0..=1.0).contains(&p.cost_prob));
    }

    #[test]
    fn log_var_respects_clamp_bounds() {
        let model = arbitrary_model(3, ModelDims { state: 4, action: 2, hidden: 16 }, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
            let a: Vec<f64> = (0..2).map(|_| rng.random_range(-10.0..10.0)).collect();
            let p = model.predict(0, &s, &a).unwrap();
            for &lv in &p.log_var_norm {
                assert!((LOG_VAR_MIN..=LOG_VAR_MAX).contains(&lv), "log_var {lv} out of bounds");
            }
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let model = arbitrary_model(4, ModelDims { state: 4, action: 2, hidden: 8 }, 1);
        let r = model.predict(0, &[f64::NAN, 0.0, 0.0, 0.0], &[0.0, 0.0]);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_noise_sample_equals_mean() {
        let model = arbitrary_model(5, ModelDims { state: 4, action: 2, hidden: 8 }, 1);
        let s = [0.2, 0.1, -0.3, 0.0];
        let a = [0.4, -0.1];
        let next = model.sample_next_with_noise(0, &s, &a, &[0.0; 4]).unwrap();
        let pred = model.predict(0, &s, &a).unwrap();
        assert_eq!(next, pred.mean);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let model = arbitrary_model(6, ModelDims { state: 4, action: 2, hidden: 8 }, 1);
        let s = [0.2, 0.1, -0.3, 0.0];
        let a = [0.4, -0.1];
        let mut r1 = ChaCha8Rng::seed_from_u64(33);
        let mut r2 = ChaCha8Rng::seed_from_u64(33);
        let n1 = model.sample_next(0, &s, &a, &mut r1).unwrap();
        let n2 = model.sample_next(0, &s, &a, &mut r2).unwrap();
        assert_eq!(n1, n2);
    }

    #[test]
    fn monte_carlo_mean_of_samples_matches_prediction() {
        let model = arbitrary_model(7, ModelDims { state: 2, action: 1, hidden: 8 }, 1);
        let s = [0.3, -0.1];
        let a = [0.2];
        let pred = model.predict(0, &s, &a).unwrap();
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut sum = vec![0.0; 2];
        for _ in 0..n {
            let next = model.sample_next(0, &s, &a, &mut rng).unwrap();
            for (acc, v) in sum.iter_mut().zip(next) {
                *acc += v;
            }
        }
        for k in 0..2 {
            let mc = sum[k] / n as f64;
            let tol = 3.0 * pred.var[k].sqrt() / (n as f64).sqrt();
            assert!(
                (mc - pred.mean[k]).abs() <= tol,
                "coord {k}: mc {mc} vs mean {} (tol {tol})",
                pred.mean[k]
            );
        }
    }

    #[test]
    fn checkpoint_roundtrip_reproduces_predictions_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..10 {
            let model = arbitrary_model(seed, ModelDims { state: 4, action: 2, hidden: 12 }, 3);
            let path = dir.path().join(format!("m{seed}.json"));
            model.save(&path).unwrap();
            let loaded = EnsembleModel::load(&path).unwrap();
            assert_eq!(model, loaded);
            let s = [0.37, -0.11, 0.05, 0.9];
            let a = [-0.4, 0.25];
            for member in 0..3 {
                let p0 = model.predict(member, &s, &a).unwrap();
                let p1 = loaded.predict(member, &s, &a).unwrap();
                assert_eq!(p0, p1);
            }
        }
    }
}
