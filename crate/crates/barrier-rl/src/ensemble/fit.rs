//! Ensemble training: Gaussian negative log-likelihood on state deltas,
//! squared error on reward, binary cross-entropy on the cost logit.
//!
//! Members differ by independent initialization and by bootstrap resampling
//! of the buffer. Training is minibatch SGD with momentum; the parameters
//! returned are those of the epoch with the lowest mean NLL, so the reported
//! final-epoch NLL never exceeds the first-epoch NLL.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{member_forward_tape, MemberTapeParams};
use super::{
    EnsembleModel, MemberParams, ModelDims, NormStats, Normalization, ReplayBuffer,
    CHECKPOINT_VERSION,
};
use crate::autodiff::{Bindings, Tape};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub members: usize,
    pub hidden: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay per epoch (1.0 = constant).
    pub lr_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub min_transitions: usize,
    /// Global-norm gradient clip per step.
    pub grad_clip: f64,
    /// Decoupled L2 decay on weight matrices (biases exempt). Keeps
    /// out-of-distribution head outputs anchored near their biases and damps
    /// drift across warm-started refits.
    pub weight_decay: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            members: 5,
            hidden: 64,
            lr: 5e-3,
            lr_decay: 1.0,
            momentum: 0.9,
            batch_size: 64,
            epochs: 8,
            steps_per_epoch: 60,
            min_transitions: 64,
            grad_clip: 10.0,
            weight_decay: 2e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    /// Mean total loss per epoch (averaged over members and steps).
    pub epoch_loss: Vec<f64>,
    /// Mean state NLL per epoch.
    pub epoch_nll: Vec<f64>,
    pub first_epoch_nll: f64,
    /// NLL of the epoch whose parameters were retained.
    pub final_epoch_nll: f64,
    pub best_epoch: usize,
}

struct PreparedData {
    s_norm: Vec<Vec<f64>>,
    a_norm: Vec<Vec<f64>>,
    delta_norm: Vec<Vec<f64>>,
    reward: Vec<f64>,
    cost: Vec<f64>,
}

fn prepare(buffer: &ReplayBuffer, norm: &Normalization, n: usize) -> PreparedData {
    let mut out = PreparedData {
        s_norm: Vec::with_capacity(buffer.len()),
        a_norm: Vec::with_capacity(buffer.len()),
        delta_norm: Vec::with_capacity(buffer.len()),
        reward: Vec::with_capacity(buffer.len()),
        cost: Vec::with_capacity(buffer.len()),
    };
    for t in buffer.iter() {
        let mut joint = t.state.clone();
        joint.extend_from_slice(&t.action);
        let jn = norm.input.normalize(&joint);
        out.s_norm.push(jn[..n].to_vec());
        out.a_norm.push(jn[n..].to_vec());
        let delta: Vec<f64> =
            t.next_state.iter().zip(&t.state).map(|(&ns, &s)| ns - s).collect();
        out.delta_norm.push(norm.delta.normalize(&delta));
        out.reward.push(t.reward);
        out.cost.push(t.cost);
    }
    out
}

/// Fit (or warm-start refit) an ensemble on the buffer contents.
pub fn fit(
    buffer: &ReplayBuffer,
    cfg: &FitConfig,
    warm: Option<&EnsembleModel>,
    seed: u64,
) -> Result<(EnsembleModel, FitReport)> {
    if buffer.len() < cfg.min_transitions {
        return Err(Error::Training(format!(
            "need at least {} transitions, buffer has {}",
            cfg.min_transitions,
            buffer.len()
        )));
    }
    let dims = ModelDims {
        state: buffer.state_dim(),
        action: buffer.action_dim(),
        hidden: cfg.hidden,
    };
    let n = dims.state;

    // Normalization statistics always come from the current buffer.
    let joint: Vec<Vec<f64>> = buffer
        .iter()
        .map(|t| {
            let mut j = t.state.clone();
            j.extend_from_slice(&t.action);
            j
        })
        .collect();
    let deltas: Vec<Vec<f64>> = buffer
        .iter()
        .map(|t| t.next_state.iter().zip(&t.state).map(|(&a, &b)| a - b).collect())
        .collect();
    let norm = Normalization {
        input: NormStats::from_rows(joint.iter().map(|v| v.as_slice()), n + dims.action),
        delta: NormStats::from_rows(deltas.iter().map(|v| v.as_slice()), n),
    };

    let mut members: Vec<MemberParams> = match warm {
        Some(model) if model.dims == dims && model.n_members() == cfg.members => {
            model.members.clone()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, 0x1717));
            (0..cfg.members).map(|_| MemberParams::init(&mut rng, dims)).collect()
        }
    };

    let data = prepare(buffer, &norm, n);

    // Per-member bootstrap resample of the buffer (with replacement).
    let bootstraps: Vec<Vec<usize>> = (0..cfg.members)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, 0xB007 + i as u64));
            (0..buffer.len()).map(|_| rng.random_range(0..buffer.len())).collect()
        })
        .collect();

    let mut velocities: Vec<BTreeMap<&'static str, Tensor>> = members
        .iter()
        .map(|m| m.named().iter().map(|(name, t)| (*name, Tensor::zeros(t.shape()))).collect())
        .collect();

    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut epoch_nll = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<MemberParams>)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        let mut loss_acc = 0.0;
        let mut nll_acc = 0.0;
        let mut count = 0usize;
        for (mi, member) in members.iter_mut().enumerate() {
            let mut rng =
                ChaCha8Rng::seed_from_u64(splitmix(seed, 0x5A1E + (epoch * 131 + mi) as u64));
            for step in 0..cfg.steps_per_epoch {
                let batch: Vec<usize> = (0..cfg.batch_size)
                    .map(|_| bootstraps[mi][rng.random_range(0..bootstraps[mi].len())])
                    .collect();
                let (loss, nll) =
                    sgd_step(member, &mut velocities[mi], &data, &batch, dims, cfg, lr)
                        .map_err(|e| {
                            Error::Training(format!(
                                "member {mi}, epoch {epoch}, step {step}: {e}"
                            ))
                        })?;
                loss_acc += loss;
                nll_acc += nll;
                count += 1;
            }
        }
        let mean_loss = loss_acc / count as f64;
        let mean_nll = nll_acc / count as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite epoch loss {mean_loss} at epoch {epoch}"
            )));
        }
        epoch_loss.push(mean_loss);
        epoch_nll.push(mean_nll);
        if best.as_ref().map_or(true, |(_, b, _)| mean_nll < *b) {
            best = Some((epoch, mean_nll, members.clone()));
        }
    }

    let (best_epoch, best_nll, best_members) = best.expect("at least one epoch");
    let report = FitReport {
        first_epoch_nll: epoch_nll[0],
        final_epoch_nll: best_nll,
        best_epoch,
        epoch_loss,
        epoch_nll,
    };
    let model = EnsembleModel {
        version: CHECKPOINT_VERSION,
        dims,
        members: best_members,
        norm,
    };
    Ok((model, report))
}

/// One SGD-with-momentum step on one member. Returns (total loss, state NLL).
fn sgd_step(
    member: &mut MemberParams,
    velocity: &mut BTreeMap<&'static str, Tensor>,
    data: &PreparedData,
    batch: &[usize],
    dims: ModelDims,
    cfg: &FitConfig,
    lr: f64,
) -> Result<(f64, f64)> {
    let b = batch.len();
    let gather = |rows: &Vec<Vec<f64>>, width: usize| -> Result<Tensor> {
        let mut out = Vec::with_capacity(b * width);
        for &i in batch {
            out.extend_from_slice(&rows[i]);
        }
        Tensor::from_vec(&[b, width], out)
    };
    let s_norm = gather(&data.s_norm, dims.state)?;
    let a_norm = gather(&data.a_norm, dims.action)?;
    let delta = gather(&data.delta_norm, dims.state)?;
    let reward =
        Tensor::from_vec(&[b, 1], batch.iter().map(|&i| data.reward[i]).collect())?;
    let cost = Tensor::from_vec(&[b, 1], batch.iter().map(|&i| data.cost[i]).collect())?;

    let mut tape = Tape::new();
    let params = MemberTapeParams::inputs(&mut tape, "m", member)?;
    let s = tape.constant(s_norm);
    let a = tape.constant(a_norm);
    let nodes = member_forward_tape(&mut tape, &params, s, a)?;

    let delta_c = tape.constant(delta);
    let lp = tape.gaussian_logpdf(delta_c, nodes.mu, nodes.log_var)?;
    let lp_sum = tape.sum(lp);
    let nll = tape.scale(lp_sum, -1.0 / b as f64)?;

    let r_c = tape.constant(reward);
    let r_err = tape.sub(nodes.reward, r_c)?;
    let r_sq = tape.mul(r_err, r_err)?;
    let r_sum = tape.sum(r_sq);
    let se = tape.scale(r_sum, 1.0 / b as f64)?;

    let c_c = tape.constant(cost);
    let sp = tape.softplus(nodes.cost_logit);
    let zy = tape.mul(nodes.cost_logit, c_c)?;
    let bce_terms = tape.sub(sp, zy)?;
    let bce_sum = tape.sum(bce_terms);
    let bce = tape.scale(bce_sum, 1.0 / b as f64)?;

    let partial = tape.add(nll, se)?;
    let loss = tape.add(partial, bce)?;
    tape.set_output(loss);

    let mut bindings = Bindings::new();
    for (name, t) in member.named() {
        bindings.insert(format!("m.{name}"), t.clone());
    }
    let loss_val = tape.forward(&bindings)?.item();
    if !loss_val.is_finite() {
        return Err(Error::Training(format!("non-finite loss {loss_val}")));
    }
    let nll_val = tape.value(nll).expect("forward cached").item();
    let grads = tape.backward()?;

    // global-norm clip
    let mut sq = 0.0;
    for g in grads.values() {
        sq += g.data().iter().map(|v| v * v).sum::<f64>();
    }
    let gnorm = sq.sqrt();
    let clip = if gnorm > cfg.grad_clip { cfg.grad_clip / gnorm } else { 1.0 };

    for (name, t) in member.named_mut() {
        let g = &grads[&format!("m.{name}")];
        let v = velocity.get_mut(name).expect("velocity per parameter");
        // cost-head weights are exempt: their init spread carries the
        // ensemble's out-of-distribution caution
        let decay = if name.starts_with('w') && name != "w_c" {
            1.0 - lr * cfg.weight_decay
        } else {
            1.0
        };
        for ((vi, ti), gi) in v.data_mut().iter_mut().zip(t.data_mut()).zip(g.data()) {
            *vi = cfg.momentum * *vi + clip * gi;
            *ti = *ti * decay - lr * *vi;
        }
    }
    Ok((loss_val, nll_val))
}

pub(crate) fn splitmix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E3779B97F4A7C15);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
