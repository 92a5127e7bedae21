//! Tape-side construction of the member network, mirroring
//! [`MemberParams::forward`] node for node so the plain path and the tape
//! path agree bitwise.

use super::{MemberParams, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::autodiff::{NodeId, Tape};
use crate::error::Result;

/// Node ids for one member's 13 parameter tensors on a tape. Either inputs
/// (training: gradients flow into the model) or constants (imagination:
/// the model is frozen and gradients flow through it to the policy).
#[derive(Clone, Copy)]
pub(crate) struct MemberTapeParams {
    w_s: NodeId,
    w_a: NodeId,
    b0: NodeId,
    w1: NodeId,
    b1: NodeId,
    w_mu: NodeId,
    b_mu: NodeId,
    w_lv: NodeId,
    b_lv: NodeId,
    w_r: NodeId,
    b_r: NodeId,
    w_c: NodeId,
    b_c: NodeId,
}

impl MemberTapeParams {
    /// Register the member parameters as named inputs (`<prefix>.<name>`).
    pub(crate) fn inputs(tape: &mut Tape, prefix: &str, params: &MemberParams) -> Result<Self> {
        let mut ids = Vec::with_capacity(13);
        for (name, t) in params.named() {
            ids.push(tape.input(&format!("{prefix}.{name}"), t.shape())?);
        }
        Ok(Self::from_vec(&ids))
    }

    /// Embed the member parameters as constants.
    pub(crate) fn constants(tape: &mut Tape, params: &MemberParams) -> Self {
        let mut ids = Vec::with_capacity(13);
        for (_, t) in params.named() {
            ids.push(tape.constant(t.clone()));
        }
        Self::from_vec(&ids)
    }

    fn from_vec(ids: &[NodeId]) -> Self {
        MemberTapeParams {
            w_s: ids[0],
            w_a: ids[1],
            b0: ids[2],
            w1: ids[3],
            b1: ids[4],
            w_mu: ids[5],
            b_mu: ids[6],
            w_lv: ids[7],
            b_lv: ids[8],
            w_r: ids[9],
            b_r: ids[10],
            w_c: ids[11],
            b_c: ids[12],
        }
    }
}

pub(crate) struct MemberNodes {
    /// Delta mean, normalized space, shape (B, n).
    pub mu: NodeId,
    /// Clamped log-variance, normalized space, shape (B, n).
    pub log_var: NodeId,
    /// Reward estimates, shape (B, 1).
    pub reward: NodeId,
    /// Cost logits, shape (B, 1).
    pub cost_logit: NodeId,
}

/// Member network on the tape: `s_norm`, `a_norm` are (B, n) / (B, m) nodes.
pub(crate) fn member_forward_tape(
    tape: &mut Tape,
    p: &MemberTapeParams,
    s_norm: NodeId,
    a_norm: NodeId,
) -> Result<MemberNodes> {
    let s_part = tape.affine(s_norm, p.w_s, p.b0)?;
    let a_part = tape.matmul(a_norm, p.w_a)?;
    let pre = tape.add(s_part, a_part)?;
    let h0 = tape.tanh(pre);
    let h1pre = tape.affine(h0, p.w1, p.b1)?;
    let h1 = tape.tanh(h1pre);
    let mu = tape.affine(h1, p.w_mu, p.b_mu)?;
    let lv_raw = tape.affine(h1, p.w_lv, p.b_lv)?;
    let log_var = tape.softclamp(lv_raw, LOG_VAR_MIN, LOG_VAR_MAX)?;
    let reward = tape.affine(h1, p.w_r, p.b_r)?;
    let cost_logit = tape.affine(h1, p.w_c, p.b_c)?;
    Ok(MemberNodes { mu, log_var, reward, cost_logit })
}
