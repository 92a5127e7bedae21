//! Worst-case policy evaluation under the model set: per-member imagined
//! rollouts share one batch of start states and frozen noise, the constraint
//! takes the max over members, and its gradient comes from the worst member's
//! tape.
//!
//! Run with: cargo run --example pessimistic_rollouts

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use barrier_rl::agent::{ActionBounds, Policy, PolicyDims};
use barrier_rl::ensemble::{
    EnsembleModel, MemberParams, ModelDims, NormStats, Normalization, CHECKPOINT_VERSION,
};
use barrier_rl::pessimism::ImaginedBatch;
use barrier_rl::tensor::Tensor;

fn main() -> barrier_rl::Result<()> {
    let dims = ModelDims { state: 4, action: 2, hidden: 16 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n_in = dims.state + dims.action;
    let ensemble = EnsembleModel {
        version: CHECKPOINT_VERSION,
        dims,
        members: (0..5).map(|_| MemberParams::init(&mut rng, dims)).collect(),
        norm: Normalization {
            input: NormStats { mean: vec![0.0; n_in], std: vec![1.0; n_in] },
            delta: NormStats { mean: vec![0.0; dims.state], std: vec![0.1; dims.state] },
        },
    };
    let mut policy = Policy::init(
        &mut rng,
        PolicyDims { state: 4, action: 2, hidden: 16 },
        ActionBounds::unit(2),
        -1.5,
    );
    for v in policy.w_mu.data_mut() {
        *v = rng.random_range(-0.3..0.3);
    }

    let batch_size = 64;
    let states = Tensor::from_vec(
        &[batch_size, 4],
        (0..batch_size * 4).map(|_| rng.random_range(-0.5..0.5)).collect(),
    )?;
    let horizon = 15;
    let budget_offset = 5.0 * horizon as f64 / 200.0; // episode budget prorated to H

    let mut batch =
        ImaginedBatch::new(&policy, &ensemble, states, horizon, 2024, budget_offset)?;
    let est = batch.pessimistic_eval(&policy)?;
    println!("imagined over H = {horizon} steps, budget offset {budget_offset}:");
    for (i, (j, jc)) in est.per_member_j.iter().zip(&est.per_member_jc).enumerate() {
        let marker = if i == est.argmax { "  <- worst case" } else { "" };
        println!("  member {i}: J = {j:+.4}, J^c = {jc:+.4}{marker}");
    }
    let mean_jc =
        est.per_member_jc.iter().sum::<f64>() / est.per_member_jc.len() as f64;
    println!("objective (ensemble mean J): {:+.4}", est.j);
    println!("constraint: max {:+.4} >= mean {mean_jc:+.4} (pessimism dominates)", est.jc_max);

    // gradients: the constraint gradient is the argmax member's, obtained by
    // backpropagating through that member's rollout tape
    let terms = batch.gradient_terms(&policy)?;
    let gnorm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!(
        "gradient norms wrt the {} policy parameters: |grad J| = {:.3}, |grad J^c| = {:.3} (member {})",
        policy.param_count(),
        gnorm(&terms.grad_j),
        gnorm(&terms.grad_jc),
        terms.argmax
    );
    Ok(())
}
