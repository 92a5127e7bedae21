//! A short safe training run on the hazard-navigation task: collect, refit
//! the ensemble, improve the policy inside the model-feasible set, evaluate.
//! Prints one line per epoch plus the feasibility ledger summary.
//!
//! Run with: cargo run --release --example train_point_hazard

use barrier_rl::agent::{train, EpochHook, EpochStats, OptimizerArm, Policy};
use barrier_rl::ensemble::EnsembleModel;
use barrier_rl::harness::TrainConfig;

struct PrintHook;

impl EpochHook for PrintHook {
    fn on_epoch(
        &mut self,
        s: &EpochStats,
        _policy: &Policy,
        _ensemble: &EnsembleModel,
    ) -> barrier_rl::Result<()> {
        println!(
            "epoch {:2}  J {:7.3}  Jc {:6.2}  accumulated cost {:7.1}  eta {}  model J^c {}",
            s.epoch,
            s.j_hat,
            s.jc_hat,
            s.accumulated_cost,
            s.eta.map_or("     -".into(), |e| format!("{e:.4}")),
            s.model_jc.map_or("-".into(), |v| format!("{v:+.3}")),
        );
        Ok(())
    }
}

fn main() -> barrier_rl::Result<()> {
    let mut cfg = TrainConfig::default();
    cfg.epochs = 18; // a taste of the full 50-epoch protocol
    let env = cfg.build_env()?;
    let spec = cfg.to_spec(Some(OptimizerArm::Lbsgd), Some(1))?;

    println!(
        "point-hazard task: T = {}, episode budget d_scaled = {}, {} hazards",
        cfg.env.horizon,
        cfg.d_scaled(),
        env.layout.hazards.len()
    );
    let outcome = train(&spec, &env, &mut PrintHook)?;

    let accepted = outcome.ledger.iter().filter(|e| e.accepted).count();
    let worst = outcome.ledger.iter().map(|e| e.j_c).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "\n{} policy updates ({} accepted); worst model-evaluated J^c at any update: {:+.4} (< 0 throughout)",
        outcome.ledger.len(),
        accepted,
        worst
    );
    Ok(())
}
