//! Build a few tapes and compare their backward gradients against central
//! finite differences, including a deliberately broken case so the report's
//! coordinate pinpointing is visible.
//!
//! Run with: cargo run --example grad_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use barrier_rl::autodiff::{grad_check, Bindings, Tape};
use barrier_rl::tensor::Tensor;

fn main() -> barrier_rl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // f(x) = sum(tanh(x W + b)), a single tanh layer
    let mut tape = Tape::new();
    let x = tape.input("x", &[3])?;
    let w = tape.input("w", &[3, 4])?;
    let b = tape.input("b", &[4])?;
    let h = tape.affine(x, w, b)?;
    let h = tape.tanh(h);
    let out = tape.sum(h);
    tape.set_output(out);

    let mut bindings = Bindings::new();
    for (name, shape) in [("x", vec![3]), ("w", vec![3, 4]), ("b", vec![4])] {
        let len: usize = shape.iter().product();
        let data: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        bindings.insert(name.into(), Tensor::from_vec(&shape, data)?);
    }
    let report = grad_check(&mut tape, &bindings, 1e-5, 1e-4)?;
    println!(
        "tanh layer: pass = {}, {} coordinates checked, max rel err = {:.3e}",
        report.pass, report.coords_checked, report.max_rel_err
    );

    // a barrier-shaped scalar: f(j, jc) = j + 0.1 * log(-jc)
    let mut tape = Tape::new();
    let j = tape.input("j", &[])?;
    let jc = tape.input("jc", &[])?;
    let neg = tape.scale(jc, -1.0)?;
    let log = tape.log(neg);
    let barrier = tape.scale(log, 0.1)?;
    let out = tape.add(j, barrier)?;
    tape.set_output(out);
    let mut bindings = Bindings::new();
    bindings.insert("j".into(), Tensor::scalar(1.3));
    bindings.insert("jc".into(), Tensor::scalar(-0.4));
    let report = grad_check(&mut tape, &bindings, 1e-6, 1e-4)?;
    println!(
        "log-barrier scalar: pass = {}, max rel err = {:.3e}",
        report.pass, report.max_rel_err
    );

    // negative control: max() at an exact tie has a subgradient that cannot
    // match the symmetric finite difference, and the report names the spot
    let mut tape = Tape::new();
    let a = tape.input("a", &[2])?;
    let b2 = tape.input("b", &[2])?;
    let m = tape.max(a, b2)?;
    let out = tape.sum(m);
    tape.set_output(out);
    let mut bindings = Bindings::new();
    bindings.insert("a".into(), Tensor::vector(vec![1.0, 0.0]));
    bindings.insert("b".into(), Tensor::vector(vec![1.0, 2.0]));
    let report = grad_check(&mut tape, &bindings, 1e-5, 1e-4)?;
    println!("max at a tie: pass = {} (expected false)", report.pass);
    for f in &report.failures {
        println!(
            "  flagged {}[{}]: analytic {:.3} vs numeric {:.3}",
            f.input, f.index, f.analytic, f.numeric
        );
    }
    Ok(())
}
