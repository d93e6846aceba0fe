//! Tours the reverse-mode tape: records a small residual Gabor network with a
//! mean-squared-error loss, runs one backward pass, and validates every
//! parameter gradient against central finite differences.
//!
//!     cargo run --release --example autodiff_tape

use trajinr::diffcore::{grad_check, Activation, Tape};

fn main() -> trajinr::Result<()> {
    // a 2 -> 4 -> 4 -> 1 network stored in bias-row-augmented form:
    // each matrix is [(in+1) x out] and y = [x | 1] * M
    let sizes = [(3, 4), (5, 4), (5, 1)];
    let n_params: usize = sizes.iter().map(|(r, c)| r * c).sum();
    let point: Vec<f64> = (0..n_params)
        .map(|i| ((i as f64 * 0.7).sin()) * 0.4)
        .collect();
    let x = vec![0.3, -0.8, -0.2, 0.5, 0.9, 0.1]; // batch of 3 rows
    let target = vec![0.25, -0.5, 0.75];

    let eval = |flat: &[f64]| -> trajinr::Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let mut vars = Vec::new();
        let mut off = 0;
        for (r, c) in sizes {
            vars.push(tape.input(vec![r, c], flat[off..off + r * c].to_vec())?);
            off += r * c;
        }
        let xin = tape.input(vec![3, 2], x.clone())?;
        let gabor = Activation::Gabor { omega0: 20.0, s0: 10.0 };
        let pre = tape.matmul_aug(vars[0], xin)?;
        let mut y = tape.apply_activation(pre, gabor)?;
        y = tape.residual_layer_aug(vars[1], y, gabor)?;
        let out = tape.matmul_aug(vars[2], y)?;
        let tgt = tape.input(vec![3, 1], target.clone())?;
        let loss = tape.mse_loss(out, tgt)?;
        tape.backward(loss)?;
        let mut grad = Vec::new();
        for v in &vars {
            grad.extend_from_slice(tape.grad(*v));
        }
        Ok((tape.scalar(loss), grad))
    };

    let (loss, analytic) = eval(&point)?;
    println!("loss = {loss:.6} over {n_params} parameters");

    let err = grad_check(|f| eval(f).map(|(l, _)| l), &analytic, &point, 1e-5)?;
    println!("max relative error vs central finite differences: {err:.3e}");
    assert!(err < 1e-5, "gradient check failed: {err}");
    println!("analytic gradients match finite differences");
    Ok(())
}
