//! Reverse-mode gradients of a tiny maxout classifier, checked against
//! central differences.

use realnessgan::diffcore::{check_gradients, DiffError, GradCheckOptions, Tape, Tensor, Var};

fn loss(tape: &mut Tape, v: &[Var]) -> Result<Var, DiffError> {
    // v = [x, w_a, b_a, w_b, b_b, head]
    let h = tape.maxout(v[0], &[(v[1], v[2]), (v[3], v[4])])?;
    let logits = tape.matmul(h, v[5])?;
    let lp = tape.log_softmax(logits)?;
    let m = tape.mean(lp, None)?;
    tape.neg(m)
}

fn main() -> Result<(), DiffError> {
    let x = Tensor::matrix(3, 2, vec![0.5, -1.0, 1.5, 0.25, -0.75, 2.0]);
    let wa = Tensor::matrix(2, 3, vec![0.3, -0.2, 0.8, 0.1, 0.5, -0.4]);
    let ba = Tensor::from_vec(vec![0.0, 0.1, -0.1]);
    let wb = Tensor::matrix(2, 3, vec![-0.6, 0.4, 0.2, 0.7, -0.3, 0.9]);
    let bb = Tensor::from_vec(vec![0.05, 0.0, 0.2]);
    let head = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
    let inputs = [x, wa, ba, wb, bb, head];

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = loss(&mut tape, &vars)?;
    println!("loss = {:.6}  ({} tape nodes)", tape.value(out).item(), tape.len());
    let grads = tape.backward(out)?;
    println!("d loss / d head =");
    let g = grads.wrt(vars[5]).expect("head gradient");
    for r in 0..g.rows() {
        println!("  {:?}", g.row(r).iter().map(|v| format!("{v:+.5}")).collect::<Vec<_>>());
    }

    let report = check_gradients(loss, &inputs, &GradCheckOptions::default())?;
    println!(
        "finite differences: {} coordinates, max relative error {:.2e}, nearest kink {:.3}",
        report.checked, report.max_rel_error, report.kink_margin
    );
    Ok(())
}
