//! Anchor distributions, discriminator realness distributions and the
//! resulting losses for a handful of logits.

use realnessgan::diffcore::{Tape, Tensor};
use realnessgan::losses::{d_loss_realness, g_loss_realness, GObjective};
use realnessgan::realness::{expected_realness, kl_divergence, make_anchor_pair, OutcomeSet, RealnessOutput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 10;
    let anchors = make_anchor_pair(n, 4.0)?;
    let outcomes = OutcomeSet::new(n)?;
    let show = |v: &[f64]| v.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(" ");
    println!("outcomes  {}", show(outcomes.values()));
    println!("A1 (real) {}", show(anchors.real.probs()));
    println!("A0 (fake) {}", show(anchors.fake.probs()));
    println!("KL(A1 || A0) = {:.4}", anchors.separation());
    println!(
        "expected realness: A1 {:+.3}, A0 {:+.3}",
        expected_realness(anchors.real.probs(), &outcomes),
        expected_realness(anchors.fake.probs(), &outcomes)
    );

    // Two rows that lean real and two that lean fake.
    let lean = |sign: f64| -> Vec<f64> { outcomes.values().iter().map(|u| sign * 3.0 * u).collect() };
    let real_logits = Tensor::from_rows(&[lean(1.0), lean(0.5)])?;
    let fake_logits = Tensor::from_rows(&[lean(-1.0), lean(0.2)])?;
    let mut tape = Tape::new();
    let rv = tape.constant(real_logits);
    let fv = tape.constant(fake_logits);
    let real = RealnessOutput::from_logits(&mut tape, rv)?;
    let fake = RealnessOutput::from_logits(&mut tape, fv)?;
    for (name, out) in [("real", &real), ("fake", &fake)] {
        let probs = tape.value(out.probs).clone();
        for r in 0..probs.rows() {
            let p = probs.row(r);
            println!(
                "{name}[{r}] KL(A1||D) {:.3}  KL(A0||D) {:.3}",
                kl_divergence(anchors.real.probs(), p)?,
                kl_divergence(anchors.fake.probs(), p)?
            );
        }
    }
    let d = d_loss_realness(&mut tape, &real, &fake, &anchors)?;
    println!("D loss {:.4}", tape.value(d).item());
    for objective in [GObjective::Ideal, GObjective::Relativistic, GObjective::RealAnchor] {
        let g = g_loss_realness(&mut tape, &fake, Some(&real), &anchors, objective)?;
        println!("G loss, objective {}: {:.4}", objective.index(), tape.value(g).item());
    }
    Ok(())
}
