//! The optimal-discriminator and generator-optimum identities on random
//! finite worlds, plus one worked example.

use realnessgan::realness::make_anchor_pair;
use realnessgan::theory::{optimal_discriminator, v_prime, v_star, value_function, verify_theory, DiscreteWorld, TheoryCheckConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let anchors = make_anchor_pair(5, 2.0)?;
    let world = DiscreteWorld::new(vec![0.5, 0.3, 0.2], vec![0.2, 0.2, 0.6])?;
    let d = optimal_discriminator(&world, &anchors)?;
    println!("V(D*) = {:.6}, V* = {:.6}", value_function(&world, &d, &anchors)?, v_star(&anchors));
    let vp = v_prime(&world, &anchors)?;
    println!("V(D*) - V*: direct {:.3e}, joint KL form {:.3e}", vp.direct, vp.joint_kl);
    let same = world.with_generator(world.p_data().to_vec())?;
    println!("with p_g = p_data: {:.3e}", v_prime(&same, &anchors)?.direct);
    println!();

    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50);
    let report = verify_theory(&TheoryCheckConfig { trials, ..TheoryCheckConfig::default() })?;
    print!("{}", report.to_text());
    Ok(())
}
