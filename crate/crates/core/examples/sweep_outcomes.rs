//! Outcome-count by generator-step sweep on a reduced network, printed as
//! the same table the CLI writes. First argument: iterations (default 40).

use realnessgan::harness::{sweep_outcomes, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(40);
    let mut base = ExperimentConfig { iterations, ..ExperimentConfig::default() };
    base.generator.hidden = vec![64; 2];
    base.d_hidden = vec![64; 2];
    base.eval_samples = 2000;
    let result = sweep_outcomes(&base, &[2, 5, 10], &[1, 2], |c| eprintln!("done: outcomes {} k_g {}", c.outcomes, c.k_g))?;
    print!("{}", result.table());
    for c in result.best_per_outcomes() {
        println!("best k_g for {} outcomes: {}", c.outcomes, c.k_g);
    }
    Ok(())
}
