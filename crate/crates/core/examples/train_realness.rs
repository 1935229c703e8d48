//! One realness run on the Gaussian grid. Pass the iteration count as the
//! first argument (default 100; the full default config uses 500).

use realnessgan::harness::{train, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let cfg = ExperimentConfig { iterations, eval_every: 25, seed: 1, ..ExperimentConfig::default() };
    println!("{}", cfg.to_text());
    let out = train(&cfg)?;
    print!("{}", out.summary.metrics_csv());
    let m = &out.summary.final_metrics;
    println!("final: {} modes, hq_ratio {:.3}, {:.1}s", m.modes_recovered, m.hq_ratio, out.summary.wall_clock_secs);
    Ok(())
}
