//! Short runs of every method with the same architecture, data and seed.
//! First argument: iterations (default 60).

use realnessgan::harness::{train, ExperimentConfig};
use realnessgan::losses::{GObjective, LossKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(60);
    let methods = [
        LossKind::Realness(GObjective::Relativistic),
        LossKind::Standard,
        LossKind::Lsgan,
        LossKind::Hinge,
        LossKind::WganFd,
    ];
    println!("method,k_d,k_g,modes,hq_ratio,seconds");
    for method in methods {
        let mut cfg = ExperimentConfig::for_method(method);
        cfg.iterations = iterations;
        cfg.generator.hidden = vec![128; 3];
        cfg.d_hidden = vec![128; 2];
        cfg.eval_samples = 4000;
        let s = train(&cfg)?.summary;
        let m = &s.final_metrics;
        let status = s.failure.as_ref().map_or(String::new(), |f| format!(" (diverged at {})", f.iteration));
        println!("{method},{},{},{},{:.3},{:.1}{status}", cfg.k_d, cfg.k_g, m.modes_recovered, m.hq_ratio, s.wall_clock_secs);
    }
    Ok(())
}
