//! The 3x3 Gaussian grid and its mode metrics on real data, a collapsed
//! sampler and a blurry one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use realnessgan::diffcore::Tensor;
use realnessgan::synthetic::{evaluate_modes, sample_data, GaussianGridConfig, ModeMetrics};

fn describe(name: &str, m: &ModeMetrics) {
    println!(
        "{name:<10} modes {} hq_ratio {:.3} dispersion {}",
        m.modes_recovered,
        m.hq_ratio,
        m.dispersion.map_or("-".into(), |d| format!("{d:.4}"))
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = GaussianGridConfig { n_samples: 10_000, ..GaussianGridConfig::default() };
    println!("means {:?}, sigma {:.4}", cfg.means, cfg.sigma);
    let data = sample_data(&cfg)?;
    describe("data", &evaluate_modes(&data, &cfg));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tight = Normal::new(0.0, cfg.sigma / 4.0)?;
    let collapsed: Vec<f64> = (0..2 * 10_000).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 } + tight.sample(&mut rng)).collect();
    describe("collapsed", &evaluate_modes(&Tensor::matrix(10_000, 2, collapsed), &cfg));

    let wide = Normal::new(0.0, 2.0)?;
    let blurry: Vec<f64> = (0..2 * 10_000).map(|_| wide.sample(&mut rng)).collect();
    describe("blurry", &evaluate_modes(&Tensor::matrix(10_000, 2, blurry), &cfg));
    Ok(())
}
