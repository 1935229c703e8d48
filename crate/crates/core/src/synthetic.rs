//! Nine-Gaussian toy data on a 3×3 grid and mode-recovery metrics.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::Tensor;

/// Samples farther than this many `sigma` from their nearest mean are low
/// quality.
pub const HQ_RADIUS_SIGMAS: f64 = 4.0;
/// A mode counts as recovered when it has strictly more high-quality
/// samples than this.
pub const MODE_MIN_HQ: usize = 100;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid data config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianGridConfig {
    pub means: Vec<[f64; 2]>,
    /// Component standard deviation.
    pub sigma: f64,
    pub n_samples: usize,
    pub grid_spacing: f64,
    pub seed: u64,
}

impl Default for GaussianGridConfig {
    fn default() -> Self {
        Self::grid(2.0, 0.05f64.sqrt(), 100_000, 0)
    }
}

impl GaussianGridConfig {
    /// Means at `{−spacing, 0, spacing}²` in row-major order.
    pub fn grid(spacing: f64, sigma: f64, n_samples: usize, seed: u64) -> Self {
        Self { means: grid_means(spacing), sigma, n_samples, grid_spacing: spacing, seed }
    }

    /// Rebuilds `means` after `grid_spacing` changed.
    pub fn set_spacing(&mut self, spacing: f64) {
        self.grid_spacing = spacing;
        self.means = grid_means(spacing);
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.means.len() != 9 {
            return Err(SyntheticError::Config(format!("need 9 means, got {}", self.means.len())));
        }
        for (i, a) in self.means.iter().enumerate() {
            if !a.iter().all(|v| v.is_finite()) {
                return Err(SyntheticError::Config(format!("mean {i} is not finite")));
            }
            if self.means[..i].contains(a) {
                return Err(SyntheticError::Config(format!("mean {i} repeats an earlier mean")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SyntheticError::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n_samples == 0 {
            return Err(SyntheticError::Config("n_samples must be at least 1".into()));
        }
        Ok(())
    }
}

fn grid_means(spacing: f64) -> Vec<[f64; 2]> {
    let c = [-spacing, 0.0, spacing];
    c.iter().flat_map(|&x| c.iter().map(move |&y| [x, y])).collect()
}

fn draw_point(config: &GaussianGridConfig, rng: &mut impl Rng) -> [f64; 2] {
    let m = config.means[rng.random_range(0..config.means.len())];
    let nx: f64 = StandardNormal.sample(rng);
    let ny: f64 = StandardNormal.sample(rng);
    [m[0] + config.sigma * nx, m[1] + config.sigma * ny]
}

/// `[n_samples × 2]` points: a uniformly chosen mean plus isotropic noise.
pub fn sample_data(config: &GaussianGridConfig) -> Result<Tensor, SyntheticError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut data = Vec::with_capacity(config.n_samples * 2);
    for _ in 0..config.n_samples {
        data.extend(draw_point(config, &mut rng));
    }
    Ok(Tensor::matrix(config.n_samples, 2, data))
}

/// A fixed sample of the mixture from which training batches are drawn
/// uniformly with replacement.
#[derive(Clone, Debug)]
pub struct Dataset {
    points: Tensor,
}

impl Dataset {
    pub fn generate(config: &GaussianGridConfig) -> Result<Self, SyntheticError> {
        Ok(Self { points: sample_data(config)? })
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self, size: usize, rng: &mut impl Rng) -> Tensor {
        let mut data = Vec::with_capacity(size * 2);
        for _ in 0..size {
            data.extend_from_slice(self.points.row(rng.random_range(0..self.len())));
        }
        Tensor::matrix(size, 2, data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub samples: usize,
    pub hq_count: usize,
    pub hq_ratio: f64,
    pub modes_recovered: usize,
    /// High-quality samples assigned to each mean.
    pub per_mode_counts: Vec<usize>,
    /// Mean over recovered modes of `sqrt(mean squared distance / 2)`;
    /// `None` when nothing is recovered.
    pub dispersion: Option<f64>,
}

/// Index of the nearest mean (lowest index on ties) and the distance to it.
pub fn nearest_mean(p: &[f64], means: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, m) in means.iter().enumerate() {
        let d2 = (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2);
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    (best.0, best.1.sqrt())
}

/// Mode-recovery metrics for `[m × 2]` samples. Non-finite samples count
/// towards the total but are never high quality.
pub fn evaluate_modes(samples: &Tensor, config: &GaussianGridConfig) -> ModeMetrics {
    let k = config.means.len();
    let radius = HQ_RADIUS_SIGMAS * config.sigma;
    let mut counts = vec![0usize; k];
    let mut sq = vec![0.0f64; k];
    let m = samples.rows();
    for r in 0..m {
        let p = samples.row(r);
        if !p.iter().all(|v| v.is_finite()) {
            continue;
        }
        let (i, d) = nearest_mean(p, &config.means);
        if d <= radius {
            counts[i] += 1;
            sq[i] += d * d;
        }
    }
    let hq: usize = counts.iter().sum();
    let recovered: Vec<usize> = (0..k).filter(|&i| counts[i] > MODE_MIN_HQ).collect();
    let dispersion = (!recovered.is_empty()).then(|| {
        recovered.iter().map(|&i| (sq[i] / counts[i] as f64 / 2.0).sqrt()).sum::<f64>() / recovered.len() as f64
    });
    ModeMetrics {
        samples: m,
        hq_count: hq,
        hq_ratio: if m == 0 { 0.0 } else { hq as f64 / m as f64 },
        modes_recovered: recovered.len(),
        per_mode_counts: counts,
        dispersion,
    }
}

/// Two-column `x,y` CSV with a header row.
pub fn write_points_csv(w: &mut impl Write, points: &Tensor) -> io::Result<()> {
    writeln!(w, "x,y")?;
    for r in 0..points.rows() {
        let p = points.row(r);
        writeln!(w, "{},{}", p[0], p[1])?;
    }
    Ok(())
}

pub fn read_points_csv(r: impl BufRead) -> Result<Tensor, SyntheticError> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "x,y" => {}
        _ => return Err(SyntheticError::Csv("missing 'x,y' header".into())),
    }
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',').map(|v| v.trim().parse::<f64>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y)), None) => data.extend([x, y]),
            _ => return Err(SyntheticError::Csv(format!("line {}: expected two numbers", i + 2))),
        }
    }
    let n = data.len() / 2;
    Ok(Tensor::matrix(n, 2, data))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn small(n: usize, seed: u64) -> GaussianGridConfig {
        GaussianGridConfig { n_samples: n, seed, ..Default::default() }
    }

    #[test]
    fn default_geometry() {
        let c = GaussianGridConfig::default();
        c.validate().unwrap();
        assert_eq!(c.means[0], [-2.0, -2.0]);
        assert_eq!(c.means[4], [0.0, 0.0]);
        assert_eq!(c.means[8], [2.0, 2.0]);
        assert!((c.sigma * c.sigma - 0.05).abs() < 1e-15);
        assert_eq!(c.n_samples, 100_000);
    }

    #[test]
    fn invalid_configs() {
        let mut c = small(10, 0);
        c.sigma = 0.0;
        assert!(c.validate().is_err());
        let mut c = small(0, 0);
        assert!(c.validate().is_err());
        c.n_samples = 1;
        c.means[3] = c.means[0];
        assert!(c.validate().is_err());
        c.means.pop();
        assert!(sample_data(&c).is_err());
    }

    #[test]
    fn vanishing_sigma_lands_on_means() {
        let mut c = small(2000, 3);
        c.sigma = 1e-12;
        let x = sample_data(&c).unwrap();
        for r in 0..x.rows() {
            assert!(nearest_mean(x.row(r), &c.means).1 < 1e-9);
        }
    }

    #[test]
    fn full_sample_statistics() {
        let c = GaussianGridConfig::default();
        let x = sample_data(&c).unwrap();
        assert_eq!(x.shape(), &[100_000, 2]);
        let mut counts = [0usize; 9];
        let mut sq = [0.0; 9];
        for r in 0..x.rows() {
            let (i, d) = nearest_mean(x.row(r), &c.means);
            counts[i] += 1;
            sq[i] += d * d;
        }
        for i in 0..9 {
            assert!((counts[i] as i64 - 11_111).abs() <= 500, "mode {i}: {}", counts[i]);
            let std = (sq[i] / counts[i] as f64 / 2.0).sqrt();
            assert!((std / c.sigma - 1.0).abs() < 0.02, "mode {i}: {std}");
        }
        assert_eq!(x, sample_data(&c).unwrap());
        assert_ne!(x, sample_data(&small(100_000, 1)).unwrap());
    }

    #[test]
    fn points_on_means_are_perfect() {
        let c = small(10, 0);
        let mut data = Vec::new();
        for i in 0..10_000 {
            data.extend(c.means[i % 9]);
        }
        let m = evaluate_modes(&Tensor::matrix(10_000, 2, data), &c);
        assert_eq!(m.modes_recovered, 9);
        assert_eq!(m.hq_ratio, 1.0);
        assert_eq!(m.dispersion, Some(0.0));
        assert_eq!(m.per_mode_counts.iter().sum::<usize>(), 10_000);
    }

    #[test]
    fn far_box_recovers_nothing() {
        let c = small(10, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..2000).map(|_| rng.random_range(10.0..12.0)).collect();
        let m = evaluate_modes(&Tensor::matrix(1000, 2, data), &c);
        assert_eq!((m.hq_count, m.modes_recovered, m.dispersion), (0, 0, None));
        assert_eq!(m.hq_ratio, 0.0);
    }

    #[test]
    fn threshold_is_strictly_more_than_100() {
        let c = small(10, 0);
        let at = |n: usize| {
            let data: Vec<f64> = (0..n).flat_map(|_| c.means[2]).collect();
            evaluate_modes(&Tensor::matrix(n, 2, data), &c).modes_recovered
        };
        assert_eq!(at(100), 0);
        assert_eq!(at(101), 1);
    }

    #[test]
    fn ties_go_to_lowest_index_and_nan_is_low_quality() {
        let c = small(10, 0);
        assert_eq!(nearest_mean(&[-1.0, -2.0], &c.means).0, 0);
        let m = evaluate_modes(&Tensor::matrix(2, 2, vec![f64::NAN, 0.0, 0.0, 0.0]), &c);
        assert_eq!((m.samples, m.hq_count), (2, 1));
    }

    #[test]
    fn true_mixture_recovers_all_modes() {
        for seed in 0..5 {
            let x = sample_data(&small(10_000, seed)).unwrap();
            let m = evaluate_modes(&x, &small(10_000, seed));
            assert_eq!(m.modes_recovered, 9);
            assert!(m.hq_ratio > 0.99);
            assert!((m.dispersion.unwrap() / m_sigma() - 1.0).abs() < 0.05);
        }
    }

    fn m_sigma() -> f64 {
        0.05f64.sqrt()
    }

    #[test]
    fn csv_round_trip() {
        let x = sample_data(&small(50, 9)).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &x).unwrap();
        assert!(buf.starts_with(b"x,y\n"));
        assert_eq!(read_points_csv(buf.as_slice()).unwrap(), x);
        assert!(read_points_csv(&b"a,b\n1,2\n"[..]).is_err());
        assert!(read_points_csv(&b"x,y\n1\n"[..]).is_err());
    }

    #[test]
    fn dataset_batches_come_from_the_pool() {
        let ds = Dataset::generate(&small(30, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = ds.batch(64, &mut rng);
        for r in 0..64 {
            assert!((0..30).any(|i| ds.points().row(i) == b.row(r)));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn translation_and_permutation_invariant(seed in any::<u64>(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
            let c = small(600, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // mixture points plus far-off noise so every branch is exercised
            let mut pts: Vec<[f64; 2]> = (0..600).map(|_| draw_point(&c, &mut rng)).collect();
            pts.extend((0..200).map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]));
            let flat = |v: &[[f64; 2]]| Tensor::matrix(v.len(), 2, v.iter().flatten().copied().collect());
            let base = evaluate_modes(&flat(&pts), &c);

            let mut shifted_cfg = c.clone();
            shifted_cfg.means.iter_mut().for_each(|m| { m[0] += dx; m[1] += dy; });
            let shifted: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
            let s = evaluate_modes(&flat(&shifted), &shifted_cfg);
            prop_assert_eq!(s.modes_recovered, base.modes_recovered);
            prop_assert!((s.hq_count as i64 - base.hq_count as i64).abs() <= 2);

            let mut rev = pts.clone();
            rev.reverse();
            let r = evaluate_modes(&flat(&rev), &c);
            prop_assert_eq!(&r.per_mode_counts, &base.per_mode_counts);
            prop_assert_eq!(r.modes_recovered, base.modes_recovered);
        }
    }
}
