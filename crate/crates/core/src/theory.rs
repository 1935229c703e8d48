//! The distributional objective on finite sample spaces.
//!
//! Everything here is exact summation over `x` and `u`; nothing is sampled
//! except the random instances used by [`verify_theory`].

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;
use thiserror::Error;

use crate::realness::{entropy, kl_divergence, Anchor, AnchorPair, RealnessError};

const NORMALIZED_TOL: f64 = 1e-12;
/// Perturbation mixing rates used by the minimality oracle.
pub const PERTURB_RATES: [f64; 3] = [0.01, 0.1, 0.5];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error(transparent)]
    Realness(#[from] RealnessError),
    #[error("{what} is not a distribution: {detail}")]
    NotDistribution { what: &'static str, detail: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("x = {0} lies outside the support of both densities")]
    OutsideSupport(usize),
    #[error("discriminator row {row} is zero where the anchor is not")]
    ZeroEntry { row: usize },
    #[error("grid search supports X in 1..=3, got {0}")]
    GridTooLarge(usize),
    #[error("grid resolution must divide 1 into whole steps, got {0}")]
    BadResolution(f64),
}

fn check_simplex(what: &'static str, p: &[f64]) -> Result<(), TheoryError> {
    if p.is_empty() {
        return Err(TheoryError::NotDistribution { what, detail: "empty".into() });
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(TheoryError::NotDistribution { what, detail: format!("entry {v}") });
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORMALIZED_TOL {
        return Err(TheoryError::NotDistribution { what, detail: format!("sums to {s}") });
    }
    Ok(())
}

/// A finite sample space with a data density and a generator density.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteWorld {
    p_data: Vec<f64>,
    p_g: Vec<f64>,
}

impl DiscreteWorld {
    pub fn new(p_data: Vec<f64>, p_g: Vec<f64>) -> Result<Self, TheoryError> {
        check_simplex("p_data", &p_data)?;
        check_simplex("p_g", &p_g)?;
        if p_data.len() != p_g.len() {
            return Err(TheoryError::Shape(format!("p_data has {} points, p_g {}", p_data.len(), p_g.len())));
        }
        Ok(Self { p_data, p_g })
    }

    pub fn size(&self) -> usize {
        self.p_data.len()
    }

    pub fn p_data(&self) -> &[f64] {
        &self.p_data
    }

    pub fn p_g(&self) -> &[f64] {
        &self.p_g
    }

    /// Same data density, generator replaced.
    pub fn with_generator(&self, p_g: Vec<f64>) -> Result<Self, TheoryError> {
        Self::new(self.p_data.clone(), p_g)
    }
}

/// One realness distribution per point of the sample space.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDiscriminator {
    rows: Vec<Vec<f64>>,
}

impl DiscreteDiscriminator {
    /// Rows must be normalized; zero entries are allowed here and rejected
    /// by [`value_function`] only where they make a divergence infinite.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, TheoryError> {
        let n = rows.first().map_or(0, Vec::len);
        for r in &rows {
            if r.len() != n {
                return Err(TheoryError::Shape("ragged discriminator rows".into()));
            }
            check_simplex("discriminator row", r)?;
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn outcomes(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

fn kl_row(anchor: &[f64], d: &[f64], x: usize) -> Result<f64, TheoryError> {
    kl_divergence(anchor, d).map_err(|e| match e {
        RealnessError::InfiniteDivergence(_) => TheoryError::ZeroEntry { row: x },
        other => other.into(),
    })
}

fn check_shapes(world: &DiscreteWorld, d: &DiscreteDiscriminator, anchors: &AnchorPair) -> Result<(), TheoryError> {
    if d.rows.len() != world.size() {
        return Err(TheoryError::Shape(format!("{} discriminator rows for {} points", d.rows.len(), world.size())));
    }
    if d.outcomes() != anchors.outcomes() {
        return Err(TheoryError::Shape(format!("{} outcomes vs anchors of {}", d.outcomes(), anchors.outcomes())));
    }
    Ok(())
}

/// `Σₓ p_data(x)·KL(A1 ‖ D(x)) + Σₓ p_g(x)·KL(A0 ‖ D(x))`.
///
/// Terms with zero density are skipped, so `D(x)` only needs to be positive
/// where a weighted anchor puts mass.
pub fn value_function(world: &DiscreteWorld, d: &DiscreteDiscriminator, anchors: &AnchorPair) -> Result<f64, TheoryError> {
    check_shapes(world, d, anchors)?;
    let mut v = 0.0;
    for x in 0..world.size() {
        let (pd, pg) = (world.p_data[x], world.p_g[x]);
        if pd > 0.0 {
            v += pd * kl_row(anchors.real.probs(), &d.rows[x], x)?;
        }
        if pg > 0.0 {
            v += pg * kl_row(anchors.fake.probs(), &d.rows[x], x)?;
        }
    }
    Ok(v)
}

/// `(p_data(x)·A1 + p_g(x)·A0) / (p_data(x) + p_g(x))`.
pub fn mixture_posterior(world: &DiscreteWorld, x: usize, anchors: &AnchorPair) -> Result<Vec<f64>, TheoryError> {
    if x >= world.size() {
        return Err(TheoryError::Shape(format!("x = {x} but the space has {} points", world.size())));
    }
    let (pd, pg) = (world.p_data[x], world.p_g[x]);
    let c = pd + pg;
    if c <= 0.0 {
        return Err(TheoryError::OutsideSupport(x));
    }
    let (wd, wg) = (pd / c, pg / c);
    Ok(anchors.real.probs().iter().zip(anchors.fake.probs()).map(|(a1, a0)| wd * a1 + wg * a0).collect())
}

/// The minimizer of [`value_function`] over discriminators: row `x` is the
/// mixture posterior at `x`.
pub fn optimal_discriminator(world: &DiscreteWorld, anchors: &AnchorPair) -> Result<DiscreteDiscriminator, TheoryError> {
    let rows = (0..world.size()).map(|x| mixture_posterior(world, x, anchors)).collect::<Result<Vec<_>, _>>()?;
    DiscreteDiscriminator::new(rows)
}

/// Value of the objective at the optimal discriminator when `p_g = p_data`:
/// `Σᵤ A1 ln(2A1/(A1+A0)) + A0 ln(2A0/(A1+A0))`.
pub fn v_star(anchors: &AnchorPair) -> f64 {
    let term = |a: f64, m: f64| if a > 0.0 { a * (a / m).ln() } else { 0.0 };
    anchors
        .real
        .probs()
        .iter()
        .zip(anchors.fake.probs())
        .map(|(&a1, &a0)| {
            let m = 0.5 * (a1 + a0);
            term(a1, m) + term(a0, m)
        })
        .sum()
}

/// Both expressions for `V(G, D*) − V*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VPrime {
    /// `value_function(D*) − v_star`.
    pub direct: f64,
    /// `−2·KL(J ‖ K)` with `J = (p_data·A1 + p_g·A0)/2` and
    /// `K = (p_data + p_g)(A1 + A0)/4` over pairs `(x, u)`.
    pub joint_kl: f64,
}

impl VPrime {
    pub fn difference(&self) -> f64 {
        (self.direct - self.joint_kl).abs()
    }
}

pub fn v_prime(world: &DiscreteWorld, anchors: &AnchorPair) -> Result<VPrime, TheoryError> {
    let d = optimal_discriminator(world, anchors)?;
    let direct = value_function(world, &d, anchors)? - v_star(anchors);
    let mut kl = 0.0;
    for x in 0..world.size() {
        let (pd, pg) = (world.p_data[x], world.p_g[x]);
        for (&a1, &a0) in anchors.real.probs().iter().zip(anchors.fake.probs()) {
            let j = 0.5 * (pd * a1 + pg * a0);
            let k = 0.25 * (pd + pg) * (a1 + a0);
            if j > 0.0 {
                kl += j * (j / k).ln();
            }
        }
    }
    Ok(VPrime { direct, joint_kl: -2.0 * kl })
}

/// Terms of `V = C1 + Σₓ C2(x)·KL(pₓ ‖ D(x)) + Σₓ C2(x)·h(pₓ)`, with
/// `C2 = p_data + p_g` and `pₓ` the mixture posterior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Decomposition {
    pub value: f64,
    /// `Σₓ [p_data·h(A1) + p_g·h(A0)]`; the constant enters with a minus sign.
    pub anchor_entropy: f64,
    pub kl_term: f64,
    pub posterior_entropy: f64,
}

impl Decomposition {
    /// Residual with `C1 = −anchor_entropy`.
    pub fn residual(&self) -> f64 {
        (self.value - (-self.anchor_entropy + self.kl_term + self.posterior_entropy)).abs()
    }

    /// Residual with the constant's sign flipped.
    pub fn flipped_residual(&self) -> f64 {
        (self.value - (self.anchor_entropy + self.kl_term + self.posterior_entropy)).abs()
    }
}

pub fn decompose(world: &DiscreteWorld, d: &DiscreteDiscriminator, anchors: &AnchorPair) -> Result<Decomposition, TheoryError> {
    let value = value_function(world, d, anchors)?;
    let (h1, h0) = (entropy(anchors.real.probs()), entropy(anchors.fake.probs()));
    let mut anchor_entropy = 0.0;
    let mut kl_term = 0.0;
    let mut posterior_entropy = 0.0;
    for x in 0..world.size() {
        let (pd, pg) = (world.p_data[x], world.p_g[x]);
        anchor_entropy += pd * h1 + pg * h0;
        let c2 = pd + pg;
        if c2 > 0.0 {
            let px = mixture_posterior(world, x, anchors)?;
            kl_term += c2 * kl_row(&px, &d.rows[x], x)?;
            posterior_entropy += c2 * entropy(&px);
        }
    }
    Ok(Decomposition { value, anchor_entropy, kl_term, posterior_entropy })
}

/// Draw from the flat Dirichlet on `n` categories.
pub fn dirichlet_ones(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let g: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// `(1 − rate)·D + rate·R` with each row of `R` drawn from the flat Dirichlet.
pub fn perturb(d: &DiscreteDiscriminator, rate: f64, rng: &mut impl Rng) -> DiscreteDiscriminator {
    let rows = d
        .rows
        .iter()
        .map(|row| {
            let r = dirichlet_ones(row.len(), rng);
            let mixed: Vec<f64> = row.iter().zip(&r).map(|(a, b)| (1.0 - rate) * a + rate * b).collect();
            let s: f64 = mixed.iter().sum();
            mixed.into_iter().map(|v| v / s).collect()
        })
        .collect();
    DiscreteDiscriminator { rows }
}

/// Smallest `V(D′) − V(D*)` over `trials` perturbations, cycling through
/// [`PERTURB_RATES`]. Non-negative when `D*` is the minimizer.
pub fn minimality_gap(world: &DiscreteWorld, anchors: &AnchorPair, trials: usize, rng: &mut impl Rng) -> Result<f64, TheoryError> {
    let d = optimal_discriminator(world, anchors)?;
    let base = value_function(world, &d, anchors)?;
    let mut worst = f64::INFINITY;
    for t in 0..trials {
        let dp = perturb(&d, PERTURB_RATES[t % PERTURB_RATES.len()], rng);
        worst = worst.min(value_function(world, &dp, anchors)? - base);
    }
    Ok(worst)
}

/// A random world with `x_size` points and independent flat-Dirichlet
/// densities and anchors over `outcomes` outcomes.
pub fn random_instance(x_size: usize, outcomes: usize, rng: &mut impl Rng) -> Result<(DiscreteWorld, AnchorPair), TheoryError> {
    let world = DiscreteWorld::new(dirichlet_ones(x_size, rng), dirichlet_ones(x_size, rng))?;
    let real = Anchor::new(dirichlet_ones(outcomes, rng))?;
    let fake = Anchor::new(dirichlet_ones(outcomes, rng))?;
    Ok((world, AnchorPair::new(fake, real)?))
}

/// Result of a brute-force search for the generator density that maximizes
/// `V(G, D*_G)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaximizerReport {
    pub p_data: Vec<f64>,
    pub argmax: Vec<f64>,
    pub max_value: f64,
    pub resolution: f64,
    /// Largest coordinate distance between `argmax` and `p_data`.
    pub distance: f64,
    pub grid_points: usize,
    /// `false` when the anchors coincide and every density is a maximizer.
    pub unique: bool,
    /// Largest `|V(G, D*_G) − V*|` over the grid; only informative when
    /// the anchors coincide.
    pub max_abs_v_prime: f64,
}

impl MaximizerReport {
    pub fn within(&self, tol: f64) -> bool {
        !self.unique || self.distance <= tol
    }
}

fn simplex_grid(x: usize, steps: usize) -> Vec<Vec<f64>> {
    let s = steps as f64;
    match x {
        1 => vec![vec![1.0]],
        2 => (0..=steps).map(|i| vec![i as f64 / s, (steps - i) as f64 / s]).collect(),
        3 => {
            let mut out = Vec::new();
            for i in 0..=steps {
                for j in 0..=steps - i {
                    out.push(vec![i as f64 / s, j as f64 / s, (steps - i - j) as f64 / s]);
                }
            }
            out
        }
        _ => unreachable!(),
    }
}

/// Evaluates `V(G, D*_G)` at every grid point of the simplex over `X ≤ 3`
/// points and reports the best one. Ties keep the first grid point.
pub fn verify_generator_maximizer(p_data: &[f64], anchors: &AnchorPair, resolution: f64) -> Result<MaximizerReport, TheoryError> {
    let x = p_data.len();
    if !(1..=3).contains(&x) {
        return Err(TheoryError::GridTooLarge(x));
    }
    let steps = (1.0 / resolution).round();
    if !(resolution > 0.0) || steps < 1.0 || (steps * resolution - 1.0).abs() > 1e-9 {
        return Err(TheoryError::BadResolution(resolution));
    }
    let steps = steps as usize;
    let vstar = v_star(anchors);
    let unique = anchors.real != anchors.fake;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut max_abs = 0.0f64;
    let grid = simplex_grid(x, steps);
    let grid_points = grid.len();
    for pg in grid {
        let world = DiscreteWorld::new(p_data.to_vec(), pg)?;
        let d = optimal_discriminator(&world, anchors)?;
        let v = value_function(&world, &d, anchors)?;
        max_abs = max_abs.max((v - vstar).abs());
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, world.p_g.clone()));
        }
    }
    let (max_value, argmax) = best.expect("grid is never empty");
    let distance = argmax.iter().zip(p_data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(MaximizerReport {
        p_data: p_data.to_vec(),
        argmax,
        max_value,
        resolution,
        distance,
        grid_points,
        unique,
        max_abs_v_prime: max_abs,
    })
}

/// Settings for [`verify_theory`].
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryCheckConfig {
    pub trials: usize,
    pub perturbations: usize,
    pub max_x: usize,
    pub max_outcomes: usize,
    pub maximizer_instances: usize,
    pub seed: u64,
}

impl Default for TheoryCheckConfig {
    fn default() -> Self {
        Self { trials: 200, perturbations: 1000, max_x: 4, max_outcomes: 6, maximizer_instances: 20, seed: 0 }
    }
}

/// Worst-case numbers over all random instances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryReport {
    pub trials: usize,
    pub perturbations: usize,
    /// Smallest `V(D′) − V(D*)` seen; should be ≥ −1e-12.
    pub worst_minimality_gap: f64,
    /// Largest disagreement between the two forms of `V′`.
    pub worst_identity_difference: f64,
    /// Largest `V′` seen; should be ≤ 0.
    pub max_v_prime: f64,
    /// Largest `|V′|` with `p_g = p_data`.
    pub worst_equal_case: f64,
    /// Largest decomposition residual with the negative entropy constant.
    pub worst_decomposition_residual: f64,
    /// Smallest residual with the constant's sign flipped, for comparison.
    pub min_flipped_residual: f64,
    /// Largest argmax distance over the two-point grid searches.
    pub worst_maximizer_distance: f64,
    pub maximizer_resolution: f64,
}

impl TheoryReport {
    pub const MINIMALITY_TOL: f64 = 1e-12;
    pub const IDENTITY_TOL: f64 = 1e-10;
    pub const EQUAL_TOL: f64 = 1e-12;
    pub const DECOMPOSITION_TOL: f64 = 1e-10;

    pub fn checks(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("minimality", self.worst_minimality_gap >= -Self::MINIMALITY_TOL),
            ("v_prime_identity", self.worst_identity_difference <= Self::IDENTITY_TOL),
            ("v_prime_sign", self.max_v_prime <= Self::IDENTITY_TOL),
            ("v_prime_equal_densities", self.worst_equal_case <= Self::EQUAL_TOL),
            ("decomposition", self.worst_decomposition_residual <= Self::DECOMPOSITION_TOL),
            ("maximizer", self.worst_maximizer_distance <= 2.0 * self.maximizer_resolution),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, ok)| *ok)
    }

    /// `key: value` lines followed by one `check <name> pass|fail` line per
    /// check and a final `result` line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trials: {}", self.trials);
        let _ = writeln!(s, "perturbations_per_trial: {}", self.perturbations);
        let _ = writeln!(s, "worst_minimality_gap: {:e}", self.worst_minimality_gap);
        let _ = writeln!(s, "worst_identity_difference: {:e}", self.worst_identity_difference);
        let _ = writeln!(s, "max_v_prime: {:e}", self.max_v_prime);
        let _ = writeln!(s, "worst_equal_case: {:e}", self.worst_equal_case);
        let _ = writeln!(s, "worst_decomposition_residual: {:e}", self.worst_decomposition_residual);
        let _ = writeln!(s, "min_flipped_sign_residual: {:e}", self.min_flipped_residual);
        let _ = writeln!(s, "worst_maximizer_distance: {:e}", self.worst_maximizer_distance);
        for (name, ok) in self.checks() {
            let _ = writeln!(s, "check {name} {}", if ok { "pass" } else { "fail" });
        }
        let _ = writeln!(s, "result {}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

/// Runs every oracle over random instances drawn from `config.seed`.
pub fn verify_theory(config: &TheoryCheckConfig) -> Result<TheoryReport, TheoryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let max_x = config.max_x.max(1);
    let max_n = config.max_outcomes.max(2);
    let mut report = TheoryReport {
        trials: config.trials,
        perturbations: config.perturbations,
        worst_minimality_gap: f64::INFINITY,
        worst_identity_difference: 0.0,
        max_v_prime: f64::NEG_INFINITY,
        worst_equal_case: 0.0,
        worst_decomposition_residual: 0.0,
        min_flipped_residual: f64::INFINITY,
        worst_maximizer_distance: 0.0,
        maximizer_resolution: 1e-3,
    };
    for _ in 0..config.trials {
        let x = rng.random_range(1..=max_x);
        let n = rng.random_range(2..=max_n);
        let (world, anchors) = random_instance(x, n, &mut rng)?;
        report.worst_minimality_gap =
            report.worst_minimality_gap.min(minimality_gap(&world, &anchors, config.perturbations, &mut rng)?);
        let vp = v_prime(&world, &anchors)?;
        report.worst_identity_difference = report.worst_identity_difference.max(vp.difference());
        report.max_v_prime = report.max_v_prime.max(vp.direct).max(vp.joint_kl);
        let eq = v_prime(&world.with_generator(world.p_data.clone())?, &anchors)?;
        report.worst_equal_case = report.worst_equal_case.max(eq.direct.abs()).max(eq.joint_kl.abs());
        let d = perturb(&optimal_discriminator(&world, &anchors)?, 0.3, &mut rng);
        let dec = decompose(&world, &d, &anchors)?;
        report.worst_decomposition_residual = report.worst_decomposition_residual.max(dec.residual());
        report.min_flipped_residual = report.min_flipped_residual.min(dec.flipped_residual());
    }
    let one_hot = AnchorPair::one_hot_pair();
    for _ in 0..config.maximizer_instances {
        let p = dirichlet_ones(2, &mut rng);
        let m = verify_generator_maximizer(&p, &one_hot, report.maximizer_resolution)?;
        report.worst_maximizer_distance = report.worst_maximizer_distance.max(m.distance);
    }
    if config.trials == 0 {
        report.worst_minimality_gap = 0.0;
        report.max_v_prime = 0.0;
        report.min_flipped_residual = 0.0;
    }
    Ok(report)
}
