//! Discrete realness distributions.
//!
//! A distributional discriminator emits `N` logits per sample; their softmax
//! is a probability row over `N` realness outcomes. Real and fake samples are
//! pulled towards two fixed anchor rows `A1` and `A0`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::diffcore::{DiffError, Tape, Tensor, Var};

/// Smallest probability any constructed anchor entry may take.
pub const ANCHOR_FLOOR: f64 = 1e-10;

const NORMALIZED_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RealnessError {
    #[error("need at least {min} outcomes, got {got}")]
    TooFewOutcomes { min: usize, got: usize },
    #[error("distribution does not sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("negative or non-finite probability {0}")]
    InvalidProbability(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("KL divergence is infinite: q[{0}] = 0 where p[{0}] > 0")]
    InfiniteDivergence(usize),
    #[error("anchor skew must be finite and non-negative, got {0}")]
    InvalidSkew(f64),
    #[error("anchor text: {0}")]
    Parse(String),
}

fn check_distribution(p: &[f64], tol: f64) -> Result<(), RealnessError> {
    if let Some(&bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(RealnessError::InvalidProbability(bad));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(RealnessError::NotNormalized(s));
    }
    Ok(())
}

/// The `N` outcome values, equally spaced on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeSet {
    values: Vec<f64>,
}

impl OutcomeSet {
    pub fn new(n: usize) -> Result<Self, RealnessError> {
        if n < 2 {
            return Err(RealnessError::TooFewOutcomes { min: 2, got: n });
        }
        let d = (n - 1) as f64;
        let values = (0..n).map(|i| (2 * i) as f64 / d - 1.0).collect::<Vec<_>>();
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A fixed target distribution over outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    probs: Vec<f64>,
}

impl Anchor {
    /// Validates a user-supplied probability row (non-negative, sums to 1
    /// within 1e-12). Zeros are allowed: KL against a softmax row stays finite.
    pub fn new(probs: Vec<f64>) -> Result<Self, RealnessError> {
        if probs.len() < 2 {
            return Err(RealnessError::TooFewOutcomes { min: 2, got: probs.len() });
        }
        check_distribution(&probs, 1e-12)?;
        Ok(Self { probs })
    }

    pub fn one_hot(n: usize, index: usize) -> Result<Self, RealnessError> {
        let mut probs = vec![0.0; n];
        if index >= n {
            return Err(RealnessError::LengthMismatch(index, n));
        }
        probs[index] = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `Σ aᵢ ln aᵢ` with `0 ln 0 = 0`, i.e. the negative entropy.
    pub fn neg_entropy(&self) -> f64 {
        -entropy(&self.probs)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.probs.clone())
    }
}

/// The fake (`A0`) and real (`A1`) anchors.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorPair {
    pub fake: Anchor,
    pub real: Anchor,
    /// Skew-normal shape parameter the pair was built from, if any.
    pub skew: Option<f64>,
}

impl AnchorPair {
    pub fn new(fake: Anchor, real: Anchor) -> Result<Self, RealnessError> {
        if fake.len() != real.len() {
            return Err(RealnessError::LengthMismatch(fake.len(), real.len()));
        }
        Ok(Self { fake, real, skew: None })
    }

    /// `A0 = [1, 0]`, `A1 = [0, 1]`: the pair under which the distributional
    /// objective collapses to the scalar cross-entropy GAN.
    pub fn one_hot_pair() -> Self {
        Self { fake: Anchor::one_hot(2, 0).unwrap(), real: Anchor::one_hot(2, 1).unwrap(), skew: None }
    }

    pub fn outcomes(&self) -> usize {
        self.real.len()
    }

    /// `KL(A1 ‖ A0)`.
    pub fn separation(&self) -> f64 {
        kl_divergence(self.real.probs(), self.fake.probs()).unwrap_or(f64::INFINITY)
    }

    /// Plain-text form:
    ///
    /// ```text
    /// anchors 1
    /// outcomes <N>
    /// skew <s|->
    /// real <p0> <p1> ...
    /// fake <p0> <p1> ...
    /// ```
    pub fn to_text(&self) -> String {
        let row = |a: &Anchor| a.probs().iter().map(|p| format!("{p:?}")).collect::<Vec<_>>().join(" ");
        let skew = self.skew.map_or("-".to_string(), |s| format!("{s:?}"));
        format!("anchors 1\noutcomes {}\nskew {}\nreal {}\nfake {}\n", self.outcomes(), skew, row(&self.real), row(&self.fake))
    }

    pub fn from_text(text: &str) -> Result<Self, RealnessError> {
        let perr = |m: &str| RealnessError::Parse(m.to_string());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("anchors 1") {
            return Err(perr("missing 'anchors 1' header"));
        }
        let mut field = |key: &str| -> Result<String, RealnessError> {
            let line = lines.next().ok_or_else(|| perr("truncated"))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| RealnessError::Parse(format!("expected '{key}' line, got '{line}'")))
        };
        let n: usize = field("outcomes")?.parse().map_err(|_| perr("bad outcome count"))?;
        let skew_s = field("skew")?;
        let skew = if skew_s == "-" { None } else { Some(skew_s.parse().map_err(|_| perr("bad skew"))?) };
        let parse_row = |s: String| -> Result<Vec<f64>, RealnessError> {
            s.split_whitespace().map(|v| v.parse().map_err(|_| perr("bad probability"))).collect()
        };
        let real = Anchor::new(parse_row(field("real")?)?)?;
        let fake = Anchor::new(parse_row(field("fake")?)?)?;
        if real.len() != n {
            return Err(RealnessError::LengthMismatch(real.len(), n));
        }
        let mut pair = Self::new(fake, real)?;
        pair.skew = skew;
        Ok(pair)
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Builds `(A0, A1)` from a skew-normal density.
///
/// `A1` samples `2·φ(x)·Φ(skew·x)` at `N` equally spaced points of `[-3, 3]`,
/// normalizes, and lifts every entry to at least [`ANCHOR_FLOOR`] via
/// `p ← floor + (1 − N·floor)·p`. `A0` is `A1` reversed (the mirror image).
pub fn make_anchor_pair(n: usize, skew: f64) -> Result<AnchorPair, RealnessError> {
    if n < 2 {
        return Err(RealnessError::TooFewOutcomes { min: 2, got: n });
    }
    if !skew.is_finite() || skew < 0.0 {
        return Err(RealnessError::InvalidSkew(skew));
    }
    let d = (n - 1) as f64;
    // integer numerator keeps the grid exactly symmetric about 0
    let density: Vec<f64> = (0..n)
        .map(|i| {
            let x = 3.0 * (2 * i as i64 - (n as i64 - 1)) as f64 / d;
            2.0 * (-0.5 * x * x).exp() * std_normal_cdf(skew * x)
        })
        .collect();
    let z: f64 = density.iter().sum();
    let lift = 1.0 - n as f64 * ANCHOR_FLOOR;
    let real: Vec<f64> = density.iter().map(|p| ANCHOR_FLOOR + lift * p / z).collect();
    let fake: Vec<f64> = real.iter().rev().copied().collect();
    Ok(AnchorPair {
        fake: Anchor::new(fake)?,
        real: Anchor::new(real)?,
        skew: Some(skew),
    })
}

/// `Σ pᵢ (ln pᵢ − ln qᵢ)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, RealnessError> {
    if p.len() != q.len() {
        return Err(RealnessError::LengthMismatch(p.len(), q.len()));
    }
    check_distribution(p, NORMALIZED_TOL)?;
    check_distribution(q, NORMALIZED_TOL)?;
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(RealnessError::InfiniteDivergence(i));
            }
            kl += pi * (pi.ln() - qi.ln());
        }
    }
    Ok(kl)
}

/// Shannon entropy in nats, `−Σ pᵢ ln pᵢ`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `Σ uᵢ pᵢ`: a scalar summary of a realness row.
pub fn expected_realness(probs: &[f64], outcomes: &OutcomeSet) -> f64 {
    probs.iter().zip(outcomes.values()).map(|(p, u)| p * u).sum()
}

/// Discriminator output: logits plus their row-wise log-probabilities and
/// probabilities, all on the same tape.
#[derive(Clone, Copy, Debug)]
pub struct RealnessOutput {
    pub logits: Var,
    pub log_probs: Var,
    pub probs: Var,
}

impl RealnessOutput {
    pub fn from_logits(tape: &mut Tape, logits: Var) -> Result<Self, DiffError> {
        let log_probs = tape.log_softmax(logits)?;
        let probs = tape.softmax(logits)?;
        Ok(Self { logits, log_probs, probs })
    }

    pub fn outcomes(&self, tape: &Tape) -> usize {
        tape.value(self.logits).cols()
    }

    pub fn batch(&self, tape: &Tape) -> usize {
        tape.value(self.logits).rows()
    }

    /// Same distribution with gradient flow cut.
    pub fn detached(&self, tape: &mut Tape) -> Result<Self, DiffError> {
        let logits = tape.stop_gradient(self.logits)?;
        Self::from_logits(tape, logits)
    }
}

/// Feature resampling: fits `N(μᵢ, σᵢ)` to each logit column over the batch
/// and redraws the column from it. See [`Tape::resample`] for the gradient.
pub fn feature_resample(tape: &mut Tape, logits: Var, rng: &mut impl Rng) -> Result<Var, DiffError> {
    let shape = tape.value(logits).shape().to_vec();
    let n: usize = shape.iter().product();
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    tape.resample(logits, Tensor::new(shape, noise)?)
}
