//! Adversarial objectives, all returning a scalar [`Var`] to minimize.
//!
//! The distributional discriminator minimizes
//! `E_real KL(A1 ‖ D(x)) + E_fake KL(A0 ‖ D(G(z)))`; the generator has three
//! alternatives (see [`GObjective`]). Scalar-head baselines take `[M × 1]`
//! logits.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use thiserror::Error;

use crate::diffcore::{DiffError, Tape, Tensor, Var};
use crate::realness::{Anchor, AnchorPair, RealnessOutput};

/// Gradient-penalty weight for the WGAN baseline.
pub const WGAN_LAMBDA: f64 = 10.0;
/// Half-width of the central difference used in place of the input gradient.
pub const WGAN_FD_EPS: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("{kind} expects a head of width {expected}, got {got}")]
    HeadWidth { kind: String, expected: String, got: usize },
    #[error("generator objective 2 needs the real batch")]
    MissingRealBatch,
    #[error("real batch has {real} rows but fake batch has {fake}")]
    BatchMismatch { real: usize, fake: usize },
    #[error("unknown loss kind '{0}'")]
    UnknownKind(String),
}

/// Generator objectives for the distributional discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GObjective {
    /// `−E KL(A0 ‖ D(G(z)))`.
    Ideal,
    /// `E KL(D(x) ‖ D(G(z))) − E KL(A0 ‖ D(G(z)))`, `D(x)` detached.
    Relativistic,
    /// `E KL(A1 ‖ D(G(z))) − E KL(A0 ‖ D(G(z)))`.
    RealAnchor,
}

impl GObjective {
    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(Self::Ideal),
            2 => Some(Self::Relativistic),
            3 => Some(Self::RealAnchor),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::Ideal => 1,
            Self::Relativistic => 2,
            Self::RealAnchor => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Realness(GObjective),
    Standard,
    Lsgan,
    Hinge,
    /// WGAN with a finite-difference gradient penalty.
    WganFd,
}

impl LossKind {
    pub fn is_realness(self) -> bool {
        matches!(self, Self::Realness(_))
    }

    /// Method name without the generator objective.
    pub fn method_name(self) -> &'static str {
        match self {
            Self::Realness(_) => "realness",
            Self::Standard => "standard",
            Self::Lsgan => "lsgan",
            Self::Hinge => "hinge",
            Self::WganFd => "wgan",
        }
    }

    /// Parses a method name; realness methods take `g_objective`.
    pub fn from_method(name: &str, g_objective: GObjective) -> Result<Self, LossError> {
        Ok(match name {
            "realness" => Self::Realness(g_objective),
            "standard" => Self::Standard,
            "lsgan" => Self::Lsgan,
            "hinge" | "hingegan" => Self::Hinge,
            "wgan" | "wgan-gp" | "wgan_fd_penalty" => Self::WganFd,
            other => return Err(LossError::UnknownKind(other.to_string())),
        })
    }

    pub fn check_head(self, width: usize) -> Result<(), LossError> {
        let ok = if self.is_realness() { width >= 2 } else { width == 1 };
        if ok {
            Ok(())
        } else {
            Err(LossError::HeadWidth {
                kind: self.to_string(),
                expected: if self.is_realness() { ">= 2".into() } else { "1".into() },
                got: width,
            })
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Realness(o) => write!(f, "realness(objective {})", o.index()),
            other => f.write_str(other.method_name()),
        }
    }
}

impl FromStr for LossKind {
    type Err = LossError;

    /// Accepts `standard`, `lsgan`, `hinge`, `wgan`, `realness` (objective 2)
    /// and `realness1`..`realness3`.
    fn from_str(s: &str) -> Result<Self, LossError> {
        match s.strip_prefix("realness") {
            Some("") => Ok(Self::Realness(GObjective::Relativistic)),
            Some(d) => d
                .parse::<u8>()
                .ok()
                .and_then(GObjective::from_index)
                .map(Self::Realness)
                .ok_or_else(|| LossError::UnknownKind(s.to_string())),
            None => Self::from_method(s, GObjective::Relativistic),
        }
    }
}

fn check_width(tape: &Tape, out: &RealnessOutput, anchors: &AnchorPair) -> Result<(), LossError> {
    let w = out.outcomes(tape);
    if w != anchors.outcomes() {
        return Err(LossError::HeadWidth { kind: "realness".into(), expected: anchors.outcomes().to_string(), got: w });
    }
    Ok(())
}

/// Per-row `KL(A ‖ softmax(ψ))`, shape `[M]`, computed from log-probabilities.
pub fn kl_from_anchor(tape: &mut Tape, anchor: &Anchor, out: &RealnessOutput) -> Result<Var, DiffError> {
    let a = tape.constant(anchor.to_tensor());
    let weighted = tape.mul_row(out.log_probs, a)?;
    let cross = tape.sum(weighted, Some(1))?;
    let neg = tape.neg(cross)?;
    tape.add_scalar(neg, anchor.neg_entropy())
}

/// Per-row `KL(p ‖ q)` between two realness outputs, shape `[M]`.
pub fn kl_between(tape: &mut Tape, p: &RealnessOutput, q: &RealnessOutput) -> Result<Var, DiffError> {
    let diff = tape.sub(p.log_probs, q.log_probs)?;
    let w = tape.mul(p.probs, diff)?;
    tape.sum(w, Some(1))
}

fn mean_kl_from_anchor(tape: &mut Tape, anchor: &Anchor, out: &RealnessOutput) -> Result<Var, DiffError> {
    let rows = kl_from_anchor(tape, anchor, out)?;
    tape.mean(rows, None)
}

/// `mean KL(A1 ‖ D(x)) + mean KL(A0 ‖ D(G(z)))`.
pub fn d_loss_realness(
    tape: &mut Tape,
    real: &RealnessOutput,
    fake: &RealnessOutput,
    anchors: &AnchorPair,
) -> Result<Var, LossError> {
    check_width(tape, real, anchors)?;
    check_width(tape, fake, anchors)?;
    let r = mean_kl_from_anchor(tape, &anchors.real, real)?;
    let f = mean_kl_from_anchor(tape, &anchors.fake, fake)?;
    Ok(tape.add(r, f)?)
}

/// Generator loss for the distributional discriminator. Objective 2 pairs
/// the i-th real row with the i-th fake row and never sends gradient into
/// the real branch.
pub fn g_loss_realness(
    tape: &mut Tape,
    fake: &RealnessOutput,
    real: Option<&RealnessOutput>,
    anchors: &AnchorPair,
    objective: GObjective,
) -> Result<Var, LossError> {
    check_width(tape, fake, anchors)?;
    let away = mean_kl_from_anchor(tape, &anchors.fake, fake)?;
    let pull = match objective {
        GObjective::Ideal => return Ok(tape.neg(away)?),
        GObjective::RealAnchor => mean_kl_from_anchor(tape, &anchors.real, fake)?,
        GObjective::Relativistic => {
            let real = real.ok_or(LossError::MissingRealBatch)?;
            check_width(tape, real, anchors)?;
            let (rm, fm) = (real.batch(tape), fake.batch(tape));
            if rm != fm {
                return Err(LossError::BatchMismatch { real: rm, fake: fm });
            }
            let detached = real.detached(tape)?;
            let rows = kl_between(tape, &detached, fake)?;
            tape.mean(rows, None)?
        }
    };
    Ok(tape.sub(pull, away)?)
}

fn check_scalar_head(tape: &Tape, kind: LossKind, logits: Var) -> Result<(), LossError> {
    kind.check_head(tape.value(logits).cols())
}

/// Discriminator loss for the scalar baselines. `penalty` is the
/// (unweighted) output of [`wgan_fd_penalty`] and is required for
/// [`LossKind::WganFd`].
pub fn d_loss_baseline(
    tape: &mut Tape,
    kind: LossKind,
    real_logits: Var,
    fake_logits: Var,
    penalty: Option<Var>,
) -> Result<Var, LossError> {
    check_scalar_head(tape, kind, real_logits)?;
    check_scalar_head(tape, kind, fake_logits)?;
    let (r, f) = (real_logits, fake_logits);
    let loss = match kind {
        LossKind::Standard => {
            // −ln σ(ψ) = softplus(−ψ), −ln(1 − σ(ψ)) = softplus(ψ)
            let nr = tape.neg(r)?;
            let a = tape.softplus(nr)?;
            let a = tape.mean(a, None)?;
            let b = tape.softplus(f)?;
            let b = tape.mean(b, None)?;
            tape.add(a, b)?
        }
        LossKind::Lsgan => {
            let a = tape.add_scalar(r, -1.0)?;
            let a = tape.square(a)?;
            let a = tape.mean(a, None)?;
            let b = tape.square(f)?;
            let b = tape.mean(b, None)?;
            let s = tape.add(a, b)?;
            tape.scale(s, 0.5)?
        }
        LossKind::Hinge => {
            let a = tape.scale(r, -1.0)?;
            let a = tape.add_scalar(a, 1.0)?;
            let a = tape.relu(a)?;
            let a = tape.mean(a, None)?;
            let b = tape.add_scalar(f, 1.0)?;
            let b = tape.relu(b)?;
            let b = tape.mean(b, None)?;
            tape.add(a, b)?
        }
        LossKind::WganFd => {
            let a = tape.mean(f, None)?;
            let b = tape.mean(r, None)?;
            let w = tape.sub(a, b)?;
            match penalty {
                Some(p) => {
                    let p = tape.scale(p, WGAN_LAMBDA)?;
                    tape.add(w, p)?
                }
                None => w,
            }
        }
        LossKind::Realness(_) => {
            return Err(LossError::HeadWidth { kind: kind.to_string(), expected: ">= 2".into(), got: 1 });
        }
    };
    Ok(loss)
}

/// Generator loss for the scalar baselines (non-saturating for the
/// standard GAN).
pub fn g_loss_baseline(tape: &mut Tape, kind: LossKind, fake_logits: Var) -> Result<Var, LossError> {
    check_scalar_head(tape, kind, fake_logits)?;
    let f = fake_logits;
    let loss = match kind {
        LossKind::Standard => {
            let n = tape.neg(f)?;
            let s = tape.softplus(n)?;
            tape.mean(s, None)?
        }
        LossKind::Lsgan => {
            let a = tape.add_scalar(f, -1.0)?;
            let a = tape.square(a)?;
            let m = tape.mean(a, None)?;
            tape.scale(m, 0.5)?
        }
        LossKind::Hinge | LossKind::WganFd => {
            let m = tape.mean(f, None)?;
            tape.neg(m)?
        }
        LossKind::Realness(_) => unreachable!("rejected by check_head"),
    };
    Ok(loss)
}

/// `E (|∂̂D(x̂)| − 1)²`, where `x̂` interpolates each real/fake pair at a
/// uniform random fraction and `∂̂D` is the central difference of `D` along
/// a random unit direction with half-width [`WGAN_FD_EPS`]. Both inputs are
/// treated as data; gradients reach only the parameters used by `critic`.
pub fn wgan_fd_penalty<F>(tape: &mut Tape, critic: F, real: &Tensor, fake: &Tensor, rng: &mut impl Rng) -> Result<Var, LossError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, DiffError>,
{
    if real.shape() != fake.shape() {
        return Err(LossError::BatchMismatch { real: real.rows(), fake: fake.rows() });
    }
    let (m, d) = real.dims2();
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let mut plus = Vec::with_capacity(m * d);
    let mut minus = Vec::with_capacity(m * d);
    for i in 0..m {
        let alpha: f64 = unit.sample(rng);
        let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        dir.iter_mut().for_each(|v| *v /= norm);
        for j in 0..d {
            let x = alpha * real.at(i, j) + (1.0 - alpha) * fake.at(i, j);
            plus.push(x + WGAN_FD_EPS * dir[j]);
            minus.push(x - WGAN_FD_EPS * dir[j]);
        }
    }
    let xp = tape.constant(Tensor::matrix(m, d, plus));
    let xm = tape.constant(Tensor::matrix(m, d, minus));
    let dp = critic(tape, xp)?;
    let dm = critic(tape, xm)?;
    let diff = tape.sub(dp, dm)?;
    let slope = tape.scale(diff, 1.0 / (2.0 * WGAN_FD_EPS))?;
    let mag = tape.abs(slope)?;
    let dev = tape.add_scalar(mag, -1.0)?;
    let sq = tape.square(dev)?;
    Ok(tape.mean(sq, None)?)
}
