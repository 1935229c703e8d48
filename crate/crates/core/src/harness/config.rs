use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::HarnessError;
use crate::losses::{GObjective, LossKind};
use crate::nn::{AdamConfig, DiscriminatorSpec, GeneratorSpec};
use crate::synthetic::GaussianGridConfig;

/// Updates of the generator per iteration used for realness runs unless a
/// config says otherwise; picked from a sweep over `{1, 2, 3, 4}` at ten
/// outcomes.
pub const DEFAULT_REALNESS_KG: usize = 1;
pub const DEFAULT_OUTCOMES: usize = 10;
pub const DEFAULT_ITERATIONS: usize = 500;
pub const DEFAULT_BATCH: usize = 256;
pub const DEFAULT_EVAL_SAMPLES: usize = 10_000;

/// Everything a training run depends on.
///
/// The text form is one `key = value` pair per line; `#` starts a comment.
///
/// | key | meaning |
/// |---|---|
/// | `method` | `realness`, `standard`, `lsgan`, `hinge` or `wgan` |
/// | `outcomes` | discriminator head width (1 for the scalar baselines) |
/// | `g_objective` | realness generator objective, 1, 2 or 3 |
/// | `anchor_skew` | skew-normal shape for the anchor pair |
/// | `resample` | feature resampling of discriminator logits, `true`/`false` |
/// | `k_g`, `k_d` | generator / discriminator updates per iteration |
/// | `iterations` | training iterations |
/// | `batch_size` | real and fake batch size |
/// | `seed` | master seed for initialization, batches and evaluation |
/// | `g_lr`, `g_beta1`, `g_beta2`, `g_eps` | generator Adam |
/// | `d_lr`, `d_beta1`, `d_beta2`, `d_eps` | discriminator Adam |
/// | `latent_dim`, `g_hidden` | generator latent width, comma-separated hidden widths |
/// | `d_hidden`, `d_pieces` | discriminator hidden widths and maxout pieces |
/// | `data_sigma`, `data_spacing`, `data_samples`, `data_seed` | 3×3 Gaussian grid |
/// | `eval_every`, `eval_samples` | evaluation period (0 = start and end only) and sample count |
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub method: LossKind,
    pub outcomes: usize,
    pub anchor_skew: f64,
    pub resample: bool,
    pub k_g: usize,
    pub k_d: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub g_optimizer: AdamConfig,
    pub d_optimizer: AdamConfig,
    pub generator: GeneratorSpec,
    pub d_hidden: Vec<usize>,
    pub d_pieces: usize,
    pub data: GaussianGridConfig,
    pub eval_every: usize,
    pub eval_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_method(LossKind::Realness(GObjective::Relativistic))
    }
}

impl ExperimentConfig {
    /// Defaults for a method: ten outcomes for the realness objective and a
    /// scalar head otherwise; WGAN takes five critic steps and Adam
    /// `(1e-4, 0.5, 0.9)`.
    pub fn for_method(method: LossKind) -> Self {
        let wgan = method == LossKind::WganFd;
        let adam = if wgan { AdamConfig { lr: 1e-4, beta1: 0.5, beta2: 0.9, eps: 1e-8 } } else { AdamConfig::default() };
        let d = DiscriminatorSpec::with_outcomes(1);
        Self {
            method,
            outcomes: if method.is_realness() { DEFAULT_OUTCOMES } else { 1 },
            anchor_skew: 4.0,
            resample: false,
            k_g: if method.is_realness() { DEFAULT_REALNESS_KG } else { 1 },
            k_d: if wgan { 5 } else { 1 },
            iterations: DEFAULT_ITERATIONS,
            batch_size: DEFAULT_BATCH,
            seed: 0,
            g_optimizer: adam,
            d_optimizer: adam,
            generator: GeneratorSpec::default(),
            d_hidden: d.hidden,
            d_pieces: d.pieces,
            data: GaussianGridConfig::default(),
            eval_every: 100,
            eval_samples: DEFAULT_EVAL_SAMPLES,
        }
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec { hidden: self.d_hidden.clone(), pieces: self.d_pieces, ..DiscriminatorSpec::with_outcomes(self.outcomes) }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.k_g == 0 || self.k_d == 0 {
            return bad("k_g and k_d must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 (the generator uses batch norm)".into());
        }
        if self.method.is_realness() != (self.outcomes >= 2) {
            return bad(format!("{} cannot use {} outcomes", self.method, self.outcomes));
        }
        if self.outcomes == 0 {
            return bad("outcomes must be at least 1".into());
        }
        if !(self.anchor_skew >= 0.0 && self.anchor_skew.is_finite()) {
            return bad(format!("anchor_skew must be finite and non-negative, got {}", self.anchor_skew));
        }
        if self.eval_samples == 0 {
            return bad("eval_samples must be at least 1".into());
        }
        for (name, a) in [("g", &self.g_optimizer), ("d", &self.d_optimizer)] {
            if !(a.lr >= 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
                return bad(format!("invalid {name} optimizer {a:?}"));
            }
        }
        if self.d_pieces < 2 {
            return bad("d_pieces must be at least 2".into());
        }
        self.data.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Ordered `key → value` pairs; [`ExperimentConfig::from_pairs`] inverts it.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let objective = match self.method {
            LossKind::Realness(o) => o.index(),
            _ => GObjective::Relativistic.index(),
        };
        vec![
            ("method", self.method.method_name().to_string()),
            ("outcomes", self.outcomes.to_string()),
            ("g_objective", objective.to_string()),
            ("anchor_skew", format!("{:?}", self.anchor_skew)),
            ("resample", self.resample.to_string()),
            ("k_g", self.k_g.to_string()),
            ("k_d", self.k_d.to_string()),
            ("iterations", self.iterations.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("g_lr", format!("{:?}", self.g_optimizer.lr)),
            ("g_beta1", format!("{:?}", self.g_optimizer.beta1)),
            ("g_beta2", format!("{:?}", self.g_optimizer.beta2)),
            ("g_eps", format!("{:?}", self.g_optimizer.eps)),
            ("d_lr", format!("{:?}", self.d_optimizer.lr)),
            ("d_beta1", format!("{:?}", self.d_optimizer.beta1)),
            ("d_beta2", format!("{:?}", self.d_optimizer.beta2)),
            ("d_eps", format!("{:?}", self.d_optimizer.eps)),
            ("latent_dim", self.generator.latent_dim.to_string()),
            ("g_hidden", list(&self.generator.hidden)),
            ("d_hidden", list(&self.d_hidden)),
            ("d_pieces", self.d_pieces.to_string()),
            ("data_sigma", format!("{:?}", self.data.sigma)),
            ("data_spacing", format!("{:?}", self.data.grid_spacing)),
            ("data_samples", self.data.n_samples.to_string()),
            ("data_seed", self.data.seed.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_samples", self.eval_samples.to_string()),
        ]
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Applies overrides in order. A change of `method` is applied first and
    /// resets the method-dependent defaults (`outcomes`, `k_g`, `k_d`, both
    /// optimizers), which the remaining keys may then override.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), HarnessError> {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let objective = match pairs.iter().rev().find(|(k, _)| *k == "g_objective") {
            Some((_, v)) => Some(parse::<u8>("g_objective", v).and_then(|i| {
                GObjective::from_index(i).ok_or_else(|| HarnessError::Config(format!("g_objective must be 1, 2 or 3, got {i}")))
            })?),
            None => None,
        };
        if let Some((_, m)) = pairs.iter().rev().find(|(k, _)| *k == "method") {
            let kind = LossKind::from_method(m, objective.unwrap_or(GObjective::Relativistic))
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            if kind.method_name() != self.method.method_name() {
                let d = Self::for_method(kind);
                self.outcomes = d.outcomes;
                self.k_g = d.k_g;
                self.k_d = d.k_d;
                self.g_optimizer = d.g_optimizer;
                self.d_optimizer = d.d_optimizer;
            }
            self.method = kind;
        }
        if let (Some(o), LossKind::Realness(_)) = (objective, self.method) {
            self.method = LossKind::Realness(o);
        }
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        match key {
            "method" | "g_objective" => {}
            "outcomes" => self.outcomes = parse(key, v)?,
            "anchor_skew" => self.anchor_skew = parse(key, v)?,
            "resample" => self.resample = parse(key, v)?,
            "k_g" => self.k_g = parse(key, v)?,
            "k_d" => self.k_d = parse(key, v)?,
            "iterations" => self.iterations = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "g_lr" => self.g_optimizer.lr = parse(key, v)?,
            "g_beta1" => self.g_optimizer.beta1 = parse(key, v)?,
            "g_beta2" => self.g_optimizer.beta2 = parse(key, v)?,
            "g_eps" => self.g_optimizer.eps = parse(key, v)?,
            "d_lr" => self.d_optimizer.lr = parse(key, v)?,
            "d_beta1" => self.d_optimizer.beta1 = parse(key, v)?,
            "d_beta2" => self.d_optimizer.beta2 = parse(key, v)?,
            "d_eps" => self.d_optimizer.eps = parse(key, v)?,
            "latent_dim" => self.generator.latent_dim = parse(key, v)?,
            "g_hidden" => self.generator.hidden = parse_list(key, v)?,
            "d_hidden" => self.d_hidden = parse_list(key, v)?,
            "d_pieces" => self.d_pieces = parse(key, v)?,
            "data_sigma" => self.data.sigma = parse(key, v)?,
            "data_spacing" => self.data.set_spacing(parse(key, v)?),
            "data_samples" => self.data.n_samples = parse(key, v)?,
            "data_seed" => self.data.seed = parse(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "eval_samples" => self.eval_samples = parse(key, v)?,
            other => return Err(HarnessError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, HarnessError> {
        let mut c = Self::default();
        c.apply(pairs)?;
        c.validate()?;
        Ok(c)
    }

    /// Parses the `key = value` text form on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        Self::from_pairs(parse_pairs(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(&str, &str)>, HarnessError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", i + 1)))?;
        out.push((k.trim(), v.trim()));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse().map_err(|_| HarnessError::Config(format!("bad value '{v}' for {key}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>, HarnessError> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}
