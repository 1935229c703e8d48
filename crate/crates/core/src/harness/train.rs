use std::collections::BTreeMap;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::diffcore::{DiffError, Tape, Tensor, Var};
use crate::losses::{self, LossError, LossKind};
use crate::nn::{Adam, Discriminator, Generator, Mode, NnError};
use crate::realness::{feature_resample, make_anchor_pair, AnchorPair, RealnessOutput};
use crate::synthetic::{evaluate_modes, Dataset, ModeMetrics};

/// Rows per tape when drawing evaluation samples.
const SAMPLE_CHUNK: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iter: usize,
    /// Loss of the last discriminator step of this iteration.
    pub d_loss: Option<f64>,
    /// Loss of the last generator step of this iteration.
    pub g_loss: Option<f64>,
    pub metrics: ModeMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    /// 1-based iteration in which training stopped.
    pub iteration: usize,
    pub phase: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: BTreeMap<String, String>,
    pub records: Vec<EvalRecord>,
    pub final_metrics: ModeMetrics,
    pub d_steps: usize,
    pub g_steps: usize,
    pub completed_iterations: usize,
    pub failure: Option<Failure>,
    pub wall_clock_secs: f64,
}

impl RunSummary {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    /// `iter,d_loss,g_loss,hq_ratio,modes,dispersion` with one row per
    /// evaluation; missing values are written as `nan`.
    pub fn metrics_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:?}"));
        let mut s = String::from("iter,d_loss,g_loss,hq_ratio,modes,dispersion\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{:?},{},{}\n",
                r.iter,
                opt(r.d_loss),
                opt(r.g_loss),
                r.metrics.hq_ratio,
                r.metrics.modes_recovered,
                opt(r.metrics.dispersion)
            ));
        }
        s
    }
}

pub struct TrainOutput {
    pub summary: RunSummary,
    pub generator: Generator,
    pub discriminator: Discriminator,
    /// Samples behind the last evaluation record.
    pub samples: Tensor,
}

fn latent(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(rows, dim, (0..rows * dim).map(|_| StandardNormal.sample(rng)).collect())
}

enum StepError {
    Diverged(String),
    Fatal(HarnessError),
}

impl From<DiffError> for StepError {
    fn from(e: DiffError) -> Self {
        match e {
            DiffError::NonFinite { .. } => Self::Diverged(e.to_string()),
            other => Self::Fatal(HarnessError::Diff(other)),
        }
    }
}

impl From<LossError> for StepError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Diff(d) => d.into(),
            other => Self::Fatal(HarnessError::Loss(other)),
        }
    }
}

impl From<NnError> for StepError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Diff(d) => d.into(),
            NnError::NonFiniteGradient(_) => Self::Diverged(e.to_string()),
            other => Self::Fatal(HarnessError::Nn(other)),
        }
    }
}

/// The mutable state of one run.
struct Trainer<'a> {
    config: &'a ExperimentConfig,
    kind: LossKind,
    anchors: Option<AnchorPair>,
    data: Dataset,
    g: Generator,
    d: Discriminator,
    g_opt: Adam,
    d_opt: Adam,
    rng: ChaCha8Rng,
    last_real: Option<Tensor>,
    real_logits: Option<Tensor>,
    d_steps: usize,
    g_steps: usize,
}

impl Trainer<'_> {
    /// Logits after optional feature resampling.
    fn head(&mut self, tape: &mut Tape, logits: Var) -> Result<Var, StepError> {
        if self.config.resample {
            Ok(feature_resample(tape, logits, &mut self.rng)?)
        } else {
            Ok(logits)
        }
    }

    /// Discriminator logits on the last real batch. The discriminator does
    /// not change during the generator phase, so they are computed once per
    /// iteration; the branch carries no gradient either way.
    fn real_logits(&mut self) -> Result<Option<Tensor>, StepError> {
        if self.real_logits.is_none() {
            if let Some(real) = &self.last_real {
                let mut tape = Tape::new();
                let db = self.d.bind(&mut tape, false);
                let xr = tape.constant(real.clone());
                let lr = self.d.forward(&mut tape, &db, xr)?;
                self.real_logits = Some(tape.value(lr).clone());
            }
        }
        Ok(self.real_logits.clone())
    }

    fn fake_batch(&mut self) -> Result<Tensor, StepError> {
        let z = latent(self.config.batch_size, self.g.spec.latent_dim, &mut self.rng);
        let mut tape = Tape::new();
        let bound = self.g.bind(&mut tape, false);
        let zv = tape.constant(z);
        let x = self.g.forward(&mut tape, &bound, zv, Mode::Train)?;
        Ok(tape.value(x).clone())
    }

    fn d_step(&mut self) -> Result<f64, StepError> {
        let real = self.data.batch(self.config.batch_size, &mut self.rng);
        let fake = self.fake_batch()?;
        let mut tape = Tape::new();
        let bound = self.d.bind(&mut tape, true);
        let xr = tape.constant(real.clone());
        let xf = tape.constant(fake.clone());
        let lr = self.d.forward(&mut tape, &bound, xr)?;
        let lf = self.d.forward(&mut tape, &bound, xf)?;
        let lr = self.head(&mut tape, lr)?;
        let lf = self.head(&mut tape, lf)?;
        let loss = match (self.kind, &self.anchors) {
            (LossKind::Realness(_), Some(anchors)) => {
                let ro = RealnessOutput::from_logits(&mut tape, lr)?;
                let fo = RealnessOutput::from_logits(&mut tape, lf)?;
                losses::d_loss_realness(&mut tape, &ro, &fo, anchors)?
            }
            (LossKind::WganFd, _) => {
                let d = &self.d;
                let critic = |t: &mut Tape, x: Var| d.forward(t, &bound, x);
                let pen = losses::wgan_fd_penalty(&mut tape, critic, &real, &fake, &mut self.rng)?;
                losses::d_loss_baseline(&mut tape, self.kind, lr, lf, Some(pen))?
            }
            _ => losses::d_loss_baseline(&mut tape, self.kind, lr, lf, None)?,
        };
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?.into_param_map();
        self.d_opt.step(&mut self.d.params, &grads)?;
        self.last_real = Some(real);
        self.real_logits = None;
        self.d_steps += 1;
        Ok(value)
    }

    fn g_step(&mut self) -> Result<f64, StepError> {
        let z = latent(self.config.batch_size, self.g.spec.latent_dim, &mut self.rng);
        let mut tape = Tape::new();
        let gb = self.g.bind(&mut tape, true);
        let zv = tape.constant(z);
        let xf = self.g.forward(&mut tape, &gb, zv, Mode::Train)?;
        let db = self.d.bind(&mut tape, false);
        let lf = self.d.forward(&mut tape, &db, xf)?;
        let lf = self.head(&mut tape, lf)?;
        let loss = match self.kind {
            LossKind::Realness(objective) => {
                let anchors = self.anchors.clone().expect("realness runs carry anchors");
                let fo = RealnessOutput::from_logits(&mut tape, lf)?;
                let real = match objective {
                    losses::GObjective::Relativistic => self.real_logits()?,
                    _ => None,
                };
                let ro = match real {
                    Some(real) => {
                        let lr = tape.constant(real);
                        let lr = self.head(&mut tape, lr)?;
                        Some(RealnessOutput::from_logits(&mut tape, lr)?)
                    }
                    None => None,
                };
                losses::g_loss_realness(&mut tape, &fo, ro.as_ref(), &anchors, objective)?
            }
            kind => losses::g_loss_baseline(&mut tape, kind, lf)?,
        };
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?.into_param_map();
        self.g_opt.step(&mut self.g.params, &grads)?;
        self.g_steps += 1;
        Ok(value)
    }
}

/// Runs one experiment. Divergence (a non-finite value anywhere in a step)
/// stops training and is reported through [`RunSummary::failure`]; only
/// configuration and internal errors are returned as `Err`.
pub fn train(config: &ExperimentConfig) -> Result<TrainOutput, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let kind = config.method;
    kind.check_head(config.outcomes)?;
    let anchors = if kind.is_realness() { Some(make_anchor_pair(config.outcomes, config.anchor_skew)?) } else { None };

    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
    let g = Generator::init(config.generator.clone(), seeds.next_u64())?;
    let d = Discriminator::init(config.discriminator_spec(), seeds.next_u64())?;
    let rng = ChaCha8Rng::seed_from_u64(seeds.next_u64());
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seeds.next_u64());
    let eval_z = latent(config.eval_samples, g.spec.latent_dim, &mut eval_rng);

    let mut t = Trainer {
        config,
        kind,
        anchors,
        data: Dataset::generate(&config.data)?,
        g_opt: Adam::new(config.g_optimizer, &g.params),
        d_opt: Adam::new(config.d_optimizer, &d.params),
        g,
        d,
        rng,
        last_real: None,
        real_logits: None,
        d_steps: 0,
        g_steps: 0,
    };

    let evaluate = |g: &Generator| -> Result<(Tensor, ModeMetrics), HarnessError> {
        let s = g.sample(&eval_z, SAMPLE_CHUNK)?;
        let m = evaluate_modes(&s, &config.data);
        Ok((s, m))
    };

    let (mut samples, m0) = evaluate(&t.g)?;
    let mut records = vec![EvalRecord { iter: 0, d_loss: None, g_loss: None, metrics: m0 }];
    let mut failure = None;
    let mut completed = 0;
    'outer: for it in 1..=config.iterations {
        let mut d_loss = None;
        let mut g_loss = None;
        for phase in ["d", "g"] {
            let reps = if phase == "d" { config.k_d } else { config.k_g };
            for _ in 0..reps {
                let r = if phase == "d" { t.d_step() } else { t.g_step() };
                match r {
                    Ok(v) if phase == "d" => d_loss = Some(v),
                    Ok(v) => g_loss = Some(v),
                    Err(StepError::Diverged(message)) => {
                        failure = Some(Failure { iteration: it, phase: phase.into(), message });
                        break 'outer;
                    }
                    Err(StepError::Fatal(e)) => return Err(e),
                }
            }
        }
        completed = it;
        let due = it == config.iterations || (config.eval_every > 0 && it % config.eval_every == 0);
        if due {
            match evaluate(&t.g) {
                Ok((s, m)) => {
                    samples = s;
                    records.push(EvalRecord { iter: it, d_loss, g_loss, metrics: m });
                }
                Err(HarnessError::Diff(e @ DiffError::NonFinite { .. })) => {
                    failure = Some(Failure { iteration: it, phase: "eval".into(), message: e.to_string() });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }

    if failure.is_none() {
        assert_eq!(t.d_steps, config.iterations * config.k_d, "discriminator step count");
        assert_eq!(t.g_steps, config.iterations * config.k_g, "generator step count");
    }
    let summary = RunSummary {
        config: config.to_map(),
        final_metrics: records.last().expect("initial record").metrics.clone(),
        records,
        d_steps: t.d_steps,
        g_steps: t.g_steps,
        completed_iterations: completed,
        failure,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutput { summary, generator: t.g, discriminator: t.d, samples })
}
