use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::layers::{BatchNormLayer, Bound, DenseLayer, MaxoutLayer, Mode, ParamStore};
use super::NnError;
use crate::diffcore::{DiffError, Tape, Tensor, Var};

/// Standard deviation of the Normal weight initialization.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for GeneratorSpec {
    /// Four hidden layers of 400 units on a 32-D latent, emitting 2-D points.
    fn default() -> Self {
        Self { latent_dim: 32, hidden: vec![400; 4], output_dim: 2, bn_eps: 1e-5, bn_momentum: 0.9 }
    }
}

impl GeneratorSpec {
    fn validate(&self) -> Result<(), NnError> {
        if self.latent_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(NnError::Spec(format!("zero-width generator layer in {self:?}")));
        }
        Ok(())
    }
}

/// MLP generator: each hidden layer is dense → batch norm → ReLU, followed by
/// a linear output layer.
#[derive(Clone, Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub params: ParamStore,
    hidden: Vec<(DenseLayer, BatchNormLayer)>,
    output: DenseLayer,
}

impl Generator {
    /// Weights ~ Normal(0, 0.02²), biases and BN shifts 0, BN scales 1.
    pub fn init(spec: GeneratorSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut hidden = Vec::new();
        let mut width = spec.latent_dim;
        for (i, &h) in spec.hidden.iter().enumerate() {
            let dense = DenseLayer::new(&mut params, &format!("g.hidden{i}"), width, h, INIT_STD, &mut rng);
            let bn = BatchNormLayer::new(&mut params, &format!("g.hidden{i}.bn"), h, spec.bn_eps, spec.bn_momentum);
            hidden.push((dense, bn));
            width = h;
        }
        let output = DenseLayer::new(&mut params, "g.out", width, spec.output_dim, INIT_STD, &mut rng);
        Ok(Self { spec, params, hidden, output })
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        self.params.bind(tape, trainable)
    }

    fn check_input(&self, tape: &Tape, z: Var) -> Result<(), DiffError> {
        let cols = tape.value(z).cols();
        if cols != self.spec.latent_dim {
            return Err(DiffError::ShapeMismatch {
                op: "generator",
                detail: format!("latent has {cols} columns, expected {}", self.spec.latent_dim),
            });
        }
        Ok(())
    }

    pub fn forward(&mut self, tape: &mut Tape, bound: &Bound, z: Var, mode: Mode) -> Result<Var, DiffError> {
        self.check_input(tape, z)?;
        let mut h = z;
        for (dense, bn) in &mut self.hidden {
            h = dense.forward(tape, bound, h)?;
            h = bn.forward(tape, bound, h, mode)?;
            h = tape.relu(h)?;
        }
        self.output.forward(tape, bound, h)
    }

    /// Evaluation-mode forward pass (running BN statistics, no state change).
    pub fn forward_eval(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var, DiffError> {
        self.check_input(tape, z)?;
        let mut h = z;
        for (dense, bn) in &self.hidden {
            h = dense.forward(tape, bound, h)?;
            h = bn.forward_eval(tape, bound, h)?;
            h = tape.relu(h)?;
        }
        self.output.forward(tape, bound, h)
    }

    /// Evaluation-mode samples for a latent batch, computed in chunks so the
    /// tape stays small.
    pub fn sample(&self, z: &Tensor, chunk: usize) -> Result<Tensor, DiffError> {
        let n = z.rows();
        let mut out = Vec::with_capacity(n * self.spec.output_dim);
        let mut start = 0;
        while start < n {
            let end = (start + chunk.max(1)).min(n);
            let mut tape = Tape::new();
            let bound = self.bind(&mut tape, false);
            let zv = tape.constant(z.slice_rows(start, end));
            let x = self.forward_eval(&mut tape, &bound, zv)?;
            out.extend_from_slice(tape.value(x).data());
            start = end;
        }
        Tensor::new(vec![n, self.spec.output_dim], out)
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNormLayer> {
        self.hidden.iter().map(|(_, bn)| bn)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let hidden: Vec<String> = self.spec.hidden.iter().map(usize::to_string).collect();
        let mut ck = Checkpoint::new("generator");
        ck.meta.push(("latent_dim".into(), self.spec.latent_dim.to_string()));
        ck.meta.push(("hidden".into(), hidden.join(",")));
        ck.meta.push(("output_dim".into(), self.spec.output_dim.to_string()));
        ck.meta.push(("bn_eps".into(), self.spec.bn_eps.to_string()));
        ck.meta.push(("bn_momentum".into(), self.spec.bn_momentum.to_string()));
        for (_, name, t) in self.params.iter() {
            ck.tensors.push((name.to_string(), t.clone()));
        }
        for (i, (_, bn)) in self.hidden.iter().enumerate() {
            ck.tensors.push((format!("g.hidden{i}.bn.running_mean"), Tensor::from_vec(bn.running_mean.clone())));
            ck.tensors.push((format!("g.hidden{i}.bn.running_var"), Tensor::from_vec(bn.running_var.clone())));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        if ck.kind != "generator" {
            return Err(NnError::Checkpoint(format!("expected a generator checkpoint, got {}", ck.kind)));
        }
        let hidden = ck
            .meta_value("hidden")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|e| NnError::Checkpoint(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let spec = GeneratorSpec {
            latent_dim: ck.meta_parse("latent_dim")?,
            hidden,
            output_dim: ck.meta_parse("output_dim")?,
            bn_eps: ck.meta_parse("bn_eps")?,
            bn_momentum: ck.meta_parse("bn_momentum")?,
        };
        let mut g = Self::init(spec, 0)?;
        let ids: Vec<_> = g.params.iter().map(|(id, name, _)| (id, name.to_string())).collect();
        for (id, name) in ids {
            let t = ck.tensor(&name)?;
            if t.shape() != g.params.get(id).shape() {
                return Err(NnError::Checkpoint(format!("{name}: shape {:?}", t.shape())));
            }
            *g.params.get_mut(id) = t.clone();
        }
        for (i, (_, bn)) in g.hidden.iter_mut().enumerate() {
            bn.running_mean = ck.tensor(&format!("g.hidden{i}.bn.running_mean"))?.data().to_vec();
            bn.running_var = ck.tensor(&format!("g.hidden{i}.bn.running_var"))?.data().to_vec();
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub pieces: usize,
    /// Width of the logit head: the number of realness outcomes, or 1 for
    /// scalar-output baselines.
    pub outcomes: usize,
}

impl DiscriminatorSpec {
    /// Three maxout layers of 200 units with 5 pieces each.
    pub fn with_outcomes(outcomes: usize) -> Self {
        Self { input_dim: 2, hidden: vec![200; 3], pieces: 5, outcomes }
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.pieces < 2 {
            return Err(NnError::Spec(format!("maxout needs at least 2 pieces, got {}", self.pieces)));
        }
        if self.input_dim == 0 || self.outcomes == 0 || self.hidden.contains(&0) {
            return Err(NnError::Spec(format!("zero-width discriminator layer in {self:?}")));
        }
        Ok(())
    }
}

/// Maxout MLP discriminator without normalization layers; every sample is
/// processed independently.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub params: ParamStore,
    hidden: Vec<MaxoutLayer>,
    head: DenseLayer,
}

impl Discriminator {
    pub fn init(spec: DiscriminatorSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut hidden = Vec::new();
        let mut width = spec.input_dim;
        for (i, &h) in spec.hidden.iter().enumerate() {
            hidden.push(MaxoutLayer::new(&mut params, &format!("d.hidden{i}"), width, h, spec.pieces, INIT_STD, &mut rng));
            width = h;
        }
        let head = DenseLayer::new(&mut params, "d.head", width, spec.outcomes, INIT_STD, &mut rng);
        Ok(Self { spec, params, hidden, head })
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        self.params.bind(tape, trainable)
    }

    pub fn hidden_layers(&self) -> &[MaxoutLayer] {
        &self.hidden
    }

    pub fn head(&self) -> &DenseLayer {
        &self.head
    }

    /// Logits `[M × outcomes]` for inputs `[M × input_dim]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, DiffError> {
        let cols = tape.value(x).cols();
        if cols != self.spec.input_dim {
            return Err(DiffError::ShapeMismatch {
                op: "discriminator",
                detail: format!("input has {cols} columns, expected {}", self.spec.input_dim),
            });
        }
        let mut h = x;
        for layer in &self.hidden {
            h = layer.forward(tape, bound, h)?;
        }
        self.head.forward(tape, bound, h)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let hidden: Vec<String> = self.spec.hidden.iter().map(usize::to_string).collect();
        let mut ck = Checkpoint::new("discriminator");
        ck.meta.push(("input_dim".into(), self.spec.input_dim.to_string()));
        ck.meta.push(("hidden".into(), hidden.join(",")));
        ck.meta.push(("pieces".into(), self.spec.pieces.to_string()));
        ck.meta.push(("outcomes".into(), self.spec.outcomes.to_string()));
        for (_, name, t) in self.params.iter() {
            ck.tensors.push((name.to_string(), t.clone()));
        }
        ck
    }
}
