use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DiffError, Tape, Tensor, Var};

/// Settings for [`check_gradients`].
#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Check at most this many randomly chosen coordinates per input.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, max_coords: None, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Distance to the nearest ReLU/max/abs kink at the unperturbed point.
    pub kink_margin: f64,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64, DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(DiffError::NotScalar { shape: v.shape().to_vec() });
    }
    let v = v.item();
    if !v.is_finite() {
        return Err(DiffError::NonFinite { op: "finite_difference" });
    }
    Ok(v)
}

/// Compares tape gradients against central differences for every (or a
/// random subset of) coordinate of every input. `f` must be deterministic.
pub fn check_gradients<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport, DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let kink_margin = tape.min_kink_margin();
    let grads = tape.backward(out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_coord: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        kink_margin,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (i, (input, &var)) in inputs.iter().zip(&vars).enumerate() {
        let analytic = grads.wrt_or_zeros(var, input.shape());
        let coords: Vec<usize> = match opts.max_coords {
            Some(k) if k < input.len() => {
                let mut c = sample(&mut rng, input.len(), k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..input.len()).collect(),
        };
        for c in coords {
            let orig = input.data()[c];
            probe[i].data_mut()[c] = orig + opts.step;
            let plus = evaluate(&f, &probe)?;
            probe[i].data_mut()[c] = orig - opts.step;
            let minus = evaluate(&f, &probe)?;
            probe[i].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.data()[c];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err;
                report.worst_input = i;
                report.worst_coord = c;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Maximum relative error `|a − n| / (|a| + |n| + 1e-12)` between the tape
/// gradient of `f` at `point` and its central-difference estimate.
pub fn finite_difference_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64, DiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, DiffError>,
{
    let opts = GradCheckOptions { step, ..Default::default() };
    let report = check_gradients(|tape: &mut Tape, v: &[Var]| f(tape, v[0]), std::slice::from_ref(point), &opts)?;
    Ok(report.max_rel_error)
}

#[derive(Clone, Debug)]
pub struct DirectionalReport {
    pub max_rel_error: f64,
    pub analytic: f64,
    pub numeric: f64,
    pub directions: usize,
    pub kink_margin: f64,
}

/// Compares `∇f·v` from the tape against `(f(θ + h·v) − f(θ − h·v)) / 2h`
/// for `directions` random unit vectors `v` spanning every coordinate of
/// every input. Unlike [`check_gradients`] this stays well conditioned when
/// individual partials are exactly zero.
pub fn check_directional<F>(
    f: F,
    inputs: &[Tensor],
    directions: usize,
    opts: &GradCheckOptions,
) -> Result<DirectionalReport, DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let kink_margin = tape.min_kink_margin();
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = inputs.iter().zip(&vars).map(|(t, &v)| grads.wrt_or_zeros(v, t.shape())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = DirectionalReport { max_rel_error: 0.0, analytic: 0.0, numeric: 0.0, directions, kink_margin };
    for k in 0..directions {
        let mut dir: Vec<Vec<f64>> =
            inputs.iter().map(|t| (0..t.len()).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let norm = dir.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().flatten().for_each(|v| *v /= norm);
        let shifted = |sign: f64| -> Vec<Tensor> {
            inputs
                .iter()
                .zip(&dir)
                .map(|(t, d)| {
                    let mut p = t.clone();
                    p.data_mut().iter_mut().zip(d).for_each(|(x, dv)| *x += sign * opts.step * dv);
                    p
                })
                .collect()
        };
        let numeric = (evaluate(&f, &shifted(1.0))? - evaluate(&f, &shifted(-1.0))?) / (2.0 * opts.step);
        let a: f64 = analytic.iter().zip(&dir).map(|(g, d)| g.data().iter().zip(d).map(|(g, d)| g * d).sum::<f64>()).sum();
        let err = relative_error(a, numeric);
        if err > report.max_rel_error || k == 0 {
            report.max_rel_error = err;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
