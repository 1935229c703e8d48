use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{sweep_outcomes, train, write_run, write_summary, ExperimentConfig, HarnessError, SAMPLES_FILE};
use crate::diffcore::Tensor;
use crate::nn::{read_checkpoint, Generator};
use crate::synthetic::{evaluate_modes, read_points_csv, sample_data, write_points_csv, GaussianGridConfig};
use crate::theory::{verify_theory, TheoryCheckConfig};

#[derive(Parser, Debug)]
#[command(name = "realnessgan", version, about = "Distributional-discriminator GANs on a 9-Gaussian grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one run and write metrics.csv, summary.json, samples.csv and generator.ckpt.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train a grid over outcome counts and generator steps per iteration.
    SweepOutcomes {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "2,5,10,20")]
        outcomes_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        kg_list: Vec<usize>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Check the optimal-discriminator and maximizer identities on random finite worlds.
    VerifyTheory {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_x: usize,
        #[arg(long, default_value_t = 6)]
        max_outcomes: usize,
        #[arg(long, default_value_t = 1000)]
        perturbations: usize,
        #[arg(long, default_value_t = 20)]
        maximizer_instances: usize,
        /// Also write report.txt and report.json here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Draw points from the Gaussian grid as x,y CSV.
    SampleData {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; standard output when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Evaluate a generator checkpoint or a samples CSV and write samples.csv and eval.json.
    EvalDump {
        #[arg(long, value_name = "FILE", conflicts_with = "input", required_unless_present = "input")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Component standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Distance between neighbouring means.
    #[arg(long)]
    spacing: Option<f64>,
}

impl DataArgs {
    fn config(&self, n: usize, seed: u64) -> GaussianGridConfig {
        let d = GaussianGridConfig::default();
        GaussianGridConfig::grid(self.spacing.unwrap_or(d.grid_spacing), self.sigma.unwrap_or(d.sigma), n, seed)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// key = value config file; the flags below override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["realness", "standard", "lsgan", "hinge", "wgan"])]
    method: Option<String>,
    #[arg(long)]
    outcomes: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    g_objective: Option<u8>,
    #[arg(long)]
    anchor_skew: Option<f64>,
    /// Resample discriminator logits from their per-batch normal fit.
    #[arg(long)]
    resample: bool,
    #[arg(long)]
    kg: Option<usize>,
    #[arg(long)]
    kd: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    eval_samples: Option<usize>,
    /// Extra config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        push("method", self.method.clone());
        push("g_objective", self.g_objective.map(|v| v.to_string()));
        push("outcomes", self.outcomes.map(|v| v.to_string()));
        push("anchor_skew", self.anchor_skew.map(|v| v.to_string()));
        push("resample", self.resample.then(|| "true".to_string()));
        push("k_g", self.kg.map(|v| v.to_string()));
        push("k_d", self.kd.map(|v| v.to_string()));
        push("iterations", self.iters.map(|v| v.to_string()));
        push("batch_size", self.batch.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("eval_every", self.eval_every.map(|v| v.to_string()));
        push("eval_samples", self.eval_samples.map(|v| v.to_string()));
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs the command line and returns the process exit status: 0 on
/// success, 1 when a run fails or a check does not pass, 2 for usage errors.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() && !e.to_string().contains("Usage:") {
                eprintln!("\n{}", usage_for(&args));
            }
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Usage line of the subcommand named in `args`, or of the whole program.
fn usage_for(args: &[OsString]) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let name = args.iter().skip(1).find_map(|a| {
        let a = a.to_str()?;
        cmd.get_subcommands().any(|s| s.get_name() == a).then(|| a.to_string())
    });
    match name.and_then(|n| cmd.find_subcommand_mut(&n).map(|s| s.render_usage())) {
        Some(u) => u.to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn dispatch(command: Command) -> Result<i32, HarnessError> {
    match command {
        Command::Train { run, out } => {
            let cfg = run.config()?;
            let result = train(&cfg)?;
            write_run(&out, &result)?;
            let s = &result.summary;
            match &s.failure {
                Some(f) => {
                    eprintln!("run failed at iteration {} ({}): {}", f.iteration, f.phase, f.message);
                    Ok(1)
                }
                None => {
                    let m = &s.final_metrics;
                    println!("modes={} hq_ratio={:.4} iterations={} seconds={:.1}", m.modes_recovered, m.hq_ratio, s.completed_iterations, s.wall_clock_secs);
                    Ok(0)
                }
            }
        }
        Command::SweepOutcomes { run, outcomes_list, kg_list, out } => {
            let base = run.config()?;
            let result = sweep_outcomes(&base, &outcomes_list, &kg_list, |cell| {
                let status = cell.result().map_or("failed".to_string(), |(m, h)| format!("modes={m} hq_ratio={h:.4}"));
                eprintln!("outcomes={} k_g={} {status}", cell.outcomes, cell.k_g);
                if let Some(s) = &cell.summary {
                    let _ = write_summary(&out.join(format!("n{}_kg{}", cell.outcomes, cell.k_g)), s);
                }
            })?;
            fs::create_dir_all(&out)?;
            let table = result.table();
            fs::write(out.join("sweep.csv"), &table)?;
            print!("{table}");
            Ok(if result.cells.iter().all(|c| c.result().is_some()) { 0 } else { 1 })
        }
        Command::VerifyTheory { trials, seed, max_x, max_outcomes, perturbations, maximizer_instances, out } => {
            let report = verify_theory(&TheoryCheckConfig { trials, perturbations, max_x, max_outcomes, maximizer_instances, seed })?;
            let text = report.to_text();
            print!("{text}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("report.txt"), &text)?;
                fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            }
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::SampleData { data, n, seed, out } => {
            let points = sample_data(&data.config(n, seed))?;
            match out {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(p)?);
                    write_points_csv(&mut w, &points)?;
                    w.flush()?;
                }
                None => {
                    let mut w = BufWriter::new(io::stdout().lock());
                    write_points_csv(&mut w, &points)?;
                    w.flush()?;
                }
            }
            Ok(0)
        }
        Command::EvalDump { checkpoint, input, data, samples, seed, out } => {
            let points = match (checkpoint, input) {
                (Some(ck), _) => generator_samples(&ck, samples, seed)?,
                (None, Some(csv)) => read_points_csv(BufReader::new(File::open(csv)?))?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let cfg = data.config(points.rows().max(1), seed);
            let metrics = evaluate_modes(&points, &cfg);
            fs::create_dir_all(&out)?;
            let mut w = BufWriter::new(File::create(out.join(SAMPLES_FILE))?);
            write_points_csv(&mut w, &points)?;
            w.flush()?;
            let json = serde_json::to_string_pretty(&metrics)? + "\n";
            fs::write(out.join("eval.json"), &json)?;
            print!("{json}");
            Ok(0)
        }
    }
}

fn generator_samples(path: &Path, n: usize, seed: u64) -> Result<Tensor, HarnessError> {
    let ck = read_checkpoint(BufReader::new(File::open(path)?))?;
    let g = Generator::from_checkpoint(&ck)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = g.spec.latent_dim;
    let z = Tensor::matrix(n, dim, (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect());
    Ok(g.sample(&z, 2000)?)
}
