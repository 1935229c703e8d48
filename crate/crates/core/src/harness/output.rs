use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{HarnessError, RunSummary, TrainOutput};
use crate::nn::write_checkpoint;
use crate::synthetic::write_points_csv;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const GENERATOR_FILE: &str = "generator.ckpt";

/// Writes `metrics.csv` and `summary.json` into `dir`, creating it.
pub fn write_summary(dir: &Path, summary: &RunSummary) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(METRICS_FILE), summary.metrics_csv())?;
    let mut json = serde_json::to_string_pretty(summary)?;
    json.push('\n');
    fs::write(dir.join(SUMMARY_FILE), json)?;
    Ok(())
}

/// [`write_summary`] plus the final evaluation samples and a generator
/// checkpoint.
pub fn write_run(dir: &Path, run: &TrainOutput) -> Result<(), HarnessError> {
    write_summary(dir, &run.summary)?;
    let mut w = BufWriter::new(File::create(dir.join(SAMPLES_FILE))?);
    write_points_csv(&mut w, &run.samples)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(GENERATOR_FILE))?);
    write_checkpoint(&mut w, &run.generator.to_checkpoint())?;
    w.flush()?;
    Ok(())
}
