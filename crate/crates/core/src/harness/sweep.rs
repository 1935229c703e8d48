use serde::Serialize;

use super::{train, ExperimentConfig, HarnessError, RunSummary};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub outcomes: usize,
    pub k_g: usize,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

impl SweepCell {
    /// Final `(modes_recovered, hq_ratio)` of a run that finished.
    pub fn result(&self) -> Option<(usize, f64)> {
        self.summary.as_ref().filter(|s| s.succeeded()).map(|s| (s.final_metrics.modes_recovered, s.final_metrics.hq_ratio))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, outcomes: usize, k_g: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.outcomes == outcomes && c.k_g == k_g)
    }

    /// `outcomes,k_g,modes,hq_ratio,dispersion,status` rows.
    pub fn table(&self) -> String {
        let mut s = String::from("outcomes,k_g,modes,hq_ratio,dispersion,status\n");
        for c in &self.cells {
            let status = match (&c.summary, &c.error) {
                (_, Some(e)) => format!("error: {}", e.replace(',', ";")),
                (Some(sum), None) => match &sum.failure {
                    Some(f) => format!("diverged at {}", f.iteration),
                    None => "ok".into(),
                },
                (None, None) => "missing".into(),
            };
            match c.summary.as_ref().map(|s| &s.final_metrics) {
                Some(m) => s.push_str(&format!(
                    "{},{},{},{:.4},{},{}\n",
                    c.outcomes,
                    c.k_g,
                    m.modes_recovered,
                    m.hq_ratio,
                    m.dispersion.map_or("nan".into(), |d| format!("{d:.4}")),
                    status
                )),
                None => s.push_str(&format!("{},{},,,,{}\n", c.outcomes, c.k_g, status)),
            }
        }
        s
    }

    /// Best cell per outcome count, ranked by modes then HQ ratio.
    pub fn best_per_outcomes(&self) -> Vec<&SweepCell> {
        let mut ns: Vec<usize> = self.cells.iter().map(|c| c.outcomes).collect();
        ns.dedup();
        ns.into_iter()
            .filter_map(|n| {
                self.cells.iter().filter(|c| c.outcomes == n && c.result().is_some()).max_by(|a, b| {
                    let (ma, ha) = a.result().unwrap();
                    let (mb, hb) = b.result().unwrap();
                    ma.cmp(&mb).then(ha.total_cmp(&hb)).then(b.k_g.cmp(&a.k_g))
                })
            })
            .collect()
    }
}

/// Trains one run per `(outcomes, k_g)` pair, row-major over `outcomes`.
/// A failing cell is recorded and the sweep continues; `progress` sees each
/// finished cell.
pub fn sweep_outcomes(
    base: &ExperimentConfig,
    outcomes: &[usize],
    k_gs: &[usize],
    mut progress: impl FnMut(&SweepCell),
) -> Result<SweepResult, HarnessError> {
    if outcomes.is_empty() || k_gs.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one outcome count and one k_g".into()));
    }
    if !base.method.is_realness() {
        return Err(HarnessError::Config(format!("outcome sweeps need the realness method, got {}", base.method)));
    }
    let mut cells = Vec::new();
    for &n in outcomes {
        for &k in k_gs {
            let cfg = ExperimentConfig { outcomes: n, k_g: k, ..base.clone() };
            let cell = match train(&cfg) {
                Ok(out) => SweepCell { outcomes: n, k_g: k, summary: Some(out.summary), error: None },
                Err(e) => SweepCell { outcomes: n, k_g: k, summary: None, error: Some(e.to_string()) },
            };
            progress(&cell);
            cells.push(cell);
        }
    }
    Ok(SweepResult { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.generator.hidden = vec![8];
        c.d_hidden = vec![8];
        c.batch_size = 16;
        c.eval_samples = 200;
        c.data.n_samples = 500;
        c.iterations = 2;
        c
    }

    #[test]
    fn single_cell_matches_train() {
        let base = small();
        let mut seen = 0;
        let r = sweep_outcomes(&base, &[4], &[2], |_| seen += 1).unwrap();
        assert_eq!(seen, 1);
        let direct = train(&ExperimentConfig { outcomes: 4, k_g: 2, ..base }).unwrap().summary;
        assert_eq!(r.cell(4, 2).unwrap().summary.as_ref().unwrap().records, direct.records);
        assert_eq!(r.best_per_outcomes().len(), 1);
    }

    #[test]
    fn failing_cells_do_not_abort() {
        let mut base = small();
        base.g_optimizer.lr = 1e200;
        base.d_optimizer.lr = 1e200;
        base.iterations = 30;
        let r = sweep_outcomes(&base, &[3, 1], &[1], |_| {}).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert!(r.cells[1].error.is_some());
        let table = r.table();
        assert_eq!(table.lines().count(), 3);
        assert!(table.lines().nth(2).unwrap().contains("error"));
    }

    #[test]
    fn rejects_empty_lists_and_scalar_methods() {
        assert!(sweep_outcomes(&small(), &[], &[1], |_| {}).is_err());
        assert!(sweep_outcomes(&small(), &[2], &[], |_| {}).is_err());
        let std = ExperimentConfig::for_method(LossKind::Standard);
        assert!(sweep_outcomes(&std, &[2], &[1], |_| {}).is_err());
    }
}
