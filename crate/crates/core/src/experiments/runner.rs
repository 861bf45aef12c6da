use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::stochastics::RngStream;

use super::registry::build_replicator;
use super::summary::{Collector, McSummary};
use super::ExperimentConfig;

/// Maps `f` over `0..count` on a pool of `workers` threads, returning
/// results in index order.
pub fn parallel_map<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::Abort(format!("could not start worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

/// One row of the raw per-replication table.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub n: usize,
    pub rep: usize,
    pub outcome: std::result::Result<Vec<f64>, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub experiment_id: String,
    pub master_seed: u64,
    pub estimators: Vec<String>,
    pub summaries: Vec<McSummary>,
    pub raw: Vec<RawRecord>,
    pub warnings: Vec<String>,
}

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Runs every replication of `cfg`. Replication `r` at grid point `g`
/// draws from `RngStream::new(seed, r).lane(g)`, so the output does not
/// depend on `workers`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    cfg.validate_shape()?;
    let rep = build_replicator(cfg)?;
    let estimators = rep.estimators();
    let mut collector = Collector::new();
    let mut raw = Vec::with_capacity(cfg.reps * cfg.size_grid.len());
    let mut failures = 0usize;
    let mut first_error = None;
    for (gi, &n) in cfg.size_grid.iter().enumerate() {
        let results = parallel_map(workers, cfg.reps, |r| {
            let mut stream = RngStream::new(cfg.master_seed, r as u64).lane(gi as u64);
            rep.replicate(gi, &mut stream)
        })?;
        for (r, res) in results.into_iter().enumerate() {
            match res {
                Ok(values) => {
                    collector.insert(gi, r, values.clone());
                    raw.push(RawRecord {
                        n,
                        rep: r,
                        outcome: Ok(values),
                    });
                }
                Err(e) => {
                    failures += 1;
                    first_error.get_or_insert_with(|| format!("n={n}, rep={r}: {e}"));
                    raw.push(RawRecord {
                        n,
                        rep: r,
                        outcome: Err(e.to_string()),
                    });
                }
            }
        }
    }
    let total = cfg.reps * cfg.size_grid.len();
    if failures as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(LabError::Abort(format!(
            "{failures} of {total} replications failed (limit {:.0}%); first: {}",
            MAX_FAILURE_RATE * 100.0,
            first_error.unwrap_or_default()
        )));
    }
    let mut summaries = Vec::new();
    for (gi, &n) in cfg.size_grid.iter().enumerate() {
        let truths = rep.truth(gi);
        for (e, name) in estimators.iter().enumerate() {
            let values = collector.column(gi, e);
            if values.is_empty() {
                continue;
            }
            summaries.push(McSummary::from_values(name, n, &values, truths[e]));
        }
    }
    Ok(ExperimentOutput {
        experiment_id: cfg.experiment_id.clone(),
        master_seed: cfg.master_seed,
        estimators,
        summaries,
        raw,
        warnings: rep.warnings(),
    })
}
