//! Configuration-driven Monte Carlo experiments.
//!
//! Replication `r` draws its graph, primitives and every nuisance fit from
//! streams keyed by `(seed, r)`, so results do not depend on the worker
//! count or on the order in which replications finish. Aggregation runs on
//! the collected records in replication order.

mod config;
mod table;

pub use config::{
    DesignSection, EstimatorId, EstimatorsSection, ExperimentConfig, ExposureSection, GraphModel, InferenceSection,
};
pub use table::{aggregate, emit_table, read_records_csv, write_records_csv, TableFormat, TableRow};

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::dgp::{simulate_draw, treated_fraction};
use crate::error::{Error, Result};
use crate::estimator::estimate;
use crate::rng::{replication_stream, Purpose};

/// One estimator on one replication: a row of the per-replication CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub seed: u64,
    pub replication: usize,
    pub estimator: String,
    pub tau_hat: f64,
    pub hac_se: f64,
    pub iid_se: f64,
    pub b_n: usize,
    pub treated_count: usize,
    pub trained_epochs: usize,
    /// Estimator warnings joined by `"; "`.
    pub warnings: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub records: Vec<ReplicationRecord>,
    pub treated_fraction: f64,
    pub selection_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<TableRow>,
    /// Records of the successful replications, by replication then estimator.
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
    /// Share of treated units in each successful replication.
    pub treated_fractions: Vec<f64>,
    /// Successful replications whose best-response dynamics hit the
    /// iteration cap.
    pub selection_nonconverged: usize,
}

/// Draws replication `replication` and runs every configured estimator on it.
pub fn run_replication(config: &ExperimentConfig, replication: usize) -> Result<ReplicationOutcome> {
    let seed = config.design.seed;
    let r = replication as u64;
    let d = &config.design;
    let graph = d
        .graph_model
        .generate(d.n, d.kappa, &mut replication_stream(seed, r, Purpose::Graph))?;
    let draw = simulate_draw(
        graph,
        &config.dgp,
        &mut replication_stream(seed, r, Purpose::Primitives),
    )?;
    let x = Matrix::column(&draw.x);
    let mut records = Vec::new();
    for id in config.estimator_ids() {
        let ec = config.estimator_config(id);
        let rep = estimate(&draw.graph, &x, &draw.d, &draw.y, &ec, seed, r, id.variant())?;
        records.push(ReplicationRecord {
            seed,
            replication,
            estimator: id.label(),
            tau_hat: rep.tau_hat,
            hac_se: rep.hac_se,
            iid_se: rep.iid_se,
            b_n: rep.bandwidth,
            treated_count: rep.treated_count,
            trained_epochs: rep.trained_epochs,
            warnings: rep.warnings.join("; "),
        });
    }
    Ok(ReplicationOutcome {
        replication,
        records,
        treated_fraction: treated_fraction(&draw.d),
        selection_converged: draw.selection_converged,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_progress(config, &|_, _| {})
}

/// As [`run_experiment`], calling `progress(done, total)` after each
/// replication finishes (from worker threads, in completion order).
pub fn run_experiment_with_progress(
    config: &ExperimentConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ExperimentResult> {
    config.validate()?;
    let total = config.design.replications;
    let done = AtomicUsize::new(0);
    let work = || {
        (0..total)
            .into_par_iter()
            .map(|r| {
                let out = run_replication(config, r);
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
                out
            })
            .collect::<Vec<_>>()
    };
    let outcomes = if config.design.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.design.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(work)
    };

    let mut result = ExperimentResult {
        rows: Vec::new(),
        records: Vec::new(),
        failures: Vec::new(),
        treated_fractions: Vec::new(),
        selection_nonconverged: 0,
    };
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(o) => {
                result.records.extend(o.records);
                result.treated_fractions.push(o.treated_fraction);
                result.selection_nonconverged += usize::from(!o.selection_converged);
            }
            Err(e) => result.failures.push(ReplicationFailure {
                replication: r,
                message: e.to_string(),
            }),
        }
    }
    let allowed = (config.design.max_failure_rate * total as f64).floor() as usize;
    if result.failures.len() > allowed {
        return Err(Error::TooManyFailures {
            failed: result.failures.len(),
            total,
        });
    }
    result.rows = aggregate(
        &result.records,
        config.design.n,
        config.design.true_tau,
        config.inference.level,
    );
    Ok(result)
}
