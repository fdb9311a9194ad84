//! Bootstrap baseline for regional-discrepancy quantification.
//!
//! The observed regional split's graph-difference metrics are placed against
//! the distribution of the same metrics over random patient partitions: B
//! replicates, each a fresh half/half split followed by discovery on both
//! halves. Replicates run in parallel from derived seeds, so reports are
//! reproducible at any thread count.

use crate::discovery::{run_pcmci, CausalGraph, DiscoveryConfig, DiscoveryError, TierKnowledge};
use crate::graphmetrics::{self, MetricsError, ScoreScope, ScoreVector};
use crate::panel::{random_partition, split_by_region, PanelDataset, PanelError};
use crate::util::{derive_seed, interpolated_quantile};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeterogeneityError {
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("B must be >= 1")]
    NoReplicates,
    #[error("only {got} of {want} bootstrap replicates succeeded within {attempts} attempts")]
    TooManyFailures { got: usize, want: usize, attempts: usize },
}

/// Difference measures between the discoveries on two data halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMetrics {
    pub smape_treatment: f64,
    pub smape_all: f64,
    pub shd: usize,
    pub contradictions: usize,
    pub per_outcome: BTreeMap<String, OutcomeDifference>,
}

/// Per-outcome score differences between two graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDifference {
    /// |scoreA − scoreB| of the treatment edge into the outcome (0 if absent).
    pub treatment_difference: f64,
    /// Mean |scoreA − scoreB| over all inbound covariate edges of the outcome.
    pub mean_difference: f64,
}

impl PartitionMetrics {
    /// Flat metric map for quantile bookkeeping; per-outcome entries are keyed
    /// `treatment_difference:<outcome>` and `mean_difference:<outcome>`.
    pub fn flat(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("smape_treatment".to_string(), self.smape_treatment);
        m.insert("smape_all".to_string(), self.smape_all);
        m.insert("shd".to_string(), self.shd as f64);
        m.insert("contradictions".to_string(), self.contradictions as f64);
        for (outcome, diff) in &self.per_outcome {
            m.insert(format!("treatment_difference:{outcome}"), diff.treatment_difference);
            m.insert(format!("mean_difference:{outcome}"), diff.mean_difference);
        }
        m
    }
}

/// Observed regional metrics against the bootstrap distribution.
///
/// `observed_quantile` is the fraction of replicates with metric value ≤ the
/// observed one (so 1.0 means the observed value exceeds every replicate);
/// `quantiles` holds the interpolated 25/50/75% bootstrap quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub observed: PartitionMetrics,
    pub replicates: Vec<PartitionMetrics>,
    pub quantiles: BTreeMap<String, [f64; 3]>,
    pub observed_quantile: BTreeMap<String, f64>,
}

/// Compute all partition metrics between two discovered graphs.
pub fn partition_metrics(
    g_a: &CausalGraph,
    g_b: &CausalGraph,
    outcomes: &[String],
    treatment: &str,
) -> Result<PartitionMetrics, MetricsError> {
    let smape_or_zero = |scope: ScoreScope| -> Result<f64, MetricsError> {
        let a = ScoreVector::from_graph(g_a, scope, treatment);
        let b = ScoreVector::from_graph(g_b, scope, treatment);
        match graphmetrics::smape(&a, &b) {
            Ok(v) => Ok(v),
            // two empty vectors are identical
            Err(MetricsError::EmptyScoreVectors) => Ok(0.0),
            Err(e) => Err(e),
        }
    };
    let smape_treatment = smape_or_zero(ScoreScope::TreatmentOnly)?;
    let smape_all = smape_or_zero(ScoreScope::AllCovariates)?;
    let shd = graphmetrics::shd(g_a, g_b)?;
    let contradictions = graphmetrics::contradictions(g_a, g_b)?;

    let mut per_outcome = BTreeMap::new();
    for outcome in outcomes {
        let keys: BTreeSet<(String, usize)> = g_a
            .edge_keys()
            .chain(g_b.edge_keys())
            .filter(|(_, _, t)| t == outcome)
            .map(|(s, lag, _)| (s.clone(), *lag))
            .collect();
        let diff_at = |source: &str, lag: usize| -> f64 {
            let key = (source.to_string(), lag, outcome.clone());
            let a = g_a.annotation(&key).map(|x| x.score).unwrap_or(0.0);
            let b = g_b.annotation(&key).map(|x| x.score).unwrap_or(0.0);
            (a - b).abs()
        };
        let treatment_lags: Vec<usize> = keys
            .iter()
            .filter(|(s, _)| s == treatment)
            .map(|&(_, lag)| lag)
            .collect();
        let treatment_difference = if treatment_lags.is_empty() {
            0.0
        } else {
            treatment_lags.iter().map(|&lag| diff_at(treatment, lag)).sum::<f64>()
                / treatment_lags.len() as f64
        };
        let mean_difference = if keys.is_empty() {
            0.0
        } else {
            keys.iter().map(|(s, lag)| diff_at(s, *lag)).sum::<f64>() / keys.len() as f64
        };
        per_outcome.insert(
            outcome.clone(),
            OutcomeDifference {
                treatment_difference,
                mean_difference,
            },
        );
    }

    Ok(PartitionMetrics {
        smape_treatment,
        smape_all,
        shd,
        contradictions,
        per_outcome,
    })
}

fn discover_pair(
    a: &PanelDataset,
    b: &PanelDataset,
    knowledge: &TierKnowledge,
    config: &DiscoveryConfig,
    outcomes: &[String],
    treatment: &str,
) -> Result<PartitionMetrics, HeterogeneityError> {
    let g_a = run_pcmci(a, knowledge, config)?;
    let g_b = run_pcmci(b, knowledge, config)?;
    Ok(partition_metrics(&g_a, &g_b, outcomes, treatment)?)
}

/// Observed regional metrics plus B random-partition replicates.
///
/// Replicate seeds derive from `seed` by counter; a replicate whose discovery
/// fails on one half is re-drawn with the next counter, up to 3·B attempts.
pub fn run_bootstrap(
    panel: &PanelDataset,
    knowledge: &TierKnowledge,
    config: &DiscoveryConfig,
    treatment: &str,
    b: usize,
    seed: u64,
) -> Result<BootstrapReport, HeterogeneityError> {
    if b == 0 {
        return Err(HeterogeneityError::NoReplicates);
    }
    let outcomes: Vec<String> = panel
        .variables()
        .iter()
        .filter(|v| v.kind == crate::panel::VariableKind::Outcome)
        .map(|v| v.name.clone())
        .collect();

    let (west, east) = split_by_region(panel)?;
    let observed = discover_pair(&west, &east, knowledge, config, &outcomes, treatment)?;

    let max_attempts = 3 * b;
    let mut replicates: Vec<PartitionMetrics> = Vec::with_capacity(b);
    let mut next_counter = 0usize;
    while replicates.len() < b && next_counter < max_attempts {
        let batch = (b - replicates.len()).min(max_attempts - next_counter);
        let results: Vec<Option<PartitionMetrics>> = (next_counter..next_counter + batch)
            .into_par_iter()
            .map(|counter| {
                let rep_seed = derive_seed(seed, counter as u64);
                let (half_a, half_b) = random_partition(panel, rep_seed).ok()?;
                discover_pair(&half_a, &half_b, knowledge, config, &outcomes, treatment).ok()
            })
            .collect();
        next_counter += batch;
        replicates.extend(results.into_iter().flatten());
    }
    if replicates.len() < b {
        return Err(HeterogeneityError::TooManyFailures {
            got: replicates.len(),
            want: b,
            attempts: max_attempts,
        });
    }

    let observed_flat = observed.flat();
    let mut quantiles = BTreeMap::new();
    let mut observed_quantile = BTreeMap::new();
    for (metric, observed_value) in &observed_flat {
        let mut values: Vec<f64> = replicates
            .iter()
            .map(|r| r.flat().get(metric).copied().unwrap_or(0.0))
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        quantiles.insert(
            metric.clone(),
            [
                interpolated_quantile(&values, 0.25),
                interpolated_quantile(&values, 0.50),
                interpolated_quantile(&values, 0.75),
            ],
        );
        let at_or_below = values.iter().filter(|&&v| v <= *observed_value).count();
        observed_quantile.insert(metric.clone(), at_or_below as f64 / values.len() as f64);
    }

    Ok(BootstrapReport {
        observed,
        replicates,
        quantiles,
        observed_quantile,
    })
}
