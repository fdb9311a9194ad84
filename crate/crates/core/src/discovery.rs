//! Two-step lag-directed causal discovery under tiered domain knowledge.
//!
//! Step one screens candidate parents per target with iteratively conditioned
//! Spearman tests (condition on the q strongest surviving candidates, growing
//! q). Step two re-tests every surviving edge conditioned on both endpoints'
//! selected parents. Tier knowledge restricts edges to run from earlier tiers
//! to later (or equal) ones, and forced edges are always kept.

use crate::citest::{self, CiError};
use crate::panel::{PanelDataset, VariableKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("invalid thresholds: require 0 < alpha_mci <= alpha_pc < 1, got pc={alpha_pc} mci={alpha_mci}")]
    InvalidConfig { alpha_pc: f64, alpha_mci: f64 },
    #[error("tau_max must satisfy 1 <= tau_max < periods ({periods}), got {tau_max}")]
    InvalidTauMax { tau_max: usize, periods: usize },
    #[error("variable `{0}` appears in more than one tier")]
    TiersNotDisjoint(String),
    #[error("panel variable `{0}` is not covered by any tier")]
    UncoveredVariable(String),
    #[error("variable `{name}` declares tier {declared} but tier knowledge places it in tier {actual}")]
    TierMismatch { name: String, declared: usize, actual: usize },
    #[error("forced edge {from} -> {to} runs from tier {from_tier} back to tier {to_tier}")]
    ForcedEdgeBackwards { from: String, to: String, from_tier: usize, to_tier: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("no complete rows for target `{target}`; blocking variables: {blocking:?}")]
    NoCompleteRows { target: String, blocking: Vec<String> },
    #[error(transparent)]
    Ci(#[from] CiError),
}

/// Ordered variable tiers plus always-present edges.
///
/// An edge source → target is admissible when the source's tier is not later
/// than the target's. Forced edges are included in every discovered graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierKnowledge {
    pub tiers: Vec<Vec<String>>,
    #[serde(default)]
    pub forced_edges: Vec<(String, String)>,
}

impl TierKnowledge {
    /// Build tiers from the `tier` field of variable specs.
    pub fn from_specs(specs: &[crate::panel::VariableSpec], forced_edges: Vec<(String, String)>) -> Self {
        let max_tier = specs.iter().map(|s| s.tier).max().unwrap_or(0);
        let mut tiers = vec![Vec::new(); max_tier + 1];
        for spec in specs {
            tiers[spec.tier].push(spec.name.clone());
        }
        TierKnowledge { tiers, forced_edges }
    }

    pub fn tier_of(&self, name: &str) -> Option<usize> {
        self.tiers.iter().position(|t| t.iter().any(|v| v == name))
    }

    /// Check disjointness, coverage of the panel's variables, agreement with
    /// declared per-variable tiers, and forced-edge direction.
    pub fn validate(&self, panel: &PanelDataset) -> Result<(), DiscoveryError> {
        let mut seen = BTreeSet::new();
        for tier in &self.tiers {
            for name in tier {
                if !seen.insert(name.as_str()) {
                    return Err(DiscoveryError::TiersNotDisjoint(name.clone()));
                }
            }
        }
        for spec in panel.variables() {
            match self.tier_of(&spec.name) {
                None => return Err(DiscoveryError::UncoveredVariable(spec.name.clone())),
                Some(t) if t != spec.tier => {
                    return Err(DiscoveryError::TierMismatch {
                        name: spec.name.clone(),
                        declared: spec.tier,
                        actual: t,
                    })
                }
                Some(_) => {}
            }
        }
        for (source, target) in &self.forced_edges {
            let (Some(st), Some(tt)) = (self.tier_of(source), self.tier_of(target)) else {
                continue; // forced edge over variables absent from this dataset
            };
            if st > tt {
                return Err(DiscoveryError::ForcedEdgeBackwards {
                    from: source.clone(),
                    to: target.clone(),
                    from_tier: st,
                    to_tier: tt,
                });
            }
        }
        Ok(())
    }

    fn is_forced(&self, source: &str, target: &str) -> bool {
        self.forced_edges.iter().any(|(s, t)| s == source && t == target)
    }
}

/// Discovery thresholds and limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub alpha_pc: f64,
    pub alpha_mci: f64,
    pub tau_max: usize,
    pub max_cond_set: usize,
    /// Apply the panel's per-patient row weights inside the CI tests.
    pub weighted: bool,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            alpha_pc: 0.01,
            alpha_mci: 0.005,
            tau_max: 1,
            max_cond_set: 10,
            weighted: true,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self, panel: &PanelDataset) -> Result<(), DiscoveryError> {
        if !(self.alpha_mci > 0.0 && self.alpha_mci <= self.alpha_pc && self.alpha_pc < 1.0) {
            return Err(DiscoveryError::InvalidConfig {
                alpha_pc: self.alpha_pc,
                alpha_mci: self.alpha_mci,
            });
        }
        if self.tau_max == 0 || self.tau_max >= panel.periods() {
            return Err(DiscoveryError::InvalidTauMax {
                tau_max: self.tau_max,
                periods: panel.periods(),
            });
        }
        Ok(())
    }
}

/// A lag-directed scored edge: source at time t − lag influences target at t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedEdge {
    pub source: String,
    pub lag: usize,
    pub target: String,
    pub score: f64,
    pub p_value: f64,
}

pub type EdgeKey = (String, usize, String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeAnnotation {
    pub score: f64,
    pub p_value: f64,
}

/// Set of lag-directed scored edges over a fixed node set. Outcome nodes are
/// tracked so that pruning and per-outcome metrics know which nodes to keep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct CausalGraph {
    nodes: BTreeSet<String>,
    outcomes: BTreeSet<String>,
    edges: BTreeMap<EdgeKey, EdgeAnnotation>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<String>,
    outcomes: Vec<String>,
    edges: Vec<LaggedEdge>,
}

impl From<CausalGraph> for GraphFile {
    fn from(g: CausalGraph) -> Self {
        GraphFile {
            nodes: g.nodes.iter().cloned().collect(),
            outcomes: g.outcomes.iter().cloned().collect(),
            edges: g.iter_edges().collect(),
        }
    }
}

impl TryFrom<GraphFile> for CausalGraph {
    type Error = String;

    fn try_from(f: GraphFile) -> Result<Self, String> {
        let mut g = CausalGraph::new(f.nodes.iter().cloned(), f.outcomes.iter().cloned());
        for o in &f.outcomes {
            if !g.nodes.contains(o) {
                return Err(format!("outcome `{o}` is not a node"));
            }
        }
        for e in f.edges {
            if !g.nodes.contains(&e.source) {
                return Err(format!("edge source `{}` is not a node", e.source));
            }
            if !g.nodes.contains(&e.target) {
                return Err(format!("edge target `{}` is not a node", e.target));
            }
            if e.lag == 0 {
                return Err(format!("edge {} -> {} has lag 0", e.source, e.target));
            }
            g.insert(e);
        }
        Ok(g)
    }
}

impl CausalGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = String>,
        outcomes: impl IntoIterator<Item = String>,
    ) -> Self {
        CausalGraph {
            nodes: nodes.into_iter().collect(),
            outcomes: outcomes.into_iter().collect(),
            edges: BTreeMap::new(),
        }
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn outcomes(&self) -> &BTreeSet<String> {
        &self.outcomes
    }

    pub fn is_outcome(&self, name: &str) -> bool {
        self.outcomes.contains(name)
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Insert or replace the edge with this (source, lag, target) key.
    pub fn insert(&mut self, edge: LaggedEdge) {
        self.edges.insert(
            (edge.source, edge.lag, edge.target),
            EdgeAnnotation {
                score: edge.score,
                p_value: edge.p_value,
            },
        );
    }

    pub fn annotation(&self, key: &EdgeKey) -> Option<EdgeAnnotation> {
        self.edges.get(key).copied()
    }

    pub fn edge_keys(&self) -> impl Iterator<Item = &EdgeKey> {
        self.edges.keys()
    }

    pub fn iter_edges(&self) -> impl Iterator<Item = LaggedEdge> + '_ {
        self.edges.iter().map(|((s, lag, t), a)| LaggedEdge {
            source: s.clone(),
            lag: *lag,
            target: t.clone(),
            score: a.score,
            p_value: a.p_value,
        })
    }

    pub fn out_degree(&self, node: &str) -> usize {
        self.edges.keys().filter(|(s, _, _)| s == node).count()
    }

    pub fn remove_node(&mut self, node: &str) {
        self.nodes.remove(node);
        self.outcomes.remove(node);
        self.edges.retain(|(s, _, t), _| s != node && t != node);
    }

}

/// A screened candidate parent of some target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parent {
    pub variable: String,
    pub lag: usize,
    pub score: f64,
    pub p_value: f64,
}

/// Regression table of lagged copies: one row per (patient, period) with every
/// required cell observed, carrying the panel's row weights.
#[derive(Debug, Clone)]
pub struct DesignTable {
    pub target: String,
    /// (patient index, period) of each row.
    pub rows: Vec<(usize, usize)>,
    pub target_values: Vec<f64>,
    pub columns: Vec<DesignColumn>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DesignColumn {
    pub variable: String,
    pub lag: usize,
    pub values: Vec<f64>,
}

/// Lagged candidate columns admissible for `target` under the tier knowledge:
/// every variable whose tier is not later than the target's, at lags
/// 1..=tau_max, excluding the baseline self-copy.
pub fn admissible_columns(
    panel: &PanelDataset,
    knowledge: &TierKnowledge,
    target: &str,
    tau_max: usize,
) -> Result<Vec<(String, usize)>, DiscoveryError> {
    let target_tier = knowledge
        .tier_of(target)
        .ok_or_else(|| DiscoveryError::UncoveredVariable(target.to_string()))?;
    let mut cols = Vec::new();
    for spec in panel.variables() {
        let tier = knowledge
            .tier_of(&spec.name)
            .ok_or_else(|| DiscoveryError::UncoveredVariable(spec.name.clone()))?;
        if tier > target_tier {
            continue;
        }
        if spec.name == target && spec.kind == VariableKind::Baseline {
            continue; // the lagged copy of a constant is the variable itself
        }
        for lag in 1..=tau_max {
            cols.push((spec.name.clone(), lag));
        }
    }
    Ok(cols)
}

/// Materialize the lagged regression table for one target.
pub fn lagged_design(
    panel: &PanelDataset,
    knowledge: &TierKnowledge,
    target: &str,
    tau_max: usize,
) -> Result<DesignTable, DiscoveryError> {
    let columns = admissible_columns(panel, knowledge, target, tau_max)?;
    build_design(panel, target, &columns)
}

fn build_design(
    panel: &PanelDataset,
    target: &str,
    columns: &[(String, usize)],
) -> Result<DesignTable, DiscoveryError> {
    let ti = panel
        .variable_index(target)
        .ok_or_else(|| DiscoveryError::UnknownVariable(target.to_string()))?;
    let col_idx: Vec<usize> = columns
        .iter()
        .map(|(name, _)| {
            panel
                .variable_index(name)
                .ok_or_else(|| DiscoveryError::UnknownVariable(name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let max_lag = columns.iter().map(|&(_, lag)| lag).max().unwrap_or(1);

    let mut rows = Vec::new();
    let mut target_values = Vec::new();
    let mut weights = Vec::new();
    let mut col_values: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut blocked: Vec<usize> = vec![0; columns.len()];

    for i in 0..panel.n_patients() {
        let p = panel.observed_periods()[i];
        let w = panel.row_weight(i);
        for t in max_lag..p {
            let Some(y) = panel.value(i, t, ti) else { continue };
            let mut complete = true;
            for (c, (&vi, &(_, lag))) in col_idx.iter().zip(columns).enumerate() {
                if panel.value(i, t - lag, vi).is_none() {
                    blocked[c] += 1;
                    complete = false;
                }
            }
            if !complete {
                continue;
            }
            for (c, (&vi, &(_, lag))) in col_idx.iter().zip(columns).enumerate() {
                col_values[c].push(panel.value(i, t - lag, vi).unwrap());
            }
            rows.push((i, t));
            target_values.push(y);
            weights.push(w);
        }
    }

    if rows.is_empty() {
        let max_blocked = blocked.iter().copied().max().unwrap_or(0);
        let blocking: Vec<String> = columns
            .iter()
            .zip(&blocked)
            .filter(|&(_, &b)| b == max_blocked && b > 0)
            .map(|((name, lag), _)| format!("{name}@-{lag}"))
            .take(4)
            .collect();
        return Err(DiscoveryError::NoCompleteRows {
            target: target.to_string(),
            blocking,
        });
    }

    Ok(DesignTable {
        target: target.to_string(),
        rows,
        target_values,
        columns: columns
            .iter()
            .zip(col_values)
            .map(|((variable, lag), values)| DesignColumn {
                variable: variable.clone(),
                lag: *lag,
                values,
            })
            .collect(),
        weights,
    })
}

struct RankedDesign {
    target: Vec<f64>,
    cols: BTreeMap<(String, usize), Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl RankedDesign {
    fn from_design(design: &DesignTable, weighted: bool) -> Result<Self, DiscoveryError> {
        let target = citest::rank_transform(&design.target_values)?;
        let mut cols = BTreeMap::new();
        for col in &design.columns {
            cols.insert(
                (col.variable.clone(), col.lag),
                citest::rank_transform(&col.values)?,
            );
        }
        Ok(RankedDesign {
            target,
            cols,
            weights: weighted.then(|| design.weights.clone()),
        })
    }

    fn test(
        &self,
        candidate: &(String, usize),
        conditions: &[(String, usize)],
    ) -> Result<citest::CITestResult, CiError> {
        let x = self.cols.get(candidate).expect("candidate column present");
        let z: Vec<&[f64]> = conditions
            .iter()
            .map(|key| self.cols.get(key).expect("conditioning column present").as_slice())
            .collect();
        citest::partial_corr_of_ranks(x, &self.target, &z, self.weights.as_deref())
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    variable: String,
    lag: usize,
    score: f64,
    p_value: f64,
    forced: bool,
}

fn sort_strongest(cands: &mut [Candidate]) {
    cands.sort_by(|a, b| {
        b.score
            .abs()
            .partial_cmp(&a.score.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.variable.cmp(&b.variable))
            .then_with(|| a.lag.cmp(&b.lag))
    });
}

/// Counters describing what discovery had to work around.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryStats {
    /// Targets with (numerically) constant values: their parent sets are empty.
    pub degenerate_targets: usize,
    /// Tests skipped because the effective sample size could not support the
    /// conditioning set; the candidate is retained conservatively.
    pub skipped_tests: usize,
}

/// Iterative condition-selection screen for one target. Returns surviving
/// candidates sorted by descending |score| (ties broken lexicographically).
pub fn pc_parents(
    panel: &PanelDataset,
    target: &str,
    knowledge: &TierKnowledge,
    config: &DiscoveryConfig,
) -> Result<Vec<Parent>, DiscoveryError> {
    let (parents, _) = pc_parents_with_stats(panel, target, knowledge, config)?;
    Ok(parents)
}

fn pc_parents_with_stats(
    panel: &PanelDataset,
    target: &str,
    knowledge: &TierKnowledge,
    config: &DiscoveryConfig,
) -> Result<(Vec<Parent>, DiscoveryStats), DiscoveryError> {
    let mut stats = DiscoveryStats::default();
    let design = lagged_design(panel, knowledge, target, config.tau_max)?;
    let ranked = RankedDesign::from_design(&design, config.weighted)?;

    // A constant target cannot support any test.
    let t0 = ranked.target[0];
    if ranked.target.iter().all(|&v| v == t0) {
        stats.degenerate_targets = 1;
        return Ok((Vec::new(), stats));
    }

    let mut remaining: Vec<Candidate> = design
        .columns
        .iter()
        .map(|c| Candidate {
            variable: c.variable.clone(),
            lag: c.lag,
            score: 0.0,
            p_value: 1.0,
            forced: c.lag == 1 && knowledge.is_forced(&c.variable, target),
        })
        .collect();

    let mut q = 0usize;
    while !remaining.is_empty() && q <= config.max_cond_set {
        if q > 0 && q >= remaining.len() {
            break;
        }
        sort_strongest(&mut remaining);
        let snapshot: Vec<(String, usize)> = remaining
            .iter()
            .map(|c| (c.variable.clone(), c.lag))
            .collect();

        let results: Vec<Option<citest::CITestResult>> = remaining
            .par_iter()
            .map(|cand| {
                let key = (cand.variable.clone(), cand.lag);
                let conditions: Vec<(String, usize)> = snapshot
                    .iter()
                    .filter(|k| **k != key)
                    .take(q)
                    .cloned()
                    .collect();
                match ranked.test(&key, &conditions) {
                    Ok(res) => Some(res),
                    Err(CiError::TooFewRows { .. }) => None,
                    Err(_) => None,
                }
            })
            .collect();

        let mut next = Vec::with_capacity(remaining.len());
        for (mut cand, res) in remaining.into_iter().zip(results) {
            match res {
                Some(res) => {
                    cand.score = res.statistic;
                    cand.p_value = res.p_value;
                    if res.p_value < config.alpha_pc || cand.forced {
                        next.push(cand);
                    }
                }
                None => {
                    stats.skipped_tests += 1;
                    next.push(cand); // infeasible test: keep conservatively
                }
            }
        }
        remaining = next;
        q += 1;
    }

    sort_strongest(&mut remaining);
    let parents = remaining
        .into_iter()
        .map(|c| Parent {
            variable: c.variable,
            lag: c.lag,
            score: c.score,
            p_value: c.p_value,
        })
        .collect();
    Ok((parents, stats))
}

/// The momentary-conditional-independence step: re-test each screened edge
/// (X, lag, Y) conditioning on Y's other parents and X's parents shifted by
/// lag; keep it when p < alpha_mci or the edge is forced.
pub fn mci_edges(
    panel: &PanelDataset,
    parents_map: &BTreeMap<String, Vec<Parent>>,
    knowledge: &TierKnowledge,
    config: &DiscoveryConfig,
) -> Result<CausalGraph, DiscoveryError> {
    let (graph, _) = mci_edges_with_stats(panel, parents_map, knowledge, config)?;
    Ok(graph)
}

fn mci_edges_with_stats(
    panel: &PanelDataset,
    parents_map: &BTreeMap<String, Vec<Parent>>,
    knowledge: &TierKnowledge,
    config: &DiscoveryConfig,
) -> Result<(CausalGraph, DiscoveryStats), DiscoveryError> {
    let mut graph = CausalGraph::new(
        panel.variables().iter().map(|v| v.name.clone()),
        panel
            .variables()
            .iter()
            .filter(|v| v.kind == VariableKind::Outcome)
            .map(|v| v.name.clone()),
    );
    let mut stats = DiscoveryStats::default();

    let targets: Vec<&String> = parents_map.keys().collect();
    let per_target: Vec<Result<(Vec<LaggedEdge>, usize), DiscoveryError>> = targets
        .par_iter()
        .map(|target| mci_for_target(panel, target, parents_map, knowledge, config))
        .collect();

    for result in per_target {
        let (edges, skipped) = result?;
        stats.skipped_tests += skipped;
        for edge in edges {
            graph.insert(edge);
        }
    }
    Ok((graph, stats))
}

fn mci_for_target(
    panel: &PanelDataset,
    target: &str,
    parents_map: &BTreeMap<String, Vec<Parent>>,
    knowledge: &TierKnowledge,
    config: &DiscoveryConfig,
) -> Result<(Vec<LaggedEdge>, usize), DiscoveryError> {
    let own_parents = parents_map
        .get(target)
        .ok_or_else(|| DiscoveryError::UnknownVariable(target.to_string()))?;

    // Candidate edges: PC survivors plus forced edges (at lag 1).
    let mut candidates: Vec<(String, usize, bool)> = own_parents
        .iter()
        .map(|p| {
            let forced = p.lag == 1 && knowledge.is_forced(&p.variable, target);
            (p.variable.clone(), p.lag, forced)
        })
        .collect();
    for (source, tgt) in &knowledge.forced_edges {
        if tgt == target
            && panel.variable_index(source).is_some()
            && !candidates.iter().any(|(v, lag, _)| v == source && *lag == 1)
        {
            candidates.push((source.clone(), 1, true));
        }
    }
    if candidates.is_empty() {
        return Ok((Vec::new(), 0));
    }

    let truncated = |parents: &[Parent]| -> Vec<(String, usize)> {
        parents
            .iter()
            .take(config.max_cond_set)
            .map(|p| (p.variable.clone(), p.lag))
            .collect()
    };
    let own_conds = truncated(own_parents);

    // One design holding every column any of this target's tests needs.
    let mut needed: BTreeSet<(String, usize)> = BTreeSet::new();
    for (var, lag, _) in &candidates {
        needed.insert((var.clone(), *lag));
        if let Some(source_parents) = parents_map.get(var) {
            for (pv, pl) in truncated(source_parents) {
                needed.insert((pv, pl + lag));
            }
        }
    }
    needed.extend(own_conds.iter().cloned());
    let columns: Vec<(String, usize)> = needed.into_iter().collect();
    let design = build_design(panel, target, &columns)?;
    let ranked = RankedDesign::from_design(&design, config.weighted)?;

    let mut skipped = 0usize;
    let mut edges = Vec::new();
    let results: Vec<Option<citest::CITestResult>> = candidates
        .par_iter()
        .map(|(var, lag, _)| {
            let key = (var.clone(), *lag);
            let mut conds: BTreeSet<(String, usize)> =
                own_conds.iter().filter(|k| **k != key).cloned().collect();
            if let Some(source_parents) = parents_map.get(var) {
                for (pv, pl) in truncated(source_parents) {
                    conds.insert((pv, pl + lag));
                }
            }
            conds.remove(&key);
            let conds: Vec<(String, usize)> = conds.into_iter().collect();
            match ranked.test(&key, &conds) {
                Ok(res) => Some(res),
                Err(_) => None,
            }
        })
        .collect();

    for ((var, lag, forced), res) in candidates.into_iter().zip(results) {
        match res {
            Some(res) if res.degenerate && forced => {
                // Degenerate MCI test on a forced edge: annotate with the
                // unconditional association instead of an unscored placeholder.
                let fallback = ranked.test(&(var.clone(), lag), &[])?;
                edges.push(LaggedEdge {
                    source: var,
                    lag,
                    target: target.to_string(),
                    score: fallback.statistic,
                    p_value: fallback.p_value,
                });
            }
            Some(res) => {
                if res.p_value < config.alpha_mci || forced {
                    edges.push(LaggedEdge {
                        source: var,
                        lag,
                        target: target.to_string(),
                        score: res.statistic,
                        p_value: res.p_value,
                    });
                }
            }
            None => {
                // Infeasible test: retain the screened edge with its PC score.
                skipped += 1;
                if let Some(p) = parents_map
                    .get(target)
                    .and_then(|ps| ps.iter().find(|p| p.variable == var && p.lag == lag))
                {
                    edges.push(LaggedEdge {
                        source: var,
                        lag,
                        target: target.to_string(),
                        score: p.score,
                        p_value: p.p_value,
                    });
                }
            }
        }
    }
    Ok((edges, skipped))
}

/// Full two-step discovery over every panel variable.
pub fn run_pcmci(
    panel: &PanelDataset,
    knowledge: &TierKnowledge,
    config: &DiscoveryConfig,
) -> Result<CausalGraph, DiscoveryError> {
    let (graph, _) = run_pcmci_with_stats(panel, knowledge, config)?;
    Ok(graph)
}

/// As [`run_pcmci`], also reporting degenerate-target and skipped-test counts.
pub fn run_pcmci_with_stats(
    panel: &PanelDataset,
    knowledge: &TierKnowledge,
    config: &DiscoveryConfig,
) -> Result<(CausalGraph, DiscoveryStats), DiscoveryError> {
    config.validate(panel)?;
    knowledge.validate(panel)?;

    let names: Vec<String> = panel.variables().iter().map(|v| v.name.clone()).collect();
    let screened: Vec<Result<(Vec<Parent>, DiscoveryStats), DiscoveryError>> = names
        .par_iter()
        .map(|target| pc_parents_with_stats(panel, target, knowledge, config))
        .collect();

    let mut stats = DiscoveryStats::default();
    let mut parents_map = BTreeMap::new();
    for (name, result) in names.iter().zip(screened) {
        let (parents, s) = result?;
        stats.degenerate_targets += s.degenerate_targets;
        stats.skipped_tests += s.skipped_tests;
        parents_map.insert(name.clone(), parents);
    }

    let (graph, mci_stats) = mci_edges_with_stats(panel, &parents_map, knowledge, config)?;
    stats.skipped_tests += mci_stats.skipped_tests;
    Ok((graph, stats))
}

/// Sources of edges into `outcome` (the lag-directed Markov blanket), with the
/// outcome's own latch edge excluded.
pub fn markov_blanket(graph: &CausalGraph, outcome: &str) -> BTreeSet<String> {
    graph
        .edge_keys()
        .filter(|(source, _, target)| target == outcome && source != outcome)
        .map(|(source, _, _)| source.clone())
        .collect()
}
