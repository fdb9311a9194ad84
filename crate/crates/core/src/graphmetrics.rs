//! Graph comparison metrics, visualization pruning, and serialization.

use crate::discovery::{CausalGraph, EdgeKey};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("graphs have different node sets")]
    NodeSetMismatch,
    #[error("score vectors have different scopes")]
    ScopeMismatch,
    #[error("both score vectors are empty")]
    EmptyScoreVectors,
    #[error("graph parse error: {0}")]
    Parse(String),
}

/// What a score vector covers: the treatment's edges into outcomes, or every
/// edge into outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScope {
    TreatmentOnly,
    AllCovariates,
}

/// Edge scores keyed by (source, lag, target).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scope: ScoreScope,
    pub entries: BTreeMap<EdgeKey, f64>,
}

impl ScoreVector {
    /// Extract outcome-inbound edge scores from a graph. With
    /// `ScoreScope::TreatmentOnly` only edges leaving `treatment` are kept.
    pub fn from_graph(graph: &CausalGraph, scope: ScoreScope, treatment: &str) -> ScoreVector {
        let entries = graph
            .iter_edges()
            .filter(|e| graph.is_outcome(&e.target))
            .filter(|e| scope == ScoreScope::AllCovariates || e.source == treatment)
            .map(|e| ((e.source, e.lag, e.target), e.score))
            .collect();
        ScoreVector { scope, entries }
    }
}

/// Structural Hamming distance: size of the symmetric difference of the two
/// lag-resolved edge-key sets.
pub fn shd(g1: &CausalGraph, g2: &CausalGraph) -> Result<usize, MetricsError> {
    if g1.nodes() != g2.nodes() {
        return Err(MetricsError::NodeSetMismatch);
    }
    let k1: BTreeSet<&EdgeKey> = g1.edge_keys().collect();
    let k2: BTreeSet<&EdgeKey> = g2.edge_keys().collect();
    Ok(k1.symmetric_difference(&k2).count())
}

/// Symmetric mean absolute percentage error over the union of keys, missing
/// scores counting as 0 and the 0/0 term defined as 0. Bounded in [0, 2].
pub fn smape(a: &ScoreVector, b: &ScoreVector) -> Result<f64, MetricsError> {
    if a.scope != b.scope {
        return Err(MetricsError::ScopeMismatch);
    }
    if a.entries.is_empty() && b.entries.is_empty() {
        return Err(MetricsError::EmptyScoreVectors);
    }
    let keys: BTreeSet<&EdgeKey> = a.entries.keys().chain(b.entries.keys()).collect();
    let total: f64 = keys
        .iter()
        .map(|k| {
            let x = a.entries.get(*k).copied().unwrap_or(0.0);
            let y = b.entries.get(*k).copied().unwrap_or(0.0);
            let denom = (x.abs() + y.abs()) / 2.0;
            if denom == 0.0 {
                0.0
            } else {
                (x - y).abs() / denom
            }
        })
        .sum();
    Ok(total / keys.len() as f64)
}

/// Number of edges present in both graphs with strictly opposite score signs.
pub fn contradictions(g1: &CausalGraph, g2: &CausalGraph) -> Result<usize, MetricsError> {
    if g1.nodes() != g2.nodes() {
        return Err(MetricsError::NodeSetMismatch);
    }
    Ok(g1
        .edge_keys()
        .filter_map(|k| {
            let a = g1.annotation(k)?;
            let b = g2.annotation(k)?;
            (a.score * b.score < 0.0).then_some(())
        })
        .count())
}

/// Remove non-outcome nodes with fewer than `min_out_degree` outbound edges
/// (and their incident edges), repeating until stable so the operation is
/// idempotent. Outcome nodes are always retained.
pub fn prune(graph: &CausalGraph, min_out_degree: usize) -> CausalGraph {
    let mut g = graph.clone();
    loop {
        let doomed: Vec<String> = g
            .nodes()
            .iter()
            .filter(|n| !g.is_outcome(n) && g.out_degree(n) < min_out_degree)
            .cloned()
            .collect();
        if doomed.is_empty() {
            return g;
        }
        for node in doomed {
            g.remove_node(&node);
        }
    }
}

/// Graphviz digraph with one node statement per variable and one labelled edge
/// statement per lagged edge; negative-score edges are dashed.
pub fn to_dot(graph: &CausalGraph) -> String {
    let mut out = String::from("digraph causal {\n  rankdir=LR;\n");
    for node in graph.nodes() {
        let shape = if graph.is_outcome(node) { "box" } else { "ellipse" };
        out.push_str(&format!("  \"{node}\" [shape={shape}];\n"));
    }
    for edge in graph.iter_edges() {
        let style = if edge.score < 0.0 {
            "style=dashed, color=\"#1a6dba\""
        } else {
            "style=solid, color=\"#b03030\""
        };
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"lag={}, s={:.4}\", {}];\n",
            edge.source, edge.target, edge.lag, edge.score, style
        ));
    }
    out.push_str("}\n");
    out
}

/// Lossless structured-text export of a graph.
pub fn to_json(graph: &CausalGraph) -> String {
    serde_json::to_string_pretty(graph).expect("graph serializes")
}

/// Inverse of [`to_json`].
pub fn from_json(text: &str) -> Result<CausalGraph, MetricsError> {
    serde_json::from_str(text).map_err(|e| MetricsError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::LaggedEdge;
    use proptest::prelude::*;

    fn graph(edges: &[(&str, usize, &str, f64)]) -> CausalGraph {
        let mut g = CausalGraph::new(
            ["a", "b", "c", "y"].map(String::from),
            [String::from("y")],
        );
        for &(s, lag, t, score) in edges {
            g.insert(LaggedEdge {
                source: s.into(),
                lag,
                target: t.into(),
                score,
                p_value: 0.01,
            });
        }
        g
    }

    #[test]
    fn shd_counts_edge_differences() {
        let g1 = graph(&[("a", 1, "b", 0.5)]);
        let g2 = graph(&[("a", 1, "b", 0.5), ("c", 1, "b", 0.2)]);
        assert_eq!(shd(&g1, &g1).unwrap(), 0);
        assert_eq!(shd(&g1, &g2).unwrap(), 1);

        let other = CausalGraph::new(["a"].map(String::from), []);
        assert_eq!(shd(&g1, &other).unwrap_err(), MetricsError::NodeSetMismatch);
    }

    #[test]
    fn shd_matches_bruteforce_on_random_pairs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let names = ["a", "b", "c", "y"];
        for _ in 0..100 {
            let mut make = || {
                let mut edges = Vec::new();
                for s in names {
                    for t in names {
                        for lag in 1..=2usize {
                            if rng.random::<f64>() < 0.3 {
                                edges.push((s, lag, t, rng.random::<f64>() - 0.5));
                            }
                        }
                    }
                }
                edges
            };
            let e1 = make();
            let e2 = make();
            let g1 = graph(&e1);
            let g2 = graph(&e2);
            let keyset = |edges: &[(&str, usize, &str, f64)]| -> BTreeSet<(String, usize, String)> {
                edges
                    .iter()
                    .map(|&(s, lag, t, _)| (s.to_string(), lag, t.to_string()))
                    .collect()
            };
            let (s1, s2) = (keyset(&e1), keyset(&e2));
            let expected = s1.symmetric_difference(&s2).count();
            assert_eq!(shd(&g1, &g2).unwrap(), expected);
        }
    }

    fn vector(entries: &[((&str, usize, &str), f64)]) -> ScoreVector {
        ScoreVector {
            scope: ScoreScope::AllCovariates,
            entries: entries
                .iter()
                .map(|&((s, lag, t), v)| ((s.to_string(), lag, t.to_string()), v))
                .collect(),
        }
    }

    #[test]
    fn smape_identity_and_sign_flip() {
        let a = vector(&[(("t", 1, "y"), 0.1)]);
        assert_eq!(smape(&a, &a).unwrap(), 0.0);
        let b = vector(&[(("t", 1, "y"), -0.1)]);
        assert_eq!(smape(&a, &b).unwrap(), 2.0);
        let empty = vector(&[]);
        assert_eq!(
            smape(&empty, &empty).unwrap_err(),
            MetricsError::EmptyScoreVectors
        );
    }

    #[test]
    fn contradictions_count_shared_opposite_signs() {
        let g1 = graph(&[("a", 1, "y", 0.05), ("b", 1, "y", 0.2)]);
        let g2 = graph(&[("a", 1, "y", -0.03), ("b", 1, "y", 0.1)]);
        assert_eq!(contradictions(&g1, &g1).unwrap(), 0);
        assert_eq!(contradictions(&g1, &g2).unwrap(), 1);
        // bounded by the shared edge count
        let shared = g1
            .edge_keys()
            .filter(|k| g2.annotation(k).is_some())
            .count();
        assert!(contradictions(&g1, &g2).unwrap() <= shared);
    }

    #[test]
    fn prune_keeps_hubs_and_outcomes() {
        // hub feeds 7 outcomes, low feeds 6 of them
        let mut g = CausalGraph::new(
            (0..7)
                .map(|i| format!("y{i}"))
                .chain([String::from("hub"), String::from("low")]),
            (0..7).map(|i| format!("y{i}")),
        );
        for i in 0..7 {
            g.insert(LaggedEdge {
                source: "hub".into(),
                lag: 1,
                target: format!("y{i}"),
                score: 0.1,
                p_value: 0.001,
            });
        }
        for i in 0..6 {
            g.insert(LaggedEdge {
                source: "low".into(),
                lag: 1,
                target: format!("y{i}"),
                score: 0.1,
                p_value: 0.001,
            });
        }
        let pruned = prune(&g, 7);
        assert!(pruned.nodes().contains("hub"), "7 outbound edges survive threshold 7");
        assert!(!pruned.nodes().contains("low"), "6 outbound edges pruned at threshold 7");
        assert!((0..7).all(|i| pruned.nodes().contains(&format!("y{i}"))), "outcomes retained");

        // unchanged at threshold 0; edges are a subset; idempotent
        assert_eq!(prune(&g, 0), g);
        let keys: BTreeSet<_> = g.edge_keys().cloned().collect();
        assert!(pruned.edge_keys().all(|k| keys.contains(k)));
        assert_eq!(prune(&pruned, 7), pruned);
    }

    #[test]
    fn prune_cascades_to_a_fixpoint() {
        // hub -> m{0..6}: the m-nodes are leaves, so they fall below any
        // positive threshold, which in turn empties the hub.
        let mut g = CausalGraph::new(
            (0..7).map(|i| format!("m{i}")).chain([String::from("hub")]),
            [],
        );
        for i in 0..7 {
            g.insert(LaggedEdge {
                source: "hub".into(),
                lag: 1,
                target: format!("m{i}"),
                score: 0.1,
                p_value: 0.001,
            });
        }
        let pruned = prune(&g, 7);
        assert!(pruned.nodes().is_empty(), "cascade removes leaves then the hub");
        assert_eq!(prune(&pruned, 7), pruned, "fixpoint reached");
    }

    #[test]
    fn dot_renders_nodes_and_annotated_edges() {
        let empty = CausalGraph::new([], []);
        assert_eq!(to_dot(&empty), "digraph causal {\n  rankdir=LR;\n}\n");

        let g = graph(&[("a", 1, "b", -0.04)]);
        let dot = to_dot(&g);
        let edge_lines: Vec<&str> = dot.lines().filter(|l| l.contains("->")).collect();
        assert_eq!(edge_lines.len(), 1);
        assert!(edge_lines[0].contains("lag=1"));
        assert!(edge_lines[0].contains("s=-0.0400"));
        assert!(edge_lines[0].contains("dashed"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn graph_json_round_trips(edges in proptest::collection::vec(
            (0usize..4, 1usize..3, 0usize..4, -1.0f64..1.0, 0.0f64..1.0),
            0..12,
        )) {
            let names = ["a", "b", "c", "y"];
            let mut g = CausalGraph::new(names.map(String::from), [String::from("y")]);
            for (s, lag, t, score, p) in edges {
                g.insert(LaggedEdge {
                    source: names[s].into(),
                    lag,
                    target: names[t].into(),
                    score,
                    p_value: p,
                });
            }
            let parsed = from_json(&to_json(&g)).unwrap();
            prop_assert_eq!(parsed, g);
        }

        #[test]
        fn smape_is_symmetric_and_bounded(
            scores in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..10)
        ) {
            let a = ScoreVector {
                scope: ScoreScope::AllCovariates,
                entries: scores
                    .iter()
                    .enumerate()
                    .map(|(i, &(x, _))| ((format!("v{i}"), 1, "y".to_string()), x))
                    .collect(),
            };
            let b = ScoreVector {
                scope: ScoreScope::AllCovariates,
                entries: scores
                    .iter()
                    .enumerate()
                    .map(|(i, &(_, y))| ((format!("v{i}"), 1, "y".to_string()), y))
                    .collect(),
            };
            let ab = smape(&a, &b).unwrap();
            let ba = smape(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!((0.0..=2.0).contains(&ab));
        }
    }
}
