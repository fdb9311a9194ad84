//! Ground-truth synthetic data: a lagged structural causal model over
//! trial-like variables, with optional region-dependent coefficients.
//!
//! Continuous variables evolve by lagged linear-Gaussian mechanisms; outcomes
//! fire per period with logistic probability and latch to 1 (terminal outcomes
//! end the patient's series). The generator returns both the panel and the
//! graph of true lagged links, which downstream recovery and heterogeneity
//! experiments use as the oracle.

use crate::discovery::{CausalGraph, LaggedEdge, TierKnowledge};
use crate::panel::{PanelDataset, Patient, Region, VariableKind, VariableSpec};
use crate::util::{derive_seed, logistic};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("spec has no variables")]
    NoVariables,
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("treatment `{0}` must be a declared baseline variable")]
    BadTreatment(String),
    #[error("region indicator `{0}` must be a declared baseline variable")]
    BadRegionIndicator(String),
    #[error("mechanism for `{0}`: variable is not time-varying (or not declared)")]
    BadMechanismVariable(String),
    #[error("outcome link for `{0}`: variable is not outcome-kind (or not declared)")]
    BadOutcomeVariable(String),
    #[error("term {variable} <- {parent}@-{lag}: {reason}")]
    BadTerm { variable: String, parent: String, lag: usize, reason: String },
    #[error("override for region {region:?} references missing triple {variable} <- {parent}@-{lag}")]
    DanglingOverride { region: Region, variable: String, parent: String, lag: usize },
    #[error("censor_rate must lie in [0, 1), got {0}")]
    BadCensorRate(f64),
    #[error("need n_patients >= 1 and n_periods >= 2, got {patients} x {periods}")]
    BadShape { patients: usize, periods: usize },
}

/// One lagged linear term: `coef` × parent value `lag` periods back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedTerm {
    pub parent: String,
    pub lag: usize,
    pub coef: f64,
}

impl LaggedTerm {
    pub fn new(parent: &str, lag: usize, coef: f64) -> Self {
        LaggedTerm {
            parent: parent.to_string(),
            lag,
            coef,
        }
    }
}

/// Data-generating mechanism of a continuous variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    #[serde(default)]
    pub terms: Vec<LaggedTerm>,
    pub noise_scale: f64,
}

/// Per-period firing model of an outcome: logistic(intercept + Σ terms), then
/// latched to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLink {
    pub intercept: f64,
    #[serde(default)]
    pub terms: Vec<LaggedTerm>,
}

/// Region-specific replacement for one existing coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefOverride {
    pub variable: String,
    pub parent: String,
    pub lag: usize,
    pub coef: f64,
}

/// Ground-truth lagged structural causal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub variables: Vec<VariableSpec>,
    /// Randomized Bernoulli(0.5) baseline.
    pub treatment: String,
    /// Baseline variable mirroring the region label (1 = West), if any.
    #[serde(default)]
    pub region_indicator: Option<String>,
    #[serde(default)]
    pub mechanisms: BTreeMap<String, Mechanism>,
    #[serde(default)]
    pub outcome_links: BTreeMap<String, OutcomeLink>,
    /// Declared regions with their coefficient overrides; patients are
    /// assigned uniformly at random across the declared regions.
    #[serde(default)]
    pub regions: BTreeMap<Region, Vec<CoefOverride>>,
    #[serde(default)]
    pub forced_edges: Vec<(String, String)>,
    pub n_patients: usize,
    pub n_periods: usize,
    #[serde(default = "default_bin_months")]
    pub bin_months: f64,
    #[serde(default)]
    pub censor_rate: f64,
}

fn default_bin_months() -> f64 {
    6.0
}

impl ScmSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.variables.is_empty() {
            return Err(SynthError::NoVariables);
        }
        if self.n_patients < 1 || self.n_periods < 2 {
            return Err(SynthError::BadShape {
                patients: self.n_patients,
                periods: self.n_periods,
            });
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return Err(SynthError::BadCensorRate(self.censor_rate));
        }
        let mut kinds: BTreeMap<&str, (VariableKind, usize)> = BTreeMap::new();
        for spec in &self.variables {
            if kinds
                .insert(spec.name.as_str(), (spec.kind, spec.tier))
                .is_some()
            {
                return Err(SynthError::DuplicateVariable(spec.name.clone()));
            }
        }
        if kinds.get(self.treatment.as_str()).map(|(k, _)| *k) != Some(VariableKind::Baseline) {
            return Err(SynthError::BadTreatment(self.treatment.clone()));
        }
        if let Some(ind) = &self.region_indicator {
            if kinds.get(ind.as_str()).map(|(k, _)| *k) != Some(VariableKind::Baseline) {
                return Err(SynthError::BadRegionIndicator(ind.clone()));
            }
        }
        let check_terms = |variable: &str, terms: &[LaggedTerm]| -> Result<(), SynthError> {
            let var_tier = kinds[variable].1;
            for term in terms {
                let err = |reason: &str| SynthError::BadTerm {
                    variable: variable.to_string(),
                    parent: term.parent.clone(),
                    lag: term.lag,
                    reason: reason.to_string(),
                };
                let Some(&(_, parent_tier)) = kinds.get(term.parent.as_str()) else {
                    return Err(err("parent not declared"));
                };
                if term.lag == 0 {
                    return Err(err("lag must be >= 1"));
                }
                if parent_tier > var_tier {
                    return Err(err("parent tier is later than the variable's"));
                }
            }
            Ok(())
        };
        for (variable, mech) in &self.mechanisms {
            let kind = kinds.get(variable.as_str()).map(|(k, _)| *k);
            match kind {
                Some(VariableKind::TimeVarying) => check_terms(variable, &mech.terms)?,
                Some(VariableKind::Baseline) if mech.terms.is_empty() => {}
                _ => return Err(SynthError::BadMechanismVariable(variable.clone())),
            }
        }
        for (variable, link) in &self.outcome_links {
            if kinds.get(variable.as_str()).map(|(k, _)| *k) != Some(VariableKind::Outcome) {
                return Err(SynthError::BadOutcomeVariable(variable.clone()));
            }
            check_terms(variable, &link.terms)?;
        }
        for (region, overrides) in &self.regions {
            for o in overrides {
                let exists = self
                    .mechanisms
                    .get(&o.variable)
                    .map(|m| &m.terms)
                    .into_iter()
                    .chain(self.outcome_links.get(&o.variable).map(|l| &l.terms))
                    .flatten()
                    .any(|t| t.parent == o.parent && t.lag == o.lag);
                if !exists {
                    return Err(SynthError::DanglingOverride {
                        region: *region,
                        variable: o.variable.clone(),
                        parent: o.parent.clone(),
                        lag: o.lag,
                    });
                }
            }
        }
        Ok(())
    }

    /// Tier knowledge implied by the variable roster and forced edges.
    pub fn tier_knowledge(&self) -> TierKnowledge {
        TierKnowledge::from_specs(&self.variables, self.forced_edges.clone())
    }

    fn effective_coef(&self, region: Option<Region>, variable: &str, term: &LaggedTerm) -> f64 {
        if let Some(region) = region {
            if let Some(overrides) = self.regions.get(&region) {
                for o in overrides {
                    if o.variable == variable && o.parent == term.parent && o.lag == term.lag {
                        return o.coef;
                    }
                }
            }
        }
        term.coef
    }

    /// The graph of true lagged links: every nonzero base coefficient, a lag-1
    /// latch edge per non-terminal outcome, and a region-indicator edge into
    /// every variable whose coefficients differ across regions.
    pub fn ground_truth(&self) -> CausalGraph {
        let mut graph = CausalGraph::new(
            self.variables.iter().map(|v| v.name.clone()),
            self.variables
                .iter()
                .filter(|v| v.kind == VariableKind::Outcome)
                .map(|v| v.name.clone()),
        );
        let mut add = |source: &str, lag: usize, target: &str, score: f64| {
            graph.insert(LaggedEdge {
                source: source.to_string(),
                lag,
                target: target.to_string(),
                score,
                p_value: 0.0,
            });
        };
        for (variable, mech) in &self.mechanisms {
            for term in &mech.terms {
                if term.coef != 0.0 {
                    add(&term.parent, term.lag, variable, term.coef);
                }
            }
        }
        for (variable, link) in &self.outcome_links {
            for term in &link.terms {
                if term.coef != 0.0 {
                    add(&term.parent, term.lag, variable, term.coef);
                }
            }
        }
        for spec in &self.variables {
            if spec.kind == VariableKind::Outcome && !spec.terminal {
                add(&spec.name, 1, &spec.name, 1.0);
            }
        }
        if let Some(indicator) = &self.region_indicator {
            let regions: Vec<Region> = self.regions.keys().copied().collect();
            if regions.len() >= 2 {
                let all_terms = self
                    .mechanisms
                    .iter()
                    .flat_map(|(v, m)| m.terms.iter().map(move |t| (v, t)))
                    .chain(
                        self.outcome_links
                            .iter()
                            .flat_map(|(v, l)| l.terms.iter().map(move |t| (v, t))),
                    );
                for (variable, term) in all_terms {
                    let west = self.effective_coef(Some(Region::West), variable, term);
                    let east = self.effective_coef(Some(Region::East), variable, term);
                    if west != east {
                        add(indicator, 1, variable, (west - east) / 2.0);
                    }
                }
            }
        }
        graph
    }
}

/// Simulate a panel plus its ground-truth graph. Deterministic per seed;
/// patients are generated independently from derived seeds.
pub fn generate(spec: &ScmSpec, seed: u64) -> Result<(PanelDataset, CausalGraph), SynthError> {
    spec.validate()?;
    let n_vars = spec.variables.len();
    let var_index: BTreeMap<&str, usize> = spec
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    let regions: Vec<Region> = spec.regions.keys().copied().collect();

    struct PatientBlock {
        region: Option<Region>,
        values: Vec<Vec<Option<f64>>>,
        window: usize,
    }

    let blocks: Vec<PatientBlock> = (0..spec.n_patients)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let normal = Normal::new(0.0, 1.0).unwrap();
            let region = if regions.is_empty() {
                None
            } else {
                Some(regions[rng.random_range(0..regions.len())])
            };
            // censoring decided up front to keep the draw order fixed
            let censored = rng.random::<f64>() < spec.censor_rate;
            let censor_period = if censored {
                rng.random_range(1..spec.n_periods)
            } else {
                spec.n_periods
            };

            let mut grid: Vec<Vec<Option<f64>>> = vec![vec![None; n_vars]; spec.n_periods];
            let mut window = censor_period;
            for t in 0..spec.n_periods {
                if t >= window {
                    break;
                }
                for (v, var) in spec.variables.iter().enumerate() {
                    let value = match var.kind {
                        VariableKind::Baseline => {
                            if t > 0 {
                                grid[0][v].expect("baseline assigned at period 0")
                            } else if var.name == spec.treatment {
                                if rng.random::<bool>() {
                                    1.0
                                } else {
                                    0.0
                                }
                            } else if Some(&var.name) == spec.region_indicator.as_ref() {
                                if region == Some(Region::West) {
                                    1.0
                                } else {
                                    0.0
                                }
                            } else {
                                let scale = spec
                                    .mechanisms
                                    .get(&var.name)
                                    .map(|m| m.noise_scale)
                                    .unwrap_or(1.0);
                                scale * normal.sample(&mut rng)
                            }
                        }
                        VariableKind::TimeVarying => match spec.mechanisms.get(&var.name) {
                            Some(mech) => {
                                let mut x = 0.0;
                                for term in &mech.terms {
                                    if term.lag <= t {
                                        if let Some(pv) =
                                            grid[t - term.lag][var_index[term.parent.as_str()]]
                                        {
                                            x += spec.effective_coef(region, &var.name, term) * pv;
                                        }
                                    }
                                }
                                x + mech.noise_scale * normal.sample(&mut rng)
                            }
                            None => normal.sample(&mut rng),
                        },
                        VariableKind::Outcome => {
                            if t > 0 && grid[t - 1][v] == Some(1.0) {
                                1.0 // latched
                            } else {
                                let fired = match spec.outcome_links.get(&var.name) {
                                    Some(link) => {
                                        let mut eta = link.intercept;
                                        for term in &link.terms {
                                            if term.lag <= t {
                                                if let Some(pv) = grid[t - term.lag]
                                                    [var_index[term.parent.as_str()]]
                                                {
                                                    eta += spec.effective_coef(region, &var.name, term)
                                                        * pv;
                                                }
                                            }
                                        }
                                        rng.random::<f64>() < logistic(eta)
                                    }
                                    None => false,
                                };
                                if fired {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                        }
                    };
                    grid[t][v] = Some(value);
                }
                // a terminal event ends the series after its own period
                for (v, var) in spec.variables.iter().enumerate() {
                    if var.terminal && grid[t][v] == Some(1.0) {
                        window = window.min(t + 1);
                    }
                }
            }
            for row in grid.iter_mut().skip(window) {
                row.fill(None);
            }
            PatientBlock {
                region,
                values: grid,
                window,
            }
        })
        .collect();

    let patients: Vec<Patient> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| Patient {
            id: format!("synth-{i:05}"),
            region: b.region,
        })
        .collect();
    let observed: Vec<usize> = blocks.iter().map(|b| b.window).collect();
    let values: Vec<Vec<Vec<Option<f64>>>> = blocks.into_iter().map(|b| b.values).collect();
    let panel = PanelDataset::from_parts(
        spec.variables.clone(),
        patients,
        spec.n_periods,
        spec.bin_months,
        values,
        observed,
    )
    .expect("generated shapes are consistent");
    Ok((panel, spec.ground_truth()))
}

/// Fixed trial-like model: 26 variables over 8 tiers, the seven named
/// outcomes plus a composite endpoint, treatment-driven side-effect chains,
/// and an Eastern regime with absent side effects and flipped or nulled
/// treatment effects on several outcomes.
pub fn builtin_topcat_like() -> ScmSpec {
    use VariableKind::{Baseline, Outcome, TimeVarying};

    let v = |name: &str, kind: VariableKind, tier: usize| VariableSpec::new(name, kind, tier);
    let variables = vec![
        v("Americas", Baseline, 0),
        v("treatment", Baseline, 0),
        v("age entry", Baseline, 0),
        v("blood potassium", TimeVarying, 1),
        v("systolic blood pressure", TimeVarying, 1),
        v("heart rate", TimeVarying, 1),
        v("gfr", TimeVarying, 1),
        v("hemoglobin", TimeVarying, 1),
        v("Left ventricular ejection fraction", Baseline, 1),
        v("Heart Failure History", Baseline, 1),
        v("diabetes", Baseline, 1),
        v("weight", Baseline, 1),
        v("serum potassium high", TimeVarying, 2),
        v("NYHA class", TimeVarying, 3),
        v("hyperkalemia", TimeVarying, 3),
        v("creatinine doubled", TimeVarying, 4),
        v("hyperkalemia hospitalization", TimeVarying, 4),
        v("Outcome anyhosp", Outcome, 5),
        v("Outcome mi", Outcome, 5),
        v("Outcome stroke", Outcome, 5),
        v("Outcome abortedca", Outcome, 5),
        v("Outcome hfhosp", Outcome, 5),
        VariableSpec::terminal("Outcome death", 6),
        VariableSpec::terminal("Outcome cvd death", 6),
        v("potassium side effect discontinued", TimeVarying, 6),
        v("Outcome primary ep", Outcome, 7),
    ];

    let mech = |terms: Vec<LaggedTerm>| Mechanism {
        terms,
        noise_scale: 1.0,
    };
    let t = LaggedTerm::new;
    let mechanisms: BTreeMap<String, Mechanism> = [
        (
            "blood potassium",
            mech(vec![t("blood potassium", 1, 0.5), t("treatment", 1, 0.5)]),
        ),
        (
            "systolic blood pressure",
            mech(vec![t("systolic blood pressure", 1, 0.6), t("treatment", 1, -0.3)]),
        ),
        ("heart rate", mech(vec![t("heart rate", 1, 0.5)])),
        ("gfr", mech(vec![t("gfr", 1, 0.6), t("treatment", 1, -0.3)])),
        ("hemoglobin", mech(vec![t("hemoglobin", 1, 0.7)])),
        (
            "serum potassium high",
            mech(vec![t("serum potassium high", 1, 0.3), t("blood potassium", 1, 0.6)]),
        ),
        (
            "NYHA class",
            mech(vec![t("NYHA class", 1, 0.5), t("systolic blood pressure", 1, 0.3)]),
        ),
        (
            "hyperkalemia",
            mech(vec![t("hyperkalemia", 1, 0.2), t("serum potassium high", 1, 0.7)]),
        ),
        (
            "creatinine doubled",
            mech(vec![t("creatinine doubled", 1, 0.3), t("gfr", 1, -0.5)]),
        ),
        (
            "hyperkalemia hospitalization",
            mech(vec![t("hyperkalemia", 1, 0.6)]),
        ),
        (
            "potassium side effect discontinued",
            mech(vec![t("hyperkalemia", 1, 0.5), t("treatment", 1, 0.4)]),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    let link = |intercept: f64, terms: Vec<LaggedTerm>| OutcomeLink { intercept, terms };
    let outcome_links: BTreeMap<String, OutcomeLink> = [
        (
            "Outcome hfhosp",
            link(-2.6, vec![t("treatment", 1, -0.9), t("Heart Failure History", 1, 0.6), t("NYHA class", 1, 0.5)]),
        ),
        (
            "Outcome abortedca",
            link(-3.6, vec![t("treatment", 1, -0.8), t("Left ventricular ejection fraction", 1, -0.5)]),
        ),
        (
            "Outcome cvd death",
            link(-3.2, vec![t("treatment", 1, -0.9), t("age entry", 1, 0.6)]),
        ),
        (
            "Outcome death",
            link(-3.0, vec![t("treatment", 1, -1.0), t("age entry", 1, 0.7)]),
        ),
        (
            "Outcome anyhosp",
            link(-2.0, vec![t("NYHA class", 1, 0.5), t("hyperkalemia hospitalization", 1, 0.6)]),
        ),
        (
            "Outcome mi",
            link(-3.4, vec![t("treatment", 1, -0.8), t("diabetes", 1, 0.5)]),
        ),
        (
            "Outcome stroke",
            link(-3.6, vec![t("treatment", 1, -0.7), t("systolic blood pressure", 1, 0.5)]),
        ),
        (
            "Outcome primary ep",
            link(
                -4.5,
                vec![
                    t("Outcome cvd death", 1, 2.0),
                    t("Outcome abortedca", 1, 2.0),
                    t("Outcome hfhosp", 1, 2.0),
                ],
            ),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    // Eastern regime: flipped death-type and aborted-cardiac-arrest effects,
    // no heart-failure-hospitalization effect, no potassium side effects.
    let east = vec![
        CoefOverride { variable: "Outcome death".into(), parent: "treatment".into(), lag: 1, coef: 1.0 },
        CoefOverride { variable: "Outcome cvd death".into(), parent: "treatment".into(), lag: 1, coef: 0.9 },
        CoefOverride { variable: "Outcome abortedca".into(), parent: "treatment".into(), lag: 1, coef: 0.8 },
        CoefOverride { variable: "Outcome hfhosp".into(), parent: "treatment".into(), lag: 1, coef: 0.0 },
        CoefOverride { variable: "blood potassium".into(), parent: "treatment".into(), lag: 1, coef: 0.0 },
        CoefOverride { variable: "potassium side effect discontinued".into(), parent: "treatment".into(), lag: 1, coef: 0.0 },
    ];
    let regions: BTreeMap<Region, Vec<CoefOverride>> =
        [(Region::West, Vec::new()), (Region::East, east)].into_iter().collect();

    ScmSpec {
        variables,
        treatment: "treatment".to_string(),
        region_indicator: Some("Americas".to_string()),
        mechanisms,
        outcome_links,
        regions,
        forced_edges: vec![
            ("treatment".to_string(), "potassium side effect discontinued".to_string()),
            ("Outcome cvd death".to_string(), "Outcome primary ep".to_string()),
            ("Outcome abortedca".to_string(), "Outcome primary ep".to_string()),
            ("Outcome hfhosp".to_string(), "Outcome primary ep".to_string()),
        ],
        n_patients: 1000,
        n_periods: 12,
        bin_months: 6.0,
        censor_rate: 0.15,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_spec_is_valid_with_eight_tiers_and_named_outcomes() {
        let spec = builtin_topcat_like();
        spec.validate().unwrap();
        let knowledge = spec.tier_knowledge();
        assert_eq!(knowledge.tiers.len(), 8);
        for name in [
            "Outcome cvd death",
            "Outcome hfhosp",
            "Outcome abortedca",
            "Outcome death",
            "Outcome anyhosp",
            "Outcome mi",
            "Outcome stroke",
        ] {
            assert!(
                spec.variables.iter().any(|v| v.name == name && v.kind == VariableKind::Outcome),
                "missing outcome {name}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic_and_panel_invariants_hold() {
        let mut spec = builtin_topcat_like();
        spec.n_patients = 80;
        let (p1, g1) = generate(&spec, 11).unwrap();
        let (p2, g2) = generate(&spec, 11).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(g1, g2);
        p1.validate().unwrap();
        let (p3, _) = generate(&spec, 12).unwrap();
        assert_ne!(p1, p3);
    }

    #[test]
    fn ground_truth_respects_tier_order() {
        let spec = builtin_topcat_like();
        let knowledge = spec.tier_knowledge();
        let truth = spec.ground_truth();
        for (source, _, target) in truth.edge_keys() {
            assert!(
                knowledge.tier_of(source).unwrap() <= knowledge.tier_of(target).unwrap(),
                "{source} -> {target} violates tiers"
            );
        }
    }

    #[test]
    fn zero_coefficient_spec_has_empty_ground_truth() {
        let variables = vec![
            VariableSpec::new("t", VariableKind::Baseline, 0),
            VariableSpec::new("a", VariableKind::TimeVarying, 1),
            VariableSpec::new("b", VariableKind::TimeVarying, 1),
        ];
        let spec = ScmSpec {
            variables,
            treatment: "t".to_string(),
            region_indicator: None,
            mechanisms: [
                ("a".to_string(), Mechanism { terms: vec![LaggedTerm::new("t", 1, 0.0)], noise_scale: 1.0 }),
                ("b".to_string(), Mechanism { terms: vec![], noise_scale: 1.0 }),
            ]
            .into_iter()
            .collect(),
            outcome_links: BTreeMap::new(),
            regions: BTreeMap::new(),
            forced_edges: Vec::new(),
            n_patients: 50,
            n_periods: 8,
            bin_months: 6.0,
            censor_rate: 0.0,
        };
        let (panel, truth) = generate(&spec, 3).unwrap();
        assert_eq!(truth.n_edges(), 0);
        panel.validate().unwrap();
    }

    #[test]
    fn parentless_outcome_rate_matches_logistic_marginal() {
        let variables = vec![
            VariableSpec::new("t", VariableKind::Baseline, 0),
            VariableSpec::new("Outcome o", VariableKind::Outcome, 1),
        ];
        let intercept = -2.0;
        let spec = ScmSpec {
            variables,
            treatment: "t".to_string(),
            region_indicator: None,
            mechanisms: BTreeMap::new(),
            outcome_links: [(
                "Outcome o".to_string(),
                OutcomeLink { intercept, terms: vec![] },
            )]
            .into_iter()
            .collect(),
            regions: BTreeMap::new(),
            forced_edges: Vec::new(),
            n_patients: 20000,
            n_periods: 6,
            bin_months: 6.0,
            censor_rate: 0.0,
        };
        let (panel, _) = generate(&spec, 5).unwrap();
        let oi = panel.variable_index("Outcome o").unwrap();
        let fired = (0..panel.n_patients())
            .filter(|&i| panel.value(i, 5, oi) == Some(1.0))
            .count();
        let p_period = logistic(intercept);
        let expected = 1.0 - (1.0 - p_period).powi(6);
        let observed = fired as f64 / panel.n_patients() as f64;
        let rel = (observed - expected).abs() / expected;
        assert!(rel < 0.2, "observed {observed:.4} vs expected {expected:.4}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = builtin_topcat_like();
        spec.censor_rate = 1.0;
        assert!(matches!(spec.validate(), Err(SynthError::BadCensorRate(_))));

        let mut spec = builtin_topcat_like();
        spec.regions.get_mut(&Region::East).unwrap().push(CoefOverride {
            variable: "Outcome death".into(),
            parent: "weight".into(),
            lag: 1,
            coef: 0.5,
        });
        assert!(matches!(spec.validate(), Err(SynthError::DanglingOverride { .. })));

        let mut spec = builtin_topcat_like();
        spec.treatment = "gfr".into();
        assert!(matches!(spec.validate(), Err(SynthError::BadTreatment(_))));
    }

    #[test]
    fn terminal_outcome_truncates_series() {
        let mut spec = builtin_topcat_like();
        spec.n_patients = 200;
        // make death almost certain early
        spec.outcome_links.get_mut("Outcome death").unwrap().intercept = 2.0;
        let (panel, _) = generate(&spec, 7).unwrap();
        panel.validate().unwrap();
        let di = panel.variable_index("Outcome death").unwrap();
        let mut saw_truncation = false;
        for i in 0..panel.n_patients() {
            let w = panel.observed_periods()[i];
            if w < panel.periods() && panel.value(i, w - 1, di) == Some(1.0) {
                saw_truncation = true;
                for t in w..panel.periods() {
                    assert_eq!(panel.value(i, t, di), None);
                }
            }
        }
        assert!(saw_truncation);
    }
}
