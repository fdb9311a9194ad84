//! Patient-period panel construction from longitudinal visit records.
//!
//! Raw observations arrive as a long-format stream of (patient, time, variable,
//! value) rows. This module bins them into a dense patients × periods × variables
//! panel: the latest observation per bin wins, baselines are held constant,
//! outcomes become cumulative 0/1 indicators, and censoring is represented by
//! truncating each patient's observed window. The panel also reconstructs
//! time-to-event records for survival modeling.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("record set is empty")]
    EmptyRecords,
    #[error("record references undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("duplicate variable name `{0}` in specs")]
    DuplicateVariable(String),
    #[error("variable name must be non-empty")]
    EmptyVariableName,
    #[error("negative time {time} months for patient `{patient}`")]
    NegativeTime { patient: String, time: f64 },
    #[error("bin_months must be positive, got {0}")]
    InvalidBin(f64),
    #[error("horizon_months {horizon} is not a positive multiple of bin_months {bin}")]
    HorizonNotMultiple { horizon: f64, bin: f64 },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` is not outcome-kind")]
    NotOutcome(String),
    #[error("patient `{0}` has no region label")]
    MissingRegion(String),
    #[error("region {0:?} has zero patients")]
    EmptyRegion(Region),
    #[error("need at least 2 patients, got {0}")]
    TooFewPatients(usize),
    #[error("region variable `{0}` has no value at period 0 for patient `{1}`")]
    RegionValueMissing(String, String),
}

/// Geographic subset label carried by each patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    West,
    East,
}

/// Role of a variable in the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Baseline,
    TimeVarying,
    Outcome,
}

/// One raw observation: a variable measured for a patient at a point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub patient_id: String,
    pub time_months: f64,
    pub variable: String,
    pub value: f64,
}

/// Declared metadata for one panel variable.
///
/// `terminal` marks death-kind outcomes: once such an outcome fires, no later
/// observation can exist for the patient, so the observed window ends there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    pub tier: usize,
    #[serde(default)]
    pub terminal: bool,
}

impl VariableSpec {
    pub fn new(name: &str, kind: VariableKind, tier: usize) -> Self {
        Self {
            name: name.to_string(),
            kind,
            tier,
            terminal: false,
        }
    }

    pub fn terminal(name: &str, tier: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Outcome,
            tier,
            terminal: true,
        }
    }
}

/// A patient row: opaque id plus optional region label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub id: String,
    pub region: Option<Region>,
}

/// Time-to-event observation: duration, event/censoring flag, covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub duration_months: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// Dense patients × periods × variables panel with per-patient observed
/// windows and equal-per-patient row weights (each observed row of patient i
/// weighs 1/p_i, so every patient contributes total weight 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PanelFile", into = "PanelFile")]
pub struct PanelDataset {
    variables: Vec<VariableSpec>,
    patients: Vec<Patient>,
    periods: usize,
    bin_months: f64,
    /// Flattened [patient][period][variable]; None = missing.
    values: Vec<Option<f64>>,
    observed_periods: Vec<usize>,
}

/// Serialized form of a panel: nested value matrix with explicit nulls.
#[derive(Serialize, Deserialize)]
struct PanelFile {
    variables: Vec<VariableSpec>,
    patients: Vec<Patient>,
    periods: usize,
    bin_months: f64,
    observed_periods: Vec<usize>,
    row_weights: Vec<f64>,
    values: Vec<Vec<Vec<Option<f64>>>>,
}

impl From<PanelDataset> for PanelFile {
    fn from(p: PanelDataset) -> Self {
        let values = (0..p.patients.len())
            .map(|i| {
                (0..p.periods)
                    .map(|t| (0..p.variables.len()).map(|v| p.value(i, t, v)).collect())
                    .collect()
            })
            .collect();
        PanelFile {
            row_weights: (0..p.patients.len()).map(|i| p.row_weight(i)).collect(),
            variables: p.variables,
            patients: p.patients,
            periods: p.periods,
            bin_months: p.bin_months,
            observed_periods: p.observed_periods,
            values,
        }
    }
}

impl TryFrom<PanelFile> for PanelDataset {
    type Error = String;

    fn try_from(f: PanelFile) -> Result<Self, String> {
        let (np, nv) = (f.patients.len(), f.variables.len());
        if f.values.len() != np {
            return Err(format!("value matrix has {} patients, expected {np}", f.values.len()));
        }
        let mut values = Vec::with_capacity(np * f.periods * nv);
        for rows in &f.values {
            if rows.len() != f.periods {
                return Err(format!("patient block has {} periods, expected {}", rows.len(), f.periods));
            }
            for row in rows {
                if row.len() != nv {
                    return Err(format!("period row has {} variables, expected {nv}", row.len()));
                }
                values.extend_from_slice(row);
            }
        }
        if f.observed_periods.len() != np {
            return Err("observed_periods length mismatch".to_string());
        }
        Ok(PanelDataset {
            variables: f.variables,
            patients: f.patients,
            periods: f.periods,
            bin_months: f.bin_months,
            values,
            observed_periods: f.observed_periods,
        })
    }
}

impl PanelDataset {
    pub(crate) fn new_empty(
        variables: Vec<VariableSpec>,
        patients: Vec<Patient>,
        periods: usize,
        bin_months: f64,
    ) -> Self {
        let np = patients.len();
        let n = np * periods * variables.len();
        PanelDataset {
            variables,
            patients,
            periods,
            bin_months,
            values: vec![None; n],
            observed_periods: vec![0; np],
        }
    }

    /// Assemble a panel from explicit parts (nested values indexed
    /// [patient][period][variable]); used by generators and tests.
    pub fn from_parts(
        variables: Vec<VariableSpec>,
        patients: Vec<Patient>,
        periods: usize,
        bin_months: f64,
        values: Vec<Vec<Vec<Option<f64>>>>,
        observed_periods: Vec<usize>,
    ) -> Result<Self, String> {
        PanelDataset::try_from(PanelFile {
            variables,
            patients,
            periods,
            bin_months,
            row_weights: observed_periods.iter().map(|&p| 1.0 / p as f64).collect(),
            observed_periods,
            values,
        })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn patients(&self) -> &[Patient] {
        &self.patients
    }

    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn bin_months(&self) -> f64 {
        self.bin_months
    }

    pub fn observed_periods(&self) -> &[usize] {
        &self.observed_periods
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable_spec(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    #[inline]
    fn idx(&self, patient: usize, period: usize, var: usize) -> usize {
        (patient * self.periods + period) * self.variables.len() + var
    }

    #[inline]
    pub fn value(&self, patient: usize, period: usize, var: usize) -> Option<f64> {
        self.values[self.idx(patient, period, var)]
    }

    pub(crate) fn set_value(&mut self, patient: usize, period: usize, var: usize, v: Option<f64>) {
        let i = self.idx(patient, period, var);
        self.values[i] = v;
    }

    /// Re-censor a patient at `window` periods, clearing every later cell.
    pub fn truncate_window(&mut self, patient: usize, window: usize) {
        let window = window.clamp(1, self.periods);
        self.observed_periods[patient] = window;
        for t in window..self.periods {
            for v in 0..self.variables.len() {
                self.set_value(patient, t, v, None);
            }
        }
    }

    /// Weight of each observed row of a patient: 1 / observed_periods.
    pub fn row_weight(&self, patient: usize) -> f64 {
        1.0 / self.observed_periods[patient] as f64
    }

    /// Assign regions from a baseline indicator variable (> 0.5 ⇒ West).
    pub fn assign_regions_from(&mut self, region_variable: &str) -> Result<(), PanelError> {
        let vi = self
            .variable_index(region_variable)
            .ok_or_else(|| PanelError::UnknownVariable(region_variable.to_string()))?;
        for i in 0..self.patients.len() {
            let v = self.value(i, 0, vi).ok_or_else(|| {
                PanelError::RegionValueMissing(region_variable.to_string(), self.patients[i].id.clone())
            })?;
            self.patients[i].region = Some(if v > 0.5 { Region::West } else { Region::East });
        }
        Ok(())
    }

    /// Label one patient's region directly.
    pub fn set_region(&mut self, patient: usize, region: Option<Region>) {
        self.patients[patient].region = region;
    }

    /// New panel containing only the given patients (shared variable specs).
    pub fn subset(&self, indices: &[usize]) -> PanelDataset {
        let mut out = PanelDataset::new_empty(
            self.variables.clone(),
            indices.iter().map(|&i| self.patients[i].clone()).collect(),
            self.periods,
            self.bin_months,
        );
        for (new_i, &old_i) in indices.iter().enumerate() {
            out.observed_periods[new_i] = self.observed_periods[old_i];
            for t in 0..self.periods {
                for v in 0..self.variables.len() {
                    out.set_value(new_i, t, v, self.value(old_i, t, v));
                }
            }
        }
        out
    }

    /// Check every structural panel invariant; returns the first violation found.
    pub fn validate(&self) -> Result<(), String> {
        let mut names = std::collections::BTreeSet::new();
        for spec in &self.variables {
            if !names.insert(&spec.name) {
                return Err(format!("duplicate variable `{}`", spec.name));
            }
        }
        for (i, patient) in self.patients.iter().enumerate() {
            let p = self.observed_periods[i];
            if p == 0 || p > self.periods {
                return Err(format!("patient `{}` has observed_periods {p}", patient.id));
            }
            let weight_sum = p as f64 * self.row_weight(i);
            if (weight_sum - 1.0).abs() > 1e-12 {
                return Err(format!("patient `{}` row weights sum to {weight_sum}", patient.id));
            }
            for (v, spec) in self.variables.iter().enumerate() {
                let mut prev_outcome = 0.0;
                let mut baseline_value: Option<f64> = None;
                for t in 0..self.periods {
                    let cell = self.value(i, t, v);
                    if t >= p {
                        if cell.is_some() {
                            return Err(format!(
                                "patient `{}` `{}` observed at period {t} past its window {p}",
                                patient.id, spec.name
                            ));
                        }
                        continue;
                    }
                    let Some(x) = cell else { continue };
                    match spec.kind {
                        VariableKind::Outcome => {
                            if x != 0.0 && x != 1.0 {
                                return Err(format!("outcome `{}` has non-binary value {x}", spec.name));
                            }
                            if x < prev_outcome {
                                return Err(format!(
                                    "outcome `{}` decreases for patient `{}`",
                                    spec.name, patient.id
                                ));
                            }
                            prev_outcome = x;
                        }
                        VariableKind::Baseline => match baseline_value {
                            None => baseline_value = Some(x),
                            Some(b) if b != x => {
                                return Err(format!(
                                    "baseline `{}` varies over time for patient `{}`",
                                    spec.name, patient.id
                                ));
                            }
                            _ => {}
                        },
                        VariableKind::TimeVarying => {}
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_specs(specs: &[VariableSpec]) -> Result<BTreeMap<&str, usize>, PanelError> {
    let mut index = BTreeMap::new();
    for (i, spec) in specs.iter().enumerate() {
        if spec.name.is_empty() {
            return Err(PanelError::EmptyVariableName);
        }
        if index.insert(spec.name.as_str(), i).is_some() {
            return Err(PanelError::DuplicateVariable(spec.name.clone()));
        }
    }
    Ok(index)
}

/// Build the aligned patient-period panel from raw visit records.
///
/// Within each half-open time bin [k·bin, (k+1)·bin) the latest observation of
/// each variable wins (ties broken by input order). Baselines are held constant
/// over the observed window, time-varying gaps are forward-filled from the most
/// recent prior observation, and outcome observations become cumulative 0/1
/// indicators: once an outcome fires its indicator stays 1 through the horizon,
/// so the event extends the patient's observed window to the full horizon
/// unless a terminal outcome ends it earlier.
pub fn build_panel(
    records: &[VisitRecord],
    specs: &[VariableSpec],
    bin_months: f64,
    horizon_months: f64,
) -> Result<PanelDataset, PanelError> {
    if records.is_empty() {
        return Err(PanelError::EmptyRecords);
    }
    if bin_months <= 0.0 {
        return Err(PanelError::InvalidBin(bin_months));
    }
    let ratio = horizon_months / bin_months;
    let periods = ratio.round();
    if horizon_months <= 0.0 || (ratio - periods).abs() > 1e-9 || periods < 1.0 {
        return Err(PanelError::HorizonNotMultiple {
            horizon: horizon_months,
            bin: bin_months,
        });
    }
    let periods = periods as usize;
    let var_index = validate_specs(specs)?;

    let mut patient_index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut patients: Vec<Patient> = Vec::new();
    // (time, value) of the best observation per (patient, period, variable)
    let mut best: BTreeMap<(usize, usize, usize), (f64, f64)> = BTreeMap::new();
    let mut last_visit_period: Vec<usize> = Vec::new();

    for rec in records {
        let &vi = var_index
            .get(rec.variable.as_str())
            .ok_or_else(|| PanelError::UndeclaredVariable(rec.variable.clone()))?;
        if rec.time_months < 0.0 {
            return Err(PanelError::NegativeTime {
                patient: rec.patient_id.clone(),
                time: rec.time_months,
            });
        }
        let pi = *patient_index.entry(rec.patient_id.as_str()).or_insert_with(|| {
            patients.push(Patient {
                id: rec.patient_id.clone(),
                region: None,
            });
            last_visit_period.push(0);
            patients.len() - 1
        });
        let period = (rec.time_months / bin_months).floor() as usize;
        if period >= periods {
            continue; // beyond the horizon
        }
        last_visit_period[pi] = last_visit_period[pi].max(period);
        let entry = best.entry((pi, period, vi)).or_insert((f64::NEG_INFINITY, 0.0));
        if rec.time_months >= entry.0 {
            *entry = (rec.time_months, rec.value);
        }
    }

    let mut panel = PanelDataset {
        variables: specs.to_vec(),
        patients,
        periods,
        bin_months,
        values: Vec::new(),
        observed_periods: Vec::new(),
    };
    let np = panel.patients.len();
    panel.values = vec![None; np * periods * specs.len()];
    panel.observed_periods = vec![0; np];

    for ((pi, period, vi), (_, value)) in &best {
        let i = panel.idx(*pi, *period, *vi);
        panel.values[i] = Some(*value);
    }

    for pi in 0..np {
        // Outcome events fix the cumulative indicator through the horizon;
        // a terminal event additionally ends the observed window.
        let mut window = last_visit_period[pi] + 1;
        let mut terminal_end = periods;
        for (vi, spec) in specs.iter().enumerate() {
            if spec.kind != VariableKind::Outcome {
                continue;
            }
            let mut fired_at: Option<usize> = None;
            for t in 0..periods {
                if let Some(v) = panel.value(pi, t, vi) {
                    if v > 0.5 {
                        fired_at = Some(t);
                        break;
                    }
                }
            }
            if let Some(t) = fired_at {
                window = periods;
                if spec.terminal {
                    terminal_end = terminal_end.min(t + 1);
                }
            }
        }
        let window = window.min(terminal_end);
        panel.observed_periods[pi] = window;

        for (vi, spec) in specs.iter().enumerate() {
            match spec.kind {
                VariableKind::Outcome => {
                    let mut cum = 0.0;
                    for t in 0..periods {
                        if t >= window {
                            panel.set_value(pi, t, vi, None);
                            continue;
                        }
                        if let Some(v) = panel.value(pi, t, vi) {
                            if v > 0.5 {
                                cum = 1.0;
                            }
                        }
                        panel.set_value(pi, t, vi, Some(cum));
                    }
                }
                VariableKind::Baseline => {
                    let first = (0..periods).find_map(|t| panel.value(pi, t, vi));
                    for t in 0..periods {
                        panel.set_value(pi, t, vi, if t < window { first } else { None });
                    }
                }
                VariableKind::TimeVarying => {
                    let mut carry: Option<f64> = None;
                    for t in 0..periods {
                        if t >= window {
                            panel.set_value(pi, t, vi, None);
                            continue;
                        }
                        match panel.value(pi, t, vi) {
                            Some(v) => carry = Some(v),
                            None => panel.set_value(pi, t, vi, carry),
                        }
                    }
                }
            }
        }
    }
    Ok(panel)
}

/// Reconstruct time-to-event records for one outcome.
///
/// Event patients get duration (k+1)·bin where k is the first period with
/// indicator 1; censored patients get bin × observed_periods. Covariates are
/// taken at period 0. Patients with no observed outcome value or a missing
/// period-0 covariate are skipped; the second return value counts them.
pub fn to_survival(
    panel: &PanelDataset,
    outcome: &str,
    covariates: &[String],
) -> Result<(Vec<SurvivalRecord>, usize), PanelError> {
    let oi = panel
        .variable_index(outcome)
        .ok_or_else(|| PanelError::UnknownVariable(outcome.to_string()))?;
    if panel.variables[oi].kind != VariableKind::Outcome {
        return Err(PanelError::NotOutcome(outcome.to_string()));
    }
    let cov_idx: Vec<usize> = covariates
        .iter()
        .map(|c| {
            panel
                .variable_index(c)
                .ok_or_else(|| PanelError::UnknownVariable(c.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut records = Vec::with_capacity(panel.n_patients());
    let mut skipped = 0usize;
    for i in 0..panel.n_patients() {
        let p = panel.observed_periods[i];
        let mut first_event: Option<usize> = None;
        let mut any_observed = false;
        for t in 0..p {
            if let Some(v) = panel.value(i, t, oi) {
                any_observed = true;
                if v > 0.5 {
                    first_event = Some(t);
                    break;
                }
            }
        }
        if !any_observed {
            skipped += 1;
            continue;
        }
        let covs: Option<Vec<f64>> = cov_idx.iter().map(|&vi| panel.value(i, 0, vi)).collect();
        let Some(covs) = covs else {
            skipped += 1;
            continue;
        };
        let (duration, event) = match first_event {
            Some(k) => ((k + 1) as f64 * panel.bin_months, true),
            None => (p as f64 * panel.bin_months, false),
        };
        records.push(SurvivalRecord {
            duration_months: duration,
            event,
            covariates: covs,
        });
    }
    Ok((records, skipped))
}

/// Partition the panel into its (West, East) regional subsets.
pub fn split_by_region(panel: &PanelDataset) -> Result<(PanelDataset, PanelDataset), PanelError> {
    let mut west = Vec::new();
    let mut east = Vec::new();
    for (i, patient) in panel.patients().iter().enumerate() {
        match patient.region {
            Some(Region::West) => west.push(i),
            Some(Region::East) => east.push(i),
            None => return Err(PanelError::MissingRegion(patient.id.clone())),
        }
    }
    if west.is_empty() {
        return Err(PanelError::EmptyRegion(Region::West));
    }
    if east.is_empty() {
        return Err(PanelError::EmptyRegion(Region::East));
    }
    Ok((panel.subset(&west), panel.subset(&east)))
}

/// Deterministically shuffle patients and split into halves differing in size
/// by at most one (the first half is the smaller when the count is odd).
pub fn random_partition(
    panel: &PanelDataset,
    seed: u64,
) -> Result<(PanelDataset, PanelDataset), PanelError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let n = panel.n_patients();
    if n < 2 {
        return Err(PanelError::TooFewPatients(n));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let half = n / 2;
    Ok((panel.subset(&indices[..half]), panel.subset(&indices[half..])))
}

/// Read long-format visit records (`patient_id,time_months,variable,value`).
pub fn read_records_csv<R: std::io::Read>(reader: R) -> Result<Vec<VisitRecord>, csv::Error> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().collect()
}

/// Write visit records in the same long format.
pub fn write_records_csv<W: std::io::Write>(
    writer: W,
    records: &[VisitRecord],
) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for rec in records {
        wtr.serialize(rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Export a panel back to long format (one row per observed cell, stamped at
/// the start of its bin).
pub fn panel_to_records(panel: &PanelDataset) -> Vec<VisitRecord> {
    let mut out = Vec::new();
    for (i, patient) in panel.patients().iter().enumerate() {
        for t in 0..panel.periods() {
            for (v, spec) in panel.variables().iter().enumerate() {
                if let Some(x) = panel.value(i, t, v) {
                    out.push(VisitRecord {
                        patient_id: patient.id.clone(),
                        time_months: t as f64 * panel.bin_months(),
                        variable: spec.name.clone(),
                        value: x,
                    });
                }
            }
        }
    }
    out
}
