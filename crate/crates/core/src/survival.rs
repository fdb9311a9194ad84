//! Weibull accelerated-failure-time and Cox proportional-hazards models with
//! right censoring, plus BIC comparison of feature sets.
//!
//! The AFT model is log T = μ + αᵀx + σW with W standard minimum extreme
//! value. With z = (log t − μ − αᵀx)/σ the right-censored objective is
//!
//! ```text
//! loglik = Σ_events w·(z − log σ) + Σ_all w·(−exp(z))
//! ```
//!
//! maximized over (μ, α, log σ) by damped Newton with backtracking. The dual
//! proportional-hazards parametrization is γ = 1/σ, λ = exp(−μ/σ),
//! β = −α/σ, giving h(t|x) = γλt^{γ−1}·exp(βᵀx).

use crate::panel::{to_survival, PanelDataset, PanelError, SurvivalRecord};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurvivalError {
    #[error("no events among {0} records")]
    NoEvents(usize),
    #[error("all durations must be positive; record {index} has {duration}")]
    NonPositiveDuration { index: usize, duration: f64 },
    #[error("covariate vector length mismatch at record {index}: {got} vs {want}")]
    CovariateLength { index: usize, got: usize, want: usize },
    #[error("design matrix is rank deficient; collinear columns: {0:?}")]
    RankDeficient(Vec<usize>),
    #[error("weights must be positive and match the record count")]
    InvalidWeights,
    #[error("optimizer did not converge after {iterations} iterations (grad norm {grad_norm:.3e})")]
    NotConverged { iterations: usize, grad_norm: f64 },
    #[error("monotone partial likelihood (complete separation) detected")]
    Separation,
    #[error("information matrix is singular at the optimum")]
    SingularInformation,
    #[error("hazard requires t > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("feature list is empty")]
    EmptyFeatures,
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Fitted Weibull AFT model.
///
/// `coef_se` and `p_values` align with `alpha` (Wald tests of the covariate
/// effects); `k = alpha.len() + 2` counts μ and σ as estimated parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftFit {
    pub mu: f64,
    pub alpha: Vec<f64>,
    pub sigma: f64,
    pub loglik: f64,
    pub n: usize,
    pub k: usize,
    pub coef_se: Vec<f64>,
    pub p_values: Vec<f64>,
    pub iterations: usize,
}

/// Proportional-hazards form of a Weibull AFT fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhParams {
    pub gamma: f64,
    pub lambda: f64,
    pub beta: Vec<f64>,
}

/// Fitted Cox proportional-hazards model (Breslow ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub log_hr: Vec<f64>,
    pub se: Vec<f64>,
    pub p_values: Vec<f64>,
    pub partial_loglik: f64,
    pub n: usize,
    pub n_events: usize,
    pub iterations: usize,
}

const GRAD_TOL: f64 = 1e-8;
/// Line searches stall on float rounding once the objective is flat to
/// machine precision; a gradient already below this is treated as converged.
const STALL_TOL: f64 = 1e-5;
const MAX_ITER: usize = 200;

struct NewtonResult {
    theta: Vec<f64>,
    value: f64,
    hess: Vec<Vec<f64>>,
    iterations: usize,
}

/// Damped Newton ascent with backtracking line search.
fn maximize<F>(eval: F, theta0: Vec<f64>, guard: f64) -> Result<NewtonResult, SurvivalError>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>),
{
    let mut theta = theta0;
    let (mut value, mut grad, mut hess) = eval(&theta);
    let mut iterations = 0;
    loop {
        let grad_norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if grad_norm < GRAD_TOL {
            break;
        }
        if iterations >= MAX_ITER {
            if grad_norm < STALL_TOL {
                break;
            }
            return Err(SurvivalError::NotConverged {
                iterations,
                grad_norm,
            });
        }
        iterations += 1;
        let neg_h: Vec<Vec<f64>> = hess
            .iter()
            .map(|row| row.iter().map(|v| -v).collect())
            .collect();
        let dir = newton_direction(&neg_h, &grad).ok_or(SurvivalError::SingularInformation)?;
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (tv, tg, th) = eval(&trial);
            if tv.is_finite() && tv >= value + 1e-4 * step * slope {
                theta = trial;
                value = tv;
                grad = tg;
                hess = th;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if grad_norm < STALL_TOL {
                break;
            }
            return Err(SurvivalError::NotConverged {
                iterations,
                grad_norm,
            });
        }
        if theta.iter().any(|t| t.abs() > guard) {
            return Err(SurvivalError::Separation);
        }
    }
    Ok(NewtonResult {
        theta,
        value,
        hess,
        iterations,
    })
}

fn validate_records(
    records: &[SurvivalRecord],
    weights: Option<&[f64]>,
) -> Result<Vec<f64>, SurvivalError> {
    let n = records.len();
    let n_events = records.iter().filter(|r| r.event).count();
    if n_events == 0 {
        return Err(SurvivalError::NoEvents(n));
    }
    let n_cov = records[0].covariates.len();
    for (index, rec) in records.iter().enumerate() {
        if rec.duration_months <= 0.0 {
            return Err(SurvivalError::NonPositiveDuration {
                index,
                duration: rec.duration_months,
            });
        }
        if rec.covariates.len() != n_cov {
            return Err(SurvivalError::CovariateLength {
                index,
                got: rec.covariates.len(),
                want: n_cov,
            });
        }
    }
    match weights {
        Some(w) => {
            if w.len() != n || w.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                Err(SurvivalError::InvalidWeights)
            } else {
                Ok(w.to_vec())
            }
        }
        None => Ok(vec![1.0; n]),
    }
}

/// Indices of columns that are linear combinations of earlier ones (the design
/// includes an intercept when `with_intercept`).
fn collinear_columns(rows: &[Vec<f64>], n_cols: usize, with_intercept: bool) -> Vec<usize> {
    let n = rows.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut push = |col: Vec<f64>| -> bool {
        let orig = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv <= 1e-10 * orig.max(1.0) {
            return false;
        }
        for vi in v.iter_mut() {
            *vi /= nv;
        }
        basis.push(v);
        true
    };
    let mut dropped = Vec::new();
    if with_intercept {
        push(vec![1.0; n]);
    }
    for j in 0..n_cols {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        if !push(col) {
            dropped.push(j);
        }
    }
    dropped
}

/// Cholesky factorization of a symmetric positive-definite matrix.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    x
}

/// Solve (−H + ridge·I) d = g, escalating the ridge until SPD.
fn newton_direction(neg_hessian: &[Vec<f64>], grad: &[f64]) -> Option<Vec<f64>> {
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut a = neg_hessian.to_vec();
        if ridge > 0.0 {
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += ridge;
            }
        }
        if let Some(l) = cholesky(&a) {
            return Some(chol_solve(&l, grad));
        }
        ridge = if ridge == 0.0 { 1e-8 } else { ridge * 100.0 };
    }
    None
}

fn invert_spd(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let l = cholesky(a)?;
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = chol_solve(&l, &e);
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

fn wald_p(estimate: f64, se: f64) -> f64 {
    if se <= 0.0 || !se.is_finite() {
        return 1.0;
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    (2.0 * (1.0 - normal.cdf((estimate / se).abs()))).clamp(0.0, 1.0)
}

struct AftObjective<'a> {
    log_t: Vec<f64>,
    events: Vec<bool>,
    design: Vec<&'a [f64]>, // covariate rows
    weights: &'a [f64],
}

impl AftObjective<'_> {
    /// Value, gradient, and Hessian at θ = [μ, α…, log σ].
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let m = theta.len() - 1; // design coords: intercept + covariates - 1
        let s = theta[m];
        let sigma = s.exp();
        let dim = theta.len();
        let mut value = 0.0;
        let mut grad = vec![0.0; dim];
        let mut hess = vec![vec![0.0; dim]; dim];
        let mut xrow = vec![0.0; m];
        for i in 0..self.log_t.len() {
            xrow[0] = 1.0;
            xrow[1..m].copy_from_slice(&self.design[i][..m - 1]);
            let eta: f64 = theta[..m].iter().zip(&xrow).map(|(t, x)| t * x).sum();
            let z = (self.log_t[i] - eta) / sigma;
            let u = z.exp();
            let w = self.weights[i];
            let delta = if self.events[i] { 1.0 } else { 0.0 };
            value += w * (delta * (z - s) - u);
            let common = w * (u - delta) / sigma;
            for j in 0..m {
                grad[j] += common * xrow[j];
            }
            grad[m] += w * (z * (u - delta) - delta);
            let huu = w * u / (sigma * sigma);
            for j in 0..m {
                for k in 0..=j {
                    hess[j][k] -= huu * xrow[j] * xrow[k];
                }
            }
            let hs = w * ((u - delta) + u * z) / sigma;
            for j in 0..m {
                hess[m][j] -= hs * xrow[j];
            }
            hess[m][m] -= w * (z * (u - delta) + z * z * u);
        }
        for j in 0..dim {
            for k in 0..j {
                hess[k][j] = hess[j][k];
            }
        }
        (value, grad, hess)
    }
}

/// Maximize the right-censored Weibull AFT log-likelihood.
pub fn fit_weibull_aft(
    records: &[SurvivalRecord],
    weights: Option<&[f64]>,
) -> Result<AftFit, SurvivalError> {
    let w = validate_records(records, weights)?;
    let n = records.len();
    let m_cov = records[0].covariates.len();
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.covariates.clone()).collect();
    let collinear = collinear_columns(&rows, m_cov, true);
    if !collinear.is_empty() {
        return Err(SurvivalError::RankDeficient(collinear));
    }

    let obj = AftObjective {
        log_t: records.iter().map(|r| r.duration_months.ln()).collect(),
        events: records.iter().map(|r| r.event).collect(),
        design: records.iter().map(|r| r.covariates.as_slice()).collect(),
        weights: &w,
    };

    // init: μ at the mean log event time, σ at its spread
    let event_logs: Vec<f64> = records
        .iter()
        .filter(|r| r.event)
        .map(|r| r.duration_months.ln())
        .collect();
    let mu0 = event_logs.iter().sum::<f64>() / event_logs.len() as f64;
    let var0 = event_logs.iter().map(|v| (v - mu0) * (v - mu0)).sum::<f64>()
        / event_logs.len() as f64;
    let sigma0 = var0.sqrt().max(0.1);
    let mut theta = vec![0.0; m_cov + 2];
    theta[0] = mu0;
    theta[m_cov + 1] = sigma0.ln();

    let fit = maximize(|t| obj.eval(t), theta, f64::INFINITY)?;

    let neg_h: Vec<Vec<f64>> = fit
        .hess
        .iter()
        .map(|row| row.iter().map(|v| -v).collect())
        .collect();
    let info_inv = invert_spd(&neg_h).ok_or(SurvivalError::SingularInformation)?;
    let alpha: Vec<f64> = fit.theta[1..=m_cov].to_vec();
    let coef_se: Vec<f64> = (1..=m_cov).map(|j| info_inv[j][j].sqrt()).collect();
    let p_values: Vec<f64> = alpha
        .iter()
        .zip(&coef_se)
        .map(|(&a, &se)| wald_p(a, se))
        .collect();
    Ok(AftFit {
        mu: fit.theta[0],
        sigma: fit.theta[m_cov + 1].exp(),
        alpha,
        loglik: fit.value,
        n,
        k: m_cov + 2,
        coef_se,
        p_values,
        iterations: fit.iterations,
    })
}

/// Finite-difference-free conversion to the proportional-hazards form.
pub fn aft_to_ph(fit: &AftFit) -> PhParams {
    PhParams {
        gamma: 1.0 / fit.sigma,
        lambda: (-fit.mu / fit.sigma).exp(),
        beta: fit.alpha.iter().map(|a| -a / fit.sigma).collect(),
    }
}

/// Weibull hazard h(t|x) = γλt^{γ−1}·exp(βᵀx).
pub fn weibull_hazard(t: f64, x: &[f64], p: &PhParams) -> Result<f64, SurvivalError> {
    if t <= 0.0 {
        return Err(SurvivalError::NonPositiveTime(t));
    }
    let bx: f64 = p.beta.iter().zip(x).map(|(b, v)| b * v).sum();
    Ok(p.gamma * p.lambda * t.powf(p.gamma - 1.0) * bx.exp())
}

/// Survival function of the Weibull PH form: exp(−λt^γ·exp(βᵀx)).
pub fn weibull_survival(t: f64, x: &[f64], p: &PhParams) -> f64 {
    let bx: f64 = p.beta.iter().zip(x).map(|(b, v)| b * v).sum();
    (-p.lambda * t.powf(p.gamma) * bx.exp()).exp()
}

/// Bayesian information criterion: −2·loglik + k·ln(n).
pub fn bic(loglik: f64, k: usize, n: usize) -> f64 {
    -2.0 * loglik + k as f64 * (n as f64).ln()
}

/// Fractional change in expected survival time implied by an AFT coefficient.
pub fn time_ratio(coef: f64) -> f64 {
    coef.exp() - 1.0
}

/// Maximize the Breslow-tie-corrected Cox partial likelihood.
pub fn fit_cox(
    records: &[SurvivalRecord],
    weights: Option<&[f64]>,
) -> Result<CoxFit, SurvivalError> {
    let w = validate_records(records, weights)?;
    let n = records.len();
    let m = records[0].covariates.len();
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.covariates.clone()).collect();
    // a column constant across records carries no information in a Cox model
    let centered: Vec<Vec<f64>> = {
        let means: Vec<f64> = (0..m)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        rows.iter()
            .map(|r| r.iter().zip(&means).map(|(v, mu)| v - mu).collect())
            .collect()
    };
    let collinear = collinear_columns(&centered, m, false);
    if !collinear.is_empty() {
        return Err(SurvivalError::RankDeficient(collinear));
    }

    // rows sorted by descending duration so risk sets accumulate in one sweep
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        records[b]
            .duration_months
            .partial_cmp(&records[a].duration_months)
            .unwrap()
    });

    let eval = |beta: &[f64]| -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; m];
        let mut hess = vec![vec![0.0; m]; m];
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; m];
        let mut s2 = vec![vec![0.0; m]; m];
        let mut i = 0;
        while i < n {
            let t = records[order[i]].duration_months;
            let mut j = i;
            while j < n && records[order[j]].duration_months == t {
                let idx = order[j];
                let eta: f64 = beta.iter().zip(&records[idx].covariates).map(|(b, x)| b * x).sum();
                let we = w[idx] * eta.exp();
                s0 += we;
                for a in 0..m {
                    s1[a] += we * records[idx].covariates[a];
                    for b in 0..=a {
                        s2[a][b] += we * records[idx].covariates[a] * records[idx].covariates[b];
                    }
                }
                j += 1;
            }
            for &idx in &order[i..j] {
                if !records[idx].event {
                    continue;
                }
                let wi = w[idx];
                let eta: f64 = beta.iter().zip(&records[idx].covariates).map(|(b, x)| b * x).sum();
                value += wi * (eta - s0.ln());
                for a in 0..m {
                    grad[a] += wi * (records[idx].covariates[a] - s1[a] / s0);
                    for b in 0..=a {
                        hess[a][b] -= wi * (s2[a][b] / s0 - (s1[a] / s0) * (s1[b] / s0));
                    }
                }
            }
            i = j;
        }
        for a in 0..m {
            for b in 0..a {
                hess[b][a] = hess[a][b];
            }
        }
        (value, grad, hess)
    };

    let fit = maximize(eval, vec![0.0; m], 30.0)?;
    // a huge fitted log-hazard-ratio means the likelihood is monotone in
    // that coefficient (separation), even if the gradient leveled off
    if fit.theta.iter().any(|b| b.abs() > 10.0) {
        return Err(SurvivalError::Separation);
    }

    let neg_h: Vec<Vec<f64>> = fit
        .hess
        .iter()
        .map(|row| row.iter().map(|v| -v).collect())
        .collect();
    let info_inv = invert_spd(&neg_h).ok_or(SurvivalError::SingularInformation)?;
    let se: Vec<f64> = (0..m).map(|j| info_inv[j][j].sqrt()).collect();
    let p_values: Vec<f64> = fit
        .theta
        .iter()
        .zip(&se)
        .map(|(&b, &s)| wald_p(b, s))
        .collect();
    Ok(CoxFit {
        log_hr: fit.theta,
        p_values,
        se,
        partial_loglik: fit.value,
        n,
        n_events: records.iter().filter(|r| r.event).count(),
        iterations: fit.iterations,
    })
}

/// One outcome's row in a feature-set comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub outcome: String,
    pub coef_mb: f64,
    pub p_mb: f64,
    pub bic_mb: f64,
    pub coef_orig: f64,
    pub p_orig: f64,
    pub bic_orig: f64,
    pub n: usize,
}

/// AFT fits of every outcome under two feature sets, with total BIC per set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetComparison {
    pub rows: Vec<ComparisonRow>,
    pub total_bic_mb: f64,
    pub total_bic_orig: f64,
}

/// Fit a Weibull AFT per outcome under each feature set and report the
/// treatment coefficient, its p-value, and the model BIC, Table-style.
/// The treatment is prepended to a feature list when absent.
pub fn compare_feature_sets(
    panel: &PanelDataset,
    outcomes: &[String],
    treatment: &str,
    mb_features: &[String],
    orig_features: &[String],
) -> Result<FeatureSetComparison, SurvivalError> {
    if mb_features.is_empty() || orig_features.is_empty() {
        return Err(SurvivalError::EmptyFeatures);
    }
    let with_treatment = |features: &[String]| -> (Vec<String>, usize) {
        match features.iter().position(|f| f == treatment) {
            Some(pos) => (features.to_vec(), pos),
            None => {
                let mut fs = vec![treatment.to_string()];
                fs.extend(features.iter().cloned());
                (fs, 0)
            }
        }
    };
    let (mb, mb_pos) = with_treatment(mb_features);
    let (orig, orig_pos) = with_treatment(orig_features);

    let mut rows = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        // exclude the outcome itself if a blanket included it
        let clean = |fs: &[String]| -> Vec<String> {
            fs.iter().filter(|f| *f != outcome).cloned().collect()
        };
        let fit = |features: &[String], pos: usize| -> Result<(f64, f64, f64, usize), SurvivalError> {
            let (records, _) = to_survival(panel, outcome, features)?;
            let fit = fit_weibull_aft(&records, None)?;
            Ok((
                fit.alpha[pos],
                fit.p_values[pos],
                bic(fit.loglik, fit.k, fit.n),
                fit.n,
            ))
        };
        let (coef_mb, p_mb, bic_mb, n) = fit(&clean(&mb), mb_pos)?;
        let (coef_orig, p_orig, bic_orig, _) = fit(&clean(&orig), orig_pos)?;
        rows.push(ComparisonRow {
            outcome: outcome.clone(),
            coef_mb,
            p_mb,
            bic_mb,
            coef_orig,
            p_orig,
            bic_orig,
            n,
        });
    }
    Ok(FeatureSetComparison {
        total_bic_mb: rows.iter().map(|r| r.bic_mb).sum(),
        total_bic_orig: rows.iter().map(|r| r.bic_orig).sum(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Sample from log T = mu + alpha·x + sigma·W with W ~ Gumbel(min) and an
    /// aligned censoring time yielding ~`censor_frac` censored records.
    fn simulate_aft(
        mu: f64,
        alpha: &[f64],
        sigma: f64,
        n: usize,
        censor_frac: f64,
        rng: &mut ChaCha8Rng,
    ) -> Vec<SurvivalRecord> {
        let gumbel = |rng: &mut ChaCha8Rng| -> f64 {
            let u: f64 = rng.random::<f64>().max(1e-300);
            (-u.ln()).ln()
        };
        let shift = if censor_frac > 0.0 {
            sigma * ((1.0 - censor_frac) / censor_frac).ln()
        } else {
            f64::INFINITY
        };
        (0..n)
            .map(|_| {
                let x: Vec<f64> = alpha.iter().map(|_| rng.random::<f64>().round()).collect();
                let eta: f64 = mu + alpha.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
                let t = (eta + sigma * gumbel(rng)).exp();
                let c = (eta + sigma * gumbel(rng) + shift).exp();
                SurvivalRecord {
                    duration_months: t.min(c),
                    event: t <= c,
                    covariates: x,
                }
            })
            .collect()
    }

    #[test]
    fn aft_recovers_simulated_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let records = simulate_aft(3.0, &[0.28], 0.8, 4000, 0.3, &mut rng);
        let fit = fit_weibull_aft(&records, None).unwrap();
        assert!((fit.mu - 3.0).abs() < 0.1, "mu {}", fit.mu);
        assert!((fit.alpha[0] - 0.28).abs() < 0.1, "alpha {}", fit.alpha[0]);
        assert!((fit.sigma - 0.8).abs() < 0.1, "sigma {}", fit.sigma);
        assert!(fit.p_values[0] < 0.001);
    }

    #[test]
    fn identical_groups_give_zero_coefficient() {
        // same event-time multiset in both covariate groups
        let times = [3.0, 5.0, 8.0, 13.0, 21.0, 34.0];
        let mut records = Vec::new();
        for &t in &times {
            for group in [0.0, 1.0] {
                records.push(SurvivalRecord {
                    duration_months: t,
                    event: true,
                    covariates: vec![group],
                });
            }
        }
        let fit = fit_weibull_aft(&records, None).unwrap();
        assert!(fit.alpha[0].abs() < 1e-6, "alpha {}", fit.alpha[0]);

        let cox = fit_cox(&records, None).unwrap();
        assert!(cox.log_hr[0].abs() < 1e-6, "log hr {}", cox.log_hr[0]);
    }

    #[test]
    fn aft_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let records = simulate_aft(2.0, &[0.5, -0.3], 0.7, 200, 0.25, &mut rng);
        let obj = AftObjective {
            log_t: records.iter().map(|r| r.duration_months.ln()).collect(),
            events: records.iter().map(|r| r.event).collect(),
            design: records.iter().map(|r| r.covariates.as_slice()).collect(),
            weights: &vec![1.0; records.len()],
        };
        for trial in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + trial);
            let theta: Vec<f64> = (0..4)
                .map(|i| {
                    if i == 3 {
                        rng.random::<f64>() * 0.6 - 0.3
                    } else {
                        rng.random::<f64>() * 2.0 - 1.0
                    }
                })
                .collect();
            let (_, grad, _) = obj.eval(&theta);
            for j in 0..theta.len() {
                let h = 1e-6 * (1.0 + theta[j].abs());
                let mut plus = theta.clone();
                plus[j] += h;
                let mut minus = theta.clone();
                minus[j] -= h;
                let fd = (obj.eval(&plus).0 - obj.eval(&minus).0) / (2.0 * h);
                let rel = (grad[j] - fd).abs() / grad[j].abs().max(1.0);
                assert!(rel < 1e-5, "component {j}: analytic {} vs fd {fd}", grad[j]);
            }
        }
    }

    #[test]
    fn ph_transformation_arithmetic() {
        let unit = AftFit {
            mu: 0.0,
            alpha: vec![0.0],
            sigma: 1.0,
            loglik: 0.0,
            n: 1,
            k: 3,
            coef_se: vec![0.0],
            p_values: vec![1.0],
            iterations: 0,
        };
        let p = aft_to_ph(&unit);
        assert_eq!((p.gamma, p.lambda, p.beta[0]), (1.0, 1.0, 0.0));

        let fit = AftFit {
            mu: 2.0,
            alpha: vec![0.28],
            sigma: 0.5,
            ..unit
        };
        let p = aft_to_ph(&fit);
        assert!((p.gamma - 2.0).abs() < 1e-15);
        assert!((p.lambda - (-4.0f64).exp()).abs() < 1e-15);
        assert!((p.beta[0] + 0.56).abs() < 1e-15);
    }

    #[test]
    fn hazard_is_exponential_at_unit_parameters_and_log_additive() {
        let p = PhParams {
            gamma: 1.0,
            lambda: 1.0,
            beta: vec![0.0, 0.0],
        };
        for t in [0.1, 1.0, 7.3] {
            assert!((weibull_hazard(t, &[1.0, 2.0], &p).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(weibull_hazard(0.0, &[0.0, 0.0], &p).is_err());

        let p = PhParams {
            gamma: 1.7,
            lambda: 0.4,
            beta: vec![0.3, -0.8],
        };
        let x = [1.5, 2.0];
        let joint = weibull_hazard(2.0, &x, &p).unwrap().ln();
        let base = weibull_hazard(2.0, &[0.0, 0.0], &p).unwrap().ln();
        let bx: f64 = p.beta.iter().zip(&x).map(|(b, v)| b * v).sum();
        assert!((joint - base - bx).abs() < 1e-12);
    }

    #[test]
    fn hazard_matches_numerical_log_survival_slope() {
        let p = PhParams {
            gamma: 1.4,
            lambda: 0.2,
            beta: vec![0.5],
        };
        let x = [1.0];
        for t in [0.5, 1.0, 2.0, 5.0] {
            let h = 1e-5;
            let fd = -(weibull_survival(t + h, &x, &p).ln() - weibull_survival(t - h, &x, &p).ln())
                / (2.0 * h);
            let analytic = weibull_hazard(t, &x, &p).unwrap();
            assert!((analytic - fd).abs() < 1e-6, "t={t}: {analytic} vs {fd}");
        }
    }

    #[test]
    fn bic_arithmetic() {
        assert_eq!(bic(0.0, 0, 5), 0.0);
        let v = bic(-100.0, 3, 1000);
        assert!((v - (200.0 + 3.0 * 1000f64.ln())).abs() < 1e-12);
        assert!((v - 220.7232658369464).abs() < 1e-10);
    }

    #[test]
    fn time_ratio_values() {
        assert_eq!(time_ratio(0.0), 0.0);
        assert!((time_ratio(0.28) - 0.3231298123).abs() < 1e-9);
        assert!((time_ratio(-0.28) + 0.2442162585).abs() < 1e-9);
    }

    #[test]
    fn bic_prefers_true_model_over_noise_padded() {
        let mut wins = 0;
        let seeds = 50;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
            let records = simulate_aft(2.5, &[0.5], 0.8, 400, 0.2, &mut rng);
            let fit_true = fit_weibull_aft(&records, None).unwrap();
            // pad with 5 pure-noise covariates
            let padded: Vec<SurvivalRecord> = records
                .iter()
                .map(|r| {
                    let mut covs = r.covariates.clone();
                    covs.extend((0..5).map(|_| rng.random::<f64>() - 0.5));
                    SurvivalRecord {
                        covariates: covs,
                        ..r.clone()
                    }
                })
                .collect();
            let fit_padded = fit_weibull_aft(&padded, None).unwrap();
            if bic(fit_true.loglik, fit_true.k, fit_true.n)
                < bic(fit_padded.loglik, fit_padded.k, fit_padded.n)
            {
                wins += 1;
            }
        }
        assert!(wins >= 45, "true model preferred in {wins}/{seeds}");
    }

    #[test]
    fn cox_likelihood_not_below_null_and_errors_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let records = simulate_aft(2.0, &[-0.4], 0.9, 300, 0.2, &mut rng);
        let fit = fit_cox(&records, None).unwrap();
        // brute-force Breslow partial loglik at beta = 0: -sum_events ln|R(t)|
        let null_loglik: f64 = records
            .iter()
            .filter(|r| r.event)
            .map(|r| {
                let at_risk = records
                    .iter()
                    .filter(|o| o.duration_months >= r.duration_months)
                    .count();
                -(at_risk as f64).ln()
            })
            .sum();
        assert!(fit.partial_loglik >= null_loglik);
        // AFT alpha = -0.4 shortens survival, so the hazard ratio exceeds 1
        assert!(fit.log_hr[0] > 0.0);

        let censored_only: Vec<SurvivalRecord> = records
            .iter()
            .map(|r| SurvivalRecord {
                event: false,
                ..r.clone()
            })
            .collect();
        assert!(matches!(
            fit_cox(&censored_only, None),
            Err(SurvivalError::NoEvents(_))
        ));
    }

    #[test]
    fn cox_detects_complete_separation() {
        // events only in group 0, all group-1 records censored later
        let mut records = Vec::new();
        for i in 0..40 {
            records.push(SurvivalRecord {
                duration_months: 1.0 + i as f64 * 0.1,
                event: true,
                covariates: vec![0.0],
            });
            records.push(SurvivalRecord {
                duration_months: 50.0 + i as f64,
                event: i == 0, // one very late event in group 1
                covariates: vec![1.0],
            });
        }
        match fit_cox(&records, None) {
            Err(SurvivalError::Separation) | Err(SurvivalError::NotConverged { .. }) => {}
            Ok(fit) => panic!("expected separation, got {:?}", fit.log_hr),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn rank_deficient_designs_name_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let records: Vec<SurvivalRecord> = (0..50)
            .map(|_| {
                let x: f64 = rng.random();
                SurvivalRecord {
                    duration_months: 1.0 + rng.random::<f64>() * 10.0,
                    event: rng.random::<f64>() < 0.7,
                    covariates: vec![x, 2.0 * x],
                }
            })
            .collect();
        match fit_weibull_aft(&records, None) {
            Err(SurvivalError::RankDeficient(cols)) => assert_eq!(cols, vec![1]),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn comparison_table_is_symmetric_for_identical_feature_sets() {
        let spec = crate::synth::builtin_topcat_like();
        let mut spec = spec;
        spec.n_patients = 300;
        let (panel, _) = crate::synth::generate(&spec, 31).unwrap();
        let outcomes = vec!["Outcome hfhosp".to_string()];
        let features = vec!["treatment".to_string(), "age entry".to_string()];
        let cmp =
            compare_feature_sets(&panel, &outcomes, "treatment", &features, &features).unwrap();
        assert_eq!(cmp.rows.len(), 1);
        let row = &cmp.rows[0];
        assert_eq!(row.coef_mb, row.coef_orig);
        assert_eq!(row.bic_mb, row.bic_orig);
        assert_eq!(cmp.total_bic_mb, cmp.total_bic_orig);
    }
}
