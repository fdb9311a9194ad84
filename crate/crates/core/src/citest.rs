//! Spearman partial-correlation conditional-independence test.
//!
//! Every column is rank-transformed (mid-ranks for ties), the pair under test
//! is residualized on the conditioning set plus an intercept by weighted least
//! squares, and the statistic is the weighted Pearson correlation of the
//! residuals. P-values come from the t law with n_eff − |Z| − 2 degrees of
//! freedom, where n_eff is the row count or, under weights, the Kish effective
//! sample size (Σw)²/Σw².

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CiError {
    #[error("input vector is empty")]
    EmptyInput,
    #[error("column lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("too few rows: effective n {n_eff:.1} with {cond} conditioning columns")]
    TooFewRows { n_eff: f64, cond: usize },
    #[error("weights must be positive and finite")]
    InvalidWeights,
}

/// Outcome of one conditional-independence test.
///
/// `degenerate` marks tests on zero-variance input: the statistic is reported
/// as 0 with p = 1 (treated as independent) so discovery can proceed over
/// sparse binary columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CITestResult {
    /// Partial Spearman correlation in [-1, 1]; the edge's causal score.
    pub statistic: f64,
    pub p_value: f64,
    /// Rows entering the test.
    pub effective_n: usize,
    /// Conditioning columns actually used (collinear columns are dropped).
    pub cond_set_size: usize,
    pub degenerate: bool,
}

/// Mid-rank transform: ranks 1..n with ties assigned the average of the ranks
/// they cover.
pub fn rank_transform(x: &[f64]) -> Result<Vec<f64>, CiError> {
    if x.is_empty() {
        return Err(CiError::EmptyInput);
    }
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average of ranks i+1..=j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

/// Spearman rank correlation with optional row weights.
///
/// Exactly `partial_corr` with an empty conditioning set.
pub fn spearman(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<CITestResult, CiError> {
    partial_corr(x, y, &[], weights)
}

/// Partial Spearman correlation of `x` and `y` given the conditioning columns
/// `z`, with optional row weights.
pub fn partial_corr(
    x: &[f64],
    y: &[f64],
    z: &[&[f64]],
    weights: Option<&[f64]>,
) -> Result<CITestResult, CiError> {
    let n = x.len();
    if n == 0 {
        return Err(CiError::EmptyInput);
    }
    let xr = rank_transform(x)?;
    let yr = rank_transform(y)?;
    let zr: Vec<Vec<f64>> = z.iter().map(|col| rank_transform(col)).collect::<Result<_, _>>()?;
    let zr_refs: Vec<&[f64]> = zr.iter().map(|c| c.as_slice()).collect();
    partial_corr_of_ranks(&xr, &yr, &zr_refs, weights)
}

/// Same test on columns that are already rank-transformed. Discovery ranks a
/// design table once and reuses the ranks across many tests.
pub(crate) fn partial_corr_of_ranks(
    x: &[f64],
    y: &[f64],
    z: &[&[f64]],
    weights: Option<&[f64]>,
) -> Result<CITestResult, CiError> {
    let n = x.len();
    if n == 0 {
        return Err(CiError::EmptyInput);
    }
    if y.len() != n {
        return Err(CiError::LengthMismatch(n, y.len()));
    }
    for col in z {
        if col.len() != n {
            return Err(CiError::LengthMismatch(n, col.len()));
        }
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(CiError::LengthMismatch(n, w.len()));
            }
            if w.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(CiError::InvalidWeights);
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|v| v * v).sum();
    let n_eff = sum_w * sum_w / sum_w2;
    if n_eff < z.len() as f64 + 3.0 || n < 4 {
        return Err(CiError::TooFewRows { n_eff, cond: z.len() });
    }

    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let scale = |col: Vec<f64>| -> Vec<f64> {
        col.iter().zip(&sqrt_w).map(|(v, s)| v * s).collect()
    };

    // Orthonormal basis of the weighted design [1 | Z], dropping collinear
    // columns.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(z.len() + 1);
    let intercept = scale(vec![1.0; n]);
    push_orthonormal(&mut basis, intercept);
    let mut used_cond = 0usize;
    for col in z {
        if push_orthonormal(&mut basis, scale(col.to_vec())) {
            used_cond += 1;
        }
    }

    let rx = residual(&scale(x.to_vec()), &basis);
    let ry = residual(&scale(y.to_vec()), &basis);
    let nx = norm(&rx);
    let ny = norm(&ry);
    // Residual scale of a rank vector is O(n^{3/2}); anything smaller than
    // this tolerance is numerically constant.
    let tol = 1e-9 * (n as f64).powf(1.5);
    if nx <= tol || ny <= tol {
        return Ok(CITestResult {
            statistic: 0.0,
            p_value: 1.0,
            effective_n: n,
            cond_set_size: used_cond,
            degenerate: true,
        });
    }
    let r = (dot(&rx, &ry) / (nx * ny)).clamp(-1.0, 1.0);
    let df = n_eff - used_cond as f64 - 2.0;
    let p_value = if df <= 0.0 {
        return Err(CiError::TooFewRows { n_eff, cond: used_cond });
    } else if 1.0 - r * r <= 1e-15 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(CITestResult {
        statistic: r,
        p_value,
        effective_n: n,
        cond_set_size: used_cond,
        degenerate: false,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Modified Gram-Schmidt step with re-orthogonalization. Returns false when
/// the column is (numerically) in the span of the basis and was dropped.
fn push_orthonormal(basis: &mut Vec<Vec<f64>>, col: Vec<f64>) -> bool {
    let original = norm(&col);
    let mut v = col;
    for _ in 0..2 {
        for q in basis.iter() {
            let c = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    }
    let nv = norm(&v);
    if nv <= 1e-10 * original.max(1.0) {
        return false;
    }
    for vi in v.iter_mut() {
        *vi /= nv;
    }
    basis.push(v);
    true
}

fn residual(col: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut v = col.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    }
    v
}
