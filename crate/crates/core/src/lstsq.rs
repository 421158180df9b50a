//! Dense linear least squares via Householder QR on column-equilibrated
//! design matrices.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative threshold on `|R_ii|` below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LstsqError {
    #[error("need at least {needed} samples for {needed} terms, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("rank-deficient design matrix: terms {terms:?} are not identifiable from the samples")]
    RankDeficient { terms: Vec<String> },
    #[error("non-finite value in design matrix or observations")]
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LstsqFit {
    pub coefficients: Vec<f64>,
    /// Root-mean-square residual in observation units.
    pub rms_residual: f64,
    /// Ratio of largest to smallest `|R_ii|` after column scaling.
    pub condition_estimate: f64,
}

/// Minimizes `sum_i (w_i (A_i x - y_i))^2`. The reported residual is unweighted.
pub fn solve_weighted(rows: &[Vec<f64>], y: &[f64], weights: &[f64], terms: &[&str]) -> Result<LstsqFit, LstsqError> {
    assert_eq!(rows.len(), weights.len());
    let wrows: Vec<Vec<f64>> = rows
        .iter()
        .zip(weights)
        .map(|(r, w)| r.iter().map(|v| v * w).collect())
        .collect();
    let wy: Vec<f64> = y.iter().zip(weights).map(|(v, w)| v * w).collect();
    let mut fit = solve(&wrows, &wy, terms)?;
    let sq: f64 = rows
        .iter()
        .zip(y)
        .map(|(r, v)| {
            let pred: f64 = r.iter().zip(&fit.coefficients).map(|(a, c)| a * c).sum();
            (pred - v).powi(2)
        })
        .sum();
    fit.rms_residual = (sq / rows.len() as f64).sqrt();
    Ok(fit)
}

/// Minimizes `||A x - y||_2` where `rows` holds the rows of `A`.
/// `terms` names the columns for diagnostics.
pub fn solve(rows: &[Vec<f64>], y: &[f64], terms: &[&str]) -> Result<LstsqFit, LstsqError> {
    let cols = terms.len();
    if rows.len() < cols {
        return Err(LstsqError::TooFewSamples {
            needed: cols,
            got: rows.len(),
        });
    }
    if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(LstsqError::NonFinite);
    }
    let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);

    let scale: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let dependent = dependent_columns(&a, &scale);
    if !dependent.is_empty() {
        return Err(LstsqError::RankDeficient {
            terms: dependent.into_iter().map(|j| terms[j].to_string()).collect(),
        });
    }
    let mut scaled = a.clone();
    for (j, s) in scale.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }

    let qr = scaled.clone().qr();
    let r = qr.r();
    let q = qr.q();
    let solve_step = |rhs: &DVector<f64>| -> DVector<f64> {
        let qtb = q.transpose() * rhs;
        r.solve_upper_triangular(&qtb).expect("full-rank R is invertible")
    };
    let mut x = solve_step(&b);
    // one round of refinement against the residual
    let residual = &b - &scaled * &x;
    x += solve_step(&residual);

    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);

    let coefficients: Vec<f64> = x.iter().zip(&scale).map(|(v, s)| v / s).collect();
    let fitted = &a * DVector::from_column_slice(&coefficients);
    let rms_residual = ((&b - fitted).norm_squared() / rows.len() as f64).sqrt();
    Ok(LstsqFit {
        coefficients,
        rms_residual,
        condition_estimate: max / min,
    })
}

/// Columns that add no rank when appended left to right.
fn dependent_columns(a: &DMatrix<f64>, scale: &[f64]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..a.ncols() {
        if scale[j] == 0.0 {
            dependent.push(j);
            continue;
        }
        let mut trial = kept.clone();
        trial.push(j);
        let sub = DMatrix::from_fn(a.nrows(), trial.len(), |i, c| a[(i, trial[c])] / scale[trial[c]]);
        if sub.nrows() < sub.ncols() {
            dependent.push(j);
            continue;
        }
        let r = sub.qr().r();
        let diag = r.diagonal();
        let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if diag[trial.len() - 1].abs() <= RANK_TOL * max {
            dependent.push(j);
        } else {
            kept = trial;
        }
    }
    dependent
}
