//! Three-factor yield-curve extraction with a fixed per-month decay.
//!
//! For each date the curve is regressed on the standard level/slope/curvature
//! loadings
//!
//! ```text
//! L1(τ) = 1
//! L2(τ) = (1 − e^{−λτ}) / (λτ)
//! L3(τ) = L2(τ) − e^{−λτ}
//! ```
//!
//! by ordinary least squares; the loading matrix is shared across dates so
//! the 3×3 normal equations are factored once. This is ingestion plumbing
//! for an external curve model, kept behind one flag so the core pipeline
//! never depends on it.

use hcr::RawSeries;
use ndarray::Array2;

use crate::errors::{CliError, Result};
use crate::ingest::YieldTable;

/// Conventional per-month decay used when the flag is omitted.
pub const DEFAULT_LAMBDA: f64 = 0.0609;

/// `(1 − e^{−x})/x`, stable for small arguments.
fn slope_loading(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        // Series: 1 − x/2 + x²/6.
        1.0 - 0.5 * x + x * x / 6.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Loading row `(L1, L2, L3)` for one maturity.
pub fn loadings(maturity_months: f64, lambda: f64) -> [f64; 3] {
    let x = lambda * maturity_months;
    let l2 = slope_loading(x);
    [1.0, l2, l2 - (-x).exp()]
}

/// Solve the symmetric 3×3 system `g·b = rhs` by Gaussian elimination with
/// partial pivoting; `None` when the matrix is numerically singular.
fn solve3(g: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let mut a = [[0.0; 4]; 3];
    for r in 0..3 {
        a[r][..3].copy_from_slice(&g[r]);
        a[r][3] = rhs[r];
    }
    let scale = g
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1.0);
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot_row][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        for row in col + 1..3 {
            let factor = a[row][col] / a[col][col];
            let pivot = a[col];
            for (cell, p) in a[row][col..].iter_mut().zip(&pivot[col..]) {
                *cell -= factor * p;
            }
        }
    }
    let mut b = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = a[row][3];
        for k in row + 1..3 {
            acc -= a[row][k] * b[k];
        }
        b[row] = acc / a[row][row];
    }
    Some(b)
}

/// Per-date OLS fit of the three loadings; returns the factor series with
/// variables `b1`, `b2`, `b3`.
pub fn fit_factors(table: &YieldTable, lambda: f64) -> Result<RawSeries> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(CliError::Usage(format!(
            "decay parameter must be positive and finite, got {lambda}"
        )));
    }
    let rows: Vec<[f64; 3]> = table
        .maturities
        .iter()
        .map(|&tau| loadings(tau, lambda))
        .collect();

    // Normal equations: G = AᵀA and per-date right-hand side Aᵀy.
    let mut g = [[0.0; 3]; 3];
    for row in &rows {
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += row[i] * row[j];
            }
        }
    }

    let n_dates = table.yields.nrows();
    let mut factors = Array2::zeros((n_dates, 3));
    for t in 0..n_dates {
        let mut rhs = [0.0; 3];
        for (k, row) in rows.iter().enumerate() {
            let y = table.yields[[t, k]];
            for i in 0..3 {
                rhs[i] += row[i] * y;
            }
        }
        let beta = solve3(g, rhs).ok_or_else(|| {
            CliError::Numeric(
                "factor loading matrix is rank deficient; maturities are degenerate \
                 for this decay parameter"
                    .into(),
            )
        })?;
        for i in 0..3 {
            factors[[t, i]] = beta[i];
        }
    }
    RawSeries::with_times(
        vec!["b1".into(), "b2".into(), "b3".into()],
        table.dates.clone(),
        factors,
    )
    .map_err(CliError::from)
}
