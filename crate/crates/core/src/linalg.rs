//! Small dense helpers shared by the model, game and radio modules.

use nalgebra::{DMatrix, DVector};

/// Condition numbers above this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `<a, b>_W` for a diagonal weight `W = diag(w)`.
pub fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), z)| x * y * z).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Row-major nested vectors to a dense matrix.
pub fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

pub fn matrix_norm1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse together with the 1-norm condition estimate `|A|_1 |A^-1|_1`.
///
/// Returns `None` when LU fails or the condition estimate exceeds
/// [`SINGULAR_CONDITION`]; the estimate is still reported in that case.
pub fn inverse_with_condition(a: &DMatrix<f64>) -> (Option<DMatrix<f64>>, f64) {
    match a.clone().lu().try_inverse() {
        Some(inv) => {
            let cond = matrix_norm1(a) * matrix_norm1(&inv);
            if cond.is_finite() && cond <= SINGULAR_CONDITION {
                (Some(inv), cond)
            } else {
                (None, cond)
            }
        }
        None => (None, f64::INFINITY),
    }
}

/// `I - Q^T` for a square routing matrix.
pub fn flow_operator(q: &[Vec<f64>]) -> DMatrix<f64> {
    let b = q.len();
    DMatrix::from_fn(b, b, |i, j| if i == j { 1.0 } else { 0.0 } - q[j][i])
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
