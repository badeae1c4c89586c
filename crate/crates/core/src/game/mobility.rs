use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::SliceSpec;

/// Linear map between a slice's admission decisions and its carried load.
///
/// With admission probabilities `a` at the stations that receive arrivals,
/// the carried load is `rho = T a` where
/// `T = diag(mu) (I - Q^T)^{-1} diag(gamma)` restricted to those stations.
/// Stations without exogenous arrivals have nothing to admit and are dropped
/// from the decision space.
///
/// Admission policies are handled through `alpha = x a` with `x = 1 / rho`,
/// so that the relative load is `T alpha` and `<w, alpha> = 1` where `w` is
/// the vector of column sums of `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityOperator {
    support: Vec<usize>,
    transfer: DMatrix<f64>,
    weights: Vec<f64>,
    operator: Option<DMatrix<f64>>,
    residual: f64,
}

impl MobilityOperator {
    pub fn from_slice(slice: &SliceSpec) -> Result<Self> {
        Self::new(&slice.gamma, &slice.routing, &slice.mu)
    }

    pub fn new(gamma: &[f64], routing: &[Vec<f64>], mu: &[f64]) -> Result<Self> {
        let b = gamma.len();
        if routing.len() != b || mu.len() != b || routing.iter().any(|r| r.len() != b) {
            return Err(Error::InvalidModel("mobility inputs have mismatched lengths".into()));
        }
        if gamma.iter().chain(mu).any(|x| !x.is_finite() || *x < 0.0) || mu.iter().any(|m| *m <= 0.0) {
            return Err(Error::InvalidModel("arrival rates must be nonnegative and sojourn times positive".into()));
        }
        let a = linalg::flow_operator(routing);
        let (inv, condition) = linalg::inverse_with_condition(&a);
        let inv = inv.ok_or(Error::SingularRouting { slice: None, condition })?;
        let support: Vec<usize> = (0..b).filter(|&i| gamma[i] > 0.0).collect();
        let full = DMatrix::from_fn(b, b, |i, j| mu[i] * inv[(i, j)] * gamma[j]);
        let transfer = full.select_columns(support.iter());
        let weights = (0..support.len()).map(|k| transfer.column(k).sum()).collect();

        // the admission operator itself exists only when every station has arrivals
        let (operator, residual) = if support.len() == b {
            let m = DMatrix::from_fn(b, b, |i, j| a[(i, j)] / (gamma[i] * mu[j]));
            let residual = (&m * &full - DMatrix::<f64>::identity(b, b)).amax();
            (Some(m), residual)
        } else {
            (None, 0.0)
        };
        Ok(Self { support, transfer, weights, operator, residual })
    }

    pub fn num_stations(&self) -> usize {
        self.transfer.nrows()
    }

    /// Stations with positive arrival rate, i.e. the admission decision space.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    /// `T` restricted to the support (stations x decisions).
    pub fn transfer(&self) -> &DMatrix<f64> {
        &self.transfer
    }

    /// Column sums of the transfer matrix; the carried load with everything
    /// admitted is their sum.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `M = diag(gamma)^{-1} (I - Q^T) diag(mu)^{-1}` when every station has
    /// arrivals.
    pub fn operator(&self) -> Option<&DMatrix<f64>> {
        self.operator.as_ref()
    }

    /// `max |M T - I|`, zero when the operator is not formed.
    pub fn inverse_residual(&self) -> f64 {
        self.residual
    }

    /// Carried load with every arrival admitted.
    pub fn natural_load(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Smallest reciprocal load reachable, `1 / natural_load`.
    pub fn min_reciprocal_load(&self) -> f64 {
        1.0 / self.natural_load()
    }

    /// Relative load `T alpha`.
    pub fn relative(&self, alpha: &[f64]) -> Vec<f64> {
        (&self.transfer * DVector::from_column_slice(alpha)).iter().copied().collect()
    }

    /// Per-station carried load for admission probabilities on the support.
    pub fn carried_load(&self, admission: &[f64]) -> Vec<f64> {
        self.relative(admission)
    }

    /// Decision vector reproducing a relative load, by least squares on the
    /// support (exact when the load is reachable).
    pub fn decisions_for(&self, relative: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(relative);
        let svd = self.transfer.clone().svd(true, true);
        svd.solve(&rhs, 1e-14).map(|x| x.iter().copied().collect()).unwrap_or_else(|_| vec![0.0; self.dim()])
    }

    /// Relative load with everything admitted.
    pub fn natural_relative(&self) -> Vec<f64> {
        let x = self.min_reciprocal_load();
        self.relative(&vec![x; self.dim()])
    }
}
