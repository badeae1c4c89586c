//! Traffic-shaping game among slices.
//!
//! Each slice chooses an admission policy to maximize its carried load while
//! keeping its heavy-load BTD under a target. Slices interact through the
//! share-weighted aggregate relative load. The module provides the penalized
//! best-response iteration for the general game, exact solvers for the
//! saturated regime and for static slicing, and the resulting carried-load
//! gains.

pub mod best_response;
#[cfg(test)]
mod fixtures;
pub mod gnep;
pub mod mobility;
pub mod qp;
pub mod saturated;

use serde::Serialize;

pub use best_response::{admission_control, btd_penalty, penalized_best_response, ss_admission_policy, SliceProblem};
pub use gnep::{run_gnep, solve_gnep, GameParams, GameState, GnepReport, GnepRun, IterationRecord};
pub use mobility::MobilityOperator;
pub use saturated::{
    contains_uniform, saturated_equilibrium, saturated_equilibrium_with, ss_optimal_policy, uniform_load_gain, KktReport,
    QpMethod,
};

use crate::error::{Error, Result};
use crate::model::TrafficModel;

/// A slice's admission policy: decisions `alpha = x a` on the stations with
/// arrivals, the induced relative load and the reciprocal carried load `x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissionPolicy {
    pub alpha: Vec<f64>,
    pub relative: Vec<f64>,
    pub x: f64,
}

impl AdmissionPolicy {
    pub fn load(&self) -> f64 {
        1.0 / self.x
    }
}

/// Static-slicing policy in the saturated regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsPolicy {
    pub relative: Vec<f64>,
    pub load: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    /// Relative load of each slice.
    pub relative: Vec<Vec<f64>>,
    /// Carried load of each slice.
    pub loads: Vec<f64>,
    /// Admission probability per slice and station (zero where nothing arrives).
    pub admission: Vec<Vec<f64>>,
    /// Share-weighted aggregate relative load.
    pub aggregate: Vec<f64>,
    pub ss_relative: Vec<Vec<f64>>,
    pub ss_loads: Vec<f64>,
    /// Carried-load gain of SCPF over static slicing per slice.
    pub gains: Vec<f64>,
    pub kkt: Option<KktReport>,
    /// Whether every admission probability is below one.
    pub saturated: bool,
    pub solver: Option<GnepReport>,
}

/// Carried-load gains `rho_scpf / rho_ss` of a computed equilibrium.
pub fn load_gain(result: &EquilibriumResult) -> Vec<f64> {
    result.loads.iter().zip(&result.ss_loads).map(|(a, b)| a / b).collect()
}

pub(crate) fn check_targets(slices: usize, targets: &[f64]) -> Result<()> {
    if targets.len() != slices {
        return Err(Error::InvalidModel(format!("{} targets for {slices} slices", targets.len())));
    }
    for (v, &t) in targets.iter().enumerate() {
        if !(t > 1.0) || !t.is_finite() {
            return Err(Error::InvalidTarget { slice: v, target: t });
        }
    }
    Ok(())
}

pub(crate) fn operators(model: &TrafficModel) -> Result<Vec<MobilityOperator>> {
    model
        .slices()
        .iter()
        .enumerate()
        .map(|(v, s)| {
            MobilityOperator::from_slice(s).map_err(|e| match e {
                Error::SingularRouting { condition, .. } => Error::SingularRouting { slice: Some(v), condition },
                other => other,
            })
        })
        .collect()
}

/// Admission probabilities `a = rho alpha` spread over all stations.
pub(crate) fn admission_vector(op: &MobilityOperator, alpha: &[f64], load: f64) -> Vec<f64> {
    let mut a = vec![0.0; op.num_stations()];
    for (k, &b) in op.support().iter().enumerate() {
        a[b] = load * alpha[k];
    }
    a
}

pub(crate) fn aggregate_of(policies: &[AdmissionPolicy], shares: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; policies[0].relative.len()];
    for (p, s) in policies.iter().zip(shares) {
        for (gb, r) in g.iter_mut().zip(&p.relative) {
            *gb += s * r;
        }
    }
    g
}
