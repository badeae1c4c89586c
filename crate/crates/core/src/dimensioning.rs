//! Share dimensioning under SCPF.
//!
//! Each slice `v` with BTD target `d_v` tolerates a carried load up to
//! `l_v` when alone. Sharing with other slices tightens this into a linear
//! constraint on the share vector; a max-min LP then picks the shares that
//! maximize the smallest constraint slack.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, weighted_dot};
use crate::lp::{LinearProgram, Relation};
use crate::model::LoadProfile;

/// Objective values within this distance of zero count as the boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-10;

/// Largest total load slice `v` can carry alone while meeting BTD target
/// `target`: `(target - <rel, delta>) / |rel|^2_delta`.
pub fn max_admissible_load(target: f64, rel: &[f64], delta: &[f64]) -> Result<f64> {
    max_admissible_load_of(0, target, rel, delta)
}

fn max_admissible_load_of(slice: usize, target: f64, rel: &[f64], delta: &[f64]) -> Result<f64> {
    let floor = dot(rel, delta);
    if !(target > floor) {
        return Err(Error::InfeasibleTarget { slice, target, floor });
    }
    let norm = weighted_dot(rel, rel, delta);
    if !(norm > 0.0) {
        return Err(Error::ZeroVector { slice });
    }
    Ok((target - floor) / norm)
}

/// Coupling matrix `H`: row `u` holds the coefficients of slice `u`'s share
/// constraint `sum_v H[u][v] s^v >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingMatrix {
    pub entries: Vec<Vec<f64>>,
    /// Stand-alone admissible load of each slice.
    pub limits: Vec<f64>,
}

impl CouplingMatrix {
    /// Wraps a raw matrix, e.g. for testing the LP on its own.
    pub fn from_entries(entries: Vec<Vec<f64>>) -> Self {
        let n = entries.len();
        Self { entries, limits: vec![f64::INFINITY; n] }
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    /// Row slacks `H s`.
    pub fn apply(&self, shares: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|row| dot(row, shares)).collect()
    }
}

/// Builds the coupling matrix from each slice's relative load, mean
/// reciprocal capacities and total load in `profile`.
pub fn coupling_matrix(profile: &LoadProfile, targets: &[f64]) -> Result<CouplingMatrix> {
    let n = profile.num_slices();
    if targets.len() != n {
        return Err(Error::InvalidModel(format!("{} targets for {n} slices", targets.len())));
    }
    let mut limits = Vec::with_capacity(n);
    for (u, &d) in targets.iter().enumerate() {
        limits.push(max_admissible_load_of(u, d, profile.relative(u)?, profile.delta(u))?);
    }
    let mut entries = vec![vec![0.0; n]; n];
    for u in 0..n {
        let load = profile.total(u);
        if load >= limits[u] {
            return Err(Error::SliceOverloaded { slice: u, load, limit: limits[u] });
        }
        let rel_u = profile.relative(u)?;
        let delta_u = profile.delta(u);
        let coefficient = (1.0 + load) / (limits[u] - load) / weighted_dot(rel_u, rel_u, delta_u);
        for v in 0..n {
            entries[u][v] = if u == v {
                1.0
            } else {
                -coefficient * weighted_dot(rel_u, profile.relative(v)?, delta_u)
            };
        }
    }
    Ok(CouplingMatrix { entries, limits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admissibility {
    Admissible,
    Boundary,
    Inadmissible,
}

impl Admissibility {
    pub fn from_objective(t: f64) -> Self {
        if t > BOUNDARY_TOLERANCE {
            Admissibility::Admissible
        } else if t < -BOUNDARY_TOLERANCE {
            Admissibility::Inadmissible
        } else {
            Admissibility::Boundary
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareAllocation {
    pub shares: Vec<f64>,
    /// Smallest row slack at the optimum.
    pub objective: f64,
    pub status: Admissibility,
}

/// Shares on the simplex maximizing `min_i (H s)_i`.
pub fn solve_maxmin_shares(h: &CouplingMatrix) -> Result<ShareAllocation> {
    let n = h.size();
    if n == 0 || h.entries.iter().any(|r| r.len() != n || r.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidModel("coupling matrix must be square and finite".into()));
    }
    // variables: s_0..s_{n-1}, t (free)
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut lp = LinearProgram::maximize(objective).free(n);
    for row in &h.entries {
        let mut c: Vec<f64> = row.iter().map(|x| -x).collect();
        c.push(1.0);
        lp = lp.constraint(c, Relation::Le, 0.0);
    }
    let mut simplex = vec![1.0; n];
    simplex.push(0.0);
    lp = lp.constraint(simplex, Relation::Eq, 1.0);
    let sol = lp.solve()?;

    let mut shares: Vec<f64> = sol.x[..n].iter().map(|x| x.max(0.0)).collect();
    let sum: f64 = shares.iter().sum();
    shares.iter_mut().for_each(|x| *x /= sum);
    let objective = h.apply(&shares).into_iter().fold(f64::INFINITY, f64::min);
    Ok(ShareAllocation { status: Admissibility::from_objective(objective), shares, objective })
}

/// Per-slice check of a share vector against the targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareCheck {
    /// `(H s)_v`; nonnegative when slice `v`'s constraint holds.
    pub slack: Vec<f64>,
    /// Leading-order SCPF BTD `(rho / s) <rel, g>_delta` under `shares`.
    pub asymptotic_btd: Vec<f64>,
    /// Exact SCPF BTD under `shares`; infinite for a zero share.
    pub exact_btd: Vec<f64>,
    pub targets: Vec<f64>,
}

impl ShareCheck {
    pub fn all_met(&self, tol: f64) -> bool {
        self.slack.iter().all(|s| *s >= -tol)
    }
}

/// Evaluates `shares` for the loads in `profile` (whose own shares are
/// ignored).
pub fn verify_shares(shares: &[f64], profile: &LoadProfile, targets: &[f64]) -> Result<ShareCheck> {
    let n = profile.num_slices();
    if shares.len() != n {
        return Err(Error::InvalidModel(format!("{} shares for {n} slices", shares.len())));
    }
    let h = coupling_matrix(profile, targets)?;
    let rel: Vec<&[f64]> = (0..n).map(|v| profile.relative(v)).collect::<Result<_>>()?;
    let mut asymptotic_btd = Vec::with_capacity(n);
    let mut exact_btd = Vec::with_capacity(n);
    for v in 0..n {
        let delta = profile.delta(v);
        let load = profile.total(v);
        let mut all = vec![0.0; profile.num_stations()];
        let mut others = vec![0.0; profile.num_stations()];
        for u in 0..n {
            let active = -(-profile.total(u)).exp_m1();
            for (b, r) in rel[u].iter().enumerate() {
                all[b] += shares[u] * r;
                if u != v {
                    others[b] += shares[u] * active * r;
                }
            }
        }
        if shares[v] > 0.0 {
            asymptotic_btd.push(load / shares[v] * weighted_dot(rel[v], &all, delta));
            exact_btd.push(
                dot(rel[v], delta)
                    + load * weighted_dot(rel[v], rel[v], delta)
                    + (load + 1.0) / shares[v] * weighted_dot(&others, rel[v], delta),
            );
        } else {
            asymptotic_btd.push(f64::INFINITY);
            exact_btd.push(f64::INFINITY);
        }
    }
    Ok(ShareCheck { slack: h.apply(shares), asymptotic_btd, exact_btd, targets: targets.to_vec() })
}
