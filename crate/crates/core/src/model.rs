//! Network, slices and the stochastic traffic model.
//!
//! Each slice offers Poisson exogenous arrivals at every base station; users
//! sojourn, hand off according to a substochastic routing matrix and
//! eventually leave. The induced open network of infinite-server queues has
//! independent Poisson occupancies with means given by flow conservation,
//! and [`LoadProfile`] collects every load statistic derived from those means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, weighted_dot};

const SHARE_TOLERANCE: f64 = 1e-12;
const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Base stations `0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseStationSet {
    count: usize,
}

impl BaseStationSet {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidModel("at least one base station is required".into()));
        }
        Ok(Self { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn ids(&self) -> std::ops::Range<usize> {
        0..self.count
    }
}

/// Distribution of a user's peak rate `C` at a base station, parameterized so
/// that `E[1/C] = delta`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CapacityModel {
    /// `C = 1/delta`.
    #[default]
    Deterministic,
    /// `1/C` lognormal with log-standard-deviation `sigma` and mean `delta`.
    Lognormal { sigma: f64 },
}

/// Sojourn-time law at a station. Analytic results depend only on the mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SojournDistribution {
    #[default]
    Exponential,
    Deterministic,
    /// Lognormal with the given coefficient of variation.
    Lognormal { cv: f64 },
}

/// One slice of the shared infrastructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub share: f64,
    /// Exogenous arrival rate per station.
    pub gamma: Vec<f64>,
    /// Mean sojourn time per station.
    pub mu: Vec<f64>,
    /// `routing[i][j]`: probability of moving from station `i` to `j`.
    pub routing: Vec<Vec<f64>>,
    /// Mean BTD target, if the slice has one.
    pub target: Option<f64>,
    /// Mean reciprocal capacity per station.
    pub delta: Vec<f64>,
    pub capacity: CapacityModel,
    pub sojourn: SojournDistribution,
}

impl SliceSpec {
    /// A slice with no handoffs (every user exits after one sojourn), unit
    /// capacities and exponential sojourns.
    pub fn without_routing(share: f64, gamma: Vec<f64>, mu: Vec<f64>) -> Self {
        let b = gamma.len();
        Self {
            share,
            gamma,
            mu,
            routing: vec![vec![0.0; b]; b],
            target: None,
            delta: vec![1.0; b],
            capacity: CapacityModel::Deterministic,
            sojourn: SojournDistribution::Exponential,
        }
    }

    pub fn with_routing(mut self, routing: Vec<Vec<f64>>) -> Self {
        self.routing = routing;
        self
    }

    pub fn with_delta(mut self, delta: Vec<f64>) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_capacity(mut self, capacity: CapacityModel) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn with_sojourn(mut self, sojourn: SojournDistribution) -> Self {
        self.sojourn = sojourn;
        self
    }

    fn validate(&self, index: usize, stations: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(format!("slice {index}: {msg}")));
        if !(self.share > 0.0 && self.share <= 1.0) {
            return bad(format!("share {} outside (0, 1]", self.share));
        }
        for (name, len) in [
            ("gamma", self.gamma.len()),
            ("mu", self.mu.len()),
            ("delta", self.delta.len()),
            ("routing", self.routing.len()),
        ] {
            if len != stations {
                return bad(format!("{name} has length {len}, expected {stations}"));
            }
        }
        if self.gamma.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return bad("arrival rates must be finite and nonnegative".into());
        }
        if self.mu.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return bad("mean sojourn times must be positive".into());
        }
        if self.delta.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return bad("mean reciprocal capacities must be positive".into());
        }
        for (i, row) in self.routing.iter().enumerate() {
            if row.len() != stations {
                return bad(format!("routing row {i} has length {}", row.len()));
            }
            if row.iter().any(|q| !q.is_finite() || *q < 0.0) {
                return bad(format!("routing row {i} has a negative entry"));
            }
            let sum: f64 = row.iter().sum();
            if sum > 1.0 + ROW_SUM_TOLERANCE {
                return bad(format!("routing row {i} sums to {sum} > 1"));
            }
        }
        match self.capacity {
            CapacityModel::Lognormal { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                return bad("capacity sigma must be nonnegative".into())
            }
            _ => {}
        }
        match self.sojourn {
            SojournDistribution::Lognormal { cv } if !(cv > 0.0 && cv.is_finite()) => {
                return bad("sojourn cv must be positive".into())
            }
            _ => {}
        }
        Ok(())
    }
}

/// Static scenario: stations plus slices whose shares sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    stations: BaseStationSet,
    slices: Vec<SliceSpec>,
}

impl TrafficModel {
    pub fn new(stations: BaseStationSet, slices: Vec<SliceSpec>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::InvalidModel("at least one slice is required".into()));
        }
        for (v, slice) in slices.iter().enumerate() {
            slice.validate(v, stations.count())?;
        }
        let total: f64 = slices.iter().map(|s| s.share).sum();
        if (total - 1.0).abs() > SHARE_TOLERANCE {
            return Err(Error::InvalidModel(format!("shares sum to {total}, expected 1")));
        }
        Ok(Self { stations, slices })
    }

    pub fn stations(&self) -> BaseStationSet {
        self.stations
    }

    pub fn num_stations(&self) -> usize {
        self.stations.count()
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn slices(&self) -> &[SliceSpec] {
        &self.slices
    }

    pub fn slice(&self, v: usize) -> &SliceSpec {
        &self.slices[v]
    }

    pub fn shares(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.share).collect()
    }

    /// Same model with every arrival rate multiplied by `factor`.
    pub fn scale_arrivals(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for slice in &mut out.slices {
            slice.gamma.iter_mut().for_each(|g| *g *= factor);
        }
        out
    }
}

/// Solves `rho = diag(mu) (I - Q^T)^{-1} gamma`.
pub fn solve_flow_conservation(gamma: &[f64], routing: &[Vec<f64>], mu: &[f64]) -> Result<Vec<f64>> {
    let b = gamma.len();
    if routing.len() != b || mu.len() != b {
        return Err(Error::InvalidModel("flow conservation inputs have mismatched lengths".into()));
    }
    let a = linalg::flow_operator(routing);
    let (inv, condition) = linalg::inverse_with_condition(&a);
    let inv = inv.ok_or(Error::SingularRouting { slice: None, condition })?;
    let rhs = linalg::dvec(gamma);
    let mut kappa = &inv * &rhs;
    // one step of iterative refinement
    let residual = &rhs - &a * &kappa;
    kappa += &inv * residual;
    Ok(kappa.iter().zip(mu).map(|(k, m)| k * m).collect())
}

/// Load statistics derived from per-station mean occupancies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadProfile {
    shares: Vec<f64>,
    loads: Vec<Vec<f64>>,
    totals: Vec<f64>,
    relative: Vec<Option<Vec<f64>>>,
    deltas: Vec<Vec<f64>>,
    aggregate: Option<Vec<f64>>,
    active_aggregate: Vec<f64>,
    idle_shares: Vec<Vec<f64>>,
}

impl LoadProfile {
    /// Builds a profile from shares, per-station loads `rho[v][b]` and mean
    /// reciprocal capacities `delta[v][b]`.
    pub fn from_loads(shares: Vec<f64>, loads: Vec<Vec<f64>>, deltas: Vec<Vec<f64>>) -> Result<Self> {
        let fixed = vec![None; shares.len()];
        Self::assemble(shares, loads, fixed, deltas)
    }

    /// `fixed[v]`, when present, is used as slice `v`'s relative load even if
    /// its total is zero.
    fn assemble(
        shares: Vec<f64>,
        loads: Vec<Vec<f64>>,
        fixed: Vec<Option<Vec<f64>>>,
        deltas: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let v_count = shares.len();
        if v_count == 0 || loads.len() != v_count || deltas.len() != v_count {
            return Err(Error::InvalidModel("shares, loads and deltas must have one entry per slice".into()));
        }
        let b_count = loads[0].len();
        if b_count == 0 {
            return Err(Error::InvalidModel("at least one base station is required".into()));
        }
        if loads.iter().chain(&deltas).any(|row| row.len() != b_count) {
            return Err(Error::InvalidModel("load and delta vectors must have one entry per station".into()));
        }
        if shares.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidModel("shares must be positive".into()));
        }
        let share_sum: f64 = shares.iter().sum();
        if (share_sum - 1.0).abs() > SHARE_TOLERANCE {
            return Err(Error::InvalidModel(format!("shares sum to {share_sum}, expected 1")));
        }
        if loads.iter().flatten().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidModel("loads must be finite and nonnegative".into()));
        }
        if deltas.iter().flatten().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::InvalidModel("mean reciprocal capacities must be positive".into()));
        }

        let totals: Vec<f64> = loads.iter().map(|row| row.iter().sum()).collect();
        let relative: Vec<Option<Vec<f64>>> = loads
            .iter()
            .zip(&totals)
            .zip(fixed)
            .enumerate()
            .map(|(v, ((row, &total), fixed))| {
                if let Some(rel) = fixed {
                    Some(rel)
                } else if total > 0.0 {
                    Some(row.iter().map(|r| r / total).collect())
                } else {
                    log::warn!("slice {v} carries zero load; its relative load is undefined");
                    None
                }
            })
            .collect();

        let aggregate = if relative.iter().all(Option::is_some) {
            let mut g = vec![0.0; b_count];
            for (s, rel) in shares.iter().zip(&relative) {
                for (gb, r) in g.iter_mut().zip(rel.as_ref().unwrap()) {
                    *gb += s * r;
                }
            }
            Some(g)
        } else {
            None
        };

        let mut active_aggregate = vec![0.0; b_count];
        for ((s, rel), total) in shares.iter().zip(&relative).zip(&totals) {
            if let Some(rel) = rel {
                let active = -(-total).exp_m1();
                for (gb, r) in active_aggregate.iter_mut().zip(rel) {
                    *gb += s * active * r;
                }
            }
        }

        let idle_shares = (0..v_count)
            .map(|v| {
                (0..b_count)
                    .map(|b| {
                        (0..v_count)
                            .filter(|&u| u != v)
                            .map(|u| shares[u] * (-loads[u][b]).exp())
                            .sum()
                    })
                    .collect()
            })
            .collect();

        Ok(Self { shares, loads, totals, relative, deltas, aggregate, active_aggregate, idle_shares })
    }

    /// Builds a profile from relative loads and totals, `rho[v] = total[v] * rel[v]`.
    ///
    /// Relative loads are normalized to sum to one and stay defined even for a
    /// zero total, which is how light-load limits are evaluated.
    pub fn from_relative(
        shares: Vec<f64>,
        relative: &[Vec<f64>],
        totals: &[f64],
        deltas: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if relative.len() != totals.len() {
            return Err(Error::InvalidModel("one total per relative load vector is required".into()));
        }
        let mut fixed = Vec::with_capacity(relative.len());
        for (v, rel) in relative.iter().enumerate() {
            let sum: f64 = rel.iter().sum();
            if !(sum > 0.0) || rel.iter().any(|r| !(*r >= 0.0)) {
                return Err(Error::ZeroVector { slice: v });
            }
            fixed.push(Some(rel.iter().map(|r| r / sum).collect::<Vec<f64>>()));
        }
        let loads = fixed
            .iter()
            .zip(totals)
            .map(|(rel, t)| rel.as_ref().unwrap().iter().map(|r| r * t).collect())
            .collect();
        Self::assemble(shares, loads, fixed, deltas)
    }

    /// Same relative loads and other slices, slice `v` rescaled to `total`.
    pub fn with_slice_total(&self, v: usize, total: f64) -> Result<Self> {
        let mut totals = self.totals.clone();
        totals[v] = total;
        self.with_totals(&totals)
    }

    /// Same relative loads, every slice rescaled to `total`.
    pub fn with_uniform_total(&self, total: f64) -> Result<Self> {
        self.with_totals(&vec![total; self.num_slices()])
    }

    /// Same relative loads with new per-slice totals.
    pub fn with_totals(&self, totals: &[f64]) -> Result<Self> {
        let mut relative = Vec::with_capacity(self.num_slices());
        for v in 0..self.num_slices() {
            relative.push(self.relative(v)?.to_vec());
        }
        Self::from_relative(self.shares.clone(), &relative, totals, self.deltas.clone())
    }

    pub fn num_slices(&self) -> usize {
        self.shares.len()
    }

    pub fn num_stations(&self) -> usize {
        self.loads[0].len()
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn share(&self, v: usize) -> f64 {
        self.shares[v]
    }

    pub fn loads(&self, v: usize) -> &[f64] {
        &self.loads[v]
    }

    pub fn total(&self, v: usize) -> f64 {
        self.totals[v]
    }

    pub fn delta(&self, v: usize) -> &[f64] {
        &self.deltas[v]
    }

    pub fn relative(&self, v: usize) -> Result<&[f64]> {
        self.relative[v].as_deref().ok_or(Error::UndefinedRelativeLoad { slice: v })
    }

    pub fn is_defined(&self, v: usize) -> bool {
        self.relative[v].is_some()
    }

    pub fn zero_load_slices(&self) -> Vec<usize> {
        (0..self.num_slices()).filter(|&v| !self.is_defined(v)).collect()
    }

    /// Share-weighted relative load `g~`; needs every slice to carry load.
    pub fn aggregate(&self) -> Result<&[f64]> {
        match &self.aggregate {
            Some(g) => Ok(g),
            None => Err(Error::UndefinedRelativeLoad { slice: self.zero_load_slices()[0] }),
        }
    }

    /// Activity-weighted aggregate `g~'`.
    pub fn active_aggregate(&self) -> &[f64] {
        &self.active_aggregate
    }

    /// `g~'` without slice `v`'s own term.
    pub fn active_aggregate_excluding(&self, v: usize) -> Vec<f64> {
        let mut g = self.active_aggregate.clone();
        if let Some(rel) = &self.relative[v] {
            let own = self.shares[v] * -(-self.totals[v]).exp_m1();
            for (gb, r) in g.iter_mut().zip(rel) {
                *gb -= own * r;
            }
        }
        g
    }

    /// Idle shares `s̄^v` seen at each station by a slice `v` user.
    pub fn idle_shares(&self, v: usize) -> &[f64] {
        &self.idle_shares[v]
    }

    /// Probability that slice `v` has at least one user in the network.
    pub fn activity(&self, v: usize) -> f64 {
        -(-self.totals[v]).exp_m1()
    }
}

/// Solves flow conservation for every slice and derives the profile.
pub fn derive_load_profile(model: &TrafficModel) -> Result<LoadProfile> {
    let mut loads = Vec::with_capacity(model.num_slices());
    for (v, slice) in model.slices().iter().enumerate() {
        let rho = solve_flow_conservation(&slice.gamma, &slice.routing, &slice.mu).map_err(|e| match e {
            Error::SingularRouting { condition, .. } => Error::SingularRouting { slice: Some(v), condition },
            other => other,
        })?;
        loads.push(rho);
    }
    let deltas = model.slices().iter().map(|s| s.delta.clone()).collect();
    LoadProfile::from_loads(model.shares(), loads, deltas)
}

/// Norms of a slice's relative load and of the aggregate, and the angle
/// between them, all in the slice's capacity-weighted inner product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadGeometry {
    pub relative_norm: f64,
    pub aggregate_norm: f64,
    pub angle_deg: f64,
}

pub fn load_geometry(profile: &LoadProfile, v: usize) -> Result<LoadGeometry> {
    geometry_with_weights(profile, v, profile.delta(v))
}

/// [`load_geometry`] with the plain Euclidean inner product.
pub fn load_geometry_euclidean(profile: &LoadProfile, v: usize) -> Result<LoadGeometry> {
    geometry_with_weights(profile, v, &vec![1.0; profile.num_stations()])
}

fn geometry_with_weights(profile: &LoadProfile, v: usize, w: &[f64]) -> Result<LoadGeometry> {
    let rel = profile.relative(v)?;
    let g = profile.aggregate()?;
    let relative_norm = weighted_dot(rel, rel, w).sqrt();
    let aggregate_norm = weighted_dot(g, g, w).sqrt();
    if relative_norm == 0.0 || aggregate_norm == 0.0 {
        return Err(Error::ZeroVector { slice: v });
    }
    Ok(LoadGeometry { relative_norm, aggregate_norm, angle_deg: weighted_angle_deg(rel, g, w) })
}

/// Angle in degrees between two nonzero vectors under `<., .>_W`.
///
/// Uses `2 atan2(|u - w|, |u + w|)` on the unit vectors, which stays accurate
/// for nearly parallel inputs where `acos` loses half the digits.
pub fn weighted_angle_deg(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let na = weighted_dot(a, a, w).sqrt();
    let nb = weighted_dot(b, b, w).sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x / na - y / nb).collect();
    let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x / na + y / nb).collect();
    let d = weighted_dot(&diff, &diff, w).sqrt();
    let s = weighted_dot(&sum, &sum, w).sqrt();
    (2.0 * d.atan2(s)).to_degrees()
}

/// Euclidean angle in degrees between two vectors.
pub fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    weighted_angle_deg(a, b, &vec![1.0; a.len()])
}
