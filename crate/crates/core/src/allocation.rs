//! Per-user rate allocation for a network snapshot under static slicing (SS),
//! per-station share-proportional sharing (GPS) and share-constrained
//! proportional fairness (SCPF).

use serde::{Deserialize, Serialize};

/// Users present at one instant: `capacities[v][b]` lists the peak rate of
/// every slice-`v` user at station `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    capacities: Vec<Vec<Vec<f64>>>,
}

impl Snapshot {
    /// Empty snapshot for `slices` slices and `stations` stations.
    pub fn empty(slices: usize, stations: usize) -> Self {
        Self { capacities: vec![vec![Vec::new(); stations]; slices] }
    }

    pub fn from_capacities(capacities: Vec<Vec<Vec<f64>>>) -> Self {
        Self { capacities }
    }

    /// Snapshot where every user has capacity `c`.
    pub fn uniform(counts: &[Vec<usize>], c: f64) -> Self {
        Self {
            capacities: counts
                .iter()
                .map(|row| row.iter().map(|&n| vec![c; n]).collect())
                .collect(),
        }
    }

    pub fn push(&mut self, v: usize, b: usize, capacity: f64) {
        self.capacities[v][b].push(capacity);
    }

    pub fn num_slices(&self) -> usize {
        self.capacities.len()
    }

    pub fn num_stations(&self) -> usize {
        self.capacities.first().map_or(0, Vec::len)
    }

    pub fn count(&self, v: usize, b: usize) -> usize {
        self.capacities[v][b].len()
    }

    /// Users of slice `v` anywhere in the network.
    pub fn slice_count(&self, v: usize) -> usize {
        self.capacities[v].iter().map(Vec::len).sum()
    }

    pub fn counts(&self) -> Vec<Vec<usize>> {
        self.capacities
            .iter()
            .map(|row| row.iter().map(Vec::len).collect())
            .collect()
    }

    pub fn capacities(&self, v: usize, b: usize) -> &[f64] {
        &self.capacities[v][b]
    }
}

/// Rates and resource fractions, grouped like the snapshot's capacities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateAllocation {
    pub rates: Vec<Vec<Vec<f64>>>,
    pub fractions: Vec<Vec<Vec<f64>>>,
}

impl RateAllocation {
    /// Total resource fraction handed out at station `b`.
    pub fn station_fraction(&self, b: usize) -> f64 {
        self.fractions.iter().map(|row| row[b].iter().sum::<f64>()).sum()
    }

    /// Aggregate fraction slice `v` receives at station `b`.
    pub fn slice_fraction(&self, v: usize, b: usize) -> f64 {
        self.fractions[v][b].iter().sum()
    }
}

/// Scheme selector shared by the analytic and simulation modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Scpf,
    Ss,
    Gps,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Scpf, Scheme::Ss, Scheme::Gps];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Scpf => "scpf",
            Scheme::Ss => "ss",
            Scheme::Gps => "gps",
        }
    }

    pub fn allocate(self, snapshot: &Snapshot, shares: &[f64]) -> RateAllocation {
        match self {
            Scheme::Scpf => rates_scpf(snapshot, shares),
            Scheme::Ss => rates_ss(snapshot, shares),
            Scheme::Gps => rates_gps(snapshot, shares),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "scpf" => Ok(Scheme::Scpf),
            "ss" => Ok(Scheme::Ss),
            "gps" => Ok(Scheme::Gps),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

/// Builds an allocation from a per-(v, b) fraction given to each user there.
fn allocate_with(snapshot: &Snapshot, per_user: impl Fn(usize, usize) -> f64) -> RateAllocation {
    let mut rates = Vec::with_capacity(snapshot.num_slices());
    let mut fractions = Vec::with_capacity(snapshot.num_slices());
    for v in 0..snapshot.num_slices() {
        let mut rate_row = Vec::with_capacity(snapshot.num_stations());
        let mut frac_row = Vec::with_capacity(snapshot.num_stations());
        for b in 0..snapshot.num_stations() {
            let caps = snapshot.capacities(v, b);
            if caps.is_empty() {
                rate_row.push(Vec::new());
                frac_row.push(Vec::new());
                continue;
            }
            let f = per_user(v, b);
            rate_row.push(caps.iter().map(|c| f * c).collect());
            frac_row.push(vec![f; caps.len()]);
        }
        rates.push(rate_row);
        fractions.push(frac_row);
    }
    RateAllocation { rates, fractions }
}

/// Fixed per-station partition: each slice splits its share equally among
/// its users at the station.
pub fn rates_ss(snapshot: &Snapshot, shares: &[f64]) -> RateAllocation {
    allocate_with(snapshot, |v, b| shares[v] / snapshot.count(v, b) as f64)
}

/// Each station splits its resources among locally active slices in
/// proportion to their shares.
pub fn rates_gps(snapshot: &Snapshot, shares: &[f64]) -> RateAllocation {
    let active_share: Vec<f64> = (0..snapshot.num_stations())
        .map(|b| {
            (0..snapshot.num_slices())
                .filter(|&u| snapshot.count(u, b) > 0)
                .map(|u| shares[u])
                .sum()
        })
        .collect();
    allocate_with(snapshot, |v, b| shares[v] / (snapshot.count(v, b) as f64 * active_share[b]))
}

/// Each slice spreads its share equally over all its users in the network;
/// stations allocate in proportion to those user weights.
pub fn rates_scpf(snapshot: &Snapshot, shares: &[f64]) -> RateAllocation {
    let weight: Vec<f64> = (0..snapshot.num_slices())
        .map(|v| match snapshot.slice_count(v) {
            0 => 0.0,
            n => shares[v] / n as f64,
        })
        .collect();
    let station_weight: Vec<f64> = (0..snapshot.num_stations())
        .map(|b| {
            (0..snapshot.num_slices())
                .map(|u| snapshot.count(u, b) as f64 * weight[u])
                .sum()
        })
        .collect();
    allocate_with(snapshot, |v, b| weight[v] / station_weight[b])
}
