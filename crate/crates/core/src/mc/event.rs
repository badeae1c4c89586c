//! Event-driven simulation of the multi-class network of infinite-server
//! queues, open (Poisson arrivals, exits) or closed (fixed populations).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use super::palm::sample_capacity;
use super::stats::{poisson_chi_square, substream, ChiSquareTest, RunningStats};
use crate::allocation::Scheme;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{SojournDistribution, TrafficModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationMode {
    Open,
    /// Fixed number of users per slice; routing rows are renormalized to
    /// stochastic and exits are ignored.
    Closed { populations: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSimConfig {
    pub horizon: f64,
    pub warmup_fraction: f64,
    /// Spacing of count snapshots; defaults to five times the longest mean
    /// sojourn or mean time in system.
    pub sample_interval: Option<f64>,
    pub min_samples: usize,
    /// Users whose BTD is tracked over time.
    pub tagged_users: usize,
    /// Spacing of BTD samples for tagged users; defaults to a fifth of the
    /// count sample spacing.
    pub btd_interval: Option<f64>,
    pub record_events: bool,
    pub mode: PopulationMode,
}

impl EventSimConfig {
    pub fn open(horizon: f64) -> Self {
        Self {
            horizon,
            warmup_fraction: 0.2,
            sample_interval: None,
            min_samples: 30,
            tagged_users: 0,
            btd_interval: None,
            record_events: false,
            mode: PopulationMode::Open,
        }
    }

    pub fn closed(horizon: f64, populations: Vec<usize>) -> Self {
        Self { mode: PopulationMode::Closed { populations }, ..Self::open(horizon) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Arrival,
    Handoff,
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub user: usize,
    pub slice: usize,
    pub station: usize,
    /// Destination station for handoffs.
    pub to: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BtdSample {
    pub time: f64,
    pub slice: usize,
    pub station: usize,
    pub user: usize,
    pub scheme: Scheme,
    pub btd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventTrace {
    pub events: Vec<EventRecord>,
    /// Time-averaged post-warm-up occupancy per (slice, station).
    pub mean_counts: Vec<Vec<f64>>,
    /// Occupancy snapshots per (slice, station), evenly spaced after warm-up.
    pub count_samples: Vec<Vec<Vec<u32>>>,
    pub btd_series: Vec<BtdSample>,
    pub initial_users: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub in_system: u64,
    pub observed_time: f64,
    pub sample_interval: f64,
}

impl EventTrace {
    pub fn chi_square(&self, v: usize, b: usize, mean: f64) -> Result<ChiSquareTest> {
        poisson_chi_square(&self.count_samples[v][b], mean)
    }

    /// Arrivals plus initial users equal departures plus users still present.
    pub fn conserves_users(&self) -> bool {
        self.initial_users + self.arrivals == self.departures + self.in_system
    }

    /// Spread of tagged users' BTD samples under `scheme`.
    pub fn btd_stats(&self, scheme: Scheme) -> RunningStats {
        let mut stats = RunningStats::default();
        self.btd_series.iter().filter(|s| s.scheme == scheme).for_each(|s| stats.push(s.btd));
        stats
    }

    /// Writes the BTD series as CSV (time, slice, station, user, scheme, btd).
    pub fn write_btd_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "slice", "station", "user", "scheme", "btd"])?;
        for s in &self.btd_series {
            w.write_record([
                s.time.to_string(),
                s.slice.to_string(),
                s.station.to_string(),
                s.user.to_string(),
                s.scheme.to_string(),
                s.btd.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes recorded events as CSV (time, kind, user, slice, station, to).
    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "kind", "user", "slice", "station", "to"])?;
        for e in &self.events {
            let kind = match e.kind {
                EventKind::Arrival => "arrival",
                EventKind::Handoff => "handoff",
                EventKind::Departure => "departure",
            };
            w.write_record([
                e.time.to_string(),
                kind.to_string(),
                e.user.to_string(),
                e.slice.to_string(),
                e.station.to_string(),
                e.to.map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Arrival { slice: usize, station: usize },
    SojournEnd { user: usize },
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    what: Pending,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed so the max-heap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct User {
    slice: usize,
    station: usize,
    capacity: f64,
}

fn sample_sojourn(dist: SojournDistribution, mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    match dist {
        SojournDistribution::Exponential => Exp::new(1.0 / mean).expect("positive mean").sample(rng),
        SojournDistribution::Deterministic => mean,
        SojournDistribution::Lognormal { cv } => {
            let s2 = (1.0 + cv * cv).ln();
            LogNormal::new(mean.ln() - 0.5 * s2, s2.sqrt()).expect("valid lognormal").sample(rng)
        }
    }
}

/// Picks index `i` with probability `weights[i] / total`, or `None` for the
/// leftover mass `1 - total`.
fn pick(weights: &[f64], rng: &mut ChaCha8Rng) -> Option<usize> {
    let mut u: f64 = rng.random();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return Some(i);
        }
        u -= w;
    }
    None
}

/// Routing rows renormalized to sum to one; a row without mass becomes a
/// self-loop.
pub fn closed_routing(routing: &[Vec<f64>]) -> Vec<Vec<f64>> {
    routing
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter().map(|q| q / sum).collect()
            } else {
                (0..row.len()).map(|j| if j == i { 1.0 } else { 0.0 }).collect()
            }
        })
        .collect()
}

/// Mean occupancy per station for a closed population moving by the
/// renormalized routing chain: `N * pi_b mu_b / sum_c pi_c mu_c` with `pi` the
/// chain's stationary law.
pub fn closed_network_mean_counts(model: &TrafficModel, populations: &[usize]) -> Result<Vec<Vec<f64>>> {
    if populations.len() != model.num_slices() {
        return Err(Error::InvalidModel("one population per slice is required".into()));
    }
    let b = model.num_stations();
    let mut out = Vec::with_capacity(model.num_slices());
    for (v, slice) in model.slices().iter().enumerate() {
        let p = closed_routing(&slice.routing);
        // pi (P - I) = 0 with the last equation replaced by sum(pi) = 1
        let mut a = nalgebra::DMatrix::from_fn(b, b, |i, j| p[j][i] - if i == j { 1.0 } else { 0.0 });
        for j in 0..b {
            a[(b - 1, j)] = 1.0;
        }
        let mut rhs = nalgebra::DVector::zeros(b);
        rhs[b - 1] = 1.0;
        let (inv, condition) = linalg::inverse_with_condition(&a);
        let pi = inv.ok_or(Error::SingularRouting { slice: Some(v), condition })? * rhs;
        let weights: Vec<f64> = (0..b).map(|i| pi[i].max(0.0) * slice.mu[i]).collect();
        let total: f64 = weights.iter().sum();
        out.push(weights.iter().map(|w| populations[v] as f64 * w / total).collect());
    }
    Ok(out)
}

/// Reciprocal rate of a slice-`v` user with capacity `c` at station `b`
/// given the current occupancy.
pub(crate) fn user_btd(
    scheme: Scheme,
    counts: &[Vec<u32>],
    slice_totals: &[u32],
    shares: &[f64],
    (v, b, c): (usize, usize, f64),
) -> f64 {
    let s = shares[v];
    let n_vb = counts[v][b] as f64;
    match scheme {
        Scheme::Ss => n_vb / (s * c),
        Scheme::Gps => {
            let active: f64 = (0..shares.len()).filter(|&u| counts[u][b] > 0).map(|u| shares[u]).sum();
            n_vb * active / (s * c)
        }
        Scheme::Scpf => {
            let weight: f64 = (0..shares.len())
                .filter(|&u| slice_totals[u] > 0)
                .map(|u| counts[u][b] as f64 * shares[u] / slice_totals[u] as f64)
                .sum();
            weight * slice_totals[v] as f64 / (s * c)
        }
    }
}

/// Runs the network from empty (open) or from a stationary-mean placement
/// (closed) up to `config.horizon`.
pub fn run_event_sim(model: &TrafficModel, config: &EventSimConfig, seed: u64) -> Result<EventTrace> {
    if !(config.horizon > 0.0) || !(0.0..1.0).contains(&config.warmup_fraction) {
        return Err(Error::InvalidModel("horizon must be positive and warm-up fraction in [0, 1)".into()));
    }
    let v_count = model.num_slices();
    let b_count = model.num_stations();
    let shares = model.shares();
    let mut rng = substream(seed, 0);
    let closed = match &config.mode {
        PopulationMode::Open => None,
        PopulationMode::Closed { populations } => Some(populations.clone()),
    };
    let routing: Vec<Vec<Vec<f64>>> = model
        .slices()
        .iter()
        .map(|s| if closed.is_some() { closed_routing(&s.routing) } else { s.routing.clone() })
        .collect();

    let longest_sojourn = model.slices().iter().flat_map(|s| s.mu.iter().copied()).fold(0.0, f64::max);
    let time_in_system = if closed.is_some() {
        longest_sojourn
    } else {
        let mut longest = longest_sojourn;
        for s in model.slices() {
            let rho = crate::model::solve_flow_conservation(&s.gamma, &s.routing, &s.mu)?;
            let gamma: f64 = s.gamma.iter().sum();
            if gamma > 0.0 {
                longest = longest.max(rho.iter().sum::<f64>() / gamma);
            }
        }
        longest
    };
    let sample_interval = config.sample_interval.unwrap_or(5.0 * time_in_system);
    let btd_interval = config.btd_interval.unwrap_or(sample_interval / 5.0);
    let warmup = config.horizon * config.warmup_fraction;

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut schedule = |heap: &mut BinaryHeap<Scheduled>, time: f64, what: Pending| {
        heap.push(Scheduled { time, seq, what });
        seq += 1;
    };

    let mut users: Vec<Option<User>> = Vec::new();
    let mut counts = vec![vec![0u32; b_count]; v_count];
    let mut slice_totals = vec![0u32; v_count];
    let mut trace = EventTrace {
        events: Vec::new(),
        mean_counts: vec![vec![0.0; b_count]; v_count],
        count_samples: vec![vec![Vec::new(); b_count]; v_count],
        btd_series: Vec::new(),
        initial_users: 0,
        arrivals: 0,
        departures: 0,
        in_system: 0,
        observed_time: config.horizon - warmup,
        sample_interval,
    };
    let mut tagged: Vec<usize> = Vec::new();

    let enter = |users: &mut Vec<Option<User>>,
                 counts: &mut Vec<Vec<u32>>,
                 slice_totals: &mut Vec<u32>,
                 rng: &mut ChaCha8Rng,
                 v: usize,
                 b: usize|
     -> (usize, f64) {
        let spec = model.slice(v);
        let capacity = sample_capacity(spec.capacity, spec.delta[b], rng);
        users.push(Some(User { slice: v, station: b, capacity }));
        counts[v][b] += 1;
        slice_totals[v] += 1;
        (users.len() - 1, sample_sojourn(spec.sojourn, spec.mu[b], rng))
    };

    if let Some(populations) = &closed {
        let means = closed_network_mean_counts(model, populations)?;
        for v in 0..v_count {
            let total: f64 = means[v].iter().sum();
            let probs: Vec<f64> = means[v].iter().map(|m| m / total).collect();
            for _ in 0..populations[v] {
                let b = pick(&probs, &mut rng).unwrap_or(b_count - 1);
                let (id, sojourn) = enter(&mut users, &mut counts, &mut slice_totals, &mut rng, v, b);
                schedule(&mut heap, sojourn, Pending::SojournEnd { user: id });
                trace.initial_users += 1;
                if tagged.len() < config.tagged_users {
                    tagged.push(id);
                }
            }
        }
    } else {
        for (v, s) in model.slices().iter().enumerate() {
            for (b, &g) in s.gamma.iter().enumerate() {
                if g > 0.0 {
                    let t = Exp::new(g).expect("positive rate").sample(&mut rng);
                    schedule(&mut heap, t, Pending::Arrival { slice: v, station: b });
                }
            }
        }
    }

    let mut now: f64 = 0.0;
    let mut next_sample = warmup + sample_interval;
    let mut next_btd = warmup + btd_interval;
    let horizon = config.horizon;

    loop {
        let event = heap.pop();
        let t = event.map_or(horizon, |e| e.time.min(horizon));

        // occupancy is constant on [now, t)
        let lo = now.max(warmup);
        if t > lo {
            for v in 0..v_count {
                for b in 0..b_count {
                    trace.mean_counts[v][b] += counts[v][b] as f64 * (t - lo);
                }
            }
        }
        while next_sample <= t && next_sample <= horizon {
            for v in 0..v_count {
                for b in 0..b_count {
                    trace.count_samples[v][b].push(counts[v][b]);
                }
            }
            next_sample += sample_interval;
        }
        while next_btd <= t && next_btd <= horizon {
            for &id in &tagged {
                if let Some(user) = &users[id] {
                    for scheme in Scheme::ALL {
                        trace.btd_series.push(BtdSample {
                            time: next_btd,
                            slice: user.slice,
                            station: user.station,
                            user: id,
                            scheme,
                            btd: user_btd(scheme, &counts, &slice_totals, &shares, (user.slice, user.station, user.capacity)),
                        });
                    }
                }
            }
            next_btd += btd_interval;
        }
        now = t;

        let Some(event) = event else { break };
        if event.time > horizon {
            break;
        }
        match event.what {
            Pending::Arrival { slice, station } => {
                let (id, sojourn) = enter(&mut users, &mut counts, &mut slice_totals, &mut rng, slice, station);
                schedule(&mut heap, now + sojourn, Pending::SojournEnd { user: id });
                let gap = Exp::new(model.slice(slice).gamma[station]).expect("positive rate").sample(&mut rng);
                schedule(&mut heap, now + gap, Pending::Arrival { slice, station });
                trace.arrivals += 1;
                if now >= warmup && tagged.len() < config.tagged_users {
                    tagged.push(id);
                }
                if config.record_events {
                    trace.events.push(EventRecord { time: now, kind: EventKind::Arrival, user: id, slice, station, to: None });
                }
            }
            Pending::SojournEnd { user: id } => {
                let user = users[id].expect("scheduled user is present");
                let (v, b) = (user.slice, user.station);
                counts[v][b] -= 1;
                match pick(&routing[v][b], &mut rng) {
                    Some(next) => {
                        let spec = model.slice(v);
                        let capacity = sample_capacity(spec.capacity, spec.delta[next], &mut rng);
                        users[id] = Some(User { slice: v, station: next, capacity });
                        counts[v][next] += 1;
                        let sojourn = sample_sojourn(spec.sojourn, spec.mu[next], &mut rng);
                        schedule(&mut heap, now + sojourn, Pending::SojournEnd { user: id });
                        if config.record_events {
                            trace.events.push(EventRecord { time: now, kind: EventKind::Handoff, user: id, slice: v, station: b, to: Some(next) });
                        }
                    }
                    None if closed.is_some() => {
                        // rounding left the renormalized row just short of one
                        counts[v][b] += 1;
                        let sojourn = sample_sojourn(model.slice(v).sojourn, model.slice(v).mu[b], &mut rng);
                        schedule(&mut heap, now + sojourn, Pending::SojournEnd { user: id });
                    }
                    None => {
                        users[id] = None;
                        slice_totals[v] -= 1;
                        trace.departures += 1;
                        if config.record_events {
                            trace.events.push(EventRecord { time: now, kind: EventKind::Departure, user: id, slice: v, station: b, to: None });
                        }
                    }
                }
            }
        }
    }

    trace.in_system = slice_totals.iter().map(|&n| n as u64).sum();
    let observed = trace.observed_time;
    trace.mean_counts.iter_mut().flatten().for_each(|x| *x /= observed);
    let samples = trace.count_samples.first().and_then(|r| r.first()).map_or(0, Vec::len);
    if samples < config.min_samples {
        return Err(Error::HorizonTooShort { samples, required: config.min_samples });
    }
    Ok(trace)
}
