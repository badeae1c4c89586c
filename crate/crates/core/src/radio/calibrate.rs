//! Time-stepped radio simulation of mobile slice users and calibration of
//! the abstract network model from what they experience.
//!
//! Every step each user moves, associates with its strongest sector and
//! obtains a peak rate from the averaged SINR. The run accumulates per slice
//! and sector the user-time, the reciprocal rates, handoffs and dwell
//! episodes, and records each user's BTD under all three sharing schemes.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::{draw_shadowing, linear_to_db, received_powers, sinr, strongest, ChannelParams};
use super::layout::{HexLayout, Point, Sector};
use super::mobility::{MobilityModel, Walker};
use super::rate::RateMap;
use crate::allocation::Scheme;
use crate::error::{Error, Result};
use crate::mc::event::user_btd;
use crate::mc::stats::{substream, RunningStats};
use crate::model::{BaseStationSet, LoadProfile, SliceSpec, TrafficModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSlice {
    pub share: f64,
    /// Fixed number of users of the slice.
    pub users: usize,
    #[serde(default)]
    pub mobility: MobilityModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioScenario {
    #[serde(default)]
    pub layout: HexLayout,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub rate_map: RateMap,
    pub slices: Vec<RadioSlice>,
    #[serde(default = "defaults::horizon")]
    pub horizon_s: f64,
    #[serde(default = "defaults::step")]
    pub step_s: f64,
    #[serde(default = "defaults::warmup")]
    pub warmup_s: f64,
    /// Post-warm-up user-steps every sector must collect over all slices.
    #[serde(default = "defaults::min_samples")]
    pub min_samples: u64,
    /// Exit probability attached to every row of the calibrated routing.
    #[serde(default = "defaults::exit")]
    pub exit_probability: f64,
}

mod defaults {
    pub fn horizon() -> f64 {
        1200.0
    }
    pub fn step() -> f64 {
        1.0
    }
    pub fn warmup() -> f64 {
        200.0
    }
    pub fn min_samples() -> u64 {
        1
    }
    pub fn exit() -> f64 {
        0.1
    }
}

impl RadioScenario {
    pub fn new(slices: Vec<RadioSlice>) -> Self {
        Self {
            layout: HexLayout::default(),
            channel: ChannelParams::default(),
            rate_map: RateMap::default(),
            slices,
            horizon_s: defaults::horizon(),
            step_s: defaults::step(),
            warmup_s: defaults::warmup(),
            min_samples: defaults::min_samples(),
            exit_probability: defaults::exit(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.channel.validate()?;
        self.rate_map.validate()?;
        if self.slices.is_empty() {
            return Err(Error::InvalidModel("radio scenario needs at least one slice".into()));
        }
        for s in &self.slices {
            s.mobility.validate()?;
            if s.users == 0 || !(s.share > 0.0) {
                return Err(Error::InvalidModel("every slice needs users and a positive share".into()));
            }
        }
        let share_sum: f64 = self.slices.iter().map(|s| s.share).sum();
        if (share_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("shares sum to {share_sum}, expected 1")));
        }
        if !(self.step_s > 0.0) || !(self.warmup_s >= 0.0) || !(self.horizon_s > self.warmup_s) {
            return Err(Error::InvalidModel("need step > 0 and horizon > warm-up >= 0".into()));
        }
        if self.min_samples == 0 || !(0.0..1.0).contains(&self.exit_probability) || self.exit_probability <= 0.0 {
            return Err(Error::InvalidModel("need min_samples >= 1 and exit probability in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn shares(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.share).collect()
    }

    pub fn populations(&self) -> Vec<usize> {
        self.slices.iter().map(|s| s.users).collect()
    }

    /// Same scenario with new per-slice populations.
    pub fn with_populations(&self, users: &[usize]) -> Self {
        let mut out = self.clone();
        for (s, &n) in out.slices.iter_mut().zip(users) {
            s.users = n;
        }
        out
    }
}

/// One row of an exported mobility trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub time: f64,
    pub user: usize,
    pub x: f64,
    pub y: f64,
    pub sector: usize,
}

struct UserState {
    slice: usize,
    walker: Walker,
    shadow: Vec<f64>,
    rng: ChaCha8Rng,
    sector: usize,
    sinr: f64,
    inv_rate: f64,
}

/// Per-slice statistics of a radio run.
#[derive(Debug, Clone, Serialize)]
pub struct SliceRecord {
    /// Post-warm-up user-steps per sector.
    pub samples: Vec<u64>,
    /// Sum of reciprocal rates per sector.
    pub inv_rate_sum: Vec<f64>,
    /// Handoff counts `transitions[from][to]`.
    pub transitions: Vec<Vec<u64>>,
    /// Dwell episodes started per sector.
    pub entries: Vec<u64>,
    /// Sum of SINRs in dB per sector.
    pub sinr_db_sum: Vec<f64>,
    /// BTD over all user-steps, indexed like [`Scheme::ALL`].
    pub btd: [RunningStats; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct RadioRun {
    pub shares: Vec<f64>,
    pub populations: Vec<usize>,
    pub step_s: f64,
    pub min_samples: u64,
    pub exit_probability: f64,
    pub slices: Vec<SliceRecord>,
    /// BTD per post-warm-up step of the first user of the first slice,
    /// indexed like [`Scheme::ALL`].
    pub tagged: Vec<[f64; 3]>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

fn scheme_index(scheme: Scheme) -> usize {
    Scheme::ALL.iter().position(|s| *s == scheme).expect("scheme is listed")
}

/// Runs the radio simulation. With `record_trace` every post-warm-up
/// position and serving sector is kept for export.
pub fn simulate_radio(scenario: &RadioScenario, seed: u64, record_trace: bool) -> Result<RadioRun> {
    scenario.validate()?;
    let sectors: Vec<Sector> = scenario.layout.sectors();
    let b_count = sectors.len();
    let sites = scenario.layout.num_sites();
    let radius = scenario.layout.radius();
    let channel = &scenario.channel;
    let noise = channel.noise_linear();
    let shares = scenario.shares();
    let populations = scenario.populations();
    let v_count = shares.len();

    let mut users: Vec<UserState> = scenario
        .slices
        .iter()
        .enumerate()
        .flat_map(|(v, s)| std::iter::repeat_n(v, s.users).zip(std::iter::repeat(&s.mobility)))
        .enumerate()
        .map(|(u, (v, mobility))| {
            let mut rng = substream(seed, u as u64);
            let walker = Walker::new(mobility, radius, &mut rng);
            let shadow = draw_shadowing(channel, sites, &mut rng);
            UserState { slice: v, walker, shadow, rng, sector: usize::MAX, sinr: 0.0, inv_rate: 0.0 }
        })
        .collect();

    let mut slices: Vec<SliceRecord> = (0..v_count)
        .map(|_| SliceRecord {
            samples: vec![0; b_count],
            inv_rate_sum: vec![0.0; b_count],
            transitions: vec![vec![0; b_count]; b_count],
            entries: vec![0; b_count],
            sinr_db_sum: vec![0.0; b_count],
            btd: [RunningStats::default(); 3],
        })
        .collect();
    let totals: Vec<u32> = populations.iter().map(|&n| n as u32).collect();
    let mut tagged = Vec::new();
    let mut trace = Vec::new();
    let mut counts = vec![vec![0u32; b_count]; v_count];

    let steps = (scenario.horizon_s / scenario.step_s).floor() as usize;
    let mut next_refresh = channel.shadowing_period_s;
    for k in 0..=steps {
        let t = k as f64 * scenario.step_s;
        let refresh = k > 0 && t + 1e-9 >= next_refresh;
        if refresh {
            while next_refresh <= t + 1e-9 {
                next_refresh += channel.shadowing_period_s;
            }
        }
        let previous: Vec<usize> = users.iter().map(|u| u.sector).collect();
        users.par_iter_mut().for_each(|u| {
            let mobility = &scenario.slices[u.slice].mobility;
            if k > 0 {
                u.walker.step(mobility, radius, scenario.step_s, &mut u.rng);
            }
            if refresh {
                u.shadow = draw_shadowing(channel, sites, &mut u.rng);
            }
            let rx = received_powers(channel, &sectors, u.walker.position, &u.shadow, &mut u.rng);
            let b = strongest(&rx);
            u.sector = b;
            u.sinr = sinr(&rx, b, noise);
            u.inv_rate = 1.0 / scenario.rate_map.rate(u.sinr);
        });
        if t < scenario.warmup_s {
            continue;
        }
        let first = tagged.is_empty();
        for row in counts.iter_mut() {
            row.fill(0);
        }
        for u in &users {
            counts[u.slice][u.sector] += 1;
        }
        for (i, u) in users.iter().enumerate() {
            let rec = &mut slices[u.slice];
            let b = u.sector;
            rec.samples[b] += 1;
            rec.inv_rate_sum[b] += u.inv_rate;
            rec.sinr_db_sum[b] += linear_to_db(u.sinr);
            let before = previous[i];
            if first || before != b {
                rec.entries[b] += 1;
            }
            if !first && before != b {
                rec.transitions[before][b] += 1;
            }
            let mut btd = [0.0; 3];
            for (j, scheme) in Scheme::ALL.iter().enumerate() {
                btd[j] = user_btd(*scheme, &counts, &totals, &shares, (u.slice, b, 1.0 / u.inv_rate));
                rec.btd[j].push(btd[j]);
            }
            if i == 0 {
                tagged.push(btd);
            }
            if record_trace {
                let Point { x, y } = u.walker.position;
                trace.push(TraceRow { time: t, user: i, x, y, sector: b });
            }
        }
    }

    Ok(RadioRun {
        shares,
        populations,
        step_s: scenario.step_s,
        min_samples: scenario.min_samples,
        exit_probability: scenario.exit_probability,
        slices,
        tagged,
        trace,
    })
}

/// Inputs of the abstract model estimated from a radio run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub shares: Vec<f64>,
    /// Fraction of each slice's user-time spent in each sector.
    pub relative: Vec<Vec<f64>>,
    /// Mean reciprocal rate per slice and sector.
    pub delta: Vec<Vec<f64>>,
    /// Substochastic handoff matrix per slice.
    pub routing: Vec<Vec<Vec<f64>>>,
    /// Mean dwell time in seconds per slice and sector.
    pub holding: Vec<Vec<f64>>,
}

impl RadioRun {
    /// Measured BTD statistics of slice `v` under `scheme`.
    pub fn measured_btd(&self, v: usize, scheme: Scheme) -> RunningStats {
        self.slices[v].btd[scheme_index(scheme)]
    }

    /// Mean SINR in dB per sector over all slices.
    pub fn mean_sinr_db(&self) -> Vec<f64> {
        let b_count = self.slices[0].samples.len();
        (0..b_count)
            .map(|b| {
                let n: u64 = self.slices.iter().map(|s| s.samples[b]).sum();
                self.slices.iter().map(|s| s.sinr_db_sum[b]).sum::<f64>() / n as f64
            })
            .collect()
    }

    /// Standard deviation of the tagged user's BTD series under `scheme`.
    pub fn tagged_std(&self, scheme: Scheme) -> f64 {
        let j = scheme_index(scheme);
        let mut st = RunningStats::default();
        for row in &self.tagged {
            st.push(row[j]);
        }
        st.std_dev()
    }

    /// Estimates the model inputs. Sectors a slice never visited borrow the
    /// pooled estimate over all slices; sectors with fewer than the required
    /// pooled samples are reported as starved.
    pub fn calibrate(&self) -> Result<Calibration> {
        let b_count = self.slices[0].samples.len();
        let pooled_samples: Vec<u64> = (0..b_count).map(|b| self.slices.iter().map(|s| s.samples[b]).sum()).collect();
        let starved: Vec<usize> = (0..b_count).filter(|&b| pooled_samples[b] < self.min_samples).collect();
        if !starved.is_empty() {
            return Err(Error::InsufficientSamples(starved));
        }
        let pooled_inv: Vec<f64> = (0..b_count).map(|b| self.slices.iter().map(|s| s.inv_rate_sum[b]).sum()).collect();
        let pooled_entries: Vec<u64> = (0..b_count).map(|b| self.slices.iter().map(|s| s.entries[b]).sum()).collect();
        let pooled_moves: Vec<Vec<u64>> = (0..b_count)
            .map(|b| (0..b_count).map(|c| self.slices.iter().map(|s| s.transitions[b][c]).sum()).collect())
            .collect();
        let keep = 1.0 - self.exit_probability;

        let mut out = Calibration {
            shares: self.shares.clone(),
            relative: Vec::new(),
            delta: Vec::new(),
            routing: Vec::new(),
            holding: Vec::new(),
        };
        for rec in &self.slices {
            let total: u64 = rec.samples.iter().sum();
            out.relative.push(rec.samples.iter().map(|&n| n as f64 / total as f64).collect());
            out.delta.push(
                (0..b_count)
                    .map(|b| {
                        if rec.samples[b] > 0 {
                            rec.inv_rate_sum[b] / rec.samples[b] as f64
                        } else {
                            pooled_inv[b] / pooled_samples[b] as f64
                        }
                    })
                    .collect(),
            );
            out.holding.push(
                (0..b_count)
                    .map(|b| {
                        let (n, e) = if rec.entries[b] > 0 {
                            (rec.samples[b], rec.entries[b])
                        } else {
                            (pooled_samples[b], pooled_entries[b])
                        };
                        n as f64 * self.step_s / e as f64
                    })
                    .collect(),
            );
            out.routing.push(
                (0..b_count)
                    .map(|b| {
                        let own: u64 = rec.transitions[b].iter().sum();
                        let row = if own > 0 { &rec.transitions[b] } else { &pooled_moves[b] };
                        let sum: u64 = row.iter().sum();
                        if sum == 0 {
                            vec![0.0; b_count]
                        } else {
                            row.iter().map(|&n| keep * n as f64 / sum as f64).collect()
                        }
                    })
                    .collect(),
            );
        }
        Ok(out)
    }

    /// Writes the mobility trace as `time,user,x,y,sector`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Calibration {
    pub fn num_slices(&self) -> usize {
        self.shares.len()
    }

    pub fn num_sectors(&self) -> usize {
        self.relative[0].len()
    }

    /// Closed-population profile: each slice's relative load scaled to
    /// `N - 1`, the other users a tagged user sees in its own slice.
    pub fn closed_profile(&self, populations: &[usize]) -> Result<LoadProfile> {
        let totals: Vec<f64> = populations.iter().map(|&n| n.saturating_sub(1) as f64).collect();
        LoadProfile::from_relative(self.shares.clone(), &self.relative, &totals, self.delta.clone())
    }

    /// Open network with arrival rate `arrival_rate` at every sector for
    /// every slice and the calibrated routing, dwell times and capacities.
    pub fn open_model(&self, arrival_rate: f64) -> Result<TrafficModel> {
        let b = self.num_sectors();
        let slices = (0..self.num_slices())
            .map(|v| {
                SliceSpec::without_routing(self.shares[v], vec![arrival_rate; b], self.holding[v].clone())
                    .with_routing(self.routing[v].clone())
                    .with_delta(self.delta[v].clone())
            })
            .collect();
        TrafficModel::new(BaseStationSet::new(b)?, slices)
    }
}

/// Simulates `scenario` and calibrates the abstract model from the run.
pub fn simulate_and_calibrate(scenario: &RadioScenario, seed: u64) -> Result<Calibration> {
    simulate_radio(scenario, seed, false)?.calibrate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btd::mean_btd_scpf;
    use crate::linalg::norm2;
    use crate::model::derive_load_profile;
    use crate::radio::mobility::Hotspot;

    fn small_layout() -> HexLayout {
        HexLayout { rings: 1, ..HexLayout::default() }
    }

    fn scenario(users: usize, mobility: MobilityModel, horizon: f64) -> RadioScenario {
        let mut s = RadioScenario::new(vec![
            RadioSlice { share: 0.5, users, mobility: MobilityModel::default() },
            RadioSlice { share: 0.5, users, mobility },
        ]);
        s.layout = small_layout();
        s.horizon_s = horizon;
        s.warmup_s = 100.0;
        s
    }

    fn hotspot() -> MobilityModel {
        MobilityModel::hotspots(vec![Hotspot { x: 100.0, y: 60.0, spread: 50.0, weight: 1.0 }])
    }

    #[test]
    fn same_seed_same_run() {
        let s = scenario(6, hotspot(), 200.0);
        let a = simulate_radio(&s, 9, true).unwrap();
        let b = simulate_radio(&s, 9, true).unwrap();
        assert_eq!(a.tagged, b.tagged);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.slices[1].samples, b.slices[1].samples);
        let c = simulate_radio(&s, 10, false).unwrap();
        assert_ne!(a.tagged, c.tagged);
        assert!(c.trace.is_empty());
    }

    #[test]
    fn calibration_is_well_formed() {
        let s = scenario(20, hotspot(), 800.0);
        let run = simulate_radio(&s, 1, false).unwrap();
        let cal = run.calibrate().unwrap();
        assert_eq!(cal.num_sectors(), 21);
        for v in 0..2 {
            let sum: f64 = cal.relative[v].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for row in &cal.routing[v] {
                let out: f64 = row.iter().sum();
                assert!(out <= 0.9 + 1e-12 && row.iter().all(|q| *q >= 0.0));
            }
            assert!(cal.holding[v].iter().all(|h| *h >= 1.0));
            assert!(cal.delta[v].iter().all(|d| *d > 0.0 && d.is_finite()));
        }
        // the open model built from the calibration is solvable
        let model = cal.open_model(0.05).unwrap();
        let profile = derive_load_profile(&model).unwrap();
        assert!(profile.total(1) > 0.0);
    }

    #[test]
    fn hotspots_concentrate_load() {
        let s = scenario(30, hotspot(), 800.0);
        let cal = simulate_and_calibrate(&s, 4).unwrap();
        let uniform = 1.0 / (cal.num_sectors() as f64).sqrt();
        let rwp = norm2(&cal.relative[0]);
        let hot = norm2(&cal.relative[1]);
        assert!(hot > uniform && hot > 1.3 * rwp, "rwp {rwp}, hotspot {hot}, uniform {uniform}");
        assert!(rwp < 1.6 * uniform, "rwp {rwp}");
    }

    #[test]
    fn higher_sinr_sectors_have_lower_delta() {
        let s = scenario(30, MobilityModel::default(), 900.0);
        let run = simulate_radio(&s, 5, false).unwrap();
        let cal = run.calibrate().unwrap();
        let sinr = run.mean_sinr_db();
        let delta: Vec<f64> = (0..cal.num_sectors())
            .map(|b| {
                let n: u64 = run.slices.iter().map(|r| r.samples[b]).sum();
                run.slices.iter().map(|r| r.inv_rate_sum[b]).sum::<f64>() / n as f64
            })
            .collect();
        let mut pairs = 0;
        for a in 0..delta.len() {
            for b in 0..delta.len() {
                if sinr[a] > sinr[b] + 3.0 {
                    pairs += 1;
                    assert!(delta[a] < delta[b], "sector {a} ({} dB) vs {b} ({} dB)", sinr[a], sinr[b]);
                }
            }
        }
        assert!(pairs > 0);
        let floor = 1.0 / s.rate_map.rate(0.1);
        assert!(cal.delta.iter().flatten().all(|d| *d <= floor + 1e-12));
    }

    #[test]
    fn starved_sectors_are_reported() {
        let mut s = scenario(2, hotspot(), 150.0);
        s.min_samples = 1000;
        match simulate_and_calibrate(&s, 2) {
            Err(Error::InsufficientSamples(list)) => assert!(!list.is_empty()),
            other => panic!("expected starved sectors, got {other:?}"),
        }
    }

    #[test]
    fn closed_formula_tracks_measured_scpf_btd() {
        let base = scenario(40, hotspot(), 1500.0);
        let cal = simulate_and_calibrate(&base, 11).unwrap();
        for (k, users) in [15usize, 40].into_iter().enumerate() {
            let s = base.with_populations(&[users, users]);
            let run = simulate_radio(&s, 100 + k as u64, false).unwrap();
            let profile = cal.closed_profile(&[users, users]).unwrap();
            for v in 0..2 {
                let theory = mean_btd_scpf(&profile, v).unwrap();
                let measured = run.measured_btd(v, Scheme::Scpf).mean();
                assert!((theory / measured - 1.0).abs() < 0.1, "users {users} slice {v}: {theory} vs {measured}");
            }
        }
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = scenario(5, hotspot(), 100.0);
        s.warmup_s = 200.0;
        assert!(s.validate().is_err());
        let mut s = scenario(5, hotspot(), 300.0);
        s.slices[0].share = 0.7;
        assert!(s.validate().is_err());
        let s = scenario(0, hotspot(), 300.0);
        assert!(s.validate().is_err());
    }
}
