//! Command runners: each turns a configuration into result rows or a
//! structured solution.

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{NetworkConfig, ScenarioConfig};
use super::results::ResultTable;
use crate::allocation::Scheme;
use crate::btd::{btd_report, heavy_gain_from_geometry, mean_btd_scpf};
use crate::dimensioning::{coupling_matrix, solve_maxmin_shares, verify_shares, Admissibility, CouplingMatrix, ShareCheck};
use crate::error::{Error, Result};
use crate::game::gnep::equilibrium_from_run;
use crate::game::{run_gnep, saturated_equilibrium, EquilibriumResult};
use crate::linalg::norm2;
use crate::mc::palm_estimate_btd_with;
use crate::mc::stats::substream;
use crate::model::{derive_load_profile, load_geometry_euclidean, CapacityModel, LoadProfile, TrafficModel};
use crate::radio::{simulate_radio, Calibration, RadioRun, RadioScenario};

/// Seed of the `index`-th independent sub-experiment of a run seeded with
/// `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    substream(seed, index).next_u64()
}

fn table(config: &ScenarioConfig) -> ResultTable {
    ResultTable::new(&config.name, &config.hash(), config.seed)
}

fn network_model(config: &ScenarioConfig) -> Result<Option<TrafficModel>> {
    config.network.as_ref().map(NetworkConfig::to_model).transpose()
}

fn require_source(config: &ScenarioConfig) -> Result<()> {
    if config.network.is_none() && config.radio.is_none() {
        return Err(Error::Config(format!("scenario {} has neither [network] nor [radio]", config.name)));
    }
    Ok(())
}

/// Calibrates the radio scenario, if any, on the run's first substream.
fn calibrate(config: &ScenarioConfig) -> Result<Option<(RadioRun, Calibration)>> {
    let Some(radio) = &config.radio else { return Ok(None) };
    let run = simulate_radio(radio, derive_seed(config.require_seed()?, 0), config.experiment.trace)?;
    let cal = run.calibrate()?;
    Ok(Some((run, cal)))
}

/// Load profile of the configured source: the network's flow-conservation
/// loads, or the calibrated closed-population loads of the radio scenario.
fn base_profile(config: &ScenarioConfig) -> Result<LoadProfile> {
    require_source(config)?;
    if let Some(model) = network_model(config)? {
        return derive_load_profile(&model);
    }
    let (_, cal) = calibrate(config)?.expect("radio source");
    cal.closed_profile(&config.radio.as_ref().expect("radio source").populations())
}

fn sweep_profiles(config: &ScenarioConfig, base: &LoadProfile) -> Result<Vec<(f64, LoadProfile)>> {
    if config.experiment.grid.is_empty() {
        let total: f64 = (0..base.num_slices()).map(|v| base.total(v)).sum();
        return Ok(vec![(total / base.num_slices() as f64, base.clone())]);
    }
    config
        .experiment
        .grid
        .iter()
        .map(|&x| {
            if !(x > 0.0) {
                return Err(Error::Config("load grid values must be positive".into()));
            }
            Ok((x, base.with_uniform_total(x)?))
        })
        .collect()
}

/// Per-slice BTD, gains and their load limits, plus network-wide gains,
/// at every grid load.
pub fn analyze(config: &ScenarioConfig) -> Result<ResultTable> {
    let mut out = table(config);
    for (i, g) in config.experiment.geometry.iter().enumerate() {
        out.push(Some(i), "ss", 0.0, "gain_heavy_geometry", heavy_gain_from_geometry(g.relative_norm, g.aggregate_norm, g.angle_deg), None);
    }
    if config.network.is_none() && config.radio.is_none() {
        if config.experiment.geometry.is_empty() {
            require_source(config)?;
        }
        return Ok(out);
    }
    let base = base_profile(config)?;
    let points = sweep_profiles(config, &base)?;
    let reports = points.par_iter().map(|(_, p)| btd_report(p)).collect::<Result<Vec<_>>>()?;
    for ((x, profile), report) in points.iter().zip(reports) {
        let x = *x;
        for s in &report.slices {
            let v = Some(s.slice);
            for (scheme, btd, normalized) in [("scpf", s.scpf, s.normalized_scpf), ("ss", s.ss, s.normalized_ss), ("gps", s.gps, s.normalized_gps)] {
                out.push(v, scheme, x, "btd", btd, None);
                out.push(v, scheme, x, "normalized_btd", normalized, None);
            }
            out.push(v, "scpf", x, "btd_asymptotic", s.scpf_asymptotic, None);
            out.push(v, "ss", x, "gain", s.gain_ss, None);
            out.push(v, "gps", x, "gain", s.gain_gps, None);
            out.push(v, "ss", x, "gain_light", s.limits.ss_light, None);
            out.push(v, "gps", x, "gain_light", s.limits.gps_light, None);
            out.push(v, "ss", x, "gain_heavy", s.limits.ss_heavy, None);
            out.push(v, "gps", x, "gain_heavy", s.limits.gps_heavy, None);
            let geo = load_geometry_euclidean(profile, s.slice)?;
            out.push(v, "", x, "relative_norm", geo.relative_norm, None);
            out.push(v, "", x, "angle_deg", geo.angle_deg, None);
        }
        out.push(None, "ss", x, "overall_gain", report.overall.ss, None);
        out.push(None, "gps", x, "overall_gain", report.overall.gps, None);
        out.push(None, "ss", x, "overall_gain_heavy", report.overall.ss_heavy, None);
        out.push(None, "gps", x, "overall_gain_heavy", report.overall.gps_heavy, None);
        out.push(None, "", x, "aggregate_norm", norm2(profile.aggregate()?), None);
    }
    Ok(out)
}

/// Palm Monte Carlo BTD against the closed forms, with a pass flag per
/// comparison.
pub fn simulate(config: &ScenarioConfig) -> Result<ResultTable> {
    let seed = config.require_seed()?;
    let base = base_profile(config)?;
    let capacity: Vec<CapacityModel> = match network_model(config)? {
        Some(m) => m.slices().iter().map(|s| s.capacity).collect(),
        None => vec![CapacityModel::Deterministic; base.num_slices()],
    };
    let points = sweep_profiles(config, &base)?;
    let e = &config.experiment;
    let mut out = table(config);
    let mut index = 1;
    for (x, profile) in &points {
        let report = btd_report(profile)?;
        for s in &report.slices {
            for (scheme, exact) in [(Scheme::Scpf, s.scpf), (Scheme::Ss, s.ss), (Scheme::Gps, s.gps)] {
                let est = palm_estimate_btd_with(profile, &capacity, s.slice, scheme, e.reps, derive_seed(seed, index))?;
                index += 1;
                let v = Some(s.slice);
                let z = (est.estimate - exact) / est.std_error;
                out.push(v, scheme.name(), *x, "mc_btd", est.estimate, Some(est.std_error));
                out.push(v, scheme.name(), *x, "analytic_btd", exact, None);
                out.push(v, scheme.name(), *x, "z_score", z, None);
                out.push(v, scheme.name(), *x, "within_tol", f64::from(u8::from(est.covers(exact, e.tol))), None);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionOutput {
    pub scenario: String,
    pub config_hash: String,
    pub shares: Vec<f64>,
    /// Smallest slack `min_v (H s)_v` at the optimum.
    pub objective: f64,
    pub status: Admissibility,
    pub coupling: Vec<Vec<f64>>,
    /// `H s` per slice.
    pub slacks: Vec<f64>,
    /// BTD check of the optimal shares, when a model is configured.
    pub check: Option<ShareCheck>,
}

fn targets_or_slice_targets(config: &ScenarioConfig, slices: usize) -> Result<Vec<f64>> {
    if let Some(t) = &config.experiment.targets {
        return Ok(t.clone());
    }
    if let Some(net) = &config.network {
        if let Some(t) = net.slices.iter().map(|s| s.target).collect::<Option<Vec<f64>>>() {
            return Ok(t);
        }
    }
    Err(Error::Config(format!("scenario {} needs targets for its {slices} slices", config.name)))
}

/// Max-min share dimensioning.
pub fn dimension(config: &ScenarioConfig) -> Result<DimensionOutput> {
    let (h, check_profile) = match &config.experiment.coupling {
        Some(entries) => (CouplingMatrix::from_entries(entries.clone()), None),
        None => {
            let profile = base_profile(config)?;
            let targets = targets_or_slice_targets(config, profile.num_slices())?;
            (coupling_matrix(&profile, &targets)?, Some((profile, targets)))
        }
    };
    let sol = solve_maxmin_shares(&h)?;
    let check = check_profile.map(|(p, t)| verify_shares(&sol.shares, &p, &t)).transpose()?;
    Ok(DimensionOutput {
        scenario: config.name.clone(),
        config_hash: config.hash(),
        slacks: h.apply(&sol.shares),
        shares: sol.shares,
        objective: sol.objective,
        status: sol.status,
        coupling: h.entries,
        check,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GamePoint {
    pub arrival_scale: f64,
    pub equilibrium: EquilibriumResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct GameOutput {
    pub scenario: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub targets: Vec<f64>,
    /// Closed-form saturated equilibrium at the largest arrival scale.
    pub saturated: EquilibriumResult,
    pub points: Vec<GamePoint>,
    #[serde(skip)]
    pub table: ResultTable,
}

/// Traffic-shaping equilibria over an arrival-rate sweep, compared with the
/// saturated closed form.
pub fn game(config: &ScenarioConfig) -> Result<GameOutput> {
    require_source(config)?;
    let e = &config.experiment;
    let calibrated = calibrate(config)?;
    let model_at = |scale: f64| -> Result<TrafficModel> {
        match (&calibrated, network_model(config)?) {
            (_, Some(m)) => Ok(m.scale_arrivals(scale)),
            (Some((_, cal)), None) => cal.open_model(e.arrival_rate * scale),
            (None, None) => unreachable!("source checked"),
        }
    };
    let grid = if e.grid.is_empty() { vec![1.0] } else { e.grid.clone() };
    if grid.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Config("arrival scales must be positive".into()));
    }
    let slices = model_at(1.0)?.num_slices();
    let targets = targets_or_slice_targets(config, slices)?;
    let top = grid.iter().cloned().fold(f64::MIN, f64::max);
    let saturated = saturated_equilibrium(&model_at(top)?, &targets)?;
    let points = grid
        .par_iter()
        .map(|&scale| {
            let model = model_at(scale)?;
            let run = run_gnep(&model, &targets, &e.game)?;
            Ok(GamePoint { arrival_scale: scale, equilibrium: equilibrium_from_run(&model, &targets, run)? })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = table(config);
    for p in &points {
        let (x, eq) = (p.arrival_scale, &p.equilibrium);
        for v in 0..slices {
            out.push(Some(v), "scpf", x, "carried_load", eq.loads[v], None);
            out.push(Some(v), "ss", x, "carried_load", eq.ss_loads[v], None);
            out.push(Some(v), "ss", x, "load_gain", eq.gains[v], None);
            out.push(Some(v), "ss", x, "saturated_gain", saturated.gains[v], None);
            out.push(Some(v), "scpf", x, "relative_norm", norm2(&eq.relative[v]), None);
        }
        out.push(None, "scpf", x, "aggregate_norm", norm2(&eq.aggregate), None);
        if let Some(r) = &eq.solver {
            out.push(None, "scpf", x, "omega", r.omega, None);
            out.push(None, "scpf", x, "iterations", r.iterations as f64, None);
            out.push(None, "scpf", x, "converged", f64::from(u8::from(r.converged)), None);
        }
    }
    Ok(GameOutput {
        scenario: config.name.clone(),
        config_hash: config.hash(),
        seed: config.seed,
        targets,
        saturated,
        points,
        table: out,
    })
}

/// Measured against predicted SCPF BTD for one population vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedLoopPoint {
    pub slice: usize,
    pub users: usize,
    pub measured: f64,
    pub measured_stderr: f64,
    pub predicted: f64,
}

impl ClosedLoopPoint {
    pub fn relative_error(&self) -> f64 {
        (self.predicted - self.measured).abs() / self.measured
    }
}

/// Simulates `scenario` at each population vector on its own substream and
/// compares the measured SCPF BTD with the calibrated closed form.
pub fn closed_loop_sweep(
    scenario: &RadioScenario,
    calibration: &Calibration,
    populations: &[Vec<usize>],
    seed: u64,
) -> Result<Vec<Vec<ClosedLoopPoint>>> {
    populations
        .iter()
        .enumerate()
        .map(|(k, pops)| {
            let run = simulate_radio(&scenario.with_populations(pops), derive_seed(seed, k as u64 + 1), false)?;
            closed_loop_points(&run, calibration, pops)
        })
        .collect()
}

fn closed_loop_points(run: &RadioRun, calibration: &Calibration, pops: &[usize]) -> Result<Vec<ClosedLoopPoint>> {
    let profile = calibration.closed_profile(pops)?;
    (0..pops.len())
        .map(|v| {
            let m = run.measured_btd(v, Scheme::Scpf);
            Ok(ClosedLoopPoint {
                slice: v,
                users: pops[v],
                measured: m.mean(),
                measured_stderr: m.std_error(),
                predicted: mean_btd_scpf(&profile, v)?,
            })
        })
        .collect()
}

pub struct RadioOutput {
    pub run: RadioRun,
    pub calibration: Calibration,
    /// Open-network scenario built from the calibration, consumable by the
    /// other commands.
    pub calibrated: ScenarioConfig,
    pub table: ResultTable,
}

/// Calibrates the radio scenario and validates the calibrated model over a
/// population sweep.
pub fn radio(config: &ScenarioConfig) -> Result<RadioOutput> {
    let seed = config.require_seed()?;
    let scenario = config.radio.as_ref().ok_or_else(|| Error::Config(format!("scenario {} has no [radio] block", config.name)))?;
    let (run, calibration) = calibrate(config)?.expect("radio source");
    let mut out = table(config);

    let base = scenario.populations();
    let sweep: Vec<Vec<usize>> = config.experiment.grid.iter().map(|&n| vec![n.round() as usize; base.len()]).collect();
    let mut rows = vec![closed_loop_points(&run, &calibration, &base)?];
    rows.extend(closed_loop_sweep(scenario, &calibration, &sweep, seed)?);
    for (k, points) in rows.iter().enumerate() {
        let pops: Vec<usize> = points.iter().map(|p| p.users).collect();
        let x = pops.iter().sum::<usize>() as f64 / pops.len() as f64;
        for p in points {
            let v = Some(p.slice);
            out.push(v, "scpf", x, "measured_btd", p.measured, Some(p.measured_stderr));
            out.push(v, "scpf", x, "predicted_btd", p.predicted, None);
            out.push(v, "scpf", x, "relative_error", p.relative_error(), None);
        }
        if k == 0 {
            for v in 0..base.len() {
                for scheme in [Scheme::Ss, Scheme::Gps] {
                    let m = run.measured_btd(v, scheme);
                    out.push(Some(v), scheme.name(), x, "measured_btd", m.mean(), Some(m.std_error()));
                }
                out.push(Some(v), "", x, "relative_norm", norm2(&calibration.relative[v]), None);
            }
        }
    }

    let model = calibration.open_model(config.experiment.arrival_rate)?;
    let calibrated = ScenarioConfig {
        name: format!("{}-calibrated", config.name),
        seed: config.seed,
        network: Some(NetworkConfig::from_model(&model)),
        radio: None,
        experiment: config.experiment.clone(),
    };
    Ok(RadioOutput { run, calibration, calibrated, table: out })
}
