//! Penalized best-response iteration with an inexact line search on the
//! regularized gap `Omega` and multiplier doubling.

use rayon::prelude::*;
use serde::Serialize;

use super::best_response::{penalized_best_response, ss_admission_policy, BestResponse, SliceProblem};
use super::mobility::MobilityOperator;
use super::{admission_vector, aggregate_of, check_targets, operators, AdmissionPolicy, EquilibriumResult};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::TrafficModel;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameParams {
    /// Proximal weight on the reciprocal load.
    pub epsilon: f64,
    /// Backtracking factor.
    pub beta: f64,
    /// Sufficient-decrease constant.
    pub sigma: f64,
    /// Multiplier-doubling threshold.
    pub eta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub initial_multiplier: f64,
    pub max_backtracks: u32,
    /// How many times `epsilon` may be halved after a failed line search.
    pub epsilon_halvings: u32,
}

impl Default for GameParams {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            beta: 0.5,
            sigma: 0.1,
            eta: 0.5,
            tol: 1e-6,
            max_iter: 500,
            initial_multiplier: 1.0,
            max_backtracks: 60,
            epsilon_halvings: 4,
        }
    }
}

impl GameParams {
    fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !(self.epsilon > 0.0) || !unit(self.beta) || !unit(self.sigma) || !unit(self.eta) || !(self.tol > 0.0) {
            return Err(Error::InvalidModel("game parameters: need epsilon > 0, tol > 0 and beta, sigma, eta in (0, 1)".into()));
        }
        if !(self.initial_multiplier >= 0.0) {
            return Err(Error::InvalidModel("initial multiplier must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Current joint strategy and penalty multipliers.
#[derive(Debug, Clone, Serialize)]
pub struct GameState {
    pub policies: Vec<AdmissionPolicy>,
    pub multipliers: Vec<f64>,
    pub epsilon: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub omega: f64,
    /// Accepted step, zero on the final record.
    pub step: f64,
    pub direction_norm: f64,
    pub epsilon: f64,
    pub multipliers: Vec<f64>,
    pub penalties: Vec<f64>,
    pub loads: Vec<f64>,
}

/// Solver diagnostics attached to a computed equilibrium.
#[derive(Debug, Clone, Serialize)]
pub struct GnepReport {
    pub converged: bool,
    pub iterations: usize,
    pub omega: f64,
    pub epsilon: f64,
    pub multipliers: Vec<f64>,
    /// BTD penalty `h_v` at the output.
    pub penalties: Vec<f64>,
    /// Decrease of `e^x + lambda [h]_+` a slice could still obtain alone.
    pub unilateral_improvement: Vec<f64>,
    pub trace: Vec<IterationRecord>,
}

struct Game<'a> {
    ops: &'a [MobilityOperator],
    shares: Vec<f64>,
    targets: &'a [f64],
}

impl Game<'_> {
    fn others(&self, policies: &[AdmissionPolicy], v: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.ops[v].num_stations()];
        for (u, p) in policies.iter().enumerate().filter(|(u, _)| *u != v) {
            for (gb, r) in g.iter_mut().zip(&p.relative) {
                *gb += self.shares[u] * r;
            }
        }
        g
    }

    fn problem(&self, policies: &[AdmissionPolicy], v: usize) -> SliceProblem<'_> {
        SliceProblem::scpf(&self.ops[v], self.shares[v], self.targets[v], &self.others(policies, v))
    }

    fn penalty(&self, policies: &[AdmissionPolicy], v: usize) -> f64 {
        let g = aggregate_of(policies, &self.shares);
        dot(&g, &policies[v].relative) - self.shares[v] * (self.targets[v] - 1.0) * policies[v].x
    }

    fn theta(&self, policies: &[AdmissionPolicy], v: usize, lambda: f64) -> f64 {
        policies[v].x.exp() + lambda * self.penalty(policies, v).max(0.0)
    }

    fn best_responses(&self, policies: &[AdmissionPolicy], multipliers: &[f64], epsilon: f64) -> Result<Vec<BestResponse>> {
        (0..self.ops.len())
            .into_par_iter()
            .map(|v| penalized_best_response(&self.problem(policies, v), multipliers[v], epsilon, policies[v].x))
            .collect()
    }

    /// Per-slice terms of `Omega`, each clamped at zero against rounding.
    fn omega_terms(&self, policies: &[AdmissionPolicy], multipliers: &[f64], epsilon: f64, brs: &[BestResponse]) -> Vec<f64> {
        (0..self.ops.len())
            .map(|v| {
                let current = self.theta(policies, v, multipliers[v]);
                let dx = policies[v].x - brs[v].policy.x;
                (current - brs[v].theta - 0.5 * epsilon * dx * dx).max(0.0)
            })
            .collect()
    }

    /// Largest `beta^l` along `dir` with sufficient decrease of `Omega`.
    fn line_search(
        &self,
        state: &GameState,
        dir: &[AdmissionPolicy],
        norm: f64,
        omega: f64,
        params: &GameParams,
    ) -> Result<Option<Accepted>> {
        let mut t = 1.0;
        for _ in 0..=params.max_backtracks {
            let trial = step(&state.policies, dir, t);
            let responses = self.best_responses(&trial, &state.multipliers, state.epsilon)?;
            let trial_omega: f64 = self.omega_terms(&trial, &state.multipliers, state.epsilon, &responses).iter().sum();
            // a decrease lost in rounding is no decrease
            if trial_omega < omega && trial_omega <= omega - params.sigma * t * t * norm {
                return Ok(Some(Accepted { policies: trial, responses, omega: trial_omega, step: t }));
            }
            t *= params.beta;
        }
        Ok(None)
    }

    /// Each slice in turn moves to its penalized best response against the
    /// already updated others.
    fn sequential_sweep(&self, state: &GameState) -> Result<Accepted> {
        let mut policies = state.policies.clone();
        for v in 0..self.ops.len() {
            let br = penalized_best_response(&self.problem(&policies, v), state.multipliers[v], state.epsilon, policies[v].x)?;
            policies[v] = br.policy;
        }
        let responses = self.best_responses(&policies, &state.multipliers, state.epsilon)?;
        let omega = self.omega_terms(&policies, &state.multipliers, state.epsilon, &responses).iter().sum();
        Ok(Accepted { policies, responses, omega, step: 1.0 })
    }

    fn gradient_norm(&self, policies: &[AdmissionPolicy], v: usize) -> f64 {
        // d/d rel <g, rel> with g containing share * rel, and d/dx = -budget
        let g = aggregate_of(policies, &self.shares);
        let s = self.shares[v];
        let grad: f64 = g.iter().zip(&policies[v].relative).map(|(gb, r)| (gb + s * r).powi(2)).sum();
        let budget = s * (self.targets[v] - 1.0);
        (grad + budget * budget).sqrt()
    }
}

/// Past values of `Omega` a sweep may be compared against.
const NONMONOTONE_WINDOW: usize = 10;

struct Accepted {
    policies: Vec<AdmissionPolicy>,
    responses: Vec<BestResponse>,
    omega: f64,
    step: f64,
}

fn direction_norm(dir: &[AdmissionPolicy]) -> f64 {
    dir.iter()
        .map(|d| d.relative.iter().map(|r| r * r).sum::<f64>() + d.x * d.x)
        .sum::<f64>()
        .sqrt()
}

fn direction(policies: &[AdmissionPolicy], brs: &[BestResponse]) -> (Vec<AdmissionPolicy>, f64) {
    let dir: Vec<AdmissionPolicy> = policies
        .iter()
        .zip(brs)
        .map(|(p, b)| {
            let alpha: Vec<f64> = b.policy.alpha.iter().zip(&p.alpha).map(|(a, c)| a - c).collect();
            let relative: Vec<f64> = b.policy.relative.iter().zip(&p.relative).map(|(a, c)| a - c).collect();
            AdmissionPolicy { alpha, relative, x: b.policy.x - p.x }
        })
        .collect();
    let norm = direction_norm(&dir);
    (dir, norm)
}

fn step(policies: &[AdmissionPolicy], dir: &[AdmissionPolicy], t: f64) -> Vec<AdmissionPolicy> {
    policies
        .iter()
        .zip(dir)
        .map(|(p, d)| AdmissionPolicy {
            alpha: p.alpha.iter().zip(&d.alpha).map(|(a, b)| (a + t * b).max(0.0)).collect(),
            relative: p.relative.iter().zip(&d.relative).map(|(a, b)| a + t * b).collect(),
            x: p.x + t * d.x,
        })
        .collect()
}

/// Every slice admits all arrivals.
pub fn initial_state(ops: &[MobilityOperator], multiplier: f64, epsilon: f64) -> GameState {
    let policies = ops
        .iter()
        .map(|op| {
            let x = op.min_reciprocal_load();
            let alpha = vec![x; op.dim()];
            let relative = op.relative(&alpha);
            AdmissionPolicy { alpha, relative, x }
        })
        .collect();
    GameState { policies, multipliers: vec![multiplier; ops.len()], epsilon, iteration: 0 }
}

/// Outcome of a run, converged or not.
#[derive(Debug, Clone)]
pub struct GnepRun {
    pub state: GameState,
    pub report: GnepReport,
}

/// Runs the iteration to `tol` or `max_iter` without treating
/// non-convergence as an error.
pub fn run_gnep(model: &TrafficModel, targets: &[f64], params: &GameParams) -> Result<GnepRun> {
    params.validate()?;
    check_targets(model.num_slices(), targets)?;
    let ops = operators(model)?;
    for (v, op) in ops.iter().enumerate() {
        if op.dim() == 0 {
            return Err(Error::EmptyPolytope { slice: v });
        }
    }
    let game = Game { ops: &ops, shares: model.shares(), targets };
    let mut state = initial_state(&ops, params.initial_multiplier, params.epsilon);
    let mut trace = Vec::new();
    let mut halvings = 0;
    let mut recent: std::collections::VecDeque<f64> = std::collections::VecDeque::new();

    let mut brs = game.best_responses(&state.policies, &state.multipliers, state.epsilon)?;
    let mut omega: f64 = game.omega_terms(&state.policies, &state.multipliers, state.epsilon, &brs).iter().sum();
    let mut converged = false;
    loop {
        let (dir, norm) = direction(&state.policies, &brs);
        let penalties: Vec<f64> = (0..ops.len()).map(|v| game.penalty(&state.policies, v)).collect();
        let loads = state.policies.iter().map(|p| 1.0 / p.x).collect();
        let mut record = IterationRecord {
            iteration: state.iteration,
            omega,
            step: 0.0,
            direction_norm: norm,
            epsilon: state.epsilon,
            multipliers: state.multipliers.clone(),
            penalties,
            loads,
        };
        if omega < params.tol {
            converged = true;
            trace.push(record);
            break;
        }
        if state.iteration >= params.max_iter {
            trace.push(record);
            break;
        }

        let mut accepted = game.line_search(&state, &dir, norm, omega, params)?;
        if accepted.is_none() {
            // the joint direction need not descend when one slice's response
            // degrades the others; a sequential sweep still makes progress
            let sweep = game.sequential_sweep(&state)?;
            let reference = recent.iter().cloned().fold(omega, f64::max);
            if sweep.omega < reference {
                accepted = Some(sweep);
            }
        }
        let Some(Accepted { policies: next, responses: next_brs, omega: next_omega, step: t }) = accepted else {
            if halvings >= params.epsilon_halvings {
                return Err(Error::LineSearchExhausted { iteration: state.iteration, omega });
            }
            halvings += 1;
            state.epsilon *= 0.5;
            log::warn!("no descent at iteration {}; halving epsilon to {}", state.iteration, state.epsilon);
            brs = game.best_responses(&state.policies, &state.multipliers, state.epsilon)?;
            omega = game.omega_terms(&state.policies, &state.multipliers, state.epsilon, &brs).iter().sum();
            continue;
        };
        record.step = t;
        trace.push(record);
        recent.push_back(omega);
        if recent.len() > NONMONOTONE_WINDOW {
            recent.pop_front();
        }
        state.policies = next;
        state.iteration += 1;

        // double the multipliers of violated slices whose penalty is too weak
        let mut changed = false;
        for v in 0..ops.len() {
            if game.penalty(&state.policies, v) > 0.0 {
                let grad = game.gradient_norm(&state.policies, v);
                if state.policies[v].x.exp() > params.eta * state.multipliers[v] * grad {
                    state.multipliers[v] *= 2.0;
                    changed = true;
                }
            }
        }
        if changed {
            brs = game.best_responses(&state.policies, &state.multipliers, state.epsilon)?;
            omega = game.omega_terms(&state.policies, &state.multipliers, state.epsilon, &brs).iter().sum();
        } else {
            brs = next_brs;
            omega = next_omega;
        }
    }

    // what each slice could still gain alone, without the proximal term
    let unilateral_improvement = (0..ops.len())
        .map(|v| {
            let problem = game.problem(&state.policies, v);
            let br = penalized_best_response(&problem, state.multipliers[v], 0.0, state.policies[v].x)?;
            Ok((game.theta(&state.policies, v, state.multipliers[v]) - br.theta).max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let penalties = (0..ops.len()).map(|v| game.penalty(&state.policies, v)).collect();
    let report = GnepReport {
        converged,
        iterations: state.iteration,
        omega,
        epsilon: state.epsilon,
        multipliers: state.multipliers.clone(),
        penalties,
        unilateral_improvement,
        trace,
    };
    Ok(GnepRun { state, report })
}

/// Equilibrium of the shaping game with the static-slicing benchmark at the
/// same arrival rates.
pub fn solve_gnep(model: &TrafficModel, targets: &[f64], params: &GameParams) -> Result<EquilibriumResult> {
    let run = run_gnep(model, targets, params)?;
    if !run.report.converged {
        let max_penalty = run.report.penalties.iter().fold(0.0_f64, |m, h| m.max(*h));
        return Err(Error::NoConvergence { iterations: run.report.iterations, omega: run.report.omega, max_penalty });
    }
    equilibrium_from_run(model, targets, run)
}

/// Packages a run (converged or not) with the static-slicing benchmark.
pub fn equilibrium_from_run(model: &TrafficModel, targets: &[f64], run: GnepRun) -> Result<EquilibriumResult> {
    let ops = operators(model)?;
    let shares = model.shares();
    let policies = &run.state.policies;
    let loads: Vec<f64> = policies.iter().map(|p| 1.0 / p.x).collect();
    let admission: Vec<Vec<f64>> = ops.iter().zip(policies).map(|(op, p)| admission_vector(op, &p.alpha, 1.0 / p.x)).collect();
    let saturated = admission.iter().flatten().all(|a| *a < 1.0 - 1e-9);
    let mut ss_relative = Vec::with_capacity(ops.len());
    let mut ss_loads = Vec::with_capacity(ops.len());
    for (v, op) in ops.iter().enumerate() {
        let p = ss_admission_policy(op, v, shares[v], targets[v])?;
        ss_loads.push(1.0 / p.x);
        ss_relative.push(p.relative);
    }
    let gains = loads.iter().zip(&ss_loads).map(|(a, b)| a / b).collect();
    Ok(EquilibriumResult {
        relative: policies.iter().map(|p| p.relative.clone()).collect(),
        loads,
        admission,
        aggregate: aggregate_of(policies, &shares),
        ss_relative,
        ss_loads,
        gains,
        kkt: None,
        saturated,
        solver: Some(run.report),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::best_response::admission_control;
    use crate::game::fixtures::{drifting_slice, model, ring_slice};
    use crate::game::saturated_equilibrium;

    fn heavy_model() -> TrafficModel {
        model(vec![
            ring_slice(4, 1.0 / 3.0, 0.2, 50.0),
            drifting_slice(4, 1.0 / 3.0, vec![50.0, 80.0, 40.0, 60.0], vec![1.0, 2.0, 1.0, 1.5]),
            drifting_slice(4, 1.0 / 3.0, vec![30.0, 20.0, 90.0, 60.0], vec![1.0, 1.0, 0.5, 1.5]),
        ])
    }

    #[test]
    fn heavy_load_reaches_the_saturated_equilibrium() {
        let m = heavy_model();
        let targets = [10.0, 12.0, 15.0];
        let sat = saturated_equilibrium(&m, &targets).unwrap();
        let eq = solve_gnep(&m, &targets, &GameParams::default()).unwrap();
        let report = eq.solver.as_ref().unwrap();
        assert!(report.converged && report.omega < 1e-6);
        assert!(report.unilateral_improvement.iter().all(|u| *u < 1e-6));
        assert!(eq.saturated);
        for v in 0..3 {
            assert!((eq.loads[v] / sat.loads[v] - 1.0).abs() < 1e-4, "{v}: {} vs {}", eq.loads[v], sat.loads[v]);
            assert!((eq.gains[v] / sat.gains[v] - 1.0).abs() < 1e-4);
            assert!(report.penalties[v] <= 1e-5);
        }
    }

    #[test]
    fn trace_is_well_formed() {
        let run = run_gnep(&heavy_model(), &[10.0, 12.0, 15.0], &GameParams::default()).unwrap();
        let trace = &run.report.trace;
        assert_eq!(trace.len(), run.report.iterations + 1);
        for pair in trace.windows(2) {
            assert!(pair[0].omega >= 0.0);
            assert!(pair[0].step > 0.0 && pair[0].step <= 1.0);
            for (a, b) in pair[0].multipliers.iter().zip(&pair[1].multipliers) {
                assert!(b >= a);
            }
        }
    }

    #[test]
    fn single_slice_matches_admission_control() {
        let m = model(vec![drifting_slice(4, 1.0, vec![40.0, 10.0, 70.0, 20.0], vec![1.0, 0.5, 2.0, 1.0])]);
        let eq = solve_gnep(&m, &[6.0], &GameParams::default()).unwrap();
        let op = MobilityOperator::from_slice(&m.slices()[0]).unwrap();
        let ac = admission_control(&SliceProblem::scpf(&op, 1.0, 6.0, &[0.0; 4])).unwrap();
        assert!((eq.loads[0] * ac.x - 1.0).abs() < 1e-4, "{} vs {}", eq.loads[0], 1.0 / ac.x);
        // alone, the slice is its own static slice
        assert!((eq.gains[0] - eq.loads[0] * ac.x).abs() < 1e-12);
    }

    #[test]
    fn light_load_admits_everything_at_once() {
        let m = model(vec![ring_slice(4, 0.5, 0.3, 0.01), ring_slice(4, 0.5, 0.1, 0.02)]);
        let params = GameParams::default();
        let eq = solve_gnep(&m, &[10.0, 10.0], &params).unwrap();
        let report = eq.solver.as_ref().unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(report.omega, 0.0);
        assert_eq!(report.multipliers, vec![params.initial_multiplier; 2]);
        for a in eq.admission.iter().flatten() {
            assert!((a - 1.0).abs() < 1e-12);
        }
        assert!(!eq.saturated);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let params = GameParams { max_iter: 1, ..GameParams::default() };
        let err = solve_gnep(&heavy_model(), &[10.0, 12.0, 15.0], &params).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 1, .. }));
        let run = run_gnep(&heavy_model(), &[10.0, 12.0, 15.0], &params).unwrap();
        assert!(!run.report.converged);
    }

    #[test]
    fn bad_parameters_and_targets_are_rejected() {
        let m = heavy_model();
        let bad = GameParams { beta: 1.5, ..GameParams::default() };
        assert!(matches!(run_gnep(&m, &[10.0; 3], &bad), Err(Error::InvalidModel(_))));
        assert!(matches!(
            run_gnep(&m, &[10.0, 1.0, 10.0], &GameParams::default()),
            Err(Error::InvalidTarget { slice: 1, .. })
        ));
    }

    #[test]
    fn params_deserialize_with_defaults() {
        let p: GameParams = serde_json::from_str(r#"{"epsilon": 0.02}"#).unwrap();
        assert_eq!(p, GameParams { epsilon: 0.02, ..GameParams::default() });
        assert!(serde_json::from_str::<GameParams>(r#"{"epsilom": 0.02}"#).is_err());
    }
}
