//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scpf::allocation::{rates_gps, rates_scpf, rates_ss, Snapshot};
use scpf::btd::{gain_limits, gain_ss, heavy_gain_from_geometry, mean_btd, overall_heavy_gains};
use scpf::dimensioning::{coupling_matrix, solve_maxmin_shares, verify_shares};
use scpf::experiment::scenarios::{regression_model, regression_profile, shaping_scenario, spatial_scenario, SHAPING_TARGETS};
use scpf::experiment::{closed_loop_sweep, derive_seed};
use scpf::game::gnep::equilibrium_from_run;
use scpf::game::{
    contains_uniform, load_gain, run_gnep, saturated_equilibrium_with, uniform_load_gain, GameParams, MobilityOperator, QpMethod,
};
use scpf::linalg::{max_abs, norm2};
use scpf::mc::{conditional_ratio_oracle, palm_estimate_btd, run_event_sim, EventSimConfig};
use scpf::model::derive_load_profile;
use scpf::radio::{path_loss_db, simulate_and_calibrate, HexLayout};
use scpf::{BaseStationSet, LoadProfile, Scheme, SliceSpec, TrafficModel};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table_rates() -> Outcome {
    let start = Instant::now();
    // slice 1: two users at station 1; slice 2: one user at each station
    let snap = Snapshot::uniform(&[vec![2, 0], vec![1, 1]], 1.0);
    let shares = [0.5, 0.5];
    let pick = |a: scpf::RateAllocation| [a.rates[0][0][0], a.rates[0][0][1], a.rates[1][0][0], a.rates[1][1][0]];
    let got = [pick(rates_ss(&snap, &shares)), pick(rates_gps(&snap, &shares)), pick(rates_scpf(&snap, &shares))];
    let third = 1.0 / 3.0;
    let want = [[0.25, 0.25, 0.5, 0.5], [0.25, 0.25, 0.5, 1.0], [third, third, third, 1.0]];
    let elapsed = start.elapsed();
    let exact = got.iter().flatten().zip(want.iter().flatten()).all(|(a, b): (&f64, &f64)| a.to_bits() == b.to_bits());
    check(exact && elapsed < Duration::from_millis(1), format!("12 entries exact: {exact}, {elapsed:?}"))
}

fn palm_vs_theory() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut index = 0;
    for total in [0.5, 2.0, 8.0] {
        let p = regression_profile(total).map_err(|e| e.to_string())?;
        for v in 0..2 {
            for scheme in Scheme::ALL {
                let exact = mean_btd(&p, v, scheme).map_err(|e| e.to_string())?;
                let est = palm_estimate_btd(&p, v, scheme, 100_000, derive_seed(2024, index)).map_err(|e| e.to_string())?;
                index += 1;
                worst = worst.max((est.estimate - exact).abs() / est.std_error);
            }
        }
    }
    let elapsed = start.elapsed();
    check(worst <= 3.0 && elapsed < Duration::from_secs(60), format!("18 comparisons, worst |z| = {worst:.2}, {elapsed:.1?}"))
}

fn product_form() -> Outcome {
    let model = regression_model().scale_arrivals(10.0);
    let profile = derive_load_profile(&model).map_err(|e| e.to_string())?;
    let total_load: f64 = (0..2).map(|v| profile.total(v)).sum();
    let total_rate: f64 = model.slices().iter().flat_map(|s| &s.gamma).sum();
    let sojourn = total_load / total_rate;
    let horizon = (200.0 * sojourn).max(20_000.0);
    let trace = run_event_sim(&model, &EventSimConfig::open(horizon), 11).map_err(|e| e.to_string())?;
    let mut min_p: f64 = 1.0;
    let mut worst_parity: f64 = 0.0;
    for v in 0..2 {
        for b in 0..3 {
            let mean = profile.loads(v)[b];
            let test = trace.chi_square(v, b, mean).map_err(|e| e.to_string())?;
            min_p = min_p.min(test.p_value);
            worst_parity = worst_parity.max((trace.mean_counts[v][b] - mean).abs() / mean);
        }
    }
    check(
        min_p > 0.01 && worst_parity <= 0.02,
        format!("horizon {:.0} mean sojourns, min chi-square p = {min_p:.3}, worst mean-count error {:.2}%", horizon / sojourn, 100.0 * worst_parity),
    )
}

fn ratio_oracle() -> Outcome {
    let est = conditional_ratio_oracle(&[1.0, 2.0], 0, 1_000_000, 4).map_err(|e| e.to_string())?;
    let err = (est.estimate - 1.0 / 3.0).abs() * 3.0;
    check(err <= 0.01, format!("estimate {:.5}, relative error {:.3}%", est.estimate, 100.0 * err))
}

fn random_profile(rng: &mut ChaCha8Rng) -> LoadProfile {
    loop {
        let v = rng.random_range(2..=4);
        let b = rng.random_range(1..=6);
        let raw: Vec<f64> = (0..v).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let shares = raw.iter().map(|x| x / sum).collect();
        let rel: Vec<Vec<f64>> = (0..v).map(|_| (0..b).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let totals: Vec<f64> = (0..v).map(|_| rng.random_range(0.1..20.0)).collect();
        let deltas: Vec<Vec<f64>> = (0..v).map(|_| (0..b).map(|_| rng.random_range(0.2..3.0)).collect()).collect();
        if let Ok(p) = LoadProfile::from_relative(shares, &rel, &totals, deltas) {
            return p;
        }
    }
}

fn corollary_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid: Vec<f64> = (0..20).map(|i| 0.05 * 2000f64.powf(i as f64 / 19.0)).collect();
    let (mut min_light, mut min_overall, mut worst_rise) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..100 {
        let p = random_profile(&mut rng);
        for v in 0..p.num_slices() {
            min_light = min_light.min(gain_limits(&p, v).map_err(|e| e.to_string())?.ss_light);
            let gains: Vec<f64> = grid
                .iter()
                .map(|&r| gain_ss(&p.with_slice_total(v, r).unwrap(), v).unwrap())
                .collect();
            for w in gains.windows(2) {
                worst_rise = worst_rise.max(w[1] / w[0] - 1.0);
            }
        }
        let heavy = p.with_uniform_total(1e4).map_err(|e| e.to_string())?;
        let (ss, gps) = overall_heavy_gains(&heavy).map_err(|e| e.to_string())?;
        min_overall = min_overall.min(ss.min(gps));
    }
    check(
        min_light > 1.0 && worst_rise <= 1e-12 && min_overall >= 1.0 - 1e-9,
        format!("min light gain {min_light:.4}, largest relative rise {worst_rise:.1e}, min overall heavy gain {min_overall:.4}"),
    )
}

fn table_geometry() -> Outcome {
    let g = heavy_gain_from_geometry(0.36, 0.26, 41.78);
    check((g - 1.83).abs() <= 0.05 * 1.83, format!("gain {g:.4} vs 1.83"))
}

fn dimensioning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_gap, mut worst_slack, mut positive) = (0.0_f64, 0.0_f64, 0);
    for _ in 0..20 {
        let rel: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(0.01..1.0)).collect()).collect();
        let totals: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..20.0)).collect();
        let deltas: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(0.5..2.0)).collect()).collect();
        let p = LoadProfile::from_relative(vec![1.0 / 3.0; 3], &rel, &totals, deltas.clone()).map_err(|e| e.to_string())?;
        let targets: Vec<f64> = (0..3)
            .map(|v| {
                let r = p.relative(v).unwrap();
                let floor: f64 = r.iter().zip(&deltas[v]).map(|(a, d)| a * d).sum();
                let norm: f64 = r.iter().zip(&deltas[v]).map(|(a, d)| a * a * d).sum();
                floor + norm * totals[v] * rng.random_range(2.5..40.0)
            })
            .collect();
        let h = coupling_matrix(&p, &targets).map_err(|e| e.to_string())?;
        let sol = solve_maxmin_shares(&h).map_err(|e| e.to_string())?;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=100 {
            for j in 0..=(100 - i) {
                let s = [i as f64 / 100.0, j as f64 / 100.0, (100 - i - j) as f64 / 100.0];
                best = best.max(h.apply(&s).into_iter().fold(f64::INFINITY, f64::min));
            }
        }
        worst_gap = worst_gap.max((sol.objective - best).abs());
        if sol.objective > 0.0 {
            positive += 1;
            let c = verify_shares(&sol.shares, &p, &targets).map_err(|e| e.to_string())?;
            worst_slack = worst_slack.min(c.slack.iter().cloned().fold(f64::INFINITY, f64::min));
        }
    }
    check(
        worst_gap <= 0.01 && worst_slack >= -1e-9 && positive > 0,
        format!("20 instances, worst objective gap {worst_gap:.2e}, {positive} admissible with min slack {worst_slack:.2e}"),
    )
}

/// Slices with arrivals everywhere and uniform off-diagonal handoffs, so
/// that the uniform relative load is reachable.
fn uniform_feasible_model(rng: &mut ChaCha8Rng, b: usize) -> TrafficModel {
    let slices = (0..3)
        .map(|_| {
            let stay = rng.random_range(0.1..0.8);
            let q = vec![vec![stay / (b - 1) as f64; b]; b];
            let routing = (0..b).map(|i| (0..b).map(|j| if i == j { 0.0 } else { q[i][j] }).collect()).collect();
            let gamma = (0..b).map(|_| rng.random_range(0.5..2.0)).collect();
            let mu = (0..b).map(|_| rng.random_range(0.8..1.2)).collect();
            SliceSpec::without_routing(1.0 / 3.0, gamma, mu).with_routing(routing)
        })
        .collect();
    TrafficModel::new(BaseStationSet::new(b).unwrap(), slices).unwrap()
}

fn saturated() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let targets = [10.0; 3];
    let expected = uniform_load_gain(1.0 / 3.0, 10.0);
    let (mut uniform_err, mut kkt, mut gain_err, mut method_gap, mut used) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0);
    for k in 0..10 {
        let model = uniform_feasible_model(&mut rng, 3 + k % 4);
        let ops: Vec<MobilityOperator> = model.slices().iter().map(|s| MobilityOperator::from_slice(s).unwrap()).collect();
        if !ops.iter().all(contains_uniform) {
            continue;
        }
        used += 1;
        let b = model.num_stations() as f64;
        let bcd = saturated_equilibrium_with(&model, &targets, QpMethod::BlockCoordinate).map_err(|e| e.to_string())?;
        let pg = saturated_equilibrium_with(&model, &targets, QpMethod::ProjectedGradient).map_err(|e| e.to_string())?;
        for v in 0..3 {
            let dev: Vec<f64> = bcd.relative[v].iter().map(|r| r - 1.0 / b).collect();
            uniform_err = uniform_err.max(max_abs(&dev));
            let diff: Vec<f64> = bcd.relative[v].iter().zip(&pg.relative[v]).map(|(a, c)| a - c).collect();
            method_gap = method_gap.max(max_abs(&diff));
        }
        kkt = kkt.max(bcd.kkt.as_ref().unwrap().max_residual());
        for g in load_gain(&bcd) {
            gain_err = gain_err.max((g - expected).abs());
        }
    }
    check(
        used >= 5 && uniform_err <= 1e-6 && kkt <= 1e-8 && gain_err <= 1e-6 && method_gap <= 1e-6 && (expected - 9.0 / 7.0).abs() < 1e-12,
        format!(
            "{used} instances: uniform error {uniform_err:.1e}, KKT {kkt:.1e}, gain error vs 9/7 {gain_err:.1e}, method gap {method_gap:.1e}"
        ),
    )
}

struct ShapingSweep {
    scales: Vec<f64>,
    gains: Vec<Vec<f64>>,
    loads: Vec<Vec<f64>>,
    norms: Vec<Vec<f64>>,
    iterations: Vec<usize>,
    converged: bool,
    worst_omega: f64,
    worst_unilateral: f64,
    saturated_gains: Vec<f64>,
    saturated_loads: Vec<f64>,
}

fn shaping_sweep() -> Result<ShapingSweep, String> {
    let cal = simulate_and_calibrate(&shaping_scenario(), 1).map_err(|e| e.to_string())?;
    let scales = vec![0.12, 0.18, 0.24, 0.3, 0.4, 0.6, 1.0, 3.0];
    let top = cal.open_model(3.0).map_err(|e| e.to_string())?;
    let sat = saturated_equilibrium_with(&top, &SHAPING_TARGETS, QpMethod::BlockCoordinate).map_err(|e| e.to_string())?;
    let mut out = ShapingSweep {
        scales: scales.clone(),
        gains: Vec::new(),
        loads: Vec::new(),
        norms: Vec::new(),
        iterations: Vec::new(),
        converged: true,
        worst_omega: 0.0,
        worst_unilateral: 0.0,
        saturated_gains: sat.gains.clone(),
        saturated_loads: sat.loads.clone(),
    };
    let params = GameParams::default();
    for &rate in &scales {
        let model = cal.open_model(rate).map_err(|e| e.to_string())?;
        let run = run_gnep(&model, &SHAPING_TARGETS, &params).map_err(|e| e.to_string())?;
        let r = &run.report;
        out.converged &= r.converged && r.iterations <= 500;
        out.worst_omega = out.worst_omega.max(r.omega);
        out.worst_unilateral = out.worst_unilateral.max(r.unilateral_improvement.iter().cloned().fold(0.0, f64::max));
        out.iterations.push(r.iterations);
        let eq = equilibrium_from_run(&model, &SHAPING_TARGETS, run).map_err(|e| e.to_string())?;
        out.norms.push(eq.relative.iter().map(|r| norm2(r)).collect());
        out.gains.push(eq.gains);
        out.loads.push(eq.loads);
    }
    Ok(out)
}

fn gnep(sweep: &ShapingSweep) -> Outcome {
    let high = sweep.loads.last().unwrap();
    let load_err = high.iter().zip(&sweep.saturated_loads).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
    // largest excess of a slice's gain over its saturated value below the top rate
    let low = &sweep.gains[..sweep.gains.len() - 1];
    let excess: Vec<f64> = (0..sweep.saturated_gains.len())
        .map(|v| low.iter().map(|g| g[v] / sweep.saturated_gains[v] - 1.0).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let peak = excess.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    check(
        sweep.converged && sweep.worst_omega < 1e-6 && load_err <= 0.02 && peak > 0.01 && sweep.worst_unilateral < 1e-6,
        format!(
            "iterations {:?}, max omega {:.2e}, high-rate load error {:.3}%, low-rate gain excess per slice {:.2?}%, max unilateral gain {:.1e}",
            sweep.iterations,
            sweep.worst_omega,
            100.0 * load_err,
            excess.iter().map(|e| 100.0 * e).collect::<Vec<_>>(),
            sweep.worst_unilateral
        ),
    )
}

fn balancing(sweep: &ShapingSweep) -> Outcome {
    let mut worst_rise: f64 = f64::NEG_INFINITY;
    for w in sweep.norms.windows(2) {
        for v in 0..w[0].len() {
            worst_rise = worst_rise.max(w[1][v] - w[0][v]);
        }
    }
    let first = &sweep.norms[0];
    let last = sweep.norms.last().unwrap();
    check(
        worst_rise <= 1e-12,
        format!("scales {:?}: norms {:.4?} -> {:.4?}, largest rise {worst_rise:.1e}", sweep.scales, first, last),
    )
}

fn radio_loop() -> Outcome {
    let pl = path_loss_db(200.0, 2.5).map_err(|e| e.to_string())?;
    let sectors = HexLayout::default().num_sectors();
    let scenario = spatial_scenario(3, 30);
    let cal = simulate_and_calibrate(&scenario, 31).map_err(|e| e.to_string())?;
    let sweep: Vec<Vec<usize>> = [10, 20, 30, 45, 60].iter().map(|&n| vec![n; 4]).collect();
    let points = closed_loop_sweep(&scenario, &cal, &sweep, 32).map_err(|e| e.to_string())?;
    let worst = points.iter().flatten().map(|p| p.relative_error()).fold(0.0, f64::max);
    check(
        (pl - 117.50).abs() <= 0.01 && sectors == 57 && worst <= 0.10,
        format!("path loss {pl:.3} dB, {sectors} sectors, worst SCPF BTD error over 5 populations x 4 slices {:.2}%", 100.0 * worst),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome, elapsed: Duration| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {id:>2} {name}: {detail} [{elapsed:.1?}]");
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed())
    };

    let (o, t) = timed(&table_rates);
    report(1, "allocation table", o, t);
    let (o, t) = timed(&palm_vs_theory);
    report(2, "Palm Monte Carlo vs closed forms", o, t);
    let (o, t) = timed(&product_form);
    report(3, "product form", o, t);
    let (o, t) = timed(&ratio_oracle);
    report(4, "conditional ratio oracle", o, t);
    let (o, t) = timed(&corollary_properties);
    report(5, "gain properties", o, t);
    let (o, t) = timed(&table_geometry);
    report(6, "heavy gain from geometry", o, t);
    let (o, t) = timed(&dimensioning);
    report(7, "share dimensioning", o, t);
    let (o, t) = timed(&saturated);
    report(8, "saturated equilibrium", o, t);
    let start = Instant::now();
    match shaping_sweep() {
        Ok(sweep) => {
            let t = start.elapsed();
            report(9, "shaping game solver", gnep(&sweep), t);
            report(10, "relative-load balancing", balancing(&sweep), Duration::ZERO);
        }
        Err(e) => {
            report(9, "shaping game solver", Err(e.clone()), start.elapsed());
            report(10, "relative-load balancing", Err(e), Duration::ZERO);
        }
    }
    let (o, t) = timed(&radio_loop);
    report(11, "radio calibration loop", o, t);

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 11 acceptance criteria passed");
}
