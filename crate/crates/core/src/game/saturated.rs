//! Equilibrium of the shaping game when every slice blocks traffic, and the
//! static-slicing benchmark.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::mobility::MobilityOperator;
use super::qp::{project_weighted_simplex, solve_box_qp};
use super::{check_targets, EquilibriumResult, SsPolicy};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{SliceSpec, TrafficModel};

/// How the joint balancing problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpMethod {
    /// Exact block minimization per slice, then a joint active-set polish.
    BlockCoordinate,
    /// Accelerated projected gradient on all slices at once.
    ProjectedGradient,
}

/// First-order optimality of the balancing problem, in decision space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// Largest violation of stationarity with nonnegative bound multipliers.
    pub stationarity: f64,
    /// Largest `|multiplier * decision|`.
    pub complementarity: f64,
    /// Largest violation of the simplex and sign constraints.
    pub primal: f64,
    /// Multiplier of each slice's normalization constraint.
    pub zeta: Vec<f64>,
    /// Multipliers of the sign constraints, per slice.
    pub chi: Vec<Vec<f64>>,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.primal)
    }
}

fn gram(op: &MobilityOperator) -> DMatrix<f64> {
    op.transfer().transpose() * op.transfer()
}

fn mat_t_vec(op: &MobilityOperator, v: &[f64]) -> Vec<f64> {
    (op.transfer().transpose() * DVector::from_column_slice(v)).iter().copied().collect()
}

/// Minimizes `share |T alpha|^2 + <others, T alpha>` over the slice's
/// decision polytope with `alpha <= upper`.
pub(crate) fn slice_qp(
    op: &MobilityOperator,
    share: f64,
    others: &[f64],
    upper: f64,
    start: Option<&[f64]>,
) -> Result<super::qp::QpSolution> {
    let h = gram(op) * (2.0 * share);
    let c = mat_t_vec(op, others);
    solve_box_qp(&h, &c, op.weights(), 1.0, upper, start)
}

fn aggregate(ops: &[MobilityOperator], shares: &[f64], alphas: &[Vec<f64>]) -> Vec<f64> {
    let mut g = vec![0.0; ops[0].num_stations()];
    for ((op, s), alpha) in ops.iter().zip(shares).zip(alphas) {
        for (gb, r) in g.iter_mut().zip(op.relative(alpha)) {
            *gb += s * r;
        }
    }
    g
}

fn objective(ops: &[MobilityOperator], shares: &[f64], alphas: &[Vec<f64>]) -> f64 {
    let g = aggregate(ops, shares, alphas);
    let own: f64 = ops
        .iter()
        .zip(shares)
        .zip(alphas)
        .map(|((op, s), a)| {
            let r = op.relative(a);
            s * s * dot(&r, &r)
        })
        .sum();
    dot(&g, &g) + own
}

/// Decision vectors minimizing `|sum_v s_v rel_v|^2 + sum_v s_v^2 |rel_v|^2`
/// over every slice's reachable relative loads.
pub fn balance_relative_loads(ops: &[MobilityOperator], shares: &[f64], method: QpMethod) -> Result<Vec<Vec<f64>>> {
    if ops.is_empty() || ops.len() != shares.len() {
        return Err(Error::InvalidModel("one mobility operator per share is required".into()));
    }
    for (v, op) in ops.iter().enumerate() {
        if op.dim() == 0 {
            return Err(Error::EmptyPolytope { slice: v });
        }
    }
    match method {
        QpMethod::BlockCoordinate => block_coordinate(ops, shares),
        QpMethod::ProjectedGradient => projected_gradient(ops, shares),
    }
}

fn block_coordinate(ops: &[MobilityOperator], shares: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = ops.len();
    let mut alphas: Vec<Vec<f64>> = ops.iter().map(|op| vec![op.min_reciprocal_load(); op.dim()]).collect();
    let mut rel: Vec<Vec<f64>> = ops.iter().zip(&alphas).map(|(op, a)| op.relative(a)).collect();
    for _sweep in 0..20_000 {
        let mut change = 0.0_f64;
        for v in 0..n {
            let mut others = vec![0.0; ops[v].num_stations()];
            for u in (0..n).filter(|&u| u != v) {
                for (o, r) in others.iter_mut().zip(&rel[u]) {
                    *o += shares[u] * r;
                }
            }
            let sol = slice_qp(&ops[v], shares[v], &others, f64::INFINITY, Some(&alphas[v]))?;
            let new_rel = ops[v].relative(&sol.z);
            change = change.max(new_rel.iter().zip(&rel[v]).fold(0.0, |m, (a, b)| m.max((a - b).abs())));
            alphas[v] = sol.z;
            rel[v] = new_rel;
        }
        if change < 1e-15 {
            break;
        }
    }
    Ok(polish(ops, shares, alphas))
}

/// Re-solves the joint problem with each slice's support held fixed; keeps
/// the result only if it stays feasible and does not increase the objective.
fn polish(ops: &[MobilityOperator], shares: &[f64], alphas: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = ops.len();
    let supports: Vec<Vec<usize>> = alphas
        .iter()
        .map(|a| {
            let top = a.iter().fold(0.0_f64, |m, x| m.max(*x));
            (0..a.len()).filter(|&i| a[i] > 1e-12 * top).collect()
        })
        .collect();
    let offsets: Vec<usize> = supports
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect();
    let dim: usize = supports.iter().map(Vec::len).sum();
    let size = dim + n;
    let mut kkt = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    // columns of each slice's transfer restricted to its support, scaled by the share
    let cols: Vec<DMatrix<f64>> = (0..n)
        .map(|v| ops[v].transfer().select_columns(supports[v].iter()) * shares[v])
        .collect();
    for u in 0..n {
        for v in 0..n {
            let mut block = cols[u].transpose() * &cols[v];
            if u == v {
                block *= 2.0;
            }
            kkt.view_mut((offsets[u], offsets[v]), (supports[u].len(), supports[v].len())).copy_from(&block);
        }
        for (k, &i) in supports[u].iter().enumerate() {
            let w = ops[u].weights()[i];
            kkt[(offsets[u] + k, dim + u)] = w;
            kkt[(dim + u, offsets[u] + k)] = w;
        }
        rhs[dim + u] = 1.0;
    }
    let Some(sol) = kkt.lu().solve(&rhs) else { return alphas };
    let mut polished: Vec<Vec<f64>> = alphas.iter().map(|a| vec![0.0; a.len()]).collect();
    for v in 0..n {
        for (k, &i) in supports[v].iter().enumerate() {
            polished[v][i] = sol[offsets[v] + k];
        }
    }
    if polished.iter().flatten().any(|x| *x < 0.0 || !x.is_finite()) {
        return alphas;
    }
    if objective(ops, shares, &polished) <= objective(ops, shares, &alphas) + 1e-15 {
        polished
    } else {
        alphas
    }
}

fn projected_gradient(ops: &[MobilityOperator], shares: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = ops.len();
    let dims: Vec<usize> = ops.iter().map(MobilityOperator::dim).collect();
    let total: usize = dims.iter().sum();
    // Lipschitz constant of the gradient of half the objective: the top
    // eigenvalue of the joint Hessian
    let mut hess = DMatrix::zeros(total, total);
    let mut off = 0;
    let offsets: Vec<usize> = dims
        .iter()
        .map(|d| {
            let o = off;
            off += d;
            o
        })
        .collect();
    for u in 0..n {
        for v in 0..n {
            let mut block = ops[u].transfer().transpose() * ops[v].transfer() * (shares[u] * shares[v]);
            if u == v {
                block *= 2.0;
            }
            hess.view_mut((offsets[u], offsets[v]), (dims[u], dims[v])).copy_from(&block);
        }
    }
    let lipschitz = hess.symmetric_eigenvalues().max();
    let step = 1.0 / lipschitz;

    let flatten = |a: &[Vec<f64>]| -> Vec<f64> { a.iter().flatten().copied().collect() };
    let grad = |z: &[f64]| -> Vec<f64> { (&hess * DVector::from_column_slice(z)).iter().copied().collect() };
    let project = |z: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(total);
        for v in 0..n {
            out.extend(project_weighted_simplex(&z[offsets[v]..offsets[v] + dims[v]], ops[v].weights()));
        }
        out
    };

    let start: Vec<Vec<f64>> = ops.iter().map(|op| vec![op.min_reciprocal_load(); op.dim()]).collect();
    let mut x = flatten(&start);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    for _ in 0..500_000 {
        let g = grad(&y);
        let trial: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let next = project(&trial);
        let change = next.iter().zip(&x).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        // gradient-based adaptive restart
        let restart = g.iter().zip(next.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum::<f64>() > 0.0;
        let next_momentum = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) };
        let beta = if restart { 0.0 } else { (momentum - 1.0) / next_momentum };
        y = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = next;
        momentum = next_momentum;
        if change < 1e-16 {
            break;
        }
    }
    Ok((0..n).map(|v| x[offsets[v]..offsets[v] + dims[v]].to_vec()).collect())
}

/// KKT residuals of the balancing problem at `alphas`.
pub fn kkt_report(ops: &[MobilityOperator], shares: &[f64], alphas: &[Vec<f64>]) -> KktReport {
    let g = aggregate(ops, shares, alphas);
    let mut report = KktReport { stationarity: 0.0, complementarity: 0.0, primal: 0.0, zeta: vec![], chi: vec![] };
    for ((op, &s), alpha) in ops.iter().zip(shares).zip(alphas) {
        let rel = op.relative(alpha);
        let q: Vec<f64> = rel.iter().zip(&g).map(|(r, gb)| s * s * r + s * gb).collect();
        let tq = mat_t_vec(op, &q);
        let w = op.weights();
        let top = alpha.iter().fold(0.0_f64, |m, x| m.max(*x));
        let support: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > 1e-12 * top).collect();
        // chi = T'q + zeta w must vanish on the support
        let zeta = -support.iter().map(|&i| tq[i] * w[i]).sum::<f64>() / support.iter().map(|&i| w[i] * w[i]).sum::<f64>();
        let raw: Vec<f64> = tq.iter().zip(w).map(|(t, wi)| t + zeta * wi).collect();
        let chi: Vec<f64> = raw.iter().map(|x| x.max(0.0)).collect();
        let stationarity = raw.iter().zip(&chi).fold(0.0_f64, |m, (r, c)| m.max((r - c).abs()));
        let complementarity = chi.iter().zip(alpha).fold(0.0_f64, |m, (c, a)| m.max((c * a).abs()));
        let primal = alpha.iter().fold((dot(w, alpha) - 1.0).abs(), |m, a| m.max(-a));
        report.stationarity = report.stationarity.max(stationarity);
        report.complementarity = report.complementarity.max(complementarity);
        report.primal = report.primal.max(primal);
        report.zeta.push(zeta);
        report.chi.push(chi);
    }
    report
}

/// Whether the uniform relative load is reachable, i.e. `M (1/B) 1 >= 0`.
pub fn contains_uniform(op: &MobilityOperator) -> bool {
    let b = op.num_stations();
    let uniform = vec![1.0 / b as f64; b];
    let alpha = op.decisions_for(&uniform);
    let back = op.relative(&alpha);
    let residual = back.iter().zip(&uniform).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    residual < 1e-9 && alpha.iter().all(|a| *a >= -1e-12)
}

/// Saturated-regime static-slicing optimum: the most balanced reachable
/// relative load and the load that meets the target with it.
pub fn ss_optimal_policy(slice: &SliceSpec, target: f64) -> Result<SsPolicy> {
    let op = MobilityOperator::from_slice(slice)?;
    ss_policy_for(&op, 0, slice.share, target)
}

pub(crate) fn ss_policy_for(op: &MobilityOperator, v: usize, share: f64, target: f64) -> Result<SsPolicy> {
    if share * target <= 1.0 {
        return Err(Error::InfeasibleUnderSs { slice: v, value: share * target });
    }
    if op.dim() == 0 {
        return Err(Error::EmptyPolytope { slice: v });
    }
    let sol = solve_box_qp(&(gram(op) * 2.0), &vec![0.0; op.dim()], op.weights(), 1.0, f64::INFINITY, None)?;
    let relative = op.relative(&sol.z);
    let load = (share * target - 1.0) / dot(&relative, &relative);
    Ok(SsPolicy { relative, load })
}

/// Saturated equilibrium (block-coordinate solver) with the static-slicing
/// benchmark and carried-load gains.
pub fn saturated_equilibrium(model: &TrafficModel, targets: &[f64]) -> Result<EquilibriumResult> {
    saturated_equilibrium_with(model, targets, QpMethod::BlockCoordinate)
}

pub fn saturated_equilibrium_with(model: &TrafficModel, targets: &[f64], method: QpMethod) -> Result<EquilibriumResult> {
    check_targets(model.num_slices(), targets)?;
    let ops = super::operators(model)?;
    let shares = model.shares();
    let alphas = balance_relative_loads(&ops, &shares, method)?;
    let kkt = kkt_report(&ops, &shares, &alphas);
    let relative: Vec<Vec<f64>> = ops.iter().zip(&alphas).map(|(op, a)| op.relative(a)).collect();
    let g = aggregate(&ops, &shares, &alphas);
    let loads: Vec<f64> = (0..ops.len())
        .map(|v| shares[v] * (targets[v] - 1.0) / dot(&g, &relative[v]))
        .collect();
    let admission: Vec<Vec<f64>> = (0..ops.len()).map(|v| super::admission_vector(&ops[v], &alphas[v], loads[v])).collect();
    let saturated = admission.iter().flatten().all(|a| *a < 1.0);
    if !saturated {
        log::warn!("saturated equilibrium admits some station fully; the arrival rates are too low for the saturated regime");
    }
    let mut ss_relative = Vec::with_capacity(ops.len());
    let mut ss_loads = Vec::with_capacity(ops.len());
    for (v, op) in ops.iter().enumerate() {
        let p = ss_policy_for(op, v, shares[v], targets[v])?;
        ss_relative.push(p.relative);
        ss_loads.push(p.load);
    }
    let gains = loads.iter().zip(&ss_loads).map(|(a, b)| a / b).collect();
    Ok(EquilibriumResult {
        relative,
        loads,
        admission,
        aggregate: g,
        ss_relative,
        ss_loads,
        gains,
        kkt: Some(kkt),
        saturated,
        solver: None,
    })
}

/// Closed-form gain when every slice can spread its load uniformly:
/// `(s d - s) / (s d - 1)`.
pub fn uniform_load_gain(share: f64, target: f64) -> f64 {
    (share * target - share) / (share * target - 1.0)
}
