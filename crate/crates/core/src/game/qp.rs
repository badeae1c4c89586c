//! Convex quadratic programs over a box cut by one hyperplane:
//! minimize `0.5 z'Hz + c'z` subject to `<a, z> = b`, `0 <= z <= upper`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vec<f64>,
    /// Multiplier of the equality constraint in `Hz + c + nu a = lower - upper`.
    pub nu: f64,
    /// Multipliers of the lower bounds (zero where inactive).
    pub lower: Vec<f64>,
    /// Multipliers of the upper bounds (zero where inactive).
    pub upper: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Primal active-set solve. `a` must be strictly positive, `h` positive
/// definite and `b / sum(a) <= upper`; an infeasible `start` is ignored.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    c: &[f64],
    a: &[f64],
    b: f64,
    upper: f64,
    start: Option<&[f64]>,
) -> Result<QpSolution> {
    let n = c.len();
    let a_sum: f64 = a.iter().sum();
    if n == 0 || a.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidModel("hyperplane weights must be positive".into()));
    }
    let uniform = b / a_sum;
    if uniform > upper * (1.0 + 1e-12) {
        return Err(Error::EmptyPolytope { slice: 0 });
    }
    // the box touches the hyperplane in a single point
    if uniform >= upper * (1.0 - 1e-13) {
        let z = vec![upper.min(uniform); n];
        return Ok(finish(h, c, a, z, 0, upper));
    }

    let feasible = |s: &[f64]| {
        let dot: f64 = a.iter().zip(s).map(|(x, y)| x * y).sum();
        s.len() == n && s.iter().all(|&v| (0.0..=upper).contains(&v)) && (dot - b).abs() <= 1e-13 * b.abs().max(1.0)
    };
    let mut z: Vec<f64> = match start {
        Some(s) if feasible(s) => s.to_vec(),
        _ => vec![uniform; n],
    };
    let mut state = vec![Bound::Free; n];
    for i in 0..n {
        if z[i] <= 0.0 {
            z[i] = 0.0;
            state[i] = Bound::Lower;
        } else if z[i] >= upper {
            z[i] = upper;
            state[i] = Bound::Upper;
        }
    }
    // keep at least one free coordinate so the working set stays independent
    if state.iter().all(|s| *s != Bound::Free) {
        z = vec![uniform; n];
        state = vec![Bound::Free; n];
    }

    // set after an unblocked step, which lands on the working-set minimizer
    let mut minimized = false;
    for iteration in 0..MAX_ITERATIONS {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        let grad = gradient(h, c, &z);
        let (p_free, nu) = equality_step(h, a, &grad, &free)?;
        let step_norm = p_free.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let scale = 1.0 + z.iter().fold(0.0_f64, |m, x| m.max(x.abs()));

        if minimized || step_norm <= 1e-15 * scale {
            minimized = false;
            // stationary on the working set: check bound multipliers
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..n {
                let m = match state[i] {
                    Bound::Free => continue,
                    Bound::Lower => grad[i] + nu * a[i],
                    Bound::Upper => -(grad[i] + nu * a[i]),
                };
                if m < worst.map_or(-1e-14 * (1.0 + grad[i].abs()), |w| w.1) {
                    worst = Some((i, m));
                }
            }
            match worst {
                None => return Ok(finish(h, c, a, z, iteration, upper)),
                Some((i, _)) => state[i] = Bound::Free,
            }
            continue;
        }

        // longest feasible step along p, capped at 1
        let mut t = 1.0;
        let mut blocking: Option<(usize, Bound)> = None;
        for (k, &i) in free.iter().enumerate() {
            let p = p_free[k];
            if p < 0.0 {
                let limit = -z[i] / p;
                if limit < t {
                    t = limit;
                    blocking = Some((i, Bound::Lower));
                }
            } else if p > 0.0 && upper.is_finite() {
                let limit = (upper - z[i]) / p;
                if limit < t {
                    t = limit;
                    blocking = Some((i, Bound::Upper));
                }
            }
        }
        let t = t.max(0.0);
        for (k, &i) in free.iter().enumerate() {
            z[i] += t * p_free[k];
        }
        minimized = blocking.is_none();
        if let Some((i, bound)) = blocking {
            if free.len() > 1 {
                state[i] = bound;
                z[i] = if bound == Bound::Lower { 0.0 } else { upper };
            }
        }
        // restore the hyperplane exactly after clamping
        let drift = b - a.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>();
        let free_weight: f64 = (0..n).filter(|&i| state[i] == Bound::Free).map(|i| a[i]).sum();
        if free_weight > 0.0 && drift != 0.0 {
            for i in 0..n {
                if state[i] == Bound::Free {
                    z[i] = (z[i] + drift / free_weight).clamp(0.0, upper);
                }
            }
        }
    }
    Err(Error::SolverStall("active-set QP iteration limit".into()))
}

fn gradient(h: &DMatrix<f64>, c: &[f64], z: &[f64]) -> Vec<f64> {
    let hz = h * DVector::from_column_slice(z);
    hz.iter().zip(c).map(|(x, y)| x + y).collect()
}

/// Solves `[H_FF a_F; a_F' 0] [p; nu] = [-g_F; 0]`.
fn equality_step(h: &DMatrix<f64>, a: &[f64], grad: &[f64], free: &[usize]) -> Result<(Vec<f64>, f64)> {
    let m = free.len();
    let mut kkt = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            kkt[(r, s)] = h[(i, j)];
        }
        kkt[(r, m)] = a[i];
        kkt[(m, r)] = a[i];
        rhs[r] = -grad[i];
    }
    let sol = kkt.lu().solve(&rhs).ok_or_else(|| Error::SolverStall("singular KKT system in QP".into()))?;
    Ok((sol.rows(0, m).iter().copied().collect(), sol[m]))
}

fn finish(h: &DMatrix<f64>, c: &[f64], a: &[f64], z: Vec<f64>, iterations: usize, upper: f64) -> QpSolution {
    let n = z.len();
    let grad = gradient(h, c, &z);
    // nu from the free coordinates (least squares), or from the bounds otherwise
    let interior: Vec<usize> = (0..n).filter(|&i| z[i] > 0.0 && z[i] < upper).collect();
    let nu = if interior.is_empty() {
        // multipliers are not unique here; take the largest upper-bound
        // multipliers so that they give the right derivative in `upper`
        let at_upper = (0..n).filter(|&i| z[i] >= upper).map(|i| -grad[i] / a[i]);
        let at_lower = (0..n).filter(|&i| z[i] <= 0.0).map(|i| -grad[i] / a[i]);
        let cap = at_upper.fold(f64::INFINITY, f64::min);
        let floor = at_lower.fold(f64::NEG_INFINITY, f64::max);
        if cap.is_finite() { cap.max(floor) } else { floor }
    } else {
        let num: f64 = interior.iter().map(|&i| -grad[i] * a[i]).sum();
        let den: f64 = interior.iter().map(|&i| a[i] * a[i]).sum();
        num / den
    };
    let mut lower = vec![0.0; n];
    let mut up = vec![0.0; n];
    for i in 0..n {
        let r = grad[i] + nu * a[i];
        if z[i] <= 0.0 {
            lower[i] = r.max(0.0);
        } else if z[i] >= upper {
            up[i] = (-r).max(0.0);
        }
    }
    let hz = h * DVector::from_column_slice(&z);
    let objective = 0.5 * z.iter().zip(hz.iter()).map(|(x, y)| x * y).sum::<f64>()
        + c.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>();
    QpSolution { z, nu, lower, upper: up, objective, iterations }
}

/// Euclidean projection of `y` onto `{z >= 0 : <w, z> = 1}` with `w > 0`.
pub fn project_weighted_simplex(y: &[f64], w: &[f64]) -> Vec<f64> {
    // z_i = max(0, y_i - tau w_i); <w, z> decreases in tau with breakpoints y_i / w_i
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&i, &j| (y[j] / w[j]).total_cmp(&(y[i] / w[i])));
    let (mut wy, mut ww) = (0.0, 0.0);
    let mut tau = 0.0;
    for (k, &i) in order.iter().enumerate() {
        wy += w[i] * y[i];
        ww += w[i] * w[i];
        let candidate = (wy - 1.0) / ww;
        let next = order.get(k + 1).map(|&j| y[j] / w[j]);
        // all active coordinates stay positive and the next one stays clipped
        if next.is_none_or(|r| r <= candidate) {
            tau = candidate;
            break;
        }
    }
    y.iter().zip(w).map(|(yi, wi)| (yi - tau * wi).max(0.0)).collect()
}
