//! One slice's admission problem given the other slices' relative loads.
//!
//! A policy is a reciprocal carried load `x` and decisions `alpha` with
//! `0 <= alpha <= x`, `<w, alpha> = 1`; the relative load is `T alpha`. For a
//! fixed `x` the slice picks the reachable relative load minimizing its
//! congestion term `phi(x)`, which is convex and nonincreasing in `x`. The
//! remaining one-dimensional problem in `x` is solved exactly.

use serde::Serialize;

use super::mobility::MobilityOperator;
use super::qp::QpSolution;
use super::saturated::slice_qp;
use super::AdmissionPolicy;
use crate::error::{Error, Result};
use crate::linalg::dot;

const ROOT_ITERATIONS: usize = 200;

/// `phi(x) = min { quad |rel|^2 + <linear, rel> }` over policies with
/// reciprocal load `x`, compared against `budget * x`.
#[derive(Debug, Clone)]
pub struct SliceProblem<'a> {
    pub op: &'a MobilityOperator,
    pub quad: f64,
    pub linear: Vec<f64>,
    pub budget: f64,
}

/// Value, left derivative and minimizer of `phi` at one `x`.
#[derive(Debug, Clone)]
pub struct PhiPoint {
    pub x: f64,
    pub value: f64,
    pub slope: f64,
    pub alpha: Vec<f64>,
}

impl<'a> SliceProblem<'a> {
    /// The SCPF congestion term `<g, rel>` with `g = share rel + others`
    /// against the budget `share (target - 1)`.
    pub fn scpf(op: &'a MobilityOperator, share: f64, target: f64, others: &[f64]) -> Self {
        Self { op, quad: share, linear: others.to_vec(), budget: share * (target - 1.0) }
    }

    /// The static-slicing term `|rel|^2` against `share target - 1`.
    pub fn static_slicing(op: &'a MobilityOperator, share: f64, target: f64) -> Self {
        Self { op, quad: 1.0, linear: vec![0.0; op.num_stations()], budget: share * target - 1.0 }
    }

    pub fn x_min(&self) -> f64 {
        self.op.min_reciprocal_load()
    }

    fn solve(&self, x: f64, warm: Option<&[f64]>) -> Result<QpSolution> {
        let upper = x.max(self.x_min());
        let sol = slice_qp(self.op, self.quad, &self.linear, upper, warm);
        match sol {
            Ok(s) => Ok(s),
            // a stale warm start can confuse the working set; retry cold
            Err(_) if warm.is_some() => slice_qp(self.op, self.quad, &self.linear, upper, None),
            Err(e) => Err(e),
        }
    }

    pub fn phi(&self, x: f64, warm: Option<&[f64]>) -> Result<PhiPoint> {
        let sol = self.solve(x, warm)?;
        let slope = -sol.upper.iter().sum::<f64>();
        Ok(PhiPoint { x, value: sol.objective, slope, alpha: sol.z })
    }

    /// Congestion term of a given policy.
    pub fn value_at(&self, alpha: &[f64]) -> f64 {
        let rel = self.op.relative(alpha);
        self.quad * dot(&rel, &rel) + dot(&self.linear, &rel)
    }

    /// Smallest `x` with `phi(x) <= budget x`, i.e. the largest carried load
    /// meeting the target, with its minimizer.
    pub fn kink(&self) -> Result<PhiPoint> {
        let lo = self.x_min();
        let first = self.phi(lo, None)?;
        if first.value <= self.budget * lo {
            return Ok(first);
        }
        // psi(x) = phi(x) - budget x is convex and decreasing; Newton from the
        // left never overshoots the root
        let mut hi = first.value / self.budget;
        let mut point = first;
        let mut left = lo;
        for _ in 0..ROOT_ITERATIONS {
            let psi = point.value - self.budget * point.x;
            let slope = point.slope - self.budget;
            let mut next = point.x - psi / slope;
            if !(next > left && next <= hi) {
                next = 0.5 * (left + hi);
            }
            let candidate = self.phi(next, Some(&point.alpha))?;
            let psi_next = candidate.value - self.budget * next;
            if psi_next > 0.0 {
                left = next;
            } else {
                hi = next;
            }
            let done = (next - point.x).abs() <= 1e-15 * next || psi_next.abs() <= 1e-15 * candidate.value.max(1e-300);
            point = candidate;
            if done || hi - left <= 1e-15 * hi {
                break;
            }
        }
        // settle on the feasible side of the root
        let mut nudge = 1e-15;
        while point.value > self.budget * point.x {
            let next = point.x * (1.0 + nudge);
            point = if next < hi { self.phi(next, Some(&point.alpha))? } else { self.phi(hi, Some(&point.alpha))? };
            if next >= hi {
                break;
            }
            nudge *= 4.0;
        }
        Ok(point)
    }
}

/// Result of a penalized best response.
#[derive(Debug, Clone, Serialize)]
pub struct BestResponse {
    pub policy: AdmissionPolicy,
    /// `e^x + lambda [h]_+`.
    pub theta: f64,
    /// `theta` plus the proximal term.
    pub objective: f64,
    /// BTD penalty `h` at the response.
    pub penalty: f64,
}

/// `e^x + lambda [phi - budget x]_+ + (eps / 2)(x - x_prev)^2`.
fn penalized(problem: &SliceProblem, lambda: f64, epsilon: f64, x_prev: f64, p: &PhiPoint) -> (f64, f64, f64) {
    let h = p.value - problem.budget * p.x;
    let theta = p.x.exp() + lambda * h.max(0.0);
    (theta + 0.5 * epsilon * (p.x - x_prev).powi(2), theta, h)
}

/// Minimizes `e^x + lambda [h]_+ + (eps / 2)(x - x_prev)^2` over the slice's
/// policies; among equally good relative loads the one with the smallest
/// congestion term is returned.
pub fn penalized_best_response(problem: &SliceProblem, lambda: f64, epsilon: f64, x_prev: f64) -> Result<BestResponse> {
    if !(lambda >= 0.0) || !(epsilon >= 0.0) {
        return Err(Error::InvalidModel("multiplier and regularizer must be nonnegative".into()));
    }
    let lo = problem.x_min();
    let kink = problem.kink()?;
    // without penalty the objective is e^x + prox, increasing past its stationary point
    let smooth_slope = |x: f64| x.exp() + epsilon * (x - x_prev);
    let smooth_min = |from: f64| -> f64 {
        if smooth_slope(from) >= 0.0 {
            return from;
        }
        // e^x + eps (x - x_prev) = 0 has its root below x_prev; Newton from the left
        let mut x = from;
        for _ in 0..ROOT_ITERATIONS {
            let next = x - smooth_slope(x) / (x.exp() + epsilon);
            if (next - x).abs() <= 1e-15 * next.abs().max(1e-300) {
                return next;
            }
            x = next;
        }
        x
    };

    let best = if kink.x <= lo && kink.value <= problem.budget * lo {
        // penalty inactive everywhere
        let x = smooth_min(lo);
        if x == lo { kink } else { problem.phi(x, Some(&kink.alpha))? }
    } else {
        // left derivative of the penalized objective at the kink
        let left = kink.x.exp() + epsilon * (kink.x - x_prev) + lambda * (kink.slope - problem.budget);
        if left <= 0.0 {
            let x = smooth_min(kink.x);
            if x == kink.x { kink } else { problem.phi(x, Some(&kink.alpha))? }
        } else {
            // interior optimum in [lo, kink]: bisection on the derivative
            let deriv = |p: &PhiPoint| p.x.exp() + epsilon * (p.x - x_prev) + lambda * (p.slope - problem.budget);
            let at_lo = problem.phi(lo, None)?;
            if deriv(&at_lo) >= 0.0 {
                at_lo
            } else {
                let (mut a, mut b) = (lo, kink.x);
                let mut point = at_lo;
                for _ in 0..ROOT_ITERATIONS {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    point = problem.phi(mid, Some(&point.alpha))?;
                    if deriv(&point) < 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                // compare the bracket ends
                let pa = problem.phi(a, Some(&point.alpha))?;
                let pb = problem.phi(b, Some(&point.alpha))?;
                let fa = penalized(problem, lambda, epsilon, x_prev, &pa).0;
                let fb = penalized(problem, lambda, epsilon, x_prev, &pb).0;
                if fa <= fb { pa } else { pb }
            }
        }
    };
    let (objective, theta, penalty) = penalized(problem, lambda, epsilon, x_prev, &best);
    let relative = problem.op.relative(&best.alpha);
    Ok(BestResponse { policy: AdmissionPolicy { alpha: best.alpha, relative, x: best.x }, theta, objective, penalty })
}

/// Unpenalized admission control: the largest carried load whose
/// congestion term meets the budget.
pub fn admission_control(problem: &SliceProblem) -> Result<AdmissionPolicy> {
    let k = problem.kink()?;
    let relative = problem.op.relative(&k.alpha);
    Ok(AdmissionPolicy { alpha: k.alpha, relative, x: k.x })
}

/// Static-slicing admission control with caps on admission probabilities.
pub fn ss_admission_policy(op: &MobilityOperator, v: usize, share: f64, target: f64) -> Result<AdmissionPolicy> {
    if share * target <= 1.0 {
        return Err(Error::InfeasibleUnderSs { slice: v, value: share * target });
    }
    admission_control(&SliceProblem::static_slicing(op, share, target))
}

/// `h = <g, rel> - share (target - 1) x` for slice `v` among `policies`.
pub fn btd_penalty(policies: &[AdmissionPolicy], v: usize, shares: &[f64], target: f64) -> f64 {
    let g = super::aggregate_of(policies, shares);
    dot(&g, &policies[v].relative) - shares[v] * (target - 1.0) * policies[v].x
}

/// Direct solve used for checks: minimizes `e^x + lambda [h]_+` by dense
/// scanning over `x` followed by the exact inner QP.
#[cfg(test)]
pub(crate) fn scan_best_response(problem: &SliceProblem, lambda: f64, epsilon: f64, x_prev: f64, hi: f64) -> f64 {
    let lo = problem.x_min();
    let n = 4000;
    (0..=n)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let p = problem.phi(x, None).unwrap();
            penalized(problem, lambda, epsilon, x_prev, &p).0
        })
        .fold(f64::INFINITY, f64::min)
}
