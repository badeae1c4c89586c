//! Dense two-phase simplex for small linear programs.
//!
//! Problems are stated as maximize `c'x` subject to linear equalities and
//! inequalities, with each variable either nonnegative or free. Bland's rule
//! picks entering and leaving variables, so the method cannot cycle.

use crate::error::{Error, Result};

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    free: Vec<bool>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    /// Maximize `objective . x` over nonnegative `x`.
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self { objective, free: vec![false; n], constraints: Vec::new() }
    }

    /// Lets variable `j` take any sign.
    pub fn free(mut self, j: usize) -> Self {
        self.free[j] = true;
        self
    }

    pub fn constraint(mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        assert_eq!(coefficients.len(), self.objective.len(), "constraint width");
        self.constraints.push(Constraint { coefficients, relation, rhs });
        self
    }

    pub fn solve(&self) -> Result<LpSolution> {
        // split free variables into a difference of two nonnegative ones
        let mut columns: Vec<(usize, f64)> = Vec::new();
        for (j, &is_free) in self.free.iter().enumerate() {
            columns.push((j, 1.0));
            if is_free {
                columns.push((j, -1.0));
            }
        }
        let n = columns.len();
        let m = self.constraints.len();
        let slacks = self.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
        // layout: [structural n | slack | artificial m | rhs]
        let width = n + slacks + m + 1;
        let rhs_col = width - 1;
        let mut tab = vec![vec![0.0; width]; m];
        let mut basis = vec![0usize; m];
        let mut slack_at = n;
        for (i, c) in self.constraints.iter().enumerate() {
            let sign = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            for (k, &(j, dir)) in columns.iter().enumerate() {
                tab[i][k] = sign * dir * c.coefficients[j];
            }
            match c.relation {
                Relation::Le => {
                    tab[i][slack_at] = sign;
                    slack_at += 1;
                }
                Relation::Ge => {
                    tab[i][slack_at] = -sign;
                    slack_at += 1;
                }
                Relation::Eq => {}
            }
            tab[i][n + slacks + i] = 1.0;
            tab[i][rhs_col] = sign * c.rhs;
            basis[i] = n + slacks + i;
        }

        let artificial_start = n + slacks;
        let mut pivots = 0;

        // phase one: minimize the sum of artificials
        let mut cost = vec![0.0; width];
        for c in cost.iter_mut().skip(artificial_start).take(m) {
            *c = 1.0;
        }
        run_simplex(&mut tab, &mut basis, &cost, width - 1, &mut pivots)?;
        let infeasibility: f64 = basis
            .iter()
            .zip(&tab)
            .filter(|(&b, _)| b >= artificial_start)
            .map(|(_, row)| row[rhs_col])
            .sum();
        let scale = 1.0 + self.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
        if infeasibility > 1e-9 * scale {
            return Err(Error::InfeasibleLp);
        }

        // drive remaining artificials out of the basis, dropping redundant rows
        let mut i = 0;
        while i < tab.len() {
            if basis[i] >= artificial_start {
                match (0..artificial_start).find(|&k| tab[i][k].abs() > EPS) {
                    Some(k) => {
                        pivot(&mut tab, &mut basis, i, k);
                        pivots += 1;
                    }
                    None => {
                        tab.remove(i);
                        basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }

        // phase two over structural and slack columns only
        let mut cost = vec![0.0; width];
        for (k, &(j, dir)) in columns.iter().enumerate() {
            cost[k] = -dir * self.objective[j];
        }
        run_simplex(&mut tab, &mut basis, &cost, artificial_start, &mut pivots)?;

        let mut x = vec![0.0; self.objective.len()];
        for (row, &b) in basis.iter().enumerate() {
            if b < n {
                let (j, dir) = columns[b];
                x[j] += dir * tab[row][rhs_col];
            }
        }
        let objective = x.iter().zip(&self.objective).map(|(a, c)| a * c).sum();
        Ok(LpSolution { x, objective, pivots })
    }
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = tab[row][col];
    tab[row].iter_mut().for_each(|x| *x /= p);
    let pivot_row = tab[row].clone();
    for (i, r) in tab.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                r.iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= f * y);
            }
        }
    }
    basis[row] = col;
}

/// Minimizes `cost . x` over the first `columns` columns from the current
/// basic feasible solution.
fn run_simplex(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    columns: usize,
    pivots: &mut usize,
) -> Result<()> {
    let rhs_col = tab.first().map_or(0, |r| r.len() - 1);
    let limit = 50_000;
    for _ in 0..limit {
        // reduced costs c_j - c_B B^-1 A_j
        let entering = (0..columns).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced = cost[j] - basis.iter().zip(tab.iter()).map(|(&b, row)| cost[b] * row[j]).sum::<f64>();
            reduced < -EPS
        });
        let Some(col) = entering else { return Ok(()) };
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, row) in tab.iter().enumerate() {
            if row[col] > EPS {
                let ratio = row[rhs_col] / row[col];
                let better = match best {
                    None => true,
                    Some((r, _, b)) => ratio < r - EPS || (ratio <= r + EPS && basis[i] < b),
                };
                if better {
                    best = Some((ratio, i, basis[i]));
                }
            }
        }
        let Some((_, row, _)) = best else { return Err(Error::UnboundedLp) };
        pivot(tab, basis, row, col);
        *pivots += 1;
    }
    Err(Error::SolverStall("simplex pivot limit reached".into()))
}
