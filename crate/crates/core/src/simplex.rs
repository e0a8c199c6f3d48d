//! Small dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Sized for the local-polytope LP (17 variables, 33 rows); no sparsity, no
//! presolve.

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-12;
const FEASIBILITY_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("problem is infeasible (phase-one residual {0:.3e})")]
    Infeasible(f64),
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("no convergence after {0} pivots")]
    IterationLimit(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize c·x` subject to the constraints and `x ≥ 0`.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced costs; the last entry holds minus the objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let inv = 1.0 / self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Loads `costs` and prices out the current basis.
    fn set_costs(&mut self, costs: &[f64]) {
        self.cost = costs.to_vec();
        self.cost.push(0.0);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = costs[b];
            if cb != 0.0 {
                for (v, t) in self.cost.iter_mut().zip(&self.rows[i]) {
                    *v -= cb * t;
                }
            }
        }
    }

    /// Runs primal simplex with Bland's rule over the columns `allowed` admits.
    fn optimize(&mut self, allowed: impl Fn(usize) -> bool) -> Result<(), LpError> {
        loop {
            if self.pivots >= MAX_ITERATIONS {
                return Err(LpError::IterationLimit(self.pivots));
            }
            let entering = (0..self.width).find(|&j| allowed(j) && self.cost[j] < -PIVOT_EPS);
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - PIVOT_EPS || (ratio <= best + PIVOT_EPS && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return Err(LpError::Unbounded),
            }
        }
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Result<Solution, LpError> {
        let n = self.objective.len();
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("objective has non-finite coefficients".into()));
        }
        for (i, con) in self.constraints.iter().enumerate() {
            if con.coeffs.len() != n {
                return Err(LpError::Malformed(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    con.coeffs.len()
                )));
            }
            if !con.rhs.is_finite() || con.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LpError::Malformed(format!("constraint {i} has non-finite entries")));
            }
        }

        // Normalize to non-negative right-hand sides.
        let normalized: Vec<(Vec<f64>, Relation, f64)> = self
            .constraints
            .iter()
            .map(|con| {
                if con.rhs < 0.0 {
                    let flipped = match con.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (con.coeffs.iter().map(|v| -v).collect(), flipped, -con.rhs)
                } else {
                    (con.coeffs.clone(), con.relation, con.rhs)
                }
            })
            .collect();

        let n_slack = normalized.iter().filter(|c| c.1 != Relation::Eq).count();
        let n_art = normalized.iter().filter(|c| c.1 != Relation::Le).count();
        let width = n + n_slack + n_art;
        let first_art = n + n_slack;

        let m = normalized.len();
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut next_slack, mut next_art) = (n, first_art);
        for (coeffs, relation, rhs) in normalized {
            let mut row = vec![0.0; width + 1];
            row[..n].copy_from_slice(&coeffs);
            row[width] = rhs;
            match relation {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis.push(next_slack);
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_slack += 1;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis.push(next_art);
                    next_art += 1;
                }
            }
            rows.push(row);
        }

        let mut tab = Tableau {
            rows,
            cost: Vec::new(),
            basis,
            width,
            pivots: 0,
        };

        if n_art > 0 {
            let mut phase_one = vec![0.0; width];
            phase_one[first_art..].iter_mut().for_each(|v| *v = 1.0);
            tab.set_costs(&phase_one);
            tab.optimize(|_| true)?;
            let residual = -tab.cost[width];
            if residual > FEASIBILITY_TOL {
                return Err(LpError::Infeasible(residual));
            }
            // Drive zero-valued artificials out of the basis where possible.
            for r in 0..m {
                if tab.basis[r] >= first_art {
                    if let Some(c) = (0..first_art).find(|&j| tab.rows[r][j].abs() > 1e-9) {
                        tab.pivot(r, c);
                    }
                }
            }
        }

        let mut phase_two = vec![0.0; width];
        phase_two[..n].copy_from_slice(&self.objective);
        tab.set_costs(&phase_two);
        tab.optimize(|j| j < first_art)?;

        let mut x = vec![0.0; n];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < n {
                x[b] = tab.rhs(i).max(0.0);
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(Solution {
            x,
            objective,
            pivots: tab.pivots,
        })
    }
}
