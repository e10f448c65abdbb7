//! Dense two-phase primal simplex with Bland's rule.
//!
//! Problems are `maximize c'x  s.t.  A x = b, x >= 0`. Every row gets an
//! artificial column that stays in the tableau after phase one so the
//! equality duals can be read off its reduced cost. Rows whose artificial
//! cannot be pivoted out are linearly dependent and are dropped.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_PIVOTS: usize = 100_000;

/// Equality-form LP over nonnegative variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpProblem<T> {
    /// Maximized objective coefficients.
    pub objective: Vec<T>,
    /// Dense constraint rows.
    pub rows: Vec<Vec<T>>,
    pub rhs: Vec<T>,
    pub row_labels: Vec<String>,
    pub var_labels: Vec<String>,
}

impl<T: Scalar> LpProblem<T> {
    pub fn new(n_vars: usize) -> Self {
        Self {
            objective: vec![T::zero(); n_vars],
            rows: Vec::new(),
            rhs: Vec::new(),
            row_labels: Vec::new(),
            var_labels: (0..n_vars).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn push_row(&mut self, label: impl Into<String>, row: Vec<T>, rhs: T) {
        assert_eq!(row.len(), self.n_vars(), "row width mismatch");
        self.rows.push(row);
        self.rhs.push(rhs);
        self.row_labels.push(label.into());
    }

    /// Largest |A x - b| over all rows.
    pub fn max_residual(&self, x: &[T]) -> T {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| {
                let ax: T = row.iter().zip(x).map(|(&a, &xi)| a * xi).sum();
                (ax - b).abs()
            })
            .fold(T::zero(), T::max)
    }

    /// Reduced costs `c_j - A_j' y` for a dual vector `y` of the max problem.
    /// Optimality requires every entry to be `<= 0`, with equality on the
    /// support of the primal solution.
    pub fn reduced_costs(&self, duals: &[T]) -> Vec<T> {
        (0..self.n_vars())
            .map(|j| {
                let ay: T = self.rows.iter().zip(duals).map(|(r, &y)| r[j] * y).sum();
                self.objective[j] - ay
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    /// One multiplier per original row: the sensitivity of the optimal
    /// value to that row's right-hand side. Dropped rows carry whatever
    /// value keeps the dual system consistent.
    pub duals: Vec<T>,
    pub objective: T,
    /// Basic variable per remaining row.
    pub basis: Vec<usize>,
    /// Rows found linearly dependent and removed.
    pub dropped_rows: Vec<usize>,
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    /// Reduced costs of the current (minimization) objective; the last
    /// entry is minus the objective value.
    cost_row: Vec<T>,
    n_struct: usize,
    tol: T,
}

impl<T: Scalar> Tableau<T> {
    fn rhs_col(&self) -> usize {
        self.cost_row.len() - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.cost_row.len();
        let inv = T::one() / self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v = *v * inv;
        }
        self.rows[r][c] = T::one();
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f == T::zero() {
                continue;
            }
            for j in 0..width {
                row[j] = row[j] - f * pivot_row[j];
            }
            row[c] = T::zero();
        }
        let f = self.cost_row[c];
        if f != T::zero() {
            for j in 0..width {
                self.cost_row[j] = self.cost_row[j] - f * pivot_row[j];
            }
            self.cost_row[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Resets the cost row for `cost` (indexed over all non-rhs columns).
    fn price(&mut self, cost: &[T]) {
        let width = self.cost_row.len();
        let mut d = vec![T::zero(); width];
        d[..cost.len()].copy_from_slice(cost);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb == T::zero() {
                continue;
            }
            for j in 0..width {
                d[j] = d[j] - cb * row[j];
            }
        }
        self.cost_row = d;
    }

    /// Runs Bland-rule pivots until optimal. Only structural columns may
    /// enter the basis.
    fn optimize(&mut self, pivots: &mut usize) -> Result<()> {
        let rhs = self.rhs_col();
        loop {
            let entering = (0..self.n_struct).find(|&j| self.cost_row[j] < -self.tol);
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, T)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a <= self.tol {
                    continue;
                }
                let ratio = row[rhs].max(T::zero()) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - self.tol || ((ratio - br).abs() <= self.tol && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Err(Error::Unbounded { column: c });
            };
            self.pivot(r, c);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::SimplexLimit(MAX_PIVOTS));
            }
        }
    }
}

/// Solves the LP to an optimal basic solution.
pub fn solve_lp<T: Scalar>(problem: &LpProblem<T>) -> Result<LpSolution<T>> {
    let m = problem.n_rows();
    let n = problem.n_vars();
    let width = n + m + 1;
    let tol = T::pivot_tol();

    let mut flipped = vec![false; m];
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![T::zero(); width];
        let sign = if problem.rhs[i] < T::zero() {
            flipped[i] = true;
            -T::one()
        } else {
            T::one()
        };
        for j in 0..n {
            row[j] = sign * problem.rows[i][j];
        }
        row[n + i] = T::one();
        row[width - 1] = sign * problem.rhs[i];
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        basis: (n..n + m).collect(),
        cost_row: vec![T::zero(); width],
        n_struct: n,
        tol,
    };

    // phase one: minimize the sum of artificials
    let mut phase1 = vec![T::zero(); n + m];
    for c in phase1.iter_mut().skip(n) {
        *c = T::one();
    }
    tab.price(&phase1);
    let mut pivots = 0;
    tab.optimize(&mut pivots)?;
    let residual = -tab.cost_row[width - 1];
    let b_scale = problem.rhs.iter().fold(T::one(), |acc, &b| acc.max(b.abs()));
    if residual > T::model_tol() * b_scale {
        return Err(Error::Infeasible {
            residual: residual.as_f64(),
        });
    }

    // drive zero-level artificials out; rows where that fails are redundant
    let mut dropped = Vec::new();
    let mut i = 0;
    while i < tab.rows.len() {
        if tab.basis[i] >= n {
            let entering = (0..n).find(|&j| tab.rows[i][j].abs() > tol);
            match entering {
                Some(c) => {
                    tab.pivot(i, c);
                    i += 1;
                }
                None => {
                    dropped.push(tab.basis[i] - n);
                    tab.rows.remove(i);
                    tab.basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }
    dropped.sort_unstable();

    // phase two on the negated objective
    let mut phase2 = vec![T::zero(); n + m];
    for j in 0..n {
        phase2[j] = -problem.objective[j];
    }
    tab.price(&phase2);
    tab.optimize(&mut pivots)?;

    let mut x = vec![T::zero(); n];
    for (row, &b) in tab.rows.iter().zip(&tab.basis) {
        if b < n {
            x[b] = row[width - 1].max(T::zero());
        }
    }
    let duals = (0..m)
        .map(|i| {
            let d = tab.cost_row[n + i];
            if flipped[i] {
                -d
            } else {
                d
            }
        })
        .collect();
    let objective = problem.objective.iter().zip(&x).map(|(&c, &xi)| c * xi).sum();
    Ok(LpSolution {
        x,
        duals,
        objective,
        basis: tab.basis,
        dropped_rows: dropped,
    })
}
