//! Occupation-measure relaxations of the N-armed problem and the
//! single-armed quantities derived from their solution.

use serde::Serialize;

use crate::error::Result;
use crate::lp::simplex::{solve_lp, LpProblem, LpSolution};
use crate::model::{ArmModel, ArmPolicy, ArmType, Instance, ACTIONS};
use crate::scalar::Scalar;

/// Relaxation LP together with its variable layout.
#[derive(Debug, Clone)]
pub struct Relaxation<T> {
    pub problem: LpProblem<T>,
    /// Index of the first variable of each type; `y_k(s,a)` lives at
    /// `offsets[k] + 2*s + a`.
    pub offsets: Vec<usize>,
    pub n_states: Vec<usize>,
    /// Row of the budget constraint, if present.
    pub budget_row: Option<usize>,
}

impl<T: Scalar> Relaxation<T> {
    pub fn var(&self, k: usize, s: usize, a: usize) -> usize {
        self.offsets[k] + 2 * s + a
    }
}

/// Builds the relaxation: one shared budget row, then per type the flow
/// balance rows (one per state, the dependent one kept) and the
/// normalization row.
pub fn build_relaxation<T: Scalar>(instance: &Instance<T>) -> Relaxation<T> {
    build(instance.types(), instance.alpha(), true)
}

fn build<T: Scalar>(types: &[ArmType<T>], alpha: T, with_budget: bool) -> Relaxation<T> {
    let mut offsets = Vec::with_capacity(types.len());
    let mut n_states = Vec::with_capacity(types.len());
    let mut total = 0;
    for t in types {
        offsets.push(total);
        n_states.push(t.model.n_states());
        total += 2 * t.model.n_states();
    }
    let mut problem = LpProblem::new(total);
    let multi = types.len() > 1;
    for (k, t) in types.iter().enumerate() {
        for s in 0..n_states[k] {
            for a in ACTIONS {
                let j = offsets[k] + 2 * s + a;
                problem.objective[j] = t.beta * t.model.r(s, a);
                problem.var_labels[j] = if multi {
                    format!("y{k}({s},{a})")
                } else {
                    format!("y({s},{a})")
                };
            }
        }
    }

    let budget_row = if with_budget {
        let mut row = vec![T::zero(); total];
        for (k, t) in types.iter().enumerate() {
            for s in 0..n_states[k] {
                row[offsets[k] + 2 * s + 1] = t.beta;
            }
        }
        problem.push_row("budget", row, alpha);
        Some(0)
    } else {
        None
    };

    for (k, t) in types.iter().enumerate() {
        let n = n_states[k];
        let off = offsets[k];
        let tag = if multi { format!("[{k}]") } else { String::new() };
        for s in 0..n {
            let mut row = vec![T::zero(); total];
            match &t.model {
                ArmModel::Dt(m) => {
                    for from in 0..n {
                        for a in ACTIONS {
                            row[off + 2 * from + a] = row[off + 2 * from + a] + m.p(from, a, s);
                        }
                    }
                    for a in ACTIONS {
                        row[off + 2 * s + a] = row[off + 2 * s + a] - T::one();
                    }
                }
                ArmModel::Ct(m) => {
                    for from in 0..n {
                        for a in ACTIONS {
                            row[off + 2 * from + a] = m.g(from, a, s);
                        }
                    }
                }
            }
            problem.push_row(format!("flow{tag}({s})"), row, T::zero());
        }
        let mut row = vec![T::zero(); total];
        for v in row.iter_mut().skip(off).take(2 * n) {
            *v = T::one();
        }
        problem.push_row(format!("normalize{tag}"), row, T::one());
    }

    Relaxation {
        problem,
        offsets,
        n_states,
        budget_row,
    }
}

/// Optimal occupation measure per type, with the relaxed value and the
/// budget multiplier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationMeasure<T> {
    /// `y[k][s] = [y_k(s,0), y_k(s,1)]`.
    pub y: Vec<Vec<[T; 2]>>,
    pub betas: Vec<T>,
    /// Optimal relaxed reward per arm per unit time.
    pub value: T,
    /// Budget multiplier used downstream (zero when the budget row is not
    /// binding in value).
    pub budget_dual: T,
    /// Raw simplex dual of the budget row.
    pub simplex_budget_dual: T,
}

impl<T: Scalar> OccupationMeasure<T> {
    /// Single-type view.
    pub fn homogeneous(&self) -> &[[T; 2]] {
        &self.y[0]
    }
}

/// Solves the relaxation of `instance`. Types with identical models are
/// solved as one merged type so that they receive identical measures.
pub fn solve_relaxation<T: Scalar>(instance: &Instance<T>) -> Result<OccupationMeasure<T>> {
    let types = instance.types();
    let mut group_of = Vec::with_capacity(types.len());
    let mut groups: Vec<ArmType<T>> = Vec::new();
    for t in types {
        match groups.iter().position(|g| g.model == t.model) {
            Some(g) => {
                groups[g].beta = groups[g].beta + t.beta;
                group_of.push(g);
            }
            None => {
                group_of.push(groups.len());
                groups.push(t.clone());
            }
        }
    }
    let relax = build(&groups, instance.alpha(), true);
    let sol = solve_lp(&relax.problem)?;
    let simplex_dual = sol.duals[0];

    let free = build(&groups, instance.alpha(), false);
    let free_value = solve_lp(&free.problem)?.objective;
    let tol = T::model_tol() * (T::one() + sol.objective.abs());
    let budget_dual = if (free_value - sol.objective).abs() <= tol {
        T::zero()
    } else {
        simplex_dual
    };

    let per_group = extract(&relax, &sol);
    Ok(OccupationMeasure {
        y: group_of.iter().map(|&g| per_group[g].clone()).collect(),
        betas: types.iter().map(|t| t.beta).collect(),
        value: sol.objective,
        budget_dual,
        simplex_budget_dual: simplex_dual,
    })
}

fn extract<T: Scalar>(relax: &Relaxation<T>, sol: &LpSolution<T>) -> Vec<Vec<[T; 2]>> {
    relax
        .n_states
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            (0..n)
                .map(|s| [sol.x[relax.var(k, s, 0)], sol.x[relax.var(k, s, 1)]])
                .collect()
        })
        .collect()
}

/// `pi(a|s) = y(s,a) / (y(s,0) + y(s,1))`, or 1/2 where the state has no mass.
pub fn policy_from_occupation<T: Scalar>(y: &[[T; 2]]) -> ArmPolicy<T> {
    let half = T::lit(0.5);
    let probs = y
        .iter()
        .map(|&[y0, y1]| {
            let mass = y0 + y1;
            if mass > T::zero() {
                [y0 / mass, y1 / mass]
            } else {
                [half, half]
            }
        })
        .collect();
    ArmPolicy::new(probs).expect("ratios of a nonnegative pair form a distribution")
}

/// Per-type policies of an occupation measure.
pub fn policies<T: Scalar>(measure: &OccupationMeasure<T>) -> Vec<ArmPolicy<T>> {
    measure.y.iter().map(|y| policy_from_occupation(y)).collect()
}

/// `sum_k beta_k sum_{s,a} r_k(s,a) y_k(s,a)`.
pub fn relaxed_value<T: Scalar>(instance: &Instance<T>, measure: &OccupationMeasure<T>) -> T {
    instance
        .types()
        .iter()
        .zip(&measure.y)
        .map(|(t, y)| {
            let v: T = y
                .iter()
                .enumerate()
                .map(|(s, ys)| t.model.r(s, 0) * ys[0] + t.model.r(s, 1) * ys[1])
                .sum();
            t.beta * v
        })
        .sum()
}

/// State marginal `mu(s) = y(s,0) + y(s,1)`.
pub fn stationary_marginal<T: Scalar>(y: &[[T; 2]]) -> Vec<T> {
    y.iter().map(|&[a, b]| a + b).collect()
}
