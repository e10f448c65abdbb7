//! Lagrangian indices from relative value iteration on the subsidized MDP.

use crate::error::{Error, Result};
use crate::model::{DtModel, ACTIONS};
use crate::scalar::Scalar;

pub const RVI_TOL: f64 = 1e-10;
pub const RVI_MAX_ITER: usize = 1_000_000;

/// Bias function of the average-reward MDP with reward `r(s,a) - lambda*a`.
///
/// Iterates on the lazy chain `(P + I)/2`, which is aperiodic and has the
/// same optimal policies; its bias is twice the bias of the original chain,
/// so the result is halved before returning. The reference state is 0.
pub fn relative_values<T: Scalar>(model: &DtModel<T>, lambda: T) -> Result<Vec<T>> {
    let n = model.n_states();
    let half = T::lit(0.5);
    let tol = T::lit(RVI_TOL).max(T::epsilon() * T::lit(64.0));
    let mut h = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let mut span = T::infinity();
    for _ in 0..RVI_MAX_ITER {
        for (s, out) in next.iter_mut().enumerate() {
            *out = ACTIONS
                .iter()
                .map(|&a| {
                    let reward = if a == 1 { model.r(s, 1) - lambda } else { model.r(s, 0) };
                    let ev: T = model.row(s, a).iter().zip(&h).map(|(&p, &v)| p * v).sum();
                    reward + half * (ev + h[s])
                })
                .fold(T::neg_infinity(), T::max);
        }
        let base = next[0];
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for (v, old) in next.iter_mut().zip(&h) {
            *v = *v - base;
            let d = *v - *old;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        std::mem::swap(&mut h, &mut next);
        span = hi - lo;
        if span < tol {
            return Ok(h.into_iter().map(|v| v * half).collect());
        }
    }
    Err(Error::NotConverged {
        iterations: RVI_MAX_ITER,
        span: span.as_f64(),
    })
}

/// `index(s) = [r(s,1) - lambda + P(s,1,.)h] - [r(s,0) + P(s,0,.)h]`.
pub fn lagrangian_indices<T: Scalar>(model: &DtModel<T>, lambda: T) -> Result<Vec<T>> {
    let h = relative_values(model, lambda)?;
    let q = |s: usize, a: usize| -> T { model.row(s, a).iter().zip(&h).map(|(&p, &v)| p * v).sum() };
    Ok((0..model.n_states())
        .map(|s| (model.r(s, 1) - lambda + q(s, 1)) - (model.r(s, 0) + q(s, 0)))
        .collect())
}

/// States sorted by descending index; ties keep the lower state first.
pub fn priority_order<T: Scalar>(indices: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by(|&a, &b| {
        indices[b]
            .partial_cmp(&indices[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}
