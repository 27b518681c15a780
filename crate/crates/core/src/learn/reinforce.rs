//! Score-function policy gradient with a per-stage mean baseline.

use ndarray::Array2;

use super::batch::AgentBatch;
use super::beta::PreparedHead;
use super::nn::{Adam, Mlp};
use crate::scalar::Scalar;

pub(crate) fn prepared_heads<S: Scalar>(out: &Array2<S>) -> Vec<PreparedHead> {
    out.rows()
        .into_iter()
        .map(|r| PreparedHead::from_raw(r[0].to_f64_lossy(), r[1].to_f64_lossy()))
        .collect()
}

/// Surrogate loss `-(1/B) sum_s log pi(x_s | o_s) A_s` over the recorded
/// samples and its parameter gradient. `B` is the number of playthroughs, so
/// the negated gradient estimates the gradient of expected utility.
pub fn reinforce_loss_grad<S: Scalar>(
    actor: &Mlp<S>,
    batch: &AgentBatch<S>,
    n_traj: usize,
) -> (f64, Mlp<S>) {
    let mut grad = actor.zeros_like();
    if batch.is_empty() {
        return (0.0, grad);
    }
    let (out, cache) = actor.forward_cached(&batch.rows);
    let heads = prepared_heads(&out);
    let scale = 1.0 / n_traj as f64;
    let mut d_out = Array2::<f64>::zeros((out.nrows(), 2));
    let mut loss = 0.0;
    for s in 0..batch.len() {
        let (r, x, a) = (batch.row[s], batch.x[s], batch.advantage[s]);
        if a == 0.0 {
            continue;
        }
        let h = &heads[r];
        loss -= scale * a * h.log_prob(x);
        let (ga, gb) = h.log_prob_grad_raw(x);
        d_out[[r, 0]] -= scale * a * ga;
        d_out[[r, 1]] -= scale * a * gb;
    }
    actor.backward(&cache, &d_out.mapv(S::lit), &mut grad);
    (loss, grad)
}

/// One Adam step on the REINFORCE surrogate. Advantages must already be set
/// (see [`AgentBatch::set_reinforce_targets`]).
pub fn reinforce_update<S: Scalar>(
    actor: &mut Mlp<S>,
    optimizer: &mut Adam<S>,
    batch: &AgentBatch<S>,
    n_traj: usize,
    lr: f64,
) -> f64 {
    let (loss, grad) = reinforce_loss_grad(actor, batch, n_traj);
    if grad.sq_norm() > S::zero() {
        optimizer.update(actor, &grad, lr);
    }
    loss
}
