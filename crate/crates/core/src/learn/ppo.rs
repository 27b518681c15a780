//! Clipped-surrogate policy optimization with a learned critic.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::AgentBatch;
use super::nn::{Adam, Mlp};
use super::reinforce::prepared_heads;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub vf_coef: f64,
    /// Standardize advantages within each minibatch.
    pub normalize_advantage: bool,
    /// Joint actor and critic gradient norm cap.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 1.0,
            gae_lambda: 0.95,
            epochs: 10,
            minibatch: 2048,
            vf_coef: 0.5,
            normalize_advantage: true,
            max_grad_norm: Some(0.5),
        }
    }
}

#[derive(Debug)]
pub struct PpoLoss<S> {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub actor_grad: Mlp<S>,
    pub critic_grad: Mlp<S>,
}

/// Inputs for a subset of samples: either all rows (when shared rows are
/// few) or one gathered row per sample.
fn minibatch_rows<S: Scalar>(batch: &AgentBatch<S>, idx: &[usize]) -> (Array2<S>, Vec<usize>) {
    if batch.rows.nrows() <= idx.len() {
        (batch.rows.clone(), idx.iter().map(|&s| batch.row[s]).collect())
    } else {
        let dim = batch.rows.ncols();
        let mut flat = Vec::with_capacity(idx.len() * dim);
        for &s in idx {
            flat.extend(batch.rows.row(batch.row[s]).iter().copied());
        }
        (Array2::from_shape_vec((idx.len(), dim), flat).expect("shape"), (0..idx.len()).collect())
    }
}

/// Loss `L_clip + vf_coef * L_value` on the samples `idx`, with gradients for
/// both networks. Uses the recorded log-probabilities, advantages and targets.
pub fn ppo_loss_grad<S: Scalar>(
    actor: &Mlp<S>,
    critic: &Mlp<S>,
    batch: &AgentBatch<S>,
    idx: &[usize],
    cfg: &PpoConfig,
) -> PpoLoss<S> {
    let m = idx.len();
    let mut actor_grad = actor.zeros_like();
    let mut critic_grad = critic.zeros_like();
    if m == 0 {
        return PpoLoss {
            loss: 0.0,
            policy_loss: 0.0,
            value_loss: 0.0,
            clip_fraction: 0.0,
            actor_grad,
            critic_grad,
        };
    }
    let (rows, local) = minibatch_rows(batch, idx);

    let mut adv: Vec<f64> = idx.iter().map(|&s| batch.advantage[s]).collect();
    if cfg.normalize_advantage && m > 1 {
        let mean = adv.iter().sum::<f64>() / m as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let sd = var.sqrt() + 1e-8;
        adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    }

    let (out, cache) = actor.forward_cached(&rows);
    let heads = prepared_heads(&out);
    let mut d_out = Array2::<f64>::zeros((out.nrows(), 2));
    let (lo, hi) = (1.0 - cfg.clip, 1.0 + cfg.clip);
    let mut policy_loss = 0.0;
    let mut clipped = 0usize;
    for (k, &s) in idx.iter().enumerate() {
        let r = local[k];
        let h = &heads[r];
        let x = batch.x[s];
        let ratio = (h.log_prob(x) - batch.log_prob[s]).exp();
        let a = adv[k];
        let unclipped = ratio * a;
        let bounded = ratio.clamp(lo, hi) * a;
        policy_loss -= unclipped.min(bounded) / m as f64;
        if unclipped <= bounded {
            let (ga, gb) = h.log_prob_grad_raw(x);
            let coef = -a * ratio / m as f64;
            d_out[[r, 0]] += coef * ga;
            d_out[[r, 1]] += coef * gb;
        } else {
            clipped += 1;
        }
    }
    actor.backward(&cache, &d_out.mapv(S::lit), &mut actor_grad);

    let (v_out, v_cache) = critic.forward_cached(&rows);
    let mut d_v = Array2::<f64>::zeros((v_out.nrows(), 1));
    let mut value_loss = 0.0;
    for (k, &s) in idx.iter().enumerate() {
        let r = local[k];
        let err = v_out[[r, 0]].to_f64_lossy() - batch.target[s];
        value_loss += err * err / m as f64;
        d_v[[r, 0]] += cfg.vf_coef * 2.0 * err / m as f64;
    }
    critic.backward(&v_cache, &d_v.mapv(S::lit), &mut critic_grad);

    PpoLoss {
        loss: policy_loss + cfg.vf_coef * value_loss,
        policy_loss,
        value_loss,
        clip_fraction: clipped as f64 / m as f64,
        actor_grad,
        critic_grad,
    }
}

/// Optimizer state of one firm's actor-critic pair.
#[derive(Clone, Debug)]
pub struct PpoState<S> {
    pub actor_opt: Adam<S>,
    pub critic_opt: Adam<S>,
}

impl<S: Scalar> PpoState<S> {
    pub fn new(actor: &Mlp<S>, critic: &Mlp<S>) -> Self {
        Self { actor_opt: Adam::new(actor), critic_opt: Adam::new(critic) }
    }
}

/// Several epochs of shuffled minibatch steps on one firm's batch.
/// Advantages and targets must be set (see [`AgentBatch::set_gae_targets`]).
/// Returns the mean loss over all minibatch steps.
pub fn ppo_update<S: Scalar>(
    actor: &mut Mlp<S>,
    critic: &mut Mlp<S>,
    state: &mut PpoState<S>,
    batch: &AgentBatch<S>,
    cfg: &PpoConfig,
    lr: f64,
    shuffle_seed: u64,
) -> f64 {
    let n = batch.len();
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    let mut steps = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.minibatch.max(1)) {
            let mut l = ppo_loss_grad(actor, critic, batch, idx, cfg);
            if let Some(cap) = cfg.max_grad_norm {
                let norm = (l.actor_grad.sq_norm() + l.critic_grad.sq_norm()).to_f64_lossy().sqrt();
                if norm > cap {
                    let f = S::lit(cap / (norm + 1e-6));
                    l.actor_grad.scale(f);
                    l.critic_grad.scale(f);
                }
            }
            if l.actor_grad.sq_norm() > S::zero() {
                state.actor_opt.update(actor, &l.actor_grad, lr);
            }
            state.critic_opt.update(critic, &l.critic_grad, lr);
            total += l.loss;
            steps += 1;
        }
    }
    total / steps as f64
}
