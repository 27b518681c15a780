//! Vectorized self-play rollouts.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::beta::{to_price, BetaHead};
use super::features::{feature_dim, write_stage_feature, write_state_features};
use super::nn::Mlp;
use crate::error::Result;
use crate::market::{step_or_collapse, Information, MarketConfig};
use crate::scalar::Scalar;
use crate::seed::mix_seed;

/// Decisions of one firm across a batch of playthroughs.
///
/// Samples that share an input row (every playthrough at a given stage when
/// only the stage is observed) point at the same entry of `rows`, so the
/// network runs once per distinct input.
#[derive(Clone, Debug)]
pub struct AgentBatch<S> {
    pub rows: Array2<S>,
    pub row: Vec<usize>,
    pub traj: Vec<usize>,
    /// Zero-based stage.
    pub stage: Vec<usize>,
    pub x: Vec<f64>,
    pub log_prob: Vec<f64>,
    pub reward: Vec<f64>,
    /// Critic estimate at collection time; zero when no critic was given.
    pub value: Vec<f64>,
    /// Same playthrough, next stage, if the firm is still in the market.
    pub next: Vec<Option<usize>>,
    pub advantage: Vec<f64>,
    /// Regression target for the critic (REINFORCE: return-to-go).
    pub target: Vec<f64>,
}

impl<S: Scalar> AgentBatch<S> {
    fn new(dim: usize) -> Self {
        Self {
            rows: Array2::zeros((0, dim)),
            row: Vec::new(),
            traj: Vec::new(),
            stage: Vec::new(),
            x: Vec::new(),
            log_prob: Vec::new(),
            reward: Vec::new(),
            value: Vec::new(),
            next: Vec::new(),
            advantage: Vec::new(),
            target: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Undiscounted reward-to-go per sample.
    pub fn returns_to_go(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.len()];
        for s in (0..self.len()).rev() {
            g[s] = self.reward[s] + self.next[s].map_or(0.0, |n| g[n]);
        }
        g
    }

    /// Advantages against the per-stage batch mean of the reward-to-go.
    pub fn set_reinforce_targets(&mut self, horizon: usize) {
        let g = self.returns_to_go();
        let mut sum = vec![0.0; horizon];
        let mut count = vec![0usize; horizon];
        for (s, &v) in g.iter().enumerate() {
            sum[self.stage[s]] += v;
            count[self.stage[s]] += 1;
        }
        let baseline: Vec<f64> =
            sum.iter().zip(&count).map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
        self.advantage = g.iter().enumerate().map(|(s, &v)| v - baseline[self.stage[s]]).collect();
        self.target = g;
    }

    /// Generalized advantage estimates; a firm's value after its last
    /// decision is zero.
    pub fn set_gae_targets(&mut self, gamma: f64, lambda: f64) {
        let n = self.len();
        let mut adv = vec![0.0; n];
        for s in (0..n).rev() {
            let (v_next, a_next) = self.next[s].map_or((0.0, 0.0), |k| (self.value[k], adv[k]));
            let delta = self.reward[s] + gamma * v_next - self.value[s];
            adv[s] = delta + gamma * lambda * a_next;
        }
        self.target = adv.iter().zip(&self.value).map(|(a, v)| a + v).collect();
        self.advantage = adv;
    }
}

#[derive(Clone, Debug)]
pub struct Batch<S> {
    pub n_traj: usize,
    pub agents: Vec<AgentBatch<S>>,
    /// Batch mean of each firm's total reward.
    pub mean_utility: Vec<f64>,
}

/// Evaluates `net` on the rows and converts each row to Beta parameters.
pub(crate) fn heads<S: Scalar>(net: &Mlp<S>, rows: &Array2<S>) -> Vec<(BetaHead, f64, f64)> {
    let out = net.forward(rows);
    out.rows()
        .into_iter()
        .map(|r| {
            let (za, zb) = (r[0].to_f64_lossy(), r[1].to_f64_lossy());
            (BetaHead::from_raw(za, zb), za, zb)
        })
        .collect()
}

/// Plays `n_traj` playthroughs with every firm sampling from its actor.
///
/// Playthrough `b` draws from its own ChaCha stream seeded by
/// `(seed, iteration, b)`, so the batch does not depend on how it is split.
pub fn collect<S: Scalar>(
    actors: &[Mlp<S>],
    critics: Option<&[Mlp<S>]>,
    config: &MarketConfig<f64>,
    n_traj: usize,
    seed: u64,
    iteration: u64,
) -> Result<Batch<S>> {
    let n = config.n_agents;
    let horizon = config.horizon;
    let p_max = config.p_max();
    let dim = feature_dim(config);
    let partial = config.information == Information::PartiallyObservable;

    let mut rngs: Vec<ChaCha8Rng> = (0..n_traj)
        .map(|b| ChaCha8Rng::seed_from_u64(mix_seed(seed, &[iteration, b as u64])))
        .collect();
    let mut states = vec![config.initial_state(); n_traj];
    let mut agents: Vec<AgentBatch<S>> = (0..n).map(|_| AgentBatch::new(dim)).collect();
    let mut last: Vec<Vec<Option<usize>>> = vec![vec![None; n_traj]; n];
    let mut current: Vec<Vec<usize>> = vec![vec![usize::MAX; n_traj]; n];
    let mut prices = vec![vec![0.0; n]; n_traj];
    let mut utility = vec![0.0; n];
    let mut feat: Vec<S> = Vec::with_capacity(dim);

    for t in 0..horizon {
        for i in 0..n {
            let cost = config.unit_costs[i];
            let live: Vec<usize> = (0..n_traj).filter(|&b| states[b].active[i]).collect();
            if live.is_empty() {
                continue;
            }
            let ab = &mut agents[i];
            let row_base = ab.rows.nrows();
            let new_rows = if partial {
                feat.clear();
                write_stage_feature(t + 1, config, &mut feat);
                Array2::from_shape_vec((1, dim), feat.clone()).expect("shape")
            } else {
                let mut flat = Vec::with_capacity(live.len() * dim);
                for &b in &live {
                    let st = &states[b];
                    write_state_features(st.t, &st.demands, &st.active, config, &mut flat);
                }
                Array2::from_shape_vec((live.len(), dim), flat).expect("shape")
            };
            let hs = heads(&actors[i], &new_rows);
            let values: Option<Vec<f64>> = critics.map(|c| {
                c[i].forward(&new_rows).column(0).iter().map(|v| v.to_f64_lossy()).collect()
            });
            ab.rows.append(ndarray::Axis(0), new_rows.view()).expect("row width");
            for (k, &b) in live.iter().enumerate() {
                let local = if partial { 0 } else { k };
                let (head, _, _) = hs[local];
                let x = head.sample(&mut rngs[b]);
                prices[b][i] = to_price(x, cost, p_max);
                let s = ab.len();
                ab.row.push(row_base + local);
                ab.traj.push(b);
                ab.stage.push(t);
                ab.x.push(x);
                ab.log_prob.push(head.log_prob(x));
                ab.reward.push(0.0);
                ab.value.push(values.as_ref().map_or(0.0, |v| v[local]));
                ab.next.push(None);
                if let Some(prev) = last[i][b] {
                    ab.next[prev] = Some(s);
                }
                last[i][b] = Some(s);
                current[i][b] = s;
            }
        }
        for b in 0..n_traj {
            if states[b].n_active() == 0 {
                continue;
            }
            let (next, outcome) = step_or_collapse(&states[b], &prices[b], config)?;
            for i in (0..n).filter(|&i| states[b].active[i]) {
                let r = outcome.rewards[i];
                agents[i].reward[current[i][b]] = r;
                utility[i] += r;
            }
            states[b] = next;
        }
    }
    let mean_utility = utility.iter().map(|u| u / n_traj as f64).collect();
    Ok(Batch { n_traj, agents, mean_utility })
}
