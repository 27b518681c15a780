//! Analytic policy-gradient losses against central finite differences.

use oligopoly::learn::{
    collect, ppo_loss_grad, ppo_update, reinforce_loss_grad, reinforce_update, Adam, AgentBatch,
    BetaHead, Mlp, PpoConfig, PpoState,
};
use oligopoly::{Information, MarketConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn net(sizes: &[usize], seed: u64, out_scale: f64) -> Mlp<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::new(sizes, out_scale, &mut rng)
}

/// Central differences of `f` at the parameters of `base`.
fn numeric_grad(base: &Mlp<f64>, f: impl Fn(&Mlp<f64>) -> f64) -> Vec<f64> {
    let p0 = base.params();
    let mut probe = base.clone();
    (0..p0.len())
        .map(|k| {
            let mut p = p0.clone();
            p[k] = p0[k] + STEP;
            probe.set_params(&p);
            let up = f(&probe);
            p[k] = p0[k] - STEP;
            probe.set_params(&p);
            let down = f(&probe);
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn assert_close(analytic: &[f64], numeric: &[f64]) {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 0.0, "degenerate gradient");
    for (k, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let denom = a.abs().max(n.abs()).max(1e-3 * scale);
        let rel = (a - n).abs() / denom;
        assert!(rel < REL_TOL, "param {k}: analytic {a} numeric {n} rel {rel}");
    }
}

fn toy_batch(info: Information, actors: &[Mlp<f64>], critics: Option<&[Mlp<f64>]>) -> (Vec<AgentBatch<f64>>, usize) {
    let cfg = MarketConfig::new(vec![0.6, 0.8], vec![1.0, 1.0], 3)
        .with_dropouts(true)
        .with_information(info);
    let b = collect(actors, critics, &cfg, 64, 11, 0).unwrap();
    (b.agents, b.n_traj)
}

fn reinforce_check(info: Information, dim: usize) {
    let actors = vec![net(&[dim, 2, 2, 2], 1, 1.0), net(&[dim, 2, 2, 2], 2, 1.0)];
    let (mut agents, n_traj) = toy_batch(info, &actors, None);
    let ab = &mut agents[0];
    ab.set_reinforce_targets(3);
    let (_, grad) = reinforce_loss_grad(&actors[0], ab, n_traj);
    let numeric = numeric_grad(&actors[0], |a| reinforce_loss_grad(a, ab, n_traj).0);
    assert_close(&grad.params(), &numeric);
}

#[test]
fn reinforce_gradient_partial_information() {
    reinforce_check(Information::PartiallyObservable, 1);
}

#[test]
fn reinforce_gradient_full_information() {
    reinforce_check(Information::FullyObservable, 5);
}

#[test]
fn reinforce_gradient_single_layer_toy() {
    // a single linear layer from the stage feature to both raw outputs
    let actors = vec![
        Mlp::from_shapes(&[(1, 2)], &[0.7, -0.4, 0.1, 0.3]).unwrap(),
        Mlp::from_shapes(&[(1, 2)], &[-0.2, 0.5, 0.0, 0.2]).unwrap(),
    ];
    let (mut agents, n_traj) = toy_batch(Information::PartiallyObservable, &actors, None);
    let ab = &mut agents[1];
    ab.set_reinforce_targets(3);
    let (_, grad) = reinforce_loss_grad(&actors[1], ab, n_traj);
    let numeric = numeric_grad(&actors[1], |a| reinforce_loss_grad(a, ab, n_traj).0);
    assert_close(&grad.params(), &numeric);
}

fn perturbed(base: &Mlp<f64>, seed: u64, size: f64) -> Mlp<f64> {
    let noise = net(&[base.input_dim(), 2, 2, 2], seed, 1.0).params();
    let p: Vec<f64> = base.params().iter().zip(noise).map(|(a, b)| a + size * b).collect();
    let mut out = base.clone();
    out.set_params(&p);
    out
}

fn ppo_check(info: Information, dim: usize, normalize: bool) {
    let actors = vec![net(&[dim, 2, 2, 2], 3, 1.0), net(&[dim, 2, 2, 2], 4, 1.0)];
    let critics = vec![net(&[dim, 2, 2, 1], 5, 1.0), net(&[dim, 2, 2, 1], 6, 1.0)];
    let (mut agents, _) = toy_batch(info, &actors, Some(&critics));
    let ab = &mut agents[0];
    ab.set_gae_targets(1.0, 0.95);
    let cfg = PpoConfig { normalize_advantage: normalize, ..PpoConfig::default() };
    // move away from the collecting policy so that some ratios are clipped
    let actor = perturbed(&actors[0], 9, 1.0);
    // finite differences are meaningless across the clip kinks
    let idx: Vec<usize> = (0..ab.len())
        .step_by(2)
        .filter(|&s| {
            let out = actor.forward_row(&ab.rows.row(ab.row[s]).to_vec());
            let ratio = (BetaHead::from_raw(out[0], out[1]).log_prob(ab.x[s]) - ab.log_prob[s]).exp();
            (ratio - (1.0 - cfg.clip)).abs() > 1e-3 && (ratio - (1.0 + cfg.clip)).abs() > 1e-3
        })
        .collect();
    let critic = &critics[0];
    let l = ppo_loss_grad(&actor, critic, ab, &idx, &cfg);
    assert!(l.clip_fraction > 0.0 && l.clip_fraction < 1.0, "clip fraction {}", l.clip_fraction);
    let numeric = numeric_grad(&actor, |a| ppo_loss_grad(a, critic, ab, &idx, &cfg).loss);
    assert_close(&l.actor_grad.params(), &numeric);
    let numeric = numeric_grad(critic, |c| ppo_loss_grad(&actor, c, ab, &idx, &cfg).loss);
    assert_close(&l.critic_grad.params(), &numeric);
}

#[test]
fn ppo_gradient_partial_information() {
    ppo_check(Information::PartiallyObservable, 1, true);
}

#[test]
fn ppo_gradient_full_information() {
    ppo_check(Information::FullyObservable, 5, true);
    ppo_check(Information::FullyObservable, 5, false);
}

#[test]
fn ppo_without_clipping_is_the_policy_gradient() {
    let actors = vec![net(&[1, 2, 2, 2], 7, 1.0), net(&[1, 2, 2, 2], 8, 1.0)];
    let critics = vec![net(&[1, 2, 2, 1], 9, 1.0), net(&[1, 2, 2, 1], 10, 1.0)];
    let (mut agents, n_traj) = toy_batch(Information::PartiallyObservable, &actors, Some(&critics));
    let ab = &mut agents[1];
    ab.set_gae_targets(1.0, 0.95);
    let cfg = PpoConfig { normalize_advantage: false, ..PpoConfig::default() };
    let idx: Vec<usize> = (0..ab.len()).collect();
    // at the collecting policy every ratio is 1, inside the band
    let l = ppo_loss_grad(&actors[1], &critics[1], ab, &idx, &cfg);
    assert_eq!(l.clip_fraction, 0.0);
    let (_, pg) = reinforce_loss_grad(&actors[1], ab, n_traj);
    let factor = n_traj as f64 / idx.len() as f64;
    for (a, b) in l.actor_grad.params().iter().zip(pg.params()) {
        assert!((a - factor * b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {}", factor * b);
    }
}

#[test]
fn zero_advantage_leaves_policy_unchanged() {
    let actors = vec![net(&[1, 4, 2], 1, 1.0), net(&[1, 4, 2], 2, 1.0)];
    let critics = vec![net(&[1, 4, 1], 3, 1.0), net(&[1, 4, 1], 4, 1.0)];
    let (mut agents, n_traj) = toy_batch(Information::PartiallyObservable, &actors, Some(&critics));
    let ab = &mut agents[0];
    ab.advantage = vec![0.0; ab.len()];
    ab.target = vec![0.3; ab.len()];

    let mut actor = actors[0].clone();
    let mut opt = Adam::new(&actor);
    reinforce_update(&mut actor, &mut opt, ab, n_traj, 1e-2);
    assert_eq!(actor, actors[0]);

    let mut actor = actors[0].clone();
    let mut critic = critics[0].clone();
    let mut state = PpoState::new(&actor, &critic);
    let cfg = PpoConfig { minibatch: 16, epochs: 2, ..PpoConfig::default() };
    ppo_update(&mut actor, &mut critic, &mut state, ab, &cfg, 1e-2, 5);
    assert_eq!(actor, actors[0]);
    assert_ne!(critic, critics[0]);
}

#[test]
fn single_playthrough_direction() {
    // one firm, one stage: the loss gradient is -(r - b) * grad log pi(x)
    let cfg = MarketConfig::<f64>::symmetric(1, 0.5, 1.0, 1).with_p_max(1.0);
    let actor = net(&[1, 3, 2], 12, 1.0);
    let mut b = collect(std::slice::from_ref(&actor), None, &cfg, 1, 3, 0).unwrap();
    let ab = &mut b.agents[0];
    let baseline = 0.05;
    let adv = ab.reward[0] - baseline;
    ab.advantage = vec![adv];
    let (_, grad) = reinforce_loss_grad(&actor, ab, 1);
    let x = ab.x[0];
    let log_pi = |a: &Mlp<f64>| {
        let out = a.forward_row(&[1.0]);
        BetaHead::from_raw(out[0], out[1]).log_prob(x)
    };
    let numeric = numeric_grad(&actor, log_pi);
    let expected: Vec<f64> = numeric.iter().map(|g| -adv * g).collect();
    assert_close(&grad.params(), &expected);
}
