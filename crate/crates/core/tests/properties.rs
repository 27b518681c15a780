//! Randomized invariants of the market, the verifier, the analytic solvers
//! and the metrics.

use std::sync::Arc;

use oligopoly::analytic::{foc_residuals, open_loop_utilities, solve_open_loop_bounded};
use oligopoly::metrics::{classify_exits, predation_records};
use oligopoly::policy::{feedback_profile, open_loop_profile, OpenLoopPolicy};
use oligopoly::verify::action_grid;
use oligopoly::{
    apply_dropouts, best_response_value, rollout, surplus, welfare_difference, Information,
    MarketConfig, Policy, RegimeLabel, StrategyProfile, VerifyOptions,
};
use proptest::prelude::*;

#[derive(Clone, Debug)]
struct Game {
    config: MarketConfig<f64>,
    profile: StrategyProfile<f64>,
}

fn market(max_n: usize, max_t: usize) -> impl Strategy<Value = MarketConfig<f64>> {
    (1..=max_n, 1..=max_t).prop_flat_map(|(n, t)| {
        (
            prop::collection::vec(0.3f64..0.75, n),
            prop::collection::vec(0.8f64..1.2, n),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(move |(costs, demands, dropouts, full)| {
                let info = if full { Information::FullyObservable } else { Information::PartiallyObservable };
                MarketConfig::new(costs, demands, t).with_dropouts(dropouts).with_information(info)
            })
    })
}

/// Deterministic opponents: price tables under partial information, affine
/// feedback rules under full information.
fn game(max_n: usize, max_t: usize) -> impl Strategy<Value = Game> {
    market(max_n, max_t).prop_flat_map(|config| {
        let (n, t) = (config.n_agents, config.horizon);
        let table = prop::collection::vec(prop::collection::vec(0.2f64..1.2, n), t);
        let slopes = prop::collection::vec(prop::collection::vec(-0.6f64..0.9, n), t);
        (Just(config), table, slopes).prop_map(|(config, l1, l2)| {
            let profile = match config.information {
                Information::PartiallyObservable => open_loop_profile(&l1),
                Information::FullyObservable => feedback_profile(&l1, &l2),
            };
            Game { config, profile }
        })
    })
}

/// Independent oracle: plays every open-loop price sequence of the agent.
fn enumerate_open_loop(g: &Game, agent: usize, k: usize) -> f64 {
    let grid = action_grid(agent, k, &g.config);
    let t = g.config.horizon;
    let mut best = f64::NEG_INFINITY;
    for code in 0..k.pow(t as u32) {
        let prices: Vec<f64> = (0..t).map(|s| grid[code / k.pow(s as u32) % k]).collect();
        let own = Arc::new(OpenLoopPolicy { prices }) as Arc<dyn Policy<f64>>;
        let traj = rollout(&g.profile.with_policy(agent, own), &g.config, None).unwrap();
        best = best.max(traj.utilities[agent]);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dropouts_conserve_squared_demand(
        rows in prop::collection::vec((0.0f64..2.0, 0.0f64..1.5, prop::bool::weighted(0.85)), 1..7)
    ) {
        let tentative: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let costs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let active: Vec<bool> = rows.iter().map(|r| r.2).collect();
        prop_assume!((0..rows.len()).any(|i| active[i] && tentative[i] >= costs[i] && tentative[i] > 0.0));
        let (next, exits) = apply_dropouts(&tentative, &costs, &active).unwrap();
        let before: f64 = (0..rows.len()).filter(|&i| active[i]).map(|i| tentative[i].powi(2)).sum();
        let after: f64 = next.iter().map(|d| d * d).sum();
        prop_assert!((before - after).abs() <= 1e-12, "{before} vs {after}");
        for i in 0..rows.len() {
            if !active[i] || exits.contains(&i) {
                prop_assert_eq!(next[i], 0.0);
            } else {
                prop_assert!(next[i] >= tentative[i]);
            }
        }
    }

    #[test]
    fn price_deltas_sum_to_zero_and_inactive_firms_stay_out(g in game(4, 4)) {
        let traj = rollout(&g.profile, &g.config, None).unwrap();
        for (o, s) in traj.outcomes.iter().zip(&traj.states) {
            let total: f64 = o.price_deltas.iter().sum();
            prop_assert!(total.abs() <= 1e-12);
            for i in (0..g.config.n_agents).filter(|&i| !s.active[i]) {
                prop_assert_eq!(o.rewards[i], 0.0);
                prop_assert_eq!(o.quantities[i], 0.0);
            }
        }
        if !g.config.dropouts {
            prop_assert!(traj.exited().is_empty());
        }
        let again = rollout(&g.profile, &g.config, None).unwrap();
        prop_assert_eq!(traj.utilities, again.utilities);
    }

    #[test]
    fn tree_search_matches_open_loop_enumeration(g in game(3, 2), k in 2usize..=8) {
        for agent in 0..g.config.n_agents {
            let opts = VerifyOptions { parallel: false, ..VerifyOptions::with_k(k) };
            let br = best_response_value(&g.profile, agent, &opts, &g.config).unwrap();
            prop_assert_eq!(br.value, enumerate_open_loop(&g, agent, k));
        }
    }

    #[test]
    fn refining_the_grid_never_lowers_the_best_response(g in game(3, 3), k in 2usize..=5) {
        for agent in 0..g.config.n_agents {
            let coarse = best_response_value(&g.profile, agent, &VerifyOptions::with_k(k), &g.config).unwrap();
            let fine = best_response_value(&g.profile, agent, &VerifyOptions::with_k(2 * k - 1), &g.config).unwrap();
            prop_assert!(fine.value >= coarse.value - 1e-12);
        }
    }

    #[test]
    fn parallel_split_does_not_change_the_search(g in game(3, 3), k in 2usize..=6) {
        let par = best_response_value(&g.profile, 0, &VerifyOptions::with_k(k), &g.config).unwrap();
        let seq = VerifyOptions { parallel: false, ..VerifyOptions::with_k(k) };
        prop_assert_eq!(par, best_response_value(&g.profile, 0, &seq, &g.config).unwrap());
    }

    #[test]
    fn bounded_open_loop_solution_satisfies_kkt(c in prop::collection::vec(0.3f64..0.95, 3), t in 1usize..=4) {
        let cfg = MarketConfig::new(c, vec![1.0; 3], t);
        let eq = solve_open_loop_bounded(&cfg).unwrap();
        let grad = foc_residuals(&eq.prices, &cfg);
        let p_max = cfg.p_max();
        for s in 0..t {
            for i in 0..3 {
                let (p, g) = (eq.prices[s][i], grad[s * 3 + i]);
                let lo = cfg.unit_costs[i];
                prop_assert!(lo - 1e-12 <= p && p <= p_max + 1e-12);
                if p > lo + 1e-9 && p < p_max - 1e-9 {
                    prop_assert!(g.abs() <= 1e-9, "interior gradient {g}");
                } else if p <= lo + 1e-9 {
                    prop_assert!(g <= 1e-9);
                } else {
                    prop_assert!(g >= -1e-9);
                }
            }
        }
        // no firm gains from a small feasible move of its own plan
        let base = open_loop_utilities(&eq.prices, &cfg);
        for s in 0..t {
            for i in 0..3 {
                for h in [-1e-4, 1e-4] {
                    let mut moved = eq.prices.clone();
                    moved[s][i] = (moved[s][i] + h).clamp(cfg.unit_costs[i], p_max);
                    prop_assert!(open_loop_utilities(&moved, &cfg)[i] <= base[i] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn welfare_is_consistent_and_predation_is_bounded(a in game(3, 4), table in prop::collection::vec(prop::collection::vec(0.2f64..1.2, 3), 4)) {
        let traj = rollout(&a.profile, &a.config, None).unwrap();
        let base_table: Vec<Vec<f64>> = table.iter().take(a.config.horizon).map(|r| r[..a.config.n_agents].to_vec()).collect();
        let base_cfg = a.config.clone().with_dropouts(false);
        let baseline = rollout(&open_loop_profile(&base_table), &base_cfg, None).unwrap();
        let w = welfare_difference(&traj, &baseline).unwrap();
        let stagewise: f64 = traj.outcomes.iter().map(|o| { let (p, c) = surplus(o); p + c }).sum();
        prop_assert_eq!(w.total_welfare, stagewise);
        prop_assert!(w.consumer_surplus.iter().all(|&c| c >= 0.0));
        prop_assert!((w.delta_w - (w.delta_ps + w.delta_cs)).abs() <= 1e-12);

        for rec in predation_records(&traj, &baseline).unwrap() {
            prop_assert!(rec.sacrifice >= 0.0 && rec.recoupment >= 0.0);
            match rec.tau {
                None => prop_assert_eq!(rec.pi, 0.0),
                Some(tau) => {
                    let diff = |k: usize| (traj.outcomes[k].rewards[rec.agent] - baseline.outcomes[k].rewards[rec.agent]).abs();
                    let before: f64 = (0..tau - 1).map(diff).sum();
                    let after: f64 = (tau - 1..a.config.horizon).map(diff).sum();
                    prop_assert!(rec.sacrifice <= before + 1e-15 && rec.recoupment <= after + 1e-15);
                }
            }
            if !a.config.dropouts {
                prop_assert_eq!(rec.pi, 0.0);
            }
        }
    }

    #[test]
    fn every_exit_pattern_gets_one_label(mask in 0u8..8) {
        let exited: Vec<usize> = (0..3).filter(|i| mask >> i & 1 == 1).collect();
        let label = classify_exits(3, &exited);
        let expected = match (mask & 1 == 1, (mask >> 1).count_ones()) {
            (false, 2) => RegimeLabel::Dominance,
            (false, 1) => RegimeLabel::Predation,
            (false, 0) => RegimeLabel::Competition,
            (true, 0) => RegimeLabel::Marginalization,
            _ => RegimeLabel::Other,
        };
        prop_assert_eq!(label, expected);
    }
}
