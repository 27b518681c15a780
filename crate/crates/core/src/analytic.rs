//! Analytical equilibria of the game without dropouts.
//!
//! Two forms are available:
//!
//! * the open-loop equilibrium of the partially observable game, where every
//!   firm commits to a price path. It solves the joint first-order system
//!   `(D_t - 2 p_t + c) - (N-1)/N * sum_{tau > t} (p_tau - c) = 0` with demands
//!   propagated by the inertia rule, and is confirmed by a finite-difference
//!   check of each firm's Hessian in its own price path;
//! * the linear feedback equilibrium of the fully observable game,
//!   `p_i = l1[t][i] + l2[t][i] * D_i`, obtained by backward induction over
//!   value functions quadratic in own demand.
//!
//! Both solvers ignore the `dropouts` and `information` flags of the config:
//! they always describe the game without exits.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::market::{Information, MarketConfig, StrategyProfile};
use crate::policy::{feedback_profile, open_loop_profile};
use crate::scalar::Scalar;

/// `T x N` table indexed `[t][agent]`.
pub type Table<S> = Vec<Vec<S>>;

#[derive(Clone, Debug, PartialEq)]
pub struct OpenLoopEquilibrium<S> {
    pub prices: Table<S>,
    pub demands: Table<S>,
    pub residual_norm: S,
    pub iterations: usize,
}

impl<S: Scalar> OpenLoopEquilibrium<S> {
    pub fn profile(&self) -> StrategyProfile<S> {
        open_loop_profile(&self.prices)
    }

    pub fn price_path(&self, agent: usize) -> Vec<S> {
        self.prices.iter().map(|row| row[agent]).collect()
    }

    /// Price table with columns `t, agent, price, demand`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "agent", "price", "demand"])?;
        for (t, (p, d)) in self.prices.iter().zip(&self.demands).enumerate() {
            for i in 0..p.len() {
                w.write_record(&[
                    (t + 1).to_string(),
                    i.to_string(),
                    p[i].to_f64_lossy().to_string(),
                    d[i].to_f64_lossy().to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearFeedbackEquilibrium<S> {
    pub lambda1: Table<S>,
    pub lambda2: Table<S>,
}

impl<S: Scalar> LinearFeedbackEquilibrium<S> {
    pub fn profile(&self) -> StrategyProfile<S> {
        feedback_profile(&self.lambda1, &self.lambda2)
    }

    /// Coefficient table with columns `t, agent, lambda1, lambda2`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "agent", "lambda1", "lambda2"])?;
        for (t, (l1, l2)) in self.lambda1.iter().zip(&self.lambda2).enumerate() {
            for i in 0..l1.len() {
                w.write_record(&[
                    (t + 1).to_string(),
                    i.to_string(),
                    l1[i].to_f64_lossy().to_string(),
                    l2[i].to_f64_lossy().to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Stopping rule of the Newton solver.
#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl NewtonOptions {
    pub fn for_scalar<S: Scalar>() -> Self {
        Self {
            tolerance: (S::epsilon().to_f64_lossy() * 1e3).max(1e-10),
            max_iterations: 50,
        }
    }
}

fn n_over<S: Scalar>(n: usize) -> (S, S) {
    let nf = S::from_usize(n).unwrap();
    (S::one() / nf, (nf - S::one()) / nf)
}

/// Demand paths implied by open-loop prices when nobody exits.
pub fn open_loop_demands<S: Scalar>(prices: &[Vec<S>], config: &MarketConfig<S>) -> Table<S> {
    let (inv_n, _) = n_over::<S>(config.n_agents);
    let mut demands = Vec::with_capacity(prices.len());
    let mut d = config.initial_demands.clone();
    for row in prices {
        demands.push(d.clone());
        let mean = row.iter().copied().sum::<S>() * inv_n;
        for (di, &p) in d.iter_mut().zip(row) {
            *di += mean - p;
        }
    }
    demands
}

/// Utilities of open-loop price paths, no bounds or exits applied.
pub fn open_loop_utilities<S: Scalar>(prices: &[Vec<S>], config: &MarketConfig<S>) -> Vec<S> {
    let demands = open_loop_demands(prices, config);
    let mut u = vec![S::zero(); config.n_agents];
    for (prow, drow) in prices.iter().zip(&demands) {
        for i in 0..config.n_agents {
            u[i] += (prow[i] - config.unit_costs[i]) * (drow[i] - prow[i]);
        }
    }
    u
}

/// First-order conditions of every firm at every stage, indexed `t * N + i`.
pub fn foc_residuals<S: Scalar>(prices: &[Vec<S>], config: &MarketConfig<S>) -> Vec<S> {
    let n = config.n_agents;
    let (_, coupling) = n_over::<S>(n);
    let demands = open_loop_demands(prices, config);
    let horizon = prices.len();
    let mut out = vec![S::zero(); horizon * n];
    for i in 0..n {
        let c = config.unit_costs[i];
        // sum over tau > t of (p_tau - c), built from the back
        let mut tail = S::zero();
        for t in (0..horizon).rev() {
            let p = prices[t][i];
            out[t * n + i] = demands[t][i] - S::lit(2.0) * p + c - coupling * tail;
            tail += p - c;
        }
    }
    out
}

/// Jacobian of [`foc_residuals`] in the prices; constant since the system is
/// linear. Row-major, `TN x TN`.
fn foc_jacobian<S: Scalar>(config: &MarketConfig<S>) -> Vec<S> {
    let n = config.n_agents;
    let horizon = config.horizon;
    let dim = n * horizon;
    let (inv_n, coupling) = n_over::<S>(n);
    let mut jac = vec![S::zero(); dim * dim];
    for t in 0..horizon {
        for i in 0..n {
            let row = (t * n + i) * dim;
            for s in 0..horizon {
                for j in 0..n {
                    let same = i == j;
                    let v = if s < t {
                        if same { inv_n - S::one() } else { inv_n }
                    } else if s == t {
                        if same { -S::lit(2.0) } else { S::zero() }
                    } else if same {
                        -coupling
                    } else {
                        S::zero()
                    };
                    jac[row + s * n + j] = v;
                }
            }
        }
    }
    jac
}

fn inf_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |m, x| m.max(x.abs()))
}

/// Single-stage monopoly prices `(D_1 + c) / 2` in every stage.
pub fn monopoly_guess<S: Scalar>(config: &MarketConfig<S>) -> Table<S> {
    let row: Vec<S> = config
        .initial_demands
        .iter()
        .zip(&config.unit_costs)
        .map(|(&d, &c)| (d + c) / S::lit(2.0))
        .collect();
    vec![row; config.horizon]
}

/// Open-loop equilibrium by Newton iteration from the monopoly guess.
pub fn solve_open_loop_ne<S: Scalar>(config: &MarketConfig<S>) -> Result<OpenLoopEquilibrium<S>> {
    solve_open_loop_from(config, monopoly_guess(config), NewtonOptions::for_scalar::<S>())
}

pub fn solve_open_loop_from<S: Scalar>(
    config: &MarketConfig<S>,
    guess: Table<S>,
    options: NewtonOptions,
) -> Result<OpenLoopEquilibrium<S>> {
    config.validate()?;
    let n = config.n_agents;
    if guess.len() != config.horizon || guess.iter().any(|r| r.len() != n) {
        return Err(Error::LengthMismatch {
            expected: config.horizon * n,
            found: guess.iter().map(Vec::len).sum(),
        });
    }
    let jac = foc_jacobian(config);
    let mut prices = guess;
    let mut residual = foc_residuals(&prices, config);
    let mut norm = inf_norm(&residual);
    let mut iterations = 0;
    while norm.to_f64_lossy() > options.tolerance {
        if iterations == options.max_iterations || !norm.is_finite() {
            return Err(Error::NoConvergence { iterations, residual: norm.to_f64_lossy() });
        }
        let delta = linalg::solve(&jac, &residual).ok_or(Error::NoConvergence {
            iterations,
            residual: norm.to_f64_lossy(),
        })?;
        for (k, dk) in delta.into_iter().enumerate() {
            prices[k / n][k % n] -= dk;
        }
        residual = foc_residuals(&prices, config);
        norm = inf_norm(&residual);
        iterations += 1;
    }
    let demands = open_loop_demands(&prices, config);
    check_constraints(&prices, &demands, config)?;
    Ok(OpenLoopEquilibrium { prices, demands, residual_norm: norm, iterations })
}

fn check_constraints<S: Scalar>(
    prices: &[Vec<S>],
    demands: &[Vec<S>],
    config: &MarketConfig<S>,
) -> Result<()> {
    let p_max = config.p_max();
    for (t, (prow, drow)) in prices.iter().zip(demands).enumerate() {
        for i in 0..config.n_agents {
            if drow[i] < S::zero() {
                return Err(Error::ConstraintViolated(format!(
                    "demand of agent {i} at stage {} is {}",
                    t + 1,
                    drow[i]
                )));
            }
            let p = prow[i];
            if !(p >= config.unit_costs[i] && p <= p_max) {
                return Err(Error::ConstraintViolated(format!(
                    "price of agent {i} at stage {} is {p}, outside [{}, {p_max}]",
                    t + 1,
                    config.unit_costs[i]
                )));
            }
        }
    }
    Ok(())
}

/// Newton runs from the monopoly guess plus `starts` random feasible points;
/// returns the distinct solutions (pairwise sup-distance above `1e-6`).
pub fn solve_open_loop_multistart<S: Scalar>(
    config: &MarketConfig<S>,
    starts: usize,
    seed: u64,
) -> Result<Vec<OpenLoopEquilibrium<S>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options = NewtonOptions::for_scalar::<S>();
    let mut found: Vec<OpenLoopEquilibrium<S>> = vec![solve_open_loop_ne(config)?];
    let p_max = config.p_max().to_f64_lossy();
    for _ in 0..starts {
        let guess: Table<S> = (0..config.horizon)
            .map(|_| {
                config
                    .unit_costs
                    .iter()
                    .map(|&c| S::lit(rng.random_range(c.to_f64_lossy()..p_max)))
                    .collect()
            })
            .collect();
        let Ok(eq) = solve_open_loop_from(config, guess, options) else {
            continue;
        };
        let distinct = found.iter().all(|f| {
            f.prices
                .iter()
                .flatten()
                .zip(eq.prices.iter().flatten())
                .any(|(a, b)| (*a - *b).abs().to_f64_lossy() > 1e-6)
        });
        if distinct {
            found.push(eq);
        }
    }
    Ok(found)
}

/// Eigenvalues of one firm's Hessian of utility in its own price path.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderReport<S> {
    pub agent: usize,
    pub hessian: Vec<S>,
    pub eigenvalues: Vec<S>,
    pub passes: bool,
}

/// Central finite-difference step of the Hessian check.
pub const HESSIAN_STEP: f64 = 1e-5;

pub fn check_second_order<S: Scalar>(
    config: &MarketConfig<S>,
    prices: &[Vec<S>],
) -> Vec<SecondOrderReport<S>> {
    let horizon = prices.len();
    let h = S::lit(HESSIAN_STEP);
    (0..config.n_agents)
        .map(|agent| {
            let utility = |shifts: &[(usize, S)]| {
                let mut p = prices.to_vec();
                for &(t, d) in shifts {
                    p[t][agent] += d;
                }
                open_loop_utilities(&p, config)[agent]
            };
            let mut hessian = vec![S::zero(); horizon * horizon];
            for a in 0..horizon {
                for b in a..horizon {
                    let v = (utility(&[(a, h), (b, h)]) - utility(&[(a, h), (b, -h)])
                        - utility(&[(a, -h), (b, h)])
                        + utility(&[(a, -h), (b, -h)]))
                        / (S::lit(4.0) * h * h);
                    hessian[a * horizon + b] = v;
                    hessian[b * horizon + a] = v;
                }
            }
            let eigenvalues = linalg::symmetric_eigenvalues(&hessian, horizon);
            let passes = eigenvalues.iter().all(|&e| e < S::zero());
            SecondOrderReport { agent, hessian, eigenvalues, passes }
        })
        .collect()
}

/// Linear feedback equilibrium of the fully observable game by backward
/// induction.
///
/// Total demand `S = sum_j D_j` is invariant without exits, so with a slope
/// `l2[t]` shared by all firms the rivals' price sum is
/// `sum_{j != i} l1[t][j] + l2[t] * (S - D_i)` and the mean price on the
/// equilibrium path does not depend on how demand is split. Each firm's
/// continuation value is then quadratic in its own demand,
/// `V_i(x) = a_i + b_i x + e x^2`, and the stage conditions reduce to
/// `l2 = (1 - 2 m e) / (2 - 2 m e)` with `m = (N-1)/N` and an `N x N` linear
/// system for the intercepts.
pub fn solve_feedback_ne<S: Scalar>(config: &MarketConfig<S>) -> Result<LinearFeedbackEquilibrium<S>> {
    config.validate()?;
    let n = config.n_agents;
    let horizon = config.horizon;
    let two = S::lit(2.0);
    let (inv_n, m) = n_over::<S>(n);
    let total: S = config.initial_demands.iter().copied().sum();

    let mut lambda1 = vec![vec![S::zero(); n]; horizon];
    let mut lambda2 = vec![vec![S::zero(); n]; horizon];
    // continuation value coefficients; the quadratic one is shared
    let mut a = vec![S::zero(); n];
    let mut b = vec![S::zero(); n];
    let mut e = S::zero();

    for t in (0..horizon).rev() {
        let denom = two - two * m * e;
        if denom.abs() <= S::epsilon() {
            return Err(Error::SingularStageSystem { stage: t + 1 });
        }
        let l2 = (S::one() - two * m * e) / denom;
        let off = -two * m * e * inv_n;
        let diag = -two + two * m * m * e;
        let mut mat = vec![off; n * n];
        for i in 0..n {
            mat[i * n + i] = diag;
        }
        let rhs: Vec<S> = (0..n)
            .map(|i| -config.unit_costs[i] + m * b[i] - off * l2 * total)
            .collect();
        let l1 = linalg::solve(&mat, &rhs).ok_or(Error::SingularStageSystem { stage: t + 1 })?;

        let mean_price = (l1.iter().copied().sum::<S>() + l2 * total) * inv_n;
        let u = S::one() - l2;
        for i in 0..n {
            let w = mean_price - l1[i];
            let k = l1[i] - config.unit_costs[i];
            let b_next = -l2 * l1[i] + k * u + b[i] * u + two * e * u * w;
            a[i] = -k * l1[i] + a[i] + b[i] * w + e * w * w;
            b[i] = b_next;
        }
        e = l2 * u + e * u * u;
        lambda1[t] = l1;
        lambda2[t] = vec![l2; n];
    }
    Ok(LinearFeedbackEquilibrium { lambda1, lambda2 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Open-loop equilibrium of the game without exits in which every price is
/// restricted to its action interval `[c_i, p_max]`.
///
/// Each firm's utility is a concave quadratic in its own path, so the
/// equilibrium is the solution of the complementarity problem formed by the
/// first-order conditions and the bounds: a price strictly inside its
/// interval has zero marginal utility, a price at the cost has non-positive
/// marginal utility and a price at the cap non-negative. It is found by a
/// primal-dual active-set iteration and coincides with [`solve_open_loop_ne`]
/// whenever the latter's solution is interior. `residual_norm` is the
/// largest violation of these conditions.
pub fn solve_open_loop_bounded<S: Scalar>(config: &MarketConfig<S>) -> Result<OpenLoopEquilibrium<S>> {
    config.validate()?;
    let n = config.n_agents;
    let dim = n * config.horizon;
    let p_max = config.p_max();
    let jac = foc_jacobian(config);
    let offset = foc_residuals(&vec![vec![S::zero(); n]; config.horizon], config);
    let tol = S::lit(NewtonOptions::for_scalar::<S>().tolerance);
    let mut bounds = vec![Bound::Free; dim];
    let max_iterations = 4 * dim + 50;
    for iterations in 1..=max_iterations {
        let mut a = vec![S::zero(); dim * dim];
        let mut rhs = vec![S::zero(); dim];
        for k in 0..dim {
            match bounds[k] {
                Bound::Free => {
                    a[k * dim..(k + 1) * dim].copy_from_slice(&jac[k * dim..(k + 1) * dim]);
                    rhs[k] = -offset[k];
                }
                Bound::Lower => {
                    a[k * dim + k] = S::one();
                    rhs[k] = config.unit_costs[k % n];
                }
                Bound::Upper => {
                    a[k * dim + k] = S::one();
                    rhs[k] = p_max;
                }
            }
        }
        let flat = linalg::solve(&a, &rhs)
            .ok_or(Error::NoConvergence { iterations, residual: f64::NAN })?;
        let prices: Table<S> = flat.chunks(n).map(<[S]>::to_vec).collect();
        let grad = foc_residuals(&prices, config);
        let mut changed = false;
        let mut violation = S::zero();
        for k in 0..dim {
            let (p, g, c) = (flat[k], grad[k], config.unit_costs[k % n]);
            let next = match bounds[k] {
                Bound::Free if p < c - tol => Bound::Lower,
                Bound::Free if p > p_max + tol => Bound::Upper,
                Bound::Lower if g > tol => Bound::Free,
                Bound::Upper if g < -tol => Bound::Free,
                b => b,
            };
            violation = violation.max(match bounds[k] {
                Bound::Free => g.abs().max(c - p).max(p - p_max),
                Bound::Lower => g.max(S::zero()),
                Bound::Upper => (-g).max(S::zero()),
            });
            if next != bounds[k] {
                bounds[k] = next;
                changed = true;
            }
        }
        if !changed {
            let demands = open_loop_demands(&prices, config);
            return Ok(OpenLoopEquilibrium { prices, demands, residual_norm: violation, iterations });
        }
    }
    Err(Error::NoConvergence { iterations: max_iterations, residual: f64::NAN })
}

/// The no-dropout analytic equilibrium matching the config's information
/// setting: the bounded open-loop equilibrium for partial observability, the
/// linear feedback equilibrium (prices clamped to the action interval) for
/// full observability.
pub fn analytic_baseline<S: Scalar>(config: &MarketConfig<S>) -> Result<StrategyProfile<S>> {
    match config.information {
        Information::PartiallyObservable => Ok(solve_open_loop_bounded(config)?.profile()),
        Information::FullyObservable => Ok(solve_feedback_ne(config)?.profile()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn symmetric() -> MarketConfig<f64> {
        MarketConfig::symmetric(3, 0.8, 1.0, 4)
    }

    /// Backward substitution of the symmetric first-order chain. Demands
    /// stay at D because all firms charge the same price.
    fn symmetric_chain(n: usize, c: f64, d: f64, horizon: usize) -> Vec<f64> {
        let m = (n as f64 - 1.0) / n as f64;
        let mut path = vec![0.0; horizon];
        let mut tail = 0.0;
        for t in (0..horizon).rev() {
            path[t] = (d + c - m * tail) / 2.0;
            tail += path[t] - c;
        }
        path
    }

    #[test]
    fn symmetric_path() {
        let eq = solve_open_loop_ne(&symmetric()).unwrap();
        let oracle = symmetric_chain(3, 0.8, 1.0, 4);
        let stated = [0.829630, 0.844444, 0.866667, 0.900000];
        for i in 0..3 {
            for (t, p) in eq.price_path(i).into_iter().enumerate() {
                assert_abs_diff_eq!(p, oracle[t], epsilon = 1e-12);
                assert_abs_diff_eq!(p, stated[t], epsilon = 1e-6);
            }
        }
        assert!(eq.residual_norm <= 1e-10);
        assert!(foc_residuals(&eq.prices, &symmetric()).iter().all(|r| r.abs() <= 1e-10));
    }

    #[test]
    fn single_stage_and_monopoly() {
        let cfg = MarketConfig::<f64>::new(vec![0.3, 0.6], vec![1.0, 1.2], 1);
        let eq = solve_open_loop_ne(&cfg).unwrap();
        assert_abs_diff_eq!(eq.prices[0][0], 0.65, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.prices[0][1], 0.9, epsilon = 1e-12);
        assert!(foc_residuals(&[vec![0.65, 0.9]], &cfg).iter().map(|r| r.abs()).sum::<f64>() < 1e-15);

        let mono = MarketConfig::<f64>::symmetric(1, 0.5, 1.0, 5);
        let eq = solve_open_loop_ne(&mono).unwrap();
        assert!(eq.price_path(0).iter().all(|p| (p - 0.75).abs() < 1e-12));
    }

    #[test]
    fn residual_at_cost_prices() {
        let cfg = symmetric();
        let prices = vec![vec![0.8; 3]; 4];
        let r = foc_residuals(&prices, &cfg);
        for i in 0..3 {
            assert_abs_diff_eq!(r[3 * 3 + i], 1.0 - 0.8, epsilon = 1e-15);
        }
    }

    #[test]
    fn bounded_matches_interior_solution() {
        let a = solve_open_loop_ne(&symmetric()).unwrap();
        let b = solve_open_loop_bounded(&symmetric()).unwrap();
        for t in 0..4 {
            for i in 0..3 {
                assert_abs_diff_eq!(a.prices[t][i], b.prices[t][i], epsilon = 1e-12);
            }
        }
    }

    /// Projected gradient ascent of one firm's utility over its own bounded
    /// path, with central-difference gradients.
    fn bounded_best_response_gain(cfg: &MarketConfig<f64>, prices: &Table<f64>, agent: usize) -> f64 {
        let base = open_loop_utilities(prices, cfg)[agent];
        let (lo, hi) = cfg.price_bounds(agent);
        let mut p = prices.clone();
        let h = 1e-6;
        for _ in 0..4000 {
            let mut g = vec![0.0; cfg.horizon];
            for t in 0..cfg.horizon {
                let mut up = p.clone();
                up[t][agent] += h;
                let mut down = p.clone();
                down[t][agent] -= h;
                g[t] = (open_loop_utilities(&up, cfg)[agent] - open_loop_utilities(&down, cfg)[agent]) / (2.0 * h);
            }
            for t in 0..cfg.horizon {
                p[t][agent] = (p[t][agent] + 0.05 * g[t]).clamp(lo, hi);
            }
        }
        open_loop_utilities(&p, cfg)[agent] - base
    }

    #[test]
    fn bounded_equilibrium_at_binding_costs() {
        for c0 in [0.42, 0.51, 0.95] {
            let cfg = MarketConfig::new(vec![c0, 0.8, 0.8], vec![1.0; 3], 4);
            assert!(matches!(solve_open_loop_ne(&cfg), Err(Error::ConstraintViolated(_))));
            let eq = solve_open_loop_bounded(&cfg).unwrap();
            assert!(eq.residual_norm < 1e-10);
            for i in 0..3 {
                let (lo, hi) = cfg.price_bounds(i);
                assert!(eq.price_path(i).iter().all(|&p| p >= lo && p <= hi));
                let gain = bounded_best_response_gain(&cfg, &eq.prices, i);
                assert!(gain < 1e-10, "c0 {c0} agent {i} gains {gain}");
            }
        }
    }

    #[test]
    fn hessian_spectrum() {
        let cfg = symmetric();
        let eq = solve_open_loop_ne(&cfg).unwrap();
        for report in check_second_order(&cfg, &eq.prices) {
            assert!(report.passes);
            let ev = &report.eigenvalues;
            assert_abs_diff_eq!(ev[0], -4.0, epsilon = 1e-4);
            for v in &ev[1..] {
                assert_abs_diff_eq!(*v, -4.0 / 3.0, epsilon = 1e-4);
            }
        }
        let one = MarketConfig::symmetric(3, 0.8, 1.0, 1);
        let eq = solve_open_loop_ne(&one).unwrap();
        assert_abs_diff_eq!(check_second_order(&one, &eq.prices)[0].eigenvalues[0], -2.0, epsilon = 1e-4);
        let mono = MarketConfig::symmetric(1, 0.5, 1.0, 3);
        let eq = solve_open_loop_ne(&mono).unwrap();
        for v in &check_second_order(&mono, &eq.prices)[0].eigenvalues {
            assert_abs_diff_eq!(*v, -2.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn monotone_symmetric_path() {
        for (n, c) in [(2, 0.5), (3, 0.8), (5, 0.2)] {
            let cfg = MarketConfig::symmetric(n, c, 1.0, 6);
            let path = solve_open_loop_ne(&cfg).unwrap().price_path(0);
            assert!(path.windows(2).all(|w| w[0] < w[1]), "{path:?}");
        }
    }

    #[test]
    fn constraint_violation_surfaces() {
        // a tight cap below the interior solution
        let cfg = symmetric().with_p_max(0.85);
        assert!(matches!(solve_open_loop_ne(&cfg), Err(Error::ConstraintViolated(_))));
    }

    #[test]
    fn multistart_finds_one_solution() {
        let found = solve_open_loop_multistart(&symmetric(), 16, 7).unwrap();
        assert_eq!(found.len(), 1);
    }

    #[test]
    fn asymmetric_identical_agents_share_paths() {
        let cfg = MarketConfig::new(vec![0.75, 0.8, 0.8], vec![1.0; 3], 4);
        let eq = solve_open_loop_ne(&cfg).unwrap();
        for t in 0..4 {
            assert_abs_diff_eq!(eq.prices[t][1], eq.prices[t][2], epsilon = 1e-9);
        }
        let swapped = MarketConfig::new(vec![0.8, 0.75, 0.8], vec![1.0; 3], 4);
        let eq2 = solve_open_loop_ne(&swapped).unwrap();
        for t in 0..4 {
            assert_abs_diff_eq!(eq.prices[t][0], eq2.prices[t][1], epsilon = 1e-9);
        }
    }

    #[test]
    fn feedback_terminal_coefficients() {
        let cfg = MarketConfig::new(vec![0.51, 0.8, 0.8], vec![1.0; 3], 4);
        let fb = solve_feedback_ne(&cfg).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(fb.lambda2[3][i], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(fb.lambda1[3][i], cfg.unit_costs[i] / 2.0, epsilon = 1e-15);
        }
        // one stage from the end: e = 1/4, m = 2/3 -> l2 = (1 - 1/3) / (2 - 1/3)
        for i in 0..3 {
            assert_abs_diff_eq!(fb.lambda2[2][i], 0.4, epsilon = 1e-12);
        }
    }

    #[test]
    fn feedback_monopoly() {
        let cfg = MarketConfig::symmetric(1, 0.4, 1.0, 4);
        let fb = solve_feedback_ne(&cfg).unwrap();
        for t in 0..4 {
            assert_abs_diff_eq!(fb.lambda2[t][0], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(fb.lambda1[t][0], 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn feedback_path_is_self_best_response() {
        // Continuous best response of agent 0 against the rivals' feedback
        // rules, found by coordinate search on its own price path.
        let cfg = MarketConfig::symmetric(3, 0.8, 1.0, 4).with_information(Information::FullyObservable);
        let fb = solve_feedback_ne(&cfg).unwrap();
        let play = |own: &[f64]| -> f64 {
            let mut d = cfg.initial_demands.clone();
            let mut u = 0.0;
            for t in 0..4 {
                let mut p: Vec<f64> = (0..3).map(|j| fb.lambda1[t][j] + fb.lambda2[t][j] * d[j]).collect();
                p[0] = own[t];
                u += (p[0] - 0.8) * (d[0] - p[0]);
                let mean = p.iter().sum::<f64>() / 3.0;
                for j in 0..3 {
                    d[j] += mean - p[j];
                }
            }
            u
        };
        let mut d = cfg.initial_demands.clone();
        let mut eq_path = Vec::new();
        for t in 0..4 {
            let p: Vec<f64> = (0..3).map(|j| fb.lambda1[t][j] + fb.lambda2[t][j] * d[j]).collect();
            eq_path.push(p[0]);
            let mean = p.iter().sum::<f64>() / 3.0;
            for j in 0..3 {
                d[j] += mean - p[j];
            }
        }
        let base = play(&eq_path);
        let mut best = base;
        let mut x = eq_path.clone();
        let mut step = 0.02;
        while step > 1e-7 {
            let mut improved = false;
            for t in 0..4 {
                for s in [step, -step] {
                    x[t] += s;
                    let v = play(&x);
                    if v > best {
                        best = v;
                        improved = true;
                    } else {
                        x[t] -= s;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        assert!(best - base < 1e-10, "gain {}", best - base);
        assert_abs_diff_eq!(eq_path[3], 0.9, epsilon = 1e-12);
    }

    #[test]
    fn coefficient_csv() {
        let fb = solve_feedback_ne(&MarketConfig::symmetric(2, 0.5, 1.0, 2)).unwrap();
        let mut buf = Vec::new();
        fb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.starts_with("t,agent,lambda1,lambda2\n1,0,"));
    }
}
