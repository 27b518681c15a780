//! Beta action head: two raw network outputs mapped to `alpha, beta > 1`.

use rand::RngCore;
use rand_distr::{Beta, Distribution};
use statrs::function::gamma::{digamma, ln_gamma};

/// Samples are kept this far away from the support boundary so that
/// `ln x` and `ln(1 - x)` stay finite.
pub const SUPPORT_MARGIN: f64 = 1e-9;

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Softplus bounded away from zero so that `1 + softplus` stays strictly
/// above one in floating point.
fn lifted_softplus(z: f64) -> f64 {
    softplus(z).max(MIN_EXCESS)
}

const MIN_EXCESS: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Beta parameters produced from raw head outputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaHead {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaHead {
    pub fn from_raw(z_alpha: f64, z_beta: f64) -> Self {
        Self { alpha: 1.0 + lifted_softplus(z_alpha), beta: 1.0 + lifted_softplus(z_beta) }
    }

    /// Mode of the density; well defined because both parameters exceed one.
    pub fn mode(&self) -> f64 {
        let denom = self.alpha + self.beta - 2.0;
        if denom <= 0.0 {
            0.5
        } else {
            (self.alpha - 1.0) / denom
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let dist = Beta::new(self.alpha, self.beta).expect("alpha, beta > 1");
        dist.sample(rng).clamp(SUPPORT_MARGIN, 1.0 - SUPPORT_MARGIN)
    }

    pub fn log_prob(&self, x: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
    }

    /// `(d log p / d alpha, d log p / d beta)`.
    pub fn log_prob_grad(&self, x: f64) -> (f64, f64) {
        let (a, b) = (self.alpha, self.beta);
        let common = digamma(a + b);
        (x.ln() - digamma(a) + common, (-x).ln_1p() - digamma(b) + common)
    }

    /// Gradient of `log p(x)` with respect to the raw outputs.
    pub fn log_prob_grad_raw(&self, x: f64, z_alpha: f64, z_beta: f64) -> (f64, f64) {
        let (ga, gb) = self.log_prob_grad(x);
        (ga * sigmoid(z_alpha), gb * sigmoid(z_beta))
    }
}

/// A head with its parameter-only terms precomputed, for evaluating many
/// samples drawn from the same distribution.
#[derive(Clone, Copy, Debug)]
pub struct PreparedHead {
    pub head: BetaHead,
    ln_norm: f64,
    grad_alpha: f64,
    grad_beta: f64,
    sig_alpha: f64,
    sig_beta: f64,
}

impl PreparedHead {
    pub fn from_raw(z_alpha: f64, z_beta: f64) -> Self {
        let head = BetaHead::from_raw(z_alpha, z_beta);
        let (a, b) = (head.alpha, head.beta);
        let common = digamma(a + b);
        Self {
            head,
            ln_norm: ln_beta(a, b),
            grad_alpha: common - digamma(a),
            grad_beta: common - digamma(b),
            sig_alpha: sigmoid(z_alpha),
            sig_beta: sigmoid(z_beta),
        }
    }

    pub fn log_prob(&self, x: f64) -> f64 {
        (self.head.alpha - 1.0) * x.ln() + (self.head.beta - 1.0) * (-x).ln_1p() - self.ln_norm
    }

    pub fn log_prob_grad_raw(&self, x: f64) -> (f64, f64) {
        (
            (x.ln() + self.grad_alpha) * self.sig_alpha,
            ((-x).ln_1p() + self.grad_beta) * self.sig_beta,
        )
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Affine map of the unit interval onto `[cost, p_max]`.
pub fn to_price(x: f64, cost: f64, p_max: f64) -> f64 {
    (cost + x * (p_max - cost)).clamp(cost, p_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn head_parameters_exceed_one() {
        for z in [-100.0, -5.0, 0.0, 5.0, 100.0] {
            let h = BetaHead::from_raw(z, -z);
            assert!(h.alpha > 1.0 && h.beta > 1.0);
        }
    }

    #[test]
    fn symmetric_mode_is_midpoint() {
        for a in [1.5, 2.0, 7.0] {
            let h = BetaHead { alpha: a, beta: a };
            assert_relative_eq!(to_price(h.mode(), 0.8, 1.0), 0.9, epsilon = 1e-15);
        }
    }

    #[test]
    fn mode_example() {
        let h = BetaHead { alpha: 3.0, beta: 2.0 };
        assert_relative_eq!(to_price(h.mode(), 0.8, 1.0), 0.8 + 0.2 * 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn support_endpoints() {
        assert_eq!(to_price(0.0, 0.8, 1.0), 0.8);
        assert_eq!(to_price(1.0, 0.8, 1.0), 1.0);
    }

    #[test]
    fn log_prob_integrates_to_one() {
        let h = BetaHead { alpha: 2.5, beta: 4.0 };
        let n = 200_000;
        let total: f64 = (0..n)
            .map(|k| h.log_prob((k as f64 + 0.5) / n as f64).exp() / n as f64)
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn raw_gradient_matches_finite_differences() {
        let x = 0.37;
        let (za, zb) = (0.4, -1.3);
        let (ga, gb) = BetaHead::from_raw(za, zb).log_prob_grad_raw(x, za, zb);
        let h = 1e-6;
        let f = |a: f64, b: f64| BetaHead::from_raw(a, b).log_prob(x);
        assert_relative_eq!(ga, (f(za + h, zb) - f(za - h, zb)) / (2.0 * h), max_relative = 1e-7);
        assert_relative_eq!(gb, (f(za, zb + h) - f(za, zb - h)) / (2.0 * h), max_relative = 1e-7);
    }

    #[test]
    fn prepared_head_agrees() {
        let (za, zb) = (1.7, 0.2);
        let p = PreparedHead::from_raw(za, zb);
        let h = BetaHead::from_raw(za, zb);
        for x in [0.01, 0.4, 0.93] {
            assert_relative_eq!(p.log_prob(x), h.log_prob(x), epsilon = 1e-12);
            let (a, b) = p.log_prob_grad_raw(x);
            let (c, d) = h.log_prob_grad_raw(x, za, zb);
            assert_relative_eq!(a, c, epsilon = 1e-12);
            assert_relative_eq!(b, d, epsilon = 1e-12);
        }
    }

    #[test]
    fn samples_stay_inside_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = BetaHead::from_raw(40.0, -40.0);
        for _ in 0..1000 {
            let x = h.sample(&mut rng);
            assert!(x > 0.0 && x < 1.0);
            assert!(h.log_prob(x).is_finite());
        }
    }
}
