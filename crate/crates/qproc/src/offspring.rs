//! Offspring laws and the scalar parameters derived from them.
//!
//! An [`OffspringLaw`] is a finite-support reproduction distribution
//! `p_0..p_K` with generating function `f(s) = sum p_k s^k`. Everything else
//! in the crate is driven by a handful of scalars computed here: the
//! extinction probability `q`, the contraction factor `beta = f'(q)`, the
//! drift constant `gamma_q`, and the curvature constant `c_rho` of the
//! log-scale contraction factor.

use serde::Serialize;

use crate::error::{QprocError, Result};
use crate::progeny;

/// Largest supported number of children per individual.
pub const MAX_SUPPORT: usize = 64;

/// Sum-to-one tolerance for probability vectors.
const PROB_SUM_TOL: f64 = 1e-12;

/// Laws with mean within this distance of 1 are treated as critical.
const CRITICAL_TOL: f64 = 1e-9;

/// Finite-support offspring distribution with cached mean.
///
/// Standing assumptions, enforced at construction: `p_0 > 0`,
/// `p_0 + p_1 < 1` (some individual can have two or more children), all
/// entries nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    probs: Vec<f64>,
    mean: f64,
}

impl OffspringLaw {
    /// Validates `probs` as an offspring distribution. Trailing zeros are
    /// trimmed so the last entry is the true maximal child count.
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(QprocError::NotAProbabilityVector("empty vector".into()));
        }
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(QprocError::NotAProbabilityVector(format!(
                    "entry p_{k} = {p} is not finite"
                )));
            }
            if p < 0.0 {
                return Err(QprocError::NotAProbabilityVector(format!(
                    "entry p_{k} = {p} is negative"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(QprocError::NotAProbabilityVector(format!(
                "mass sums to {sum}, not 1"
            )));
        }
        let mut probs = probs.to_vec();
        while probs.len() > 1 && *probs.last().unwrap() == 0.0 {
            probs.pop();
        }
        if probs.len() - 1 > MAX_SUPPORT {
            return Err(QprocError::AssumptionViolated(format!(
                "support {} exceeds maximum {}",
                probs.len() - 1,
                MAX_SUPPORT
            )));
        }
        if probs[0] <= 0.0 {
            return Err(QprocError::AssumptionViolated("p_0 must be positive".into()));
        }
        let p01 = probs[0] + probs.get(1).copied().unwrap_or(0.0);
        if p01 >= 1.0 - PROB_SUM_TOL {
            return Err(QprocError::AssumptionViolated(
                "p_0 + p_1 must be strictly below 1".into(),
            ));
        }
        let mean = probs.iter().enumerate().map(|(k, &p)| k as f64 * p).sum();
        Ok(Self { probs, mean })
    }

    /// Probabilities `p_0..p_K` with `p_K > 0`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Mean number of children `m = sum k p_k`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Largest possible number of children `K`.
    pub fn max_children(&self) -> usize {
        self.probs.len() - 1
    }

    /// Evaluates the generating function `f(s)` or one of its derivatives.
    ///
    /// `order` 0 is `f(s)` itself; higher orders evaluate the exact
    /// polynomial derivative via falling factorials.
    pub fn pgf(&self, s: f64, order: u32) -> f64 {
        let ord = order as usize;
        // Horner over the differentiated polynomial.
        let mut acc = 0.0;
        for k in (ord..self.probs.len()).rev() {
            let mut c = self.probs[k];
            for d in 0..ord {
                c *= (k - d) as f64;
            }
            acc = acc * s + c;
        }
        acc
    }

    /// Smallest fixed point of `f` in `[0, 1]`; equals 1 exactly when the
    /// mean is at most 1.
    ///
    /// Bisection brackets the sub-unit root, then Newton polishes it. The
    /// residual `|f(q) - q|` must end below `1e-12`.
    pub fn extinction_probability(&self) -> Result<f64> {
        if self.mean <= 1.0 {
            return Ok(1.0);
        }
        // g(s) = f(s) - s is positive on [0, q) and negative on (q, 1).
        let g = |s: f64| self.pgf(s, 0) - s;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut q = 0.5 * (lo + hi);
        for _ in 0..50 {
            let denom = self.pgf(q, 1) - 1.0;
            if denom == 0.0 {
                break;
            }
            let step = g(q) / denom;
            q -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        if !(0.0..=1.0).contains(&q) || g(q).abs() > 1e-12 {
            return Err(QprocError::ConvergenceFailure(format!(
                "fixed-point residual {:e} after iteration cap",
                g(q).abs()
            )));
        }
        Ok(q)
    }

    /// Derives all scalar system parameters. Rejects critical laws, whose
    /// conditioned chain is transient.
    pub fn derive_params(&self) -> Result<SystemParams> {
        if (self.mean - 1.0).abs() < CRITICAL_TOL {
            return Err(QprocError::CriticalLawUnsupported);
        }
        let q = self.extinction_probability()?;
        let beta = if self.mean < 1.0 { self.mean } else { self.pgf(q, 1) };
        debug_assert!(beta > 0.0 && beta < 1.0);
        let b_q = q * self.pgf(q, 2);
        let gamma_q = b_q / (beta * (1.0 - beta));
        let alpha = 1.0 + gamma_q * (1.0 - beta);
        let c_q = q * q * self.pgf(q, 3);
        let c_rho = progeny::c_rho_chain_rule(beta, b_q, c_q)?;
        Ok(SystemParams { q, beta, gamma_q, b_q, alpha, c_rho })
    }

    /// The conjugate law with probabilities `p_k q^{k-1}`, i.e. the
    /// subcritical reproduction law of non-distinguished individuals. Its
    /// mean is `beta`. Subcritical laws are their own conjugate.
    pub fn conjugate(&self) -> Result<OffspringLaw> {
        let q = self.extinction_probability()?;
        if q == 1.0 {
            return Ok(self.clone());
        }
        let probs: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| p * q.powi(k as i32 - 1))
            .collect();
        OffspringLaw::new(&probs)
    }

    /// "supercritical" or "subcritical" by the sign of `m - 1`.
    /// Critical laws are rejected before classification matters.
    pub fn classification(&self) -> &'static str {
        if self.mean > 1.0 {
            "supercritical"
        } else {
            "subcritical"
        }
    }
}

/// Scalar parameters of one law's conditioned system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemParams {
    /// Extinction probability of the unconditioned system.
    pub q: f64,
    /// Contraction factor `f'(q)`, strictly inside (0, 1).
    pub beta: f64,
    /// Drift constant `q f''(q) / (beta (1 - beta))`; the progeny mean per
    /// generation tends to `1 + gamma_q`.
    pub gamma_q: f64,
    /// Second derivative of the conjugate generating function at 1.
    pub b_q: f64,
    /// One-step mean of the conditioned population size from state 1,
    /// `1 + gamma_q (1 - beta)`.
    pub alpha: f64,
    /// Half the curvature at 0 of the log-scale contraction factor
    /// `theta -> u(e^theta)/beta`; positive for every admissible law.
    pub c_rho: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn super_law() -> OffspringLaw {
        OffspringLaw::new(&[0.25, 0.0, 0.75]).unwrap()
    }

    fn sub_law() -> OffspringLaw {
        OffspringLaw::new(&[0.5, 0.25, 0.25]).unwrap()
    }

    #[test]
    fn construction_means() {
        assert_relative_eq!(super_law().mean(), 1.5);
        assert_relative_eq!(sub_law().mean(), 0.75);
    }

    #[test]
    fn construction_rejects_schroeder_violations() {
        assert!(matches!(
            OffspringLaw::new(&[0.3, 0.7]),
            Err(QprocError::AssumptionViolated(_))
        ));
        assert!(matches!(
            OffspringLaw::new(&[0.0, 0.3, 0.7]),
            Err(QprocError::AssumptionViolated(_))
        ));
    }

    #[test]
    fn construction_rejects_bad_vectors() {
        assert!(matches!(
            OffspringLaw::new(&[0.25, 0.25]),
            Err(QprocError::NotAProbabilityVector(_))
        ));
        assert!(matches!(
            OffspringLaw::new(&[-0.1, 0.4, 0.7]),
            Err(QprocError::NotAProbabilityVector(_))
        ));
        assert!(matches!(
            OffspringLaw::new(&[]),
            Err(QprocError::NotAProbabilityVector(_))
        ));
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let law = OffspringLaw::new(&[0.25, 0.0, 0.75, 0.0, 0.0]).unwrap();
        assert_eq!(law.max_children(), 2);
    }

    #[test]
    fn pgf_values() {
        let law = super_law();
        assert_relative_eq!(law.pgf(1.0, 0), 1.0);
        assert_relative_eq!(law.pgf(1.0 / 3.0, 0), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(law.pgf(1.0 / 3.0, 1), 0.5, epsilon = 1e-15);
        assert_relative_eq!(law.pgf(0.7, 2), 1.5);
        assert_relative_eq!(law.pgf(0.7, 3), 0.0);
    }

    #[test]
    fn extinction_probabilities() {
        assert_relative_eq!(
            super_law().extinction_probability().unwrap(),
            1.0 / 3.0,
            epsilon = 1e-13
        );
        assert_relative_eq!(sub_law().extinction_probability().unwrap(), 1.0);
        // Roots {1, 1.5}: the sub-unit branch does not exist, m <= 1.
        let law = OffspringLaw::new(&[0.6, 0.0, 0.4]).unwrap();
        assert_relative_eq!(law.extinction_probability().unwrap(), 1.0);
    }

    #[test]
    fn derive_params_supercritical() {
        let p = super_law().derive_params().unwrap();
        assert_relative_eq!(p.q, 1.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(p.beta, 0.5, epsilon = 1e-13);
        assert_relative_eq!(p.gamma_q, 2.0, epsilon = 1e-12);
        assert_relative_eq!(p.alpha, 2.0, epsilon = 1e-12);
        assert_relative_eq!(p.b_q, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn derive_params_subcritical() {
        let p = sub_law().derive_params().unwrap();
        assert_relative_eq!(p.q, 1.0);
        assert_relative_eq!(p.beta, 0.75);
        assert_relative_eq!(p.gamma_q, 8.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn derive_params_rejects_critical() {
        let law = OffspringLaw::new(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(matches!(
            law.derive_params(),
            Err(QprocError::CriticalLawUnsupported)
        ));
    }

    #[test]
    fn conjugate_examples() {
        let conj = super_law().conjugate().unwrap();
        assert_relative_eq!(conj.probs()[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(conj.probs()[2], 0.25, epsilon = 1e-12);
        assert_relative_eq!(conj.mean(), 0.5, epsilon = 1e-12);

        let same = sub_law().conjugate().unwrap();
        assert_eq!(same.probs(), sub_law().probs());
    }

    /// Random valid laws: positive p_0, some mass at or above two children.
    fn arb_law() -> impl Strategy<Value = OffspringLaw> {
        (2usize..=8)
            .prop_flat_map(|k| {
                proptest::collection::vec(0.01f64..1.0, k + 1)
            })
            .prop_map(|mut w| {
                // Guarantee the standing assumptions before normalizing.
                w[0] = w[0].max(0.05);
                let last = w.len() - 1;
                w[last] = w[last].max(0.05);
                let total: f64 = w.iter().sum();
                let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
                OffspringLaw::new(&probs).unwrap()
            })
    }

    proptest! {
        #[test]
        fn fixed_point_minimality(law in arb_law()) {
            let q = law.extinction_probability().unwrap();
            prop_assert!((law.pgf(q, 0) - q).abs() < 1e-12);
            // f(s) > s strictly left of the smallest root.
            for i in 1..50 {
                let s = q * i as f64 / 50.0;
                prop_assert!(law.pgf(s, 0) > s);
            }
        }

        #[test]
        fn conjugate_mean_is_beta(law in arb_law()) {
            prop_assume!((law.mean() - 1.0).abs() > 1e-3);
            let params = law.derive_params().unwrap();
            let conj = law.conjugate().unwrap();
            prop_assert!((conj.mean() - params.beta).abs() < 1e-12);
        }

        #[test]
        fn alpha_identity_exact(law in arb_law()) {
            prop_assume!((law.mean() - 1.0).abs() > 1e-3);
            let p = law.derive_params().unwrap();
            // Exact by construction, not merely approximate.
            prop_assert_eq!(p.alpha, 1.0 + p.gamma_q * (1.0 - p.beta));
        }

        #[test]
        fn classification_matches_mean(law in arb_law()) {
            let q = law.extinction_probability().unwrap();
            if law.mean() > 1.0 {
                prop_assert_eq!(law.classification(), "supercritical");
                prop_assert!(q < 1.0);
            } else {
                prop_assert_eq!(law.classification(), "subcritical");
                prop_assert_eq!(q, 1.0);
            }
        }
    }
}
