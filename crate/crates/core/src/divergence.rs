//! KL and χ² divergences on finite laws, and the closed-form bounds used by
//! the two separation arguments. All logarithms are natural (nats).
//!
//! A pair that is not absolutely continuous has divergence `f64::INFINITY`.

use std::collections::BTreeMap;

use ordered_float::OrderedFloat;

use crate::distributions::{thm3_instance_with_sigma, thm3_schedule};
use crate::error::{Error, Result};
use crate::risk::{FiniteDistribution, PROB_SUM_TOL};

/// Finite probability law over ordered labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteLaw<L: Ord> {
    outcomes: BTreeMap<L, f64>,
}

impl<L: Ord> FiniteLaw<L> {
    /// Builds a law from `(label, probability)` pairs; repeated labels are
    /// summed.
    pub fn new(pairs: impl IntoIterator<Item = (L, f64)>) -> Result<Self> {
        let mut outcomes = BTreeMap::new();
        for (label, p) in pairs {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::invalid(format!("probability {p} is not >= 0")));
            }
            *outcomes.entry(label).or_insert(0.0) += p;
        }
        let total: f64 = outcomes.values().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("law sums to {total}, not 1")));
        }
        Ok(Self { outcomes })
    }

    pub fn prob(&self, label: &L) -> f64 {
        self.outcomes.get(label).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&L, f64)> {
        self.outcomes.iter().map(|(l, &p)| (l, p))
    }
}

/// Bernoulli law on `{false, true}` with `P(true) = p`.
pub fn bernoulli(p: f64) -> Result<FiniteLaw<bool>> {
    FiniteLaw::new([(true, p), (false, 1.0 - p)])
}

/// `Σ p(a) ln(p(a)/q(a))`, with `0 ln 0 = 0`.
pub fn kl<L: Ord>(p: &FiniteLaw<L>, q: &FiniteLaw<L>) -> f64 {
    let mut total = 0.0;
    for (label, pa) in p.iter() {
        if pa == 0.0 {
            continue;
        }
        let qa = q.prob(label);
        if qa == 0.0 {
            return f64::INFINITY;
        }
        total += pa * (pa / qa).ln();
    }
    // the sum is nonnegative; only roundoff can push it below
    total.max(0.0)
}

/// `Σ (p(a) − q(a))² / q(a)` over the support of `q`.
pub fn chi_squared<L: Ord>(p: &FiniteLaw<L>, q: &FiniteLaw<L>) -> f64 {
    if p.iter().any(|(label, pa)| pa > 0.0 && q.prob(label) == 0.0) {
        return f64::INFINITY;
    }
    q.iter()
        .filter(|&(_, qa)| qa > 0.0)
        .map(|(label, qa)| (p.prob(label) - qa).powi(2) / qa)
        .sum()
}

/// `γ(1 + γ/(α − γ))`: the χ² divergence between the instance marginals of
/// the two-point pair.
pub fn thm2_marginal_chi2_bound(alpha: f64, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma < alpha && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "need 0 <= gamma < alpha <= 1, got alpha = {alpha}, gamma = {gamma}"
        )));
    }
    Ok(gamma * (1.0 + gamma / (alpha - gamma)))
}

/// `6b²/d′`, an upper bound on the per-example KL between the sign-family
/// laws that differ in one sign. Valid for `b ∈ [0, 1/2]`.
pub fn thm3_per_example_kl_bound(b: f64, d_prime: usize) -> Result<f64> {
    if !(0.0..=0.5).contains(&b) {
        return Err(Error::invalid(format!("bias b must lie in [0, 1/2], got {b}")));
    }
    if d_prime == 0 {
        return Err(Error::invalid("d' must be >= 1"));
    }
    Ok(6.0 * b * b / d_prime as f64)
}

/// `1 − √(KL/2)`. Non-positive values mean the bound certifies no separation.
pub fn pinsker_separation(total_kl: f64) -> f64 {
    1.0 - (total_kl / 2.0).sqrt()
}

/// Label for a sparse instance vector.
pub type PointLabel = Vec<(usize, OrderedFloat<f64>)>;

fn point_label(x: &crate::vector::Point) -> PointLabel {
    x.entries().iter().map(|&(i, v)| (i, OrderedFloat(v))).collect()
}

/// Marginal law of `x`.
pub fn x_marginal(dist: &FiniteDistribution) -> FiniteLaw<PointLabel> {
    FiniteLaw::new(dist.atoms().iter().map(|a| (point_label(&a.x), a.p))).expect("distribution is normalised")
}

/// Joint law of `(x, y)`.
pub fn joint_law(dist: &FiniteDistribution) -> FiniteLaw<(PointLabel, OrderedFloat<f64>)> {
    FiniteLaw::new(
        dist.atoms()
            .iter()
            .map(|a| ((point_label(&a.x), OrderedFloat(a.y)), a.p)),
    )
    .expect("distribution is normalised")
}

/// Exact per-example KL between the sign-family laws with `σ_i = −1` and
/// `σ_i = +1`, other signs taken from `sigma`.
pub fn thm3_exact_per_example_kl(y: f64, b_norm: f64, m: usize, d: usize, sigma: &[i8], i: usize) -> Result<f64> {
    let (d_prime, _) = thm3_schedule(y, b_norm, m, d);
    if i >= d_prime {
        return Err(Error::invalid(format!("coordinate {i} is not active (d' = {d_prime})")));
    }
    let mut neg = sigma.to_vec();
    neg[i] = -1;
    let mut pos = sigma.to_vec();
    pos[i] = 1;
    let neg = thm3_instance_with_sigma(y, b_norm, m, d, neg)?;
    let pos = thm3_instance_with_sigma(y, b_norm, m, d, pos)?;
    Ok(kl(&joint_law(&neg.dist), &joint_law(&pos.dist)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::thm2_pair;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kl_examples() {
        let p = bernoulli(0.75).unwrap();
        let q = bernoulli(0.25).unwrap();
        assert_eq!(kl(&p, &p), 0.0);
        assert_abs_diff_eq!(kl(&p, &q), 0.5 * 3f64.ln(), epsilon = 1e-15);
        assert!(kl(&p, &q) <= chi_squared(&p, &q));
    }

    #[test]
    fn chi_squared_examples() {
        let p = bernoulli(0.75).unwrap();
        let q = bernoulli(0.25).unwrap();
        assert_eq!(chi_squared(&p, &p), 0.0);
        assert_abs_diff_eq!(chi_squared(&p, &q), 4.0 / 3.0, epsilon = 1e-15);
        // per-coordinate sign pair at b = 1/2 against the 6b² bound
        let b: f64 = 0.5;
        let plus = bernoulli(0.5 * (1.0 + b)).unwrap();
        let minus = bernoulli(0.5 * (1.0 - b)).unwrap();
        let closed = 2.0 * b * b * (1.0 / (1.0 + b) + 1.0 / (1.0 - b));
        assert_abs_diff_eq!(chi_squared(&plus, &minus), closed, epsilon = 1e-15);
        assert_abs_diff_eq!(closed, 4.0 / 3.0, epsilon = 1e-15);
        assert!(closed <= 6.0 * b * b);
    }

    #[test]
    fn non_absolutely_continuous_is_infinite() {
        let p = bernoulli(0.5).unwrap();
        let q = bernoulli(1.0).unwrap();
        assert_eq!(kl(&p, &q), f64::INFINITY);
        assert_eq!(chi_squared(&p, &q), f64::INFINITY);
        assert!(kl(&q, &p).is_finite());
    }

    #[test]
    fn marginal_bound_examples() {
        assert_abs_diff_eq!(
            thm2_marginal_chi2_bound(1.0, 1.0 / 9.0).unwrap(),
            0.125,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            thm2_marginal_chi2_bound(0.4, 1.0 / 30.0).unwrap(),
            2.0 / 55.0,
            epsilon = 1e-15
        );
        assert_eq!(thm2_marginal_chi2_bound(0.4, 0.0).unwrap(), 0.0);
        assert!(thm2_marginal_chi2_bound(0.4, 0.4).is_err());
    }

    #[test]
    fn marginal_bound_is_the_exact_chi_squared() {
        let pair = thm2_pair(1.0, 2.0, 10).unwrap();
        let exact = chi_squared(&x_marginal(&pair.d0), &x_marginal(&pair.d1));
        let closed = thm2_marginal_chi2_bound(pair.alpha, pair.gamma).unwrap();
        assert_abs_diff_eq!(exact, closed, epsilon = 1e-12);
    }

    #[test]
    fn per_example_bound_examples() {
        assert_eq!(thm3_per_example_kl_bound(0.0, 3).unwrap(), 0.0);
        let (m, d_prime) = (50usize, 7usize);
        let b = (d_prime as f64 / (6.0 * m as f64)).sqrt();
        assert_abs_diff_eq!(
            thm3_per_example_kl_bound(b, d_prime).unwrap(),
            1.0 / m as f64,
            epsilon = 1e-15
        );
        assert_eq!(thm3_per_example_kl_bound(0.5, 1).unwrap(), 1.5);
        assert!(thm3_per_example_kl_bound(0.6, 1).is_err());
    }

    #[test]
    fn exact_per_example_kl_is_dominated() {
        let (y, b_norm, m, d) = (1.0, 2.0, 24, 10);
        let (d_prime, b) = thm3_schedule(y, b_norm, m, d);
        let sigma = vec![1i8; d_prime];
        let exact = thm3_exact_per_example_kl(y, b_norm, m, d, &sigma, 3).unwrap();
        let bern = kl(
            &bernoulli(0.5 * (1.0 - b)).unwrap(),
            &bernoulli(0.5 * (1.0 + b)).unwrap(),
        );
        assert_abs_diff_eq!(exact, bern / d_prime as f64, epsilon = 1e-15);
        assert!(exact <= thm3_per_example_kl_bound(b, d_prime).unwrap());
    }

    #[test]
    fn pinsker_examples() {
        assert_eq!(pinsker_separation(0.0), 1.0);
        assert_eq!(pinsker_separation(2.0), 0.0);
        let s = pinsker_separation(1.0);
        assert_abs_diff_eq!(s, 1.0 - 0.5f64.sqrt(), epsilon = 1e-15);
        assert!((0.5 * s - 0.14).abs() < 0.01);
    }
}
