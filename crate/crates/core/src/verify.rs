//! Property suites behind `sqbound verify`.
//!
//! Each suite runs with fixed internal seeds and yields one [`Check`] per
//! property: the worst observed value and the threshold it is held to.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::distributions::{random_test_distribution, thm2_pair, thm3_instance, thm3_schedule};
use crate::divergence::{
    chi_squared, kl, thm2_marginal_chi2_bound, thm3_exact_per_example_kl, thm3_per_example_kl_bound, x_marginal,
    FiniteLaw,
};
use crate::error::{Error, Result};
use crate::harness::{fit_rate, minimax_thm2, minimax_thm3};
use crate::learners::{LearnerKind, LearnerSpec};
use crate::risk::{excess_risk, moments_of, predictive_distance, risk, solve_constrained_optimum};
use crate::rng::{self, Stream};
use crate::vector::WeightVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Lemma1,
    Divergence,
    Optima,
    LowerBounds,
    Rates,
    All,
}

impl Suite {
    const EACH: [Suite; 5] = [
        Suite::Lemma1,
        Suite::Divergence,
        Suite::Optima,
        Suite::LowerBounds,
        Suite::Rates,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Divergence => "divergence",
            Suite::Optima => "optima",
            Suite::LowerBounds => "lower-bounds",
            Suite::Rates => "rates",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|suite| suite.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown suite '{s}' (expected lemma1, divergence, optima, lower-bounds, rates or all)"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
    Within { lo_bits: u64, hi_bits: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub observed: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(suite: Suite, name: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Self {
            suite: suite.as_str(),
            name: name.into(),
            observed,
            relation: Relation::AtMost,
            threshold,
            pass: observed <= threshold,
        }
    }

    fn at_least(suite: Suite, name: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Self {
            suite: suite.as_str(),
            name: name.into(),
            observed,
            relation: Relation::AtLeast,
            threshold,
            pass: observed >= threshold,
        }
    }

    fn within(suite: Suite, name: impl Into<String>, observed: f64, lo: f64, hi: f64) -> Self {
        Self {
            suite: suite.as_str(),
            name: name.into(),
            observed,
            relation: Relation::Within {
                lo_bits: lo.to_bits(),
                hi_bits: hi.to_bits(),
            },
            threshold: hi,
            pass: (lo..=hi).contains(&observed),
        }
    }

    fn failed(suite: Suite, name: impl Into<String>, err: &Error) -> Self {
        Self {
            suite: suite.as_str(),
            name: format!("{} ({err})", name.into()),
            observed: f64::NAN,
            relation: Relation::AtMost,
            threshold: f64::NAN,
            pass: false,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let bound = match self.relation {
            Relation::AtMost => format!("<= {:.6e}", self.threshold),
            Relation::AtLeast => format!(">= {:.6e}", self.threshold),
            Relation::Within { lo_bits, hi_bits } => {
                format!("in [{}, {}]", f64::from_bits(lo_bits), f64::from_bits(hi_bits))
            }
        };
        write!(
            f,
            "{verdict} {}/{}: observed {:.6e} {bound}",
            self.suite, self.name, self.observed
        )
    }
}

pub fn run(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::All => Suite::EACH.into_iter().flat_map(run).collect(),
        Suite::Lemma1 => lemma1(),
        Suite::Divergence => divergence(),
        Suite::Optima => optima(),
        Suite::LowerBounds => lower_bounds(),
        Suite::Rates => rates(),
    }
}

fn random_w(r: &mut Stream, dim: usize, scale: f64) -> WeightVector {
    WeightVector::new((0..dim).map(|_| r.random_range(-scale..scale)).collect()).expect("finite draw")
}

/// Uniform-ish point in the ball: random direction, random radius.
fn random_w_in_ball(r: &mut Stream, dim: usize, radius: f64) -> WeightVector {
    let w = random_w(r, dim, 1.0);
    let n = w.norm().max(f64::MIN_POSITIVE);
    let scale = radius * r.random::<f64>() / n;
    WeightVector::new(w.into_coords().into_iter().map(|c| c * scale).collect()).expect("finite draw")
}

fn lemma1() -> Vec<Check> {
    let s = Suite::Lemma1;
    let mut r = rng::master(0x1e11a1);
    let (mut enum_gap, mut eq_gap, mut ineq_gap) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let dim = r.random_range(1..=5);
        let atoms = r.random_range(1..=20);
        let dist = match random_test_distribution(&mut r, dim, atoms, 1.0) {
            Ok(d) => d,
            Err(e) => return vec![Check::failed(s, "random distribution", &e)],
        };
        let mom = moments_of(&dist);
        let radius = r.random_range(0.05..2.0);
        let (w_inf, w_b) = match (
            solve_constrained_optimum(&mom, f64::INFINITY),
            solve_constrained_optimum(&mom, radius),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return vec![Check::failed(s, "optimum", &e)],
        };
        for _ in 0..50 {
            let w = random_w(&mut r, dim, 3.0);
            let via_moments = risk(&w, &mom).unwrap_or(f64::NAN);
            let direct = dist.risk_by_enumeration(&w).unwrap_or(f64::NAN);
            enum_gap = enum_gap.max((via_moments - direct).abs());
            let ex = excess_risk(&w, &mom, f64::INFINITY).unwrap_or(f64::NAN);
            let pd = predictive_distance(&w, &w_inf, &mom).unwrap_or(f64::NAN);
            eq_gap = eq_gap.max((ex - pd).abs());
            let w = random_w_in_ball(&mut r, dim, radius);
            let ex = excess_risk(&w, &mom, radius).unwrap_or(f64::NAN);
            let pd = predictive_distance(&w, &w_b, &mom).unwrap_or(f64::NAN);
            ineq_gap = ineq_gap.min(ex - pd);
        }
    }
    vec![
        Check::at_most(s, "risk from moments vs enumeration", enum_gap, 1e-10),
        Check::at_most(s, "equality |excess - distance| at B=inf", eq_gap, 1e-9),
        Check::at_least(s, "inequality excess - distance at finite B", ineq_gap, -1e-9),
    ]
}

fn random_law(r: &mut Stream, n: usize) -> FiniteLaw<usize> {
    let raw: Vec<f64> = (0..n).map(|_| 1.0 - r.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    FiniteLaw::new(raw.into_iter().enumerate().map(|(i, p)| (i, p / total))).expect("normalised")
}

fn divergence() -> Vec<Check> {
    let s = Suite::Divergence;
    let mut r = rng::master(0xd1f);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..500 {
        let n = r.random_range(2..=10);
        let (p, q) = (random_law(&mut r, n), random_law(&mut r, n));
        let k = kl(&p, &q);
        worst = worst.max((k - chi_squared(&p, &q)).max(-k));
    }
    let mut checks = vec![Check::at_most(s, "max(kl - chi2, -kl) over 500 law pairs", worst, 0.0)];

    let mut marginal_gap = 0.0f64;
    for _ in 0..50 {
        let y = r.random_range(0.1..3.0);
        let b = y * r.random_range(2.0..20.0);
        let m = r.random_range(1..=5000);
        match thm2_pair(y, b, m) {
            Ok(pair) => {
                let exact = chi_squared(&x_marginal(&pair.d0), &x_marginal(&pair.d1));
                let closed = thm2_marginal_chi2_bound(pair.alpha, pair.gamma).unwrap_or(f64::NAN);
                marginal_gap = marginal_gap.max((exact - closed).abs());
            }
            Err(e) => return vec![Check::failed(s, "two-point pair", &e)],
        }
    }
    checks.push(Check::at_most(
        s,
        "two-point chi2 closed form vs exact",
        marginal_gap,
        1e-12,
    ));

    let mut ratio = 0.0f64;
    for _ in 0..50 {
        let y = r.random_range(0.1..3.0);
        let b_norm = r.random_range(0.1..10.0);
        let m = r.random_range(1..=2000);
        let d = r.random_range(1..=40);
        let (d_prime, bias) = thm3_schedule(y, b_norm, m, d);
        let sigma: Vec<i8> = (0..d_prime).map(|_| if r.random_bool(0.5) { 1 } else { -1 }).collect();
        let i = r.random_range(0..d_prime);
        match (
            thm3_exact_per_example_kl(y, b_norm, m, d, &sigma, i),
            thm3_per_example_kl_bound(bias, d_prime),
        ) {
            (Ok(exact), Ok(bound)) => ratio = ratio.max(exact / bound),
            (Err(e), _) | (_, Err(e)) => return vec![Check::failed(s, "sign-family KL", &e)],
        }
    }
    checks.push(Check::at_most(s, "sign-family exact KL / (6b²/d')", ratio, 1.0));
    checks
}

/// Projected gradient descent with step `1/(2λ_max)`; independent of the
/// spectral solver it is compared against.
pub fn projected_gradient_oracle(a: &DMatrix<f64>, b: &DVector<f64>, radius: f64, iters: usize) -> DVector<f64> {
    let lambda_max = SymmetricEigen::new(a.clone()).eigenvalues.max();
    let step = 1.0 / (2.0 * lambda_max);
    let mut w = DVector::zeros(b.len());
    for _ in 0..iters {
        let grad = (a * &w - b) * 2.0;
        w -= grad * step;
        let n = w.norm();
        if n > radius {
            w *= radius / n;
        }
    }
    w
}

fn optima() -> Vec<Check> {
    let s = Suite::Optima;
    let mut r = rng::master(0x0b7);
    let (mut dw_max, mut gap_max) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let dim = r.random_range(2..=5);
        let atoms = r.random_range(2 * dim..=20);
        let Ok(dist) = random_test_distribution(&mut r, dim, atoms, 1.0) else {
            continue;
        };
        let mom = moments_of(&dist);
        let (a, b) = (mom.second_dense(), mom.cross_dense());
        let Some(unconstrained) = a.clone().lu().solve(&b) else {
            continue;
        };
        let radius = 0.5 * unconstrained.norm();
        let oracle = projected_gradient_oracle(&a, &b, radius, 100_000);
        let Ok(w) = solve_constrained_optimum(&mom, radius) else {
            return vec![Check::failed(
                s,
                "constrained optimum",
                &Error::invalid("solver failed"),
            )];
        };
        dw_max = dw_max.max((DVector::from_row_slice(w.coords()) - &oracle).norm());
        let ow = WeightVector::new(oracle.iter().copied().collect()).expect("finite oracle");
        gap_max = gap_max.max((risk(&w, &mom).unwrap_or(f64::NAN) - risk(&ow, &mom).unwrap_or(f64::NAN)).abs());
    }
    let mut checks = vec![
        Check::at_most(s, "‖w* - projected-gradient oracle‖", dw_max, 1e-5),
        Check::at_most(s, "|risk(w*) - risk(oracle)|", gap_max, 1e-9),
    ];

    let (mut overshoot, mut beaten) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..50 {
        let dim = r.random_range(1..=5);
        let atoms = r.random_range(1..=20);
        let Ok(dist) = random_test_distribution(&mut r, dim, atoms, 1.0) else {
            continue;
        };
        let mom = moments_of(&dist);
        let radius = r.random_range(0.05..2.0);
        let Ok(w) = solve_constrained_optimum(&mom, radius) else {
            continue;
        };
        overshoot = overshoot.max(w.norm() / radius - 1.0);
        let base = risk(&w, &mom).unwrap_or(f64::NAN);
        for _ in 0..1000 {
            let v = random_w_in_ball(&mut r, dim, radius);
            beaten = beaten.min(risk(&v, &mom).unwrap_or(f64::NAN) - base);
        }
    }
    checks.push(Check::at_most(s, "‖w*‖/B - 1", overshoot, 1e-10));
    checks.push(Check::at_least(
        s,
        "min risk(w) - risk(w*) over random in-ball w",
        beaten,
        -1e-8,
    ));

    let (mut closed_gap, mut norm_gap) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let y = r.random_range(0.1..3.0);
        let b_norm = r.random_range(0.1..10.0);
        let m = r.random_range(1..=2000);
        let d = r.random_range(1..=60);
        match thm3_instance(y, b_norm, m, d, r.random()) {
            Ok(inst) => {
                let numeric =
                    solve_constrained_optimum(&moments_of(&inst.dist), b_norm).unwrap_or_else(|_| inst.wstar.clone());
                let diff = numeric
                    .coords()
                    .iter()
                    .zip(inst.wstar.coords())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                closed_gap = closed_gap.max(diff);
                let dp = inst.index.d_prime as f64;
                norm_gap = norm_gap.max((inst.wstar.norm() - (y * inst.index.b * dp.sqrt()).min(b_norm)).abs());
            }
            Err(e) => return vec![Check::failed(s, "sign-family instance", &e)],
        }
    }
    checks.push(Check::at_most(
        s,
        "sign-family closed-form w* vs solver",
        closed_gap,
        1e-10,
    ));
    checks.push(Check::at_most(s, "sign-family ‖w*‖ vs min{Yb√d', B}", norm_gap, 1e-12));

    let mut zero_excess = f64::NEG_INFINITY;
    for _ in 0..100 {
        let y_bound = r.random_range(0.1..5.0);
        let dim = r.random_range(1..=5);
        let atoms = r.random_range(1..=20);
        let Ok(dist) = random_test_distribution(&mut r, dim, atoms, y_bound) else {
            continue;
        };
        let rk = risk(&WeightVector::zeros(dim), &moments_of(&dist)).unwrap_or(f64::NAN);
        zero_excess = zero_excess.max(rk - y_bound * y_bound);
    }
    checks.push(Check::at_most(s, "risk(zero) - Y²", zero_excess, 1e-12));
    checks
}

fn all_learners(b: f64, y: f64) -> Vec<LearnerSpec> {
    LearnerKind::ALL
        .iter()
        .map(|&k| LearnerSpec::new(k, b, y).expect("positive parameters"))
        .collect()
}

fn lower_bounds() -> Vec<Check> {
    let s = Suite::LowerBounds;
    let (y, b) = (1.0, 4.0);
    let mut checks = Vec::new();
    for learner in all_learners(b, y) {
        for m in [16usize, 64, 256] {
            let name = format!("two-point {} m={m}: mean + half-width", learner.kind());
            match minimax_thm2(&learner, y, b, m, 2000, 4000 + m as u64) {
                Ok(res) => checks.push(Check::at_least(
                    s,
                    name,
                    res.mean_excess + res.half_width_95,
                    0.0005 * (y * y).min(b * b / m as f64),
                )),
                Err(e) => checks.push(Check::failed(s, name, &e)),
            }
        }
    }
    let d = 16;
    for learner in all_learners(b, y) {
        for m in [32usize, 128, 512] {
            let name = format!("sign-family {} m={m}: mean + half-width", learner.kind());
            let (d_prime, _) = thm3_schedule(y, b, m, d);
            let dp = d_prime as f64;
            let threshold = 0.05 * (0.25 * y * y).min(dp * y * y / (6.0 * m as f64)).min(b * b / dp);
            match minimax_thm3(&learner, y, b, m, d, 2000, 5000 + m as u64) {
                Ok(res) => checks.push(Check::at_least(s, name, res.mean_excess + res.half_width_95, threshold)),
                Err(e) => checks.push(Check::failed(s, name, &e)),
            }
        }
    }
    checks
}

fn slope_of(learner: &LearnerSpec, d: usize, ms: &[usize], reps: usize, seed: u64) -> Result<(f64, f64)> {
    let series = ms
        .iter()
        .map(|&m| {
            Ok((
                m,
                minimax_thm3(learner, 1.0, 4.0, m, d, reps, seed + m as u64)?.mean_excess,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_rate(&series)?;
    Ok((fit.slope, fit.r_squared))
}

fn rates() -> Vec<Check> {
    let s = Suite::Rates;
    let mut checks = Vec::new();
    for kind in [LearnerKind::Erm, LearnerKind::Vaw] {
        let learner = LearnerSpec::new(kind, 4.0, 1.0).expect("positive parameters");
        match slope_of(&learner, 8, &[64, 256, 1024, 4096], 1000, 6000) {
            Ok((slope, r2)) => {
                checks.push(Check::within(
                    s,
                    format!("{kind} fast-rate slope (d=8)"),
                    slope,
                    -1.25,
                    -0.75,
                ));
                checks.push(Check::at_least(s, format!("{kind} fast-rate r²"), r2, 0.9));
            }
            Err(e) => checks.push(Check::failed(s, format!("{kind} fast rate"), &e)),
        }
    }
    let ogd = LearnerSpec::new(LearnerKind::Ogd, 4.0, 1.0).expect("positive parameters");
    match slope_of(&ogd, 4096, &[64, 256, 1024], 500, 7000) {
        Ok((slope, _)) => checks.push(Check::within(s, "ogd slow-rate slope (d=4096)", slope, -0.75, -0.30)),
        Err(e) => checks.push(Check::failed(s, "ogd slow rate", &e)),
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_roundtrip() {
        for suite in Suite::EACH.into_iter().chain([Suite::All]) {
            assert_eq!(suite.as_str().parse::<Suite>().unwrap(), suite);
        }
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn check_display() {
        let c = Check::at_most(Suite::Lemma1, "x", 1e-12, 1e-9);
        assert!(c.to_string().starts_with("PASS lemma1/x: observed"));
        let c = Check::within(Suite::Rates, "slope", -0.2, -0.75, -0.3);
        assert!(!c.pass);
        assert!(c.to_string().contains("in [-0.75, -0.3]"));
    }

    #[test]
    fn quick_suites_pass() {
        for suite in [Suite::Lemma1, Suite::Divergence] {
            for c in run(suite) {
                assert!(c.pass, "{c}");
            }
        }
    }
}
