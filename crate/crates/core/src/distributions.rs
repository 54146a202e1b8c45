//! The two hard-instance families, sampling, and random test distributions.
//!
//! * [`thm2_pair`]: a one-dimensional pair `D₀`, `D₁` with `y = Y` always and an
//!   instance that is occasionally `1` under `D₁` only. The two optima are far
//!   apart while the samples are nearly indistinguishable.
//! * [`thm3_instance`]: `x` uniform over `d′` basis vectors and a label whose
//!   bias on coordinate `i` has sign `σᵢ`. Learning the signs needs about
//!   `d′/b²` samples.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::risk::{moments_of, solve_constrained_optimum, Atom, FiniteDistribution};
use crate::rng::{self, Stream};
use crate::vector::{Point, WeightVector};

/// Agreement required between closed-form optima and the numerical solver.
const OPTIMUM_CHECK_TOL: f64 = 1e-10;

/// One labelled example.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub x: Point,
    pub y: f64,
}

/// An ordered training set of `m` examples in a fixed ambient dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    dim: usize,
    examples: Vec<Example>,
}

impl DataSet {
    pub fn new(dim: usize, examples: Vec<Example>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("data set dimension must be >= 1"));
        }
        if let Some(e) = examples.iter().find(|e| e.x.min_dim() > dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: e.x.min_dim(),
            });
        }
        Ok(Self { dim, examples })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            examples: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.examples.len()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }
}

/// `m` i.i.d. draws from `dist` by inverse CDF on `rng`.
pub fn sample(dist: &FiniteDistribution, m: usize, rng: &mut Stream) -> DataSet {
    let atoms = dist.atoms();
    let mut cdf = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in atoms {
        acc += a.p;
        cdf.push(acc);
    }
    let last = atoms.len() - 1;
    let examples = (0..m)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(last);
            Example {
                x: atoms[k].x.clone(),
                y: atoms[k].y,
            }
        })
        .collect();
    DataSet {
        dim: dist.dim(),
        examples,
    }
}

/// Random distribution for property tests: `atoms` points with uniform
/// direction and uniform radius in the unit ball, `y ~ U[−Y, Y]`, and
/// normalised positive weights.
pub fn random_test_distribution(
    rng: &mut Stream,
    dim: usize,
    atoms: usize,
    y_bound: f64,
) -> Result<FiniteDistribution> {
    if atoms == 0 {
        return Err(Error::invalid("need at least one atom"));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let mut raw = Vec::with_capacity(atoms);
    for _ in 0..atoms {
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius: f64 = rng.random();
        dir.iter_mut().for_each(|v| *v *= radius / n);
        let y = rng.random_range(-y_bound..=y_bound);
        // (0, 1]: strictly positive weights
        let w = 1.0 - rng.random::<f64>();
        raw.push((Point::from_dense(&dir), y, w));
    }
    let total: f64 = raw.iter().map(|r| r.2).sum();
    let atoms = raw.into_iter().map(|(x, y, w)| Atom::new(x, y, w / total)).collect();
    FiniteDistribution::new(dim, y_bound, atoms)
}

/// The one-dimensional pair `D₀`, `D₁` with its mixing parameters and optima.
#[derive(Clone, Debug)]
pub struct HardPair {
    pub d0: FiniteDistribution,
    pub d1: FiniteDistribution,
    pub alpha: f64,
    pub gamma: f64,
    pub wstar0: f64,
    pub wstar1: f64,
    pub gap_squared: f64,
}

impl HardPair {
    /// `B⁴γ²((Y−B)/(Y²α+B²γ))²`, the lower bound on `gap_squared` used in the
    /// separation argument.
    pub fn gap_lower_bound(y: f64, b: f64, alpha: f64, gamma: f64) -> f64 {
        let r = (y - b) / (y * y * alpha + b * b * gamma);
        b.powi(4) * gamma * gamma * r * r
    }
}

/// `(α, γ)` schedule: `α = 1` while `m ≤ B²/Y²`, else `α = B²/(Y²m)`; always
/// `γ = 1/(3m)`.
pub fn thm2_parameters(y: f64, b: f64, m: usize) -> (f64, f64) {
    let mf = m as f64;
    let ratio = (b * b) / (y * y);
    let alpha = if mf <= ratio { 1.0 } else { ratio / mf };
    (alpha, 1.0 / (3.0 * mf))
}

/// Closed-form optimum of `D₁`: `B(Y²(α−γ)+BYγ)/(Y²(α−γ)+B²γ)`.
pub fn thm2_wstar1(y: f64, b: f64, alpha: f64, gamma: f64) -> f64 {
    let y2 = y * y;
    b * (y2 * (alpha - gamma) + b * y * gamma) / (y2 * (alpha - gamma) + b * b * gamma)
}

pub fn thm2_pair(y: f64, b: f64, m: usize) -> Result<HardPair> {
    if m == 0 {
        return Err(Error::invalid("sample size m must be >= 1"));
    }
    let (alpha, gamma) = thm2_parameters(y, b, m);
    thm2_pair_with_parameters(y, b, alpha, gamma)
}

/// The two-point pair for explicit mixing parameters `0 < γ < α ≤ 1`.
pub fn thm2_pair_with_parameters(y: f64, b: f64, alpha: f64, gamma: f64) -> Result<HardPair> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::invalid(format!("Y must be positive, got {y}")));
    }
    if !b.is_finite() || b < 2.0 * y {
        return Err(Error::invalid(format!(
            "the two-point construction requires B >= 2Y (got B = {b}, Y = {y})"
        )));
    }
    if !(gamma > 0.0 && gamma < alpha && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "need 0 < gamma < alpha <= 1, got alpha = {alpha}, gamma = {gamma}"
        )));
    }
    let small = Point::from_dense(&[y / b]);
    let d0 = FiniteDistribution::new(
        1,
        y,
        vec![
            Atom::new(small.clone(), y, alpha),
            Atom::new(Point::zero(), y, 1.0 - alpha),
        ],
    )?;
    let d1 = FiniteDistribution::new(
        1,
        y,
        vec![
            Atom::new(Point::from_dense(&[1.0]), y, gamma),
            Atom::new(small, y, alpha - gamma),
            Atom::new(Point::zero(), y, 1.0 - alpha),
        ],
    )?;
    let wstar0 = b;
    let wstar1 = thm2_wstar1(y, b, alpha, gamma);
    for (dist, closed) in [(&d0, wstar0), (&d1, wstar1)] {
        let numeric = solve_constrained_optimum(&moments_of(dist), b)?.coords()[0];
        if (numeric - closed).abs() > OPTIMUM_CHECK_TOL * closed.abs().max(1.0) {
            return Err(Error::Inconsistent(format!(
                "closed-form optimum {closed} disagrees with solver {numeric}"
            )));
        }
    }
    Ok(HardPair {
        d0,
        d1,
        alpha,
        gamma,
        wstar0,
        wstar1,
        gap_squared: (wstar1 - wstar0).powi(2),
    })
}

/// Parameters of one member of the sign family.
#[derive(Clone, Debug, PartialEq)]
pub struct HardFamilyIndex {
    pub sigma: Vec<i8>,
    pub d_prime: usize,
    pub b: f64,
}

/// A sign-family distribution together with its index and exact optimum.
#[derive(Clone, Debug)]
pub struct Thm3Instance {
    pub dist: FiniteDistribution,
    pub index: HardFamilyIndex,
    pub wstar: WeightVector,
}

/// `(d′, b)` for the sign family: `d′ = min(d, ⌈√(6m)B/Y⌉)` when
/// `d > √(6m)B/Y`, else `d′ = d`; `b = min(1/2, √(d′/(6m)))`.
pub fn thm3_schedule(y: f64, b_norm: f64, m: usize, d: usize) -> (usize, f64) {
    let threshold = (6.0 * m as f64).sqrt() * b_norm / y;
    let d_prime = if (d as f64) > threshold {
        (threshold.ceil() as usize).clamp(1, d)
    } else {
        d
    };
    let bias = (d_prime as f64 / (6.0 * m as f64)).sqrt().min(0.5);
    (d_prime, bias)
}

pub fn thm3_instance(y: f64, b_norm: f64, m: usize, d: usize, sigma_seed: u64) -> Result<Thm3Instance> {
    validate_thm3(y, b_norm, m, d)?;
    let (d_prime, _) = thm3_schedule(y, b_norm, m, d);
    let mut rng = rng::master(sigma_seed);
    let sigma = (0..d_prime)
        .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
        .collect();
    thm3_instance_with_sigma(y, b_norm, m, d, sigma)
}

/// Same as [`thm3_instance`] with an explicit sign vector of length `d′`.
pub fn thm3_instance_with_sigma(y: f64, b_norm: f64, m: usize, d: usize, sigma: Vec<i8>) -> Result<Thm3Instance> {
    validate_thm3(y, b_norm, m, d)?;
    let (d_prime, bias) = thm3_schedule(y, b_norm, m, d);
    if sigma.len() != d_prime {
        return Err(Error::DimensionMismatch {
            expected: d_prime,
            found: sigma.len(),
        });
    }
    if sigma.iter().any(|s| s.abs() != 1) {
        return Err(Error::invalid("sign entries must be ±1"));
    }
    let px = 1.0 / d_prime as f64;
    let mut atoms = Vec::with_capacity(2 * d_prime);
    for (i, &s) in sigma.iter().enumerate() {
        let p_plus = 0.5 * (1.0 + f64::from(s) * bias);
        atoms.push(Atom::new(Point::basis(i, 1.0), y, px * p_plus));
        atoms.push(Atom::new(Point::basis(i, 1.0), -y, px * (1.0 - p_plus)));
    }
    let dist = FiniteDistribution::new(d, y, atoms)?;

    let magnitude = (y * bias).min(b_norm / (d_prime as f64).sqrt());
    let mut coords = vec![0.0; d];
    for (c, &s) in coords.iter_mut().zip(&sigma) {
        *c = f64::from(s) * magnitude;
    }
    let wstar = WeightVector::new(coords)?;

    let numeric = solve_constrained_optimum(&moments_of(&dist), b_norm)?;
    let diff = numeric
        .coords()
        .iter()
        .zip(wstar.coords())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if diff > OPTIMUM_CHECK_TOL {
        return Err(Error::Inconsistent(format!(
            "closed-form optimum off by {diff:e} from solver"
        )));
    }

    Ok(Thm3Instance {
        dist,
        index: HardFamilyIndex {
            sigma,
            d_prime,
            b: bias,
        },
        wstar,
    })
}

fn validate_thm3(y: f64, b_norm: f64, m: usize, d: usize) -> Result<()> {
    if !(y > 0.0 && y.is_finite()) || !(b_norm > 0.0 && b_norm.is_finite()) {
        return Err(Error::invalid(format!(
            "Y and B must be positive (got Y = {y}, B = {b_norm})"
        )));
    }
    if m == 0 || d == 0 {
        return Err(Error::invalid("m and d must be >= 1"));
    }
    Ok(())
}
