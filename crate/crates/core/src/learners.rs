//! Learners that map a training set to a single linear predictor in the
//! `B`-ball.
//!
//! The two online methods are turned into batch predictors by averaging their
//! pre-update iterates `w_1, ..., w_m`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::distributions::DataSet;
use crate::error::{Error, Result};
use crate::risk::{solve_constrained_optimum, Moments};
use crate::vector::{project_to_ball, WeightVector};

/// Anything that turns a data set into a predictor. Implementations only see
/// the data, never the distribution it came from.
pub trait Learner: Sync {
    fn fit(&self, data: &DataSet) -> Result<WeightVector>;

    /// Short identifier used in reports.
    fn name(&self) -> String;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LearnerKind {
    Zero,
    Vaw,
    Ogd,
    Erm,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] = [LearnerKind::Zero, LearnerKind::Vaw, LearnerKind::Ogd, LearnerKind::Erm];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Zero => "zero",
            LearnerKind::Vaw => "vaw",
            LearnerKind::Ogd => "ogd",
            LearnerKind::Erm => "erm",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" => Ok(LearnerKind::Zero),
            "vaw" => Ok(LearnerKind::Vaw),
            "ogd" => Ok(LearnerKind::Ogd),
            "erm" => Ok(LearnerKind::Erm),
            other => Err(Error::invalid(format!(
                "unknown learner '{other}' (expected zero, vaw, ogd or erm)"
            ))),
        }
    }
}

/// A configured learner.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerSpec {
    kind: LearnerKind,
    b_norm: f64,
    y_bound: f64,
    vaw_a: f64,
}

impl LearnerSpec {
    pub const DEFAULT_VAW_A: f64 = 1.0;

    pub fn new(kind: LearnerKind, b_norm: f64, y_bound: f64) -> Result<Self> {
        Self::with_regularizer(kind, b_norm, y_bound, Self::DEFAULT_VAW_A)
    }

    pub fn with_regularizer(kind: LearnerKind, b_norm: f64, y_bound: f64, vaw_a: f64) -> Result<Self> {
        for (name, v) in [("B", b_norm), ("Y", y_bound), ("vaw_a", vaw_a)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self {
            kind,
            b_norm,
            y_bound,
            vaw_a,
        })
    }

    pub fn kind(&self) -> LearnerKind {
        self.kind
    }

    pub fn b_norm(&self) -> f64 {
        self.b_norm
    }

    pub fn y_bound(&self) -> f64 {
        self.y_bound
    }

    pub fn vaw_a(&self) -> f64 {
        self.vaw_a
    }
}

impl Learner for LearnerSpec {
    fn fit(&self, data: &DataSet) -> Result<WeightVector> {
        match self.kind {
            LearnerKind::Zero => Ok(zero_learner(data)),
            LearnerKind::Vaw => Ok(vaw_learner(data, self.vaw_a, self.b_norm)),
            LearnerKind::Ogd => Ok(ogd_learner(data, self.b_norm, self.y_bound)),
            LearnerKind::Erm => erm_learner(data, self.b_norm),
        }
    }

    fn name(&self) -> String {
        self.kind.to_string()
    }
}

pub fn zero_learner(data: &DataSet) -> WeightVector {
    WeightVector::zeros(data.dim())
}

/// Online ridge (Vovk-Azoury-Warmuth style) forecaster, averaged.
///
/// Round `t` uses `w_t = (aI + Σ_{s<t} x_s x_sᵀ)⁻¹ Σ_{s<t} y_s x_s`; the inverse
/// is maintained by Sherman-Morrison updates. Work happens on the coordinates
/// the data touches: on the rest the regularised system is `aI` with a zero
/// right-hand side, so those weights stay zero.
pub fn vaw_learner(data: &DataSet, a: f64, b_norm: f64) -> WeightVector {
    let m = data.m();
    if m == 0 {
        return WeightVector::zeros(data.dim());
    }
    let support = data_support(data);
    let k = support.len();
    let mut inv = DMatrix::<f64>::identity(k, k) / a;
    let mut rhs = DVector::<f64>::zeros(k);
    let mut sum = DVector::<f64>::zeros(k);
    let mut px = DVector::<f64>::zeros(k);
    let mut local: Vec<(usize, f64)> = Vec::new();

    for (t, ex) in data.iter().enumerate() {
        if t > 0 {
            sum += &inv * &rhs;
        }
        local.clear();
        local.extend(
            ex.x.entries()
                .iter()
                .map(|&(i, v)| (support.binary_search(&i).expect("support covers data"), v)),
        );
        if local.is_empty() {
            continue;
        }
        // P x for sparse x
        px.fill(0.0);
        for &(j, v) in &local {
            px.axpy(v, &inv.column(j), 1.0);
        }
        let xpx: f64 = local.iter().map(|&(j, v)| v * px[j]).sum();
        inv.ger(-1.0 / (1.0 + xpx), &px, &px, 1.0);
        for &(j, v) in &local {
            rhs[j] += ex.y * v;
        }
    }

    let mut coords = vec![0.0; data.dim()];
    for (a_idx, &i) in support.iter().enumerate() {
        coords[i] = sum[a_idx] / m as f64;
    }
    project_to_ball(&mut coords, b_norm);
    WeightVector::new(coords).expect("finite ridge average")
}

/// Projected online gradient descent on the squared loss, averaged.
///
/// `w_1 = 0`, `w_{t+1} = Π_B(w_t − η_t ∇_t)` with `∇_t = 2(<w_t,x_t> − y_t) x_t`,
/// `η_t = B/(G√t)` and `G = 2(B + Y)`.
pub fn ogd_learner(data: &DataSet, b_norm: f64, y_bound: f64) -> WeightVector {
    let m = data.m();
    let dim = data.dim();
    if m == 0 {
        return WeightVector::zeros(dim);
    }
    let g = 2.0 * (b_norm + y_bound);
    let mut w = vec![0.0; dim];
    let mut sum = vec![0.0; dim];
    let mut norm_sq = 0.0;

    for (t, ex) in data.iter().enumerate() {
        sum.iter_mut().zip(&w).for_each(|(s, wi)| *s += wi);
        let eta = b_norm / (g * ((t + 1) as f64).sqrt());
        let residual = ex.x.dot(&w) - ex.y;
        let step = -eta * 2.0 * residual;
        for &(i, v) in ex.x.entries() {
            let old = w[i];
            w[i] += step * v;
            norm_sq += w[i] * w[i] - old * old;
        }
        if norm_sq > b_norm * b_norm {
            // recompute exactly before scaling so drift in the running norm
            // cannot accumulate
            let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > b_norm {
                let s = b_norm / n;
                w.iter_mut().for_each(|v| *v *= s);
            }
            norm_sq = w.iter().map(|v| v * v).sum();
        }
    }

    let inv_m = 1.0 / m as f64;
    let mut avg: Vec<f64> = sum.into_iter().map(|s| s * inv_m).collect();
    // averages of ball points stay in the ball; guard against roundoff only
    project_to_ball(&mut avg, b_norm);
    WeightVector::new(avg).expect("finite gradient iterates")
}

/// Empirical risk minimiser over the `B`-ball.
pub fn erm_learner(data: &DataSet, b_norm: f64) -> Result<WeightVector> {
    if data.m() == 0 {
        return Ok(WeightVector::zeros(data.dim()));
    }
    solve_constrained_optimum(&empirical_moments(data), b_norm)
}

/// Moments of the empirical distribution (weight `1/m` per example).
pub fn empirical_moments(data: &DataSet) -> Moments {
    let weight = 1.0 / data.m().max(1) as f64;
    Moments::from_weighted(data.dim(), data.iter().map(|e| (&e.x, e.y, weight)))
}

fn data_support(data: &DataSet) -> Vec<usize> {
    let mut s: Vec<usize> = data
        .iter()
        .flat_map(|e| e.x.entries().iter().map(|&(i, _)| i))
        .collect();
    s.sort_unstable();
    s.dedup();
    s
}
