//! Monte Carlo estimation of expected excess risk.
//!
//! Every replication samples a fresh training set from its own substream,
//! runs the learner and scores the output *exactly* against the known moments
//! of the generating distribution. Replications are independent and reduced
//! in index order, so a result depends only on `(config, seed)`.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::distributions::{sample, thm2_pair, thm3_instance};
use crate::error::{Error, Result};
use crate::learners::Learner;
use crate::par::{self, Schedule};
use crate::risk::{excess_given_optimum, moments_of, solve_constrained_optimum, FiniteDistribution};
use crate::rng;

const Z_95: f64 = 1.96;

/// Mean excess risk over `reps` replications with a normal 95% half-width.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub mean_excess: f64,
    pub half_width_95: f64,
    pub reps: usize,
    pub seed: u64,
    pub config_digest: String,
}

/// Least-squares fit of `ln(excess)` on `ln(m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// The three-regime rates without constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

pub fn config_digest(description: &str) -> String {
    let hash = Sha256::digest(description.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn summarize(values: &[f64], seed: u64, digest: String) -> ExperimentResult {
    let n = values.len();
    let (mean, half_width) = if values.iter().all(|&v| v == values[0]) {
        (values[0], 0.0)
    } else {
        let nf = n as f64;
        let rough = values.iter().sum::<f64>() / nf;
        // second pass corrects the first-pass rounding
        let mean = rough + values.iter().map(|v| v - rough).sum::<f64>() / nf;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        (mean, Z_95 * var.sqrt() / nf.sqrt())
    };
    ExperimentResult {
        mean_excess: mean,
        half_width_95: half_width,
        reps: n,
        seed,
        config_digest: digest,
    }
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < 2 {
        return Err(Error::invalid("reps must be >= 2 for a finite half-width"));
    }
    Ok(())
}

fn collect(values: Vec<Result<f64>>) -> Result<Vec<f64>> {
    values.into_iter().collect()
}

/// Expected excess risk of `learner` trained on `m` samples of `dist`.
pub fn mc_excess_risk<L: Learner + ?Sized>(
    learner: &L,
    dist: &FiniteDistribution,
    b_norm: f64,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    mc_excess_risk_with(Schedule::default(), learner, dist, b_norm, m, reps, seed)
}

pub fn mc_excess_risk_with<L: Learner + ?Sized>(
    schedule: Schedule,
    learner: &L,
    dist: &FiniteDistribution,
    b_norm: f64,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    check_reps(reps)?;
    let mom = moments_of(dist);
    let wstar = solve_constrained_optimum(&mom, b_norm)?;
    let values = par::map_indexed(reps, schedule, |r| {
        let mut stream = rng::substream(seed, r as u64);
        let data = sample(dist, m, &mut stream);
        let w = learner.fit(&data)?;
        Error::check_dim(dist.dim(), w.dim())?;
        excess_given_optimum(&w, &wstar, &mom)
    });
    let digest = config_digest(&format!(
        "mc|{}|B={b_norm:e}|m={m}|reps={reps}|d={}|atoms={:?}",
        learner.name(),
        dist.dim(),
        dist.atoms()
    ));
    Ok(summarize(&collect(values)?, seed, digest))
}

/// Uniform mixture over the two-point pair, averaged exactly over the coin:
/// each replication trains on independent samples from `D₀` and from `D₁`
/// and records the mean of the two excess risks. The learner sees only the
/// samples.
pub fn minimax_thm2<L: Learner + ?Sized>(
    learner: &L,
    y: f64,
    b_norm: f64,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    minimax_thm2_with(Schedule::default(), learner, y, b_norm, m, reps, seed)
}

pub fn minimax_thm2_with<L: Learner + ?Sized>(
    schedule: Schedule,
    learner: &L,
    y: f64,
    b_norm: f64,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    check_reps(reps)?;
    let pair = thm2_pair(y, b_norm, m)?;
    let branches = [
        (
            &pair.d0,
            crate::vector::WeightVector::scalar(pair.wstar0),
            moments_of(&pair.d0),
        ),
        (
            &pair.d1,
            crate::vector::WeightVector::scalar(pair.wstar1),
            moments_of(&pair.d1),
        ),
    ];
    let values = par::map_indexed(reps, schedule, |r| {
        let mut stream = rng::substream(seed, r as u64);
        let mut total = 0.0;
        for (dist, wstar, mom) in &branches {
            let data = sample(dist, m, &mut stream);
            let w = learner.fit(&data)?;
            Error::check_dim(1, w.dim())?;
            total += excess_given_optimum(&w, wstar, mom)?;
        }
        Ok(0.5 * total)
    });
    let digest = config_digest(&format!(
        "thm2|{}|Y={y:e}|B={b_norm:e}|m={m}|reps={reps}",
        learner.name()
    ));
    Ok(summarize(&collect(values)?, seed, digest))
}

/// Random member of the sign family per replication (fresh `σ` from the
/// replication's substream).
pub fn minimax_thm3<L: Learner + ?Sized>(
    learner: &L,
    y: f64,
    b_norm: f64,
    m: usize,
    d: usize,
    reps: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    minimax_thm3_with(Schedule::default(), learner, y, b_norm, m, d, reps, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn minimax_thm3_with<L: Learner + ?Sized>(
    schedule: Schedule,
    learner: &L,
    y: f64,
    b_norm: f64,
    m: usize,
    d: usize,
    reps: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    check_reps(reps)?;
    let values = par::map_indexed(reps, schedule, |r| {
        let mut stream = rng::substream(seed, r as u64);
        let sigma_seed: u64 = stream.random();
        let inst = thm3_instance(y, b_norm, m, d, sigma_seed)?;
        let data = sample(&inst.dist, m, &mut stream);
        let w = learner.fit(&data)?;
        Error::check_dim(d, w.dim())?;
        excess_given_optimum(&w, &inst.wstar, &moments_of(&inst.dist))
    });
    let digest = config_digest(&format!(
        "thm3|{}|Y={y:e}|B={b_norm:e}|m={m}|d={d}|reps={reps}",
        learner.name()
    ));
    Ok(summarize(&collect(values)?, seed, digest))
}

/// `lower = min{Y², (B²+dY²)/m, BY/√m}`,
/// `upper = min{Y², (B²+dY²ln(1+m/d))/m, BY/√m}`.
pub fn theoretical_envelope(y: f64, b_norm: f64, d: usize, m: usize) -> Envelope {
    let (df, mf) = (d as f64, m as f64);
    let y2 = y * y;
    let slow = b_norm * y / mf.sqrt();
    let lower = y2.min((b_norm * b_norm + df * y2) / mf).min(slow);
    let upper = y2
        .min((b_norm * b_norm + df * y2 * (1.0 + mf / df).ln()) / mf)
        .min(slow);
    Envelope { lower, upper }
}

pub fn fit_rate(series: &[(usize, f64)]) -> Result<RateFit> {
    if let Some(&(m, e)) = series.iter().find(|&&(m, e)| e.is_nan() || e <= 0.0 || m == 0) {
        return Err(Error::invalid(format!(
            "rate fit needs m > 0 and excess > 0, got ({m}, {e})"
        )));
    }
    let mut distinct: Vec<usize> = series.iter().map(|s| s.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("rate fit needs at least two distinct m values"));
    }
    let pts: Vec<(f64, f64)> = series.iter().map(|&(m, e)| ((m as f64).ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}
