//! Exact squared-loss risk algebra over finite-support distributions.
//!
//! The risk of a linear predictor is a quadratic in `w`,
//!
//! ```text
//! R(w) = E[(<w,x> - y)^2] = wᵀ A w - 2 <b, w> + c,
//! A = E[x xᵀ],  b = E[y x],  c = E[y²],
//! ```
//!
//! so every distribution is summarised by its [`Moments`]. Moments are stored
//! on the *support* of the instance marginal (the coordinates where some atom
//! is nonzero). Off-support coordinates never change `<w, x>` and are zero in
//! every minimum-norm optimum, so nothing is lost by compressing them away.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::vector::{Point, WeightVector};

/// Slack on `Σp = 1`.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Slack on the support constraints `‖x‖ ≤ 1`, `|y| ≤ Y`.
const SUPPORT_TOL: f64 = 1e-12;
/// Negative excess risks above this threshold are treated as roundoff.
pub const EXCESS_CLIP: f64 = 1e-9;
/// Relative slack on `‖w‖ ≤ B`.
pub const BALL_TOL: f64 = 1e-10;

/// One point mass of a [`FiniteDistribution`].
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub x: Point,
    pub y: f64,
    pub p: f64,
}

impl Atom {
    pub fn new(x: Point, y: f64, p: f64) -> Self {
        Self { x, y, p }
    }
}

/// Finite-support joint law over `{‖x‖ ≤ 1} × {|y| ≤ Y}`.
///
/// Atoms are stored in canonical order (coordinates, then `y`), with
/// zero-probability atoms removed and duplicates merged, so equal
/// distributions compare equal.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDistribution {
    dim: usize,
    y_bound: f64,
    atoms: Vec<Atom>,
}

impl FiniteDistribution {
    pub fn new(dim: usize, y_bound: f64, atoms: Vec<Atom>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("distribution dimension must be >= 1"));
        }
        if !(y_bound > 0.0 && y_bound.is_finite()) {
            return Err(Error::invalid(format!(
                "target bound Y must be positive, got {y_bound}"
            )));
        }
        let mut total = 0.0;
        for (k, a) in atoms.iter().enumerate() {
            if !(a.p >= 0.0 && a.p.is_finite()) {
                return Err(Error::invalid(format!("atom {k}: probability {} is not >= 0", a.p)));
            }
            if a.x.min_dim() > dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.x.min_dim(),
                });
            }
            if a.x.norm() > 1.0 + SUPPORT_TOL {
                return Err(Error::invalid(format!("atom {k}: ‖x‖ = {} exceeds 1", a.x.norm())));
            }
            if !a.y.is_finite() || a.y.abs() > y_bound * (1.0 + SUPPORT_TOL) {
                return Err(Error::invalid(format!(
                    "atom {k}: |y| = {} exceeds Y = {y_bound}",
                    a.y.abs()
                )));
            }
            total += a.p;
        }
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }

        let mut atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.p > 0.0).collect();
        atoms.sort_by(|a, b| a.x.cmp_coords(&b.x).then(a.y.total_cmp(&b.y)));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.y == a.y && last.x.cmp_coords(&a.x).is_eq() => last.p += a.p,
                _ => merged.push(a),
            }
        }
        Ok(Self {
            dim,
            y_bound,
            atoms: merged,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn y_bound(&self) -> f64 {
        self.y_bound
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Risk by direct enumeration, `Σ p (<w,x> - y)²`. Independent of [`Moments`].
    pub fn risk_by_enumeration(&self, w: &WeightVector) -> Result<f64> {
        Error::check_dim(self.dim, w.dim())?;
        Ok(self
            .atoms
            .iter()
            .map(|a| {
                let r = a.x.dot(w.coords()) - a.y;
                a.p * r * r
            })
            .sum())
    }
}

/// Second-order summary `(A, b, c)` of a distribution, restricted to the
/// support coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    dim: usize,
    support: Vec<usize>,
    second: DMatrix<f64>,
    cross: DVector<f64>,
    y_second: f64,
}

impl Moments {
    /// Accumulates `Σ weight · (x xᵀ, y x, y²)` over the given samples.
    pub fn from_weighted<'a, I>(dim: usize, samples: I) -> Self
    where
        I: IntoIterator<Item = (&'a Point, f64, f64)> + Clone,
    {
        let mut support: Vec<usize> = samples
            .clone()
            .into_iter()
            .flat_map(|(x, _, _)| x.entries().iter().map(|&(i, _)| i))
            .collect();
        support.sort_unstable();
        support.dedup();

        let k = support.len();
        let mut second = DMatrix::zeros(k, k);
        let mut cross = DVector::zeros(k);
        let mut y_second = 0.0;
        let mut local: Vec<(usize, f64)> = Vec::new();
        for (x, y, weight) in samples {
            local.clear();
            local.extend(
                x.entries()
                    .iter()
                    .map(|&(i, v)| (support.binary_search(&i).expect("index collected above"), v)),
            );
            for (a, &(pi, vi)) in local.iter().enumerate() {
                cross[pi] += weight * y * vi;
                for &(pj, vj) in &local[a..] {
                    let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
                    second[(r, c)] += weight * vi * vj;
                }
            }
            y_second += weight * y * y;
        }
        // mirror the upper triangle so A is exactly symmetric
        for c in 0..k {
            for r in (c + 1)..k {
                second[(r, c)] = second[(c, r)];
            }
        }
        Self {
            dim,
            support,
            second,
            cross,
            y_second,
        }
    }

    /// Dense moments on all `dim` coordinates. `A` must be square and
    /// symmetric, `b` of matching length, `c ≥ 0`.
    pub fn from_parts(second: DMatrix<f64>, cross: DVector<f64>, y_second: f64) -> Result<Self> {
        let dim = second.nrows();
        if dim == 0 {
            return Err(Error::invalid("moments must have dimension >= 1"));
        }
        Error::check_dim(dim, second.ncols())?;
        Error::check_dim(dim, cross.len())?;
        if y_second.is_nan() || y_second < 0.0 {
            return Err(Error::invalid("E[y²] must be nonnegative"));
        }
        for r in 0..dim {
            for c in 0..r {
                if (second[(r, c)] - second[(c, r)]).abs() > 1e-12 {
                    return Err(Error::invalid("second-moment matrix is not symmetric"));
                }
            }
        }
        let second = (&second + second.transpose()) * 0.5;
        Ok(Self {
            dim,
            support: (0..dim).collect(),
            second,
            cross,
            y_second,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates on which `A` and `b` are stored.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `A` restricted to [`Moments::support`].
    pub fn second_on_support(&self) -> &DMatrix<f64> {
        &self.second
    }

    pub fn cross_on_support(&self) -> &DVector<f64> {
        &self.cross
    }

    /// `c = E[y²]`.
    pub fn y_second(&self) -> f64 {
        self.y_second
    }

    pub fn second_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (a, &i) in self.support.iter().enumerate() {
            for (b, &j) in self.support.iter().enumerate() {
                out[(i, j)] = self.second[(a, b)];
            }
        }
        out
    }

    pub fn cross_dense(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (a, &i) in self.support.iter().enumerate() {
            out[i] = self.cross[a];
        }
        out
    }

    fn gather(&self, w: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.support.len(), self.support.iter().map(|&i| w[i]))
    }

    fn scatter(&self, local: &DVector<f64>) -> WeightVector {
        let mut out = vec![0.0; self.dim];
        for (a, &i) in self.support.iter().enumerate() {
            out[i] = local[a];
        }
        WeightVector::new(out).expect("finite solver output")
    }

    fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.second * v))
    }
}

pub fn moments_of(dist: &FiniteDistribution) -> Moments {
    Moments::from_weighted(dist.dim(), dist.atoms().iter().map(|a| (&a.x, a.y, a.p)))
}

/// `R(w) = wᵀAw − 2<b,w> + c`.
///
/// Nonnegative up to roundoff when the moments come from a distribution.
pub fn risk(w: &WeightVector, mom: &Moments) -> Result<f64> {
    Error::check_dim(mom.dim, w.dim())?;
    let v = mom.gather(w.coords());
    Ok(mom.quad_form(&v) - 2.0 * mom.cross.dot(&v) + mom.y_second)
}

/// `E[(<w,x> − <w*,x>)²] = (w − w*)ᵀ A (w − w*)`.
pub fn predictive_distance(w: &WeightVector, wstar: &WeightVector, mom: &Moments) -> Result<f64> {
    Error::check_dim(mom.dim, w.dim())?;
    Error::check_dim(mom.dim, wstar.dim())?;
    let d = mom.gather(w.coords()) - mom.gather(wstar.coords());
    Ok(mom.quad_form(&d))
}

/// Eigen-decomposition of `A`, with a shortcut for diagonal matrices (the
/// basis-vector constructions always produce one).
struct Spectrum {
    values: Vec<f64>,
    vectors: Option<DMatrix<f64>>,
}

impl Spectrum {
    fn of(a: &DMatrix<f64>) -> Self {
        let k = a.nrows();
        let diagonal = (0..k).all(|c| (0..k).all(|r| r == c || a[(r, c)] == 0.0));
        if diagonal {
            Self {
                values: a.diagonal().iter().copied().collect(),
                vectors: None,
            }
        } else {
            let eig = SymmetricEigen::new(a.clone());
            Self {
                values: eig.eigenvalues.iter().copied().collect(),
                vectors: Some(eig.eigenvectors),
            }
        }
    }

    fn to_eigenbasis(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.vectors {
            Some(q) => q.tr_mul(v),
            None => v.clone(),
        }
    }

    fn out_of_eigenbasis(&self, v: DVector<f64>) -> DVector<f64> {
        match &self.vectors {
            Some(q) => q * v,
            None => v,
        }
    }
}

/// Minimiser of the risk over the closed ball `‖w‖ ≤ radius`.
///
/// `radius` may be `f64::INFINITY`. When the unconstrained problem has a
/// minimiser inside the ball the minimum-norm one is returned (pseudo-inverse
/// on singular `A`); otherwise the secular equation `‖(A + λI)⁻¹b‖ = radius`
/// is solved by bisection over `λ ∈ [0, ‖b‖/radius]`.
pub fn solve_constrained_optimum(mom: &Moments, radius: f64) -> Result<WeightVector> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::invalid(format!("norm bound B must be positive, got {radius}")));
    }
    let k = mom.support.len();
    if k == 0 {
        return Ok(WeightVector::zeros(mom.dim));
    }

    let spec = Spectrum::of(&mom.second);
    let beta = spec.to_eigenbasis(&mom.cross);
    let lambda_max = spec.values.iter().copied().fold(0.0f64, f64::max);
    let rank_tol = 1e-12 * lambda_max.max(f64::MIN_POSITIVE);
    let range_tol = 1e-9 * mom.cross.norm().max(1.0);

    // Minimum-norm stationary point, if b lies in the range of A.
    let mut in_range = true;
    let mut pinv = DVector::zeros(k);
    for (i, (&lam, &bi)) in spec.values.iter().zip(beta.iter()).enumerate() {
        if lam > rank_tol {
            pinv[i] = bi / lam;
        } else if bi.abs() > range_tol {
            in_range = false;
        }
    }
    if in_range && pinv.norm() <= radius {
        return Ok(mom.scatter(&spec.out_of_eigenbasis(pinv)));
    }
    if radius.is_infinite() {
        return Err(Error::invalid(
            "risk is unbounded below: E[yx] is outside the range of E[xxᵀ]",
        ));
    }

    let shifted_norm = |lam: f64| -> f64 {
        spec.values
            .iter()
            .zip(beta.iter())
            .map(|(&ev, &bi)| {
                let denom = ev.max(0.0) + lam;
                if denom > 0.0 {
                    (bi / denom).powi(2)
                } else if bi == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .sum::<f64>()
            .sqrt()
    };

    let mut lo = 0.0;
    let mut hi = mom.cross.norm() / radius;
    for _ in 0..300 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if shifted_norm(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // hi is always on the feasible side of the root
    let local = DVector::from_iterator(
        k,
        spec.values.iter().zip(beta.iter()).map(|(&ev, &bi)| {
            let denom = ev.max(0.0) + hi;
            if denom > 0.0 {
                bi / denom
            } else {
                0.0
            }
        }),
    );
    let mut w = spec.out_of_eigenbasis(local);
    let n = w.norm();
    if n > radius {
        w *= radius / n;
    }
    Ok(mom.scatter(&w))
}

/// `R(w) − R(w*)` for a known optimum `w*`, with the roundoff clipping rule.
pub fn excess_given_optimum(w: &WeightVector, wstar: &WeightVector, mom: &Moments) -> Result<f64> {
    let ex = risk(w, mom)? - risk(wstar, mom)?;
    clip_excess(ex)
}

pub(crate) fn clip_excess(ex: f64) -> Result<f64> {
    if ex >= 0.0 {
        Ok(ex)
    } else if ex >= -EXCESS_CLIP {
        Ok(0.0)
    } else {
        Err(Error::Inconsistent(format!(
            "excess risk {ex:e} is negative beyond roundoff"
        )))
    }
}

/// `R(w) − min_{‖v‖ ≤ radius} R(v)` for `w` in the ball.
///
/// Predictors outside a finite ball can beat the in-class optimum, so they
/// are rejected rather than reported with a negative excess.
pub fn excess_risk(w: &WeightVector, mom: &Moments, radius: f64) -> Result<f64> {
    Error::check_dim(mom.dim, w.dim())?;
    if w.norm() > radius * (1.0 + BALL_TOL) {
        return Err(Error::invalid(format!(
            "‖w‖ = {} lies outside the ball of radius {radius}",
            w.norm()
        )));
    }
    let wstar = solve_constrained_optimum(mom, radius)?;
    excess_given_optimum(w, &wstar, mom)
}
