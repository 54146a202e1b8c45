//! Vector types shared by every module: dense predictors and sparse instances.
//!
//! Instances in the hard constructions are standard basis vectors living in
//! dimensions up to a few thousand, so a [`Point`] only stores its nonzero
//! coordinates. Predictors are dense since learners update them everywhere.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A linear predictor `w` together with its ambient dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    coords: Vec<f64>,
}

impl WeightVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("weight vector must have dimension >= 1"));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("weight coordinate {i} is not finite")));
        }
        Ok(Self { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "weight vector must have dimension >= 1");
        Self { coords: vec![0.0; dim] }
    }

    /// Convenience for one-dimensional predictors.
    pub fn scalar(w: f64) -> Self {
        Self::new(vec![w]).expect("finite scalar weight")
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    /// Radial projection onto the closed ball of radius `radius`.
    pub fn project_to_ball(mut self, radius: f64) -> Self {
        project_to_ball(&mut self.coords, radius);
        self
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn project_to_ball(v: &mut [f64], radius: f64) {
    let n = norm(v);
    if n > radius {
        let s = radius / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// A sparse instance vector: sorted `(index, value)` pairs with nonzero values.
///
/// Cloning is cheap, so sampled data sets share storage with the atom table
/// they were drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    entries: Arc<[(usize, f64)]>,
}

impl Point {
    pub fn from_dense(coords: &[f64]) -> Self {
        let entries: Vec<_> = coords.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
        Self {
            entries: entries.into(),
        }
    }

    /// Builds a point from arbitrary `(index, value)` pairs. Duplicate indices
    /// are summed and zeros dropped.
    pub fn from_entries(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Self { entries: merged.into() }
    }

    /// `scale * e_index`.
    pub fn basis(index: usize, scale: f64) -> Self {
        Self::from_entries(vec![(index, scale)])
    }

    pub fn zero() -> Self {
        Self {
            entries: Vec::new().into(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// One past the largest nonzero index (0 for the zero vector).
    pub fn min_dim(&self) -> usize {
        self.entries.last().map_or(0, |&(i, _)| i + 1)
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `<w, x>`; panics if `w` is shorter than [`Point::min_dim`].
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| w[i] * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in self.entries.iter() {
            out[i] = v;
        }
        out
    }

    /// Lexicographic comparison of the dense coordinate sequences.
    pub fn cmp_coords(&self, other: &Point) -> Ordering {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        loop {
            let (ia, va) = a.get(i).map_or((usize::MAX, 0.0), |&(k, v)| (k, v));
            let (ib, vb) = b.get(j).map_or((usize::MAX, 0.0), |&(k, v)| (k, v));
            if ia == usize::MAX && ib == usize::MAX {
                return Ordering::Equal;
            }
            // At the smaller index the other point has an implicit zero.
            let ord = match ia.cmp(&ib) {
                Ordering::Less => {
                    i += 1;
                    va.total_cmp(&0.0)
                }
                Ordering::Greater => {
                    j += 1;
                    0.0f64.total_cmp(&vb)
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    va.total_cmp(&vb)
                }
            };
            if ord != Ordering::Equal {
                return ord;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_dense_roundtrip() {
        let p = Point::from_dense(&[0.0, 0.5, 0.0, -0.25]);
        assert_eq!(p.entries(), &[(1, 0.5), (3, -0.25)]);
        assert_eq!(p.to_dense(5), vec![0.0, 0.5, 0.0, -0.25, 0.0]);
        assert_eq!(p.min_dim(), 4);
        assert_eq!(p.dot(&[1.0, 2.0, 3.0, 4.0]), 0.0);
    }

    #[test]
    fn entries_merge_and_drop_zeros() {
        let p = Point::from_entries(vec![(2, 1.0), (0, 0.5), (2, -1.0)]);
        assert_eq!(p.entries(), &[(0, 0.5)]);
    }

    #[test]
    fn coordinate_order_matches_dense_lexicographic() {
        let pts: [Vec<f64>; 5] = [
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            vec![-0.5, 0.0],
            vec![0.0, -1.0],
        ];
        for a in &pts {
            for b in &pts {
                let dense = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal);
                let sparse = Point::from_dense(a).cmp_coords(&Point::from_dense(b));
                assert_eq!(dense, sparse, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn projection_is_radial() {
        let w = WeightVector::new(vec![3.0, 4.0]).unwrap().project_to_ball(1.0);
        assert!((w.coords()[0] - 0.6).abs() < 1e-15);
        assert!((w.coords()[1] - 0.8).abs() < 1e-15);
        let inside = WeightVector::new(vec![0.1, 0.2]).unwrap().project_to_ball(1.0);
        assert_eq!(inside.coords(), &[0.1, 0.2]);
    }

    #[test]
    fn weight_vector_rejects_bad_input() {
        assert!(WeightVector::new(vec![]).is_err());
        assert!(WeightVector::new(vec![f64::NAN]).is_err());
    }
}
