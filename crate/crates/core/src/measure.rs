//! Weighted point clouds standing in for Radon measures on ℝᵈ.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::index::{sq_dist, BallIndex};
use crate::numeric::exact_sum;

/// A finite weighted point cloud with a spatial index for closed-ball
/// mass queries. Immutable after construction.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    dim: usize,
    intrinsic_dim: usize,
    resolution: f64,
    coords: Vec<f64>,
    weights: Vec<f64>,
    total_mass: f64,
    index: Arc<BallIndex>,
}

/// Region used by [`DiscreteMeasure::restrict`]. Both variants are closed.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Box { min: Vec<f64>, max: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl DiscreteMeasure {
    /// Builds a measure from row-major coordinates (`weights.len() * d`
    /// values).
    pub fn new(coords: Vec<f64>, weights: Vec<f64>, n: usize, d: usize, h: f64) -> Result<Self> {
        if d == 0 || n == 0 || n > d {
            return Err(Error::DimensionOrder { n, d });
        }
        if coords.len() != weights.len() * d {
            return Err(Error::LengthMismatch {
                points: coords.len(),
                weights: weights.len(),
                dim: d,
            });
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::NegativeWeight { index, value });
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::validation(format!("resolution h = {h} must be positive")));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NanCoordinate { index: pos / d });
        }
        let total_mass = exact_sum(weights.iter().copied());
        let index = Arc::new(BallIndex::build(&coords, &weights, d));
        Ok(Self {
            dim: d,
            intrinsic_dim: n,
            resolution: h,
            coords,
            weights,
            total_mass,
            index,
        })
    }

    /// Builds a measure from a list of points.
    pub fn from_points(points: &[Vec<f64>], weights: Vec<f64>, n: usize, d: usize, h: f64) -> Result<Self> {
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let coords = points.iter().flatten().copied().collect();
        Self::new(coords, weights, n, d, h)
    }

    pub fn zero(n: usize, d: usize, h: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), n, d, h)
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn index(&self) -> &BallIndex {
        &self.index
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NanCoordinate { index: 0 });
        }
        Ok(())
    }

    /// μ(B(x, r)) for the closed Euclidean ball.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> Result<f64> {
        self.check_point(x)?;
        if !(r >= 0.0) || r.is_infinite() {
            return Err(Error::InvalidRadius(r));
        }
        Ok(self.index.ball_mass(x, r))
    }

    /// Ball mass by a linear scan, summed exactly. Reference path for the
    /// index.
    pub fn ball_mass_brute(&self, x: &[f64], r: f64) -> Result<f64> {
        self.check_point(x)?;
        if !(r >= 0.0) || r.is_infinite() {
            return Err(Error::InvalidRadius(r));
        }
        let r2 = r * r;
        Ok(exact_sum(
            self.points()
                .zip(&self.weights)
                .filter(|(p, _)| sq_dist(p, x) <= r2)
                .map(|(_, w)| *w),
        ))
    }

    /// Mass of the closed axis-aligned box.
    pub fn box_mass(&self, min: &[f64], max: &[f64]) -> Result<f64> {
        self.check_point(min)?;
        self.check_point(max)?;
        Ok(self.index.box_mass(min, max))
    }

    /// Restriction to a closed region; weights and resolution are kept.
    pub fn restrict(&self, region: &Region) -> Result<Self> {
        let ids = match region {
            Region::Box { min, max } => {
                self.check_point(min)?;
                self.check_point(max)?;
                self.index.box_ids(min, max)
            }
            Region::Ball { center, radius } => {
                self.check_point(center)?;
                if !(*radius >= 0.0) {
                    return Err(Error::InvalidRadius(*radius));
                }
                self.index.ball_ids(center, *radius)
            }
        };
        self.select(&ids)
    }

    /// Sub-measure made of the given point ids, in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(ids.len() * self.dim);
        let mut weights = Vec::with_capacity(ids.len());
        for &i in ids {
            coords.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        Self::new(coords, weights, self.intrinsic_dim, self.dim, self.resolution)
    }

    /// Same points with every weight multiplied by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::validation(format!("scale factor {c} must be finite and >= 0")));
        }
        Self::new(
            self.coords.clone(),
            self.weights.iter().map(|w| w * c).collect(),
            self.intrinsic_dim,
            self.dim,
            self.resolution,
        )
    }

    /// Image under `y -> f(y)` with the same weights.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>, h: f64) -> Result<Self> {
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.points() {
            let q = f(p);
            if q.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: q.len(),
                });
            }
            coords.extend(q);
        }
        Self::new(coords, self.weights.clone(), self.intrinsic_dim, self.dim, h)
    }

    /// Axis-aligned bounding box of the support, or `None` when empty.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.points() {
            for a in 0..self.dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }

    /// Diameter of the support. Exact for up to 4096 points; above that
    /// the diagonal of the bounding box, which bounds it from above by at
    /// most a factor √d.
    pub fn diameter(&self) -> f64 {
        if self.len() <= 1 {
            return 0.0;
        }
        if self.len() <= 4096 {
            let mut best = 0.0f64;
            for i in 0..self.len() {
                for j in i + 1..self.len() {
                    best = best.max(sq_dist(self.point(i), self.point(j)));
                }
            }
            return best.sqrt();
        }
        let (lo, hi) = self.bounding_box().expect("nonempty");
        sq_dist(&lo, &hi).sqrt()
    }

    /// Ids of support points located exactly at `x`.
    pub fn atoms_at(&self, x: &[f64]) -> Vec<usize> {
        self.index.ball_ids(x, 0.0)
    }
}

/// A real measure stored as two positive parts. Parts are never netted
/// against each other.
#[derive(Debug, Clone)]
pub struct SignedMeasure {
    pub pos: DiscreteMeasure,
    pub neg: DiscreteMeasure,
}

impl SignedMeasure {
    pub fn new(pos: DiscreteMeasure, neg: DiscreteMeasure) -> Result<Self> {
        if pos.ambient_dim() != neg.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: pos.ambient_dim(),
                got: neg.ambient_dim(),
            });
        }
        Ok(Self { pos, neg })
    }

    /// Splits signed atoms by sign. Zero masses are dropped.
    pub fn from_atoms(points: &[Vec<f64>], masses: &[f64], n: usize, d: usize, h: f64) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::LengthMismatch {
                points: points.len() * d,
                weights: masses.len(),
                dim: d,
            });
        }
        if let Some(index) = masses.iter().position(|m| !m.is_finite()) {
            return Err(Error::NegativeWeight {
                index,
                value: masses[index],
            });
        }
        let mut pos = (Vec::new(), Vec::new());
        let mut neg = (Vec::new(), Vec::new());
        for (p, &m) in points.iter().zip(masses) {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            let part = if m > 0.0 {
                &mut pos
            } else if m < 0.0 {
                &mut neg
            } else {
                continue;
            };
            part.0.extend_from_slice(p);
            part.1.push(m.abs());
        }
        Self::new(
            DiscreteMeasure::new(pos.0, pos.1, n, d, h)?,
            DiscreteMeasure::new(neg.0, neg.1, n, d, h)?,
        )
    }

    pub fn from_positive(mu: DiscreteMeasure) -> Result<Self> {
        let zero = DiscreteMeasure::zero(mu.intrinsic_dim(), mu.ambient_dim(), mu.resolution())?;
        Self::new(mu, zero)
    }

    pub fn ambient_dim(&self) -> usize {
        self.pos.ambient_dim()
    }

    /// ‖ν‖ = pos.total_mass + neg.total_mass.
    pub fn total_variation(&self) -> f64 {
        self.pos.total_mass() + self.neg.total_mass()
    }

    /// ν(B(x, r)) = pos(B(x, r)) − neg(B(x, r)).
    pub fn signed_ball_mass(&self, x: &[f64], r: f64) -> Result<f64> {
        Ok(self.pos.ball_mass(x, r)? - self.neg.ball_mass(x, r)?)
    }

    /// |ν|(B(x, r)).
    pub fn variation_ball_mass(&self, x: &[f64], r: f64) -> Result<f64> {
        Ok(self.pos.ball_mass(x, r)? + self.neg.ball_mass(x, r)?)
    }

    /// c·ν; a negative factor swaps the parts.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let (p, n) = if c >= 0.0 {
            (self.pos.scaled(c)?, self.neg.scaled(c)?)
        } else {
            (self.neg.scaled(-c)?, self.pos.scaled(-c)?)
        };
        Self::new(p, n)
    }

    /// Signed atoms as (point, mass) pairs: positive part first.
    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.pos
            .points()
            .zip(self.pos.weights().iter().copied())
            .chain(self.neg.points().zip(self.neg.weights().iter().map(|w| -w)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(x: &[f64], w: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_points(&[x.to_vec()], vec![w], 1, x.len(), 1.0).unwrap()
    }

    #[test]
    fn single_atom_and_zero_measure() {
        let m = atom(&[0.0, 0.0], 1.0);
        assert_eq!(m.total_mass(), 1.0);
        let z = DiscreteMeasure::zero(1, 2, 1.0).unwrap();
        assert_eq!(z.total_mass(), 0.0);
        assert_eq!(z.ball_mass(&[0.0, 0.0], 5.0).unwrap(), 0.0);
    }

    #[test]
    fn grid_segment_total_mass() {
        let n = 10_000;
        let pts: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, 0.0]).collect();
        let m = DiscreteMeasure::from_points(&pts, vec![1e-4; n], 1, 2, 1e-4).unwrap();
        assert!((m.total_mass() - 1.0).abs() <= 1e4 * f64::EPSILON);
    }

    #[test]
    fn validation_errors_are_distinct() {
        let e = DiscreteMeasure::new(vec![0.0, 0.0, 1.0], vec![1.0], 1, 2, 1.0).unwrap_err();
        assert!(matches!(e, Error::LengthMismatch { .. }));
        let e = DiscreteMeasure::new(vec![0.0, 0.0], vec![-1.0], 1, 2, 1.0).unwrap_err();
        assert!(matches!(e, Error::NegativeWeight { index: 0, .. }));
        let e = DiscreteMeasure::new(vec![0.0, 0.0], vec![1.0], 3, 2, 1.0).unwrap_err();
        assert!(matches!(e, Error::DimensionOrder { n: 3, d: 2 }));
        let e = DiscreteMeasure::new(vec![0.0, 0.0], vec![1.0], 1, 2, 0.0).unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
        let e = DiscreteMeasure::new(vec![0.0, f64::NAN], vec![1.0], 1, 2, 1.0).unwrap_err();
        assert!(matches!(e, Error::NanCoordinate { index: 0 }));
    }

    #[test]
    fn closed_ball_convention() {
        let m = atom(&[0.0, 0.0], 1.0);
        assert_eq!(m.ball_mass(&[0.0, 0.0], 0.0).unwrap(), 1.0);
        let m = atom(&[1.0, 0.0], 1.0);
        assert_eq!(m.ball_mass(&[0.0, 0.0], 0.5).unwrap(), 0.0);
        assert_eq!(m.ball_mass(&[0.0, 0.0], 1.0).unwrap(), 1.0);
    }

    #[test]
    fn ball_mass_errors() {
        let m = atom(&[0.0, 0.0], 1.0);
        assert!(matches!(m.ball_mass(&[0.0, 0.0], -1.0), Err(Error::InvalidRadius(_))));
        assert!(matches!(m.ball_mass(&[f64::NAN, 0.0], 1.0), Err(Error::NanCoordinate { .. })));
        assert!(matches!(m.ball_mass(&[0.0], 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn total_variation_examples() {
        let zero = DiscreteMeasure::zero(1, 2, 1.0).unwrap();
        let nu = SignedMeasure::new(atom(&[0.0, 0.0], 1.0), zero).unwrap();
        assert_eq!(nu.total_variation(), 1.0);
        let nu = SignedMeasure::new(atom(&[0.0, 0.0], 1.0), atom(&[1.0, 1.0], 1.0)).unwrap();
        assert_eq!(nu.total_variation(), 2.0);
    }

    #[test]
    fn total_variation_of_split_density() {
        // f(x_i) on ten unit atoms; ∫|f| dμ = Σ|f_i| = 3.5.
        let f = [0.5, -0.25, 0.75, -0.5, 0.0, 0.25, -0.25, 0.5, -0.25, 0.25];
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let nu = SignedMeasure::from_atoms(&pts, &f, 1, 2, 1.0).unwrap();
        let oracle: f64 = f.iter().map(|v: &f64| v.abs()).sum();
        assert_eq!(oracle, 3.5);
        assert_eq!(nu.total_variation(), 3.5);
    }

    #[test]
    fn signed_ball_mass_cancels_identical_parts() {
        let nu = SignedMeasure::new(atom(&[0.3, 0.1], 2.0), atom(&[0.3, 0.1], 2.0)).unwrap();
        for r in [0.0, 0.1, 1.0, 10.0] {
            assert_eq!(nu.signed_ball_mass(&[0.0, 0.0], r).unwrap(), 0.0);
            assert_eq!(nu.signed_ball_mass(&[0.3, 0.1], r).unwrap(), 0.0);
        }
        let zero = DiscreteMeasure::zero(1, 2, 1.0).unwrap();
        let nu = SignedMeasure::new(atom(&[0.3, 0.1], 2.0), zero).unwrap();
        assert_eq!(nu.signed_ball_mass(&[0.3, 0.0], 0.2).unwrap(), 2.0);
    }

    #[test]
    fn restrict_examples() {
        let pts: Vec<Vec<f64>> = (0..=100).map(|i| vec![i as f64 / 100.0, 0.0]).collect();
        let m = DiscreteMeasure::from_points(&pts, vec![0.01; 101], 1, 2, 0.01).unwrap();
        let all = m
            .restrict(&Region::Box {
                min: vec![-1.0, -1.0],
                max: vec![2.0, 1.0],
            })
            .unwrap();
        assert_eq!(all.total_mass(), m.total_mass());
        let none = m
            .restrict(&Region::Box {
                min: vec![5.0, 5.0],
                max: vec![6.0, 6.0],
            })
            .unwrap();
        assert_eq!(none.total_mass(), 0.0);
        let half = m
            .restrict(&Region::Box {
                min: vec![0.0, -1.0],
                max: vec![0.5, 1.0],
            })
            .unwrap();
        // Count oracle: points 0..=50 lie in [0, 0.5].
        let count = pts.iter().filter(|p| p[0] <= 0.5).count();
        assert_eq!(count, 51);
        assert_eq!(half.len(), count);
        assert!((half.total_mass() - 0.5).abs() <= 0.01 + 1e-12);
        assert_eq!(half.resolution(), 0.01);
        let ball = m
            .restrict(&Region::Ball {
                center: vec![0.5, 0.0],
                radius: 0.1,
            })
            .unwrap();
        assert_eq!(ball.len(), 21);
    }
}
