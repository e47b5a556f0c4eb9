//! Blowups `T_{x,r}#μ` with `T_{x,r}(y) = (y − x)/r`, and two scores for
//! them: a β₂ flatness number and a uniformity deviation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::numeric::{ls_slope, median};

pub const DEFAULT_WINDOW: f64 = 5.0;

/// A blowup. The image measure keeps the raw weights of `μ`; every mass
/// query divides by `normalization`, the raw mass of the image unit ball,
/// so the unit ball has mass exactly 1.
#[derive(Debug, Clone)]
pub struct Blowup {
    pub x: Vec<f64>,
    pub r: f64,
    pub window: f64,
    pub normalization: f64,
    pub measure: DiscreteMeasure,
}

impl Blowup {
    /// Normalized mass of the closed ball `B(y, ρ)` in blowup coordinates.
    pub fn ball_mass(&self, y: &[f64], rho: f64) -> Result<f64> {
        Ok(self.measure.ball_mass(y, rho)? / self.normalization)
    }

    /// The image measure with weights divided by the normalization.
    pub fn normalized_measure(&self) -> Result<DiscreteMeasure> {
        self.measure.scaled(1.0 / self.normalization)
    }

    pub fn resolution(&self) -> f64 {
        self.measure.resolution()
    }
}

/// `T_{x,r}#μ` restricted to `B(0, window)`; resolution `h/r`.
pub fn blowup(mu: &DiscreteMeasure, x: &[f64], r: f64, window: f64) -> Result<Blowup> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidRadius(r));
    }
    if !(window.is_finite() && window >= 1.0) {
        return Err(Error::validation(format!("blowup window {window} must be at least 1")));
    }
    mu.check_point(x)?;
    // Slightly larger query, then the exact image-space test.
    let ids = mu.index().ball_ids(x, window * r * (1.0 + 1e-9));
    let d = mu.ambient_dim();
    let mut coords = Vec::with_capacity(ids.len() * d);
    let mut weights = Vec::with_capacity(ids.len());
    let w2 = window * window;
    let mut img = vec![0.0; d];
    for &i in &ids {
        for (a, (p, c)) in mu.point(i).iter().zip(x).enumerate() {
            img[a] = (p - c) / r;
        }
        if img.iter().map(|v| v * v).sum::<f64>() <= w2 {
            coords.extend_from_slice(&img);
            weights.push(mu.weight(i));
        }
    }
    let measure = DiscreteMeasure::new(coords, weights, mu.intrinsic_dim(), d, mu.resolution() / r)?;
    let normalization = measure.ball_mass(&vec![0.0; d], 1.0)?;
    if !(normalization > 0.0) {
        return Err(Error::validation(format!(
            "blowup at radius {r:e} has no mass in the unit ball"
        )));
    }
    Ok(Blowup {
        x: x.to_vec(),
        r,
        window,
        normalization,
        measure,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessScore {
    pub beta2: f64,
    /// Weighted barycentre of the unit-ball points.
    pub center: Vec<f64>,
    /// Orthonormal basis of the fitted plane, one vector per row.
    pub basis: Vec<Vec<f64>>,
}

/// β₂ over `B(0, 1)`: the `L²(ν)` distance to the best `n`-plane through
/// the barycentre, the plane spanned by the top `n` principal directions.
pub fn flatness_beta2(b: &Blowup, n: usize) -> Result<FlatnessScore> {
    let d = b.measure.ambient_dim();
    if n == 0 || n > d {
        return Err(Error::DimensionOrder { n, d });
    }
    let ids = b.measure.index().ball_ids(&vec![0.0; d], 1.0);
    let pts: Vec<&[f64]> = ids.iter().map(|&i| b.measure.point(i)).collect();
    let mut distinct: Vec<&[f64]> = Vec::new();
    for p in &pts {
        if distinct.len() > n {
            break;
        }
        if !distinct.iter().any(|q| q == p) {
            distinct.push(p);
        }
    }
    if distinct.len() < n {
        return Err(Error::validation(format!(
            "{} distinct points cannot determine an {n}-plane",
            distinct.len()
        )));
    }
    let w: Vec<f64> = ids.iter().map(|&i| b.measure.weight(i) / b.normalization).collect();
    let total: f64 = w.iter().sum();
    let mut center = DVector::<f64>::zeros(d);
    for (p, wi) in pts.iter().zip(&w) {
        center += DVector::from_column_slice(p) * *wi;
    }
    center /= total;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (p, wi) in pts.iter().zip(&w) {
        let v = DVector::from_column_slice(p) - &center;
        cov += &v * v.transpose() * *wi;
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let normals: Vec<DVector<f64>> = order[n..].iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    let mut acc = 0.0;
    for (p, wi) in pts.iter().zip(&w) {
        let v = DVector::from_column_slice(p) - &center;
        let dist2: f64 = normals.iter().map(|e| e.dot(&v).powi(2)).sum();
        acc += wi * dist2;
    }
    Ok(FlatnessScore {
        beta2: acc.sqrt(),
        center: center.iter().copied().collect(),
        basis: order[..n]
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityScore {
    pub c_fit: f64,
    pub max_rel_dev: f64,
    pub probes: usize,
}

/// Probes `ν(B(y, ρ))/ρⁿ` at `y` drawn from the support in `B(0, 1)` and
/// `ρ` log-uniform in `[10·h, 1]`. `c_fit` is the median value.
pub fn uniformity_score(b: &Blowup, n: usize, probe_count: usize, seed: u64) -> Result<UniformityScore> {
    if probe_count < 3 {
        return Err(Error::validation(format!("need at least 3 probes, got {probe_count}")));
    }
    let d = b.measure.ambient_dim();
    let support = b.measure.index().ball_ids(&vec![0.0; d], 1.0);
    if support.is_empty() {
        return Err(Error::validation("no support points in the unit ball"));
    }
    let lo = 10.0 * b.resolution();
    if !(lo < 1.0) {
        return Err(Error::InsufficientResolution {
            h: b.resolution(),
            r_min: lo,
            r_max: 1.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vals = Vec::with_capacity(probe_count);
    for _ in 0..probe_count {
        let y = b.measure.point(support[rng.gen_range(0..support.len())]).to_vec();
        let rho = rng.gen_range(lo.ln()..=0.0f64).exp();
        vals.push(b.ball_mass(&y, rho)? / rho.powi(n as i32));
    }
    let c_fit = median(&vals).expect("nonempty");
    let max_rel_dev = vals.iter().map(|v| (v - c_fit).abs() / c_fit).fold(0.0, f64::max);
    Ok(UniformityScore {
        c_fit,
        max_rel_dev,
        probes: probe_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub r: f64,
    pub beta2: f64,
    pub c_fit: f64,
    pub max_rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupTrace {
    pub x: Vec<f64>,
    pub rows: Vec<TraceRow>,
    /// Least-squares slope of `log β₂` against `log r`; `None` when some
    /// β₂ is at the floor (≤ 1e-12) or fewer than two radii were given.
    pub log_slope: Option<f64>,
}

/// Flatness and uniformity along a decreasing sequence of radii.
pub fn blowup_trace(
    mu: &DiscreteMeasure,
    x: &[f64],
    radii: &[f64],
    window: f64,
    probes: usize,
    seed: u64,
) -> Result<BlowupTrace> {
    let n = mu.intrinsic_dim();
    let mut rows = Vec::with_capacity(radii.len());
    for (k, &r) in radii.iter().enumerate() {
        let b = blowup(mu, x, r, window)?;
        let flat = flatness_beta2(&b, n)?;
        let uni = uniformity_score(&b, n, probes, seed.wrapping_add(k as u64))?;
        rows.push(TraceRow {
            r,
            beta2: flat.beta2,
            c_fit: uni.c_fit,
            max_rel_dev: uni.max_rel_dev,
        });
    }
    let log_slope = if rows.len() >= 2 && rows.iter().all(|t| t.beta2 > 1e-12) {
        let xs: Vec<f64> = rows.iter().map(|t| t.r.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|t| t.beta2.ln()).collect();
        ls_slope(&xs, &ys)
    } else {
        None
    };
    Ok(BlowupTrace {
        x: x.to_vec(),
        rows,
        log_slope,
    })
}

/// Largest distance from a point of `a` to its nearest point in `b`.
pub fn hausdorff_one_sided(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    a.points()
        .map(|p| b.index().nearest(p).map_or(f64::INFINITY, |(_, d2)| d2.sqrt()))
        .fold(0.0, f64::max)
}
