//! Density ratios, the difference `Δ_μ(x, r) = θ(x, r) − θ(x, 2r)`, the
//! square function, its Gaussian-smoothed counterpart and the operator `T`
//! on signed measures.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::index::sq_dist;
use crate::measure::{DiscreteMeasure, SignedMeasure};
use crate::numeric::{gamma_half_plus_one, gaussian_moment_tail, ExactSum};

/// Log-uniform radii `r_k = r_max·2^{−k/m}`, `k = 0..=K`, with quadrature
/// weights for `∫ … dr/r`.
///
/// Radii are built as `base_j·2^{−q}` with `k = q·m + j`, so `2·r_k` equals
/// `r_{k−m}` bit for bit. The weight of `r_k` is `ln2/m` for `k ≥ 1` and
/// zero for `r_0` (left-point rule read from the small end of each step),
/// so the weights sum to `ln(r_max/r_min)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleGrid {
    pub r_max: f64,
    pub r_min: f64,
    pub m: usize,
    pub octaves: usize,
    pub requested_octaves: usize,
    pub radii: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl ScaleGrid {
    /// `octaves·m + 1` radii from `r_max` down to `r_max·2^{−octaves}`.
    pub fn geometric(r_max: f64, octaves: usize, m: usize) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidRadius(r_max));
        }
        if m == 0 || octaves == 0 {
            return Err(Error::validation(format!(
                "scale grid needs m >= 1 and at least one octave (m = {m}, octaves = {octaves})"
            )));
        }
        let bases: Vec<f64> = (0..m).map(|j| r_max * 2f64.powf(-(j as f64) / m as f64)).collect();
        let count = octaves * m + 1;
        let radii: Vec<f64> = (0..count).map(|k| radius_at(&bases, k as i64)).collect();
        let w = std::f64::consts::LN_2 / m as f64;
        let mut log_weights = vec![w; count];
        log_weights[0] = 0.0;
        Ok(Self {
            r_max,
            r_min: radii[count - 1],
            m,
            octaves,
            requested_octaves: octaves,
            radii,
            log_weights,
        })
    }

    /// Grid from `r_max` down as far as the floor allows, at most `octaves`
    /// whole octaves.
    pub fn clamped(r_max: f64, r_min_floor: f64, octaves: usize, m: usize, h: f64) -> Result<Self> {
        if !(r_min_floor < r_max) {
            return Err(Error::InsufficientResolution {
                h,
                r_min: r_min_floor,
                r_max,
            });
        }
        let fit = (r_max / r_min_floor).log2().floor();
        let mut eff = octaves.min(if fit >= 0.0 { fit as usize } else { 0 });
        // Guard the floor against rounding in log2.
        while eff > 0 && r_max * 2f64.powi(-(eff as i32)) < r_min_floor {
            eff -= 1;
        }
        if eff == 0 {
            return Err(Error::InsufficientResolution {
                h,
                r_min: r_min_floor,
                r_max,
            });
        }
        let mut g = Self::geometric(r_max, eff, m)?;
        g.requested_octaves = octaves;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// Octave of node `k >= 1`: nodes `(o·m, (o+1)·m]` form octave `o`.
    pub fn octave_of(&self, k: usize) -> Option<usize> {
        (k >= 1).then(|| (k - 1) / self.m)
    }

    /// Indices of the finest octave.
    pub fn finest_octave(&self) -> std::ops::Range<usize> {
        let n = self.radii.len();
        n.saturating_sub(self.m).max(1)..n
    }

    /// `r_k` for `k` in `-m..0` as well, i.e. the doubled radii of the top
    /// octave.
    fn extended_radius(&self, k: i64) -> f64 {
        let m = self.m as i64;
        let q = k.div_euclid(m);
        let j = k.rem_euclid(m) as usize;
        self.radii[j] * 2f64.powi(-q as i32)
    }

    pub fn total_log_weight(&self) -> f64 {
        self.log_weights.iter().sum()
    }
}

fn radius_at(bases: &[f64], k: i64) -> f64 {
    let m = bases.len() as i64;
    bases[k.rem_euclid(m) as usize] * 2f64.powi(-(k.div_euclid(m)) as i32)
}

/// `r_max = diam/4`, `r_min = max(10·safety·h, r_max·2^{−octaves})`.
pub fn make_scale_grid(mu: &DiscreteMeasure, octaves: usize, m: usize, safety: f64) -> Result<ScaleGrid> {
    if !(safety >= 1.0) {
        return Err(Error::validation(format!("safety factor {safety} must be >= 1")));
    }
    let r_max = mu.diameter() / 4.0;
    let floor = 10.0 * safety * mu.resolution();
    if !(r_max > 0.0) {
        return Err(Error::InsufficientResolution {
            h: mu.resolution(),
            r_min: floor,
            r_max,
        });
    }
    ScaleGrid::clamped(r_max, floor, octaves, m, mu.resolution())
}

fn check_radius(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidRadius(r))
    }
}

/// `θ(x, r) = μ(B(x, r))/rⁿ`.
pub fn density_ratio(mu: &DiscreteMeasure, x: &[f64], r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(mu.ball_mass(x, r)? / r.powi(mu.intrinsic_dim() as i32))
}

/// `Δ_μ(x, r) = θ(x, r) − θ(x, 2r)`.
pub fn delta(mu: &DiscreteMeasure, x: &[f64], r: f64) -> Result<f64> {
    Ok(density_ratio(mu, x, r)? - density_ratio(mu, x, 2.0 * r)?)
}

/// `ν(B(x, r))/rⁿ − ν(B(x, 2r))/(2r)ⁿ` for a signed measure.
pub fn signed_delta(nu: &SignedMeasure, x: &[f64], r: f64, n: usize) -> Result<f64> {
    check_radius(r)?;
    let r2 = 2.0 * r;
    Ok(nu.signed_ball_mass(x, r)? / r.powi(n as i32) - nu.signed_ball_mass(x, r2)? / r2.powi(n as i32))
}

/// Masses at `r_k` for `k = −m..=K`, indexed by `k + m`.
fn grid_masses(mass: impl Fn(f64) -> Result<f64>, grid: &ScaleGrid) -> Result<Vec<f64>> {
    let m = grid.m as i64;
    (-m..grid.len() as i64)
        .map(|k| mass(grid.extended_radius(k)))
        .collect()
}

/// `(θ(r_k), Δ(r_k))` for every grid node.
fn grid_deltas(mass: impl Fn(f64) -> Result<f64>, grid: &ScaleGrid, n: usize) -> Result<Vec<(f64, f64)>> {
    let masses = grid_masses(mass, grid)?;
    let m = grid.m;
    Ok(grid
        .radii
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let theta = masses[k + m] / r.powi(n as i32);
            let theta2 = masses[k] / (2.0 * r).powi(n as i32);
            (theta, theta - theta2)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileEntry {
    pub r: f64,
    pub theta: f64,
    pub delta: f64,
    pub smoothed_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityProfile {
    pub x: Vec<f64>,
    pub entries: Vec<ProfileEntry>,
    /// Minimum of θ over the finest octave.
    pub theta_star_lower: f64,
    /// Maximum of θ over all scales.
    pub theta_star_upper: f64,
}

/// θ and Δ at every grid radius, optionally with `Δ_{μ,φ}`.
pub fn density_profile(mu: &DiscreteMeasure, x: &[f64], grid: &ScaleGrid, smoothed: bool) -> Result<DensityProfile> {
    mu.check_point(x)?;
    let n = mu.intrinsic_dim();
    let rows = grid_deltas(|r| mu.ball_mass(x, r), grid, n)?;
    let mut entries = Vec::with_capacity(rows.len());
    for (&r, &(theta, delta)) in grid.radii.iter().zip(&rows) {
        let smoothed_delta = if smoothed {
            Some(smoothed_delta(mu, x, r)?)
        } else {
            None
        };
        entries.push(ProfileEntry {
            r,
            theta,
            delta,
            smoothed_delta,
        });
    }
    let theta_star_lower = entries[grid.finest_octave()]
        .iter()
        .map(|e| e.theta)
        .fold(f64::INFINITY, f64::min);
    let theta_star_upper = entries.iter().map(|e| e.theta).fold(f64::NEG_INFINITY, f64::max);
    Ok(DensityProfile {
        x: x.to_vec(),
        entries,
        theta_star_lower,
        theta_star_upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareFunctionResult {
    pub x: Vec<f64>,
    pub s2: f64,
    /// Running value of `s2` after each octave, from the largest scale down.
    pub s2_partial: Vec<f64>,
    pub smoothed_s2: Option<f64>,
}

impl SquareFunctionResult {
    /// Average growth of `s2_partial` per octave over the last `window`
    /// octaves (all octaves if fewer are available).
    pub fn slope(&self, window: usize) -> f64 {
        divergence_slope(&self.s2_partial, window)
    }
}

pub fn divergence_slope(partial: &[f64], window: usize) -> f64 {
    let len = partial.len();
    if len == 0 || window == 0 {
        return 0.0;
    }
    let w = window.min(len);
    let before = if len > w { partial[len - 1 - w] } else { 0.0 };
    (partial[len - 1] - before) / w as f64
}

pub(crate) fn accumulate_s2(deltas: impl Iterator<Item = f64>, grid: &ScaleGrid) -> (f64, Vec<f64>) {
    let mut s2 = 0.0;
    let mut partial = Vec::with_capacity(grid.octaves);
    for (k, dlt) in deltas.enumerate() {
        s2 += dlt * dlt * grid.log_weights[k];
        if k >= 1 && k % grid.m == 0 {
            partial.push(s2);
        }
    }
    (s2, partial)
}

/// `s2 = Σ_k Δ(x, r_k)²·w_k`.
pub fn square_function(mu: &DiscreteMeasure, x: &[f64], grid: &ScaleGrid) -> Result<SquareFunctionResult> {
    mu.check_point(x)?;
    let rows = grid_deltas(|r| mu.ball_mass(x, r), grid, mu.intrinsic_dim())?;
    let (s2, s2_partial) = accumulate_s2(rows.iter().map(|p| p.1), grid);
    Ok(SquareFunctionResult {
        x: x.to_vec(),
        s2,
        s2_partial,
        smoothed_s2: None,
    })
}

/// Square function of an already computed profile; the smoothed sum is
/// filled in when the profile carries the smoothed column.
pub fn square_function_from_profile(profile: &DensityProfile, grid: &ScaleGrid) -> Result<SquareFunctionResult> {
    if profile.entries.len() != grid.len() || profile.entries.iter().zip(&grid.radii).any(|(e, r)| e.r != *r) {
        return Err(Error::validation("profile was computed on a different scale grid"));
    }
    let (s2, s2_partial) = accumulate_s2(profile.entries.iter().map(|e| e.delta), grid);
    let smoothed_s2 = profile
        .entries
        .iter()
        .zip(&grid.log_weights)
        .map(|(e, &w)| e.smoothed_delta.map(|v| if w > 0.0 { v * v * w } else { 0.0 }))
        .sum::<Option<f64>>();
    Ok(SquareFunctionResult {
        x: profile.x.clone(),
        s2,
        s2_partial,
        smoothed_s2,
    })
}

/// Square function plus the same sum for `Δ_{μ,φ}`.
pub fn square_function_smoothed(mu: &DiscreteMeasure, x: &[f64], grid: &ScaleGrid) -> Result<SquareFunctionResult> {
    let mut res = square_function(mu, x, grid)?;
    let mut acc = 0.0;
    for (&r, &w) in grid.radii.iter().zip(&grid.log_weights) {
        if w > 0.0 {
            let v = smoothed_delta(mu, x, r)?;
            acc += v * v * w;
        }
    }
    res.smoothed_s2 = Some(acc);
    Ok(res)
}

/// Square functions at many points, in parallel, in input order.
pub fn square_functions(mu: &DiscreteMeasure, xs: &[Vec<f64>], grid: &ScaleGrid) -> Result<Vec<SquareFunctionResult>> {
    xs.par_iter().map(|x| square_function(mu, x, grid)).collect()
}

// e^{-t} is exactly 0.0 in f64 for t > 745.2; beyond this both Gaussian
// terms of a point vanish.
const GAUSS_CUTOFF: f64 = 750.0;

/// `Δ_{μ,φ}(x, r) = Σ w_i [r^{−n}e^{−|x−x_i|²/r²} − (2r)^{−n}e^{−|x−x_i|²/4r²}]`.
///
/// Points are skipped only where both terms underflow to zero, so the
/// value equals the full sum.
pub fn smoothed_delta(mu: &DiscreteMeasure, x: &[f64], r: f64) -> Result<f64> {
    check_radius(r)?;
    mu.check_point(x)?;
    let n = mu.intrinsic_dim() as i32;
    let (a, b) = (r.powi(-n), (2.0 * r).powi(-n));
    let (ir2, i4r2) = (1.0 / (r * r), 1.0 / (4.0 * r * r));
    let cutoff = 2.0 * r * GAUSS_CUTOFF.sqrt();
    let mut acc = ExactSum::new();
    mu.index().visit_near(x, cutoff, |p, w| {
        let d2 = sq_dist(p, x);
        acc.add(w * a * (-d2 * ir2).exp());
        acc.add(-(w * b * (-d2 * i4r2).exp()));
    });
    Ok(acc.value())
}

/// `ψ̃_r(s) = 2s^{n+1}/r^{n+2}·e^{−s²/r²}`.
pub fn kernel_psi(s: f64, r: f64, n: usize) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::validation(format!("kernel argument s = {s} must be positive")));
    }
    check_radius(r)?;
    let t = s / r;
    Ok(2.0 * t.powi(n as i32 + 1) / r * (-t * t).exp())
}

/// Minimum number of log nodes per octave accepted by
/// [`smoothed_via_kernel`].
pub const MIN_NODES_PER_OCTAVE: usize = 8;

/// `∫ Δ_μ(x, s) ψ̃_r(s) ds` by the trapezoid rule in `log s` on
/// `[r/100, 100r]` with `per_octave` nodes per octave.
pub fn smoothed_via_kernel(mu: &DiscreteMeasure, x: &[f64], r: f64, per_octave: usize) -> Result<f64> {
    check_radius(r)?;
    mu.check_point(x)?;
    if per_octave < MIN_NODES_PER_OCTAVE {
        return Err(Error::validation(format!(
            "kernel quadrature needs at least {MIN_NODES_PER_OCTAVE} nodes per octave, got {per_octave}"
        )));
    }
    let n = mu.intrinsic_dim();
    let (lo, hi) = ((r / 100.0).ln(), (100.0 * r).ln());
    let steps = (((hi - lo) / std::f64::consts::LN_2) * per_octave as f64).ceil() as usize;
    let dt = (hi - lo) / steps as f64;
    let mut acc = 0.0;
    for j in 0..=steps {
        let s = (lo + j as f64 * dt).exp();
        let edge = if j == 0 || j == steps { 0.5 } else { 1.0 };
        acc += edge * delta(mu, x, s)? * kernel_psi(s, r, n)? * s;
    }
    Ok(acc * dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowBound {
    /// `sup |Δ_μ(x, s)|` over `s ∈ [s_floor, √r]`.
    pub sup_window: f64,
    /// `sup |Δ_μ(x, s)|` over `s >= s_floor`.
    pub sup_all: f64,
    /// `∫_{r^{−1/2}}^∞ 2t^{n+1}e^{−t²} dt`.
    pub tail_factor: f64,
    /// `Γ(n/2 + 1)`, the constant in front of `sup_window`.
    pub gamma: f64,
}

impl WindowBound {
    pub fn bound(&self) -> f64 {
        self.gamma * self.sup_window + self.sup_all * self.tail_factor
    }
}

/// Exact supremum of `|Δ_μ(x, s)|` over `s ∈ [lo, hi]`.
///
/// Between consecutive breakpoints (`|x_i − x|` and `|x_i − x|/2`) `Δ` has
/// the form `c·s^{−n}` and is monotone, so the supremum is attained at a
/// breakpoint, from one side or the other, or at an end of the range.
fn sup_abs_delta(mu: &DiscreteMeasure, x: &[f64], lo: f64, hi: f64) -> f64 {
    let n = mu.intrinsic_dim() as i32;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    mu.index().visit_near(x, 2.0 * hi, |p, w| {
        let d = sq_dist(p, x).sqrt();
        if d <= 2.0 * hi {
            pts.push((d, w));
        }
    });
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let dists: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let mut cum = Vec::with_capacity(pts.len() + 1);
    cum.push(0.0);
    for (_, w) in &pts {
        let last = *cum.last().unwrap();
        cum.push(last + w);
    }
    // Mass within distance t (closed) or strictly below t.
    let closed = |t: f64| cum[dists.partition_point(|&d| d <= t)];
    let open = |t: f64| cum[dists.partition_point(|&d| d < t)];
    let eval = |s: f64, left: bool| {
        let (a, b) = if left {
            (open(s), open(2.0 * s))
        } else {
            (closed(s), closed(2.0 * s))
        };
        (a / s.powi(n) - b / (2.0 * s).powi(n)).abs()
    };
    let mut best = eval(lo, false).max(eval(hi, false)).max(eval(hi, true));
    for &d in &dists {
        for s in [d, d / 2.0] {
            if s > lo && s <= hi {
                best = best.max(eval(s, false)).max(eval(s, true));
            }
        }
    }
    best
}

/// The two pieces of the bound `|Δ_{μ,φ}(x, r)| <= Γ(n/2+1)·sup_{s<=√r}|Δ_μ|
/// + sup_s|Δ_μ|·∫_{r^{−1/2}}^∞ 2t^{n+1}e^{−t²}dt`, with both suprema taken
/// over `s >= s_floor`.
pub fn window_sup_bound(mu: &DiscreteMeasure, x: &[f64], r: f64, s_floor: f64) -> Result<WindowBound> {
    mu.check_point(x)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidRadius(r));
    }
    check_radius(s_floor)?;
    let top = r.sqrt();
    if s_floor > top {
        return Err(Error::Precondition(format!(
            "window [s_floor = {s_floor:e}, sqrt(r) = {top:e}] is empty"
        )));
    }
    let n = mu.intrinsic_dim();
    // Beyond the diameter Δ is (1 − 2^{−n})·‖μ‖·s^{−n}, decreasing.
    let far = mu.diameter().max(top);
    Ok(WindowBound {
        sup_window: sup_abs_delta(mu, x, s_floor, top),
        sup_all: sup_abs_delta(mu, x, s_floor, far),
        tail_factor: gaussian_moment_tail(n, 1.0 / top),
        gamma: gamma_half_plus_one(n),
    })
}

/// `Tν(x) = (Σ_k |ν(B(x,r_k))/r_kⁿ − ν(B(x,2r_k))/(2r_k)ⁿ|²·w_k)^{1/2}` at
/// each evaluation point. The grid must cover the scales where `ν` has
/// structure; contributions outside it are dropped.
pub fn operator_t(nu: &SignedMeasure, points: &[Vec<f64>], grid: &ScaleGrid, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::validation("intrinsic dimension must be positive"));
    }
    points
        .par_iter()
        .map(|x| {
            let rows = grid_deltas(|r| nu.signed_ball_mass(x, r), grid, n)?;
            let (s2, _) = accumulate_s2(rows.iter().map(|p| p.1), grid);
            Ok(s2.sqrt())
        })
        .collect()
}

/// `sup_λ λ·μ{x : Tν(x) > λ}/‖ν‖`, with `Tν` evaluated on the support of
/// `μ` and weighted by its weights.
pub fn weak_11_statistic(mu: &DiscreteMeasure, nu: &SignedMeasure, grid: &ScaleGrid, lambdas: &[f64]) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::validation("weak (1,1) statistic needs at least one level"));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::validation(format!("level {l} must be positive")));
    }
    let norm = nu.total_variation();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let pts: Vec<Vec<f64>> = mu.points().map(<[f64]>::to_vec).collect();
    let t = operator_t(nu, &pts, grid, mu.intrinsic_dim())?;
    let mut best = 0.0f64;
    for &lambda in lambdas {
        let level: ExactSum = t
            .iter()
            .zip(mu.weights())
            .filter(|(tv, _)| **tv > lambda)
            .map(|(_, w)| *w)
            .collect();
        best = best.max(lambda * level.value() / norm);
    }
    Ok(best)
}

/// `Σ_{x ∈ B(c, R)} μ({x})·Σ_{r_k < R} Δ(x, r_k)²·w_k`.
pub fn carleson_energy(mu: &DiscreteMeasure, center: &[f64], radius: f64, grid: &ScaleGrid) -> Result<f64> {
    check_radius(radius)?;
    mu.check_point(center)?;
    if mu.is_empty() {
        return Ok(0.0);
    }
    let ids = mu.index().ball_ids(center, radius);
    if ids.is_empty() {
        return Err(Error::Precondition(format!(
            "ball of radius {radius:e} does not meet the support"
        )));
    }
    let n = mu.intrinsic_dim();
    let terms: Result<Vec<f64>> = ids
        .par_iter()
        .map(|&i| {
            let x = mu.point(i);
            let rows = grid_deltas(|r| mu.ball_mass(x, r), grid, n)?;
            let inner: f64 = rows
                .iter()
                .zip(&grid.radii)
                .zip(&grid.log_weights)
                .filter(|((_, r), _)| **r < radius)
                .map(|(((_, d), _), w)| d * d * w)
                .sum();
            Ok(mu.weight(i) * inner)
        })
        .collect();
    Ok(terms?.into_iter().collect::<ExactSum>().value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityExtremes {
    pub finest_min: f64,
    pub finest_max: f64,
    pub global_min: f64,
    pub global_max: f64,
}

/// Min and max of `θ(x, r_k)` over the finest octave and over the whole
/// grid.
pub fn density_extremes(mu: &DiscreteMeasure, x: &[f64], grid: &ScaleGrid) -> Result<DensityExtremes> {
    mu.check_point(x)?;
    let rows = grid_deltas(|r| mu.ball_mass(x, r), grid, mu.intrinsic_dim())?;
    let fold = |it: &mut dyn Iterator<Item = f64>| {
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)))
    };
    let (finest_min, finest_max) = fold(&mut rows[grid.finest_octave()].iter().map(|p| p.0));
    let (global_min, global_max) = fold(&mut rows.iter().map(|p| p.0));
    Ok(DensityExtremes {
        finest_min,
        finest_max,
        global_min,
        global_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    fn atom(d: usize) -> DiscreteMeasure {
        DiscreteMeasure::new(vec![0.0; d], vec![1.0], 1, d, 1e-3).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = ScaleGrid::geometric(1.0, 3, 1).unwrap();
        assert_eq!(g.radii, vec![1.0, 0.5, 0.25, 0.125]);
        assert!((g.total_log_weight() - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let g = ScaleGrid::clamped(1.0, 0.1, 10, 4, 0.01).unwrap();
        assert_eq!(g.octaves, 3);
        assert_eq!(g.requested_octaves, 10);
        assert!(g.r_min >= 0.1);
    }

    #[test]
    fn grid_doubling_is_exact() {
        let g = ScaleGrid::geometric(0.7, 5, 3).unwrap();
        for k in 3..g.len() {
            assert_eq!(2.0 * g.radii[k], g.radii[k - 3]);
        }
        for w in g.radii.windows(2) {
            assert!(w[1] < w[0]);
            assert!((w[1] / w[0] - 2f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn make_grid_reports_insufficient_resolution() {
        let g = generators::plane(1, 2, 4.0, 1e-3).unwrap();
        let grid = make_scale_grid(&g.measure, 3, 1, 1.0).unwrap();
        assert_eq!(grid.radii, vec![1.0, 0.5, 0.25, 0.125]);
        let g = generators::plane(1, 2, 4.0, 0.1).unwrap();
        let e = make_scale_grid(&g.measure, 3, 1, 1.0).unwrap_err();
        assert!(e.is_resolution());
        assert!(e.to_string().contains("h = 1.0"));
    }

    #[test]
    fn atom_values() {
        let mu = atom(2);
        assert_eq!(density_ratio(&mu, &[0.0, 0.0], 0.5).unwrap(), 2.0);
        assert_eq!(delta(&mu, &[0.0, 0.0], 0.5).unwrap(), 1.0);
        assert_eq!(smoothed_delta(&mu, &[0.0, 0.0], 0.5).unwrap(), 1.0);
        assert!(density_ratio(&mu, &[0.0, 0.0], 0.0).is_err());
        let z = DiscreteMeasure::zero(1, 2, 1.0).unwrap();
        assert_eq!(density_ratio(&z, &[0.0, 0.0], 1.0).unwrap(), 0.0);
        assert_eq!(smoothed_via_kernel(&z, &[0.0, 0.0], 0.3, 64).unwrap(), 0.0);
    }

    #[test]
    fn kernel_values() {
        assert!((kernel_psi(1.0, 1.0, 1).unwrap() - 2.0 / std::f64::consts::E).abs() < 1e-15);
        assert!(kernel_psi(0.0, 1.0, 1).is_err());
        assert!(kernel_psi(1.0, -1.0, 1).is_err());
    }

    #[test]
    fn kernel_quadrature_rejects_coarse_grids() {
        let mu = atom(2);
        assert!(smoothed_via_kernel(&mu, &[0.0, 0.0], 0.1, 4).unwrap_err().is_validation());
        let v = smoothed_via_kernel(&mu, &[0.0, 0.0], 0.1, 64).unwrap();
        assert!((v / 5.0 - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn atom_square_function_closed_form() {
        let mu = atom(2);
        let grid = ScaleGrid::geometric(1.0, 4, 2).unwrap();
        let res = square_function(&mu, &[0.0, 0.0], &grid).unwrap();
        let oracle: f64 = grid
            .radii
            .iter()
            .zip(&grid.log_weights)
            .map(|(r, w)| (0.5 / r).powi(2) * w)
            .sum();
        assert!((res.s2 / oracle - 1.0).abs() < 1e-12);
        assert_eq!(res.s2_partial.len(), 4);
        assert_eq!(*res.s2_partial.last().unwrap(), res.s2);
        assert!(res.s2_partial.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn slope_uses_last_window() {
        assert_eq!(divergence_slope(&[1.0, 2.0, 4.0, 7.0, 11.0], 4), 2.5);
        assert_eq!(divergence_slope(&[1.0, 3.0], 4), 1.5);
        assert_eq!(divergence_slope(&[], 4), 0.0);
    }

    #[test]
    fn window_bound_requires_unit_radius() {
        let mu = atom(2);
        assert!(window_sup_bound(&mu, &[0.0, 0.0], 1.0, 0.01).is_err());
        let b = window_sup_bound(&mu, &[0.0, 0.0], 0.04, 0.01).unwrap();
        // Δ(s) = 1/(2s) on the atom: largest at the floor.
        assert!((b.sup_window - 50.0).abs() < 1e-12);
        assert!(b.bound() >= smoothed_delta(&mu, &[0.0, 0.0], 0.04).unwrap().abs());
    }

    #[test]
    fn carleson_needs_support() {
        let mu = atom(2);
        let grid = ScaleGrid::geometric(1.0, 2, 1).unwrap();
        assert!(carleson_energy(&mu, &[5.0, 5.0], 1.0, &grid).is_err());
        let z = DiscreteMeasure::zero(1, 2, 1.0).unwrap();
        assert_eq!(carleson_energy(&z, &[0.0, 0.0], 1.0, &grid).unwrap(), 0.0);
    }

    #[test]
    fn weak_statistic_edge_cases() {
        let mu = atom(2);
        let grid = ScaleGrid::geometric(1.0, 2, 1).unwrap();
        let zero = SignedMeasure::from_atoms(&[], &[], 1, 2, 1.0).unwrap();
        assert_eq!(weak_11_statistic(&mu, &zero, &grid, &[1.0]).unwrap(), 0.0);
        assert!(weak_11_statistic(&mu, &zero, &grid, &[]).is_err());
    }
}
