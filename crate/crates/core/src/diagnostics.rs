//! Per-point verdicts from the square function and density extremes, and
//! their aggregation into a summary scored against ground-truth labels.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{accumulate_s2, density_profile, divergence_slope, DensityProfile, ScaleGrid};
use crate::error::{Error, Result};
use crate::generators::MeasureMeta;
use crate::measure::DiscreteMeasure;
use crate::numeric::median;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Divergence threshold on the per-octave growth of `s2`.
    pub tau: f64,
    /// Lower-density floor below which no verdict is issued.
    pub floor: f64,
    /// Number of trailing octaves used for the slope.
    pub slope_octaves: usize,
    /// Points closer than `margin·r_max` to a truncation face are excluded.
    pub boundary_margin: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            tau: 0.005,
            floor: 0.05,
            slope_octaves: 4,
            boundary_margin: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    RectifiableConsistent,
    Divergent,
    LowDensity,
    BoundaryExcluded,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [
        Verdict::RectifiableConsistent,
        Verdict::Divergent,
        Verdict::LowDensity,
        Verdict::BoundaryExcluded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::RectifiableConsistent => "rectifiable-consistent",
            Verdict::Divergent => "divergent",
            Verdict::LowDensity => "low-density",
            Verdict::BoundaryExcluded => "boundary-excluded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointVerdict {
    pub point_id: usize,
    pub s2: f64,
    pub slope: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    /// `max |Δ|` over the finest octave.
    pub finest_max_delta: f64,
    pub boundary: bool,
    pub verdict: Verdict,
}

/// The decision table: boundary, then density floor, then slope.
pub fn classify(slope: f64, theta_lo: f64, boundary: bool, cfg: &DiagnosticsConfig) -> Verdict {
    if boundary {
        Verdict::BoundaryExcluded
    } else if !(theta_lo >= cfg.floor) {
        Verdict::LowDensity
    } else if slope > cfg.tau {
        Verdict::Divergent
    } else {
        Verdict::RectifiableConsistent
    }
}

/// Verdict for one point from its profile.
pub fn classify_point(
    point_id: usize,
    profile: &DensityProfile,
    grid: &ScaleGrid,
    boundary: bool,
    cfg: &DiagnosticsConfig,
) -> Result<PointVerdict> {
    if profile.entries.len() != grid.len() || profile.entries.iter().zip(&grid.radii).any(|(e, r)| e.r != *r) {
        return Err(Error::validation("profile was computed on a different scale grid"));
    }
    let (s2, partial) = accumulate_s2(profile.entries.iter().map(|e| e.delta), grid);
    let slope = divergence_slope(&partial, cfg.slope_octaves);
    let finest_max_delta = profile.entries[grid.finest_octave()]
        .iter()
        .map(|e| e.delta.abs())
        .fold(0.0, f64::max);
    Ok(PointVerdict {
        point_id,
        s2,
        slope,
        theta_lo: profile.theta_star_lower,
        theta_hi: profile.theta_star_upper,
        finest_max_delta,
        boundary,
        verdict: classify(slope, profile.theta_star_lower, boundary, cfg),
    })
}

fn bbox_flags(mu: &DiscreteMeasure, ids: impl Iterator<Item = usize>, reach: f64, flags: &mut [bool]) {
    let Some((lo, hi)) = mu.bounding_box() else { return };
    let axes: Vec<usize> = (0..lo.len()).filter(|&a| hi[a] > lo[a]).collect();
    for i in ids {
        let p = mu.point(i);
        flags[i] = axes.iter().any(|&a| p[a] - lo[a] < reach || hi[a] - p[a] < reach);
    }
}

/// Boundary flags. With generator metadata, a point is flagged when it
/// lies closer than `margin·r_max` to a face of its component's truncation
/// window; components without a window (closed sets) are never flagged.
/// Points without metadata fall back to the faces of the bounding box,
/// along the axes where the support has extent.
pub fn boundary_flags(mu: &DiscreteMeasure, meta: Option<&MeasureMeta>, r_max: f64, margin: f64) -> Vec<bool> {
    let reach = margin * r_max;
    let mut flags = vec![false; mu.len()];
    let mut unclaimed: Vec<usize> = Vec::new();
    match meta {
        Some(meta) if !meta.components.is_empty() => {
            for i in 0..mu.len() {
                match meta.component_of(i) {
                    Some(c) => {
                        if let Some(w) = &c.window {
                            let p = mu.point(i);
                            flags[i] = w.axes.iter().any(|&a| p[a] - w.min < reach || w.max - p[a] < reach);
                        }
                    }
                    None => unclaimed.push(i),
                }
            }
        }
        _ => unclaimed.extend(0..mu.len()),
    }
    if !unclaimed.is_empty() {
        bbox_flags(mu, unclaimed.into_iter(), reach, &mut flags);
    }
    flags
}

/// Evaluation points: all of them, or `k` distinct ids drawn with the seed
/// and returned in ascending order.
pub fn select_points(len: usize, k: Option<usize>, seed: u64) -> Vec<usize> {
    match k {
        Some(k) if k < len => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ids = sample(&mut rng, len, k).into_vec();
            ids.sort_unstable();
            ids
        }
        _ => (0..len).collect(),
    }
}

/// Profiles and verdicts for the given points, in input order.
pub fn analyze_points(
    mu: &DiscreteMeasure,
    meta: Option<&MeasureMeta>,
    grid: &ScaleGrid,
    ids: &[usize],
    cfg: &DiagnosticsConfig,
    smoothed: bool,
) -> Result<Vec<(DensityProfile, PointVerdict)>> {
    let flags = boundary_flags(mu, meta, grid.r_max, cfg.boundary_margin);
    ids.par_iter()
        .map(|&i| {
            let prof = density_profile(mu, mu.point(i), grid, smoothed)?;
            let v = classify_point(i, &prof, grid, flags[i], cfg)?;
            Ok((prof, v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Medians {
    pub s2: Option<f64>,
    pub slope: Option<f64>,
    pub finest_max_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub points: usize,
    pub counts: BTreeMap<&'static str, usize>,
    pub fractions: BTreeMap<&'static str, f64>,
    /// Medians over points not excluded at the boundary.
    pub medians: Medians,
    /// Share of labelled points with a verdict (neither boundary-excluded
    /// nor low-density) whose verdict matches the label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scored_points: Option<usize>,
}

impl SummaryReport {
    pub fn fraction(&self, v: Verdict) -> f64 {
        self.fractions[v.as_str()]
    }
}

/// Aggregates verdicts. `label(i)` gives the ground truth of point `i`
/// (`true` for rectifiable) when known.
pub fn summarize(verdicts: &[PointVerdict], label: impl Fn(usize) -> Option<bool>) -> Result<SummaryReport> {
    if verdicts.is_empty() {
        return Err(Error::validation("no verdicts to summarize"));
    }
    let total = verdicts.len();
    let mut counts: BTreeMap<&'static str, usize> = Verdict::ALL.iter().map(|v| (v.as_str(), 0)).collect();
    for v in verdicts {
        *counts.get_mut(v.verdict.as_str()).unwrap() += 1;
    }
    let fractions = counts.iter().map(|(k, c)| (*k, *c as f64 / total as f64)).collect();
    let kept: Vec<&PointVerdict> = verdicts.iter().filter(|v| !v.boundary).collect();
    let med = |f: fn(&PointVerdict) -> f64| median(&kept.iter().map(|v| f(v)).collect::<Vec<_>>());
    let medians = Medians {
        s2: med(|v| v.s2),
        slope: med(|v| v.slope),
        finest_max_delta: med(|v| v.finest_max_delta),
    };
    let mut scored = 0usize;
    let mut correct = 0usize;
    for v in verdicts {
        let predicted = match v.verdict {
            Verdict::RectifiableConsistent => true,
            Verdict::Divergent => false,
            _ => continue,
        };
        if let Some(truth) = label(v.point_id) {
            scored += 1;
            if truth == predicted {
                correct += 1;
            }
        }
    }
    let (accuracy, scored_points) = if scored > 0 {
        (Some(correct as f64 / scored as f64), Some(scored))
    } else {
        (None, None)
    };
    Ok(SummaryReport {
        points: total,
        counts,
        fractions,
        medians,
        accuracy,
        scored_points,
    })
}
