//! Synthetic measures with known rectifiability: flat grids, Lipschitz
//! graphs, circles, the four-corner Cantor set and mixtures of these.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

/// Default cap on the number of generated points.
pub const DEFAULT_POINT_BUDGET: usize = 50_000_000;

/// Axis-aligned truncation window of a generator, along the axes where the
/// underlying set was cut off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub axes: Vec<usize>,
    pub min: f64,
    pub max: f64,
}

/// Bookkeeping for one generator's points inside a (possibly mixed) cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub generator: String,
    pub params: Value,
    pub rectifiable: Option<bool>,
    pub start: usize,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

/// Metadata carried alongside a generated measure and written to the
/// sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    pub generator: String,
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rectifiable: Option<bool>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub components: Vec<Component>,
}

impl MeasureMeta {
    /// Ground-truth label of point `i`, if any component claims it.
    pub fn label_of(&self, i: usize) -> Option<bool> {
        self.component_of(i).and_then(|c| c.rectifiable)
    }

    pub fn component_of(&self, i: usize) -> Option<&Component> {
        self.components
            .iter()
            .find(|c| i >= c.start && i < c.start + c.count)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedMeasure {
    pub measure: DiscreteMeasure,
    pub meta: MeasureMeta,
}

impl GeneratedMeasure {
    fn single(
        measure: DiscreteMeasure,
        generator: &str,
        params: Value,
        rectifiable: Option<bool>,
        window: Option<Window>,
        warnings: Vec<String>,
    ) -> Self {
        let count = measure.len();
        let meta = MeasureMeta {
            generator: generator.to_string(),
            params: params.clone(),
            seed: 0,
            rectifiable,
            warnings,
            components: vec![Component {
                generator: generator.to_string(),
                params,
                rectifiable,
                start: 0,
                count,
                window,
            }],
        };
        Self { measure, meta }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.meta.seed = seed;
        self
    }
}

/// Built-in graph profiles. Each profile drives the first normal
/// coordinate through the first parameter `u₀`; the remaining normal
/// coordinates are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Linear { slope: f64 },
    /// `a·sin(2πu₀/L)`.
    Sinusoid { amplitude: f64 },
    /// Triangle wave of amplitude `a` and the given period.
    Sawtooth { amplitude: f64, period: f64 },
}

impl Profile {
    fn value(&self, u0: f64, side: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Linear { slope } => slope * u0,
            Profile::Sinusoid { amplitude } => {
                amplitude * (2.0 * std::f64::consts::PI * u0 / side).sin()
            }
            Profile::Sawtooth { amplitude, period } => {
                let t = (u0 / period).rem_euclid(1.0);
                amplitude * (1.0 - 4.0 * (t - 0.5).abs())
            }
        }
    }

    /// Analytic Lipschitz constant on `[0, side]`.
    pub fn lipschitz(&self, side: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Linear { slope } => slope.abs(),
            Profile::Sinusoid { amplitude } => 2.0 * std::f64::consts::PI * amplitude.abs() / side,
            Profile::Sawtooth { amplitude, period } => 4.0 * amplitude.abs() / period,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Profile::Zero => true,
            Profile::Linear { slope } => slope.is_finite(),
            Profile::Sinusoid { amplitude } => amplitude.is_finite(),
            Profile::Sawtooth { amplitude, period } => amplitude.is_finite() && period.is_finite() && period > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid profile parameters {self:?}")))
        }
    }
}

fn grid_count(side: f64, step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::validation(format!("grid step {step} must be positive")));
    }
    if !(side.is_finite() && side >= step) {
        return Err(Error::validation(format!(
            "side length {side} must be at least the grid step {step}"
        )));
    }
    Ok((side / step + 1e-9).floor() as usize + 1)
}

fn check_budget(per_axis: usize, n: usize, budget: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..n {
        total = total
            .checked_mul(per_axis)
            .filter(|t| *t <= budget)
            .ok_or_else(|| Error::Resource(format!("{per_axis}^{n} grid points exceed the budget of {budget}")))?;
    }
    Ok(total)
}

/// Calls `f(multi_index)` for every point of a `per_axis`ⁿ grid, first
/// axis slowest.
fn for_each_grid_point(n: usize, per_axis: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx = vec![0usize; n];
    loop {
        f(&idx)?;
        let mut a = n;
        loop {
            if a == 0 {
                return Ok(());
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < per_axis {
                break;
            }
            idx[a] = 0;
        }
    }
}

fn check_dims(n: usize, d: usize) -> Result<()> {
    if n == 0 || n > d {
        return Err(Error::DimensionOrder { n, d });
    }
    Ok(())
}

/// Regular grid of step `s` on `[0, L]ⁿ × {0}^{d−n}` with weights `sⁿ`.
pub fn plane(n: usize, d: usize, side: f64, step: f64) -> Result<GeneratedMeasure> {
    check_dims(n, d)?;
    let per_axis = grid_count(side, step)?;
    let total = check_budget(per_axis, n, DEFAULT_POINT_BUDGET)?;
    let mut coords = Vec::with_capacity(total * d);
    for_each_grid_point(n, per_axis, |idx| {
        coords.extend(idx.iter().map(|&k| k as f64 * step));
        coords.extend(std::iter::repeat_n(0.0, d - n));
        Ok(())
    })?;
    let w = step.powi(n as i32);
    let measure = DiscreteMeasure::new(coords, vec![w; total], n, d, step)?;
    Ok(GeneratedMeasure::single(
        measure,
        "plane",
        json!({"n": n, "d": d, "side": side, "step": step}),
        Some(true),
        Some(Window {
            axes: (0..n).collect(),
            min: 0.0,
            max: side,
        }),
        Vec::new(),
    ))
}

/// Graph of `f : [0, L]ⁿ → ℝ^{d−n}` sampled on the grid of step `s`, with
/// surface-measure weights `√det(I + DfᵀDf)·sⁿ` from central differences.
///
/// `lipschitz` is the claimed bound; if the finite-difference gradient
/// exceeds it anywhere on the grid a warning is recorded.
pub fn graph_from_fn(
    n: usize,
    d: usize,
    side: f64,
    step: f64,
    lipschitz: f64,
    f: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<GeneratedMeasure> {
    check_dims(n, d)?;
    if !(lipschitz.is_finite() && lipschitz >= 0.0) {
        return Err(Error::validation(format!("Lipschitz bound {lipschitz} must be finite")));
    }
    let per_axis = grid_count(side, step)?;
    let total = check_budget(per_axis, n, DEFAULT_POINT_BUDGET)?;
    let codim = d - n;
    let eval = |u: &[f64]| -> Result<Vec<f64>> {
        let v = f(u);
        if v.len() != codim {
            return Err(Error::DimensionMismatch {
                expected: codim,
                got: v.len(),
            });
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation(format!("profile is not finite at {u:?}")));
        }
        Ok(v)
    };
    let mut coords = Vec::with_capacity(total * d);
    let mut weights = Vec::with_capacity(total);
    let mut observed_lip = 0.0f64;
    let sn = step.powi(n as i32);
    let mut u = vec![0.0; n];
    let mut probe = vec![0.0; n];
    let mut jac = DMatrix::<f64>::zeros(codim, n);
    for_each_grid_point(n, per_axis, |idx| {
        for (a, &k) in idx.iter().enumerate() {
            u[a] = k as f64 * step;
        }
        let value = eval(&u)?;
        for a in 0..n {
            probe.copy_from_slice(&u);
            probe[a] = u[a] + step;
            let plus = eval(&probe)?;
            probe[a] = u[a] - step;
            let minus = eval(&probe)?;
            for c in 0..codim {
                jac[(c, a)] = (plus[c] - minus[c]) / (2.0 * step);
            }
        }
        let gram = DMatrix::<f64>::identity(n, n) + jac.transpose() * &jac;
        // Largest singular value of Df: the local Lipschitz constant.
        if codim > 0 {
            let top = jac.singular_values().iter().copied().fold(0.0, f64::max);
            observed_lip = observed_lip.max(top);
        }
        coords.extend_from_slice(&u);
        coords.extend_from_slice(&value);
        weights.push(gram.determinant().sqrt() * sn);
        Ok(())
    })?;
    let mut warnings = Vec::new();
    if observed_lip > lipschitz * (1.0 + 1e-9) + 1e-12 {
        warnings.push(format!(
            "lipschitz bound exceeded: observed {observed_lip:.6e} > claimed {lipschitz:.6e}"
        ));
    }
    let h = step * (1.0 + lipschitz * lipschitz).sqrt();
    let measure = DiscreteMeasure::new(coords, weights, n, d, h)?;
    Ok(GeneratedMeasure::single(
        measure,
        "lipschitz_graph",
        json!({"n": n, "d": d, "side": side, "step": step, "lipschitz": lipschitz}),
        Some(true),
        Some(Window {
            axes: (0..n).collect(),
            min: 0.0,
            max: side,
        }),
        warnings,
    ))
}

/// Graph of a built-in profile. `lipschitz` overrides the analytic
/// constant (used to exercise the audit).
pub fn lipschitz_graph(
    n: usize,
    d: usize,
    profile: Profile,
    side: f64,
    step: f64,
    lipschitz: Option<f64>,
) -> Result<GeneratedMeasure> {
    profile.validate()?;
    if n == d {
        return Err(Error::validation("a graph needs codimension at least 1"));
    }
    let lip = lipschitz.unwrap_or_else(|| profile.lipschitz(side));
    let codim = d.saturating_sub(n);
    let mut g = graph_from_fn(n, d, side, step, lip, |u| {
        let mut v = vec![0.0; codim];
        if codim > 0 {
            v[0] = profile.value(u[0], side);
        }
        v
    })?;
    let mut params = json!({"n": n, "d": d, "side": side, "step": step});
    if let (Value::Object(p), Ok(Value::Object(extra))) = (&mut params, serde_json::to_value(profile)) {
        p.extend(extra);
    }
    if let Some(l) = lipschitz {
        params["lipschitz"] = json!(l);
    }
    g.meta.params = params.clone();
    g.meta.components[0].params = params;
    Ok(g)
}

/// `samples` equally spaced points on the circle of radius `R` about the
/// origin, each of weight `2πR/N`.
pub fn circle(radius: f64, samples: usize) -> Result<GeneratedMeasure> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::validation(format!("radius {radius} must be positive")));
    }
    if samples < 3 {
        return Err(Error::validation(format!("circle needs at least 3 samples, got {samples}")));
    }
    if samples > DEFAULT_POINT_BUDGET {
        return Err(Error::Resource(format!("{samples} samples exceed the point budget")));
    }
    let tau = 2.0 * std::f64::consts::PI;
    let mut coords = Vec::with_capacity(2 * samples);
    for k in 0..samples {
        let t = tau * k as f64 / samples as f64;
        coords.push(radius * t.cos());
        coords.push(radius * t.sin());
    }
    let w = tau * radius / samples as f64;
    let measure = DiscreteMeasure::new(coords, vec![w; samples], 1, 2, w)?;
    Ok(GeneratedMeasure::single(
        measure,
        "circle",
        json!({"radius": radius, "samples": samples}),
        Some(true),
        None,
        Vec::new(),
    ))
}

/// Centres of the `4^K` generation-`K` squares of the four-corner Cantor
/// construction in `[0, 1]²`, each of weight `4^{−K}`.
pub fn cantor4(depth: u32, budget: usize) -> Result<GeneratedMeasure> {
    if depth == 0 {
        return Err(Error::validation("cantor4 depth must be at least 1"));
    }
    let count = 4usize
        .checked_pow(depth)
        .filter(|c| *c <= budget)
        .ok_or_else(|| Error::Resource(format!("4^{depth} points exceed the budget of {budget}")))?;
    let side = 0.25f64.powi(depth as i32);
    let mut coords = Vec::with_capacity(2 * count);
    for code in 0..count {
        // Base-4 digits of `code`, most significant first, pick the corner.
        let (mut x, mut y) = (0.0, 0.0);
        for level in 1..=depth {
            let digit = (code >> (2 * (depth - level))) & 3;
            let offset = 3.0 * 0.25f64.powi(level as i32);
            if digit & 1 == 1 {
                x += offset;
            }
            if digit & 2 == 2 {
                y += offset;
            }
        }
        coords.push(x + side / 2.0);
        coords.push(y + side / 2.0);
    }
    let measure = DiscreteMeasure::new(coords, vec![side; count], 1, 2, side)?;
    Ok(GeneratedMeasure::single(
        measure,
        "cantor4",
        json!({"depth": depth}),
        Some(false),
        None,
        Vec::new(),
    ))
}

/// Concatenation of the given measures; `h` is the largest component
/// resolution and component bookkeeping is carried over with offsets.
pub fn mixture(parts: &[GeneratedMeasure], n: usize) -> Result<GeneratedMeasure> {
    let first = parts
        .first()
        .ok_or_else(|| Error::validation("mixture needs at least one component"))?;
    let d = first.measure.ambient_dim();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut components = Vec::new();
    let mut warnings = Vec::new();
    let mut h = 0.0f64;
    for part in parts {
        let m = &part.measure;
        if m.ambient_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: m.ambient_dim(),
            });
        }
        let offset = weights.len();
        for c in &part.meta.components {
            let mut c = c.clone();
            c.start += offset;
            components.push(c);
        }
        warnings.extend(part.meta.warnings.iter().cloned());
        coords.extend_from_slice(m.coords());
        weights.extend_from_slice(m.weights());
        h = h.max(m.resolution());
    }
    let labels: Vec<Option<bool>> = components.iter().map(|c| c.rectifiable).collect();
    let rectifiable = if labels.iter().all(|l| *l == Some(true)) {
        Some(true)
    } else if labels.contains(&Some(false)) {
        Some(false)
    } else {
        None
    };
    let measure = DiscreteMeasure::new(coords, weights, n, d, h)?;
    let params = json!({
        "components": parts.iter().map(|p| json!({"generator": p.meta.generator, "params": p.meta.params})).collect::<Vec<_>>()
    });
    Ok(GeneratedMeasure {
        measure,
        meta: MeasureMeta {
            generator: "mixture".into(),
            params,
            seed: parts.iter().map(|p| p.meta.seed).next().unwrap_or(0),
            rectifiable,
            warnings,
            components,
        },
    })
}

/// Two-sided density bound `c₀` from sampled `θ(x, r) = μ(B(x, r))/rⁿ`,
/// with `x` drawn from the support and `r` log-uniform in `[r_lo, r_hi]`.
/// Returns `max(θ_max, 1/θ_min)`.
pub fn ad_regularity_constant(mu: &DiscreteMeasure, r_lo: f64, r_hi: f64, samples: usize, seed: u64) -> Result<f64> {
    if mu.is_empty() {
        return Err(Error::validation("empty measure"));
    }
    if !(r_lo > 0.0 && r_hi >= r_lo) {
        return Err(Error::validation(format!("radius range [{r_lo}, {r_hi}] is empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mu.intrinsic_dim() as i32;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..samples {
        let i = rng.gen_range(0..mu.len());
        let r = (rng.gen_range(r_lo.ln()..=r_hi.ln())).exp();
        let theta = mu.ball_mass(mu.point(i), r)? / r.powi(n);
        lo = lo.min(theta);
        hi = hi.max(theta);
    }
    Ok(hi.max(1.0 / lo))
}
