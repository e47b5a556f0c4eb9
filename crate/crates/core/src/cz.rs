//! Calderón–Zygmund decomposition of a signed measure `ν` against a
//! reference measure `μ` at level `λ`, and an audit of its defining
//! properties.
//!
//! Cubes are closed sup-norm balls `Q = {y : ‖y − x‖∞ ≤ a}` (side `2a`),
//! centred at atoms of `ν`. For a centre `x` write
//! `G(t) = |ν|(Q(x, t)) − θ·μ(Q(x, 2t))` with `θ = 2^{−d−1}λ`. The side is
//! chosen inside the last interval where `G > 0`, and at least half of its
//! right end, so `G(a) > 0` while `G(t) <= 0` for every `t > 2a`: the two
//! stopping conditions hold for every dilation factor above 2.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, SignedMeasure};
use crate::numeric::{exact_sum, ExactSum};

/// Dilations at which the stopping condition is also tabulated.
pub const AUDIT_ETAS: [f64; 5] = [2.5, 3.0, 4.0, 8.0, 16.0];
/// Largest constant an audit clause may report and still pass.
pub const DEFAULT_C_MAX: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CzCube {
    pub center: Vec<f64>,
    /// `μ` support point at the centre.
    pub center_point: usize,
    /// Sup-norm radius; the side `ℓ(Q)` is twice this.
    pub half_side: f64,
    pub side: f64,
    /// `|ν|(Q)`.
    pub nu_variation: f64,
    /// `μ(2Q)`.
    pub mu_double: f64,
    /// `μ(R)` with `R = 6Q`.
    pub mu_r: f64,
    /// `∫ w_j dν`.
    pub w_nu: f64,
    /// Constant value of `b_j` on `R ∩ supp μ`.
    pub b_value: f64,
}

/// The decomposition. All per-point arrays live on the support points of
/// `μ`; atoms of `ν` are attached to the `μ` points at the same location.
#[derive(Debug, Clone, Serialize)]
pub struct CzDecomposition {
    pub lambda: f64,
    pub theta: f64,
    pub cubes: Vec<CzCube>,
    /// Net `ν` mass carried by each `μ` point.
    pub nu_net: Vec<f64>,
    /// `|ν|` mass carried by each `μ` point.
    pub nu_var: Vec<f64>,
    /// `f = dν/dμ` on points outside every cube, `None` inside.
    pub good: Vec<Option<f64>>,
    /// Per cube: `(point, w_j(point))` over the cube's members.
    pub w: Vec<Vec<(usize, f64)>>,
    /// Per cube: `(point, b_j(point))` over `R_j ∩ supp μ`.
    pub b: Vec<Vec<(usize, f64)>>,
    /// `g` with `ν = gμ + Σ β_j`.
    pub g: Vec<f64>,
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Ids of `μ` points with `‖p − x‖∞ <= t`.
fn cube_members(mu: &DiscreteMeasure, x: &[f64], t: f64) -> Vec<usize> {
    let slack = 1e-9 * (t + x.iter().fold(0.0f64, |m, c| m.max(c.abs())));
    let lo: Vec<f64> = x.iter().map(|c| c - t - slack).collect();
    let hi: Vec<f64> = x.iter().map(|c| c + t + slack).collect();
    let mut ids = mu.index().box_ids(&lo, &hi);
    ids.retain(|&i| inf_dist(mu.point(i), x) <= t);
    ids
}

fn mass_of(values: &[f64], ids: &[usize]) -> f64 {
    exact_sum(ids.iter().map(|&i| values[i]))
}

/// Distributes the atoms of `ν` over the `μ` points at the same location,
/// proportionally to the `μ` weights. Returns `(net, variation)`.
fn attach_atoms(nu: &SignedMeasure, mu: &DiscreteMeasure) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut net = vec![ExactSum::new(); mu.len()];
    let mut var = vec![ExactSum::new(); mu.len()];
    for (k, (q, m)) in nu.atoms().enumerate() {
        let ids = mu.atoms_at(q);
        if ids.is_empty() {
            return Err(Error::validation(format!(
                "atom {k} of nu at {q:?} does not coincide with a support point of mu"
            )));
        }
        let total = exact_sum(ids.iter().map(|&i| mu.weight(i)));
        for &i in &ids {
            let share = if total > 0.0 {
                mu.weight(i) / total
            } else {
                1.0 / ids.len() as f64
            };
            net[i].add(m * share);
            var[i].add(m.abs() * share);
        }
    }
    Ok((
        net.iter().map(ExactSum::value).collect(),
        var.iter().map(ExactSum::value).collect(),
    ))
}

/// Last interval `[s, e)` on which `G > 0`, by an exact sweep over the
/// breakpoints of `G`. Returns `None` if `G` never becomes nonpositive.
fn last_positive_interval(
    mu: &DiscreteMeasure,
    nu_var: &[f64],
    x: &[f64],
    theta: f64,
    nu_total: f64,
) -> Option<(f64, f64)> {
    // Events: (t, Δ|ν|, Δμ). A point at sup-distance δ enters Q(x, t) at
    // t = δ and Q(x, 2t) at t = δ/2.
    let mut events: Vec<(f64, f64, f64)> = Vec::with_capacity(2 * mu.len());
    for (i, p) in mu.points().enumerate() {
        let dist = inf_dist(p, x);
        if nu_var[i] > 0.0 {
            events.push((dist, nu_var[i], 0.0));
        }
        events.push((dist / 2.0, 0.0, mu.weight(i)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut a, mut b) = (0.0, 0.0);
    let mut start: Option<f64> = None;
    let mut last = None;
    let mut k = 0;
    while k < events.len() {
        let t = events[k].0;
        while k < events.len() && events[k].0 == t {
            a += events[k].1;
            b += events[k].2;
            k += 1;
        }
        let positive = a > theta * b;
        match (positive, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                last = Some((s, t));
                start = None;
            }
            _ => {}
        }
        if !positive && theta * b >= nu_total {
            return last;
        }
    }
    match start {
        Some(_) => None,
        None => last,
    }
}

/// Builds the decomposition. Fails if `λ <= 2^{d+1}‖ν‖/‖μ‖` or if an atom
/// of `ν` is not located at a support point of `μ`.
pub fn cz_decompose(nu: &SignedMeasure, mu: &DiscreteMeasure, lambda: f64) -> Result<CzDecomposition> {
    let d = mu.ambient_dim();
    if nu.ambient_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: nu.ambient_dim(),
        });
    }
    let nu_total = nu.total_variation();
    let mu_total = mu.total_mass();
    let bound = 2f64.powi(d as i32 + 1) * nu_total / mu_total;
    if !(lambda.is_finite() && lambda > bound) {
        return Err(Error::Precondition(format!(
            "lambda = {lambda:e} must exceed 2^(d+1)·|nu|/|mu| = {bound:e}"
        )));
    }
    let theta = lambda * 2f64.powi(-(d as i32) - 1);
    let (nu_net, nu_var) = attach_atoms(nu, mu)?;

    // Candidate centres: points where the atom ratio exceeds λ.
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for i in 0..mu.len() {
        let w = mu.weight(i);
        if nu_var[i] > 0.0 && nu_var[i] > lambda * w {
            let x = mu.point(i);
            let (s, e) = last_positive_interval(mu, &nu_var, x, theta, nu_total).ok_or_else(|| {
                Error::Precondition(format!("stopping scale not reached around point {i}"))
            })?;
            candidates.push((i, s.max(e / 2.0)));
        }
    }
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut chosen: Vec<(usize, f64)> = Vec::new();
    for (i, a) in candidates {
        let x = mu.point(i);
        if chosen.iter().all(|&(c, ac)| inf_dist(x, mu.point(c)) > ac) {
            chosen.push((i, a));
        }
    }

    let members: Vec<Vec<usize>> = chosen.iter().map(|&(c, a)| cube_members(mu, mu.point(c), a)).collect();
    let mut overlap = vec![0usize; mu.len()];
    for m in &members {
        for &i in m {
            overlap[i] += 1;
        }
    }
    let mut cubes = Vec::with_capacity(chosen.len());
    let mut w_lists = Vec::with_capacity(chosen.len());
    let mut b_lists = Vec::with_capacity(chosen.len());
    let mut b_sum = vec![ExactSum::new(); mu.len()];
    for (&(c, a), m) in chosen.iter().zip(&members) {
        let x = mu.point(c).to_vec();
        let w_list: Vec<(usize, f64)> = m.iter().map(|&i| (i, 1.0 / overlap[i] as f64)).collect();
        let w_nu = exact_sum(w_list.iter().map(|&(i, w)| w * nu_net[i]));
        let r_ids = cube_members(mu, &x, 6.0 * a);
        let mu_r = exact_sum(r_ids.iter().map(|&i| mu.weight(i)));
        let b_value = w_nu / mu_r;
        for &i in &r_ids {
            b_sum[i].add(b_value);
        }
        cubes.push(CzCube {
            nu_variation: mass_of(&nu_var, m),
            mu_double: exact_sum(cube_members(mu, &x, 2.0 * a).iter().map(|&i| mu.weight(i))),
            center: x,
            center_point: c,
            half_side: a,
            side: 2.0 * a,
            mu_r,
            w_nu,
            b_value,
        });
        w_lists.push(w_list);
        b_lists.push(r_ids.into_iter().map(|i| (i, b_value)).collect());
    }
    let good: Vec<Option<f64>> = (0..mu.len())
        .map(|i| (overlap[i] == 0).then(|| if mu.weight(i) > 0.0 { nu_net[i] / mu.weight(i) } else { 0.0 }))
        .collect();
    let g = (0..mu.len())
        .map(|i| good[i].unwrap_or(0.0) + b_sum[i].value())
        .collect();
    Ok(CzDecomposition {
        lambda,
        theta,
        cubes,
        nu_net,
        nu_var,
        good,
        w: w_lists,
        b: b_lists,
        g,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clause {
    pub id: String,
    pub pass: bool,
    pub constant: f64,
    pub witness: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub lambda: f64,
    pub cubes: usize,
    pub c_max: f64,
    pub pass: bool,
    pub clauses: Vec<Clause>,
}

impl AuditReport {
    pub fn clause(&self, id: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.id == id)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.clauses.iter().filter(|c| !c.pass).map(|c| c.id.as_str()).collect()
    }
}

struct Worst {
    value: f64,
    witness: Value,
}

impl Worst {
    fn new(init: f64) -> Self {
        Self {
            value: init,
            witness: Value::Null,
        }
    }

    fn max(&mut self, v: f64, w: impl FnOnce() -> Value) {
        if v > self.value || (v.is_nan() && !self.value.is_nan()) {
            self.value = v;
            self.witness = w();
        }
    }

    fn min(&mut self, v: f64, w: impl FnOnce() -> Value) {
        if v < self.value || (v.is_nan() && !self.value.is_nan()) {
            self.value = v;
            self.witness = w();
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Checks every property of the decomposition against the measures,
/// recomputing all masses with exact sums. Never fails; each clause
/// carries its measured constant and the worst witness.
pub fn cz_audit(dec: &CzDecomposition, nu: &SignedMeasure, mu: &DiscreteMeasure, c_max: f64) -> AuditReport {
    let mut clauses = Vec::new();
    let lambda = dec.lambda;
    let theta = dec.theta;
    let attached = attach_atoms(nu, mu);
    let (nu_net, nu_var) = match &attached {
        Ok((n, v)) => (n.as_slice(), v.as_slice()),
        Err(_) => (dec.nu_net.as_slice(), dec.nu_var.as_slice()),
    };
    clauses.push(Clause {
        id: "atoms_on_support".into(),
        pass: attached.is_ok(),
        constant: 0.0,
        witness: attached.as_ref().err().map_or(Value::Null, |e| json!(e.to_string())),
    });
    let var_in = |x: &[f64], t: f64| mass_of(nu_var, &cube_members(mu, x, t));
    let mu_in = |x: &[f64], t: f64| exact_sum(cube_members(mu, x, t).iter().map(|&i| mu.weight(i)));

    // |ν|(Q) > θ μ(2Q): smallest ratio, must exceed 1.
    let mut wstop = Worst::new(f64::INFINITY);
    for (j, q) in dec.cubes.iter().enumerate() {
        let r = ratio(var_in(&q.center, q.half_side), theta * mu_in(&q.center, 2.0 * q.half_side));
        wstop.min(r, || json!({"cube": j, "point": q.center_point}));
    }
    clauses.push(Clause {
        id: "stopping".into(),
        pass: dec.cubes.is_empty() || wstop.value > 1.0,
        constant: if dec.cubes.is_empty() { 0.0 } else { wstop.value },
        witness: wstop.witness,
    });

    // |ν|(ηQ) <= θ μ(2ηQ) on the tabulated dilations and, exactly, for every η > 2.
    let mut wmax = Worst::new(0.0);
    for (j, q) in dec.cubes.iter().enumerate() {
        for eta in AUDIT_ETAS {
            let t = eta * q.half_side;
            let r = ratio(var_in(&q.center, t), theta * mu_in(&q.center, 2.0 * t));
            wmax.max(r, || json!({"cube": j, "eta": eta}));
        }
        if let Some((_, e)) = last_positive_interval(mu, nu_var, &q.center, theta, nu.total_variation()) {
            if e > 2.0 * q.half_side {
                wmax.max(f64::INFINITY, || json!({"cube": j, "positive_until": e}));
            }
        }
    }
    clauses.push(Clause {
        id: "maximality".into(),
        pass: wmax.value <= 1.0,
        constant: wmax.value,
        witness: wmax.witness,
    });

    // |f| <= λ off the cubes; membership recomputed from geometry.
    let covered = {
        let mut c = vec![false; mu.len()];
        for q in &dec.cubes {
            for i in cube_members(mu, &q.center, q.half_side) {
                c[i] = true;
            }
        }
        c
    };
    let mut wgood = Worst::new(0.0);
    let mut consistent = true;
    for i in 0..mu.len() {
        if covered[i] != dec.good[i].is_none() {
            consistent = false;
        }
        if !covered[i] {
            let f = ratio(nu_net[i].abs(), mu.weight(i));
            wgood.max(f / lambda, || json!({"point": i}));
            if let Some(gf) = dec.good[i] {
                if (gf * mu.weight(i) - nu_net[i]).abs() > 1e-12 * nu_net[i].abs().max(f64::MIN_POSITIVE) {
                    consistent = false;
                }
            }
        }
    }
    clauses.push(Clause {
        id: "good_bound".into(),
        pass: consistent && wgood.value <= 1.0,
        constant: wgood.value,
        witness: wgood.witness,
    });

    // ∫ b_j dμ = ∫ w_j dν, from the stored arrays.
    let mut wint = Worst::new(0.0);
    for (j, (bl, wl)) in dec.b.iter().zip(&dec.w).enumerate() {
        let ib = exact_sum(bl.iter().map(|&(i, v)| v * mu.weight(i)));
        let iw = exact_sum(wl.iter().map(|&(i, v)| v * nu_net[i]));
        let err = (ib - iw).abs() / iw.abs().max(f64::MIN_POSITIVE);
        wint.max(err, || json!({"cube": j, "int_b": ib, "int_w_nu": iw}));
    }
    clauses.push(Clause {
        id: "b_integral".into(),
        pass: wint.value <= 1e-12,
        constant: wint.value,
        witness: wint.witness,
    });

    // ‖b_j‖∞ μ(R_j) <= c |ν|(Q_j); also supp b_j ⊂ R_j, constant sign.
    let mut wsize = Worst::new(0.0);
    let mut shape_ok = true;
    for (j, (q, bl)) in dec.cubes.iter().zip(&dec.b).enumerate() {
        let r_ids = cube_members(mu, &q.center, 6.0 * q.half_side);
        let in_r: std::collections::HashSet<usize> = r_ids.iter().copied().collect();
        let pos = bl.iter().any(|p| p.1 > 0.0);
        let neg = bl.iter().any(|p| p.1 < 0.0);
        if bl.iter().any(|p| !in_r.contains(&p.0)) || (pos && neg) {
            shape_ok = false;
        }
        let sup = bl.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        let mu_r = exact_sum(r_ids.iter().map(|&i| mu.weight(i)));
        let r = ratio(sup * mu_r, var_in(&q.center, q.half_side));
        wsize.max(r, || json!({"cube": j}));
    }
    clauses.push(Clause {
        id: "b_size".into(),
        pass: shape_ok && wsize.value <= c_max,
        constant: wsize.value,
        witness: wsize.witness,
    });

    // Σ_j |b_j| <= c λ pointwise.
    let mut sums = vec![ExactSum::new(); mu.len()];
    for bl in &dec.b {
        for &(i, v) in bl {
            sums[i].add(v.abs());
        }
    }
    let mut wsum = Worst::new(0.0);
    for (i, s) in sums.iter().enumerate() {
        wsum.max(s.value() / lambda, || json!({"point": i}));
    }
    clauses.push(Clause {
        id: "b_sum".into(),
        pass: wsum.value <= c_max,
        constant: wsum.value,
        witness: wsum.witness,
    });

    // Bounded overlap of the cubes.
    let mut counts = vec![0usize; mu.len()];
    for q in &dec.cubes {
        for i in cube_members(mu, &q.center, q.half_side) {
            counts[i] += 1;
        }
    }
    let (arg, max_overlap) = counts
        .iter()
        .enumerate()
        .fold((None, 0usize), |(a, m), (i, &c)| if c > m { (Some(i), c) } else { (a, m) });
    clauses.push(Clause {
        id: "overlap".into(),
        pass: (max_overlap as f64) <= c_max,
        constant: max_overlap as f64,
        witness: arg.map_or(Value::Null, |i| json!({"point": i})),
    });

    // β_j(R_j) = ∫ w_j dν − ∫ b_j dμ = 0.
    let mut wzm = Worst::new(0.0);
    for (j, (q, (bl, wl))) in dec.cubes.iter().zip(dec.b.iter().zip(&dec.w)).enumerate() {
        let r_set: std::collections::HashSet<usize> =
            cube_members(mu, &q.center, 6.0 * q.half_side).into_iter().collect();
        let mut acc = ExactSum::new();
        for &(i, v) in wl {
            if r_set.contains(&i) {
                acc.add(v * nu_net[i]);
            }
        }
        for &(i, v) in bl {
            if r_set.contains(&i) {
                acc.add(-(v * mu.weight(i)));
            }
        }
        let scale = q.w_nu.abs().max(f64::MIN_POSITIVE);
        wzm.max(acc.value().abs() / scale, || json!({"cube": j}));
    }
    clauses.push(Clause {
        id: "zero_mean".into(),
        pass: wzm.value <= 1e-12,
        constant: wzm.value,
        witness: wzm.witness,
    });

    // ν = gμ + Σ_j (w_j ν − b_j μ), atom by atom.
    let mut w_at: BTreeMap<usize, f64> = BTreeMap::new();
    for wl in &dec.w {
        for &(i, v) in wl {
            *w_at.entry(i).or_default() += v;
        }
    }
    let mut b_at = vec![ExactSum::new(); mu.len()];
    for bl in &dec.b {
        for &(i, v) in bl {
            b_at[i].add(v);
        }
    }
    let mut wid = Worst::new(0.0);
    let scale = nu.total_variation().max(f64::MIN_POSITIVE);
    for i in 0..mu.len() {
        let w = mu.weight(i);
        let mut acc = ExactSum::new();
        acc.add(dec.g[i] * w);
        acc.add(w_at.get(&i).copied().unwrap_or(0.0) * nu_net[i]);
        acc.add(-(b_at[i].value() * w));
        acc.add(-nu_net[i]);
        let err = acc.value().abs() / scale;
        wid.max(err, || json!({"point": i}));
    }
    clauses.push(Clause {
        id: "identity".into(),
        pass: wid.value <= 1e-12,
        constant: wid.value,
        witness: wid.witness,
    });

    // ‖g‖∞ <= c λ.
    let mut wg = Worst::new(0.0);
    for (i, &v) in dec.g.iter().enumerate() {
        wg.max(v.abs() / lambda, || json!({"point": i}));
    }
    clauses.push(Clause {
        id: "g_bound".into(),
        pass: wg.value <= c_max,
        constant: wg.value,
        witness: wg.witness,
    });

    let pass = clauses.iter().all(|c| c.pass);
    AuditReport {
        lambda,
        cubes: dec.cubes.len(),
        c_max,
        pass,
        clauses,
    }
}
