use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use rect_core::cz::{cz_audit, cz_decompose, DEFAULT_C_MAX};
use rect_core::density::{make_scale_grid, square_function_from_profile, ScaleGrid};
use rect_core::diagnostics::{analyze_points, select_points, summarize, DiagnosticsConfig};
use rect_core::generators::{
    cantor4, circle, lipschitz_graph, mixture, plane, GeneratedMeasure, Profile, DEFAULT_POINT_BUDGET,
};
use rect_core::io::{read_measure, read_signed, write_measure};
use rect_core::tangent::{blowup_trace, DEFAULT_WINDOW};

use crate::config::{parse_list, FileConfig};
use crate::output::{num, opt_num, sparkline, write_file, write_json, Table};
use crate::{AnalyzeArgs, BlowupArgs, CzArgs, GenerateArgs, ReportArgs};

/// Raised when a decomposition fails its audit.
#[derive(Debug)]
pub struct AuditFailed(pub Vec<String>);

impl std::fmt::Display for AuditFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "audit failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for AuditFailed {}

/// 0 success, 1 IO, 2 validation, 3 audit failure, 4 resolution.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<AuditFailed>().is_some() {
            return 3;
        }
        if let Some(err) = cause.downcast_ref::<rect_core::Error>() {
            return match err {
                rect_core::Error::InsufficientResolution { .. } => 4,
                rect_core::Error::Io { .. } => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn profile_from(cfg: &FileConfig, a: &GenerateArgs) -> Result<Profile> {
    let name = cfg.get(a.profile.clone(), "profile", "sinusoid".to_string())?;
    Ok(match name.as_str() {
        "zero" => Profile::Zero,
        "linear" => Profile::Linear {
            slope: cfg.get(a.slope, "slope", 0.5)?,
        },
        "sinusoid" => Profile::Sinusoid {
            amplitude: cfg.get(a.amplitude, "amplitude", 0.1)?,
        },
        "sawtooth" => Profile::Sawtooth {
            amplitude: cfg.get(a.amplitude, "amplitude", 0.1)?,
            period: cfg.get(a.period, "period", 0.25)?,
        },
        other => bail!("unknown profile `{other}` (expected zero, linear, sinusoid or sawtooth)"),
    })
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = FileConfig::load(a.config.as_deref())?;
    if let Some(p) = &a.params {
        cfg.merge_inline(p)?;
    }
    let kind: String = cfg.require(a.kind.clone(), "kind")?;
    let seed = cfg.get(a.seed, "seed", 0u64)?;
    let out: PathBuf = cfg.get(a.out.clone(), "out", PathBuf::from("measure.csv"))?;
    let n = cfg.get(a.n, "n", 1usize)?;
    let d = cfg.get(a.d, "d", 2usize)?;
    let side = cfg.get(a.side, "side", 1.0)?;
    let step = cfg.get(a.step, "step", 1e-3)?;
    let g = match kind.as_str() {
        "plane" => plane(n, d, side, step)?,
        "graph" => {
            let profile = profile_from(&cfg, &a)?;
            let lip = cfg.opt(a.lipschitz, "lipschitz")?;
            lipschitz_graph(n, d, profile, side, step, lip)?
        }
        "circle" => {
            let radius = cfg.get(a.radius, "R", 1.0)?;
            let samples = cfg.get(a.samples, "samples", 1000usize)?;
            circle(radius, samples)?
        }
        "cantor4" => {
            let depth = cfg.require(a.depth, "depth")?;
            let budget = cfg.get(a.budget, "budget", DEFAULT_POINT_BUDGET)?;
            cantor4(depth, budget)?
        }
        "mixture" => {
            let list: String = cfg.require(a.components.clone(), "components")?;
            let parts = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|p| read_measure(Path::new(p)))
                .collect::<rect_core::Result<Vec<_>>>()?;
            mixture(&parts, n)?
        }
        other => bail!("unknown kind `{other}` (expected plane, graph, circle, cantor4 or mixture)"),
    }
    .with_seed(seed);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_measure(&out, &g)?;
    for w in &g.meta.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: {} points, total mass {}",
        out.display(),
        g.measure.len(),
        num(g.measure.total_mass())
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct AnalyzeConfig {
    measure: String,
    octaves: usize,
    m: usize,
    safety: f64,
    r_max: Option<f64>,
    points: String,
    seed: u64,
    tau: f64,
    floor: f64,
    slope_octaves: usize,
    margin: f64,
    smoothed: bool,
}

impl AnalyzeConfig {
    fn to_flat(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "measure = {}", self.measure);
        let _ = writeln!(s, "octaves = {}", self.octaves);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "safety = {}", self.safety);
        if let Some(r) = self.r_max {
            let _ = writeln!(s, "r_max = {r}");
        }
        let _ = writeln!(s, "points = {}", self.points);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "floor = {}", self.floor);
        let _ = writeln!(s, "slope_octaves = {}", self.slope_octaves);
        let _ = writeln!(s, "margin = {}", self.margin);
        let _ = writeln!(s, "smoothed = {}", self.smoothed);
        s
    }
}

fn analysis_grid(g: &GeneratedMeasure, c: &AnalyzeConfig) -> Result<ScaleGrid> {
    let mu = &g.measure;
    Ok(match c.r_max {
        None => make_scale_grid(mu, c.octaves, c.m, c.safety)?,
        Some(r) => {
            let cap = mu.diameter() / 4.0;
            if !(r > 0.0 && r <= cap) {
                bail!("r_max = {r} must lie in (0, diam/4 = {cap}]");
            }
            if !(c.safety >= 1.0) {
                bail!("safety must be at least 1, got {}", c.safety);
            }
            let h = mu.resolution();
            ScaleGrid::clamped(r, 10.0 * c.safety * h, c.octaves, c.m, h)?
        }
    })
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let cfg = FileConfig::load(a.config.as_deref())?;
    let defaults = DiagnosticsConfig::default();
    let measure: PathBuf = cfg.require(a.measure.clone(), "measure")?;
    let c = AnalyzeConfig {
        measure: measure.display().to_string(),
        octaves: cfg.get(a.octaves, "octaves", 8)?,
        m: cfg.get(a.m, "m", 4)?,
        safety: cfg.get(a.safety, "safety", 1.0)?,
        r_max: cfg.opt(a.r_max, "r_max")?,
        points: cfg.get(a.points.clone(), "points", "all".to_string())?,
        seed: cfg.get(a.seed, "seed", 0)?,
        tau: cfg.get(a.tau, "tau", defaults.tau)?,
        floor: cfg.get(a.floor, "floor", defaults.floor)?,
        slope_octaves: cfg.get(a.slope_octaves, "slope_octaves", defaults.slope_octaves)?,
        margin: cfg.get(a.margin, "margin", defaults.boundary_margin)?,
        smoothed: cfg.get(a.smoothed, "smoothed", false)?,
    };
    let out: PathBuf = cfg.get(a.out.clone(), "out", PathBuf::from("analysis"))?;
    let k = match c.points.as_str() {
        "all" => None,
        s => Some(
            s.parse::<usize>()
                .map_err(|_| anyhow!("points must be `all` or a positive count, got `{s}`"))?,
        ),
    };
    if k == Some(0) {
        bail!("points must be `all` or a positive count");
    }
    let dcfg = DiagnosticsConfig {
        tau: c.tau,
        floor: c.floor,
        slope_octaves: c.slope_octaves,
        boundary_margin: c.margin,
    };

    let g = read_measure(&measure)?;
    let grid = analysis_grid(&g, &c)?;
    let ids = select_points(g.measure.len(), k, c.seed);
    let results = analyze_points(&g.measure, Some(&g.meta), &grid, &ids, &dcfg, c.smoothed)?;
    ensure_dir(&out)?;

    let mut profile = Table::new(&["point_id", "r", "theta", "delta", "smoothed_delta"]);
    let mut sq_header: Vec<String> = ["point_id", "s2", "slope", "theta_lo", "theta_hi", "boundary", "smoothed_s2"]
        .map(String::from)
        .to_vec();
    sq_header.extend((0..grid.octaves).map(|o| format!("s2_octave{o}")));
    let sq_refs: Vec<&str> = sq_header.iter().map(String::as_str).collect();
    let mut squarefn = Table::new(&sq_refs);
    let mut verdicts = Table::new(&[
        "point_id",
        "s2",
        "slope",
        "theta_lo",
        "theta_hi",
        "finest_max_delta",
        "boundary",
        "verdict",
    ]);
    for (prof, v) in &results {
        for e in &prof.entries {
            profile.row(&[
                v.point_id.to_string(),
                num(e.r),
                num(e.theta),
                num(e.delta),
                opt_num(e.smoothed_delta),
            ]);
        }
        let sf = square_function_from_profile(prof, &grid)?;
        let mut row = vec![
            v.point_id.to_string(),
            num(sf.s2),
            num(v.slope),
            num(v.theta_lo),
            num(v.theta_hi),
            v.boundary.to_string(),
            opt_num(sf.smoothed_s2),
        ];
        row.extend(sf.s2_partial.iter().map(|&p| num(p)));
        squarefn.row(&row);
        verdicts.row(&[
            v.point_id.to_string(),
            num(v.s2),
            num(v.slope),
            num(v.theta_lo),
            num(v.theta_hi),
            num(v.finest_max_delta),
            v.boundary.to_string(),
            v.verdict.as_str().to_string(),
        ]);
    }
    profile.write(&out.join("profile.csv"))?;
    squarefn.write(&out.join("squarefn.csv"))?;
    verdicts.write(&out.join("verdicts.csv"))?;

    let pv: Vec<_> = results.into_iter().map(|(_, v)| v).collect();
    let summary = summarize(&pv, |i| g.meta.label_of(i))?;
    let mut report = json!({
        "measure": {
            "file": c.measure,
            "generator": g.meta.generator,
            "params": g.meta.params,
            "seed": g.meta.seed,
            "rectifiable": g.meta.rectifiable,
            "points": g.measure.len(),
            "n": g.measure.intrinsic_dim(),
            "d": g.measure.ambient_dim(),
            "h": g.measure.resolution(),
        },
        "config": c,
        "grid": {
            "r_max": grid.r_max,
            "r_min": grid.r_min,
            "m": grid.m,
            "octaves": grid.octaves,
            "requested_octaves": grid.requested_octaves,
            "resolution_cut": 10.0 * c.safety * g.measure.resolution(),
        },
        "calibration": "tau and floor are finite-scale calibrations, not constants of the theory",
        "points": summary.points,
        "counts": summary.counts,
        "fractions": summary.fractions,
        "medians": summary.medians,
    });
    if let Some(acc) = summary.accuracy {
        report["accuracy"] = json!(acc);
        report["scored_points"] = json!(summary.scored_points);
    }
    write_json(&out.join("report.json"), &report)?;
    write_file(&out.join("run.conf"), &c.to_flat())?;

    if grid.octaves < grid.requested_octaves {
        eprintln!(
            "note: resolution clamp kept {} of {} requested octaves (r_min = {})",
            grid.octaves,
            grid.requested_octaves,
            num(grid.r_min)
        );
    }
    print!("{}", summary_text(&out.display().to_string(), &report));
    Ok(())
}

pub fn czdemo(a: CzArgs) -> Result<()> {
    let cfg = FileConfig::load(a.config.as_deref())?;
    let nu_path: PathBuf = cfg.require(a.nu.clone(), "nu")?;
    let mu_path: PathBuf = cfg.require(a.mu.clone(), "mu")?;
    let lambda: f64 = cfg.require(a.lambda, "lambda")?;
    let c_max = cfg.get(a.c_max, "c_max", DEFAULT_C_MAX)?;
    let out: PathBuf = cfg.get(a.out.clone(), "out", PathBuf::from("czdemo"))?;

    let mu = read_measure(&mu_path)?.measure;
    let nu = read_signed(&nu_path, mu.intrinsic_dim(), mu.resolution())?;
    let dec = cz_decompose(&nu, &mu, lambda)?;
    let audit = cz_audit(&dec, &nu, &mu, c_max);
    ensure_dir(&out)?;
    write_json(&out.join("decomposition.json"), &dec)?;
    write_json(&out.join("audit.json"), &audit)?;
    println!(
        "lambda {}: {} cubes, audit {}",
        num(lambda),
        dec.cubes.len(),
        if audit.pass { "passed" } else { "FAILED" }
    );
    if !audit.pass {
        return Err(AuditFailed(audit.failures().into_iter().map(String::from).collect()).into());
    }
    Ok(())
}

pub fn blowup(a: BlowupArgs) -> Result<()> {
    let cfg = FileConfig::load(a.config.as_deref())?;
    let measure: PathBuf = cfg.require(a.measure.clone(), "measure")?;
    let g = read_measure(&measure)?;
    let mu = &g.measure;
    let point: Option<usize> = cfg.opt(a.point, "point")?;
    let x = match (cfg.opt(a.x.clone(), "x")?, point) {
        (Some(s), _) => parse_list(&s)?,
        (None, Some(i)) => {
            if i >= mu.len() {
                bail!("point {i} out of range (measure has {} points)", mu.len());
            }
            mu.point(i).to_vec()
        }
        (None, None) => bail!("give the base point with `x` or `point`"),
    };
    let radii = match cfg.opt::<String>(a.radii.clone(), "radii")? {
        Some(s) => parse_list(&s)?,
        None => {
            let r_max = cfg.get(a.r_max, "r_max", mu.diameter() / 4.0)?;
            let count = cfg.get(a.count, "count", 6usize)?;
            (0..count).map(|k| r_max * 0.5f64.powi(k as i32)).collect()
        }
    };
    if radii.is_empty() {
        bail!("no radii given");
    }
    let window = cfg.get(a.window, "window", DEFAULT_WINDOW)?;
    let probes = cfg.get(a.probes, "probes", 16usize)?;
    let seed = cfg.get(a.seed, "seed", 0u64)?;
    let out: PathBuf = cfg.get(a.out.clone(), "out", PathBuf::from("blowup"))?;

    let trace = blowup_trace(mu, &x, &radii, window, probes, seed)?;
    ensure_dir(&out)?;
    let id = point.map(|i| i.to_string()).unwrap_or_default();
    let mut t = Table::new(&["point_id", "r", "beta2", "c_fit", "max_rel_dev"]);
    for row in &trace.rows {
        t.row(&[id.clone(), num(row.r), num(row.beta2), num(row.c_fit), num(row.max_rel_dev)]);
    }
    t.write(&out.join("trace.csv"))?;
    write_json(&out.join("trace.json"), &trace)?;
    let pts: Vec<(f64, f64)> = trace.rows.iter().map(|r| (r.r, r.beta2)).collect();
    write_file(&out.join("trace.svg"), &sparkline(&pts, "beta2 against r (log-log)"))?;
    match trace.log_slope {
        Some(s) => println!("{} radii, log-log beta2 slope {}", trace.rows.len(), num(s)),
        None => println!("{} radii, log-log slope undefined", trace.rows.len()),
    }
    Ok(())
}

fn summary_text(label: &str, report: &Value) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{label}");
    let m = &report["measure"];
    let _ = writeln!(
        s,
        "  measure    {} ({} points, n = {}, d = {})",
        m["generator"].as_str().unwrap_or("?"),
        m["points"],
        m["n"],
        m["d"]
    );
    let g = &report["grid"];
    let _ = writeln!(
        s,
        "  grid       r in [{}, {}], {} of {} octaves, m = {}",
        g["r_min"], g["r_max"], g["octaves"], g["requested_octaves"], g["m"]
    );
    if let Some(fr) = report["fractions"].as_object() {
        for (k, v) in fr {
            let _ = writeln!(s, "  {:<24} {:.4}", k, v.as_f64().unwrap_or(f64::NAN));
        }
    }
    let md = &report["medians"];
    let _ = writeln!(
        s,
        "  medians    s2 {}  slope {}  finest max|delta| {}",
        md["s2"], md["slope"], md["finest_max_delta"]
    );
    if let Some(acc) = report.get("accuracy") {
        let _ = writeln!(s, "  accuracy   {} over {} points", acc, report["scored_points"]);
    }
    s
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut text = String::new();
    for dir in &a.dirs {
        let path = dir.join("report.json");
        let raw = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let value: Value = serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
        if value.get("fractions").is_none() {
            bail!("{} is not an analysis report", path.display());
        }
        text.push_str(&summary_text(&dir.display().to_string(), &value));
    }
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}
