//! Measure files: a CSV of `x0,...,x{d-1},w` rows plus a JSON sidecar with
//! the dimensions, resolution and generator metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::generators::{Component, GeneratedMeasure, MeasureMeta};
use crate::measure::{DiscreteMeasure, SignedMeasure};
use crate::numeric::fmt_f64;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    d: usize,
    n: usize,
    h: f64,
    generator: String,
    params: Value,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    rectifiable: Option<bool>,
    #[serde(default)]
    warnings: Vec<String>,
    #[serde(default)]
    components: Vec<Component>,
}

/// Path of the sidecar belonging to a measure CSV: same stem, `.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn write_rows(path: &Path, d: usize, rows: impl Iterator<Item = (Vec<f64>, f64)>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    header.push("w".into());
    wtr.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (p, w) in rows {
        let mut rec: Vec<String> = p.iter().map(|&c| fmt_f64(c)).collect();
        rec.push(fmt_f64(w));
        wtr.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(io_err(path))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => parse_err(path, format!("{other:?}")),
        }
    } else {
        parse_err(path, e.to_string())
    }
}

/// Reads rows of width `d + 1`. Returns coordinates and weights.
fn read_rows(path: &Path, d: Option<usize>) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let width = rdr.headers().map_err(|e| csv_err(path, e))?.len();
    if width < 2 {
        return Err(parse_err(path, format!("header has {width} columns, need at least 2")));
    }
    let d = match d {
        Some(d) if d + 1 != width => {
            return Err(parse_err(path, format!("header has {width} columns but d + 1 = {}", d + 1)))
        }
        Some(d) => d,
        None => width - 1,
    };
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != d + 1 {
            return Err(parse_err(
                path,
                format!("row {} has {} fields, expected {}", line + 1, rec.len(), d + 1),
            ));
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, format!("row {}: '{field}' is not a number", line + 1)))?;
            if k < d {
                coords.push(v);
            } else {
                weights.push(v);
            }
        }
    }
    Ok((d, coords, weights))
}

/// Writes `<path>` and its sidecar.
pub fn write_measure(path: &Path, g: &GeneratedMeasure) -> Result<()> {
    let m = &g.measure;
    write_rows(
        path,
        m.ambient_dim(),
        m.points().zip(m.weights()).map(|(p, &w)| (p.to_vec(), w)),
    )?;
    let side = Sidecar {
        d: m.ambient_dim(),
        n: m.intrinsic_dim(),
        h: m.resolution(),
        generator: g.meta.generator.clone(),
        params: g.meta.params.clone(),
        seed: g.meta.seed,
        rectifiable: g.meta.rectifiable,
        warnings: g.meta.warnings.clone(),
        components: g.meta.components.clone(),
    };
    let sc = sidecar_path(path);
    let text = serde_json::to_string_pretty(&side).map_err(|e| parse_err(&sc, e.to_string()))?;
    fs::write(&sc, text + "\n").map_err(io_err(&sc))
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let sc = sidecar_path(path);
    if !sc.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&sc).map_err(io_err(&sc))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| parse_err(&sc, e.to_string()))
}

/// Reads a measure and its sidecar, which must exist.
pub fn read_measure(path: &Path) -> Result<GeneratedMeasure> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }
    let side = read_sidecar(path)?
        .ok_or_else(|| parse_err(&sidecar_path(path), "sidecar file is missing"))?;
    let (d, coords, weights) = read_rows(path, Some(side.d))?;
    let measure = DiscreteMeasure::new(coords, weights, side.n, d, side.h)?;
    Ok(GeneratedMeasure {
        measure,
        meta: MeasureMeta {
            generator: side.generator,
            params: side.params,
            seed: side.seed,
            rectifiable: side.rectifiable,
            warnings: side.warnings,
            components: side.components,
        },
    })
}

/// Reads a signed measure. Rows with negative weight go to the negative
/// part. The sidecar is optional; without it the fallback `n` and `h` apply.
pub fn read_signed(path: &Path, fallback_n: usize, fallback_h: f64) -> Result<SignedMeasure> {
    let side = read_sidecar(path)?;
    let (d, coords, weights) = read_rows(path, side.as_ref().map(|s| s.d))?;
    let (n, h) = side.map_or((fallback_n, fallback_h), |s| (s.n, s.h));
    let points: Vec<Vec<f64>> = coords.chunks_exact(d).map(<[f64]>::to_vec).collect();
    SignedMeasure::from_atoms(&points, &weights, n, d, h)
}

/// Writes a signed measure as one CSV with signed weights, positive part
/// first.
pub fn write_signed(path: &Path, nu: &SignedMeasure) -> Result<()> {
    write_rows(path, nu.ambient_dim(), nu.atoms().map(|(p, w)| (p.to_vec(), w)))
}
