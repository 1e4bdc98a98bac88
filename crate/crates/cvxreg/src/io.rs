//! On-disk formats: observation and grid CSV, model and metric JSON.
//!
//! CSV floats are written with 17 significant digits; JSON floats use the shortest
//! representation that parses back to the same bits. Both round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use cvxreg_core::constraints::Certification;
use cvxreg_core::{AdmmFit, FunctionClass, ObservationSet, Smoothness, Triplets};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// CSV float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(path: &Path, row: usize, field: &str) -> Result<f64, CliError> {
    field
        .trim()
        .parse()
        .map_err(|_| CliError::format(path, format!("row {row}: {field:?} is not a number")))
}

pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<(), CliError> {
    let d = obs.d();
    let mut out = String::new();
    let header: Vec<String> = (0..d).map(|k| format!("x_{k}")).chain(["y".into()]).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..obs.n() {
        let row: Vec<String> = obs
            .point(i)
            .iter()
            .chain([&obs.values()[i]])
            .map(|v| fmt_f64(*v))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Reads `x_0,...,x_{d-1},y`. Shape problems are format errors; duplicate sites or
/// non-finite values are validation errors.
pub fn read_observations(path: &Path) -> Result<ObservationSet, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let d = header.len().checked_sub(1).filter(|d| *d >= 1).ok_or_else(|| {
        CliError::format(path, "expected columns x_0,...,x_{d-1},y")
    })?;
    for (k, name) in header.iter().enumerate() {
        let expected = if k == d { "y".to_string() } else { format!("x_{k}") };
        if name.trim() != expected {
            return Err(CliError::format(path, format!("column {k} is {name:?}, expected {expected:?}")));
        }
    }
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != d + 1 {
            return Err(CliError::format(path, format!("row {row} has {} fields", record.len())));
        }
        for k in 0..d {
            points.push(parse_f64(path, row, &record[k])?);
        }
        values.push(parse_f64(path, row, &record[d])?);
    }
    ObservationSet::from_flat(d, points, values).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => CliError::format(path, format!("{other:?}")),
        }
    } else {
        CliError::format(path, e)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::format(path, e))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::format(path, e))
}

/// `L` as a JSON number, or the string `"inf"`.
mod smoothness_token {
    use cvxreg_core::Smoothness;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &Smoothness, ser: S) -> Result<S::Ok, S::Error> {
        match s {
            Smoothness::Finite(l) => ser.serialize_f64(*l),
            Smoothness::Infinite => ser.serialize_str("inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Smoothness, D::Error> {
        match serde_json::Value::deserialize(de)? {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Smoothness::Finite)
                .ok_or_else(|| D::Error::custom("L is not representable as f64")),
            serde_json::Value::String(s) if s == "inf" => Ok(Smoothness::Infinite),
            other => Err(D::Error::custom(format!("L must be a number or \"inf\", got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub mu: f64,
    #[serde(rename = "L", with = "smoothness_token")]
    pub l: Smoothness,
}

impl ClassSpec {
    pub fn to_class(self) -> Result<FunctionClass, CliError> {
        FunctionClass::new(self.mu, self.l).map_err(CliError::invalid)
    }
}

impl From<FunctionClass> for ClassSpec {
    fn from(c: FunctionClass) -> Self {
        Self {
            mu: c.mu(),
            l: c.smoothness(),
        }
    }
}

/// Iteration summary; wall times are left out so that model files are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub objective: f64,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub class: ClassSpec,
    pub d: usize,
    pub sites: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub certified: bool,
    pub certify_tol: f64,
    pub worst_residual: f64,
    pub worst_pair: [usize; 2],
    pub trace: TraceSummary,
}

impl ModelFile {
    /// `fit.model` holds the iterate that is reported (the best one when not converged).
    pub fn new(fit: &AdmmFit, obs: &ObservationSet, cert: &Certification, certify_tol: f64) -> Self {
        let t = fit.model.triplets();
        let d = t.d();
        let objective = obs
            .values()
            .iter()
            .zip(t.values())
            .map(|(y, f)| (y - f) * (y - f))
            .sum();
        Self {
            schema_version: SCHEMA_VERSION,
            class: fit.model.class().into(),
            d,
            sites: t.sites().chunks_exact(d).map(<[f64]>::to_vec).collect(),
            f: t.values().to_vec(),
            g: t.gradients().chunks_exact(d).map(<[f64]>::to_vec).collect(),
            certified: cert.certified,
            certify_tol,
            worst_residual: cert.worst.residual,
            worst_pair: [cert.worst.i, cert.worst.j],
            trace: TraceSummary {
                iterations: fit.iterations(),
                converged: fit.converged,
                final_residual: fit.final_residual(),
                objective,
                residuals: fit.trace.iter().map(|e| e.residual).collect(),
            },
        }
    }

    pub fn triplets(&self, path: &Path) -> Result<Triplets, CliError> {
        let bad = |m: String| CliError::format(path, m);
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.d == 0 || self.sites.iter().chain(&self.g).any(|v| v.len() != self.d) {
            return Err(bad(format!("sites and gradients must have {} coordinates", self.d)));
        }
        Triplets::new(
            self.d,
            self.sites.concat(),
            self.g.concat(),
            self.f.clone(),
        )
        .map_err(|e| bad(e.to_string()))
    }
}

/// Grid evaluation written by `eval`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub x: f64,
    pub phi_hat: f64,
    pub phi_true: Option<f64>,
    pub converged: bool,
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<(), CliError> {
    let with_truth = rows.iter().any(|r| r.phi_true.is_some());
    let mut out = String::from(if with_truth { "x,phi_hat,phi_true,converged\n" } else { "x,phi_hat,converged\n" });
    for r in rows {
        out.push_str(&fmt_f64(r.x));
        out.push(',');
        out.push_str(&fmt_f64(r.phi_hat));
        if let Some(t) = r.phi_true {
            out.push(',');
            out.push_str(&fmt_f64(t));
        }
        out.push_str(if r.converged { ",1\n" } else { ",0\n" });
    }
    write_file(path, out.as_bytes())
}

pub fn read_grid(path: &Path) -> Result<Vec<GridRow>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let with_truth = match header.iter().collect::<Vec<_>>().as_slice() {
        ["x", "phi_hat", "phi_true", "converged"] => true,
        ["x", "phi_hat", "converged"] => false,
        _ => return Err(CliError::format(path, "unexpected grid header")),
    };
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let last = &record[record.len() - 1];
        rows.push(GridRow {
            x: parse_f64(path, row, &record[0])?,
            phi_hat: parse_f64(path, row, &record[1])?,
            phi_true: if with_truth { Some(parse_f64(path, row, &record[2])?) } else { None },
            converged: last == "1",
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFile {
    pub schema_version: u32,
    pub true_fn: String,
    pub range: [f64; 2],
    pub n_s: usize,
    #[serde(rename = "E")]
    pub e: f64,
}

/// `<path>` with `suffix` appended to the file name.
pub fn sidecar(path: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}
