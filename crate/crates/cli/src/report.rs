//! Byte-stable report files.
//!
//! Every floating-point number is written with 17 significant digits in
//! scientific notation, so output depends only on the computed values.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use pq_spectra::{Field64, Mesh64, Threshold64};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::config::{DomainKind, RunPlan};
use crate::sweep::{Status, SweepReport, SweepRow};

pub const CSV_HEADER: &str = "lambda,status,case_tag,J_value,T1,T2,T3,weak_residual,iterations,wall_ms";

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct ReportError {
    pub path: PathBuf,
    pub source: io::Error,
}

fn at(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError { path: path.to_path_buf(), source }
}

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// JSON number with the fixed formatting; non-finite values become `null`.
#[derive(Debug, Clone, Copy)]
struct Num(f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(fmt_num(self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

fn csv_line(row: &SweepRow) -> String {
    let fields = [
        fmt_num(row.lambda),
        row.status.label().to_string(),
        row.case_tag.map(|c| c.label().to_string()).unwrap_or_default(),
        fmt_opt(row.j_value),
        fmt_opt(row.t1),
        fmt_opt(row.t2),
        fmt_opt(row.t3),
        fmt_opt(row.weak_residual),
        row.iterations.to_string(),
        row.wall_ms.to_string(),
    ];
    fields.join(",")
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &report.rows {
        out.push_str(&csv_line(row));
        out.push('\n');
    }
    out
}

/// Node coordinates followed by the nodal value, one node per line.
pub fn field_dat(mesh: &Mesh64, field: &Field64) -> String {
    let dim = mesh.dimension();
    let mut out = String::new();
    for (x, v) in mesh.nodes().iter().zip(field.values()) {
        for c in &x[..dim] {
            out.push_str(&fmt_num(*c));
            out.push(' ');
        }
        out.push_str(&fmt_num(*v));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct ProblemJson {
    domain: &'static str,
    bounds: Vec<Num>,
    resolution: Vec<usize>,
    p: Num,
    q: Num,
    nodes: usize,
    elements: usize,
}

#[derive(Serialize)]
struct KktJson {
    lambda_star: Num,
    multipliers: Vec<Num>,
    stationarity_residual: Num,
    multiplier_scaling: String,
}

#[derive(Serialize)]
struct ThresholdJson {
    lambda1: Num,
    iterations: usize,
    cone_residual: Num,
    mass_residual: Num,
    weak_residual: Num,
    restart_values: Vec<Num>,
    kkt: KktJson,
}

impl ThresholdJson {
    fn new(t: &Threshold64) -> Self {
        Self {
            lambda1: Num(t.lambda1),
            iterations: t.iterations,
            cone_residual: Num(t.constraint_residuals.0),
            mass_residual: Num(t.constraint_residuals.1),
            weak_residual: Num(t.weak_residual),
            restart_values: t.restart_values.iter().copied().map(Num).collect(),
            kkt: KktJson {
                lambda_star: Num(t.kkt.lambda_star),
                multipliers: t.kkt.multipliers.iter().copied().map(Num).collect(),
                stationarity_residual: Num(t.kkt.stationarity_residual),
                multiplier_scaling: t.kkt.multiplier_scaling.clone(),
            },
        }
    }
}

#[derive(Serialize)]
struct ConsistencyJson {
    passed: bool,
    samples: usize,
    scale: Num,
    lambda1: Num,
    lambda_1q: Num,
    min_rayleigh_pq: Num,
    max_relative_gap: Num,
    pointwise_ordering: bool,
    above_threshold: bool,
    thresholds_equal: Option<bool>,
    lower_bound: Option<bool>,
    error: Option<String>,
}

#[derive(Serialize)]
struct CertificateJson {
    margin: Num,
    min_quotient: Num,
    probe_count: usize,
}

#[derive(Serialize)]
struct RowJson {
    index: usize,
    lambda: Num,
    status: &'static str,
    case_tag: Option<&'static str>,
    j_value: Option<Num>,
    cone_residual: Option<Num>,
    m_lambda: Option<Num>,
    certificate: Option<CertificateJson>,
    eigenfunction: Option<String>,
    message: Option<String>,
}

#[derive(Serialize)]
struct SummaryJson {
    config_hash: String,
    seed: u64,
    problem: ProblemJson,
    lambda1: Num,
    lambda_1q: Option<Num>,
    threshold: ThresholdJson,
    consistency: ConsistencyJson,
    rows: Vec<RowJson>,
}

fn eigenfunction_name(k: usize) -> String {
    format!("eigenfunction_{k}.dat")
}

fn writes_eigenfunction(plan: &RunPlan, row: &SweepRow) -> bool {
    plan.outputs.eigenfunctions
        && row.eigenfunction.is_some()
        && matches!(row.status, Status::Eigenpair | Status::EigenvalueZero)
}

fn problem_json(plan: &RunPlan) -> ProblemJson {
    ProblemJson {
        domain: match plan.problem.domain {
            DomainKind::Interval => "interval",
            DomainKind::Rectangle => "rectangle",
        },
        bounds: plan.problem.bounds.iter().copied().map(Num).collect(),
        resolution: plan.problem.resolution.clone(),
        p: Num(plan.problem.p),
        q: Num(plan.problem.q),
        nodes: plan.spec.node_count(),
        elements: plan.spec.mesh.elements().len(),
    }
}

pub fn summary_json(report: &SweepReport, plan: &RunPlan) -> String {
    let consistency = match &report.consistency {
        Ok(c) => ConsistencyJson {
            passed: c.passed,
            samples: c.samples,
            scale: Num(c.scale),
            lambda1: Num(c.lambda1),
            lambda_1q: Num(c.lambda_1q),
            min_rayleigh_pq: Num(c.min_rayleigh_pq),
            max_relative_gap: Num(c.max_relative_gap),
            pointwise_ordering: c.pointwise_ordering,
            above_threshold: c.above_threshold,
            thresholds_equal: c.thresholds_equal,
            lower_bound: c.lower_bound,
            error: None,
        },
        Err(e) => ConsistencyJson {
            passed: false,
            samples: 0,
            scale: Num(f64::NAN),
            lambda1: Num(report.threshold.lambda1),
            lambda_1q: Num(f64::NAN),
            min_rayleigh_pq: Num(f64::NAN),
            max_relative_gap: Num(f64::NAN),
            pointwise_ordering: false,
            above_threshold: false,
            thresholds_equal: None,
            lower_bound: None,
            error: Some(e.clone()),
        },
    };
    let rows = report
        .rows
        .iter()
        .enumerate()
        .map(|(k, row)| RowJson {
            index: k,
            lambda: Num(row.lambda),
            status: row.status.label(),
            case_tag: row.case_tag.map(|c| c.label()),
            j_value: row.j_value.map(Num),
            cone_residual: row.cone_residual.map(Num),
            m_lambda: row.m_lambda.map(Num),
            certificate: row.certificate.as_ref().map(|c| CertificateJson {
                margin: Num(c.margin),
                min_quotient: Num(c.min_quotient),
                probe_count: c.probe_count,
            }),
            eigenfunction: writes_eigenfunction(plan, row).then(|| eigenfunction_name(k)),
            message: row.message.clone(),
        })
        .collect();
    let summary = SummaryJson {
        config_hash: report.provenance.config_hash.clone(),
        seed: report.provenance.seed,
        problem: problem_json(plan),
        lambda1: Num(report.threshold.lambda1),
        lambda_1q: report.consistency.as_ref().ok().map(|c| Num(c.lambda_1q)),
        threshold: ThresholdJson::new(&report.threshold),
        consistency,
        rows,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

/// JSON report for a threshold-only run.
pub fn threshold_json(threshold: &Threshold64, plan: &RunPlan) -> String {
    #[derive(Serialize)]
    struct Doc {
        config_hash: String,
        seed: u64,
        problem: ProblemJson,
        threshold: ThresholdJson,
    }
    let doc = Doc {
        config_hash: plan.config_hash.clone(),
        seed: plan.seed(),
        problem: problem_json(plan),
        threshold: ThresholdJson::new(threshold),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("threshold serializes");
    text.push('\n');
    text
}

/// Creates `dir` when missing, but never its ancestors.
pub fn prepare_dir(dir: &Path) -> Result<(), ReportError> {
    if dir.is_dir() {
        return Ok(());
    }
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        return Err(ReportError {
            path: dir.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, format!("parent directory {} does not exist", parent.display())),
        });
    }
    fs::create_dir(dir).map_err(at(dir))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(at(&path))?;
    Ok(path)
}

/// Writes `sweep.csv`, `summary.json` and one `eigenfunction_<k>.dat` per
/// eigenpair row, returning the paths written.
pub fn emit_outputs(report: &SweepReport, plan: &RunPlan) -> Result<Vec<PathBuf>, ReportError> {
    let dir = &plan.outputs.dir;
    prepare_dir(dir)?;
    let mut written = vec![
        write(dir, "sweep.csv", &sweep_csv(report))?,
        write(dir, "summary.json", &summary_json(report, plan))?,
    ];
    for (k, row) in report.rows.iter().enumerate() {
        if writes_eigenfunction(plan, row) {
            let field = row.eigenfunction.as_ref().expect("checked above");
            written.push(write(dir, &eigenfunction_name(k), &field_dat(&plan.spec.mesh, field))?);
        }
    }
    Ok(written)
}

pub fn emit_threshold(threshold: &Threshold64, plan: &RunPlan) -> Result<Vec<PathBuf>, ReportError> {
    let dir = &plan.outputs.dir;
    prepare_dir(dir)?;
    Ok(vec![
        write(dir, "threshold.json", &threshold_json(threshold, plan))?,
        write(dir, "minimizer.dat", &field_dat(&plan.spec.mesh, &threshold.minimizer))?,
    ])
}

#[derive(Debug, thiserror::Error)]
pub enum FieldFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}, line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

/// Reads a `.dat` nodal field, checking coordinates against `mesh`.
pub fn read_field(path: &Path, mesh: &Mesh64) -> Result<Field64, FieldFileError> {
    let text = fs::read_to_string(path).map_err(|source| FieldFileError::Io { path: path.to_path_buf(), source })?;
    let bad = |line: usize, message: String| FieldFileError::Format { path: path.to_path_buf(), line, message };
    let dim = mesh.dimension();
    let nodes = mesh.nodes();
    let mut values = Vec::with_capacity(nodes.len());
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| bad(i + 1, format!("{t:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        if cols.len() != dim + 1 {
            return Err(bad(i + 1, format!("expected {} columns, found {}", dim + 1, cols.len())));
        }
        let k = values.len();
        let Some(x) = nodes.get(k) else {
            return Err(bad(i + 1, format!("more rows than the {} mesh nodes", nodes.len())));
        };
        let scale = x[..dim].iter().fold(1.0f64, |m, c| m.max(c.abs()));
        if (0..dim).any(|d| (cols[d] - x[d]).abs() > 1e-9 * scale) {
            return Err(bad(i + 1, format!("coordinates do not match mesh node {k}")));
        }
        values.push(cols[dim]);
    }
    if values.len() != nodes.len() {
        return Err(bad(text.lines().count(), format!("expected {} nodes, found {}", nodes.len(), values.len())));
    }
    Field64::new(mesh, values).map_err(|e| bad(0, e.to_string()))
}
