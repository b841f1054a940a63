//! TOML run configuration.
//!
//! ```toml
//! [problem]
//! domain = "interval"          # or "rectangle"
//! bounds = [0.0, 1.0]          # [x0, x1] or [x0, x1, y0, y1]
//! resolution = [256]           # [n] or [nx, ny]
//! p = 1.5
//! q = 3.0
//! weight_a = { kind = "constant", value = 1.0 }
//! weight_b = { kind = "constant", value = 0.0 }
//!
//! [lambda_grid]
//! multipliers = [0.0, 0.5, 1.0, 2.0]   # or `values`, or `count` + range
//!
//! [solver]
//! seed = 0
//!
//! [output]
//! dir = "out"
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pq_spectra::{
    build_interval_mesh, build_rectangle_mesh, validate_problem, weight_from_expression, Error as CoreError, Hypothesis,
    Options64, ProblemSpec, Spec64, WeightExpr, WeightTarget,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("hypotheses violated: {}", labels(.0))]
    Hypotheses(Vec<Hypothesis>, String),
}

fn labels(h: &[Hypothesis]) -> String {
    h.iter().map(|h| h.label()).collect::<Vec<_>>().join(", ")
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Interval,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightDecl {
    Constant {
        value: f64,
    },
    /// Constant `value` on the box `[x_min, x_max) x [y_min, y_max)`;
    /// omitted bounds are unbounded.
    Indicator {
        value: f64,
        x_min: Option<f64>,
        x_max: Option<f64>,
        y_min: Option<f64>,
        y_max: Option<f64>,
    },
    Table {
        values: Vec<f64>,
    },
}

impl WeightDecl {
    fn to_expr(&self) -> WeightExpr<f64> {
        match self {
            WeightDecl::Constant { value } => WeightExpr::Constant(*value),
            WeightDecl::Indicator { value, x_min, x_max, y_min, y_max } => WeightExpr::Indicator {
                lower: [*x_min, *y_min],
                upper: [*x_max, *y_max],
                value: *value,
            },
            WeightDecl::Table { values } => WeightExpr::NodalTable(values.clone()),
        }
    }
}

fn default_a() -> WeightDecl {
    WeightDecl::Constant { value: 1.0 }
}

fn default_b() -> WeightDecl {
    WeightDecl::Constant { value: 0.0 }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    domain: DomainKind,
    bounds: Vec<f64>,
    resolution: Vec<usize>,
    p: f64,
    q: f64,
    #[serde(default = "default_a")]
    weight_a: WeightDecl,
    #[serde(default = "default_b")]
    weight_b: WeightDecl,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    values: Option<Vec<f64>>,
    multipliers: Option<Vec<f64>>,
    count: Option<usize>,
    min_multiplier: Option<f64>,
    max_multiplier: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    tol: Option<f64>,
    constraint_tol: Option<f64>,
    max_iters: Option<usize>,
    newton_iters: Option<usize>,
    restarts: Option<usize>,
    seed: Option<u64>,
    probes: Option<usize>,
    boundary_tol: Option<f64>,
    consistency_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    eigenfunctions: Option<bool>,
    timings: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    problem: ProblemSection,
    #[serde(default)]
    lambda_grid: GridSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
}

/// Spectral parameters to sweep, either absolute or relative to `lambda_1`.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    Values(Vec<f64>),
    Multipliers(Vec<f64>),
}

impl LambdaGrid {
    pub fn len(&self) -> usize {
        match self {
            LambdaGrid::Values(v) | LambdaGrid::Multipliers(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Absolute values sorted ascending.
    pub fn resolve(&self, lambda1: f64) -> Vec<f64> {
        let mut out: Vec<f64> = match self {
            LambdaGrid::Values(v) => v.clone(),
            LambdaGrid::Multipliers(m) => m.iter().map(|m| m * lambda1).collect(),
        };
        out.sort_by(f64::total_cmp);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDescription {
    pub domain: DomainKind,
    pub bounds: Vec<f64>,
    pub resolution: Vec<usize>,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPlan {
    pub dir: PathBuf,
    pub eigenfunctions: bool,
    /// Record wall-clock times; off by default so reports stay reproducible.
    pub timings: bool,
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub problem: ProblemDescription,
    pub spec: Spec64,
    pub lambda_grid: LambdaGrid,
    pub solver_opts: Options64,
    pub consistency_samples: usize,
    pub outputs: OutputPlan,
    /// SHA-256 of the configuration file bytes.
    pub config_hash: String,
}

impl RunPlan {
    pub fn seed(&self) -> u64 {
        self.solver_opts.seed
    }
}

pub fn parse_config(path: &Path) -> Result<RunPlan, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<RunPlan, ConfigError> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::from("<config>"), message: e.to_string() })?;
    let hash = Sha256::digest(text.as_bytes());
    let config_hash = hash.iter().map(|b| format!("{b:02x}")).collect();

    let pr = &file.problem;
    let mesh = match pr.domain {
        DomainKind::Interval => {
            let [x0, x1] = pr.bounds[..] else {
                return Err(ConfigError::Invalid("interval bounds must be [x0, x1]".into()));
            };
            let [n] = pr.resolution[..] else {
                return Err(ConfigError::Invalid("interval resolution must be [n]".into()));
            };
            build_interval_mesh(n, x0, x1)
        }
        DomainKind::Rectangle => {
            let [x0, x1, y0, y1] = pr.bounds[..] else {
                return Err(ConfigError::Invalid("rectangle bounds must be [x0, x1, y0, y1]".into()));
            };
            let [nx, ny] = pr.resolution[..] else {
                return Err(ConfigError::Invalid("rectangle resolution must be [nx, ny]".into()));
            };
            build_rectangle_mesh(nx, ny, (x0, x1, y0, y1))
        }
    }
    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mesh = Arc::new(mesh);

    let weight = |decl: &WeightDecl, target: WeightTarget| {
        weight_from_expression(&mesh, &decl.to_expr(), target).map_err(|e| match e {
            CoreError::NegativeWeight { .. } => {
                ConfigError::Hypotheses(vec![Hypothesis::Ab], format!("{}: weights must be nonnegative ({e})", Hypothesis::Ab))
            }
            other => ConfigError::Invalid(other.to_string()),
        })
    };
    let a = weight(&pr.weight_a, WeightTarget::Volume)?;
    let b = weight(&pr.weight_b, WeightTarget::Boundary)?;
    let spec = ProblemSpec::new(mesh, pr.p, pr.q, a, b).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let report = validate_problem(&spec);
    if !report.ok {
        let message = format!("violated hypotheses: {}", labels(&report.violated_hypotheses));
        return Err(ConfigError::Hypotheses(report.violated_hypotheses, message));
    }

    let lambda_grid = grid(&file.lambda_grid)?;

    let s = &file.solver;
    let defaults = Options64::default();
    let solver_opts = Options64 {
        tol: s.tol.unwrap_or(defaults.tol),
        constraint_tol: s.constraint_tol.unwrap_or(defaults.constraint_tol),
        max_iters: s.max_iters.unwrap_or(defaults.max_iters),
        newton_iters: s.newton_iters.unwrap_or(defaults.newton_iters),
        restarts: s.restarts.unwrap_or(defaults.restarts),
        seed: s.seed.unwrap_or(defaults.seed),
        probes: s.probes.unwrap_or(defaults.probes),
        boundary_tol: s.boundary_tol.unwrap_or(defaults.boundary_tol),
        ..defaults
    };
    if !(solver_opts.tol > 0.0 && solver_opts.constraint_tol > 0.0 && solver_opts.boundary_tol >= 0.0) {
        return Err(ConfigError::Invalid("solver tolerances must be positive".into()));
    }

    Ok(RunPlan {
        problem: ProblemDescription {
            domain: pr.domain,
            bounds: pr.bounds.clone(),
            resolution: pr.resolution.clone(),
            p: pr.p,
            q: pr.q,
        },
        spec,
        lambda_grid,
        solver_opts,
        consistency_samples: s.consistency_samples.unwrap_or(50),
        outputs: OutputPlan {
            dir: file.output.dir.clone().unwrap_or_else(|| PathBuf::from("pq-spectra-out")),
            eigenfunctions: file.output.eigenfunctions.unwrap_or(true),
            timings: file.output.timings.unwrap_or(false),
        },
        config_hash,
    })
}

fn grid(g: &GridSection) -> Result<LambdaGrid, ConfigError> {
    let range = g.count.is_some() || g.min_multiplier.is_some() || g.max_multiplier.is_some();
    let forms = [g.values.is_some(), g.multipliers.is_some(), range].iter().filter(|x| **x).count();
    if forms > 1 {
        return Err(ConfigError::Invalid(
            "lambda_grid takes exactly one of `values`, `multipliers`, or `count`/`min_multiplier`/`max_multiplier`".into(),
        ));
    }
    let check = |v: &[f64], what: &str| {
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            Err(ConfigError::Invalid(format!("lambda_grid {what} must be finite and nonnegative")))
        } else {
            Ok(())
        }
    };
    if let Some(v) = &g.values {
        check(v, "values")?;
        return Ok(LambdaGrid::Values(v.clone()));
    }
    if let Some(m) = &g.multipliers {
        check(m, "multipliers")?;
        return Ok(LambdaGrid::Multipliers(m.clone()));
    }
    if range {
        let (Some(count), Some(lo), Some(hi)) = (g.count, g.min_multiplier, g.max_multiplier) else {
            return Err(ConfigError::Invalid("a range grid needs count, min_multiplier and max_multiplier".into()));
        };
        if lo > hi {
            return Err(ConfigError::Invalid("min_multiplier exceeds max_multiplier".into()));
        }
        let m: Vec<f64> = match count {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
        };
        check(&m, "multipliers")?;
        return Ok(LambdaGrid::Multipliers(m));
    }
    Ok(LambdaGrid::Values(Vec::new()))
}
