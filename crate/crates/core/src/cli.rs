//! Command-line surface: configuration, the analysis and transport commands,
//! the appendix suite and report rendering.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::algebra::{curvature_generators, generate_algebra, AlgebraReport};
use crate::connection::{
    connection_data, constant_curvature_fit, riemannian_point_test, tangency_defect,
    CurvatureFitReport, RiemannianPointReport,
};
use crate::error::{Error, Result};
use crate::geometry::{
    fundamental_tensor_with, kernel_from_spec, sample_indicatrix_with, validate_homogeneity,
    DerivativeMethod, HomogeneityReport, IndicatrixSampleSet, MetricKernel, TangentSample,
    Tolerances,
};
use crate::heisenberg::{verify_appendix, AppendixOptions, AppendixReport};
use crate::transport::{loop_transport, transport_with_estimate, Curve, MIN_STEPS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Text,
    Csv,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Text => "txt",
            Format::Csv => "csv",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    /// Report destination; standard output when absent.
    pub path: Option<PathBuf>,
    pub format: Format,
    /// Optional second file with the rank table as CSV.
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kernel: String,
    /// Defaults to the origin.
    pub base_point: Option<Vec<f64>>,
    pub sample_count: usize,
    pub seed: u64,
    pub depth: usize,
    pub steps: usize,
    pub tolerances: Tolerances,
    pub outputs: Outputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kernel: "euclidean".to_string(),
            base_point: None,
            sample_count: 40,
            seed: 1,
            depth: 4,
            steps: 1000,
            tolerances: Tolerances::default(),
            outputs: Outputs::default(),
        }
    }
}

pub const MAX_DEPTH: usize = 8;

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Checks the configuration and resolves the kernel and base point.
    pub fn resolve(&self) -> Result<(std::sync::Arc<dyn MetricKernel>, Vec<f64>)> {
        if self.sample_count == 0 {
            return Err(Error::config("sample_count must be at least 1"));
        }
        if self.depth == 0 || self.depth > MAX_DEPTH {
            return Err(Error::config(format!("depth must be between 1 and {MAX_DEPTH}")));
        }
        if self.steps < MIN_STEPS {
            return Err(Error::config(format!("steps must be at least {MIN_STEPS}")));
        }
        let t = &self.tolerances;
        let all = [
            t.tol_g, t.tol_inv, t.tol_proj, t.tol_hom, t.delta, t.tol_tan, t.tol_semi, t.tol_rank, t.tol_f,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("tolerances must be finite and nonnegative"));
        }
        let kernel = kernel_from_spec(&self.kernel)?;
        let x = match &self.base_point {
            Some(p) if p.len() != kernel.dim() => {
                return Err(Error::config(format!(
                    "base point has {} coordinates, kernel '{}' has dimension {}",
                    p.len(),
                    kernel.name(),
                    kernel.dim()
                )))
            }
            Some(p) if p.iter().any(|v| !v.is_finite()) => {
                return Err(Error::config("base point must be finite"))
            }
            Some(p) => p.clone(),
            None => vec![0.0; kernel.dim()],
        };
        Ok((kernel, x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSection {
    pub kernel: String,
    pub dim: usize,
    pub base_point: Vec<f64>,
    pub samples: usize,
    pub max_level_defect: f64,
    pub homogeneity: HomogeneityReport,
    pub min_sigma_min: f64,
    pub max_sigma_max: f64,
    pub max_asymmetry: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSection {
    /// The first indicatrix sample.
    pub y: Vec<f64>,
    pub spray: Vec<f64>,
    /// Rows `i`, columns `j`: `Γⁱ_j`.
    pub gamma: Vec<Vec<f64>>,
    pub curvature_max_abs: f64,
    pub max_tangency_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportCase {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub f_drift: f64,
    pub richardson_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportSection {
    pub curve: String,
    pub closed: bool,
    pub steps: usize,
    pub cases: Vec<TransportCase>,
    pub max_f_drift: f64,
    pub max_richardson_error: f64,
    /// Largest deviation from the known holonomy, when one is available.
    pub oracle_error: Option<f64>,
    pub distance_from_identity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub metric: Option<MetricSection>,
    pub connection: Option<ConnectionSection>,
    pub curvature_fit: Option<CurvatureFitReport>,
    pub riemannian_test: Option<RiemannianPointReport>,
    pub algebra: Option<AlgebraReport>,
    pub transport: Option<TransportSection>,
    pub appendix: Option<AppendixReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSection {
    pub message: String,
    pub exit_code: i32,
}

/// Everything that depends only on the configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicSection {
    pub command: String,
    pub config: RunConfig,
    pub results: Results,
    pub error: Option<ErrorSection>,
    pub exit_status: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub section: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub deterministic: DeterministicSection,
    pub timings: Vec<Timing>,
}

impl Report {
    fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: "finsler".to_string(),
            version: VERSION.to_string(),
            deterministic: DeterministicSection {
                command: command.to_string(),
                config: config.clone(),
                results: Results::default(),
                error: None,
                exit_status: 0,
            },
            timings: Vec::new(),
        }
    }

    fn fail(&mut self, err: &Error) {
        let code = err.exit_code();
        self.deterministic.error = Some(ErrorSection {
            message: err.to_string(),
            exit_code: code,
        });
        self.deterministic.exit_status = code;
    }

    pub fn exit_status(&self) -> i32 {
        self.deterministic.exit_status
    }

    pub fn results(&self) -> &Results {
        &self.deterministic.results
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::Parse(e.to_string()))
    }

    /// The deterministic section alone, as JSON.
    pub fn deterministic_json(&self) -> String {
        serde_json::to_string_pretty(&self.deterministic).expect("reports serialize")
    }
}

fn timed<T>(timings: &mut Vec<Timing>, section: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    timings.push(Timing {
        section: section.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    out
}

fn samples_for(kernel: &dyn MetricKernel, x: &[f64], config: &RunConfig) -> Result<IndicatrixSampleSet> {
    sample_indicatrix_with(kernel, x, config.sample_count, config.seed, &config.tolerances)
}

/// validate → connection → fit → riemannian test → algebra.
pub fn cmd_analyze(config: &RunConfig) -> Report {
    let mut report = Report::new("analyze", config);
    if let Err(e) = analyze_into(config, &mut report) {
        report.fail(&e);
    }
    report
}

fn analyze_into(config: &RunConfig, report: &mut Report) -> Result<()> {
    let (kernel, x) = config.resolve()?;
    let kernel = &*kernel;
    let tol = &config.tolerances;
    let timings = &mut report.timings;
    let results = &mut report.deterministic.results;

    let samples = timed(timings, "sampling", || samples_for(kernel, &x, config))?;
    results.metric = Some(timed(timings, "metric", || {
        let mut min_sigma = f64::INFINITY;
        let mut max_sigma: f64 = 0.0;
        let mut asym: f64 = 0.0;
        for y in &samples.points {
            let t = fundamental_tensor_with(
                kernel,
                &TangentSample::new(x.clone(), y.clone()),
                DerivativeMethod::Exact,
                tol,
            )?;
            min_sigma = min_sigma.min(t.sigma_min);
            max_sigma = max_sigma.max(t.sigma_max);
            asym = asym.max(t.asymmetry);
        }
        let homogeneity = validate_homogeneity(
            kernel,
            &TangentSample::new(x.clone(), samples.points[0].clone()),
            &[0.5, 2.0, 3.0],
        )?;
        Ok(MetricSection {
            kernel: kernel.name().to_string(),
            dim: kernel.dim(),
            base_point: x.clone(),
            samples: samples.len(),
            max_level_defect: samples.max_level_defect(kernel),
            homogeneity,
            min_sigma_min: min_sigma,
            max_sigma_max: max_sigma,
            max_asymmetry: asym,
        })
    })?);
    results.connection = Some(timed(timings, "connection", || {
        let mut defect: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let mut first = None;
        for y in &samples.points {
            let d = connection_data(kernel, &TangentSample::new(x.clone(), y.clone()))?;
            defect = defect.max(tangency_defect(&d.g, y, &d.curvature));
            max_abs = max_abs.max(d.curvature.max_abs());
            first.get_or_insert(d);
        }
        let d = first.expect("samples are nonempty");
        Ok(ConnectionSection {
            y: d.sample.y.clone(),
            spray: d.spray.clone(),
            gamma: d.gamma.row_iter().map(|r| r.iter().copied().collect()).collect(),
            curvature_max_abs: max_abs,
            max_tangency_defect: defect,
        })
    })?);
    results.curvature_fit = Some(timed(timings, "curvature_fit", || {
        constant_curvature_fit(kernel, &x, &samples)
    })?);
    results.riemannian_test = Some(timed(timings, "riemannian_test", || {
        riemannian_point_test(kernel, &x, &samples, tol.tol_semi)
    })?);
    let arc = kernel_from_spec(&config.kernel)?;
    results.algebra = Some(timed(timings, "algebra", || {
        let gens = curvature_generators(arc.clone(), &x);
        generate_algebra(&*arc, &x, &gens, config.depth, &samples, tol.tol_rank)
    })?);
    Ok(())
}

fn parse_plane(s: &str, n: usize) -> Result<(usize, usize)> {
    let digits: Vec<usize> = if s.contains(',') || s.contains('-') {
        s.split([',', '-'])
            .map(|p| p.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad plane '{s}'"))))
            .collect::<Result<_>>()?
    } else {
        s.chars()
            .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(|| Error::Parse(format!("bad plane '{s}'"))))
            .collect::<Result<_>>()?
    };
    match digits[..] {
        [i, j] if i >= 1 && j >= 1 && i <= n && j <= n && i != j => Ok((i - 1, j - 1)),
        _ => Err(Error::config(format!("plane '{s}' is not two distinct axes in 1..={n}"))),
    }
}

fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("'{p}' is not a number")))
        })
        .collect()
}

/// Curves: `square(plane=13, side=0.1)`, `octant(plane=12)`,
/// `polyline(0,0,0; 1,0,0; 0,0,0)`. Squares start at `x`.
pub fn parse_curve(spec: &str, x: &[f64]) -> Result<Curve> {
    let spec = spec.trim();
    let (name, body) = spec
        .strip_suffix(')')
        .and_then(|s| s.split_once('('))
        .ok_or_else(|| Error::Parse(format!("curve '{spec}' is not of the form name(...)")))?;
    let n = x.len();
    let keyed = |body: &str| -> Result<Vec<(String, String)>> {
        body.split([',', ';'])
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| Error::Parse(format!("expected key=value, got '{p}'")))
            })
            .collect()
    };
    match name.trim() {
        "square" => {
            let (mut plane, mut side) = (None, None);
            for (k, v) in keyed(body)? {
                match k.as_str() {
                    "plane" => plane = Some(parse_plane(&v, n)?),
                    "side" => side = Some(v.parse::<f64>().map_err(|_| Error::Parse(format!("bad side '{v}'")))?),
                    other => return Err(Error::config(format!("unknown square parameter '{other}'"))),
                }
            }
            let plane = plane.ok_or_else(|| Error::config("square needs plane="))?;
            let side = side.ok_or_else(|| Error::config("square needs side="))?;
            Curve::square(x, plane, side)
        }
        "octant" => {
            let mut plane = None;
            for (k, v) in keyed(body)? {
                match k.as_str() {
                    "plane" => plane = Some(parse_plane(&v, n)?),
                    other => return Err(Error::config(format!("unknown octant parameter '{other}'"))),
                }
            }
            Curve::sphere_octant(n, plane.ok_or_else(|| Error::config("octant needs plane="))?)
        }
        "polyline" => {
            let vertices: Vec<Vec<f64>> = body.split(';').map(parse_vector).collect::<Result<_>>()?;
            if vertices.iter().any(|v| v.len() != n) {
                return Err(Error::config(format!("polyline vertices need {n} coordinates")));
            }
            Curve::polyline(&vertices)
        }
        other => Err(Error::config(format!("unknown curve '{other}'"))),
    }
}

/// The holonomy of a loop when it is known in closed form.
fn oracle(kernel: &dyn MetricKernel, spec: &str, curve: &Curve, y: &[f64]) -> Option<Vec<f64>> {
    match kernel.name() {
        "euclidean" if curve.is_closed() => Some(y.to_vec()),
        "sphere" if spec.trim_start().starts_with("octant") => {
            // Quarter turn in the plane of the octant.
            let Some(crate::transport::Piece::Arc { plane: (i, j), .. }) = curve.pieces.get(1) else {
                return None;
            };
            let mut out = y.to_vec();
            out[*i] = -y[*j];
            out[*j] = y[*i];
            Some(out)
        }
        _ => None,
    }
}

/// Transports `y0`, or every indicatrix sample at the curve start.
pub fn cmd_transport(config: &RunConfig, curve_spec: &str, y0: Option<&[f64]>) -> Report {
    let mut report = Report::new("transport", config);
    if let Err(e) = transport_into(config, curve_spec, y0, &mut report) {
        report.fail(&e);
    }
    report
}

fn transport_into(config: &RunConfig, spec: &str, y0: Option<&[f64]>, report: &mut Report) -> Result<()> {
    let (kernel, x) = config.resolve()?;
    let kernel = &*kernel;
    let curve = parse_curve(spec, &x)?;
    curve.validate()?;
    let timings = &mut report.timings;
    let section = timed(timings, "transport", || {
        let starts: Vec<Vec<f64>> = match y0 {
            Some(y) if y.len() != kernel.dim() => {
                return Err(Error::config(format!("y has {} coordinates, expected {}", y.len(), kernel.dim())))
            }
            Some(y) => vec![y.to_vec()],
            None => samples_for(kernel, &curve.start, config)?.points,
        };
        let mut cases = Vec::with_capacity(starts.len());
        let mut oracle_error: Option<f64> = None;
        for (index, y) in starts.iter().enumerate() {
            let out = transport_with_estimate(kernel, &curve, y, config.steps).map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })?;
            if let Some(expected) = oracle(kernel, spec, &curve, y) {
                let err = expected.iter().zip(&out.y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                oracle_error = Some(oracle_error.unwrap_or(0.0).max(err));
            }
            cases.push(TransportCase {
                y0: y.clone(),
                y1: out.y,
                f_drift: out.f_drift,
                richardson_error: out.richardson_error,
            });
        }
        let distance_from_identity = if curve.is_closed() && y0.is_none() {
            let samples = samples_for(kernel, &curve.start, config)?;
            Some(loop_transport(kernel, &curve, &samples, 2 * config.steps)?.distance_from_identity())
        } else {
            None
        };
        Ok(TransportSection {
            curve: spec.to_string(),
            closed: curve.is_closed(),
            steps: 2 * config.steps,
            max_f_drift: cases.iter().map(|c| c.f_drift).fold(0.0, f64::max),
            max_richardson_error: cases.iter().map(|c| c.richardson_error).fold(0.0, f64::max),
            cases,
            oracle_error,
            distance_from_identity,
        })
    })?;
    if section.max_f_drift > config.tolerances.tol_f {
        let err = Error::Consistency {
            check: "F preserved along transport".to_string(),
            error: section.max_f_drift,
        };
        report.deterministic.results.transport = Some(section);
        return Err(err);
    }
    report.deterministic.results.transport = Some(section);
    Ok(())
}

/// Runs the Heisenberg appendix suite; exit 1 names the first failing check.
pub fn cmd_verify_appendix(config: &RunConfig, options: &AppendixOptions) -> Report {
    let config = RunConfig {
        kernel: "heisenberg-bm".to_string(),
        ..config.clone()
    };
    let mut report = Report::new("verify-appendix", &config);
    let result = timed(&mut report.timings, "appendix", || Ok(verify_appendix(options)));
    let outcome = result.expect("the suite records failures instead of returning them");
    let failure = outcome.first_failure.clone();
    report.deterministic.results.appendix = Some(outcome);
    if let Some(name) = failure {
        let check = report.deterministic.results.appendix.as_ref().and_then(|a| {
            a.checks.iter().find(|c| c.name == name).map(|c| c.max_error)
        });
        report.fail(&Error::Consistency {
            check: name,
            error: check.unwrap_or(f64::NAN),
        });
    }
    report
}

/// Rank table as CSV: `depth,rank,fields,independent`.
pub fn rank_table_csv(algebra: &AlgebraReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["depth", "rank", "fields", "independent"]).expect("in-memory write");
    for (d, (rank, fields)) in algebra.rank_by_depth.iter().zip(&algebra.fields_by_depth).enumerate() {
        let independent = fields.iter().filter(|f| f.independent).count();
        w.write_record(&[
            (d + 1).to_string(),
            rank.to_string(),
            fields.len().to_string(),
            independent.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

fn checks_csv(appendix: &AppendixReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["check", "passed", "max_error", "tolerance"]).expect("in-memory write");
    for c in &appendix.checks {
        w.write_record(&[
            c.name.clone(),
            c.passed.to_string(),
            format!("{:e}", c.max_error),
            format!("{:e}", c.tolerance),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

fn transport_csv(t: &TransportSection) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let n = t.cases.first().map_or(0, |c| c.y0.len());
    let mut header: Vec<String> = (1..=n).map(|i| format!("y0_{i}")).collect();
    header.extend((1..=n).map(|i| format!("y1_{i}")));
    header.extend(["f_drift".to_string(), "richardson_error".to_string()]);
    w.write_record(&header).expect("in-memory write");
    for c in &t.cases {
        let mut row: Vec<String> = c.y0.iter().chain(&c.y1).map(|v| v.to_string()).collect();
        row.push(format!("{:e}", c.f_drift));
        row.push(format!("{:e}", c.richardson_error));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

pub fn render_csv(report: &Report) -> String {
    let r = report.results();
    if let Some(a) = &r.algebra {
        rank_table_csv(a)
    } else if let Some(a) = &r.appendix {
        checks_csv(a)
    } else if let Some(t) = &r.transport {
        transport_csv(t)
    } else {
        String::new()
    }
}

/// Aligned plain-text summary.
pub fn render_text(report: &Report) -> String {
    let d = &report.deterministic;
    let r = &d.results;
    let mut s = String::new();
    let line = |s: &mut String, key: &str, value: String| {
        let _ = writeln!(s, "{key:<32} {value}");
    };
    line(&mut s, "command", d.command.clone());
    line(&mut s, "kernel", d.config.kernel.clone());
    if let Some(m) = &r.metric {
        line(&mut s, "base point", format!("{:?}", m.base_point));
        line(&mut s, "samples", m.samples.to_string());
        line(&mut s, "level defect", format!("{:.3e}", m.max_level_defect));
        line(&mut s, "homogeneity deviation", format!("{:.3e}", m.homogeneity.max_relative_deviation));
        line(&mut s, "sigma range", format!("{:.3e} .. {:.3e}", m.min_sigma_min, m.max_sigma_max));
    }
    if let Some(c) = &r.connection {
        line(&mut s, "curvature max |R|", format!("{:.3e}", c.curvature_max_abs));
        line(&mut s, "tangency defect", format!("{:.3e}", c.max_tangency_defect));
    }
    if let Some(f) = &r.curvature_fit {
        line(&mut s, "constant curvature c", format!("{:.9}", f.c_estimate));
        line(&mut s, "fit residual", format!("{:.3e}", f.residual));
    }
    if let Some(t) = &r.riemannian_test {
        line(&mut s, "semi-Riemannian", format!("{} (deviation {:.3e})", t.is_semi_riemannian, t.deviation));
    }
    if let Some(a) = &r.algebra {
        line(&mut s, "rank by depth", format!("{:?}", a.rank_by_depth));
        line(&mut s, "rank", a.rank.to_string());
    }
    if let Some(t) = &r.transport {
        line(&mut s, "curve", t.curve.clone());
        line(&mut s, "steps", t.steps.to_string());
        line(&mut s, "cases", t.cases.len().to_string());
        line(&mut s, "max F drift", format!("{:.3e}", t.max_f_drift));
        line(&mut s, "max Richardson error", format!("{:.3e}", t.max_richardson_error));
        if let Some(e) = t.oracle_error {
            line(&mut s, "oracle error", format!("{e:.3e}"));
        }
        if let Some(e) = t.distance_from_identity {
            line(&mut s, "distance from identity", format!("{e:.3e}"));
        }
    }
    if let Some(a) = &r.appendix {
        for c in &a.checks {
            let verdict = if c.passed { "pass" } else { "FAIL" };
            line(&mut s, &c.name, format!("{verdict}  {:.3e} (tol {:.1e})", c.max_error, c.tolerance));
        }
    }
    if let Some(e) = &d.error {
        line(&mut s, "error", e.message.clone());
    }
    line(&mut s, "exit status", d.exit_status.to_string());
    for t in &report.timings {
        line(&mut s, &format!("time {}", t.section), format!("{:.3} s", t.seconds));
    }
    s
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Json => report.to_json() + "\n",
        Format::Text => render_text(report),
        Format::Csv => render_csv(report),
    }
}

#[derive(Debug, Parser)]
#[command(name = "finsler", version, about = "Numerical Finsler connection, curvature and holonomy analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// euclidean[:n], sphere[:n], funk[:n], heisenberg-bm, riemannian:<file>, custom:<file>.
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Comma-separated base point.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub point: Option<String>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub tol_rank: Option<f64>,
    /// Report file; defaults to `$FINSLER_OUT_DIR/<command>.<ext>` or standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "FINSLER_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Metric validation, connection, curvature fit, Riemannian test and algebra ranks.
    Analyze,
    /// Parallel transport along a curve.
    Transport {
        /// e.g. "square(plane=13, side=0.1)", "octant(plane=12)", "polyline(0,0; 1,0)".
        #[arg(long)]
        curve: String,
        /// Initial vector; all indicatrix samples when absent.
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
    },
    /// The Heisenberg appendix suite.
    VerifyAppendix {
        /// Negate one closed-form curvature field, e.g. "1,3".
        #[arg(long)]
        sign_flip: Option<String>,
        /// Tolerance on the finite-difference curvature path.
        #[arg(long)]
        fd_tol: Option<f64>,
    },
}

impl CommonArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(k) = &self.kernel {
            c.kernel = k.clone();
        }
        if let Some(p) = &self.point {
            c.base_point = Some(parse_vector(p)?);
        }
        if let Some(v) = self.samples {
            c.sample_count = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.depth {
            c.depth = v;
        }
        if let Some(v) = self.steps {
            c.steps = v;
        }
        if let Some(v) = self.tol_rank {
            c.tolerances.tol_rank = v;
        }
        if let Some(v) = &self.out {
            c.outputs.path = Some(v.clone());
        }
        if let Some(v) = self.format {
            c.outputs.format = v;
        }
        Ok(c)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Analyze => "analyze",
        Command::Transport { .. } => "transport",
        Command::VerifyAppendix { .. } => "verify-appendix",
    }
}

fn emit(report: &Report, config: &RunConfig, out_dir: Option<&Path>) -> Result<()> {
    let format = config.outputs.format;
    let path = config.outputs.path.clone().or_else(|| {
        out_dir.map(|d| d.join(format!("{}.{}", report.deterministic.command, format.extension())))
    });
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&p, render(report, format))?;
            print!("{}", render_text(report));
        }
        None => print!("{}", render(report, format)),
    }
    if let Some(csv_path) = &config.outputs.csv {
        std::fs::write(csv_path, render_csv(report))?;
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let config = match cli.common.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("finsler: {e}");
            return e.exit_code();
        }
    };
    let report = match &cli.command {
        Command::Analyze => cmd_analyze(&config),
        Command::Transport { curve, y } => match y.as_deref().map(parse_vector).transpose() {
            Ok(y) => cmd_transport(&config, curve, y.as_deref()),
            Err(e) => {
                let mut r = Report::new(command_name(&cli.command), &config);
                r.fail(&e);
                r
            }
        },
        Command::VerifyAppendix { sign_flip, fd_tol } => {
            let mut options = AppendixOptions {
                samples: config.sample_count,
                seed: config.seed,
                depth: config.depth,
                tol_rank: config.tolerances.tol_rank,
                ..AppendixOptions::default()
            };
            if let Some(v) = fd_tol {
                options.fd_tolerance = *v;
            }
            let flip = sign_flip.as_deref().map(|s| parse_plane(s, 3)).transpose();
            match flip {
                Ok(f) => {
                    options.sign_flip = f.map(|(i, j)| (i.min(j) + 1, i.max(j) + 1));
                    cmd_verify_appendix(&config, &options)
                }
                Err(e) => {
                    let mut r = Report::new("verify-appendix", &config);
                    r.fail(&e);
                    r
                }
            }
        }
    };
    if let Err(e) = emit(&report, &config, cli.common.out_dir.as_deref()) {
        eprintln!("finsler: {e}");
        return e.exit_code();
    }
    if let Some(e) = &report.deterministic.error {
        eprintln!("finsler: {}", e.message);
    }
    report.exit_status()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(matches!(RunConfig::from_toml("kernal = 'sphere'"), Err(Error::Parse(_))));
        let c = RunConfig::from_toml("kernel = 'sphere'\nseed = 5\n[tolerances]\ntol_rank = 1e-6").unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.tolerances.tol_rank, 1e-6);
        assert!(RunConfig::from_toml("[tolerances]\ntol_x = 1").is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig {
            base_point: Some(vec![0.0, 0.0]),
            ..RunConfig::default()
        };
        assert!(matches!(c.resolve(), Err(Error::Configuration(_))));
        c.base_point = None;
        c.steps = 2;
        assert!(c.resolve().is_err());
        c.steps = 100;
        c.kernel = "nope".into();
        assert_eq!(c.resolve().err().unwrap().exit_code(), 2);
    }

    #[test]
    fn curve_specs() {
        let x = [0.0; 3];
        let c = parse_curve("square(plane=13, side=0.1)", &x).unwrap();
        assert!(c.is_closed());
        assert_eq!(c.pieces.len(), 4);
        assert!(parse_curve("octant(plane=12)", &x).unwrap().is_closed());
        let p = parse_curve("polyline(0,0,0; 1,0,0)", &x).unwrap();
        assert!(!p.is_closed());
        assert!(parse_curve("square(plane=11, side=0.1)", &x).is_err());
        assert!(parse_curve("circle(r=1)", &x).is_err());
        assert!(parse_curve("square", &x).is_err());
    }

    #[test]
    fn euclidean_analysis() {
        let report = cmd_analyze(&RunConfig {
            depth: 2,
            ..RunConfig::default()
        });
        assert_eq!(report.exit_status(), 0, "{:?}", report.deterministic.error);
        let r = report.results();
        assert_eq!(r.curvature_fit.as_ref().unwrap().c_estimate, 0.0);
        assert_eq!(r.algebra.as_ref().unwrap().rank, 0);
        assert!(r.riemannian_test.as_ref().unwrap().is_semi_riemannian);
        let back = Report::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn errors_populate_the_report() {
        let report = cmd_analyze(&RunConfig {
            kernel: "heisenberg-bm".into(),
            base_point: Some(vec![0.0, 0.0, 0.0]),
            sample_count: 5,
            ..RunConfig::default()
        });
        assert_eq!(report.exit_status(), 2);
        assert!(report.deterministic.error.is_some());
        assert!(report.results().metric.is_some());
    }

    #[test]
    fn rank_csv_layout() {
        let report = cmd_analyze(&RunConfig {
            kernel: "sphere".into(),
            depth: 2,
            ..RunConfig::default()
        });
        let csv = render_csv(&report);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("depth,rank,fields,independent"));
        assert_eq!(lines.next(), Some("1,3,3,3"));
        assert_eq!(lines.next(), Some("2,3,3,0"));
    }
}
