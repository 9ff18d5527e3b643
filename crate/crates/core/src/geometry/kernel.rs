//! Metric kernels: the function `F(x, y)` and its smoothness cone.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jet::{Jet, Scalar};

/// A Finsler structure given by its metric function `F(x, y)`, positively
/// homogeneous of degree two in `y`.
pub trait MetricKernel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64], y: &[f64]) -> f64;
    fn value_jet(&self, x: &[Jet], y: &[Jet]) -> Jet;
    /// Smallest normalized cone factor at `(x, y)`; positive inside the open cone.
    fn cone_margin(&self, x: &[f64], y: &[f64]) -> f64;
    fn positive_definite(&self) -> bool;

    fn in_cone(&self, x: &[f64], y: &[f64], delta: f64) -> bool {
        self.cone_margin(x, y) > delta
    }
}

/// Kernels written once as a generic formula; both evaluation paths of
/// [`MetricKernel`] are derived from it.
pub trait KernelFormula: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn formula<S: Scalar>(&self, x: &[S], y: &[S]) -> S;
    fn cone_margin(&self, x: &[f64], y: &[f64]) -> f64;
    fn positive_definite(&self) -> bool;
}

impl<K: KernelFormula> MetricKernel for K {
    fn name(&self) -> &str {
        KernelFormula::name(self)
    }
    fn dim(&self) -> usize {
        KernelFormula::dim(self)
    }
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.formula(x, y)
    }
    fn value_jet(&self, x: &[Jet], y: &[Jet]) -> Jet {
        self.formula(x, y)
    }
    fn cone_margin(&self, x: &[f64], y: &[f64]) -> f64 {
        KernelFormula::cone_margin(self, x, y)
    }
    fn positive_definite(&self) -> bool {
        KernelFormula::positive_definite(self)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn square_sum<S: Scalar>(v: &[S]) -> S {
    let mut acc = v[0].clone() * v[0].clone();
    for a in &v[1..] {
        acc = acc + a.clone() * a.clone();
    }
    acc
}

/// Cone factor for kernels smooth on the whole slit tangent space.
fn slit_margin(y: &[f64]) -> f64 {
    if norm(y) > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `F = Σ (yⁱ)²`.
#[derive(Clone, Debug)]
pub struct Euclidean {
    pub dim: usize,
}

impl KernelFormula for Euclidean {
    fn name(&self) -> &str {
        "euclidean"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn formula<S: Scalar>(&self, _x: &[S], y: &[S]) -> S {
        square_sum(y)
    }
    fn cone_margin(&self, _x: &[f64], y: &[f64]) -> f64 {
        slit_margin(y)
    }
    fn positive_definite(&self) -> bool {
        true
    }
}

/// Round unit sphere in stereographic coordinates, `g = 4δ/(1+|x|²)²`.
#[derive(Clone, Debug)]
pub struct Sphere {
    pub dim: usize,
}

impl KernelFormula for Sphere {
    fn name(&self) -> &str {
        "sphere"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn formula<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        let conformal = (square_sum(x) + 1.0).powi(2);
        square_sum(y) * 4.0 / conformal
    }
    fn cone_margin(&self, _x: &[f64], y: &[f64]) -> f64 {
        slit_margin(y)
    }
    fn positive_definite(&self) -> bool {
        true
    }
}

/// Square of the Funk metric of the unit ball,
/// `((√(|y|² − |x|²|y|² + ⟨x,y⟩²) + ⟨x,y⟩) / (1 − |x|²))²`.
/// Projectively flat with constant negative flag curvature.
#[derive(Clone, Debug)]
pub struct Funk {
    pub dim: usize,
}

impl KernelFormula for Funk {
    fn name(&self) -> &str {
        "funk"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn formula<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        let xx = square_sum(x);
        let yy = square_sum(y);
        let mut xy = x[0].clone() * y[0].clone();
        for i in 1..x.len() {
            xy = xy + x[i].clone() * y[i].clone();
        }
        let root = (yy.clone() - xx.clone() * yy + xy.clone() * xy.clone()).sqrt();
        let norm = (root + xy) / (-xx + 1.0);
        norm.clone() * norm
    }
    fn cone_margin(&self, x: &[f64], y: &[f64]) -> f64 {
        let inside = 1.0 - norm(x);
        if inside <= 0.0 {
            return inside;
        }
        slit_margin(y)
    }
    fn positive_definite(&self) -> bool {
        true
    }
}

/// Left-invariant Berwald-Moór metric on the Heisenberg group,
/// `F(x, y) = (y¹ (y² − x¹y³) y³)^{2/3}`, on the cone where all three factors
/// are positive.
#[derive(Clone, Debug, Default)]
pub struct HeisenbergBerwaldMoor;

impl KernelFormula for HeisenbergBerwaldMoor {
    fn name(&self) -> &str {
        "heisenberg-bm"
    }
    fn dim(&self) -> usize {
        3
    }
    fn formula<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        let middle = y[1].clone() - x[0].clone() * y[2].clone();
        (y[0].clone() * middle * y[2].clone()).powf(2.0 / 3.0)
    }
    fn cone_margin(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = norm(y);
        if n == 0.0 {
            return 0.0;
        }
        y[0].min(y[1] - x[0] * y[2]).min(y[2]) / n
    }
    fn positive_definite(&self) -> bool {
        false
    }
}

/// `F = g_ij(x) yⁱ yʲ` with coefficient expressions read from a file.
#[derive(Clone, Debug)]
pub struct RiemannianKernel {
    name: String,
    metric: Vec<Vec<Expr>>,
    positive_definite: bool,
}

impl RiemannianKernel {
    pub fn new(name: String, metric: Vec<Vec<Expr>>, positive_definite: bool) -> Result<Self> {
        let n = metric.len();
        if n == 0 || metric.iter().any(|row| row.len() != n) {
            return Err(Error::config("metric must be a square matrix"));
        }
        if metric.iter().flatten().any(Expr::depends_on_y) {
            return Err(Error::config(
                "Riemannian metric coefficients may depend on x only",
            ));
        }
        Ok(Self {
            name,
            metric,
            positive_definite,
        })
    }
}

impl KernelFormula for RiemannianKernel {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.metric.len()
    }
    fn formula<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        let mut acc = y[0].lift(0.0);
        for (i, row) in self.metric.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                acc = acc + g.eval(x, y) * y[i].clone() * y[j].clone();
            }
        }
        acc
    }
    fn cone_margin(&self, _x: &[f64], y: &[f64]) -> f64 {
        slit_margin(y)
    }
    fn positive_definite(&self) -> bool {
        self.positive_definite
    }
}

/// `F` given directly as an expression, with optional cone factors that must
/// stay positive.
#[derive(Clone, Debug)]
pub struct ExpressionKernel {
    name: String,
    dim: usize,
    metric: Expr,
    cone: Vec<Expr>,
    positive_definite: bool,
}

impl ExpressionKernel {
    pub fn new(
        name: String,
        dim: usize,
        metric: Expr,
        cone: Vec<Expr>,
        positive_definite: bool,
    ) -> Self {
        Self {
            name,
            dim,
            metric,
            cone,
            positive_definite,
        }
    }
}

impl KernelFormula for ExpressionKernel {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn formula<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        self.metric.eval(x, y)
    }
    fn cone_margin(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = norm(y);
        if n == 0.0 {
            return 0.0;
        }
        self.cone
            .iter()
            .map(|c| c.eval(x, y) / n)
            .fold(1.0, f64::min)
    }
    fn positive_definite(&self) -> bool {
        self.positive_definite
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MetricSpec {
    Matrix(Vec<Vec<String>>),
    Function(String),
}

/// On-disk kernel description (TOML).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelFile {
    name: Option<String>,
    dim: usize,
    metric: MetricSpec,
    #[serde(default)]
    cone: Vec<String>,
    positive_definite: Option<bool>,
}

fn read_kernel_file(path: &Path) -> Result<KernelFile> {
    let text = std::fs::read_to_string(path)?;
    let file: KernelFile =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if file.dim == 0 {
        return Err(Error::config("kernel dimension must be positive"));
    }
    Ok(file)
}

pub fn load_riemannian(path: &Path) -> Result<RiemannianKernel> {
    let file = read_kernel_file(path)?;
    let MetricSpec::Matrix(rows) = file.metric else {
        return Err(Error::config("riemannian kernel needs a coefficient matrix"));
    };
    if rows.len() != file.dim {
        return Err(Error::config(format!(
            "metric has {} rows, dim is {}",
            rows.len(),
            file.dim
        )));
    }
    let metric = rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|s| Expr::parse(s, file.dim))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    RiemannianKernel::new(
        file.name.unwrap_or_else(|| "riemannian".to_string()),
        metric,
        file.positive_definite.unwrap_or(true),
    )
}

pub fn load_custom(path: &Path) -> Result<ExpressionKernel> {
    let file = read_kernel_file(path)?;
    let MetricSpec::Function(src) = file.metric else {
        return Err(Error::config("custom kernel needs a metric expression"));
    };
    let metric = Expr::parse(&src, file.dim)?;
    let cone = file
        .cone
        .iter()
        .map(|s| Expr::parse(s, file.dim))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExpressionKernel::new(
        file.name.unwrap_or_else(|| "custom".to_string()),
        file.dim,
        metric,
        cone,
        file.positive_definite.unwrap_or(false),
    ))
}

fn parse_dim(arg: Option<&str>, default: usize) -> Result<usize> {
    match arg {
        None => Ok(default),
        Some(s) => {
            let n: usize = s
                .parse()
                .map_err(|_| Error::config(format!("bad dimension '{s}'")))?;
            if n < 2 {
                return Err(Error::config("dimension must be at least 2"));
            }
            Ok(n)
        }
    }
}

/// Resolves a kernel name: `euclidean[:n]`, `sphere[:n]`, `funk[:n]`,
/// `heisenberg-bm`, `riemannian:<file>` or `custom:<file>`.
pub fn kernel_from_spec(spec: &str) -> Result<Arc<dyn MetricKernel>> {
    let (head, arg) = match spec.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (spec, None),
    };
    Ok(match head {
        "euclidean" => Arc::new(Euclidean {
            dim: parse_dim(arg, 3)?,
        }),
        "sphere" => Arc::new(Sphere {
            dim: parse_dim(arg, 3)?,
        }),
        "funk" => Arc::new(Funk {
            dim: parse_dim(arg, 3)?,
        }),
        "heisenberg-bm" => {
            if arg.is_some() {
                return Err(Error::config("heisenberg-bm takes no argument"));
            }
            Arc::new(HeisenbergBerwaldMoor)
        }
        "riemannian" => Arc::new(load_riemannian(Path::new(
            arg.ok_or_else(|| Error::config("riemannian:<file> needs a path"))?,
        ))?),
        "custom" => Arc::new(load_custom(Path::new(
            arg.ok_or_else(|| Error::config("custom:<file> needs a path"))?,
        ))?),
        other => return Err(Error::config(format!("unknown kernel '{other}'"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    #[test]
    fn registry_names() {
        for name in ["euclidean", "euclidean:2", "sphere", "funk:4", "heisenberg-bm"] {
            assert!(kernel_from_spec(name).is_ok(), "{name}");
        }
        assert_eq!(kernel_from_spec("funk:4").unwrap().dim(), 4);
        assert!(kernel_from_spec("sphere:1").is_err());
        assert!(kernel_from_spec("hyperbolic").is_err());
        assert!(kernel_from_spec("riemannian").is_err());
    }

    #[test]
    fn funk_is_euclidean_at_origin() {
        let k = Funk { dim: 3 };
        assert_relative_eq!(k.value(&[0.0; 3], &[1.0, 2.0, 2.0]), 9.0, epsilon = 1e-14);
        assert!(MetricKernel::cone_margin(&k, &[0.6, 0.6, 0.6], &[1.0, 0.0, 0.0]) <= 0.0);
    }

    #[test]
    fn heisenberg_cone_factors() {
        let k = HeisenbergBerwaldMoor;
        assert!(k.in_cone(&[0.0; 3], &[1.0, 1.0, 1.0], 1e-3));
        assert!(!k.in_cone(&[2.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 0.0));
        assert!(!k.in_cone(&[0.0; 3], &[-1.0, 1.0, 1.0], 0.0));
    }

    #[test]
    fn loads_kernel_files() {
        let dir = tempfile::tempdir().unwrap();
        let riem = dir.path().join("r.toml");
        std::fs::File::create(&riem)
            .unwrap()
            .write_all(b"dim = 2\nmetric = [[\"1 + x1^2\", \"0\"], [\"0\", \"1\"]]\n")
            .unwrap();
        let k = kernel_from_spec(&format!("riemannian:{}", riem.display())).unwrap();
        assert_relative_eq!(k.value(&[2.0, 0.0], &[1.0, 1.0]), 6.0);

        let custom = dir.path().join("c.toml");
        std::fs::File::create(&custom)
            .unwrap()
            .write_all(
                b"name = \"bm\"\ndim = 3\nmetric = \"(y1*(y2 - x1*y3)*y3)^(2/3)\"\n\
                  cone = [\"y1\", \"y2 - x1*y3\", \"y3\"]\n",
            )
            .unwrap();
        let k = kernel_from_spec(&format!("custom:{}", custom.display())).unwrap();
        assert_eq!(k.name(), "bm");
        assert_relative_eq!(k.value(&[1.0, 0.0, 0.0], &[1.0, 2.0, 1.0]), 1.0, epsilon = 1e-14);
        assert!(!k.in_cone(&[0.0; 3], &[1.0, -1.0, 1.0], 0.0));

        let bad = dir.path().join("b.toml");
        std::fs::File::create(&bad)
            .unwrap()
            .write_all(b"dim = 2\nmetric = [[\"y1\", \"0\"], [\"0\", \"1\"]]\n")
            .unwrap();
        assert!(kernel_from_spec(&format!("riemannian:{}", bad.display())).is_err());

        let unknown = dir.path().join("u.toml");
        std::fs::File::create(&unknown)
            .unwrap()
            .write_all(b"dim = 2\nmetric = \"y1^2 + y2^2\"\ncolour = 3\n")
            .unwrap();
        assert!(kernel_from_spec(&format!("custom:{}", unknown.display())).is_err());
    }
}
