//! Metric kernels, the derivative oracle, the fundamental tensor and the
//! indicatrix.

mod kernel;
mod sampling;

pub use kernel::{
    kernel_from_spec, load_custom, load_riemannian, Euclidean, ExpressionKernel, Funk,
    HeisenbergBerwaldMoor, KernelFormula, MetricKernel, RiemannianKernel, Sphere,
};
pub use sampling::{sample_indicatrix, sample_indicatrix_with, IndicatrixSampleSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{seed_point, Jet, JetSpace, Truncation};

/// Highest total derivative order served by [`derivative_oracle`].
pub const MAX_ORACLE_ORDER: usize = 5;

/// Numerical thresholds shared by the analysis pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Nondegeneracy of g, relative to its largest singular value.
    pub tol_g: f64,
    pub tol_inv: f64,
    pub tol_proj: f64,
    pub tol_hom: f64,
    /// Cone margin used for sampling and differentiation.
    pub delta: f64,
    pub tol_tan: f64,
    pub tol_semi: f64,
    pub tol_rank: f64,
    /// Allowed drift of F along a transport.
    pub tol_f: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_g: 1e-10,
            tol_inv: 1e-8,
            tol_proj: 1e-10,
            tol_hom: 1e-8,
            delta: 1e-3,
            tol_tan: 1e-6,
            tol_semi: 1e-6,
            tol_rank: 1e-7,
            tol_f: 1e-6,
        }
    }
}

/// A point `(x, y)` of the tangent bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TangentSample {
    pub fn new(x: impl Into<Vec<f64>>, y: impl Into<Vec<f64>>) -> Self {
        Self {
            x: x.into(),
            y: y.into(),
        }
    }

    /// Builds the sample after checking that it lies in the cone with margin `delta`.
    pub fn checked(
        kernel: &dyn MetricKernel,
        x: impl Into<Vec<f64>>,
        y: impl Into<Vec<f64>>,
        delta: f64,
    ) -> Result<Self> {
        let s = Self::new(x, y);
        check_cone(kernel, &s.x, &s.y, delta)?;
        Ok(s)
    }
}

pub fn check_cone(kernel: &dyn MetricKernel, x: &[f64], y: &[f64], delta: f64) -> Result<()> {
    let n = kernel.dim();
    if x.len() != n || y.len() != n {
        return Err(Error::domain(format!(
            "sample has dimensions ({}, {}), kernel '{}' has dimension {n}",
            x.len(),
            y.len(),
            kernel.name()
        )));
    }
    let margin = kernel.cone_margin(x, y);
    if margin > delta {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "sample x={x:?}, y={y:?} is outside the cone of '{}' (margin {margin:e}, required > {delta:e})",
            kernel.name()
        )))
    }
}

pub fn evaluate_metric(kernel: &dyn MetricKernel, s: &TangentSample) -> Result<f64> {
    check_cone(kernel, &s.x, &s.y, 0.0)?;
    Ok(kernel.value(&s.x, &s.y))
}

/// Jet of `F` around `(x, y)` with the given caps.
pub fn metric_jet(kernel: &dyn MetricKernel, x: &[f64], y: &[f64], trunc: Truncation) -> Jet {
    let space = JetSpace::get(trunc);
    let (xs, ys) = seed_point(&space, x, y);
    kernel.value_jet(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMethod {
    /// Truncated Taylor arithmetic, exact up to round-off.
    Exact,
    /// Richardson-extrapolated central differences.
    FiniteDifference,
}

/// `∂^{|α|+|β|} F / ∂x^α ∂y^β` at the sample.
pub fn derivative_oracle(
    kernel: &dyn MetricKernel,
    s: &TangentSample,
    alpha: &[usize],
    beta: &[usize],
    method: DerivativeMethod,
) -> Result<f64> {
    let n = kernel.dim();
    if alpha.len() != n || beta.len() != n {
        return Err(Error::Validation(format!(
            "multi-indices must have length {n}"
        )));
    }
    let ox: usize = alpha.iter().sum();
    let oy: usize = beta.iter().sum();
    if ox + oy > MAX_ORACLE_ORDER {
        return Err(Error::UnsupportedOrder {
            order: ox + oy,
            max: MAX_ORACLE_ORDER,
        });
    }
    check_cone(kernel, &s.x, &s.y, Tolerances::default().delta)?;
    match method {
        DerivativeMethod::Exact => {
            let jet = metric_jet(kernel, &s.x, &s.y, Truncation::new(n, n, ox, oy, ox + oy));
            let exps: Vec<u8> = alpha.iter().chain(beta).map(|&e| e as u8).collect();
            Ok(jet.partial(&exps))
        }
        DerivativeMethod::FiniteDifference => finite_difference(kernel, s, alpha, beta),
    }
}

/// Base step of the central-difference fallback for a partial of the given
/// total order. The step grows with the order to balance round-off.
pub fn fd_step(order: usize) -> f64 {
    1e-4 * 4f64.powi(order.max(2) as i32 - 2)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn central_stencil(
    kernel: &dyn MetricKernel,
    s: &TangentSample,
    orders: &[usize],
    steps: &[f64],
) -> Result<f64> {
    let n = kernel.dim();
    let vars: Vec<usize> = (0..2 * n).filter(|&v| orders[v] > 0).collect();
    let counts: Vec<usize> = vars.iter().map(|&v| orders[v] + 1).collect();
    let total: usize = counts.iter().product();
    let mut acc = 0.0;
    let mut idx = vec![0usize; vars.len()];
    for _ in 0..total {
        let mut x = s.x.clone();
        let mut y = s.y.clone();
        let mut weight = 1.0;
        for (slot, &v) in vars.iter().enumerate() {
            let p = orders[v];
            let j = idx[slot];
            weight *= if j % 2 == 0 { 1.0 } else { -1.0 } * binomial(p, j);
            let offset = (p as f64 / 2.0 - j as f64) * steps[v];
            if v < n {
                x[v] += offset;
            } else {
                y[v - n] += offset;
            }
        }
        if !kernel.in_cone(&x, &y, 0.0) {
            return Err(Error::domain(
                "finite-difference stencil leaves the cone".to_string(),
            ));
        }
        acc += weight * kernel.value(&x, &y);
        for slot in 0..idx.len() {
            idx[slot] += 1;
            if idx[slot] < counts[slot] {
                break;
            }
            idx[slot] = 0;
        }
    }
    let scale: f64 = vars
        .iter()
        .map(|&v| steps[v].powi(orders[v] as i32))
        .product();
    Ok(acc / scale)
}

fn finite_difference(
    kernel: &dyn MetricKernel,
    s: &TangentSample,
    alpha: &[usize],
    beta: &[usize],
) -> Result<f64> {
    let n = kernel.dim();
    let orders: Vec<usize> = alpha.iter().chain(beta).copied().collect();
    let total: usize = orders.iter().sum();
    if total == 0 {
        return Ok(kernel.value(&s.x, &s.y));
    }
    let base = fd_step(total);
    let coords: Vec<f64> = s.x.iter().chain(&s.y).copied().collect();
    let steps: Vec<f64> = (0..2 * n).map(|v| base * coords[v].abs().max(1.0)).collect();
    let half: Vec<f64> = steps.iter().map(|h| h / 2.0).collect();
    let coarse = central_stencil(kernel, s, &orders, &steps)?;
    let fine = central_stencil(kernel, s, &orders, &half)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `g_ij = ½ ∂²F/∂yⁱ∂yʲ` together with its inverse.
#[derive(Clone, Debug)]
pub struct FundamentalTensor {
    pub g: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// Largest `|g_ij − g_ji|` before symmetrization.
    pub asymmetry: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

pub fn fundamental_tensor(kernel: &dyn MetricKernel, s: &TangentSample) -> Result<FundamentalTensor> {
    fundamental_tensor_with(kernel, s, DerivativeMethod::Exact, &Tolerances::default())
}

pub fn fundamental_tensor_with(
    kernel: &dyn MetricKernel,
    s: &TangentSample,
    method: DerivativeMethod,
    tol: &Tolerances,
) -> Result<FundamentalTensor> {
    check_cone(kernel, &s.x, &s.y, 0.0)?;
    let n = kernel.dim();
    let raw = match method {
        DerivativeMethod::Exact => {
            let jet = metric_jet(kernel, &s.x, &s.y, Truncation::new(n, n, 0, 2, 2));
            let mut e = vec![0u8; 2 * n];
            DMatrix::from_fn(n, n, |i, j| {
                e.iter_mut().for_each(|v| *v = 0);
                e[n + i] += 1;
                e[n + j] += 1;
                0.5 * jet.partial(&e)
            })
        }
        DerivativeMethod::FiniteDifference => {
            let zero = vec![0; n];
            let mut g = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut beta = vec![0; n];
                    beta[i] += 1;
                    beta[j] += 1;
                    g[(i, j)] = 0.5 * finite_difference(kernel, s, &zero, &beta)?;
                }
            }
            g
        }
    };
    finish_fundamental(raw, tol)
}

pub(crate) fn finish_fundamental(raw: DMatrix<f64>, tol: &Tolerances) -> Result<FundamentalTensor> {
    let n = raw.nrows();
    let asymmetry = (&raw - raw.transpose()).amax();
    let g = (&raw + raw.transpose()) * 0.5;
    let sv = g.clone().singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    if !(sigma_min > tol.tol_g * sigma_max) {
        return Err(Error::DegenerateMetric {
            sigma_min,
            sigma_max,
        });
    }
    let inverse = g.clone().try_inverse().ok_or(Error::DegenerateMetric {
        sigma_min,
        sigma_max,
    })?;
    let defect = (&g * &inverse - DMatrix::<f64>::identity(n, n)).amax();
    if defect > tol.tol_inv {
        return Err(Error::DegenerateMetric {
            sigma_min,
            sigma_max,
        });
    }
    Ok(FundamentalTensor {
        g,
        inverse,
        asymmetry,
        sigma_min,
        sigma_max,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub lambdas: Vec<f64>,
    /// max over λ of `|F(x,λy) − λ²F(x,y)| / |λ²F(x,y)|`.
    pub max_relative_deviation: f64,
    /// `|g_ij yⁱyʲ − F| / |F|`.
    pub euler_deviation: f64,
    pub within_tolerance: bool,
}

pub fn validate_homogeneity(
    kernel: &dyn MetricKernel,
    s: &TangentSample,
    lambdas: &[f64],
) -> Result<HomogeneityReport> {
    let tol = Tolerances::default();
    let f = evaluate_metric(kernel, s)?;
    let mut worst: f64 = 0.0;
    for &lambda in lambdas {
        if lambda <= 0.0 {
            return Err(Error::Validation(format!("scale {lambda} is not positive")));
        }
        let scaled: Vec<f64> = s.y.iter().map(|v| v * lambda).collect();
        let fl = evaluate_metric(kernel, &TangentSample::new(s.x.clone(), scaled))?;
        let target = lambda * lambda * f;
        let dev = if target == 0.0 {
            fl.abs()
        } else {
            (fl - target).abs() / target.abs()
        };
        worst = worst.max(dev);
    }
    let g = fundamental_tensor(kernel, s)?;
    let y = nalgebra::DVector::from_column_slice(&s.y);
    let quad = (y.transpose() * &g.g * &y)[(0, 0)];
    let euler = if f == 0.0 {
        quad.abs()
    } else {
        (quad - f).abs() / f.abs()
    };
    Ok(HomogeneityReport {
        lambdas: lambdas.to_vec(),
        max_relative_deviation: worst,
        euler_deviation: euler,
        within_tolerance: worst <= tol.tol_hom && euler <= tol.tol_hom,
    })
}

/// Radial projection `y / √F(x, y)` onto the positive indicatrix.
pub fn indicatrix_project(kernel: &dyn MetricKernel, s: &TangentSample) -> Result<Vec<f64>> {
    let f = evaluate_metric(kernel, s)?;
    if !(f > 0.0) {
        return Err(Error::NonPositiveValue(f));
    }
    let scale = f.sqrt();
    Ok(s.y.iter().map(|v| v / scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use approx::assert_relative_eq;

    fn s(x: &[f64], y: &[f64]) -> TangentSample {
        TangentSample::new(x.to_vec(), y.to_vec())
    }

    #[test]
    fn metric_values() {
        let e = Euclidean { dim: 2 };
        assert_relative_eq!(evaluate_metric(&e, &s(&[0.0, 0.0], &[3.0, 4.0])).unwrap(), 25.0);
        let h = HeisenbergBerwaldMoor;
        assert_relative_eq!(
            evaluate_metric(&h, &s(&[0.0; 3], &[8.0, 8.0, 8.0])).unwrap(),
            64.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            evaluate_metric(&h, &s(&[1.0, 0.0, 0.0], &[1.0, 2.0, 1.0])).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let err = evaluate_metric(&h, &s(&[0.0; 3], &[1.0, -1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("-1.0")));
    }

    #[test]
    fn oracle_on_euclidean() {
        let e = Euclidean { dim: 3 };
        let p = s(&[0.2, 0.1, -0.4], &[1.0, -2.0, 0.5]);
        let d = derivative_oracle(&e, &p, &[0, 0, 0], &[2, 0, 0], DerivativeMethod::Exact).unwrap();
        assert_relative_eq!(d, 2.0);
        let d = derivative_oracle(&e, &p, &[1, 0, 0], &[1, 0, 0], DerivativeMethod::Exact).unwrap();
        assert_eq!(d, 0.0);
        assert!(matches!(
            derivative_oracle(&e, &p, &[2, 0, 0], &[2, 2, 0], DerivativeMethod::Exact),
            Err(Error::UnsupportedOrder { order: 6, .. })
        ));
    }

    #[test]
    fn heisenberg_mixed_partial() {
        // Frozen from a Richardson-extrapolated central difference at step 1e-4;
        // the closed form of ∂²F/∂y¹∂y² at (1,1,1) is 4/9.
        let h = HeisenbergBerwaldMoor;
        let p = s(&[0.0; 3], &[1.0, 1.0, 1.0]);
        let fd = derivative_oracle(&h, &p, &[0; 3], &[1, 1, 0], DerivativeMethod::FiniteDifference)
            .unwrap();
        assert_relative_eq!(fd, 4.0 / 9.0, epsilon = 1e-7);
        let exact =
            derivative_oracle(&h, &p, &[0; 3], &[1, 1, 0], DerivativeMethod::Exact).unwrap();
        assert_relative_eq!(exact, 4.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn heisenberg_fundamental_tensor_is_indefinite() {
        let h = HeisenbergBerwaldMoor;
        let g = fundamental_tensor(&h, &s(&[0.0; 3], &[1.0, 1.0, 1.0])).unwrap();
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[-1.0, 2.0, 2.0, 2.0, -1.0, 2.0, 2.0, 2.0, -1.0],
        ) / 9.0;
        assert!((&g.g - &expected).amax() < 1e-14);
        let eig = g.g.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().any(|&l| l < 0.0) && eig.iter().any(|&l| l > 0.0));
        let fd = fundamental_tensor_with(
            &h,
            &s(&[0.0; 3], &[1.0, 1.0, 1.0]),
            DerivativeMethod::FiniteDifference,
            &Tolerances::default(),
        )
        .unwrap();
        assert!((&fd.g - &expected).amax() < 1e-7);
    }

    #[test]
    fn riemannian_tensor_is_metric_matrix() {
        let k = RiemannianKernel::new(
            "r".into(),
            vec![
                vec![Expr::parse("2 + x1^2", 2).unwrap(), Expr::parse("x2", 2).unwrap()],
                vec![Expr::parse("x2", 2).unwrap(), Expr::parse("3", 2).unwrap()],
            ],
            true,
        )
        .unwrap();
        for y in [[1.0, 0.5], [-3.0, 2.0]] {
            let g = fundamental_tensor(&k, &s(&[1.0, 0.5], &y)).unwrap();
            let expected = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 3.0]);
            assert!((&g.g - &expected).amax() < 1e-14);
        }
    }

    #[test]
    fn degenerate_metric_is_rejected() {
        let k = ExpressionKernel::new(
            "deg".into(),
            2,
            Expr::parse("y1^2", 2).unwrap(),
            vec![],
            false,
        );
        assert!(matches!(
            fundamental_tensor(&k, &s(&[0.0, 0.0], &[1.0, 1.0])),
            Err(Error::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn homogeneity_reports() {
        let e = Euclidean { dim: 3 };
        let r = validate_homogeneity(&e, &s(&[0.0; 3], &[1.0, 2.0, 3.0]), &[2.0]).unwrap();
        assert_eq!(r.max_relative_deviation, 0.0);
        let h = HeisenbergBerwaldMoor;
        let r = validate_homogeneity(&h, &s(&[0.0; 3], &[1.0, 1.0, 1.0]), &[3.0]).unwrap();
        assert!(r.max_relative_deviation <= 1e-12);
        assert!(r.euler_deviation <= 1e-12);
        assert!(r.within_tolerance);
    }

    #[test]
    fn projection() {
        let e = Euclidean { dim: 2 };
        let y = indicatrix_project(&e, &s(&[0.0, 0.0], &[3.0, 4.0])).unwrap();
        assert_relative_eq!(y[0], 0.6);
        assert_relative_eq!(y[1], 0.8);
        let h = HeisenbergBerwaldMoor;
        let y = indicatrix_project(&h, &s(&[0.0; 3], &[8.0, 8.0, 8.0])).unwrap();
        for v in y {
            assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        }
        let y = indicatrix_project(&e, &s(&[0.0, 0.0], &[0.6, 0.8])).unwrap();
        assert_relative_eq!(y[0], 0.6, epsilon = 1e-15);
        let neg = ExpressionKernel::new("neg".into(), 2, Expr::parse("-(y1^2 + y2^2)", 2).unwrap(), vec![], false);
        assert!(matches!(
            indicatrix_project(&neg, &s(&[0.0, 0.0], &[1.0, 0.0])),
            Err(Error::NonPositiveValue(_))
        ));
    }
}
