//! Spray coefficients, the canonical nonlinear connection and its curvature.
//!
//! Everything is derived from the jets of `F`. With `g = ½ F_yy` the spray is
//! `Gⁱ = ¼ gⁱˡ (F_{xᵏyˡ} yᵏ − F_{xˡ})`, which agrees with the Christoffel-type
//! expression through Euler's relation and needs one derivative order less.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    check_cone, finish_fundamental, metric_jet, FundamentalTensor, IndicatrixSampleSet,
    MetricKernel, TangentSample, Tolerances,
};
use crate::jet::{Jet, JetSpace, Truncation};

/// Sign relating the coordinate curvature formula to the constant-curvature
/// pattern `c (δᵏᵢ y_j − δᵏⱼ y_i)`: with it the unit sphere fits `c = +1`.
pub const CURVATURE_SIGN: f64 = -1.0;

/// Curvature tensor `Rᵏ_ij`, antisymmetric in `(i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    pub dim: usize,
    /// Row-major in `(k, i, j)`.
    pub data: Vec<f64>,
}

impl Curvature {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    fn index(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.dim + i) * self.dim + j
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[self.index(k, i, j)]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let idx = self.index(k, i, j);
        self.data[idx] = v;
    }

    /// The vector `Rᵏ_ij XⁱYʲ`.
    pub fn contract(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|k| {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += self.get(k, i, j) * x[i] * y[j];
                    }
                }
                acc
            })
            .collect()
    }

    /// The vector `Rᵏ_ij` for fixed `(i, j)`.
    pub fn pair(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.dim).map(|k| self.get(k, i, j)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn antisymmetrized(raw: &Curvature) -> (Curvature, f64) {
        let n = raw.dim;
        let mut out = Curvature::zeros(n);
        let mut asym: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let a = raw.get(k, i, j);
                    let b = raw.get(k, j, i);
                    asym = asym.max((a + b).abs());
                    out.set(k, i, j, 0.5 * (a - b));
                }
            }
        }
        (out, asym)
    }
}

/// The connection-level objects at one point of the tangent bundle.
#[derive(Clone, Debug)]
pub struct ConnectionData {
    pub sample: TangentSample,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub spray: Vec<f64>,
    /// `gamma[(i, j)] = Γⁱ_j`.
    pub gamma: DMatrix<f64>,
    pub curvature: Curvature,
}

struct LocalConnection {
    tensor: FundamentalTensor,
    spray: Vec<f64>,
    gamma: DMatrix<f64>,
}

/// The partials of `F` that the spray and the connection consume.
struct LowPartials {
    fx: Vec<f64>,
    fxy: Vec<f64>,
    fyy: Vec<f64>,
    fyyy: Vec<f64>,
    fxyy: Vec<f64>,
}

impl LowPartials {
    fn from_jet(jet: &Jet, n: usize) -> Self {
        let mut p = Self {
            fx: vec![0.0; n],
            fxy: vec![0.0; n * n],
            fyy: vec![0.0; n * n],
            fyyy: vec![0.0; n * n * n],
            fxyy: vec![0.0; n * n * n],
        };
        let space = jet.space();
        let mut xs = Vec::with_capacity(3);
        let mut ys = Vec::with_capacity(3);
        for index in 0..space.len() {
            xs.clear();
            ys.clear();
            for (v, &e) in space.exponents(index).iter().enumerate() {
                for _ in 0..e {
                    if v < n {
                        xs.push(v);
                    } else {
                        ys.push(v - n);
                    }
                }
            }
            let d = jet.partial_at(index);
            match (xs.len(), ys.len()) {
                (1, 0) => p.fx[xs[0]] = d,
                (1, 1) => p.fxy[xs[0] * n + ys[0]] = d,
                (0, 2) => {
                    let (a, b) = (ys[0], ys[1]);
                    p.fyy[a * n + b] = d;
                    p.fyy[b * n + a] = d;
                }
                (0, 3) => {
                    let (a, b, c) = (ys[0], ys[1], ys[2]);
                    for (i, j, k) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
                        p.fyyy[(i * n + j) * n + k] = d;
                    }
                }
                (1, 2) => {
                    let (k, a, b) = (xs[0], ys[0], ys[1]);
                    p.fxyy[(k * n + a) * n + b] = d;
                    p.fxyy[(k * n + b) * n + a] = d;
                }
                _ => {}
            }
        }
        p
    }
}

/// `g`, `G` and `Γ` from third-order jets of `F`, in plain floating point.
fn local_connection(kernel: &dyn MetricKernel, x: &[f64], y: &[f64]) -> Result<LocalConnection> {
    let n = kernel.dim();
    let jet = metric_jet(kernel, x, y, Truncation::new(n, n, 1, 3, 3));
    let p = LowPartials::from_jet(&jet, n);
    let raw = DMatrix::from_fn(n, n, |a, b| 0.5 * p.fyy[a * n + b]);
    let tensor = finish_fundamental(raw, &Tolerances::default())?;
    let (spray, gamma) = spray_and_connection(&p, &tensor.inverse, y);
    Ok(LocalConnection {
        tensor,
        spray,
        gamma,
    })
}

/// `Γ` alone, with a plain LU inverse in place of the full nondegeneracy
/// analysis; used in the inner loop of the transport integrator.
pub(crate) fn connection_matrix(kernel: &dyn MetricKernel, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    let n = kernel.dim();
    let jet = metric_jet(kernel, x, y, Truncation::new(n, n, 1, 3, 3));
    let p = LowPartials::from_jet(&jet, n);
    let g = DMatrix::from_fn(n, n, |a, b| 0.5 * p.fyy[a * n + b]);
    let scale = g.amax();
    let gi = g.try_inverse().ok_or(Error::DegenerateMetric {
        sigma_min: 0.0,
        sigma_max: scale,
    })?;
    if !(gi.amax() * scale < 1e12) {
        return Err(Error::DegenerateMetric {
            sigma_min: 1.0 / gi.amax(),
            sigma_max: scale,
        });
    }
    Ok(spray_and_connection(&p, &gi, y).1)
}

fn spray_and_connection(p: &LowPartials, gi: &DMatrix<f64>, y: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = y.len();
    // s_l = F_{x^k y^l} y^k − F_{x^l}
    let s = DVector::from_fn(n, |l, _| {
        (0..n).map(|k| p.fxy[k * n + l] * y[k]).sum::<f64>() - p.fx[l]
    });
    let spray: Vec<f64> = (gi * &s * 0.25).iter().copied().collect();
    let mut gamma = DMatrix::zeros(n, n);
    for j in 0..n {
        // ∂_j g_ab = ½ F_{y^a y^b y^j}
        let dg = DMatrix::from_fn(n, n, |a, b| 0.5 * p.fyyy[(a * n + b) * n + j]);
        let dgi = -(gi * dg * gi);
        // ∂_j s_l = F_{x^k y^l y^j} y^k + F_{x^j y^l} − F_{x^l y^j}
        let ds = DVector::from_fn(n, |l, _| {
            (0..n).map(|k| p.fxyy[(k * n + l) * n + j] * y[k]).sum::<f64>() + p.fxy[j * n + l]
                - p.fxy[l * n + j]
        });
        let col = (dgi * &s + gi * ds) * 0.25;
        gamma.set_column(j, &col);
    }
    (spray, gamma)
}

pub fn spray(kernel: &dyn MetricKernel, s: &TangentSample) -> Result<Vec<f64>> {
    check_cone(kernel, &s.x, &s.y, 0.0)?;
    Ok(local_connection(kernel, &s.x, &s.y)?.spray)
}

/// `Γⁱ_j = ∂Gⁱ/∂yʲ`, with `Γⁱ_j` stored at row `i`, column `j`.
pub fn nonlinear_connection(kernel: &dyn MetricKernel, s: &TangentSample) -> Result<DMatrix<f64>> {
    check_cone(kernel, &s.x, &s.y, 0.0)?;
    Ok(local_connection(kernel, &s.x, &s.y)?.gamma)
}

/// Gauss-Jordan inverse of a matrix of jets, pivoting on constant terms.
fn invert_jets(mut a: Vec<Vec<Jet>>) -> Result<Vec<Vec<Jet>>> {
    let n = a.len();
    let space = a[0][0].space().clone();
    let mut inv: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Jet::constant(&space, if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p][col].value().abs().total_cmp(&a[q][col].value().abs()))
            .unwrap();
        if a[pivot][col].value() == 0.0 {
            return Err(Error::DegenerateMetric {
                sigma_min: 0.0,
                sigma_max: 0.0,
            });
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let r = a[col][col].recip();
        for j in 0..n {
            a[col][j] = &a[col][j] * &r;
            inv[col][j] = &inv[col][j] * &r;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col].clone();
            if factor.coefficients().iter().all(|&c| c == 0.0) {
                continue;
            }
            for j in 0..n {
                a[row][j] = &a[row][j] - &(&factor * &a[col][j]);
                inv[row][j] = &inv[row][j] - &(&factor * &inv[col][j]);
            }
        }
    }
    Ok(inv)
}

/// `Γⁱ_j` as jets in `(x, y)` around the sample, exact in x to first order and
/// in total to `order + 1`, at `x`-degree zero to `order + 1`.
struct ConnectionJets {
    n: usize,
    gamma: Vec<Vec<Jet>>,
}

fn connection_jets(kernel: &dyn MetricKernel, x: &[f64], y: &[f64], order: usize) -> Result<ConnectionJets> {
    let n = kernel.dim();
    let f = metric_jet(kernel, x, y, Truncation::new(n, n, 2, order + 4, order + 4));
    let work = JetSpace::get(Truncation::new(n, n, 1, order + 2, order + 2));
    let fx: Vec<Jet> = (0..n).map(|k| f.diff(k)).collect();
    let fy: Vec<Jet> = (0..n).map(|a| f.diff(n + a)).collect();
    let g: Vec<Vec<Jet>> = (0..n)
        .map(|a| (0..n).map(|b| (fy[a].diff(n + b) * 0.5).restrict(&work)).collect())
        .collect();
    let g_inv = invert_jets(g)?;
    let ys: Vec<Jet> = (0..n).map(|k| Jet::variable(&work, n + k, y[k])).collect();
    let s: Vec<Jet> = (0..n)
        .map(|l| {
            let mut acc = -fx[l].restrict(&work);
            for k in 0..n {
                acc = acc + fx[k].diff(n + l).restrict(&work) * &ys[k];
            }
            acc
        })
        .collect();
    let gamma = (0..n)
        .map(|i| {
            let mut spray = Jet::constant(&work, 0.0);
            for l in 0..n {
                spray = spray + &g_inv[i][l] * &s[l];
            }
            let spray = spray * 0.25;
            (0..n).map(|j| spray.diff(n + j)).collect()
        })
        .collect();
    Ok(ConnectionJets { n, gamma })
}

/// Jets of `Rᵏ_ij` in the fiber variables around a fixed `(x, y)`.
#[derive(Clone, Debug)]
pub struct CurvatureJets {
    pub dim: usize,
    pub order: usize,
    /// Row-major in `(k, i, j)`; antisymmetric in `(i, j)`.
    pub jets: Vec<Jet>,
}

impl CurvatureJets {
    pub fn get(&self, k: usize, i: usize, j: usize) -> &Jet {
        &self.jets[(k * self.dim + i) * self.dim + j]
    }

    pub fn values(&self) -> Curvature {
        Curvature {
            dim: self.dim,
            data: self.jets.iter().map(Jet::value).collect(),
        }
    }

    /// Jets of `Rᵏ_ij XⁱYʲ`.
    pub fn contract(&self, x: &[f64], y: &[f64]) -> Vec<Jet> {
        let n = self.dim;
        let space = self.jets[0].space().clone();
        (0..n)
            .map(|k| {
                let mut acc = Jet::constant(&space, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let w = x[i] * y[j];
                        if w != 0.0 {
                            acc = acc + self.get(k, i, j) * w;
                        }
                    }
                }
                acc
            })
            .collect()
    }
}

/// Curvature as a fiber jet of the given order at `(x, y)`, together with the
/// largest raw asymmetry `|Rᵏ_ij + Rᵏ_ji|` of its constant terms.
pub fn curvature_jets_with_asymmetry(
    kernel: &dyn MetricKernel,
    x: &[f64],
    y: &[f64],
    order: usize,
) -> Result<(CurvatureJets, f64)> {
    let ConnectionJets { n, gamma } = connection_jets(kernel, x, y, order)?;
    let high = JetSpace::get(Truncation::fiber(n, order + 1));
    let low = JetSpace::get(Truncation::fiber(n, order));
    let gamma_high: Vec<Vec<Jet>> = gamma
        .iter()
        .map(|row| row.iter().map(|e| e.restrict(&high)).collect())
        .collect();
    let gamma_low: Vec<Vec<Jet>> = gamma_high
        .iter()
        .map(|row| row.iter().map(|e| e.restrict(&low)).collect())
        .collect();
    // dx[k][i][j] = ∂Γᵏ_i/∂xʲ, dy[k][i][m] = ∂Γᵏ_i/∂yᵐ
    let dx: Vec<Vec<Vec<Jet>>> = gamma
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| (0..n).map(|j| e.diff(j).restrict(&low)).collect())
                .collect()
        })
        .collect();
    let dy: Vec<Vec<Vec<Jet>>> = gamma_high
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| (0..n).map(|m| e.diff(m).restrict(&low)).collect())
                .collect()
        })
        .collect();
    let mut raw = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut r = &dx[k][i][j] - &dx[k][j][i];
                for m in 0..n {
                    r = r + &gamma_low[m][i] * &dy[k][j][m] - &gamma_low[m][j] * &dy[k][i][m];
                }
                raw.push(r);
            }
        }
    }
    let mut asym: f64 = 0.0;
    let mut jets = Vec::with_capacity(raw.len());
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let a = &raw[(k * n + i) * n + j];
                let b = &raw[(k * n + j) * n + i];
                asym = asym.max((a.value() + b.value()).abs());
                jets.push((a - b) * 0.5);
            }
        }
    }
    Ok((CurvatureJets { dim: n, order, jets }, asym))
}

pub fn curvature_jets(kernel: &dyn MetricKernel, x: &[f64], y: &[f64], order: usize) -> Result<CurvatureJets> {
    Ok(curvature_jets_with_asymmetry(kernel, x, y, order)?.0)
}

/// Largest normalized `|g_y(y, Rᵏ_ij)|` over the index pairs, measured against
/// `σ_max(g) ‖y‖ (‖R‖ + ‖y‖)`.
pub fn tangency_defect(g: &DMatrix<f64>, y: &[f64], r: &Curvature) -> f64 {
    let n = r.dim;
    let yv = DVector::from_column_slice(y);
    let lowered = g * &yv;
    let scale = g.amax() * yv.norm() * (r.max_abs() + yv.norm());
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..n).map(|k| lowered[k] * r.get(k, i, j)).sum();
            worst = worst.max(v.abs());
        }
    }
    worst / scale
}

/// Threshold beyond which a computed curvature is rejected as inconsistent.
pub const TANGENCY_LIMIT: f64 = 1e-6;

pub fn curvature(kernel: &dyn MetricKernel, s: &TangentSample) -> Result<Curvature> {
    Ok(connection_data(kernel, s)?.curvature)
}

pub fn connection_data(kernel: &dyn MetricKernel, s: &TangentSample) -> Result<ConnectionData> {
    check_cone(kernel, &s.x, &s.y, Tolerances::default().delta)?;
    let local = local_connection(kernel, &s.x, &s.y)?;
    let r = curvature_jets(kernel, &s.x, &s.y, 0)?.values();
    let defect = tangency_defect(&local.tensor.g, &s.y, &r);
    if defect > TANGENCY_LIMIT {
        return Err(Error::SelfConsistency {
            what: "curvature tangency".to_string(),
            defect,
        });
    }
    Ok(ConnectionData {
        sample: s.clone(),
        g: local.tensor.g,
        g_inv: local.tensor.inverse,
        spray: local.spray,
        gamma: local.gamma,
        curvature: r,
    })
}

/// Curvature with the derivatives of `Γ` taken by Richardson-extrapolated
/// central differences instead of jets.
pub fn curvature_finite_difference(kernel: &dyn MetricKernel, s: &TangentSample, step: f64) -> Result<Curvature> {
    check_cone(kernel, &s.x, &s.y, Tolerances::default().delta)?;
    let n = kernel.dim();
    let gamma0 = connection_matrix(kernel, &s.x, &s.y)?;
    let derivative = |var: usize| -> Result<DMatrix<f64>> {
        let central = |h: f64| -> Result<DMatrix<f64>> {
            let mut xp = s.x.clone();
            let mut yp = s.y.clone();
            let mut xm = s.x.clone();
            let mut ym = s.y.clone();
            if var < n {
                let hh = h * s.x[var].abs().max(1.0);
                xp[var] += hh;
                xm[var] -= hh;
                let d = connection_matrix(kernel, &xp, &yp)? - connection_matrix(kernel, &xm, &ym)?;
                Ok(d / (2.0 * hh))
            } else {
                let v = var - n;
                let hh = h * s.y[v].abs().max(1.0);
                yp[v] += hh;
                ym[v] -= hh;
                for (p, q) in [(&s.x, &yp), (&s.x, &ym)] {
                    if !kernel.in_cone(p, q, 0.0) {
                        return Err(Error::domain("finite-difference stencil leaves the cone"));
                    }
                }
                let d = connection_matrix(kernel, &xp, &yp)? - connection_matrix(kernel, &xm, &ym)?;
                Ok(d / (2.0 * hh))
            }
        };
        let coarse = central(step)?;
        let fine = central(step / 2.0)?;
        Ok((fine * 4.0 - coarse) / 3.0)
    };
    let dx: Vec<DMatrix<f64>> = (0..n).map(|j| derivative(j)).collect::<Result<_>>()?;
    let dy: Vec<DMatrix<f64>> = (0..n).map(|m| derivative(n + m)).collect::<Result<_>>()?;
    let mut raw = Curvature::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut r = dx[j][(k, i)] - dx[i][(k, j)];
                for m in 0..n {
                    r += gamma0[(m, i)] * dy[m][(k, j)] - gamma0[(m, j)] * dy[m][(k, i)];
                }
                raw.set(k, i, j, r);
            }
        }
    }
    Ok(Curvature::antisymmetrized(&raw).0)
}

/// The constant-curvature pattern `σ (δᵏᵢ y_j − δᵏⱼ y_i)` with `y_j = g_jm yᵐ`.
pub fn constant_curvature_pattern(g: &DMatrix<f64>, y: &[f64]) -> Curvature {
    let n = y.len();
    let lowered = g * DVector::from_column_slice(y);
    let mut p = Curvature::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                if k == i {
                    v += lowered[j];
                }
                if k == j {
                    v -= lowered[i];
                }
                p.set(k, i, j, CURVATURE_SIGN * v);
            }
        }
    }
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFitReport {
    pub c_estimate: f64,
    /// Largest per-sample `max|R − cP| / max|P|`.
    pub residual: f64,
    pub samples_used: usize,
}

pub const MIN_FIT_SAMPLES: usize = 10;

fn require_samples(samples: &IndicatrixSampleSet, kernel: &dyn MetricKernel, x: &[f64]) -> Result<()> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::config(format!(
            "at least {MIN_FIT_SAMPLES} samples required, got {}",
            samples.len()
        )));
    }
    if samples.x.len() != kernel.dim() || samples.x.iter().zip(x).any(|(a, b)| a != b) {
        return Err(Error::Validation(
            "sample set belongs to a different base point".to_string(),
        ));
    }
    Ok(())
}

/// Least-squares `c` in `R ≈ c P` over every component of every sample.
pub fn constant_curvature_fit(
    kernel: &dyn MetricKernel,
    x: &[f64],
    samples: &IndicatrixSampleSet,
) -> Result<CurvatureFitReport> {
    require_samples(samples, kernel, x)?;
    let mut pairs = Vec::with_capacity(samples.len());
    for y in &samples.points {
        let data = connection_data(kernel, &TangentSample::new(x.to_vec(), y.clone()))?;
        let p = constant_curvature_pattern(&data.g, y);
        pairs.push((data.curvature, p));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (r, p) in &pairs {
        for (a, b) in r.data.iter().zip(&p.data) {
            num += a * b;
            den += b * b;
        }
    }
    let c = if den > 0.0 { num / den } else { 0.0 };
    let residual = pairs
        .iter()
        .map(|(r, p)| {
            let dev = r
                .data
                .iter()
                .zip(&p.data)
                .fold(0.0f64, |m, (a, b)| m.max((a - c * b).abs()));
            let scale = p.max_abs();
            if scale > 0.0 {
                dev / scale
            } else {
                dev
            }
        })
        .fold(0.0, f64::max);
    Ok(CurvatureFitReport {
        c_estimate: c,
        residual,
        samples_used: pairs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiemannianPointReport {
    pub is_semi_riemannian: bool,
    pub deviation: f64,
    pub tol: f64,
}

pub const SEMI_RIEMANNIAN_TOL: f64 = 1e-6;

/// Largest `‖g_{y_a} − g_{y_b}‖ / ‖g_{y_a}‖` over pairs of samples.
pub fn riemannian_point_test(
    kernel: &dyn MetricKernel,
    x: &[f64],
    samples: &IndicatrixSampleSet,
    tol: f64,
) -> Result<RiemannianPointReport> {
    require_samples(samples, kernel, x)?;
    let tensors: Vec<DMatrix<f64>> = samples
        .points
        .iter()
        .map(|y| {
            crate::geometry::fundamental_tensor(kernel, &TangentSample::new(x.to_vec(), y.clone()))
                .map(|t| t.g)
        })
        .collect::<Result<_>>()?;
    let mut deviation: f64 = 0.0;
    for a in &tensors {
        let na = a.norm();
        for b in &tensors {
            deviation = deviation.max((a - b).norm() / na);
        }
    }
    Ok(RiemannianPointReport {
        is_semi_riemannian: deviation <= tol,
        deviation,
        tol,
    })
}
