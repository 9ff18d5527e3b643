//! Curvature vector fields on the indicatrix, their Lie brackets and the
//! numerical dimension of the algebra they generate.
//!
//! Fields are homogeneous of degree one in `y` and tangent to every level set
//! of `F`, so they are handled on the cone and sampled on the indicatrix.
//! Brackets use the usual convention `[ξ, η] = (∂η/∂y) ξ − (∂ξ/∂y) η`; only
//! spans and ranks enter the analysis, and those do not depend on the sign.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::connection::{curvature_jets, CurvatureJets};
use crate::error::{Error, Result};
use crate::geometry::{fundamental_tensor, IndicatrixSampleSet, MetricKernel, TangentSample};
use crate::jet::{Jet, JetSpace, Truncation};

/// A vector field `y ↦ ξ(y)` on the fiber over a fixed base point.
pub trait IndicatrixField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn base_x(&self) -> &[f64];
    fn label(&self) -> String;
    /// Taylor jets of the components around `y` in the fiber variables.
    fn jet(&self, y: &[f64], order: usize) -> Result<Vec<Jet>>;

    fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(y, 0)?.iter().map(Jet::value).collect())
    }

    /// `J[(i, m)] = ∂ξⁱ/∂yᵐ`.
    fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let jets = self.jet(y, 1)?;
        let mut e = vec![0u8; n];
        Ok(DMatrix::from_fn(n, n, |i, m| {
            e.iter_mut().for_each(|v| *v = 0);
            e[m] = 1;
            jets[i].coefficient(&e)
        }))
    }
}

pub type FieldRef = Arc<dyn IndicatrixField>;

fn fiber_seed(y: &[f64], order: usize) -> Vec<Jet> {
    let space = JetSpace::get(Truncation::fiber(y.len(), order));
    crate::jet::seed_point(&space, &[], y).1
}

/// Caches curvature jets per fiber point so that the generators at one base
/// point share a single computation.
#[derive(Debug)]
pub struct CurvatureCache {
    kernel: Arc<dyn MetricKernel>,
    x: Vec<f64>,
    entries: Mutex<HashMap<(Vec<u64>, usize), Arc<CurvatureJets>>>,
}

const CACHE_LIMIT: usize = 4096;

impl CurvatureCache {
    pub fn new(kernel: Arc<dyn MetricKernel>, x: &[f64]) -> Arc<Self> {
        Arc::new(Self {
            kernel,
            x: x.to_vec(),
            entries: Mutex::new(HashMap::new()),
        })
    }

    pub fn kernel(&self) -> &Arc<dyn MetricKernel> {
        &self.kernel
    }

    pub fn get(&self, y: &[f64], order: usize) -> Result<Arc<CurvatureJets>> {
        let key = (y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), order);
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        crate::geometry::check_cone(&*self.kernel, &self.x, y, 0.0)?;
        let jets = Arc::new(curvature_jets(&*self.kernel, &self.x, y, order)?);
        let mut map = self.entries.lock().unwrap();
        if map.len() >= CACHE_LIMIT {
            map.clear();
        }
        map.insert(key, jets.clone());
        Ok(jets)
    }
}

/// `r_x(X, Y)(y) = Rᵏ_ij(x, y) Xⁱ Yʲ`.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    cache: Arc<CurvatureCache>,
    a: Vec<f64>,
    b: Vec<f64>,
    label: String,
}

impl CurvatureField {
    pub fn new(cache: Arc<CurvatureCache>, a: Vec<f64>, b: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            cache,
            a,
            b,
            label: label.into(),
        }
    }
}

impl IndicatrixField for CurvatureField {
    fn dim(&self) -> usize {
        self.cache.kernel.dim()
    }
    fn base_x(&self) -> &[f64] {
        &self.cache.x
    }
    fn label(&self) -> String {
        self.label.clone()
    }
    fn jet(&self, y: &[f64], order: usize) -> Result<Vec<Jet>> {
        Ok(self.cache.get(y, order)?.contract(&self.a, &self.b))
    }
}

pub fn curvature_field(kernel: Arc<dyn MetricKernel>, x: &[f64], a: &[f64], b: &[f64]) -> Result<FieldRef> {
    let n = kernel.dim();
    if x.len() != n || a.len() != n || b.len() != n {
        return Err(Error::Validation(format!("vectors must have dimension {n}")));
    }
    let cache = CurvatureCache::new(kernel, x);
    Ok(Arc::new(CurvatureField::new(cache, a.to_vec(), b.to_vec(), format!("r({a:?},{b:?})"))))
}

/// The generators `r_x(e_i, e_j)` for `i < j`, sharing one cache. Labels use
/// one-based indices.
pub fn curvature_generators(kernel: Arc<dyn MetricKernel>, x: &[f64]) -> Vec<FieldRef> {
    let n = kernel.dim();
    let cache = CurvatureCache::new(kernel, x);
    let mut out: Vec<FieldRef> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            a[i] = 1.0;
            b[j] = 1.0;
            out.push(Arc::new(CurvatureField::new(
                cache.clone(),
                a,
                b,
                format!("r({},{})", i + 1, j + 1),
            )));
        }
    }
    out
}

/// `ξ(y) = M y`.
#[derive(Clone, Debug)]
pub struct LinearField {
    pub x: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub label: String,
}

impl LinearField {
    /// The rotation generator `L_jk(y) = e_j y_k − e_k y_j` (zero-based indices).
    pub fn rotation(x: &[f64], j: usize, k: usize) -> Self {
        let n = x.len();
        let mut m = DMatrix::zeros(n, n);
        m[(j, k)] = 1.0;
        m[(k, j)] = -1.0;
        Self {
            x: x.to_vec(),
            matrix: m,
            label: format!("L({},{})", j + 1, k + 1),
        }
    }
}

impl IndicatrixField for LinearField {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn base_x(&self) -> &[f64] {
        &self.x
    }
    fn label(&self) -> String {
        self.label.clone()
    }
    fn jet(&self, y: &[f64], order: usize) -> Result<Vec<Jet>> {
        let ys = fiber_seed(y, order);
        let space = ys[0].space().clone();
        Ok((0..self.dim())
            .map(|i| {
                let mut acc = Jet::constant(&space, 0.0);
                for (m, yj) in ys.iter().enumerate() {
                    let c = self.matrix[(i, m)];
                    if c != 0.0 {
                        acc = acc + yj * c;
                    }
                }
                acc
            })
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct ScaledField {
    pub inner: FieldRef,
    pub factor: f64,
}

impl IndicatrixField for ScaledField {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn base_x(&self) -> &[f64] {
        self.inner.base_x()
    }
    fn label(&self) -> String {
        format!("{}*{}", self.factor, self.inner.label())
    }
    fn jet(&self, y: &[f64], order: usize) -> Result<Vec<Jet>> {
        Ok(self.inner.jet(y, order)?.into_iter().map(|j| j * self.factor).collect())
    }
}

/// `[ξ, η]` of two jets of order `p`, valid to order `p − 1`.
pub fn bracket_jets(f: &[Jet], g: &[Jet]) -> Vec<Jet> {
    let n = f.len();
    let order = f[0].space().truncation().kt;
    assert!(order >= 1, "bracket needs first-order jets");
    let low = JetSpace::get(Truncation::fiber(n, order - 1));
    let fl: Vec<Jet> = f.iter().map(|j| j.restrict(&low)).collect();
    let gl: Vec<Jet> = g.iter().map(|j| j.restrict(&low)).collect();
    (0..n)
        .map(|i| {
            let mut acc = Jet::constant(&low, 0.0);
            for m in 0..n {
                let dg = g[i].diff(m).restrict(&low);
                let df = f[i].diff(m).restrict(&low);
                acc = acc + &fl[m] * &dg - &gl[m] * &df;
            }
            acc
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct BracketField {
    pub left: FieldRef,
    pub right: FieldRef,
}

impl IndicatrixField for BracketField {
    fn dim(&self) -> usize {
        self.left.dim()
    }
    fn base_x(&self) -> &[f64] {
        self.left.base_x()
    }
    fn label(&self) -> String {
        format!("[{},{}]", self.left.label(), self.right.label())
    }
    fn jet(&self, y: &[f64], order: usize) -> Result<Vec<Jet>> {
        let f = self.left.jet(y, order + 1)?;
        let g = self.right.jet(y, order + 1)?;
        Ok(bracket_jets(&f, &g))
    }
}

fn same_base(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-12)
}

pub fn lie_bracket(f1: &FieldRef, f2: &FieldRef) -> Result<FieldRef> {
    if !same_base(f1.base_x(), f2.base_x()) || f1.dim() != f2.dim() {
        return Err(Error::Validation(format!(
            "cannot bracket fields over different base points {:?} and {:?}",
            f1.base_x(),
            f2.base_x()
        )));
    }
    Ok(Arc::new(BracketField {
        left: f1.clone(),
        right: f2.clone(),
    }))
}

/// `2c Aⁱᵏ y_k` with `y_k = g_km yᵐ`, the curvature field of a constant
/// curvature metric written through a bivector `A`.
pub fn constant_curvature_field(c: f64, a: &DMatrix<f64>, g: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let asym = (a + a.transpose()).amax();
    if asym > 1e-12 * a.amax().max(1.0) {
        return Err(Error::Validation(format!(
            "bivector coefficients are not antisymmetric (defect {asym:e})"
        )));
    }
    let lowered = g * DVector::from_column_slice(y);
    Ok((a * lowered * (2.0 * c)).iter().copied().collect())
}

/// `½ (e_j ∧ e_k)` as an antisymmetric matrix (zero-based indices).
pub fn half_wedge(n: usize, j: usize, k: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    a[(j, k)] = 0.5;
    a[(k, j)] = -0.5;
    a
}

/// Largest normalized `|g_y(y, ξ)| / (σ_max(g) ‖y‖ ‖ξ‖)` over the samples.
pub fn tangency_defect(
    kernel: &dyn MetricKernel,
    field: &dyn IndicatrixField,
    samples: &IndicatrixSampleSet,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in &samples.points {
        let g = fundamental_tensor(kernel, &TangentSample::new(samples.x.clone(), y.clone()))?.g;
        let v = field.eval(y)?;
        worst = worst.max(defect_at(&g, y, &v));
    }
    Ok(worst)
}

fn defect_at(g: &DMatrix<f64>, y: &[f64], v: &[f64]) -> f64 {
    let yv = DVector::from_column_slice(y);
    let vv = DVector::from_column_slice(v);
    let scale = g.amax() * yv.norm() * vv.norm();
    if scale == 0.0 {
        0.0
    } else {
        (yv.transpose() * g * vv)[(0, 0)].abs() / scale
    }
}

/// Rows whose largest entry is below this fraction of the largest `‖y‖` are
/// treated as the zero field.
pub const ZERO_FIELD_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
struct RankResult {
    rank: usize,
    singular_values: Vec<f64>,
}

/// Alternately scales sample blocks and rows to unit size. Column scaling
/// and row scaling leave the exact rank unchanged, but they keep fields whose
/// magnitude is concentrated on a few samples from swamping the spectrum.
fn equilibrate(m: &mut DMatrix<f64>, block: usize) {
    for _ in 0..EQUILIBRATION_SWEEPS {
        for start in (0..m.ncols()).step_by(block) {
            let mut cols = m.columns_mut(start, block);
            let scale = cols.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
            if scale > 0.0 {
                cols /= scale;
            }
        }
        for mut row in m.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
    }
}

const EQUILIBRATION_SWEEPS: usize = 3;

fn rank_of(rows: &[Vec<f64>], tol_rank: f64, zero_scale: f64, block: usize) -> RankResult {
    let kept: Vec<Vec<f64>> = rows
        .iter()
        .filter_map(|r| {
            let m = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if m <= ZERO_FIELD_TOL * zero_scale {
                return None;
            }
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            Some(r.iter().map(|v| v / norm).collect())
        })
        .collect();
    if kept.is_empty() {
        return RankResult {
            rank: 0,
            singular_values: vec![0.0; rows.len().min(1)],
        };
    }
    let cols = kept[0].len();
    let mut m = DMatrix::from_fn(kept.len(), cols, |i, j| kept[i][j]);
    equilibrate(&mut m, block);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv[0];
    let rank = sv.iter().filter(|&&s| s > tol_rank * top).count();
    RankResult {
        rank,
        singular_values: sv,
    }
}

fn sample_scale(samples: &IndicatrixSampleSet) -> f64 {
    samples
        .points
        .iter()
        .map(|y| y.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn evaluation_row(field: &dyn IndicatrixField, samples: &IndicatrixSampleSet) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(samples.len() * field.dim());
    for y in &samples.points {
        row.extend(field.eval(y)?);
    }
    Ok(row)
}

/// Numerical rank of the fields evaluated on the samples, after normalizing
/// each field's evaluation vector.
pub fn dimension_estimate(fields: &[FieldRef], samples: &IndicatrixSampleSet, tol_rank: f64) -> Result<usize> {
    if fields.is_empty() || samples.is_empty() {
        return Err(Error::Validation("fields and samples must be nonempty".to_string()));
    }
    let rows: Vec<Vec<f64>> = fields
        .iter()
        .map(|f| evaluation_row(&**f, samples))
        .collect::<Result<_>>()?;
    Ok(rank_of(&rows, tol_rank, sample_scale(samples), fields[0].dim()).rank)
}

pub const DEFAULT_TOL_RANK: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub label: String,
    pub depth: usize,
    /// Whether the field increased the numerical rank; only those are
    /// bracketed further.
    pub independent: bool,
    pub max_abs: f64,
    pub tangency_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraReport {
    pub generators: Vec<String>,
    pub depth: usize,
    pub fields_by_depth: Vec<Vec<FieldEntry>>,
    /// One row per field, in the order of `fields_by_depth`, of length `samples · n`.
    pub evaluation_matrix: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub singular_values_by_depth: Vec<Vec<f64>>,
    pub rank_by_depth: Vec<usize>,
    pub rank: usize,
    pub tol_rank: f64,
    pub sample_count: usize,
}

impl AlgebraReport {
    pub fn max_tangency_defect(&self) -> f64 {
        self.fields_by_depth
            .iter()
            .flatten()
            .map(|f| f.tangency_defect)
            .fold(0.0, f64::max)
    }
}

/// Minimum ratio between evaluation columns (`samples · n`) and generators.
pub const SAMPLES_PER_GENERATOR: usize = 10;

struct Tabulated {
    /// Per sample, jets of the components.
    jets: Vec<Vec<Jet>>,
    row: Vec<f64>,
}

fn tabulate_values(jets: Vec<Vec<Jet>>) -> Tabulated {
    let row = jets.iter().flat_map(|c| c.iter().map(Jet::value)).collect();
    Tabulated { jets, row }
}

/// Breadth-first bracket closure with rank pruning.
///
/// Depth 1 is the generator list. Depth `d + 1` holds the brackets of the
/// independent generators with the independent fields of depth `d`. Each new
/// field is kept as independent when it raises the numerical rank.
pub fn generate_algebra(
    kernel: &dyn MetricKernel,
    x: &[f64],
    generators: &[FieldRef],
    max_depth: usize,
    samples: &IndicatrixSampleSet,
    tol_rank: f64,
) -> Result<AlgebraReport> {
    if max_depth == 0 {
        return Err(Error::config("algebra depth must be at least 1"));
    }
    if generators.is_empty() {
        return Err(Error::config("at least one generator is required"));
    }
    let n = kernel.dim();
    if samples.len() * n < SAMPLES_PER_GENERATOR * generators.len() {
        return Err(Error::config(format!(
            "{} samples in dimension {n} are too few for {} generators",
            samples.len(),
            generators.len()
        )));
    }
    for f in generators {
        if !same_base(f.base_x(), x) || f.dim() != n {
            return Err(Error::Validation(format!(
                "generator {} does not live over the base point",
                f.label()
            )));
        }
    }
    let metrics: Vec<DMatrix<f64>> = samples
        .points
        .iter()
        .map(|y| fundamental_tensor(kernel, &TangentSample::new(x.to_vec(), y.clone())).map(|t| t.g))
        .collect::<Result<_>>()?;
    let zero_scale = sample_scale(samples);

    let entry = |label: String, depth: usize, tab: &Tabulated| -> FieldEntry {
        let mut defect: f64 = 0.0;
        for (s, y) in samples.points.iter().enumerate() {
            let v = &tab.row[s * n..(s + 1) * n];
            defect = defect.max(defect_at(&metrics[s], y, v));
        }
        FieldEntry {
            label,
            depth,
            independent: false,
            max_abs: tab.row.iter().fold(0.0, |m, v| m.max(v.abs())),
            tangency_defect: defect,
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut fields_by_depth: Vec<Vec<FieldEntry>> = Vec::new();
    let mut singular_values_by_depth = Vec::new();
    let mut rank_by_depth = Vec::new();

    let consider = |tab: &Tabulated, e: &mut FieldEntry, basis: &mut Vec<Vec<f64>>, rows: &mut Vec<Vec<f64>>| {
        let before = basis.len();
        basis.push(tab.row.clone());
        let r = rank_of(basis, tol_rank, zero_scale, n).rank;
        if r > before {
            e.independent = true;
        } else {
            basis.pop();
        }
        rows.push(tab.row.clone());
    };

    // Depth 1.
    let top = max_depth - 1;
    let mut gens: Vec<(FieldRef, Tabulated)> = Vec::new();
    let mut level = Vec::new();
    for f in generators {
        let jets = samples
            .points
            .iter()
            .map(|y| f.jet(y, top))
            .collect::<Result<Vec<_>>>()?;
        let tab = tabulate_values(jets);
        let mut e = entry(f.label(), 1, &tab);
        consider(&tab, &mut e, &mut basis, &mut rows);
        if e.independent {
            gens.push((f.clone(), tab));
        }
        level.push(e);
    }
    fields_by_depth.push(level);
    let r = rank_of(&rows, tol_rank, zero_scale, n);
    rank_by_depth.push(r.rank);
    singular_values_by_depth.push(r.singular_values);

    // Fields of the previous depth that are bracketed further.
    let mut frontier: Vec<(FieldRef, Tabulated, usize)> = gens
        .iter()
        .enumerate()
        .map(|(i, (f, t))| {
            (
                f.clone(),
                Tabulated {
                    jets: t.jets.clone(),
                    row: t.row.clone(),
                },
                i,
            )
        })
        .collect();

    for depth in 2..=max_depth {
        let order = max_depth - depth;
        let mut next = Vec::new();
        let mut level = Vec::new();
        for (gi, (g, gtab)) in gens.iter().enumerate() {
            for (f, ftab, origin) in &frontier {
                // At depth 2 both factors are generators: skip [g, g] and the
                // negatives of brackets already formed.
                if depth == 2 && *origin <= gi {
                    continue;
                }
                let jets: Vec<Vec<Jet>> = gtab
                    .jets
                    .iter()
                    .zip(&ftab.jets)
                    .map(|(a, b)| {
                        let p = b[0].space().truncation().kt;
                        let space = JetSpace::get(Truncation::fiber(n, p));
                        let a: Vec<Jet> = a.iter().map(|j| j.restrict(&space)).collect();
                        let mut out = bracket_jets(&a, b);
                        if out[0].space().truncation().kt != order {
                            let target = JetSpace::get(Truncation::fiber(n, order));
                            out = out.iter().map(|j| j.restrict(&target)).collect();
                        }
                        out
                    })
                    .collect();
                let tab = tabulate_values(jets);
                let field: FieldRef = Arc::new(BracketField {
                    left: g.clone(),
                    right: f.clone(),
                });
                let mut e = entry(field.label(), depth, &tab);
                consider(&tab, &mut e, &mut basis, &mut rows);
                if e.independent && depth < max_depth {
                    next.push((field, tab, usize::MAX));
                }
                level.push(e);
            }
        }
        fields_by_depth.push(level);
        let r = rank_of(&rows, tol_rank, zero_scale, n);
        rank_by_depth.push(r.rank);
        singular_values_by_depth.push(r.singular_values);
        frontier = next;
    }

    let rank = *rank_by_depth.last().unwrap();
    Ok(AlgebraReport {
        generators: generators.iter().map(|f| f.label()).collect(),
        depth: max_depth,
        fields_by_depth,
        evaluation_matrix: rows,
        singular_values: singular_values_by_depth.last().cloned().unwrap_or_default(),
        singular_values_by_depth,
        rank_by_depth,
        rank,
        tol_rank,
        sample_count: samples.len(),
    })
}
