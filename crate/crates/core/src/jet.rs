//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] holds the Taylor coefficients `f_α / α!` of a smooth function of
//! `nx + ny` variables around a point. The first `nx` variables are the base
//! (x) coordinates and the remaining `ny` are fiber (y) coordinates. Monomials
//! are kept when their x-degree is at most `kx`, their y-degree at most `ky`
//! and their total degree at most `kt`. The discarded monomials form an ideal,
//! so sums, products and analytic functions of jets are exact on the kept
//! coefficients.
//!
//! Differentiation shifts coefficients down by one degree. The highest kept
//! degree of the result is then unknown and is filled with zeros; callers keep
//! track of which orders are still valid.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

/// Degree caps of a jet space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Truncation {
    pub nx: usize,
    pub ny: usize,
    pub kx: usize,
    pub ky: usize,
    pub kt: usize,
}

impl Truncation {
    pub fn new(nx: usize, ny: usize, kx: usize, ky: usize, kt: usize) -> Self {
        Self { nx, ny, kx, ky, kt }
    }

    /// Jets in the fiber variables only, to total order `order`.
    pub fn fiber(ny: usize, order: usize) -> Self {
        Self::new(0, ny, 0, order, order)
    }

    fn admits(&self, exps: &[u8]) -> bool {
        let dx: usize = exps[..self.nx].iter().map(|&e| e as usize).sum();
        let dy: usize = exps[self.nx..].iter().map(|&e| e as usize).sum();
        dx <= self.kx && dy <= self.ky && dx + dy <= self.kt
    }
}

/// Monomial basis and precomputed multiplication/differentiation tables.
pub struct JetSpace {
    trunc: Truncation,
    exps: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// Product table in row-compressed form: for the left monomial `i`,
    /// `products[row_start[i]..row_start[i + 1]]` lists `(j, i·j)`.
    row_start: Vec<u32>,
    products: Vec<(u32, u32)>,
    derivs: Vec<Vec<(u32, u32, f64)>>,
    factorials: Vec<f64>,
    max_degree: usize,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("trunc", &self.trunc)
            .field("len", &self.exps.len())
            .finish()
    }
}

fn enumerate(nvars: usize, max_total: usize) -> Vec<Vec<u8>> {
    fn rec(prefix: &mut Vec<u8>, left: usize, nvars: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == nvars {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e as u8);
            rec(prefix, left - e, nvars, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(nvars), max_total, nvars, &mut out);
    out
}

impl JetSpace {
    /// Shared space for the given truncation; spaces are built once per process.
    pub fn get(trunc: Truncation) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<Truncation, Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry(trunc)
            .or_insert_with(|| Arc::new(JetSpace::build(trunc)))
            .clone()
    }

    fn build(trunc: Truncation) -> JetSpace {
        let nvars = trunc.nx + trunc.ny;
        let mut exps: Vec<Vec<u8>> = enumerate(nvars, trunc.kt)
            .into_iter()
            .filter(|e| trunc.admits(e))
            .collect();
        exps.sort_by(|a, b| {
            let da: usize = a.iter().map(|&e| e as usize).sum();
            let db: usize = b.iter().map(|&e| e as usize).sum();
            da.cmp(&db).then_with(|| b.cmp(a))
        });
        let lookup: HashMap<Vec<u8>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let degrees: Vec<usize> = exps
            .iter()
            .map(|e| e.iter().map(|&v| v as usize).sum())
            .collect();
        let max_degree = degrees.iter().copied().max().unwrap_or(0);

        let mut products = Vec::new();
        let mut row_start = Vec::with_capacity(exps.len() + 1);
        let mut scratch = vec![0u8; nvars];
        for (i, a) in exps.iter().enumerate() {
            row_start.push(products.len() as u32);
            for (j, b) in exps.iter().enumerate() {
                if degrees[i] + degrees[j] > trunc.kt {
                    continue;
                }
                for v in 0..nvars {
                    scratch[v] = a[v] + b[v];
                }
                if let Some(&k) = lookup.get(&scratch) {
                    products.push((j as u32, k as u32));
                }
            }
        }

        row_start.push(products.len() as u32);

        let mut derivs = vec![Vec::new(); nvars];
        for (src, e) in exps.iter().enumerate() {
            for v in 0..nvars {
                if e[v] == 0 {
                    continue;
                }
                let mut lower = e.clone();
                lower[v] -= 1;
                if let Some(&dst) = lookup.get(&lower) {
                    derivs[v].push((src as u32, dst as u32, e[v] as f64));
                }
            }
        }

        let factorials = exps
            .iter()
            .map(|e| {
                e.iter()
                    .map(|&k| (1..=k as u32).map(f64::from).product::<f64>())
                    .product()
            })
            .collect();

        JetSpace {
            trunc,
            exps,
            lookup,
            row_start,
            products,
            derivs,
            factorials,
            max_degree,
        }
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn nvars(&self) -> usize {
        self.trunc.nx + self.trunc.ny
    }

    pub fn exponents(&self, index: usize) -> &[u8] {
        &self.exps[index]
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.lookup.get(exps).copied()
    }

    /// Highest total degree present; powers of a jet without constant term
    /// vanish beyond it.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }
}

#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coef: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("trunc", &self.space.trunc)
            .field("value", &self.coef[0])
            .finish()
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, value: f64) -> Jet {
        let mut coef = vec![0.0; space.len()];
        coef[0] = value;
        Jet {
            space: space.clone(),
            coef,
        }
    }

    /// The coordinate function `var` expanded around `value`.
    pub fn variable(space: &Arc<JetSpace>, var: usize, value: f64) -> Jet {
        let mut jet = Jet::constant(space, value);
        let mut e = vec![0u8; space.nvars()];
        e[var] = 1;
        if let Some(i) = space.index_of(&e) {
            jet.coef[i] = 1.0;
        }
        jet
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// Taylor coefficient of the monomial `exps` (zero when truncated away).
    pub fn coefficient(&self, exps: &[u8]) -> f64 {
        self.space.index_of(exps).map_or(0.0, |i| self.coef[i])
    }

    /// Partial derivative `∂^α f` at the expansion point.
    pub fn partial(&self, exps: &[u8]) -> f64 {
        self.space
            .index_of(exps)
            .map_or(0.0, |i| self.coef[i] * self.space.factorials[i])
    }

    /// `∂^α f` for the monomial at `index` of the space.
    pub fn partial_at(&self, index: usize) -> f64 {
        self.coef[index] * self.space.factorials[index]
    }

    pub fn diff(&self, var: usize) -> Jet {
        let mut coef = vec![0.0; self.coef.len()];
        for &(src, dst, factor) in &self.space.derivs[var] {
            coef[dst as usize] += factor * self.coef[src as usize];
        }
        Jet {
            space: self.space.clone(),
            coef,
        }
    }

    /// Copies the coefficients that `target` shares with this jet. Variables
    /// of `target` map onto the leading x and y variables of this space.
    pub fn restrict(&self, target: &Arc<JetSpace>) -> Jet {
        let src = self.space.trunc;
        let dst = target.trunc;
        assert!(dst.nx <= src.nx && dst.ny <= src.ny);
        let mut full = vec![0u8; src.nx + src.ny];
        let mut coef = vec![0.0; target.len()];
        for (i, e) in target.exps.iter().enumerate() {
            full.iter_mut().for_each(|v| *v = 0);
            full[..dst.nx].copy_from_slice(&e[..dst.nx]);
            full[src.nx..src.nx + dst.ny].copy_from_slice(&e[dst.nx..]);
            coef[i] = self.coefficient(&full);
        }
        Jet {
            space: target.clone(),
            coef,
        }
    }

    fn same_space(&self, other: &Jet) {
        debug_assert!(
            Arc::ptr_eq(&self.space, &other.space),
            "jets from different spaces"
        );
    }

    fn zip(&self, other: &Jet, op: impl Fn(f64, f64) -> f64) -> Jet {
        self.same_space(other);
        Jet {
            space: self.space.clone(),
            coef: self
                .coef
                .iter()
                .zip(&other.coef)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        }
    }

    fn map(&self, op: impl Fn(f64) -> f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coef: self.coef.iter().map(|&a| op(a)).collect(),
        }
    }

    fn product(&self, other: &Jet) -> Jet {
        self.same_space(other);
        let mut coef = vec![0.0; self.coef.len()];
        let space = &*self.space;
        for (i, &a) in self.coef.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &space.products[space.row_start[i] as usize..space.row_start[i + 1] as usize];
            for &(j, k) in row {
                coef[k as usize] += a * other.coef[j as usize];
            }
        }
        Jet {
            space: self.space.clone(),
            coef,
        }
    }

    /// `Σ_k series[k] · h^k` where `h` is this jet minus its value.
    pub fn compose(&self, series: &[f64]) -> Jet {
        let mut h = self.clone();
        h.coef[0] = 0.0;
        let top = series.len().min(self.space.max_degree + 1);
        let mut acc = Jet::constant(&self.space, series[top - 1]);
        for k in (0..top - 1).rev() {
            acc = acc.product(&h);
            acc.coef[0] += series[k];
        }
        acc
    }

    pub fn recip(&self) -> Jet {
        let a0 = self.coef[0];
        let d = self.space.max_degree;
        let mut series = Vec::with_capacity(d + 1);
        let mut term = 1.0 / a0;
        for _ in 0..=d {
            series.push(term);
            term *= -1.0 / a0;
        }
        self.compose(&series)
    }

    /// Real power; the value must be positive unless `p` is a non-negative integer.
    pub fn powf(&self, p: f64) -> Jet {
        if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
            return self.powi(p as i32);
        }
        let a0 = self.coef[0];
        let d = self.space.max_degree;
        let mut series = Vec::with_capacity(d + 1);
        let mut binom = 1.0;
        for k in 0..=d {
            series.push(binom * a0.powf(p - k as f64));
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&series)
    }

    pub fn powi(&self, n: i32) -> Jet {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut result = Jet::constant(&self.space, 1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.product(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.product(&base);
            }
        }
        result
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }
}

macro_rules! jet_binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
    };
}

jet_binop!(Add, add, |a, b| a.zip(b, |u, v| u + v));
jet_binop!(Sub, sub, |a, b| a.zip(b, |u, v| u - v));
jet_binop!(Mul, mul, |a, b| a.product(b));
jet_binop!(Div, div, |a, b| a.product(&b.recip()));

macro_rules! jet_scalar_op {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<f64> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: f64) -> Jet {
                let f: fn(&Jet, f64) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $trait<f64> for Jet {
            type Output = Jet;
            fn $method(self, rhs: f64) -> Jet {
                (&self).$method(rhs)
            }
        }
    };
}

jet_scalar_op!(Add, add, |a, c| {
    let mut out = a.clone();
    out.coef[0] += c;
    out
});
jet_scalar_op!(Sub, sub, |a, c| {
    let mut out = a.clone();
    out.coef[0] -= c;
    out
});
jet_scalar_op!(Mul, mul, |a, c| a.map(|u| u * c));
jet_scalar_op!(Div, div, |a, c| a.map(|u| u / c));

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.map(|u| -u)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.map(|u| -u)
    }
}

/// Arithmetic needed to evaluate metric formulas on plain numbers and on jets.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A constant living in the same space as `self`.
    fn lift(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn powf(&self, p: f64) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn sqrt(&self) -> Self;
    fn recip(&self) -> Self;
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> f64 {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn powf(&self, p: f64) -> f64 {
        f64::powf(*self, p)
    }
    fn powi(&self, n: i32) -> f64 {
        f64::powi(*self, n)
    }
    fn sqrt(&self) -> f64 {
        f64::sqrt(*self)
    }
    fn recip(&self) -> f64 {
        1.0 / *self
    }
}

impl Scalar for Jet {
    fn lift(&self, c: f64) -> Jet {
        Jet::constant(&self.space, c)
    }
    fn value(&self) -> f64 {
        self.coef[0]
    }
    fn powf(&self, p: f64) -> Jet {
        Jet::powf(self, p)
    }
    fn powi(&self, n: i32) -> Jet {
        Jet::powi(self, n)
    }
    fn sqrt(&self) -> Jet {
        Jet::sqrt(self)
    }
    fn recip(&self) -> Jet {
        Jet::recip(self)
    }
}

/// Jets of the coordinate functions at `(x, y)` in the given space.
pub fn seed_point(space: &Arc<JetSpace>, x: &[f64], y: &[f64]) -> (Vec<Jet>, Vec<Jet>) {
    let t = space.truncation();
    assert_eq!(x.len(), t.nx);
    assert_eq!(y.len(), t.ny);
    let xs = x
        .iter()
        .enumerate()
        .map(|(i, &v)| Jet::variable(space, i, v))
        .collect();
    let ys = y
        .iter()
        .enumerate()
        .map(|(i, &v)| Jet::variable(space, t.nx + i, v))
        .collect();
    (xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn univariate(order: usize) -> Arc<JetSpace> {
        JetSpace::get(Truncation::fiber(1, order))
    }

    #[test]
    fn geometric_series_from_recip() {
        let s = univariate(5);
        let x = Jet::variable(&s, 0, 0.0);
        let r = (x * -1.0 + 1.0).recip();
        for k in 0..=5u8 {
            assert_relative_eq!(r.coefficient(&[k]), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn fractional_power_matches_derivatives() {
        // d^k/dt^k t^(2/3) at t = 2
        let s = univariate(4);
        let t = Jet::variable(&s, 0, 2.0);
        let p = t.powf(2.0 / 3.0);
        let a: f64 = 2.0;
        let expected = [
            a.powf(2.0 / 3.0),
            (2.0 / 3.0) * a.powf(-1.0 / 3.0),
            (2.0 / 3.0) * (-1.0 / 3.0) * a.powf(-4.0 / 3.0),
            (2.0 / 3.0) * (-1.0 / 3.0) * (-4.0 / 3.0) * a.powf(-7.0 / 3.0),
            (2.0 / 3.0) * (-1.0 / 3.0) * (-4.0 / 3.0) * (-7.0 / 3.0) * a.powf(-10.0 / 3.0),
        ];
        for k in 0..=4u8 {
            assert_relative_eq!(p.partial(&[k]), expected[k as usize], max_relative = 1e-13);
        }
    }

    #[test]
    fn integer_power_handles_negative_base() {
        let s = univariate(3);
        let t = Jet::variable(&s, 0, -2.0);
        let c = t.powi(3);
        assert_relative_eq!(c.partial(&[0]), -8.0);
        assert_relative_eq!(c.partial(&[1]), 12.0);
        assert_relative_eq!(c.partial(&[2]), -12.0);
        assert_relative_eq!(c.partial(&[3]), 6.0);
        let inv = t.powi(-1);
        assert_relative_eq!(inv.partial(&[1]), -0.25);
    }

    #[test]
    fn bidegree_caps_drop_monomials() {
        let s = JetSpace::get(Truncation::new(1, 1, 1, 2, 2));
        // kept: 1, x, y, xy, y^2
        assert_eq!(s.len(), 5);
        assert!(s.index_of(&[2, 0]).is_none());
        assert!(s.index_of(&[1, 2]).is_none());
        let (xs, ys) = seed_point(&s, &[1.5], &[2.0]);
        let f = &xs[0] * &(&ys[0] * &ys[0]);
        assert_relative_eq!(f.partial(&[1, 1]), 4.0);
        assert_relative_eq!(f.partial(&[0, 2]), 3.0);
    }

    #[test]
    fn mixed_partial_of_product() {
        let s = JetSpace::get(Truncation::new(0, 2, 0, 4, 4));
        let (_, y) = seed_point(&s, &[], &[0.5, -1.5]);
        // f = y0^3 y1^2; ∂^3/∂y0^2∂y1 f = 6 y0 · 2 y1
        let f = y[0].powi(3) * y[1].powi(2);
        assert_relative_eq!(f.partial(&[2, 1]), 12.0 * 0.5 * -1.5, epsilon = 1e-12);
        let d = f.diff(0);
        assert_relative_eq!(d.partial(&[1, 1]), 12.0 * 0.5 * -1.5, epsilon = 1e-12);
    }

    #[test]
    fn restrict_extracts_fiber_part() {
        let s = JetSpace::get(Truncation::new(1, 2, 1, 2, 3));
        let (x, y) = seed_point(&s, &[0.3], &[1.0, 2.0]);
        let f = &x[0] * &y[0] + &y[1] * &y[1];
        let fiber = JetSpace::get(Truncation::fiber(2, 2));
        let r = f.restrict(&fiber);
        assert_relative_eq!(r.value(), 0.3 + 4.0);
        assert_relative_eq!(r.partial(&[1, 0]), 0.3);
        assert_relative_eq!(r.partial(&[0, 1]), 4.0);
        assert_relative_eq!(r.partial(&[0, 2]), 2.0);
    }
}
