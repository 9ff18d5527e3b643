//! Parallel transport along piecewise smooth curves, loop holonomy samples and
//! the commutator-loop estimate of curvature fields.

use serde::{Deserialize, Serialize};

use crate::connection::connection_matrix;
use crate::error::{Error, Result};
use crate::geometry::{IndicatrixSampleSet, MetricKernel};

/// One smooth piece of a curve, parametrized over `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Piece {
    Line {
        from: Vec<f64>,
        to: Vec<f64>,
    },
    /// Circular arc `center + r (cos θ e_i + sin θ e_j)` for θ from `start` to `end`.
    Arc {
        center: Vec<f64>,
        plane: (usize, usize),
        radius: f64,
        start: f64,
        end: f64,
    },
}

impl Piece {
    pub fn point(&self, s: f64) -> Vec<f64> {
        match self {
            Piece::Line { from, to } => from.iter().zip(to).map(|(a, b)| a + s * (b - a)).collect(),
            Piece::Arc {
                center,
                plane,
                radius,
                start,
                end,
            } => {
                let theta = start + s * (end - start);
                let mut p = center.clone();
                p[plane.0] += radius * theta.cos();
                p[plane.1] += radius * theta.sin();
                p
            }
        }
    }

    pub fn velocity(&self, s: f64) -> Vec<f64> {
        match self {
            Piece::Line { from, to } => from.iter().zip(to).map(|(a, b)| b - a).collect(),
            Piece::Arc {
                center,
                plane,
                radius,
                start,
                end,
            } => {
                let theta = start + s * (end - start);
                let w = radius * (end - start);
                let mut v = vec![0.0; center.len()];
                v[plane.0] = -w * theta.sin();
                v[plane.1] = w * theta.cos();
                v
            }
        }
    }

    pub fn reversed(&self) -> Piece {
        match self {
            Piece::Line { from, to } => Piece::Line {
                from: to.clone(),
                to: from.clone(),
            },
            Piece::Arc {
                center,
                plane,
                radius,
                start,
                end,
            } => Piece::Arc {
                center: center.clone(),
                plane: *plane,
                radius: *radius,
                start: *end,
                end: *start,
            },
        }
    }
}

/// A continuous, piecewise C¹ curve. An empty piece list is the constant curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub start: Vec<f64>,
    pub pieces: Vec<Piece>,
}

const JOIN_TOL: f64 = 1e-12;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

impl Curve {
    pub fn constant(x: &[f64]) -> Self {
        Self {
            start: x.to_vec(),
            pieces: Vec::new(),
        }
    }

    pub fn from_pieces(pieces: Vec<Piece>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::config("curve needs at least one piece"))?;
        let curve = Self {
            start: first.point(0.0),
            pieces,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn polyline(vertices: &[Vec<f64>]) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::config("a polyline needs at least two vertices"));
        }
        let n = vertices[0].len();
        if vertices.iter().any(|v| v.len() != n) {
            return Err(Error::config("polyline vertices differ in dimension"));
        }
        Self::from_pieces(
            vertices
                .windows(2)
                .map(|w| Piece::Line {
                    from: w[0].clone(),
                    to: w[1].clone(),
                })
                .collect(),
        )
    }

    /// The loop `x → x + tX → x + tX + tY → x + tY → x`.
    pub fn parallelogram(x: &[f64], a: &[f64], b: &[f64], t: f64) -> Result<Self> {
        let shift = |p: &[f64], v: &[f64]| -> Vec<f64> { p.iter().zip(v).map(|(p, v)| p + t * v).collect() };
        let p1 = shift(x, a);
        let p2 = shift(&p1, b);
        let p3 = shift(x, b);
        Self::polyline(&[x.to_vec(), p1, p2, p3, x.to_vec()])
    }

    /// Square of side `side` in the coordinate plane `(i, j)` anchored at `x`.
    pub fn square(x: &[f64], plane: (usize, usize), side: f64) -> Result<Self> {
        let n = x.len();
        if plane.0 >= n || plane.1 >= n || plane.0 == plane.1 {
            return Err(Error::config(format!("invalid plane {plane:?} for dimension {n}")));
        }
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        a[plane.0] = 1.0;
        b[plane.1] = 1.0;
        Self::parallelogram(x, &a, &b, side)
    }

    /// The geodesic triangle with three right angles on the stereographic unit
    /// sphere: out along `e_i`, a quarter of the equator to `e_j`, back along `e_j`.
    pub fn sphere_octant(n: usize, plane: (usize, usize)) -> Result<Self> {
        if plane.0 >= n || plane.1 >= n || plane.0 == plane.1 {
            return Err(Error::config(format!("invalid plane {plane:?} for dimension {n}")));
        }
        let origin = vec![0.0; n];
        let mut ei = origin.clone();
        ei[plane.0] = 1.0;
        let mut ej = origin.clone();
        ej[plane.1] = 1.0;
        Self::from_pieces(vec![
            Piece::Line {
                from: origin.clone(),
                to: ei,
            },
            Piece::Arc {
                center: origin.clone(),
                plane,
                radius: 1.0,
                start: 0.0,
                end: std::f64::consts::FRAC_PI_2,
            },
            Piece::Line { from: ej, to: origin },
        ])
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn end(&self) -> Vec<f64> {
        self.pieces
            .last()
            .map_or_else(|| self.start.clone(), |p| p.point(1.0))
    }

    pub fn is_closed(&self) -> bool {
        distance(&self.start, &self.end()) <= JOIN_TOL
    }

    pub fn validate(&self) -> Result<()> {
        let mut at = self.start.clone();
        for (k, p) in self.pieces.iter().enumerate() {
            let from = p.point(0.0);
            if from.len() != self.dim() {
                return Err(Error::config(format!("curve piece {k} has the wrong dimension")));
            }
            if distance(&at, &from) > JOIN_TOL {
                return Err(Error::config(format!("curve is discontinuous at piece {k}")));
            }
            at = p.point(1.0);
        }
        Ok(())
    }

    pub fn reversed(&self) -> Curve {
        Curve {
            start: self.end(),
            pieces: self.pieces.iter().rev().map(Piece::reversed).collect(),
        }
    }

    /// `self` followed by `other`.
    pub fn then(&self, other: &Curve) -> Result<Curve> {
        if distance(&self.end(), &other.start) > JOIN_TOL {
            return Err(Error::config("curves do not join"));
        }
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Ok(Curve {
            start: self.start.clone(),
            pieces,
        })
    }

    /// Point at the global parameter `t ∈ [0, 1]`.
    pub fn point(&self, t: f64) -> Vec<f64> {
        if self.pieces.is_empty() {
            return self.start.clone();
        }
        let m = self.pieces.len() as f64;
        let k = ((t * m).floor() as usize).min(self.pieces.len() - 1);
        self.pieces[k].point(t * m - k as f64)
    }
}

pub const MIN_STEPS: usize = 4;

fn rk4_piece(
    kernel: &dyn MetricKernel,
    piece: &Piece,
    y: &mut Vec<f64>,
    steps: usize,
    t_offset: f64,
    t_span: f64,
) -> Result<()> {
    let n = y.len();
    let rhs = |s: f64, v: &[f64]| -> Result<Vec<f64>> {
        let c = piece.point(s);
        if !kernel.in_cone(&c, v, 0.0) {
            return Err(Error::TransportDomain {
                t: t_offset + s * t_span,
            });
        }
        let gamma = connection_matrix(kernel, &c, v)?;
        let dc = piece.velocity(s);
        Ok((0..n)
            .map(|i| -(0..n).map(|j| gamma[(i, j)] * dc[j]).sum::<f64>())
            .collect())
    };
    let h = 1.0 / steps as f64;
    let axpy = |base: &[f64], k: &[f64], a: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, k)| b + a * k).collect()
    };
    for step in 0..steps {
        let s = step as f64 * h;
        let k1 = rhs(s, y)?;
        let k2 = rhs(s + 0.5 * h, &axpy(y, &k1, 0.5 * h))?;
        let k3 = rhs(s + 0.5 * h, &axpy(y, &k2, 0.5 * h))?;
        let k4 = rhs(s + h, &axpy(y, &k3, h))?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let end = piece.point(1.0);
    if !kernel.in_cone(&end, y, 0.0) {
        return Err(Error::TransportDomain {
            t: t_offset + t_span,
        });
    }
    Ok(())
}

/// Solves `dXⁱ/dt = −Γⁱ_j(c(t), X) ċʲ` with classical RK4, `steps` steps in
/// total shared evenly between the pieces.
pub fn transport(kernel: &dyn MetricKernel, curve: &Curve, y0: &[f64], steps: usize) -> Result<Vec<f64>> {
    if steps < MIN_STEPS {
        return Err(Error::config(format!(
            "transport needs at least {MIN_STEPS} steps, got {steps}"
        )));
    }
    let n = kernel.dim();
    if curve.dim() != n || y0.len() != n {
        return Err(Error::config("curve or vector dimension does not match the kernel"));
    }
    if !kernel.in_cone(&curve.start, y0, 0.0) {
        return Err(Error::TransportDomain { t: 0.0 });
    }
    let m = curve.pieces.len();
    let mut y = y0.to_vec();
    for (k, piece) in curve.pieces.iter().enumerate() {
        let share = (steps * (k + 1) / m - steps * k / m).max(1);
        rk4_piece(kernel, piece, &mut y, share, k as f64 / m as f64, 1.0 / m as f64)?;
    }
    Ok(y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportOutcome {
    pub y: Vec<f64>,
    pub steps: usize,
    /// `|F(c(1), X(1)) − F(c(0), y0)|`.
    pub f_drift: f64,
    /// `‖X_{2N} − X_N‖ / 15`, the Richardson estimate of the error of the
    /// `2N`-step result.
    pub richardson_error: f64,
}

/// Transport with steps `N` and `2N`; the finer result is returned.
pub fn transport_with_estimate(
    kernel: &dyn MetricKernel,
    curve: &Curve,
    y0: &[f64],
    steps: usize,
) -> Result<TransportOutcome> {
    let coarse = transport(kernel, curve, y0, steps)?;
    let fine = transport(kernel, curve, y0, 2 * steps)?;
    let f0 = kernel.value(&curve.start, y0);
    let f1 = kernel.value(&curve.end(), &fine);
    Ok(TransportOutcome {
        richardson_error: distance(&coarse, &fine) / 15.0,
        f_drift: (f1 - f0).abs(),
        steps: 2 * steps,
        y: fine,
    })
}

/// Loop parallel transport tabulated on indicatrix samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyElement {
    pub base_x: Vec<f64>,
    pub domain: IndicatrixSampleSet,
    pub images: Vec<Vec<f64>>,
    #[serde(rename = "loop")]
    pub loop_curve: Curve,
    pub step_count: usize,
    /// `|F(x, image) − 1|` before re-projection, per sample.
    pub corrections: Vec<f64>,
}

impl HolonomyElement {
    pub fn identity(domain: &IndicatrixSampleSet) -> Self {
        Self {
            base_x: domain.x.clone(),
            domain: domain.clone(),
            images: domain.points.clone(),
            loop_curve: Curve::constant(&domain.x),
            step_count: 0,
            corrections: vec![0.0; domain.len()],
        }
    }

    pub fn max_correction(&self) -> f64 {
        self.corrections.iter().copied().fold(0.0, f64::max)
    }

    /// Largest `‖image − domain point‖`.
    pub fn distance_from_identity(&self) -> f64 {
        self.images
            .iter()
            .zip(&self.domain.points)
            .map(|(a, b)| distance(a, b))
            .fold(0.0, f64::max)
    }

    /// Smallest distance between images of distinct samples.
    pub fn min_image_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (a, p) in self.images.iter().enumerate() {
            for q in &self.images[a + 1..] {
                best = best.min(distance(p, q));
            }
        }
        best
    }

    /// Checks the indicatrix and injectivity invariants.
    pub fn validate(&self, kernel: &dyn MetricKernel, tol_f: f64) -> Result<()> {
        for (i, y) in self.images.iter().enumerate() {
            let defect = (kernel.value(&self.base_x, y) - 1.0).abs();
            if defect > tol_f {
                return Err(Error::Consistency {
                    check: format!("image {i} on the indicatrix"),
                    error: defect,
                });
            }
        }
        if self.images.len() > 1 && !(self.min_image_separation() > 0.0) {
            return Err(Error::Consistency {
                check: "holonomy injectivity".to_string(),
                error: 0.0,
            });
        }
        Ok(())
    }
}

fn reproject(kernel: &dyn MetricKernel, x: &[f64], y: Vec<f64>) -> (Vec<f64>, f64) {
    let f = kernel.value(x, &y);
    let correction = (f - 1.0).abs();
    let scale = f.sqrt();
    (y.into_iter().map(|v| v / scale).collect(), correction)
}

pub fn loop_transport(
    kernel: &dyn MetricKernel,
    loop_curve: &Curve,
    samples: &IndicatrixSampleSet,
    steps: usize,
) -> Result<HolonomyElement> {
    if !loop_curve.is_closed() {
        return Err(Error::config("holonomy needs a closed loop"));
    }
    if distance(&loop_curve.start, &samples.x) > JOIN_TOL {
        return Err(Error::config("loop does not start at the sample base point"));
    }
    let mut images = Vec::with_capacity(samples.len());
    let mut corrections = Vec::with_capacity(samples.len());
    for (index, y) in samples.points.iter().enumerate() {
        let out = transport(kernel, loop_curve, y, steps).map_err(|e| Error::Sample {
            index,
            source: Box::new(e),
        })?;
        let (img, c) = reproject(kernel, &samples.x, out);
        images.push(img);
        corrections.push(c);
    }
    Ok(HolonomyElement {
        base_x: samples.x.clone(),
        domain: samples.clone(),
        images,
        loop_curve: loop_curve.clone(),
        step_count: steps,
        corrections,
    })
}

/// Tolerance for reusing a tabulated value of `h2` at an image of `h1`.
const MATCH_TOL: f64 = 1e-12;

/// `y ↦ h2(h1(y))` on the domain of `h1`. Images of `h1` that are not in the
/// domain of `h2` are mapped by a fresh transport along the loop of `h2`.
pub fn compose(kernel: &dyn MetricKernel, h1: &HolonomyElement, h2: &HolonomyElement) -> Result<HolonomyElement> {
    if distance(&h1.base_x, &h2.base_x) > JOIN_TOL || h1.base_x.len() != h2.base_x.len() {
        return Err(Error::Composition(format!(
            "base points differ: {:?} vs {:?}",
            h1.base_x, h2.base_x
        )));
    }
    let steps = h2.step_count.max(MIN_STEPS);
    let mut images = Vec::with_capacity(h1.images.len());
    let mut corrections = Vec::with_capacity(h1.images.len());
    for (index, y) in h1.images.iter().enumerate() {
        let known = h2
            .domain
            .points
            .iter()
            .position(|p| distance(p, y) <= MATCH_TOL);
        let (img, c) = match known {
            Some(k) => (h2.images[k].clone(), h2.corrections[k]),
            None if h2.loop_curve.pieces.is_empty() => (y.clone(), 0.0),
            None => {
                let out = transport(kernel, &h2.loop_curve, y, steps).map_err(|e| Error::Sample {
                    index,
                    source: Box::new(e),
                })?;
                reproject(kernel, &h1.base_x, out)
            }
        };
        images.push(img);
        corrections.push(h1.corrections[index].max(c));
    }
    Ok(HolonomyElement {
        base_x: h1.base_x.clone(),
        domain: h1.domain.clone(),
        images,
        loop_curve: h1.loop_curve.then(&h2.loop_curve)?,
        step_count: h1.step_count.max(h2.step_count),
        corrections,
    })
}

/// A vector field known only at finitely many fiber points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedField {
    pub base_x: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub label: String,
}

/// `(θ(y) − y) / t²` for the holonomy `θ` of the parallelogram loop
/// `x → x + tX → x + tX + tY → x + tY → x`; tends to `r_x(X, Y)` as `t → 0`.
pub fn commutator_loop_derivative(
    kernel: &dyn MetricKernel,
    x: &[f64],
    a: &[f64],
    b: &[f64],
    t: f64,
    samples: &IndicatrixSampleSet,
    steps: usize,
) -> Result<TabulatedField> {
    let curve = Curve::parallelogram(x, a, b, t)?;
    let h = loop_transport(kernel, &curve, samples, steps)?;
    let values = h
        .images
        .iter()
        .zip(&samples.points)
        .map(|(img, y)| img.iter().zip(y).map(|(p, q)| (p - q) / (t * t)).collect())
        .collect();
    Ok(TabulatedField {
        base_x: x.to_vec(),
        points: samples.points.clone(),
        values,
        label: format!("commutator(t={t})"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_indicatrix, Euclidean, Funk, HeisenbergBerwaldMoor, Sphere};
    use approx::assert_relative_eq;

    #[test]
    fn euclidean_transport_is_trivial() {
        let e = Euclidean { dim: 3 };
        let c = Curve::polyline(&[vec![0.0; 3], vec![1.0, 2.0, 0.0], vec![-1.0, 0.5, 3.0]]).unwrap();
        let y = transport(&e, &c, &[0.3, -0.1, 2.0], 16).unwrap();
        assert_eq!(y, vec![0.3, -0.1, 2.0]);
    }

    #[test]
    fn rejects_too_few_steps() {
        let e = Euclidean { dim: 2 };
        let c = Curve::square(&[0.0, 0.0], (0, 1), 1.0).unwrap();
        assert!(matches!(transport(&e, &c, &[1.0, 0.0], 3), Err(Error::Configuration(_))));
    }

    #[test]
    fn octant_rotates_by_a_quarter_turn() {
        let k = Sphere { dim: 3 };
        let c = Curve::sphere_octant(3, (0, 1)).unwrap();
        assert!(c.is_closed());
        let y = transport(&k, &c, &[0.3, 0.4, 0.1], 10_000).unwrap();
        // Counter-clockwise quarter turn in the (y¹, y²) plane.
        assert_relative_eq!(y[0], -0.4, epsilon = 1e-9);
        assert_relative_eq!(y[1], 0.3, epsilon = 1e-9);
        assert_relative_eq!(y[2], 0.1, epsilon = 1e-9);
    }

    #[test]
    fn heisenberg_square_preserves_f() {
        let h = HeisenbergBerwaldMoor;
        let c = Curve::square(&[0.0; 3], (0, 2), 0.1).unwrap();
        let out = transport_with_estimate(&h, &c, &[1.0, 1.0, 1.0], 10_000).unwrap();
        assert!(out.f_drift < 1e-8);
        assert!(out.richardson_error < 1e-10);
    }

    #[test]
    fn cone_exit_reports_parameter() {
        // The Funk metric lives on the unit ball; the segment leaves it at t = ½.
        let k = Funk { dim: 3 };
        let c = Curve::polyline(&[vec![0.0; 3], vec![2.0, 0.0, 0.0]]).unwrap();
        match transport(&k, &c, &[1.0, 1.0, 1.0], 100) {
            Err(Error::TransportDomain { t }) => assert!(t > 0.45 && t <= 0.5, "{t}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_area_loop_is_identity() {
        let h = HeisenbergBerwaldMoor;
        let samples = sample_indicatrix(&h, &[0.0; 3], 8, 3).unwrap();
        let c = Curve::polyline(&[vec![0.0; 3], vec![0.05, 0.02, -0.03], vec![0.0; 3]]).unwrap();
        let hol = loop_transport(&h, &c, &samples, 200).unwrap();
        assert!(hol.distance_from_identity() < 1e-9);
        hol.validate(&h, 1e-6).unwrap();
    }

    #[test]
    fn composition_with_identity_and_inverse() {
        let k = Sphere { dim: 3 };
        let samples = sample_indicatrix(&k, &[0.0; 3], 6, 4).unwrap();
        let c = Curve::sphere_octant(3, (0, 1)).unwrap();
        let h = loop_transport(&k, &c, &samples, 2000).unwrap();
        let id = HolonomyElement::identity(&samples);
        let left = compose(&k, &id, &h).unwrap();
        assert_eq!(left.images, h.images);
        let back = loop_transport(&k, &c.reversed(), &samples, 2000).unwrap();
        let round = compose(&k, &h, &back).unwrap();
        assert!(round.distance_from_identity() < 1e-9);
        let other = HolonomyElement {
            base_x: vec![0.1, 0.0, 0.0],
            ..h.clone()
        };
        assert!(matches!(compose(&k, &h, &other), Err(Error::Composition(_))));
    }
}
