//! Deterministic low-discrepancy sampling of the positive indicatrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MetricKernel, Tolerances};
use crate::error::{Error, Result};

/// Points of `{F(x, ·) = 1}` at a fixed base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatrixSampleSet {
    pub x: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
    pub count: usize,
}

impl IndicatrixSampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest `|F(x, y_s) − 1|` over the set.
    pub fn max_level_defect(&self, kernel: &dyn MetricKernel) -> f64 {
        self.points
            .iter()
            .map(|y| (kernel.value(&self.x, y) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    acc
}

/// Minimum acceptance rate before sampling is declared starved.
const MIN_ACCEPTANCE: f64 = 0.01;

pub fn sample_indicatrix(
    kernel: &dyn MetricKernel,
    x: &[f64],
    count: usize,
    seed: u64,
) -> Result<IndicatrixSampleSet> {
    sample_indicatrix_with(kernel, x, count, seed, &Tolerances::default())
}

/// Halton points in the cube `[-1, 1]ⁿ` under a seeded Cranley-Patterson
/// rotation, kept when inside the unit ball and the cone (margin `delta`),
/// then projected radially onto the indicatrix.
pub fn sample_indicatrix_with(
    kernel: &dyn MetricKernel,
    x: &[f64],
    count: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<IndicatrixSampleSet> {
    let n = kernel.dim();
    if count == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    if x.len() != n {
        return Err(Error::domain(format!(
            "base point has dimension {}, kernel has {n}",
            x.len()
        )));
    }
    if n > PRIMES.len() {
        return Err(Error::config(format!(
            "sampling supports dimension up to {}",
            PRIMES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    // Enough draws to find `count` points at the minimum acceptance rate.
    let budget = (count as f64 / MIN_ACCEPTANCE).ceil() as u64 + 1000;
    let mut points = Vec::with_capacity(count);
    let mut tried = 0u64;
    let mut y = vec![0.0; n];
    for index in 1..=budget {
        tried += 1;
        for d in 0..n {
            let u = (radical_inverse(index, PRIMES[d]) + shift[d]).fract();
            y[d] = 2.0 * u - 1.0;
        }
        let r2: f64 = y.iter().map(|v| v * v).sum();
        if !(r2 > 1e-6 && r2 <= 1.0) || !kernel.in_cone(x, &y, tol.delta) {
            continue;
        }
        let f = kernel.value(x, &y);
        if !(f > 0.0) {
            continue;
        }
        let scale = f.sqrt();
        let mut p: Vec<f64> = y.iter().map(|v| v / scale).collect();
        // One Newton-type correction pins F to 1 at round-off level.
        let fp = kernel.value(x, &p);
        let fix = fp.sqrt();
        p.iter_mut().for_each(|v| *v /= fix);
        if (kernel.value(x, &p) - 1.0).abs() > tol.tol_proj {
            continue;
        }
        points.push(p);
        if points.len() == count {
            break;
        }
    }
    if points.len() < count {
        return Err(Error::SamplingCoverage {
            accepted: points.len(),
            tried: tried as usize,
            requested: count,
        });
    }
    Ok(IndicatrixSampleSet {
        x: x.to_vec(),
        points,
        seed,
        count,
    })
}
