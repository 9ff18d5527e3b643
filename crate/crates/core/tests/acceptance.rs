//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use finsler_core::algebra::{curvature_field, curvature_generators, generate_algebra, IndicatrixField};
use finsler_core::cli::{cmd_analyze, RunConfig};
use finsler_core::connection::{constant_curvature_fit, riemannian_point_test, SEMI_RIEMANNIAN_TOL};
use finsler_core::geometry::{kernel_from_spec, sample_indicatrix, HeisenbergBerwaldMoor, MetricKernel};
use finsler_core::heisenberg::{
    bracket_coefficient_check, closed_form_r, infinite_dim_evidence, random_cone_points, unit_samples,
    AkmField,
};
use finsler_core::transport::{commutator_loop_derivative, transport, Curve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, what: String) -> Outcome {
    if cond {
        Ok(what)
    } else {
        Err(what)
    }
}

fn unit(i: usize) -> Vec<f64> {
    let mut e = vec![0.0; 3];
    e[i - 1] = 1.0;
    e
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let n = b.iter().map(|q| q * q).sum::<f64>().sqrt();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

fn heisenberg() -> Arc<dyn MetricKernel> {
    Arc::new(HeisenbergBerwaldMoor)
}

fn heisenberg_golden() -> Outcome {
    let exact = [
        ((1, 2), [-1.25, 0.25, 1.0]),
        ((1, 3), [2.75, 0.0, -2.75]),
        ((2, 3), [-1.0, -0.25, 1.25]),
    ];
    let mut unit_err: f64 = 0.0;
    for ((i, j), v) in exact {
        let f = curvature_field(heisenberg(), &[0.0; 3], &unit(i), &unit(j)).map_err(|e| e.to_string())?;
        let got = f.eval(&[1.0, 1.0, 1.0]).map_err(|e| e.to_string())?;
        unit_err = unit_err.max(got.iter().zip(v).fold(0.0, |m, (a, b)| m.max((a - b).abs())));
    }
    let mut random_err: f64 = 0.0;
    for (x, y) in random_cone_points(100, 2024) {
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            let f = curvature_field(heisenberg(), &x, &unit(i), &unit(j)).map_err(|e| e.to_string())?;
            let got = f.eval(&y).map_err(|e| e.to_string())?;
            let want = closed_form_r(i, j, &x, &y).map_err(|e| e.to_string())?;
            random_err = random_err.max(rel(&got, &want));
        }
    }
    check(
        unit_err < 1e-8 && random_err < 1e-6,
        format!("unit point error {unit_err:.2e}, random relative error {random_err:.2e}"),
    )
}

fn a_form_identities() -> Outcome {
    let samples = unit_samples(20, 5).map_err(|e| e.to_string())?;
    let forms = [
        ((1, 2), 4.0, AkmField::new(1, 2, [-5.0, 1.0, 4.0])),
        ((1, 3), 4.0 / 11.0, AkmField::new(1, 1, [1.0, 0.0, -1.0])),
        ((2, 3), 4.0, AkmField::new(2, 1, [-4.0, -1.0, 5.0])),
    ];
    let mut worst: f64 = 0.0;
    for ((i, j), factor, form) in forms {
        let f = curvature_field(heisenberg(), &[0.0; 3], &unit(i), &unit(j)).map_err(|e| e.to_string())?;
        for y in &samples.points {
            let got = f.eval(y).map_err(|e| e.to_string())?;
            let want = form.eval(y).map_err(|e| e.to_string())?;
            for k in 0..3 {
                worst = worst.max((factor * got[k] - want[k]).abs());
            }
        }
    }
    check(worst < 1e-8, format!("max pointwise error {worst:.2e} on 20 samples"))
}

fn bracket_coefficients() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, m, a) in [(1, 2, [-5.0, 1.0, 4.0]), (2, 1, [-4.0, -1.0, 5.0])] {
        let c = bracket_coefficient_check(k, m, a).map_err(|e| e.to_string())?;
        worst = worst.max(c.residual);
        let fit = c.fitted.iter().zip(&c.c).fold(0.0f64, |w, (p, q)| w.max((p - q).abs()));
        worst = worst.max(fit);
    }
    check(worst < 1e-8, format!("max residual {worst:.2e}"))
}

fn sphere_constant_curvature() -> Outcome {
    let k = kernel_from_spec("sphere:3").map_err(|e| e.to_string())?;
    let x = [0.2, -0.1, 0.3];
    let s = sample_indicatrix(&*k, &x, 40, 1).map_err(|e| e.to_string())?;
    let fit = constant_curvature_fit(&*k, &x, &s).map_err(|e| e.to_string())?;
    let gens = curvature_generators(k.clone(), &x);
    let a = generate_algebra(&*k, &x, &gens, 3, &s, 1e-7).map_err(|e| e.to_string())?;
    check(
        fit.residual < 1e-6 && (fit.c_estimate - 1.0).abs() < 1e-6 && a.rank == 3,
        format!("c = {:.9}, residual {:.2e}, rank {}", fit.c_estimate, fit.residual, a.rank),
    )
}

fn funk_strict_inequality() -> Outcome {
    let k = kernel_from_spec("funk:3").map_err(|e| e.to_string())?;
    let x = [0.3, 0.1, -0.2];
    let s = sample_indicatrix(&*k, &x, 40, 1).map_err(|e| e.to_string())?;
    let riem = riemannian_point_test(&*k, &x, &s, SEMI_RIEMANNIAN_TOL).map_err(|e| e.to_string())?;
    let fit = constant_curvature_fit(&*k, &x, &s).map_err(|e| e.to_string())?;
    let gens = curvature_generators(k.clone(), &x);
    let a = generate_algebra(&*k, &x, &gens, 3, &s, 1e-7).map_err(|e| e.to_string())?;
    check(
        !riem.is_semi_riemannian && fit.residual < 1e-5 && a.rank >= 4,
        format!(
            "semi-Riemannian {}, c = {:.6}, residual {:.2e}, ranks {:?}",
            riem.is_semi_riemannian, fit.c_estimate, fit.residual, a.rank_by_depth
        ),
    )
}

fn infinite_dimension_evidence() -> Outcome {
    let mut tables = Vec::new();
    let mut ok = true;
    for (count, seed) in [(40, 1), (80, 1), (40, 2)] {
        let s = unit_samples(count, seed).map_err(|e| e.to_string())?;
        let t = infinite_dim_evidence(4, &s, 1e-7).map_err(|e| e.to_string())?;
        ok &= t.strictly_increasing && t.ranks[0] == 3;
        tables.push(format!("{count}/{seed}: {:?}", t.ranks));
    }
    check(ok, tables.join(", "))
}

/// A random curve and start vector for one of four kernels.
fn random_case(rng: &mut ChaCha8Rng, index: usize) -> (Arc<dyn MetricKernel>, Curve, Vec<f64>) {
    let mut point = |r: f64| -> Vec<f64> { (0..3).map(|_| rng.gen_range(-r..r)).collect() };
    match index % 4 {
        0 => {
            let k = kernel_from_spec("sphere:3").unwrap();
            let c = Curve::polyline(&[point(0.6), point(0.6), point(0.6)]).unwrap();
            (k, c, point(1.0))
        }
        1 => {
            let k = kernel_from_spec("funk:3").unwrap();
            let c = Curve::polyline(&[point(0.35), point(0.35), point(0.35)]).unwrap();
            (k, c, point(1.0))
        }
        2 => {
            let x = point(0.3);
            let a = point(1.0);
            let b = point(1.0);
            let k = kernel_from_spec("sphere:3").unwrap();
            let c = Curve::parallelogram(&x, &a, &b, 0.3).unwrap();
            (k, c, point(1.0))
        }
        _ => {
            let k = heisenberg();
            let c = Curve::polyline(&[point(0.25), point(0.25), point(0.25)]).unwrap();
            let x1 = c.start[0];
            let y1 = rng.gen_range(0.5..2.0);
            let y3 = rng.gen_range(0.5..2.0);
            let y2 = x1 * y3 + rng.gen_range(1.0..2.0);
            (k, c, vec![y1, y2, y3])
        }
    }
}

fn transport_invariant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut min_order = f64::INFINITY;
    for index in 0..100 {
        let (k, c, y) = random_case(&mut rng, index);
        let out = transport(&*k, &c, &y, 10_000).map_err(|e| format!("case {index}: {e}"))?;
        let drift = (k.value(&c.end(), &out) - k.value(&c.start, &y)).abs();
        worst = worst.max(drift);
        if index < 8 {
            // Order from the slope of the error under step doubling.
            let dist = |a: &[f64]| a.iter().zip(&out).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let e: Vec<f64> = [16, 32, 64]
                .iter()
                .map(|&n| transport(&*k, &c, &y, n).map(|v| dist(&v)))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            min_order = min_order.min((e[0] / e[2]).log2() / 2.0);
        }
    }
    check(
        worst < 1e-6 && min_order >= 3.5,
        format!("max F drift {worst:.2e} over 100 cases, min convergence order {min_order:.2}"),
    )
}

fn commutator_orders(k: Arc<dyn MetricKernel>, x: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<f64>, String> {
    let mut s = sample_indicatrix(&*k, x, 60, 4).map_err(|e| e.to_string())?;
    s.points.retain(|y| k.cone_margin(x, y) > 0.3);
    s.points.truncate(8);
    s.count = s.points.len();
    let field = curvature_field(k.clone(), x, a, b).map_err(|e| e.to_string())?;
    let mut errors = Vec::new();
    for t in [0.08, 0.04, 0.02] {
        let c = commutator_loop_derivative(&*k, x, a, b, t, &s, 400).map_err(|e| e.to_string())?;
        let mut e: f64 = 0.0;
        for (y, v) in s.points.iter().zip(&c.values) {
            let r = field.eval(y).map_err(|e| e.to_string())?;
            e = e.max(v.iter().zip(&r).fold(0.0, |m, (p, q)| m.max((p - q).abs())));
        }
        errors.push(e);
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

fn commutator_loop() -> Outcome {
    let h = commutator_orders(heisenberg(), &[0.0; 3], &unit(1), &unit(3))?;
    let s = commutator_orders(kernel_from_spec("sphere:3").unwrap(), &[0.1, 0.2, 0.0], &unit(1), &unit(2))?;
    let min = h.iter().chain(&s).copied().fold(f64::INFINITY, f64::min);
    check(min >= 0.9, format!("orders heisenberg {h:.2?}, sphere {s:.2?}"))
}

fn surface_bound() -> Outcome {
    let mut ranks = Vec::new();
    for (spec, x) in [
        ("euclidean:2", vec![0.0, 0.0]),
        ("sphere:2", vec![0.3, -0.2]),
        ("funk:2", vec![0.2, -0.1]),
        ("funk:2", vec![-0.5, 0.4]),
    ] {
        let k = kernel_from_spec(spec).map_err(|e| e.to_string())?;
        let s = sample_indicatrix(&*k, &x, 40, 3).map_err(|e| e.to_string())?;
        let gens = curvature_generators(k.clone(), &x);
        let a = generate_algebra(&*k, &x, &gens, 3, &s, 1e-7).map_err(|e| e.to_string())?;
        ranks.push(a.rank);
    }
    check(ranks.iter().all(|&r| r <= 1), format!("ranks {ranks:?}"))
}

fn determinism() -> Outcome {
    let mut ok = true;
    for kernel in ["sphere", "heisenberg-bm", "funk"] {
        let config = RunConfig {
            kernel: kernel.to_string(),
            base_point: (kernel == "funk").then(|| vec![0.3, 0.1, -0.2]),
            seed: 9,
            ..RunConfig::default()
        };
        let a = cmd_analyze(&config);
        let b = cmd_analyze(&config);
        ok &= a.exit_status() == 0 && a.deterministic_json() == b.deterministic_json();
    }
    check(ok, "identical deterministic sections for sphere, heisenberg-bm, funk".to_string())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<u64>); 10] = [
        ("AC1 Heisenberg golden values", heisenberg_golden, Some(10)),
        ("AC2 A-form identities", a_form_identities, None),
        ("AC3 bracket coefficients", bracket_coefficients, None),
        ("AC4 sphere constant curvature and rank 3", sphere_constant_curvature, Some(30)),
        ("AC5 Funk strict inequality", funk_strict_inequality, Some(60)),
        ("AC6 Heisenberg rank growth", infinite_dimension_evidence, None),
        ("AC7 transport invariant and order", transport_invariant, None),
        ("AC8 commutator-loop recovery", commutator_loop, None),
        ("AC9 surface bound", surface_bound, None),
        ("AC10 determinism", determinism, None),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(d), Some(s)) if elapsed > Duration::from_secs(s) => Err(format!("{d}; exceeded {s} s")),
            (o, _) => o,
        };
        let (verdict, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{verdict} {name}: {detail} [{:.2} s]", elapsed.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
