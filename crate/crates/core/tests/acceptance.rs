//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Runs without the test harness so every line reaches the output. The
//! process fails when a criterion outside `EXPECTED_FAILURES` fails, or when an
//! expected failure does not match its recorded cause.

use mshlab::comparison::{convexity_certificate, geometric_levels, snap_levels, sublevel_max};
use mshlab::cone::{is_m_positive, sigma_k, HermitianForm};
use mshlab::grid::{Domain, ScalarField};
use mshlab::harness::{
    boundedness_probe, bounded_part, run_scenario_full, ScenarioConfig, ScenarioFields, VerificationReport,
};
use mshlab::kernel::{chi_eval, ExtReal, KernelParams};
use mshlab::weights::{
    build_weight_with_floor, check_condition_one, check_condition_two, check_delta_regular, corollary_factors,
    floor_for, perturbed_weight, ModelSubmanifold, PerturbedWeight, WeightData, DEFAULT_FLOOR_CELLS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

/// The ratio limit on the 48^4 grid: the deviation is about `1/|psi|` on the
/// deepest admissible shell, above the 0.1 gate.
const EXPECTED_FAILURES: &[u32] = &[6];

struct Line {
    id: u32,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

fn scenario(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.ini"));
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(name: &str) -> (VerificationReport, ScenarioFields, Duration) {
    let t = Instant::now();
    let (r, f) = run_scenario_full(&scenario(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    (r, f, t.elapsed())
}

fn within(elapsed: Duration, secs: f64) -> bool {
    elapsed.as_secs_f64() < secs
}

fn kernel_round_trip() -> (bool, String) {
    let mut worst = 0.0f64;
    for p in [0.0, -0.25, -0.5, -1.0, -2.0] {
        let k = KernelParams::new(p).unwrap();
        for j in 0..=2000 {
            let s = 10f64.powf(-8.0 * j as f64 / 2000.0);
            let back = k.l(k.k(s).unwrap()).unwrap();
            worst = worst.max((back - s).abs());
        }
        let zero = k.l(k.k(0.0).unwrap()).unwrap();
        worst = worst.max(zero);
    }
    let mut worst_rel = 0.0f64;
    for (q, gamma) in [(0.0, 0.405), (-0.5, 0.25), (-1.0, 0.45), (-2.0, 0.9), (-0.25, 0.2)] {
        for t in [-0.5, -1.0, -3.0, -8.0] {
            let inner = KernelParams::new(q).unwrap();
            let Ok(c) = chi_eval(q, gamma, t) else { continue };
            if inner.l(ExtReal::Finite(t)).is_err() {
                continue;
            }
            let step = 1e-4 * t.abs();
            let plus = chi_eval(q, gamma, t + step).unwrap();
            let minus = chi_eval(q, gamma, t - step).unwrap();
            let d1 = (plus.value - minus.value) / (2.0 * step);
            let d2 = (plus.first_deriv - minus.first_deriv) / (2.0 * step);
            worst_rel = worst_rel.max((d1 - c.first_deriv).abs() / c.first_deriv.abs().max(1e-300));
            worst_rel = worst_rel.max((d2 - c.second_deriv).abs() / c.second_deriv.abs().max(1e-300));
        }
    }
    (
        worst <= 1e-12 && worst_rel <= 1e-6,
        format!("round trip error {worst:.1e}, chi derivative relative error {worst_rel:.1e}"),
    )
}

fn brute_sigma(l: &[f64], k: usize) -> f64 {
    let n = l.len();
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| l[i]).product::<f64>())
        .sum()
}

fn cone_correctness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut mismatches = 0;
    for trial in 0..1000 {
        let n = 2 + trial % 2;
        let l: Vec<f64> = (0..n).map(|_| rng.gen_range(-20i32..=20) as f64 / 4.0).collect();
        for k in 1..=n {
            if sigma_k(&l, k).unwrap() != brute_sigma(&l, k) {
                mismatches += 1;
            }
        }
    }
    let mut counter_ok = true;
    for eps in [0.1, 0.01] {
        let h = HermitianForm::diag(&[1.0, eps, -eps]);
        counter_ok &= is_m_positive(&h, 1, 0.0).unwrap().is_member;
        counter_ok &= !is_m_positive(&h, 2, 0.0).unwrap().is_member;
    }
    (
        mismatches == 0 && counter_ok,
        format!("{mismatches} sigma_k mismatches on 1000 vectors, diag(1, e, -e) 1-positive and not 2-positive: {counter_ok}"),
    )
}

fn green_oracle(r: &VerificationReport, f: &ScenarioFields) -> (bool, String) {
    let w = &f.weight;
    let d = w.domain();
    let mut err = 0.0f64;
    let mut nodes = 0;
    for i in d.interior_nodes() {
        let hv = w.h.values()[i];
        if w.psi.is_masked(i) || hv < 4.0 * w.h_floor {
            continue;
        }
        let log_mod = 0.5 * d.norm_sqr(i).ln();
        err = err.max((f.u.values()[i] - log_mod).abs());
        nodes += 1;
    }
    let mut spread = 0.0f64;
    for other in &f.per_c[..f.per_c.len() - 1] {
        for (a, b) in other.values().iter().zip(f.u.values()) {
            spread = spread.max((a - b).abs());
        }
    }
    let shifts: Vec<f64> = r.config.c_list.iter().map(|c| c - 0.5).collect();
    (
        err <= 3e-2 && spread <= 1e-3,
        format!("C in {shifts:?}: sup |u - log|z|| = {err:.2e} over {nodes} nodes, spread across C {spread:.1e}"),
    )
}

fn mass_line(r: &VerificationReport, target: f64) -> (bool, String) {
    let rows = &r.polar_mass.rows;
    let ok = !rows.is_empty() && rows.iter().all(|x| !x.inconclusive && (x.ratio - target).abs() <= 0.05);
    let ratios: Vec<String> = rows.iter().map(|x| format!("r={}: {:.4}", x.radius, x.ratio)).collect();
    (ok, format!("theta = {target}: {}", ratios.join(", ")))
}

fn boundedness(r: &VerificationReport, f: &ScenarioFields) -> (bool, String) {
    let b = &r.boundedness;
    let sub = bounded_part(&f.sub.field, &f.weight, &f.theta);
    let control = boundedness_probe(&f.weight.psi, &f.theta, &f.weight, &sub, b.margin).unwrap();
    let inf = b.rows.iter().map(|x| x.inf_u).fold(f64::INFINITY, f64::min);
    (
        b.skipped.is_none() && b.passed && !control.passed,
        format!(
            "{} shells, inf u = {inf:.3} >= floor {:.3}, min psi drops {:.2}; control u = psi passes: {}",
            b.rows.len(),
            b.floor,
            b.psi_drop,
            control.passed
        ),
    )
}

fn ratio_limit(r: &VerificationReport) -> (bool, String, bool) {
    let Some(t) = &r.ratio else {
        return (false, format!("no ratio table: {:?}", r.ratio_note), false);
    };
    let last = t.rows.last().unwrap();
    // Cause recorded for the failure: u is within the solver error of log h near
    // V, so the deviation is about 1/|psi| at the outer edge of the shell.
    let predicted = 1.0 / (1.0 - last.geometry.h_hi.ln());
    let explained = (t.deepest_deviation - predicted).abs() <= 0.25 * predicted && t.monotone;
    (
        t.passed,
        format!(
            "deepest shell h in [{:.4}, {:.4}) ({} nodes): deviation {:.3} (1/|psi| = {:.3}), monotone over last three: {}",
            last.geometry.h_lo, last.geometry.h_hi, last.geometry.nodes, t.deepest_deviation, predicted, t.monotone
        ),
        explained,
    )
}

fn sandwich(reports: &[&VerificationReport]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in reports {
        let s = &r.sandwich;
        ok &= s.passed;
        parts.push(format!(
            "{}: {}+{} violations on {} nodes",
            r.name, s.lower.violations, s.upper.violations, s.lower.nodes_checked
        ));
    }
    (ok, parts.join("; "))
}

fn log_modulus(d: &Arc<Domain>, x0: f64) -> ScalarField {
    let dd = d.clone();
    ScalarField::from_fn(d.clone(), move |i| {
        let c = dd.coords(i);
        let r2 = (c[0] - x0).powi(2) + c[1] * c[1];
        if r2 == 0.0 {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(0.5 * r2.ln())
        }
    })
}

fn normalized(f: ScalarField) -> ScalarField {
    let top = f.domain().interior_nodes().filter(|&i| !f.is_masked(i)).map(|i| f.values()[i]).fold(f64::NEG_INFINITY, f64::max);
    f.map(|_, v| v - top - 1.0)
}

fn three_circles() -> (bool, String) {
    let d = Domain::ball(1, 1.0, 512).unwrap();
    let psi = log_modulus(&d, 0.0);
    let npa = d.nodes_per_axis();
    let mid = npa / 2;
    let ray: Vec<usize> = (0..mid).map(|k| d.index_of(&[k, mid])).collect();
    let levels = snap_levels(&psi, &ray, &geometric_levels(&psi, 24, 0.0).unwrap());
    let shifted = log_modulus(&d, 0.3);
    let far = log_modulus(&d, 0.6);
    let dd = d.clone();
    let pairs: Vec<(&str, ScalarField)> = vec![
        ("2 log|z|", psi.map(|_, v| 2.0 * v)),
        ("log|z - 0.3|", shifted.clone()),
        ("log|z - 0.6| + log|z|", ScalarField::from_fn(d.clone(), {
            let (a, b) = (far.clone(), psi.clone());
            move |i| match (a.value(i), b.value(i)) {
                (ExtReal::Finite(x), ExtReal::Finite(y)) => ExtReal::Finite(x + y),
                _ => ExtReal::NegInf,
            }
        })),
        ("|z|^2", ScalarField::from_real_fn(d.clone(), move |i| dd.norm_sqr(i))),
        ("max(log|z - 0.3|, 2 log|z|)", ScalarField::from_fn(d.clone(), {
            let (a, b) = (shifted.clone(), psi.clone());
            move |i| {
                let x = a.value(i).to_f64();
                let y = 2.0 * b.value(i).to_f64();
                let m = x.max(y);
                if m == f64::NEG_INFINITY { ExtReal::NegInf } else { ExtReal::Finite(m) }
            }
        })),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, phi) in pairs {
        let phi = normalized(phi);
        let prof = sublevel_max(&phi, &psi, &levels).unwrap();
        let cert = convexity_certificate(&prof, 1e-6).unwrap();
        ok &= cert.convex && cert.quotients_monotone;
        parts.push(format!("{name}: min second difference {:.2e}", cert.min_second_difference));
    }
    (ok, format!("{} levels; {}", levels.len(), parts.join("; ")))
}

fn singularity(r: &VerificationReport) -> (bool, String) {
    let s = &r.singularity;
    let tail: Vec<String> = s.rows.iter().rev().take(3).rev().map(|x| format!("{:.4}", x.value)).collect();
    (
        s.applicable && s.passed,
        format!("p = {} > {}: sup |u - theta psi| on the three deepest shells [{}]", r.weight.p, s.threshold, tail.join(", ")),
    )
}

fn flat(d: &Arc<Domain>, n: usize) -> WeightData {
    build_weight_with_floor(ModelSubmanifold::new(n, n).unwrap(), n, d.clone(), floor_for(d, DEFAULT_FLOOR_CELLS)).unwrap()
}

fn checkers() -> (bool, String) {
    let tol = 1e-9;
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, intervals) in [(1usize, 512usize), (2, 48)] {
        let d = Domain::ball(n, 1.0, intervals).unwrap();
        let w = flat(&d, n);
        let f = corollary_factors(&w, 0.45).unwrap();
        let reps = [
            check_delta_regular(&w, n, 0.5, 1.0, tol).unwrap(),
            check_condition_one(&w, n, 1.0, 0.45, tol).unwrap(),
            check_condition_two(&w, &f, n, 1.0, 0.45, tol).unwrap(),
        ];
        for r in &reps {
            ok &= r.passed && r.nodes_failed == 0;
        }
        parts.push(format!("flat n={n}: {} nodes each, all pass: {}", reps[0].nodes_checked, reps.iter().all(|r| r.passed)));
    }
    let d = Domain::ball(2, 1.0, 48).unwrap();
    let aniso = perturbed_weight(PerturbedWeight::Anisotropic, 2, 0.0, d.clone()).unwrap();
    let dented = perturbed_weight(PerturbedWeight::Dented, 2, 0.0, d.clone()).unwrap();
    let inflated = perturbed_weight(PerturbedWeight::Inflated, 2, 0.0, d.clone()).unwrap();
    let fi = corollary_factors(&inflated, 0.45).unwrap();
    let fails = [
        !check_delta_regular(&aniso, 2, 0.5, 1.0, tol).unwrap().passed,
        !check_condition_one(&dented, 2, 1.0, 0.45, tol).unwrap().passed,
        !check_condition_two(&inflated, &fi, 2, 1.0, 0.45, tol).unwrap().passed,
    ];
    ok &= fails.iter().all(|&x| x);
    parts.push(format!("controls fail (regularity, condition one, condition two): {fails:?}"));
    (ok, parts.join("; "))
}

fn main() {
    let mut lines: Vec<Line> = Vec::new();
    let mut push = |id: u32, (passed, detail): (bool, String), elapsed: Duration, limit: Option<f64>| {
        let slow = limit.map_or(false, |s| !within(elapsed, s));
        let detail = if slow { format!("{detail}; over the {}s budget", limit.unwrap()) } else { detail };
        let line = Line { id, passed: passed && !slow, detail, elapsed };
        println!(
            "criterion {:>2} {} ({:.1}s): {}",
            line.id,
            if line.passed { "PASS" } else { "FAIL" },
            line.elapsed.as_secs_f64(),
            line.detail
        );
        lines.push(line);
    };

    let t = Instant::now();
    let c1 = kernel_round_trip();
    push(1, c1, t.elapsed(), Some(1.0));

    let t = Instant::now();
    let c2 = cone_correctness();
    push(2, c2, t.elapsed(), Some(1.0));

    let (green, green_fields, green_time) = run("green_half");
    push(3, green_oracle(&green, &green_fields), green_time, Some(60.0));

    let (green_one, _, one_time) = run("green_one");
    let (a, da) = mass_line(&green, 0.5);
    let (b, db) = mass_line(&green_one, 1.0);
    push(4, (a && b, format!("{da}; {db}")), green_time + one_time, Some(60.0));

    let (half, half_fields, half_time) = run("c2_half");
    push(5, boundedness(&half, &half_fields), half_time, Some(900.0));

    let (line_report, line_fields, line_time) = run("c2_line");
    let (ok, detail) = boundedness(&line_report, &line_fields);
    println!(
        "info: complex line V, m = 1 ({:.1}s): probe {}: {detail}",
        line_time.as_secs_f64(),
        if ok { "bounded" } else { "not bounded" }
    );

    let (bump, _, bump_time) = run("c2_bump");
    let (passed, detail, explained) = ratio_limit(&bump);
    push(6, (passed, detail), bump_time, Some(900.0));

    push(7, sandwich(&[&green, &half, &bump]), Duration::ZERO, None);

    let t = Instant::now();
    let c8 = three_circles();
    push(8, c8, t.elapsed(), Some(30.0));

    push(9, singularity(&green), Duration::ZERO, None);

    let t = Instant::now();
    let c10 = checkers();
    push(10, c10, t.elapsed(), Some(120.0));

    let passed = lines.iter().filter(|l| l.passed).count();
    println!("{passed}/{} criteria pass", lines.len());
    let mut unexpected = Vec::new();
    for l in &lines {
        if !l.passed && !EXPECTED_FAILURES.contains(&l.id) {
            unexpected.push(l.id);
        }
    }
    if lines.iter().any(|l| l.id == 6 && !l.passed) {
        println!(
            "criterion 6 failure {} the recorded cause (deviation about 1/|psi| on the deepest shell)",
            if explained { "matches" } else { "does not match" }
        );
        if !explained {
            unexpected.push(6);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
