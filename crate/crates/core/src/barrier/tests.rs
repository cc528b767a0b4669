use super::*;
use crate::cone::is_m_positive;
use crate::grid::complex_hessian;
use crate::weights::{build_weight, build_weight_with_floor, corollary_factors, floor_for, weight_from_h, ModelSubmanifold};
use proptest::prelude::*;

fn green(intervals: usize) -> WeightData {
    let d = Domain::ball(1, 1.0, intervals).unwrap();
    build_weight(ModelSubmanifold::new(1, 1).unwrap(), 1, d).unwrap()
}

fn radial_bump(d: &Arc<Domain>, inner: f64, outer: f64) -> ScalarField {
    let dd = d.clone();
    ScalarField::from_real_fn(d.clone(), move |i| smoothstep((outer - dd.norm_sqr(i).sqrt()) / (outer - inner)))
}

fn tilted(d: &Arc<Domain>) -> ScalarField {
    let dd = d.clone();
    ScalarField::from_real_fn(d.clone(), move |i| 0.5 + 0.4 * dd.coords(i)[0])
}

fn support_radius(f: &ScalarField) -> f64 {
    let d = f.domain();
    d.interior_nodes()
        .filter(|&i| f.values()[i] > 0.0)
        .map(|i| d.norm_sqr(i).sqrt())
        .fold(0.0, f64::max)
}

#[test]
fn profile_shape() {
    assert_eq!(smoothstep(0.0), 0.0);
    assert_eq!(smoothstep(1.0), 1.0);
    assert_eq!(smoothstep(0.5), 0.5);
    assert_eq!(smoothstep(-3.0), 0.0);
    assert_eq!(smoothstep(7.0), 1.0);
    // Second derivative 60t - 180t^2 + 120t^3 peaks at t = (3 - sqrt 3) / 6.
    let e = 1e-4;
    let d2 = |t: f64| (smoothstep(t + e) - 2.0 * smoothstep(t) + smoothstep(t - e)) / (e * e);
    let peak = (0..=1000).map(|k| d2(k as f64 / 1000.0).abs()).fold(0.0, f64::max);
    assert!((peak - PROFILE_SECOND_DERIVATIVE).abs() < 1e-2, "{peak}");
    assert!((PROFILE_SECOND_DERIVATIVE - 10.0 / 3f64.sqrt()).abs() < 1e-12);
    assert!(d2(1e-3).abs() < 0.1 && d2(1.0 - 1e-3).abs() < 0.1);
}

#[test]
fn gamma_range_defaults() {
    let k = RegularityConstants::default();
    assert!((gamma_bound(&k) - 0.45).abs() < 1e-15);
    assert!((default_gamma(&k) - 0.405).abs() < 1e-15);
}

#[test]
fn constant_theta_gives_constant_chain() {
    let w = green(64);
    let one = ScalarField::constant(w.domain().clone(), 1.0);
    let chain = make_cutoff_chain(&one, 3, 0.15).unwrap();
    assert_eq!(chain.len(), 4);
    for f in &chain {
        assert!(f.values().iter().all(|&v| v == 1.0));
    }
}

#[test]
fn nested_chain_radii() {
    let d = Domain::ball(1, 1.0, 256).unwrap();
    let theta = radial_bump(&d, 0.1, 0.2);
    let chain = make_cutoff_chain(&theta, 3, 0.05).unwrap();
    let dx = d.spacing();
    assert!((support_radius(&chain[0]) - 0.2).abs() <= dx);
    assert!((support_radius(&chain[1]) - 0.25).abs() <= 2.0 * dx);
    assert!((support_radius(&chain[2]) - 0.30).abs() <= 2.0 * dx);
    assert!(chain[3].values().iter().all(|&v| v == 1.0));
    assert_eq!(nesting_failure(&chain), None);
    // Reversed order breaks nesting.
    let swapped = vec![chain[2].clone(), chain[1].clone()];
    assert_eq!(nesting_failure(&swapped), Some(1));
}

#[test]
fn chain_errors() {
    let d = Domain::ball(1, 1.0, 256).unwrap();
    let wide = radial_bump(&d, 0.5, 0.8);
    assert!(matches!(make_cutoff_chain(&wide, 3, 0.1), Err(Error::ChainOverflow(_))));
    let small = radial_bump(&d, 0.1, 0.2);
    assert!(make_cutoff_chain(&small, 3, 2.0 * d.spacing()).is_err());
    assert!(make_cutoff_chain(&small, 0, 0.1).is_err());
    let bad = ScalarField::constant(d.clone(), 1.5);
    assert!(make_cutoff_chain(&bad, 1, 0.1).is_err());
}

#[test]
fn ladder_from_negative_exponent() {
    let d = Domain::ball(1, 1.0, 64).unwrap();
    let dd = d.clone();
    let h = ScalarField::from_real_fn(d.clone(), move |i| dd.norm_sqr(i));
    let w = weight_from_h(h, 1, -0.5, floor_for(&d, 10.0)).unwrap();
    let theta = radial_bump(&d, 0.1, 0.2);
    let spec = BarrierSpec::new(&w, &theta, 0.25, None, 0.15).unwrap();
    assert_eq!(spec.ell, 3);
    assert_eq!(spec.q, vec![-0.25, 0.0, 0.25]);
    assert_eq!(spec.a, vec![1.0; 3]);
    assert!(BarrierSpec::new(&w, &theta, 0.25, Some(vec![1.0, -1.0, 1.0]), 0.15).is_err());
    assert!(BarrierSpec::new(&w, &theta, 0.25, Some(vec![1.0]), 0.15).is_err());
}

#[test]
fn green_subsolution_needs_no_correction() {
    // log h is harmonic off the pole and h^gamma is subharmonic.
    let w = green(128);
    let one = ScalarField::constant(w.domain().clone(), 1.0);
    let spec = BarrierSpec::new(&w, &one, default_gamma(&w.constants), None, 0.1).unwrap();
    let b = build_subsolution(&w, &spec, 1e-9).unwrap();
    assert_eq!(b.c_found, 0.0);
    assert_eq!(b.evaluations, 1);
    assert!(b.worst_margin >= -1e-9);
    let d = w.domain();
    let kq = KernelParams::new(spec.q[0]).unwrap();
    for i in b.field.stencil_nodes() {
        let hv = w.h.values()[i];
        assert!((b.field.values()[i] - (hv.ln() + kq.k_pos(hv))).abs() < 1e-12);
        assert!(!d.is_interior(i) || hv >= w.h_floor);
    }
}

#[test]
fn inadmissible_gamma_constant_blows_up() {
    // With gamma = delta the ladder cannot absorb the gradient of theta near
    // the pole, so the constant grows as the floor shrinks.
    let mut admissible = Vec::new();
    let mut violating = Vec::new();
    for &iv in &[128usize, 256] {
        let w = green(iv);
        let theta = tilted(w.domain());
        for (g, out) in [(0.405, &mut admissible), (1.0, &mut violating)] {
            let spec = BarrierSpec::new(&w, &theta, g, None, 0.1).unwrap();
            out.push(build_subsolution(&w, &spec, 1e-9).unwrap().c_found);
        }
    }
    assert_eq!(admissible, vec![0.0, 0.0]);
    assert!(violating[0] > 1.0);
    assert!(violating[1] > 2.0 * violating[0], "{violating:?}");
    let w = green(256);
    let spec = BarrierSpec::new(&w, &tilted(w.domain()), 1.0, None, 0.1).unwrap();
    match build_subsolution_with_cap(&w, &spec, 1e-9, 4.0) {
        Err(Error::SearchExhausted { c_max, worst_margin, .. }) => {
            assert_eq!(c_max, 4.0);
            assert!(worst_margin < 0.0);
        }
        other => panic!("expected exhaustion, got {other:?}"),
    }
}

#[test]
fn flat_c2_subsolution_is_two_subharmonic() {
    let d = Domain::ball(2, 1.0, 16).unwrap();
    let w = build_weight_with_floor(ModelSubmanifold::new(2, 2).unwrap(), 2, d.clone(), floor_for(&d, 2.0)).unwrap();
    let theta = radial_bump(&d, 0.4, 0.7);
    let spec = BarrierSpec::new(&w, &theta, 0.405, None, 0.5).unwrap();
    let b = build_subsolution(&w, &spec, 1e-9).unwrap();
    assert!(b.c_found > 0.0 && b.c_found < DEFAULT_C_MAX);
    for i in b.field.stencil_nodes() {
        let rep = is_m_positive(&complex_hessian(&b.field, i).unwrap(), 2, 1e-9).unwrap();
        assert!(rep.is_member, "node {i}: {rep:?}");
    }
    // Bisection leaves the constant within 2^-20 of the threshold.
    let below = b.field.map(|i, v| v - 1e-3 * b.c_found * d.rho(i));
    let fails = below
        .stencil_nodes()
        .into_iter()
        .any(|i| !is_m_positive(&complex_hessian(&below, i).unwrap(), 2, 1e-9).unwrap().is_member);
    assert!(fails);
}

#[test]
fn supersolution_examples() {
    let w = green(128);
    let d = w.domain().clone();
    let one = ScalarField::constant(d.clone(), 1.0);
    let s = build_supersolution(&w, &one, 0.405, 0.1, &EllipticFactors::Flat, 1e-9).unwrap();
    assert_eq!(s.c_found, 0.0);
    let zero = ScalarField::constant(d.clone(), 0.0);
    let s = build_supersolution(&w, &zero, 0.405, 0.1, &EllipticFactors::Flat, 1e-9).unwrap();
    assert_eq!(s.c_found, 0.0);
    // Larger a: more negative Laplacian, smaller constant.
    let theta = tilted(&d);
    let cs: Vec<f64> = [0.1, 0.5, 1.0, 2.0]
        .iter()
        .map(|&a| build_supersolution(&w, &theta, 0.405, a, &EllipticFactors::Flat, 1e-9).unwrap().c_found)
        .collect();
    assert!(cs[0] > 0.0, "{cs:?}");
    assert!(cs.windows(2).all(|p| p[1] <= p[0]), "{cs:?}");
    assert!(build_supersolution(&w, &theta, 0.405, 0.0, &EllipticFactors::Flat, 1e-9).is_err());
}

#[test]
fn superweight_examples() {
    let w = green(128);
    let d = w.domain().clone();
    let one = ScalarField::constant(d.clone(), 1.0);
    let s = build_supersolution(&w, &one, 0.405, 1.0, &EllipticFactors::Flat, 1e-9).unwrap();
    let t = superweight_shift(&s.field).unwrap();
    let psi_bar = s.field.map(|_, v| v + t);
    let rep = superweight_check(&psi_bar, &EllipticFactors::Flat, 1, 1e-9).unwrap();
    assert!(rep.passed, "{rep:?}");
    assert!(!rep.sublevel_empty);

    let dd = d.clone();
    let rho = ScalarField::from_real_fn(d.clone(), move |i| dd.rho(i));
    let rep = superweight_check(&rho, &EllipticFactors::Flat, 1, 1e-9).unwrap();
    assert!(rep.sublevel_empty && rep.sublevel_ok);
    assert!(!rep.operator_ok);

    let dd = d.clone();
    let bowl = ScalarField::from_real_fn(d.clone(), move |i| dd.norm_sqr(i) - 2.0);
    let rep = superweight_check(&bowl, &EllipticFactors::Flat, 1, 1e-9).unwrap();
    assert!(!rep.operator_ok && !rep.passed);
    assert!(!rep.sublevel_ok);
    assert!((rep.max_operator - 1.0).abs() < 1e-9);
}

#[test]
fn flat_c2_supersolution_passes_superweight_check() {
    let d = Domain::ball(2, 1.0, 16).unwrap();
    let w = build_weight_with_floor(ModelSubmanifold::new(2, 2).unwrap(), 2, d.clone(), floor_for(&d, 2.0)).unwrap();
    let theta = radial_bump(&d, 0.4, 0.7);
    let factors = corollary_factors(&w, w.constants.gamma_tilde).unwrap();
    let s = build_supersolution(&w, &theta, 0.405, 1.0, &factors, 1e-9).unwrap();
    let t = superweight_shift(&s.field).unwrap();
    let rep = superweight_check(&s.field.map(|_, v| v + t), &factors, 2, 1e-9).unwrap();
    assert!(rep.operator_ok, "{rep:?}");
    assert!(rep.sublevel_ok && rep.finite_ok);
}

#[test]
fn reports_round_trip_to_disk() {
    let w = green(32);
    let one = ScalarField::constant(w.domain().clone(), 1.0);
    let spec = BarrierSpec::new(&w, &one, 0.405, None, 0.2).unwrap();
    let b = build_subsolution(&w, &spec, 1e-9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_barrier_report(&b, dir.path(), "sub").unwrap();
    let kv = std::fs::read_to_string(dir.path().join("sub.txt")).unwrap();
    assert!(kv.contains("kind = subsolution"));
    assert!(kv.contains("c_found = 0"));
    let csv = std::fs::read_to_string(dir.path().join("sub_worst.csv")).unwrap();
    assert!(csv.starts_with("node,margin\n"));
    assert_eq!(csv.lines().count(), 33);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn larger_constants_keep_passing(extra in 0.0f64..50.0) {
        let d = Domain::ball(1, 1.0, 64).unwrap();
        let w = build_weight_with_floor(ModelSubmanifold::new(1, 1).unwrap(), 1, d.clone(), floor_for(&d, 2.0)).unwrap();
        let spec = BarrierSpec::new(&w, &tilted(&d), 1.0, None, 0.2).unwrap();
        let b = build_subsolution(&w, &spec, 1e-9).unwrap();
        let more = b.field.map(|i, v| v + extra * d.rho(i));
        for i in more.stencil_nodes() {
            let rep = is_m_positive(&complex_hessian(&more, i).unwrap(), 1, 1e-9).unwrap();
            prop_assert!(rep.is_member);
        }
    }
}
