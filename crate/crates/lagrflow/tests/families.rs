use lagrflow::families::catalog::catalog;
use lagrflow::families::{
    build_spatial_for, closed_form_vorticity, default_a0, exponential_law, instantiate,
    instantiate_perturbed, validate_constants, FamilyError, FamilyId, FamilyInput,
};
use lagrflow::temporal::{SolveOptions, TimeComponent};
use lagrflow::verify::report::sample_times;
use lagrflow::verify::{constancy_report, h_qg, FlowMap, ReportOptions};

fn build(input: &FamilyInput) -> FlowMap {
    instantiate(input, &SolveOptions::default()).unwrap()
}

fn with(id: FamilyId, constants: &[(&str, f64)], functions: &[(&str, &str)]) -> FamilyInput {
    let mut input = catalog(id);
    for (k, v) in constants {
        input.constants.insert(k.to_string(), *v);
    }
    for (k, v) in functions {
        input.functions.insert(k.to_string(), v.to_string());
    }
    input
}

fn close(a: &[f64; 3], b: &[f64; 3], tol: f64) {
    for i in 0..3 {
        assert!(
            (a[i] - b[i]).abs() <= tol * (1.0 + b[i].abs()),
            "{a:?} vs {b:?}"
        );
    }
}

/// The fixed exponential matrix with c1 = 1, c2 = 2 and v = (z, z1², z2², z3²).
fn exponential_example() -> FlowMap {
    let tc = TimeComponent::solve(
        exponential_law(1.0, 2.0),
        default_a0(),
        0.0,
        (0.0, 1.0),
        &SolveOptions::default(),
    )
    .unwrap();
    let input = with(
        FamilyId::M6HyperbolicI,
        &[],
        &[("f1", "z1^2"), ("f2", "z2^2"), ("f3", "z3^2")],
    );
    FlowMap::new(
        tc,
        build_spatial_for(FamilyId::M6HyperbolicI, &input).unwrap(),
    )
}

#[test]
fn m4_q14_is_c14_and_alpha_is_one() {
    let fm = build(&catalog(FamilyId::M4));
    let c14 = fm.constants["c14"];
    for t in sample_times(0.0, 2.0, 9) {
        assert!((fm.snapshot(t).unwrap().q_direct[&(1, 4)] - c14).abs() < 1e-10);
        for z in fm.domain.random(10, 1.0, 7) {
            let (alpha, _) = fm.alpha(t, &z).unwrap();
            assert!((alpha - 1.0).abs() < 1e-10, "alpha = {alpha}");
        }
    }
}

#[test]
fn m5_elliptic_normal_form_minors() {
    let fm = build(&catalog(FamilyId::M5Elliptic));
    for t in sample_times(0.0, 2.0, 11) {
        let p = fm.snapshot(t).unwrap().p;
        assert!((p[&(1, 2, 3)] - 1.0).abs() < 1e-10);
        assert!((p[&(3, 4, 5)] - 1.0).abs() < 1e-10);
        assert!((p[&(1, 3, 4)] - p[&(2, 3, 5)]).abs() < 1e-10);
        assert!((p[&(1, 3, 5)] + p[&(2, 3, 4)]).abs() < 1e-10);
    }
}

#[test]
fn m5_elliptic_unit_b11_rotates_uniformly() {
    let fm = build(&with(
        FamilyId::M5Elliptic,
        &[("c12", 2.0)],
        &[("b11", "1")],
    ));
    for t in [0.0, 0.4, 1.3] {
        let s = fm.tc.eval(t).unwrap();
        let theta = s.y[0].v;
        assert!((theta + 2.0 * t).abs() < 1e-10, "theta({t}) = {theta}");
        assert!((s.w[2].v - 2.0).abs() < 1e-12);
        assert!((fm.snapshot(t).unwrap().q_direct[&(1, 2)] - 2.0).abs() < 1e-10);
    }
}

#[test]
fn m6_hyperbolic_alpha_matches_determinant_formula() {
    let fm = build(&catalog(FamilyId::M6HyperbolicI));
    let d1 = |z: f64| 0.6 * z + 0.5;
    let d2 = |z: f64| 0.4 * z.cos();
    let d3 = |z: f64| 0.25 * (z / 2.0).exp();
    for z in fm.domain.random(100, 1.0, 11) {
        let (alpha, _) = fm.alpha(0.1, &z).unwrap();
        let want = 1.0 + d1(z[0]) * d2(z[1]) * d3(z[2]);
        assert!((alpha - want).abs() < 1e-10, "{alpha} vs {want}");
    }
}

#[test]
fn exponential_example_q_vorticity_and_pressure() {
    let fm = exponential_example();
    for t in [0.0, 0.3, 1.0] {
        let q = fm.snapshot(t).unwrap().q_direct;
        for (k, v) in &q {
            let want = match k {
                (1, 6) => 2.0,
                (2, 4) => 4.0,
                (3, 5) => -6.0,
                _ => 0.0,
            };
            assert!((v - want).abs() < 1e-10, "Q{k:?} = {v}");
        }
    }
    let h = fm.cauchy_invariants(0.5, &[1.0, 1.0, 1.0]).unwrap();
    close(&h, &[12.0, -4.0, -8.0], 1e-10);

    let (c1, c2) = (1.0f64, 2.0f64);
    let c3 = c1 + c2;
    for (t, z) in [(0.2, [0.3, -0.5, 0.7]), (0.9, [-0.6, 0.1, 0.4])] {
        let x = fm.position(t, &z).unwrap();
        let gp = fm.pressure_gradient(t, &x, Some(z)).unwrap();
        let want = [
            -c1 * c1 * ((c1 * t).exp() * z[0] + (-c1 * t).exp() * z[2] * z[2]),
            -c2 * c2 * ((c2 * t).exp() * z[1] + (-c2 * t).exp() * z[0] * z[0]),
            -c3 * c3 * ((-c3 * t).exp() * z[2] + (c3 * t).exp() * z[1] * z[1]),
        ];
        close(&gp, &want, 1e-9);
    }
}

#[test]
fn closed_form_examples() {
    let m4 = build(&with(FamilyId::M4, &[], &[("f", "z2*z3")]));
    let c = |n: &str| m4.constants[n];
    let h = closed_form_vorticity(FamilyId::M4, &m4.v, &m4.constants, &[0.0, 1.0, 2.0])
        .unwrap()
        .unwrap();
    let want = [
        c("c24") - 2.0 * c("c34") + c("c23"),
        -c("c14") - c("c13"),
        2.0 * c("c14") + c("c12"),
    ];
    close(&h, &want, 1e-12);

    let hyp = build(&with(FamilyId::M6HyperbolicI, &[], &[("f2", "z2^2")]));
    let h = closed_form_vorticity(
        FamilyId::M6HyperbolicI,
        &hyp.v,
        &hyp.constants,
        &[0.2, 1.0, -0.3],
    )
    .unwrap()
    .unwrap();
    assert!((h[0] + 2.0 * hyp.constants["c35"]).abs() < 1e-12);

    let m5 = build(&with(
        FamilyId::M5Hyperbolic,
        &[("c15", 1.0)],
        &[("f1", "z1*z3"), ("f2", "z2*z3")],
    ));
    let z = [1.0, 1.0, 0.0];
    let h = closed_form_vorticity(FamilyId::M5Hyperbolic, &m5.v, &m5.constants, &z)
        .unwrap()
        .unwrap();
    close(&h, &[-1.0, -1.0, 0.0], 1e-12);
    close(
        &h,
        &h_qg(&m5.snapshot(0.3).unwrap().q, &m5.point(z).unwrap()),
        1e-12,
    );
}

#[test]
fn m5_elliptic_vorticity_formula() {
    // holo = z3·ζ gives f1 = z1 z3, f2 = −z2 z3
    let fm = build(&with(FamilyId::M5Elliptic, &[], &[("holo", "z3*zeta")]));
    let c12 = fm.constants["c12"];
    for z in fm.domain.random(20, 1.0, 4) {
        let (f1x, f1y, f1z, f2z) = (z[2], 0.0, z[0], -z[1]);
        let want = [
            c12 * (-f1x * f1z - f1y * f2z),
            c12 * (f1x * f2z - f1y * f1z),
            c12 * (f1x * f1x + f1y * f1y + 1.0),
        ];
        let h = closed_form_vorticity(FamilyId::M5Elliptic, &fm.v, &fm.constants, &z)
            .unwrap()
            .unwrap();
        close(&h, &want, 1e-12);
        close(&fm.cauchy_invariants(0.7, &z).unwrap(), &want, 1e-9);
    }
}

#[test]
fn kirchhoff_vorticity_is_uniform_in_space() {
    let fm = build(&catalog(FamilyId::M3Kirchhoff));
    let c = |n: &str| fm.constants[n];
    let h = [c("c23"), -c("c13"), c("c12")];
    for t in [0.0, 1.1] {
        let mut first = None;
        for z in fm.domain.random(10, 0.8, 2) {
            close(&fm.cauchy_invariants(t, &z).unwrap(), &h, 1e-10);
            let x = fm.position(t, &z).unwrap();
            let w = fm.eulerian_vorticity(t, &x, Some(z)).unwrap();
            close(&w, first.get_or_insert(w), 1e-10);
        }
    }
}

#[test]
fn trig_matrix_at_zero() {
    let fm = build(&catalog(FamilyId::M6EllipticExt));
    let a = fm.snapshot(0.0).unwrap().a;
    let want = [
        [1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    ];
    for r in 0..3 {
        for c in 0..6 {
            assert!((a[r][c] - want[r][c]).abs() < 1e-14);
        }
    }
}

#[test]
fn two_perhe_example_matches_declared_table() {
    let input = with(
        FamilyId::M6Parabolic2,
        &[
            ("k1", 0.0),
            ("k2", 1.0),
            ("k3", 1.0),
            ("k4", 1.0),
            ("k5", 1.0),
            ("k6", 0.0),
            ("k7", 0.0),
        ],
        &[],
    );
    assert_eq!(input.horizon, (0.5, 2.0));
    let r = constancy_report(&build(&input), &ReportOptions::default()).unwrap();
    assert!(r.worst_declared() <= 1e-8, "{}", r.worst_declared());
    assert!(r.passed);
}

#[test]
fn keq1_relation_violation_is_named() {
    let mut constants = validate_constants(
        FamilyId::M6EllipticKeq1,
        &catalog(FamilyId::M6EllipticKeq1).constants,
    )
    .unwrap();
    *constants.get_mut("m0").unwrap() += 0.1;
    match validate_constants(FamilyId::M6EllipticKeq1, &constants) {
        Err(e @ FamilyError::Relation { .. }) => assert!(e.to_string().contains("m0")),
        other => panic!("expected a relation error, got {other:?}"),
    }
}

#[test]
fn corrupted_c12_fails_m5_elliptic() {
    let fm = instantiate_perturbed(
        &catalog(FamilyId::M5Elliptic),
        "c12",
        1.1,
        &SolveOptions::default(),
    )
    .unwrap();
    let r = constancy_report(&fm, &ReportOptions::default()).unwrap();
    assert!(!r.passed);
    let q12 = r.check("declared Q12").unwrap();
    assert!(!q12.passed && q12.residual > 1e-3);
}

#[test]
fn every_catalog_instance_passes() {
    for id in FamilyId::ALL {
        let r = constancy_report(&build(&catalog(id)), &ReportOptions::default()).unwrap();
        assert!(r.passed, "{id}: {:?}", r.failures());
    }
}
