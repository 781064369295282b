//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.

use std::collections::BTreeMap;
use std::error::Error;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lagrflow::families::catalog::{catalog, random_admissible};
use lagrflow::families::{
    closed_form_vorticity, default_a0, exponential_law, instantiate, instantiate_perturbed,
    FamilyId, VorticityForm,
};
use lagrflow::rotations::{
    attitude_flow_matrix, integrate_attitude, integrate_attitude_unprojected, norm,
    symplectic_defect,
};
use lagrflow::temporal::{SolveOptions, TimeComponent};
use lagrflow::verify::gauge::{boost_m5, boost_parameters, random_gauge, shear_m4};
use lagrflow::verify::identities::plucker_max_relative;
use lagrflow::verify::invariants::{family_checks, hyperbolic_invariant, hyperbolic_lambda_rates};
use lagrflow::verify::report::{sample_times, Bound};
use lagrflow::verify::{
    constancy_report, h_qg, minor_lemma, omega_wedge_residual, plucker_residuals, vorticity_from,
    FlowMap, ReportOptions, Tolerances,
};

type Outcome = Result<(bool, String), Box<dyn Error>>;
type Criterion = (&'static str, fn() -> Outcome);

const SEEDS: [u64; 3] = [0, 1, 2];

fn tol() -> Tolerances {
    Tolerances::default()
}

fn rel3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    d / (1.0 + b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn catalog_map(id: FamilyId) -> Result<FlowMap, Box<dyn Error>> {
    Ok(instantiate(&catalog(id), &SolveOptions::default())?)
}

/// Random (t, z) pairs inside the valid horizon and the shrunken domain.
fn random_events(fm: &FlowMap, n: usize, seed: u64) -> Vec<(f64, [f64; 3])> {
    let (lo, hi) = fm.valid_horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    fm.domain
        .random(n, 0.8, seed)
        .into_iter()
        .map(|z| (rng.gen_range(lo..=hi), z))
        .collect()
}

fn c1_random_families() -> Outcome {
    let opts = ReportOptions::default();
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for id in FamilyId::ALL {
        for seed in SEEDS {
            match random_admissible(id, seed, &SolveOptions::default()) {
                Err(e) => bad.push(format!("{id}/{seed}: {e}")),
                Ok((_, fm)) => {
                    let r = constancy_report(&fm, &opts)?;
                    for n in ["alpha constancy", "vorticity constancy"] {
                        worst = worst.max(r.check(n).map_or(f64::NAN, |c| c.residual));
                    }
                    if !r.passed {
                        let names: Vec<_> = r.failures().iter().map(|c| c.name.clone()).collect();
                        bad.push(format!("{id}/{seed}: {}", names.join(", ")));
                    }
                }
            }
        }
    }
    let detail = format!("45 instances, worst alpha/h drift {worst:.1e} (tol 1e-6)");
    Ok((
        bad.is_empty(),
        if bad.is_empty() {
            detail
        } else {
            format!("{detail}; {}", bad.join("; "))
        },
    ))
}

fn c2_negative_control() -> Outcome {
    let opts = ReportOptions::default();
    let mut cases = 0;
    let mut weakest = f64::INFINITY;
    let mut bad = Vec::new();
    for id in FamilyId::ALL {
        let input = catalog(id);
        for name in id.descriptor().constants {
            // zero constants cannot be scaled; par-ext has none
            if input.constants.get(*name).is_none_or(|v| *v == 0.0) {
                continue;
            }
            let fm = match instantiate_perturbed(&input, name, 1.1, &SolveOptions::default()) {
                Ok(fm) => fm,
                // the perturbed keq1 constants can leave the m0 relation without a real root
                Err(_) if id == FamilyId::M6EllipticKeq1 => continue,
                Err(e) => return Err(e.into()),
            };
            cases += 1;
            let r = constancy_report(&fm, &opts)?;
            let signal = r
                .failures()
                .iter()
                .filter(|c| c.bound == Bound::AtMost)
                .map(|c| c.residual)
                .fold(0.0, f64::max);
            weakest = weakest.min(signal);
            if r.passed || signal <= 1e-3 {
                bad.push(format!("{id}/{name}: {signal:.1e}"));
            }
        }
    }
    let detail =
        format!("{cases} perturbations by 10%, smallest failing residual {weakest:.1e} (> 1e-3)");
    Ok((
        bad.is_empty(),
        if bad.is_empty() {
            detail
        } else {
            format!("{detail}; undetected {}", bad.join(", "))
        },
    ))
}

fn c3_plucker() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut exact_bad = 0;
    for _ in 0..1000 {
        let rows: [Vec<i128>; 3] =
            std::array::from_fn(|_| (0..6).map(|_| rng.gen_range(-9..=9)).collect());
        let lemma = minor_lemma(&rows);
        let lemma_zero = lemma.three_term == Some(0)
            && lemma.four_term == Some(0)
            && lemma.columns == Some([0; 3])
            && lemma.cubic == Some(0);
        if !lemma_zero || plucker_residuals(&rows).iter().any(|r| r.residual != 0) {
            exact_bad += 1;
        }
    }
    let mut float = 0.0f64;
    for _ in 0..1000 {
        let rows: [Vec<f64>; 3] =
            std::array::from_fn(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect());
        float = float
            .max(plucker_max_relative(&rows))
            .max(minor_lemma(&rows).max_relative(&rows));
    }
    let ok = exact_bad == 0 && float <= tol().plucker;
    Ok((
        ok,
        format!("integer: {exact_bad}/1000 nonzero; float: worst relative {float:.1e} (tol 1e-12)"),
    ))
}

fn c4_attitude() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut drift, mut projected, mut defect) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..5 {
        let amp: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let freq: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.1..3.0));
        let phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..6.3));
        let w = move |t: f64| std::array::from_fn(|i| amp[i] * (freq[i] * t + phase[i]).sin());
        let raw: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let a0 = raw.map(|x| x / norm(&raw));
        let free = integrate_attitude_unprojected(w, a0, 0.0, 10.0, 1e-12)?;
        let proj = integrate_attitude(w, a0, 0.0, 10.0, 1e-10)?;
        for i in 0..=400 {
            let t = 0.025 * i as f64;
            drift = drift.max((norm(&free.eval(t)?) - 1.0).abs());
            projected = projected.max((norm(&proj.eval(t)?) - 1.0).abs());
        }
        defect = defect.max(symplectic_defect(&attitude_flow_matrix(
            w, a0, 0.0, 10.0, 1e-10, 1e-3,
        )?));
    }
    let ok = drift <= tol().attitude && projected <= tol().attitude && defect <= 1e-6;
    Ok((
        ok,
        format!("5 random w over [0, 10]: |a| drift {drift:.1e} (projected {projected:.1e}), symplectic defect {defect:.1e}"),
    ))
}

fn c5_closed_form() -> Outcome {
    let t = tol();
    let (mut closed, mut fd, mut families) = (0.0f64, 0.0f64, 0);
    for id in FamilyId::ALL {
        let fm = catalog_map(id)?;
        if id.descriptor().vorticity == VorticityForm::ClosedForm {
            families += 1;
            for (time, z) in random_events(&fm, 200, 5) {
                let s = fm.snapshot(time)?;
                let pt = fm.point(z)?;
                let Some(h) = closed_form_vorticity(id, &fm.v, &fm.constants, &z)? else {
                    return Err(format!("{id}: no closed form at {z:?}").into());
                };
                closed = closed.max(rel3(&h, &h_qg(&s.q, &pt)));
            }
        }
        let step = 1e-4 * fm.domain.edge();
        for (time, z) in random_events(&fm, 20, 6) {
            let s = fm.snapshot(time)?;
            let pt = fm.point(z)?;
            let x = fm.position(time, &z)?;
            fd = fd.max(rel3(
                &fm.fd_curl(time, &x, z, step)?,
                &vorticity_from(&s, &pt),
            ));
        }
    }
    Ok((
        closed <= t.closed_form && fd <= t.fd,
        format!("{families} families x 200 points: closed vs generic {closed:.1e}; fd curl {fd:.1e} over 15 x 20"),
    ))
}

fn c6_hyperbolic_invariant() -> Outcome {
    let mut worst = 0.0f64;
    let mut maps = vec![catalog_map(FamilyId::M6HyperbolicI)?];
    for seed in SEEDS {
        maps.push(random_admissible(FamilyId::M6HyperbolicI, seed, &SolveOptions::default())?.1);
    }
    for fm in &maps {
        let (lo, hi) = fm.valid_horizon();
        for c in family_checks(
            FamilyId::M6HyperbolicI,
            &fm.tc,
            &fm.constants,
            &sample_times(lo, hi, 20),
        )? {
            worst = worst.max(c.residual);
        }
    }
    let (c1, c2) = (1.0, 2.0);
    let target = -8.0 * c1 * c2 * (c1 + c2);
    let tc = TimeComponent::solve(
        exponential_law(c1, c2),
        default_a0(),
        0.0,
        (0.0, 1.0),
        &SolveOptions::default(),
    )?;
    let mut example = 0.0f64;
    for time in sample_times(0.0, 1.0, 11) {
        let (l1, l2) = hyperbolic_lambda_rates(&tc, time)?;
        let q = tc.q_coefficients(time)?;
        let product = q[&(1, 6)] * q[&(2, 4)] * q[&(3, 5)];
        example = example
            .max((hyperbolic_invariant(l1, l2) - target).abs())
            .max((product - target).abs());
    }
    Ok((
        worst <= 1e-6 && example <= 1e-6,
        format!(
            "hyp-i over 4 instances {worst:.1e}; exponential example vs {target} {example:.1e}"
        ),
    ))
}

fn c7_symmetries() -> Outcome {
    let mut worst = 0.0f64;
    let mut seen = Vec::new();
    for id in [FamilyId::M6HyperbolicII, FamilyId::M6ParabolicMain] {
        let fm = catalog_map(id)?;
        let (lo, hi) = fm.valid_horizon();
        for c in family_checks(id, &fm.tc, &fm.constants, &sample_times(lo, hi, 20))? {
            if c.name.starts_with("symmetry") {
                worst = worst.max(c.residual);
                seen.push(c.name);
            }
        }
    }
    Ok((
        seen.len() == 2 && worst <= tol().closed_form,
        format!("{} maps, worst {worst:.1e} (tol 1e-8)", seen.len()),
    ))
}

fn c8_keq1_blowup() -> Outcome {
    let fm = catalog_map(FamilyId::M6EllipticKeq1)?;
    let r = constancy_report(&fm, &ReportOptions::default())?;
    let ok = r.truncated
        && !r.blowups.is_empty()
        && r.passed
        && r.valid_horizon.1 < r.requested_horizon.1;
    Ok((
        ok,
        format!(
            "requested [{}, {}], valid [{}, {:.4}], {} blow-up event(s), report {}",
            r.requested_horizon.0,
            r.requested_horizon.1,
            r.valid_horizon.0,
            r.valid_horizon.1,
            r.blowups.len(),
            if r.passed { "passes" } else { "fails" }
        ),
    ))
}

/// Worst relative difference in φ between two maps on random events.
fn phi_gap(a: &FlowMap, b: &FlowMap) -> Result<f64, Box<dyn Error>> {
    let mut worst = 0.0f64;
    for (time, z) in random_events(a, 50, 9) {
        worst = worst.max(rel3(&a.position(time, &z)?, &b.position(time, &z)?));
    }
    Ok(worst)
}

fn c9_gauge() -> Outcome {
    let opts = ReportOptions::default();
    let mut gap = 0.0f64;
    let mut verdicts = true;
    let mut pairs = Vec::new();

    let m4 = catalog_map(FamilyId::M4)?;
    let mut spoil = lagrflow::verify::gauge::identity(4);
    spoil[1][3] = 0.7;
    spoil[2][3] = -0.4;
    let general = m4.with_gauge(spoil)?;
    let p = general.snapshot(0.8)?.p;
    pairs.push((
        m4.clone(),
        general.with_gauge(shear_m4(p[&(1, 2, 4)], p[&(1, 3, 4)]))?,
    ));
    pairs.push((m4, general));

    let m5 = catalog_map(FamilyId::M5Elliptic)?;
    let general = m5.with_gauge(boost_m5(0.25, 0.6))?;
    let q = general.snapshot(0.5)?.q_direct;
    let (s, d) = boost_parameters(q[&(1, 2)], q[&(1, 4)], q[&(1, 5)])?;
    pairs.push((m5.clone(), general.with_gauge(boost_m5(s, d))?));
    pairs.push((m5, general));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for id in [
        FamilyId::M6HyperbolicI,
        FamilyId::M6ParabolicMain,
        FamilyId::M5Parabolic,
    ] {
        let fm = catalog_map(id)?;
        let h = random_gauge(fm.m(), 0.3, 20.0, &mut rng);
        let g = fm.with_gauge(h)?;
        pairs.push((fm, g));
    }
    for (a, b) in &pairs {
        gap = gap.max(phi_gap(a, b)?);
        let (ra, rb) = (constancy_report(a, &opts)?, constancy_report(b, &opts)?);
        verdicts &= ra.passed == rb.passed && ra.passed;
    }
    Ok((
        gap <= 1e-12 && verdicts,
        format!(
            "shear, boost and 3 random gauges: phi gap {gap:.1e} (tol 1e-12), verdicts {}",
            if verdicts { "unchanged" } else { "changed" }
        ),
    ))
}

fn c10_kirchhoff() -> Outcome {
    let mut worst = 0.0f64;
    let mut maps = vec![catalog_map(FamilyId::M3Kirchhoff)?];
    for seed in SEEDS {
        maps.push(random_admissible(FamilyId::M3Kirchhoff, seed, &SolveOptions::default())?.1);
    }
    for fm in &maps {
        for (time, z) in random_events(fm, 100, 10) {
            let s = fm.snapshot(time)?;
            let a = Matrix3::from_fn(|r, c| s.a[r][c]);
            let ap = Matrix3::from_fn(|r, c| s.ap[r][c]);
            let inv = a.try_inverse().ok_or("singular A")?;
            let x = fm.position(time, &z)?;
            let want = ap * inv * Vector3::from(x);
            let u = fm.eulerian_velocity(time, &x, None)?;
            worst = worst.max(rel3(&u, &[want[0], want[1], want[2]]));
        }
    }
    Ok((
        worst <= tol().spatial,
        format!("4 instances x 100 points: {worst:.1e} (tol 1e-10)"),
    ))
}

fn c11_omega_wedge() -> Outcome {
    let (mut shuffle, mut det, mut n) = (0.0f64, 0.0f64, 0);
    for id in FamilyId::ALL.into_iter().filter(|f| f.descriptor().m >= 5) {
        n += 1;
        let fm = catalog_map(id)?;
        let (lo, hi) = fm.valid_horizon();
        for time in sample_times(lo, hi, 20) {
            let s = fm.snapshot(time)?;
            let w = omega_wedge_residual(&s.q, &s.p, &s.a, &s.ap);
            shuffle = shuffle.max(w.shuffle);
            det = det.max(w.determinant);
        }
    }
    Ok((
        shuffle <= tol().wedge && det <= tol().wedge,
        format!("{n} families: shuffle {shuffle:.1e}, determinant {det:.1e} (tol 1e-10)"),
    ))
}

fn c12_round_trip() -> Outcome {
    let mut worst = 0.0f64;
    let mut label = BTreeMap::new();
    for id in FamilyId::ALL {
        let fm = catalog_map(id)?;
        let (lo, hi) = fm.valid_horizon();
        let zs = fm.domain.random(100, 0.8, 12);
        for time in sample_times(lo, hi, 3) {
            for z in &zs {
                let x = fm.position(time, z)?;
                let back = fm.invert(time, &x, None)?;
                let again = fm.position(time, &back)?;
                worst = worst.max((0..3).map(|d| (again[d] - x[d]).abs()).fold(0.0, f64::max));
                let dz = (0..3).map(|d| (back[d] - z[d]).abs()).fold(0.0, f64::max);
                let e = label.entry(id).or_insert(0.0f64);
                *e = e.max(dz);
            }
        }
    }
    let worst_label = label.values().fold(0.0f64, |a, b| a.max(*b));
    Ok((
        worst <= tol().round_trip,
        format!("15 families x 100 labels x 3 times: |phi(inv(x)) - x| {worst:.1e} (tol 1e-9), label error {worst_label:.1e}"),
    ))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("random admissible families", c1_random_families),
        ("negative control", c2_negative_control),
        ("plucker and minor identities", c3_plucker),
        ("attitude norm and symplecticity", c4_attitude),
        ("closed-form and fd vorticity", c5_closed_form),
        ("hyperbolic invariant", c6_hyperbolic_invariant),
        ("discrete symmetries", c7_symmetries),
        ("keq1 blow-up truncation", c8_keq1_blowup),
        ("gauge invariance", c9_gauge),
        ("kirchhoff velocity", c10_kirchhoff),
        ("omega-wedge", c11_omega_wedge),
        ("inversion round trip", c12_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!ok);
        println!(
            "[{}] criterion {:>2}: {name}: {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("acceptance: {}/12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
