//! The constancy report: every check on a grid of labels and times.

use serde::{Deserialize, Serialize};

use super::identities::{minor_lemma, omega_wedge_residual, plucker_max_relative};
use super::invariants::family_checks;
use super::{
    alpha_pg, fd_time_derivative, h_qg, mat_jac, snapshot_of, vorticity_from, FlowMap, Point,
    VerifyError,
};
use crate::families::closed_form_vorticity;
use crate::spatial::side_residuals;
use crate::temporal::{BlowUp, Mat3m};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// α and h constancy in time
    pub invariant: f64,
    pub declared: f64,
    pub spatial: f64,
    pub side: f64,
    pub wedge: f64,
    pub plucker: f64,
    pub attitude: f64,
    pub closed_form: f64,
    pub fd: f64,
    pub round_trip: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            invariant: 1e-6,
            declared: 1e-8,
            spatial: 1e-10,
            side: 1e-8,
            wedge: 1e-10,
            plucker: 1e-12,
            attitude: 1e-9,
            closed_form: 1e-8,
            fd: 1e-4,
            round_trip: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportOptions {
    pub n_space: usize,
    pub n_time: usize,
    /// Labels used for the finite-difference and inversion checks (0 disables them).
    pub fd_points: usize,
    pub seed: u64,
    pub tol: Tolerances,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            n_space: 5,
            n_time: 20,
            fd_points: 6,
            seed: 1,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// pass when residual ≤ tolerance
    AtMost,
    /// pass when residual ≥ tolerance
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Where a check attained its worst residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Location {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

/// Running maximum with its location.
#[derive(Clone, Copy, Debug, Default)]
struct Worst {
    r: f64,
    at: Location,
}

impl Worst {
    fn see(&mut self, r: f64, z: Option<[f64; 3]>, t: Option<f64>) {
        if r > self.r || (r.is_nan() && !self.r.is_nan()) {
            self.r = r;
            self.at = Location { z, t };
        }
    }

    fn check(&self, name: impl Into<String>, tol: f64) -> CheckResult {
        let mut c = CheckResult::at_most(name, self.r, tol);
        c.location = Some(self.at);
        c
    }
}

impl CheckResult {
    pub fn at_most(name: impl Into<String>, residual: f64, tolerance: f64) -> CheckResult {
        CheckResult {
            name: name.into(),
            residual,
            tolerance,
            bound: Bound::AtMost,
            passed: residual.is_finite() && residual <= tolerance,
            location: None,
            detail: None,
        }
    }

    pub fn at_least(name: impl Into<String>, residual: f64, tolerance: f64) -> CheckResult {
        CheckResult {
            name: name.into(),
            residual,
            tolerance,
            bound: Bound::AtLeast,
            passed: residual.is_finite() && residual >= tolerance,
            location: None,
            detail: None,
        }
    }

    fn with_detail(mut self, d: impl Into<String>) -> CheckResult {
        self.detail = Some(d.into());
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub family: Option<String>,
    pub m: usize,
    pub gauged: bool,
    pub requested_horizon: (f64, f64),
    pub valid_horizon: (f64, f64),
    pub truncated: bool,
    pub blowups: Vec<BlowUp>,
    pub grid_points: usize,
    pub times: usize,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Largest residual among the declared Q/p checks.
    pub fn worst_declared(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with("declared "))
            .map(|c| c.residual)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn rel3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    d / (1.0 + (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt())
}

/// Q_ij from an arbitrary A′ (e.g. a finite-difference one).
fn q_of(a: &Mat3m, ap: &Mat3m) -> std::collections::BTreeMap<(usize, usize), f64> {
    let m = a[0].len();
    let mut out = std::collections::BTreeMap::new();
    for i in 0..m {
        for j in i + 1..m {
            let q: f64 = (0..3)
                .map(|r| ap[r][i] * a[r][j] - ap[r][j] * a[r][i])
                .sum();
            out.insert((i + 1, j + 1), q);
        }
    }
    out
}

pub fn sample_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi == lo {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Run every check on the flow map.
pub fn constancy_report(
    fm: &FlowMap,
    opts: &ReportOptions,
) -> Result<VerificationReport, VerifyError> {
    fm.check_dimensions()?;
    let tol = &opts.tol;
    let (lo, hi) = fm.valid_horizon();
    let times = sample_times(lo, hi, opts.n_time);
    let t_ref = fm.tc.t_ref();
    let (base_tc, base_v) = fm.normal_form();
    let labels = fm.domain.grid(opts.n_space);
    let pts: Vec<Point> = labels
        .iter()
        .map(|z| fm.point(*z))
        .collect::<Result<_, _>>()?;
    let mut checks = Vec::new();

    let s_ref = fm.snapshot(t_ref)?;
    let alpha_ref: Vec<f64> = pts.iter().map(|p| alpha_pg(&s_ref, p)).collect();
    let h_ref: Vec<[f64; 3]> = pts.iter().map(|p| h_qg(&s_ref.q, p)).collect();

    let mut alpha_const = Worst::default();
    let mut alpha_routes = Worst::default();
    let mut alpha_min = (f64::INFINITY, Location::default());
    let mut alpha_sign_flip = false;
    let mut h_const = Worst::default();
    let mut h_direct = Worst::default();
    let mut h_fd = Worst::default();
    let mut plucker = Worst::default();
    let mut lemma = Worst::default();
    let mut wedge = (Worst::default(), Worst::default());
    let mut attitude = Worst::default();
    let mut declared_q = vec![Worst::default(); fm.declared.q.len()];
    let mut declared_p = vec![Worst::default(); fm.declared.p.len()];

    let sign0 = alpha_ref.first().copied().unwrap_or(1.0).signum();
    for &t in &times {
        let s = fm.snapshot(t)?;
        let ap_fd = fd_time_derivative(&fm.tc, t)?;
        let q_fd = q_of(&s.a, &ap_fd);
        for (k, p) in pts.iter().enumerate() {
            let (z, tt) = (Some(p.z), Some(t));
            let a = alpha_pg(&s, p);
            alpha_const.see(rel(a, alpha_ref[k]), z, tt);
            alpha_routes.see(rel(mat_jac(&s.a, &p.jac).determinant(), a), z, tt);
            if a.abs() < alpha_min.0 {
                alpha_min = (a.abs(), Location { z, t: tt });
            }
            if a.signum() != sign0 {
                alpha_sign_flip = true;
            }
            let h = h_qg(&s.q, p);
            h_const.see(rel3(&h, &h_ref[k]), z, tt);
            h_direct.see(rel3(&h_qg(&s.q_direct, p), &h), z, tt);
            h_fd.see(rel3(&h_qg(&q_fd, p), &h), z, tt);
        }
        plucker.see(plucker_max_relative(&s.a), None, Some(t));
        lemma.see(minor_lemma(&s.a).max_relative(&s.a), None, Some(t));
        if fm.m() >= 5 {
            let w = omega_wedge_residual(&s.q, &s.p, &s.a, &s.ap);
            wedge.0.see(w.shuffle, None, Some(t));
            wedge.1.see(w.determinant, None, Some(t));
        }
        let raw = fm.tc.raw_attitude(t)?;
        attitude.see(
            (raw.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs(),
            None,
            Some(t),
        );

        let sb = if fm.is_gauged() {
            snapshot_of(base_tc, t)?
        } else {
            s.clone()
        };
        for (slot, c) in declared_q.iter_mut().zip(&fm.declared.q) {
            slot.see(rel(c.eval_q(&sb.q), c.value), None, Some(t));
        }
        for (slot, c) in declared_p.iter_mut().zip(&fm.declared.p) {
            slot.see(rel(c.eval_p(&sb.p), c.value), None, Some(t));
        }
    }

    checks.push(alpha_const.check("alpha constancy", tol.invariant));
    checks.push(alpha_routes.check("alpha routes (p.g vs det)", tol.declared));
    let mut nonvanishing = CheckResult::at_least(
        "alpha nonvanishing (min |alpha|)",
        if alpha_sign_flip { 0.0 } else { alpha_min.0 },
        1e-10,
    )
    .with_detail(if alpha_sign_flip {
        "alpha changes sign"
    } else {
        "alpha keeps one sign"
    });
    nonvanishing.location = Some(alpha_min.1);
    checks.push(nonvanishing);
    checks.push(h_const.check("vorticity constancy", tol.invariant));
    checks.push(h_direct.check("vorticity routes (frame vs A'A)", tol.declared));
    checks.push(h_fd.check("vorticity routes (frame vs time FD)", tol.invariant));
    checks.push(plucker.check("plucker relations", tol.plucker));
    if fm.m() >= 4 {
        checks.push(lemma.check("minor identities", tol.plucker));
    }
    checks.push(attitude.check("attitude norm", tol.attitude));
    if fm.m() >= 5 {
        checks.push(wedge.0.check("omega-wedge (shuffle)", tol.wedge));
        checks.push(wedge.1.check("omega-wedge (determinant)", tol.wedge));
    }
    for (c, r) in fm.declared.q.iter().zip(&declared_q) {
        checks.push(r.check(format!("declared {}", c.label), tol.declared));
    }
    for (c, r) in fm.declared.p.iter().zip(&declared_p) {
        checks.push(r.check(format!("declared {}", c.label), tol.declared));
    }

    // spatial structure of the normal form
    for (label, r) in base_v.constraint_residuals(&labels)? {
        checks.push(CheckResult::at_most(
            format!("spatial {label}"),
            r,
            tol.spatial,
        ));
    }
    if !base_v.side_conditions.is_empty() {
        for (label, r) in side_residuals(&base_v.side_conditions, &labels)? {
            checks.push(CheckResult::at_most(
                format!("side condition {label}"),
                r,
                tol.side,
            ));
        }
    }
    if let Some(det) = &base_v.det_formula {
        let mut ratio0 = None;
        let mut spread = 0.0f64;
        for (k, z) in labels.iter().enumerate() {
            let d = det.at_z(z)?;
            let r = alpha_ref[k] / d;
            match ratio0 {
                None => ratio0 = Some(r),
                Some(r0) => spread = spread.max(rel(r, r0)),
            }
        }
        checks.push(CheckResult::at_most(
            "alpha proportional to det formula",
            spread,
            tol.invariant,
        ));
    }

    if let Some(id) = fm.family {
        let mut cf = None;
        for (k, z) in labels.iter().enumerate() {
            if let Some(h) = closed_form_vorticity(id, base_v, &fm.constants, z)? {
                cf = Some(cf.unwrap_or(0.0f64).max(rel3(&h, &h_ref[k])));
            }
        }
        if let Some(r) = cf {
            checks.push(CheckResult::at_most(
                "closed-form vorticity",
                r,
                tol.closed_form,
            ));
        }
        for c in family_checks(id, base_tc, &fm.constants, &times)? {
            checks.push(CheckResult::at_most(c.name, c.residual, c.tolerance));
        }
    }

    if opts.fd_points > 0 {
        let step = 1e-4 * fm.domain.edge();
        let zs = fm.domain.random(opts.fd_points, 0.8, opts.seed);
        let ts = sample_times(lo, hi, 3);
        let (mut curl, mut div, mut trip, mut dp) = (
            Worst::default(),
            Worst::default(),
            Worst::default(),
            Worst::default(),
        );
        for &t in &ts {
            let s = fm.snapshot(t)?;
            for z in &zs {
                let pt = fm.point(*z)?;
                let x = super::mat_vec(&s.a, &pt.v);
                let (zz, tt) = (Some(*z), Some(t));
                let w = vorticity_from(&s, &pt);
                let c = fm.fd_curl(t, &x, *z, step)?;
                curl.see(rel3(&c, &w), zz, tt);
                let g = fm.fd_velocity_gradient(t, &x, *z, step)?;
                div.see(g.trace().abs() / (1.0 + g.norm()), zz, tt);
                let (pc, pn) = fm.fd_pressure_curl(t, &x, *z, step)?;
                dp.see(
                    pc.iter().fold(0.0f64, |a, c| a.max(c.abs())) / (1.0 + pn),
                    zz,
                    tt,
                );
                let back = fm.invert(t, &x, None)?;
                let p_back = super::mat_vec(&s.a, &fm.v.eval(&back)?);
                trip.see(
                    (0..3).map(|d| (p_back[d] - x[d]).abs()).fold(0.0, f64::max),
                    zz,
                    tt,
                );
            }
        }
        checks.push(curl.check("fd curl of velocity vs vorticity", tol.fd));
        checks.push(div.check("fd divergence of velocity", tol.fd));
        checks.push(dp.check("fd curl of pressure gradient", tol.fd));
        checks.push(trip.check("inversion round trip", tol.round_trip));
    }

    let passed = checks.iter().all(|c| c.passed);
    let (r0, r1) = fm.tc.requested_horizon();
    Ok(VerificationReport {
        family: fm.family.map(|f| f.to_string()),
        m: fm.m(),
        gauged: fm.is_gauged(),
        requested_horizon: (r0, r1),
        valid_horizon: (lo, hi),
        truncated: lo > r0 || hi < r1,
        blowups: fm.tc.blowups().to_vec(),
        grid_points: labels.len(),
        times: times.len(),
        checks,
        passed,
    })
}
