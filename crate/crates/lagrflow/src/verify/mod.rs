//! The verifier: kinematics of φ = A(t)v(z) and the checks that decide
//! whether a flow map solves the Euler equations.
//!
//! Everything here recomputes from A (via its jets) and from the spatial
//! Jacobian; nothing is taken from the family's own claims except the
//! declared values it is checked against.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::expr::ExprError;
use crate::families::{FamilyError, FamilyId};
use crate::spatial::{minors_of_rows, two_forms_of_rows, SpatialComponent, SpatialError};
use crate::temporal::{invert_gauge, Declared, Mat3m, TemporalError, TimeComponent};

pub mod gauge;
pub mod identities;
pub mod invariants;
pub mod report;

pub use identities::{
    minor_lemma, omega_wedge_residual, plucker_residuals, MinorLemma, OmegaWedge,
};
pub use report::{
    constancy_report, CheckResult, Location, ReportOptions, Tolerances, VerificationReport,
};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("singular map at z = {z:?}: alpha = {alpha:.3e}")]
    SingularMap { z: [f64; 3], alpha: f64 },
    #[error("inversion of the flow map did not converge at x = {x:?} (residual {residual:.3e})")]
    NoConvergence { x: [f64; 3], residual: f64 },
    #[error("gauge: {0}")]
    Gauge(String),
    #[error("spatial component has m = {v}, time component has m = {t}")]
    Dimension { v: usize, t: usize },
}

/// Box of Lagrangian labels the checks sample, minus optional excluded boxes.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Domain {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Closed boxes `[lo, hi]` whose labels are skipped.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<[[f64; 3]; 2]>,
}

impl Default for Domain {
    fn default() -> Self {
        Domain {
            lo: [-1.0; 3],
            hi: [1.0; 3],
            exclude: Vec::new(),
        }
    }
}

impl Domain {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Domain {
        Domain {
            lo,
            hi,
            exclude: Vec::new(),
        }
    }

    pub fn edge(&self) -> f64 {
        (0..3).map(|d| self.hi[d] - self.lo[d]).fold(0.0, f64::max)
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|d| 0.5 * (self.lo[d] + self.hi[d]))
    }

    pub fn excluded(&self, z: &[f64; 3]) -> bool {
        self.exclude
            .iter()
            .any(|[lo, hi]| (0..3).all(|d| lo[d] <= z[d] && z[d] <= hi[d]))
    }

    /// n points per axis, endpoints included, excluded boxes removed.
    pub fn grid(&self, n: usize) -> Vec<[f64; 3]> {
        let ax = |d: usize, i: usize| {
            if n == 1 {
                0.5 * (self.lo[d] + self.hi[d])
            } else {
                self.lo[d] + (self.hi[d] - self.lo[d]) * i as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let z = [ax(0, i), ax(1, j), ax(2, k)];
                    if !self.excluded(&z) {
                        out.push(z);
                    }
                }
            }
        }
        out
    }

    /// n uniform labels from `seed`, inside the box shrunk by `f` about its center.
    pub fn random(&self, n: usize, f: f64, seed: u64) -> Vec<[f64; 3]> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c = self.center();
        let mut out = Vec::with_capacity(n);
        let mut tries = 0;
        while out.len() < n && tries < 1000 * n.max(1) {
            tries += 1;
            let z = [0, 1, 2].map(|d| {
                let (a, b) = (
                    c[d] + f * (self.lo[d] - c[d]),
                    c[d] + f * (self.hi[d] - c[d]),
                );
                if a < b {
                    rng.gen_range(a..=b)
                } else {
                    a
                }
            });
            if !self.excluded(&z) {
                out.push(z);
            }
        }
        out
    }
}

/// A, A′, A″ together with Q and p at one instant.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub a: Mat3m,
    pub ap: Mat3m,
    pub app: Mat3m,
    /// Q from the frame data (w, B, B′).
    pub q: BTreeMap<(usize, usize), f64>,
    /// Q directly from A′ᵀA.
    pub q_direct: BTreeMap<(usize, usize), f64>,
    pub p: BTreeMap<(usize, usize, usize), f64>,
    pub attitude: [f64; 4],
}

/// v, ∇v, g and G at one label.
#[derive(Clone, Debug)]
pub struct Point {
    pub z: [f64; 3],
    pub v: Vec<f64>,
    pub jac: Vec<[f64; 3]>,
    pub g: BTreeMap<(usize, usize, usize), f64>,
    pub gg: BTreeMap<(usize, usize), [f64; 3]>,
}

impl Point {
    pub fn new(v: &SpatialComponent, z: [f64; 3]) -> Result<Point, ExprError> {
        let jac = v.jacobian(&z)?;
        Ok(Point {
            z,
            v: v.eval(&z)?,
            g: minors_of_rows(&jac),
            gg: two_forms_of_rows(&jac),
            jac,
        })
    }
}

fn mat_vec(a: &Mat3m, v: &[f64]) -> [f64; 3] {
    [0, 1, 2].map(|r| a[r].iter().zip(v).map(|(x, y)| x * y).sum())
}

/// A·∇v as a 3×3 matrix (rows index the component of φ).
fn mat_jac(a: &Mat3m, jac: &[[f64; 3]]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| a[r].iter().zip(jac).map(|(x, g)| x * g[c]).sum())
}

/// α = Σ p_ijk g_ijk.
pub fn alpha_pg(s: &Snapshot, pt: &Point) -> f64 {
    s.p.iter().map(|(k, p)| p * pt.g[k]).sum()
}

/// h = Σ Q_ij G_ij.
pub fn h_qg(q: &BTreeMap<(usize, usize), f64>, pt: &Point) -> [f64; 3] {
    let mut h = [0.0; 3];
    for (k, qv) in q {
        let g = pt.gg[k];
        for d in 0..3 {
            h[d] += qv * g[d];
        }
    }
    h
}

/// The verifier's view of one flow map.
#[derive(Clone)]
pub struct FlowMap {
    pub family: Option<FamilyId>,
    pub tc: TimeComponent,
    pub v: SpatialComponent,
    /// The un-gauged normal form, when a gauge has been applied.
    base: Option<(TimeComponent, SpatialComponent)>,
    pub declared: Declared,
    pub constants: BTreeMap<String, f64>,
    pub domain: Domain,
}

impl FlowMap {
    pub fn new(tc: TimeComponent, v: SpatialComponent) -> FlowMap {
        FlowMap {
            family: None,
            tc,
            v,
            base: None,
            declared: Declared::default(),
            constants: BTreeMap::new(),
            domain: Domain::default(),
        }
    }

    pub fn m(&self) -> usize {
        self.v.m()
    }

    pub fn check_dimensions(&self) -> Result<(), VerifyError> {
        if self.v.m() != self.tc.m() {
            return Err(VerifyError::Dimension {
                v: self.v.m(),
                t: self.tc.m(),
            });
        }
        Ok(())
    }

    pub fn is_gauged(&self) -> bool {
        self.base.is_some()
    }

    /// The family normal form (A, v) before any gauge.
    pub fn normal_form(&self) -> (&TimeComponent, &SpatialComponent) {
        match &self.base {
            Some((t, v)) => (t, v),
            None => (&self.tc, &self.v),
        }
    }

    /// A → AH, v → H⁻¹v. φ is unchanged.
    pub fn with_gauge(&self, h: Vec<Vec<f64>>) -> Result<FlowMap, VerifyError> {
        let (h_inv, _) = invert_gauge(&h)?;
        let mut out = self.clone();
        out.tc = self.tc.with_gauge(h)?;
        out.v = self.v.gauged(&h_inv)?;
        out.base = Some(match &self.base {
            Some(b) => b.clone(),
            None => (self.tc.clone(), self.v.clone()),
        });
        Ok(out)
    }

    pub fn valid_horizon(&self) -> (f64, f64) {
        self.tc.valid_horizon()
    }

    pub fn snapshot(&self, t: f64) -> Result<Snapshot, VerifyError> {
        snapshot_of(&self.tc, t)
    }

    pub fn point(&self, z: [f64; 3]) -> Result<Point, VerifyError> {
        Ok(Point::new(&self.v, z)?)
    }

    pub fn position(&self, t: f64, z: &[f64; 3]) -> Result<[f64; 3], VerifyError> {
        Ok(mat_vec(&self.snapshot(t)?.a, &self.v.eval(z)?))
    }

    /// ∂φ/∂t at fixed label.
    pub fn lagrangian_velocity(&self, t: f64, z: &[f64; 3]) -> Result<[f64; 3], VerifyError> {
        Ok(mat_vec(&self.snapshot(t)?.ap, &self.v.eval(z)?))
    }

    pub fn lagrangian_acceleration(&self, t: f64, z: &[f64; 3]) -> Result<[f64; 3], VerifyError> {
        Ok(mat_vec(&self.snapshot(t)?.app, &self.v.eval(z)?))
    }

    /// dφ = A ∇v.
    pub fn deformation(&self, t: f64, z: &[f64; 3]) -> Result<Matrix3<f64>, VerifyError> {
        Ok(mat_jac(&self.snapshot(t)?.a, &self.v.jacobian(z)?))
    }

    /// α by both routes: (Σ p g, det dφ).
    pub fn alpha(&self, t: f64, z: &[f64; 3]) -> Result<(f64, f64), VerifyError> {
        let s = self.snapshot(t)?;
        let pt = self.point(*z)?;
        Ok((alpha_pg(&s, &pt), mat_jac(&s.a, &pt.jac).determinant()))
    }

    /// Cauchy invariants h = Σ Q_ij G_ij with Q from the frame.
    pub fn cauchy_invariants(&self, t: f64, z: &[f64; 3]) -> Result<[f64; 3], VerifyError> {
        Ok(h_qg(&self.snapshot(t)?.q, &self.point(*z)?))
    }

    /// Cauchy invariants Σ_k ∇(∂_tφ_k) × ∇φ_k with ∂_t A by central differences.
    pub fn cauchy_invariants_fd(&self, t: f64, z: &[f64; 3]) -> Result<[f64; 3], VerifyError> {
        let a = self.snapshot(t)?.a;
        let ap = fd_time_derivative(&self.tc, t)?;
        let jac = self.v.jacobian(z)?;
        let d = mat_jac(&a, &jac);
        let dp = mat_jac(&ap, &jac);
        let mut h = Vector3::zeros();
        for k in 0..3 {
            let gu = Vector3::new(dp[(k, 0)], dp[(k, 1)], dp[(k, 2)]);
            let gx = Vector3::new(d[(k, 0)], d[(k, 1)], d[(k, 2)]);
            h += gu.cross(&gx);
        }
        Ok([h[0], h[1], h[2]])
    }

    /// (x, ω(x)) with x = φ(z, t) and ω = dφ h / α.
    pub fn eulerian_vorticity_at(
        &self,
        t: f64,
        z: &[f64; 3],
    ) -> Result<([f64; 3], [f64; 3]), VerifyError> {
        let s = self.snapshot(t)?;
        let pt = self.point(*z)?;
        Ok((mat_vec(&s.a, &pt.v), vorticity_from(&s, &pt)))
    }

    /// Solve φ(z, t) = x by damped Newton.
    pub fn invert(
        &self,
        t: f64,
        x: &[f64; 3],
        hint: Option<[f64; 3]>,
    ) -> Result<[f64; 3], VerifyError> {
        let s = self.snapshot(t)?;
        invert_with(&s, &self.v, &self.domain, x, hint)
    }

    /// u(x, t) = A′ v(φ⁻¹(x)).
    pub fn eulerian_velocity(
        &self,
        t: f64,
        x: &[f64; 3],
        hint: Option<[f64; 3]>,
    ) -> Result<[f64; 3], VerifyError> {
        let s = self.snapshot(t)?;
        let z = invert_with(&s, &self.v, &self.domain, x, hint)?;
        Ok(mat_vec(&s.ap, &self.v.eval(&z)?))
    }

    pub fn eulerian_vorticity(
        &self,
        t: f64,
        x: &[f64; 3],
        hint: Option<[f64; 3]>,
    ) -> Result<[f64; 3], VerifyError> {
        let s = self.snapshot(t)?;
        let z = invert_with(&s, &self.v, &self.domain, x, hint)?;
        Ok(vorticity_from(&s, &self.point(z)?))
    }

    /// ∇p = −Du/Dt = −A″ v(φ⁻¹(x)).
    pub fn pressure_gradient(
        &self,
        t: f64,
        x: &[f64; 3],
        hint: Option<[f64; 3]>,
    ) -> Result<[f64; 3], VerifyError> {
        let s = self.snapshot(t)?;
        let z = invert_with(&s, &self.v, &self.domain, x, hint)?;
        Ok(mat_vec(&s.app, &self.v.eval(&z)?).map(|c| -c))
    }

    /// ∇u at x by central differences of the Eulerian velocity.
    pub fn fd_velocity_gradient(
        &self,
        t: f64,
        x: &[f64; 3],
        hint: [f64; 3],
        step: f64,
    ) -> Result<Matrix3<f64>, VerifyError> {
        self.fd_field_gradient(t, x, hint, step, |s| &s.ap)
    }

    /// Jacobian in x of the field M v(φ⁻¹(x)) for M ∈ {A′, A″}.
    fn fd_field_gradient(
        &self,
        t: f64,
        x: &[f64; 3],
        hint: [f64; 3],
        step: f64,
        which: impl Fn(&Snapshot) -> &Mat3m,
    ) -> Result<Matrix3<f64>, VerifyError> {
        let s = self.snapshot(t)?;
        let m = which(&s);
        let mut g = Matrix3::zeros();
        for c in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[c] += step;
            xm[c] -= step;
            let zp = invert_with(&s, &self.v, &self.domain, &xp, Some(hint))?;
            let zm = invert_with(&s, &self.v, &self.domain, &xm, Some(hint))?;
            let up = mat_vec(m, &self.v.eval(&zp)?);
            let um = mat_vec(m, &self.v.eval(&zm)?);
            for r in 0..3 {
                g[(r, c)] = (up[r] - um[r]) / (2.0 * step);
            }
        }
        Ok(g)
    }

    pub fn fd_curl(
        &self,
        t: f64,
        x: &[f64; 3],
        hint: [f64; 3],
        step: f64,
    ) -> Result<[f64; 3], VerifyError> {
        Ok(curl_of(&self.fd_velocity_gradient(t, x, hint, step)?))
    }

    /// Curl of ∇p = −A″v(φ⁻¹x) by central differences, with the norm of its Jacobian.
    pub fn fd_pressure_curl(
        &self,
        t: f64,
        x: &[f64; 3],
        hint: [f64; 3],
        step: f64,
    ) -> Result<([f64; 3], f64), VerifyError> {
        let g = -self.fd_field_gradient(t, x, hint, step, |s| &s.app)?;
        Ok((curl_of(&g), g.norm()))
    }

    pub fn fd_divergence(
        &self,
        t: f64,
        x: &[f64; 3],
        hint: [f64; 3],
        step: f64,
    ) -> Result<f64, VerifyError> {
        Ok(self.fd_velocity_gradient(t, x, hint, step)?.trace())
    }

    /// α keeps one sign (and stays away from zero) on the domain grid.
    pub fn alpha_sign_ok(&self) -> bool {
        let Ok(s) = self.snapshot(self.tc.t_ref()) else {
            return false;
        };
        let mut sign = 0.0;
        for z in self.domain.grid(5) {
            let Ok(pt) = self.point(z) else {
                return false;
            };
            let a = alpha_pg(&s, &pt);
            if !a.is_finite() || a.abs() < 1e-6 || (sign != 0.0 && a.signum() != sign) {
                return false;
            }
            sign = a.signum();
        }
        true
    }
}

fn curl_of(g: &Matrix3<f64>) -> [f64; 3] {
    [
        g[(2, 1)] - g[(1, 2)],
        g[(0, 2)] - g[(2, 0)],
        g[(1, 0)] - g[(0, 1)],
    ]
}

pub fn snapshot_of(tc: &TimeComponent, t: f64) -> Result<Snapshot, VerifyError> {
    let s = tc.eval(t)?;
    Ok(Snapshot {
        t,
        a: s.a_matrix(),
        ap: s.a_prime(),
        app: s.a_second(),
        q: s.q_from_frame(),
        q_direct: s.q_direct(),
        p: s.p_minors(),
        attitude: s.a.map(|j| j.v),
    })
}

/// ω = dφ h / α.
pub fn vorticity_from(s: &Snapshot, pt: &Point) -> [f64; 3] {
    let h = h_qg(&s.q, pt);
    let d = mat_jac(&s.a, &pt.jac);
    let alpha = alpha_pg(s, pt);
    let w = d * Vector3::new(h[0], h[1], h[2]) / alpha;
    [w[0], w[1], w[2]]
}

/// ∂A/∂t by second-order differences with step 1e−4 × (valid) horizon
/// length, one-sided at its edges.
pub fn fd_time_derivative(tc: &TimeComponent, t: f64) -> Result<Mat3m, VerifyError> {
    let (lo, hi) = tc.valid_horizon();
    let dt = 1e-4 * (hi - lo).abs().max(1e-12);
    let a = |t: f64| -> Result<Mat3m, VerifyError> { Ok(tc.eval(t)?.a_matrix()) };
    let comb = |terms: &[(f64, Mat3m)]| -> Mat3m {
        [0, 1, 2].map(|r| {
            (0..terms[0].1[r].len())
                .map(|c| terms.iter().map(|(k, m)| k * m[r][c]).sum::<f64>() / dt)
                .collect()
        })
    };
    if t - dt >= lo && t + dt <= hi {
        Ok(comb(&[(0.5, a(t + dt)?), (-0.5, a(t - dt)?)]))
    } else if t + 2.0 * dt <= hi {
        Ok(comb(&[
            (-1.5, a(t)?),
            (2.0, a(t + dt)?),
            (-0.5, a(t + 2.0 * dt)?),
        ]))
    } else {
        Ok(comb(&[
            (1.5, a(t)?),
            (-2.0, a(t - dt)?),
            (0.5, a(t - 2.0 * dt)?),
        ]))
    }
}

/// Labels at which Newton starts when no hint is given.
fn starts(domain: &Domain, s: &Snapshot, x: &[f64; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    // linear guess: treat v ≈ (z, 0, ..., 0)
    let a3 = Matrix3::from_fn(|r, c| s.a[r][c]);
    if let Some(inv) = a3.try_inverse() {
        let z = inv * Vector3::new(x[0], x[1], x[2]);
        out.push([z[0], z[1], z[2]]);
    }
    out.push(domain.center());
    out.extend(domain.grid(3));
    out
}

fn invert_with(
    s: &Snapshot,
    v: &SpatialComponent,
    domain: &Domain,
    x: &[f64; 3],
    hint: Option<[f64; 3]>,
) -> Result<[f64; 3], VerifyError> {
    let mut last = VerifyError::NoConvergence {
        x: *x,
        residual: f64::INFINITY,
    };
    let cands = match hint {
        Some(h) => vec![h],
        None => starts(domain, s, x),
    };
    for z0 in cands {
        match newton(s, v, x, z0) {
            Ok(z) => return Ok(z),
            Err(e @ VerifyError::SingularMap { .. }) if hint.is_some() => return Err(e),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Damped Newton on φ(z) = x: step halving until the residual drops,
/// stop when ‖Δz‖ ≤ 1e−12 (relative), at most 50 iterations.
fn newton(
    s: &Snapshot,
    v: &SpatialComponent,
    x: &[f64; 3],
    z0: [f64; 3],
) -> Result<[f64; 3], VerifyError> {
    let resid = |z: &[f64; 3]| -> Result<Vector3<f64>, VerifyError> {
        let p = mat_vec(&s.a, &v.eval(z)?);
        Ok(Vector3::new(p[0] - x[0], p[1] - x[1], p[2] - x[2]))
    };
    let scale = 1.0 + x.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let mut z = z0;
    let mut r = resid(&z)?;
    for _ in 0..50 {
        let jac = v.jacobian(&z)?;
        let g = minors_of_rows(&jac);
        let alpha: f64 = s.p.iter().map(|(k, p)| p * g[k]).sum();
        if alpha.abs() < 1e-10 {
            return Err(VerifyError::SingularMap { z, alpha });
        }
        let j = mat_jac(&s.a, &jac);
        let Some(dz) = j.lu().solve(&(-r)) else {
            return Err(VerifyError::SingularMap { z, alpha });
        };
        let mut lam = 1.0;
        let (mut zn, mut rn);
        loop {
            zn = [z[0] + lam * dz[0], z[1] + lam * dz[1], z[2] + lam * dz[2]];
            rn = match resid(&zn) {
                Ok(r) => r,
                Err(_) => Vector3::repeat(f64::INFINITY),
            };
            if rn.norm() < r.norm() || lam < 1e-6 || rn.norm() <= 1e-15 * scale {
                break;
            }
            lam *= 0.5;
        }
        let step = lam * dz.norm();
        z = zn;
        r = rn;
        let zs = 1.0 + z.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        if step <= 1e-12 * zs || r.norm() <= 1e-15 * scale {
            // one more full step at the root polishes the last bits
            if r.norm() <= 1e-9 * scale {
                return Ok(z);
            }
            break;
        }
    }
    let res = r.norm();
    if res <= 1e-11 * scale {
        return Ok(z);
    }
    Err(VerifyError::NoConvergence {
        x: *x,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{catalog::catalog, instantiate};
    use crate::temporal::SolveOptions;

    fn fm(id: FamilyId) -> FlowMap {
        instantiate(&catalog(id), &SolveOptions::default()).unwrap()
    }

    #[test]
    fn alpha_routes_agree() {
        let f = fm(FamilyId::M5Elliptic);
        for z in f.domain.grid(3) {
            let (a, b) = f.alpha(0.7, &z).unwrap();
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} {b}");
        }
    }

    #[test]
    fn cauchy_routes_agree() {
        let f = fm(FamilyId::M4);
        let z = [0.3, -0.2, 0.5];
        let h1 = f.cauchy_invariants(1.1, &z).unwrap();
        let h2 = f.cauchy_invariants_fd(1.1, &z).unwrap();
        for d in 0..3 {
            assert!((h1[d] - h2[d]).abs() < 1e-7, "{h1:?} {h2:?}");
        }
    }

    #[test]
    fn newton_round_trip() {
        let f = fm(FamilyId::M6HyperbolicI);
        let z = [0.2, -0.4, 0.7];
        let x = f.position(0.2, &z).unwrap();
        let back = f.invert(0.2, &x, None).unwrap();
        for d in 0..3 {
            assert!((back[d] - z[d]).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_counts() {
        let d = Domain::default();
        assert_eq!(d.grid(5).len(), 125);
        assert_eq!(d.grid(5)[0], [-1.0; 3]);
        assert_eq!(d.edge(), 2.0);
    }
}
