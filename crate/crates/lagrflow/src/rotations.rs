//! Euler-parameter rotation algebra and the attitude equation.
//!
//! For a = (a0, a1, a2, a3) the 3×4 matrices H̃_a, H_a and the 4×4 matrices
//! K̃_a, K_a are fixed linear functions of a, and R_a = H̃_a H_aᵀ. The attitude
//! equation is a′ = ¼ K̃_ŵᵀ a with ŵ = (0, w1, w2, w3).

use thiserror::Error;

use crate::jet::Scalar;
use crate::ode::{dopri5, DenseOutput, OdeError, OdeOptions, StepVerdict};

pub type Mat3<S> = [[S; 3]; 3];
pub type Mat34<S> = [[S; 4]; 3];
pub type Mat4<S> = [[S; 4]; 4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("Euler parameters must have unit length, |a| = {0}")]
    NotUnit(f64),
    #[error("attitude integration failed at t = {t}: {message}")]
    Integrator { t: f64, message: String },
}

pub fn h_tilde<S: Scalar>(a: &[S; 4]) -> Mat34<S> {
    let [a0, a1, a2, a3] = *a;
    [[-a1, a0, -a3, a2], [-a2, a3, a0, -a1], [-a3, -a2, a1, a0]]
}

pub fn h<S: Scalar>(a: &[S; 4]) -> Mat34<S> {
    let [a0, a1, a2, a3] = *a;
    [[-a1, a0, a3, -a2], [-a2, -a3, a0, a1], [-a3, a2, -a1, a0]]
}

pub fn k_tilde<S: Scalar>(a: &[S; 4]) -> Mat4<S> {
    let [a0, a1, a2, a3] = *a;
    [
        [a0, a1, a2, a3],
        [-a1, a0, -a3, a2],
        [-a2, a3, a0, -a1],
        [-a3, -a2, a1, a0],
    ]
}

pub fn k<S: Scalar>(a: &[S; 4]) -> Mat4<S> {
    let [a0, a1, a2, a3] = *a;
    [
        [a0, a1, a2, a3],
        [-a1, a0, a3, -a2],
        [-a2, -a3, a0, a1],
        [-a3, a2, -a1, a0],
    ]
}

/// X Yᵀ for two 3×4 matrices.
pub fn mul_34_43t<S: Scalar>(x: &Mat34<S>, y: &Mat34<S>) -> Mat3<S> {
    let mut out = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = S::zero();
            for l in 0..4 {
                acc += x[i][l] * y[j][l];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// R_a = H̃_a H_aᵀ without a unit-length check (jets and interpolated states).
pub fn rotation_unchecked<S: Scalar>(a: &[S; 4]) -> Mat3<S> {
    mul_34_43t(&h_tilde(a), &h(a))
}

/// R_a for a unit quaternion.
pub fn rotation_matrix(a: &[f64; 4]) -> Result<Mat3<f64>, RotationError> {
    let n = norm(a);
    if (n - 1.0).abs() > 1e-9 {
        return Err(RotationError::NotUnit(n));
    }
    Ok(rotation_unchecked(a))
}

pub fn norm(a: &[f64; 4]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ¼ K̃_ŵᵀ a.
pub fn attitude_rhs<S: Scalar>(a: &[S; 4], w: &[S; 3]) -> [S; 4] {
    let what = [S::zero(), w[0], w[1], w[2]];
    let kt = k_tilde(&what);
    let mut out = [S::zero(); 4];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = S::zero();
        for (j, aj) in a.iter().enumerate() {
            acc += kt[j][i] * *aj;
        }
        *o = acc.scale(0.25);
    }
    out
}

/// w = 4 H_a a′.
pub fn angular_data(a: &[f64; 4], ap: &[f64; 4]) -> [f64; 3] {
    let ha = h(a);
    let mut w = [0.0; 3];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = 4.0 * (0..4).map(|l| ha[i][l] * ap[l]).sum::<f64>();
    }
    w
}

/// Cross-product matrix [x]× with [x]× y = x × y.
pub fn cross_matrix(x: &[f64; 3]) -> Mat3<f64> {
    [[0.0, -x[2], x[1]], [x[2], 0.0, -x[0]], [-x[1], x[0], 0.0]]
}

/// The standard symplectic form da0∧da1 + da2∧da3 as a matrix.
pub const SYMPLECTIC_J: [[f64; 4]; 4] = [
    [0.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
];

pub fn symplectic_form(u: &[f64; 4], v: &[f64; 4]) -> f64 {
    u[0] * v[1] - u[1] * v[0] + u[2] * v[3] - u[3] * v[2]
}

/// Dense attitude trajectory a(t) from `integrate_attitude`.
#[derive(Clone, Debug)]
pub struct AttitudeTrajectory {
    dense: DenseOutput,
    /// project interpolated values back onto the unit sphere
    unit: bool,
}

impl AttitudeTrajectory {
    pub fn bounds(&self) -> (f64, f64) {
        self.dense.bounds()
    }

    pub fn eval(&self, t: f64) -> Result<[f64; 4], OdeError> {
        let a = self.dense.eval(t)?;
        let a = [a[0], a[1], a[2], a[3]];
        Ok(if self.unit {
            a.map(|x| x / norm(&a))
        } else {
            a
        })
    }
}

fn attitude_run<W: Fn(f64) -> [f64; 3]>(
    w: &W,
    a0: [f64; 4],
    t0: f64,
    t1: f64,
    tol: f64,
    renormalize: bool,
) -> Result<DenseOutput, RotationError> {
    let opts = OdeOptions {
        rtol: tol,
        atol: tol,
        ..OdeOptions::default()
    };
    let rhs = |t: f64, a: &[f64], da: &mut [f64]| {
        let d = attitude_rhs(&[a[0], a[1], a[2], a[3]], &w(t));
        da.copy_from_slice(&d);
        Ok(())
    };
    let hook = |_t: f64, a: &mut [f64]| {
        if renormalize {
            let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            a.iter_mut().for_each(|x| *x /= n);
        }
        StepVerdict::Continue
    };
    match dopri5(rhs, t0, &a0, t1, &opts, hook) {
        Ok((dense, None)) => Ok(dense),
        Ok((_, Some(stop))) => Err(RotationError::Integrator {
            t: stop.t,
            message: stop.reason,
        }),
        Err(e) => Err(RotationError::Integrator {
            t: t0,
            message: e.to_string(),
        }),
    }
}

/// Integrate a′ = ¼ K̃_ŵᵀ a from `a0` over [t0, t1], renormalizing after
/// every accepted step.
pub fn integrate_attitude<W: Fn(f64) -> [f64; 3]>(
    w: W,
    a0: [f64; 4],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<AttitudeTrajectory, RotationError> {
    let n = norm(&a0);
    if (n - 1.0).abs() > 1e-9 {
        return Err(RotationError::NotUnit(n));
    }
    Ok(AttitudeTrajectory {
        dense: attitude_run(&w, a0, t0, t1, tol, true)?,
        unit: true,
    })
}

/// As [`integrate_attitude`] but without renormalization: the drift of |a|
/// then measures the integrator alone.
pub fn integrate_attitude_unprojected<W: Fn(f64) -> [f64; 3]>(
    w: W,
    a0: [f64; 4],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<AttitudeTrajectory, RotationError> {
    Ok(AttitudeTrajectory {
        dense: attitude_run(&w, a0, t0, t1, tol, false)?,
        unit: false,
    })
}

/// Flow derivative ∂a(t1)/∂a(t0) by central differencing of neighbouring
/// trajectories (the flow is linear, so this is exact up to integration error).
pub fn attitude_flow_matrix<W: Fn(f64) -> [f64; 3]>(
    w: W,
    a0: [f64; 4],
    t0: f64,
    t1: f64,
    tol: f64,
    eps: f64,
) -> Result<Mat4<f64>, RotationError> {
    let mut phi = [[0.0; 4]; 4];
    for k in 0..4 {
        let (mut ap, mut am) = (a0, a0);
        ap[k] += eps;
        am[k] -= eps;
        let yp = attitude_run(&w, ap, t0, t1, tol, false)?
            .eval(t1)
            .map_err(|e| RotationError::Integrator {
                t: t1,
                message: e.to_string(),
            })?;
        let ym = attitude_run(&w, am, t0, t1, tol, false)?
            .eval(t1)
            .map_err(|e| RotationError::Integrator {
                t: t1,
                message: e.to_string(),
            })?;
        for i in 0..4 {
            phi[i][k] = (yp[i] - ym[i]) / (2.0 * eps);
        }
    }
    Ok(phi)
}

/// max |ΦᵀJΦ − J| for a 4×4 flow matrix.
pub fn symplectic_defect(phi: &Mat4<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let col_i = [phi[0][i], phi[1][i], phi[2][i], phi[3][i]];
            let col_j = [phi[0][j], phi[1][j], phi[2][j], phi[3][j]];
            worst = worst.max((symplectic_form(&col_i, &col_j) - SYMPLECTIC_J[i][j]).abs());
        }
    }
    worst
}
