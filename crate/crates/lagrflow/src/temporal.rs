//! Time components A(t) = R_{a(t)} B(t).
//!
//! A family supplies a [`TimeLaw`]: a state ODE (possibly empty), a map from
//! state to the upper-triangular data B and the angular data w, and margin
//! functions whose collapse signals a blow-up. The attitude a(t) is integrated
//! together with the state. Evaluation propagates second-order jets through
//! the law, so A, A′ and A″ are exact up to integration error of the state.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::jet::{Jet, Scalar};
use crate::ode::{dopri5, DenseOutput, OdeError, OdeOptions, StepVerdict};
use crate::rotations::{attitude_rhs, norm, rotation_unchecked};
use crate::spatial::{cross, signed_minor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemporalError {
    #[error("initial Euler parameters must have unit length, |a0| = {0}")]
    NotUnit(f64),
    #[error("t = {t} is outside the valid horizon [{lo}, {hi}]")]
    OutsideHorizon { t: f64, lo: f64, hi: f64 },
    #[error("time law failed at t = {t}: {message}")]
    Law { t: f64, message: String },
    #[error("integrator: {0}")]
    Integrator(#[from] OdeError),
    #[error("invalid initial data: {0}")]
    Initial(String),
    #[error("gauge matrix is singular or badly conditioned (condition number {0:.3e})")]
    SingularGauge(f64),
    #[error("gauge matrix must be {m}×{m}")]
    GaugeShape { m: usize },
}

/// B as columns and the angular data w, all as jets in t.
#[derive(Clone, Debug)]
pub struct Frame {
    pub b: Vec<[Jet; 3]>,
    pub w: [Jet; 3],
}

impl Frame {
    /// Build from three rows of equal length.
    pub fn from_rows(rows: [Vec<Jet>; 3], w: [Jet; 3]) -> Frame {
        let m = rows[0].len();
        let b = (0..m)
            .map(|j| [rows[0][j], rows[1][j], rows[2][j]])
            .collect();
        Frame { b, w }
    }
}

pub type RhsFn = Arc<dyn Fn(Jet, &[Jet]) -> Result<Vec<Jet>, String> + Send + Sync>;
pub type FrameFn = Arc<dyn Fn(Jet, &[Jet]) -> Result<Frame, String> + Send + Sync>;
pub type MarginFn = Arc<dyn Fn(f64, &[f64]) -> Result<f64, String> + Send + Sync>;

/// A quantity that must stay above `threshold`; falling below is a blow-up.
#[derive(Clone)]
pub struct Margin {
    pub label: String,
    pub threshold: f64,
    pub f: MarginFn,
}

/// How a family's time component evolves.
///
/// `rhs` and `frame` are called with `t` as a jet of the independent
/// variable and the state as jets; they must be written with jet arithmetic
/// so derivatives propagate.
#[derive(Clone)]
pub struct TimeLaw {
    pub m: usize,
    pub state_names: Vec<String>,
    pub y0: Vec<f64>,
    pub rhs: RhsFn,
    pub frame: FrameFn,
    pub margins: Vec<Margin>,
}

impl TimeLaw {
    /// A law without state: B and w are explicit functions of t.
    pub fn explicit(m: usize, frame: FrameFn) -> TimeLaw {
        TimeLaw {
            m,
            state_names: vec![],
            y0: vec![],
            rhs: Arc::new(|_, _| Ok(vec![])),
            frame,
            margins: vec![],
        }
    }

    fn margin_violation(&self, t: f64, y: &[f64]) -> Option<String> {
        for mg in &self.margins {
            match (mg.f)(t, y) {
                Ok(v) if v.is_finite() && v >= mg.threshold => {}
                Ok(v) => {
                    return Some(format!(
                        "{} = {v:.3e} fell below {:.1e}",
                        mg.label, mg.threshold
                    ))
                }
                Err(e) => return Some(format!("{}: {e}", mg.label)),
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowUp {
    pub t: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub ode: OdeOptions,
}

struct Inner {
    law: TimeLaw,
    t_ref: f64,
    requested: (f64, f64),
    valid: (f64, f64),
    fwd: Option<DenseOutput>,
    bwd: Option<DenseOutput>,
    y_ref: Vec<f64>,
    blowups: Vec<BlowUp>,
}

/// The time factor, integrated over its (possibly truncated) horizon.
#[derive(Clone)]
pub struct TimeComponent {
    inner: Arc<Inner>,
    gauge: Option<Arc<Vec<Vec<f64>>>>,
}

/// Everything known about A at one instant.
#[derive(Clone, Debug)]
pub struct TimeSample {
    pub t: f64,
    pub a: [Jet; 4],
    pub y: Vec<Jet>,
    /// Columns of B (gauged if a gauge is set).
    pub b: Vec<[Jet; 3]>,
    pub w: [Jet; 3],
    /// Columns of A = R B (gauged if a gauge is set).
    pub cols: Vec<[Jet; 3]>,
}

/// A 3×m matrix stored by rows.
pub type Mat3m = [Vec<f64>; 3];

impl TimeSample {
    fn rows(&self, pick: impl Fn(&Jet) -> f64) -> Mat3m {
        [0, 1, 2].map(|r| self.cols.iter().map(|c| pick(&c[r])).collect())
    }

    pub fn a_matrix(&self) -> Mat3m {
        self.rows(|j| j.v)
    }

    pub fn a_prime(&self) -> Mat3m {
        self.rows(|j| j.d1)
    }

    pub fn a_second(&self) -> Mat3m {
        self.rows(|j| j.d2)
    }

    /// Q_ij = ⟨A_i′, A_j⟩ − ⟨A_j′, A_i⟩ for i < j (1-based keys).
    pub fn q_direct(&self) -> BTreeMap<(usize, usize), f64> {
        let m = self.cols.len();
        let mut out = BTreeMap::new();
        for i in 0..m {
            for j in i + 1..m {
                let (ci, cj) = (&self.cols[i], &self.cols[j]);
                let mut q = 0.0;
                for r in 0..3 {
                    q += ci[r].d1 * cj[r].v - cj[r].d1 * ci[r].v;
                }
                out.insert((i + 1, j + 1), q);
            }
        }
        out
    }

    /// Q_ij = ⟨w, B_i × B_j⟩ + ⟨B_i′, B_j⟩ − ⟨B_i, B_j′⟩.
    pub fn q_from_frame(&self) -> BTreeMap<(usize, usize), f64> {
        let m = self.b.len();
        let w = [self.w[0].v, self.w[1].v, self.w[2].v];
        let mut out = BTreeMap::new();
        for i in 0..m {
            for j in i + 1..m {
                let bi = self.b[i].map(|x| x.v);
                let bj = self.b[j].map(|x| x.v);
                let c = cross(&bi, &bj);
                let mut q = w[0] * c[0] + w[1] * c[1] + w[2] * c[2];
                for r in 0..3 {
                    q += self.b[i][r].d1 * bj[r] - bi[r] * self.b[j][r].d1;
                }
                out.insert((i + 1, j + 1), q);
            }
        }
        out
    }

    /// p_ijk = det(A_i, A_j, A_k) for i < j < k (1-based keys).
    pub fn p_minors(&self) -> BTreeMap<(usize, usize, usize), f64> {
        let cols: Vec<[f64; 3]> = self.cols.iter().map(|c| c.map(|x| x.v)).collect();
        crate::spatial::minors_of_rows(&cols)
    }
}

fn constant_jets(y: &[f64]) -> Vec<Jet> {
    y.iter().map(|&v| Jet::constant(v)).collect()
}

fn normalized(a: &[f64]) -> [f64; 4] {
    let a = [a[0], a[1], a[2], a[3]];
    let n = norm(&a);
    a.map(|x| x / n)
}

impl TimeComponent {
    /// Integrate `law` over `horizon` starting from the reference time `t_ref`.
    ///
    /// The integration runs forward and backward from `t_ref`. A margin
    /// collapse or a step-size collapse truncates the horizon on that side and
    /// is recorded as a blow-up.
    pub fn solve(
        law: TimeLaw,
        a0: [f64; 4],
        t_ref: f64,
        horizon: (f64, f64),
        opts: &SolveOptions,
    ) -> Result<TimeComponent, TemporalError> {
        let n0 = norm(&a0);
        if (n0 - 1.0).abs() > 1e-9 {
            return Err(TemporalError::NotUnit(n0));
        }
        let (t0, t1) = horizon;
        if !(t0 <= t_ref && t_ref <= t1) {
            return Err(TemporalError::Initial(format!(
                "reference time {t_ref} must lie in the horizon [{t0}, {t1}]"
            )));
        }
        if law.y0.len() != law.state_names.len() {
            return Err(TemporalError::Initial("state length mismatch".into()));
        }
        if let Some(why) = law.margin_violation(t_ref, &law.y0) {
            return Err(TemporalError::Initial(format!(
                "at the reference time: {why}"
            )));
        }
        let frame0 = (law.frame)(Jet::variable(t_ref), &constant_jets(&law.y0))
            .map_err(|message| TemporalError::Law { t: t_ref, message })?;
        if frame0.b.len() != law.m {
            return Err(TemporalError::Initial(format!(
                "frame has {} columns, expected {}",
                frame0.b.len(),
                law.m
            )));
        }

        let mut full0 = a0.map(|x| x / n0).to_vec();
        full0.extend_from_slice(&law.y0);

        let mut blowups = Vec::new();
        let mut run = |t_end: f64| -> Result<Option<DenseOutput>, TemporalError> {
            if t_end == t_ref {
                return Ok(None);
            }
            let rhs = |t: f64, s: &[f64], ds: &mut [f64]| -> Result<(), String> {
                let tj = Jet::variable(t);
                let yj = constant_jets(&s[4..]);
                let dy = (law.rhs)(tj, &yj)?;
                let fr = (law.frame)(tj, &yj)?;
                let a = [s[0], s[1], s[2], s[3]];
                let da = attitude_rhs(&a, &fr.w.map(|x| x.v));
                ds[..4].copy_from_slice(&da);
                for (o, v) in ds[4..].iter_mut().zip(dy) {
                    *o = v.v;
                }
                if ds.iter().all(|x| x.is_finite()) {
                    Ok(())
                } else {
                    Err("non-finite derivative".into())
                }
            };
            let on_step = |t: f64, s: &mut [f64]| {
                let a = normalized(&s[..4]);
                s[..4].copy_from_slice(&a);
                match law.margin_violation(t, &s[4..]) {
                    Some(why) => StepVerdict::Stop(why),
                    None => StepVerdict::Continue,
                }
            };
            let (dense, stop) = dopri5(rhs, t_ref, &full0, t_end, &opts.ode, on_step)?;
            if let Some(s) = stop {
                blowups.push(BlowUp {
                    t: s.t,
                    reason: s.reason,
                });
            }
            Ok(Some(dense))
        };
        let fwd = run(t1)?;
        let bwd = run(t0)?;
        let hi = fwd.as_ref().map_or(t_ref, |d| d.t_end());
        let lo = bwd.as_ref().map_or(t_ref, |d| d.t_end());
        Ok(TimeComponent {
            inner: Arc::new(Inner {
                y_ref: full0,
                law,
                t_ref,
                requested: horizon,
                valid: (lo, hi),
                fwd,
                bwd,
                blowups,
            }),
            gauge: None,
        })
    }

    pub fn m(&self) -> usize {
        self.inner.law.m
    }

    pub fn t_ref(&self) -> f64 {
        self.inner.t_ref
    }

    pub fn requested_horizon(&self) -> (f64, f64) {
        self.inner.requested
    }

    /// The horizon after any blow-up truncation.
    pub fn valid_horizon(&self) -> (f64, f64) {
        self.inner.valid
    }

    pub fn blowups(&self) -> &[BlowUp] {
        &self.inner.blowups
    }

    pub fn state_names(&self) -> &[String] {
        &self.inner.law.state_names
    }

    pub fn gauge(&self) -> Option<&Vec<Vec<f64>>> {
        self.gauge.as_deref()
    }

    /// A ↦ A H. The caller is responsible for applying H⁻¹ to v.
    pub fn with_gauge(&self, h: Vec<Vec<f64>>) -> Result<TimeComponent, TemporalError> {
        let m = self.m();
        if h.len() != m || h.iter().any(|r| r.len() != m) {
            return Err(TemporalError::GaugeShape { m });
        }
        // compose with an existing gauge
        let h = match &self.gauge {
            Some(g) => matmul(g, &h),
            None => h,
        };
        Ok(TimeComponent {
            inner: self.inner.clone(),
            gauge: Some(Arc::new(h)),
        })
    }

    /// The same component without a gauge.
    pub fn ungauged(&self) -> TimeComponent {
        TimeComponent {
            inner: self.inner.clone(),
            gauge: None,
        }
    }

    /// Raw interpolated state [a; y] at t.
    fn state(&self, t: f64) -> Result<Vec<f64>, TemporalError> {
        let (lo, hi) = self.inner.valid;
        if !(t >= lo - 1e-12 * (1.0 + lo.abs()) && t <= hi + 1e-12 * (1.0 + hi.abs())) {
            return Err(TemporalError::OutsideHorizon { t, lo, hi });
        }
        let t = t.clamp(lo, hi);
        let dense = if t >= self.inner.t_ref {
            &self.inner.fwd
        } else {
            &self.inner.bwd
        };
        match dense {
            Some(d) => Ok(d.eval(t)?),
            None => Ok(self.inner.y_ref.clone()),
        }
    }

    /// The attitude quaternion as integrated, before renormalization.
    pub fn raw_attitude(&self, t: f64) -> Result<[f64; 4], TemporalError> {
        let s = self.state(t)?;
        Ok([s[0], s[1], s[2], s[3]])
    }

    /// Interpolated law state y(t) (without the attitude).
    pub fn law_state(&self, t: f64) -> Result<Vec<f64>, TemporalError> {
        Ok(self.state(t)?[4..].to_vec())
    }

    /// Time derivative of the law state, from the right-hand side.
    pub fn law_rate(&self, t: f64, y: &[f64]) -> Result<Vec<f64>, TemporalError> {
        let dy = (self.inner.law.rhs)(Jet::variable(t), &constant_jets(y))
            .map_err(|message| TemporalError::Law { t, message })?;
        Ok(dy.iter().map(|j| j.v).collect())
    }

    pub fn eval(&self, t: f64) -> Result<TimeSample, TemporalError> {
        let law = &self.inner.law;
        let s = self.state(t)?;
        let a = normalized(&s[..4]);
        let y = &s[4..];
        let tj = Jet::variable(t);
        let err = |message: String| TemporalError::Law { t, message };

        // y′ from the law, then y″ as the total derivative of the law along (1, y′)
        let dy: Vec<f64> = (law.rhs)(tj, &constant_jets(y))
            .map_err(err)?
            .iter()
            .map(|j| j.v)
            .collect();
        let yj1: Vec<Jet> = y
            .iter()
            .zip(&dy)
            .map(|(&v, &d)| Jet::new(v, d, 0.0))
            .collect();
        let ddy: Vec<f64> = (law.rhs)(tj, &yj1)
            .map_err(err)?
            .iter()
            .map(|j| j.d1)
            .collect();
        let yj: Vec<Jet> = (0..y.len())
            .map(|i| Jet::new(y[i], dy[i], ddy[i]))
            .collect();

        let fr = (law.frame)(tj, &yj).map_err(err)?;
        let wv = fr.w.map(|x| x.v);
        let da = attitude_rhs(&a, &wv);
        let aj1 = [0, 1, 2, 3].map(|i| Jet::new(a[i], da[i], 0.0));
        let wj1 = fr.w.map(|x| Jet::new(x.v, x.d1, 0.0));
        let dda = attitude_rhs(&aj1, &wj1).map(|j| j.d1);
        let aj = [0, 1, 2, 3].map(|i| Jet::new(a[i], da[i], dda[i]));

        let r = rotation_unchecked(&aj);
        let mut b = fr.b;
        if let Some(h) = &self.gauge {
            b = apply_gauge(&b, h);
        }
        let cols = b
            .iter()
            .map(|c| {
                [0, 1, 2].map(|i| {
                    let mut acc = Jet::constant(0.0);
                    for k in 0..3 {
                        acc += r[i][k] * c[k];
                    }
                    acc
                })
            })
            .collect();
        Ok(TimeSample {
            t,
            a: aj,
            y: yj,
            b,
            w: fr.w,
            cols,
        })
    }

    /// (A, A′, A″) at t.
    pub fn eval_a(&self, t: f64) -> Result<(Mat3m, Mat3m, Mat3m), TemporalError> {
        let s = self.eval(t)?;
        Ok((s.a_matrix(), s.a_prime(), s.a_second()))
    }

    pub fn q_coefficients(&self, t: f64) -> Result<BTreeMap<(usize, usize), f64>, TemporalError> {
        Ok(self.eval(t)?.q_direct())
    }

    pub fn p_minors(&self, t: f64) -> Result<BTreeMap<(usize, usize, usize), f64>, TemporalError> {
        Ok(self.eval(t)?.p_minors())
    }
}

fn apply_gauge(b: &[[Jet; 3]], h: &[Vec<f64>]) -> Vec<[Jet; 3]> {
    let m = b.len();
    (0..m)
        .map(|j| {
            [0, 1, 2].map(|r| {
                let mut acc = Jet::constant(0.0);
                for (i, col) in b.iter().enumerate() {
                    if h[i][j] != 0.0 {
                        acc += col[r].scale(h[i][j]);
                    }
                }
                acc
            })
        })
        .collect()
}

pub fn matmul(x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let k = y.len();
    let m = y[0].len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).map(|l| x[i][l] * y[l][j]).sum())
                .collect()
        })
        .collect()
}

/// Inverse and 2-norm condition number of a square matrix.
pub fn invert_gauge(h: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64), TemporalError> {
    let m = h.len();
    if h.iter().any(|r| r.len() != m) {
        return Err(TemporalError::GaugeShape { m });
    }
    let mat = nalgebra::DMatrix::from_fn(m, m, |i, j| h[i][j]);
    let sv = mat.clone().svd(false, false).singular_values;
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond > 1e12 {
        return Err(TemporalError::SingularGauge(cond));
    }
    let inv = mat
        .try_inverse()
        .ok_or(TemporalError::SingularGauge(cond))?;
    Ok((
        (0..m)
            .map(|i| (0..m).map(|j| inv[(i, j)]).collect())
            .collect(),
        cond,
    ))
}

/// Σ coef · Q_idx (pairs) or Σ coef · p_idx (triples) = value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearCheck {
    pub label: String,
    pub terms: Vec<(Vec<usize>, f64)>,
    pub value: f64,
}

impl LinearCheck {
    /// A single entry, labelled like "Q16" or "p123".
    pub fn single(prefix: &str, idx: &[usize], value: f64) -> LinearCheck {
        let digits: String = idx.iter().map(|i| i.to_string()).collect();
        LinearCheck {
            label: format!("{prefix}{digits}"),
            terms: vec![(idx.to_vec(), 1.0)],
            value,
        }
    }

    /// A signed combination, e.g. `combo("p", &[(&[1,3,5], 1.0), (&[2,3,6], -1.0)], 0.0)`.
    pub fn combo(prefix: &str, terms: &[(&[usize], f64)], value: f64) -> LinearCheck {
        let mut label = String::new();
        for (k, (idx, c)) in terms.iter().enumerate() {
            let digits: String = idx.iter().map(|i| i.to_string()).collect();
            let sign = if *c < 0.0 {
                "-"
            } else if k > 0 {
                "+"
            } else {
                ""
            };
            let mag = if c.abs() == 1.0 {
                String::new()
            } else {
                format!("{}*", c.abs())
            };
            label.push_str(&format!("{sign}{mag}{prefix}{digits}"));
        }
        LinearCheck {
            label,
            terms: terms.iter().map(|(i, c)| (i.to_vec(), *c)).collect(),
            value,
        }
    }

    pub fn eval_q(&self, q: &BTreeMap<(usize, usize), f64>) -> f64 {
        self.terms
            .iter()
            .map(|(ix, c)| {
                let (i, j) = (ix[0], ix[1]);
                let v = if i < j {
                    q.get(&(i, j)).copied().unwrap_or(0.0)
                } else if i > j {
                    -q.get(&(j, i)).copied().unwrap_or(0.0)
                } else {
                    0.0
                };
                c * v
            })
            .sum()
    }

    pub fn eval_p(&self, p: &BTreeMap<(usize, usize, usize), f64>) -> f64 {
        self.terms
            .iter()
            .map(|(ix, c)| c * signed_minor(p, ix))
            .sum()
    }
}

/// The constant values a family declares for Q_ij and p_ijk.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Declared {
    pub q: Vec<LinearCheck>,
    pub p: Vec<LinearCheck>,
}

impl Declared {
    /// Declare Q_ij = value for the listed pairs and 0 for every other pair
    /// not in `free`.
    pub fn q_table(
        m: usize,
        nonzero: &[((usize, usize), f64)],
        free: &[(usize, usize)],
    ) -> Vec<LinearCheck> {
        let mut out = Vec::new();
        for i in 1..=m {
            for j in i + 1..=m {
                if free.contains(&(i, j)) {
                    continue;
                }
                let v = nonzero
                    .iter()
                    .find(|(k, _)| *k == (i, j))
                    .map_or(0.0, |(_, v)| *v);
                out.push(LinearCheck::single("Q", &[i, j], v));
            }
        }
        out
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn rotating_law(wz: f64) -> TimeLaw {
        TimeLaw::explicit(
            3,
            Arc::new(move |_t, _y| {
                let one = Jet::constant(1.0);
                let zero = Jet::constant(0.0);
                Ok(Frame::from_rows(
                    [
                        vec![one, zero, zero],
                        vec![zero, one, zero],
                        vec![zero, zero, one],
                    ],
                    [zero, zero, Jet::constant(wz)],
                ))
            }),
        )
    }

    #[test]
    fn constant_a_has_vanishing_derivatives() {
        let tc = TimeComponent::solve(
            rotating_law(0.0),
            [1.0, 0.0, 0.0, 0.0],
            0.0,
            (0.0, 1.0),
            &SolveOptions::default(),
        )
        .unwrap();
        let (a, ap, app) = tc.eval_a(0.4).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(a[r][c], if r == c { 1.0 } else { 0.0 });
                assert_eq!(ap[r][c], 0.0);
                assert_eq!(app[r][c], 0.0);
            }
        }
        assert!(tc.q_coefficients(0.4).unwrap().values().all(|q| *q == 0.0));
        let p = tc.p_minors(0.4).unwrap();
        assert_eq!(p[&(1, 2, 3)], 1.0);
    }

    #[test]
    fn rigid_rotation_about_z() {
        // w = (0,0,4): a = (cos t, 0, 0, sin t), R rotates by 2t
        let tc = TimeComponent::solve(
            rotating_law(4.0),
            [1.0, 0.0, 0.0, 0.0],
            0.0,
            (-1.0, 2.0),
            &SolveOptions::default(),
        )
        .unwrap();
        for &t in &[-0.9, 0.0, 0.3, 1.7] {
            let s = tc.eval(t).unwrap();
            assert!((s.a[0].v - t.cos()).abs() < 1e-9 && (s.a[3].v - t.sin()).abs() < 1e-9);
            let (a, ap, app) = tc.eval_a(t).unwrap();
            let (sn, cs) = (2.0 * t).sin_cos();
            assert!((a[0][0] - cs).abs() < 1e-9 && (a[1][0] - sn).abs() < 1e-9);
            assert!((ap[0][0] + 2.0 * sn).abs() < 1e-8);
            assert!((app[0][0] + 4.0 * cs).abs() < 1e-8);
            let qd = s.q_direct();
            let qf = s.q_from_frame();
            for (k, v) in &qd {
                assert!((v - qf[k]).abs() < 1e-10, "{k:?}");
            }
            // Q12 = ⟨A1′,A2⟩ − ⟨A2′,A1⟩ = 4 for a rotation rate 2
            assert!((qd[&(1, 2)] - 4.0).abs() < 1e-8);
        }
        assert!(tc.eval(2.5).is_err());
    }

    #[test]
    fn stateful_law_and_second_derivative() {
        // y′ = y, b11 = y, b22 = 1, b33 = 1/y
        let law = TimeLaw {
            m: 3,
            state_names: vec!["y".into()],
            y0: vec![1.0],
            rhs: Arc::new(|_t, y| Ok(vec![y[0]])),
            frame: Arc::new(|_t, y| {
                let one = Jet::constant(1.0);
                let zero = Jet::constant(0.0);
                Ok(Frame::from_rows(
                    [
                        vec![y[0], zero, zero],
                        vec![zero, one, zero],
                        vec![zero, zero, one / y[0]],
                    ],
                    [zero; 3],
                ))
            }),
            margins: vec![],
        };
        let tc = TimeComponent::solve(
            law,
            [1.0, 0.0, 0.0, 0.0],
            0.0,
            (-0.5, 1.0),
            &SolveOptions::default(),
        )
        .unwrap();
        for &t in &[-0.5, 0.2, 1.0] {
            let (a, ap, app) = tc.eval_a(t).unwrap();
            let e = f64::exp(t);
            assert!((a[0][0] - e).abs() < 1e-8 * e);
            assert!((ap[0][0] - e).abs() < 1e-8 * e);
            assert!((app[0][0] - e).abs() < 1e-8 * e);
            assert!((app[2][2] - 1.0 / e).abs() < 1e-8);
        }
    }

    #[test]
    fn margin_truncates_horizon() {
        // y′ = −1 from y = 1, stop once y < 0.25
        let law = TimeLaw {
            m: 3,
            state_names: vec!["y".into()],
            y0: vec![1.0],
            rhs: Arc::new(|_t, _y| Ok(vec![Jet::constant(-1.0)])),
            frame: Arc::new(|_t, y| {
                let z = Jet::constant(0.0);
                Ok(Frame::from_rows(
                    [
                        vec![y[0], z, z],
                        vec![z, Jet::constant(1.0), z],
                        vec![z, z, Jet::constant(1.0) / y[0]],
                    ],
                    [z; 3],
                ))
            }),
            margins: vec![Margin {
                label: "y".into(),
                threshold: 0.25,
                f: Arc::new(|_t, y| Ok(y[0])),
            }],
        };
        let opts = SolveOptions {
            ode: OdeOptions {
                h_init: Some(0.01),
                ..OdeOptions::default()
            },
        };
        let tc = TimeComponent::solve(law, [1.0, 0.0, 0.0, 0.0], 0.0, (0.0, 2.0), &opts).unwrap();
        let (_, hi) = tc.valid_horizon();
        assert!(hi < 0.75 + 1e-12 && hi > 0.75 - 1e-8, "{hi}");
        assert_eq!(tc.blowups().len(), 1);
        assert!(tc.eval(1.0).is_err());
    }

    #[test]
    fn gauge_multiplies_columns() {
        let tc = TimeComponent::solve(
            rotating_law(1.0),
            [1.0, 0.0, 0.0, 0.0],
            0.0,
            (0.0, 1.0),
            &SolveOptions::default(),
        )
        .unwrap();
        let h = vec![
            vec![1.0, 0.5, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ];
        let g = tc.with_gauge(h.clone()).unwrap();
        let (a, _, _) = tc.eval_a(0.3).unwrap();
        let (ag, _, _) = g.eval_a(0.3).unwrap();
        for r in 0..3 {
            assert!((ag[r][1] - (0.5 * a[r][0] + a[r][1])).abs() < 1e-15);
            assert!((ag[r][2] - 2.0 * a[r][2]).abs() < 1e-15);
        }
        let (inv, cond) = invert_gauge(&h).unwrap();
        let id = matmul(&h, &inv);
        for i in 0..3 {
            for j in 0..3 {
                assert!((id[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(cond > 1.0);
        assert!(invert_gauge(&[vec![1.0, 2.0], vec![2.0, 4.0]]).is_err());
    }

    #[test]
    fn linear_checks() {
        let mut q = BTreeMap::new();
        q.insert((1, 2), 3.0);
        let c = LinearCheck::single("Q", &[2, 1], -3.0);
        assert_eq!(c.eval_q(&q), -3.0);
        let mut p = BTreeMap::new();
        p.insert((1, 3, 5), 2.0);
        p.insert((2, 3, 6), 2.0);
        let c = LinearCheck::combo("p", &[(&[1, 3, 5], 1.0), (&[2, 3, 6], -1.0)], 0.0);
        assert_eq!(c.label, "p135-p236");
        assert_eq!(c.eval_p(&p), 0.0);
        let t = Declared::q_table(4, &[((1, 4), 2.0)], &[(2, 3)]);
        assert_eq!(t.len(), 5);
    }
}
