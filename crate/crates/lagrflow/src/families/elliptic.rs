//! m = 6 elliptic families.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use super::kirchhoff::abs_margin;
use super::{cj, declared_q, initial, partial, Consts, FamilyError, FamilyInput};
use crate::expr::ExprError;
use crate::jet::{Jet, Scalar};
use crate::spatial::SpatialComponent;
use crate::temporal::{Declared, Frame, LinearCheck, Margin, TimeLaw};

/// Blow-up guard for the k = 1 family: 1 + cos θ must stay above this.
///
/// Near θ = π the frame entries grow like 1/(1 + cos θ) and the Q_ij are
/// recovered through cancellation of products of such entries, so the guard
/// is set where the declared checks still hold at 1e−8.
pub const KEQ1_MARGIN: f64 = 1e-3;

#[allow(clippy::too_many_arguments)]
fn ell_b(
    b11: Jet,
    b12: Jet,
    b22: Jet,
    b15: Jet,
    b25: Jet,
    b35: Jet,
    l1: Jet,
    l2: Jet,
) -> [Vec<Jet>; 3] {
    let z = cj(0.0);
    [
        vec![
            b11,
            b12,
            l1 * b11 + l2 * b12,
            l1 * b12 - l2 * b11,
            l1 * b15,
            -(l2 * b15),
        ],
        vec![z, b22, l2 * b22, l1 * b22, l1 * b25, -(l2 * b25)],
        vec![z, z, z, z, l1 * b35, -(l2 * b35)],
    ]
}

#[derive(Clone, Copy)]
struct Kne1 {
    k: f64,
    c12: f64,
    c13: f64,
    c14: f64,
    c56: f64,
    gamma: f64,
}

impl Kne1 {
    fn from(c: &Consts) -> Result<Kne1, FamilyError> {
        let (k, c12, c13, c14, c56) = (
            c.get("k")?,
            c.get("c12")?,
            c.get("c13")?,
            c.get("c14")?,
            c.get("c56")?,
        );
        let g2 = c12 * c12 - (c12 * k - c14).powi(2) - c13 * c13;
        if g2 <= 0.0 {
            return Err(FamilyError::Constant {
                name: "gamma^2".into(),
                message: format!("c12^2 - (c12 k - c14)^2 - c13^2 must be positive, got {g2}"),
            });
        }
        let sign = c.or("gamma_sign", 1.0);
        if sign != 1.0 && sign != -1.0 {
            return Err(FamilyError::Constant {
                name: "gamma_sign".into(),
                message: "gamma_sign must be +1 or -1".into(),
            });
        }
        Ok(Kne1 {
            k,
            c12,
            c13,
            c14,
            c56,
            gamma: sign * g2.sqrt(),
        })
    }

    fn rate<S: Scalar>(&self, th: S) -> S {
        let (k, c) = (self.k, th.cos());
        let q = S::cst(k * k + 1.0) + S::cst(2.0 * k) * c;
        (S::cst(self.gamma * self.gamma * self.c56) * q * q / (S::cst(k) * c + S::cst(1.0))).cbrt()
    }

    fn b11_sq<S: Scalar>(&self, th: S, rate: S) -> S {
        let a = self.c14 - self.c12 * self.k;
        (S::cst(a) * th.cos() + S::cst(self.c13) * th.sin() - S::cst(self.c12)) / rate
    }

    fn frame(&self, th: Jet) -> Frame {
        let (c, s) = (th.cos(), th.sin());
        let k = self.k;
        let r = self.rate(th);
        let b35 = -r / (cj(self.gamma) * (cj(k * k + 1.0) + cj(2.0 * k) * c));
        let b11 = self.b11_sq(th, r).sqrt();
        let a = self.c14 - self.c12 * k;
        let b12 = (cj(a) * s - cj(self.c13) * c) / (b11 * r);
        let b22 = cj(self.gamma) / (b11 * r);
        let z = cj(0.0);
        Frame::from_rows(
            ell_b(b11, b12, b22, z, z, b35, cj(k) + c, s),
            [z, z, cj(-self.gamma) / (b11 * b11)],
        )
    }
}

pub(super) fn validate_kne1(out: &mut BTreeMap<String, f64>) -> Result<(), FamilyError> {
    let c = Consts(out);
    let p = Kne1::from(&c)?;
    if (p.k - 1.0).abs() < 1e-12 {
        return Err(FamilyError::Constant {
            name: "k".into(),
            message: "k must differ from 1 (use m6-elliptic-keq1)".into(),
        });
    }
    if p.c56 == 0.0 {
        return Err(FamilyError::Constant {
            name: "c56".into(),
            message: "c56 must be nonzero".into(),
        });
    }
    for i in 0..720 {
        let th = -PI + 2.0 * PI * (i as f64 + 0.5) / 720.0;
        if (p.k * th.cos() + 1.0).abs() < 1e-9 {
            continue;
        }
        let b = p.b11_sq(th, p.rate(th));
        if b.is_nan() || b <= 0.0 {
            return Err(FamilyError::Constant {
                name: "b11^2".into(),
                message: format!("b11^2 must stay positive, got {b:.3e} at theta = {th:.4}"),
            });
        }
    }
    Ok(())
}

pub(super) fn kne1_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let p = Kne1::from(&Consts(&input.constants))?;
    Ok(TimeLaw {
        m: 6,
        state_names: vec!["theta".into()],
        y0: vec![initial(input, "theta")],
        rhs: Arc::new(move |_t, y| Ok(vec![p.rate(y[0])])),
        frame: Arc::new(move |_t, y| Ok(p.frame(y[0]))),
        margins: vec![
            abs_margin("k cos(theta) + 1", move |_, y| Ok(p.k * y[0].cos() + 1.0)),
            Margin {
                label: "b11^2".into(),
                threshold: 1e-10,
                f: Arc::new(move |_, y| Ok(p.b11_sq(y[0], p.rate(y[0])))),
            },
        ],
    })
}

const ELL_ZERO: [(usize, usize); 8] = [
    (1, 5),
    (1, 6),
    (2, 5),
    (2, 6),
    (3, 5),
    (4, 5),
    (3, 6),
    (4, 6),
];

pub(super) fn kne1_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let (k, c12, c13, c14, c56) = (
        c.get("k")?,
        c.get("c12")?,
        c.get("c13")?,
        c.get("c14")?,
        c.get("c56")?,
    );
    let nz = [
        ((1, 2), c12),
        ((1, 3), c13),
        ((1, 4), c14),
        ((2, 3), c14 - 2.0 * k * c12),
        ((2, 4), -c13),
        ((5, 6), c56),
    ];
    let q = Declared::q_table(6, &nz, &[(3, 4)]);
    debug_assert_eq!(q.len(), nz.len() + ELL_ZERO.len());
    Ok(Declared { q, p: vec![] })
}

#[derive(Clone, Copy)]
struct Keq1 {
    c12: f64,
    c36: f64,
    c46: f64,
    c56: f64,
    gamma: f64,
    m0: f64,
    m1: f64,
}

impl Keq1 {
    fn from(c: &Consts) -> Result<Keq1, FamilyError> {
        Ok(Keq1 {
            c12: c.get("c12")?,
            c36: c.get("c36")?,
            c46: c.get("c46")?,
            c56: c.get("c56")?,
            gamma: c.nonzero("gamma")?,
            m0: c.get("m0")?,
            m1: c.get("m1")?,
        })
    }

    /// Terms of the relation tying m0 to the other constants.
    fn relation_terms(c12: f64, c36: f64, c46: f64, gamma: f64, m0: f64, m1: f64) -> [f64; 5] {
        [
            4.0 * m0 * m0,
            4.0 * c12 * c46 * m0,
            (c36 * c36 + c46 * c46) * gamma * gamma,
            4.0 * c12 * c36 * m1,
            4.0 * m1 * m1,
        ]
    }

    fn d(&self) -> f64 {
        self.c36 * self.m1 + self.c46 * self.m0
    }

    fn ms(&self) -> (f64, f64, f64) {
        let (g2, d) = (self.gamma * self.gamma, self.d());
        (
            (g2 * self.c36 * self.c36 + 4.0 * self.m0 * self.m0) / d,
            (g2 * self.c46 * self.c46 + 4.0 * self.m1 * self.m1) / d,
            (g2 * self.c36 * self.c46 - 4.0 * self.m0 * self.m1) / d,
        )
    }

    fn kk(&self) -> f64 {
        self.c56 * self.gamma * self.gamma - self.d()
    }

    fn rate<S: Scalar>(&self, th: S) -> S {
        (S::cst(4.0 * self.kk()) * (S::cst(1.0) + th.cos())).cbrt()
    }

    fn b11_sq<S: Scalar>(&self, th: S, rate: S) -> S {
        let (m2, m3, m4) = self.ms();
        (S::cst(m2 - m3) * th.cos() - S::cst(2.0 * m4) * th.sin() + S::cst(m2 + m3))
            / (S::cst(4.0) * rate)
    }

    fn frame(&self, th: Jet) -> Frame {
        let (c, s) = (th.cos(), th.sin());
        let (m2, m3, m4) = self.ms();
        let g = self.gamma;
        let l1 = cj(1.0) + c;
        let r = self.rate(th);
        let b35 = -r / (cj(2.0 * g) * l1);
        let b11 = self.b11_sq(th, r).sqrt();
        let b12 = (cj(m2 - m3) * s + cj(2.0 * m4) * c) / (cj(4.0) * b11 * r);
        let b22 = cj(g) / (b11 * r);
        let half = (th * cj(0.5)).tan();
        let b15 = (cj(self.c36) - cj(self.c46) * half) / cj(2.0 * g) * b22;
        let b25 = (cj(self.m1) * half + cj(self.m0)) / cj(g * g) * b22;
        let z = cj(0.0);
        Frame::from_rows(
            ell_b(b11, b12, b22, b15, b25, b35, l1, s),
            [z, z, cj(-g) / (b11 * b11)],
        )
    }
}

pub(super) fn validate_keq1(out: &mut BTreeMap<String, f64>) -> Result<(), FamilyError> {
    let c = Consts(out);
    let (c12, c36, c46, gamma, m1) = (
        c.get("c12")?,
        c.get("c36")?,
        c.get("c46")?,
        c.nonzero("gamma")?,
        c.get("m1")?,
    );
    match out.get("m0").copied() {
        Some(m0) => {
            let t = Keq1::relation_terms(c12, c36, c46, gamma, m0, m1);
            let res: f64 = t.iter().sum();
            let scale = 1.0 + t.iter().map(|x| x.abs()).sum::<f64>();
            if res.abs() > 1e-12 * scale {
                return Err(FamilyError::Relation {
                    name: "4m0^2 + 4c12c46m0 + (c36^2+c46^2)gamma^2 + 4c12c36m1 + 4m1^2 = 0".into(),
                    residual: res,
                });
            }
        }
        None => {
            // solve for m0, taking the smaller root
            let t = Keq1::relation_terms(c12, c36, c46, gamma, 0.0, m1);
            let (b, cc) = (4.0 * c12 * c46, t[2] + t[3] + t[4]);
            let disc = b * b - 16.0 * cc;
            if disc < 0.0 {
                return Err(FamilyError::Constant {
                    name: "m0".into(),
                    message: format!("the m0 relation has no real root (discriminant {disc:.3e})"),
                });
            }
            out.insert("m0".into(), (-b - disc.sqrt()) / 8.0);
        }
    }
    let p = Keq1::from(&Consts(out))?;
    if p.d() == 0.0 {
        return Err(FamilyError::Constant {
            name: "c36*m1 + c46*m0".into(),
            message: "c36*m1 + c46*m0 must be nonzero".into(),
        });
    }
    if p.kk() == 0.0 {
        return Err(FamilyError::Constant {
            name: "c56*gamma^2 - c36*m1 - c46*m0".into(),
            message: "must be nonzero".into(),
        });
    }
    for i in 0..720 {
        let th = -PI + 2.0 * PI * (i as f64 + 0.5) / 720.0;
        let b = p.b11_sq(th, p.rate(th));
        if b.is_nan() || b <= 0.0 {
            return Err(FamilyError::Constant {
                name: "b11^2".into(),
                message: format!("b11^2 must stay positive, got {b:.3e} at theta = {th:.4}"),
            });
        }
    }
    Ok(())
}

pub(super) fn keq1_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let p = Keq1::from(&Consts(&input.constants))?;
    Ok(TimeLaw {
        m: 6,
        state_names: vec!["theta".into()],
        y0: vec![initial(input, "theta")],
        rhs: Arc::new(move |_t, y| Ok(vec![p.rate(y[0])])),
        frame: Arc::new(move |_t, y| Ok(p.frame(y[0]))),
        margins: vec![
            Margin {
                label: "1 + cos(theta)".into(),
                threshold: KEQ1_MARGIN,
                f: Arc::new(|_, y| Ok(1.0 + y[0].cos())),
            },
            Margin {
                label: "b11^2".into(),
                threshold: 1e-10,
                f: Arc::new(move |_, y| Ok(p.b11_sq(y[0], p.rate(y[0])))),
            },
        ],
    })
}

pub(super) fn keq1_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let p = Keq1::from(c)?;
    let (g2, d) = (p.gamma * p.gamma, p.d());
    let q13 = (-p.c36 * p.c46 * g2 / 2.0 + 2.0 * p.m0 * p.m1) / d;
    let nz = [
        ((1, 2), p.c12),
        ((1, 3), q13),
        ((1, 4), (-p.c46 * p.c46 * g2 / 2.0 - 2.0 * p.m1 * p.m1) / d),
        ((1, 5), -p.c46 / 2.0),
        ((1, 6), p.c36 / 2.0),
        ((2, 3), (p.c36 * p.c36 * g2 / 2.0 + 2.0 * p.m0 * p.m0) / d),
        ((2, 4), -q13),
        ((2, 5), p.c36 / 2.0),
        ((2, 6), p.c46 / 2.0),
        ((3, 6), p.c36),
        ((4, 6), p.c46),
        ((5, 6), p.c56),
    ];
    Ok(Declared {
        q: Declared::q_table(6, &nz, &[]),
        p: vec![],
    })
}

/// h for the elliptic normal form with f1 = v4(z3) and (ux, uy) = ∇v5.
pub(super) fn vorticity(
    d: &Declared,
    v: &SpatialComponent,
    z: &[f64; 3],
) -> Result<[f64; 3], ExprError> {
    let q = |i, j| declared_q(d, i, j);
    let f1 = partial(v, "f1", &["z3"], z)?;
    let ux = partial(v, "f2", &["z1"], z)?;
    let uy = partial(v, "f2", &["z2"], z)?;
    let a = q(3, 6) + q(4, 6) * f1;
    let b = q(3, 5) + q(4, 5) * f1;
    Ok([
        q(2, 3) + q(2, 4) * f1 + a * ux - b * uy,
        -q(1, 3) - q(1, 4) * f1 + b * ux + a * uy,
        q(1, 2) - q(5, 6) * (ux * ux + uy * uy) - (q(1, 6) + q(2, 5)) * ux
            + (q(1, 5) - q(2, 6)) * uy,
    ])
}

pub(super) fn trig_law(theta0: f64) -> Result<TimeLaw, FamilyError> {
    Ok(TimeLaw::explicit(
        6,
        Arc::new(move |t: Jet, _y: &[Jet]| {
            let a = cj(theta0) * t;
            let (c, s) = (a.cos(), a.sin());
            let (c2, s2) = ((a * cj(2.0)).cos(), (a * cj(2.0)).sin());
            let z = cj(0.0);
            Ok(Frame::from_rows(
                [
                    vec![c, -s, c, s, z, z],
                    vec![s, c, -s, c, z, z],
                    vec![z, z, z, z, c2, s2],
                ],
                [z, z, z],
            ))
        }),
    ))
}

pub(super) fn trig_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let th = c.get("theta0")?;
    let combo = |a: &[usize], sa: f64, b: &[usize], sb: f64, v: f64| {
        LinearCheck::combo("p", &[(a, sa), (b, sb)], v)
    };
    Ok(Declared {
        q: Declared::q_table(
            6,
            &[((1, 2), 2.0 * th), ((3, 4), -2.0 * th), ((5, 6), -2.0 * th)],
            &[],
        ),
        p: vec![
            combo(&[1, 2, 5], 1.0, &[3, 4, 5], -1.0, 0.0),
            combo(&[1, 2, 6], 1.0, &[3, 4, 6], -1.0, 0.0),
            combo(&[1, 3, 5], 1.0, &[2, 3, 6], -1.0, 0.0),
            combo(&[1, 4, 6], 1.0, &[2, 4, 5], 1.0, 0.0),
            combo(&[1, 3, 6], 1.0, &[2, 3, 5], 1.0, -1.0),
            combo(&[2, 4, 6], 1.0, &[1, 4, 5], -1.0, -1.0),
        ],
    })
}
