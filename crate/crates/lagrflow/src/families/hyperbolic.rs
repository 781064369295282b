//! m = 6 hyperbolic families.

use std::sync::Arc;

use super::kirchhoff::abs_margin;
use super::{cj, declared_q, initial, partial, time_fn, Consts, FamilyError, FamilyInput, TimeFn};
use crate::expr::ExprError;
use crate::jet::{Jet, Scalar};
use crate::spatial::SpatialComponent;
use crate::temporal::{Declared, Frame, LinearCheck, Margin, TimeLaw};

fn p(idx: &[usize], v: f64) -> LinearCheck {
    LinearCheck::single("p", idx, v)
}

/// B for the hyperbolic normal form with b12 = b13 = b23 = 0.
fn hyp_b(b11: Jet, b22: Jet, l1: Jet, l2: Jet) -> [Vec<Jet>; 3] {
    hyp_b_full(b11, cj(0.0), cj(0.0), b22, cj(0.0), l1, l2)
}

fn hyp_b_full(b11: Jet, b12: Jet, b13: Jet, b22: Jet, b23: Jet, l1: Jet, l2: Jet) -> [Vec<Jet>; 3] {
    let z = cj(0.0);
    let b33 = cj(1.0) / (b11 * b22);
    [
        vec![b11, b12, b13, l2 * b12, b13 / (l1 * l2), l1 * b11],
        vec![z, b22, b23, l2 * b22, b23 / (l1 * l2), z],
        vec![z, z, b33, z, b33 / (l1 * l2), z],
    ]
}

/// Quadratic for X = b22²: a X² + b X + c = 0.
fn hyp_i_quadratic<S: Scalar>(c16: f64, c24: f64, c35: f64, b11: S, l1: S, l2: S) -> (S, S, S) {
    let b2 = b11 * b11;
    let a = S::cst(c35) * l1 * l1 * l2 * l2 * b2 * b2;
    (a, S::cst(c16) * l2, S::cst(c24) * b2 * l1)
}

fn hyp_i_root<S: Scalar>(q: (S, S, S), branch: f64) -> S {
    let (a, b, c) = q;
    let disc = b * b - S::cst(4.0) * a * c;
    (-b + S::cst(branch) * disc.sqrt()) / (S::cst(2.0) * a)
}

pub(super) fn law_i(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let c = Consts(&input.constants);
    let (c16, c24, c35) = (c.get("c16")?, c.get("c24")?, c.get("c35")?);
    let b11 = time_fn(input, "b11")?;
    let y0 = vec![initial(input, "l1"), initial(input, "l2")];
    let x_ref = b11
        .value(input.t_ref)
        .map_err(|message| FamilyError::Constant {
            name: "b11".into(),
            message,
        })?;
    let q = hyp_i_quadratic(c16, c24, c35, x_ref, y0[0], y0[1]);
    let branch = [-1.0, 1.0]
        .into_iter()
        .find(|&s| {
            let x = hyp_i_root(q, s);
            x.is_finite() && x > 0.0
        })
        .ok_or_else(|| FamilyError::Constant {
            name: "l1, l2".into(),
            message: "no positive root b22^2 of the quadratic relation at t_ref".into(),
        })?;

    let b22sq = move |f: &TimeFn, t: Jet, y: &[Jet]| -> Result<(Jet, Jet), String> {
        let x = f.at(t)?;
        Ok((
            x,
            hyp_i_root(hyp_i_quadratic(c16, c24, c35, x, y[0], y[1]), branch),
        ))
    };
    let (fr, fm1, fm2, fm3) = (b11.clone(), b11.clone(), b11.clone(), b11.clone());
    let rhs = Arc::new(move |t: Jet, y: &[Jet]| {
        let (x, bsq) = b22sq(&b11, t, y)?;
        Ok(vec![cj(-c16) / (x * x), cj(-c24) / bsq])
    });
    let frame = Arc::new(move |t: Jet, y: &[Jet]| {
        let (x, bsq) = b22sq(&fr, t, y)?;
        Ok(Frame::from_rows(
            hyp_b(x, bsq.sqrt(), y[0], y[1]),
            [cj(0.0); 3],
        ))
    });
    let disc_margin = Margin {
        label: "discriminant (relative)".into(),
        threshold: 1e-10,
        f: Arc::new(move |t, y| {
            let (a, b, c) = hyp_i_quadratic(c16, c24, c35, fm1.value(t)?, y[0], y[1]);
            Ok((b * b - 4.0 * a * c) / (b * b + (4.0 * a * c).abs()))
        }),
    };
    let x_margin = Margin {
        label: "b22^2".into(),
        threshold: 1e-8,
        f: Arc::new(move |t, y| {
            let q = hyp_i_quadratic(c16, c24, c35, fm2.value(t)?, y[0], y[1]);
            Ok(hyp_i_root(q, branch))
        }),
    };
    Ok(TimeLaw {
        m: 6,
        state_names: vec!["l1".into(), "l2".into()],
        y0,
        rhs,
        frame,
        margins: vec![
            abs_margin("b11", move |t, _| fm3.value(t)),
            abs_margin("l1", |_, y| Ok(y[0])),
            abs_margin("l2", |_, y| Ok(y[1])),
            disc_margin,
            x_margin,
        ],
    })
}

const HYP_P_ZERO: [[usize; 3]; 6] = [
    [1, 2, 6],
    [1, 3, 5],
    [1, 5, 6],
    [2, 3, 4],
    [2, 4, 6],
    [3, 4, 5],
];

pub(super) fn declared_i(c: &Consts) -> Result<Declared, FamilyError> {
    let nz = [
        ((1, 6), c.get("c16")?),
        ((2, 4), c.get("c24")?),
        ((3, 5), c.get("c35")?),
    ];
    let mut pp = vec![p(&[1, 2, 3], 1.0), p(&[4, 5, 6], 1.0)];
    pp.extend(HYP_P_ZERO.iter().map(|ix| p(ix, 0.0)));
    Ok(Declared {
        q: Declared::q_table(6, &nz, &[(1, 4), (2, 5), (3, 6)]),
        p: pp,
    })
}

pub(super) fn vorticity_i(
    d: &Declared,
    v: &SpatialComponent,
    z: &[f64; 3],
) -> Result<[f64; 3], ExprError> {
    let (c16, c24, c35) = (
        declared_q(d, 1, 6),
        declared_q(d, 2, 4),
        declared_q(d, 3, 5),
    );
    Ok([
        -c35 * partial(v, "f2", &["z2"], z)?,
        -c16 * partial(v, "f3", &["z3"], z)?,
        -c24 * partial(v, "f1", &["z1"], z)?,
    ])
}

pub(super) fn validate_ii(c: &Consts) -> Result<(), FamilyError> {
    for n in ["k0", "k1", "k2", "m0", "m1"] {
        c.nonzero(n)?;
    }
    for n in ["k3", "k4", "k5"] {
        c.get(n)?;
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct HypII {
    k: [f64; 6],
    m0: f64,
    m1: f64,
}

impl HypII {
    fn from(c: &Consts) -> Result<HypII, FamilyError> {
        let mut k = [0.0; 6];
        for (i, slot) in k.iter_mut().enumerate() {
            *slot = c.get(&format!("k{i}"))?;
        }
        Ok(HypII {
            k,
            m0: c.get("m0")?,
            m1: c.get("m1")?,
        })
    }

    fn rate<S: Scalar>(&self, l1: S) -> S {
        let s = S::cst(self.m1) * l1 + S::cst(self.m0);
        (S::cst(self.k[0]) * l1 * l1 * s * s).cbrt()
    }

    fn frame(&self, l1: Jet) -> [Vec<Jet>; 3] {
        let k = self.k;
        let s = cj(self.m1) * l1 + cj(self.m0);
        let l2 = cj(1.0) / s;
        let b11 = (cj(k[1]) / (l1 * s)).cbrt();
        hyp_b_full(
            b11,
            cj(k[3]) * b11 * s,
            cj(k[4]) * b11 * l1,
            cj(k[2]) * b11 * s,
            cj(k[5]) * b11 * l1,
            l1,
            l2,
        )
    }
}

pub(super) fn law_ii(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let h = HypII::from(&Consts(&input.constants))?;
    Ok(TimeLaw {
        m: 6,
        state_names: vec!["l1".into()],
        y0: vec![initial(input, "l1")],
        rhs: Arc::new(move |_t, y| Ok(vec![h.rate(y[0])])),
        frame: Arc::new(move |_t, y| Ok(Frame::from_rows(h.frame(y[0]), [cj(0.0); 3]))),
        margins: vec![
            abs_margin("l1", |_, y| Ok(y[0])),
            abs_margin("m1*l1+m0", move |_, y| Ok(h.m1 * y[0] + h.m0)),
        ],
    })
}

pub(super) fn declared_ii(c: &Consts) -> Result<Declared, FamilyError> {
    let HypII { k, m0, m1 } = HypII::from(c)?;
    let k0c = k[0].cbrt();
    let k1c = k[1].cbrt();
    let kap = k0c * k1c * k1c;
    let k25 = k[2] * k[5] + k[3] * k[4];
    let nz = [
        ((1, 2), -kap * k[3] * m1),
        ((1, 3), -kap * k[4]),
        ((1, 5), -kap * k[4] * m1),
        ((1, 6), -kap),
        ((2, 3), -kap * m0 * k25),
        ((2, 4), kap * m1 * (k[2] * k[2] + k[3] * k[3])),
        ((2, 6), -kap * k[3] * m0),
        ((3, 4), kap * k25),
        (
            (3, 5),
            k0c * m0 * (k[1] * k[1] * k[2] * k[2] * (k[4] * k[4] + k[5] * k[5]) + 1.0)
                / (k1c.powi(4) * k[2] * k[2]),
        ),
        ((4, 5), -kap * m1 * k25),
        ((4, 6), -kap * k[3]),
        ((5, 6), -kap * k[4] * m0),
    ];
    let mut pp = vec![p(&[1, 2, 3], 1.0), p(&[4, 5, 6], 1.0)];
    pp.extend(HYP_P_ZERO.iter().map(|ix| p(ix, 0.0)));
    Ok(Declared {
        q: Declared::q_table(6, &nz, &[]),
        p: pp,
    })
}

pub(super) fn validate_ext(c: &Consts) -> Result<(), FamilyError> {
    let (c1, c2) = (c.get("c1")?, c.get("c2")?);
    if (c1 - c2).abs() > 1e-12 * (1.0 + c1.abs()) {
        return Err(FamilyError::Constant {
            name: "c2".into(),
            message: format!("the extension requires c1 == c2 (got {c1} and {c2})"),
        });
    }
    Ok(())
}

/// The exponential time component: A = diag blocks of e^{±c t}, w = 0.
pub fn exponential_law(c1: f64, c2: f64) -> TimeLaw {
    TimeLaw::explicit(
        6,
        Arc::new(move |t: Jet, _y: &[Jet]| {
            let e = |k: f64| (cj(k) * t).exp();
            let z = cj(0.0);
            Ok(Frame::from_rows(
                [
                    vec![e(c1), z, z, z, z, e(-c1)],
                    vec![z, e(c2), z, e(-c2), z, z],
                    vec![z, z, e(-(c1 + c2)), z, e(c1 + c2), z],
                ],
                [z, z, z],
            ))
        }),
    )
}

pub(super) fn declared_ext(c: &Consts) -> Result<Declared, FamilyError> {
    let (c1, c2) = (c.get("c1")?, c.get("c2")?);
    Ok(Declared {
        q: Declared::q_table(
            6,
            &[
                ((1, 6), 2.0 * c1),
                ((2, 4), 2.0 * c2),
                ((3, 5), -2.0 * (c1 + c2)),
            ],
            &[],
        ),
        p: vec![
            p(&[1, 2, 3], 1.0),
            p(&[4, 5, 6], 1.0),
            LinearCheck::combo("p", &[(&[1, 4, 5], 1.0), (&[2, 5, 6], -1.0)], 0.0),
            LinearCheck::combo("p", &[(&[1, 3, 4], 1.0), (&[2, 3, 6], 1.0)], 0.0),
        ],
    })
}
