//! m = 6 parabolic families.

use std::sync::Arc;

use super::kirchhoff::abs_margin;
use super::{cj, declared_q, initial, partial, Consts, FamilyError, FamilyInput};
use crate::expr::ExprError;
use crate::jet::{Jet, Scalar};
use crate::spatial::SpatialComponent;
use crate::temporal::{Declared, Frame, LinearCheck, Margin, TimeLaw};

#[allow(clippy::too_many_arguments)]
fn par_b(l1: Jet, l2: Jet, b12: Jet, b13: Jet, b15: Jet, b23: Jet, b25: Jet) -> [Vec<Jet>; 3] {
    let z = cj(0.0);
    let b33 = cj(-1.0) / (b12 * b25);
    [
        vec![l1 * b12, b12, b13, l2 * b15, b15, l1 * b15 + b13 / l2],
        vec![z, z, b23, l2 * b25, b25, l1 * b25 + b23 / l2],
        vec![z, z, b33, z, z, b33 / l2],
    ]
}

fn p(idx: &[usize], v: f64) -> LinearCheck {
    LinearCheck::single("p", idx, v)
}

pub(super) fn validate_main(c: &Consts) -> Result<(), FamilyError> {
    for n in ["k0", "k2", "k3", "c12", "c45"] {
        c.nonzero(n)?;
    }
    for n in ["k1", "k4"] {
        c.get(n)?;
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Main {
    k: [f64; 5],
    c12: f64,
    c45: f64,
}

impl Main {
    fn from(c: &Consts) -> Result<Main, FamilyError> {
        let mut k = [0.0; 5];
        for (i, slot) in k.iter_mut().enumerate() {
            *slot = c.get(&format!("k{i}"))?;
        }
        Ok(Main {
            k,
            c12: c.get("c12")?,
            c45: c.get("c45")?,
        })
    }

    fn denom<S: Scalar>(&self, l2: S) -> S {
        S::cst(self.k[0]) - S::cst(self.k[2]) * l2 * l2
    }

    fn rate<S: Scalar>(&self, l2: S) -> S {
        let l4 = (l2 * l2) * (l2 * l2);
        (S::cst(self.k[3]) * l4 / self.denom(l2)).cbrt()
    }

    fn b12_sq<S: Scalar>(&self, l2: S, b25_sq: S) -> S {
        S::cst(-self.c12) * b25_sq * l2 * l2 / (S::cst(self.c45) * self.denom(l2))
    }

    fn frame(&self, l2: Jet) -> Frame {
        let k = self.k;
        let b25_sq = cj(self.c45) / self.rate(l2);
        let b25 = b25_sq.sqrt();
        let b12 = self.b12_sq(l2, b25_sq).sqrt();
        let b23 = (cj(k[4]) * l2 - cj(k[0])) * b25;
        let l1 = cj(k[2]) * l2 + cj(k[1]) + cj(k[0]) / l2;
        let z = cj(0.0);
        Frame::from_rows(par_b(l1, l2, b12, z, z, b23, b25), [z, z, z])
    }
}

pub(super) fn main_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let pm = Main::from(&Consts(&input.constants))?;
    let y0 = vec![initial(input, "l2")];
    let d0 = pm.denom(y0[0]).signum();
    Ok(TimeLaw {
        m: 6,
        state_names: vec!["l2".into()],
        y0,
        rhs: Arc::new(move |_t, y| Ok(vec![pm.rate(y[0])])),
        frame: Arc::new(move |_t, y| Ok(pm.frame(y[0]))),
        margins: vec![
            abs_margin("l2", |_, y| Ok(y[0])),
            Margin {
                label: "k0 - k2 l2^2 (signed)".into(),
                threshold: 1e-8,
                f: Arc::new(move |_, y| Ok(d0 * pm.denom(y[0]))),
            },
            Margin {
                label: "b25^2".into(),
                threshold: 1e-10,
                f: Arc::new(move |_, y| Ok(pm.c45 / pm.rate(y[0]))),
            },
            Margin {
                label: "b12^2".into(),
                threshold: 1e-10,
                f: Arc::new(move |_, y| Ok(pm.b12_sq(y[0], pm.c45 / pm.rate(y[0])))),
            },
        ],
    })
}

const PAR_P_ZERO: [[usize; 3]; 10] = [
    [1, 2, 3],
    [1, 2, 4],
    [1, 2, 5],
    [1, 2, 6],
    [1, 4, 5],
    [2, 4, 5],
    [3, 4, 5],
    [3, 4, 6],
    [3, 5, 6],
    [4, 5, 6],
];

pub(super) fn main_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let Main { k, c12, c45 } = Main::from(c)?;
    let nz = [
        ((1, 2), c12),
        ((3, 4), c45 * k[0]),
        ((3, 5), c45 * k[4]),
        (
            (3, 6),
            c45 * (k[0] * k[2] + k[1] * k[4] + k[4] * k[4]) - k[3] / (c12 * c45),
        ),
        ((4, 5), c45),
        ((4, 6), c45 * (k[1] + k[4])),
        ((5, 6), -c45 * k[2]),
    ];
    Ok(Declared {
        q: Declared::q_table(6, &nz, &[]),
        p: vec![
            p(&[1, 2, 3], 0.0),
            p(&[3, 5, 6], 0.0),
            p(&[2, 3, 5], 1.0),
            LinearCheck::combo("p", &[(&[1, 3, 5], 1.0), (&[2, 3, 6], -1.0)], 0.0),
            p(&[1, 2, 4], 0.0),
            p(&[4, 5, 6], 0.0),
            p(&[2, 4, 5], 0.0),
            LinearCheck::combo("p", &[(&[1, 4, 5], 1.0), (&[2, 4, 6], -1.0)], 1.0),
        ],
    })
}

fn time_margin() -> Margin {
    abs_margin("t", |t, _| Ok(t))
}

fn explicit_with_t_margin(frame: impl Fn(Jet) -> [Vec<Jet>; 3] + Send + Sync + 'static) -> TimeLaw {
    let mut law = TimeLaw::explicit(
        6,
        Arc::new(move |t, _y| Ok(Frame::from_rows(frame(t), [cj(0.0); 3]))),
    );
    law.margins.push(time_margin());
    law
}

fn ks(c: &Consts, names: &[usize]) -> Result<[f64; 9], FamilyError> {
    let mut k = [0.0; 9];
    for &i in names {
        k[i] = c.get(&format!("k{i}"))?;
    }
    Ok(k)
}

pub(super) fn perhe2_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let k = ks(&Consts(&input.constants), &[1, 2, 3, 4, 5, 6, 7])?;
    Ok(explicit_with_t_margin(move |t| {
        let t2 = t * t;
        let t3 = t2 * t;
        par_b(
            cj(k[2] * k[4]) * t3 + cj(k[1]),
            cj(k[4]) * t3,
            cj(k[5]) / t,
            cj(k[6]) * t2,
            cj(0.0),
            cj(k[7]) * t2,
            cj(k[3]) / t,
        )
    }))
}

fn perhe_p() -> Vec<LinearCheck> {
    let mut pp = vec![p(&[2, 3, 5], 1.0), p(&[2, 4, 6], -1.0)];
    pp.extend(PAR_P_ZERO.iter().map(|ix| p(ix, 0.0)));
    pp
}

pub(super) fn perhe2_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let k = ks(c, &[1, 2, 3, 4, 5, 6, 7])?;
    let nz = [
        ((1, 2), 3.0 * k[2] * k[4] * k[5] * k[5]),
        ((1, 3), -3.0 * k[1] * k[5] * k[6]),
        ((1, 6), 3.0 * k[2] * k[5] * k[6]),
        ((2, 3), -3.0 * k[5] * k[6]),
        ((3, 5), 3.0 * k[3] * k[7]),
        (
            (3, 6),
            3.0 * k[1] * k[3] * k[7]
                + 3.0 * k[6] * k[6] / k[4]
                + 3.0 * k[7] * k[7] / k[4]
                + 3.0 / (k[3] * k[3] * k[4] * k[5] * k[5]),
        ),
        ((4, 5), 3.0 * k[3] * k[3] * k[4]),
        ((4, 6), 3.0 * k[3] * (k[1] * k[3] * k[4] + k[7])),
        ((5, 6), -3.0 * k[2] * k[3] * k[3] * k[4]),
    ];
    Ok(Declared {
        q: Declared::q_table(6, &nz, &[]),
        p: perhe_p(),
    })
}

pub(super) fn perhe3_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let k = ks(&Consts(&input.constants), &[0, 1, 3, 4, 5, 6, 7, 8])?;
    Ok(explicit_with_t_margin(move |t| {
        let t2 = t * t;
        let t3 = t2 * t;
        par_b(
            cj(k[1]) + cj(k[0] / k[4]) * t3,
            cj(k[4]) / t3,
            cj(k[3]) / t,
            cj(-k[0] * k[6]) * t2 + cj(k[7]) / t,
            cj(k[6]) * t2,
            cj(-k[0] * k[5]) * t2 + cj(k[8]) / t,
            cj(k[5]) * t2,
        )
    }))
}

pub(super) fn perhe3_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let k = ks(c, &[0, 1, 3, 4, 5, 6, 7, 8])?;
    let a = k[1] * k[4] * k[6] + k[7];
    let s56 = k[5] * k[5] + k[6] * k[6];
    let nz = [
        ((1, 2), 3.0 * k[0] * k[3] * k[3] / k[4]),
        ((1, 3), 3.0 * k[0] * k[3] * a / k[4]),
        ((1, 4), 3.0 * k[0] * k[3] * k[6]),
        ((1, 5), -3.0 * k[1] * k[3] * k[6]),
        ((1, 6), -3.0 * k[1] * k[3] * a / k[4]),
        ((2, 3), 3.0 * k[0] * k[3] * k[6]),
        ((2, 5), -3.0 * k[3] * k[6]),
        ((2, 6), -3.0 * k[3] * a / k[4]),
        ((3, 4), -3.0 * k[0] * k[4] * s56),
        ((3, 5), -3.0 * k[5] * k[8] - 3.0 * k[6] * k[7]),
        (
            (3, 6),
            -3.0 * k[1] * k[5] * k[8]
                - 3.0 * k[1] * k[6] * k[7]
                - 3.0 * k[7] * k[7] / k[4]
                - 3.0 * k[8] * k[8] / k[4]
                - 3.0 / (k[3] * k[3] * k[4] * k[5] * k[5]),
        ),
        ((4, 5), -3.0 * k[4] * s56),
        (
            (4, 6),
            -3.0 * k[1] * k[4] * s56 - 3.0 * k[5] * k[8] - 3.0 * k[6] * k[7],
        ),
    ];
    Ok(Declared {
        q: Declared::q_table(6, &nz, &[]),
        p: perhe_p(),
    })
}

pub(super) fn ext_law() -> TimeLaw {
    explicit_with_t_margin(|t| {
        let (a, b) = (t * t, cj(1.0) / t);
        let z = cj(0.0);
        [
            vec![a, b, z, z, z, z],
            vec![z, z, a, b, z, z],
            vec![z, z, z, z, a, b],
        ]
    })
}

pub(super) fn ext_declared() -> Declared {
    Declared {
        q: Declared::q_table(6, &[((1, 2), 3.0), ((3, 4), 3.0), ((5, 6), 3.0)], &[]),
        p: vec![p(&[1, 4, 6], 1.0), p(&[2, 3, 6], 1.0), p(&[2, 4, 5], 1.0)],
    }
}

/// h for the parabolic normal form v = (z, f1(z3), z2 f3′(z1) + f2(z1), f3(z1)).
pub(super) fn vorticity(
    d: &Declared,
    v: &SpatialComponent,
    z: &[f64; 3],
) -> Result<Option<[f64; 3]>, ExprError> {
    let q = |i, j| declared_q(d, i, j);
    let f1 = partial(v, "f1", &["z3"], z)?;
    let f2 = partial(v, "f2", &["z1"], z)?;
    let f3 = partial(v, "f3", &["z1"], z)?;
    let f3pp = partial(v, "f3", &["z1", "z1"], z)?;
    let u = z[1] * f3pp + f2;
    Ok(Some([
        q(2, 3) - q(3, 5) * f3 + (q(2, 4) - q(4, 5) * f3) * f1,
        -q(1, 3) + q(3, 5) * u + q(3, 6) * f3 + (-q(1, 4) + q(4, 5) * u + q(4, 6) * f3) * f1,
        q(1, 2) - q(2, 5) * u - q(5, 6) * f3 * f3 + (q(1, 5) - q(2, 6)) * f3,
    ]))
}
