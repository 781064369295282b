//! The three m = 5 normal forms.

use std::sync::Arc;

use super::kirchhoff::abs_margin;
use super::{cj, initial, partial, time_fn, Consts, FamilyError, FamilyInput};
use crate::expr::ExprError;
use crate::jet::{Jet, Scalar};
use crate::spatial::SpatialComponent;
use crate::temporal::{Declared, Frame, LinearCheck, TimeLaw};

fn p(idx: &[usize], v: f64) -> LinearCheck {
    LinearCheck::single("p", idx, v)
}

fn const_of(c: &Consts, n: &str) -> Result<f64, ExprError> {
    c.get(n).map_err(|e| ExprError::Unbound(e.to_string()))
}

pub(super) fn elliptic_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let c12 = Consts(&input.constants).get("c12")?;
    let b11 = time_fn(input, "b11")?;
    let (g11, f11) = (b11.clone(), b11.clone());
    let rhs = Arc::new(move |t: Jet, _y: &[Jet]| {
        let x = b11.at(t)?;
        Ok(vec![cj(-c12) / (x * x)])
    });
    let frame = Arc::new(move |t: Jet, y: &[Jet]| {
        let x = g11.at(t)?;
        let (c, s) = (y[0].cos(), y[0].sin());
        let z = cj(0.0);
        Ok(Frame::from_rows(
            [
                vec![x, z, z, c * x, -(s * x)],
                vec![z, x, z, s * x, c * x],
                vec![z, z, cj(1.0) / (x * x), z, z],
            ],
            [z, z, cj(c12) / (x * x)],
        ))
    });
    Ok(TimeLaw {
        m: 5,
        state_names: vec!["theta".into()],
        y0: vec![initial(input, "theta")],
        rhs,
        frame,
        margins: vec![abs_margin("b11", move |t, _| f11.value(t))],
    })
}

pub(super) fn elliptic_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let c12 = c.get("c12")?;
    Ok(Declared {
        q: Declared::q_table(5, &[((1, 2), c12), ((4, 5), -c12)], &[]),
        p: vec![
            p(&[1, 2, 3], 1.0),
            p(&[3, 4, 5], 1.0),
            LinearCheck::combo("p", &[(&[1, 3, 4], 1.0), (&[2, 3, 5], -1.0)], 0.0),
            LinearCheck::combo("p", &[(&[1, 3, 5], 1.0), (&[2, 3, 4], 1.0)], 0.0),
            p(&[1, 2, 4], 0.0),
            p(&[1, 2, 5], 0.0),
            p(&[1, 4, 5], 0.0),
            p(&[2, 4, 5], 0.0),
        ],
    })
}

pub(super) fn elliptic_vorticity(
    c: &Consts,
    v: &SpatialComponent,
    z: &[f64; 3],
) -> Result<[f64; 3], ExprError> {
    let c12 = const_of(c, "c12")?;
    let d = |n: &str, vars: &[&str]| partial(v, n, vars, z);
    let (a100, a010, a001) = (d("f1", &["z1"])?, d("f1", &["z2"])?, d("f1", &["z3"])?);
    let b001 = d("f2", &["z3"])?;
    Ok([
        c12 * (-a100 * a001 - a010 * b001),
        c12 * (a100 * b001 - a010 * a001),
        c12 * (a100 * a100 + a010 * a010 + 1.0),
    ])
}

pub(super) fn hyperbolic_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let c15 = Consts(&input.constants).get("c15")?;
    let b11 = time_fn(input, "b11")?;
    let (g11, f11) = (b11.clone(), b11.clone());
    let rhs = Arc::new(move |t: Jet, _y: &[Jet]| {
        let x = b11.at(t)?;
        Ok(vec![cj(-c15) / (x * x)])
    });
    let frame = Arc::new(move |t: Jet, y: &[Jet]| {
        let x = g11.at(t)?;
        let l = y[0];
        let z = cj(0.0);
        Ok(Frame::from_rows(
            [
                vec![x, z, z, z, l * x],
                vec![z, l * x, z, x, z],
                vec![z, z, cj(1.0) / (l * x * x), z, z],
            ],
            [z, z, z],
        ))
    });
    Ok(TimeLaw {
        m: 5,
        state_names: vec!["l".into()],
        y0: vec![initial(input, "l")],
        rhs,
        frame,
        margins: vec![
            abs_margin("b11", move |t, _| f11.value(t)),
            abs_margin("l", |_, y| Ok(y[0])),
        ],
    })
}

pub(super) fn hyperbolic_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let c15 = c.get("c15")?;
    Ok(Declared {
        q: Declared::q_table(5, &[((1, 5), c15), ((2, 4), -c15)], &[]),
        p: vec![
            p(&[1, 2, 3], 1.0),
            p(&[3, 4, 5], -1.0),
            p(&[1, 3, 5], 0.0),
            p(&[2, 3, 4], 0.0),
            p(&[1, 2, 4], 0.0),
            p(&[1, 2, 5], 0.0),
            p(&[1, 4, 5], 0.0),
            p(&[2, 4, 5], 0.0),
        ],
    })
}

pub(super) fn hyperbolic_vorticity(
    c: &Consts,
    v: &SpatialComponent,
    z: &[f64; 3],
) -> Result<[f64; 3], ExprError> {
    let c15 = const_of(c, "c15")?;
    let d = |n: &str, vars: &[&str]| partial(v, n, vars, z);
    Ok([
        -c15 * d("f1", &["z3"])?,
        -c15 * d("f2", &["z3"])?,
        c15 * (d("f1", &["z1"])? + d("f2", &["z2"])?),
    ])
}

pub(super) fn parabolic_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let c12 = Consts(&input.constants).get("c12")?;
    let b12 = time_fn(input, "b12")?;
    let (g12, f12) = (b12.clone(), b12.clone());
    let rhs = Arc::new(move |t: Jet, _y: &[Jet]| {
        let x = b12.at(t)?;
        Ok(vec![cj(c12) / (x * x)])
    });
    let frame = Arc::new(move |t: Jet, y: &[Jet]| {
        let x = g12.at(t)?;
        let l = y[0];
        let z = cj(0.0);
        Ok(Frame::from_rows(
            [
                vec![l * x, x, z, z, z],
                vec![z, z, cj(1.0) / (x * x), z, z],
                vec![z, z, z, x, l * x],
            ],
            [z, z, z],
        ))
    });
    Ok(TimeLaw {
        m: 5,
        state_names: vec!["l".into()],
        y0: vec![initial(input, "l")],
        rhs,
        frame,
        margins: vec![abs_margin("b12", move |t, _| f12.value(t))],
    })
}

pub(super) fn parabolic_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let c12 = c.get("c12")?;
    Ok(Declared {
        q: Declared::q_table(5, &[((1, 2), c12), ((4, 5), -c12)], &[]),
        p: vec![
            p(&[2, 3, 4], 1.0),
            p(&[1, 2, 3], 0.0),
            p(&[3, 4, 5], 0.0),
            LinearCheck::combo("p", &[(&[2, 3, 5], 1.0), (&[1, 3, 4], -1.0)], 0.0),
            p(&[1, 2, 4], 0.0),
            p(&[1, 2, 5], 0.0),
            p(&[1, 4, 5], 0.0),
            p(&[2, 4, 5], 0.0),
        ],
    })
}

pub(super) fn parabolic_vorticity(
    c: &Consts,
    v: &SpatialComponent,
    z: &[f64; 3],
) -> Result<[f64; 3], ExprError> {
    let c12 = const_of(c, "c12")?;
    let d = |n: &str, vars: &[&str]| partial(v, n, vars, z);
    let (a100, a001) = (d("f1", &["z1"])?, d("f1", &["z3"])?);
    let (b100, b001, b200, b101) = (
        d("f2", &["z1"])?,
        d("f2", &["z3"])?,
        d("f2", &["z1", "z1"])?,
        d("f2", &["z1", "z3"])?,
    );
    Ok([
        -c12 * b100 * b001,
        c12 * (a100 * b001 - b100 * a001 + z[1] * (b200 * b001 - b100 * b101)),
        c12 * (b100 * b100 + 1.0),
    ])
}
