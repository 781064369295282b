//! m = 3 and m = 4.

use std::sync::Arc;

use super::{cj, initial, partial, time_fn, Consts, FamilyError, FamilyInput};
use crate::expr::ExprError;
use crate::jet::Jet;
use crate::spatial::SpatialComponent;
use crate::temporal::{Declared, Frame, LinearCheck, Margin, TimeLaw};

pub(crate) fn abs_margin(
    label: &str,
    f: impl Fn(f64, &[f64]) -> Result<f64, String> + Send + Sync + 'static,
) -> Margin {
    Margin {
        label: label.to_string(),
        threshold: 1e-8,
        f: Arc::new(move |t, y| f(t, y).map(f64::abs)),
    }
}

pub(super) fn m3_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let c = Consts(&input.constants);
    let (c12, c13, c23) = (c.get("c12")?, c.get("c13")?, c.get("c23")?);
    let [b11, b22, w1, w2, w3] = ["b11", "b22", "w1", "w2", "w3"].map(|n| time_fn(input, n));
    let (b11, b22, w1, w2, w3) = (b11?, b22?, w1?, w2?, w3?);
    let (f11, f22) = (b11.clone(), b22.clone());
    let (g11, g22, gw1, gw2, gw3) = (b11.clone(), b22.clone(), w1.clone(), w2.clone(), w3.clone());
    let rhs = Arc::new(move |t: Jet, y: &[Jet]| {
        let (x11, x22) = (b11.at(t)?, b22.at(t)?);
        let (d11, d22) = (b11.rate(t)?, b22.rate(t)?);
        let (v1, v2, v3) = (w1.at(t)?, w2.at(t)?, w3.at(t)?);
        let (b12, b13, b23) = (y[0], y[1], y[2]);
        let d12 = (cj(-c12) + x11 * x22 * v3 + b12 * d11) / x11;
        let d13 = cj(-c13) / x11 + b23 * v3 + b13 * d11 / x11 - v2 / (x11 * x22);
        let d23 =
            (cj(-c12) * b13 + cj(c13) * b12 + (cj(-c23) + b23 * d22) * x11 + v1) / (x11 * x22);
        Ok(vec![d12, d13, d23])
    });
    let frame = Arc::new(move |t: Jet, y: &[Jet]| {
        let (x11, x22) = (g11.at(t)?, g22.at(t)?);
        let z = cj(0.0);
        Ok(Frame::from_rows(
            [
                vec![x11, y[0], y[1]],
                vec![z, x22, y[2]],
                vec![z, z, cj(1.0) / (x11 * x22)],
            ],
            [gw1.at(t)?, gw2.at(t)?, gw3.at(t)?],
        ))
    });
    Ok(TimeLaw {
        m: 3,
        state_names: vec!["b12".into(), "b13".into(), "b23".into()],
        y0: vec![
            initial(input, "b12"),
            initial(input, "b13"),
            initial(input, "b23"),
        ],
        rhs,
        frame,
        margins: vec![
            abs_margin("b11", move |t, _| f11.value(t)),
            abs_margin("b22", move |t, _| f22.value(t)),
        ],
    })
}

pub(super) fn m3_declared(c: &Consts) -> Result<Declared, FamilyError> {
    Ok(Declared {
        q: Declared::q_table(
            3,
            &[
                ((1, 2), c.get("c12")?),
                ((1, 3), c.get("c13")?),
                ((2, 3), c.get("c23")?),
            ],
            &[],
        ),
        p: vec![LinearCheck::single("p", &[1, 2, 3], 1.0)],
    })
}

const M4_PAIRS: [(usize, usize); 6] = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)];

fn m4_c(c: &Consts) -> Result<[f64; 6], FamilyError> {
    let mut out = [0.0; 6];
    for (k, (i, j)) in M4_PAIRS.iter().enumerate() {
        out[k] = c.get(&format!("c{i}{j}"))?;
    }
    Ok(out)
}

pub(super) fn m4_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    let [c12, c13, c14, c23, c24, c34] = m4_c(&Consts(&input.constants))?;
    let (b11, b22, w1) = (
        time_fn(input, "b11")?,
        time_fn(input, "b22")?,
        time_fn(input, "w1")?,
    );
    let (g11, g22, gw1) = (b11.clone(), b22.clone(), w1.clone());
    let (f11, f22) = (b11.clone(), b22.clone());
    let k23 = c23 + (c12 * c34 - c13 * c24) / c14;
    let rhs = Arc::new(move |t: Jet, y: &[Jet]| {
        let (x11, x22, v1) = (b11.at(t)?, b22.at(t)?, w1.at(t)?);
        let (d11, d22) = (b11.rate(t)?, b22.rate(t)?);
        let (b14, b23) = (y[0], y[1]);
        let d14 = (b14 * d11 - cj(c14)) / x11;
        let d23 = (x11 * b23 * d22 + v1) / (x11 * x22) - cj(k23) / x22;
        Ok(vec![d14, d23])
    });
    let frame = Arc::new(move |t: Jet, y: &[Jet]| {
        let (x11, x22) = (g11.at(t)?, g22.at(t)?);
        let (b14, b23) = (y[0], y[1]);
        let b12 = (cj(c24) * x11 + cj(c12) * b14) / cj(c14);
        let b13 = (cj(c34) * x11 + cj(c13) * b14) / cj(c14);
        let z = cj(0.0);
        Ok(Frame::from_rows(
            [
                vec![x11, b12, b13, b14],
                vec![z, x22, b23, z],
                vec![z, z, cj(1.0) / (x11 * x22), z],
            ],
            [gw1.at(t)?, z, z],
        ))
    });
    Ok(TimeLaw {
        m: 4,
        state_names: vec!["b14".into(), "b23".into()],
        y0: vec![initial(input, "b14"), initial(input, "b23")],
        rhs,
        frame,
        margins: vec![
            abs_margin("b11", move |t, _| f11.value(t)),
            abs_margin("b22", move |t, _| f22.value(t)),
        ],
    })
}

pub(super) fn m4_declared(c: &Consts) -> Result<Declared, FamilyError> {
    let cs = m4_c(c)?;
    let nz: Vec<_> = M4_PAIRS.iter().copied().zip(cs).collect();
    Ok(Declared {
        q: Declared::q_table(4, &nz, &[]),
        p: vec![
            LinearCheck::single("p", &[1, 2, 3], 1.0),
            LinearCheck::single("p", &[1, 2, 4], 0.0),
            LinearCheck::single("p", &[1, 3, 4], 0.0),
        ],
    })
}

pub(super) fn m4_vorticity(
    c: &Consts,
    v: &SpatialComponent,
    z: &[f64; 3],
) -> Result<[f64; 3], ExprError> {
    let get = |n: &str| c.get(n).map_err(|e| ExprError::Unbound(e.to_string()));
    let [c12, c13, c14, c23, c24, c34] = [
        get("c12")?,
        get("c13")?,
        get("c14")?,
        get("c23")?,
        get("c24")?,
        get("c34")?,
    ];
    let f3 = partial(v, "f", &["z3"], z)?;
    let f2 = partial(v, "f", &["z2"], z)?;
    Ok([c24 * f3 - c34 * f2 + c23, -c14 * f3 - c13, c14 * f2 + c12])
}
