//! Gauge matrices: A → AH, v → H⁻¹v leaves φ unchanged and is how the
//! normal forms are reached from general data.

use rand::Rng;

use super::VerifyError;
use crate::temporal::invert_gauge;

pub fn identity(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// m = 4 shear that removes p124 and p134 when p123 = 1:
/// column 4 gains e134·A₂ − e124·A₃.
pub fn shear_m4(e124: f64, e134: f64) -> Vec<Vec<f64>> {
    let mut h = identity(4);
    h[1][3] = e134;
    h[2][3] = -e124;
    h
}

/// m = 5 boost mixing (1, 2) with (4, 5) at rapidity s and angle d.
pub fn boost_m5(s: f64, d: f64) -> Vec<Vec<f64>> {
    let (ch, sh) = (s.cosh(), s.sinh());
    let (c, sn) = (d.cos(), d.sin());
    vec![
        vec![ch, 0.0, 0.0, sh * c, sh * sn],
        vec![0.0, ch, 0.0, sh * sn, -sh * c],
        vec![0.0, 0.0, 1.0, 0.0, 0.0],
        vec![sh * c, sh * sn, 0.0, ch, 0.0],
        vec![sh * sn, -sh * c, 0.0, 0.0, ch],
    ]
}

/// (s, d) with c15 = c12 cos d tanh 2s and c14 = −c12 sin d tanh 2s;
/// A → A·boost_m5(s, d) then has c14 = c15 = 0. Needs c12² > c14² + c15².
pub fn boost_parameters(c12: f64, c14: f64, c15: f64) -> Result<(f64, f64), VerifyError> {
    let r = c14.hypot(c15);
    if c12 == 0.0 || r >= c12.abs() {
        return Err(VerifyError::Gauge(format!(
            "boost needs c12^2 > c14^2 + c15^2 (c12 = {c12}, c14 = {c14}, c15 = {c15})"
        )));
    }
    let s = 0.5 * (r / c12.abs()).atanh();
    if r == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((s, (-c14 / c12).atan2(c15 / c12)))
}

/// I + spread·U(−1, 1) entries, redrawn until the condition number is below `max_cond`.
pub fn random_gauge(m: usize, spread: f64, max_cond: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    loop {
        let mut h = identity(m);
        for row in h.iter_mut() {
            for x in row.iter_mut() {
                *x += spread * rng.gen_range(-1.0..1.0);
            }
        }
        if matches!(invert_gauge(&h), Ok((_, c)) if c < max_cond) {
            return h;
        }
    }
}
