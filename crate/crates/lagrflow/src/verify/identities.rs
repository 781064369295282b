//! Algebraic identities every time component obeys: the Plücker relations
//! among the 3×3 minors of A, and Ω ∧ P = 0 for the two-form Ω = Σ Q_ij eᵢ∧eⱼ
//! and the three-form P = Σ p_ijk eᵢ∧eⱼ∧eₖ.

use std::collections::BTreeMap;

use nalgebra::Matrix5;
use num_traits::{Num, Signed};
use serde::Serialize;

use crate::temporal::Mat3m;

/// All 3×3 minors of a 3×m matrix given by rows (1-based sorted keys).
pub fn minors<T: Num + Copy>(rows: &[Vec<T>; 3]) -> BTreeMap<(usize, usize, usize), T> {
    let m = rows[0].len();
    let col = |j: usize| [rows[0][j], rows[1][j], rows[2][j]];
    let mut out = BTreeMap::new();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let (a, b, c) = (col(i), col(j), col(k));
                let d = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                    + a[2] * (b[0] * c[1] - b[1] * c[0]);
                out.insert((i + 1, j + 1, k + 1), d);
            }
        }
    }
    out
}

/// Minor with arbitrary index order; zero on repeated indices.
fn signed<T: Num + Copy>(p: &BTreeMap<(usize, usize, usize), T>, idx: [usize; 3]) -> T {
    let mut ix = idx;
    let mut neg = false;
    for a in 0..3 {
        for b in 0..2 - a {
            if ix[b] > ix[b + 1] {
                ix.swap(b, b + 1);
                neg = !neg;
            }
        }
    }
    if ix[0] == ix[1] || ix[1] == ix[2] {
        return T::zero();
    }
    let v = p[&(ix[0], ix[1], ix[2])];
    if neg {
        T::zero() - v
    } else {
        v
    }
}

/// One three-term-style Plücker relation: its value and Σ |terms|.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relation<T> {
    pub residual: T,
    pub scale: T,
}

/// Σₖ (−1)ᵏ p_{i1 i2 jₖ} p_{J∖jₖ} for every pair i1 < i2 and quadruple J.
pub fn plucker_residuals<T: Num + Signed + Copy>(rows: &[Vec<T>; 3]) -> Vec<Relation<T>> {
    let m = rows[0].len();
    let p = minors(rows);
    let mut out = Vec::new();
    for i1 in 1..=m {
        for i2 in i1 + 1..=m {
            for j1 in 1..=m {
                for j2 in j1 + 1..=m {
                    for j3 in j2 + 1..=m {
                        for j4 in j3 + 1..=m {
                            let j = [j1, j2, j3, j4];
                            let mut res = T::zero();
                            let mut scale = T::zero();
                            for k in 0..4 {
                                let rest: Vec<usize> =
                                    (0..4).filter(|&x| x != k).map(|x| j[x]).collect();
                                let term = signed(&p, [i1, i2, j[k]])
                                    * signed(&p, [rest[0], rest[1], rest[2]]);
                                if k % 2 == 0 {
                                    res = res + term;
                                } else {
                                    res = res - term;
                                }
                                scale = scale + term.abs();
                            }
                            out.push(Relation {
                                residual: res,
                                scale,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Largest Plücker residual of a float matrix relative to (max |p|)².
pub fn plucker_max_relative(rows: &[Vec<f64>; 3]) -> f64 {
    let pmax = minors(rows).values().fold(0.0f64, |a, x| a.max(x.abs()));
    let worst = plucker_residuals(rows)
        .iter()
        .fold(0.0f64, |a, r| a.max(r.residual.abs()));
    if pmax > 0.0 {
        worst / (pmax * pmax)
    } else {
        worst
    }
}

/// The four displayed minor identities on the leading columns, each `None`
/// when the matrix has too few columns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinorLemma<T> {
    /// p123 p145 − p124 p135 + p125 p134 (m ≥ 5)
    pub three_term: Option<T>,
    /// p123 p456 − p124 p356 + p125 p346 − p126 p345 (m ≥ 6)
    pub four_term: Option<T>,
    /// p234 A1 − p134 A2 + p124 A3 − p123 A4 (m ≥ 4)
    pub columns: Option<[T; 3]>,
    /// p123² p456 + det[[p234 p235 p236] [p134 p135 p136] [p124 p125 p126]] (m ≥ 6)
    pub cubic: Option<T>,
}

pub fn minor_lemma<T: Num + Copy>(rows: &[Vec<T>; 3]) -> MinorLemma<T> {
    let m = rows[0].len();
    let p = minors(rows);
    let q = |i: usize, j: usize, k: usize| p[&(i, j, k)];
    let det3 = |a: [[T; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    MinorLemma {
        three_term: (m >= 5)
            .then(|| q(1, 2, 3) * q(1, 4, 5) - q(1, 2, 4) * q(1, 3, 5) + q(1, 2, 5) * q(1, 3, 4)),
        four_term: (m >= 6).then(|| {
            q(1, 2, 3) * q(4, 5, 6) - q(1, 2, 4) * q(3, 5, 6) + q(1, 2, 5) * q(3, 4, 6)
                - q(1, 2, 6) * q(3, 4, 5)
        }),
        columns: (m >= 4).then(|| {
            [0, 1, 2].map(|r| {
                q(2, 3, 4) * rows[r][0] - q(1, 3, 4) * rows[r][1] + q(1, 2, 4) * rows[r][2]
                    - q(1, 2, 3) * rows[r][3]
            })
        }),
        cubic: (m >= 6).then(|| {
            q(1, 2, 3) * q(1, 2, 3) * q(4, 5, 6)
                + det3([
                    [q(2, 3, 4), q(2, 3, 5), q(2, 3, 6)],
                    [q(1, 3, 4), q(1, 3, 5), q(1, 3, 6)],
                    [q(1, 2, 4), q(1, 2, 5), q(1, 2, 6)],
                ])
        }),
    }
}

impl MinorLemma<f64> {
    /// Largest |residual| over the applicable identities, each divided by
    /// the natural scale of its degree in the entries of A.
    pub fn max_relative(&self, rows: &[Vec<f64>; 3]) -> f64 {
        let amax = rows
            .iter()
            .flatten()
            .fold(0.0f64, |a, x| a.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        let mut see = |v: f64, degree: i32| worst = worst.max(v.abs() / amax.powi(degree));
        if let Some(v) = self.three_term {
            see(v, 6);
        }
        if let Some(v) = self.four_term {
            see(v, 6);
        }
        if let Some(c) = self.columns {
            c.iter().for_each(|v| see(*v, 4));
        }
        if let Some(v) = self.cubic {
            see(v, 9);
        }
        worst
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OmegaWedge {
    /// max over 5-index groups of |Σ ± Q p| / (1 + Σ|Q p|)
    pub shuffle: f64,
    /// the same components from Σₖ det[aₖ′; aₖ; a₁; a₂; a₃] restricted to the group
    pub determinant: f64,
    pub groups: usize,
}

/// (Ω ∧ P) on the sorted 5-index group `s` by the shuffle formula, with Σ|terms|.
pub fn wedge_component(
    q: &BTreeMap<(usize, usize), f64>,
    p: &BTreeMap<(usize, usize, usize), f64>,
    s: [usize; 5],
) -> (f64, f64) {
    let mut acc = 0.0;
    let mut scale = 0.0;
    for a in 0..5 {
        for b in a + 1..5 {
            let rest: Vec<usize> = (0..5).filter(|&x| x != a && x != b).map(|x| s[x]).collect();
            let sign = if (a + b + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let qv = q.get(&(s[a], s[b])).copied().unwrap_or(0.0);
            let pv = signed(p, [rest[0], rest[1], rest[2]]);
            acc += sign * qv * pv;
            scale += (qv * pv).abs();
        }
    }
    (acc, scale)
}

fn groups(m: usize) -> Vec<[usize; 5]> {
    let mut out = Vec::new();
    for a in 1..=m {
        for b in a + 1..=m {
            for c in b + 1..=m {
                for d in c + 1..=m {
                    for e in d + 1..=m {
                        out.push([a, b, c, d, e]);
                    }
                }
            }
        }
    }
    out
}

/// Ω ∧ P = 0 at one instant, from Q, p and (for the determinant route) A, A′.
pub fn omega_wedge_residual(
    q: &BTreeMap<(usize, usize), f64>,
    p: &BTreeMap<(usize, usize, usize), f64>,
    a: &Mat3m,
    ap: &Mat3m,
) -> OmegaWedge {
    let m = a[0].len();
    let gs = groups(m);
    let mut out = OmegaWedge {
        groups: gs.len(),
        ..Default::default()
    };
    for s in &gs {
        let (v, scale) = wedge_component(q, p, *s);
        out.shuffle = out.shuffle.max(v.abs() / (1.0 + scale));
        let mut det = 0.0;
        for k in 0..3 {
            let rows = [&ap[k], &a[k], &a[0], &a[1], &a[2]];
            det += Matrix5::from_fn(|r, c| rows[r][s[c] - 1]).determinant();
        }
        let norm: f64 = s
            .iter()
            .map(|&j| {
                (0..3)
                    .map(|r| a[r][j - 1].abs() + ap[r][j - 1].abs())
                    .sum::<f64>()
            })
            .sum();
        out.determinant = out.determinant.max(det.abs() / (1.0 + norm.powi(5)));
    }
    out
}
