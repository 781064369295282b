//! Spatial components v(z), their minors g_ijk and two-forms G_ij, and the
//! per-family schemas that produce them.
//!
//! Indices in public maps are 1-based, matching the usual g_ijk / G_ij
//! notation. Gradients are rows: `jacobian(z)[i] = ∇vⁱ`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{complex_parts, laurent_antiderivative, parse_with, to_laurent, Expr, ExprError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpatialError {
    #[error("missing spatial function '{0}'")]
    Missing(String),
    #[error("spatial function '{name}': {source}")]
    Expr {
        name: String,
        #[source]
        source: ExprError,
    },
    #[error("spatial function '{name}' may only depend on {allowed}, but uses '{var}'")]
    Schema {
        name: String,
        allowed: String,
        var: String,
    },
    #[error("{what} fails with max residual {residual:.3e}")]
    Residual { what: String, residual: f64 },
    #[error("spatial component needs at least 3 components, got {0}")]
    TooFew(usize),
    #[error("{0}")]
    Invalid(String),
}

/// The spatial function shapes of the families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialSchema {
    /// v = z.
    Identity,
    /// v = (z, f(z2,z3)).
    M4,
    /// v = (z, f1, f2) with (f1, f2) anti-CR in (z1, z2).
    M5Elliptic,
    /// v = (z, f1(z1,z3), f2(z2,z3)).
    M5Hyperbolic,
    /// v = (z, f1 + z2·∂₁f2, f2), f1 and f2 functions of (z1, z3).
    M5Parabolic,
    /// v = (z, f1(z1), f2(z2), f3(z3)).
    M6Hyperbolic,
    /// v = (z, f1(z3), f2, f3) with (f2, f3) anti-CR in (z1, z2).
    M6Elliptic,
    /// v = (z, f1(z3), z2·f3′ + f2, f3), f2 and f3 functions of z1.
    M6Parabolic,
    /// v = (z, g1·q, g2, g3·q) from the transport construction.
    HyperbolicExtension,
    /// Elliptic-shaped v checked against the trigonometric matrix constraints.
    EllipticExtension,
    /// v = (z, F(g, z2), f2, z2·∂₁f2 + f1·∂₃f2 + g).
    ParabolicExtension,
}

impl SpatialSchema {
    pub fn m(self) -> usize {
        match self {
            SpatialSchema::Identity => 3,
            SpatialSchema::M4 => 4,
            SpatialSchema::M5Elliptic
            | SpatialSchema::M5Hyperbolic
            | SpatialSchema::M5Parabolic => 5,
            _ => 6,
        }
    }

    /// Names of the functions the schema reads from a bundle.
    pub fn function_names(self) -> &'static [&'static str] {
        match self {
            SpatialSchema::Identity => &[],
            SpatialSchema::M4 => &["f"],
            SpatialSchema::M5Elliptic => &["holo | f1,f2"],
            SpatialSchema::M5Hyperbolic | SpatialSchema::M5Parabolic => &["f1", "f2"],
            SpatialSchema::M6Hyperbolic => &["f1", "f2", "f3"],
            SpatialSchema::M6Elliptic | SpatialSchema::EllipticExtension => &["f1", "holo | f2,f3"],
            SpatialSchema::M6Parabolic => &["f1", "f2", "f3"],
            SpatialSchema::HyperbolicExtension => &["g", "q", "g2", "q1 [q2] | g1"],
            SpatialSchema::ParabolicExtension => &["F", "f2", "g"],
        }
    }

    /// Linear relations among minors / two-forms the schema must satisfy.
    pub fn constraints(self) -> Vec<Constraint> {
        use ConstraintKind::{Minor, TwoForm};
        let mk = |kind, label: &str, terms: &[(&[usize], f64)]| Constraint {
            label: label.to_string(),
            kind,
            terms: terms.iter().map(|(ix, c)| (ix.to_vec(), *c)).collect(),
        };
        match self {
            SpatialSchema::Identity => vec![],
            SpatialSchema::M4 => vec![mk(Minor, "g234", &[(&[2, 3, 4], 1.0)])],
            SpatialSchema::M5Elliptic => vec![
                mk(Minor, "g134+g235", &[(&[1, 3, 4], 1.0), (&[2, 3, 5], 1.0)]),
                mk(Minor, "g135-g234", &[(&[1, 3, 5], 1.0), (&[2, 3, 4], -1.0)]),
            ],
            SpatialSchema::M5Hyperbolic => vec![
                mk(Minor, "g134", &[(&[1, 3, 4], 1.0)]),
                mk(Minor, "g235", &[(&[2, 3, 5], 1.0)]),
            ],
            SpatialSchema::M5Parabolic => vec![
                mk(Minor, "g134+g235", &[(&[1, 3, 4], 1.0), (&[2, 3, 5], 1.0)]),
                mk(Minor, "g135", &[(&[1, 3, 5], 1.0)]),
            ],
            SpatialSchema::M6Hyperbolic => vec![
                mk(TwoForm, "G14", &[(&[1, 4], 1.0)]),
                mk(TwoForm, "G25", &[(&[2, 5], 1.0)]),
                mk(TwoForm, "G36", &[(&[3, 6], 1.0)]),
            ],
            SpatialSchema::M6Elliptic => vec![
                mk(TwoForm, "G34", &[(&[3, 4], 1.0)]),
                mk(TwoForm, "G15+G26", &[(&[1, 5], 1.0), (&[2, 6], 1.0)]),
                mk(TwoForm, "G16-G25", &[(&[1, 6], 1.0), (&[2, 5], -1.0)]),
            ],
            SpatialSchema::M6Parabolic => vec![
                mk(TwoForm, "G15+G26", &[(&[1, 5], 1.0), (&[2, 6], 1.0)]),
                mk(TwoForm, "G16", &[(&[1, 6], 1.0)]),
                mk(TwoForm, "G34", &[(&[3, 4], 1.0)]),
            ],
            SpatialSchema::HyperbolicExtension => vec![
                mk(Minor, "g145+g256", &[(&[1, 4, 5], 1.0), (&[2, 5, 6], 1.0)]),
                mk(Minor, "g236-g134", &[(&[2, 3, 6], 1.0), (&[1, 3, 4], -1.0)]),
                mk(Minor, "g125", &[(&[1, 2, 5], 1.0)]),
                mk(Minor, "g346", &[(&[3, 4, 6], 1.0)]),
            ],
            SpatialSchema::EllipticExtension => vec![
                mk(Minor, "g125+g345", &[(&[1, 2, 5], 1.0), (&[3, 4, 5], 1.0)]),
                mk(Minor, "g126+g346", &[(&[1, 2, 6], 1.0), (&[3, 4, 6], 1.0)]),
                mk(
                    Minor,
                    "g135-g146+g236+g245",
                    &[
                        (&[1, 3, 5], 1.0),
                        (&[1, 4, 6], -1.0),
                        (&[2, 3, 6], 1.0),
                        (&[2, 4, 5], 1.0),
                    ],
                ),
                mk(
                    Minor,
                    "g136+g145-g235+g246",
                    &[
                        (&[1, 3, 6], 1.0),
                        (&[1, 4, 5], 1.0),
                        (&[2, 3, 5], -1.0),
                        (&[2, 4, 6], 1.0),
                    ],
                ),
            ],
            SpatialSchema::ParabolicExtension => vec![
                mk(Minor, "g135", &[(&[1, 3, 5], 1.0)]),
                mk(Minor, "g246", &[(&[2, 4, 6], 1.0)]),
                mk(
                    Minor,
                    "g136+g145+g235",
                    &[(&[1, 3, 6], 1.0), (&[1, 4, 5], 1.0), (&[2, 3, 5], 1.0)],
                ),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Minor,
    TwoForm,
}

/// Σ coef · g_idx (or G_idx) = 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constraint {
    pub label: String,
    pub kind: ConstraintKind,
    pub terms: Vec<(Vec<usize>, f64)>,
}

/// A spatial factor v : D ⊂ ℝ³ → ℝᵐ with symbolic first derivatives.
#[derive(Clone, Debug)]
pub struct SpatialComponent {
    schema: Option<SpatialSchema>,
    comps: Vec<Expr>,
    grads: Vec<[Expr; 3]>,
    /// The named schema functions (f, f1, ...) for closed-form formulas.
    pub named: BTreeMap<String, Expr>,
    /// Expression α is proportional to, when the family gives one.
    pub det_formula: Option<Expr>,
    constraints: Vec<Constraint>,
    /// Extra residual checks attached by the builder (label, expression).
    pub side_conditions: Vec<(String, Expr)>,
}

const SPATIAL_VARS: [&str; 3] = ["z1", "z2", "z3"];

impl SpatialComponent {
    /// Wrap raw component expressions (no schema, no constraints).
    pub fn from_components(comps: Vec<Expr>) -> Result<Self, SpatialError> {
        if comps.len() < 3 {
            return Err(SpatialError::TooFew(comps.len()));
        }
        for (i, c) in comps.iter().enumerate() {
            for v in c.variables() {
                if !SPATIAL_VARS.contains(&v.as_str()) {
                    return Err(SpatialError::Schema {
                        name: format!("v{}", i + 1),
                        allowed: "z1, z2, z3".into(),
                        var: v,
                    });
                }
            }
        }
        let grads = comps
            .iter()
            .map(|c| [c.diff("z1"), c.diff("z2"), c.diff("z3")])
            .collect();
        Ok(SpatialComponent {
            schema: None,
            comps,
            grads,
            named: BTreeMap::new(),
            det_formula: None,
            constraints: Vec::new(),
            side_conditions: Vec::new(),
        })
    }

    /// Components (z1, z2, z3, extra...).
    fn normal_form(extra: Vec<Expr>) -> Result<Self, SpatialError> {
        let mut comps = vec![Expr::var("z1"), Expr::var("z2"), Expr::var("z3")];
        comps.extend(extra);
        Self::from_components(comps)
    }

    pub fn m(&self) -> usize {
        self.comps.len()
    }

    pub fn schema(&self) -> Option<SpatialSchema> {
        self.schema
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn eval(&self, z: &[f64; 3]) -> Result<Vec<f64>, ExprError> {
        self.comps.iter().map(|c| c.at_z(z)).collect()
    }

    pub fn jacobian(&self, z: &[f64; 3]) -> Result<Vec<[f64; 3]>, ExprError> {
        self.grads
            .iter()
            .map(|g| Ok([g[0].at_z(z)?, g[1].at_z(z)?, g[2].at_z(z)?]))
            .collect()
    }

    /// g_ijk for all i < j < k.
    pub fn minors(&self, z: &[f64; 3]) -> Result<BTreeMap<(usize, usize, usize), f64>, ExprError> {
        let j = self.jacobian(z)?;
        Ok(minors_of_rows(&j))
    }

    /// G_ij = ∇vⁱ × ∇vʲ for all i < j.
    pub fn two_forms(&self, z: &[f64; 3]) -> Result<BTreeMap<(usize, usize), [f64; 3]>, ExprError> {
        let j = self.jacobian(z)?;
        Ok(two_forms_of_rows(&j))
    }

    /// Max |residual| of each constraint over the given points.
    pub fn constraint_residuals(
        &self,
        samples: &[[f64; 3]],
    ) -> Result<Vec<(String, f64)>, ExprError> {
        constraint_residuals(&self.constraints, self, samples)
    }

    /// Apply v ↦ H⁻¹v given the inverse matrix directly.
    pub fn gauged(&self, h_inv: &[Vec<f64>]) -> Result<SpatialComponent, SpatialError> {
        let m = self.m();
        if h_inv.len() != m || h_inv.iter().any(|r| r.len() != m) {
            return Err(SpatialError::Invalid(format!(
                "gauge matrix must be {m}×{m}"
            )));
        }
        let comps = h_inv
            .iter()
            .map(|row| {
                let terms: Vec<(f64, &Expr)> =
                    row.iter().zip(&self.comps).map(|(c, e)| (*c, e)).collect();
                Expr::linear_combination(&terms)
            })
            .collect();
        let mut out = Self::from_components(comps)?;
        out.named = self.named.clone();
        Ok(out)
    }
}

/// Minors g_ijk of the rows (1-based keys).
pub fn minors_of_rows(rows: &[[f64; 3]]) -> BTreeMap<(usize, usize, usize), f64> {
    let m = rows.len();
    let mut out = BTreeMap::new();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                out.insert(
                    (i + 1, j + 1, k + 1),
                    det3_rows(&rows[i], &rows[j], &rows[k]),
                );
            }
        }
    }
    out
}

pub fn two_forms_of_rows(rows: &[[f64; 3]]) -> BTreeMap<(usize, usize), [f64; 3]> {
    let m = rows.len();
    let mut out = BTreeMap::new();
    for i in 0..m {
        for j in i + 1..m {
            out.insert((i + 1, j + 1), cross(&rows[i], &rows[j]));
        }
    }
    out
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn det3_rows(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let x = cross(b, c);
    a[0] * x[0] + a[1] * x[1] + a[2] * x[2]
}

/// Look up g with arbitrary index order, applying the permutation sign.
pub fn signed_minor(g: &BTreeMap<(usize, usize, usize), f64>, idx: &[usize]) -> f64 {
    let mut ix = [idx[0], idx[1], idx[2]];
    let mut sign = 1.0;
    for a in 0..3 {
        for b in 0..2 - a {
            if ix[b] > ix[b + 1] {
                ix.swap(b, b + 1);
                sign = -sign;
            }
        }
    }
    if ix[0] == ix[1] || ix[1] == ix[2] {
        return 0.0;
    }
    sign * g.get(&(ix[0], ix[1], ix[2])).copied().unwrap_or(0.0)
}

pub fn signed_two_form(gf: &BTreeMap<(usize, usize), [f64; 3]>, idx: &[usize]) -> [f64; 3] {
    let (i, j) = (idx[0], idx[1]);
    if i == j {
        return [0.0; 3];
    }
    if i < j {
        gf[&(i, j)]
    } else {
        let g = gf[&(j, i)];
        [-g[0], -g[1], -g[2]]
    }
}

pub fn constraint_residuals(
    constraints: &[Constraint],
    v: &SpatialComponent,
    samples: &[[f64; 3]],
) -> Result<Vec<(String, f64)>, ExprError> {
    let mut worst = vec![0.0f64; constraints.len()];
    for z in samples {
        let rows = v.jacobian(z)?;
        let g = minors_of_rows(&rows);
        let gf = two_forms_of_rows(&rows);
        for (c, w) in constraints.iter().zip(worst.iter_mut()) {
            let r = match c.kind {
                ConstraintKind::Minor => c
                    .terms
                    .iter()
                    .map(|(ix, k)| k * signed_minor(&g, ix))
                    .sum::<f64>()
                    .abs(),
                ConstraintKind::TwoForm => {
                    let mut acc = [0.0; 3];
                    for (ix, k) in &c.terms {
                        let x = signed_two_form(&gf, ix);
                        for d in 0..3 {
                            acc[d] += k * x[d];
                        }
                    }
                    acc.iter().fold(0.0f64, |a, x| a.max(x.abs()))
                }
            };
            *w = w.max(r);
        }
    }
    Ok(constraints
        .iter()
        .map(|c| c.label.clone())
        .zip(worst)
        .collect())
}

/// Uniform random points in a box (deterministic in `seed`).
pub fn random_points(lo: [f64; 3], hi: [f64; 3], n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [0, 1, 2].map(|d| rng.gen_range(lo[d]..=hi[d])))
        .collect()
}

/// A bundle of named expression texts with bound constants.
pub struct Bundle<'a> {
    pub texts: &'a BTreeMap<String, String>,
    pub constants: &'a BTreeMap<String, f64>,
}

impl Bundle<'_> {
    fn has(&self, name: &str) -> bool {
        self.texts.contains_key(name)
    }

    fn parse_extra(&self, name: &str, extra: &[&str]) -> Result<Expr, SpatialError> {
        let text = self
            .texts
            .get(name)
            .ok_or_else(|| SpatialError::Missing(name.to_string()))?;
        let mut known: Vec<&str> = self.constants.keys().map(|s| s.as_str()).collect();
        known.extend_from_slice(extra);
        let e = parse_with(text, &known).map_err(|source| SpatialError::Expr {
            name: name.to_string(),
            source,
        })?;
        Ok(e.bind(self.constants))
    }

    /// Parse `name` and require its variables to lie in `allowed`.
    pub fn get(&self, name: &str, allowed: &[&str]) -> Result<Expr, SpatialError> {
        let e = self.parse_extra(name, &[])?;
        restrict(name, &e, allowed)?;
        Ok(e)
    }
}

fn restrict(name: &str, e: &Expr, allowed: &[&str]) -> Result<(), SpatialError> {
    for v in e.variables() {
        if !allowed.contains(&v.as_str()) {
            return Err(SpatialError::Schema {
                name: name.to_string(),
                allowed: if allowed.is_empty() {
                    "nothing (a constant)".into()
                } else {
                    allowed.join(", ")
                },
                var: v,
            });
        }
    }
    Ok(())
}

/// Pointwise max of |e| over `samples`, skipping nothing: domain errors propagate.
fn max_abs(e: &Expr, samples: &[[f64; 3]]) -> Result<f64, ExprError> {
    let mut w = 0.0f64;
    for z in samples {
        w = w.max(e.at_z(z)?.abs());
    }
    Ok(w)
}

fn check_points() -> Vec<[f64; 3]> {
    random_points([-1.0; 3], [1.0; 3], 100, 0x5eed)
}

/// Split a holomorphic text in `zeta` into an anti-CR pair (u, −v).
fn anti_cr_from_bundle(
    b: &Bundle,
    name: &str,
    allow_z3: bool,
) -> Result<(Expr, Expr), SpatialError> {
    let e = b.parse_extra(name, &["zeta"])?;
    let allowed: &[&str] = if allow_z3 { &["zeta", "z3"] } else { &["zeta"] };
    restrict(name, &e, allowed)?;
    let (re, im) = complex_parts(&e, "zeta").map_err(|source| SpatialError::Expr {
        name: name.to_string(),
        source,
    })?;
    Ok((re, Expr::neg(im)))
}

/// Validate an explicit anti-CR pair at random points (relative 1e−10).
fn check_anti_cr(u: &Expr, v: &Expr, what: &str) -> Result<(), SpatialError> {
    let r1 = Expr::add(u.diff("z1"), v.diff("z2"));
    let r2 = Expr::sub(u.diff("z2"), v.diff("z1"));
    let pts = check_points();
    let scale = 1.0 + max_abs(&u.diff("z1"), &pts).map_err(|source| expr_err(what, source))?;
    let res = max_abs(&r1, &pts)
        .and_then(|a| Ok(a.max(max_abs(&r2, &pts)?)))
        .map_err(|source| expr_err(what, source))?;
    if res > 1e-10 * scale {
        return Err(SpatialError::Residual {
            what: format!("anti-CR system for {what}"),
            residual: res,
        });
    }
    Ok(())
}

fn expr_err(name: &str, source: ExprError) -> SpatialError {
    SpatialError::Expr {
        name: name.to_string(),
        source,
    }
}

fn d(e: &Expr, var: &str) -> Expr {
    e.diff(var)
}

fn z(i: usize) -> Expr {
    Expr::var(SPATIAL_VARS[i - 1])
}

/// Build the spatial component of a family schema from a function bundle.
pub fn build_spatial(schema: SpatialSchema, b: &Bundle) -> Result<SpatialComponent, SpatialError> {
    let mut named = BTreeMap::new();
    let mut side = Vec::new();
    let (extra, det): (Vec<Expr>, Option<Expr>) = match schema {
        SpatialSchema::Identity => (vec![], Some(Expr::one())),
        SpatialSchema::M4 => {
            let f = b.get("f", &["z2", "z3"])?;
            named.insert("f".into(), f.clone());
            (vec![f], Some(Expr::one()))
        }
        SpatialSchema::M5Elliptic => {
            let (f1, f2) = if b.has("holo") {
                anti_cr_from_bundle(b, "holo", true)?
            } else {
                let f1 = b.get("f1", &SPATIAL_VARS)?;
                let f2 = b.get("f2", &SPATIAL_VARS)?;
                check_anti_cr(&f1, &f2, "(f1, f2)")?;
                (f1, f2)
            };
            let det = Expr::sub(
                Expr::one(),
                Expr::add(Expr::powi(d(&f1, "z1"), 2), Expr::powi(d(&f1, "z2"), 2)),
            );
            named.insert("f1".into(), f1.clone());
            named.insert("f2".into(), f2.clone());
            (vec![f1, f2], Some(det))
        }
        SpatialSchema::M5Hyperbolic => {
            let f1 = b.get("f1", &["z1", "z3"])?;
            let f2 = b.get("f2", &["z2", "z3"])?;
            let det = Expr::sub(Expr::one(), Expr::mul(d(&f1, "z1"), d(&f2, "z2")));
            named.insert("f1".into(), f1.clone());
            named.insert("f2".into(), f2.clone());
            (vec![f1, f2], Some(det))
        }
        SpatialSchema::M5Parabolic => {
            let f1 = b.get("f1", &["z1", "z3"])?;
            let f2 = b.get("f2", &["z1", "z3"])?;
            let v4 = Expr::add(f1.clone(), Expr::mul(z(2), d(&f2, "z1")));
            let det = Expr::add(d(&f1, "z1"), Expr::mul(z(2), d(&d(&f2, "z1"), "z1")));
            named.insert("f1".into(), f1);
            named.insert("f2".into(), f2.clone());
            (vec![v4, f2], Some(det))
        }
        SpatialSchema::M6Hyperbolic => {
            let f1 = b.get("f1", &["z1"])?;
            let f2 = b.get("f2", &["z2"])?;
            let f3 = b.get("f3", &["z3"])?;
            let det = Expr::add(
                Expr::one(),
                Expr::mul(Expr::mul(d(&f1, "z1"), d(&f2, "z2")), d(&f3, "z3")),
            );
            named.insert("f1".into(), f1.clone());
            named.insert("f2".into(), f2.clone());
            named.insert("f3".into(), f3.clone());
            (vec![f1, f2, f3], Some(det))
        }
        SpatialSchema::M6Elliptic | SpatialSchema::EllipticExtension => {
            let f1 = b.get("f1", &["z3"])?;
            let (f2, f3) = if b.has("holo") {
                anti_cr_from_bundle(b, "holo", false)?
            } else {
                let f2 = b.get("f2", &["z1", "z2"])?;
                let f3 = b.get("f3", &["z1", "z2"])?;
                check_anti_cr(&f2, &f3, "(f2, f3)")?;
                (f2, f3)
            };
            let det = Expr::add(d(&f2, "z1"), Expr::mul(d(&f2, "z2"), d(&f1, "z3")));
            named.insert("f1".into(), f1.clone());
            named.insert("f2".into(), f2.clone());
            named.insert("f3".into(), f3.clone());
            let det = (schema == SpatialSchema::M6Elliptic).then_some(det);
            (vec![f1, f2, f3], det)
        }
        SpatialSchema::M6Parabolic => {
            let f1 = b.get("f1", &["z3"])?;
            let f2 = b.get("f2", &["z1"])?;
            let f3 = b.get("f3", &["z1"])?;
            let f3p = d(&f3, "z1");
            let v5 = Expr::add(Expr::mul(z(2), f3p.clone()), f2.clone());
            let det = Expr::sub(
                Expr::add(d(&f2, "z1"), Expr::mul(z(2), d(&f3p, "z1"))),
                Expr::mul(d(&f1, "z3"), f3p),
            );
            named.insert("f1".into(), f1.clone());
            named.insert("f2".into(), f2);
            named.insert("f3".into(), f3.clone());
            (vec![f1, v5, f3], Some(det))
        }
        SpatialSchema::HyperbolicExtension => {
            let ext = hyperbolic_extension(b)?;
            side = ext.side;
            named = ext.named;
            (ext.extra, None)
        }
        SpatialSchema::ParabolicExtension => {
            let f = b.get("F", &["s", "z2"])?;
            let f2 = b.get("f2", &["z1", "z3"])?;
            let g = b.get("g", &["z1", "z3"])?;
            let ext = parabolic_extension(&f, &f2, &g);
            side = ext.side;
            named = ext.named;
            (ext.extra, None)
        }
    };
    let mut out = SpatialComponent::normal_form(extra)?;
    out.schema = Some(schema);
    out.named = named;
    out.det_formula = det;
    out.constraints = schema.constraints();
    out.side_conditions = side;
    Ok(out)
}

struct Extension {
    extra: Vec<Expr>,
    named: BTreeMap<String, Expr>,
    side: Vec<(String, Expr)>,
}

fn hyperbolic_extension(b: &Bundle) -> Result<Extension, SpatialError> {
    let g = b.get("g", &["z1", "z2"])?;
    let q = b.get("q", &["z3"])?;
    let g2 = b.get("g2", &["z1", "z2"])?;
    let pts = check_points();
    let transport = Expr::add(d(&g, "z2"), Expr::mul(g.clone(), d(&g, "z1")));
    let (g1, g3) = if g.variables().is_empty() {
        // constant g: g1 must solve its own transport equation, g3 = g·g1
        let g1 = b.get("g1", &["z1", "z2"])?;
        let g3 = Expr::mul(g.clone(), g1.clone());
        (g1, g3)
    } else {
        let res = max_abs(&transport, &pts).map_err(|s| expr_err("g", s))?;
        if res > 1e-10 {
            return Err(SpatialError::Residual {
                what: "transport equation g_01 + g·g_10 = 0".into(),
                residual: res,
            });
        }
        let q1 = b.get("q1", &["s"])?;
        let q2 = if b.has("q2") {
            b.get("q2", &["s"])?
        } else {
            // q2′ = q1′/s
            let integrand = Expr::div(d(&q1, "s"), Expr::var("s"));
            let l = to_laurent(&integrand, "s").map_err(|source| SpatialError::Expr {
                name: "q1".into(),
                source,
            })?;
            laurent_antiderivative(&l, "s")
        };
        let s = Expr::div(Expr::one(), g.clone());
        (q1.subst("s", &s), q2.subst("s", &s))
    };
    let v4 = Expr::mul(g1.clone(), q.clone());
    let v6 = Expr::mul(g3.clone(), q.clone());
    let mut named = BTreeMap::new();
    named.insert("g".into(), g.clone());
    named.insert("g1".into(), g1.clone());
    named.insert("g2".into(), g2.clone());
    named.insert("g3".into(), g3.clone());
    named.insert("q".into(), q);
    let side = vec![
        ("g_01+g*g_10".to_string(), transport),
        (
            "g1_01+g*g1_10".to_string(),
            Expr::add(d(&g1, "z2"), Expr::mul(g.clone(), d(&g1, "z1"))),
        ),
        (
            "g3_10-g*g1_10".to_string(),
            Expr::sub(d(&g3, "z1"), Expr::mul(g.clone(), d(&g1, "z1"))),
        ),
        (
            "g3_01-g*g1_01".to_string(),
            Expr::sub(d(&g3, "z2"), Expr::mul(g.clone(), d(&g1, "z2"))),
        ),
        (
            "g1*g2_01+g3*g2_10".to_string(),
            Expr::add(
                Expr::mul(g1.clone(), d(&g2, "z2")),
                Expr::mul(g3.clone(), d(&g2, "z1")),
            ),
        ),
    ];
    for (label, e) in &side {
        let res = max_abs(e, &pts).map_err(|s| expr_err(label, s))?;
        if res > 1e-8 {
            return Err(SpatialError::Residual {
                what: label.clone(),
                residual: res,
            });
        }
    }
    Ok(Extension {
        extra: vec![v4, g2, v6],
        named,
        side,
    })
}

fn parabolic_extension(f: &Expr, f2: &Expr, g: &Expr) -> Extension {
    let f1 = f.subst("s", g);
    let f3 = Expr::add(
        Expr::add(
            Expr::mul(z(2), d(f2, "z1")),
            Expr::mul(f1.clone(), d(f2, "z3")),
        ),
        g.clone(),
    );
    let side = vec![
        ("f2_010".to_string(), d(f2, "z2")),
        (
            "f1_100*f3_001-f3_100*f1_001".to_string(),
            Expr::sub(
                Expr::mul(d(&f1, "z1"), d(&f3, "z3")),
                Expr::mul(d(&f3, "z1"), d(&f1, "z3")),
            ),
        ),
        (
            "f2_100-f3_010+f1_010*f2_001".to_string(),
            Expr::add(
                Expr::sub(d(f2, "z1"), d(&f3, "z2")),
                Expr::mul(d(&f1, "z2"), d(f2, "z3")),
            ),
        ),
    ];
    let mut named = BTreeMap::new();
    named.insert("f1".into(), f1.clone());
    named.insert("f2".into(), f2.clone());
    named.insert("f3".into(), f3.clone());
    named.insert("g".into(), g.clone());
    Extension {
        extra: vec![f1, f2.clone(), f3],
        named,
        side,
    }
}

/// Residuals of the parabolic extension PDE system for given F, f2, g.
pub fn parabolic_extension_residuals(
    f: &Expr,
    f2: &Expr,
    g: &Expr,
    samples: &[[f64; 3]],
) -> Result<Vec<(String, f64)>, ExprError> {
    let ext = parabolic_extension(f, f2, g);
    side_residuals(&ext.side, samples)
}

pub fn side_residuals(
    side: &[(String, Expr)],
    samples: &[[f64; 3]],
) -> Result<Vec<(String, f64)>, ExprError> {
    side.iter()
        .map(|(l, e)| Ok((l.clone(), max_abs(e, samples)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn bundle(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn build(
        schema: SpatialSchema,
        pairs: &[(&str, &str)],
    ) -> Result<SpatialComponent, SpatialError> {
        let texts = bundle(pairs);
        let constants = BTreeMap::new();
        build_spatial(
            schema,
            &Bundle {
                texts: &texts,
                constants: &constants,
            },
        )
    }

    fn worst(v: &SpatialComponent, n: usize) -> f64 {
        let pts = random_points([-1.0; 3], [1.0; 3], n, 3);
        v.constraint_residuals(&pts)
            .unwrap()
            .iter()
            .fold(0.0, |a, (_, r)| a.max(*r))
    }

    #[test]
    fn identity_minor_and_two_form() {
        let v = build(SpatialSchema::Identity, &[]).unwrap();
        let g = v.minors(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(g[&(1, 2, 3)], 1.0);
        let gf = v.two_forms(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(gf[&(1, 2)], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn m4_g234_vanishes() {
        let v = build(SpatialSchema::M4, &[("f", "sin(z2)*z3 + z3^3")]).unwrap();
        for z in random_points([-1.0; 3], [1.0; 3], 50, 1) {
            assert_eq!(v.minors(&z).unwrap()[&(2, 3, 4)], 0.0);
        }
        assert!(matches!(
            build(SpatialSchema::M4, &[("f", "z1 + z2")]),
            Err(SpatialError::Schema { .. })
        ));
    }

    #[test]
    fn minors_match_direct_determinant_and_antisymmetry() {
        let comps = ["z1", "z2", "z3", "sin(z1*z2)", "exp(z3)*z1", "z2^3 - z3"]
            .iter()
            .map(|s| parse(s).unwrap())
            .collect();
        let v = SpatialComponent::from_components(comps).unwrap();
        for z in random_points([-1.0; 3], [1.0; 3], 100, 2) {
            let j = v.jacobian(&z).unwrap();
            let g = v.minors(&z).unwrap();
            for (&(a, b, c), &val) in &g {
                let (r1, r2, r3) = (j[a - 1], j[b - 1], j[c - 1]);
                let direct = r1[0] * (r2[1] * r3[2] - r2[2] * r3[1])
                    - r1[1] * (r2[0] * r3[2] - r2[2] * r3[0])
                    + r1[2] * (r2[0] * r3[1] - r2[1] * r3[0]);
                assert!((val - direct).abs() < 1e-12);
                assert_eq!(signed_minor(&g, &[b, a, c]), -val);
                assert_eq!(signed_minor(&g, &[b, c, a]), val);
            }
            let gf = v.two_forms(&z).unwrap();
            let x = signed_two_form(&gf, &[5, 2]);
            let y = gf[&(2, 5)];
            assert_eq!(x, [-y[0], -y[1], -y[2]]);
        }
    }

    #[test]
    fn m5_hyperbolic_schema_forces_constraints() {
        let v = build(
            SpatialSchema::M5Hyperbolic,
            &[("f1", "z1*z3"), ("f2", "sin(z2)+z3")],
        )
        .unwrap();
        assert_eq!(worst(&v, 100), 0.0);
        assert!(build(SpatialSchema::M5Hyperbolic, &[("f1", "z2"), ("f2", "z2")]).is_err());
    }

    #[test]
    fn m5_parabolic_builds_shifted_component() {
        let v = build(
            SpatialSchema::M5Parabolic,
            &[("f1", "z1^2"), ("f2", "z1*z3")],
        )
        .unwrap();
        let z = [0.3, -0.7, 0.5];
        let vals = v.eval(&z).unwrap();
        assert!((vals[3] - (0.09 + -0.7 * 0.5)).abs() < 1e-15);
        assert!((vals[4] - 0.15).abs() < 1e-15);
        assert!(worst(&v, 100) < 1e-12);
    }

    #[test]
    fn m5_elliptic_anti_cr() {
        let v = build(SpatialSchema::M5Elliptic, &[("holo", "(1+z3^2)*exp(zeta)")]).unwrap();
        assert!(worst(&v, 1000) < 1e-10);
        let bad = build(SpatialSchema::M5Elliptic, &[("f1", "z1"), ("f2", "z1")]);
        assert!(matches!(bad, Err(SpatialError::Residual { .. })));
        // residual-only path for a non anti-CR pair
        let mut raw = SpatialComponent::from_components(
            ["z1", "z2", "z3", "z1", "z1"]
                .iter()
                .map(|s| parse(s).unwrap())
                .collect(),
        )
        .unwrap();
        raw.constraints = SpatialSchema::M5Elliptic.constraints();
        assert!(worst(&raw, 10) > 0.5);
    }

    #[test]
    fn m6_elliptic_and_parabolic_constraints() {
        let v = build(
            SpatialSchema::M6Elliptic,
            &[("f1", "z3^2"), ("holo", "zeta^2")],
        )
        .unwrap();
        assert!(worst(&v, 1000) < 1e-12);
        let v = build(
            SpatialSchema::M6Parabolic,
            &[("f1", "sin(z3)"), ("f2", "z1^3"), ("f3", "exp(z1/2)")],
        )
        .unwrap();
        assert!(worst(&v, 1000) < 1e-12);
        let v = build(
            SpatialSchema::M6Hyperbolic,
            &[("f1", "z1^2"), ("f2", "sin(z2)"), ("f3", "exp(z3)")],
        )
        .unwrap();
        assert_eq!(worst(&v, 1000), 0.0);
    }

    #[test]
    fn hyperbolic_extension_ratio_and_constant_modes() {
        let v = build(
            SpatialSchema::HyperbolicExtension,
            &[
                ("g", "(z1+2)/(z2+2)"),
                ("q1", "s^2"),
                ("g2", "(z2+2)^2/(z1+2)"),
                ("q", "cos(z3)+2"),
            ],
        )
        .unwrap();
        // q2 = 2s from q2′ = q1′/s
        let g3 = &v.named["g3"];
        let z = [0.4, -0.3, 0.0];
        assert!((g3.at_z(&z).unwrap() - 2.0 * (1.7 / 2.4)).abs() < 1e-14);
        assert!(worst(&v, 1000) < 1e-8);

        let v = build(
            SpatialSchema::HyperbolicExtension,
            &[
                ("g", "1.5"),
                ("g1", "sin(z1 - 1.5*z2)"),
                ("g2", "exp(z1 - 1.5*z2)"),
                ("q", "z3^2+1"),
            ],
        )
        .unwrap();
        assert!(worst(&v, 1000) < 1e-12);

        let bad = build(
            SpatialSchema::HyperbolicExtension,
            &[("g", "z1+z2"), ("q1", "s"), ("g2", "z1"), ("q", "1")],
        );
        assert!(matches!(bad, Err(SpatialError::Residual { .. })));
    }

    #[test]
    fn parabolic_extension_paths() {
        let v = build(
            SpatialSchema::ParabolicExtension,
            &[("F", "sin(s) + z2*s"), ("f2", "z1"), ("g", "z1 + z3^2")],
        )
        .unwrap();
        // f3 = z2 + g for f2 = z1
        let z = [0.2, 0.5, -0.4];
        let f3 = v.eval(&z).unwrap()[5];
        assert!((f3 - (0.5 + 0.2 + 0.16)).abs() < 1e-14);
        assert!(worst(&v, 1000) < 1e-10);
        let pts = random_points([-1.0; 3], [1.0; 3], 100, 9);
        let res = side_residuals(&v.side_conditions, &pts).unwrap();
        assert!(res.iter().all(|(_, r)| *r < 1e-12), "{res:?}");

        let bad = parabolic_extension_residuals(
            &parse("s").unwrap(),
            &parse("z1*z3").unwrap(),
            &parse("z1+z3").unwrap(),
            &pts,
        )
        .unwrap();
        assert!(bad[1].1 > 1e-3, "{bad:?}");
    }

    #[test]
    fn gauge_preserves_nothing_but_shape() {
        let v = build(SpatialSchema::M4, &[("f", "z2*z3")]).unwrap();
        let hinv = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, -0.5],
            vec![0.0, 0.0, 1.0, 0.25],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        let w = v.gauged(&hinv).unwrap();
        let z = [0.1, 0.2, 0.3];
        let x = w.eval(&z).unwrap();
        assert!((x[1] - (0.2 - 0.5 * 0.06)).abs() < 1e-15);
    }
}
