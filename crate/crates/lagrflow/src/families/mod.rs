//! Registry of solution families.
//!
//! Each family binds a spatial schema, a constant schema with admissibility
//! predicates, a time-law recipe, the constant values its Q_ij and p_ijk must
//! take, and (where one exists) a closed-form vorticity.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_with, Expr, ExprError};
use crate::jet::Jet;
use crate::spatial::{build_spatial, Bundle, SpatialComponent, SpatialError, SpatialSchema};
use crate::temporal::{Declared, SolveOptions, TemporalError, TimeComponent, TimeLaw};
use crate::verify::FlowMap;

pub mod catalog;
mod elliptic;
mod hyperbolic;
mod kirchhoff;
mod m5;
mod parabolic;

pub use hyperbolic::exponential_law;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("unknown family '{0}'")]
    UnknownFamily(String),
    #[error("missing constant '{0}'")]
    MissingConstant(String),
    #[error("missing function '{0}'")]
    MissingFunction(String),
    #[error("{name}: {message}")]
    Constant { name: String, message: String },
    #[error("function '{name}': {source}")]
    Function {
        name: String,
        #[source]
        source: ExprError,
    },
    #[error("function '{name}' may only depend on t, but uses '{var}'")]
    TimeDependence { name: String, var: String },
    #[error("relation {name} violated: residual {residual:.3e}")]
    Relation { name: String, residual: f64 },
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

macro_rules! family_ids {
    ($($variant:ident => $id:literal),* $(,)?) => {
        /// The fifteen family identifiers, in registry order.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum FamilyId {
            $(#[serde(rename = $id)] $variant,)*
        }

        impl FamilyId {
            pub const ALL: [FamilyId; 15] = [$(FamilyId::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(FamilyId::$variant => $id,)*
                }
            }
        }

        impl FromStr for FamilyId {
            type Err = FamilyError;
            fn from_str(s: &str) -> Result<Self, FamilyError> {
                match s {
                    $($id => Ok(FamilyId::$variant),)*
                    other => Err(FamilyError::UnknownFamily(other.to_string())),
                }
            }
        }
    };
}

family_ids! {
    M3Kirchhoff => "m3-kirchhoff",
    M4 => "m4",
    M5Elliptic => "m5-elliptic",
    M5Hyperbolic => "m5-hyperbolic",
    M5Parabolic => "m5-parabolic",
    M6HyperbolicI => "m6-hyperbolic-i",
    M6HyperbolicII => "m6-hyperbolic-ii",
    M6HyperbolicExt => "m6-hyperbolic-ext",
    M6EllipticKne1 => "m6-elliptic-kne1",
    M6EllipticKeq1 => "m6-elliptic-keq1",
    M6EllipticExt => "m6-elliptic-ext",
    M6ParabolicMain => "m6-parabolic-main",
    M6Parabolic2 => "m6-parabolic-2perhe",
    M6Parabolic3 => "m6-parabolic-3perhe",
    M6ParabolicExt => "m6-parabolic-ext",
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a closed-form vorticity exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VorticityForm {
    ClosedForm,
    GenericOnly,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyDescriptor {
    pub id: FamilyId,
    pub m: usize,
    /// Which construction the family comes from.
    pub anchor: &'static str,
    pub schema: SpatialSchema,
    pub constants: &'static [&'static str],
    /// Optional constants with their defaults.
    pub optional_constants: &'static [(&'static str, f64)],
    pub time_functions: &'static [&'static str],
    /// Integrated states and their default initial values.
    pub states: &'static [(&'static str, f64)],
    pub vorticity: VorticityForm,
    /// det(dφ) up to a constant factor, or "none".
    pub det_formula: &'static str,
}

impl FamilyId {
    pub fn descriptor(self) -> FamilyDescriptor {
        use FamilyId::*;
        use SpatialSchema as S;
        use VorticityForm::*;
        let d = |m,
                 anchor,
                 schema,
                 constants,
                 optional_constants,
                 time_functions,
                 states,
                 vorticity,
                 det_formula| {
            FamilyDescriptor {
                id: self,
                m,
                anchor,
                schema,
                constants,
                optional_constants,
                time_functions,
                states,
                vorticity,
                det_formula,
            }
        };
        match self {
            M3Kirchhoff => d(
                3,
                "m=3 general solution: five free functions b11, b22, w; ODEs for b12, b13, b23",
                S::Identity,
                &["c12", "c13", "c23"],
                &[],
                &["b11", "b22", "w1", "w2", "w3"],
                &[("b12", 0.0), ("b13", 0.0), ("b23", 0.0)],
                ClosedForm,
                "1",
            ),
            M4 => d(
                4,
                "m=4 general time component: b12, b13 algebraic in b11, b14; ODEs for b14, b23",
                S::M4,
                &["c12", "c13", "c14", "c23", "c24", "c34"],
                &[],
                &["b11", "b22", "w1"],
                &[("b14", 0.0), ("b23", 0.0)],
                ClosedForm,
                "1",
            ),
            M5Elliptic => d(
                5,
                "m=5 elliptic theorem: b22 = b11, rotation angle theta' = -c12/b11^2",
                S::M5Elliptic,
                &["c12"],
                &[],
                &["b11"],
                &[("theta", 0.0)],
                ClosedForm,
                "1 - f1_100^2 - f1_010^2",
            ),
            M5Hyperbolic => d(
                5,
                "m=5 hyperbolic theorem: w = 0, l' = -c15/b11^2, b22 = l*b11",
                S::M5Hyperbolic,
                &["c15"],
                &[],
                &["b11"],
                &[("l", 1.0)],
                ClosedForm,
                "1 - f1_100*f2_010",
            ),
            M5Parabolic => d(
                5,
                "m=5 parabolic theorem: l' = c12/b12^2 with the explicit shear matrix",
                S::M5Parabolic,
                &["c12"],
                &[],
                &["b12"],
                &[("l", 0.0)],
                ClosedForm,
                "f1_100 + z2*f2_200",
            ),
            M6HyperbolicI => d(
                6,
                "m=6 hyperbolic case (i): one free function b11, b22 from the quadratic relation",
                S::M6Hyperbolic,
                &["c16", "c24", "c35"],
                &[],
                &["b11"],
                &[("l1", 1.5), ("l2", 1.2)],
                ClosedForm,
                "1 + f1'*f2'*f3'",
            ),
            M6HyperbolicII => d(
                6,
                "m=6 hyperbolic case (ii): (l1')^3 = k0 l1^2 (m1 l1 + m0)^2, discrete symmetry",
                S::M6Hyperbolic,
                &["k0", "k1", "k2", "k3", "k4", "k5", "m0", "m1"],
                &[],
                &[],
                &[("l1", 1.0)],
                GenericOnly,
                "1 + f1'*f2'*f3'",
            ),
            M6HyperbolicExt => d(
                6,
                "m=6 hyperbolic extension: exponential matrix with the triangular spatial system",
                S::HyperbolicExtension,
                &["c1", "c2"],
                &[],
                &[],
                &[],
                GenericOnly,
                "none",
            ),
            M6EllipticKne1 => d(
                6,
                "m=6 elliptic theorem, k != 1: (theta')^3 = gamma^2 c56 (k^2+2k cos+1)^2/(k cos+1)",
                S::M6Elliptic,
                &["k", "c12", "c13", "c14", "c56"],
                &[("gamma_sign", 1.0)],
                &[],
                &[("theta", 0.0)],
                ClosedForm,
                "f2_100 + f2_010*f1_001",
            ),
            M6EllipticKeq1 => d(
                6,
                "m=6 elliptic theorem, k = 1: theta reaches pi in finite time",
                S::M6Elliptic,
                &["c12", "c36", "c46", "c56", "gamma", "m1"],
                &[("m0", f64::NAN)],
                &[],
                &[("theta", 0.0)],
                ClosedForm,
                "f2_100 + f2_010*f1_001",
            ),
            M6EllipticExt => d(
                6,
                "m=6 elliptic extension: the trigonometric matrix with frequency theta0",
                S::EllipticExtension,
                &["theta0"],
                &[],
                &[],
                &[],
                GenericOnly,
                "none",
            ),
            M6ParabolicMain => d(
                6,
                "m=6 parabolic lemma, k2*k0 != 0: (l2')^3 = k3 l2^4/(k0 - k2 l2^2)",
                S::M6Parabolic,
                &["k0", "k1", "k2", "k3", "k4", "c12", "c45"],
                &[],
                &[],
                &[("l2", 0.5)],
                ClosedForm,
                "f2_100 + z2*f3_200 - f1_001*f3_100",
            ),
            M6Parabolic2 => d(
                6,
                "m=6 parabolic degenerate case with l2 = k4 t^3",
                S::M6Parabolic,
                &["k1", "k2", "k3", "k4", "k5", "k6", "k7"],
                &[],
                &[],
                &[],
                ClosedForm,
                "f2_100 + z2*f3_200 - f1_001*f3_100",
            ),
            M6Parabolic3 => d(
                6,
                "m=6 parabolic degenerate case with l2 = k4/t^3",
                S::M6Parabolic,
                &["k0", "k1", "k3", "k4", "k5", "k6", "k7", "k8"],
                &[],
                &[],
                &[],
                ClosedForm,
                "f2_100 + z2*f3_200 - f1_001*f3_100",
            ),
            M6ParabolicExt => d(
                6,
                "m=6 parabolic extension: the (t^2, 1/t) matrix with a first-order PDE for v",
                S::ParabolicExtension,
                &[],
                &[],
                &[],
                &[],
                GenericOnly,
                "none",
            ),
        }
    }
}

pub fn list_families() -> Vec<FamilyDescriptor> {
    FamilyId::ALL.iter().map(|f| f.descriptor()).collect()
}

/// Everything needed to instantiate a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyInput {
    pub family: FamilyId,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub functions: BTreeMap<String, String>,
    #[serde(default)]
    pub initial: BTreeMap<String, f64>,
    #[serde(default = "default_a0")]
    pub a0: [f64; 4],
    #[serde(default)]
    pub t_ref: f64,
    pub horizon: (f64, f64),
}

pub fn default_a0() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

/// Named constants with checked lookup.
#[derive(Clone, Debug)]
pub(crate) struct Consts<'a>(pub &'a BTreeMap<String, f64>);

impl Consts<'_> {
    pub fn get(&self, name: &str) -> Result<f64, FamilyError> {
        let v = *self
            .0
            .get(name)
            .ok_or_else(|| FamilyError::MissingConstant(name.to_string()))?;
        if !v.is_finite() {
            return Err(FamilyError::Constant {
                name: name.to_string(),
                message: format!("must be finite, got {v}"),
            });
        }
        Ok(v)
    }

    pub fn nonzero(&self, name: &str) -> Result<f64, FamilyError> {
        let v = self.get(name)?;
        if v == 0.0 {
            return Err(FamilyError::Constant {
                name: name.to_string(),
                message: format!("{name} must be nonzero"),
            });
        }
        Ok(v)
    }

    pub fn or(&self, name: &str, default: f64) -> f64 {
        self.0.get(name).copied().unwrap_or(default)
    }
}

/// A free function of t with its symbolic derivative.
#[derive(Clone, Debug)]
pub(crate) struct TimeFn {
    name: String,
    e: Expr,
    d: Expr,
}

impl TimeFn {
    pub fn new(
        name: &str,
        text: &str,
        consts: &BTreeMap<String, f64>,
    ) -> Result<TimeFn, FamilyError> {
        let known: Vec<&str> = consts.keys().map(|s| s.as_str()).collect();
        let e = parse_with(text, &known)
            .map_err(|source| FamilyError::Function {
                name: name.to_string(),
                source,
            })?
            .bind(consts);
        if let Some(var) = e.variables().into_iter().find(|v| v != "t") {
            return Err(FamilyError::TimeDependence {
                name: name.to_string(),
                var,
            });
        }
        let d = e.diff("t");
        Ok(TimeFn {
            name: name.to_string(),
            e,
            d,
        })
    }

    pub fn at(&self, t: Jet) -> Result<Jet, String> {
        self.e
            .eval(&[("t", t)])
            .map_err(|e| format!("{}: {e}", self.name))
    }

    /// The derivative as a jet.
    pub fn rate(&self, t: Jet) -> Result<Jet, String> {
        self.d
            .eval(&[("t", t)])
            .map_err(|e| format!("{}: {e}", self.name))
    }

    pub fn value(&self, t: f64) -> Result<f64, String> {
        self.e
            .eval(&[("t", t)])
            .map_err(|e| format!("{}: {e}", self.name))
    }
}

pub(crate) fn time_fn(input: &FamilyInput, name: &str) -> Result<TimeFn, FamilyError> {
    let text = input
        .functions
        .get(name)
        .ok_or_else(|| FamilyError::MissingFunction(name.to_string()))?;
    TimeFn::new(name, text, &input.constants)
}

pub(crate) fn cj(x: f64) -> Jet {
    Jet::constant(x)
}

/// Initial value of a state: config value or the descriptor default.
pub(crate) fn initial(input: &FamilyInput, name: &str) -> f64 {
    if let Some(v) = input.initial.get(name) {
        return *v;
    }
    input
        .family
        .descriptor()
        .states
        .iter()
        .find(|(n, _)| *n == name)
        .map_or(0.0, |(_, v)| *v)
}

/// Check admissibility and fill in derived constants.
pub fn validate_constants(
    family: FamilyId,
    constants: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, FamilyError> {
    use FamilyId::*;
    let desc = family.descriptor();
    let c = Consts(constants);
    for name in desc.constants {
        c.get(name)?;
    }
    let mut out = constants.clone();
    for (name, default) in desc.optional_constants {
        if !out.contains_key(*name) && default.is_finite() {
            out.insert(name.to_string(), *default);
        }
    }
    match family {
        M3Kirchhoff => {}
        M4 => {
            c.nonzero("c14")?;
        }
        M5Elliptic => {
            c.nonzero("c12")?;
        }
        M5Hyperbolic => {
            c.nonzero("c15")?;
        }
        M5Parabolic => {
            c.nonzero("c12")?;
        }
        M6HyperbolicI => {
            for n in ["c16", "c24", "c35"] {
                c.nonzero(n)?;
            }
        }
        M6HyperbolicII => hyperbolic::validate_ii(&c)?,
        M6HyperbolicExt => hyperbolic::validate_ext(&c)?,
        M6EllipticKne1 => elliptic::validate_kne1(&mut out)?,
        M6EllipticKeq1 => elliptic::validate_keq1(&mut out)?,
        M6EllipticExt => {
            c.nonzero("theta0")?;
        }
        M6ParabolicMain => parabolic::validate_main(&c)?,
        M6Parabolic2 => {
            for n in ["k3", "k4", "k5"] {
                c.nonzero(n)?;
            }
        }
        M6Parabolic3 => {
            for n in ["k3", "k4", "k5"] {
                c.nonzero(n)?;
            }
        }
        M6ParabolicExt => {}
    }
    Ok(out)
}

/// The time law for validated constants.
pub fn time_law(input: &FamilyInput) -> Result<TimeLaw, FamilyError> {
    use FamilyId::*;
    match input.family {
        M3Kirchhoff => kirchhoff::m3_law(input),
        M4 => kirchhoff::m4_law(input),
        M5Elliptic => m5::elliptic_law(input),
        M5Hyperbolic => m5::hyperbolic_law(input),
        M5Parabolic => m5::parabolic_law(input),
        M6HyperbolicI => hyperbolic::law_i(input),
        M6HyperbolicII => hyperbolic::law_ii(input),
        M6HyperbolicExt => {
            let c = Consts(&input.constants);
            Ok(exponential_law(c.get("c1")?, c.get("c2")?))
        }
        M6EllipticKne1 => elliptic::kne1_law(input),
        M6EllipticKeq1 => elliptic::keq1_law(input),
        M6EllipticExt => elliptic::trig_law(Consts(&input.constants).get("theta0")?),
        M6ParabolicMain => parabolic::main_law(input),
        M6Parabolic2 => parabolic::perhe2_law(input),
        M6Parabolic3 => parabolic::perhe3_law(input),
        M6ParabolicExt => Ok(parabolic::ext_law()),
    }
}

/// The constant values the family's Q_ij and p_ijk must take.
pub fn declared(
    family: FamilyId,
    constants: &BTreeMap<String, f64>,
) -> Result<Declared, FamilyError> {
    use FamilyId::*;
    let c = Consts(constants);
    match family {
        M3Kirchhoff => kirchhoff::m3_declared(&c),
        M4 => kirchhoff::m4_declared(&c),
        M5Elliptic => m5::elliptic_declared(&c),
        M5Hyperbolic => m5::hyperbolic_declared(&c),
        M5Parabolic => m5::parabolic_declared(&c),
        M6HyperbolicI => hyperbolic::declared_i(&c),
        M6HyperbolicII => hyperbolic::declared_ii(&c),
        M6HyperbolicExt => hyperbolic::declared_ext(&c),
        M6EllipticKne1 => elliptic::kne1_declared(&c),
        M6EllipticKeq1 => elliptic::keq1_declared(&c),
        M6EllipticExt => elliptic::trig_declared(&c),
        M6ParabolicMain => parabolic::main_declared(&c),
        M6Parabolic2 => parabolic::perhe2_declared(&c),
        M6Parabolic3 => parabolic::perhe3_declared(&c),
        M6ParabolicExt => Ok(parabolic::ext_declared()),
    }
}

/// Value of a declared single-entry Q check (0 if the family leaves it free).
pub(crate) fn declared_q(d: &Declared, i: usize, j: usize) -> f64 {
    d.q.iter()
        .find(|c| c.terms.len() == 1 && c.terms[0].0 == [i, j])
        .map_or(0.0, |c| c.value)
}

pub fn build_spatial_for(
    family: FamilyId,
    input: &FamilyInput,
) -> Result<SpatialComponent, FamilyError> {
    let bundle = Bundle {
        texts: &input.functions,
        constants: &input.constants,
    };
    Ok(build_spatial(family.descriptor().schema, &bundle)?)
}

/// Validate, integrate and assemble a flow map.
pub fn instantiate(input: &FamilyInput, opts: &SolveOptions) -> Result<FlowMap, FamilyError> {
    let constants = validate_constants(input.family, &input.constants)?;
    let input = FamilyInput {
        constants,
        ..input.clone()
    };
    let law = time_law(&input)?;
    let declared = declared(input.family, &input.constants)?;
    assemble(&input, law, declared, opts)
}

/// Build the family with one constant scaled by `factor` inside the time law
/// (and spatial bundle), while the declared values keep the original
/// constants. Admissibility is not re-checked for the perturbed set, except
/// that keq1 re-solves m0 from its relation.
pub fn instantiate_perturbed(
    input: &FamilyInput,
    name: &str,
    factor: f64,
    opts: &SolveOptions,
) -> Result<FlowMap, FamilyError> {
    let constants = validate_constants(input.family, &input.constants)?;
    let declared = declared(input.family, &constants)?;
    let mut perturbed = constants.clone();
    let v = perturbed
        .get_mut(name)
        .ok_or_else(|| FamilyError::MissingConstant(name.to_string()))?;
    *v *= factor;
    if input.family == FamilyId::M6EllipticKeq1 && name != "m0" {
        // c12 enters only through the m0 relation: re-solve it
        perturbed.remove("m0");
        perturbed = validate_constants(input.family, &perturbed)?;
    }
    let pin = FamilyInput {
        constants: perturbed,
        ..input.clone()
    };
    let law = time_law(&pin)?;
    let mut fm = assemble(&pin, law, declared, opts)?;
    fm.constants = constants;
    Ok(fm)
}

fn assemble(
    input: &FamilyInput,
    law: TimeLaw,
    declared: Declared,
    opts: &SolveOptions,
) -> Result<FlowMap, FamilyError> {
    let v = build_spatial_for(input.family, input)?;
    let tc = TimeComponent::solve(law, input.a0, input.t_ref, input.horizon, opts)?;
    let mut fm = FlowMap::new(tc, v);
    fm.family = Some(input.family);
    fm.declared = declared;
    fm.constants = input.constants.clone();
    Ok(fm)
}

/// Derivative of a named spatial function at z.
pub(crate) fn partial(
    v: &SpatialComponent,
    name: &str,
    vars: &[&str],
    z: &[f64; 3],
) -> Result<f64, ExprError> {
    let mut e = v
        .named
        .get(name)
        .cloned()
        .ok_or_else(|| ExprError::Unbound(name.to_string()))?;
    for var in vars {
        e = e.diff(var);
    }
    e.at_z(z)
}

/// The family's own vorticity formula for h, if it has one for these constants.
pub fn closed_form_vorticity(
    family: FamilyId,
    v: &SpatialComponent,
    constants: &BTreeMap<String, f64>,
    z: &[f64; 3],
) -> Result<Option<[f64; 3]>, FamilyError> {
    use FamilyId::*;
    let c = Consts(constants);
    let err = |source: ExprError| FamilyError::Function {
        name: "closed-form vorticity".into(),
        source,
    };
    let d = declared(family, constants)?;
    let h = match family {
        M3Kirchhoff => Some([c.get("c23")?, -c.get("c13")?, c.get("c12")?]),
        M4 => Some(kirchhoff::m4_vorticity(&c, v, z).map_err(err)?),
        M5Elliptic => Some(m5::elliptic_vorticity(&c, v, z).map_err(err)?),
        M5Hyperbolic => Some(m5::hyperbolic_vorticity(&c, v, z).map_err(err)?),
        M5Parabolic => Some(m5::parabolic_vorticity(&c, v, z).map_err(err)?),
        M6HyperbolicI => Some(hyperbolic::vorticity_i(&d, v, z).map_err(err)?),
        M6EllipticKne1 | M6EllipticKeq1 => Some(elliptic::vorticity(&d, v, z).map_err(err)?),
        M6ParabolicMain | M6Parabolic2 | M6Parabolic3 => {
            parabolic::vorticity(&d, v, z).map_err(err)?
        }
        M6HyperbolicII | M6HyperbolicExt | M6EllipticExt | M6ParabolicExt => None,
    };
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn registry_has_fifteen_unique_ids() {
        let all = list_families();
        assert_eq!(all.len(), 15);
        let ids: HashSet<_> = all.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids.len(), 15);
        for d in &all {
            assert!((3..=6).contains(&d.m));
            assert_eq!(d.m, d.schema.m());
            assert_eq!(d.id.as_str().parse::<FamilyId>().unwrap(), d.id);
        }
        assert!("m7".parse::<FamilyId>().is_err());
    }

    #[test]
    fn m5_elliptic_rejects_zero_c12() {
        let mut c = BTreeMap::new();
        c.insert("c12".to_string(), 0.0);
        let e = validate_constants(FamilyId::M5Elliptic, &c).unwrap_err();
        assert_eq!(e.to_string(), "c12: c12 must be nonzero");
    }

    #[test]
    fn time_functions_reject_space() {
        let e = TimeFn::new("b11", "1 + z1", &BTreeMap::new()).unwrap_err();
        assert!(matches!(e, FamilyError::TimeDependence { .. }));
        let mut c = BTreeMap::new();
        c.insert("c".to_string(), 2.0);
        let f = TimeFn::new("b", "exp(c*t)", &c).unwrap();
        let j = f.at(Jet::variable(1.0)).unwrap();
        assert!((j.d1 - 2.0 * 2f64.exp()).abs() < 1e-12);
        assert!(TimeFn::new("b", "1/(b*t)", &c).is_err());
    }
}
