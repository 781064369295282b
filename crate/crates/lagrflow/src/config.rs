//! Run configuration: a JSON document naming a family, its data, the label
//! domain and what to check or export.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::families::catalog::catalog;
use crate::families::{instantiate, instantiate_perturbed, FamilyError, FamilyId, FamilyInput};
use crate::spatial::SpatialError;
use crate::temporal::{SolveOptions, TemporalError};
use crate::verify::gauge::{boost_m5, shear_m4};
use crate::verify::report::{ReportOptions, Tolerances};
use crate::verify::{Domain, FlowMap};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

impl ConfigError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
        ConfigError::Field {
            path: path.into(),
            message: message.into(),
        }
    }

    /// The offending field, dotted (e.g. `functions.f1`).
    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Field { path, .. } => Some(path),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Labels per axis for the constancy grid.
    pub n_space: usize,
    pub n_time: usize,
    /// Random interior labels for the FD and inversion checks.
    pub fd_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let r = ReportOptions::default();
        GridConfig {
            n_space: r.n_space,
            n_time: r.n_time,
            fd_points: r.fd_points,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Number of random particles in the trajectory export.
    pub particles: usize,
    /// Output times per particle, spread over the valid horizon.
    pub times: usize,
    /// Labels per axis of the vorticity snapshots.
    pub field_points: usize,
    /// Number of vorticity snapshots.
    pub snapshots: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            particles: 8,
            times: 21,
            field_points: 3,
            snapshots: 5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// Scale one constant inside the time law while the declared values keep
/// the original; a deliberate corruption for negative tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturb {
    pub constant: String,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GaugeSpec {
    Matrix { h: Vec<Vec<f64>> },
    ShearM4 { e124: f64, e134: f64 },
    BoostM5 { s: f64, d: f64 },
}

impl GaugeSpec {
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        match self {
            GaugeSpec::Matrix { h } => h.clone(),
            GaugeSpec::ShearM4 { e124, e134 } => shear_m4(*e124, *e134),
            GaugeSpec::BoostM5 { s, d } => boost_m5(*s, *d),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyId,
    /// Start from the catalog instance and overlay the fields given here.
    #[serde(default)]
    pub catalog: bool,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub functions: BTreeMap<String, String>,
    #[serde(default)]
    pub initial: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ref: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<(f64, f64)>,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<Perturb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeSpec>,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    1
}

impl RunConfig {
    /// The catalog instance of a family written out in full.
    pub fn from_catalog(id: FamilyId) -> RunConfig {
        let c = catalog(id);
        RunConfig {
            family: id,
            catalog: false,
            constants: c.constants,
            functions: c.functions,
            initial: c.initial,
            a0: Some(c.a0),
            t_ref: Some(c.t_ref),
            horizon: Some(c.horizon),
            domain: Domain::default(),
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            seed: default_seed(),
            perturb: None,
            gauge: None,
            sample: SampleConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." {
                "(root)".to_string()
            } else {
                path
            };
            ConfigError::field(path, e.into_inner().to_string())
        })?;
        cfg.check_shape()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_json(&text)
    }

    fn check_shape(&self) -> Result<(), ConfigError> {
        let d = &self.domain;
        for k in 0..3 {
            if !(d.lo[k].is_finite() && d.hi[k].is_finite() && d.lo[k] < d.hi[k]) {
                return Err(ConfigError::field(
                    format!("domain.lo[{k}]"),
                    format!("need finite lo < hi, got {} and {}", d.lo[k], d.hi[k]),
                ));
            }
        }
        if self.grid.n_space == 0 {
            return Err(ConfigError::field("grid.n_space", "must be at least 1"));
        }
        if self.grid.n_time == 0 {
            return Err(ConfigError::field("grid.n_time", "must be at least 1"));
        }
        if d.grid(self.grid.n_space).is_empty() {
            return Err(ConfigError::field(
                "domain.exclude",
                "every grid label is excluded",
            ));
        }
        if let Some(p) = &self.perturb {
            if !p.factor.is_finite() {
                return Err(ConfigError::field("perturb.factor", "must be finite"));
            }
        }
        Ok(())
    }

    /// Family input after the catalog overlay, with every field checked.
    pub fn family_input(&self) -> Result<FamilyInput, ConfigError> {
        let mut input = if self.catalog {
            catalog(self.family)
        } else {
            let horizon = self.horizon.ok_or_else(|| {
                ConfigError::field("horizon", "required unless \"catalog\": true")
            })?;
            FamilyInput {
                family: self.family,
                constants: BTreeMap::new(),
                functions: BTreeMap::new(),
                initial: BTreeMap::new(),
                a0: crate::families::default_a0(),
                t_ref: horizon.0,
                horizon,
            }
        };
        input.constants.extend(self.constants.clone());
        input.functions.extend(self.functions.clone());
        input.initial.extend(self.initial.clone());
        if let Some(a0) = self.a0 {
            input.a0 = a0;
        }
        if let Some(h) = self.horizon {
            input.horizon = h;
            input.t_ref = h.0;
        }
        if let Some(t) = self.t_ref {
            input.t_ref = t;
        }

        let (t0, t1) = input.horizon;
        if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
            return Err(ConfigError::field(
                "horizon",
                format!("need finite t0 < t1, got [{t0}, {t1}]"),
            ));
        }
        if !(t0..=t1).contains(&input.t_ref) {
            return Err(ConfigError::field(
                "t_ref",
                format!("{} is outside the horizon [{t0}, {t1}]", input.t_ref),
            ));
        }
        let desc = self.family.descriptor();
        for name in self.constants.keys() {
            let known = desc.constants.contains(&name.as_str())
                || desc.optional_constants.iter().any(|(n, _)| n == name);
            if !known {
                return Err(ConfigError::field(
                    format!("constants.{name}"),
                    format!("not a constant of {}", self.family),
                ));
            }
        }
        for name in self.initial.keys() {
            if !desc.states.iter().any(|(n, _)| n == name) {
                return Err(ConfigError::field(
                    format!("initial.{name}"),
                    format!("not an integrated state of {}", self.family),
                ));
            }
        }
        if let Some(p) = &self.perturb {
            if !input.constants.contains_key(&p.constant)
                && !desc.constants.contains(&p.constant.as_str())
            {
                return Err(ConfigError::field(
                    "perturb.constant",
                    format!("'{}' is not a constant of {}", p.constant, self.family),
                ));
            }
        }
        Ok(input)
    }

    pub fn report_options(&self) -> ReportOptions {
        ReportOptions {
            n_space: self.grid.n_space,
            n_time: self.grid.n_time,
            fd_points: self.grid.fd_points,
            seed: self.seed,
            tol: self.tolerances.clone(),
        }
    }

    /// Validate, integrate, gauge: the flow map this config describes.
    pub fn build(&self) -> Result<FlowMap, ConfigError> {
        let input = self.family_input()?;
        let opts = SolveOptions::default();
        let built = match &self.perturb {
            None => instantiate(&input, &opts),
            Some(p) => instantiate_perturbed(&input, &p.constant, p.factor, &opts),
        };
        let mut fm = built.map_err(|e| family_error(self.family, e))?;
        fm.domain = self.domain.clone();
        if let Some(g) = &self.gauge {
            fm = fm
                .with_gauge(g.matrix())
                .map_err(|e| ConfigError::field("gauge", e.to_string()))?;
        }
        if !fm.alpha_sign_ok() {
            return Err(ConfigError::field(
                "functions",
                "det(dphi) vanishes or changes sign on the domain at t_ref",
            ));
        }
        Ok(fm)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("lagrflow-out"))
    }
}

/// Attach the config field a family error is about.
pub fn family_error(id: FamilyId, e: FamilyError) -> ConfigError {
    let desc = id.descriptor();
    let is_state = |n: &str| desc.states.iter().any(|(s, _)| *s == n);
    let path = match &e {
        FamilyError::UnknownFamily(_) => "family".to_string(),
        FamilyError::MissingConstant(n) => format!("constants.{n}"),
        FamilyError::Constant { name, .. } if is_state(name) => format!("initial.{name}"),
        FamilyError::Constant { name, .. } if name == "horizon" => "horizon".to_string(),
        FamilyError::Constant { name, .. } => format!("constants.{name}"),
        FamilyError::Relation { .. } => "constants".to_string(),
        FamilyError::MissingFunction(n)
        | FamilyError::Function { name: n, .. }
        | FamilyError::TimeDependence { name: n, .. } => format!("functions.{n}"),
        FamilyError::Spatial(
            SpatialError::Missing(n)
            | SpatialError::Expr { name: n, .. }
            | SpatialError::Schema { name: n, .. },
        ) => {
            format!("functions.{n}")
        }
        FamilyError::Spatial(_) => "functions".to_string(),
        FamilyError::Temporal(t) => match t {
            TemporalError::NotUnit(_) => "a0",
            TemporalError::OutsideHorizon { .. } => "t_ref",
            TemporalError::SingularGauge(_) | TemporalError::GaugeShape { .. } => "gauge",
            TemporalError::Initial(_)
            | TemporalError::Law { .. }
            | TemporalError::Integrator(_) => "initial",
        }
        .to_string(),
    };
    ConfigError::field(path, e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shorthand_builds() {
        let cfg = RunConfig::from_json(r#"{"family": "m5-hyperbolic", "catalog": true}"#).unwrap();
        let fm = cfg.build().unwrap();
        assert_eq!(fm.m(), 5);
    }

    #[test]
    fn full_catalog_round_trips_through_json() {
        for id in FamilyId::ALL {
            let cfg = RunConfig::from_catalog(id);
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn errors_name_the_field() {
        let path = |text: &str| match RunConfig::from_json(text).and_then(|c| c.build().map(|_| ()))
        {
            Err(e) => e.path().unwrap().to_string(),
            Ok(()) => panic!("accepted: {text}"),
        };
        assert_eq!(path(r#"{"family": "m7"}"#), "family");
        assert_eq!(
            path(r#"{"family": "m4", "catalog": true, "grid": {"n_space": "x"}}"#),
            "grid.n_space"
        );
        assert_eq!(
            path(r#"{"family": "m4", "horizon": [0, 1]}"#),
            "constants.c12"
        );
        let mut cfg = RunConfig::from_catalog(FamilyId::M4);
        cfg.functions.remove("f");
        assert_eq!(cfg.build().err().unwrap().path(), Some("functions.f"));
        cfg = RunConfig::from_catalog(FamilyId::M4);
        cfg.constants.insert("c99".into(), 1.0);
        assert_eq!(cfg.build().err().unwrap().path(), Some("constants.c99"));
        assert_eq!(
            path(r#"{"family": "m4", "catalog": true, "horizon": [1, 0]}"#),
            "horizon"
        );
        assert_eq!(
            path(r#"{"family": "m4", "catalog": true, "bogus": 1}"#),
            "bogus"
        );
    }

    #[test]
    fn tolerances_override_partially() {
        let cfg = RunConfig::from_json(
            r#"{"family": "m4", "catalog": true, "tolerances": {"invariant": 1e-3}}"#,
        )
        .unwrap();
        assert_eq!(cfg.tolerances.invariant, 1e-3);
        assert_eq!(cfg.tolerances.declared, Tolerances::default().declared);
    }
}
