//! Command-line front end. Exit codes: 0 pass, 1 verification failure or
//! runtime error, 2 configuration error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::families::{list_families, FamilyId};
use crate::temporal::BlowUp;
use crate::verify::report::sample_times;
use crate::verify::{constancy_report, vorticity_from, FlowMap, VerifyError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "lagrflow",
    version,
    about = "Construct and verify separated-variable Euler flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the solution families.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Print the catalog config of a family (a starting point for editing).
    Catalog { family: FamilyId },
    /// Run every check; writes report.json.
    Verify(RunArgs),
    /// Export particle trajectories and vorticity snapshots.
    Sample(RunArgs),
    /// Export vorticity snapshots only.
    Vorticity(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    pub config: PathBuf,
    /// Tolerance for the constancy of alpha and h.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: the config's output.dir, else ./lagrflow-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also print the report / sidecar JSON on stdout.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, thiserror::Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    fn code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAIL,
        }
    }
}

/// Run a parsed command, writing human output to `out`. Returns the exit code.
pub fn run(cli: Cli, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32 {
    let result = match cli.command {
        Command::List { json } => list(json, out).map(|_| EXIT_PASS),
        Command::Catalog { family } => {
            let text = serde_json::to_string_pretty(&RunConfig::from_catalog(family))
                .expect("config serializes");
            writeln!(out, "{text}")
                .map(|_| EXIT_PASS)
                .map_err(|source| RunError::Io {
                    path: "stdout".into(),
                    source,
                })
        }
        Command::Verify(a) => verify(&a, out),
        Command::Sample(a) => sample(&a, out, true),
        Command::Vorticity(a) => sample(&a, out, false),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let kind = if e.code() == EXIT_CONFIG {
                "config error"
            } else {
                "error"
            };
            let _ = writeln!(err, "{kind}: {e}");
            e.code()
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn list(json: bool, out: &mut dyn std::io::Write) -> Result<(), RunError> {
    let fams = list_families();
    let text = if json {
        serde_json::to_string_pretty(&fams).expect("descriptors serialize") + "\n"
    } else {
        let mut s = String::new();
        for d in &fams {
            let _ = writeln!(s, "{:<22} m={}  {}", d.id.as_str(), d.m, d.anchor);
        }
        s
    };
    out.write_all(text.as_bytes())
        .map_err(io(Path::new("stdout")))
}

fn load(a: &RunArgs) -> Result<(RunConfig, PathBuf), RunError> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(t) = a.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(ConfigError::Field {
                path: "--tol".into(),
                message: format!("must be a positive number, got {t}"),
            }
            .into());
        }
        cfg.tolerances.invariant = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let dir = a.out.clone().unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    Ok((cfg, dir))
}

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(io(path))
}

fn verify(a: &RunArgs, out: &mut dyn std::io::Write) -> Result<i32, RunError> {
    let (cfg, dir) = load(a)?;
    let fm = cfg.build()?;
    let report = constancy_report(&fm, &cfg.report_options())?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&dir.join("report.json"), &text)?;

    let mut s = String::new();
    let _ = writeln!(s, "family {} (m = {})", cfg.family, report.m);
    if report.truncated {
        let _ = writeln!(
            s,
            "horizon truncated to [{}, {}]: {}",
            report.valid_horizon.0,
            report.valid_horizon.1,
            report
                .blowups
                .iter()
                .map(|b| format!("t = {} ({})", b.t, b.reason))
                .collect::<Vec<_>>()
                .join("; ")
        );
    }
    for c in &report.checks {
        let op = match c.bound {
            crate::verify::report::Bound::AtMost => "<=",
            crate::verify::report::Bound::AtLeast => ">=",
        };
        let _ = writeln!(
            s,
            "{} {:<44} {:.3e} {op} {:.0e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tolerance
        );
    }
    let _ = writeln!(
        s,
        "{}",
        if report.passed {
            "verdict: PASS"
        } else {
            "verdict: FAIL"
        }
    );
    if a.json {
        s.push_str(&text);
    }
    out.write_all(s.as_bytes())
        .map_err(io(Path::new("stdout")))?;
    Ok(if report.passed { EXIT_PASS } else { EXIT_FAIL })
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct Sidecar<'a> {
    family: FamilyId,
    seed: u64,
    requested_horizon: (f64, f64),
    valid_horizon: (f64, f64),
    truncated: bool,
    blowups: &'a [BlowUp],
    particles: usize,
    times: usize,
    vorticity_points: usize,
    snapshots: usize,
    files: Vec<String>,
}

fn trajectories(fm: &FlowMap, cfg: &RunConfig) -> Result<String, RunError> {
    let (lo, hi) = fm.valid_horizon();
    let zs = fm.domain.random(cfg.sample.particles, 1.0, cfg.seed);
    let ts = sample_times(lo, hi, cfg.sample.times);
    let snaps = ts
        .iter()
        .map(|&t| fm.snapshot(t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut s = String::from("particle_id,t,x1,x2,x3,u1,u2,u3\n");
    for (id, z) in zs.iter().enumerate() {
        let v = fm.v.eval(z).map_err(VerifyError::from)?;
        for snap in &snaps {
            let x = mul(&snap.a, &v);
            let u = mul(&snap.ap, &v);
            let _ = writeln!(
                s,
                "{id},{},{},{},{},{},{},{}",
                num(snap.t),
                num(x[0]),
                num(x[1]),
                num(x[2]),
                num(u[0]),
                num(u[1]),
                num(u[2])
            );
        }
    }
    Ok(s)
}

fn vorticity_field(fm: &FlowMap, cfg: &RunConfig) -> Result<(String, usize), RunError> {
    let (lo, hi) = fm.valid_horizon();
    let zs = fm.domain.grid(cfg.sample.field_points);
    let mut s = String::from("t,x1,x2,x3,w1,w2,w3\n");
    for t in sample_times(lo, hi, cfg.sample.snapshots) {
        let snap = fm.snapshot(t)?;
        for z in &zs {
            let pt = fm.point(*z)?;
            let alpha = crate::verify::alpha_pg(&snap, &pt);
            if alpha.abs() < 1e-10 {
                return Err(VerifyError::SingularMap { z: *z, alpha }.into());
            }
            let x = mul(&snap.a, &pt.v);
            let w = vorticity_from(&snap, &pt);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                num(t),
                num(x[0]),
                num(x[1]),
                num(x[2]),
                num(w[0]),
                num(w[1]),
                num(w[2])
            );
        }
    }
    Ok((s, zs.len()))
}

fn mul(a: &[Vec<f64>; 3], v: &[f64]) -> [f64; 3] {
    [0, 1, 2].map(|r| a[r].iter().zip(v).map(|(x, y)| x * y).sum())
}

fn sample(
    a: &RunArgs,
    out: &mut dyn std::io::Write,
    with_trajectories: bool,
) -> Result<i32, RunError> {
    let (cfg, dir) = load(a)?;
    let fm = cfg.build()?;
    let mut files = Vec::new();
    if with_trajectories {
        write_file(&dir.join("trajectories.csv"), &trajectories(&fm, &cfg)?)?;
        files.push("trajectories.csv".to_string());
    }
    let (field, npts) = vorticity_field(&fm, &cfg)?;
    write_file(&dir.join("vorticity.csv"), &field)?;
    files.push("vorticity.csv".to_string());

    let (r0, r1) = fm.tc.requested_horizon();
    let valid = fm.valid_horizon();
    let side = Sidecar {
        family: cfg.family,
        seed: cfg.seed,
        requested_horizon: (r0, r1),
        valid_horizon: valid,
        truncated: valid.0 > r0 || valid.1 < r1,
        blowups: fm.tc.blowups(),
        particles: if with_trajectories {
            cfg.sample.particles
        } else {
            0
        },
        times: if with_trajectories {
            cfg.sample.times
        } else {
            0
        },
        vorticity_points: npts,
        snapshots: cfg.sample.snapshots,
        files,
    };
    let text = serde_json::to_string_pretty(&side).expect("sidecar serializes") + "\n";
    let name = if with_trajectories {
        "sample.json"
    } else {
        "vorticity.json"
    };
    write_file(&dir.join(name), &text)?;
    let mut s = format!("wrote {} to {}\n", side.files.join(", "), dir.display());
    if side.truncated {
        let _ = writeln!(
            s,
            "horizon truncated to [{}, {}] (see {name})",
            valid.0, valid.1
        );
    }
    if a.json {
        s.push_str(&text);
    }
    out.write_all(s.as_bytes())
        .map_err(io(Path::new("stdout")))?;
    Ok(EXIT_PASS)
}
