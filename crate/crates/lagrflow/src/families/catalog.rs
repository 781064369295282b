//! Default admissible instances and random perturbations of them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{default_a0, instantiate, validate_constants, FamilyError, FamilyId, FamilyInput};
use crate::temporal::SolveOptions;
use crate::verify::FlowMap;

fn map<V: Clone>(pairs: &[(&str, V)]) -> BTreeMap<String, V> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn strings(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

const HYP_F: [(&str, &str); 3] = [
    ("f1", "0.3*z1^2 + 0.5*z1"),
    ("f2", "0.4*sin(z2)"),
    ("f3", "0.5*exp(z3/2)"),
];

const PAR_F: [(&str, &str); 3] = [
    ("f1", "0.3*sin(z3)"),
    ("f2", "z1 + 0.1*z1^3"),
    ("f3", "0.2*exp(z1/2)"),
];

/// The catalog instance of a family.
pub fn catalog(id: FamilyId) -> FamilyInput {
    use FamilyId::*;
    let base = |constants: &[(&str, f64)], functions: Vec<(&str, &str)>, horizon: (f64, f64)| {
        FamilyInput {
            family: id,
            constants: map(constants),
            functions: strings(&functions),
            initial: BTreeMap::new(),
            a0: default_a0(),
            t_ref: horizon.0,
            horizon,
        }
    };
    let mut input = match id {
        M3Kirchhoff => base(
            &[("c12", 0.3), ("c13", -0.2), ("c23", 0.5)],
            vec![
                ("b11", "1 + 0.2*sin(t)"),
                ("b22", "1.1 + 0.1*cos(2*t)"),
                ("w1", "0.3"),
                ("w2", "0.2*t"),
                ("w3", "0.5*cos(t)"),
            ],
            (0.0, 2.0),
        ),
        M4 => base(
            &[
                ("c12", 0.4),
                ("c13", -0.3),
                ("c14", 0.8),
                ("c23", 0.2),
                ("c24", 0.5),
                ("c34", -0.6),
            ],
            vec![
                ("b11", "1 + 0.2*sin(t)"),
                ("b22", "1 + 0.1*t"),
                ("w1", "0.4*cos(t)"),
                ("f", "0.3*sin(z2)*z3 + 0.2*z3^2"),
            ],
            (0.0, 2.0),
        ),
        M5Elliptic => base(
            &[("c12", 1.3)],
            vec![
                ("b11", "1 + 0.2*sin(t)"),
                ("holo", "(0.15 + 0.05*z3)*zeta^2 + 0.1*zeta"),
            ],
            (0.0, 2.0),
        ),
        M5Hyperbolic => base(
            &[("c15", 0.7)],
            vec![
                ("b11", "1 + 0.2*sin(t)"),
                ("f1", "0.3*z1*z3 + 0.2*sin(z1)"),
                ("f2", "0.4*sin(z2) + z3^2"),
            ],
            (0.0, 1.0),
        ),
        M5Parabolic => base(
            &[("c12", 0.9)],
            vec![
                ("b12", "1 + 0.2*cos(t)"),
                ("f1", "z1 + 0.2*z1*z3"),
                ("f2", "0.1*z1^2*z3 + 0.2*z1"),
            ],
            (0.0, 2.0),
        ),
        M6HyperbolicI => {
            let mut f = HYP_F.to_vec();
            f.push(("b11", "1 + t/3"));
            base(&[("c16", 1.0), ("c24", 1.5), ("c35", -2.0)], f, (0.0, 0.3))
        }
        M6HyperbolicII => {
            let mut inp = base(
                &[
                    ("k0", 0.8),
                    ("k1", 1.2),
                    ("k2", 0.9),
                    ("k3", 0.3),
                    ("k4", -0.4),
                    ("k5", 0.5),
                    ("m0", 1.1),
                    ("m1", 0.6),
                ],
                HYP_F.to_vec(),
                (-0.5, 0.5),
            );
            inp.t_ref = 0.0;
            inp
        }
        M6HyperbolicExt => base(
            &[("c1", 0.5), ("c2", 0.5)],
            vec![
                ("g", "(z1 + 2)/(z2 + 2)"),
                ("q1", "0.1*s^2"),
                ("q2", "0.2*s"),
                ("g2", "0.1*(z2 + 2)^2/(z1 + 2)"),
                ("q", "cos(z3) + 2"),
            ],
            (0.0, 1.0),
        ),
        M6EllipticKne1 => base(
            &[
                ("k", 0.3),
                ("c12", -3.0),
                ("c13", 0.4),
                ("c14", 0.5),
                ("c56", 0.7),
            ],
            vec![
                ("f1", "0.3*sin(z3) + 0.2*z3^2"),
                ("holo", "zeta + 0.1*zeta^2"),
            ],
            (0.0, 2.0),
        ),
        M6EllipticKeq1 => base(
            &[
                ("c12", -2.71),
                ("c36", 1.5097),
                ("c46", -1.3621),
                ("c56", 1.0641),
                ("gamma", 6.6079f64.sqrt()),
                ("m1", 1.532),
            ],
            vec![
                ("f1", "0.3*sin(z3) + 0.2*z3^2"),
                ("holo", "zeta + 0.1*zeta^2"),
            ],
            (0.0, 20.0),
        ),
        M6EllipticExt => base(
            &[("theta0", 0.7)],
            vec![("f1", "0.3*z3^2"), ("holo", "-2*zeta + 0.2*zeta^2")],
            (0.0, 2.0),
        ),
        M6ParabolicMain => base(
            &[
                ("k0", 1.3),
                ("k1", 0.4),
                ("k2", 0.6),
                ("k3", 0.9),
                ("k4", 0.7),
                ("c12", -1.1),
                ("c45", 0.8),
            ],
            PAR_F.to_vec(),
            (0.0, 0.5),
        ),
        M6Parabolic2 => base(
            &[
                ("k1", 0.3),
                ("k2", 1.0),
                ("k3", 1.0),
                ("k4", 1.0),
                ("k5", 1.0),
                ("k6", 0.0),
                ("k7", -0.2),
            ],
            PAR_F.to_vec(),
            (0.5, 2.0),
        ),
        M6Parabolic3 => base(
            &[
                ("k0", 0.7),
                ("k1", 0.3),
                ("k3", 1.2),
                ("k4", 0.9),
                ("k5", 0.5),
                ("k6", 0.0),
                ("k7", 0.0),
                ("k8", 0.6),
            ],
            PAR_F.to_vec(),
            (0.5, 2.0),
        ),
        M6ParabolicExt => base(
            &[],
            vec![
                ("F", "sin(s) + z2*s"),
                ("f2", "z1"),
                ("g", "0.2*(z1 + z3^2)"),
            ],
            (0.5, 2.0),
        ),
    };
    if id == M6EllipticKeq1 {
        input.initial.insert("theta".into(), 0.0);
    }
    input
}

/// Scale every required constant by an independent factor in [1 − spread, 1 + spread],
/// keeping the ties a family imposes.
pub fn perturb_constants(input: &FamilyInput, spread: f64, rng: &mut impl Rng) -> FamilyInput {
    let mut out = input.clone();
    for name in input.family.descriptor().constants {
        if let Some(v) = out.constants.get_mut(*name) {
            *v *= 1.0 + rng.gen_range(-spread..=spread);
        }
    }
    match input.family {
        FamilyId::M6HyperbolicExt => {
            let c1 = out.constants["c1"];
            out.constants.insert("c2".into(), c1);
        }
        FamilyId::M6EllipticKeq1 => {
            out.constants.remove("m0");
        }
        _ => {}
    }
    out
}

/// A random admissible instance near the catalog one: constants validate, the
/// integration succeeds and (except where blow-up is intended) covers the
/// requested horizon.
pub fn random_admissible(
    id: FamilyId,
    seed: u64,
    opts: &SolveOptions,
) -> Result<(FamilyInput, FlowMap), FamilyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = catalog(id);
    let mut last = None;
    for _ in 0..50 {
        let cand = perturb_constants(&base, 0.3, &mut rng);
        if let Err(e) = validate_constants(id, &cand.constants) {
            last = Some(e);
            continue;
        }
        match instantiate(&cand, opts) {
            Ok(fm) if id == FamilyId::M6EllipticKeq1 || fm.tc.blowups().is_empty() => {
                match fm.alpha_sign_ok() {
                    true => return Ok((cand, fm)),
                    false => {
                        last = Some(FamilyError::Constant {
                            name: "alpha".into(),
                            message: "alpha changes sign on the domain".into(),
                        })
                    }
                }
            }
            Ok(fm) => {
                last = Some(FamilyError::Constant {
                    name: "horizon".into(),
                    message: format!("blow-up at t = {}", fm.tc.blowups()[0].t),
                })
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| FamilyError::Constant {
        name: id.to_string(),
        message: "no admissible constant set found".into(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_constants_validate() {
        for id in FamilyId::ALL {
            let c = catalog(id);
            validate_constants(id, &c.constants).unwrap_or_else(|e| panic!("{id}: {e}"));
        }
    }

    #[test]
    fn perturbation_keeps_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = perturb_constants(&catalog(FamilyId::M6HyperbolicExt), 0.3, &mut rng);
        assert_eq!(p.constants["c1"], p.constants["c2"]);
        assert_ne!(p.constants["c1"], 0.5);
    }
}
