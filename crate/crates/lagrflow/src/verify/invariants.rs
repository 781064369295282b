//! Family-specific invariants and discrete symmetries.

use serde::Serialize;

use super::VerifyError;
use crate::families::FamilyId;
use crate::temporal::TimeComponent;

/// λᵢ′ = (log ℓᵢ)′ read off the hyperbolic frame: ℓ1 = B16/B11, ℓ2 = B24/B22.
pub fn hyperbolic_lambda_rates(tc: &TimeComponent, t: f64) -> Result<(f64, f64), VerifyError> {
    let s = tc.ungauged().eval(t)?;
    let logd = |num: crate::jet::Jet, den: crate::jet::Jet| num.d1 / num.v - den.d1 / den.v;
    Ok((logd(s.b[5][0], s.b[0][0]), logd(s.b[3][1], s.b[1][1])))
}

/// λ1′λ2′(λ1′ + λ2′), which the hyperbolic law keeps equal to Q16·Q24·Q35.
pub fn hyperbolic_invariant(l1: f64, l2: f64) -> f64 {
    l1 * l2 * (l1 + l2)
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

/// Evaluate the invariant checks that apply to `family` at the given times.
pub fn family_checks(
    family: FamilyId,
    tc: &TimeComponent,
    constants: &std::collections::BTreeMap<String, f64>,
    times: &[f64],
) -> Result<Vec<InvariantCheck>, VerifyError> {
    let tc = tc.ungauged();
    let c = |n: &str| constants.get(n).copied().unwrap_or(f64::NAN);
    let mut out = Vec::new();
    match family {
        FamilyId::M6HyperbolicI => {
            let target = c("c16") * c("c24") * c("c35");
            let (mut frame, mut state) = (0.0f64, 0.0f64);
            for &t in times {
                let (a, b) = hyperbolic_lambda_rates(&tc, t)?;
                frame =
                    frame.max((hyperbolic_invariant(a, b) - target).abs() / (1.0 + target.abs()));
                let y = tc.law_state(t)?;
                let dy = tc.law_rate(t, &y)?;
                let inv = hyperbolic_invariant(dy[0] / y[0], dy[1] / y[1]);
                state = state.max((inv - target).abs() / (1.0 + target.abs()));
            }
            out.push(InvariantCheck {
                name: "lambda-invariant (frame)".into(),
                residual: frame,
                tolerance: 1e-6,
            });
            out.push(InvariantCheck {
                name: "lambda-invariant (state)".into(),
                residual: state,
                tolerance: 1e-6,
            });
        }
        FamilyId::M6HyperbolicExt => {
            let (c1, c2) = (c("c1"), c("c2"));
            let target = -8.0 * c1 * c2 * (c1 + c2);
            let mut r = 0.0f64;
            for &t in times {
                let (a, b) = hyperbolic_lambda_rates(&tc, t)?;
                r = r.max((hyperbolic_invariant(a, b) - target).abs() / (1.0 + target.abs()));
            }
            out.push(InvariantCheck {
                name: "lambda-invariant (frame)".into(),
                residual: r,
                tolerance: 1e-6,
            });
        }
        FamilyId::M6HyperbolicII => {
            let (m0, m1) = (c("m0"), c("m1"));
            let k = m0 * m0 / (m1 * m1);
            let (lo, hi) = tc.valid_horizon();
            let mut r = 0.0f64;
            for &t in times {
                if -t < lo || -t > hi {
                    continue;
                }
                let y = tc.law_state(-t)?;
                let dy = tc.law_rate(-t, &y)?;
                // μ̂(t) = k/μ(−t) and its derivative k μ′(−t)/μ(−t)²
                let mu_hat = k / y[0];
                let dmu_hat = k * dy[0] / (y[0] * y[0]);
                let rate = tc.law_rate(t, &[mu_hat])?[0];
                r = r.max((dmu_hat - rate).abs() / (1.0 + rate.abs()));
            }
            out.push(InvariantCheck {
                name: "symmetry l1 -> m0^2/(m1^2 l1(-t))".into(),
                residual: r,
                tolerance: 1e-8,
            });
        }
        FamilyId::M6ParabolicMain => {
            let k = c("k0") / c("k2");
            let mut r = 0.0f64;
            for &t in times {
                let y = tc.law_state(t)?;
                let dy = tc.law_rate(t, &y)?;
                let mu_hat = k / y[0];
                let dmu_hat = -k * dy[0] / (y[0] * y[0]);
                let rate = tc.law_rate(t, &[mu_hat])?[0];
                r = r.max((dmu_hat - rate).abs() / (1.0 + rate.abs()));
            }
            out.push(InvariantCheck {
                name: "symmetry l2 -> k0/(k2 l2)".into(),
                residual: r,
                tolerance: 1e-8,
            });
        }
        _ => {}
    }
    Ok(out)
}
