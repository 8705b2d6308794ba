//! Four accelerated-SGD methods in their original two-sequence forms.
//!
//! Each is simulated as published and mapped onto the general form. The
//! query point (where gradients are taken) is what both sides must agree on:
//! `x'_n` for AGNES, `y_j` for ASGD, `u_t` for MaSS and `zeta_k` for the
//! Nesterov variant. All auxiliary sequences start at the initial point
//! (AGNES starts its velocity at zero).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, AccelCoefficients, Trajectory};
use crate::error::{Error, Result};

/// Denominators below this (relative to the operands) count as singular.
const SINGULAR_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LegacyKind {
    Agnes,
    AsgdJain,
    Mass,
    NesterovVaswani,
}

impl LegacyKind {
    pub const ALL: [LegacyKind; 4] = [
        Self::Agnes,
        Self::AsgdJain,
        Self::Mass,
        Self::NesterovVaswani,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Agnes => "agnes",
            Self::AsgdJain => "asgd-jain",
            Self::Mass => "mass",
            Self::NesterovVaswani => "nesterov-vaswani",
        }
    }
}

impl fmt::Display for LegacyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LegacyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown legacy method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LegacyForm {
    /// `x'_n = x_n + alpha v_n;  x_{n+1} = x'_n - eta g_n;  v_{n+1} = rho_n (v_n - g_n)`.
    Agnes { alpha: f64, eta: f64, rho: Vec<f64> },
    /// `y = alpha x + (1-alpha) v;  x' = y - delta g;  v' = beta y + (1-beta) v - gamma g`.
    AsgdJain {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
    },
    /// `w' = u - eta1 g;  u' = (1+gamma) w' - gamma w + eta2 g`.
    Mass { eta1: f64, eta2: f64, gamma: f64 },
    /// `zeta_k = alpha_k v_k + (1-alpha_k) w_k;  w_{k+1} = zeta_k - eta g_k;`
    /// `v_{k+1} = beta_k v_k + (1-beta_k) zeta_k - gamma_k eta g_k`.
    /// `alpha` needs one more entry than the horizon.
    NesterovVaswani {
        eta: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        gamma: Vec<f64>,
    },
}

fn need_len(name: &str, seq: &[f64], len: usize) -> Result<()> {
    if seq.len() < len {
        return Err(Error::invalid(
            name,
            format!("sequence has {} entries, need {len}", seq.len()),
        ));
    }
    if let Some(v) = seq[..len].iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(name, format!("non-finite entry {v}")));
    }
    Ok(())
}

fn need_finite(params: &[(&str, f64)]) -> Result<()> {
    match params.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, v)) => Err(Error::invalid(*name, format!("must be finite (got {v})"))),
        None => Ok(()),
    }
}

fn singular(a: f64, b: f64) -> bool {
    (a - b).abs() <= SINGULAR_REL * a.abs().max(b.abs()).max(1.0)
}

impl LegacyForm {
    pub fn kind(&self) -> LegacyKind {
        match self {
            Self::Agnes { .. } => LegacyKind::Agnes,
            Self::AsgdJain { .. } => LegacyKind::AsgdJain,
            Self::Mass { .. } => LegacyKind::Mass,
            Self::NesterovVaswani { .. } => LegacyKind::NesterovVaswani,
        }
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            Self::Agnes { alpha, eta, rho } => {
                need_finite(&[("alpha", *alpha), ("eta", *eta)])?;
                need_len("rho", rho, horizon)
            }
            Self::AsgdJain {
                alpha,
                beta,
                gamma,
                delta,
            } => need_finite(&[
                ("alpha", *alpha),
                ("beta", *beta),
                ("gamma", *gamma),
                ("delta", *delta),
            ]),
            Self::Mass { eta1, eta2, gamma } => {
                need_finite(&[("eta1", *eta1), ("eta2", *eta2), ("gamma", *gamma)])
            }
            Self::NesterovVaswani {
                eta,
                alpha,
                beta,
                gamma,
            } => {
                need_finite(&[("eta", *eta)])?;
                need_len("alpha", alpha, horizon + 1)?;
                need_len("beta", beta, horizon)?;
                need_len("gamma", gamma, horizon)
            }
        }
    }

    /// Random well-conditioned parameters for `kind`, kept at least `1e-3`
    /// away from every singular denominator. Stable on quadratics with
    /// curvature at most 1.
    pub fn draw<R: Rng>(kind: LegacyKind, rng: &mut R, horizon: usize) -> Self {
        let margin = 1e-3;
        match kind {
            LegacyKind::Agnes => Self::Agnes {
                alpha: rng.random_range(0.01..0.5),
                eta: rng.random_range(0.05..0.5),
                rho: (0..horizon).map(|_| rng.random_range(0.5..0.95)).collect(),
            },
            LegacyKind::AsgdJain => {
                let delta = rng.random_range(0.05..0.5);
                Self::AsgdJain {
                    alpha: rng.random_range(0.1..0.9),
                    beta: rng.random_range(0.01..0.5),
                    gamma: delta + margin + rng.random_range(0.0..1.0),
                    delta,
                }
            }
            LegacyKind::Mass => {
                let eta1 = rng.random_range(0.05..0.5);
                let gamma = rng.random_range(0.1..0.9);
                Self::Mass {
                    eta1,
                    eta2: rng.random_range(0.0..1.0) * (eta1 * gamma - margin),
                    gamma,
                }
            }
            LegacyKind::NesterovVaswani => {
                // Non-decreasing gamma_k keeps the mapped momentum in [0, 1].
                let mut g = 1.0 + margin + rng.random_range(0.0..1.0);
                let gamma = (0..horizon)
                    .map(|_| {
                        let v = g;
                        g += rng.random_range(0.0..1e-3);
                        v
                    })
                    .collect();
                Self::NesterovVaswani {
                    eta: rng.random_range(0.05..0.5),
                    alpha: (0..=horizon).map(|_| rng.random_range(0.05..0.5)).collect(),
                    beta: (0..horizon).map(|_| rng.random_range(0.5..0.95)).collect(),
                    gamma,
                }
            }
        }
    }
}

/// General-form coefficients reproducing the query-point trajectory of
/// `form` for `horizon` steps.
///
/// - AGNES: `beta_n = rho_{n-1}`, `eta_n = alpha rho_n`, `alpha_n = eta`, with
///   momentum carrier `-v_{n+1} / rho_n`.
/// - ASGD: carrier `(x_j - v_j) / (gamma - delta)`; `beta = (1-beta) alpha`,
///   `eta = (1-alpha)(gamma - delta)`, `alpha = delta`.
/// - MaSS: carrier `(w_{t+1} - u_{t+1}) / (eta1 gamma - eta2)`; `beta = gamma`,
///   `eta = eta1 gamma - eta2`, `alpha = eta1`.
/// - Nesterov: carrier `-(v_{k+1} - w_{k+1}) / (eta (gamma_k - 1))`;
///   `beta_k = beta_k (1-alpha_k)(gamma_{k-1} - 1)/(gamma_k - 1)`,
///   `eta_k = alpha_{k+1} eta (gamma_k - 1)`, `alpha = eta`.
pub fn map_legacy(form: &LegacyForm, horizon: usize) -> Result<AccelCoefficients> {
    form.validate(horizon)?;
    let n = horizon;
    match form {
        LegacyForm::Agnes { alpha, eta, rho } => AccelCoefficients::new(
            (0..n)
                .map(|i| if i == 0 { rho[0] } else { rho[i - 1] })
                .collect(),
            rho[..n].iter().map(|r| alpha * r).collect(),
            vec![*eta; n],
        ),
        LegacyForm::AsgdJain {
            alpha,
            beta,
            gamma,
            delta,
        } => {
            if singular(*gamma, *delta) {
                return Err(Error::Singular {
                    mapping: "asgd-jain",
                    combination: format!("gamma - delta = 0 (gamma = {gamma}, delta = {delta})"),
                });
            }
            if gamma < delta {
                return Err(Error::invalid(
                    "gamma",
                    "must exceed delta for a non-negative general-form step",
                ));
            }
            AccelCoefficients::new(
                vec![(1.0 - beta) * alpha; n],
                vec![(1.0 - alpha) * (gamma - delta); n],
                vec![*delta; n],
            )
        }
        LegacyForm::Mass { eta1, eta2, gamma } => {
            let denom = eta1 * gamma;
            if singular(denom, *eta2) {
                return Err(Error::Singular {
                    mapping: "mass",
                    combination: format!(
                        "eta1 * gamma - eta2 = 0 (eta1 = {eta1}, eta2 = {eta2}, gamma = {gamma})"
                    ),
                });
            }
            if denom < *eta2 {
                return Err(Error::invalid(
                    "eta2",
                    "must be below eta1 * gamma for a non-negative general-form step",
                ));
            }
            AccelCoefficients::new(vec![*gamma; n], vec![denom - eta2; n], vec![*eta1; n])
        }
        LegacyForm::NesterovVaswani {
            eta,
            alpha,
            beta,
            gamma,
        } => {
            if let Some(k) = gamma[..n].iter().position(|g| singular(*g, 1.0)) {
                return Err(Error::Singular {
                    mapping: "nesterov-vaswani",
                    combination: format!("gamma_k - 1 = 0 at k = {k}"),
                });
            }
            if let Some(k) = gamma[..n].iter().position(|g| *g < 1.0) {
                return Err(Error::invalid(
                    "gamma",
                    format!("gamma_{k} must exceed 1 for a non-negative general-form step"),
                ));
            }
            let b = (0..n)
                .map(|k| {
                    let ratio = if k == 0 {
                        1.0
                    } else {
                        (gamma[k - 1] - 1.0) / (gamma[k] - 1.0)
                    };
                    beta[k] * (1.0 - alpha[k]) * ratio
                })
                .collect();
            AccelCoefficients::new(
                b,
                (0..n)
                    .map(|k| alpha[k + 1] * eta * (gamma[k] - 1.0))
                    .collect(),
                vec![*eta; n],
            )
        }
    }
}

/// Simulates `form` in its original variables and returns the query points.
pub fn simulate_legacy<F>(
    form: &LegacyForm,
    w0: &[f64],
    horizon: usize,
    mut oracle: F,
) -> Result<Trajectory>
where
    F: FnMut(&[f64], u64) -> Result<Vec<f64>>,
{
    form.validate(horizon)?;
    let d = w0.len();
    let mut out = Vec::with_capacity(horizon + 1);
    let mut grad = |p: &[f64], step: usize| -> Result<Vec<f64>> {
        let g = oracle(p, step as u64 + 1)?;
        check_len(&g, d)?;
        Ok(g)
    };
    match form {
        LegacyForm::Agnes { alpha, eta, rho } => {
            let mut x = w0.to_vec();
            let mut v = vec![0.0; d];
            for n in 0..=horizon {
                let xq: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x + alpha * v).collect();
                if n == horizon {
                    out.push(xq);
                    break;
                }
                let g = grad(&xq, n)?;
                for i in 0..d {
                    x[i] = xq[i] - eta * g[i];
                    v[i] = rho[n] * (v[i] - g[i]);
                }
                out.push(xq);
            }
        }
        LegacyForm::AsgdJain {
            alpha,
            beta,
            gamma,
            delta,
        } => {
            let mut x = w0.to_vec();
            let mut v = w0.to_vec();
            for j in 0..=horizon {
                let y: Vec<f64> = x
                    .iter()
                    .zip(&v)
                    .map(|(x, v)| alpha * x + (1.0 - alpha) * v)
                    .collect();
                if j == horizon {
                    out.push(y);
                    break;
                }
                let g = grad(&y, j)?;
                for i in 0..d {
                    x[i] = y[i] - delta * g[i];
                    v[i] = beta * y[i] + (1.0 - beta) * v[i] - gamma * g[i];
                }
                out.push(y);
            }
        }
        LegacyForm::Mass { eta1, eta2, gamma } => {
            let mut w = w0.to_vec();
            let mut u = w0.to_vec();
            out.push(u.clone());
            for t in 0..horizon {
                let g = grad(&u, t)?;
                for i in 0..d {
                    let w_next = u[i] - eta1 * g[i];
                    u[i] = (1.0 + gamma) * w_next - gamma * w[i] + eta2 * g[i];
                    w[i] = w_next;
                }
                out.push(u.clone());
            }
        }
        LegacyForm::NesterovVaswani {
            eta,
            alpha,
            beta,
            gamma,
        } => {
            let mut w = w0.to_vec();
            let mut v = w0.to_vec();
            for k in 0..=horizon {
                let a = alpha[k];
                let zeta: Vec<f64> = v
                    .iter()
                    .zip(&w)
                    .map(|(v, w)| a * v + (1.0 - a) * w)
                    .collect();
                if k == horizon {
                    out.push(zeta);
                    break;
                }
                let g = grad(&zeta, k)?;
                for i in 0..d {
                    w[i] = zeta[i] - eta * g[i];
                    v[i] = beta[k] * v[i] + (1.0 - beta[k]) * zeta[i] - gamma[k] * eta * g[i];
                }
                out.push(zeta);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::equivalence::{compare_trajectories, problem_oracle, test_quadratic};

    fn roundtrip(form: &LegacyForm, dim: usize, steps: usize) -> f64 {
        let p = test_quadratic(dim, 11, 0.0).unwrap();
        let w0 = vec![0.0; dim];
        let a = simulate_legacy(form, &w0, steps, problem_oracle(&p, 0)).unwrap();
        let b = map_legacy(form, steps)
            .unwrap()
            .simulate(&w0, problem_oracle(&p, 0))
            .unwrap();
        compare_trajectories(&a, &b, 1e-10).unwrap().max_rel_gap
    }

    #[test]
    fn agnes_constant_rho_mapping() {
        let form = LegacyForm::Agnes {
            alpha: 0.3,
            eta: 0.2,
            rho: vec![0.8; 100],
        };
        let c = map_legacy(&form, 100).unwrap();
        assert!(c.beta().iter().all(|&b| b == 0.8));
        assert!(c.eta().iter().all(|&e| (e - 0.24).abs() < 1e-15));
        assert!(c.alpha().iter().all(|&a| a == 0.2));
        assert!(roundtrip(&form, 2, 100) <= 1e-10);
    }

    #[test]
    fn asgd_fixed_scalars_match() {
        let form = LegacyForm::AsgdJain {
            alpha: 0.4,
            beta: 0.1,
            gamma: 0.9,
            delta: 0.3,
        };
        assert!(roundtrip(&form, 5, 500) <= 1e-10);
    }

    #[test]
    fn singular_combinations_are_named() {
        let err = map_legacy(
            &LegacyForm::Mass {
                eta1: 0.2,
                eta2: 0.1,
                gamma: 0.5,
            },
            10,
        )
        .unwrap_err();
        assert!(err.to_string().contains("eta1 * gamma - eta2"), "{err}");
        let err = map_legacy(
            &LegacyForm::AsgdJain {
                alpha: 0.5,
                beta: 0.1,
                gamma: 0.3,
                delta: 0.3,
            },
            10,
        )
        .unwrap_err();
        assert!(err.to_string().contains("gamma - delta"), "{err}");
        let form = LegacyForm::NesterovVaswani {
            eta: 0.1,
            alpha: vec![0.1; 3],
            beta: vec![0.5; 2],
            gamma: vec![1.0; 2],
        };
        assert!(matches!(map_legacy(&form, 2), Err(Error::Singular { .. })));
    }

    #[test]
    fn short_sequences_are_rejected() {
        let form = LegacyForm::NesterovVaswani {
            eta: 0.1,
            alpha: vec![0.1; 3],
            beta: vec![0.5; 3],
            gamma: vec![2.0; 3],
        };
        assert!(map_legacy(&form, 3).is_err());
        assert!(map_legacy(&form, 2).is_ok());
    }

    #[test]
    fn random_draws_match_for_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in LegacyKind::ALL {
            for _ in 0..5 {
                let form = LegacyForm::draw(kind, &mut rng, 200);
                let gap = roundtrip(&form, 4, 200);
                assert!(gap <= 1e-9, "{kind}: {gap}");
            }
        }
    }
}
