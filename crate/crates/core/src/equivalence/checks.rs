//! Named dual-simulation checks, one per mapping.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{
    compare_trajectories, map_ademamix_to_simplified, map_legacy, map_schedule_free,
    problem_oracle, reconstruct_sf_average, run_optimizer, simulate_legacy, test_quadratic,
    LegacyForm, Trajectory, TrajectoryDiff,
};
use crate::error::{Error, Result};
use crate::optimizers::{Algorithm, Optimizer, OptimizerConfig};
use crate::schedules::schedule_free_c_sequence;
use crate::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mapping {
    ScheduleFree,
    Agnes,
    AsgdJain,
    Mass,
    Nesterov,
    AdemamixSimplified,
    MarsRewrite,
}

impl Mapping {
    pub const ALL: [Mapping; 7] = [
        Self::ScheduleFree,
        Self::Agnes,
        Self::AsgdJain,
        Self::Mass,
        Self::Nesterov,
        Self::AdemamixSimplified,
        Self::MarsRewrite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ScheduleFree => "schedule-free",
            Self::Agnes => "agnes",
            Self::AsgdJain => "asgd-jain",
            Self::Mass => "mass",
            Self::Nesterov => "nesterov",
            Self::AdemamixSimplified => "ademamix-simplified",
            Self::MarsRewrite => "mars-rewrite",
        }
    }
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.name()).collect();
                Error::Parse(format!(
                    "unknown mapping `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// A mapping together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    ScheduleFree {
        beta: f64,
        gamma: f64,
        r: f64,
    },
    Legacy(LegacyForm),
    /// AdEMAMix with `beta1 = 0` against Simplified-AdEMAMix, plus the
    /// `alpha = 0` reduction of the latter to Adam.
    AdemamixSimplified {
        beta3: f64,
        alpha: f64,
        lr: f64,
        beta2: f64,
        eps: f64,
    },
    MarsRewrite {
        beta1: f64,
        gamma: f64,
        beta2: f64,
        lr: f64,
    },
}

impl Check {
    pub fn mapping(&self) -> Mapping {
        match self {
            Self::ScheduleFree { .. } => Mapping::ScheduleFree,
            Self::Legacy(LegacyForm::Agnes { .. }) => Mapping::Agnes,
            Self::Legacy(LegacyForm::AsgdJain { .. }) => Mapping::AsgdJain,
            Self::Legacy(LegacyForm::Mass { .. }) => Mapping::Mass,
            Self::Legacy(LegacyForm::NesterovVaswani { .. }) => Mapping::Nesterov,
            Self::AdemamixSimplified { .. } => Mapping::AdemamixSimplified,
            Self::MarsRewrite { .. } => Mapping::MarsRewrite,
        }
    }
}

/// Problem and horizon shared by both sides of a check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSetup {
    pub dim: usize,
    /// Gaussian gradient noise; 0 gives a deterministic quadratic.
    pub noise_sigma: f64,
    pub seed: u64,
    pub horizon: usize,
}

impl Default for CheckSetup {
    fn default() -> Self {
        Self {
            dim: 10,
            noise_sigma: 0.1,
            seed: 0,
            horizon: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub label: String,
    pub diff: TrajectoryDiff,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub mapping: Mapping,
    pub tolerance: f64,
    pub comparisons: Vec<Comparison>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.comparisons
            .iter()
            .all(|c| c.diff.within(self.tolerance))
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        writeln!(
            f,
            "{verdict} {} (tolerance {:e})",
            self.mapping, self.tolerance
        )?;
        for c in &self.comparisons {
            let step = c
                .diff
                .first_divergence_step
                .map_or("none".to_string(), |s| s.to_string());
            writeln!(
                f,
                "  {}: max_abs_gap={:e} max_rel_gap={:e} first_divergence_step={step}",
                c.label, c.diff.max_abs_gap, c.diff.max_rel_gap
            )?;
        }
        Ok(())
    }
}

pub fn run_check(check: &Check, setup: &CheckSetup, tolerance: f64) -> Result<CheckReport> {
    if setup.horizon == 0 {
        return Err(Error::invalid("horizon", "must be > 0"));
    }
    let problem = test_quadratic(setup.dim, setup.seed, setup.noise_sigma)?;
    let w0 = vec![0.0; setup.dim];
    let t = setup.horizon;
    let oracle = || problem_oracle(&problem, setup.seed);
    let mut comparisons = Vec::new();
    let mut push = |label: &str, a: &[Vec<f64>], b: &[Vec<f64>]| -> Result<()> {
        comparisons.push(Comparison {
            label: label.to_string(),
            diff: compare_trajectories(a, b, tolerance)?,
        });
        Ok(())
    };
    match check {
        &Check::ScheduleFree { beta, gamma, r } => {
            let cfg = OptimizerConfig {
                r,
                ..OptimizerConfig::new(Algorithm::ScheduleFreeSgd)
                    .with_lr(gamma)
                    .with_beta1(beta)
            };
            let (y, x) = run_optimizer(cfg, &w0, t, oracle())?;
            let c = schedule_free_c_sequence(r, t + 1);
            let mapped = map_schedule_free(beta, gamma, &c)?.simulate(&w0, oracle())?;
            push("y", &y, &mapped)?;
            if beta < 1.0 {
                let x_rec = reconstruct_sf_average(&mapped, beta, &c)?;
                push("x", &x, &x_rec)?;
            }
        }
        Check::Legacy(form) => {
            let coeffs = map_legacy(form, t)?;
            let original = simulate_legacy(form, &w0, t, oracle())?;
            let mapped = coeffs.simulate(&w0, oracle())?;
            push("query", &original, &mapped)?;
        }
        &Check::AdemamixSimplified {
            beta3,
            alpha,
            lr,
            beta2,
            eps,
        } => {
            let (b1, a1, lr1) = map_ademamix_to_simplified(beta3, alpha, lr)?;
            let full = OptimizerConfig {
                eps,
                bias_correction: false,
                ..OptimizerConfig::new(Algorithm::Ademamix)
                    .with_lr(lr)
                    .with_beta1(0.0)
                    .with_beta2(beta2)
                    .with_beta3(beta3)
                    .with_alpha(alpha)
            };
            let simple = OptimizerConfig {
                eps,
                bias_correction: false,
                ..OptimizerConfig::new(Algorithm::SimplifiedAdemamix)
                    .with_lr(lr1)
                    .with_beta1(b1)
                    .with_beta2(beta2)
                    .with_alpha(a1)
            };
            let (a, _) = run_optimizer(full, &w0, t, oracle())?;
            let (b, _) = run_optimizer(simple, &w0, t, oracle())?;
            push("ademamix-vs-simplified", &a, &b)?;

            let no_alpha = OptimizerConfig {
                eps,
                bias_correction: false,
                ..OptimizerConfig::new(Algorithm::SimplifiedAdemamix)
                    .with_lr(lr1)
                    .with_beta1(b1)
                    .with_beta2(beta2)
            };
            let adam = OptimizerConfig {
                eps,
                bias_correction: false,
                ..OptimizerConfig::new(Algorithm::Adamw)
                    .with_lr(lr1 / (1.0 - b1))
                    .with_beta1(b1)
                    .with_beta2(beta2)
            };
            let (a, _) = run_optimizer(no_alpha, &w0, t, oracle())?;
            let (b, _) = run_optimizer(adam, &w0, t, oracle())?;
            push("simplified-alpha0-vs-adam", &a, &b)?;
        }
        &Check::MarsRewrite {
            beta1,
            gamma,
            beta2,
            lr,
        } => {
            let (actual, predicted) = mars_rewrite(beta1, gamma, beta2, lr, &w0, t, oracle())?;
            push("rewritten-momentum", &actual, &predicted)?;
        }
    }
    Ok(CheckReport {
        mapping: check.mapping(),
        tolerance,
        comparisons,
    })
}

/// Runs MARS-Approx (no bias correction, no clipping) and returns, per step,
/// `m_t - gamma g_t` and its predicted value
/// `beta1 (m_{t-1} - gamma g_{t-1}) + (1 - beta1)(1 - gamma) g_t`.
fn mars_rewrite<F>(
    beta1: f64,
    gamma: f64,
    beta2: f64,
    lr: f64,
    w0: &[f64],
    steps: usize,
    mut oracle: F,
) -> Result<(Trajectory, Trajectory)>
where
    F: FnMut(&[f64], u64) -> Result<Vec<f64>>,
{
    let cfg = OptimizerConfig {
        gamma,
        bias_correction: false,
        clip: false,
        ..OptimizerConfig::new(Algorithm::MarsApprox)
            .with_lr(lr)
            .with_beta1(beta1)
            .with_beta2(beta2)
    };
    let mut opt = Optimizer::new(cfg, ParamVector::new(w0.to_vec())?)?;
    let mut prev = vec![0.0; w0.len()];
    let (mut actual, mut predicted) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    for t in 1..=steps {
        let g = oracle(opt.query_point(), t as u64)?;
        opt.step(&g)?;
        let m = opt.state().buffers.m.as_ref().expect("mars state has m");
        let hat: Vec<f64> = m.iter().zip(&g).map(|(m, g)| m - gamma * g).collect();
        let pred = prev
            .iter()
            .zip(&g)
            .map(|(p, g)| beta1 * p + (1.0 - beta1) * (1.0 - gamma) * g)
            .collect();
        actual.push(hat.clone());
        predicted.push(pred);
        prev = hat;
    }
    Ok((actual, predicted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(horizon: usize) -> CheckSetup {
        CheckSetup {
            horizon,
            ..CheckSetup::default()
        }
    }

    #[test]
    fn mapping_names_round_trip() {
        for m in Mapping::ALL {
            assert_eq!(m.name().parse::<Mapping>().unwrap(), m);
        }
        assert!("lion".parse::<Mapping>().is_err());
    }

    #[test]
    fn schedule_free_check_passes() {
        for beta in [0.0, 0.5, 0.9, 1.0] {
            let check = Check::ScheduleFree {
                beta,
                gamma: 0.5,
                r: 0.0,
            };
            let report = run_check(&check, &setup(500), 1e-9).unwrap();
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn mars_gamma_zero_is_identity() {
        let check = Check::MarsRewrite {
            beta1: 0.9,
            gamma: 0.0,
            beta2: 0.99,
            lr: 0.01,
        };
        let report = run_check(&check, &setup(200), 0.0).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn ademamix_check_passes() {
        let check = Check::AdemamixSimplified {
            beta3: 0.99,
            alpha: 8.0,
            lr: 0.01,
            beta2: 0.999,
            eps: 1e-8,
        };
        let report = run_check(&check, &setup(500), 1e-10).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn singular_mass_propagates() {
        let check = Check::Legacy(LegacyForm::Mass {
            eta1: 0.4,
            eta2: 0.2,
            gamma: 0.5,
        });
        assert!(matches!(
            run_check(&check, &setup(10), 1e-9),
            Err(Error::Singular { .. })
        ));
    }
}
