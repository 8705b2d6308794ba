//! Coefficient mappings into the general accelerated form
//! `m_t = beta_t m_{t-1} + g_t;  w_{t+1} = w_t - eta_t m_t - alpha_t g_t`
//! and a trajectory comparator that certifies them numerically.
//!
//! Trajectories are sequences of query points: index 0 is the starting point
//! and index `t` the point after `t` steps. Gradient oracles receive the
//! 1-based step index so that two formulations replay the same noise.

mod checks;
mod legacy;

pub use checks::{run_check, Check, CheckReport, CheckSetup, Mapping};
pub use legacy::{map_legacy, simulate_legacy, LegacyForm, LegacyKind};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizers::{accel_sgd_update, Optimizer, OptimizerConfig};
use crate::problems::{NoiseModel, Problem};
use crate::rng::{NoiseKey, Stream};
use crate::vector::{max_abs, ParamVector};

pub type Trajectory = Vec<Vec<f64>>;

/// Per-step coefficients; index `i` drives step `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelCoefficients {
    beta: Vec<f64>,
    eta: Vec<f64>,
    alpha: Vec<f64>,
}

impl AccelCoefficients {
    pub fn new(beta: Vec<f64>, eta: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        if eta.len() != beta.len() || alpha.len() != beta.len() {
            return Err(Error::invalid(
                "coefficients",
                format!(
                    "sequence lengths differ ({}, {}, {})",
                    beta.len(),
                    eta.len(),
                    alpha.len()
                ),
            ));
        }
        let checks: [(&str, &[f64], bool); 3] = [
            ("beta_a", &beta, true),
            ("eta_a", &eta, false),
            ("alpha_a", &alpha, false),
        ];
        for (name, seq, unit) in checks {
            for (i, &v) in seq.iter().enumerate() {
                let ok = v.is_finite() && v >= 0.0 && (!unit || v <= 1.0);
                if !ok {
                    let range = if unit { "[0, 1]" } else { ">= 0" };
                    return Err(Error::invalid(
                        name,
                        format!("step {} value {v} outside {range}", i + 1),
                    ));
                }
            }
        }
        Ok(Self { beta, eta, alpha })
    }

    pub fn horizon(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Runs the general form from `w0` with `m_0 = 0`.
    pub fn simulate<F>(&self, w0: &[f64], mut oracle: F) -> Result<Trajectory>
    where
        F: FnMut(&[f64], u64) -> Result<Vec<f64>>,
    {
        let mut w = w0.to_vec();
        let mut m = vec![0.0; w.len()];
        let mut out = Vec::with_capacity(self.horizon() + 1);
        out.push(w.clone());
        for i in 0..self.horizon() {
            let g = oracle(&w, i as u64 + 1)?;
            check_len(&g, w.len())?;
            accel_sgd_update(&mut w, &mut m, &g, self.beta[i], self.eta[i], self.alpha[i]);
            out.push(w.clone());
        }
        Ok(out)
    }
}

fn check_len(g: &[f64], d: usize) -> Result<()> {
    if g.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: g.len(),
        });
    }
    Ok(())
}

/// Schedule-Free SGD with interpolation `beta`, step `gamma` and averaging
/// weights `c = [c_1, ..., c_{T+1}]` maps to `beta_a,t = 1 - c_t`,
/// `eta_a,t = gamma beta c_{t+1}`, `alpha_a = gamma (1 - beta)` for `T` steps.
pub fn map_schedule_free(beta: f64, gamma: f64, c: &[f64]) -> Result<AccelCoefficients> {
    if !(beta.is_finite() && (0.0..=1.0).contains(&beta)) {
        return Err(Error::invalid(
            "beta",
            format!("must lie in [0, 1] (got {beta})"),
        ));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(
            "gamma",
            format!("must be > 0 (got {gamma})"),
        ));
    }
    if c.len() < 2 {
        return Err(Error::invalid("c", "need at least c_1 and c_2"));
    }
    if let Some(bad) = c
        .iter()
        .find(|c| !(c.is_finite() && **c > 0.0 && **c <= 1.0))
    {
        return Err(Error::invalid(
            "c",
            format!("values must lie in (0, 1] (got {bad})"),
        ));
    }
    let t = c.len() - 1;
    AccelCoefficients::new(
        c[..t].iter().map(|c| 1.0 - c).collect(),
        c[1..].iter().map(|c| gamma * beta * c).collect(),
        vec![gamma * (1.0 - beta); t],
    )
}

/// Recovers the Schedule-Free average from the interpolated sequence:
/// `x_1 = y_1`, `x_{t+1} = [(1-c)(1-beta) x_t + c y_{t+1}] / [(1-c)(1-beta) + c]`
/// with `c = c_{t+1}`. `c` must cover `c_1..c_{len(y)}`.
pub fn reconstruct_sf_average(y: &[Vec<f64>], beta: f64, c: &[f64]) -> Result<Trajectory> {
    let Some(first) = y.first() else {
        return Ok(Vec::new());
    };
    if c.len() < y.len() {
        return Err(Error::invalid(
            "c",
            format!("need {} weights, got {}", y.len(), c.len()),
        ));
    }
    let mut out = Vec::with_capacity(y.len());
    out.push(first.clone());
    for (t, yt) in y.iter().enumerate().skip(1) {
        check_len(yt, first.len())?;
        let ct = c[t];
        let keep = (1.0 - ct) * (1.0 - beta);
        let denom = keep + ct;
        if !(denom > 0.0) {
            return Err(Error::Singular {
                mapping: "schedule-free average",
                combination: format!("(1 - c)(1 - beta) + c = {denom} at step {}", t + 1),
            });
        }
        let prev = &out[t - 1];
        let next = prev
            .iter()
            .zip(yt)
            .map(|(x, y)| (keep * x + ct * y) / denom)
            .collect();
        out.push(next);
    }
    Ok(out)
}

/// `(beta3, alpha, eta)` of AdEMAMix with `beta1 = 0` to `(beta1', alpha', eta')`
/// of Simplified-AdEMAMix.
pub fn map_ademamix_to_simplified(beta3: f64, alpha: f64, eta: f64) -> Result<(f64, f64, f64)> {
    if !(beta3.is_finite() && beta3 > 0.0 && beta3 < 1.0) {
        return Err(Error::invalid(
            "beta3",
            format!("must lie in (0, 1) (got {beta3})"),
        ));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(
            "alpha",
            format!("must be > 0 (got {alpha})"),
        ));
    }
    let mass = alpha * (1.0 - beta3);
    Ok((beta3, 1.0 / mass, eta * mass))
}

/// Inverse of [`map_ademamix_to_simplified`].
pub fn map_simplified_to_ademamix(beta1: f64, alpha: f64, eta: f64) -> Result<(f64, f64, f64)> {
    if !(beta1.is_finite() && beta1 > 0.0 && beta1 < 1.0) {
        return Err(Error::invalid(
            "beta1",
            format!("must lie in (0, 1) (got {beta1})"),
        ));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(
            "alpha",
            format!("must be > 0 (got {alpha})"),
        ));
    }
    Ok((beta1, 1.0 / (alpha * (1.0 - beta1)), eta * alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryDiff {
    pub max_abs_gap: f64,
    pub max_rel_gap: f64,
    /// First step index whose relative gap exceeds the tolerance.
    pub first_divergence_step: Option<usize>,
}

impl TrajectoryDiff {
    pub fn within(&self, tolerance: f64) -> bool {
        self.max_rel_gap <= tolerance
    }
}

/// Per-step gap `|a_t - b_t|_inf`, relative to `max(|a_t|_inf, |b_t|_inf)`.
pub fn compare_trajectories(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    tolerance: f64,
) -> Result<TrajectoryDiff> {
    if a.len() != b.len() {
        return Err(Error::invalid(
            "trajectories",
            format!("horizons differ ({} vs {})", a.len(), b.len()),
        ));
    }
    let mut diff = TrajectoryDiff {
        max_abs_gap: 0.0,
        max_rel_gap: 0.0,
        first_divergence_step: None,
    };
    for (t, (x, y)) in a.iter().zip(b).enumerate() {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        let gap = x
            .iter()
            .zip(y)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let scale = max_abs(x).max(max_abs(y));
        let rel = if gap == 0.0 {
            0.0
        } else {
            gap / scale.max(f64::MIN_POSITIVE)
        };
        // NaN gaps count as divergence.
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        diff.max_abs_gap = diff
            .max_abs_gap
            .max(if gap.is_nan() { f64::INFINITY } else { gap });
        diff.max_rel_gap = diff.max_rel_gap.max(rel);
        if rel > tolerance && diff.first_divergence_step.is_none() {
            diff.first_divergence_step = Some(t);
        }
    }
    Ok(diff)
}

/// Gradient oracle over a problem, keyed by `(seed, step)`.
pub fn problem_oracle(
    problem: &Problem,
    seed: u64,
) -> impl FnMut(&[f64], u64) -> Result<Vec<f64>> + '_ {
    move |w, step| {
        let w = ParamVector::from_vec_unchecked(w.to_vec());
        Ok(problem
            .sample_gradient(&w, NoiseKey::gradient(seed, step))?
            .gradient
            .into_vec())
    }
}

/// Runs an optimizer for `steps` steps; returns `(query points, eval points)`.
pub fn run_optimizer<F>(
    config: OptimizerConfig,
    w0: &[f64],
    steps: usize,
    mut oracle: F,
) -> Result<(Trajectory, Trajectory)>
where
    F: FnMut(&[f64], u64) -> Result<Vec<f64>>,
{
    let mut opt = Optimizer::new(config, ParamVector::new(w0.to_vec())?)?;
    let mut query = vec![opt.query_point().to_vec()];
    let mut eval = vec![opt.eval_point().to_vec()];
    for t in 1..=steps {
        let g = oracle(opt.query_point(), t as u64)?;
        opt.step(&g)?;
        query.push(opt.query_point().to_vec());
        eval.push(opt.eval_point().to_vec());
    }
    Ok((query, eval))
}

/// Diagonal quadratic with eigenvalues log-spaced from 1 down to 1e-2 and a
/// random minimiser, so trajectories stay away from zero.
pub fn test_quadratic(dim: usize, seed: u64, noise_sigma: f64) -> Result<Problem> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be > 0"));
    }
    let hessian = (0..dim)
        .map(|i| {
            if dim == 1 {
                1.0
            } else {
                10f64.powf(-2.0 * i as f64 / (dim - 1) as f64)
            }
        })
        .collect();
    let mut rng = NoiseKey::new(seed, 0, Stream::Data).rng();
    let center = (0..dim)
        .map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let noise = if noise_sigma > 0.0 {
        NoiseModel::Gaussian { sigma: noise_sigma }
    } else {
        NoiseModel::None
    };
    Problem::quadratic(hessian, center, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Algorithm;
    use crate::schedules::schedule_free_c_sequence;

    #[test]
    fn schedule_free_mapping_examples() {
        let c = schedule_free_c_sequence(0.0, 4);
        let zero = map_schedule_free(0.0, 0.3, &c).unwrap();
        assert!(zero.eta().iter().all(|&e| e == 0.0));
        assert!(zero.alpha().iter().all(|&a| a == 0.3));
        let one = map_schedule_free(1.0, 0.3, &c).unwrap();
        assert!(one.alpha().iter().all(|&a| a == 0.0));
        assert_eq!(one.beta(), &[0.0, 0.5, 1.0 - 1.0 / 3.0]);

        let m = map_schedule_free(0.9, 1.0, &[0.5, 0.01]).unwrap();
        assert_eq!(m.beta(), &[0.5]);
        assert!((m.eta()[0] - 0.009).abs() < 1e-15);
        assert!((m.alpha()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn schedule_free_mapping_rejects_bad_input() {
        assert!(map_schedule_free(1.5, 0.1, &[1.0, 0.5]).is_err());
        assert!(map_schedule_free(0.5, 0.0, &[1.0, 0.5]).is_err());
        assert!(map_schedule_free(0.5, 0.1, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn constant_c_reconstruction_is_an_ema_at_beta_zero() {
        let y: Trajectory = (0..5).map(|t| vec![t as f64]).collect();
        let x = reconstruct_sf_average(&y, 0.0, &[0.25; 5]).unwrap();
        let mut ema = 0.0;
        for t in 1..5 {
            ema = 0.75 * ema + 0.25 * t as f64;
            assert!((x[t][0] - ema).abs() < 1e-15);
        }
    }

    #[test]
    fn reconstruction_matches_schedule_free_x() {
        let p = test_quadratic(10, 3, 0.0).unwrap();
        let cfg = OptimizerConfig::new(Algorithm::ScheduleFreeSgd)
            .with_lr(0.5)
            .with_beta1(0.9);
        let w0 = vec![0.0; 10];
        let (y, x) = run_optimizer(cfg, &w0, 1000, problem_oracle(&p, 0)).unwrap();
        let c = schedule_free_c_sequence(0.0, y.len());
        let rec = reconstruct_sf_average(&y, 0.9, &c).unwrap();
        assert!(compare_trajectories(&x, &rec, 1e-10).unwrap().within(1e-10));
    }

    #[test]
    fn ademamix_mapping_example_and_inverse() {
        let (b, a, e) = map_ademamix_to_simplified(0.999, 8.0, 1e-3).unwrap();
        assert_eq!(b, 0.999);
        assert!((a - 125.0).abs() < 1e-9);
        assert!((e - 8e-6).abs() < 1e-18);
        let (b3, alpha, eta) = map_simplified_to_ademamix(b, a, e).unwrap();
        assert_eq!(b3, 0.999);
        assert!((alpha - 8.0).abs() <= 1e-15 * 8.0 * 10.0);
        assert!((eta - 1e-3).abs() <= 1e-15);
        assert!(map_ademamix_to_simplified(0.9, 0.0, 1.0).is_err());
        assert!(map_ademamix_to_simplified(0.0, 1.0, 1.0).is_err());
        assert!(map_ademamix_to_simplified(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn compare_self_and_mismatch() {
        let a: Trajectory = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let d = compare_trajectories(&a, &a, 0.0).unwrap();
        assert_eq!(
            (d.max_abs_gap, d.max_rel_gap, d.first_divergence_step),
            (0.0, 0.0, None)
        );
        let mut b = a.clone();
        b[1][0] = 3.5;
        let d = compare_trajectories(&a, &b, 1e-3).unwrap();
        assert_eq!(d.first_divergence_step, Some(1));
        assert!((d.max_rel_gap - 0.125).abs() < 1e-15);
        assert!(compare_trajectories(&a, &a[..1], 1e-3).is_err());
        assert!(compare_trajectories(&a, &[vec![1.0], vec![2.0]], 1e-3).is_err());
    }

    #[test]
    fn coefficient_validation() {
        assert!(AccelCoefficients::new(vec![1.1], vec![0.1], vec![0.1]).is_err());
        assert!(AccelCoefficients::new(vec![0.5], vec![-0.1], vec![0.1]).is_err());
        assert!(AccelCoefficients::new(vec![0.5], vec![0.1], vec![]).is_err());
        assert!(AccelCoefficients::new(vec![0.5], vec![0.1], vec![f64::NAN]).is_err());
    }
}
