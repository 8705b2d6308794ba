//! Every optimizer step rule behind one stepping interface.
//!
//! An [`Optimizer`] owns an [`OptimizerState`]. The harness asks it for the
//! point at which the next gradient must be evaluated ([`Optimizer::query_point`]),
//! feeds that gradient to [`Optimizer::step`], and reads metrics at
//! [`Optimizer::eval_point`]. For Schedule-Free methods those two points are
//! different sequences (`y` and `x`); for weight-averaged Adam the evaluation
//! point is the running average.

mod adam;
mod ademamix;
mod lion;
mod mars;
mod schedule_free;
mod sgd;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::{step_accel_adam_avg, step_adamw, step_laprop};
pub use ademamix::{step_ademamix, step_simplified_ademamix};
pub use lion::step_lion;
pub use mars::step_mars_approx;
pub use schedule_free::{step_schedule_free_adamw, step_schedule_free_sgd};
pub use sgd::{accel_sgd_update, step_accel_sgd, step_sgd_momentum};

use crate::error::{Error, Result};
use crate::schedules::{
    AlphaSchedule, AveragingSchedule, LearningRateSchedule, MomentumSchedule, ScheduleFreeWeights,
};
use crate::vector::{distance, first_non_finite, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    SgdMomentum,
    AccelSgd,
    ScheduleFreeSgd,
    Adamw,
    Laprop,
    ScheduleFreeAdamw,
    Lion,
    MarsApprox,
    Ademamix,
    SimplifiedAdemamix,
    AccelAdamAvg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 11] = [
        Algorithm::SgdMomentum,
        Algorithm::AccelSgd,
        Algorithm::ScheduleFreeSgd,
        Algorithm::Adamw,
        Algorithm::Laprop,
        Algorithm::ScheduleFreeAdamw,
        Algorithm::Lion,
        Algorithm::MarsApprox,
        Algorithm::Ademamix,
        Algorithm::SimplifiedAdemamix,
        Algorithm::AccelAdamAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SgdMomentum => "sgd-momentum",
            Algorithm::AccelSgd => "accel-sgd",
            Algorithm::ScheduleFreeSgd => "schedule-free-sgd",
            Algorithm::Adamw => "adamw",
            Algorithm::Laprop => "laprop",
            Algorithm::ScheduleFreeAdamw => "schedule-free-adamw",
            Algorithm::Lion => "lion",
            Algorithm::MarsApprox => "mars-approx",
            Algorithm::Ademamix => "ademamix",
            Algorithm::SimplifiedAdemamix => "simplified-ademamix",
            Algorithm::AccelAdamAvg => "accel-adam-avg",
        }
    }

    pub fn is_schedule_free(self) -> bool {
        matches!(
            self,
            Algorithm::ScheduleFreeSgd | Algorithm::ScheduleFreeAdamw
        )
    }

    fn requires_beta3(self) -> bool {
        matches!(self, Algorithm::Ademamix | Algorithm::AccelAdamAvg)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                Error::invalid(
                    "algorithm",
                    format!("unknown `{s}`; expected one of {}", known.join(", ")),
                )
            })
    }
}

/// Hyperparameters for every algorithm. Fields an algorithm does not use are
/// ignored but still validated.
///
/// Per-algorithm roles:
/// - `sgd-momentum`: `lr` is eta, `beta1` the momentum (`m <- beta m + g`).
/// - `accel-sgd`: `beta1`, `lr`, `alpha` are the general-form coefficients.
/// - Schedule-Free: `lr` is the step `gamma_t`, `beta1` the interpolation
///   weight in `[0, 1]`, `r` the polynomial averaging exponent.
/// - MARS-Approx: `gamma` scales the gradient-difference correction.
/// - AdEMAMix: `beta3` (required) and `alpha` drive the slow EMA.
/// - Simplified-AdEMAMix: `beta1` is the theory-style momentum, `alpha` the
///   current-gradient weight.
/// - `accel-adam-avg`: `beta3` (required) mixes momentum and gradient,
///   `averaging` produces the averaging coefficient.
///
/// `bias_correction` divides by `1 - beta^t`. It defaults on for Adam, LAProp,
/// AdEMAMix, MARS and Schedule-Free AdamW, where it covers both moments.
/// Simplified-AdEMAMix and `accel-adam-avg` default it off and never correct
/// their momentum; turning it on there only affects the second moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub lr: LearningRateSchedule,
    pub beta1: MomentumSchedule,
    pub beta2: f64,
    pub beta3: Option<MomentumSchedule>,
    pub alpha: AlphaSchedule,
    pub gamma: f64,
    pub averaging: AveragingSchedule,
    pub r: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub bias_correction: bool,
    pub clip: bool,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            lr: LearningRateSchedule::constant(1e-3),
            beta1: MomentumSchedule::constant(0.9),
            beta2: 0.999,
            beta3: None,
            alpha: AlphaSchedule::constant(0.0),
            gamma: 0.025,
            averaging: AveragingSchedule::Tailed { delta: 0.1 },
            r: 0.0,
            eps: 1e-8,
            weight_decay: 0.0,
            bias_correction: !matches!(
                algorithm,
                Algorithm::SimplifiedAdemamix | Algorithm::AccelAdamAvg
            ),
            clip: false,
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = LearningRateSchedule::constant(lr);
        self
    }

    pub fn with_beta1(mut self, beta1: f64) -> Self {
        self.beta1 = MomentumSchedule::constant(beta1);
        self
    }

    pub fn with_beta2(mut self, beta2: f64) -> Self {
        self.beta2 = beta2;
        self
    }

    pub fn with_beta3(mut self, beta3: f64) -> Self {
        self.beta3 = Some(MomentumSchedule::constant(beta3));
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = AlphaSchedule::constant(alpha);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_bias_correction(mut self, on: bool) -> Self {
        self.bias_correction = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.lr.validate()?;
        match (self.algorithm.is_schedule_free(), self.beta1.as_constant()) {
            (true, Some(b)) if b.is_finite() && (0.0..=1.0).contains(&b) => {}
            (true, Some(b)) => {
                return Err(Error::invalid(
                    "beta1",
                    format!("interpolation weight must lie in [0, 1] (got {b})"),
                ))
            }
            _ => self.beta1.validate("beta1")?,
        }
        if !(self.beta2.is_finite() && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::invalid(
                "beta2",
                format!("must lie in [0, 1) (got {})", self.beta2),
            ));
        }
        match &self.beta3 {
            Some(b3) => b3.validate("beta3")?,
            None if self.algorithm.requires_beta3() => {
                return Err(Error::invalid(
                    "beta3",
                    format!("required by algorithm `{}`", self.algorithm),
                ))
            }
            None => {}
        }
        self.alpha.validate()?;
        if !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be finite"));
        }
        self.averaging.validate()?;
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::invalid("r", "must be finite and >= 0"));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::invalid("eps", "must be finite and >= 0"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Auxiliary vectors; present exactly when the algorithm uses them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Buffers {
    /// First momentum (`m`, or `m1` for AdEMAMix variants).
    pub m: Option<ParamVector>,
    /// Slow momentum of AdEMAMix.
    pub m2: Option<ParamVector>,
    /// Second-moment EMA.
    pub v: Option<ParamVector>,
    /// Schedule-Free base sequence.
    pub z: Option<ParamVector>,
    /// Schedule-Free averaged sequence.
    pub x: Option<ParamVector>,
    pub w_avg: Option<ParamVector>,
    /// Previous gradient (MARS).
    pub g_prev: Option<ParamVector>,
}

impl Buffers {
    pub fn names(&self) -> Vec<&'static str> {
        [
            ("m", &self.m),
            ("m2", &self.m2),
            ("v", &self.v),
            ("z", &self.z),
            ("x", &self.x),
            ("w_avg", &self.w_avg),
            ("g_prev", &self.g_prev),
        ]
        .into_iter()
        .filter_map(|(name, b)| b.as_ref().map(|_| name))
        .collect()
    }

    fn all(&self) -> impl Iterator<Item = &ParamVector> {
        [
            &self.m,
            &self.m2,
            &self.v,
            &self.z,
            &self.x,
            &self.w_avg,
            &self.g_prev,
        ]
        .into_iter()
        .flatten()
    }
}

/// Position in the Schedule-Free averaging weight sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingCursor {
    weights: ScheduleFreeWeights,
    /// `c_t` for the most recent step (starts at `c_1 = 1`).
    current: f64,
}

impl AveragingCursor {
    fn new(r: f64) -> Self {
        let mut weights = ScheduleFreeWeights::new(r);
        let current = weights.next().expect("infinite sequence");
        Self { weights, current }
    }

    /// Advances to `c_{t+1}` and returns it.
    fn advance(&mut self) -> f64 {
        self.current = self.weights.next().expect("infinite sequence");
        self.current
    }

    pub fn current(&self) -> f64 {
        self.current
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub algorithm: Algorithm,
    /// Completed steps.
    pub t: u64,
    /// Current parameters; for Schedule-Free this is `y`, the gradient query point.
    pub w: ParamVector,
    pub buffers: Buffers,
    pub averaging: Option<AveragingCursor>,
}

/// Coefficients in effect for one step, reported to the harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub lr: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// 1-based index of the step just taken.
    pub step: u64,
    /// Euclidean norm of the change in `w`.
    pub update_norm: f64,
    pub lr: f64,
    pub momentum: f64,
}

/// Allocates exactly the buffers `config.algorithm` needs.
pub fn init_state(config: &OptimizerConfig, w0: ParamVector) -> Result<OptimizerState> {
    config.validate()?;
    let zeros = || Some(ParamVector::zeros(w0.dim()));
    let mut buffers = Buffers::default();
    let mut averaging = None;
    match config.algorithm {
        Algorithm::SgdMomentum | Algorithm::AccelSgd | Algorithm::Lion => buffers.m = zeros(),
        Algorithm::ScheduleFreeSgd => {
            buffers.z = Some(w0.clone());
            buffers.x = Some(w0.clone());
            averaging = Some(AveragingCursor::new(config.r));
        }
        Algorithm::ScheduleFreeAdamw => {
            buffers.z = Some(w0.clone());
            buffers.x = Some(w0.clone());
            buffers.v = zeros();
            averaging = Some(AveragingCursor::new(config.r));
        }
        Algorithm::Adamw | Algorithm::Laprop | Algorithm::SimplifiedAdemamix => {
            buffers.m = zeros();
            buffers.v = zeros();
        }
        Algorithm::MarsApprox => {
            buffers.m = zeros();
            buffers.v = zeros();
            buffers.g_prev = zeros();
        }
        Algorithm::Ademamix => {
            buffers.m = zeros();
            buffers.m2 = zeros();
            buffers.v = zeros();
        }
        Algorithm::AccelAdamAvg => {
            buffers.m = zeros();
            buffers.v = zeros();
            buffers.w_avg = Some(w0.clone());
        }
    }
    Ok(OptimizerState {
        algorithm: config.algorithm,
        t: 0,
        w: w0,
        buffers,
        averaging,
    })
}

/// The parameters the algorithm designates for evaluation.
pub fn eval_point(state: &OptimizerState) -> &ParamVector {
    match state.algorithm {
        Algorithm::ScheduleFreeSgd | Algorithm::ScheduleFreeAdamw => {
            state.buffers.x.as_ref().expect("schedule-free state has x")
        }
        Algorithm::AccelAdamAvg => state
            .buffers
            .w_avg
            .as_ref()
            .expect("averaging state has w_avg"),
        _ => &state.w,
    }
}

pub(crate) fn buf<'a>(b: &'a mut Option<ParamVector>, name: &'static str) -> &'a mut [f64] {
    b.as_mut()
        .unwrap_or_else(|| panic!("buffer `{name}` missing from optimizer state"))
        .as_mut_slice()
}

pub(crate) fn bias_factor(on: bool, beta: f64, t: u64) -> f64 {
    if on {
        1.0 - beta.powi(t.min(i32::MAX as u64) as i32)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, w0: ParamVector) -> Result<Self> {
        let state = init_state(&config, w0)?;
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn into_state(self) -> OptimizerState {
        self.state
    }

    /// Where the next gradient must be evaluated (`y_t` for Schedule-Free).
    pub fn query_point(&self) -> &ParamVector {
        &self.state.w
    }

    pub fn eval_point(&self) -> &ParamVector {
        eval_point(&self.state)
    }

    /// Applies one update with a gradient evaluated at [`Self::query_point`].
    ///
    /// A non-finite gradient or a non-finite result is reported as an error;
    /// callers are expected to abort the run.
    pub fn step(&mut self, g: &[f64]) -> Result<StepReport> {
        let t = self.state.t + 1;
        if g.len() != self.state.w.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state.w.dim(),
                found: g.len(),
            });
        }
        if let Some(index) = first_non_finite(g) {
            return Err(Error::NonFinite {
                what: "gradient",
                step: t,
                index,
            });
        }
        let before = self.state.w.clone();
        let cfg = &self.config;
        let state = &mut self.state;
        let coeffs = match cfg.algorithm {
            Algorithm::SgdMomentum => step_sgd_momentum(cfg, state, g, t)?,
            Algorithm::AccelSgd => step_accel_sgd(cfg, state, g, t)?,
            Algorithm::ScheduleFreeSgd => step_schedule_free_sgd(cfg, state, g, t)?,
            Algorithm::ScheduleFreeAdamw => step_schedule_free_adamw(cfg, state, g, t)?,
            Algorithm::Adamw => step_adamw(cfg, state, g, t)?,
            Algorithm::Laprop => step_laprop(cfg, state, g, t)?,
            Algorithm::Lion => step_lion(cfg, state, g, t)?,
            Algorithm::MarsApprox => step_mars_approx(cfg, state, g, t)?,
            Algorithm::Ademamix => step_ademamix(cfg, state, g, t)?,
            Algorithm::SimplifiedAdemamix => step_simplified_ademamix(cfg, state, g, t)?,
            Algorithm::AccelAdamAvg => step_accel_adam_avg(cfg, state, g, t)?,
        };
        state.t = t;
        if let Some(index) = first_non_finite(&state.w)
            .or_else(|| state.buffers.all().find_map(|b| first_non_finite(b)))
        {
            return Err(Error::NonFinite {
                what: "update",
                step: t,
                index,
            });
        }
        Ok(StepReport {
            step: t,
            update_norm: distance(&before, &state.w),
            lr: coeffs.lr,
            momentum: coeffs.momentum,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w0() -> ParamVector {
        ParamVector::new(vec![1.0, -2.0, 0.5]).unwrap()
    }

    #[test]
    fn buffers_match_algorithm() {
        let cases: [(Algorithm, &[&str]); 5] = [
            (Algorithm::ScheduleFreeSgd, &["z", "x"]),
            (Algorithm::SgdMomentum, &["m"]),
            (Algorithm::AccelAdamAvg, &["m", "v", "w_avg"]),
            (Algorithm::MarsApprox, &["m", "v", "g_prev"]),
            (Algorithm::Ademamix, &["m", "m2", "v"]),
        ];
        for (alg, names) in cases {
            let cfg = OptimizerConfig::new(alg).with_beta3(0.999);
            let state = init_state(&cfg, w0()).unwrap();
            assert_eq!(state.buffers.names(), names, "{alg}");
            assert_eq!(state.t, 0);
        }
        let state = init_state(&OptimizerConfig::new(Algorithm::ScheduleFreeSgd), w0()).unwrap();
        assert_eq!(state.buffers.z.as_ref().unwrap(), &w0());
        assert_eq!(state.buffers.x.as_ref().unwrap(), &w0());
        let state = init_state(
            &OptimizerConfig::new(Algorithm::Ademamix).with_beta3(0.9),
            w0(),
        )
        .unwrap();
        for b in state.buffers.all() {
            assert!(b.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn eval_points() {
        let s = init_state(&OptimizerConfig::new(Algorithm::Adamw), w0()).unwrap();
        assert!(std::ptr::eq(eval_point(&s), &s.w));
        let s = init_state(&OptimizerConfig::new(Algorithm::ScheduleFreeSgd), w0()).unwrap();
        assert!(std::ptr::eq(eval_point(&s), s.buffers.x.as_ref().unwrap()));
        let s = init_state(
            &OptimizerConfig::new(Algorithm::AccelAdamAvg).with_beta3(0.9),
            w0(),
        )
        .unwrap();
        assert!(std::ptr::eq(
            eval_point(&s),
            s.buffers.w_avg.as_ref().unwrap()
        ));
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("adam".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_validation() {
        let err = OptimizerConfig::new(Algorithm::Ademamix)
            .validate()
            .unwrap_err();
        assert!(err.to_string().contains("beta3"), "{err}");
        assert!(OptimizerConfig::new(Algorithm::MarsApprox)
            .with_beta1(1.0)
            .validate()
            .is_err());
        assert!(OptimizerConfig::new(Algorithm::Adamw)
            .with_beta2(1.0)
            .validate()
            .is_err());
        assert!(OptimizerConfig::new(Algorithm::ScheduleFreeSgd)
            .with_beta1(1.0)
            .validate()
            .is_ok());
        assert!(OptimizerConfig::new(Algorithm::ScheduleFreeSgd)
            .with_beta1(1.1)
            .validate()
            .is_err());
        // Unused fields are still validated.
        let mut cfg = OptimizerConfig::new(Algorithm::SgdMomentum);
        cfg.averaging = AveragingSchedule::Tailed { delta: 0.0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut opt = Optimizer::new(OptimizerConfig::new(Algorithm::Adamw), w0()).unwrap();
        let err = opt.step(&[0.0, f64::NAN, 0.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::NonFinite {
                what: "gradient",
                step: 1,
                index: 1
            }
        ));
        assert!(opt.step(&[0.0; 2]).is_err());
    }

    #[test]
    fn overflowing_update_is_reported() {
        let cfg = OptimizerConfig::new(Algorithm::SgdMomentum)
            .with_lr(1e300)
            .with_beta1(0.0);
        let mut opt = Optimizer::new(cfg, w0()).unwrap();
        let err = opt.step(&[1e300, 0.0, 0.0]).unwrap_err();
        assert!(
            matches!(err, Error::NonFinite { what: "update", .. }),
            "{err}"
        );
    }
}
