//! Time-indexed coefficients. Steps are 1-based everywhere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_step(t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::StepOutOfRange { t, max: u64::MAX });
    }
    Ok(())
}

fn check_unit_interval(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && (0.0..1.0).contains(&value)) {
        return Err(Error::invalid(
            name,
            format!("must lie in [0, 1) (got {value})"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearningRateSchedule {
    Constant {
        value: f64,
    },
    /// Linear warmup to `peak`, then cosine decay to `floor` at step `total`.
    CosineWithWarmup {
        peak: f64,
        warmup: u64,
        total: u64,
        floor: f64,
    },
}

impl LearningRateSchedule {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { value } => {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(Error::invalid(
                        "lr",
                        format!("must be finite and >= 0 (got {value})"),
                    ));
                }
            }
            Self::CosineWithWarmup {
                peak,
                warmup,
                total,
                floor,
            } => {
                if !(peak.is_finite() && peak > 0.0) {
                    return Err(Error::invalid("lr", "peak must be finite and > 0"));
                }
                if total == 0 {
                    return Err(Error::invalid("lr_total", "must be > 0"));
                }
                if warmup > total {
                    return Err(Error::invalid(
                        "warmup",
                        format!("warmup steps ({warmup}) exceed total steps ({total})"),
                    ));
                }
                if !(floor.is_finite() && (0.0..=peak).contains(&floor)) {
                    return Err(Error::invalid("lr_floor", "must lie in [0, peak]"));
                }
            }
        }
        Ok(())
    }

    pub fn peak(&self) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::CosineWithWarmup { peak, .. } => peak,
        }
    }

    pub fn at(&self, t: u64) -> Result<f64> {
        check_step(t)?;
        match *self {
            Self::Constant { value } => Ok(value),
            Self::CosineWithWarmup {
                peak,
                warmup,
                total,
                floor,
            } => {
                if t > total {
                    return Err(Error::StepOutOfRange { t, max: total });
                }
                if t <= warmup {
                    return Ok(peak * t as f64 / warmup as f64);
                }
                let progress = (t - warmup) as f64 / (total - warmup) as f64;
                Ok(floor + 0.5 * (peak - floor) * (1.0 + (PI * progress).cos()))
            }
        }
    }
}

pub fn lr_at(s: &LearningRateSchedule, t: u64) -> Result<f64> {
    s.at(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentumSchedule {
    Constant {
        value: f64,
    },
    /// `max(0, 1 - k/t)`.
    OneMinusKOverT {
        k: f64,
    },
    /// Moves from `start` to `base` linearly in half-life (`1/ln(beta)`) space
    /// over `horizon` steps, then stays at `base`.
    HalfLifeWarmup {
        start: f64,
        base: f64,
        horizon: u64,
    },
    /// The Schedule-Free averaging weight `c_t = t^r / sum_{i<=t} i^r`.
    /// Unlike the other kinds this emits `c_t` itself, which equals 1 at `t = 1`.
    ScheduleFreeC {
        r: f64,
    },
}

impl MomentumSchedule {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        match *self {
            Self::Constant { value } => check_unit_interval(name, value),
            Self::OneMinusKOverT { k } => {
                if !(k.is_finite() && k > 0.0) {
                    return Err(Error::invalid(
                        format!("{name}_k"),
                        "must be finite and > 0",
                    ));
                }
                Ok(())
            }
            Self::HalfLifeWarmup {
                start,
                base,
                horizon,
            } => {
                check_unit_interval(&format!("{name}_start"), start)?;
                check_unit_interval(name, base)?;
                if horizon == 0 {
                    return Err(Error::invalid(format!("{name}_warmup"), "must be > 0"));
                }
                Ok(())
            }
            Self::ScheduleFreeC { r } => {
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::invalid("r", "must be finite and >= 0"));
                }
                Ok(())
            }
        }
    }

    /// Value for constant schedules, `None` otherwise.
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            Self::Constant { value } => Some(value),
            _ => None,
        }
    }

    pub fn at(&self, t: u64) -> Result<f64> {
        check_step(t)?;
        Ok(match *self {
            Self::Constant { value } => value,
            Self::OneMinusKOverT { k } => (1.0 - k / t as f64).max(0.0),
            Self::HalfLifeWarmup {
                start,
                base,
                horizon,
            } => half_life_interp(start, base, (t as f64 / horizon as f64).min(1.0)),
            Self::ScheduleFreeC { r } => schedule_free_c(r, t),
        })
    }
}

pub fn momentum_at(s: &MomentumSchedule, t: u64) -> Result<f64> {
    s.at(t)
}

/// `exp(ln(a) ln(b) / ((1-u) ln(b) + u ln(a)))`, i.e. `1/ln(beta)` moves
/// linearly from `1/ln(a)` to `1/ln(b)`. Zero endpoints are handled as limits.
fn half_life_interp(start: f64, base: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return start;
    }
    if u >= 1.0 {
        return base;
    }
    match (start == 0.0, base == 0.0) {
        (true, true) => 0.0,
        (true, false) => base.powf(1.0 / u),
        (false, true) => start.powf(1.0 / (1.0 - u)),
        (false, false) => {
            let (ls, lb) = (start.ln(), base.ln());
            (ls * lb / ((1.0 - u) * lb + u * ls)).exp()
        }
    }
}

/// `c_t = t^r / sum_{i=1}^t i^r`, computed directly in O(t).
pub fn schedule_free_c(r: f64, t: u64) -> f64 {
    if r == 0.0 {
        return 1.0 / t as f64;
    }
    let tf = t as f64;
    let denom: f64 = (1..=t).map(|i| (i as f64 / tf).powf(r)).sum();
    1.0 / denom
}

/// Incremental generator of `c_1, c_2, ...` for the Schedule-Free average.
///
/// Keeps `ln sum_i i^r` so that large `r` does not overflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFreeWeights {
    r: f64,
    t: u64,
    log_sum: f64,
}

impl ScheduleFreeWeights {
    pub fn new(r: f64) -> Self {
        Self {
            r,
            t: 0,
            log_sum: f64::NEG_INFINITY,
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

impl Iterator for ScheduleFreeWeights {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        self.t += 1;
        let t = self.t as f64;
        if self.r == 0.0 {
            return Some(1.0 / t);
        }
        let log_w = self.r * t.ln();
        let hi = self.log_sum.max(log_w);
        self.log_sum = hi + ((self.log_sum - hi).exp() + (log_w - hi).exp()).ln();
        Some((log_w - self.log_sum).exp())
    }
}

/// `c_1..=c_len` for the Schedule-Free average.
pub fn schedule_free_c_sequence(r: f64, len: usize) -> Vec<f64> {
    ScheduleFreeWeights::new(r).take(len).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlphaSchedule {
    Constant {
        value: f64,
    },
    /// `min(target, target * t / horizon)`.
    LinearWarmup {
        target: f64,
        horizon: u64,
    },
}

impl AlphaSchedule {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        let (value, horizon) = match *self {
            Self::Constant { value } => (value, 1),
            Self::LinearWarmup { target, horizon } => (target, horizon),
        };
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must be finite and >= 0 (got {value})"),
            ));
        }
        if horizon == 0 {
            return Err(Error::invalid("alpha_warmup", "must be > 0"));
        }
        Ok(())
    }

    pub fn target(&self) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::LinearWarmup { target, .. } => target,
        }
    }

    pub fn at(&self, t: u64) -> Result<f64> {
        check_step(t)?;
        Ok(match *self {
            Self::Constant { value } => value,
            Self::LinearWarmup { target, horizon } => {
                target.min(target * t as f64 / horizon as f64)
            }
        })
    }
}

pub fn alpha_at(s: &AlphaSchedule, t: u64) -> Result<f64> {
    s.at(t)
}

/// Coefficient `c` of `w_avg <- c w_avg + (1 - c) w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AveragingSchedule {
    /// `1 - 1/t`: the arithmetic mean of all iterates.
    Uniform,
    /// `max(0, 1 - 1/(delta t))`: roughly the most recent `delta` fraction.
    Tailed { delta: f64 },
    /// `max(1 - 1/t, 1 - 1/(delta t))` taken literally; equals `Uniform` for `delta <= 1`.
    AsWrittenMax { delta: f64 },
}

impl AveragingSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform => Ok(()),
            Self::Tailed { delta } | Self::AsWrittenMax { delta } => {
                if !(delta.is_finite() && delta > 0.0 && delta <= 1.0) {
                    return Err(Error::invalid(
                        "delta",
                        format!("must lie in (0, 1] (got {delta})"),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, t: u64) -> Result<f64> {
        check_step(t)?;
        let tf = t as f64;
        Ok(match *self {
            Self::Uniform => 1.0 - 1.0 / tf,
            Self::Tailed { delta } => (1.0 - 1.0 / (delta * tf)).max(0.0),
            Self::AsWrittenMax { delta } => (1.0 - 1.0 / tf).max(1.0 - 1.0 / (delta * tf)),
        })
    }
}

pub fn averaging_coeff(s: &AveragingSchedule, t: u64) -> Result<f64> {
    s.at(t)
}
