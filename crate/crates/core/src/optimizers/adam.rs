use super::{bias_factor, buf, OptimizerConfig, OptimizerState, StepCoefficients};
use crate::error::Result;

pub(crate) fn update_second_moment(v: &mut [f64], g: &[f64], beta2: f64) {
    for (v, g) in v.iter_mut().zip(g) {
        *v = beta2 * *v + (1.0 - beta2) * g * g;
    }
}

/// Momentum before preconditioning:
/// `w <- w - lr m_hat / (sqrt(v_hat) + eps) - lr wd w`.
pub fn step_adamw(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    let lr = cfg.lr.at(t)?;
    let b1 = cfg.beta1.at(t)?;
    let bc1 = bias_factor(cfg.bias_correction, b1, t);
    let bc2 = bias_factor(cfg.bias_correction, cfg.beta2, t);
    let m = buf(&mut state.buffers.m, "m");
    for (m, g) in m.iter_mut().zip(g) {
        *m = b1 * *m + (1.0 - b1) * g;
    }
    update_second_moment(buf(&mut state.buffers.v, "v"), g, cfg.beta2);
    let m = state.buffers.m.as_ref().expect("adam state has m");
    let v = state.buffers.v.as_ref().expect("adam state has v");
    for ((w, m), v) in state
        .w
        .as_mut_slice()
        .iter_mut()
        .zip(m.iter())
        .zip(v.iter())
    {
        let dir = (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
        *w -= lr * (dir + cfg.weight_decay * *w);
    }
    Ok(StepCoefficients { lr, momentum: b1 })
}

/// Preconditioning before momentum:
/// `m <- b1 m + (1 - b1) g / (sqrt(v_hat) + eps);  w <- w - lr m_hat - lr wd w`.
pub fn step_laprop(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    let lr = cfg.lr.at(t)?;
    let b1 = cfg.beta1.at(t)?;
    let bc1 = bias_factor(cfg.bias_correction, b1, t);
    let bc2 = bias_factor(cfg.bias_correction, cfg.beta2, t);
    update_second_moment(buf(&mut state.buffers.v, "v"), g, cfg.beta2);
    let v = state.buffers.v.as_ref().expect("laprop state has v");
    let m = buf(&mut state.buffers.m, "m");
    for ((m, g), v) in m.iter_mut().zip(g).zip(v.iter()) {
        *m = b1 * *m + (1.0 - b1) * (g / ((v / bc2).sqrt() + cfg.eps));
    }
    let m = state.buffers.m.as_ref().expect("laprop state has m");
    for (w, m) in state.w.as_mut_slice().iter_mut().zip(m.iter()) {
        *w -= lr * (m / bc1 + cfg.weight_decay * *w);
    }
    Ok(StepCoefficients { lr, momentum: b1 })
}

/// Accelerated-SGD-style Adam with iterate averaging.
///
/// The numerator mixes the previous momentum and the current gradient with
/// `beta3`; the momentum is refreshed only after the parameter update, and
/// the evaluation average is updated last.
pub fn step_accel_adam_avg(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    let lr = cfg.lr.at(t)?;
    let b1 = cfg.beta1.at(t)?;
    let b3 = cfg
        .beta3
        .as_ref()
        .expect("validated: beta3 present")
        .at(t)?;
    let bc2 = bias_factor(cfg.bias_correction, cfg.beta2, t);
    update_second_moment(buf(&mut state.buffers.v, "v"), g, cfg.beta2);
    {
        let m = state.buffers.m.as_ref().expect("accel-adam state has m");
        let v = state.buffers.v.as_ref().expect("accel-adam state has v");
        for (i, w) in state.w.as_mut_slice().iter_mut().enumerate() {
            let n = (b3 * m[i] + (1.0 - b3) * g[i]) / ((v[i] / bc2).sqrt() + cfg.eps);
            *w -= lr * (n + cfg.weight_decay * *w);
        }
    }
    let m = buf(&mut state.buffers.m, "m");
    for (m, g) in m.iter_mut().zip(g) {
        *m = b1 * *m + (1.0 - b1) * g;
    }
    let c = cfg.averaging.at(t)?;
    let avg = buf(&mut state.buffers.w_avg, "w_avg");
    for (a, w) in avg.iter_mut().zip(state.w.iter()) {
        *a = c * *a + (1.0 - c) * w;
    }
    Ok(StepCoefficients { lr, momentum: b1 })
}
