//! Schedule-Free SGD and AdamW.
//!
//! Sequences: `z` takes plain (optionally preconditioned) gradient steps, `x`
//! is the weighted average of `z` with weights `c_t`, and `y = (1-beta) z + beta x`
//! is where gradients are evaluated. `state.w` holds `y`.

use super::{bias_factor, buf, OptimizerConfig, OptimizerState, StepCoefficients};
use crate::error::Result;

fn interpolate(state: &mut OptimizerState, beta: f64) {
    let z = state.buffers.z.as_ref().expect("schedule-free state has z");
    let x = state.buffers.x.as_ref().expect("schedule-free state has x");
    for ((y, z), x) in state
        .w
        .as_mut_slice()
        .iter_mut()
        .zip(z.iter())
        .zip(x.iter())
    {
        *y = (1.0 - beta) * z + beta * x;
    }
}

/// Shared tail: `z <- z - lr (d + wd y)`, `x <- (1-c) x + c z`, new `y`.
fn advance(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    direction: impl Fn(usize) -> f64,
    t: u64,
) -> Result<StepCoefficients> {
    let lr = cfg.lr.at(t)?;
    let cursor = state
        .averaging
        .as_mut()
        .expect("schedule-free state has weights");
    let momentum = 1.0 - cursor.current();
    let c = cursor.advance();
    {
        let y = state.w.as_slice();
        let z = buf(&mut state.buffers.z, "z");
        for (i, z) in z.iter_mut().enumerate() {
            *z -= lr * (direction(i) + cfg.weight_decay * y[i]);
        }
    }
    let z = state.buffers.z.as_ref().expect("schedule-free state has z");
    let x = buf(&mut state.buffers.x, "x");
    for (x, z) in x.iter_mut().zip(z.iter()) {
        *x = (1.0 - c) * *x + c * z;
    }
    let beta_next = cfg.beta1.at(t + 1)?;
    interpolate(state, beta_next);
    Ok(StepCoefficients { lr, momentum })
}

/// `z_{t+1} = z_t - gamma g(y_t)`, `x_{t+1} = (1 - c_{t+1}) x_t + c_{t+1} z_{t+1}`.
pub fn step_schedule_free_sgd(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    advance(cfg, state, |i| g[i], t)
}

/// Schedule-Free with the gradient preconditioned by a bias-corrected second
/// moment before it enters `z` (preconditioning before momentum).
pub fn step_schedule_free_adamw(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    let b2 = cfg.beta2;
    let v = buf(&mut state.buffers.v, "v");
    for (v, g) in v.iter_mut().zip(g) {
        *v = b2 * *v + (1.0 - b2) * g * g;
    }
    let bc2 = bias_factor(cfg.bias_correction, b2, t);
    let v = state
        .buffers
        .v
        .clone()
        .expect("schedule-free adamw state has v");
    let eps = cfg.eps;
    advance(cfg, state, |i| g[i] / ((v[i] / bc2).sqrt() + eps), t)
}

#[cfg(test)]
mod tests {
    use crate::optimizers::{Algorithm, Optimizer, OptimizerConfig};
    use crate::ParamVector;

    fn quad_grad(w: &[f64]) -> Vec<f64> {
        w.iter()
            .enumerate()
            .map(|(i, w)| (i as f64 + 1.0) * (w - 1.0))
            .collect()
    }

    #[test]
    fn beta_zero_averages_sgd_iterates() {
        let cfg = OptimizerConfig::new(Algorithm::ScheduleFreeSgd)
            .with_lr(0.1)
            .with_beta1(0.0);
        let mut opt = Optimizer::new(cfg, ParamVector::new(vec![3.0, -1.0]).unwrap()).unwrap();
        let mut w = vec![3.0, -1.0];
        let mut sum = w.clone();
        for k in 1..=200 {
            let g = quad_grad(opt.query_point());
            opt.step(&g).unwrap();
            let gw = quad_grad(&w);
            w.iter_mut().zip(&gw).for_each(|(w, g)| *w -= 0.1 * g);
            sum.iter_mut().zip(&w).for_each(|(s, w)| *s += w);
            let x = opt.eval_point();
            for i in 0..2 {
                let mean = sum[i] / (k + 1) as f64;
                assert!((x[i] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            }
        }
    }

    #[test]
    fn reports_one_minus_c_as_momentum() {
        let cfg = OptimizerConfig::new(Algorithm::ScheduleFreeSgd).with_lr(0.1);
        let mut opt = Optimizer::new(cfg, ParamVector::new(vec![0.0]).unwrap()).unwrap();
        let moms: Vec<f64> = (0..4).map(|_| opt.step(&[1.0]).unwrap().momentum).collect();
        assert_eq!(moms, vec![0.0, 0.5, 1.0 - 1.0 / 3.0, 0.75]);
    }

    #[test]
    fn adamw_variant_takes_normalised_steps() {
        let cfg = OptimizerConfig::new(Algorithm::ScheduleFreeAdamw)
            .with_lr(0.01)
            .with_beta1(0.0)
            .with_eps(0.0);
        let mut opt = Optimizer::new(cfg, ParamVector::new(vec![0.0, 0.0]).unwrap()).unwrap();
        opt.step(&[100.0, -0.001]).unwrap();
        // Bias-corrected v equals g^2 after one step, so z moves by lr * sign(g).
        let z = opt.state().buffers.z.as_ref().unwrap();
        assert!((z[0] + 0.01).abs() < 1e-15 && (z[1] - 0.01).abs() < 1e-15);
    }
}
