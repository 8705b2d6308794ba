use super::adam::update_second_moment;
use super::{bias_factor, buf, OptimizerConfig, OptimizerState, StepCoefficients};
use crate::error::Result;
use crate::vector::norm2;

/// Variance-reduced gradient `c_t = g + gamma b1/(1-b1) (g - g_prev)`,
/// clipped to unit norm when `clip` is set.
pub(crate) fn corrected_gradient(
    g: &[f64],
    g_prev: &[f64],
    gamma: f64,
    b1: f64,
    clip: bool,
) -> Vec<f64> {
    let scale = gamma * b1 / (1.0 - b1);
    let mut c: Vec<f64> = g
        .iter()
        .zip(g_prev)
        .map(|(g, p)| g + scale * (g - p))
        .collect();
    if clip {
        let n = norm2(&c);
        if n > 1.0 {
            c.iter_mut().for_each(|c| *c /= n);
        }
    }
    c
}

/// MARS-Approx: Adam on the corrected gradient `c_t`.
pub fn step_mars_approx(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    let lr = cfg.lr.at(t)?;
    let b1 = cfg.beta1.at(t)?;
    let bc1 = bias_factor(cfg.bias_correction, b1, t);
    let bc2 = bias_factor(cfg.bias_correction, cfg.beta2, t);
    let c = {
        let prev = buf(&mut state.buffers.g_prev, "g_prev");
        let c = corrected_gradient(g, prev, cfg.gamma, b1, cfg.clip);
        prev.copy_from_slice(g);
        c
    };
    let m = buf(&mut state.buffers.m, "m");
    for (m, c) in m.iter_mut().zip(&c) {
        *m = b1 * *m + (1.0 - b1) * c;
    }
    update_second_moment(buf(&mut state.buffers.v, "v"), &c, cfg.beta2);
    let m = state.buffers.m.as_ref().expect("mars state has m");
    let v = state.buffers.v.as_ref().expect("mars state has v");
    for ((w, m), v) in state
        .w
        .as_mut_slice()
        .iter_mut()
        .zip(m.iter())
        .zip(v.iter())
    {
        *w -= lr * ((m / bc1) / ((v / bc2).sqrt() + cfg.eps) + cfg.weight_decay * *w);
    }
    Ok(StepCoefficients { lr, momentum: b1 })
}

#[cfg(test)]
mod tests {
    use crate::optimizers::{Algorithm, Optimizer, OptimizerConfig};
    use crate::ParamVector;

    fn grads(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|k| {
                let k = k as f64;
                vec![(0.3 * k).sin(), (0.7 * k).cos() - 0.2, 1.0 / (k + 1.0)]
            })
            .collect()
    }

    #[test]
    fn gamma_zero_is_adam() {
        let mut mars = OptimizerConfig::new(Algorithm::MarsApprox).with_lr(0.01);
        mars.gamma = 0.0;
        let adam = OptimizerConfig::new(Algorithm::Adamw).with_lr(0.01);
        let mut a = Optimizer::new(mars, ParamVector::zeros(3)).unwrap();
        let mut b = Optimizer::new(adam, ParamVector::zeros(3)).unwrap();
        for g in grads(50) {
            a.step(&g).unwrap();
            b.step(&g).unwrap();
        }
        assert_eq!(a.query_point(), b.query_point());
    }

    #[test]
    fn constant_gradient_needs_no_correction_after_first_step() {
        let c = super::corrected_gradient(&[1.0, 2.0], &[1.0, 2.0], 0.5, 0.9, false);
        assert_eq!(c, vec![1.0, 2.0]);
        let c = super::corrected_gradient(&[1.0, 2.0], &[0.0, 0.0], 0.5, 0.9, false);
        assert!((c[0] - 5.5).abs() < 1e-12);
    }

    #[test]
    fn clipping_bounds_norm() {
        let c = super::corrected_gradient(&[3.0, 4.0], &[0.0, 0.0], 0.0, 0.9, true);
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rewritten_momentum_recursion_holds() {
        let (b1, gamma) = (0.9, 0.025);
        let mut cfg = OptimizerConfig::new(Algorithm::MarsApprox)
            .with_lr(0.01)
            .with_beta1(b1);
        cfg.gamma = gamma;
        cfg.bias_correction = false;
        let mut opt = Optimizer::new(cfg, ParamVector::zeros(3)).unwrap();
        let mut hat_prev = [0.0; 3];
        for g in grads(100) {
            opt.step(&g).unwrap();
            let m = opt.state().buffers.m.as_ref().unwrap();
            for i in 0..3 {
                let hat = m[i] - gamma * g[i];
                let expect = b1 * hat_prev[i] + (1.0 - b1) * (1.0 - gamma) * g[i];
                assert!((hat - expect).abs() <= 1e-12);
                hat_prev[i] = hat;
            }
        }
    }
}
