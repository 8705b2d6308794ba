use super::adam::update_second_moment;
use super::{bias_factor, buf, OptimizerConfig, OptimizerState, StepCoefficients};
use crate::error::Result;

/// Fast EMA `m` (bias-corrected per flag), slow EMA `m2` with `beta3(t)`,
/// numerator `m_hat + alpha(t) m2`.
pub fn step_ademamix(
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
    let alpha = cfg.alpha.at(t)?;
    let bc1 = bias_factor(cfg.bias_correction, b1, t);
    let bc2 = bias_factor(cfg.bias_correction, cfg.beta2, t);
    let m = buf(&mut state.buffers.m, "m");
    for (m, g) in m.iter_mut().zip(g) {
        *m = b1 * *m + (1.0 - b1) * g;
    }
    let m2 = buf(&mut state.buffers.m2, "m2");
    for (m, g) in m2.iter_mut().zip(g) {
        *m = b3 * *m + (1.0 - b3) * g;
    }
    update_second_moment(buf(&mut state.buffers.v, "v"), g, cfg.beta2);
    let b = &state.buffers;
    let (m, m2, v) = (
        b.m.as_ref().unwrap(),
        b.m2.as_ref().unwrap(),
        b.v.as_ref().unwrap(),
    );
    for (i, w) in state.w.as_mut_slice().iter_mut().enumerate() {
        let num = m[i] / bc1 + alpha * m2[i];
        *w -= lr * (num / ((v[i] / bc2).sqrt() + cfg.eps) + cfg.weight_decay * *w);
    }
    Ok(StepCoefficients { lr, momentum: b1 })
}

/// Theory-style accumulator `m <- beta1(t) m + g` with numerator `m + alpha g`.
pub fn step_simplified_ademamix(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    let lr = cfg.lr.at(t)?;
    let b1 = cfg.beta1.at(t)?;
    let alpha = cfg.alpha.at(t)?;
    let bc2 = bias_factor(cfg.bias_correction, cfg.beta2, t);
    let m = buf(&mut state.buffers.m, "m");
    for (m, g) in m.iter_mut().zip(g) {
        *m = b1 * *m + g;
    }
    update_second_moment(buf(&mut state.buffers.v, "v"), g, cfg.beta2);
    let m = state.buffers.m.as_ref().expect("simplified state has m");
    let v = state.buffers.v.as_ref().expect("simplified state has v");
    for (i, w) in state.w.as_mut_slice().iter_mut().enumerate() {
        let num = m[i] + alpha * g[i];
        *w -= lr * (num / ((v[i] / bc2).sqrt() + cfg.eps) + cfg.weight_decay * *w);
    }
    Ok(StepCoefficients { lr, momentum: b1 })
}

#[cfg(test)]
mod tests {
    use crate::optimizers::{Algorithm, Optimizer, OptimizerConfig};
    use crate::schedules::MomentumSchedule;
    use crate::ParamVector;

    fn stream(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|k| vec![(1.3 * k as f64).sin() + 0.1, -0.5 + (0.2 * k as f64).cos()])
            .collect()
    }

    fn run(cfg: OptimizerConfig, n: usize) -> Optimizer {
        let mut opt = Optimizer::new(cfg, ParamVector::new(vec![0.5, -0.5]).unwrap()).unwrap();
        for g in stream(n) {
            opt.step(&g).unwrap();
        }
        opt
    }

    #[test]
    fn alpha_zero_is_adamw() {
        let a = run(
            OptimizerConfig::new(Algorithm::Ademamix)
                .with_beta3(0.999)
                .with_lr(0.01),
            100,
        );
        let b = run(OptimizerConfig::new(Algorithm::Adamw).with_lr(0.01), 100);
        for (x, y) in a.query_point().iter().zip(b.query_point().iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_fast_ema_is_gradient() {
        let cfg = OptimizerConfig::new(Algorithm::Ademamix)
            .with_beta3(0.999)
            .with_eps(0.0)
            .with_lr(0.1);
        let opt = run(cfg, 1);
        // m_hat = g and v_hat = g^2 at t = 1, so each coordinate moves by lr.
        let w = opt.query_point();
        assert!((w[0] - 0.4).abs() < 1e-15 && (w[1] + 0.6).abs() < 1e-15);
    }

    #[test]
    fn simplified_accumulates_geometric_mass() {
        let cfg = OptimizerConfig::new(Algorithm::SimplifiedAdemamix)
            .with_beta1(0.9)
            .with_lr(0.0);
        let mut opt = Optimizer::new(cfg, ParamVector::zeros(1)).unwrap();
        for _ in 0..400 {
            opt.step(&[2.0]).unwrap();
        }
        let m = opt.state().buffers.m.as_ref().unwrap()[0];
        assert!((m - 20.0).abs() < 1e-12);
    }

    #[test]
    fn simplified_alpha_zero_is_adam_without_correction() {
        let b1 = 0.8;
        let simp = OptimizerConfig::new(Algorithm::SimplifiedAdemamix)
            .with_beta1(b1)
            .with_lr(0.002);
        let adam = OptimizerConfig::new(Algorithm::Adamw)
            .with_beta1(b1)
            .with_lr(0.002 / (1.0 - b1))
            .with_bias_correction(false);
        let a = run(simp, 200);
        let b = run(adam, 200);
        for (x, y) in a.query_point().iter().zip(b.query_point().iter()) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn scheduled_beta3_is_read_per_step() {
        let mut cfg = OptimizerConfig::new(Algorithm::Ademamix).with_alpha(5.0);
        cfg.beta3 = Some(MomentumSchedule::OneMinusKOverT { k: 1.0 });
        // beta3(1) = 0 so m2 equals g after the first step.
        let opt = run(cfg, 1);
        let m2 = opt.state().buffers.m2.as_ref().unwrap();
        assert_eq!(m2.as_slice(), stream(1)[0].as_slice());
    }
}
