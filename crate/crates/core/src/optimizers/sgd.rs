use super::{buf, OptimizerConfig, OptimizerState, StepCoefficients};
use crate::error::Result;

/// One step of the general accelerated form:
/// `m <- beta m + g;  w <- w - eta m - alpha g`.
pub fn accel_sgd_update(w: &mut [f64], m: &mut [f64], g: &[f64], beta: f64, eta: f64, alpha: f64) {
    for ((w, m), g) in w.iter_mut().zip(m.iter_mut()).zip(g) {
        *m = beta * *m + g;
        *w -= eta * *m + alpha * g;
    }
}

fn decay(w: &mut [f64], lr: f64, weight_decay: f64) {
    if weight_decay != 0.0 {
        let f = 1.0 - lr * weight_decay;
        w.iter_mut().for_each(|w| *w *= f);
    }
}

/// Heavy-ball momentum, `m <- beta m + g; w <- w - eta m`.
pub fn step_sgd_momentum(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    let lr = cfg.lr.at(t)?;
    let beta = cfg.beta1.at(t)?;
    let w = state.w.as_mut_slice();
    decay(w, lr, cfg.weight_decay);
    accel_sgd_update(w, buf(&mut state.buffers.m, "m"), g, beta, lr, 0.0);
    Ok(StepCoefficients { lr, momentum: beta })
}

/// General accelerated SGD with `(beta1, lr, alpha)` as `(beta_a, eta_a, alpha_a)`.
pub fn step_accel_sgd(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    let eta = cfg.lr.at(t)?;
    let beta = cfg.beta1.at(t)?;
    let alpha = cfg.alpha.at(t)?;
    let w = state.w.as_mut_slice();
    decay(w, eta, cfg.weight_decay);
    accel_sgd_update(w, buf(&mut state.buffers.m, "m"), g, beta, eta, alpha);
    Ok(StepCoefficients {
        lr: eta,
        momentum: beta,
    })
}

#[cfg(test)]
mod tests {
    use crate::optimizers::{Algorithm, Optimizer, OptimizerConfig};
    use crate::schedules::MomentumSchedule;
    use crate::ParamVector;

    fn run(
        cfg: OptimizerConfig,
        w0: &[f64],
        grad: impl Fn(&[f64]) -> Vec<f64>,
        steps: usize,
    ) -> Vec<Vec<f64>> {
        let mut opt = Optimizer::new(cfg, ParamVector::new(w0.to_vec()).unwrap()).unwrap();
        let mut out = vec![w0.to_vec()];
        for _ in 0..steps {
            let g = grad(opt.query_point());
            opt.step(&g).unwrap();
            out.push(opt.query_point().to_vec());
        }
        out
    }

    #[test]
    fn zero_alpha_is_momentum_sgd() {
        let grad = |w: &[f64]| vec![2.0 * w[0], 0.5 * w[1]];
        let accel = OptimizerConfig::new(Algorithm::AccelSgd)
            .with_lr(0.1)
            .with_beta1(0.8)
            .with_alpha(0.0);
        let mom = OptimizerConfig::new(Algorithm::SgdMomentum)
            .with_lr(0.1)
            .with_beta1(0.8);
        assert_eq!(
            run(accel, &[1.0, -1.0], grad, 50),
            run(mom, &[1.0, -1.0], grad, 50)
        );
    }

    #[test]
    fn no_momentum_no_alpha_is_plain_sgd() {
        let cfg = OptimizerConfig::new(Algorithm::AccelSgd)
            .with_lr(0.25)
            .with_beta1(0.0)
            .with_alpha(0.0);
        let mut opt = Optimizer::new(cfg, ParamVector::new(vec![2.0, -4.0]).unwrap()).unwrap();
        opt.step(&[1.0, -2.0]).unwrap();
        assert_eq!(opt.query_point().as_slice(), &[1.75, -3.5]);
    }

    #[test]
    fn matches_scalar_reference_loop() {
        let h = [1.5, 0.2];
        let (beta, eta, alpha) = (0.9, 0.05, 0.3);
        let cfg = OptimizerConfig::new(Algorithm::AccelSgd)
            .with_lr(eta)
            .with_beta1(beta)
            .with_alpha(alpha);
        let traj = run(cfg, &[1.0, 3.0], |w| vec![h[0] * w[0], h[1] * w[1]], 100);

        // Independent per-coordinate loop.
        for (i, &hi) in h.iter().enumerate() {
            let (mut w, mut m) = ([1.0, 3.0][i], 0.0);
            for step in traj.iter().skip(1) {
                let g = hi * w;
                m = beta * m + g;
                w = w - eta * m - alpha * g;
                assert!((step[i] - w).abs() <= 1e-15 * w.abs().max(1.0));
            }
        }
    }

    #[test]
    fn scheduled_momentum_is_applied_per_step() {
        let mut cfg = OptimizerConfig::new(Algorithm::SgdMomentum).with_lr(1.0);
        cfg.beta1 = MomentumSchedule::OneMinusKOverT { k: 1.0 };
        let mut opt = Optimizer::new(cfg, ParamVector::new(vec![0.0]).unwrap()).unwrap();
        let r1 = opt.step(&[1.0]).unwrap();
        let r2 = opt.step(&[1.0]).unwrap();
        assert_eq!((r1.momentum, r2.momentum), (0.0, 0.5));
        // m1 = 1, m2 = 0.5 * 1 + 1 = 1.5, w = -(1 + 1.5).
        assert_eq!(opt.query_point().as_slice(), &[-2.5]);
    }
}
