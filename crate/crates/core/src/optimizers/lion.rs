use super::{buf, OptimizerConfig, OptimizerState, StepCoefficients};
use crate::error::Result;

/// Sign with `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `m' = b1 m + (1-b1) g;  w <- w - lr sign(m') - lr wd w;  m <- b2 m + (1-b2) g`.
pub fn step_lion(
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    g: &[f64],
    t: u64,
) -> Result<StepCoefficients> {
    let lr = cfg.lr.at(t)?;
    let b1 = cfg.beta1.at(t)?;
    let b2 = cfg.beta2;
    let m = buf(&mut state.buffers.m, "m");
    for ((w, m), g) in state.w.as_mut_slice().iter_mut().zip(m.iter_mut()).zip(g) {
        let interp = b1 * *m + (1.0 - b1) * g;
        *w -= lr * (sign(interp) + cfg.weight_decay * *w);
        *m = b2 * *m + (1.0 - b2) * g;
    }
    Ok(StepCoefficients { lr, momentum: b1 })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use crate::optimizers::{Algorithm, Optimizer, OptimizerConfig};
    use crate::ParamVector;

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut opt = Optimizer::new(
            OptimizerConfig::new(Algorithm::Lion).with_lr(0.1),
            ParamVector::new(vec![1.0, -2.0]).unwrap(),
        )
        .unwrap();
        for _ in 0..10 {
            opt.step(&[0.0, 0.0]).unwrap();
        }
        assert_eq!(opt.query_point().as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn equal_betas_store_the_interpolation() {
        let cfg = OptimizerConfig::new(Algorithm::Lion)
            .with_beta1(0.7)
            .with_beta2(0.7);
        let mut opt = Optimizer::new(cfg, ParamVector::new(vec![0.0]).unwrap()).unwrap();
        opt.step(&[2.0]).unwrap();
        opt.step(&[-1.0]).unwrap();
        // m' at step 2 = 0.7 * 0.6 - 0.3 = 0.12 = stored m.
        let m = opt.state().buffers.m.as_ref().unwrap()[0];
        assert!((m - (0.7 * 0.6 - 0.3)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn displacement_bounded_by_lr(grads in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..30),
                                      lr in 1e-4f64..1.0, b1 in 0.0f64..0.99, b2 in 0.0f64..0.999) {
            let cfg = OptimizerConfig::new(Algorithm::Lion).with_lr(lr).with_beta1(b1).with_beta2(b2);
            let mut opt = Optimizer::new(cfg, ParamVector::zeros(3)).unwrap();
            for g in grads {
                let before = opt.query_point().clone();
                opt.step(&g).unwrap();
                for (a, b) in before.iter().zip(opt.query_point().iter()) {
                    let d = (b - a).abs();
                    prop_assert!(d <= lr * (1.0 + 1e-12));
                    prop_assert!(d == 0.0 || (d - lr).abs() <= 1e-12 * lr.max(a.abs()));
                }
            }
        }
    }
}
