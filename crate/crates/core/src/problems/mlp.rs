use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{NoiseKey, Stream};

/// Two-layer tanh perceptron regressing a smooth synthetic target.
///
/// Parameter layout: `W1 (hidden x input, row-major) | b1 (hidden) | W2 (hidden) | b2`.
/// Loss is the mean of `1/2 (f(x_i) - y_i)^2`; gradients are hand-written backprop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    samples: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Mlp {
    pub fn generate(input: usize, hidden: usize, samples: usize, data_seed: u64) -> Result<Self> {
        if input == 0 {
            return Err(Error::invalid("problem.input_dim", "must be >= 1"));
        }
        if hidden == 0 {
            return Err(Error::invalid("problem.hidden", "must be >= 1"));
        }
        if samples == 0 {
            return Err(Error::invalid("problem.samples", "must be >= 1"));
        }
        let mut rng = NoiseKey::new(data_seed, 0, Stream::Data).rng();
        let inputs: Vec<f64> = (0..samples * input)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let targets = inputs
            .chunks_exact(input)
            .map(|x| (2.0 * x[0]).sin() + 0.5 * (3.0 * x[input - 1]).cos())
            .collect();
        Ok(Self {
            input,
            hidden,
            samples,
            inputs,
            targets,
        })
    }

    pub fn dim(&self) -> usize {
        self.hidden * self.input + 2 * self.hidden + 1
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Scaled Gaussian initialisation (`1/sqrt(fan_in)`), biases zero.
    pub(crate) fn initial_point(&self, seed: u64) -> Vec<f64> {
        let mut rng = NoiseKey::new(seed, 0, Stream::Init).rng();
        let (h, n) = (self.hidden, self.input);
        let mut w = vec![0.0; self.dim()];
        let s1 = 1.0 / (n as f64).sqrt();
        for v in &mut w[..h * n] {
            *v = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        let s2 = 1.0 / (h as f64).sqrt();
        for v in &mut w[h * n + h..h * n + 2 * h] {
            *v = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        w
    }

    pub(crate) fn batch_loss_gradient(
        &self,
        w: &[f64],
        batch: &[usize],
        mut out: Option<&mut [f64]>,
    ) -> f64 {
        let (h, n) = (self.hidden, self.input);
        let (w1, rest) = w.split_at(h * n);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let b2 = b2[0];
        if let Some(o) = out.as_deref_mut() {
            o.fill(0.0);
        }
        let mut act = vec![0.0; h];
        let mut loss = 0.0;
        for &i in batch {
            let x = &self.inputs[i * n..(i + 1) * n];
            for j in 0..h {
                let pre: f64 = w1[j * n..(j + 1) * n]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + b1[j];
                act[j] = pre.tanh();
            }
            let pred: f64 = act.iter().zip(w2).map(|(a, b)| a * b).sum::<f64>() + b2;
            let err = pred - self.targets[i];
            loss += 0.5 * err * err;
            if let Some(o) = out.as_deref_mut() {
                let (g1, rest) = o.split_at_mut(h * n);
                let (gb1, rest) = rest.split_at_mut(h);
                let (g2, gb2) = rest.split_at_mut(h);
                gb2[0] += err;
                for j in 0..h {
                    g2[j] += err * act[j];
                    let delta = err * w2[j] * (1.0 - act[j] * act[j]);
                    gb1[j] += delta;
                    for (g, xk) in g1[j * n..(j + 1) * n].iter_mut().zip(x) {
                        *g += delta * xk;
                    }
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        if let Some(o) = out {
            o.iter_mut().for_each(|v| *v *= scale);
        }
        loss * scale
    }

    pub(crate) fn all_indices(&self) -> Vec<usize> {
        (0..self.samples).collect()
    }
}
