use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{NoiseKey, Stream};
use crate::vector::dot;

/// L2-regularised logistic regression on Gaussian features.
///
/// Labels in {-1, +1} are drawn from the logistic model of a planted vector.
/// Loss: `mean_i softplus(-y_i x_i . w) + l2/2 ||w||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    dim: usize,
    samples: usize,
    l2: f64,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Logistic {
    pub fn generate(dim: usize, samples: usize, l2: f64, data_seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("problem.dim", "must be >= 1"));
        }
        if samples == 0 {
            return Err(Error::invalid("problem.samples", "must be >= 1"));
        }
        if !(l2.is_finite() && l2 >= 0.0) {
            return Err(Error::invalid("problem.l2", "must be finite and >= 0"));
        }
        let mut rng = NoiseKey::new(data_seed, 0, Stream::Data).rng();
        let scale = 2.0 / (dim as f64).sqrt();
        let planted: Vec<f64> = (0..dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut features = Vec::with_capacity(samples * dim);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let start = features.len();
            features.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let p = sigmoid(dot(&features[start..], &planted));
            labels.push(if rng.random::<f64>() < p { 1.0 } else { -1.0 });
        }
        Ok(Self {
            dim,
            samples,
            l2,
            features,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn batch_loss_gradient(
        &self,
        w: &[f64],
        batch: &[usize],
        mut out: Option<&mut [f64]>,
    ) -> f64 {
        if let Some(o) = out.as_deref_mut() {
            o.fill(0.0);
        }
        let mut loss = 0.0;
        for &i in batch {
            let row = self.row(i);
            let margin = self.labels[i] * dot(row, w);
            loss += softplus(-margin);
            if let Some(o) = out.as_deref_mut() {
                let coeff = -self.labels[i] * sigmoid(-margin);
                for (o, x) in o.iter_mut().zip(row) {
                    *o += coeff * x;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        if let Some(o) = out {
            for (o, w) in o.iter_mut().zip(w) {
                *o = *o * scale + self.l2 * w;
            }
        }
        loss * scale + 0.5 * self.l2 * dot(w, w)
    }

    pub(crate) fn all_indices(&self) -> Vec<usize> {
        (0..self.samples).collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
