use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{NoiseKey, Stream};
use crate::vector::dot;

/// Linear regression with a Gaussian design and a planted weight vector.
///
/// Rows are drawn as `x_i ~ N(0, diag(lambda))` with `lambda_j` spaced
/// log-uniformly from 1 down to `10^-spectrum_decay`; targets are
/// `y_i = x_i . w* + label_noise * eps_i`. The loss is `1/(2n) ||Xw - y||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquares {
    dim: usize,
    samples: usize,
    design: Vec<f64>,
    targets: Vec<f64>,
    planted: Vec<f64>,
    gram: Vec<f64>,
    moment: Vec<f64>,
    /// `||y||^2 / (2n)`.
    offset: f64,
}

impl LeastSquares {
    pub fn generate(
        dim: usize,
        samples: usize,
        spectrum_decay: f64,
        label_noise: f64,
        data_seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("problem.dim", "must be >= 1"));
        }
        if samples == 0 {
            return Err(Error::invalid("problem.samples", "must be >= 1"));
        }
        if !(spectrum_decay.is_finite() && spectrum_decay >= 0.0) {
            return Err(Error::invalid(
                "problem.spectrum_decay",
                "must be finite and >= 0",
            ));
        }
        if !(label_noise.is_finite() && label_noise >= 0.0) {
            return Err(Error::invalid(
                "problem.label_noise",
                "must be finite and >= 0",
            ));
        }
        let scales: Vec<f64> = (0..dim)
            .map(|j| {
                let frac = if dim > 1 {
                    j as f64 / (dim - 1) as f64
                } else {
                    0.0
                };
                10f64.powf(-spectrum_decay * frac).sqrt()
            })
            .collect();
        let mut rng = NoiseKey::new(data_seed, 0, Stream::Data).rng();
        let planted: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut design = Vec::with_capacity(samples * dim);
        for _ in 0..samples {
            for s in &scales {
                design.push(s * rng.sample::<f64, _>(StandardNormal));
            }
        }
        let targets = design
            .chunks_exact(dim)
            .map(|row| dot(row, &planted) + label_noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self::from_data(dim, design, targets, planted))
    }

    fn from_data(dim: usize, design: Vec<f64>, targets: Vec<f64>, planted: Vec<f64>) -> Self {
        let samples = targets.len();
        let mut gram = vec![0.0; dim * dim];
        let mut moment = vec![0.0; dim];
        for (row, y) in design.chunks_exact(dim).zip(&targets) {
            for a in 0..dim {
                moment[a] += row[a] * y;
                let g = &mut gram[a * dim..(a + 1) * dim];
                for b in 0..dim {
                    g[b] += row[a] * row[b];
                }
            }
        }
        let scale = 1.0 / samples as f64;
        gram.iter_mut().for_each(|v| *v *= scale);
        moment.iter_mut().for_each(|v| *v *= scale);
        let offset = 0.5 * scale * dot(&targets, &targets);
        Self {
            dim,
            samples,
            design,
            targets,
            planted,
            gram,
            moment,
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn design(&self) -> &[f64] {
        &self.design
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn planted(&self) -> &[f64] {
        &self.planted
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn loss(&self, w: &[f64]) -> f64 {
        let sum: f64 = (0..self.samples)
            .map(|i| {
                let r = dot(self.row(i), w) - self.targets[i];
                r * r
            })
            .sum();
        0.5 * sum / self.samples as f64
    }

    /// Full gradient through the cached second-moment matrix: `G w - X^T y / n`.
    pub(crate) fn gradient(&self, w: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = dot(&self.gram[a * self.dim..(a + 1) * self.dim], w) - self.moment[a];
        }
    }

    /// Full gradient plus the loss recovered from it in O(d):
    /// `L = w.(G w - b)/2 - w.b/2 + ||y||^2/(2n)` with `b = X^T y / n`.
    pub(crate) fn loss_gradient(&self, w: &[f64], out: &mut [f64]) -> f64 {
        self.gradient(w, out);
        0.5 * (dot(w, out) - dot(w, &self.moment)) + self.offset
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
            let r = dot(row, w) - self.targets[i];
            loss += 0.5 * r * r;
            if let Some(o) = out.as_deref_mut() {
                for (o, x) in o.iter_mut().zip(row) {
                    *o += r * x;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        if let Some(o) = out {
            o.iter_mut().for_each(|v| *v *= scale);
        }
        loss * scale
    }

    pub(crate) fn trace(&self) -> f64 {
        (0..self.dim).map(|a| self.gram[a * self.dim + a]).sum()
    }

    /// Largest eigenvalue of the empirical second-moment matrix by power iteration.
    pub(crate) fn max_eigenvalue(&self) -> f64 {
        let d = self.dim;
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut next = vec![0.0; d];
        let mut lambda = 0.0;
        for _ in 0..500 {
            for (a, n) in next.iter_mut().enumerate() {
                *n = dot(&self.gram[a * d..(a + 1) * d], &v);
            }
            let norm = dot(&next, &next).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let updated = dot(&next, &v);
            next.iter_mut().for_each(|x| *x /= norm);
            std::mem::swap(&mut v, &mut next);
            if (updated - lambda).abs() <= 1e-12 * updated.abs() {
                return updated;
            }
            lambda = updated;
        }
        lambda
    }
}
