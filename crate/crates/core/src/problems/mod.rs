//! Gradient oracles used as test beds for every optimizer.
//!
//! A [`Problem`] couples an objective with a noise model. Gradients are
//! analytic; stochasticity comes only from the noise model and is keyed by a
//! [`NoiseKey`], so `sample_gradient` is a pure function of its inputs.

mod least_squares;
mod logistic;
mod mlp;
mod quadratic;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use least_squares::LeastSquares;
pub use logistic::Logistic;
pub use mlp::Mlp;
pub use quadratic::Quadratic;

use crate::error::{Error, Result};
use crate::rng::NoiseKey;
use crate::vector::{first_non_finite, ParamVector};

/// How a stochastic gradient deviates from the exact one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum NoiseModel {
    None,
    /// Uniform sampling with replacement. A batch equal to the dataset size
    /// uses every example once, which makes the gradient exact.
    Minibatch {
        batch_size: usize,
    },
    /// Exact gradient plus i.i.d. `N(0, sigma^2)` per coordinate.
    Gaussian {
        sigma: f64,
    },
}

/// Serializable description of a problem; data are generated from `data_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    Quadratic {
        hessian: Vec<f64>,
        center: Vec<f64>,
    },
    NoisyLeastSquares {
        dim: usize,
        samples: usize,
        spectrum_decay: f64,
        label_noise: f64,
    },
    Logistic {
        dim: usize,
        samples: usize,
        l2: f64,
    },
    Mlp {
        input_dim: usize,
        hidden: usize,
        samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub family: Family,
    pub noise: NoiseModel,
    /// Seed for the synthetic dataset; `None` derives it from the run seed.
    pub data_seed: Option<u64>,
}

impl ProblemSpec {
    pub fn build(&self, run_seed: u64) -> Result<Problem> {
        let data_seed = self.data_seed.unwrap_or(run_seed);
        let objective = match &self.family {
            Family::Quadratic { hessian, center } => {
                Objective::Quadratic(Quadratic::new(hessian.clone(), center.clone())?)
            }
            Family::NoisyLeastSquares {
                dim,
                samples,
                spectrum_decay,
                label_noise,
            } => Objective::LeastSquares(LeastSquares::generate(
                *dim,
                *samples,
                *spectrum_decay,
                *label_noise,
                data_seed,
            )?),
            Family::Logistic { dim, samples, l2 } => {
                Objective::Logistic(Logistic::generate(*dim, *samples, *l2, data_seed)?)
            }
            Family::Mlp {
                input_dim,
                hidden,
                samples,
            } => Objective::Mlp(Mlp::generate(*input_dim, *hidden, *samples, data_seed)?),
        };
        Problem::new(objective, self.noise)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic(Quadratic),
    LeastSquares(LeastSquares),
    Logistic(Logistic),
    Mlp(Mlp),
}

impl Objective {
    fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.dim(),
            Objective::LeastSquares(p) => p.dim(),
            Objective::Logistic(p) => p.dim(),
            Objective::Mlp(p) => p.dim(),
        }
    }

    fn samples(&self) -> Option<usize> {
        match self {
            Objective::Quadratic(_) => None,
            Objective::LeastSquares(p) => Some(p.samples()),
            Objective::Logistic(p) => Some(p.samples()),
            Objective::Mlp(p) => Some(p.samples()),
        }
    }

    fn loss(&self, w: &[f64]) -> f64 {
        match self {
            Objective::Quadratic(q) => q.loss(w),
            Objective::LeastSquares(p) => p.loss(w),
            Objective::Logistic(p) => p.batch_loss_gradient(w, &p.all_indices(), None),
            Objective::Mlp(p) => p.batch_loss_gradient(w, &p.all_indices(), None),
        }
    }

    fn gradient(&self, w: &[f64], out: &mut [f64]) {
        match self {
            Objective::Quadratic(q) => q.gradient(w, out),
            Objective::LeastSquares(p) => p.gradient(w, out),
            Objective::Logistic(p) => {
                p.batch_loss_gradient(w, &p.all_indices(), Some(out));
            }
            Objective::Mlp(p) => {
                p.batch_loss_gradient(w, &p.all_indices(), Some(out));
            }
        }
    }

    fn loss_gradient(&self, w: &[f64], out: &mut [f64]) -> f64 {
        match self {
            Objective::Quadratic(q) => {
                q.gradient(w, out);
                q.loss(w)
            }
            Objective::LeastSquares(p) => p.loss_gradient(w, out),
            Objective::Logistic(p) => p.batch_loss_gradient(w, &p.all_indices(), Some(out)),
            Objective::Mlp(p) => p.batch_loss_gradient(w, &p.all_indices(), Some(out)),
        }
    }

    fn batch(&self, w: &[f64], batch: &[usize], out: Option<&mut [f64]>) -> f64 {
        match self {
            Objective::Quadratic(q) => {
                if let Some(out) = out {
                    q.gradient(w, out);
                }
                q.loss(w)
            }
            Objective::LeastSquares(p) => p.batch_loss_gradient(w, batch, out),
            Objective::Logistic(p) => p.batch_loss_gradient(w, batch, out),
            Objective::Mlp(p) => p.batch_loss_gradient(w, batch, out),
        }
    }
}

/// One stochastic gradient query.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSample {
    pub gradient: ParamVector,
    pub loss: f64,
    /// Sampled example indices; empty when the gradient is exact or noise is additive.
    pub batch: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    objective: Objective,
    noise: NoiseModel,
}

impl Problem {
    pub fn new(objective: Objective, noise: NoiseModel) -> Result<Self> {
        match noise {
            NoiseModel::None => {}
            NoiseModel::Gaussian { sigma } => {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::invalid("problem.sigma", "must be finite and >= 0"));
                }
            }
            NoiseModel::Minibatch { batch_size } => {
                let Some(n) = objective.samples() else {
                    return Err(Error::invalid(
                        "problem.noise",
                        "minibatch noise requires a dataset-backed problem",
                    ));
                };
                if batch_size == 0 || batch_size > n {
                    return Err(Error::invalid(
                        "problem.batch_size",
                        format!("must lie in 1..={n} (got {batch_size})"),
                    ));
                }
            }
        }
        Ok(Self { objective, noise })
    }

    pub fn quadratic(hessian: Vec<f64>, center: Vec<f64>, noise: NoiseModel) -> Result<Self> {
        Self::new(
            Objective::Quadratic(Quadratic::new(hessian, center)?),
            noise,
        )
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn samples(&self) -> Option<usize> {
        self.objective.samples()
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(self.objective.clone(), noise)
    }

    /// Starting point: zeros, except the MLP which needs symmetry breaking.
    pub fn initial_point(&self, seed: u64) -> ParamVector {
        match &self.objective {
            Objective::Mlp(m) => ParamVector::from_vec_unchecked(m.initial_point(seed)),
            _ => ParamVector::zeros(self.dim()),
        }
    }

    /// Exact population / full-batch loss.
    pub fn full_loss(&self, w: &ParamVector) -> Result<f64> {
        w.check_dim(self.dim())?;
        Ok(self.objective.loss(w))
    }

    pub fn full_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        w.check_dim(self.dim())?;
        let mut out = vec![0.0; self.dim()];
        self.objective.gradient(w, &mut out);
        finite_or_err(out, 0)
    }

    /// Mean loss over `batch`; the full loss when `batch` is empty.
    pub fn batch_loss(&self, w: &ParamVector, batch: &[usize]) -> Result<f64> {
        w.check_dim(self.dim())?;
        if batch.is_empty() {
            return Ok(self.objective.loss(w));
        }
        self.check_indices(batch)?;
        Ok(self.objective.batch(w, batch, None))
    }

    /// Mean gradient over an explicit index set.
    pub fn batch_gradient(&self, w: &ParamVector, batch: &[usize]) -> Result<GradSample> {
        w.check_dim(self.dim())?;
        if batch.is_empty() {
            return Err(Error::invalid("batch", "must contain at least one index"));
        }
        self.check_indices(batch)?;
        let mut out = vec![0.0; self.dim()];
        let loss = self.objective.batch(w, batch, Some(&mut out));
        Ok(GradSample {
            gradient: finite_or_err(out, 0)?,
            loss,
            batch: batch.to_vec(),
        })
    }

    fn check_indices(&self, batch: &[usize]) -> Result<()> {
        let n = self.samples().unwrap_or(0);
        match batch.iter().find(|&&i| i >= n) {
            Some(i) => Err(Error::invalid(
                "batch",
                format!("index {i} out of range 0..{n}"),
            )),
            None => Ok(()),
        }
    }

    /// Stochastic gradient under the noise model; pure in `(self, w, key)`.
    pub fn sample_gradient(&self, w: &ParamVector, key: NoiseKey) -> Result<GradSample> {
        w.check_dim(self.dim())?;
        let d = self.dim();
        match self.noise {
            NoiseModel::None => self.exact_sample(w, key.step),
            NoiseModel::Gaussian { sigma } => {
                let mut sample = self.exact_sample(w, key.step)?;
                let mut rng = key.rng();
                let mut noisy = sample.gradient.into_vec();
                for g in &mut noisy {
                    *g += sigma * rng.sample::<f64, _>(StandardNormal);
                }
                sample.gradient = finite_or_err(noisy, key.step)?;
                Ok(sample)
            }
            NoiseModel::Minibatch { batch_size } => {
                let n = self.samples().expect("validated at construction");
                if batch_size == n {
                    return self.exact_sample(w, key.step);
                }
                let mut rng = key.rng();
                let batch: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..n)).collect();
                let mut out = vec![0.0; d];
                let loss = self.objective.batch(w, &batch, Some(&mut out));
                Ok(GradSample {
                    gradient: finite_or_err(out, key.step)?,
                    loss,
                    batch,
                })
            }
        }
    }

    fn exact_sample(&self, w: &ParamVector, step: u64) -> Result<GradSample> {
        let mut out = vec![0.0; self.dim()];
        let loss = self.objective.loss_gradient(w, &mut out);
        Ok(GradSample {
            gradient: finite_or_err(out, step)?,
            loss,
            batch: Vec::new(),
        })
    }

    /// Max over coordinates of `|analytic - central difference| / (|analytic| + h)`.
    pub fn finite_diff_check(&self, w: &ParamVector, h: f64) -> Result<f64> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("h", "must be finite and > 0"));
        }
        if self.noise != NoiseModel::None {
            return Err(Error::invalid(
                "problem.noise",
                "finite-difference check requires noise model `none`",
            ));
        }
        let analytic = self.full_gradient(w)?;
        let mut probe = w.as_slice().to_vec();
        let mut worst = 0.0_f64;
        for i in 0..probe.len() {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = self.objective.loss(&probe);
            probe[i] = orig - h;
            let minus = self.objective.loss(&probe);
            probe[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max((analytic[i] - numeric).abs() / (analytic[i].abs() + h));
        }
        Ok(worst)
    }

    /// `(trace, largest eigenvalue)` of the full-batch Hessian, for problems
    /// where it is constant. Used to scale learning-rate grids.
    pub fn curvature(&self) -> Result<(f64, f64)> {
        match &self.objective {
            Objective::Quadratic(q) => Ok((q.trace(), q.max_eigenvalue())),
            Objective::LeastSquares(p) => Ok((p.trace(), p.max_eigenvalue())),
            _ => Err(Error::invalid(
                "problem.kind",
                "curvature scale is only defined for quadratic and least-squares problems",
            )),
        }
    }
}

fn finite_or_err(values: Vec<f64>, step: u64) -> Result<ParamVector> {
    match first_non_finite(&values) {
        Some(index) => Err(Error::NonFinite {
            what: "gradient",
            step,
            index,
        }),
        None => Ok(ParamVector::from_vec_unchecked(values)),
    }
}
