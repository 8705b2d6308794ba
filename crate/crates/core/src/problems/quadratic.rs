use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `f(w) = 1/2 * sum_i h_i (w_i - c_i)^2` with a diagonal PSD Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    hessian: Vec<f64>,
    center: Vec<f64>,
}

impl Quadratic {
    pub fn new(hessian: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        if hessian.is_empty() {
            return Err(Error::invalid("problem.hessian", "must be non-empty"));
        }
        if let Some(h) = hessian.iter().find(|h| !(h.is_finite() && **h >= 0.0)) {
            return Err(Error::invalid(
                "problem.hessian",
                format!("diagonal entries must be finite and >= 0 (got {h})"),
            ));
        }
        if center.len() != hessian.len() {
            return Err(Error::DimensionMismatch {
                expected: hessian.len(),
                found: center.len(),
            });
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("problem.center", "entries must be finite"));
        }
        Ok(Self { hessian, center })
    }

    pub fn dim(&self) -> usize {
        self.hessian.len()
    }

    pub fn hessian(&self) -> &[f64] {
        &self.hessian
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub(crate) fn loss(&self, w: &[f64]) -> f64 {
        0.5 * w
            .iter()
            .zip(&self.center)
            .zip(&self.hessian)
            .map(|((w, c), h)| h * (w - c) * (w - c))
            .sum::<f64>()
    }

    pub(crate) fn gradient(&self, w: &[f64], out: &mut [f64]) {
        for ((o, (w, c)), h) in out
            .iter_mut()
            .zip(w.iter().zip(&self.center))
            .zip(&self.hessian)
        {
            *o = h * (w - c);
        }
    }

    pub(crate) fn trace(&self) -> f64 {
        self.hessian.iter().sum()
    }

    pub(crate) fn max_eigenvalue(&self) -> f64 {
        self.hessian.iter().cloned().fold(0.0, f64::max)
    }
}
