//! Smooth loss terms: Gaussian `||y - eta||^2 / 2n` and the mean binomial
//! negative log-likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Family, GroupedDataset};

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossFunction {
    pub family: Family,
}

impl LossFunction {
    pub fn new(family: Family) -> Self {
        Self { family }
    }

    /// Loss as a function of the linear predictor.
    pub fn value_eta(&self, eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let n = y.len() as f64;
        match self.family {
            Family::Gaussian => (y - eta).norm_squared() / (2.0 * n),
            Family::Binomial => {
                eta.iter()
                    .zip(y.iter())
                    .map(|(&e, &yi)| softplus(e) - yi * e)
                    .sum::<f64>()
                    / n
            }
        }
    }

    /// Derivative of the loss with respect to each linear-predictor entry.
    pub fn eta_gradient(&self, eta: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = y.len() as f64;
        match self.family {
            Family::Gaussian => (eta - y) / n,
            Family::Binomial => {
                DVector::from_iterator(y.len(), eta.iter().zip(y.iter()).map(|(&e, &yi)| (sigmoid(e) - yi) / n))
            }
        }
    }

    pub fn value(&self, x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, intercept: f64) -> f64 {
        self.value_eta(&linear_predictor(x, b, intercept), y)
    }

    /// Gradient with respect to `b` and to the intercept.
    pub fn gradient(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        b: &DVector<f64>,
        intercept: f64,
    ) -> (DVector<f64>, f64) {
        let r = self.eta_gradient(&linear_predictor(x, b, intercept), y);
        (x.tr_mul(&r), r.sum())
    }

    pub fn value_on(&self, data: &GroupedDataset, b: &DVector<f64>, intercept: f64) -> f64 {
        self.value(data.x(), data.y(), b, intercept)
    }

    pub fn gradient_on(&self, data: &GroupedDataset, b: &DVector<f64>, intercept: f64) -> (DVector<f64>, f64) {
        self.gradient(data.x(), data.y(), b, intercept)
    }
}

pub fn linear_predictor(x: &DMatrix<f64>, b: &DVector<f64>, intercept: f64) -> DVector<f64> {
    let mut eta = x * b;
    eta.add_scalar_mut(intercept);
    eta
}
