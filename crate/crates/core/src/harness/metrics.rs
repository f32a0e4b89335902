//! Terminal test metrics for classification runs.

use nalgebra::DVector;

use crate::data::DesignMatrix;
use crate::error::{Error, Result};

/// Test negative log-likelihood (sum and per-example mean) and accuracy of
/// the plug-in linear classifier at the variational mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestMetrics {
    pub nll_sum: f64,
    pub nll_mean: f64,
    pub accuracy: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `nll = sum_i softplus(-y_i theta^T x_i)`; accuracy counts
/// `sign(theta^T x_i) == y_i`, with a zero score classified as +1.
pub fn compute_test_metrics(theta_hat: &DVector<f64>, test: &DesignMatrix) -> Result<TestMetrics> {
    if test.cols() != theta_hat.len() {
        return Err(Error::Dimension(format!(
            "estimate has dimension {} but data has {}",
            theta_hat.len(),
            test.cols()
        )));
    }
    if test.rows() == 0 {
        return Err(Error::Config("test set is empty".into()));
    }
    let mut nll_sum = 0.0;
    let mut correct = 0usize;
    for i in 0..test.rows() {
        let y = test.labels()[i];
        let score = test.dot_row(i, theta_hat);
        nll_sum += softplus(-y * score);
        let predicted = if score >= 0.0 { 1.0 } else { -1.0 };
        if predicted == y {
            correct += 1;
        }
    }
    let n = test.rows() as f64;
    Ok(TestMetrics {
        nll_sum,
        nll_mean: nll_sum / n,
        accuracy: correct as f64 / n,
    })
}
