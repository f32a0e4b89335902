//! Gauss-Hermite quadrature for 1-D Gaussian expectations.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Nodes and weights of the n-point (physicists') Gauss-Hermite rule,
/// computed by eigendecomposition of the Jacobi matrix (Golub-Welsch).
/// Weights sum to sqrt(pi).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Config(format!(
                "quadrature needs at least 3 nodes, got {n}"
            )));
        }
        let mut jacobi = DMatrix::zeros(n, n);
        for k in 1..n {
            let off = (k as f64 / 2.0).sqrt();
            jacobi[(k, k - 1)] = off;
            jacobi[(k - 1, k)] = off;
        }
        let eig = SymmetricEigen::new(jacobi);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let node = eig.eigenvalues[i];
                let first = eig.eigenvectors[(0, i)];
                (node, sqrt_pi * first * first)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(a)]` for `a ~ N(mu, sigma^2)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, mu: f64, sigma: f64, f: F) -> f64 {
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let scale = std::f64::consts::SQRT_2 * sigma;
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mu + scale * x);
        }
        acc * inv_sqrt_pi
    }
}
