//! Expectation oracles: analytic moments for quadratic losses, Gauss-Hermite
//! quadrature for logistic losses, a seeded Monte-Carlo estimator, and the
//! bias-injection wrapper used for biased-oracle convergence studies.
//!
//! Every oracle returns the expected gradient `g` and expected Hessian `H`
//! of the loss under the current Gaussian. Dataset sums are accumulated in
//! ascending datapoint order so repeated runs are bit-identical.

mod quadrature;

pub use quadrature::GaussHermite;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::gaussian::{symmetrize, BiasTag, GaussianParams, MomentEstimates};

/// Loss families supported by the oracles.
#[derive(Debug, Clone)]
pub enum LossFamily {
    /// `l(theta) = 1/2 theta^T A theta - b^T theta + c` with `A` SPD.
    Quadratic {
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: f64,
    },
    /// l2-regularized logistic loss over a +/-1 labelled design matrix.
    Logistic { data: DesignMatrix, l2: f64 },
}

/// Full problem definition: loss, temperature, optional non-convex term.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub loss: LossFamily,
    pub gamma: f64,
    pub nonconvex_reg: bool,
}

impl ProblemSpec {
    pub fn quadratic(a: DMatrix<f64>, b: DVector<f64>, c: f64, gamma: f64) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "quadratic loss: A is {}x{}, b has length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        let a = symmetrize(&a);
        if a.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(
                "quadratic loss matrix A must be positive definite".into(),
            ));
        }
        if gamma <= 0.0 {
            return Err(Error::Config("temperature gamma must be positive".into()));
        }
        Ok(Self {
            loss: LossFamily::Quadratic { a, b, c },
            gamma,
            nonconvex_reg: false,
        })
    }

    pub fn logistic(data: DesignMatrix, l2: f64, gamma: f64) -> Result<Self> {
        if l2 < 0.0 {
            return Err(Error::Config("l2 strength must be non-negative".into()));
        }
        if gamma <= 0.0 {
            return Err(Error::Config("temperature gamma must be positive".into()));
        }
        if data.labels().iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Config("logistic labels must be +/-1".into()));
        }
        Ok(Self {
            loss: LossFamily::Logistic { data, l2 },
            gamma,
            nonconvex_reg: false,
        })
    }

    pub fn with_nonconvex_reg(mut self) -> Self {
        self.nonconvex_reg = true;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.loss {
            LossFamily::Quadratic { a, .. } => a.nrows(),
            LossFamily::Logistic { data, .. } => data.cols(),
        }
    }
}

/// How the dispatcher computes moments for families without an exact form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleMode {
    #[default]
    Deterministic,
    MonteCarlo,
}

/// Oracle knobs: quadrature resolution, Monte-Carlo sampling, and optional
/// additive bias used to study biased-oracle convergence.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub quadrature_nodes: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
    pub mode: OracleMode,
    pub bias_g: Option<DVector<f64>>,
    pub bias_h: Option<DMatrix<f64>>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            quadrature_nodes: 64,
            mc_samples: 1000,
            mc_seed: 0,
            mode: OracleMode::Deterministic,
            bias_g: None,
            bias_h: None,
        }
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

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Exact moments for the quadratic family: `g = A m - b`, `H = A`.
pub fn quadratic_moments(q: &GaussianParams, spec: &ProblemSpec) -> Result<MomentEstimates> {
    let LossFamily::Quadratic { a, b, .. } = &spec.loss else {
        return Err(Error::Config("quadratic_moments on non-quadratic loss".into()));
    };
    check_dims(q, spec)?;
    MomentEstimates::new(a * q.mean() - b, a.clone(), BiasTag::Exact)
}

/// Quadrature moments for the logistic family. The activation `a = theta^T x`
/// is Gaussian under `q`, so each datapoint reduces to a 1-D integral.
pub fn logistic_moments(
    q: &GaussianParams,
    spec: &ProblemSpec,
    cfg: &OracleConfig,
) -> Result<MomentEstimates> {
    let LossFamily::Logistic { data, l2 } = &spec.loss else {
        return Err(Error::Config("logistic_moments on non-logistic loss".into()));
    };
    check_dims(q, spec)?;
    let gh = GaussHermite::new(cfg.quadrature_nodes)?;
    let d = q.dim();
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..data.rows() {
        let y = data.labels()[i];
        let mu = data.dot_row(i, q.mean());
        // sigma^2 = x^T V x = ||C^T x||^2
        let ct_x = data.mat_t_row(i, q.chol());
        let sigma = ct_x.norm();
        let e_sig = gh.expect(mu, sigma, |a| sigmoid(-y * a));
        let e_dd = gh.expect(mu, sigma, |a| {
            let s = sigmoid(a);
            s * (1.0 - s)
        });
        let (idx, val) = data.row(i);
        for (&j, &xj) in idx.iter().zip(val) {
            grad[j] += -y * e_sig * xj;
            for (&k, &xk) in idx.iter().zip(val) {
                hess[(j, k)] += e_dd * xj * xk;
            }
        }
    }
    grad += *l2 * q.mean();
    for j in 0..d {
        hess[(j, j)] += *l2;
    }
    MomentEstimates::new(grad, hess, BiasTag::Quadrature)
}

/// `E_q[l(theta)]` for the active loss family, plus the non-convex
/// regularizer evaluated at the mean when enabled.
pub fn expected_loss(q: &GaussianParams, spec: &ProblemSpec, cfg: &OracleConfig) -> Result<f64> {
    check_dims(q, spec)?;
    let base = match &spec.loss {
        LossFamily::Quadratic { a, b, c } => {
            let m = q.mean();
            let v = q.covariance();
            let trace_av = (a * v).trace();
            0.5 * ((m.transpose() * a * m)[(0, 0)] + trace_av) - b.dot(m) + c
        }
        LossFamily::Logistic { data, l2 } => {
            let gh = GaussHermite::new(cfg.quadrature_nodes)?;
            let mut acc = 0.0;
            for i in 0..data.rows() {
                let y = data.labels()[i];
                let mu = data.dot_row(i, q.mean());
                let sigma = data.mat_t_row(i, q.chol()).norm();
                acc += gh.expect(mu, sigma, |a| softplus(-y * a));
            }
            let trace_v = q.chol().iter().map(|x| x * x).sum::<f64>();
            acc + 0.5 * l2 * (q.mean().norm_squared() + trace_v)
        }
    };
    let reg = if spec.nonconvex_reg {
        q.mean().iter().map(|&m| m * m / (1.0 + m * m)).sum::<f64>()
    } else {
        0.0
    };
    Ok(base + reg)
}

/// The minimized objective: expected loss plus `gamma` times the negative
/// entropy (the negative ELBO up to a constant).
pub fn elbo(q: &GaussianParams, spec: &ProblemSpec, cfg: &OracleConfig) -> Result<f64> {
    Ok(expected_loss(q, spec, cfg)? + spec.gamma * q.neg_entropy())
}

/// Monte-Carlo moments: pointwise gradient/Hessian averaged over draws
/// `theta = m + C z`. Deterministic given (seed, sample count).
pub fn mc_moments(
    q: &GaussianParams,
    spec: &ProblemSpec,
    cfg: &OracleConfig,
) -> Result<MomentEstimates> {
    check_dims(q, spec)?;
    if cfg.mc_samples == 0 {
        return Err(Error::Config("mc_samples must be at least 1".into()));
    }
    let d = q.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.mc_seed);
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for _ in 0..cfg.mc_samples {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = q.mean() + q.chol() * z;
        match &spec.loss {
            LossFamily::Quadratic { a, b, .. } => {
                grad += a * &theta - b;
                hess += a;
            }
            LossFamily::Logistic { data, l2 } => {
                for i in 0..data.rows() {
                    let y = data.labels()[i];
                    let act = data.dot_row(i, &theta);
                    let s_neg = sigmoid(-y * act);
                    let s = sigmoid(act);
                    let dd = s * (1.0 - s);
                    let (idx, val) = data.row(i);
                    for (&j, &xj) in idx.iter().zip(val) {
                        grad[j] += -y * s_neg * xj;
                        for (&k, &xk) in idx.iter().zip(val) {
                            hess[(j, k)] += dd * xj * xk;
                        }
                    }
                }
                grad += *l2 * &theta;
                for j in 0..d {
                    hess[(j, j)] += *l2;
                }
            }
        }
    }
    let scale = 1.0 / cfg.mc_samples as f64;
    MomentEstimates::new(grad * scale, hess * scale, BiasTag::MonteCarlo)
}

/// Add the configured constant bias to a moment estimate.
pub fn inject_bias(base: &MomentEstimates, cfg: &OracleConfig) -> Result<MomentEstimates> {
    let d = base.dim();
    let mut grad = base.grad.clone();
    let mut hess = base.hess.clone();
    if let Some(bg) = &cfg.bias_g {
        if bg.len() != d {
            return Err(Error::Dimension(format!(
                "bias_g has length {}, expected {d}",
                bg.len()
            )));
        }
        grad += bg;
    }
    if let Some(bh) = &cfg.bias_h {
        if bh.nrows() != d || bh.ncols() != d {
            return Err(Error::Dimension(format!(
                "bias_h is {}x{}, expected {d}x{d}",
                bh.nrows(),
                bh.ncols()
            )));
        }
        hess += bh;
    }
    MomentEstimates::new(grad, hess, BiasTag::Injected)
}

/// First and second derivatives of `sum_i m_i^2 / (1 + m_i^2)` at the mean.
pub fn nonconvex_reg_moments(mean: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = mean.len();
    let grad = DVector::from_fn(d, |i, _| {
        let m = mean[i];
        let denom = 1.0 + m * m;
        2.0 * m / (denom * denom)
    });
    let hess = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            let m = mean[i];
            let denom = 1.0 + m * m;
            (2.0 - 6.0 * m * m) / (denom * denom * denom)
        } else {
            0.0
        }
    });
    (grad, hess)
}

/// Dispatcher used by the optimizers: exact for quadratics, quadrature for
/// logistic (or Monte-Carlo when requested), then the non-convex term and
/// any configured bias.
pub fn moments(q: &GaussianParams, spec: &ProblemSpec, cfg: &OracleConfig) -> Result<MomentEstimates> {
    let mut est = match (&spec.loss, cfg.mode) {
        (LossFamily::Quadratic { .. }, OracleMode::Deterministic) => quadratic_moments(q, spec)?,
        (LossFamily::Logistic { .. }, OracleMode::Deterministic) => logistic_moments(q, spec, cfg)?,
        (_, OracleMode::MonteCarlo) => mc_moments(q, spec, cfg)?,
    };
    if spec.nonconvex_reg {
        let (g, h) = nonconvex_reg_moments(q.mean());
        est = MomentEstimates::new(est.grad + g, est.hess + h, est.bias_tag)?;
    }
    if cfg.bias_g.is_some() || cfg.bias_h.is_some() {
        est = inject_bias(&est, cfg)?;
    }
    Ok(est)
}

fn check_dims(q: &GaussianParams, spec: &ProblemSpec) -> Result<()> {
    if q.dim() != spec.dim() {
        return Err(Error::Dimension(format!(
            "state dimension {} does not match problem dimension {}",
            q.dim(),
            spec.dim()
        )));
    }
    Ok(())
}
