//! Verification machinery for the convergence theory: vectorization
//! operators (vec, vech, commutation, elimination), explicit Fisher
//! information assembly in (m, C), eigenvalue-bound and gradient-dominance
//! certificates, the Newton-versus-square-root order comparison, and
//! per-iteration operation counts.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{symmetrize, GaussianParams, MomentEstimates};
use crate::optim::{srvn_step, vn_step, Method, StepConfig, TheoryConstants};
use crate::oracle::{self, OracleConfig, ProblemSpec};

/// Column-major vectorization of a square matrix.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Column-major half-vectorization: stacks columns keeping only entries on
/// or below the diagonal.
pub fn vech(a: &DMatrix<f64>) -> DVector<f64> {
    let d = a.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in j..d {
            out.push(a[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Dense vectorization operators for dimension `d`.
#[derive(Debug, Clone)]
pub struct VectorizationOps {
    pub d: usize,
    /// Commutation matrix: `K vec(A) = vec(A^T)`.
    pub k: DMatrix<f64>,
    /// Elimination matrix: `L vec(A) = vech(A)`.
    pub l: DMatrix<f64>,
    /// Symmetrizer `(K + I) / 2`.
    pub n: DMatrix<f64>,
}

/// Build the dense operators. Capped at `d <= 64` because `K` and `N` are
/// `d^2 x d^2`.
pub fn build_vectorization(d: usize) -> Result<VectorizationOps> {
    if d == 0 || d > 64 {
        return Err(Error::Dimension(format!(
            "vectorization operators support 1 <= d <= 64, got {d}"
        )));
    }
    let d2 = d * d;
    let mut k = DMatrix::zeros(d2, d2);
    for i in 0..d {
        for j in 0..d {
            k[(i + j * d, j + i * d)] = 1.0;
        }
    }
    let half = d * (d + 1) / 2;
    let mut l = DMatrix::zeros(half, d2);
    let mut row = 0;
    for j in 0..d {
        for i in j..d {
            l[(row, i + j * d)] = 1.0;
            row += 1;
        }
    }
    let n = 0.5 * (&k + DMatrix::identity(d2, d2));
    Ok(VectorizationOps { d, k, l, n })
}

/// Inverse Fisher information blocks in (m, C). The mean block is the
/// covariance; the factor block lives in vech space.
#[derive(Debug, Clone)]
pub struct FimBlocks {
    pub f_m_inv: DMatrix<f64>,
    pub f_c_inv: DMatrix<f64>,
}

/// Assemble the closed-form inverse FIM:
/// `F_m^{-1} = C C^T`, `F_C^{-1} = (1/2) L (I (x) C) L^T (L N L^T)^{-1} L (I (x) C^T) L^T`.
pub fn assemble_fim_inverse(q: &GaussianParams, ops: &VectorizationOps) -> Result<FimBlocks> {
    let d = q.dim();
    if ops.d != d {
        return Err(Error::Dimension(format!(
            "operators built for d = {} but state has d = {d}",
            ops.d
        )));
    }
    let f_m_inv = q.covariance();
    let eye = DMatrix::identity(d, d);
    let i_kron_c = eye.kronecker(q.chol());
    let lnl = &ops.l * &ops.n * ops.l.transpose();
    let lnl_inv = symmetrize(&lnl)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("L N L^T failed Cholesky".into()))?
        .inverse();
    let left = &ops.l * &i_kron_c * ops.l.transpose();
    let f_c_inv = symmetrize(&(0.5 * &left * lnl_inv * left.transpose()));
    if f_c_inv.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(
            "factor block of the inverse FIM failed Cholesky".into(),
        ));
    }
    Ok(FimBlocks { f_m_inv, f_c_inv })
}

fn eig_range(a: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in eig.eigenvalues.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    (lo, hi)
}

/// Outcome of one eigenvalue-bound certificate.
#[derive(Debug, Clone)]
pub struct Lemma1Report {
    /// Whether the state satisfies the assumed covariance and factor bounds.
    pub in_hypothesis: bool,
    pub eig_min: f64,
    pub eig_max: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub violated: bool,
}

/// Check `lambda_g_min I <= F^{-1} <= lambda_g_max I` over both blocks.
/// States outside the hypothesis set are reported, not counted as failures.
pub fn check_lemma1(
    q: &GaussianParams,
    consts: &TheoryConstants,
    ops: &VectorizationOps,
) -> Result<Lemma1Report> {
    let tol = 1e-10;
    let (v_lo, _) = eig_range(&q.covariance());
    let c_frob = q.chol().norm();
    let in_hypothesis = v_lo >= consts.lambda_min - tol
        && c_frob >= consts.xi_l - tol
        && c_frob <= consts.xi_u + tol;
    let blocks = assemble_fim_inverse(q, ops)?;
    let (m_lo, m_hi) = eig_range(&blocks.f_m_inv);
    let (c_lo, c_hi) = eig_range(&blocks.f_c_inv);
    let eig_min = m_lo.min(c_lo);
    let eig_max = m_hi.max(c_hi);
    let lower_bound = consts.lambda_g_min();
    let upper_bound = consts.lambda_g_max();
    let violated =
        in_hypothesis && (eig_min < lower_bound - tol || eig_max > upper_bound + tol);
    Ok(Lemma1Report {
        in_hypothesis,
        eig_min,
        eig_max,
        lower_bound,
        upper_bound,
        violated,
    })
}

/// Joint gradient of the objective in (m, vech(C)) coordinates.
pub fn joint_gradient(
    q: &GaussianParams,
    moments: &MomentEstimates,
    gamma: f64,
    ops: &VectorizationOps,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = q.dim();
    let c_inv = q
        .chol()
        .clone()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::NotPositiveDefinite("factor is singular".into()))?;
    let grad_c_full = &moments.hess * q.chol() - gamma * c_inv.transpose();
    Ok((moments.grad.clone(), &ops.l * vec(&grad_c_full)))
}

/// Outcome of one gradient-dominance certificate.
#[derive(Debug, Clone)]
pub struct PlReport {
    /// `‖grad‖^2` in the inverse-FIM metric.
    pub lhs: f64,
    /// `2 mu (L - l_star)`.
    pub rhs: f64,
    pub satisfied: bool,
}

/// Check `‖grad L‖^2_{F^{-1}} >= 2 mu (L - l_star)` with 1e-8 slack.
pub fn check_pl(
    q: &GaussianParams,
    problem: &ProblemSpec,
    ocfg: &OracleConfig,
    consts: &TheoryConstants,
    ops: &VectorizationOps,
    l_star: f64,
) -> Result<PlReport> {
    let est = oracle::moments(q, problem, ocfg)?;
    let blocks = assemble_fim_inverse(q, ops)?;
    let (g_m, g_c) = joint_gradient(q, &est, problem.gamma, ops)?;
    let lhs = g_m.dot(&(&blocks.f_m_inv * &g_m)) + g_c.dot(&(&blocks.f_c_inv * &g_c));
    let gap = oracle::elbo(q, problem, ocfg)? - l_star;
    let rhs = 2.0 * consts.mu() * gap;
    Ok(PlReport { lhs, rhs, satisfied: lhs >= rhs - 1e-8 })
}

/// One-step covariance gap between the natural-parameter update and the
/// square-root update across a list of step sizes, with the fitted order of
/// `gap(rho) ~ rho^p`.
#[derive(Debug, Clone)]
pub struct NeumannReport {
    pub gaps: Vec<(f64, f64)>,
    pub fitted_order: f64,
}

pub fn neumann_gap(
    q: &GaussianParams,
    moments: &MomentEstimates,
    gamma: f64,
    rho_list: &[f64],
) -> Result<NeumannReport> {
    if rho_list.len() < 2 {
        return Err(Error::Config("need at least two step sizes".into()));
    }
    let mut gaps = Vec::with_capacity(rho_list.len());
    for &rho in rho_list {
        let cfg = StepConfig::new(rho, gamma)?;
        let v_vn = vn_step(&q.to_natural(), moments, &cfg)?.covariance();
        let v_sr = srvn_step(q, moments, &cfg)?.covariance();
        gaps.push((rho, (v_vn - v_sr).norm()));
    }
    let n = gaps.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(rho, gap) in &gaps {
        let x = rho.ln();
        let y = gap.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let fitted_order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(NeumannReport { gaps, fitted_order })
}

/// Brute-force FIM blocks from Monte-Carlo scores: `E[s s^T]` with the mean
/// score `V^{-1}(theta - m)` and the factor score in vech coordinates.
/// Deterministic given (samples, seed).
pub fn mc_fim(
    q: &GaussianParams,
    ops: &VectorizationOps,
    samples: usize,
    seed: u64,
) -> Result<FimBlocks> {
    let d = q.dim();
    if ops.d != d {
        return Err(Error::Dimension(format!(
            "operators built for d = {} but state has d = {d}",
            ops.d
        )));
    }
    if samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let half = d * (d + 1) / 2;
    let s = q.precision();
    let c_inv_t = q
        .chol()
        .clone()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::NotPositiveDefinite("factor is singular".into()))?
        .transpose();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut f_m = DMatrix::zeros(d, d);
    let mut f_c = DMatrix::zeros(half, half);
    for _ in 0..samples {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let delta = q.chol() * z;
        let score_m = &s * &delta;
        let score_c_full = &score_m * delta.transpose() * &s * q.chol() - &c_inv_t;
        let score_c = &ops.l * vec(&score_c_full);
        f_m += &score_m * score_m.transpose();
        f_c += &score_c * score_c.transpose();
    }
    let scale = 1.0 / samples as f64;
    Ok(FimBlocks { f_m_inv: f_m * scale, f_c_inv: f_c * scale })
}

/// Sample a state inside the hypothesis set of the eigenvalue-bound and
/// gradient-dominance certificates: covariance eigenvalues stay below 1,
/// where the joint lower bound `min{lambda_min, lambda_min^2 / 2}` dominates
/// the factor block. Diagonal factor entries in (0.4, 0.95) guarantee this
/// via the determinant: `lambda_min(V) <= (prod C_jj^2)^{1/d} < 1`.
pub fn sample_in_hypothesis_state<R: Rng>(rng: &mut R, d: usize) -> GaussianParams {
    let mut chol = DMatrix::zeros(d, d);
    for j in 0..d {
        chol[(j, j)] = rng.gen_range(0.4..0.95);
        for i in (j + 1)..d {
            chol[(i, j)] = rng.gen_range(-0.3..0.3);
        }
    }
    GaussianParams::new(DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)), chol)
        .expect("positive diagonal factor is a valid state")
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_eig_range(a: &DMatrix<f64>) -> (f64, f64) {
    eig_range(a)
}

/// Leading-term operation count per iteration, evaluated at dimension `d`.
/// The plain gradient method has no published count and returns `None`.
pub fn flop_estimate(method: Method, d: usize) -> Option<f64> {
    let d = d as f64;
    match method {
        Method::Vn => Some(d.powi(3) + 4.0 * d * d),
        Method::Srvn => Some(3.0 * d.powi(3) + 4.5 * d * d + 0.5 * d),
        Method::Bwgd => Some(3.0 * d.powi(3) + 5.0 * d * d),
        Method::Gd => None,
    }
}
