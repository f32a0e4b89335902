//! Discrete-time updates: gradient descent in (m, C), the natural-parameter
//! update in (m, S), the square-root natural-gradient update, and the
//! Bures-Wasserstein gradient step, plus theory-driven step-size selection
//! and the run loop with its stopping criteria.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::flow::flow_rhs_mc;
use crate::gaussian::{symmetrize, tril_full_diag, GaussianParams, MomentEstimates, NaturalState};
use crate::oracle::{self, LossFamily, OracleConfig, ProblemSpec};

/// Step size, temperature, and stopping thresholds shared by all methods.
#[derive(Debug, Clone)]
pub struct StepConfig {
    pub rho: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub fixed_point_tol: f64,
}

impl StepConfig {
    pub fn new(rho: f64, gamma: f64) -> Result<Self> {
        let cfg = Self {
            rho,
            gamma,
            max_iters: 10_000,
            grad_tol: 1e-8,
            fixed_point_tol: 1e-8,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) {
            return Err(Error::Config("step size rho must be non-negative".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config("temperature gamma must be positive".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.fixed_point_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Problem constants for the convergence guarantees: strong convexity
/// `delta`, smoothness `m_smooth`, the eigenvalue floor `lambda_min` of the
/// covariance along the run, and the Frobenius band `[xi_l, xi_u]` of the
/// factor. Derived quantities are exposed as methods.
#[derive(Debug, Clone)]
pub struct TheoryConstants {
    pub delta: f64,
    pub m_smooth: f64,
    pub lambda_min: f64,
    pub xi_l: f64,
    pub xi_u: f64,
}

impl TheoryConstants {
    pub fn new(delta: f64, m_smooth: f64, lambda_min: f64, xi_l: f64, xi_u: f64) -> Result<Self> {
        if !(delta > 0.0) || !(delta <= m_smooth) {
            return Err(Error::Theory(format!(
                "need 0 < delta <= M, got delta = {delta}, M = {m_smooth}"
            )));
        }
        if !(xi_l > 0.0) || !(xi_l <= xi_u) {
            return Err(Error::Theory(format!(
                "need 0 < xi_l <= xi_u, got xi_l = {xi_l}, xi_u = {xi_u}"
            )));
        }
        if !(lambda_min > 0.0) {
            return Err(Error::Theory(format!(
                "need lambda_min > 0, got {lambda_min}"
            )));
        }
        Ok(Self { delta, m_smooth, lambda_min, xi_l, xi_u })
    }

    /// Smallest eigenvalue of the inverse metric in the joint geometry:
    /// `min{lambda_min, lambda_min^2 / 2}`.
    pub fn lambda_g_min(&self) -> f64 {
        self.lambda_min.min(self.lambda_min * self.lambda_min / 2.0)
    }

    /// Largest eigenvalue of the inverse metric: `xi_u^2`.
    pub fn lambda_g_max(&self) -> f64 {
        self.xi_u * self.xi_u
    }

    /// Gradient-dominance constant `mu = delta * lambda_g_min`.
    pub fn mu(&self) -> f64 {
        self.delta * self.lambda_g_min()
    }

    /// Upper bound `xi_u^2` on the largest covariance eigenvalue.
    pub fn lambda_max(&self) -> f64 {
        self.xi_u * self.xi_u
    }
}

/// Step-size certificate: both candidate steps, the selected step, the
/// resulting descent constant `eta`, and the per-iteration contraction
/// factor `1 - 2 eta delta`.
#[derive(Debug, Clone)]
pub struct StepPlan {
    pub rho1: f64,
    pub rho2: f64,
    pub rho: f64,
    pub eta: f64,
    pub contraction: f64,
}

/// Descent constant at step `rho`:
/// `min{lambda_min rho - M rho^2 xi_u^4 / 2, sqrt(5/2) rho xi_l^2 - 5 rho^2 xi_u^4 M / 4}`.
pub fn eta_at(consts: &TheoryConstants, rho: f64) -> f64 {
    let xi_u4 = consts.xi_u.powi(4);
    let arm_m = consts.lambda_min * rho - consts.m_smooth * rho * rho * xi_u4 / 2.0;
    let arm_c = (2.5_f64).sqrt() * rho * consts.xi_l * consts.xi_l
        - 1.25 * rho * rho * xi_u4 * consts.m_smooth;
    arm_m.min(arm_c)
}

/// Certified constant step size: the candidates are the vertices
/// `rho1 = lambda_min / (lambda_max^2 M)` and
/// `rho2 = sqrt(2/5) xi_l^2 / (M xi_u^4)` of the two quadratic arms of the
/// descent constant. The selected step is the candidate with the larger
/// descent constant; this keeps `rho <= max{rho1, rho2}` and guarantees a
/// positive constant, because each arm stays positive up to twice its own
/// vertex and `min{rho1, rho2}` is below both. Errors when the resulting
/// contraction still leaves (0, 1), which signals inconsistent constants.
pub fn permissible_step(consts: &TheoryConstants) -> Result<StepPlan> {
    let lambda_max = consts.lambda_max();
    let xi_u4 = consts.xi_u.powi(4);
    let rho1 = consts.lambda_min / (lambda_max * lambda_max * consts.m_smooth);
    let rho2 = (0.4_f64).sqrt() * consts.xi_l * consts.xi_l / (consts.m_smooth * xi_u4);
    let rho = if eta_at(consts, rho1) >= eta_at(consts, rho2) { rho1 } else { rho2 };
    let eta = eta_at(consts, rho);
    let contraction = 1.0 - 2.0 * eta * consts.delta;
    if !(contraction > 0.0 && contraction < 1.0) {
        return Err(Error::Theory(format!(
            "contraction factor {contraction} outside (0, 1) at rho = {rho} (eta = {eta})"
        )));
    }
    Ok(StepPlan { rho1, rho2, rho, eta, contraction })
}

/// Gradient step in (m, C): `C <- C - rho * lower[(H - gamma (C C^T)^{-1}) C]`
/// with the full-diagonal lower-triangular projection, `m <- m - rho g`.
pub fn gd_step(
    q: &GaussianParams,
    moments: &MomentEstimates,
    cfg: &StepConfig,
) -> Result<GaussianParams> {
    let d = q.dim();
    let c = q.chol();
    // (C C^T)^{-1} C = C^{-T}
    let c_inv = c
        .clone()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::NotPositiveDefinite("factor is singular".into()))?;
    let grad_c = &moments.hess * c - cfg.gamma * c_inv.transpose();
    let new_chol = c - cfg.rho * tril_full_diag(&grad_c);
    let new_mean = q.mean() - cfg.rho * &moments.grad;
    GaussianParams::new(new_mean, new_chol)
}

/// Natural-parameter step: `S <- (1 - gamma rho) S + rho H`,
/// `m <- m - rho S_new^{-1} g`. Indefinite updates abort with a
/// positivity-violation error rather than being repaired.
pub fn vn_step(
    s: &NaturalState,
    moments: &MomentEstimates,
    cfg: &StepConfig,
) -> Result<NaturalState> {
    let new_precision = (1.0 - cfg.gamma * cfg.rho) * s.precision() + cfg.rho * &moments.hess;
    let chol = symmetrize(&new_precision)
        .cholesky()
        .ok_or_else(|| Error::PositivityViolation {
            iter: 0,
            msg: "updated precision matrix is not positive definite".into(),
        })?;
    let new_mean = s.mean() - cfg.rho * chol.solve(&moments.grad);
    NaturalState::new(new_mean, new_precision)
}

/// Square-root step: `C <- C - rho C tril(C^T H C - gamma I)`,
/// `m <- m - rho C C^T g`. Delegates to the flow right-hand side so an Euler
/// integration of the flow at step `rho` reproduces these iterates exactly.
pub fn srvn_step(
    q: &GaussianParams,
    moments: &MomentEstimates,
    cfg: &StepConfig,
) -> Result<GaussianParams> {
    let (dm, dc) = flow_rhs_mc(q, moments, cfg.gamma);
    GaussianParams::new(q.mean() + cfg.rho * dm, q.chol() + cfg.rho * dc)
}

/// Bures-Wasserstein step on (m, V): `m <- m - alpha g`,
/// `M = I - alpha (H - V^{-1})`, `V <- M V M`.
pub fn bwgd_step(
    mean: &DVector<f64>,
    v: &DMatrix<f64>,
    moments: &MomentEstimates,
    alpha: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = v.nrows();
    let chol = symmetrize(v)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("covariance failed Cholesky".into()))?;
    let s = symmetrize(&chol.inverse());
    let m_t = DMatrix::identity(d, d) - alpha * (&moments.hess - s);
    let new_v = symmetrize(&(&m_t * v * m_t.transpose()));
    if new_v.clone().cholesky().is_none() {
        return Err(Error::PositivityViolation {
            iter: 0,
            msg: "updated covariance is not positive definite".into(),
        });
    }
    let new_mean = mean - alpha * &moments.grad;
    Ok((new_mean, new_v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Gd,
    Vn,
    Srvn,
    Bwgd,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Vn => "vn",
            Method::Srvn => "srvn",
            Method::Bwgd => "bwgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Method::Gd),
            "vn" => Ok(Method::Vn),
            "srvn" => Ok(Method::Srvn),
            "bwgd" => Ok(Method::Bwgd),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }

    pub const ALL: [Method; 4] = [Method::Gd, Method::Vn, Method::Srvn, Method::Bwgd];
}

/// Per-iteration diagnostics. `wall_ms` is measured and therefore excluded
/// from the deterministic output contract.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub iter: usize,
    pub wall_ms: f64,
    pub neg_elbo: f64,
    pub grad_norm: f64,
    pub c_frob: f64,
    pub v_eig_min: f64,
    pub v_eig_max: f64,
}

/// Full record of one optimizer run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: Method,
    pub rows: Vec<RunRow>,
    pub converged: bool,
    pub iterations: usize,
    pub final_state: GaussianParams,
    /// Frobenius norm of `H - gamma V^{-1}` at the final state.
    pub fixed_point_residual: f64,
}

fn v_eigen_range(v: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(v.clone());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in eig.eigenvalues.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    (lo, hi)
}

/// Run `method` from `init` until both `‖g‖ <= grad_tol` and
/// `‖H - gamma V^{-1}‖_F <= fixed_point_tol`, or `max_iters` steps.
/// Step failures abort with the iteration attached.
pub fn run_optimizer(
    method: Method,
    init: &GaussianParams,
    problem: &ProblemSpec,
    ocfg: &OracleConfig,
    cfg: &StepConfig,
) -> Result<RunRecord> {
    cfg.validate()?;
    if init.dim() != problem.dim() {
        return Err(Error::Dimension(format!(
            "initial state has dimension {} but problem has {}",
            init.dim(),
            problem.dim()
        )));
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut converged = false;

    // method-native state, plus a square-root view for diagnostics
    let mut q = init.clone();
    let mut natural = if method == Method::Vn { Some(q.to_natural()) } else { None };
    let mut v_mv = if method == Method::Bwgd {
        Some((q.mean().clone(), q.covariance()))
    } else {
        None
    };

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for t in 0..=cfg.max_iters {
        let est = oracle::moments(&q, problem, ocfg)?;
        let grad_norm = est.grad.norm();
        residual = (&est.hess - cfg.gamma * q.precision()).norm();
        let v = q.covariance();
        let (lo, hi) = v_eigen_range(&v);
        rows.push(RunRow {
            iter: t,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            neg_elbo: oracle::elbo(&q, problem, ocfg)?,
            grad_norm,
            c_frob: q.chol().norm(),
            v_eig_min: lo,
            v_eig_max: hi,
        });
        iterations = t;
        if grad_norm <= cfg.grad_tol && residual <= cfg.fixed_point_tol {
            converged = true;
            break;
        }
        if t == cfg.max_iters {
            break;
        }
        match method {
            Method::Gd => {
                q = gd_step(&q, &est, cfg).map_err(|e| e.at_iteration(t))?;
            }
            Method::Srvn => {
                q = srvn_step(&q, &est, cfg).map_err(|e| e.at_iteration(t))?;
            }
            Method::Vn => {
                let s = natural.take().expect("vn state present");
                let s_new = vn_step(&s, &est, cfg).map_err(|e| e.at_iteration(t))?;
                q = s_new.to_square_root().map_err(|e| e.at_iteration(t))?;
                natural = Some(s_new);
            }
            Method::Bwgd => {
                let (m, v) = v_mv.take().expect("bwgd state present");
                let (m_new, v_new) =
                    bwgd_step(&m, &v, &est, cfg.rho).map_err(|e| e.at_iteration(t))?;
                let chol = v_new
                    .clone()
                    .cholesky()
                    .ok_or_else(|| {
                        Error::PositivityViolation {
                            iter: t,
                            msg: "updated covariance failed Cholesky".into(),
                        }
                    })?;
                q = GaussianParams::new(m_new.clone(), chol.l()).map_err(|e| e.at_iteration(t))?;
                v_mv = Some((m_new, v_new));
            }
        }
    }
    Ok(RunRecord {
        method,
        rows,
        converged,
        iterations,
        final_state: q,
        fixed_point_residual: residual,
    })
}

/// Estimate the convergence constants for a problem. Strong convexity and
/// smoothness come from the loss structure; the covariance eigenvalue floor
/// and the factor norm band come from a short pilot run (20 gradient steps),
/// widened by 5% on each side as a safety margin.
pub fn estimate_constants(
    problem: &ProblemSpec,
    ocfg: &OracleConfig,
    init: &GaussianParams,
    gamma: f64,
) -> Result<TheoryConstants> {
    let (delta, m_smooth) = match &problem.loss {
        LossFamily::Quadratic { a, .. } => {
            let eig = SymmetricEigen::new(a.clone());
            let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(lo > 0.0) {
                return Err(Error::Theory(format!(
                    "quadratic loss matrix has non-positive eigenvalue {lo}"
                )));
            }
            (lo, hi)
        }
        LossFamily::Logistic { data, l2 } => {
            if !(*l2 > 0.0) {
                return Err(Error::Theory(
                    "logistic loss needs l2 > 0 for strong convexity".into(),
                ));
            }
            let zeta = data.xtx_lambda_max(1e-8, 10_000) / 4.0 + l2;
            (*l2, zeta)
        }
    };

    let pilot_cfg = StepConfig {
        rho: 0.5 / m_smooth,
        gamma,
        max_iters: 20,
        grad_tol: 1e-300,
        fixed_point_tol: 1e-300,
    };
    let pilot = run_optimizer(Method::Gd, init, problem, ocfg, &pilot_cfg)?;
    let lambda_min = pilot
        .rows
        .iter()
        .map(|r| r.v_eig_min)
        .fold(f64::INFINITY, f64::min);
    let xi_l = pilot
        .rows
        .iter()
        .map(|r| r.c_frob)
        .fold(f64::INFINITY, f64::min);
    let xi_u = pilot
        .rows
        .iter()
        .map(|r| r.c_frob)
        .fold(f64::NEG_INFINITY, f64::max);
    TheoryConstants::new(delta, m_smooth, lambda_min * 0.95, xi_l * 0.95, xi_u * 1.05)
}
