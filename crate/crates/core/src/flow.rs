//! Continuous-time natural-gradient flow: ODE right-hand sides in both the
//! (m, V) and (m, C) parameterizations, explicit Euler and classical
//! Runge-Kutta integrators, and exponential-decay diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{symmetrize, tril_half_diag, GaussianParams, MomentEstimates};
use crate::optim::TheoryConstants;
use crate::oracle::{self, OracleConfig, ProblemSpec};

/// Which coordinates the integrator advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    /// Mean and covariance `V`.
    Mv,
    /// Mean and Cholesky factor `C`.
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub parameterization: Parameterization,
    pub scheme: Scheme,
    pub h: f64,
    pub horizon: f64,
    pub record_every: usize,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::Config("flow step h must be positive".into()));
        }
        if !(self.h < self.horizon) {
            return Err(Error::Config("flow step h must be below the horizon".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Recorded flow trajectory. States are stored in the square-root view for
/// both parameterizations; `objective` holds the minimized functional at each
/// recorded time so gap sequences can be formed against any reference value.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GaussianParams>,
    pub objective: Vec<f64>,
}

impl FlowTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Objective gaps `L(t) - l_star`, paired with their times.
    pub fn kl_gaps(&self, l_star: f64) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.objective)
            .map(|(&t, &l)| (t, l - l_star))
            .collect()
    }
}

/// Right-hand side in (m, V): `dm = -V g`, `dV = gamma V - V H V`.
pub fn flow_rhs_mv(
    _mean: &DVector<f64>,
    v: &DMatrix<f64>,
    moments: &MomentEstimates,
    gamma: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let dmean = -(v * &moments.grad);
    let dv = symmetrize(&(gamma * v - v * &moments.hess * v));
    (dmean, dv)
}

/// Right-hand side in (m, C): `dm = -C C^T g`,
/// `dC = C tril(gamma I - C^T H C)` with the diagonal-halving tril.
pub fn flow_rhs_mc(
    q: &GaussianParams,
    moments: &MomentEstimates,
    gamma: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let c = q.chol();
    let dmean = -(c * (c.transpose() * &moments.grad));
    let inner = DMatrix::identity(q.dim(), q.dim()) * gamma - c.transpose() * &moments.hess * c;
    let tril = tril_half_diag(&inner).expect("inner matrix is square");
    let dc = c * tril;
    (dmean, dc)
}

fn state_from_mv(mean: DVector<f64>, v: &DMatrix<f64>, t: f64) -> Result<GaussianParams> {
    let chol = symmetrize(v).cholesky().ok_or(Error::Integration {
        last_valid_time: t,
        msg: "covariance lost positive definiteness".into(),
    })?;
    GaussianParams::new(mean, chol.l()).map_err(|e| Error::Integration {
        last_valid_time: t,
        msg: e.to_string(),
    })
}

fn state_from_mc(mean: DVector<f64>, chol: DMatrix<f64>, t: f64) -> Result<GaussianParams> {
    GaussianParams::new(mean, chol).map_err(|e| Error::Integration {
        last_valid_time: t,
        msg: e.to_string(),
    })
}

/// Integrate the flow from `init` over `cfg.horizon`. Recording happens at
/// t = 0, every `record_every`-th step, and the final step.
///
/// With Euler in (m, C) at step `h = rho` the recorded states reproduce the
/// square-root optimizer iterates bit for bit: both advance the state with
/// the same right-hand side and the same floating-point update.
pub fn integrate_flow(
    init: &GaussianParams,
    problem: &ProblemSpec,
    ocfg: &OracleConfig,
    cfg: &FlowConfig,
) -> Result<FlowTrajectory> {
    cfg.validate()?;
    let gamma = problem.gamma;
    let n_steps = (cfg.horizon / cfg.h).round() as usize;
    let mut traj = FlowTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        objective: Vec::new(),
    };

    let record = |traj: &mut FlowTrajectory, t: f64, q: &GaussianParams| -> Result<()> {
        traj.times.push(t);
        traj.objective.push(oracle::elbo(q, problem, ocfg)?);
        traj.states.push(q.clone());
        Ok(())
    };

    match cfg.parameterization {
        Parameterization::Mc => {
            let mut q = init.clone();
            record(&mut traj, 0.0, &q)?;
            for k in 0..n_steps {
                let t = k as f64 * cfg.h;
                let (mean, chol) = match cfg.scheme {
                    Scheme::Euler => {
                        let est = oracle::moments(&q, problem, ocfg)?;
                        let (dm, dc) = flow_rhs_mc(&q, &est, gamma);
                        (q.mean() + cfg.h * dm, q.chol() + cfg.h * dc)
                    }
                    Scheme::Rk4 => {
                        let f = |m: DVector<f64>, c: DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
                            let state = state_from_mc(m, c, t)?;
                            let est = oracle::moments(&state, problem, ocfg)?;
                            Ok(flow_rhs_mc(&state, &est, gamma))
                        };
                        let (k1m, k1c) = f(q.mean().clone(), q.chol().clone())?;
                        let h2 = cfg.h / 2.0;
                        let (k2m, k2c) = f(q.mean() + h2 * &k1m, q.chol() + h2 * &k1c)?;
                        let (k3m, k3c) = f(q.mean() + h2 * &k2m, q.chol() + h2 * &k2c)?;
                        let (k4m, k4c) = f(q.mean() + cfg.h * &k3m, q.chol() + cfg.h * &k3c)?;
                        let w = cfg.h / 6.0;
                        (
                            q.mean() + w * (k1m + 2.0 * k2m + 2.0 * k3m + k4m),
                            q.chol() + w * (k1c + 2.0 * k2c + 2.0 * k3c + k4c),
                        )
                    }
                };
                q = state_from_mc(mean, chol, t)?;
                if (k + 1) % cfg.record_every == 0 || k + 1 == n_steps {
                    record(&mut traj, (k + 1) as f64 * cfg.h, &q)?;
                }
            }
        }
        Parameterization::Mv => {
            let mut mean = init.mean().clone();
            let mut v = init.covariance();
            record(&mut traj, 0.0, &state_from_mv(mean.clone(), &v, 0.0)?)?;
            for k in 0..n_steps {
                let t = k as f64 * cfg.h;
                let f = |m: DVector<f64>, vv: DMatrix<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
                    let state = state_from_mv(m, &vv, t)?;
                    let est = oracle::moments(&state, problem, ocfg)?;
                    Ok(flow_rhs_mv(state.mean(), &vv, &est, gamma))
                };
                let (new_mean, new_v) = match cfg.scheme {
                    Scheme::Euler => {
                        let (dm, dv) = f(mean.clone(), v.clone())?;
                        (&mean + cfg.h * dm, &v + cfg.h * dv)
                    }
                    Scheme::Rk4 => {
                        let (k1m, k1v) = f(mean.clone(), v.clone())?;
                        let h2 = cfg.h / 2.0;
                        let (k2m, k2v) = f(&mean + h2 * &k1m, &v + h2 * &k1v)?;
                        let (k3m, k3v) = f(&mean + h2 * &k2m, &v + h2 * &k2v)?;
                        let (k4m, k4v) = f(&mean + cfg.h * &k3m, &v + cfg.h * &k3v)?;
                        let w = cfg.h / 6.0;
                        (
                            &mean + w * (k1m + 2.0 * k2m + 2.0 * k3m + k4m),
                            &v + w * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
                        )
                    }
                };
                mean = new_mean;
                v = symmetrize(&new_v);
                if (k + 1) % cfg.record_every == 0 || k + 1 == n_steps {
                    let t_next = (k + 1) as f64 * cfg.h;
                    record(&mut traj, t_next, &state_from_mv(mean.clone(), &v, t_next)?)?;
                }
            }
        }
    }
    Ok(traj)
}

/// Exponential-decay diagnostics for a trajectory against a known optimum.
#[derive(Debug, Clone)]
pub struct LyapunovReport {
    /// Least-squares slope of `log(gap)` against time.
    pub observed_slope: f64,
    /// Theoretical slope `-2 mu`.
    pub bound_slope: f64,
    /// `gap(t) <= exp(-2 mu t) * gap(0) * 1.05` at every usable point.
    pub bound_satisfied: bool,
    /// Points with gap above the numerical floor of 1e-13.
    pub points_used: usize,
    /// Points discarded for sitting at or below the floor.
    pub points_excluded: usize,
}

/// Fit the decay of `L(t) - l_star` and compare with the `exp(-2 mu t)` bound.
pub fn lyapunov_report(
    traj: &FlowTrajectory,
    consts: &TheoryConstants,
    l_star: f64,
) -> Result<LyapunovReport> {
    let gaps = traj.kl_gaps(l_star);
    if gaps.is_empty() {
        return Err(Error::Config("trajectory has no recorded points".into()));
    }
    let floor = 1e-13;
    let usable: Vec<(f64, f64)> = gaps.iter().copied().filter(|&(_, g)| g > floor).collect();
    let points_excluded = gaps.len() - usable.len();
    let mu = consts.mu();
    let bound_slope = -2.0 * mu;

    let gap0 = gaps[0].1;
    let bound_satisfied = usable
        .iter()
        .all(|&(t, g)| g <= (bound_slope * t).exp() * gap0 * 1.05);

    let observed_slope = if usable.len() >= 2 {
        let n = usable.len() as f64;
        let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
        for &(t, g) in &usable {
            let y = g.ln();
            st += t;
            sy += y;
            stt += t * t;
            sty += t * y;
        }
        (n * sty - st * sy) / (n * stt - st * st)
    } else {
        0.0
    };

    Ok(LyapunovReport {
        observed_slope,
        bound_slope,
        bound_satisfied,
        points_used: usable.len(),
        points_excluded,
    })
}
