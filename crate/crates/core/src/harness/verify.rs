//! Numerical verification suite: aggregates the theory certificates into a
//! single pass/fail report. States that fall outside a certificate's
//! hypothesis set are counted as skips, never as failures.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::flow::{integrate_flow, lyapunov_report, FlowConfig, Parameterization, Scheme};
use crate::gaussian::{symmetrize, GaussianParams};
use crate::optim::{
    estimate_constants, permissible_step, run_optimizer, srvn_step, Method, StepConfig,
    TheoryConstants,
};
use crate::oracle::{self, OracleConfig, ProblemSpec};
use crate::theory::{
    assemble_fim_inverse, build_vectorization, check_lemma1, check_pl, joint_gradient, mc_fim,
    neumann_gap, sample_in_hypothesis_state, symmetric_eig_range, vec as vec_op,
};

/// Suite size. `Fast` runs in a few seconds; `Full` draws ten times as many
/// random states, covers larger dimensions, and tightens Monte-Carlo budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    Fast,
    Full,
}

impl VerifyLevel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(VerifyLevel::Fast),
            "full" => Ok(VerifyLevel::Full),
            other => Err(Error::Config(format!(
                "unknown verification level '{other}' (expected 'fast' or 'full')"
            ))),
        }
    }

    fn draws(self) -> usize {
        match self {
            VerifyLevel::Fast => 50,
            VerifyLevel::Full => 500,
        }
    }

    fn max_dim(self) -> usize {
        match self {
            VerifyLevel::Fast => 4,
            VerifyLevel::Full => 8,
        }
    }

    fn mc_samples(self) -> usize {
        match self {
            VerifyLevel::Fast => 100_000,
            VerifyLevel::Full => 400_000,
        }
    }

    fn mc_tol(self) -> f64 {
        match self {
            VerifyLevel::Fast => 0.05,
            VerifyLevel::Full => 0.02,
        }
    }
}

/// Result of a single named check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Random draws excluded because they fell outside the hypothesis set.
    pub skipped: usize,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub level: VerifyLevel,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verification suite ({:?})", self.level)?;
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let skip = if c.skipped > 0 {
                format!(" [{} hypothesis skips]", c.skipped)
            } else {
                String::new()
            };
            writeln!(f, "  {status} {:<28}{skip} {}", c.name, c.detail)?;
        }
        let verdict = if self.all_passed() { "ALL CHECKS PASSED" } else { "FAILURES PRESENT" };
        write!(f, "{verdict}")
    }
}

fn random_spd(rng: &mut impl Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    symmetrize(&(&raw * raw.transpose())) + DMatrix::identity(d, d) * floor
}

fn random_quadratic(rng: &mut impl Rng, d: usize) -> Result<ProblemSpec> {
    let a = random_spd(rng, d, 0.4);
    let b = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
    ProblemSpec::quadratic(a, b, 0.0, 1.0)
}

fn quadratic_optimum(problem: &ProblemSpec, ocfg: &OracleConfig) -> Result<(GaussianParams, f64)> {
    let (a, b) = match &problem.loss {
        crate::oracle::LossFamily::Quadratic { a, b, .. } => (a, b),
        _ => return Err(Error::Config("expected a quadratic problem".into())),
    };
    let v_star = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("loss matrix is singular".into()))?;
    let chol = symmetrize(&(v_star.clone() * problem.gamma))
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("optimal covariance failed Cholesky".into()))?;
    let q_star = GaussianParams::new(v_star * b, chol.l())?;
    let l_star = oracle::elbo(&q_star, problem, ocfg)?;
    Ok((q_star, l_star))
}

fn check_operator_identities(level: VerifyLevel, rng: &mut impl Rng) -> Result<CheckOutcome> {
    let mut worst = 0.0_f64;
    for _ in 0..level.draws() {
        let d = rng.gen_range(1..=level.max_dim());
        let ops = build_vectorization(d)?;
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-2.0..2.0));
        let half = d * (d + 1) / 2;
        worst = worst
            .max((&ops.k * vec_op(&a) - vec_op(&a.transpose())).norm())
            .max((&ops.k * &ops.k - DMatrix::identity(d * d, d * d)).norm())
            .max((&ops.l * ops.l.transpose() - DMatrix::identity(half, half)).norm());
        let lnl = &ops.l * &ops.n * ops.l.transpose();
        let (lo, hi) = symmetric_eig_range(&lnl);
        worst = worst.max((0.5 - lo).max(hi - 1.0).max(0.0));
    }
    Ok(CheckOutcome {
        name: "operator-identities".into(),
        passed: worst < 1e-12,
        skipped: 0,
        detail: format!("worst residual {worst:.2e}"),
    })
}

fn check_natural_direction(level: VerifyLevel, rng: &mut impl Rng) -> Result<CheckOutcome> {
    let ocfg = OracleConfig::default();
    let mut worst = 0.0_f64;
    for _ in 0..level.draws() {
        let d = rng.gen_range(1..=level.max_dim());
        let ops = build_vectorization(d)?;
        let q = sample_in_hypothesis_state(rng, d);
        let problem = random_quadratic(rng, d)?;
        let est = oracle::moments(&q, &problem, &ocfg)?;
        let blocks = assemble_fim_inverse(&q, &ops)?;
        let (g_m, g_c) = joint_gradient(&q, &est, problem.gamma, &ops)?;
        let (dm, dc) = crate::flow::flow_rhs_mc(&q, &est, problem.gamma);
        worst = worst
            .max((&blocks.f_m_inv * g_m + dm).norm())
            .max((&blocks.f_c_inv * g_c + &ops.l * vec_op(&dc)).norm());
    }
    Ok(CheckOutcome {
        name: "natural-direction".into(),
        passed: worst < 1e-8,
        skipped: 0,
        detail: format!("worst direction mismatch {worst:.2e}"),
    })
}

fn check_eigenvalue_bounds(level: VerifyLevel, rng: &mut impl Rng) -> Result<CheckOutcome> {
    let mut violations = 0usize;
    let mut skipped = 0usize;
    for _ in 0..level.draws() {
        let d = rng.gen_range(1..=level.max_dim());
        let ops = build_vectorization(d)?;
        let q = sample_in_hypothesis_state(rng, d);
        let (v_lo, _) = symmetric_eig_range(&q.covariance());
        let c_frob = q.chol().norm();
        let consts =
            TheoryConstants::new(1.0, 1.0, v_lo * 0.999, c_frob * 0.999, c_frob * 1.001)?;
        let report = check_lemma1(&q, &consts, &ops)?;
        if !report.in_hypothesis {
            skipped += 1;
        } else if report.violated {
            violations += 1;
        }
    }
    Ok(CheckOutcome {
        name: "metric-eigenvalue-bounds".into(),
        passed: violations == 0,
        skipped,
        detail: format!("{violations} violations in {} draws", level.draws()),
    })
}

fn check_gradient_dominance(level: VerifyLevel, rng: &mut impl Rng) -> Result<CheckOutcome> {
    let ocfg = OracleConfig::default();
    let mut violations = 0usize;
    let mut skipped = 0usize;
    for _ in 0..level.draws() {
        let d = rng.gen_range(1..=level.max_dim().min(4));
        let ops = build_vectorization(d)?;
        let problem = random_quadratic(rng, d)?;
        let (_, l_star) = quadratic_optimum(&problem, &ocfg)?;
        let a = match &problem.loss {
            crate::oracle::LossFamily::Quadratic { a, .. } => a.clone(),
            _ => unreachable!(),
        };
        let (delta, m_up) = symmetric_eig_range(&a);
        let q = sample_in_hypothesis_state(rng, d);
        let (v_lo, _) = symmetric_eig_range(&q.covariance());
        let c_frob = q.chol().norm();
        let consts = TheoryConstants::new(
            delta,
            m_up.max(delta),
            v_lo * 0.999,
            c_frob * 0.999,
            c_frob * 1.001,
        )?;
        let report = check_pl(&q, &problem, &ocfg, &consts, &ops, l_star)?;
        if v_lo >= 1.0 {
            skipped += 1;
        } else if !report.satisfied {
            violations += 1;
        }
    }
    Ok(CheckOutcome {
        name: "gradient-dominance".into(),
        passed: violations == 0,
        skipped,
        detail: format!("{violations} violations in {} draws", level.draws()),
    })
}

fn check_update_gap_order(rng: &mut impl Rng) -> Result<CheckOutcome> {
    let d = 4;
    let q = sample_in_hypothesis_state(rng, d);
    let problem = random_quadratic(rng, d)?;
    let est = oracle::moments(&q, &problem, &OracleConfig::default())?;
    let report = neumann_gap(&q, &est, problem.gamma, &[1e-3, 5e-4, 2.5e-4])?;
    let passed = (1.8..=2.2).contains(&report.fitted_order);
    Ok(CheckOutcome {
        name: "update-gap-order".into(),
        passed,
        skipped: 0,
        detail: format!("fitted order {:.3} (expect ~2)", report.fitted_order),
    })
}

fn check_flow_decay_rate() -> Result<CheckOutcome> {
    // scalar quadratic with a known optimum and constants valid on the
    // whole trajectory (V decays monotonically from 4 to 1)
    let problem = ProblemSpec::quadratic(
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        0.0,
        1.0,
    )?;
    let init = GaussianParams::new(DVector::from_vec(vec![1.0]), DMatrix::from_vec(1, 1, vec![2.0]))?;
    let cfg = FlowConfig {
        parameterization: Parameterization::Mc,
        scheme: Scheme::Rk4,
        h: 1e-3,
        horizon: 4.0,
        record_every: 100,
    };
    let ocfg = OracleConfig::default();
    let traj = integrate_flow(&init, &problem, &ocfg, &cfg)?;
    let l_star = oracle::elbo(&GaussianParams::standard(1), &problem, &ocfg)?;
    let consts = TheoryConstants::new(1.0, 1.0, 1.0, 1.0, 2.0)?;
    let report = lyapunov_report(&traj, &consts, l_star)?;
    Ok(CheckOutcome {
        name: "flow-decay-rate".into(),
        passed: report.bound_satisfied && report.observed_slope <= report.bound_slope * 0.95,
        skipped: 0,
        detail: format!(
            "observed slope {:.3} vs bound {:.3} ({} points)",
            report.observed_slope, report.bound_slope, report.points_used
        ),
    })
}

fn check_discrete_contraction(rng: &mut impl Rng) -> Result<CheckOutcome> {
    let d = 2;
    let a = random_spd(rng, d, 0.8);
    let problem = ProblemSpec::quadratic(a, DVector::zeros(d), 0.0, 1.0)?;
    let init = GaussianParams::isotropic(
        DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
        1.2,
    )?;
    let ocfg = OracleConfig::default();
    let consts = estimate_constants(&problem, &ocfg, &init, 1.0)?;
    let plan = permissible_step(&consts)?;
    let mut cfg = StepConfig::new(plan.rho, 1.0)?;
    cfg.max_iters = 500;
    let rec = run_optimizer(Method::Srvn, &init, &problem, &ocfg, &cfg)?;
    let (_, l_star) = quadratic_optimum(&problem, &ocfg)?;

    let mut worst_ratio = 0.0_f64;
    let mut prev: Option<f64> = None;
    for row in &rec.rows {
        let gap = row.neg_elbo - l_star;
        if gap < 1e-12 {
            break;
        }
        if let Some(p) = prev {
            worst_ratio = worst_ratio.max(gap / p);
        }
        prev = Some(gap);
    }
    Ok(CheckOutcome {
        name: "discrete-contraction".into(),
        passed: worst_ratio <= plan.contraction + 1e-10 && prev.is_some(),
        skipped: 0,
        detail: format!(
            "worst per-step ratio {worst_ratio:.4} vs certified {:.4}",
            plan.contraction
        ),
    })
}

fn check_euler_matches_square_root(rng: &mut impl Rng) -> Result<CheckOutcome> {
    let d = 3;
    let problem = random_quadratic(rng, d)?;
    let init = sample_in_hypothesis_state(rng, d);
    let ocfg = OracleConfig::default();
    let rho = 0.05;
    let steps = 40;
    let flow_cfg = FlowConfig {
        parameterization: Parameterization::Mc,
        scheme: Scheme::Euler,
        h: rho,
        horizon: rho * steps as f64,
        record_every: 1,
    };
    let traj = integrate_flow(&init, &problem, &ocfg, &flow_cfg)?;
    let step_cfg = StepConfig::new(rho, problem.gamma)?;
    let mut q = init;
    let mut exact = true;
    for state in traj.states.iter().skip(1) {
        let est = oracle::moments(&q, &problem, &ocfg)?;
        q = srvn_step(&q, &est, &step_cfg)?;
        if q.mean() != state.mean() || q.chol() != state.chol() {
            exact = false;
            break;
        }
    }
    Ok(CheckOutcome {
        name: "euler-equals-square-root".into(),
        passed: exact,
        skipped: 0,
        detail: if exact {
            format!("{steps} steps bit-identical")
        } else {
            "iterates diverged from Euler flow".into()
        },
    })
}

fn check_parameterization_invariance(rng: &mut impl Rng) -> Result<CheckOutcome> {
    let d = 2;
    let problem = random_quadratic(rng, d)?;
    let init = GaussianParams::isotropic(
        DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
        1.5,
    )?;
    let base = FlowConfig {
        parameterization: Parameterization::Mc,
        scheme: Scheme::Rk4,
        h: 1e-3,
        horizon: 5.0,
        record_every: 500,
    };
    let ocfg = OracleConfig::default();
    let mc = integrate_flow(&init, &problem, &ocfg, &base)?;
    let mv = integrate_flow(
        &init,
        &problem,
        &ocfg,
        &FlowConfig { parameterization: Parameterization::Mv, ..base },
    )?;
    let mut worst = 0.0_f64;
    for (qa, qb) in mc.states.iter().zip(&mv.states) {
        worst = worst
            .max((qa.covariance() - qb.covariance()).norm())
            .max((qa.mean() - qb.mean()).norm());
    }
    Ok(CheckOutcome {
        name: "parameterization-invariance".into(),
        passed: worst < 1e-6,
        skipped: 0,
        detail: format!("worst trajectory gap {worst:.2e}"),
    })
}

fn check_mc_fim(level: VerifyLevel, rng: &mut impl Rng) -> Result<CheckOutcome> {
    let mut worst = 0.0_f64;
    for d in 1..=2 {
        let ops = build_vectorization(d)?;
        let q = sample_in_hypothesis_state(rng, d);
        let brute = mc_fim(&q, &ops, level.mc_samples(), 7)?;
        let closed = assemble_fim_inverse(&q, &ops)?;
        let f_m_inv = brute
            .f_m_inv
            .try_inverse()
            .ok_or_else(|| Error::Theory("sampled mean-block FIM is singular".into()))?;
        let f_c_inv = brute
            .f_c_inv
            .try_inverse()
            .ok_or_else(|| Error::Theory("sampled factor-block FIM is singular".into()))?;
        worst = worst
            .max((&f_m_inv - &closed.f_m_inv).norm() / closed.f_m_inv.norm())
            .max((&f_c_inv - &closed.f_c_inv).norm() / closed.f_c_inv.norm());
    }
    Ok(CheckOutcome {
        name: "sampled-fisher-information".into(),
        passed: worst < level.mc_tol(),
        skipped: 0,
        detail: format!("worst relative error {worst:.4} (tol {})", level.mc_tol()),
    })
}

/// Run all checks at the requested level with a fixed seed.
pub fn verify_suite(level: VerifyLevel) -> Result<VerifyReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(20_240_817);
    let checks = vec![
        check_operator_identities(level, &mut rng)?,
        check_natural_direction(level, &mut rng)?,
        check_eigenvalue_bounds(level, &mut rng)?,
        check_gradient_dominance(level, &mut rng)?,
        check_update_gap_order(&mut rng)?,
        check_flow_decay_rate()?,
        check_discrete_contraction(&mut rng)?,
        check_euler_matches_square_root(&mut rng)?,
        check_parameterization_invariance(&mut rng)?,
        check_mc_fim(level, &mut rng)?,
    ];
    Ok(VerifyReport { level, checks })
}
