//! Acceptance suite: one test per release criterion. Every test prints a
//! single `ACCEPTANCE <n> ... PASS/FAIL/SKIPPED` line before asserting, so a
//! plain test run doubles as the acceptance report. Criteria needing cached
//! datasets print SKIPPED when the cache is empty and the network is off.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use ngvi::data;
use ngvi::flow::{integrate_flow, FlowConfig, Parameterization, Scheme};
use ngvi::gaussian::{symmetrize, GaussianParams};
use ngvi::harness::config::{ExperimentConfig, ProblemSource};
use ngvi::harness::experiment::{run_experiment, synthetic_logistic_data, terminal_neg_elbo};
use ngvi::optim::{
    estimate_constants, eta_at, permissible_step, run_optimizer, srvn_step, vn_step, Method,
    StepConfig, TheoryConstants,
};
use ngvi::oracle::{self, OracleConfig, ProblemSpec};
use ngvi::theory::{
    assemble_fim_inverse, build_vectorization, check_lemma1, check_pl, mc_fim,
    neumann_gap, sample_in_hypothesis_state, symmetric_eig_range,
};

fn report(n: usize, name: &str, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n} ({name}): {status} - {detail}");
    assert!(passed, "criterion {n} ({name}) failed: {detail}");
}

fn skip(n: usize, name: &str, reason: &str) {
    println!("ACCEPTANCE {n} ({name}): SKIPPED - {reason}");
}

fn random_spd(rng: &mut impl Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    symmetrize(&(&raw * raw.transpose())) + DMatrix::identity(d, d) * floor
}

fn random_state(rng: &mut impl Rng, d: usize) -> GaussianParams {
    let mut chol = DMatrix::zeros(d, d);
    for j in 0..d {
        chol[(j, j)] = rng.gen_range(0.5..1.5);
        for i in (j + 1)..d {
            chol[(i, j)] = rng.gen_range(-0.4..0.4);
        }
    }
    GaussianParams::new(DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)), chol).unwrap()
}

fn quadratic_optimum(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    problem: &ProblemSpec,
    ocfg: &OracleConfig,
) -> (GaussianParams, f64) {
    let v_star = a.clone().try_inverse().unwrap() * problem.gamma;
    let chol = symmetrize(&v_star).cholesky().unwrap().l();
    let q_star = GaussianParams::new(a.clone().try_inverse().unwrap() * b, chol).unwrap();
    let l_star = oracle::elbo(&q_star, problem, ocfg).unwrap();
    (q_star, l_star)
}

/// Worst relative error between the analytic objective gradient in (m, C)
/// and central finite differences of the objective.
fn gradcheck_worst(q: &GaussianParams, problem: &ProblemSpec, ocfg: &OracleConfig, h: f64) -> f64 {
    let d = q.dim();
    let est = oracle::moments(q, problem, ocfg).unwrap();
    let c_inv = q
        .chol()
        .clone()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .unwrap();
    let grad_c = &est.hess * q.chol() - problem.gamma * c_inv.transpose();

    let elbo_at = |mean: DVector<f64>, chol: DMatrix<f64>| {
        let state = GaussianParams::new(mean, chol).unwrap();
        oracle::elbo(&state, problem, ocfg).unwrap()
    };

    let mut fd_m = DVector::zeros(d);
    for i in 0..d {
        let mut up = q.mean().clone();
        let mut dn = q.mean().clone();
        up[i] += h;
        dn[i] -= h;
        fd_m[i] = (elbo_at(up, q.chol().clone()) - elbo_at(dn, q.chol().clone())) / (2.0 * h);
    }
    let rel_m = (&fd_m - &est.grad).norm() / fd_m.norm().max(1.0);

    let mut rel_c = 0.0_f64;
    for j in 0..d {
        for i in j..d {
            let mut up = q.chol().clone();
            let mut dn = q.chol().clone();
            up[(i, j)] += h;
            dn[(i, j)] -= h;
            let fd =
                (elbo_at(q.mean().clone(), up) - elbo_at(q.mean().clone(), dn)) / (2.0 * h);
            rel_c = rel_c.max((fd - grad_c[(i, j)]).abs() / fd.abs().max(1.0));
        }
    }
    rel_m.max(rel_c)
}

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let ocfg = OracleConfig::default();

    let mut worst_quad = 0.0_f64;
    for _ in 0..20 {
        let d = rng.gen_range(1..=6);
        let a = random_spd(&mut rng, d, 0.3);
        let b = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let problem = ProblemSpec::quadratic(a, b, 0.0, 1.0).unwrap();
        let q = random_state(&mut rng, d);
        worst_quad = worst_quad.max(gradcheck_worst(&q, &problem, &ocfg, 1e-6));
    }

    let mut worst_logi = 0.0_f64;
    for k in 0..5 {
        let d = rng.gen_range(1..=4);
        let n = rng.gen_range(10..=50);
        let dm = synthetic_logistic_data(n, d, 300 + k).unwrap();
        let problem = ProblemSpec::logistic(dm, 1e-2, 1.0).unwrap();
        let q = random_state(&mut rng, d);
        worst_logi = worst_logi.max(gradcheck_worst(&q, &problem, &ocfg, 1e-5));
    }

    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        "gradient correctness",
        worst_quad < 1e-5 && worst_logi < 1e-3 && elapsed < 10.0,
        &format!(
            "worst relative error: exact oracle {worst_quad:.2e} (tol 1e-5), \
             quadrature oracle {worst_logi:.2e} (tol 1e-3); {elapsed:.1} s"
        ),
    );
}

#[test]
fn criterion_02_vn_one_step() {
    let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.7, 0.7, 2.0]);
    let b = DVector::from_vec(vec![1.0, -2.0]);
    let problem = ProblemSpec::quadratic(a.clone(), b.clone(), 0.0, 1.0).unwrap();
    let init = GaussianParams::isotropic(DVector::from_vec(vec![4.0, -4.0]), 1.0).unwrap();
    let cfg = StepConfig::new(1.0, 1.0).unwrap();
    let est = oracle::moments(&init, &problem, &OracleConfig::default()).unwrap();
    let s1 = vn_step(&init.to_natural(), &est, &cfg).unwrap();

    let m_star = a.clone().try_inverse().unwrap() * &b;
    let mean_res = (s1.mean() - &m_star).norm();
    let prec_res = (s1.precision() - &a).norm();
    report(
        2,
        "one-step posterior recovery",
        mean_res < 1e-10 && prec_res < 1e-10,
        &format!("mean residual {mean_res:.2e}, precision residual {prec_res:.2e} (tol 1e-10)"),
    );
}

#[test]
fn criterion_03_second_order_agreement() {
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let d = 3;
    let q = random_state(&mut rng, d);
    let a = random_spd(&mut rng, d, 0.3);
    let b = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
    let problem = ProblemSpec::quadratic(a, b, 0.0, 1.0).unwrap();
    let est = oracle::moments(&q, &problem, &OracleConfig::default()).unwrap();
    let rep = neumann_gap(&q, &est, 1.0, &[1e-3, 5e-4, 2.5e-4]).unwrap();
    report(
        3,
        "update-gap order",
        (1.8..=2.2).contains(&rep.fitted_order),
        &format!("fitted order {:.3} in [1.8, 2.2]", rep.fitted_order),
    );
}

#[test]
fn criterion_04_discrete_contraction_and_budget() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(104);
    let d = 4;
    let a = random_spd(&mut rng, d, 0.8);
    let b = DVector::zeros(d);
    let problem = ProblemSpec::quadratic(a.clone(), b.clone(), 0.0, 1.0).unwrap();
    let init = GaussianParams::isotropic(
        DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
        1.2,
    )
    .unwrap();
    let ocfg = OracleConfig::default();
    let consts = estimate_constants(&problem, &ocfg, &init, 1.0).unwrap();
    let plan = permissible_step(&consts).unwrap();
    let (_, l_star) = quadratic_optimum(&a, &b, &problem, &ocfg);
    let eps = 1e-6;
    let gap_init = oracle::elbo(&init, &problem, &ocfg).unwrap() - l_star;
    // run exactly as long as the 3x-budget slack allows; failing to reach
    // the target inside that window fails the criterion
    let budget = (eps / gap_init).ln() / plan.contraction.ln();
    let mut cfg = StepConfig::new(plan.rho, 1.0).unwrap();
    cfg.max_iters = (3.0 * budget).ceil() as usize + 10;
    let rec = run_optimizer(Method::Srvn, &init, &problem, &ocfg, &cfg).unwrap();

    let mut contraction_ok = true;
    let mut worst_ratio = 0.0_f64;
    let mut prev: Option<f64> = None;
    for row in &rec.rows {
        let gap = row.neg_elbo - l_star;
        if gap < 1e-12 {
            break;
        }
        if let Some(p) = prev {
            let ratio = gap / p;
            worst_ratio = worst_ratio.max(ratio);
            if ratio > plan.contraction + 1e-10 {
                contraction_ok = false;
            }
        }
        prev = Some(gap);
    }

    let observed = rec
        .rows
        .iter()
        .find(|r| r.neg_elbo - l_star <= eps)
        .map(|r| r.iter);
    // the closed-form count is a sufficient budget; 3x slack covers
    // constant estimation
    let within_budget = observed.is_some_and(|it| it as f64 <= 3.0 * budget);
    let observed = observed.map_or_else(|| "never".to_string(), |it| it.to_string());
    let elapsed = start.elapsed().as_secs_f64();
    report(
        4,
        "certified contraction",
        contraction_ok && within_budget && elapsed < 5.0,
        &format!(
            "worst per-step ratio {worst_ratio:.4} vs certified {:.4}; \
             {observed} iterations to 1e-6 vs budget {budget:.0} (3x slack); {elapsed:.1} s",
            plan.contraction
        ),
    );
}

#[test]
fn criterion_05_flow_decay_rate() {
    let problem = ProblemSpec::quadratic(
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        0.0,
        1.0,
    )
    .unwrap();
    let init = GaussianParams::new(
        DVector::from_vec(vec![1.0]),
        DMatrix::from_vec(1, 1, vec![2.0]),
    )
    .unwrap();
    let cfg = FlowConfig {
        parameterization: Parameterization::Mc,
        scheme: Scheme::Rk4,
        h: 1e-3,
        horizon: 4.0,
        record_every: 50,
    };
    let ocfg = OracleConfig::default();
    let traj = integrate_flow(&init, &problem, &ocfg, &cfg).unwrap();
    let l_star = oracle::elbo(&GaussianParams::standard(1), &problem, &ocfg).unwrap();

    // constants certified from the trajectory itself
    let lambda_min = traj
        .states
        .iter()
        .map(|q| symmetric_eig_range(&q.covariance()).0)
        .fold(f64::INFINITY, f64::min);
    let mu = 1.0 * lambda_min.min(lambda_min * lambda_min / 2.0); // delta = 1
    let gaps = traj.kl_gaps(l_star);
    let gap0 = gaps[0].1;
    let mut ok = true;
    let mut worst_excess = 0.0_f64;
    for &(t, gap) in &gaps {
        if gap <= 1e-13 {
            continue;
        }
        let bound = (-2.0 * mu * t).exp() * gap0 * 1.05;
        worst_excess = worst_excess.max(gap / bound);
        if gap > bound {
            ok = false;
        }
    }
    report(
        5,
        "flow decay rate",
        ok,
        &format!(
            "gap(t) / bound peaks at {worst_excess:.3} <= 1 with mu = {mu:.3} over {} points",
            gaps.len()
        ),
    );
}

#[test]
fn criterion_06_parameterization_invariance() {
    let a = DMatrix::from_row_slice(2, 2, &[1.6, 0.3, 0.3, 1.1]);
    let b = DVector::from_vec(vec![0.5, -0.4]);
    let problem = ProblemSpec::quadratic(a, b, 0.0, 1.0).unwrap();
    let init = GaussianParams::isotropic(DVector::from_vec(vec![1.0, -1.0]), 1.6).unwrap();
    let ocfg = OracleConfig::default();
    let base = FlowConfig {
        parameterization: Parameterization::Mc,
        scheme: Scheme::Rk4,
        h: 1e-3,
        horizon: 5.0,
        record_every: 250,
    };
    let mc = integrate_flow(&init, &problem, &ocfg, &base).unwrap();
    let mv = integrate_flow(
        &init,
        &problem,
        &ocfg,
        &FlowConfig { parameterization: Parameterization::Mv, ..base },
    )
    .unwrap();
    let mut worst = 0.0_f64;
    for (qa, qb) in mc.states.iter().zip(&mv.states) {
        worst = worst.max((qa.covariance() - qb.covariance()).norm());
    }

    // Euler in (m, C) at step rho reproduces the square-root iterates bit
    // for bit
    let rho = 0.05;
    let steps = 50usize;
    let euler = integrate_flow(
        &init,
        &problem,
        &ocfg,
        &FlowConfig {
            parameterization: Parameterization::Mc,
            scheme: Scheme::Euler,
            h: rho,
            horizon: rho * steps as f64,
            record_every: 1,
        },
    )
    .unwrap();
    let step_cfg = StepConfig::new(rho, 1.0).unwrap();
    let mut q = init;
    let mut exact = true;
    for state in euler.states.iter().skip(1) {
        let est = oracle::moments(&q, &problem, &ocfg).unwrap();
        q = srvn_step(&q, &est, &step_cfg).unwrap();
        if q.mean() != state.mean() || q.chol() != state.chol() {
            exact = false;
            break;
        }
    }
    report(
        6,
        "parameterization invariance",
        worst < 1e-6 && exact,
        &format!(
            "covariance gap {worst:.2e} <= 1e-6 over T = 5; Euler vs square-root \
             iterates bit-identical over {steps} steps: {exact}"
        ),
    );
}

#[test]
fn criterion_07_metric_certificates() {
    let mut rng = ChaCha20Rng::seed_from_u64(107);
    let ocfg = OracleConfig::default();
    let mut lemma_violations = 0usize;
    let mut pl_violations = 0usize;
    let total = 500usize;
    for _ in 0..total {
        let d = rng.gen_range(1..=8);
        let ops = build_vectorization(d).unwrap();
        let q = sample_in_hypothesis_state(&mut rng, d);
        let (v_lo, _) = symmetric_eig_range(&q.covariance());
        let c_frob = q.chol().norm();

        let consts =
            TheoryConstants::new(1.0, 1.0, v_lo * 0.999, c_frob * 0.999, c_frob * 1.001).unwrap();
        let lem = check_lemma1(&q, &consts, &ops).unwrap();
        if lem.in_hypothesis && lem.violated {
            lemma_violations += 1;
        }

        let a = random_spd(&mut rng, d, 0.4);
        let b = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let problem = ProblemSpec::quadratic(a.clone(), b.clone(), 0.0, 1.0).unwrap();
        let (_, l_star) = quadratic_optimum(&a, &b, &problem, &ocfg);
        let eig = SymmetricEigen::new(a.clone());
        let delta = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let m_up = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let pl_consts = TheoryConstants::new(
            delta,
            m_up.max(delta),
            v_lo * 0.999,
            c_frob * 0.999,
            c_frob * 1.001,
        )
        .unwrap();
        let pl = check_pl(&q, &problem, &ocfg, &pl_consts, &ops, l_star).unwrap();
        if !pl.satisfied {
            pl_violations += 1;
        }
    }

    let mut worst_fim = 0.0_f64;
    for d in 1..=3 {
        let ops = build_vectorization(d).unwrap();
        let q = sample_in_hypothesis_state(&mut rng, d);
        let brute = mc_fim(&q, &ops, 400_000, 7).unwrap();
        let closed = assemble_fim_inverse(&q, &ops).unwrap();
        let f_m_inv = brute.f_m_inv.try_inverse().unwrap();
        let f_c_inv = brute.f_c_inv.try_inverse().unwrap();
        worst_fim = worst_fim
            .max((&f_m_inv - &closed.f_m_inv).norm() / closed.f_m_inv.norm())
            .max((&f_c_inv - &closed.f_c_inv).norm() / closed.f_c_inv.norm());
    }

    report(
        7,
        "eigenvalue and dominance certificates",
        lemma_violations == 0 && pl_violations == 0 && worst_fim < 0.02,
        &format!(
            "{lemma_violations} eigenvalue-bound and {pl_violations} dominance violations \
             in {total} states (d <= 8); sampled-FIM relative error {worst_fim:.4} < 0.02"
        ),
    );
}

#[test]
fn criterion_08_biased_plateau() {
    let mut rng = ChaCha20Rng::seed_from_u64(108);
    let d = 2;
    let a = random_spd(&mut rng, d, 0.8);
    let b = DVector::zeros(d);
    let problem = ProblemSpec::quadratic(a.clone(), b.clone(), 0.0, 1.0).unwrap();
    let init = GaussianParams::isotropic(DVector::from_vec(vec![1.0, -1.0]), 1.1).unwrap();
    let clean_ocfg = OracleConfig::default();
    let consts = estimate_constants(&problem, &clean_ocfg, &init, 1.0).unwrap();
    let plan = permissible_step(&consts).unwrap();

    // constant injected bias: zeta_g on the gradient; the Hessian bias is
    // scaled so that ||b_H C||_F stays at zeta_H across the certified band
    let zeta = 1e-2;
    let bias_g = DVector::from_vec(vec![zeta / (2.0_f64).sqrt(); d]);
    let bias_h = DMatrix::identity(d, d) * (zeta / consts.xi_u / (d as f64).sqrt());
    let biased_ocfg = OracleConfig {
        bias_g: Some(bias_g.clone()),
        bias_h: Some(bias_h.clone()),
        ..Default::default()
    };

    let mut cfg = StepConfig::new(plan.rho, 1.0).unwrap();
    cfg.max_iters = 4000;
    cfg.grad_tol = 1e-300; // run to the iteration cap; the bias forbids convergence
    cfg.fixed_point_tol = 1e-300;
    let rec = run_optimizer(Method::Srvn, &init, &problem, &biased_ocfg, &cfg).unwrap();
    let (_, l_star) = quadratic_optimum(&a, &b, &problem, &clean_ocfg);

    // plateau level: average clean gap over the last quarter of the run
    let tail: Vec<f64> = rec.rows[rec.rows.len() * 3 / 4..]
        .iter()
        .map(|r| r.neg_elbo - l_star)
        .collect();
    let plateau = tail.iter().sum::<f64>() / tail.len() as f64;

    // additive term of the biased-contraction bound with the run's per-block
    // descent coefficients: the two arms of eta
    let zeta_g2 = bias_g.norm_squared();
    let zeta_h2 = rec
        .rows
        .iter()
        .map(|r| {
            let s = &bias_h * r.c_frob; // ||b_H C||_F = scale * ||C||_F for scalar bias
            s[(0, 0)] * s[(0, 0)] * d as f64
        })
        .fold(0.0_f64, f64::max);
    let xi_u4 = consts.xi_u.powi(4);
    let omega_m =
        consts.lambda_min * plan.rho - consts.m_smooth * plan.rho * plan.rho * xi_u4 / 2.0;
    let omega_c = (2.5_f64).sqrt() * plan.rho * consts.xi_l * consts.xi_l
        - 1.25 * plan.rho * plan.rho * xi_u4 * consts.m_smooth;
    let eta = eta_at(&consts, plan.rho);
    let bound = (omega_m.abs() * zeta_g2 + omega_c.abs() * zeta_h2) / (2.0 * eta * consts.delta);

    let stagnated = plateau > 1e-10;
    let contained = plateau <= 10.0 * bound;
    report(
        8,
        "biased plateau",
        stagnated && contained,
        &format!(
            "plateau gap {plateau:.3e} vs additive bound {bound:.3e} \
             (order-of-magnitude containment, factor {:.2} <= 10)",
            plateau / bound
        ),
    );
}

fn dataset_available(name: &str) -> bool {
    data::load_dataset(name, &data::default_cache_dir(), true).is_ok()
}

fn table_config(
    name: &str,
    dataset: &str,
    beta: f64,
    steps: &[(Method, f64)],
    max_iters: usize,
    subsample: Option<usize>,
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        source: ProblemSource::Dataset { name: dataset.into() },
        methods: steps.iter().map(|&(m, _)| m).collect(),
        steps: steps.iter().copied().collect::<HashMap<_, _>>(),
        gamma: 1.0,
        beta,
        seeds: vec![1],
        max_iters,
        subsample,
        ..Default::default()
    }
}

#[test]
fn criterion_09_desk_scale_reproduction() {
    let n = 9;
    let name = "desk-scale benchmark reproduction";
    for needed in ["diabetes-scale", "mushrooms", "covtype-scale"] {
        if !dataset_available(needed) {
            skip(n, name, &format!("dataset '{needed}' unavailable offline"));
            return;
        }
    }
    let start = Instant::now();
    let cache = data::default_cache_dir();
    let tmp = tempfile::TempDir::new().unwrap();

    // diabetes: all three methods should land on the published terminal values
    let steps = [(Method::Vn, 5e-3), (Method::Srvn, 5e-3), (Method::Bwgd, 9e-4)];
    let cfg = table_config("diabetes", "diabetes-scale", 1e-2, &steps, 3000, None);
    let out = run_experiment(&cfg, "", &cache, true, tmp.path()).unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for o in &out.outcomes {
        let rec = o.record.as_ref().expect("diabetes run completes");
        let train = rec.rows.last().unwrap().neg_elbo;
        let test = o.test.expect("dataset run has test metrics");
        let train_ok = (train - 301.18).abs() / 301.18 <= 0.05;
        let nll_ok = (test.nll_sum - 79.72).abs() / 79.72 <= 0.05;
        let acc_ok = (test.accuracy - 0.74).abs() <= 0.02;
        ok &= train_ok && nll_ok && acc_ok;
        detail.push_str(&format!(
            "{}: train {train:.2} (301.18 +-5%), nll {:.2} (79.72 +-5%), acc {:.3} (0.74 +-0.02); ",
            o.method.as_str(),
            test.nll_sum,
            test.accuracy
        ));
    }

    // mushrooms: terminal train objective ordering srvn <= vn < bwgd
    let steps = [(Method::Vn, 2.5e-4), (Method::Srvn, 2.5e-4), (Method::Bwgd, 8.5e-5)];
    let cfg = table_config("mushrooms", "mushrooms", 1e-2, &steps, 2000, None);
    let out = run_experiment(&cfg, "", &cache, true, tmp.path()).unwrap();
    let vn = terminal_neg_elbo(&out.outcomes, Method::Vn).unwrap();
    let srvn = terminal_neg_elbo(&out.outcomes, Method::Srvn).unwrap();
    let bwgd = terminal_neg_elbo(&out.outcomes, Method::Bwgd).unwrap();
    let mush_ok = srvn <= vn && vn < bwgd;
    ok &= mush_ok;
    detail.push_str(&format!(
        "mushrooms ordering srvn {srvn:.2} <= vn {vn:.2} < bwgd {bwgd:.2}: {mush_ok}; "
    ));

    // covtype subsample: natural-gradient methods beat bwgd to a fixed gap
    let steps = [(Method::Vn, 1e-5), (Method::Srvn, 1e-5), (Method::Bwgd, 1e-6)];
    let cfg = table_config("covtype", "covtype-scale", 2e-2, &steps, 800, Some(5000));
    let out = run_experiment(&cfg, "", &cache, true, tmp.path()).unwrap();
    let vn = terminal_neg_elbo(&out.outcomes, Method::Vn).unwrap();
    let srvn = terminal_neg_elbo(&out.outcomes, Method::Srvn).unwrap();
    let bwgd = terminal_neg_elbo(&out.outcomes, Method::Bwgd).unwrap();
    let near = (vn - srvn).abs() / vn.abs().max(1.0) < 0.05;
    let cov_ok = near && vn < bwgd && srvn < bwgd;
    ok &= cov_ok;
    detail.push_str(&format!(
        "covtype-5000 vn {vn:.2} ~ srvn {srvn:.2}, both < bwgd {bwgd:.2}: {cov_ok}"
    ));

    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 300.0;
    report(n, name, ok, &format!("{detail}; {elapsed:.0} s < 300 s"));
}

#[test]
fn criterion_10_determinism() {
    // the benchmark config when cached, otherwise a synthetic stand-in with
    // the identical emission path
    let use_dataset = dataset_available("diabetes-scale");
    let (cfg, label) = if use_dataset {
        let steps = [(Method::Vn, 5e-3), (Method::Srvn, 5e-3), (Method::Bwgd, 9e-4)];
        (
            table_config("det", "diabetes-scale", 1e-2, &steps, 300, None),
            "diabetes-scale",
        )
    } else {
        (
            ExperimentConfig {
                name: "det".into(),
                source: ProblemSource::SyntheticLogistic { n: 150, dim: 4, seed: 11 },
                methods: vec![Method::Vn, Method::Srvn, Method::Bwgd],
                steps: [(Method::Vn, 5e-2), (Method::Srvn, 5e-2), (Method::Bwgd, 2e-2)]
                    .into_iter()
                    .collect(),
                beta: 1e-2,
                seeds: vec![1],
                max_iters: 120,
                ..Default::default()
            },
            "synthetic logistic (dataset cache empty)",
        )
    };
    let cache = data::default_cache_dir();
    let t1 = tempfile::TempDir::new().unwrap();
    let t2 = tempfile::TempDir::new().unwrap();
    run_experiment(&cfg, "", &cache, true, t1.path()).unwrap();
    run_experiment(&cfg, "", &cache, true, t2.path()).unwrap();

    let mut compared = 0usize;
    let mut identical = true;
    let mut names: Vec<String> = std::fs::read_dir(t1.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        // measured wall-clock outputs (per-iteration timings and the
        // seconds-axis series) are outside the determinism contract
        .filter(|f| {
            f.ends_with(".csv") && !f.ends_with("_timing.csv") && !f.ends_with("_seconds.csv")
        })
        .collect();
    names.sort();
    for f in &names {
        let a = std::fs::read(t1.path().join(f)).unwrap();
        let b = std::fs::read(t2.path().join(f)).unwrap();
        if a != b {
            identical = false;
        }
        compared += 1;
    }
    report(
        10,
        "byte-identical reruns",
        identical && compared > 0,
        &format!("{compared} CSV files byte-identical across two runs on {label}"),
    );
}
