use dbgd::direction::PhiRule;
use dbgd::metrics::stationarity_report_optimal;
use dbgd::problems::{quadratic_sanity_problem, toy_problem, SmoothnessProfile};
use dbgd::solver::{best_iterate, run, Method, SolverConfig, StepMode, StopTolerances};
use dbgd::verify::{inequality_audit, lemma_radius, local_certificate, rate_fit};

fn dbgd(beta: f64) -> Method {
    Method::Dbgd(PhiRule::GradNormSquared { beta })
}

#[test]
fn theorem_schedule_on_quadratic_reaches_frozen_thresholds() {
    let p = quadratic_sanity_problem(5).unwrap();
    let cfg = SolverConfig::new(dbgd(1.0), StepMode::TheoremSchedule { p: 1.0 }, 10_000);
    let out = run(&p, &cfg, &[0.5; 5]).unwrap();
    let k = best_iterate(&out.trace).unwrap();
    assert_eq!(out.trace.k[k], out.best.k);
    assert!(out.trace.grad_g_sq[k] <= 1e-3);
    assert!(out.trace.d_sq[k] <= 1e-2);
    assert_eq!(out.beta, Some(0.1));
}

#[test]
fn toy_dbgd_aligns_gradients() {
    let p = toy_problem();
    let cfg = SolverConfig::new(dbgd(1.0), StepMode::Constant(1e-2), 1000);
    let out = run(&p, &cfg, &[-3.0, -1.0]).unwrap();
    assert_eq!(out.trace.len(), 1000);
    // The run spends most of its budget pinned to the lower-level curve with
    // ∇f opposed to ∇g.
    let aligned = out.trace.cos_theta.iter().flatten().filter(|c| c.abs() >= 0.99).count();
    assert!(aligned > 200, "{aligned}");
}

#[test]
fn audit_on_quadratic_with_valid_constants() {
    let p = quadratic_sanity_problem(5).unwrap();
    let prof = p.smoothness().unwrap();
    let cfg = SolverConfig::new(dbgd(1.0), StepMode::Constant(0.5), 1000);
    let out = run(&p, &cfg, &[0.5; 5]).unwrap();
    let audit = inequality_audit(&out.trace, &prof, 0.5, 1.0).unwrap();
    assert_eq!(audit.rows.len(), 1000);
    assert_eq!(audit.total_violations(), 0, "{audit:?}");
}

#[test]
fn audit_negative_controls() {
    let p = quadratic_sanity_problem(5).unwrap();
    let prof = p.smoothness().unwrap();
    let cfg = SolverConfig::new(dbgd(1.0), StepMode::Constant(0.5), 1000);
    let out = run(&p, &cfg, &[0.5; 5]).unwrap();
    let half_lf = SmoothnessProfile { lf: prof.lf / 2.0, ..prof };
    let half_lg = SmoothnessProfile { lg: prof.lg / 2.0, ..prof };
    let half_gf = SmoothnessProfile { grad_bound: prof.grad_bound.map(|g| g / 2.0), ..prof };
    assert!(inequality_audit(&out.trace, &half_lf, 0.5, 1.0).unwrap().descent_f_violations > 0);
    assert!(inequality_audit(&out.trace, &half_lg, 0.5, 1.0).unwrap().descent_g_violations > 0);
    assert!(inequality_audit(&out.trace, &half_gf, 0.5, 1.0).unwrap().lambda_bound_violations > 0);
}

#[test]
fn audit_with_zero_beta() {
    let p = quadratic_sanity_problem(3).unwrap();
    let prof = p.smoothness().unwrap();
    let cfg = SolverConfig::new(dbgd(0.0), StepMode::Constant(0.5), 1000);
    let out = run(&p, &cfg, &[0.2, 0.7, 0.4]).unwrap();
    let audit = inequality_audit(&out.trace, &prof, 0.5, 0.0).unwrap();
    assert_eq!(audit.descent_g_violations, 0);
    assert_eq!(audit.total_violations(), 0);
}

#[test]
fn rate_fit_examples() {
    let p = quadratic_sanity_problem(5).unwrap();
    let fit = rate_fit(&p, &[0.5; 5], 0.0, &[100, 1000, 10_000]).unwrap();
    assert!(fit.passed);
    assert!(fit.slope <= -2.0 / 3.0 + 0.3);
    let fit = rate_fit(&p, &[0.5; 5], 1.0, &[100, 1000, 10_000]).unwrap();
    assert_eq!(fit.theoretical_slope, -0.75);
}

#[test]
fn local_certificate_at_a_case_two_point() {
    let p = toy_problem();
    let prof = p.smoothness().unwrap();
    let stop = StopTolerances { eps_f: 1e-2, eps_g: 1e-8 };
    let cfg = SolverConfig::new(dbgd(1.0), StepMode::Constant(0.005), 1000).with_stop(stop);
    let out = run(&p, &cfg, &[-1.0, 1.0]).unwrap();
    assert!(out.stopped_early);
    let x = out.final_x.unwrap();
    let rep = stationarity_report_optimal(&p, &x).unwrap();
    assert!(rep.cos_theta.unwrap() <= -0.99 && rep.lambda > 10.0);
    let radius = lemma_radius(rep.d_sq, rep.grad_g_sq, rep.lambda, 1.0, &prof);
    let cert = local_certificate(&p, &x, rep.d_sq, rep.grad_g_sq, 1.0, radius, 5000, 17).unwrap();
    assert!(cert.passed, "{cert:?}");
    assert!(cert.lower_sublevel_samples > 0);
}

#[test]
fn runs_are_bitwise_reproducible() {
    let p = toy_problem();
    let cfg = SolverConfig::new(Method::Penalty { lambda: 10.0 }, StepMode::Constant(1e-2), 1000);
    let a = run(&p, &cfg, &[-3.0, -1.0]).unwrap();
    let b = run(&p, &cfg, &[-3.0, -1.0]).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.final_x, b.final_x);
}
