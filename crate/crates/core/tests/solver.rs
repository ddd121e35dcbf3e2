use csie::solver::{eval_velocity, run, MarchOutcome, Problem, SchemeKind, TimeScheme};
use csie::testbed::{boundary_data, error_report, sample_points, ExactSolutionCfg};
use csie::Error;

fn march(problem: &Problem, scheme: &TimeScheme) -> MarchOutcome {
    let cfg = ExactSolutionCfg::default();
    let data = |t: f64| boundary_data(problem.grid(), t, &cfg);
    run(problem, scheme, &data).unwrap()
}

fn final_error(problem: &Problem, out: &MarchOutcome) -> f64 {
    let cfg = ExactSolutionCfg::default();
    let pts = sample_points(problem.grid(), 20, 0, 5.0).unwrap();
    let v = eval_velocity(problem, &out.history, &pts, out.t_final).unwrap();
    error_report(pts, v.values, out.t_final, &cfg).unwrap().error
}

#[test]
fn fi_and_pc2_converge_at_second_order_on_a_circle() {
    let problem = Problem::new("circle:r=0.5".parse().unwrap(), 64).unwrap();
    for kind in [SchemeKind::Fi, SchemeKind::Pc { order: 2 }] {
        let errs: Vec<f64> = [20, 40]
            .iter()
            .map(|&steps| final_error(&problem, &march(&problem, &TimeScheme::new(kind, 0.5, steps))))
            .collect();
        // At least second order (coarse PC(2) steps are still pre-asymptotic).
        assert!(errs[0] / errs[1] >= 3.0, "{kind}: {errs:?}");
    }
}

#[test]
fn single_stage_sdc_without_sweeps_is_pc2() {
    let problem = Problem::new("ellipse".parse().unwrap(), 48).unwrap();
    let pc = march(&problem, &TimeScheme::new(SchemeKind::Pc { order: 2 }, 0.3, 12));
    let sdc = march(&problem, &TimeScheme::new(SchemeKind::Sdc { stages: 1, sweeps: 0 }, 0.3, 12));
    assert_eq!(pc.history.times.len(), sdc.history.times.len());
    for (a, b) in pc.history.mu.iter().zip(&sdc.history.mu) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-11 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn sdc_sweeps_reduce_the_error() {
    let problem = Problem::new("circle:r=0.5".parse().unwrap(), 64).unwrap();
    let e0 = final_error(&problem, &march(&problem, &TimeScheme::new(SchemeKind::Sdc { stages: 3, sweeps: 0 }, 0.5, 8)));
    let e2 = final_error(&problem, &march(&problem, &TimeScheme::new(SchemeKind::Sdc { stages: 3, sweeps: 2 }, 0.5, 8)));
    assert!(e2 < e0, "{e0:e} {e2:e}");
}

#[test]
fn deflated_fi_agrees_with_plain_fi() {
    let problem = Problem::new("star".parse().unwrap(), 64).unwrap();
    let plain = march(&problem, &TimeScheme::new(SchemeKind::Fi, 0.2, 4));
    let mut scheme = TimeScheme::new(SchemeKind::Fi, 0.2, 4);
    scheme.deflate = true;
    let deflated = march(&problem, &scheme);
    let (ep, ed) = (final_error(&problem, &plain), final_error(&problem, &deflated));
    // Both solve to a 1e−12 residual; the condition number (~1e4) bounds
    // how far the iterates may drift apart.
    assert!((ep - ed).abs() <= 1e-5 * ep, "{ep:e} {ed:e}");
}

#[test]
fn reports_are_complete() {
    let problem = Problem::new("ellipse".parse().unwrap(), 32).unwrap();
    let out = march(&problem, &TimeScheme::new(SchemeKind::Pc { order: 2 }, 0.1, 5));
    assert_eq!(out.report.step_seconds.len(), 5);
    assert_eq!(out.report.flux_mean.len(), 5);
    // Two solves per PC step.
    assert_eq!(out.report.iterations.len(), 10);
    assert!(out.report.max_flux_mean() < 1e-10);
    assert!(out.report.residuals.iter().all(|&r| r <= 1e-12));
}

#[test]
fn unstable_and_unsupported_schemes_are_refused() {
    let problem = Problem::new("circle".parse().unwrap(), 32).unwrap();
    let cfg = ExactSolutionCfg::default();
    let data = |t: f64| boundary_data(problem.grid(), t, &cfg);
    let pc4 = TimeScheme::new(SchemeKind::Pc { order: 4 }, 0.1, 4);
    assert!(matches!(run(&problem, &pc4, &data), Err(Error::Config(_))));
    let pc5 = TimeScheme::new(SchemeKind::Pc { order: 5 }, 0.1, 4);
    assert!(matches!(run(&problem, &pc5, &data), Err(Error::Unsupported { .. })));
    let sdc6 = TimeScheme::new(SchemeKind::Sdc { stages: 6, sweeps: 1 }, 0.1, 4);
    assert!(run(&problem, &sdc6, &data).is_err());
}

#[test]
fn iteration_cap_surfaces_as_non_convergence() {
    let problem = Problem::new("circle".parse().unwrap(), 32).unwrap();
    let cfg = ExactSolutionCfg::default();
    let data = |t: f64| boundary_data(problem.grid(), t, &cfg);
    let mut scheme = TimeScheme::new(SchemeKind::Fi, 0.5, 2);
    scheme.gmres_maxit = Some(2);
    assert!(matches!(run(&problem, &scheme, &data), Err(Error::NotConverged { .. })));
}
