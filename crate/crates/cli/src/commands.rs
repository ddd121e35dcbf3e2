//! The four subcommands. Each builds a [`Table`], optionally checks it
//! against the acceptance thresholds, and writes the CSV and manifest.
//!
//! CSV schemas (column order is fixed):
//!
//! - `converge.csv`: `N,dt,iters_avg,iters_min,iters_max,error,ratio`
//! - `spectrum.csv`: `index,numeric_mag,exact_mag,asymptotic_mag`
//! - `condition.csv`: `dt,kappa,sigma_max,sigma_min`, then `# slope=...`
//! - `sdc.csv`: `intervals,Nk,dt_over_k,sweeps,iters_avg,error,ratio`
//!   (one row per refinement and sweep count)

use std::time::Instant;

use csie::analysis;
use csie::geom::CurveSpec;
use csie::solver::{self, Problem, SchemeKind, TimeScheme};
use csie::testbed::{self, ErrorMetric, ExactSolutionCfg};
use serde::Serialize;

use crate::output::{emit, num, Table};
use crate::{CommonArgs, ConditionArgs, Failure, RunConfig, THREADS_ENV};

/// One completed march with its error at the final time.
struct RunResult {
    error: f64,
    iters_avg: f64,
    iters_min: usize,
    iters_max: usize,
    step_seconds: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig<'a, A: Serialize> {
    args: &'a A,
    geometry: String,
    scheme: Option<String>,
    threads: Option<String>,
}

fn resolved<'a, A: Serialize>(args: &'a A, curve: &CurveSpec, scheme: Option<SchemeKind>) -> ResolvedConfig<'a, A> {
    ResolvedConfig {
        args,
        geometry: curve.to_string(),
        scheme: scheme.map(|s| s.to_string()),
        threads: std::env::var(THREADS_ENV).ok(),
    }
}

fn exact_cfg(args: &CommonArgs) -> ExactSolutionCfg {
    let mut cfg = ExactSolutionCfg {
        phase: args.phase,
        ..ExactSolutionCfg::default()
    };
    if args.zero_data {
        cfg.terms = [false; 4];
    }
    cfg
}

fn march(problem: &Problem, cfg: &RunConfig, kind: SchemeKind, steps: usize) -> Result<RunResult, Failure> {
    let args = &cfg.args;
    let mut scheme = TimeScheme::new(kind, args.t_final, steps);
    scheme.gmres_tol = args.gmres_tol;
    scheme.gmres_maxit = args.gmres_maxit;
    scheme.deflate = args.deflate;
    scheme.unstable_ok = args.unstable_ok;
    let exact = exact_cfg(args);
    let grid = problem.grid();
    let data = |t: f64| testbed::boundary_data(grid, t, &exact);
    let outcome = solver::run(problem, &scheme, &data)?;

    let metric = ErrorMetric {
        samples: args.samples,
        seed: args.seed,
        ..ErrorMetric::default()
    };
    let points = testbed::sample_points(grid, metric.samples, metric.seed, metric.separation)?;
    let field = solver::eval_velocity(problem, &outcome.history, &points, outcome.t_final)?;
    let report = testbed::error_report(points, field.values, outcome.t_final, &exact)?;
    let its = &outcome.report.iterations;
    Ok(RunResult {
        error: report.error,
        iters_avg: outcome.report.avg_iterations(),
        iters_min: its.iter().copied().min().unwrap_or(0),
        iters_max: its.iter().copied().max().unwrap_or(0),
        step_seconds: outcome.report.step_seconds.clone(),
    })
}

fn ratio(prev: Option<f64>, cur: f64) -> f64 {
    prev.map_or(f64::NAN, |p| p / cur)
}

fn finish(checks: Vec<String>, check: bool) -> Result<(), Failure> {
    if check && !checks.is_empty() {
        return Err(Failure::Check(checks.join("; ")));
    }
    for c in &checks {
        eprintln!("csie: warning: {c}");
    }
    Ok(())
}

/// Nominal convergence order of a uniform scheme.
fn nominal_order(kind: SchemeKind) -> Option<i32> {
    match kind {
        SchemeKind::Fi => Some(2),
        SchemeKind::Pc { order } => Some(order as i32),
        SchemeKind::Sdc { .. } => None,
    }
}

pub fn converge(cfg: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let args = &cfg.args;
    let problem = Problem::new(cfg.curve, args.n)?;
    let mut table = Table::new(&["N", "dt", "iters_avg", "iters_min", "iters_max", "error", "ratio"]);
    let mut steps_seconds = Vec::new();
    let mut checks = Vec::new();
    let mut prev = None;
    let mut last_ratio = f64::NAN;
    for &n_steps in &args.steps {
        let res = march(&problem, cfg, cfg.scheme, n_steps)?;
        let r = ratio(prev, res.error);
        table.push(vec![
            n_steps.to_string(),
            num(args.t_final / n_steps as f64),
            num(res.iters_avg),
            res.iters_min.to_string(),
            res.iters_max.to_string(),
            num(res.error),
            num(r),
        ]);
        if matches!(cfg.scheme, SchemeKind::Pc { .. }) && res.iters_avg > 20.0 {
            checks.push(format!("N={n_steps}: average iterations {:.1} > 20", res.iters_avg));
        }
        steps_seconds.extend(res.step_seconds);
        prev = Some(res.error);
        last_ratio = r;
    }
    // The finest ratio should sit in [0.75, 2]·2^p for a scheme of order p.
    if let (Some(p), true) = (nominal_order(cfg.scheme), args.steps.len() > 1) {
        let target = 2f64.powi(p);
        if !(last_ratio >= 0.75 * target && last_ratio <= 2.0 * target) {
            checks.push(format!(
                "finest error ratio {last_ratio:.3} outside [{:.1}, {:.1}]",
                0.75 * target,
                2.0 * target
            ));
        }
    }
    let config = resolved(args, &cfg.curve, Some(cfg.scheme));
    emit(&args.out, "converge", &table, &config, start.elapsed().as_secs_f64(), &steps_seconds, &checks)?;
    finish(checks, args.check)
}

/// Runs SDC for every sweep count `0..=J` on each interval count.
pub fn sdc(cfg: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let args = &cfg.args;
    let SchemeKind::Sdc { stages, sweeps } = cfg.scheme else {
        return Err(Failure::Config(format!("sdc needs an sdc scheme, got '{}'", cfg.scheme)));
    };
    if stages > 5 {
        return Err(Failure::Config(format!(
            "{stages} stages need stage polynomials of degree {}, but product integration is limited to degree 4 (k <= 5)",
            stages - 1
        )));
    }
    let problem = Problem::new(cfg.curve, args.n)?;
    let mut table = Table::new(&["intervals", "Nk", "dt_over_k", "sweeps", "iters_avg", "error", "ratio"]);
    let mut steps_seconds = Vec::new();
    let mut checks = Vec::new();
    let mut prev: Vec<Option<f64>> = vec![None; sweeps + 1];
    for &intervals in &args.steps {
        let mut errors = Vec::with_capacity(sweeps + 1);
        for j in 0..=sweeps {
            let kind = SchemeKind::Sdc { stages, sweeps: j };
            let res = march(&problem, cfg, kind, intervals)?;
            let r = ratio(prev[j], res.error);
            table.push(vec![
                intervals.to_string(),
                (intervals * stages).to_string(),
                num(args.t_final / (intervals * stages) as f64),
                j.to_string(),
                num(res.iters_avg),
                num(res.error),
                num(r),
            ]);
            if res.iters_avg > 5.0 {
                checks.push(format!("N={intervals}, J={j}: average iterations {:.1} > 5", res.iters_avg));
            }
            steps_seconds.extend(res.step_seconds);
            prev[j] = Some(res.error);
            errors.push(res.error);
        }
        for j in 2..errors.len() {
            if errors[j] > 2.0 * errors[1] {
                checks.push(format!(
                    "N={intervals}: {j} sweeps give {:.3e}, more than twice the single-sweep {:.3e}",
                    errors[j], errors[1]
                ));
            }
        }
    }
    let config = resolved(args, &cfg.curve, Some(cfg.scheme));
    emit(&args.out, "sdc", &table, &config, start.elapsed().as_secs_f64(), &steps_seconds, &checks)?;
    finish(checks, args.check)
}

#[derive(Debug, Serialize)]
struct SpectrumSummary {
    excluded_magnitude: f64,
    head_rows: usize,
    head_max_deviation: f64,
}

fn circle_radius(curve: &CurveSpec, command: &str) -> Result<f64, Failure> {
    match *curve {
        CurveSpec::Circle { r } => Ok(r),
        other => Err(Failure::Config(format!("{command} needs a circle geometry, got '{other}'"))),
    }
}

/// Eigenvalue magnitudes of the FI matrix at `--dt` on a circle. The
/// smallest (nullspace) magnitude is excluded from the table and reported
/// in `spectrum_summary.json`.
pub fn spectrum(cfg: &RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let args = &cfg.args;
    let r = circle_radius(&cfg.curve, "spectrum")?;
    let mut rows = analysis::spectrum_compare(r, args.n, args.dt)?;
    let null = rows.pop().map_or(f64::NAN, |row| row.numeric);

    let mut table = Table::new(&["index", "numeric_mag", "exact_mag", "asymptotic_mag"]);
    for row in &rows {
        table.push(vec![row.index.to_string(), num(row.numeric), num(row.exact), num(row.asymptotic)]);
    }
    // The resolved head: all but the eight smallest of the 3n/2 largest.
    let head = (3 * args.n / 2).saturating_sub(8).min(rows.len());
    let deviation = rows[..head]
        .iter()
        .map(|row| (row.numeric - row.exact).abs())
        .fold(0.0, f64::max);
    let mut checks = Vec::new();
    if !(null <= 1e-12) {
        checks.push(format!("excluded eigenvalue magnitude {null:.3e} > 1e-12"));
    }
    if !(deviation <= 1e-6) {
        checks.push(format!("head deviation {deviation:.3e} > 1e-6"));
    }
    let summary = SpectrumSummary {
        excluded_magnitude: null,
        head_rows: head,
        head_max_deviation: deviation,
    };
    std::fs::create_dir_all(&args.out)?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Io(e.to_string()))?;
    std::fs::write(args.out.join("spectrum_summary.json"), json)?;

    let config = resolved(args, &cfg.curve, None);
    emit(&args.out, "spectrum", &table, &config, start.elapsed().as_secs_f64(), &[], &checks)?;
    finish(checks, args.check)
}

/// Condition numbers of the FI matrix on a circle over a list of step sizes.
pub fn condition(args: &ConditionArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let curve: CurveSpec = args.geometry.parse()?;
    let r = circle_radius(&curve, "condition")?;
    if args.dts.is_empty() {
        return Err(Failure::Config("--dt needs at least one step size".into()));
    }
    if !args.force && args.n > crate::MAX_NODES {
        return Err(Failure::Config(format!(
            "{} boundary nodes exceed {}; pass --force to run anyway",
            args.n,
            crate::MAX_NODES
        )));
    }
    let points = analysis::condition_sweep(r, args.n, &args.dts)?;
    let mut table = Table::new(&["dt", "kappa", "sigma_max", "sigma_min"]);
    let mut checks = Vec::new();
    for p in &points {
        table.push(vec![num(p.dt), num(p.kappa), num(p.sigma_max), num(p.sigma_min)]);
        if !(p.kappa.is_finite() && p.kappa > 0.0) {
            checks.push(format!("dt={}: condition number {} is not positive and finite", p.dt, p.kappa));
        }
    }
    if points.len() > 1 {
        let dts: Vec<f64> = points.iter().map(|p| p.dt).collect();
        let kappas: Vec<f64> = points.iter().map(|p| p.kappa).collect();
        let slope = analysis::loglog_slope(&dts, &kappas)?;
        table.comment(format!("slope={}", num(slope)));
        if !(0.8..=1.2).contains(&slope) {
            checks.push(format!("log-log slope {slope:.3} outside [0.8, 1.2]"));
        }
    }
    let config = resolved(args, &curve, None);
    emit(&args.out, "condition", &table, &config, start.elapsed().as_secs_f64(), &[], &checks)?;
    finish(checks, args.check)
}
