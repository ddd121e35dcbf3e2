//! Time marching for the combined source integral equations: fully implicit
//! (FI), predictor–corrector PC(k), and spectral deferred correction (SDC).

pub mod gmres;
mod linsys;
pub mod march;
pub mod sdc;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::geom::{discretize, BoundaryGrid, CurveSpec, SingularRule};
use crate::heat_pot::{perp_grad_shp_eval, DensityHistory, HeatContext};
use crate::laplace_pot::{build_laplace_ops, grad_slp_eval, null_vector, FieldEval, LaplaceOps};
use crate::testbed::BoundaryData;
use crate::{Error, Result, Vec2};

pub use gmres::{gmres, GmresOutcome, GmresStatus};
pub use march::{fi_assemble, march_uniform};
pub use sdc::march_sdc;

/// Marching scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Fi,
    Pc { order: usize },
    Sdc { stages: usize, sweeps: usize },
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::Fi => write!(f, "fi"),
            SchemeKind::Pc { order } => write!(f, "pc:k={order}"),
            SchemeKind::Sdc { stages, sweeps } => write!(f, "sdc:k={stages},sweeps={sweeps}"),
        }
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    /// Parses `fi`, `pc:k=2` or `sdc:k=5,sweeps=4`.
    fn from_str(text: &str) -> Result<Self> {
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut k = None;
        let mut sweeps = None;
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (key, val) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{item}'")))?;
            let v: usize = val
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad integer '{val}' for {key}")))?;
            match key.trim() {
                "k" => k = Some(v),
                "sweeps" => sweeps = Some(v),
                other => return Err(Error::Config(format!("unknown scheme key '{other}'"))),
            }
        }
        match kind.trim() {
            "fi" if k.is_none() && sweeps.is_none() => Ok(SchemeKind::Fi),
            "pc" if sweeps.is_none() => Ok(SchemeKind::Pc { order: k.unwrap_or(2) }),
            "sdc" => Ok(SchemeKind::Sdc {
                stages: k.unwrap_or(5),
                sweeps: sweeps.unwrap_or(4),
            }),
            other => Err(Error::Config(format!("unknown or malformed scheme '{other}'"))),
        }
    }
}

/// Marching configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeScheme {
    pub kind: SchemeKind,
    pub dt: f64,
    pub steps: usize,
    pub gmres_tol: f64,
    /// Defaults to four times the system size.
    pub gmres_maxit: Option<usize>,
    /// Solve the rank-deficient systems with a rank-one deflation.
    pub deflate: bool,
    /// Permit PC(4), which is unstable.
    pub unstable_ok: bool,
}

impl TimeScheme {
    pub fn new(kind: SchemeKind, t_final: f64, steps: usize) -> Self {
        Self {
            kind,
            dt: t_final / steps as f64,
            steps,
            gmres_tol: 1e-12,
            gmres_maxit: None,
            deflate: false,
            unstable_ok: false,
        }
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || self.steps == 0 {
            return Err(Error::Config(format!(
                "need a positive step and at least one step (dt={}, steps={})",
                self.dt, self.steps
            )));
        }
        if !(self.gmres_tol > 0.0) {
            return Err(Error::Config("GMRES tolerance must be positive".into()));
        }
        match self.kind {
            SchemeKind::Fi => Ok(()),
            SchemeKind::Pc { order } if (1..=3).contains(&order) => Ok(()),
            SchemeKind::Pc { order: 4 } if self.unstable_ok => Ok(()),
            SchemeKind::Pc { order: 4 } => Err(Error::Config(
                "PC(4) is unstable; pass --unstable-ok to run it anyway".into(),
            )),
            SchemeKind::Pc { order } => Err(Error::Unsupported {
                what: "predictor-corrector order",
                value: order,
                min: 1,
                max: 3,
            }),
            SchemeKind::Sdc { stages, .. } if (1..=5).contains(&stages) => Ok(()),
            SchemeKind::Sdc { stages, .. } => Err(Error::Config(format!(
                "SDC with {stages} stages needs interpolation degree {}, but the stage \
                 integrals are available only up to degree 4 (at most 5 stages)",
                stages.saturating_sub(1)
            ))),
        }
    }
}

/// Discretized geometry with the time-independent operators.
#[derive(Debug)]
pub struct Problem {
    pub heat: HeatContext,
    pub laplace: LaplaceOps,
    /// `½I + S_Lν`.
    pub neumann: DMatrix<f64>,
    /// Unit null vector of `½I + S_Lν`.
    pub rho0: DVector<f64>,
    /// Unit arclength-weight vector (approximate left null vector).
    pub left_null: DVector<f64>,
}

/// Default number of Gauss–Legendre points per far-history sub-interval.
pub const DEFAULT_GAUSS_POINTS: usize = 8;

impl Problem {
    pub fn new(spec: CurveSpec, n: usize) -> Result<Self> {
        Self::with_grid(discretize(spec, n)?, DEFAULT_GAUSS_POINTS)
    }

    pub fn with_grid(grid: BoundaryGrid, gauss_points: usize) -> Result<Self> {
        let heat = HeatContext::new(grid, SingularRule::Kress, gauss_points)?;
        let laplace = build_laplace_ops(&heat.grid, &heat.pairs, SingularRule::Kress);
        let n = heat.grid.n;
        let neumann = &laplace.sl_nu + DMatrix::identity(n, n) * 0.5;
        let rho0 = null_vector(&laplace);
        let w = DVector::from_column_slice(&heat.grid.quad_weights);
        let left_null = &w / w.norm();
        Ok(Self {
            heat,
            laplace,
            neumann,
            rho0,
            left_null,
        })
    }

    pub fn grid(&self) -> &BoundaryGrid {
        &self.heat.grid
    }

    pub fn n(&self) -> usize {
        self.heat.grid.n
    }
}

/// Per-solve diagnostics of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    /// GMRES iterations of every linear solve, in order.
    pub iterations: Vec<usize>,
    /// Final relative residuals, matching `iterations`.
    pub residuals: Vec<f64>,
    /// Wall time per time step (or SDC interval), seconds.
    pub step_seconds: Vec<f64>,
    /// Arclength mean of the normal-row right-hand side per step.
    pub flux_mean: Vec<f64>,
}

impl SolveReport {
    pub fn avg_iterations(&self) -> f64 {
        if self.iterations.is_empty() {
            return 0.0;
        }
        self.iterations.iter().sum::<usize>() as f64 / self.iterations.len() as f64
    }

    pub fn max_flux_mean(&self) -> f64 {
        self.flux_mean.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Densities produced by a run, with the history needed to evaluate the
/// velocity at the final time.
#[derive(Debug, Clone)]
pub struct MarchOutcome {
    pub history: DensityHistory,
    pub report: SolveReport,
    pub t_final: f64,
}

/// Boundary data as a function of time.
pub trait DataSource {
    fn data(&self, t: f64) -> Result<BoundaryData>;
}

impl<F> DataSource for F
where
    F: Fn(f64) -> Result<BoundaryData>,
{
    fn data(&self, t: f64) -> Result<BoundaryData> {
        self(t)
    }
}

/// Runs the configured scheme from zero initial densities.
pub fn run(problem: &Problem, scheme: &TimeScheme, data: &dyn DataSource) -> Result<MarchOutcome> {
    scheme.validate()?;
    match scheme.kind {
        SchemeKind::Fi | SchemeKind::Pc { .. } => march_uniform(problem, scheme, data),
        SchemeKind::Sdc { .. } => march_sdc(problem, scheme, data),
    }
}

/// Interior velocity `∇S_L[ρ] + ∇⊥S_H[μ]` at a stored time level `t`.
pub fn eval_velocity(problem: &Problem, history: &DensityHistory, targets: &[Vec2], t: f64) -> Result<FieldEval> {
    let level = history
        .times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or_else(|| Error::Domain(format!("no stored density at t = {t}")))?;
    let grid = problem.grid();
    let mut out = grad_slp_eval(grid, &history.rho[level], targets);
    let heat = perp_grad_shp_eval(grid, history, targets, history.times[level])?;
    for (v, w) in out.values.iter_mut().zip(&heat.values) {
        v[0] += w[0];
        v[1] += w[1];
    }
    Ok(out)
}
