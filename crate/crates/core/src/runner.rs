//! Launches one worker thread per rank, runs the preconditioned solve on each
//! and gathers the rank-0 report and the global solution.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crate::comm::{in_process_group, Communicator, SerialComm, DEFAULT_TIMEOUT};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{build_decomposition, Decomposition};
use crate::krylov::{bicgstab_run, BicgsSettings, SolverReport};
use crate::operator::{InterfaceMode, StencilOperator};
use crate::precond::{PrecondSettings, Preconditioner, PreconditionerKind};
use crate::problem::{normalize_rhs, PoissonProblem};
use crate::report::{RepeatSummary, RunReport};

#[derive(Clone, Debug)]
pub struct SolveSpec {
    pub problem: PoissonProblem,
    pub ranks_per_dim: [usize; 3],
    pub kind: PreconditionerKind,
    pub precond: PrecondSettings,
    pub tol: f64,
    pub max_iter: usize,
    pub comm_timeout: Duration,
}

impl SolveSpec {
    pub fn new(problem: PoissonProblem, kind: PreconditionerKind) -> Self {
        SolveSpec {
            problem,
            ranks_per_dim: [1, 1, 1],
            kind,
            precond: PrecondSettings::default(),
            tol: 1e-10,
            max_iter: 10_000,
            comm_timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn rank_count(&self) -> usize {
        self.ranks_per_dim.iter().product()
    }

    /// Every rank's decomposition, validating divisibility.
    pub fn decompositions(&self) -> Result<Vec<Decomposition>> {
        let n = self.rank_count();
        (0..n)
            .map(|r| build_decomposition(self.problem.grid(), self.ranks_per_dim, n, r))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    /// Rank 0's report; every rank sees the same reduced scalars.
    pub report: SolverReport,
    /// Solution of the unnormalized problem, x-fastest over the global grid.
    pub solution: Vec<f64>,
    /// 2-norm of the right-hand side before normalization.
    pub rhs_norm: f64,
}

struct RankResult {
    report: SolverReport,
    decomp: Arc<Decomposition>,
    values: Vec<f64>,
    rhs_norm: f64,
}

fn solve_rank(spec: &SolveSpec, comm: &dyn Communicator) -> Result<RankResult> {
    let grid = spec.problem.grid().clone();
    let decomp = Arc::new(build_decomposition(&grid, spec.ranks_per_dim, comm.size(), comm.rank())?);
    let op = StencilOperator::new(grid, decomp.clone(), InterfaceMode::Exchange);
    let mut b = spec.problem.local_rhs(&decomp);
    let rhs_norm = normalize_rhs(&mut b, comm)?;
    let mut precond = Preconditioner::new(spec.kind, spec.precond.clone());
    let mut settings = BicgsSettings::new(spec.tol, spec.max_iter);
    settings.variant = spec.kind.outer_variant();
    let mut x = op.new_field();
    let report = bicgstab_run(&op, &mut precond, comm, &b, &mut x, &settings)?;
    Ok(RankResult { report, decomp, values: x.interior_values(), rhs_norm })
}

/// Runs the solve on `spec.rank_count()` ranks: the serial backend for one
/// rank, in-process worker threads otherwise.
pub fn solve(spec: &SolveSpec) -> Result<SolveOutcome> {
    // Fail fast on bad decompositions before starting any worker.
    spec.decompositions()?;
    let n = spec.rank_count();
    let results: Vec<Result<RankResult>> = if n == 1 {
        vec![solve_rank(spec, &SerialComm::new())]
    } else {
        let comms = in_process_group(n, spec.comm_timeout);
        thread::scope(|s| {
            let handles: Vec<_> = comms
                .into_iter()
                .map(|comm| s.spawn(move || solve_rank(spec, &comm)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("rank worker panicked".into()))))
                .collect()
        })
    };
    let mut ranks = Vec::with_capacity(n);
    // Report the root cause: a peer's timeout usually follows another rank's failure.
    let mut first_err = None;
    for r in results {
        match r {
            Ok(v) => ranks.push(v),
            Err(e) => {
                if first_err.is_none() || matches!(first_err, Some(Error::Comm(_))) && !matches!(e, Error::Comm(_)) {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(gather(spec, ranks))
}

/// Validates `config`, runs it `repeats` times and assembles the report.
/// Validation warnings are logged and recorded in the report.
pub fn run_config(config: &RunConfig) -> Result<RunReport> {
    let (spec, warnings) = config.validate()?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut reports = Vec::with_capacity(config.repeats);
    let mut rhs_norm = 1.0;
    for _ in 0..config.repeats {
        let out = solve(&spec)?;
        rhs_norm = out.rhs_norm;
        reports.push(out.report);
    }
    Ok(RunReport {
        repeats: RepeatSummary::from_reports(&reports),
        solver: reports.swap_remove(0),
        solver_name: spec.kind.solver_name().into(),
        rank_count: spec.rank_count(),
        rhs_norm,
        warnings,
        config: config.clone(),
    })
}

fn gather(spec: &SolveSpec, ranks: Vec<RankResult>) -> SolveOutcome {
    let [gx, gy, _] = spec.problem.grid().extents();
    let mut solution = vec![0.0; spec.problem.grid().unknowns()];
    let rhs_norm = ranks[0].rhs_norm;
    for r in &ranks {
        let [nx, ny, nz] = r.decomp.local_interior();
        let mut vals = r.values.iter();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let [x, y, z] = r.decomp.local_to_global([i, j, k]);
                    solution[x + gx * (y + gy * z)] = vals.next().expect("interior length") * rhs_norm;
                }
            }
        }
    }
    let report = ranks.into_iter().next().expect("at least one rank").report;
    SolveOutcome { report, solution, rhs_norm }
}
