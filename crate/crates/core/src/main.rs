use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use poisson_bicgs::config::RunConfig;
use poisson_bicgs::report::write_outputs;
use poisson_bicgs::runner::run_config;
use poisson_bicgs::Error;

/// Preconditioned Bi-CGSTAB Poisson solver.
///
/// Every option may also be given as `key = value` in the file passed to
/// `--config`; command-line values win.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// Config file: `key = value` lines, or a JSON run report to re-run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid nodes per axis, NX,NY,NZ.
    #[arg(long)]
    mesh: Option<String>,
    /// Ranks per axis, PX,PY,PZ.
    #[arg(long)]
    decomp: Option<String>,
    /// bicgs, fbicgs-g-bicgs, fbicgs-bj-bicgs, bicgs-bj-ci, bicgs-g-ci or bicgs-gnocomm-ci.
    #[arg(long)]
    solver: Option<String>,
    /// Relative residual target.
    #[arg(long)]
    tol: Option<String>,
    /// Outer iteration cap.
    #[arg(long = "max-iter")]
    max_iter: Option<String>,
    /// Chebyshev steps per preconditioner application.
    #[arg(long = "prec-iters")]
    prec_iters: Option<String>,
    /// Inner Bi-CGSTAB tolerance.
    #[arg(long = "prec-tol")]
    prec_tol: Option<String>,
    /// Inner Bi-CGSTAB iteration cap.
    #[arg(long = "prec-max-iter")]
    prec_max_iter: Option<String>,
    /// Factor applied to the smallest eigenvalue (>= 1).
    #[arg(long = "rescale-min")]
    rescale_min: Option<String>,
    /// Factor applied to the largest eigenvalue (<= 1).
    #[arg(long = "rescale-max")]
    rescale_max: Option<String>,
    /// Residual history output (empty disables).
    #[arg(long = "residual-csv")]
    residual_csv: Option<String>,
    /// JSON run report output (empty disables).
    #[arg(long = "report-json")]
    report_json: Option<String>,
    /// Number of identical solves to average.
    #[arg(long)]
    repeats: Option<String>,
    /// Seconds a rank waits on a peer before failing.
    #[arg(long = "comm-timeout")]
    comm_timeout: Option<String>,
    /// Domain bounds on x, LO,HI (first and last node).
    #[arg(long = "domain-x", allow_hyphen_values = true)]
    domain_x: Option<String>,
    /// Domain bounds on y, LO,HI.
    #[arg(long = "domain-y", allow_hyphen_values = true)]
    domain_y: Option<String>,
    /// Domain bounds on z, LO,HI.
    #[arg(long = "domain-z", allow_hyphen_values = true)]
    domain_z: Option<String>,
    /// Boundary condition of the x− face: dirichlet[:VALUE] or neumann[:FLUX].
    #[arg(long = "bc-xlo")]
    bc_xlo: Option<String>,
    /// Boundary condition of the x+ face.
    #[arg(long = "bc-xhi")]
    bc_xhi: Option<String>,
    /// Boundary condition of the y− face.
    #[arg(long = "bc-ylo")]
    bc_ylo: Option<String>,
    /// Boundary condition of the y+ face.
    #[arg(long = "bc-yhi")]
    bc_yhi: Option<String>,
    /// Boundary condition of the z− face.
    #[arg(long = "bc-zlo")]
    bc_zlo: Option<String>,
    /// Boundary condition of the z+ face.
    #[arg(long = "bc-zhi")]
    bc_zhi: Option<String>,
}

impl Cli {
    fn overrides(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("mesh", &self.mesh),
            ("decomp", &self.decomp),
            ("solver", &self.solver),
            ("tol", &self.tol),
            ("max-iter", &self.max_iter),
            ("prec-iters", &self.prec_iters),
            ("prec-tol", &self.prec_tol),
            ("prec-max-iter", &self.prec_max_iter),
            ("rescale-min", &self.rescale_min),
            ("rescale-max", &self.rescale_max),
            ("residual-csv", &self.residual_csv),
            ("report-json", &self.report_json),
            ("repeats", &self.repeats),
            ("comm-timeout", &self.comm_timeout),
            ("domain-x", &self.domain_x),
            ("domain-y", &self.domain_y),
            ("domain-z", &self.domain_z),
            ("bc-xlo", &self.bc_xlo),
            ("bc-xhi", &self.bc_xhi),
            ("bc-ylo", &self.bc_ylo),
            ("bc-yhi", &self.bc_yhi),
            ("bc-zlo", &self.bc_zlo),
            ("bc-zhi", &self.bc_zhi),
        ]
    }

    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut pairs = match &self.config {
            Some(path) => RunConfig::load_pairs(path)?,
            None => BTreeMap::new(),
        };
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                pairs.insert(key.to_string(), v.clone());
            }
        }
        RunConfig::from_pairs(&pairs)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let config = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let report = match run_config(&config) {
        Ok(r) => r,
        Err(e @ (Error::Config(_) | Error::SpectralInterval(_) | Error::SingularOperator(_))) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = write_outputs(&report) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let s = &report.solver;
    println!(
        "{} on {} rank(s): converged={} outer_iterations={} final_residual={:e} total_time={:.3}s",
        report.solver_name,
        report.rank_count,
        s.converged,
        s.outer_iterations,
        s.final_residual(),
        s.phase_timings.get("total"),
    );
    if let Some(reason) = &s.breakdown_reason {
        eprintln!("breakdown: {reason:?}");
    }
    if s.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
