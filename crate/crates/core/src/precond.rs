//! The six preconditioner configurations: identity, inner Bi-CGSTAB on the
//! global operator or on each subdomain block, and Chebyshev iteration with
//! local bounds, with global bounds and halo exchange, or with global bounds
//! and no exchange at all.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chebyshev::{
    chebyshev_params, chebyshev_run, rescale_bounds, ChebyshevComm, ChebyshevParams,
    ChebyshevState, DEFAULT_PRECONDITIONER_ITERS,
};
use crate::comm::Communicator;
use crate::error::{Error, Result};
use crate::grid::{Decomposition, Field};
use crate::krylov::{bicgstab_run_with, BicgsSettings, BicgsState, OuterVariant};
use crate::operator::{global_eigen_bounds, local_eigen_bounds, EigenBounds, InterfaceMode, StencilOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PreconditionerKind {
    Identity,
    GlobalBicgs,
    BlockJacobiBicgs,
    BlockJacobiChebyshev,
    GlobalChebyshev,
    GlobalNoCommChebyshev,
}

impl PreconditionerKind {
    pub const ALL: [PreconditionerKind; 6] = [
        PreconditionerKind::Identity,
        PreconditionerKind::GlobalBicgs,
        PreconditionerKind::BlockJacobiBicgs,
        PreconditionerKind::BlockJacobiChebyshev,
        PreconditionerKind::GlobalChebyshev,
        PreconditionerKind::GlobalNoCommChebyshev,
    ];

    /// Solver name: outer method plus preconditioner.
    pub fn solver_name(self) -> &'static str {
        match self {
            PreconditionerKind::Identity => "bicgs",
            PreconditionerKind::GlobalBicgs => "fbicgs-g-bicgs",
            PreconditionerKind::BlockJacobiBicgs => "fbicgs-bj-bicgs",
            PreconditionerKind::BlockJacobiChebyshev => "bicgs-bj-ci",
            PreconditionerKind::GlobalChebyshev => "bicgs-g-ci",
            PreconditionerKind::GlobalNoCommChebyshev => "bicgs-gnocomm-ci",
        }
    }

    /// Short preconditioner label, e.g. `GNoComm(CI)`.
    pub fn name(self) -> &'static str {
        match self {
            PreconditionerKind::Identity => "none",
            PreconditionerKind::GlobalBicgs => "G(BiCGS)",
            PreconditionerKind::BlockJacobiBicgs => "BJ(BiCGS)",
            PreconditionerKind::BlockJacobiChebyshev => "BJ(CI)",
            PreconditionerKind::GlobalChebyshev => "G(CI)",
            PreconditionerKind::GlobalNoCommChebyshev => "GNoComm(CI)",
        }
    }

    /// Properties per preconditioner; `None` for the unpreconditioned solver.
    pub fn flags(self) -> Option<PrecondFlags> {
        let f = |fixed, comm_free, reduction_free| Some(PrecondFlags { fixed, comm_free, reduction_free });
        match self {
            PreconditionerKind::Identity => None,
            PreconditionerKind::GlobalBicgs => f(false, false, false),
            PreconditionerKind::BlockJacobiBicgs => f(false, true, false),
            PreconditionerKind::BlockJacobiChebyshev => f(true, true, true),
            PreconditionerKind::GlobalChebyshev => f(true, false, true),
            PreconditionerKind::GlobalNoCommChebyshev => f(true, true, true),
        }
    }

    /// An inexact preconditioner changes between applications and needs the
    /// flexible outer solver.
    pub fn is_inexact(self) -> bool {
        self.flags().is_some_and(|f| !f.fixed)
    }

    pub fn outer_variant(self) -> OuterVariant {
        if self.is_inexact() {
            OuterVariant::Flexible
        } else {
            OuterVariant::Standard
        }
    }

    pub fn is_chebyshev(self) -> bool {
        matches!(
            self,
            PreconditionerKind::BlockJacobiChebyshev
                | PreconditionerKind::GlobalChebyshev
                | PreconditionerKind::GlobalNoCommChebyshev
        )
    }
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.solver_name())
    }
}

impl FromStr for PreconditionerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PreconditionerKind::ALL
            .into_iter()
            .find(|k| k.solver_name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = PreconditionerKind::ALL.iter().map(|k| k.solver_name()).collect();
                Error::Config(format!("unknown solver '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Fixed map / no halo messages / no global reductions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecondFlags {
    pub fixed: bool,
    pub comm_free: bool,
    pub reduction_free: bool,
}

pub const DEFAULT_RESCALE_MIN: f64 = 100.0;
pub const DEFAULT_RESCALE_MAX: f64 = 1.0 - 1e-4;
pub const DEFAULT_GLOBAL_BICGS_TOL: f64 = 1e-2;
pub const DEFAULT_BLOCK_BICGS_TOL: f64 = 1e-6;
pub const DEFAULT_INNER_MAX_ITER: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecondSettings {
    /// Chebyshev steps per application.
    pub cheb_iters: usize,
    /// Multiplies `λ_min` for the global-bound Chebyshev kinds.
    pub rescale_min: f64,
    /// Multiplies `λ_max` for the global-bound Chebyshev kinds.
    pub rescale_max: f64,
    /// Inner tolerance; `None` picks the kind's default.
    pub inner_tol: Option<f64>,
    pub inner_max_iter: usize,
    /// Replaces the computed spectral interval (before rescaling).
    pub bounds_override: Option<EigenBounds>,
}

impl Default for PrecondSettings {
    fn default() -> Self {
        PrecondSettings {
            cheb_iters: DEFAULT_PRECONDITIONER_ITERS,
            rescale_min: DEFAULT_RESCALE_MIN,
            rescale_max: DEFAULT_RESCALE_MAX,
            inner_tol: None,
            inner_max_iter: DEFAULT_INNER_MAX_ITER,
            bounds_override: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ApplyStats {
    pub inner_iterations: usize,
}

/// Per-operator resources built on first use.
struct Prepared {
    inner_op: StencilOperator,
    cheb: Option<(ChebyshevParams, ChebyshevComm, ChebyshevState)>,
    bicgs: Option<BicgsState>,
}

/// `M⁻¹` applied matrix-free; one instance per rank worker.
pub struct Preconditioner {
    kind: PreconditionerKind,
    settings: PrecondSettings,
    prepared: Option<Prepared>,
}

impl Preconditioner {
    pub fn new(kind: PreconditionerKind, settings: PrecondSettings) -> Self {
        Preconditioner { kind, settings, prepared: None }
    }

    pub fn identity() -> Self {
        Preconditioner::new(PreconditionerKind::Identity, PrecondSettings::default())
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn settings(&self) -> &PrecondSettings {
        &self.settings
    }

    pub fn is_inexact(&self) -> bool {
        self.kind.is_inexact()
    }

    pub fn inner_tol(&self) -> f64 {
        self.settings.inner_tol.unwrap_or(match self.kind {
            PreconditionerKind::BlockJacobiBicgs => DEFAULT_BLOCK_BICGS_TOL,
            _ => DEFAULT_GLOBAL_BICGS_TOL,
        })
    }

    /// The spectral interval `[α, β]` the Chebyshev kinds run on.
    pub fn chebyshev_interval(&self, op: &StencilOperator) -> Result<(f64, f64)> {
        let s = &self.settings;
        match self.kind {
            PreconditionerKind::BlockJacobiChebyshev => {
                let b = match s.bounds_override {
                    Some(b) => b,
                    None => local_eigen_bounds(op.grid(), op.decomposition())?,
                };
                Ok((b.lambda_min, b.lambda_max))
            }
            PreconditionerKind::GlobalChebyshev | PreconditionerKind::GlobalNoCommChebyshev => {
                let b = match s.bounds_override {
                    Some(b) => b,
                    None => global_eigen_bounds(op.grid())?,
                };
                rescale_bounds(b, s.rescale_min, s.rescale_max)
            }
            _ => Err(Error::Config(format!("{} is not a Chebyshev preconditioner", self.kind.name()))),
        }
    }

    /// Computes spectral parameters and work vectors for `op`. Called
    /// implicitly by the first [`apply`](Self::apply).
    pub fn prepare(&mut self, op: &StencilOperator) -> Result<()> {
        let inner_mode = match self.kind {
            PreconditionerKind::Identity
            | PreconditionerKind::GlobalBicgs
            | PreconditionerKind::GlobalChebyshev => InterfaceMode::Exchange,
            _ => InterfaceMode::LocalBlock,
        };
        let inner_op = op.with_mode(inner_mode);
        let cheb = if self.kind.is_chebyshev() {
            let (alpha, beta) = self.chebyshev_interval(op)?;
            let params = chebyshev_params(alpha, beta, self.settings.cheb_iters)?;
            let mode = match self.kind {
                PreconditionerKind::GlobalChebyshev => ChebyshevComm::Exchange,
                _ => ChebyshevComm::NoExchange,
            };
            Some((params, mode, ChebyshevState::new(&inner_op)))
        } else {
            None
        };
        let bicgs = matches!(self.kind, PreconditionerKind::GlobalBicgs | PreconditionerKind::BlockJacobiBicgs)
            .then(|| BicgsState::new(&inner_op));
        self.prepared = Some(Prepared { inner_op, cheb, bicgs });
        Ok(())
    }

    pub fn chebyshev_params(&self) -> Option<&ChebyshevParams> {
        self.prepared.as_ref()?.cheb.as_ref().map(|c| &c.0)
    }

    /// Writes `M⁻¹ input` into `out`. `input`'s ghosts may be overwritten.
    pub fn apply(
        &mut self,
        op: &StencilOperator,
        comm: &dyn Communicator,
        input: &mut Field,
        out: &mut Field,
    ) -> Result<ApplyStats> {
        if self.kind == PreconditionerKind::Identity {
            out.copy_from(input);
            return Ok(ApplyStats::default());
        }
        if self.prepared.is_none() {
            self.prepare(op)?;
        }
        let inner_tol = self.inner_tol();
        let kind = self.kind;
        let inner_max = self.settings.inner_max_iter;
        let prepared = self.prepared.as_mut().expect("prepared above");
        let inner_op = &prepared.inner_op;

        if let Some((params, mode, state)) = prepared.cheb.as_mut() {
            chebyshev_run(inner_op, comm, params, input, out, *mode, state)?;
            return Ok(ApplyStats { inner_iterations: params.iter_max });
        }

        let state = prepared.bicgs.as_mut().expect("inner Bi-CGSTAB state");
        let settings = BicgsSettings::new(inner_tol, inner_max);
        let mut identity = Preconditioner::identity();
        out.fill_interior(0.0);
        let report = if kind == PreconditionerKind::BlockJacobiBicgs {
            let local = comm.local_group();
            bicgstab_run_with(state, inner_op, &mut identity, &local, input, out, &settings)?
        } else {
            bicgstab_run_with(state, inner_op, &mut identity, comm, input, out, &settings)?
        };
        if let Some(reason) = report.breakdown_reason {
            return Err(Error::Preconditioner(format!("inner {} breakdown: {reason:?}", kind.name())));
        }
        if !report.converged && comm.rank() == 0 {
            log::warn!(
                "inner {} stopped at {} iterations with residual {:e} above {:e}",
                kind.name(),
                report.outer_iterations,
                report.final_residual(),
                inner_tol
            );
        }
        Ok(ApplyStats { inner_iterations: report.outer_iterations })
    }
}

/// Past `N_s/2` Chebyshev steps the error from the never-updated ghosts of
/// GNoComm(CI) has reached every point of an `N_s`-wide subdomain.
pub fn iteration_bound_warning(kind: PreconditionerKind, prec_iters: usize, decomp: &Decomposition) -> Option<String> {
    if kind != PreconditionerKind::GlobalNoCommChebyshev {
        return None;
    }
    let n_s = decomp.local_interior().into_iter().min().unwrap_or(0);
    let bound = n_s / 2;
    (prec_iters > bound).then(|| {
        format!(
            "prec-iters {prec_iters} exceeds N_s/2 = {bound} (smallest local interior extent {n_s}), \
             the upper bound for the number of iterations of {}",
            kind.name()
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::SerialComm;
    use crate::grid::{build_decomposition, BcKind, GridSpec};
    use std::sync::Arc;

    fn op_for(grid: GridSpec) -> StencilOperator {
        let d = Arc::new(Decomposition::serial(&grid));
        StencilOperator::new(Arc::new(grid), d, InterfaceMode::Exchange)
    }

    #[test]
    fn solver_names_round_trip() {
        for k in PreconditionerKind::ALL {
            assert_eq!(k.solver_name().parse::<PreconditionerKind>().unwrap(), k);
        }
        let err = "cg".parse::<PreconditionerKind>().unwrap_err();
        assert!(err.to_string().starts_with("unknown solver 'cg'"));
    }

    #[test]
    fn flags_per_kind() {
        use PreconditionerKind::*;
        let t = |k: PreconditionerKind| {
            let f = k.flags().unwrap();
            (f.fixed, f.comm_free, f.reduction_free)
        };
        assert_eq!(Identity.flags(), None);
        assert_eq!(t(GlobalBicgs), (false, false, false));
        assert_eq!(t(BlockJacobiBicgs), (false, true, false));
        assert_eq!(t(BlockJacobiChebyshev), (true, true, true));
        assert_eq!(t(GlobalChebyshev), (true, false, true));
        assert_eq!(t(GlobalNoCommChebyshev), (true, true, true));
        assert_eq!(GlobalBicgs.outer_variant(), OuterVariant::Flexible);
        assert_eq!(GlobalChebyshev.outer_variant(), OuterVariant::Standard);
    }

    #[test]
    fn identity_copies_without_messages() {
        let op = op_for(GridSpec::with_kinds([3, 3, 2], [1.0; 3], [BcKind::Dirichlet; 6]).unwrap());
        let vals: Vec<f64> = (0..18).map(|v| v as f64).collect();
        let mut p = Field::from_interior(op.decomposition(), &vals);
        let mut out = op.new_field();
        let comm = SerialComm::new();
        let stats = Preconditioner::identity().apply(&op, &comm, &mut p, &mut out).unwrap();
        assert_eq!(stats.inner_iterations, 0);
        assert_eq!(out.interior_values(), vals);
        assert_eq!(comm.counters().allreduce_calls, 0);
    }

    #[test]
    fn single_rank_gnocomm_equals_global_chebyshev() {
        let op = op_for(GridSpec::with_kinds([6, 5, 4], [0.5; 3], [BcKind::Dirichlet, BcKind::Neumann, BcKind::Neumann, BcKind::Dirichlet, BcKind::Neumann, BcKind::Dirichlet]).unwrap());
        let vals: Vec<f64> = (0..120).map(|v| ((v * 37 % 11) as f64) - 5.0).collect();
        let settings = PrecondSettings { rescale_min: 2.0, ..Default::default() };
        let comm = SerialComm::new();
        let run = |kind| {
            let mut p = Field::from_interior(op.decomposition(), &vals);
            let mut out = op.new_field();
            Preconditioner::new(kind, settings.clone()).apply(&op, &comm, &mut p, &mut out).unwrap();
            out.interior_values()
        };
        assert_eq!(run(PreconditionerKind::GlobalNoCommChebyshev), run(PreconditionerKind::GlobalChebyshev));
        assert_eq!(comm.counters().allreduce_calls, 0);
    }

    #[test]
    fn inner_bicgs_counts_iterations() {
        let op = op_for(GridSpec::with_kinds([6, 6, 6], [1.0; 3], [BcKind::Dirichlet; 6]).unwrap());
        let mut p = op.new_field();
        p.fill_interior(1.0);
        let mut out = op.new_field();
        let mut m = Preconditioner::new(PreconditionerKind::GlobalBicgs, PrecondSettings::default());
        let stats = m.apply(&op, &SerialComm::new(), &mut p, &mut out).unwrap();
        assert!(stats.inner_iterations >= 1);
        assert!(m.inner_tol() == 1e-2);
    }

    #[test]
    fn iteration_bound_only_for_gnocomm() {
        let g = GridSpec::with_kinds([32, 32, 32], [1.0; 3], [BcKind::Dirichlet; 6]).unwrap();
        let d = build_decomposition(&g, [2, 2, 2], 8, 0).unwrap();
        let k = PreconditionerKind::GlobalNoCommChebyshev;
        assert!(iteration_bound_warning(k, 8, &d).is_none());
        let w = iteration_bound_warning(k, 9, &d).unwrap();
        assert!(w.contains("upper bound for the number of iterations"));
        assert!(iteration_bound_warning(PreconditionerKind::GlobalChebyshev, 24, &d).is_none());
    }
}
