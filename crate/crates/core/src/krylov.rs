//! Preconditioned Bi-CGSTAB with fused kernels and three global reductions
//! per iteration.
//!
//! Each outer iteration runs: preconditioner on `p`, halo exchange and ghost
//! fill on `p̂`, fused `w = A p̂` with `r̃ᵀw`, reduction, `r -= α w`,
//! preconditioner on `r`, halo exchange and ghost fill on `r̂`, fused
//! `t = A r̂` with `tᵀr` and `tᵀt`, batched reduction, the `x` update, fused
//! `r -= ω t` with `r̃ᵀr` and `rᵀr`, batched reduction, convergence test and
//! the `p` update. There is no mid-iteration convergence check.
//!
//! The recurrence reuses `w = A p̂` instead of re-applying the
//! preconditioner, so it stays valid when the preconditioner changes from
//! one iteration to the next (flexible Bi-CGSTAB).

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::comm::{Communicator, MessageCounters};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::StencilOperator;
use crate::precond::Preconditioner;

pub const PHASE_PRECONDITIONER: &str = "preconditioner";
pub const PHASE_HALO_EXCHANGE: &str = "halo_exchange";
pub const PHASE_ALLREDUCE: &str = "allreduce";
pub const PHASE_STENCIL: &str = "stencil_kernels";
pub const PHASE_VECTOR: &str = "vector_kernels";
pub const PHASE_TOTAL: &str = "total";

pub const PHASE_KEYS: [&str; 6] = [
    PHASE_PRECONDITIONER,
    PHASE_HALO_EXCHANGE,
    PHASE_ALLREDUCE,
    PHASE_STENCIL,
    PHASE_VECTOR,
    PHASE_TOTAL,
];

pub const DEFAULT_BREAKDOWN_THRESHOLD: f64 = 1e-30;

/// Outer-loop bookkeeping. `Flexible` is required with inexact (iteration
/// dependent) preconditioners.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterVariant {
    Standard,
    Flexible,
}

#[derive(Clone, Debug)]
pub struct BicgsSettings {
    /// Relative residual target `‖r‖/‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative to `|ρ₀|`.
    pub breakdown_threshold: f64,
    pub variant: OuterVariant,
}

impl BicgsSettings {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        BicgsSettings {
            tol,
            max_iter,
            breakdown_threshold: DEFAULT_BREAKDOWN_THRESHOLD,
            variant: OuterVariant::Standard,
        }
    }

    pub fn flexible(mut self) -> Self {
        self.variant = OuterVariant::Flexible;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum BreakdownReason {
    /// `r̃ᵀr` collapsed.
    Rho,
    /// `tᵀr` vanished so `ω = 0`.
    Omega,
    /// `r̃ᵀA p̂` collapsed.
    AlphaDenominator,
    NonFinite,
    Preconditioner(String),
}

/// Accumulated wall time per phase, in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseTimings(pub BTreeMap<String, f64>);

impl Default for PhaseTimings {
    fn default() -> Self {
        PhaseTimings(PHASE_KEYS.iter().map(|k| (k.to_string(), 0.0)).collect())
    }
}

impl PhaseTimings {
    pub fn get(&self, key: &str) -> f64 {
        self.0.get(key).copied().unwrap_or(0.0)
    }

    fn add(&mut self, key: &str, secs: f64) {
        *self.0.entry(key.to_string()).or_insert(0.0) += secs;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub converged: bool,
    pub outer_iterations: usize,
    pub preconditioner_iterations_total: usize,
    /// `(iteration, ‖r‖/‖b‖)` for every completed outer iteration.
    pub residual_history: Vec<(usize, f64)>,
    pub initial_residual: f64,
    pub phase_timings: PhaseTimings,
    /// Counter growth during the solve.
    pub message_counters: MessageCounters,
    pub breakdown_reason: Option<BreakdownReason>,
}

impl SolverReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().map(|h| h.1).unwrap_or(self.initial_residual)
    }
}

/// Working vectors of one solve; reusable across solves on the same layout.
pub struct BicgsState {
    r: Field,
    r_tilde: Field,
    p: Field,
    p_hat: Field,
    r_hat: Field,
    w: Field,
    t: Field,
}

impl BicgsState {
    pub fn new(op: &StencilOperator) -> Self {
        BicgsState {
            r: op.new_field(),
            r_tilde: op.new_field(),
            p: op.new_field(),
            p_hat: op.new_field(),
            r_hat: op.new_field(),
            w: op.new_field(),
            t: op.new_field(),
        }
    }

    pub fn residual(&self) -> &Field {
        &self.r
    }
}

struct Clock {
    timings: PhaseTimings,
}

impl Clock {
    fn time<T>(&mut self, key: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.add(key, start.elapsed().as_secs_f64());
        out
    }
}

pub fn bicgstab_run(
    op: &StencilOperator,
    precond: &mut Preconditioner,
    comm: &dyn Communicator,
    b: &Field,
    x: &mut Field,
    settings: &BicgsSettings,
) -> Result<SolverReport> {
    let mut state = BicgsState::new(op);
    bicgstab_run_with(&mut state, op, precond, comm, b, x, settings)
}

/// Solves `A x = b` starting from the contents of `x`.
pub fn bicgstab_run_with(
    state: &mut BicgsState,
    op: &StencilOperator,
    precond: &mut Preconditioner,
    comm: &dyn Communicator,
    b: &Field,
    x: &mut Field,
    settings: &BicgsSettings,
) -> Result<SolverReport> {
    if !(settings.tol > 0.0) {
        return Err(Error::Config("tol must be positive".into()));
    }
    if precond.is_inexact() && settings.variant != OuterVariant::Flexible {
        return Err(Error::Config(format!(
            "preconditioner {} is inexact and needs the flexible outer solver",
            precond.kind().name()
        )));
    }
    let start = Instant::now();
    let counters_start = comm.counters();
    let mut clock = Clock { timings: PhaseTimings::default() };
    let mut report = SolverReport {
        converged: false,
        outer_iterations: 0,
        preconditioner_iterations_total: 0,
        residual_history: Vec::new(),
        initial_residual: f64::NAN,
        phase_timings: PhaseTimings::default(),
        message_counters: MessageCounters::default(),
        breakdown_reason: None,
    };
    let BicgsState { r, r_tilde, p, p_hat, r_hat, w, t } = state;

    // r0 = b - A x0, r̃ = p = r0, and one batched reduction for ρ0 = r̃ᵀr0 and bᵀb.
    clock.time(PHASE_HALO_EXCHANGE, || match op.mode() {
        crate::operator::InterfaceMode::Exchange => comm.halo_exchange(x),
        crate::operator::InterfaceMode::LocalBlock => Ok(()),
    })?;
    let mut sums = clock.time(PHASE_STENCIL, || {
        op.fill_ghost(x);
        let (rs, rt, ps, bs) = (r.as_mut_slice(), r_tilde.as_mut_slice(), p.as_mut_slice(), b.as_slice());
        let (mut rr, mut bb) = (0.0, 0.0);
        op.sweep(x, |c, ax| {
            let v = bs[c] - ax;
            rs[c] = v;
            rt[c] = v;
            ps[c] = v;
            rr += v * v;
            bb += bs[c] * bs[c];
        });
        [rr, bb]
    });
    clock.time(PHASE_ALLREDUCE, || comm.allreduce_sum(&mut sums))?;
    let rho0 = sums[0];
    let b_norm = if sums[1] > 0.0 { sums[1].sqrt() } else { 1.0 };
    report.initial_residual = rho0.sqrt() / b_norm;
    let breakdown_floor = settings.breakdown_threshold * rho0.abs();

    let finish = |mut report: SolverReport, mut clock: Clock| {
        clock.timings.add(PHASE_TOTAL, start.elapsed().as_secs_f64());
        report.phase_timings = clock.timings;
        report.message_counters = comm.counters().since(&counters_start);
        report.outer_iterations = report.residual_history.len();
        report
    };

    if report.initial_residual <= settings.tol {
        report.converged = true;
        return Ok(finish(report, clock));
    }
    if !report.initial_residual.is_finite() {
        report.breakdown_reason = Some(BreakdownReason::NonFinite);
        return Ok(finish(report, clock));
    }

    let mut rho_prev = rho0;
    for iter in 1..=settings.max_iter {
        // Solve M p̂ = p.
        let applied = clock.time(PHASE_PRECONDITIONER, || precond.apply(op, comm, p, p_hat));
        match applied {
            Ok(stats) => report.preconditioner_iterations_total += stats.inner_iterations,
            Err(Error::Preconditioner(msg)) => {
                report.breakdown_reason = Some(BreakdownReason::Preconditioner(msg));
                return Ok(finish(report, clock));
            }
            Err(e) => return Err(e),
        }
        clock.time(PHASE_HALO_EXCHANGE, || exchange(op, comm, p_hat))?;
        // KernelBiCGS1: w = A p̂, local r̃ᵀw.
        let mut s1 = [clock.time(PHASE_STENCIL, || {
            op.fill_ghost(p_hat);
            op.apply_dot(p_hat, w, r_tilde)
        })];
        clock.time(PHASE_ALLREDUCE, || comm.allreduce_sum(&mut s1))?;
        if !s1[0].is_finite() || s1[0].abs() <= breakdown_floor {
            report.breakdown_reason = Some(if s1[0].is_finite() {
                BreakdownReason::AlphaDenominator
            } else {
                BreakdownReason::NonFinite
            });
            return Ok(finish(report, clock));
        }
        let alpha = rho_prev / s1[0];
        // KernelBiCGS2: r -= α w.
        clock.time(PHASE_VECTOR, || axpy_interior(r, -alpha, w));

        // Solve M r̂ = r.
        let applied = clock.time(PHASE_PRECONDITIONER, || precond.apply(op, comm, r, r_hat));
        match applied {
            Ok(stats) => report.preconditioner_iterations_total += stats.inner_iterations,
            Err(Error::Preconditioner(msg)) => {
                report.breakdown_reason = Some(BreakdownReason::Preconditioner(msg));
                return Ok(finish(report, clock));
            }
            Err(e) => return Err(e),
        }
        clock.time(PHASE_HALO_EXCHANGE, || exchange(op, comm, r_hat))?;
        // KernelBiCGS3: t = A r̂, local tᵀr and tᵀt.
        let mut s3 = clock.time(PHASE_STENCIL, || {
            op.fill_ghost(r_hat);
            let (ts, rs) = (t.as_mut_slice(), r.as_slice());
            let (mut tr, mut tt) = (0.0, 0.0);
            op.sweep(r_hat, |c, v| {
                ts[c] = v;
                tr += v * rs[c];
                tt += v * v;
            });
            [tr, tt]
        });
        clock.time(PHASE_ALLREDUCE, || comm.allreduce_sum(&mut s3))?;
        // t = 0 means r̂ = 0: nothing left to stabilize.
        let omega = if s3[1] == 0.0 { 0.0 } else { s3[0] / s3[1] };

        let mut s5 = clock.time(PHASE_VECTOR, || {
            // KernelBiCGS4: x += α p̂ + ω r̂.
            {
                let (xs, ph, rh) = (x.as_mut_slice(), p_hat.as_slice(), r_hat.as_slice());
                for c in p_hat.interior_offsets() {
                    xs[c] += alpha * ph[c] + omega * rh[c];
                }
            }
            // KernelBiCGS5: r -= ω t, local r̃ᵀr and rᵀr.
            let (rs, ts, rt) = (r.as_mut_slice(), t.as_slice(), r_tilde.as_slice());
            let (mut r0r, mut rr) = (0.0, 0.0);
            for c in t.interior_offsets() {
                let v = rs[c] - omega * ts[c];
                rs[c] = v;
                r0r += rt[c] * v;
                rr += v * v;
            }
            [r0r, rr]
        });
        clock.time(PHASE_ALLREDUCE, || comm.allreduce_sum(&mut s5))?;

        let rel = s5[1].sqrt() / b_norm;
        report.residual_history.push((iter, rel));
        if rel <= settings.tol {
            report.converged = true;
            break;
        }
        if !rel.is_finite() {
            report.breakdown_reason = Some(BreakdownReason::NonFinite);
            break;
        }
        let rho = s5[0];
        if omega == 0.0 || !omega.is_finite() {
            report.breakdown_reason = Some(BreakdownReason::Omega);
            break;
        }
        if rho.abs() <= breakdown_floor {
            report.breakdown_reason = Some(BreakdownReason::Rho);
            break;
        }
        let beta = (rho * alpha) / (rho_prev * omega);
        // KernelBiCGS6: p = r + β (p − ω w).
        clock.time(PHASE_VECTOR, || {
            let (ps, rs, ws) = (p.as_mut_slice(), r.as_slice(), w.as_slice());
            for c in w.interior_offsets() {
                ps[c] = rs[c] + beta * (ps[c] - omega * ws[c]);
            }
        });
        rho_prev = rho;
    }
    Ok(finish(report, clock))
}

fn exchange(op: &StencilOperator, comm: &dyn Communicator, f: &mut Field) -> Result<()> {
    if op.mode() == crate::operator::InterfaceMode::Exchange {
        comm.halo_exchange(f)?;
    }
    Ok(())
}

/// `y += a·x` on the interior.
pub fn axpy_interior(y: &mut Field, a: f64, x: &Field) {
    assert!(y.same_layout(x), "mismatched decompositions");
    let (ys, xs) = (y.as_mut_slice(), x.as_slice());
    for c in x.interior_offsets() {
        ys[c] += a * xs[c];
    }
}
