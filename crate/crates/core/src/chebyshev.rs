//! Chebyshev iteration for `A x = b` on a real interval `[α, β]` that
//! excludes the origin. It needs no inner products, so as a preconditioner it
//! is a fixed polynomial in `A` and never reduces across ranks.

use std::mem;

use serde::{Deserialize, Serialize};

use crate::comm::Communicator;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::{EigenBounds, InterfaceMode, StencilOperator};

/// Default number of iterations when used as a preconditioner.
pub const DEFAULT_PRECONDITIONER_ITERS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevParams {
    pub theta: f64,
    pub delta: f64,
    pub sigma: f64,
    pub iter_max: usize,
}

/// `θ = (β+α)/2`, `δ = (β−α)/2`, `σ = θ/δ`.
pub fn chebyshev_params(alpha: f64, beta: f64, iter_max: usize) -> Result<ChebyshevParams> {
    if !(alpha > 0.0) || !(alpha < beta) || !beta.is_finite() {
        return Err(Error::SpectralInterval(format!(
            "Chebyshev interval needs 0 < alpha < beta, got [{alpha}, {beta}]"
        )));
    }
    let theta = (beta + alpha) / 2.0;
    let delta = (beta - alpha) / 2.0;
    if delta == 0.0 {
        return Err(Error::SpectralInterval("degenerate interval: delta = 0".into()));
    }
    Ok(ChebyshevParams { theta, delta, sigma: theta / delta, iter_max })
}

/// Shrinks the exact spectral interval to `[c_min·λ_min, c_max·λ_max]`.
pub fn rescale_bounds(bounds: EigenBounds, c_min: f64, c_max: f64) -> Result<(f64, f64)> {
    let alpha = c_min * bounds.lambda_min;
    let beta = c_max * bounds.lambda_max;
    if !(alpha < beta) {
        return Err(Error::SpectralInterval(format!(
            "rescaled interval is crossed: {c_min}·{} >= {c_max}·{}",
            bounds.lambda_min, bounds.lambda_max
        )));
    }
    Ok((alpha, beta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChebyshevComm {
    /// Halo exchange before every ghost fill.
    Exchange,
    /// No messages; inter-rank halos are zeroed (exact local-block operator).
    NoExchange,
}

/// Work vectors. `y` holds the newest iterate and `z` the previous one;
/// the three buffers rotate by handle.
pub struct ChebyshevState {
    z: Field,
    y: Field,
    w: Field,
}

impl ChebyshevState {
    pub fn new(op: &StencilOperator) -> Self {
        ChebyshevState { z: op.new_field(), y: op.new_field(), w: op.new_field() }
    }

    pub fn latest(&self) -> &Field {
        &self.y
    }

    pub fn previous(&self) -> &Field {
        &self.z
    }
}

fn refresh(
    op: &StencilOperator,
    comm: &dyn Communicator,
    mode: ChebyshevComm,
    f: &mut Field,
) -> Result<()> {
    match mode {
        ChebyshevComm::Exchange => {
            comm.halo_exchange(f)?;
            op.fill_ghost(f);
        }
        ChebyshevComm::NoExchange => op.fill_ghost_with(f, InterfaceMode::LocalBlock),
    }
    Ok(())
}

/// Runs `params.iter_max` Chebyshev steps from a zero initial guess and
/// writes the final iterate into `x`. `b`'s ghosts are refreshed in place.
pub fn chebyshev_run(
    op: &StencilOperator,
    comm: &dyn Communicator,
    params: &ChebyshevParams,
    b: &mut Field,
    x: &mut Field,
    mode: ChebyshevComm,
    state: &mut ChebyshevState,
) -> Result<()> {
    let ChebyshevParams { theta, delta, sigma, iter_max } = *params;
    let mut rho_old = 1.0 / sigma;
    let mut rho_cur = 1.0 / (2.0 * sigma - rho_old);

    if iter_max == 0 {
        let (xs, bs) = (x.as_mut_slice(), b.as_slice());
        for c in b.interior_offsets() {
            xs[c] = bs[c] / theta;
        }
        return Ok(());
    }

    refresh(op, comm, mode, b)?;
    {
        let ChebyshevState { z, y, .. } = state;
        let (zs, ys, bs) = (z.as_mut_slice(), y.as_mut_slice(), b.as_slice());
        let scale = 2.0 * rho_cur / delta;
        op.sweep(b, |c, ab| {
            zs[c] = bs[c] / theta;
            ys[c] = scale * (2.0 * bs[c] - ab / theta);
        });
    }

    for _ in 2..=iter_max {
        rho_old = rho_cur;
        rho_cur = 1.0 / (2.0 * sigma - rho_old);
        refresh(op, comm, mode, &mut state.y)?;
        {
            let ChebyshevState { z, y, w } = state;
            let (ws, zs, bs) = (w.as_mut_slice(), z.as_slice(), b.as_slice());
            let ys = y.as_slice();
            let two_over_delta = 2.0 / delta;
            op.sweep(y, |c, ay| {
                ws[c] = rho_cur * (2.0 * sigma * ys[c] + two_over_delta * (bs[c] - ay) - rho_old * zs[c]);
            });
        }
        // z <- y, y <- w; the old z buffer becomes the next w.
        mem::swap(&mut state.z, &mut state.y);
        mem::swap(&mut state.y, &mut state.w);
    }

    let (xs, ys) = (x.as_mut_slice(), state.y.as_slice());
    for c in state.y.interior_offsets() {
        xs[c] = ys[c];
    }
    Ok(())
}
