use serde::{Deserialize, Serialize};

use super::dense::factor_matrix;
use super::{InterfaceMode, StencilOperator};
use crate::error::{Error, Result};
use crate::grid::{Axis, BcKind, Decomposition, Face, GridSpec, Side};

/// Extreme eigenvalues of the 3D operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl EigenBounds {
    pub fn new(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_min <= lambda_max && lambda_max.is_finite()) {
            return Err(Error::SpectralInterval(format!(
                "need 0 < lambda_min <= lambda_max, got [{lambda_min}, {lambda_max}]"
            )));
        }
        Ok(EigenBounds { lambda_min, lambda_max })
    }
}

/// `4 sin²(iπ / 2(n+1))` for `i = 1..=n`, ascending.
pub fn dirichlet_eigenvalues(n: usize) -> Vec<f64> {
    let denom = 2.0 * (n as f64 + 1.0);
    (1..=n)
        .map(|i| {
            let s = (i as f64 * std::f64::consts::PI / denom).sin();
            4.0 * s * s
        })
        .collect()
}

/// Imaginary parts above this fraction of the magnitude are treated as a
/// genuinely complex spectrum.
const IMAG_TOLERANCE: f64 = 1e-10;

/// Sorted eigenvalues of the 1D factor for the given boundary pair.
///
/// Dirichlet–Dirichlet uses the closed form; any pair involving Neumann is
/// solved numerically from the dense (non-symmetric) factor.
pub fn eigen_1d(n: usize, kinds: [BcKind; 2]) -> Result<Vec<f64>> {
    assert!(n >= 1);
    if kinds == [BcKind::Dirichlet, BcKind::Dirichlet] {
        return Ok(dirichlet_eigenvalues(n));
    }
    let m = factor_matrix(n, kinds);
    let mut vals = Vec::with_capacity(n);
    for z in m.complex_eigenvalues().iter() {
        if z.im.abs() > IMAG_TOLERANCE * z.re.abs().max(1.0) {
            return Err(Error::ComplexEigenvalue { re: z.re, im: z.im });
        }
        vals.push(z.re);
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

fn extremes(vals: &[f64]) -> (f64, f64) {
    (vals[0], vals[vals.len() - 1])
}

fn bounds_from_factors(
    extents: [usize; 3],
    spacing: [f64; 3],
    kinds: [[BcKind; 2]; 3],
) -> Result<EigenBounds> {
    let (mut lo, mut hi) = (0.0, 0.0);
    for d in 0..3 {
        let (mn, mx) = extremes(&eigen_1d(extents[d], kinds[d])?);
        let h2 = spacing[d] * spacing[d];
        lo += mn / h2;
        hi += mx / h2;
    }
    if lo <= 1e-12 * hi {
        return Err(Error::SingularOperator(format!(
            "lambda_min = {lo:e}; at least one face must be Dirichlet"
        )));
    }
    EigenBounds::new(lo, hi)
}

pub fn global_eigen_bounds(grid: &GridSpec) -> Result<EigenBounds> {
    let kinds = Axis::ALL.map(|a| grid.axis_kinds(a));
    bounds_from_factors(grid.extents(), grid.spacing(), kinds)
}

/// Bounds of this rank's diagonal block: inter-rank cuts act as Dirichlet.
pub fn local_eigen_bounds(grid: &GridSpec, decomp: &Decomposition) -> Result<EigenBounds> {
    let kinds = Axis::ALL.map(|axis| {
        Side::BOTH.map(|side| {
            if decomp.is_physical(axis, side) {
                grid.bc(Face::new(axis, side)).kind
            } else {
                BcKind::Dirichlet
            }
        })
    });
    bounds_from_factors(decomp.local_interior(), grid.spacing(), kinds)
}

/// Bounds for what the operator actually applies: the global matrix in
/// Exchange mode, the local block in LocalBlock mode.
pub fn eigen_bounds(op: &StencilOperator) -> Result<EigenBounds> {
    match op.mode() {
        InterfaceMode::Exchange => global_eigen_bounds(op.grid()),
        InterfaceMode::LocalBlock => local_eigen_bounds(op.grid(), op.decomposition()),
    }
}
