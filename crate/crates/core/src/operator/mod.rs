//! Matrix-free negative Laplacian on the local subdomain, ghost handling and
//! boundary-data folding, plus the eigenvalue machinery and the dense
//! Kronecker oracle used to verify it.
//!
//! All solver-side applications are homogeneous: Dirichlet ghosts are zero
//! and Neumann ghosts mirror the first interior neighbor. Inhomogeneous
//! boundary data enters once, through [`fold_boundary_into_rhs`].

mod dense;
mod eigen;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use dense::{
    assemble_dense, assemble_dense_with_cap, factor_matrix, DenseOperator, DEFAULT_ORACLE_CAP,
};
pub use eigen::{
    dirichlet_eigenvalues, eigen_1d, eigen_bounds, global_eigen_bounds, local_eigen_bounds,
    EigenBounds,
};

use crate::comm::Communicator;
use crate::error::Result;
use crate::grid::{Axis, BcKind, Decomposition, Face, Field, GridSpec, PlaneKind, Side};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterfaceMode {
    /// Inter-rank halos carry neighbor values filled by halo exchange.
    Exchange,
    /// Inter-rank halos are zero: the operator is this subdomain's diagonal
    /// block of the global matrix.
    LocalBlock,
}

/// The 7-point stencil for `-Δ` on one rank's subdomain.
#[derive(Clone, Debug)]
pub struct StencilOperator {
    grid: Arc<GridSpec>,
    decomp: Arc<Decomposition>,
    mode: InterfaceMode,
    inv_h2: [f64; 3],
}

impl StencilOperator {
    pub fn new(grid: Arc<GridSpec>, decomp: Arc<Decomposition>, mode: InterfaceMode) -> Self {
        assert_eq!(grid.extents(), decomp.global_extents(), "decomposition built for another grid");
        let inv_h2 = grid.spacing().map(|h| 1.0 / (h * h));
        StencilOperator { grid, decomp, mode, inv_h2 }
    }

    /// The same operator with a different interface policy.
    pub fn with_mode(&self, mode: InterfaceMode) -> Self {
        StencilOperator { mode, ..self.clone() }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn decomposition(&self) -> &Arc<Decomposition> {
        &self.decomp
    }

    pub fn mode(&self) -> InterfaceMode {
        self.mode
    }

    pub fn new_field(&self) -> Field {
        Field::zeros(&self.decomp)
    }

    /// Exchanges halos (Exchange mode only) and then fills the ghosts.
    pub fn update_ghosts(&self, field: &mut Field, comm: &dyn Communicator) -> Result<()> {
        if self.mode == InterfaceMode::Exchange {
            comm.halo_exchange(field)?;
        }
        self.fill_ghost(field);
        Ok(())
    }

    pub fn fill_ghost(&self, field: &mut Field) {
        self.fill_ghost_with(field, self.mode);
    }

    /// Sets every ghost the stencil reads. Inter-rank halos are zeroed in
    /// LocalBlock mode, Dirichlet ghosts are zeroed, then Neumann ghosts copy
    /// the mirror cell one spacing inside the face (`φ₋₁ = φ₁`).
    pub fn fill_ghost_with(&self, field: &mut Field, mode: InterfaceMode) {
        assert!(
            Arc::ptr_eq(field.decomposition(), &self.decomp) || **field.decomposition() == *self.decomp,
            "field is not on this operator's decomposition"
        );
        let decomp = &self.decomp;
        for axis in Axis::ALL {
            for side in Side::BOTH {
                let zero = if decomp.is_physical(axis, side) {
                    self.grid.bc(Face::new(axis, side)).kind == BcKind::Dirichlet
                } else {
                    mode == InterfaceMode::LocalBlock
                };
                if zero {
                    let offs: Vec<usize> = field.plane_offsets(axis, side, PlaneKind::Halo).collect();
                    let data = field.as_mut_slice();
                    for o in offs {
                        data[o] = 0.0;
                    }
                }
            }
        }
        let dims = field.dims();
        let strides = field.strides();
        for axis in Axis::ALL {
            let d = axis.index();
            for side in Side::BOTH {
                if !decomp.is_physical(axis, side)
                    || self.grid.bc(Face::new(axis, side)).kind != BcKind::Neumann
                {
                    continue;
                }
                let other = side.opposite();
                // With one cell along the axis the mirror is the opposite ghost,
                // unless that is itself a Neumann face: then the cell mirrors itself.
                let self_mirror = dims[d] == 1
                    && decomp.is_physical(axis, other)
                    && self.grid.bc(Face::new(axis, other)).kind == BcKind::Neumann;
                let shift = if self_mirror { strides[d] } else { 2 * strides[d] };
                let offs: Vec<usize> = field.plane_offsets(axis, side, PlaneKind::Halo).collect();
                let data = field.as_mut_slice();
                for o in offs {
                    data[o] = match side {
                        Side::Low => data[o + shift],
                        Side::High => data[o - shift],
                    };
                }
            }
        }
    }

    /// Core sweep: calls `visit(offset, (A·input)[offset])` for every interior
    /// cell in x-fastest order. Ghosts of `input` must already be filled.
    #[inline]
    pub fn sweep(&self, input: &Field, mut visit: impl FnMut(usize, f64)) {
        let [nx, ny, nz] = input.dims();
        debug_assert_eq!([nx, ny, nz], self.decomp.local_interior());
        let [_, sy, sz] = input.strides();
        let [cx, cy, cz] = self.inv_h2;
        let u = input.as_slice();
        for k in 0..nz {
            for j in 0..ny {
                let row = 1 + (j + 1) * sy + (k + 1) * sz;
                for c in row..row + nx {
                    let uc = u[c];
                    let v = cx * (2.0 * uc - u[c - 1] - u[c + 1])
                        + cy * (2.0 * uc - u[c - sy] - u[c + sy])
                        + cz * (2.0 * uc - u[c - sz] - u[c + sz]);
                    visit(c, v);
                }
            }
        }
    }

    /// `out = A·input` on the interior; `out`'s halo is left untouched.
    pub fn apply(&self, input: &Field, out: &mut Field) {
        assert!(input.same_layout(out), "mismatched decompositions between input and output");
        let o = out.as_mut_slice();
        self.sweep(input, |c, v| o[c] = v);
    }

    /// Fused `out = A·input` and local partial `dotᵀ·out` in one sweep.
    pub fn apply_dot(&self, input: &Field, out: &mut Field, dot: &Field) -> f64 {
        assert!(input.same_layout(out) && input.same_layout(dot), "mismatched decompositions");
        let o = out.as_mut_slice();
        let d = dot.as_slice();
        let mut sum = 0.0;
        self.sweep(input, |c, v| {
            o[c] = v;
            sum += d[c] * v;
        });
        sum
    }
}

/// Local partial dot product over the interior in the fixed traversal order.
pub fn local_dot(a: &Field, b: &Field) -> f64 {
    assert!(a.same_layout(b), "mismatched decompositions");
    let (x, y) = (a.as_slice(), b.as_slice());
    let mut sum = 0.0;
    for c in a.interior_offsets() {
        sum += x[c] * y[c];
    }
    sum
}

/// Adds the boundary data of every physical face this rank touches to the
/// right-hand side, so that the homogeneous-ghost operator with the folded
/// right-hand side reproduces the inhomogeneous problem.
///
/// Dirichlet value `g` sits in the ghost and contributes `g/Δ²`. Neumann
/// data `g` is the outward normal derivative at the face node; the ghost is
/// `φ_mirror + 2Δ·g`, contributing `2g/Δ`.
pub fn fold_boundary_into_rhs(grid: &GridSpec, decomp: &Decomposition, rhs: &mut Field) {
    let spacing = grid.spacing();
    let offset = decomp.global_offset();
    let dims = rhs.dims();
    for face in Face::ALL {
        let Face { axis, side } = face;
        if !decomp.is_physical(axis, side) {
            continue;
        }
        let bc = grid.bc(face);
        if bc.data.is_zero() {
            continue;
        }
        let h = spacing[axis.index()];
        let other = Face::new(axis, side.opposite());
        let mirror_is_dirichlet_ghost = bc.kind == BcKind::Neumann
            && dims[axis.index()] == 1
            && decomp.is_physical(axis, other.side)
            && grid.bc(other).kind == BcKind::Dirichlet;
        let (a, b) = axis.others();
        let offs: Vec<usize> = rhs.plane_offsets(axis, side, PlaneKind::Border).collect();
        let mut it = offs.into_iter();
        for ib in 0..dims[b.index()] {
            for ia in 0..dims[a.index()] {
                let o = it.next().expect("plane length");
                let ca = grid.coord(a, (offset[a.index()] + ia) as isize);
                let cb = grid.coord(b, (offset[b.index()] + ib) as isize);
                let g = bc.data.eval(ca, cb);
                let mut add = match bc.kind {
                    BcKind::Dirichlet => g / (h * h),
                    BcKind::Neumann => 2.0 * g / h,
                };
                if mirror_is_dirichlet_ghost {
                    add += grid.bc(other).data.eval(ca, cb) / (h * h);
                }
                rhs.as_mut_slice()[o] += add;
            }
        }
    }
}
