//! The manufactured test problem: `-Δφ = sin x + cos y + 3 sin z − 2yz + 2`
//! on `[3, 28.5] × [2.5, 28] × [10, 35.5]`, Dirichlet on x−, y+, z+ and
//! Neumann on x+, y−, z−.

use std::fmt;
use std::sync::Arc;

use crate::comm::Communicator;
use crate::error::Result;
use crate::grid::{Axis, BcKind, Decomposition, FaceBc, Field, GridSpec};
use crate::operator::fold_boundary_into_rhs;

pub const STANDARD_BOUNDS: [[f64; 2]; 3] = [[3.0, 28.5], [2.5, 28.0], [10.0, 35.5]];

/// Ordered x−, x+, y−, y+, z−, z+.
pub const STANDARD_FACE_KINDS: [BcKind; 6] = [
    BcKind::Dirichlet,
    BcKind::Neumann,
    BcKind::Neumann,
    BcKind::Dirichlet,
    BcKind::Neumann,
    BcKind::Dirichlet,
];

pub fn standard_source(x: f64, y: f64, z: f64) -> f64 {
    x.sin() + y.cos() + 3.0 * z.sin() - 2.0 * y * z + 2.0
}

pub type Source = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A grid plus a source term. Boundary data lives in the grid's face BCs.
#[derive(Clone)]
pub struct PoissonProblem {
    grid: Arc<GridSpec>,
    source: Source,
}

impl fmt::Debug for PoissonProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PoissonProblem").field("grid", &self.grid).finish_non_exhaustive()
    }
}

impl PoissonProblem {
    pub fn new(grid: GridSpec, source: Source) -> Self {
        PoissonProblem { grid: Arc::new(grid), source }
    }

    /// The test problem with homogeneous boundary data on `extents` nodes
    /// spanning the standard domain.
    pub fn standard(extents: [usize; 3]) -> Result<Self> {
        Self::standard_with(extents, STANDARD_BOUNDS, STANDARD_FACE_KINDS.map(FaceBc::homogeneous))
    }

    pub fn standard_with(extents: [usize; 3], bounds: [[f64; 2]; 3], face_bcs: [FaceBc; 6]) -> Result<Self> {
        let grid = GridSpec::from_bounds(extents, bounds, face_bcs)?;
        Ok(Self::new(grid, Arc::new(standard_source)))
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn source_at(&self, i: usize, j: usize, k: usize) -> f64 {
        let g = &self.grid;
        (self.source)(g.coord(Axis::X, i as isize), g.coord(Axis::Y, j as isize), g.coord(Axis::Z, k as isize))
    }

    /// This rank's right-hand side: source samples plus folded boundary data.
    pub fn local_rhs(&self, decomp: &Arc<Decomposition>) -> Field {
        let mut rhs = Field::zeros(decomp);
        let [ox, oy, oz] = decomp.global_offset();
        let [nx, ny, nz] = decomp.local_interior();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let v = self.source_at(ox + i, oy + j, oz + k);
                    rhs.set(i as isize, j as isize, k as isize, v);
                }
            }
        }
        fold_boundary_into_rhs(&self.grid, decomp, &mut rhs);
        rhs
    }

    /// The whole right-hand side in x-fastest order, for the dense oracle.
    pub fn global_rhs(&self) -> Vec<f64> {
        let decomp = Arc::new(Decomposition::serial(&self.grid));
        self.local_rhs(&decomp).interior_values()
    }
}

/// Scales `rhs` to unit global 2-norm and returns the original norm. A zero
/// right-hand side is left alone and reports a norm of 1.
pub fn normalize_rhs(rhs: &mut Field, comm: &dyn Communicator) -> Result<f64> {
    let mut sum = [rhs.interior_offsets().map(|o| rhs.as_slice()[o].powi(2)).sum::<f64>()];
    comm.allreduce_sum(&mut sum)?;
    let norm = sum[0].sqrt();
    if norm == 0.0 {
        return Ok(1.0);
    }
    let scale = 1.0 / norm;
    for o in rhs.interior_offsets() {
        rhs.as_mut_slice()[o] *= scale;
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::SerialComm;

    #[test]
    fn full_size_spacing_is_a_tenth() {
        let p = PoissonProblem::standard([256; 3]).unwrap();
        for h in p.grid().spacing() {
            assert!((h - 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn source_at_first_node() {
        let p = PoissonProblem::standard([16; 3]).unwrap();
        let expect = 3f64.sin() + 2.5f64.cos() + 3.0 * 10f64.sin() - 50.0 + 2.0;
        assert_eq!(p.source_at(0, 0, 0), expect);
        assert_eq!(p.global_rhs()[0], expect);
    }

    #[test]
    fn normalization_gives_unit_norm() {
        let p = PoissonProblem::standard([8; 3]).unwrap();
        let d = Arc::new(Decomposition::serial(p.grid()));
        let mut rhs = p.local_rhs(&d);
        let before = rhs.interior_values();
        let norm = normalize_rhs(&mut rhs, &SerialComm::new()).unwrap();
        let n2: f64 = rhs.interior_values().iter().map(|v| v * v).sum();
        assert!((n2.sqrt() - 1.0).abs() < 1e-15);
        assert!((before[3] / norm - rhs.interior_values()[3]).abs() < 1e-15);
    }

    #[test]
    fn zero_rhs_keeps_unit_scale() {
        let g = GridSpec::with_kinds([2; 3], [1.0; 3], [BcKind::Dirichlet; 6]).unwrap();
        let d = Arc::new(Decomposition::serial(&g));
        let mut f = Field::zeros(&d);
        assert_eq!(normalize_rhs(&mut f, &SerialComm::new()).unwrap(), 1.0);
    }
}
