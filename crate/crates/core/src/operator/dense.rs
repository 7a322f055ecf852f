//! Dense Kronecker-assembled operator. Verification only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Axis, BcKind, GridSpec};

pub const DEFAULT_ORACLE_CAP: usize = 4096;

/// The 1D factor: `D` for Dirichlet–Dirichlet, otherwise `N` with
/// `α = 2` when the low side is Neumann and `β = 2` when the high side is.
///
/// A single node takes `[2]`, or `[0]` when both sides are Neumann.
pub fn factor_matrix(n: usize, kinds: [BcKind; 2]) -> DMatrix<f64> {
    assert!(n >= 1);
    if n == 1 {
        let v = if kinds == [BcKind::Neumann, BcKind::Neumann] { 0.0 } else { 2.0 };
        return DMatrix::from_element(1, 1, v);
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 2.0;
        if i > 0 {
            m[(i, i - 1)] = -1.0;
        }
        if i + 1 < n {
            m[(i, i + 1)] = -1.0;
        }
    }
    if kinds[0] == BcKind::Neumann {
        m[(0, 1)] = -2.0;
    }
    if kinds[1] == BcKind::Neumann {
        m[(n - 1, n - 2)] = -2.0;
    }
    m
}

#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub n: usize,
    pub entries: DMatrix<f64>,
}

pub fn assemble_dense(grid: &GridSpec) -> Result<DenseOperator> {
    assemble_dense_with_cap(grid, DEFAULT_ORACLE_CAP)
}

/// `I_z⊗I_y⊗O_x/Δx² + I_z⊗O_y/Δy²⊗I_x + O_z/Δz²⊗I_y⊗I_x`, x fastest.
pub fn assemble_dense_with_cap(grid: &GridSpec, cap: usize) -> Result<DenseOperator> {
    let n = grid.unknowns();
    if n > cap {
        return Err(Error::OracleTooLarge { unknowns: n, cap });
    }
    let [nx, ny, nz] = grid.extents();
    let [hx, hy, hz] = grid.spacing();
    let ox = factor_matrix(nx, grid.axis_kinds(Axis::X)) / (hx * hx);
    let oy = factor_matrix(ny, grid.axis_kinds(Axis::Y)) / (hy * hy);
    let oz = factor_matrix(nz, grid.axis_kinds(Axis::Z)) / (hz * hz);
    let ix = DMatrix::<f64>::identity(nx, nx);
    let iy = DMatrix::<f64>::identity(ny, ny);
    let iz = DMatrix::<f64>::identity(nz, nz);
    let mut p = iz.kronecker(&iy.kronecker(&ox));
    p += iz.kronecker(&oy.kronecker(&ix));
    p += oz.kronecker(&iy.kronecker(&ix));
    Ok(DenseOperator { n, entries: p })
}

impl DenseOperator {
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let y = &self.entries * DVector::from_column_slice(v);
        y.as_slice().to_vec()
    }

    /// Sub-matrix on the given global indices (rows and columns).
    pub fn block(&self, indices: &[usize]) -> DenseOperator {
        let m = indices.len();
        let entries = DMatrix::from_fn(m, m, |r, c| self.entries[(indices[r], indices[c])]);
        DenseOperator { n: m, entries }
    }

    /// (lower, upper) bandwidth.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for c in 0..self.n {
            for r in 0..self.n {
                if self.entries[(r, c)] != 0.0 {
                    if r > c {
                        kl = kl.max(r - c);
                    } else {
                        ku = ku.max(c - r);
                    }
                }
            }
        }
        (kl, ku)
    }

    /// Direct solve by Gaussian elimination with partial pivoting, restricted
    /// to the matrix band (entries outside it are zero and stay zero).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        let (kl, ku) = self.bandwidths();
        // Row i stores columns i-kl ..= i+ku+kl (pivoting fill-in included).
        let width = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * width];
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            for j in lo..=hi {
                band[at(i, j)] = self.entries[(i, j)];
            }
        }
        let mut b = rhs.to_vec();
        for c in 0..n {
            let last_row = (c + kl).min(n - 1);
            let last_col = (c + ku + kl).min(n - 1);
            let mut piv = c;
            for r in c + 1..=last_row {
                if band[at(r, c)].abs() > band[at(piv, c)].abs() {
                    piv = r;
                }
            }
            if band[at(piv, c)] == 0.0 {
                return Err(Error::SingularOperator(format!("zero pivot in column {c}")));
            }
            if piv != c {
                for j in c..=last_col {
                    band.swap(at(c, j), at(piv, j));
                }
                b.swap(c, piv);
            }
            let d = band[at(c, c)];
            for r in c + 1..=last_row {
                let f = band[at(r, c)] / d;
                if f == 0.0 {
                    continue;
                }
                band[at(r, c)] = 0.0;
                for j in c + 1..=last_col {
                    band[at(r, j)] -= f * band[at(c, j)];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for c in (0..n).rev() {
            let last_col = (c + ku + kl).min(n - 1);
            let mut s = b[c];
            for j in c + 1..=last_col {
                s -= band[at(c, j)] * x[j];
            }
            x[c] = s / band[at(c, c)];
        }
        Ok(x)
    }

    /// All eigenvalues as (re, im) pairs from a dense real Schur decomposition.
    pub fn complex_eigenvalues(&self) -> Vec<(f64, f64)> {
        self.entries
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re, z.im))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BcKind::{Dirichlet as D, Neumann as N};

    #[test]
    fn two_cells_dirichlet() {
        let g = GridSpec::with_kinds([2, 1, 1], [1.0; 3], [D; 6]).unwrap();
        let p = assemble_dense(&g).unwrap();
        assert_eq!(p.entries, DMatrix::from_row_slice(2, 2, &[6.0, -1.0, -1.0, 6.0]));
    }

    #[test]
    fn single_cell_dirichlet() {
        let g = GridSpec::with_kinds([1, 1, 1], [1.0; 3], [D; 6]).unwrap();
        let p = assemble_dense(&g).unwrap();
        assert_eq!(p.entries[(0, 0)], 6.0);
    }

    #[test]
    fn neumann_low_factor_first_row() {
        let m = factor_matrix(3, [N, D]);
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, -2.0, 0.0]);
        assert_eq!(m.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, -1.0, 2.0]);
        let m = factor_matrix(3, [D, N]);
        assert_eq!(m.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, -2.0, 2.0]);
    }

    #[test]
    fn cap_is_enforced() {
        let g = GridSpec::with_kinds([17, 16, 16], [1.0; 3], [D; 6]).unwrap();
        assert!(matches!(assemble_dense(&g), Err(Error::OracleTooLarge { unknowns: 4352, cap: 4096 })));
    }

    #[test]
    fn banded_solve_matches_nalgebra_lu() {
        let g = GridSpec::with_kinds([4, 3, 5], [0.5, 1.0, 0.7], [N, D, D, N, N, D]).unwrap();
        let p = assemble_dense(&g).unwrap();
        let rhs: Vec<f64> = (0..p.n).map(|i| ((i * 13 % 7) as f64) - 2.5).collect();
        let x = p.solve(&rhs).unwrap();
        let lu = p.entries.clone().lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
        for (a, b) in x.iter().zip(lu.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let g = GridSpec::with_kinds([3, 1, 1], [1.0; 3], [N; 6]).unwrap();
        let p = assemble_dense(&g).unwrap();
        // All-Neumann with one node in y and z: the x factor is singular and so is P.
        let r = p.solve(&[1.0, 0.0, -1.0]);
        assert!(r.is_err() || r.unwrap().iter().any(|v| !v.is_finite() || v.abs() > 1e12));
    }
}
