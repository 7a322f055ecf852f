#![allow(dead_code)]

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use poisson_bicgs::comm::{in_process_group, InProcessComm};
use poisson_bicgs::grid::{BcKind, Decomposition, Field, GridSpec};
use poisson_bicgs::operator::{DenseOperator, InterfaceMode, StencilOperator};

use BcKind::{Dirichlet as D, Neumann as N};

/// Boundary-kind assignments (x−, x+, y−, y+, z−, z+) exercised by the
/// oracle comparisons. Each has at least one Dirichlet face except the last,
/// which is only used where singular operators are acceptable.
pub fn bc_sets() -> Vec<[BcKind; 6]> {
    vec![
        [D, D, D, D, D, D],
        [N, D, D, D, D, D],
        [D, N, D, D, D, D],
        [D, N, N, D, N, D],
        [N, D, D, N, D, N],
        [N, N, D, D, N, N],
        [D, D, N, N, N, D],
        [N, D, N, D, N, D],
        [D, N, D, N, D, N],
        [N, N, N, N, N, D],
        [N, N, N, N, N, N],
    ]
}

/// Deterministic, sign-varying test data.
pub fn sample_values(n: usize, seed: u64) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 + 1.0) * 0.7548776662 + seed as f64 * 0.5698402910).sin() * 2.0 - 0.3).collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `‖a − b‖∞ / ‖b‖∞`.
pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / max_abs(b).max(f64::MIN_POSITIVE)
}

pub fn serial_op(grid: GridSpec, mode: InterfaceMode) -> StencilOperator {
    let d = Arc::new(Decomposition::serial(&grid));
    StencilOperator::new(Arc::new(grid), d, mode)
}

/// Matrix-free `A v` on one rank, with ghosts filled.
pub fn apply_serial(op: &StencilOperator, v: &[f64]) -> Vec<f64> {
    let mut f = Field::from_interior(op.decomposition(), v);
    op.fill_ghost(&mut f);
    let mut out = op.new_field();
    op.apply(&f, &mut out);
    out.interior_values()
}

/// Runs `f` on every rank of an in-process group, returning results in rank order.
pub fn on_ranks<T: Send>(n: usize, f: impl Fn(InProcessComm) -> T + Sync) -> Vec<T> {
    let comms = in_process_group(n, Duration::from_secs(30));
    thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = comms.into_iter().map(|c| s.spawn(move || f(c))).collect();
        handles.into_iter().map(|h| h.join().expect("rank worker panicked")).collect()
    })
}

/// Global x-fastest index of every interior cell of `decomp`, in local traversal order.
pub fn global_indices(decomp: &Decomposition) -> Vec<usize> {
    let [gx, gy, _] = decomp.global_extents();
    let [nx, ny, nz] = decomp.local_interior();
    let mut out = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let [x, y, z] = decomp.local_to_global([i, j, k]);
                out.push(x + gx * (y + gy * z));
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unpreconditioned Bi-CGSTAB as written in van der Vorst (1992), on the
/// dense matrix. Returns the iterate and `‖r_i‖/‖b‖` per iteration.
pub fn textbook_bicgstab(a: &DenseOperator, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, Vec<f64>) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let b_norm = dot(b, b).sqrt();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = a.matvec(&p);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        let t = a.matvec(&s);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = dot(&r, &r).sqrt() / b_norm;
        history.push(res);
        if res <= tol {
            break;
        }
    }
    (x, history)
}

/// Applies `kind` once on each rank of a 2×1×1 decomposition of a small
/// mixed-boundary problem and returns each rank's counter growth during the
/// application.
pub fn precond_counter_deltas(kind: poisson_bicgs::precond::PreconditionerKind) -> Vec<poisson_bicgs::comm::MessageCounters> {
    use poisson_bicgs::comm::Communicator;
    use poisson_bicgs::grid::build_decomposition;
    use poisson_bicgs::precond::{PrecondSettings, Preconditioner};
    let kinds = [D, N, N, D, N, D];
    let grid = Arc::new(GridSpec::with_kinds([8, 6, 6], [0.5; 3], kinds).unwrap());
    let settings = PrecondSettings { cheb_iters: 6, rescale_min: 2.0, ..Default::default() };
    on_ranks(2, |comm| {
        let d = Arc::new(build_decomposition(&grid, [2, 1, 1], 2, comm.rank()).unwrap());
        let op = StencilOperator::new(grid.clone(), d.clone(), InterfaceMode::Exchange);
        let mut m = Preconditioner::new(kind, settings.clone());
        m.prepare(&op).unwrap();
        let mut p = Field::from_interior(&d, &sample_values(d.interior_len(), comm.rank() as u64 + 1));
        let mut out = op.new_field();
        let before = comm.counters();
        m.apply(&op, &comm, &mut p, &mut out).unwrap();
        comm.counters().since(&before)
    })
}
