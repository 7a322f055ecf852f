mod common;

use std::sync::Arc;

use poisson_bicgs::chebyshev::{chebyshev_params, chebyshev_run, ChebyshevComm, ChebyshevState};
use poisson_bicgs::comm::{Communicator, DisconnectedComm, SerialComm};
use poisson_bicgs::grid::{build_decomposition, BcKind, Field, GridSpec};
use poisson_bicgs::operator::{global_eigen_bounds, InterfaceMode, StencilOperator};

use common::*;

fn run(op: &StencilOperator, comm: &dyn Communicator, alpha: f64, beta: f64, iters: usize, b: &[f64], mode: ChebyshevComm) -> Vec<f64> {
    let params = chebyshev_params(alpha, beta, iters).unwrap();
    let mut bf = Field::from_interior(op.decomposition(), b);
    let mut x = op.new_field();
    let mut st = ChebyshevState::new(op);
    chebyshev_run(op, comm, &params, &mut bf, &mut x, mode, &mut st).unwrap();
    x.interior_values()
}

#[test]
fn scalar_system_converges_on_tight_interval() {
    let grid = GridSpec::with_kinds([1, 1, 1], [1.0; 3], [BcKind::Dirichlet; 6]).unwrap();
    let op = serial_op(grid, InterfaceMode::Exchange);
    let x = run(&op, &SerialComm::new(), 5.999999, 6.000001, 2, &[6.0], ChebyshevComm::Exchange);
    assert!((x[0] - 1.0).abs() <= 1e-9, "{}", x[0]);
}

#[test]
fn first_iterate_matches_hand_formula() {
    // With one step, x = 2(ρ₁/δ)(2b − Ab/θ), ρ₀ = 1/σ, ρ₁ = 1/(2σ − ρ₀).
    let grid = GridSpec::with_kinds([3, 2, 2], [1.0; 3], [BcKind::Dirichlet; 6]).unwrap();
    let op = serial_op(grid, InterfaceMode::Exchange);
    let b = sample_values(12, 3);
    let (alpha, beta) = (2.0, 10.0);
    let (theta, delta) = (6.0, 4.0);
    let sigma: f64 = theta / delta;
    let rho1 = 1.0 / (2.0 * sigma - 1.0 / sigma);
    let ab = apply_serial(&op, &b);
    let want: Vec<f64> = b.iter().zip(&ab).map(|(bi, abi)| 2.0 * rho1 / delta * (2.0 * bi - abi / theta)).collect();
    let got = run(&op, &SerialComm::new(), alpha, beta, 1, &b, ChebyshevComm::Exchange);
    assert!(max_rel(&got, &want) <= 1e-14);
}

#[test]
fn converges_as_a_solver_with_exact_interval() {
    let grid = GridSpec::with_kinds([8, 8, 8], [1.0; 3], [BcKind::Dirichlet; 6]).unwrap();
    let bounds = global_eigen_bounds(&grid).unwrap();
    let op = serial_op(grid, InterfaceMode::Exchange);
    let b = sample_values(512, 8);
    let x = run(&op, &SerialComm::new(), bounds.lambda_min, bounds.lambda_max, 50, &b, ChebyshevComm::Exchange);
    let ax = apply_serial(&op, &x);
    let r: f64 = b.iter().zip(&ax).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let bn: f64 = b.iter().map(|p| p * p).sum::<f64>().sqrt();
    assert!(r / bn < 1e-6, "{:e}", r / bn);
}

#[test]
fn iterate_is_linear_in_the_right_hand_side() {
    let kinds = [BcKind::Neumann, BcKind::Dirichlet, BcKind::Dirichlet, BcKind::Neumann, BcKind::Dirichlet, BcKind::Dirichlet];
    let grid = GridSpec::with_kinds([6, 4, 4], [0.5; 3], kinds).unwrap();
    let bounds = global_eigen_bounds(&grid).unwrap();
    let op = serial_op(grid, InterfaceMode::Exchange);
    let (b1, b2) = (sample_values(96, 1), sample_values(96, 2));
    let (a, c) = (1.7, -0.4);
    let comb: Vec<f64> = b1.iter().zip(&b2).map(|(p, q)| a * p + c * q).collect();
    let go = |b: &[f64]| run(&op, &SerialComm::new(), bounds.lambda_min * 2.0, bounds.lambda_max, 24, b, ChebyshevComm::Exchange);
    let (x1, x2, xc) = (go(&b1), go(&b2), go(&comb));
    let want: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + c * q).collect();
    assert!(max_rel(&xc, &want) <= 1e-12);
    assert_eq!(go(&b1), x1);
}

#[test]
fn no_exchange_mode_needs_no_communicator() {
    let grid = Arc::new(GridSpec::with_kinds([8, 4, 4], [1.0; 3], [BcKind::Dirichlet; 6]).unwrap());
    let d = Arc::new(build_decomposition(&grid, [2, 1, 1], 2, 1).unwrap());
    let op = StencilOperator::new(grid.clone(), d, InterfaceMode::LocalBlock);
    let b = sample_values(64, 4);
    let x = run(&op, &DisconnectedComm, 0.5, 11.0, 24, &b, ChebyshevComm::NoExchange);
    assert!(x.iter().all(|v| v.is_finite()));
}

#[test]
fn run_performs_no_reductions() {
    let grid = Arc::new(GridSpec::with_kinds([8, 4, 4], [1.0; 3], [BcKind::Dirichlet; 6]).unwrap());
    let deltas = on_ranks(2, |comm| {
        let d = Arc::new(build_decomposition(&grid, [2, 1, 1], 2, comm.rank()).unwrap());
        let op = StencilOperator::new(grid.clone(), d, InterfaceMode::Exchange);
        let b = sample_values(64, comm.rank() as u64);
        let before = comm.counters();
        run(&op, &comm, 0.5, 11.0, 10, &b, ChebyshevComm::Exchange);
        let mid = comm.counters();
        run(&op, &comm, 0.5, 11.0, 10, &b, ChebyshevComm::NoExchange);
        (mid.since(&before), comm.counters().since(&mid))
    });
    for (exchange, no_exchange) in deltas {
        assert_eq!(exchange.allreduce_calls, 0);
        // b once, then y before each of the 9 later steps.
        assert_eq!(exchange.halo_messages_sent, 10);
        assert_eq!(no_exchange.allreduce_calls, 0);
        assert_eq!(no_exchange.halo_messages_sent, 0);
    }
}
