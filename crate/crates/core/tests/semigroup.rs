//! For time-independent Hermitian L the fundamental solution is the matrix
//! exponential `exp(−(t−s)L_h)` of the discrete spatial operator.

use greenop::estimates::ESTIMATE_MODE;
use greenop::fixtures::{generate_coefficients, Generator};
use greenop::green::{propagator_stack, GreenSolver, PropagatorKind};
use greenop::operator::{apply_l, default_delta, garding_constants, CoefficientSet};
use greenop::solver::{Direction, SolverConfig};
use greenop::{Field, SpaceTimeGrid, C64};
use nalgebra::{DMatrix, SymmetricEigen};

fn spatial_matrix(c: &CoefficientSet) -> DMatrix<C64> {
    let g = c.grid();
    let ns = g.spatial_len();
    let mut l = DMatrix::zeros(ns, ns);
    for j in 0..ns {
        let e = Field::from_fn(g, |_, x| C64::new(if (x[0] / g.dx()).round() as usize == j { 1.0 } else { 0.0 }, 0.0));
        let col = apply_l(c, &e).unwrap();
        for i in 0..ns {
            l[(i, j)] = col.slice_data(0)[i];
        }
    }
    l
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn fundamental_solution_is_the_matrix_exponential() {
    let g = SpaceTimeGrid::new(1, 32, 8.0, 256, 2.0).unwrap();
    let gen = Generator::RandomElliptic { lambda: 0.5, big_lambda: 2.0, real_symmetric: true, time_dependent: false, band: 3 };
    for seed in [0u64, 1, 2] {
        let c = if seed == 0 { CoefficientSet::identity(&g) } else { generate_coefficients(&gen, &g, seed).unwrap() };
        let l = spatial_matrix(&c);
        assert!((&l - l.adjoint()).norm() <= 1e-12 * l.norm());
        let eig = SymmetricEigen::new(l);
        let cfg = SolverConfig::new(4.0, default_delta(&garding_constants(&c)), 1e-9).with_mode(ESTIMATE_MODE);
        let solver = GreenSolver::new(&c, &cfg, Direction::Forward).unwrap();
        let s = 32;
        let stack = propagator_stack(&solver, s, &[s + 16, s + 64, s + 128], PropagatorKind::Fundamental).unwrap();
        for p in &stack {
            let el = (p.target - s) as f64 * g.dt();
            let decay = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| C64::new((-el * v).exp(), 0.0)));
            let exact = &eig.eigenvectors * decay * eig.eigenvectors.adjoint();
            let err = max_abs(&(&p.entries - &exact)) / max_abs(&exact);
            assert!(err < 5e-3, "seed {seed} t-s {el}: relative error {err:.2e}");
        }
    }
}
