use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabmor::dynsys::{spectral_abscissa, LinearSystem};
use stabmor::linalg::SparseMatrix;
use stabmor::projection::{ProjectionBasis, BasisMethod};
use stabmor::stabilize::*;

/// Stable, non-dissipative pencil with oscillatory modes and a diagonal mass.
fn test_system(n: usize, seed: u64) -> LinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, -(1.0 + 4.0 * i as f64 / n as f64)));
        if i + 1 < n {
            let w = rng.random_range(0.5..3.0);
            t.push((i, i + 1, w));
            t.push((i + 1, i, -w));
        }
    }
    t.push((0, 1, 5.0));
    t.push((10, 11, 7.0));
    let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
    let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.8..1.2)).collect();
    let b = DMatrix::from_fn(n, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let c = DMatrix::from_fn(1, n, |_, j| if j == n - 1 { 1.0 } else { 0.0 });
    LinearSystem::new(SparseMatrix::from_diagonal(&e), a, b, c).unwrap()
}

#[test]
fn low_rank_adi_matches_dense_solution() {
    let sys = test_system(100, 3);
    assert!(spectral_abscissa(&sys).unwrap() < 0.0);
    let rhs = build_stab_factor_f(&sys, 1.0).unwrap();
    assert_eq!(rhs.k, 2);

    let opts = AdiOptions { max_steps: 60, tol: 1e-14, ..Default::default() };
    let adi = solve_lyapunov_lradi(&sys, &rhs.u_tilde, &opts).unwrap();
    assert!(adi.shifts.iter().any(|p| p.im != 0.0), "expected complex shifts");
    let f = &rhs.u_tilde * rhs.u_tilde.transpose();
    let dense = solve_lyapunov_dense(&sys.a().to_dense(), &sys.e().to_dense(), &f, sys.tolerances()).unwrap();
    let low = &adi.z * adi.z.transpose();
    let rel = (&low - &dense).norm() / dense.norm();
    assert!(rel < 1e-6, "relative difference {rel:.3e} after {} steps", adi.steps);
    assert!(adi.residual_history.last().unwrap() < &1e-10);
}

#[test]
fn low_rank_stabilizer_gives_stable_roms() {
    let sys = test_system(100, 5);
    let cfg = StabilizerConfig { mode: LyapunovMode::LowRankAdi, adi: AdiOptions { max_steps: 60, tol: 1e-12, ..Default::default() }, ..Default::default() };
    let stab = assemble_stabilizer(&sys, &cfg).unwrap();
    assert!(stab.q() > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for r in [1, 3, 8, 20] {
        let v = DMatrix::from_fn(100, r, |_, _| rng.random_range(-1.0..1.0));
        let basis = ProjectionBasis::new(v.qr().q(), BasisMethod::External).unwrap();
        let rom = stabilized_reduce(&sys, &basis, &stab).unwrap();
        assert!(rom.spectral_abscissa().unwrap() < 0.0, "r = {r}");
        assert!(condition_bound_check(&sys, &stab, &rom).unwrap().holds);
    }
}
