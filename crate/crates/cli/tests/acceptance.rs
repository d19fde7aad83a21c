//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabmor::analysis::{
    h2_error, input_l2_norm, integrate_adaptive, integrate_trapezoidal, output_error, AdaptiveOptions, GridConfig, InputSignal, InputSpec,
    ZeroSystem,
};
use stabmor::benchgen::{
    crafted_cubic, crafted_linear, gen_convection_diffusion, gen_cubic_msd, gen_msd_chain, gen_nonnormal_stable, ConvDiffSpec, CubicMsdSpec,
    MsdChainSpec, NonNormalSpec, VelocityProfile,
};
use stabmor::dynsys::LinearSystem;
use stabmor::linalg::{sym_eig_dense, Tolerances};
use stabmor::nonlinear::{nonlinear_reduce, nonlinear_stabilizer};
use stabmor::projection::{arnoldi_basis, galerkin_reduce, BasisMethod, ProjectionBasis};
use stabmor::stabilize::{
    assemble_stabilizer, build_stab_factor_f, condition_bound_check, solve_lyapunov_dense, solve_lyapunov_lradi, stab_rhs_dense,
    stabilized_reduce, AdiOptions, LyapunovMode, MatrixSqrt, StabilizerConfig,
};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_basis(rng: &mut ChaCha8Rng, n: usize, r: usize) -> ProjectionBasis {
    let v = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
    ProjectionBasis::new(v.qr().q(), BasisMethod::External).expect("orthonormal")
}

fn dense_config() -> StabilizerConfig {
    StabilizerConfig { mode: LyapunovMode::Dense, ..Default::default() }
}

/// Random system from one of the three linear generators, `n <= 300`.
fn random_system(rng: &mut ChaCha8Rng, i: usize) -> (&'static str, LinearSystem) {
    let seed = rng.random::<u64>();
    match i % 3 {
        0 => {
            let spec = MsdChainSpec {
                masses: rng.random_range(3..=60),
                damping: rng.random_range(0.05..2.0),
                stiffness: rng.random_range(0.5..5.0),
                jitter: 0.3,
                seed,
                ..Default::default()
            };
            let spec = MsdChainSpec { output_node: spec.masses - 1, ..spec };
            ("msd", gen_msd_chain(&spec).unwrap())
        }
        1 => {
            let spec = NonNormalSpec {
                n: rng.random_range(10..=150),
                kappa: rng.random_range(10.0..100.0),
                descriptor: rng.random_bool(0.5),
                seed,
                ..Default::default()
            };
            ("nonnormal", gen_nonnormal_stable(&spec).unwrap().system)
        }
        _ => {
            let spec = ConvDiffSpec {
                n: rng.random_range(40..=300),
                diffusion: 10f64.powf(rng.random_range(-3.0..-1.0)),
                velocity: VelocityProfile::Uniform { v: rng.random_range(0.5..2.0) },
                grade: rng.random_range(1.0..10.0),
                scaled: rng.random_bool(0.5),
                ..Default::default()
            };
            ("convdiff", gen_convection_diffusion(&spec).unwrap())
        }
    }
}

struct SweepStats {
    triples: usize,
    unstable_stabilized: Vec<String>,
    nonnormal_cases: usize,
    nonnormal_unstable_conventional: usize,
    condition_checks: usize,
    condition_violations: Vec<String>,
    elapsed: Duration,
}

/// Shared random sweep over (system, V, r) triples.
fn stabilization_sweep() -> SweepStats {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut st = SweepStats {
        triples: 0,
        unstable_stabilized: Vec::new(),
        nonnormal_cases: 0,
        nonnormal_unstable_conventional: 0,
        condition_checks: 0,
        condition_violations: Vec::new(),
        elapsed: Duration::ZERO,
    };
    for i in 0..30 {
        let (kind, sys) = random_system(&mut rng, i);
        let n = sys.n();
        let stab = assemble_stabilizer(&sys, &dense_config()).unwrap();
        let r_cap = n.min(25);
        let krylov = arnoldi_basis(&sys, r_cap, 0.0).unwrap();
        for j in 0..17 {
            let r = rng.random_range(1..=r_cap);
            let basis = if j % 4 == 0 && r <= krylov.r() { krylov.truncate(r).unwrap() } else { random_basis(&mut rng, n, r) };
            let rom = stabilized_reduce(&sys, &basis, &stab).unwrap();
            let alpha = rom.spectral_abscissa().unwrap();
            st.triples += 1;
            if !(alpha < -1e-12) {
                st.unstable_stabilized.push(format!("{kind} n={n} r={r}: {alpha:e}"));
            }
            let cc = condition_bound_check(&sys, &stab, &rom).unwrap();
            st.condition_checks += 1;
            if cc.cond > cc.bound * (1.0 + 1e-10) {
                st.condition_violations.push(format!("{kind} n={n} r={r}: {:e} > {:e}", cc.cond, cc.bound));
            }
            if kind == "nonnormal" {
                let conv = galerkin_reduce(&sys, &basis, None).unwrap().spectral_abscissa().unwrap();
                st.nonnormal_cases += 1;
                if conv >= 0.0 {
                    st.nonnormal_unstable_conventional += 1;
                }
            }
        }
    }
    st.elapsed = start.elapsed();
    st
}

fn criterion_1(st: &SweepStats) -> Outcome {
    check(
        st.triples >= 500 && st.unstable_stabilized.is_empty() && st.elapsed <= Duration::from_secs(300),
        format!(
            "{} triples, {} stabilized ROMs with alpha >= -1e-12 {:?}, {:.1}s",
            st.triples,
            st.unstable_stabilized.len(),
            st.unstable_stabilized.iter().take(3).collect::<Vec<_>>(),
            st.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(st: &SweepStats) -> Outcome {
    let sys = crafted_linear();
    let v = DMatrix::from_element(2, 1, std::f64::consts::FRAC_1_SQRT_2);
    let basis = ProjectionBasis::new(v, BasisMethod::External).unwrap();
    let crafted = galerkin_reduce(&sys, &basis, None).unwrap().spectral_abscissa().unwrap();
    let frac = st.nonnormal_unstable_conventional as f64 / st.nonnormal_cases as f64;
    check(
        crafted >= 0.0 && frac >= 0.01,
        format!(
            "crafted conventional alpha = {crafted:e}; {}/{} non-normal cases unstable ({:.1}%)",
            st.nonnormal_unstable_conventional,
            st.nonnormal_cases,
            100.0 * frac
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < 50 {
        let spec = NonNormalSpec {
            n: rng.random_range(5..=100),
            kappa: rng.random_range(5.0..200.0),
            descriptor: rng.random_bool(0.5),
            seed: rng.random(),
            ..Default::default()
        };
        let sys = gen_nonnormal_stable(&spec).unwrap().system;
        let delta = rng.random_range(0.1..2.0);
        let fac = build_stab_factor_f(&sys, delta).unwrap();
        let tol = Tolerances { symmetry_rel: 1e-10, ..Tolerances::DEFAULT };
        let mu = sym_eig_dense(&sys.symmetric_part_dense().unwrap(), &tol).unwrap().values;
        let f = sym_eig_dense(&stab_rhs_dense(&sys, &fac).unwrap(), &tol).unwrap().values;
        let mut expected: Vec<f64> = mu
            .iter()
            .enumerate()
            .map(|(j, &m)| if j < fac.k { fac.mu_max - m + fac.delta_eff } else { -m })
            .collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        let scale = mu.iter().fold(1.0f64, |s, m| s.max(m.abs()));
        let err = f.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
        tested += 1;
    }
    check(worst <= 1e-8, format!("{tested} systems, worst eigenvalue mismatch {worst:.2e} (relative to max |mu|)"))
}

fn criterion_4(st: &SweepStats) -> Outcome {
    check(
        st.condition_violations.is_empty(),
        format!("{} reductions, {} violations {:?}", st.condition_checks, st.condition_violations.len(), st.condition_violations.iter().take(3).collect::<Vec<_>>()),
    )
}

fn lyapunov_residual(a: &DMatrix<f64>, e: &DMatrix<f64>, m: &DMatrix<f64>, f: &DMatrix<f64>) -> f64 {
    (a.transpose() * m * e + e.transpose() * m * a + f).norm()
}

fn kronecker_lyapunov(a: &DMatrix<f64>, e: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let op = e.transpose().kronecker(&a.transpose()) + a.transpose().kronecker(&e.transpose());
    let rhs = -DVector::from_column_slice(f.as_slice());
    let x = op.lu().solve(&rhs).expect("nonsingular Kronecker operator");
    DMatrix::from_column_slice(n, n, x.as_slice())
}

fn criterion_5() -> Outcome {
    let tol = Tolerances::DEFAULT;
    let mut notes = Vec::new();
    let mut pass = true;

    // Dense residual, n = 300.
    let sys = gen_convection_diffusion(&ConvDiffSpec { n: 300, ..Default::default() }).unwrap();
    let f = stab_rhs_dense(&sys, &build_stab_factor_f(&sys, 1.0).unwrap()).unwrap();
    let (a, e) = (sys.a().to_dense(), sys.e().to_dense());
    let m = solve_lyapunov_dense(&a, &e, &f, &tol).unwrap();
    let res = lyapunov_residual(&a, &e, &m, &f) / f.norm();
    pass &= res <= 1e-8;
    notes.push(format!("dense residual {res:.1e} (n=300)"));

    // Kronecker oracle, n = 40.
    let sys = gen_nonnormal_stable(&NonNormalSpec { n: 40, descriptor: true, seed: 5, ..Default::default() }).unwrap().system;
    let f = stab_rhs_dense(&sys, &build_stab_factor_f(&sys, 1.0).unwrap()).unwrap();
    let (a, e) = (sys.a().to_dense(), sys.e().to_dense());
    let m = solve_lyapunov_dense(&a, &e, &f, &tol).unwrap();
    let oracle = kronecker_lyapunov(&a, &e, &f);
    let kron = (&m - &oracle).norm() / oracle.norm();
    pass &= kron <= 1e-8;
    notes.push(format!("vs Kronecker {kron:.1e} (n=40)"));

    // LR-ADI against the dense correction, n = 200, k <= 5.
    let sys = gen_convection_diffusion(&ConvDiffSpec { n: 200, ..Default::default() }).unwrap();
    let fac = build_stab_factor_f(&sys, 1.0).unwrap();
    let adi = solve_lyapunov_lradi(&sys, &fac.u_tilde, &AdiOptions { max_steps: 30, tol: 1e-14, ..Default::default() }).unwrap();
    let rhs = &fac.u_tilde * fac.u_tilde.transpose();
    let dense = solve_lyapunov_dense(&sys.a().to_dense(), &sys.e().to_dense(), &rhs, &tol).unwrap();
    let rel = (&adi.z * adi.z.transpose() - &dense).norm() / dense.norm();
    pass &= fac.k <= 5 && rel <= 1e-6 && adi.steps <= 30;
    notes.push(format!("LR-ADI vs dense {rel:.1e} (n=200, k={}, {} steps)", fac.k, adi.steps));

    // Rank growth: exactly k columns per step.
    let sys = gen_nonnormal_stable(&NonNormalSpec { n: 120, seed: 9, ..Default::default() }).unwrap().system;
    let fac = build_stab_factor_f(&sys, 1.0).unwrap();
    let adi = solve_lyapunov_lradi(&sys, &fac.u_tilde, &AdiOptions { max_steps: 10, tol: 0.0, ..Default::default() }).unwrap();
    let exact = adi.z.ncols() == fac.k * adi.steps;
    pass &= exact && adi.steps == 10;
    notes.push(format!("rank {} after {} steps with k={}", adi.z.ncols(), adi.steps, fac.k));

    check(pass, notes.join("; "))
}

fn median_apply_time(n: usize, q: usize, rng: &mut ChaCha8Rng) -> f64 {
    let z = DMatrix::from_fn(n, q, |_, _| rng.random_range(-1.0..1.0));
    let sq = MatrixSqrt::new(&z).unwrap();
    let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let reps = (2_000_000 / n).max(20);
    let mut samples = Vec::new();
    for _ in 0..7 {
        let t = Instant::now();
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += sq.apply(&v)[0];
        }
        std::hint::black_box(acc);
        samples.push(t.elapsed().as_secs_f64() / reps as f64);
    }
    samples.sort_by(f64::total_cmp);
    samples[3]
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_sq = 0.0f64;
    let mut worst_inv = 0.0f64;
    for _ in 0..40 {
        let n = rng.random_range(2..=500);
        let q = rng.random_range(1..=20.min(n));
        let z = DMatrix::from_fn(n, q, |_, _| rng.random_range(-1.0..1.0));
        let sq = MatrixSqrt::new(&z).unwrap();
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mv = &v + &z * (z.transpose() * &v);
        worst_sq = worst_sq.max((sq.apply(&sq.apply(&v)) - &mv).norm() / mv.norm());
        worst_inv = worst_inv.max((sq.apply_inverse(&sq.apply(&v)) - &v).norm() / v.norm());
    }
    let ns = [4000usize, 8000, 16000, 32000];
    let times: Vec<f64> = ns.iter().map(|&n| median_apply_time(n, 10, &mut rng)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns.iter().zip(&times).map(|(&n, &t)| ((n as f64).ln(), t.ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    check(
        worst_sq <= 1e-10 && worst_inv <= 1e-10 && (slope - 1.0).abs() <= 0.2,
        format!("square {worst_sq:.1e}, inverse round trip {worst_inv:.1e}, cost slope {slope:.2} over n = 4000..32000"),
    )
}

fn criterion_7() -> Outcome {
    let sys = LinearSystem::from_dense(&DMatrix::identity(1, 1), &DMatrix::from_element(1, 1, -1.0), DMatrix::identity(1, 1), DMatrix::identity(1, 1))
        .unwrap();
    let h2 = h2_error(&sys, &ZeroSystem { n_in: 1, n_out: 1 }, &GridConfig::default()).unwrap();
    let analytic_err = (h2.value - 0.5f64.sqrt()).abs();

    // Output error bounded by H2 error times the input norm on stable pairs.
    let t_end = 10.0;
    let steps = 4000;
    let u = InputSignal::from(InputSpec::Sine { amplitude: 1.0, period: t_end });
    let u_norm = input_l2_norm(&u, 1, t_end, 20 * steps);
    let systems = vec![
        gen_msd_chain(&MsdChainSpec { masses: 10, output_node: 9, ..Default::default() }).unwrap(),
        gen_convection_diffusion(&ConvDiffSpec { n: 100, ..Default::default() }).unwrap(),
        gen_nonnormal_stable(&NonNormalSpec { n: 50, seed: 1, ..Default::default() }).unwrap().system,
    ];
    let mut pairs = 0;
    let mut violations = Vec::new();
    for sys in &systems {
        let fom = integrate_trapezoidal(sys, &u, &DVector::zeros(sys.n()), t_end, steps, false).unwrap();
        let stab = assemble_stabilizer(sys, &dense_config()).unwrap();
        let basis = arnoldi_basis(sys, 8, 0.0).unwrap();
        for r in 1..=basis.r() {
            let b = basis.truncate(r).unwrap();
            for rom in [galerkin_reduce(sys, &b, None).unwrap(), stabilized_reduce(sys, &b, &stab).unwrap()] {
                if !rom.is_stable().unwrap() {
                    continue;
                }
                let h2 = h2_error(sys, &rom, &GridConfig::default()).unwrap();
                let tr = integrate_trapezoidal(&rom, &u, &DVector::zeros(r), t_end, steps, false).unwrap();
                let err = output_error(&fom, &tr, false).unwrap().max_abs;
                pairs += 1;
                if err > (h2.value + h2.refinement_delta()) * u_norm + 1e-8 {
                    violations.push(format!("n={} r={r}: {err:e} > {:e}", sys.n(), h2.value * u_norm));
                }
            }
        }
    }
    check(
        analytic_err <= 1e-3 && violations.is_empty(),
        format!("||1/(s+1)|| error {analytic_err:.1e}; output bound held on {}/{pairs} stable pairs {violations:?}", pairs - violations.len()),
    )
}

fn observed_order(errors: &[f64]) -> f64 {
    let slopes: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    slopes.iter().sum::<f64>() / slopes.len() as f64
}

fn criterion_8() -> Outcome {
    let sys =
        LinearSystem::from_dense(&DMatrix::identity(1, 1), &DMatrix::from_element(1, 1, -1.0), DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
    let x0 = DVector::from_element(1, 1.0);
    let exact = (-1.0f64).exp();
    let u = InputSignal::zero();
    let steps = [10usize, 20, 40, 80];
    let trap: Vec<f64> = steps
        .iter()
        .map(|&s| (integrate_trapezoidal(&sys, &u, &x0, 1.0, s, false).unwrap().final_output().unwrap()[0] - exact).abs())
        .collect();
    let rk: Vec<f64> = [4usize, 8, 16, 32]
        .iter()
        .map(|&s| {
            let opts = AdaptiveOptions { fixed_steps: Some(s), ..Default::default() };
            (integrate_adaptive(&sys, &u, &x0, 1.0, &opts).unwrap().final_output().unwrap()[0] - exact).abs()
        })
        .collect();
    let (pt, pr) = (observed_order(&trap), observed_order(&rk));
    check((pt - 2.0).abs() <= 0.1 && pr >= 3.8, format!("trapezoid order {pt:.3}, Runge-Kutta pair order {pr:.3}"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let chain = MsdChainSpec { masses: 50, output_node: 49, jitter: 0.3, seed: 9, ..Default::default() };
    let sys = gen_cubic_msd(&CubicMsdSpec { chain, gamma: 2.0 }).unwrap();
    let stab = nonlinear_stabilizer(&sys, &dense_config()).unwrap();
    let mut bad = Vec::new();
    for _ in 0..100 {
        let r = rng.random_range(1..=20);
        let basis = random_basis(&mut rng, sys.n(), r);
        let alpha = nonlinear_reduce(&sys, &basis, Some(&stab)).unwrap().spectral_abscissa_at_origin().unwrap();
        if !(alpha < 0.0) {
            bad.push(format!("r={r}: {alpha:e}"));
        }
    }
    let crafted = crafted_cubic();
    let basis = ProjectionBasis::new(DMatrix::from_element(2, 1, std::f64::consts::FRAC_1_SQRT_2), BasisMethod::External).unwrap();
    let cstab = nonlinear_stabilizer(&crafted, &dense_config()).unwrap();
    let conv = nonlinear_reduce(&crafted, &basis, None).unwrap().spectral_abscissa_at_origin().unwrap();
    let stabd = nonlinear_reduce(&crafted, &basis, Some(&cstab)).unwrap().spectral_abscissa_at_origin().unwrap();
    check(
        bad.is_empty() && conv >= 0.0 && stabd < 0.0,
        format!("{}/100 stabilized cubic chain ROMs stable {bad:?}; crafted cubic: conventional {conv:e}, stabilized {stabd:e}", 100 - bad.len()),
    )
}

fn run_cli(args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stabmor")).args(args).env("STABMOR_THREADS", threads).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn sweep_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for name in ["error_sweep.csv", "nonlinear_sweep.csv"] {
        out.push((name.to_string(), std::fs::read(dir.join(name)).unwrap_or_default()));
    }
    out
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let mut runs = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let (nn, msd, r1, r2) = (p(&format!("nn{i}")), p(&format!("msd{i}")), p(&format!("run_nn{i}")), p(&format!("run_msd{i}")));
        run_cli(&["generate", "nonnormal", "--n", "80", "--seed", "17", "-o", &nn], threads)?;
        run_cli(&["generate", "msd", "--masses", "20", "--jitter", "0.2", "--seed", "17", "-o", &msd], threads)?;
        run_cli(&["reduce", "--system", &nn, "--r", "1..15", "--stabilize", "--out", &r1], threads)?;
        run_cli(&["reduce", "--system", &msd, "--method", "pod", "--r", "1..10", "--stabilize", "--cubic-gamma", "1", "--out", &r2], threads)?;
        runs.push([sweep_files(Path::new(&r1)), sweep_files(Path::new(&r2))]);
    }
    let identical = runs[0] == runs[1];
    let bytes: usize = runs[0].iter().flatten().map(|(_, b)| b.len()).sum();
    check(identical && bytes > 0, format!("two seeded CLI sweeps (1 and 4 threads), {bytes} CSV bytes, identical = {identical}"))
}

fn main() {
    let start = Instant::now();
    let sweep = stabilization_sweep();
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "stability preservation", criterion_1(&sweep)),
        (2, "conventional instability exists", criterion_2(&sweep)),
        (3, "spectrum of the stabilizing right-hand side", criterion_3()),
        (4, "reduced mass condition bound", criterion_4(&sweep)),
        (5, "Lyapunov solvers", criterion_5()),
        (6, "matrix square root", criterion_6()),
        (7, "H2 norm and output error bound", criterion_7()),
        (8, "integrator orders", criterion_8()),
        (9, "nonlinear stability preservation", criterion_9()),
        (10, "reproducibility", criterion_10()),
    ];
    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("criterion {id:2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:2} FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {}/{} passed in {:.1}s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
