use stabmor::benchgen::*;
use stabmor::dynsys::{detect_nonnegative_part, is_asymptotically_stable, save_bundle, spectral_abscissa};

#[test]
fn graded_convection_is_stable_but_not_dissipative() {
    let sys = gen_convection_diffusion(&ConvDiffSpec::default()).unwrap();
    let k = detect_nonnegative_part(&sys).unwrap().k;
    let alpha = spectral_abscissa(&sys).unwrap();
    eprintln!("convdiff n=400: k = {k}, alpha = {alpha}");
    assert!(k >= 1 && 20 * k < sys.n());
    assert!(alpha < 0.0);
}

#[test]
fn abscissa_settles_under_refinement() {
    let alphas: Vec<f64> = [100, 200, 400, 800]
        .iter()
        .map(|&n| spectral_abscissa(&gen_convection_diffusion(&ConvDiffSpec { n, ..Default::default() }).unwrap()).unwrap())
        .collect();
    eprintln!("alphas {alphas:?}");
    let diffs: Vec<f64> = alphas.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(diffs.windows(2).all(|d| d[1] < d[0]), "{diffs:?}");
}

#[test]
fn strong_similarity_breaks_dissipativity() {
    let g = gen_nonnormal_stable(&NonNormalSpec { n: 200, kappa: 50.0, seed: 1, ..Default::default() }).unwrap();
    assert!(g.k >= 1);
    assert!(is_asymptotically_stable(&g.system).unwrap());
}

#[test]
fn generators_are_stable() {
    let specs = [
        GeneratorSpec::Msd(MsdChainSpec { masses: 30, output_node: 29, jitter: 0.5, seed: 3, ..Default::default() }),
        GeneratorSpec::Nonnormal(NonNormalSpec { n: 60, descriptor: true, seed: 5, ..Default::default() }),
        GeneratorSpec::Convdiff(ConvDiffSpec { n: 150, ..Default::default() }),
        GeneratorSpec::Crafted,
    ];
    for spec in &specs {
        assert!(is_asymptotically_stable(&generate(spec).unwrap()).unwrap(), "{spec:?}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let spec = GeneratorSpec::Nonnormal(NonNormalSpec { n: 40, descriptor: true, seed: 77, ..Default::default() });
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&d1, &d2] {
        save_bundle(&generate(&spec).unwrap(), d.path(), Some(serde_json::to_value(&spec).unwrap())).unwrap();
    }
    for f in ["E.mtx", "A.mtx", "B.mtx", "C.mtx", "manifest.json"] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        let b = std::fs::read(d2.path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}
