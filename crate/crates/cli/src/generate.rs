use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Subcommand};
use serde::Serialize;
use stabmor::benchgen::{generate, ConvDiffSpec, GeneratorSpec, MsdChainSpec, NonNormalSpec, VelocityProfile};
use stabmor::dynsys::{save_bundle, stability_report, StabilityReport};
use stabmor::projection::{BasisMethod, ProjectionBasis};

use crate::common::{create_dir, write_json};

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(subcommand)]
    kind: Kind,
    /// Output bundle directory.
    #[arg(long, short, global = true, default_value = "system")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Kind {
    /// Wall-attached mass-spring-damper chain (2 states per mass).
    Msd {
        #[arg(long, default_value_t = 4)]
        masses: usize,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = 1.0)]
        stiffness: f64,
        #[arg(long, default_value_t = 1.0)]
        damping: f64,
        #[arg(long, default_value_t = 0)]
        input_node: usize,
        /// Defaults to the last mass.
        #[arg(long)]
        output_node: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stable matrix with prescribed spectrum and ill-conditioned eigenvectors.
    Nonnormal {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        lambda_min: f64,
        #[arg(long, default_value_t = 10.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 50.0)]
        kappa: f64,
        /// Random diagonal mass matrix.
        #[arg(long)]
        descriptor: bool,
        /// Accept draws whose symmetric part is negative definite.
        #[arg(long)]
        allow_dissipative: bool,
        #[arg(long, default_value_t = 20)]
        max_attempts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// 1D convection-diffusion on a graded mesh.
    Convdiff {
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 1e-2)]
        diffusion: f64,
        #[arg(long, default_value_t = 1.0)]
        velocity: f64,
        #[arg(long, default_value_t = 8.0)]
        grade: f64,
        /// Scale by the inverse mass matrix.
        #[arg(long)]
        scaled: bool,
    },
    /// The 2x2 example that loses stability under Galerkin projection.
    Crafted,
}

#[derive(Serialize)]
struct GenerateReport<'a> {
    spec: &'a GeneratorSpec,
    n: usize,
    stability: StabilityReport,
}

fn spec_from(kind: Kind) -> GeneratorSpec {
    match kind {
        Kind::Msd { masses, mass, stiffness, damping, input_node, output_node, jitter, seed } => GeneratorSpec::Msd(MsdChainSpec {
            masses,
            mass,
            stiffness,
            damping,
            input_node,
            output_node: output_node.unwrap_or(masses.saturating_sub(1)),
            jitter,
            seed,
        }),
        Kind::Nonnormal { n, lambda_min, lambda_max, kappa, descriptor, allow_dissipative, max_attempts, seed } => {
            GeneratorSpec::Nonnormal(NonNormalSpec {
                n,
                lambda_min,
                lambda_max,
                kappa,
                descriptor,
                require_nondissipative: !allow_dissipative,
                max_attempts,
                seed,
            })
        }
        Kind::Convdiff { n, diffusion, velocity, grade, scaled } => GeneratorSpec::Convdiff(ConvDiffSpec {
            n,
            diffusion,
            velocity: VelocityProfile::Uniform { v: velocity },
            grade,
            scaled,
            ..Default::default()
        }),
        Kind::Crafted => GeneratorSpec::Crafted,
    }
}

pub fn run(args: GenerateArgs) -> Result<()> {
    let spec = spec_from(args.kind);
    let sys = generate(&spec)?;
    let stability = stability_report(&sys)?;
    create_dir(&args.out)?;
    save_bundle(&sys, &args.out, Some(serde_json::to_value(&spec)?))?;
    if let GeneratorSpec::Crafted = spec {
        // The direction along which Galerkin projection loses stability.
        let v = nalgebra::DMatrix::from_element(2, 1, std::f64::consts::FRAC_1_SQRT_2);
        ProjectionBasis::new(v, BasisMethod::External)?.save(&args.out, "basis")?;
    }
    let report = GenerateReport { spec: &spec, n: sys.n(), stability };
    write_json(&args.out.join("report.json"), &report)?;

    let alpha = report.stability.spectral_abscissa.map_or_else(|| "not computed (n above dense cap)".to_string(), |a| format!("{a:.6e}"));
    println!("n = {}, spectral abscissa = {alpha}", sys.n());
    println!(
        "non-negative eigenvalues of the symmetric part: k = {}{}, mu_max = {:.6e}",
        report.stability.k,
        if report.stability.k_complete { "" } else { " (lower bound)" },
        report.stability.mu_max
    );
    println!("bundle written to {}", args.out.display());
    Ok(())
}
