use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;
use stabmor::analysis::{integrate_adaptive, integrate_trapezoidal, AdaptiveOptions, IntegratorStats};

use crate::common::{create_dir, load_system, write_json, InputArgs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Trapezoid,
    Adaptive,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// System bundle directory (full or reduced).
    #[arg(long)]
    pub system: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "trapezoid")]
    pub integrator: Integrator,
    /// Trapezoidal steps, or output intervals of the adaptive integrator.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub atol: f64,
    #[arg(long, short, default_value = "sim")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SimReport<'a> {
    config: &'a SimulateArgs,
    n: usize,
    rows: usize,
    stats: IntegratorStats,
    final_output: Vec<f64>,
}

pub fn run(args: SimulateArgs) -> Result<()> {
    args.input.validate()?;
    if args.steps == 0 {
        bail!(stabmor::Error::InvalidSpec("--steps must be >= 1".into()));
    }
    if !(args.rtol > 0.0 && args.atol > 0.0) {
        bail!(stabmor::Error::InvalidSpec("tolerances must be positive".into()));
    }
    let (sys, _) = load_system(&args.system)?;
    let u = args.input.signal();
    let x0 = DVector::zeros(sys.n());
    let t_end = args.input.t_end;
    let traj = match args.integrator {
        Integrator::Trapezoid => integrate_trapezoidal(&sys, &u, &x0, t_end, args.steps, false)?,
        Integrator::Adaptive => {
            let times = (0..=args.steps).map(|i| t_end * i as f64 / args.steps as f64).collect();
            let opts = AdaptiveOptions { rtol: args.rtol, atol: args.atol, output_times: Some(times), ..Default::default() };
            integrate_adaptive(&sys, &u, &x0, t_end, &opts)?
        }
    };

    create_dir(&args.out)?;
    let path = args.out.join("trajectory.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    traj.write_csv(&mut w)?;
    w.flush()?;
    let report = SimReport {
        config: &args,
        n: sys.n(),
        rows: traj.len(),
        stats: traj.stats,
        final_output: traj.final_output().map(|y| y.iter().copied().collect()).unwrap_or_default(),
    };
    write_json(&args.out.join("report.json"), &report)?;
    println!(
        "{} rows, {} steps ({} rejected), {} right-hand side evaluations",
        traj.len(),
        traj.stats.steps,
        traj.stats.rejected,
        traj.stats.rhs_evals
    );
    println!("trajectory written to {}", path.display());
    Ok(())
}
