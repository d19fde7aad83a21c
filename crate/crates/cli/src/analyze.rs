use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use stabmor::analysis::{bode_data, h2_error, GridConfig, H2Estimate};
use stabmor::dynsys::{stability_report, FrequencyResponse, StabilityReport};

use crate::common::{create_dir, load_system, write_json};

#[derive(Args, Debug, Serialize)]
pub struct AnalyzeArgs {
    /// System bundle directory.
    #[arg(long)]
    pub system: PathBuf,
    /// Reduced model bundle to compare against.
    #[arg(long)]
    pub rom: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub omega_min: f64,
    #[arg(long, default_value_t = 1e3)]
    pub omega_max: f64,
    /// Bode sample count.
    #[arg(long, default_value_t = 400)]
    pub points: usize,
    /// Quadrature points of the H2 estimate.
    #[arg(long, default_value_t = 2000)]
    pub grid_points: usize,
    #[arg(long, short, default_value = "analysis")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct AnalysisReport<'a> {
    config: &'a AnalyzeArgs,
    n: usize,
    stability: StabilityReport,
    bode_gaps: usize,
    h2_error: Option<H2Estimate>,
}

pub fn run(args: AnalyzeArgs) -> Result<()> {
    if !(args.omega_min > 0.0 && args.omega_max > args.omega_min) || args.points < 2 || args.grid_points < 3 {
        bail!(stabmor::Error::InvalidSpec("need 0 < omega-min < omega-max, points >= 2 and grid-points >= 3".into()));
    }
    let (sys, _) = load_system(&args.system)?;
    let rom = args.rom.as_ref().map(load_system).transpose()?.map(|(r, _)| r);
    if let Some(rom) = &rom {
        if rom.n_in() != sys.n_in() || rom.n_out() != sys.n_out() {
            bail!(stabmor::Error::DimensionMismatch("system and ROM have different input/output counts".into()));
        }
    }
    let stability = stability_report(&sys)?;
    let bode = bode_data(&sys, args.omega_min, args.omega_max, args.points)?;
    let h2 = match &rom {
        Some(rom) => {
            let grid = GridConfig { points: args.grid_points, ..Default::default() };
            Some(h2_error(&sys as &dyn FrequencyResponse, rom, &grid)?)
        }
        None => None,
    };

    create_dir(&args.out)?;
    let path = args.out.join("bode.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    bode.write_csv(&mut w)?;
    w.flush()?;
    let report = AnalysisReport {
        config: &args,
        n: sys.n(),
        stability,
        bode_gaps: bode.values.iter().filter(|v| v.is_none()).count(),
        h2_error: h2,
    };
    write_json(&args.out.join("analysis.json"), &report)?;

    let alpha = report.stability.spectral_abscissa.map_or_else(|| "not computed".to_string(), |a| format!("{a:.6e}"));
    println!("n = {}, spectral abscissa = {alpha}, k = {}", sys.n(), report.stability.k);
    if let Some(h) = &report.h2_error {
        println!("H2 error = {:.6e} (half-resolution {:.6e})", h.value, h.half_resolution);
    }
    println!("results written to {}", args.out.display());
    Ok(())
}
