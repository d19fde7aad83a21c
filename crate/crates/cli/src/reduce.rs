use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use stabmor::analysis::{
    h2_error, input_l2_norm, integrate_adaptive, integrate_trapezoidal, output_error, write_csv_header, AdaptiveOptions, CachedResponse,
    GridConfig, H2Estimate, Trajectory,
};
use stabmor::benchgen::{gen_cubic_msd, CubicMsdSpec, GeneratorSpec};
use stabmor::dynsys::{save_bundle, BundleManifest, FrequencyResponse, LinearSystem};
use stabmor::nonlinear::{nonlinear_reduce, nonlinear_stabilizer};
use stabmor::projection::{arnoldi_basis, galerkin_reduce, pod_basis, ProjectionBasis, ReducedSystem};
use stabmor::stabilize::{
    assemble_stabilizer, condition_bound_check, stabilized_reduce, AdiOptions, ConditionCheck, LyapunovMode, StabilizerConfig,
    StabilizerFactor, StabilizerManifest,
};

use crate::common::{create_dir, load_system, opt_num, parse_orders, write_json, InputArgs, NumericalFailure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Arnoldi,
    Pod,
    /// Orthonormal basis read from `--basis`.
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovArg {
    Auto,
    Dense,
    Adi,
}

#[derive(Args, Debug, Serialize)]
pub struct ReduceArgs {
    /// System bundle directory.
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, value_enum, default_value = "arnoldi")]
    pub method: Method,
    /// Reduced orders, e.g. `1..20` or `2,4,8`.
    #[arg(long, default_value = "1..10")]
    pub r: String,
    /// Directory with `basis.mtx` and `basis.json` (method `external`).
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// Arnoldi expansion point.
    #[arg(long, default_value_t = 0.0)]
    pub s0: f64,
    /// Also build stabilized ROMs.
    #[arg(long)]
    pub stabilize: bool,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "auto")]
    pub lyapunov: LyapunovArg,
    #[arg(long, default_value_t = 10)]
    pub adi_steps: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub adi_tol: f64,
    /// Explicit ADI shifts `re[:im],...`; conjugates must be listed.
    #[arg(long, allow_hyphen_values = true)]
    pub adi_shifts: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub max_k_ratio: f64,
    #[arg(long, default_value_t = 2000)]
    pub grid_points: usize,
    #[arg(long)]
    pub omega_min: Option<f64>,
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[command(flatten)]
    pub input: InputArgs,
    /// Trapezoidal steps for the output-error simulations.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Tolerances of the snapshot integration (POD).
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub atol: f64,
    /// Snapshots per accepted step (POD).
    #[arg(long, default_value_t = 4)]
    pub refine: usize,
    /// Also reduce the chain with cubic springs of this strength
    /// (mass-spring-damper bundles only).
    #[arg(long)]
    pub cubic_gamma: Option<f64>,
    #[arg(long, short, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct RowReport {
    r: usize,
    spectral_abscissa_conventional: Option<f64>,
    spectral_abscissa_stabilized: Option<f64>,
    /// ROM used for the error columns.
    evaluated: &'static str,
    h2: Option<H2Estimate>,
    max_output_error: Option<f64>,
    error_bound: Option<f64>,
    bound_holds: Option<bool>,
    condition: Option<ConditionCheck>,
    failures: Vec<String>,
}

#[derive(Serialize)]
struct NonlinearRow {
    r: usize,
    spectral_abscissa_conventional: Option<f64>,
    spectral_abscissa_stabilized: Option<f64>,
    failures: Vec<String>,
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a ReduceArgs,
    orders: &'a [usize],
    system: &'a BundleManifest,
    basis_columns: usize,
    basis_breakdown: bool,
    snapshots: Option<usize>,
    stabilizer: Option<StabilizerManifest>,
    stabilizer_error: Option<String>,
    grid: GridConfig,
    input_l2_norm: f64,
    input_truncated_at: f64,
    rows: &'a [RowReport],
    nonlinear: Option<&'a [NonlinearRow]>,
}

fn parse_shifts(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (re, im) = p.split_once(':').unwrap_or((p, "0"));
            Ok((re.trim().parse::<f64>()?, im.trim().parse::<f64>()?))
        })
        .collect::<Result<_>>()
        .with_context(|| format!("bad shift list {s:?}"))
}

fn stabilizer_config(args: &ReduceArgs) -> Result<StabilizerConfig> {
    let shifts = args.adi_shifts.as_deref().map(parse_shifts).transpose()?;
    let mode = match args.lyapunov {
        LyapunovArg::Auto => LyapunovMode::Auto,
        LyapunovArg::Dense => LyapunovMode::Dense,
        LyapunovArg::Adi => LyapunovMode::LowRankAdi,
    };
    Ok(StabilizerConfig {
        delta: args.delta,
        mode,
        adi: AdiOptions { max_steps: args.adi_steps, tol: args.adi_tol, shifts, ..Default::default() },
        max_k_ratio: args.max_k_ratio,
    })
}

fn validate(args: &ReduceArgs, orders: &[usize], n: usize) -> Result<()> {
    args.input.validate()?;
    let r_max = *orders.last().expect("orders are non-empty");
    if r_max > n {
        bail!(stabmor::Error::InvalidSpec(format!("reduced order {r_max} exceeds the system dimension {n}")));
    }
    if !(args.delta > 0.0) {
        bail!(stabmor::Error::InvalidSpec(format!("--delta must be positive, got {}", args.delta)));
    }
    if args.steps == 0 || args.grid_points < 3 {
        bail!(stabmor::Error::InvalidSpec("--steps must be >= 1 and --grid-points >= 3".into()));
    }
    if (args.method == Method::External) != args.basis.is_some() {
        bail!(stabmor::Error::InvalidSpec("--basis is required by, and only valid with, --method external".into()));
    }
    if args.cubic_gamma.is_some() && !args.stabilize {
        bail!(stabmor::Error::InvalidSpec("--cubic-gamma requires --stabilize".into()));
    }
    Ok(())
}

fn build_basis(args: &ReduceArgs, sys: &LinearSystem, r_max: usize) -> Result<(ProjectionBasis, Option<usize>)> {
    match args.method {
        Method::Arnoldi => Ok((arnoldi_basis(sys, r_max, args.s0)?, None)),
        Method::External => {
            let dir = args.basis.as_ref().expect("checked in validate");
            let basis = ProjectionBasis::load(dir, "basis").with_context(|| format!("loading basis from {}", dir.display()))?;
            if basis.n() != sys.n() || basis.r() < r_max {
                bail!(stabmor::Error::InvalidSpec(format!(
                    "basis is {}x{}, need {} rows and at least {r_max} columns",
                    basis.n(),
                    basis.r(),
                    sys.n()
                )));
            }
            Ok((basis.truncate(r_max)?, None))
        }
        Method::Pod => {
            let opts = AdaptiveOptions { rtol: args.rtol, atol: args.atol, harvest_refine: Some(args.refine.max(1)), ..Default::default() };
            let traj = integrate_adaptive(sys, &args.input.signal(), &nalgebra::DVector::zeros(sys.n()), args.input.t_end, &opts)?;
            let snaps = traj.snapshots.expect("harvesting was requested");
            log::info!("POD from {} snapshots over {} steps", snaps.ncols(), traj.stats.steps);
            let count = snaps.ncols();
            Ok((pod_basis(&snaps, r_max)?, Some(count)))
        }
    }
}

struct Shared<'a> {
    sys: &'a LinearSystem,
    fom: &'a CachedResponse<'a>,
    fom_traj: &'a Trajectory,
    stab: Option<&'a StabilizerFactor>,
    grid: &'a GridConfig,
    u_norm: f64,
    args: &'a ReduceArgs,
}

struct RowResult {
    report: RowReport,
    conventional: Option<ReducedSystem>,
    stabilized: Option<ReducedSystem>,
}

fn reduce_one(sh: &Shared<'_>, basis: &ProjectionBasis, r: usize) -> RowResult {
    let mut failures = Vec::new();
    let mut fail = |what: &str, e: &dyn std::fmt::Display| failures.push(format!("{what}: {e}"));

    let sub = match basis.truncate(r) {
        Ok(b) => b,
        Err(e) => {
            fail("basis", &e);
            let report = RowReport {
                r,
                spectral_abscissa_conventional: None,
                spectral_abscissa_stabilized: None,
                evaluated: "none",
                h2: None,
                max_output_error: None,
                error_bound: None,
                bound_holds: None,
                condition: None,
                failures,
            };
            return RowResult { report, conventional: None, stabilized: None };
        }
    };

    let conventional = galerkin_reduce(sh.sys, &sub, None).map_err(|e| fail("conventional reduction", &e)).ok();
    let alpha_conv = conventional.as_ref().and_then(|rom| rom.spectral_abscissa().map_err(|e| fail("conventional eigenvalues", &e)).ok());
    let stabilized = sh.stab.and_then(|stab| stabilized_reduce(sh.sys, &sub, stab).map_err(|e| fail("stabilized reduction", &e)).ok());
    let alpha_stab = stabilized.as_ref().and_then(|rom| rom.spectral_abscissa().map_err(|e| fail("stabilized eigenvalues", &e)).ok());
    let condition = match (sh.stab, &stabilized) {
        (Some(stab), Some(rom)) => condition_bound_check(sh.sys, stab, rom).map_err(|e| fail("condition check", &e)).ok(),
        _ => None,
    };

    let (evaluated, rom, alpha) = if sh.args.stabilize { ("stabilized", stabilized.as_ref(), alpha_stab) } else { ("conventional", conventional.as_ref(), alpha_conv) };
    let mut h2 = None;
    let mut max_output_error = None;
    if let Some(rom) = rom {
        if alpha.is_some() && rom.is_stable().unwrap_or(false) {
            h2 = h2_error(sh.fom, rom as &dyn FrequencyResponse, sh.grid).map_err(|e| fail("H2 error", &e)).ok();
        }
        let x0 = nalgebra::DVector::zeros(rom.r());
        match integrate_trapezoidal(rom, &sh.args.input.signal(), &x0, sh.args.input.t_end, sh.args.steps, false) {
            Ok(tr) => max_output_error = output_error(sh.fom_traj, &tr, false).map_err(|e| fail("output error", &e)).ok().map(|e| e.max_abs),
            Err(e) => fail("ROM simulation", &e),
        }
    }
    let error_bound = h2.as_ref().map(|h| h.value * sh.u_norm);
    let bound_holds = match (&h2, max_output_error) {
        (Some(h), Some(err)) => Some(err <= (h.value + h.refinement_delta()) * sh.u_norm + 1e-6),
        _ => None,
    };
    let report = RowReport {
        r,
        spectral_abscissa_conventional: alpha_conv,
        spectral_abscissa_stabilized: alpha_stab,
        evaluated,
        h2,
        max_output_error,
        error_bound,
        bound_holds,
        condition,
        failures,
    };
    RowResult { report, conventional, stabilized }
}

fn save_rom(dir: &Path, rom: &ReducedSystem) -> Result<()> {
    let sys = rom.to_linear_system()?;
    save_bundle(&sys, dir, Some(serde_json::to_value(rom.provenance())?))?;
    Ok(())
}

fn write_sweep(path: &Path, rows: &[RowReport], stabilize: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_csv_header(&mut w, "r,spectral_abscissa_conventional,spectral_abscissa_stabilized,h2_error,max_output_error")?;
    let fail_or = |v: Option<f64>, failed: bool| if failed && v.is_none() { "FAIL".to_string() } else { opt_num(v) };
    for row in rows {
        let failed = !row.failures.is_empty();
        let stab = if stabilize { fail_or(row.spectral_abscissa_stabilized, failed) } else { "NA".into() };
        writeln!(
            w,
            "{},{},{},{},{}",
            row.r,
            fail_or(row.spectral_abscissa_conventional, failed),
            stab,
            opt_num(row.h2.as_ref().map(|h| h.value)),
            fail_or(row.max_output_error, failed)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn nonlinear_sweep(args: &ReduceArgs, manifest: &BundleManifest, basis: &ProjectionBasis, orders: &[usize], config: &StabilizerConfig) -> Result<Vec<NonlinearRow>> {
    let gamma = args.cubic_gamma.expect("checked by caller");
    let spec: GeneratorSpec = manifest
        .source
        .clone()
        .map(serde_json::from_value)
        .transpose()
        .ok()
        .flatten()
        .context("--cubic-gamma needs a bundle produced by `generate msd`")?;
    let GeneratorSpec::Msd(chain) = spec else {
        bail!(stabmor::Error::InvalidSpec("--cubic-gamma needs a bundle produced by `generate msd`".into()));
    };
    let sys = gen_cubic_msd(&CubicMsdSpec { chain, gamma })?;
    let stab = nonlinear_stabilizer(&sys, config)?;
    Ok(orders
        .par_iter()
        .map(|&r| {
            let mut failures = Vec::new();
            let mut alpha = |stab: Option<&StabilizerFactor>| {
                basis
                    .truncate(r)
                    .and_then(|b| nonlinear_reduce(&sys, &b, stab))
                    .and_then(|rom| rom.spectral_abscissa_at_origin())
                    .map_err(|e| failures.push(e.to_string()))
                    .ok()
            };
            let conv = alpha(None);
            let stabd = alpha(Some(&stab));
            NonlinearRow { r, spectral_abscissa_conventional: conv, spectral_abscissa_stabilized: stabd, failures }
        })
        .collect())
}

pub fn run(args: ReduceArgs) -> Result<()> {
    let orders = parse_orders(&args.r)?;
    let (sys, manifest) = load_system(&args.system)?;
    validate(&args, &orders, sys.n())?;
    let config = stabilizer_config(&args)?;
    let r_max = *orders.last().expect("orders are non-empty");

    let (basis, snapshots) = build_basis(&args, &sys, r_max)?;
    if basis.r() < r_max {
        log::warn!("basis construction stopped at {} columns (requested {r_max})", basis.r());
    }
    let (stab, stab_err) = if args.stabilize {
        match assemble_stabilizer(&sys, &config) {
            Ok(s) => (Some(s), None),
            Err(e) if e.is_numerical() => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        }
    } else {
        (None, None)
    };

    let u = args.input.signal();
    let fom_traj = integrate_trapezoidal(&sys, &u, &nalgebra::DVector::zeros(sys.n()), args.input.t_end, args.steps, false)?;
    let u_norm = input_l2_norm(&u, sys.n_in(), args.input.t_end, 20 * args.steps);
    let fom = CachedResponse::new(&sys)?;

    let mut grid = GridConfig { points: args.grid_points, omega_min: args.omega_min, omega_max: args.omega_max, ..Default::default() };
    // One band for all orders so that FOM samples are shared.
    if grid.omega_min.is_none() || grid.omega_max.is_none() {
        let mags: Vec<f64> = match fom.poles()? {
            Some(p) => p.iter().map(|z| z.norm()).filter(|&m| m > 0.0).collect(),
            None => {
                let rom = galerkin_reduce(&sys, &basis, None)?;
                rom.eigenvalues()?.iter().map(|z| z.norm()).filter(|&m| m > 0.0).collect()
            }
        };
        let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mags.iter().cloned().fold(0.0, f64::max);
        if lo.is_finite() && hi > 0.0 {
            grid.omega_min = grid.omega_min.or(Some(lo * 10f64.powf(-grid.decades_below)));
            grid.omega_max = grid.omega_max.or(Some(hi * 10f64.powf(grid.decades_above)));
        }
    }

    let shared = Shared { sys: &sys, fom: &fom, fom_traj: &fom_traj, stab: stab.as_ref(), grid: &grid, u_norm, args: &args };
    let results: Vec<RowResult> = orders.par_iter().map(|&r| reduce_one(&shared, &basis, r)).collect();

    create_dir(&args.out)?;
    let rom_root = args.out.join("roms");
    for res in &results {
        let dir = rom_root.join(format!("r{:03}", res.report.r));
        if let Some(rom) = &res.conventional {
            save_rom(&dir.join("conventional"), rom)?;
        }
        if let Some(rom) = &res.stabilized {
            save_rom(&dir.join("stabilized"), rom)?;
        }
    }
    basis.save(&args.out, "basis")?;
    if let Some(stab) = &stab {
        stab.save(args.out.join("stabilizer"))?;
    }
    let mut rows: Vec<RowReport> = results.into_iter().map(|r| r.report).collect();
    if let Some(msg) = &stab_err {
        for row in &mut rows {
            row.failures.push(format!("stabilizer: {msg}"));
        }
    }
    write_sweep(&args.out.join("error_sweep.csv"), &rows, args.stabilize)?;

    let nonlinear = match args.cubic_gamma {
        Some(_) => {
            let nl = nonlinear_sweep(&args, &manifest, &basis, &orders, &config)?;
            let path = args.out.join("nonlinear_sweep.csv");
            let mut w = BufWriter::new(File::create(&path)?);
            write_csv_header(&mut w, "r,spectral_abscissa_conventional,spectral_abscissa_stabilized")?;
            for row in &nl {
                writeln!(w, "{},{},{}", row.r, opt_num(row.spectral_abscissa_conventional), opt_num(row.spectral_abscissa_stabilized))?;
            }
            w.flush()?;
            Some(nl)
        }
        None => None,
    };

    let report = RunReport {
        config: &args,
        orders: &orders,
        system: &manifest,
        basis_columns: basis.r(),
        basis_breakdown: basis.breakdown(),
        snapshots,
        stabilizer: stab.as_ref().map(|s| s.manifest().clone()),
        stabilizer_error: stab_err.clone(),
        grid,
        input_l2_norm: u_norm,
        input_truncated_at: args.input.t_end,
        rows: &rows,
        nonlinear: nonlinear.as_deref(),
    };
    write_json(&args.out.join("report.json"), &report)?;

    for row in &rows {
        println!(
            "r = {:3}  alpha_conv = {:>12}  alpha_stab = {:>12}  h2 = {:>12}  max_err = {:>12}",
            row.r,
            opt_num(row.spectral_abscissa_conventional),
            opt_num(row.spectral_abscissa_stabilized),
            opt_num(row.h2.as_ref().map(|h| h.value)),
            opt_num(row.max_output_error)
        );
    }
    let failed: Vec<String> = rows.iter().flat_map(|r| r.failures.iter().map(move |f| format!("r = {}: {f}", r.r))).collect();
    if !failed.is_empty() {
        for f in &failed {
            eprintln!("{f}");
        }
        return Err(NumericalFailure(format!("{} failure(s) during the sweep; partial results in {}", failed.len(), args.out.display())).into());
    }
    Ok(())
}
