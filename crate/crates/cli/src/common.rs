use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use stabmor::analysis::{InputSignal, InputSpec};
use stabmor::dynsys::{load_bundle, BundleManifest, LinearSystem};

/// Some numerical step failed; results written so far are kept.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Sine,
    Step,
    Zero,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct InputArgs {
    /// Input applied to every channel.
    #[arg(long, value_enum, default_value = "sine")]
    pub input: InputKind,
    /// Period of the sine input (defaults to the final time).
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Final time.
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
}

impl InputArgs {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            bail!(stabmor::Error::InvalidSpec(format!("--t-end must be positive, got {}", self.t_end)));
        }
        if let Some(p) = self.period {
            if !(p > 0.0 && p.is_finite()) {
                bail!(stabmor::Error::InvalidSpec(format!("--period must be positive, got {p}")));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> InputSpec {
        match self.input {
            InputKind::Sine => InputSpec::Sine { amplitude: self.amplitude, period: self.period.unwrap_or(self.t_end) },
            InputKind::Step => InputSpec::Step { amplitude: self.amplitude, t0: 0.0 },
            InputKind::Zero => InputSpec::Zero,
        }
    }

    pub fn signal(&self) -> InputSignal {
        self.spec().into()
    }
}

/// Fixed CSV number format: shortest round-trip scientific notation.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn load_system(dir: &PathBuf) -> Result<(LinearSystem, BundleManifest)> {
    load_bundle(dir).with_context(|| format!("loading system bundle {}", dir.display()))
}

/// `1,2,5` or `1..20` or `1..20:2`, possibly mixed with commas.
pub fn parse_orders(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, rest)) = part.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((h, st)) => (h, st.parse::<usize>()?),
                None => (rest, 1),
            };
            let (lo, hi) = (lo.parse::<usize>()?, hi.parse::<usize>()?);
            if step == 0 || hi < lo {
                bail!(stabmor::Error::InvalidSpec(format!("bad order range {part:?}")));
            }
            out.extend((lo..=hi).step_by(step));
        } else {
            out.push(part.parse::<usize>().with_context(|| format!("bad order {part:?}"))?);
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() || out[0] == 0 {
        bail!(stabmor::Error::InvalidSpec(format!("reduced orders must be >= 1, got {s:?}")));
    }
    Ok(out)
}
