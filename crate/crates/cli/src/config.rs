//! Run configuration: JSON file fields merged under command-line flags.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use paraell::rofunc::ROFunction;
use paraell::strip::NormalProxy;
use paraell::symbols::Angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckEllipticity,
    Norm,
    InterpVerify,
    EstimateScan,
    FredholmProbe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckEllipticity => "check-ellipticity",
            Command::Norm => "norm",
            Command::InterpVerify => "interp-verify",
            Command::EstimateScan => "estimate-scan",
            Command::FredholmProbe => "fredholm-probe",
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Problem description (JSON).
    pub problem: Option<PathBuf>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Single ray, e.g. `90deg` or `1.5708rad`.
    #[arg(long, allow_hyphen_values = true)]
    pub ray: Option<String>,
    /// Closed angle `lo,hi`, e.g. `-30deg,30deg`.
    #[arg(long, allow_hyphen_values = true)]
    pub angle: Option<String>,
    /// Comma list of `|λ|` (or complex `λ` such as `3+2i` for fredholm-probe).
    #[arg(long, allow_hyphen_values = true)]
    pub lambdas: Option<String>,
    /// Smoothness parameter, e.g. `power:0` or `powerlog:0,1`.
    #[arg(long)]
    pub phi: Option<String>,
    /// Function interpolated by interp-verify.
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub s0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub s1: Option<f64>,
    /// Comma list of parameters `p` for the parameter-dependent norms.
    #[arg(long)]
    pub p: Option<String>,
    /// `KxN` for the strip, `NxN` (or `N`, `NxNxN`) for the torus.
    #[arg(long)]
    pub grid: Option<String>,
    /// Field values (JSON) for `norm`; random otherwise.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Number of random spectra.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol_a: Option<f64>,
    #[arg(long)]
    pub tol_b: Option<f64>,
    /// `sobolev-interpolated` or `neumann-spectral`.
    #[arg(long)]
    pub proxy: Option<String>,
}

/// Configuration file schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub problem_path: Option<PathBuf>,
    pub phi_spec: Option<String>,
    /// `lo,hi` for an angle, a single value for a ray.
    pub angles_or_ray: Option<String>,
    pub lambda_list: Option<String>,
    pub grid_spec: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub tol_a: Option<f64>,
    pub tol_b: Option<f64>,
    pub alpha: Option<String>,
    pub s0: Option<f64>,
    pub s1: Option<f64>,
    pub p: Option<String>,
    pub field: Option<PathBuf>,
    pub samples: Option<usize>,
    pub proxy: Option<NormalProxy>,
}

/// Reads and parses a JSON file, reporting syntax errors by line and column.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let msg = msg.strip_suffix(&format!(" at line {} column {}", e.line(), e.column())).unwrap_or(&msg);
        anyhow!("{}: line {}, column {}: {msg}", path.display(), e.line(), e.column())
    })
}

/// Fully merged settings for one run.
#[derive(Debug, Clone)]
pub struct Settings {
    pub command: Command,
    pub problem: Option<PathBuf>,
    pub phi: Option<String>,
    pub angle: Option<String>,
    pub ray: Option<String>,
    pub lambdas: Option<String>,
    pub grid: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: u64,
    pub tol_a: Option<f64>,
    pub tol_b: Option<f64>,
    pub alpha: Option<String>,
    pub s0: Option<f64>,
    pub s1: Option<f64>,
    pub p: Option<String>,
    pub field: Option<PathBuf>,
    pub samples: Option<usize>,
    pub proxy: Option<NormalProxy>,
}

impl Settings {
    pub fn merge(command: Command, flags: Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => read_json::<RunConfig>(path)?,
            None => RunConfig::default(),
        };
        if let Some(c) = file.command {
            if c != command {
                bail!("configuration is for {}, not {}", c.name(), command.name());
            }
        }
        // a ray or angle flag replaces whatever the file specifies
        let (ray, angle) = match (flags.ray, flags.angle) {
            (None, None) => match file.angles_or_ray {
                Some(s) if s.contains(',') => (None, Some(s)),
                other => (other, None),
            },
            pair => pair,
        };
        let proxy = match flags.proxy {
            Some(s) => Some(parse_proxy(&s)?),
            None => file.proxy,
        };
        Ok(Self {
            command,
            problem: flags.problem.or(file.problem_path),
            phi: flags.phi.or(file.phi_spec),
            angle,
            ray,
            lambdas: flags.lambdas.or(file.lambda_list),
            grid: flags.grid.or(file.grid_spec),
            out: flags.out.or(file.output_dir),
            format: flags.format.or(file.format),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            tol_a: flags.tol_a.or(file.tol_a),
            tol_b: flags.tol_b.or(file.tol_b),
            alpha: flags.alpha.or(file.alpha),
            s0: flags.s0.or(file.s0),
            s1: flags.s1.or(file.s1),
            p: flags.p.or(file.p),
            field: flags.field.or(file.field),
            samples: flags.samples.or(file.samples),
            proxy,
        })
    }

    pub fn require<'a, T>(&self, value: &'a Option<T>, flag: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| anyhow!("{} requires --{flag}", self.command.name()))
    }

    /// The ray or angle, whichever was given.
    pub fn angle(&self) -> Result<Angle> {
        match (&self.ray, &self.angle) {
            (Some(r), _) => Ok(Angle::ray(parse_angle(r)?)),
            (None, Some(a)) => {
                let (lo, hi) = a.split_once(',').ok_or_else(|| anyhow!("angle `{a}` is not of the form lo,hi"))?;
                Ok(Angle::new(parse_angle(lo)?, parse_angle(hi)?)?)
            }
            (None, None) => bail!("{} requires --ray or --angle", self.command.name()),
        }
    }

    pub fn phi(&self) -> Result<ROFunction> {
        parse_function(self.require(&self.phi, "phi")?)
    }
}

pub fn parse_function(s: &str) -> Result<ROFunction> {
    s.parse().with_context(|| format!("cannot parse function `{s}` (expected e.g. power:1 or powerlog:2,1)"))
}

fn parse_proxy(s: &str) -> Result<NormalProxy> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| anyhow!("unknown proxy `{s}` (sobolev-interpolated or neumann-spectral)"))
}

/// `90deg`, `-45deg` or `1.25rad`.
pub fn parse_angle(s: &str) -> Result<f64> {
    let s = s.trim();
    let (num, scale) = if let Some(v) = s.strip_suffix("deg") {
        (v, PI / 180.0)
    } else if let Some(v) = s.strip_suffix("rad") {
        (v, 1.0)
    } else {
        bail!("angle `{s}` needs a deg or rad suffix");
    };
    let v: f64 = num.trim().parse().with_context(|| format!("bad angle `{s}`"))?;
    Ok(v * scale)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number `{t}` in `{s}`")))
        .collect()
}

/// `4`, `2i`, `-1.5+3i`, `2e-3-i`.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || anyhow!("bad complex number `{s}`");
    let Some(body) = t.strip_suffix('i') else {
        return Ok(Complex64::new(t.parse().map_err(|_| bad())?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&j| matches!(bytes[j], b'+' | b'-') && !matches!(bytes[j - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(j) => (&body[..j], &body[j..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse().map_err(|_| bad())?,
    };
    Ok(Complex64::new(re.parse().map_err(|_| bad())?, im))
}

pub fn parse_complex_list(s: &str) -> Result<Vec<Complex64>> {
    s.split(',').map(parse_complex).collect()
}

/// `KxN` or `N1xN2x…`.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    s.split(['x', 'X'])
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad grid `{s}`")))
        .collect()
}
