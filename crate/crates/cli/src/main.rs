//! `paraell`: command-line front end of the paraell laboratory.
//!
//! Exit status is 0 on success, 2 when a check returns a negative verdict and
//! 1 on any error.

mod config;

use std::fmt::Write as _;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use paraell::interpolation::{param_scale_identity, sobolev_scale_identity};
use paraell::rofunc::ROFunction;
use paraell::spaces::{equivalence_ratio, hnorm, pnorm, pnorm_prime, transform, Field, Spectrum, TorusGrid};
use paraell::strip::{estimate_scan, fredholm_probe, FredholmReport, NormalProxy, StripGeometry};
use paraell::symbols::{check_parameter_ellipticity, Angle, BVProblem, EllipticityReport, ScanConfig};

use config::{parse_complex_list, parse_function, parse_grid, parse_list, read_json, Command, Flags, Format, Settings};

const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "paraell", version, about = "Parameter-elliptic problems in refined Sobolev scales")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check Conditions i and ii on a ray or closed angle.
    CheckEllipticity(Flags),
    /// Torus norms of a field or a random spectrum.
    Norm(Flags),
    /// Verify the interpolation identity on random spectra.
    InterpVerify(Flags),
    /// Extreme singular values of the weighted strip operator along a ray.
    EstimateScan(Flags),
    /// Kernel and cokernel dimensions of the discrete strip operator.
    FredholmProbe(Flags),
}

enum Outcome {
    Ok,
    Negative,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Ok(v) = std::env::var("PARAELL_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("PARAELL_THREADS={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let (command, flags) = match cli.command {
        Sub::CheckEllipticity(f) => (Command::CheckEllipticity, f),
        Sub::Norm(f) => (Command::Norm, f),
        Sub::InterpVerify(f) => (Command::InterpVerify, f),
        Sub::EstimateScan(f) => (Command::EstimateScan, f),
        Sub::FredholmProbe(f) => (Command::FredholmProbe, f),
    };
    let s = Settings::merge(command, flags)?;
    match command {
        Command::CheckEllipticity => check_ellipticity(&s),
        Command::Norm => norm(&s),
        Command::InterpVerify => interp_verify(&s),
        Command::EstimateScan => scan(&s),
        Command::FredholmProbe => fredholm(&s),
    }
}

fn load_problem(s: &Settings) -> Result<(BVProblem, String)> {
    let path = s.require(&s.problem, "problem")?;
    let id = path.file_stem().map_or_else(|| "problem".into(), |n| n.to_string_lossy().into_owned());
    Ok((read_json(path)?, id))
}

fn format_or(s: &Settings, default: Format, allowed: &[Format]) -> Result<Format> {
    let f = s.format.unwrap_or(default);
    if !allowed.contains(&f) {
        bail!("{} cannot write {f:?} output", s.command.name());
    }
    Ok(f)
}

fn write_report(s: &Settings, name: &str, contents: &str) -> Result<()> {
    if let Some(dir) = &s.out {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct EllipticityOutput<'a> {
    problem: &'a str,
    angle: Angle,
    report: EllipticityReport,
}

fn check_ellipticity(s: &Settings) -> Result<Outcome> {
    format_or(s, Format::Json, &[Format::Json])?;
    let (problem, id) = load_problem(s)?;
    let angle = s.angle()?;
    let mut config = ScanConfig::default();
    if let Some(t) = s.tol_a {
        config.tolerances.tol_a = t;
    }
    if let Some(t) = s.tol_b {
        config.tolerances.tol_b = t;
    }
    let report = check_parameter_ellipticity(&problem, &angle, &config);
    println!(
        "check-ellipticity {id}: verdict {} (min |A0| {:.6e}, min Lopatinskii sigma {:.6e})",
        report.verdict, report.min_symbol_modulus, report.min_lopatinskii_sigma
    );
    let verdict = report.verdict;
    write_report(s, "ellipticity.json", &to_json(&EllipticityOutput { problem: &id, angle, report }))?;
    Ok(if verdict { Outcome::Ok } else { Outcome::Negative })
}

fn torus_grid(s: &Settings) -> Result<TorusGrid> {
    Ok(TorusGrid::new(&parse_grid(s.require(&s.grid, "grid")?)?)?)
}

/// Coefficients with real and imaginary parts uniform in `[−1, 1)`.
fn random_spectrum(grid: &TorusGrid, rng: &mut ChaCha8Rng) -> Result<Spectrum> {
    let coeffs = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Ok(Spectrum::new(grid.clone(), coeffs)?)
}

#[derive(Serialize)]
struct NormRow {
    p: f64,
    pnorm: f64,
    pnorm_prime: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct NormOutput {
    phi: String,
    grid: Vec<usize>,
    source: String,
    hnorm: f64,
    rows: Vec<NormRow>,
}

fn norm(s: &Settings) -> Result<Outcome> {
    let format = format_or(s, Format::Json, &[Format::Json, Format::Csv])?;
    let phi = s.phi()?;
    let (u, source) = match &s.field {
        Some(path) => {
            let field: Field = read_json(path)?;
            if let Some(g) = &s.grid {
                if parse_grid(g)? != field.grid.sizes() {
                    bail!("--grid {g} does not match the field in {}", path.display());
                }
            }
            let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            (transform(&field), name)
        }
        None => (random_spectrum(&torus_grid(s)?, &mut ChaCha8Rng::seed_from_u64(s.seed))?, format!("seed:{}", s.seed)),
    };
    let ps = parse_list(s.p.as_deref().unwrap_or("1"))?;
    let rows = ps
        .iter()
        .map(|&p| {
            Ok(NormRow {
                p,
                pnorm: pnorm(&u, &phi, p)?,
                pnorm_prime: pnorm_prime(&u, &phi, p)?,
                ratio: equivalence_ratio(&u, &phi, p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = NormOutput { phi: phi.id(), grid: u.grid.sizes().to_vec(), source, hnorm: hnorm(&u, &phi), rows };
    println!("norm {} of {} on {:?}: {:.12e}", out.phi, out.source, out.grid, out.hnorm);
    match format {
        Format::Csv => {
            let mut csv = String::from("phi_id,p,hnorm,pnorm,pnorm_prime,ratio\n");
            for r in &out.rows {
                let _ = writeln!(csv, "{},{},{:.12e},{:.12e},{:.12e},{:.12e}", out.phi, r.p, out.hnorm, r.pnorm, r.pnorm_prime, r.ratio);
            }
            write_report(s, "norm.csv", &csv)?;
        }
        _ => write_report(s, "norm.json", &to_json(&out))?,
    }
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct IdentityRow {
    sample: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    lhs: f64,
    rhs: f64,
    relerr: f64,
}

#[derive(Serialize)]
struct InterpOutput {
    alpha: String,
    s0: f64,
    s1: f64,
    grid: Vec<usize>,
    seed: u64,
    tolerance: f64,
    max_relerr: f64,
    pass: bool,
    checks: Vec<IdentityRow>,
}

fn interp_verify(s: &Settings) -> Result<Outcome> {
    let format = format_or(s, Format::Json, &[Format::Json, Format::Csv])?;
    let alpha: ROFunction = match (&s.alpha, &s.phi) {
        (Some(a), _) | (None, Some(a)) => parse_function(a)?,
        (None, None) => bail!("interp-verify requires --alpha"),
    };
    let s0 = *s.require(&s.s0, "s0")?;
    let s1 = *s.require(&s.s1, "s1")?;
    let grid = torus_grid(s)?;
    let ps = s.p.as_deref().map(parse_list).transpose()?.unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut checks = Vec::new();
    for sample in 0..s.samples.unwrap_or(20) {
        let u = random_spectrum(&grid, &mut rng)?;
        let c = sobolev_scale_identity(&u, &alpha, s0, s1)?;
        checks.push(IdentityRow { sample, p: None, lhs: c.lhs, rhs: c.rhs, relerr: c.relerr });
        for &p in &ps {
            let c = param_scale_identity(&u, &alpha, s0, s1, p)?;
            checks.push(IdentityRow { sample, p: Some(p), lhs: c.lhs, rhs: c.rhs, relerr: c.relerr });
        }
    }
    let max_relerr = checks.iter().map(|c| c.relerr).fold(0.0, f64::max);
    let pass = max_relerr <= IDENTITY_TOLERANCE;
    let out = InterpOutput {
        alpha: alpha.id(),
        s0,
        s1,
        grid: grid.sizes().to_vec(),
        seed: s.seed,
        tolerance: IDENTITY_TOLERANCE,
        max_relerr,
        pass,
        checks,
    };
    println!(
        "interp-verify {} on [{s0}, {s1}]: max relerr {max_relerr:.3e} over {} checks ({})",
        out.alpha,
        out.checks.len(),
        if pass { "pass" } else { "FAIL" }
    );
    match format {
        Format::Csv => {
            let mut csv = String::from("sample,p,lhs,rhs,relerr\n");
            for c in &out.checks {
                let p = c.p.map_or_else(String::new, |p| p.to_string());
                let _ = writeln!(csv, "{},{p},{:.15e},{:.15e},{:.3e}", c.sample, c.lhs, c.rhs, c.relerr);
            }
            write_report(s, "interp.csv", &csv)?;
        }
        _ => write_report(s, "interp.json", &to_json(&out))?,
    }
    Ok(if pass { Outcome::Ok } else { Outcome::Negative })
}

fn strip_geometry(s: &Settings) -> Result<StripGeometry> {
    match parse_grid(s.require(&s.grid, "grid")?)?.as_slice() {
        [k, n] => Ok(StripGeometry::new(*k, *n)?),
        _ => bail!("strip grid must be KxN"),
    }
}

fn scan(s: &Settings) -> Result<Outcome> {
    let format = format_or(s, Format::Csv, &[Format::Csv, Format::Json, Format::Svg])?;
    let (problem, id) = load_problem(s)?;
    let phi = s.phi()?;
    let angle = s.angle()?;
    if !angle.is_ray() {
        bail!("estimate-scan needs a single ray");
    }
    let lambdas = parse_list(s.require(&s.lambdas, "lambdas")?)?;
    let geometry = strip_geometry(s)?;
    let mut result = estimate_scan(&problem, &phi, &angle, &lambdas, &geometry, s.proxy.unwrap_or(NormalProxy::default()))?;
    result.problem_id = id;
    let range = |f: fn(&paraell::strip::ScanRow) -> f64| {
        let v: Vec<f64> = result.rows.iter().map(f).collect();
        (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(0.0, f64::max))
    };
    let (min_lo, min_hi) = range(|r| r.sigma_min);
    let (max_lo, max_hi) = range(|r| r.sigma_max);
    println!(
        "estimate-scan {} {} arg={:.6}: {} rows, sigma_min in [{min_lo:.4e}, {min_hi:.4e}], sigma_max in [{max_lo:.4e}, {max_hi:.4e}]",
        result.problem_id,
        result.phi_id,
        result.arg,
        result.rows.len()
    );
    match format {
        Format::Csv => write_report(s, "scan.csv", &result.to_csv())?,
        Format::Json => write_report(s, "scan.json", &result.to_json())?,
        Format::Svg => {
            write_report(s, "scan.csv", &result.to_csv())?;
            write_report(s, "scan.svg", &result.to_svg())?;
        }
    }
    Ok(Outcome::Ok)
}

fn fredholm(s: &Settings) -> Result<Outcome> {
    let format = format_or(s, Format::Csv, &[Format::Csv, Format::Json])?;
    let (problem, _) = load_problem(s)?;
    let geometry = strip_geometry(s)?;
    let raw = s.require(&s.lambdas, "lambdas")?;
    let lambdas: Vec<Complex64> = match (&s.ray, &s.angle) {
        (None, None) => parse_complex_list(raw)?,
        _ => {
            let angle = s.angle()?;
            if !angle.is_ray() {
                bail!("fredholm-probe takes a single ray");
            }
            parse_list(raw)?.into_iter().map(|r| Complex64::from_polar(r, angle.arg_lo)).collect()
        }
    };
    let reports: Vec<FredholmReport> =
        lambdas.iter().map(|&l| fredholm_probe(&problem, l, &geometry)).collect::<paraell::strip::Result<_>>()?;
    let zero_index = reports.iter().all(|r| r.dim_ker == r.dim_coker);
    let singular = reports.iter().filter(|r| r.dim_ker > 0).count();
    println!(
        "fredholm-probe: {} points, {} with nontrivial kernel, index zero at {}",
        reports.len(),
        singular,
        if zero_index { "all" } else { "not all" }
    );
    match format {
        Format::Json => write_report(s, "fredholm.json", &to_json(&reports))?,
        _ => {
            let mut csv = String::from("lambda_re,lambda_im,dim_ker,dim_coker,sigma_min,sigma_max\n");
            for r in &reports {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{:.12e},{:.12e}",
                    r.lambda[0], r.lambda[1], r.dim_ker, r.dim_coker, r.sigma_min, r.sigma_max
                );
            }
            write_report(s, "fredholm.csv", &csv)?;
        }
    }
    Ok(Outcome::Ok)
}
