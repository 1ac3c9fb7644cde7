//! Discrete Hörmander spaces `H^φ` on 1D/2D tori.
//!
//! Frequencies per axis run over `{-N/2+1, …, N/2}`. The transform uses the
//! kernel `e^{+i k·x}` at the nodes `x_j = 2πj/N`, normalized to be unitary,
//! so the plane wave `e^{-i k·x}` has a single coefficient at `k` and the
//! discrete norms are exact finite sums.

use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rofunc::{matuszewska, subadd_constant, MatuszewskaConfig, PositiveFunction, ROFunction, RoError};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("invalid torus grid: {0}")]
    InvalidGrid(String),
    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("field contains non-finite entries")]
    NonFinite,
    #[error("norm ratio undefined for the zero spectrum")]
    ZeroInput,
    #[error("parameter p = {0} must be at least 1")]
    BadParameter(f64),
    #[error("lower index of alpha is {0}; the parameter-dependent norm needs it positive")]
    NonPositiveIndex(f64),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Ro(#[from] RoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SpaceError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    sizes: Vec<usize>,
}

impl TorusGrid {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.len() > 2 {
            return Err(SpaceError::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                sizes.len()
            )));
        }
        if let Some(n) = sizes.iter().find(|&&n| n < 4 || n % 2 != 0) {
            return Err(SpaceError::InvalidGrid(format!(
                "axis sizes must be even and at least 4, got {n}"
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Integer frequency of storage position `j` on an axis of size `n`.
    fn freq(j: usize, n: usize) -> i64 {
        if j <= n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Frequency vector of a flat (row-major) index.
    pub fn frequency(&self, flat: usize) -> Vec<i64> {
        match self.sizes.as_slice() {
            [n] => vec![Self::freq(flat, *n)],
            [n0, n1] => vec![Self::freq(flat / n1, *n0), Self::freq(flat % n1, *n1)],
            _ => unreachable!(),
        }
    }

    /// Flat index of a frequency vector, if it lies on the grid.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim() {
            return None;
        }
        let mut flat = 0usize;
        for (&ki, &n) in k.iter().zip(&self.sizes) {
            let half = (n / 2) as i64;
            if ki <= -half || ki > half {
                return None;
            }
            let j = if ki >= 0 { ki as usize } else { (ki + n as i64) as usize };
            flat = flat * n + j;
        }
        Some(flat)
    }

    /// `⟨k⟩ = (1 + |k|²)^{1/2}` for every flat index.
    pub fn brackets(&self) -> Vec<f64> {
        (0..self.len()).map(|i| bracket(&self.frequency(i))).collect()
    }
}

pub fn bracket(k: &[i64]) -> f64 {
    (1.0 + k.iter().map(|&x| (x * x) as f64).sum::<f64>()).sqrt()
}

/// Grid values, row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: TorusGrid,
    pub values: Vec<Complex64>,
}

/// Unitary Fourier coefficients in storage order (see [`TorusGrid::frequency`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: TorusGrid,
    pub coeffs: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SpaceError::SizeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(SpaceError::NonFinite);
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at the nodes `x_j = 2πj/N`.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let step: Vec<f64> = grid
            .sizes()
            .iter()
            .map(|&n| 2.0 * std::f64::consts::PI / n as f64)
            .collect();
        let values = (0..grid.len())
            .map(|flat| {
                let x: Vec<f64> = match grid.sizes() {
                    [_] => vec![flat as f64 * step[0]],
                    [_, n1] => vec![(flat / n1) as f64 * step[0], (flat % n1) as f64 * step[1]],
                    _ => unreachable!(),
                };
                f(&x)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Spectrum {
    pub fn new(grid: TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(SpaceError::SizeMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Unit coefficient at frequency `k`.
    pub fn mode(grid: TorusGrid, k: &[i64]) -> Result<Self> {
        let idx = grid
            .index_of(k)
            .ok_or_else(|| SpaceError::InvalidGrid(format!("frequency {k:?} not on grid")))?;
        let mut s = Self::zeros(grid);
        s.coeffs[idx] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn coeff(&self, k: &[i64]) -> Option<Complex64> {
        self.grid.index_of(k).map(|i| self.coeffs[i])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm_sqr() == 0.0)
    }
}

fn fft_all_axes(grid: &TorusGrid, data: &mut [Complex64], direction: FftDirection) {
    let mut planner = FftPlanner::<f64>::new();
    match grid.sizes() {
        [n] => planner.plan_fft(*n, direction).process(data),
        [n0, n1] => {
            let rows = planner.plan_fft(*n1, direction);
            for row in data.chunks_exact_mut(*n1) {
                rows.process(row);
            }
            let cols = planner.plan_fft(*n0, direction);
            let mut col = vec![Complex64::new(0.0, 0.0); *n0];
            for j in 0..*n1 {
                for i in 0..*n0 {
                    col[i] = data[i * n1 + j];
                }
                cols.process(&mut col);
                for i in 0..*n0 {
                    data[i * n1 + j] = col[i];
                }
            }
        }
        _ => unreachable!(),
    }
    let scale = 1.0 / (grid.len() as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= scale);
}

/// `û_k = N^{-1/2} Σ_x e^{+i k·x} u(x)`.
pub fn transform(f: &Field) -> Spectrum {
    let mut data = f.values.clone();
    fft_all_axes(&f.grid, &mut data, FftDirection::Inverse);
    Spectrum {
        grid: f.grid.clone(),
        coeffs: data,
    }
}

pub fn inverse_transform(s: &Spectrum) -> Field {
    let mut data = s.coeffs.clone();
    fft_all_axes(&s.grid, &mut data, FftDirection::Forward);
    Field {
        grid: s.grid.clone(),
        values: data,
    }
}

fn weighted_norm(u: &Spectrum, weight: impl Fn(f64) -> f64) -> f64 {
    u.grid
        .brackets()
        .into_iter()
        .zip(&u.coeffs)
        .map(|(b, c)| weight(b) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `(Σ_k φ²(⟨k⟩) |û_k|²)^{1/2}`.
pub fn hnorm(u: &Spectrum, phi: &impl PositiveFunction) -> f64 {
    weighted_norm(u, |b| phi.value(b).powi(2))
}

fn check_alpha(alpha: &ROFunction, p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(SpaceError::BadParameter(p));
    }
    let idx = matuszewska(alpha, &MatuszewskaConfig::default())?;
    if idx.sigma0 <= 0.0 {
        return Err(SpaceError::NonPositiveIndex(idx.sigma0));
    }
    Ok(())
}

/// Parameter-dependent norm `(‖u‖²_{H^α} + α(p)² ‖u‖²_{L₂})^{1/2}`.
pub fn pnorm(u: &Spectrum, alpha: &ROFunction, p: f64) -> Result<f64> {
    check_alpha(alpha, p)?;
    let ap2 = alpha.value(p).powi(2);
    Ok(weighted_norm(u, |b| alpha.value(b).powi(2) + ap2))
}

/// Shifted-weight norm `(Σ_k α²(⟨k⟩ + p) |û_k|²)^{1/2}`.
pub fn pnorm_prime(u: &Spectrum, alpha: &ROFunction, p: f64) -> Result<f64> {
    check_alpha(alpha, p)?;
    Ok(weighted_norm(u, |b| alpha.value(b + p).powi(2)))
}

pub fn equivalence_ratio(u: &Spectrum, alpha: &ROFunction, p: f64) -> Result<f64> {
    if u.is_zero() {
        return Err(SpaceError::ZeroInput);
    }
    Ok(pnorm(u, alpha, p)? / pnorm_prime(u, alpha, p)?)
}

/// Band `[1/(√2 c₂), √2 c₂]` that contains every [`equivalence_ratio`] on
/// `grid` for the listed `p`, with `c₂` measured on the exact pairs
/// `(⟨k⟩, p)` that enter the two norms.
pub fn equivalence_band(grid: &TorusGrid, alpha: &ROFunction, ps: &[f64]) -> Result<(f64, f64, f64)> {
    let mut brackets = grid.brackets();
    brackets.sort_by(f64::total_cmp);
    brackets.dedup();
    let c2 = subadd_constant(alpha, &brackets, ps)?;
    let c1 = std::f64::consts::SQRT_2 * c2;
    Ok((c2, 1.0 / c1, c1))
}

/// Grid constants with `c ⟨k⟩^{s0} ≤ φ(⟨k⟩) ≤ C ⟨k⟩^{s1}` on every frequency.
pub fn embedding_constants(grid: &TorusGrid, phi: &impl PositiveFunction, s0: f64, s1: f64) -> (f64, f64) {
    grid.brackets()
        .into_iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), b| {
            let v = phi.value(b);
            (lo.min(v / b.powf(s0)), hi.max(v / b.powf(s1)))
        })
}

const MAGIC: &[u8; 4] = b"PELF";

/// Binary layout: `"PELF"`, dim (u8), three zero bytes, two u32 axis sizes
/// (the second is 0 in 1D), then little-endian interleaved `(re, im)` f64.
pub fn write_field_binary(field: &Field, mut out: impl Write) -> Result<()> {
    let mut header = [0u8; 16];
    header[..4].copy_from_slice(MAGIC);
    header[4] = field.grid.dim() as u8;
    for (i, &n) in field.grid.sizes().iter().enumerate() {
        header[8 + 4 * i..12 + 4 * i].copy_from_slice(&(n as u32).to_le_bytes());
    }
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(16 * field.values.len());
    for v in &field.values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_field_binary(mut input: impl Read) -> Result<Field> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(SpaceError::Format("bad magic".into()));
    }
    let dim = header[4] as usize;
    if !(1..=2).contains(&dim) {
        return Err(SpaceError::Format(format!("dimension {dim}")));
    }
    let sizes: Vec<usize> = (0..dim)
        .map(|i| u32::from_le_bytes(header[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let grid = TorusGrid::new(&sizes)?;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != 16 * grid.len() {
        return Err(SpaceError::SizeMismatch {
            expected: 16 * grid.len(),
            got: body.len(),
        });
    }
    let values = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Field::new(grid, values)
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    sizes: Vec<usize>,
    values: Vec<[f64; 2]>,
}

impl Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldJson {
            sizes: self.grid.sizes().to_vec(),
            values: self.values.iter().map(|v| [v.re, v.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = FieldJson::deserialize(d)?;
        let grid = TorusGrid::new(&raw.sizes).map_err(serde::de::Error::custom)?;
        let values = raw.values.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
        Field::new(grid, values).map_err(serde::de::Error::custom)
    }
}
