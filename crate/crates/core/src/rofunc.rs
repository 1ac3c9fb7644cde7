//! RO-varying smoothness parameters.
//!
//! A function parameter `φ: [1, ∞) → (0, ∞)` is RO-varying when the ratios
//! `φ(λt)/φ(t)` stay between two positive constants for `λ` in a compact
//! range. This module evaluates the built-in families, certifies the RO
//! bound on finite grids, estimates Matuszewska indices and builds the
//! interpolation parameter `ψ` that turns a Sobolev couple into `H^α`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoError {
    #[error("argument t = {0} lies outside the domain [1, inf)")]
    OutOfDomain(f64),
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("lower Matuszewska index {0} must be positive")]
    NonPositiveLowerIndex(f64),
    #[error("interpolation orders must satisfy s0 < s1 (got s0 = {s0}, s1 = {s1})")]
    BadOrders { s0: f64, s1: f64 },
    #[error("invalid tabulated function: {0}")]
    BadTable(String),
    #[error("cannot parse function parameter '{0}'")]
    Parse(String),
    #[error("represented functions carry closures and cannot be serialized")]
    NotSerializable,
}

pub type Result<T> = std::result::Result<T, RoError>;

/// Anything that can be sampled as a positive function of `t`.
pub trait PositiveFunction {
    fn value(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> PositiveFunction for F {
    fn value(&self, t: f64) -> f64 {
        self(t)
    }
}

pub type BoundedFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smoothness parameter from the RO class.
#[derive(Clone)]
pub enum ROFunction {
    /// `t^s`
    Power { s: f64 },
    /// `t^s (1 + ln t)^r`
    PowerLog { s: f64, r: f64 },
    /// `t^s exp(ε sin(ln t))`
    Oscillating { s: f64, eps: f64 },
    /// `exp(β(t) + ∫_1^t γ(τ)/τ dτ)` with bounded `β`, `γ`.
    Represented { beta: BoundedFn, gamma: BoundedFn },
    /// Log-log linear interpolation through positive samples.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl fmt::Debug for ROFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Power { s } => write!(f, "Power({s})"),
            Self::PowerLog { s, r } => write!(f, "PowerLog({s}, {r})"),
            Self::Oscillating { s, eps } => write!(f, "Oscillating({s}, {eps})"),
            Self::Represented { .. } => write!(f, "Represented(..)"),
            Self::Tabulated { knots, .. } => write!(f, "Tabulated({} knots)", knots.len()),
        }
    }
}

impl ROFunction {
    pub fn power(s: f64) -> Self {
        Self::Power { s }
    }

    pub fn power_log(s: f64, r: f64) -> Self {
        Self::PowerLog { s, r }
    }

    pub fn oscillating(s: f64, eps: f64) -> Self {
        assert!(eps >= 0.0, "oscillation amplitude must be nonnegative");
        Self::Oscillating { s, eps }
    }

    pub fn represented(
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Represented {
            beta: Arc::new(beta),
            gamma: Arc::new(gamma),
        }
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(RoError::BadTable(format!(
                "need at least two knots and matching values (got {} knots, {} values)",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(&values).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(RoError::BadTable("knots and values must be positive".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RoError::BadTable("knots must be strictly increasing".into()));
        }
        Ok(Self::Tabulated { knots, values })
    }

    /// `φ(t)`, checked to lie in the domain `t ≥ 1`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 1.0) {
            return Err(RoError::OutOfDomain(t));
        }
        Ok(self.value(t))
    }

    /// Closed form without the domain check. Every family extends to
    /// `t > 0`; callers in this crate only pass `t ≥ 1`.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Power { s } => t.powf(*s),
            Self::PowerLog { s, r } => t.powf(*s) * (1.0 + t.ln()).powf(*r),
            Self::Oscillating { s, eps } => t.powf(*s) * (eps * t.ln().sin()).exp(),
            Self::Represented { beta, gamma } => {
                (beta(t) + log_integral(gamma.as_ref(), t.ln())).exp()
            }
            Self::Tabulated { knots, values } => loglog_interp(knots, values, t),
        }
    }

    /// The product `ϱ^s φ` with `ϱ(t) = t`, kept inside the same family.
    pub fn with_power_shift(&self, shift: f64) -> Self {
        match self {
            Self::Power { s } => Self::Power { s: s + shift },
            Self::PowerLog { s, r } => Self::PowerLog { s: s + shift, r: *r },
            Self::Oscillating { s, eps } => Self::Oscillating {
                s: s + shift,
                eps: *eps,
            },
            Self::Represented { beta, gamma } => {
                let gamma = gamma.clone();
                Self::Represented {
                    beta: beta.clone(),
                    gamma: Arc::new(move |t| gamma(t) + shift),
                }
            }
            Self::Tabulated { knots, values } => Self::Tabulated {
                knots: knots.clone(),
                values: knots
                    .iter()
                    .zip(values)
                    .map(|(k, v)| v * k.powf(shift))
                    .collect(),
            },
        }
    }

    /// `Some(s)` when the function is exactly `t^s`.
    pub fn as_power(&self) -> Option<f64> {
        match self {
            Self::Power { s } => Some(*s),
            Self::PowerLog { s, r } if *r == 0.0 => Some(*s),
            Self::Oscillating { s, eps } if *eps == 0.0 => Some(*s),
            _ => None,
        }
    }

    /// Short identifier used in report files.
    pub fn id(&self) -> String {
        match self {
            Self::Power { s } => format!("power:{s}"),
            Self::PowerLog { s, r } => format!("powerlog:{s},{r}"),
            Self::Oscillating { s, eps } => format!("oscillating:{s},{eps}"),
            Self::Represented { .. } => "represented".to_string(),
            Self::Tabulated { knots, .. } => format!("tabulated:{}", knots.len()),
        }
    }
}

impl PositiveFunction for ROFunction {
    fn value(&self, t: f64) -> f64 {
        ROFunction::value(self, t)
    }
}

fn loglog_interp(knots: &[f64], values: &[f64], t: f64) -> f64 {
    let n = knots.len();
    // segment index, clamped so the end segments extrapolate
    let i = knots.partition_point(|&k| k <= t).clamp(1, n - 1) - 1;
    let (x0, x1) = (knots[i].ln(), knots[i + 1].ln());
    let (y0, y1) = (values[i].ln(), values[i + 1].ln());
    let slope = (y1 - y0) / (x1 - x0);
    (y0 + slope * (t.ln() - x0)).exp()
}

/// `∫_0^{upper} γ(e^s) ds`, composite 8-point Gauss-Legendre on panels of width ≤ 1/2.
fn log_integral(gamma: &(dyn Fn(f64) -> f64 + Send + Sync), upper: f64) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    if upper <= 0.0 {
        return 0.0;
    }
    let panels = (upper / 0.5).ceil().max(1.0) as usize;
    let h = upper / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            acc += w * half * (gamma((mid - half * x).exp()) + gamma((mid + half * x).exp()));
        }
    }
    acc
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
enum RoSpec {
    Power { s: f64 },
    PowerLog { s: f64, r: f64 },
    Oscillating { s: f64, eps: f64 },
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl Serialize for ROFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let spec = match self {
            Self::Power { s } => RoSpec::Power { s: *s },
            Self::PowerLog { s, r } => RoSpec::PowerLog { s: *s, r: *r },
            Self::Oscillating { s, eps } => RoSpec::Oscillating { s: *s, eps: *eps },
            Self::Tabulated { knots, values } => RoSpec::Tabulated {
                knots: knots.clone(),
                values: values.clone(),
            },
            Self::Represented { .. } => {
                return Err(serde::ser::Error::custom(RoError::NotSerializable))
            }
        };
        spec.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ROFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(match RoSpec::deserialize(deserializer)? {
            RoSpec::Power { s } => Self::Power { s },
            RoSpec::PowerLog { s, r } => Self::PowerLog { s, r },
            RoSpec::Oscillating { s, eps } => {
                if eps < 0.0 {
                    return Err(serde::de::Error::custom("eps must be nonnegative"));
                }
                Self::Oscillating { s, eps }
            }
            RoSpec::Tabulated { knots, values } => {
                Self::tabulated(knots, values).map_err(serde::de::Error::custom)?
            }
        })
    }
}

/// Parses the command-line form `family:p1,p2`, e.g. `powerlog:2,1`.
impl FromStr for ROFunction {
    type Err = RoError;

    fn from_str(spec: &str) -> Result<Self> {
        let err = || RoError::Parse(spec.to_string());
        let (family, params) = spec.split_once(':').ok_or_else(err)?;
        let nums = params
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| err())?;
        match (family.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("power", [s]) => Ok(Self::power(*s)),
            ("powerlog", [s, r]) => Ok(Self::power_log(*s, *r)),
            ("oscillating", [s, eps]) if *eps >= 0.0 => Ok(Self::oscillating(*s, *eps)),
            _ => Err(err()),
        }
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Grid certificate of the RO bound: the largest `max(r, 1/r)` of
/// `r = φ(λt)/φ(t)` over the `λ` samples in `[1, a]` and all `t` samples.
///
/// Only `λ ≤ a` are used, so the result is nondecreasing in `a` for a fixed
/// `lambda_grid`. It is a lower bound on the true RO constant.
pub fn ro_bound(
    phi: &impl PositiveFunction,
    a: f64,
    t_grid: &[f64],
    lambda_grid: &[f64],
) -> Result<f64> {
    if t_grid.is_empty() {
        return Err(RoError::EmptyGrid("t"));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t >= 1.0)) {
        return Err(RoError::InvalidGrid(format!("t sample {t} below 1")));
    }
    if let Some(l) = lambda_grid.iter().find(|l| !(**l >= 1.0)) {
        return Err(RoError::InvalidGrid(format!("lambda sample {l} below 1")));
    }
    let lambdas: Vec<f64> = lambda_grid.iter().copied().filter(|l| *l <= a).collect();
    if lambdas.is_empty() {
        return Err(RoError::EmptyGrid("lambda within [1, a]"));
    }
    let mut c: f64 = 1.0;
    for &t in t_grid {
        let base = phi.value(t);
        for &l in &lambdas {
            let r = phi.value(l * t) / base;
            c = c.max(r).max(1.0 / r);
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatuszewskaIndices {
    pub sigma0: f64,
    pub sigma1: f64,
}

/// Grid used by [`matuszewska`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatuszewskaConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub lambda_points: usize,
}

impl Default for MatuszewskaConfig {
    fn default() -> Self {
        Self {
            lambda_min: 2.0,
            lambda_max: 1e4,
            t_max: 1e8,
            t_points: 64,
            lambda_points: 32,
        }
    }
}

/// Estimates the Matuszewska indices from the extremes of
/// `ln(φ(λt)/φ(t)) / ln λ` over geometric grids `t ∈ [1, t_max]`,
/// `λ ∈ [lambda_min, lambda_max]`.
///
/// Bias: bounded multiplicative wobble (the oscillating family) is seen at
/// the scale `ln lambda_min`, so the estimate approaches the range of the
/// local slope `d ln φ / d ln t` rather than the asymptotic exponents; slowly
/// varying factors such as `(1 + ln t)^r` inflate the upper estimate by up to
/// `ln(1 + ln(lambda_min))/ln(lambda_min)·r` near `t = 1`. Pure powers are exact.
pub fn matuszewska(
    phi: &impl PositiveFunction,
    config: &MatuszewskaConfig,
) -> Result<MatuszewskaIndices> {
    if !(config.lambda_min > 1.0) || !(config.lambda_max >= config.lambda_min) {
        return Err(RoError::InvalidGrid(format!(
            "need 1 < lambda_min <= lambda_max (got {}, {})",
            config.lambda_min, config.lambda_max
        )));
    }
    if !(config.t_max >= 1.0) {
        return Err(RoError::InvalidGrid(format!("t_max = {} below 1", config.t_max)));
    }
    if config.t_points == 0 || config.lambda_points == 0 {
        return Err(RoError::EmptyGrid("matuszewska grid"));
    }
    let ts = log_grid(1.0, config.t_max, config.t_points);
    let ls = log_grid(config.lambda_min, config.lambda_max, config.lambda_points);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &t in &ts {
        let base = phi.value(t).ln();
        for &l in &ls {
            let slope = (phi.value(l * t).ln() - base) / l.ln();
            lo = lo.min(slope);
            hi = hi.max(slope);
        }
    }
    Ok(MatuszewskaIndices {
        sigma0: lo,
        sigma1: hi,
    })
}

/// Smallest grid constant `c₂ ≥ 1` with
/// `c₂⁻¹ α(t₁+t₂) ≤ α(t₁) + α(t₂) ≤ c₂ α(t₁+t₂)` over `t1 × t2`.
pub fn subadd_constant(alpha: &ROFunction, t1: &[f64], t2: &[f64]) -> Result<f64> {
    let idx = matuszewska(alpha, &MatuszewskaConfig::default())?;
    if idx.sigma0 <= 0.0 {
        return Err(RoError::NonPositiveLowerIndex(idx.sigma0));
    }
    if t1.is_empty() || t2.is_empty() {
        return Err(RoError::EmptyGrid("subadditivity grid"));
    }
    if let Some(t) = t1.iter().chain(t2).find(|t| !(**t >= 1.0)) {
        return Err(RoError::InvalidGrid(format!("sample {t} below 1")));
    }
    let mut c: f64 = 1.0;
    for &a in t1 {
        for &b in t2 {
            let r = (alpha.value(a) + alpha.value(b)) / alpha.value(a + b);
            c = c.max(r).max(1.0 / r);
        }
    }
    Ok(c)
}

/// The interpolation parameter `ψ` built from `α` and the Sobolev orders
/// `s0 < s1`:
/// `ψ(t) = t^{-s0/(s1-s0)} α(t^{1/(s1-s0)})` for `t ≥ 1`, `ψ(t) = α(1)` below.
#[derive(Debug, Clone)]
pub struct InterpParameter {
    pub base: ROFunction,
    pub s0: f64,
    pub s1: f64,
}

pub fn make_interp_param(alpha: ROFunction, s0: f64, s1: f64) -> Result<InterpParameter> {
    if !(s0 < s1) {
        return Err(RoError::BadOrders { s0, s1 });
    }
    Ok(InterpParameter {
        base: alpha,
        s0,
        s1,
    })
}

impl InterpParameter {
    pub fn eval(&self, t: f64) -> f64 {
        if t < 1.0 {
            return self.base.value(1.0);
        }
        let span = self.s1 - self.s0;
        t.powf(-self.s0 / span) * self.base.value(t.powf(1.0 / span))
    }

    /// Advisory check that `s0 < σ₀(α) ≤ σ₁(α) < s1` on the default grid.
    pub fn brackets_indices(&self) -> Result<bool> {
        let idx = matuszewska(&self.base, &MatuszewskaConfig::default())?;
        Ok(self.s0 < idx.sigma0 && idx.sigma1 < self.s1)
    }
}

impl PositiveFunction for InterpParameter {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    pub indices: MatuszewskaIndices,
    pub margin: f64,
    pub pass: bool,
}

/// Sufficient test for pseudoconcavity near infinity: passes when the
/// estimated indices of `ψ` lie strictly inside `(0, 1)`.
pub fn pseudoconcavity_probe(psi: &InterpParameter, config: &MatuszewskaConfig) -> Result<ProbeResult> {
    let indices = matuszewska(psi, config)?;
    let margin = indices.sigma0.min(1.0 - indices.sigma1);
    Ok(ProbeResult {
        indices,
        margin,
        pass: indices.sigma0 > 0.0 && indices.sigma1 < 1.0,
    })
}
