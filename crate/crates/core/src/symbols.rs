//! Parameter-dependent boundary-value problems and a sampled decision
//! procedure for parameter-ellipticity.
//!
//! A problem of order `2q` is `A(λ)u = f` in Ω with `B_j(λ)u = g_j` on Γ,
//! where
//!
//! ```text
//! A(λ) = Σ_{r=0}^{2q} λ^{2q-r} Σ_{|μ|≤r} a_{r,μ}(x) D^μ,
//! B_j(λ) = Σ_{r=0}^{m_j} λ^{m_j-r} Σ_{|μ|≤r} b_{j,r,μ}(x) D^μ,
//! ```
//!
//! with `D = i∂`. The principal symbols keep only the `|μ| = r` terms.
//! Normals point into the domain.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rofunc::{matuszewska, MatuszewskaConfig, ROFunction};

#[derive(Debug, Error)]
pub enum SymbolError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid angle [{lo}, {hi}]")]
    InvalidAngle { lo: f64, hi: f64 },
    #[error("leading τ-coefficient {modulus:e} below tolerance: the normal direction is characteristic")]
    DegenerateLeading { modulus: f64 },
    #[error("degenerate split: root {re} + {im}i is numerically real")]
    DegenerateSplit { re: f64, im: f64 },
    #[error("unbalanced split: {plus} roots above and {minus} below the real axis")]
    UnbalancedSplit { plus: usize, minus: usize },
    #[error("unknown boundary component `{0}`")]
    UnknownComponent(String),
}

pub type Result<T> = std::result::Result<T, SymbolError>;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Multi-index `μ = (μ₁, …, μₙ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `ξ^μ` for complex `ξ`.
    pub fn monomial(&self, xi: &[C64]) -> C64 {
        self.0.iter().zip(xi).fold(ONE, |acc, (&m, z)| acc * z.powu(m))
    }
}

/// A complex constant, or a function of `x` known at sample points and
/// evaluated by nearest-neighbour lookup.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Const(C64),
    Sampled(Vec<(Vec<f64>, C64)>),
}

impl Coefficient {
    pub fn at(&self, x: &[f64]) -> C64 {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::Sampled(samples) => {
                let dist = |p: &[f64]| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                samples
                    .iter()
                    .min_by(|a, b| dist(&a.0).total_cmp(&dist(&b.0)))
                    .map(|s| s.1)
                    .unwrap_or(ZERO)
            }
        }
    }

    pub fn as_const(&self) -> Option<C64> {
        match self {
            Coefficient::Const(c) => Some(*c),
            Coefficient::Sampled(_) => None,
        }
    }

    fn points(&self) -> impl Iterator<Item = &Vec<f64>> {
        let s: &[(Vec<f64>, C64)] = match self {
            Coefficient::Const(_) => &[],
            Coefficient::Sampled(s) => s,
        };
        s.iter().map(|p| &p.0)
    }
}

#[derive(Serialize, Deserialize)]
struct SampleSpec {
    x: Vec<f64>,
    value: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CoefficientSpec {
    Const([f64; 2]),
    Sampled { samples: Vec<SampleSpec> },
}

impl Serialize for Coefficient {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Coefficient::Const(c) => CoefficientSpec::Const([c.re, c.im]),
            Coefficient::Sampled(v) => CoefficientSpec::Sampled {
                samples: v
                    .iter()
                    .map(|(x, c)| SampleSpec { x: x.clone(), value: [c.re, c.im] })
                    .collect(),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Coefficient {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match CoefficientSpec::deserialize(d)? {
            CoefficientSpec::Const([re, im]) => Coefficient::Const(C64::new(re, im)),
            CoefficientSpec::Sampled { samples } => {
                if samples.is_empty() {
                    return Err(serde::de::Error::custom("sampled coefficient without samples"));
                }
                Coefficient::Sampled(samples.into_iter().map(|s| (s.x, C64::new(s.value[0], s.value[1]))).collect())
            }
        })
    }
}

/// One term `a_{r,μ}(x) D^μ` of tier `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub r: u32,
    pub mu: MultiIndex,
    pub coeff: Coefficient,
}

impl Term {
    pub fn new(r: u32, mu: &[u32], coeff: C64) -> Self {
        Self { r, mu: MultiIndex(mu.to_vec()), coeff: Coefficient::Const(coeff) }
    }

    pub fn is_principal(&self) -> bool {
        self.mu.order() == self.r
    }
}

/// `Σ_r λ^{order-r} Σ_μ a_{r,μ} D^μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffExpression {
    pub order: u32,
    pub terms: Vec<Term>,
}

impl DiffExpression {
    fn validate(&self, dim: usize, what: &str) -> Result<()> {
        for t in &self.terms {
            if t.mu.dim() != dim {
                return Err(SymbolError::InvalidProblem(format!(
                    "{what}: multi-index {:?} has length {}, expected {dim}",
                    t.mu.0,
                    t.mu.dim()
                )));
            }
            if t.r > self.order || t.mu.order() > t.r {
                return Err(SymbolError::InvalidProblem(format!(
                    "{what}: term r={} μ={:?} violates |μ| ≤ r ≤ {}",
                    t.r, t.mu.0, self.order
                )));
            }
            if let Coefficient::Sampled(s) = &t.coeff {
                if s.iter().any(|(x, _)| x.len() != dim) {
                    return Err(SymbolError::InvalidProblem(format!("{what}: sample point of wrong dimension")));
                }
            }
        }
        Ok(())
    }

    /// Principal symbol `Σ_r λ^{order-r} Σ_{|μ|=r} a_{r,μ}(x) ξ^μ`.
    pub fn principal_symbol(&self, x: &[f64], xi: &[f64], lambda: C64) -> C64 {
        let xi: Vec<C64> = xi.iter().map(|v| C64::new(*v, 0.0)).collect();
        self.terms
            .iter()
            .filter(|t| t.is_principal())
            .map(|t| lambda.powu(self.order - t.r) * t.coeff.at(x) * t.mu.monomial(&xi))
            .sum()
    }

    /// `τ ↦` principal symbol at `ξt + τν`.
    pub fn tau_polynomial(&self, x: &[f64], xi_t: &[f64], nu: &[f64], lambda: C64) -> ComplexPolynomial {
        let linear: Vec<ComplexPolynomial> = xi_t
            .iter()
            .zip(nu)
            .map(|(a, b)| ComplexPolynomial::new(vec![C64::new(*a, 0.0), C64::new(*b, 0.0)]))
            .collect();
        let mut out = ComplexPolynomial::zero();
        for t in self.terms.iter().filter(|t| t.is_principal()) {
            let mut p = ComplexPolynomial::constant(lambda.powu(self.order - t.r) * t.coeff.at(x));
            for (c, &m) in linear.iter().zip(&t.mu.0) {
                for _ in 0..m {
                    p = p.mul(c);
                }
            }
            out = out.add(&p);
        }
        out
    }

    fn points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.terms.iter().flat_map(|t| t.coeff.points())
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.as_const().is_some())
    }
}

/// A boundary component with its inner normal and `q` boundary operators.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryComponent {
    pub name: String,
    pub normal: Vec<f64>,
    /// Default sample point on the component.
    pub point: Vec<f64>,
    pub ops: Vec<DiffExpression>,
}

impl BoundaryComponent {
    pub fn orders(&self) -> Vec<u32> {
        self.ops.iter().map(|o| o.order).collect()
    }

    /// A unit tangent vector (empty in one dimension).
    pub fn tangent(&self) -> Vec<f64> {
        match self.normal.len() {
            2 => vec![self.normal[1], -self.normal[0]],
            _ => Vec::new(),
        }
    }
}

/// Parameter-dependent boundary-value problem of order `2q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemSpec", into = "ProblemSpec")]
pub struct BVProblem {
    pub q: u32,
    pub dim: usize,
    pub interior: DiffExpression,
    pub boundary: Vec<BoundaryComponent>,
}

#[derive(Serialize, Deserialize)]
struct OpSpec {
    m: u32,
    terms: Vec<Term>,
}

#[derive(Serialize, Deserialize)]
struct ComponentSpec {
    component: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<Vec<f64>>,
    ops: Vec<OpSpec>,
}

#[derive(Serialize, Deserialize)]
struct ProblemSpec {
    q: u32,
    interior: Vec<Term>,
    boundary: Vec<ComponentSpec>,
}

fn default_geometry(name: &str, dim: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    match (dim, name) {
        (2, "bottom") => Some((vec![0.0, 1.0], vec![0.0, 0.0])),
        (2, "top") => Some((vec![0.0, -1.0], vec![0.0, 1.0])),
        (1, "left") => Some((vec![1.0], vec![0.0])),
        (1, "right") => Some((vec![-1.0], vec![1.0])),
        _ => None,
    }
}

impl TryFrom<ProblemSpec> for BVProblem {
    type Error = SymbolError;

    fn try_from(s: ProblemSpec) -> Result<Self> {
        let dim = s
            .interior
            .first()
            .map(|t| t.mu.dim())
            .ok_or_else(|| SymbolError::InvalidProblem("interior has no terms".into()))?;
        let interior = DiffExpression { order: 2 * s.q, terms: s.interior };
        let mut boundary = Vec::new();
        for c in s.boundary {
            let (normal, point) = match (c.normal, c.point, default_geometry(&c.component, dim)) {
                (Some(n), Some(p), _) => (n, p),
                (Some(n), None, _) => (n, vec![0.0; dim]),
                (None, p, Some((n, dp))) => (n, p.unwrap_or(dp)),
                (None, _, None) => return Err(SymbolError::UnknownComponent(c.component)),
            };
            boundary.push(BoundaryComponent {
                name: c.component,
                normal,
                point,
                ops: c.ops.into_iter().map(|o| DiffExpression { order: o.m, terms: o.terms }).collect(),
            });
        }
        BVProblem::new(s.q, interior, boundary)
    }
}

impl From<BVProblem> for ProblemSpec {
    fn from(p: BVProblem) -> Self {
        ProblemSpec {
            q: p.q,
            interior: p.interior.terms,
            boundary: p
                .boundary
                .into_iter()
                .map(|c| {
                    let default = default_geometry(&c.name, p.dim);
                    let (normal, point) = match default {
                        Some((n, x)) if n == c.normal && x == c.point => (None, None),
                        _ => (Some(c.normal), Some(c.point)),
                    };
                    ComponentSpec {
                        component: c.name,
                        normal,
                        point,
                        ops: c.ops.into_iter().map(|o| OpSpec { m: o.order, terms: o.terms }).collect(),
                    }
                })
                .collect(),
        }
    }
}

fn cst(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

impl BVProblem {
    pub fn new(q: u32, interior: DiffExpression, boundary: Vec<BoundaryComponent>) -> Result<Self> {
        if q == 0 {
            return Err(SymbolError::InvalidProblem("q must be positive".into()));
        }
        if interior.order != 2 * q {
            return Err(SymbolError::InvalidProblem(format!(
                "interior order {} but 2q = {}",
                interior.order,
                2 * q
            )));
        }
        let dim = interior
            .terms
            .first()
            .map(|t| t.mu.dim())
            .ok_or_else(|| SymbolError::InvalidProblem("interior has no terms".into()))?;
        if !(1..=2).contains(&dim) {
            return Err(SymbolError::InvalidProblem(format!("dimension {dim} not in {{1, 2}}")));
        }
        interior.validate(dim, "interior")?;
        if boundary.is_empty() {
            return Err(SymbolError::InvalidProblem("no boundary components".into()));
        }
        for c in &boundary {
            if c.ops.len() != q as usize {
                return Err(SymbolError::InvalidProblem(format!(
                    "component `{}` has {} operators, expected q = {q}",
                    c.name,
                    c.ops.len()
                )));
            }
            let len = c.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            if c.normal.len() != dim || (len - 1.0).abs() > 1e-12 || c.point.len() != dim {
                return Err(SymbolError::InvalidProblem(format!(
                    "component `{}` needs a unit normal and a point in dimension {dim}",
                    c.name
                )));
            }
            for op in &c.ops {
                op.validate(dim, &c.name)?;
            }
        }
        Ok(Self { q, dim, interior, boundary })
    }

    fn helmholtz_interior() -> DiffExpression {
        DiffExpression {
            order: 2,
            terms: vec![
                Term::new(2, &[2, 0], cst(-1.0, 0.0)),
                Term::new(2, &[0, 2], cst(-1.0, 0.0)),
                Term::new(0, &[0, 0], cst(1.0, 0.0)),
            ],
        }
    }

    fn strip_components(op: impl Fn(f64) -> DiffExpression) -> Vec<BoundaryComponent> {
        ["bottom", "top"]
            .iter()
            .map(|name| {
                let (normal, point) = default_geometry(name, 2).unwrap();
                let s = normal[1];
                BoundaryComponent { name: name.to_string(), normal, point, ops: vec![op(s)] }
            })
            .collect()
    }

    /// `Δu + λ²u = f` on the strip with `u = g` on both circles.
    pub fn helmholtz_dirichlet() -> Self {
        let dirichlet = |_: f64| DiffExpression { order: 0, terms: vec![Term::new(0, &[0, 0], ONE)] };
        Self::new(1, Self::helmholtz_interior(), Self::strip_components(dirichlet)).unwrap()
    }

    /// `Δu + λ²u = f` on the strip with `∂u/∂ν − λu = g`, where
    /// `∂/∂ν = −i(ν·D)`.
    pub fn helmholtz_robin() -> Self {
        let robin = |nu2: f64| DiffExpression {
            order: 1,
            terms: vec![Term::new(1, &[0, 1], cst(0.0, -nu2)), Term::new(0, &[0, 0], cst(-1.0, 0.0))],
        };
        Self::new(1, Self::helmholtz_interior(), Self::strip_components(robin)).unwrap()
    }

    pub fn component(&self, name: &str) -> Result<&BoundaryComponent> {
        self.boundary
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| SymbolError::UnknownComponent(name.to_string()))
    }

    pub fn is_constant(&self) -> bool {
        self.interior.is_constant() && self.boundary.iter().all(|c| c.ops.iter().all(|o| o.is_constant()))
    }

    fn interior_samples(&self, cap: usize) -> Vec<Vec<f64>> {
        let mut pts: Vec<Vec<f64>> = Vec::new();
        for p in self.interior.points() {
            if !pts.contains(p) {
                pts.push(p.clone());
            }
        }
        if pts.is_empty() {
            pts.push(vec![0.0; self.dim]);
        }
        stride(pts, cap)
    }

    fn boundary_samples(&self, c: &BoundaryComponent, cap: usize) -> Vec<Vec<f64>> {
        let mut pts: Vec<Vec<f64>> = Vec::new();
        for p in c.ops.iter().flat_map(|o| o.points()) {
            if !pts.contains(p) {
                pts.push(p.clone());
            }
        }
        if pts.is_empty() {
            pts.push(c.point.clone());
        }
        stride(pts, cap)
    }
}

fn stride(pts: Vec<Vec<f64>>, cap: usize) -> Vec<Vec<f64>> {
    let cap = cap.max(1);
    if pts.len() <= cap {
        return pts;
    }
    (0..cap).map(|i| pts[i * pts.len() / cap].clone()).collect()
}

/// Closed angle `{arg λ ∈ [argLo, argHi]}`; a ray when the ends coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Angle {
    pub arg_lo: f64,
    pub arg_hi: f64,
}

impl Angle {
    pub fn new(arg_lo: f64, arg_hi: f64) -> Result<Self> {
        if !(arg_lo.is_finite() && arg_hi.is_finite() && arg_lo <= arg_hi && arg_hi <= arg_lo + 2.0 * PI) {
            return Err(SymbolError::InvalidAngle { lo: arg_lo, hi: arg_hi });
        }
        Ok(Self { arg_lo, arg_hi })
    }

    pub fn ray(arg: f64) -> Self {
        Self { arg_lo: arg, arg_hi: arg }
    }

    pub fn is_ray(&self) -> bool {
        self.arg_lo == self.arg_hi
    }

    /// Arguments spaced at most `step` apart, ends included.
    pub fn samples(&self, step: f64) -> Vec<f64> {
        if self.is_ray() {
            return vec![self.arg_lo];
        }
        let n = ((self.arg_hi - self.arg_lo) / step).ceil().max(1.0) as usize;
        (0..=n).map(|i| self.arg_lo + (self.arg_hi - self.arg_lo) * i as f64 / n as f64).collect()
    }
}

/// Polynomial with complex coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPolynomial {
    pub coeffs: Vec<C64>,
}

impl ComplexPolynomial {
    pub fn new(coeffs: Vec<C64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![ZERO] }
    }

    pub fn constant(c: C64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// `Π (τ − rⱼ)`.
    pub fn from_roots(roots: &[C64]) -> Self {
        roots
            .iter()
            .fold(Self::constant(ONE), |p, r| p.mul(&Self::new(vec![-r, ONE])))
    }

    /// Degree of the stored coefficient vector (zeros included).
    pub fn len_degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> C64 {
        *self.coeffs.last().unwrap_or(&ZERO)
    }

    pub fn scale(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, c| acc * z + c)
    }

    fn eval_with_derivative(&self, z: C64) -> (C64, C64) {
        let mut p = ZERO;
        let mut d = ZERO;
        for c in self.coeffs.iter().rev() {
            d = d * z + p;
            p = p * z + c;
        }
        (p, d)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let get = |v: &[C64], i: usize| v.get(i).copied().unwrap_or(ZERO);
        Self::new((0..n).map(|i| get(&self.coeffs, i) + get(&other.coeffs, i)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// Keeps coefficients up to `degree`.
    pub fn truncated(&self, degree: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.resize(degree + 1, ZERO);
        Self::new(c)
    }

    /// Remainder of division by a monic polynomial.
    pub fn rem_monic(&self, divisor: &Self) -> Self {
        let d = divisor.len_degree();
        let mut r = self.coeffs.clone();
        if r.len() > d {
            for k in (d..r.len()).rev() {
                let c = r[k];
                if c != ZERO {
                    for (i, dc) in divisor.coeffs.iter().enumerate() {
                        r[k - d + i] -= c * dc;
                    }
                }
            }
        }
        r.resize(d.max(1), ZERO);
        r.truncate(d.max(1));
        Self::new(r)
    }

    /// `max_k |a_{n-k}/a_n|^{1/k}`: the magnitude scale of the roots.
    pub fn root_scale(&self) -> f64 {
        let n = self.len_degree();
        let lead = self.leading().norm();
        (1..=n)
            .map(|k| (self.coeffs[n - k].norm() / lead).powf(1.0 / k as f64))
            .fold(0.0, f64::max)
    }

    /// All roots by Aberth–Ehrlich iteration with a Newton polish.
    pub fn roots(&self) -> Vec<C64> {
        let n = self.len_degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let monic = Self::new(self.coeffs.iter().map(|c| c / lead).collect());
        let scale = monic.root_scale().max(f64::MIN_POSITIVE);
        let center = -monic.coeffs[n - 1] / n as f64;
        let radius = scale.max(1e-3);
        let mut z: Vec<C64> = (0..n)
            .map(|k| center + C64::from_polar(radius, 2.0 * PI * k as f64 / n as f64 + 0.4))
            .collect();
        for _ in 0..2000 {
            let mut shift = 0.0f64;
            for k in 0..n {
                let (p, d) = monic.eval_with_derivative(z[k]);
                if p == ZERO {
                    continue;
                }
                let ratio = p / d;
                let sum: C64 = (0..n).filter(|&j| j != k).map(|j| ONE / (z[k] - z[j])).sum();
                let w = ratio / (ONE - ratio * sum);
                if w.is_finite() {
                    z[k] -= w;
                    shift = shift.max(w.norm());
                }
            }
            if shift <= 1e-15 * scale.max(1.0) {
                break;
            }
        }
        for root in z.iter_mut() {
            for _ in 0..3 {
                let (p, d) = monic.eval_with_derivative(*root);
                let next = *root - p / d;
                if next.is_finite() && monic.eval(next).norm() < p.norm() {
                    *root = next;
                } else {
                    break;
                }
            }
        }
        z
    }
}

/// Thresholds of the decision procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative to the root scale of the polynomial.
    pub tol_imag: f64,
    pub tol_lead: f64,
    pub tol_a: f64,
    pub tol_b: f64,
    /// Relative clustering radius for multiple roots.
    pub cluster: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol_imag: 1e-7, tol_lead: 1e-10, tol_a: 1e-6, tol_b: 1e-6, cluster: 1e-6 }
    }
}

/// τ-roots of the interior symbol separated by the sign of the imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSplit {
    pub tau_plus: Vec<C64>,
    pub tau_minus: Vec<C64>,
    /// `max |p(τ)| / max |coefficient|` over the raw roots.
    pub residual: f64,
}

impl RootSplit {
    /// `M⁺(τ) = Π (τ − τ⁺ⱼ)`.
    pub fn plus_factor(&self) -> ComplexPolynomial {
        ComplexPolynomial::from_roots(&self.tau_plus)
    }
}

/// Replaces each cluster of nearby roots by copies of its mean.
fn cluster_roots(roots: &[C64], radius: f64) -> Vec<C64> {
    let mut out = vec![ZERO; roots.len()];
    let mut seen = vec![false; roots.len()];
    for i in 0..roots.len() {
        if seen[i] {
            continue;
        }
        let members: Vec<usize> = (i..roots.len())
            .filter(|&j| !seen[j] && (roots[j] - roots[i]).norm() <= radius)
            .collect();
        let mean = members.iter().map(|&j| roots[j]).sum::<C64>() / members.len() as f64;
        for j in members {
            seen[j] = true;
            out[j] = mean;
        }
    }
    out
}

/// Splits the roots of `poly` (degree `2q`) into `q` above and `q` below
/// the real axis.
pub fn root_split(poly: &ComplexPolynomial, tol: &Tolerances) -> Result<RootSplit> {
    let lead = poly.leading().norm();
    if lead < tol.tol_lead * poly.scale().max(1.0) {
        return Err(SymbolError::DegenerateLeading { modulus: lead });
    }
    let roots = poly.roots();
    let scale = poly.root_scale().max(1.0);
    let coeff_scale = poly.scale();
    let residual = roots.iter().map(|r| poly.eval(*r).norm()).fold(0.0, f64::max) / coeff_scale;
    if let Some(r) = roots.iter().find(|r| r.im.abs() <= tol.tol_imag * scale) {
        return Err(SymbolError::DegenerateSplit { re: r.re, im: r.im });
    }
    let clustered = cluster_roots(&roots, tol.cluster * scale);
    let (tau_plus, tau_minus): (Vec<C64>, Vec<C64>) = clustered.iter().partition(|r| r.im > 0.0);
    if tau_plus.len() != tau_minus.len() {
        return Err(SymbolError::UnbalancedSplit { plus: tau_plus.len(), minus: tau_minus.len() });
    }
    Ok(RootSplit { tau_plus, tau_minus, residual })
}

pub fn symbol_a0(p: &BVProblem, x: &[f64], xi: &[f64], lambda: C64) -> C64 {
    p.interior.principal_symbol(x, xi, lambda)
}

pub fn symbol_b0(c: &BoundaryComponent, j: usize, x: &[f64], xi: &[f64], lambda: C64) -> C64 {
    c.ops[j].principal_symbol(x, xi, lambda)
}

/// `τ ↦ A⁰(x, ξt + τν, λ)` truncated to degree `2q`.
pub fn tau_polynomial_a(
    p: &BVProblem,
    x: &[f64],
    xi_t: &[f64],
    nu: &[f64],
    lambda: C64,
    tol: &Tolerances,
) -> Result<ComplexPolynomial> {
    let poly = p.interior.tau_polynomial(x, xi_t, nu, lambda).truncated(2 * p.q as usize);
    let lead = poly.leading().norm();
    if lead < tol.tol_lead {
        return Err(SymbolError::DegenerateLeading { modulus: lead });
    }
    Ok(poly)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LopatinskiiMatrix {
    /// Row `j`: coefficients of `B⁰_j mod M⁺` in increasing powers of τ.
    pub c: DMatrix<C64>,
    pub sigma_min: f64,
    pub det: C64,
}

pub fn lopatinskii_matrix(
    p: &BVProblem,
    component: &BoundaryComponent,
    x: &[f64],
    xi_t: &[f64],
    lambda: C64,
    tol: &Tolerances,
) -> Result<LopatinskiiMatrix> {
    let nu = &component.normal;
    let split = root_split(&tau_polynomial_a(p, x, xi_t, nu, lambda, tol)?, tol)?;
    let m_plus = split.plus_factor();
    let q = p.q as usize;
    let mut c = DMatrix::zeros(q, q);
    for (j, op) in component.ops.iter().enumerate() {
        let r = op.tau_polynomial(x, xi_t, nu, lambda).rem_monic(&m_plus);
        for i in 0..q {
            c[(j, i)] = r.coeffs.get(i).copied().unwrap_or(ZERO);
        }
    }
    let sigma_min = c.clone().singular_values().min();
    let det = c.determinant();
    Ok(LopatinskiiMatrix { c, sigma_min, det })
}

/// A sampled point of the unit sphere `|ξ|² + |λ|² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstPoint {
    pub condition: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component: Option<String>,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub lambda: [f64; 2],
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub x_samples: usize,
    pub sphere_samples: usize,
    /// Angle discretization step in radians.
    pub angle_step: f64,
    /// Golden-section sweeps started from the worst grid points.
    pub refine: bool,
    pub tolerances: Tolerances,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            x_samples: 64,
            sphere_samples: 512,
            angle_step: PI / 180.0,
            refine: true,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub margin: f64,
    pub worst: WorstPoint,
    pub samples: usize,
}

/// Coordinates `(ω, φ, θ)`: `|λ| = sin ω`, `|ξ| = cos ω`, `φ` the direction
/// of `ξ` (or the sign of `ξt` on a boundary), `θ = arg λ`.
#[derive(Debug, Clone, Copy)]
struct SpherePoint {
    omega: f64,
    phi: f64,
    theta: f64,
}

fn sphere_grid(dim: usize, samples: usize, boundary: bool, thetas: &[f64]) -> (Vec<SpherePoint>, [f64; 2]) {
    let n_dir = match (dim, boundary) {
        (1, true) => 1,
        (1, false) | (2, true) => 2,
        _ => 32.min(samples.max(1)),
    };
    let n_omega = if dim == 1 && boundary { 1 } else { (samples / n_dir).max(2) };
    let d_omega = if n_omega > 1 { FRAC_PI_2 / (n_omega - 1) as f64 } else { 0.0 };
    let d_phi = if dim == 2 && !boundary { 2.0 * PI / n_dir as f64 } else { PI };
    let mut pts = Vec::with_capacity(n_omega * n_dir * thetas.len());
    for &theta in thetas {
        for i in 0..n_omega {
            let omega = if n_omega > 1 { i as f64 * d_omega } else { FRAC_PI_2 };
            for k in 0..n_dir {
                pts.push(SpherePoint { omega, phi: k as f64 * d_phi, theta });
            }
        }
    }
    (pts, [d_omega, d_phi])
}

fn lambda_of(p: &SpherePoint) -> C64 {
    C64::from_polar(p.omega.sin(), p.theta)
}

fn xi_of(p: &SpherePoint, dim: usize) -> Vec<f64> {
    let r = p.omega.cos();
    match dim {
        1 => vec![r * p.phi.cos()],
        _ => vec![r * p.phi.cos(), r * p.phi.sin()],
    }
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Coordinate sweeps of golden-section searches around a grid point.
fn refine_point(
    f: &dyn Fn(&SpherePoint) -> f64,
    start: SpherePoint,
    steps: [f64; 2],
    angle: &Angle,
    angle_step: f64,
    free_phi: bool,
) -> (SpherePoint, f64) {
    let mut best = start;
    let mut val = f(&best);
    let mut h = [steps[0], steps[1], if angle.is_ray() { 0.0 } else { angle_step }];
    for _ in 0..4 {
        if h[0] > 0.0 {
            let lo = (best.omega - h[0]).max(0.0);
            let hi = (best.omega + h[0]).min(FRAC_PI_2);
            let (w, v) = golden_min(&|w| f(&SpherePoint { omega: w, ..best }), lo, hi, 60);
            if v < val {
                best.omega = w;
                val = v;
            }
        }
        if free_phi && h[1] > 0.0 {
            let (ph, v) = golden_min(&|ph| f(&SpherePoint { phi: ph, ..best }), best.phi - h[1], best.phi + h[1], 60);
            if v < val {
                best.phi = ph;
                val = v;
            }
        }
        if h[2] > 0.0 {
            let lo = (best.theta - h[2]).max(angle.arg_lo);
            let hi = (best.theta + h[2]).min(angle.arg_hi);
            let (t, v) = golden_min(&|t| f(&SpherePoint { theta: t, ..best }), lo, hi, 60);
            if v < val {
                best.theta = t;
                val = v;
            }
        }
        h = h.map(|x| x * 0.5);
    }
    (best, val)
}

/// Indices of the `k` smallest values, ties broken by index.
fn smallest(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// `min |A⁰(x, ξ, λ)|` over sampled `x` and the unit sphere with
/// `arg λ ∈ K` or `λ = 0`.
pub fn condition_i_scan(p: &BVProblem, angle: &Angle, config: &ScanConfig) -> ScanResult {
    let xs = p.interior_samples(config.x_samples);
    let thetas = angle.samples(config.angle_step);
    let (grid, steps) = sphere_grid(p.dim, config.sphere_samples, false, &thetas);
    let mut best: Option<(f64, WorstPoint)> = None;
    for x in &xs {
        let f = |s: &SpherePoint| symbol_a0(p, x, &xi_of(s, p.dim), lambda_of(s)).norm();
        let values: Vec<f64> = grid.par_iter().map(f).collect();
        let mut candidates: Vec<(SpherePoint, f64)> =
            smallest(&values, 4).into_iter().map(|i| (grid[i], values[i])).collect();
        if config.refine {
            candidates = candidates
                .into_iter()
                .map(|(s, _)| refine_point(&f, s, steps, angle, config.angle_step, p.dim == 2))
                .collect();
        }
        for (s, v) in candidates {
            if best.as_ref().map_or(true, |b| v < b.0) {
                let l = lambda_of(&s);
                best = Some((
                    v,
                    WorstPoint {
                        condition: "i",
                        component: None,
                        x: x.clone(),
                        xi: xi_of(&s, p.dim),
                        lambda: [l.re, l.im],
                        value: v,
                    },
                ));
            }
        }
    }
    let (margin, worst) = best.expect("sample sets are nonempty");
    ScanResult { margin, worst, samples: xs.len() * grid.len() }
}

/// `min σ_min(C)` of the Lopatinskii matrix over boundary samples with
/// `|ξt|² + |λ|² = 1`. Degenerate splits count as zero.
pub fn condition_ii_scan(p: &BVProblem, angle: &Angle, config: &ScanConfig) -> ScanResult {
    let thetas = angle.samples(config.angle_step);
    let (grid, steps) = sphere_grid(p.dim, config.sphere_samples, true, &thetas);
    let tol = &config.tolerances;
    let mut best: Option<(f64, WorstPoint)> = None;
    let mut samples = 0;
    for c in &p.boundary {
        let tangent = c.tangent();
        let xs = p.boundary_samples(c, config.x_samples);
        samples += xs.len() * grid.len();
        let xi_t = |s: &SpherePoint| -> Vec<f64> {
            let r = s.omega.cos() * s.phi.cos();
            tangent.iter().map(|t| r * t).collect::<Vec<f64>>()
        };
        for x in &xs {
            let f = |s: &SpherePoint| {
                lopatinskii_matrix(p, c, x, &xi_t(s), lambda_of(s), tol).map_or(0.0, |m| m.sigma_min)
            };
            let values: Vec<f64> = grid.par_iter().map(f).collect();
            let mut candidates: Vec<(SpherePoint, f64)> =
                smallest(&values, 4).into_iter().map(|i| (grid[i], values[i])).collect();
            if config.refine {
                candidates = candidates
                    .into_iter()
                    .map(|(s, _)| refine_point(&f, s, steps, angle, config.angle_step, false))
                    .collect();
            }
            for (s, v) in candidates {
                if best.as_ref().map_or(true, |b| v < b.0) {
                    let l = lambda_of(&s);
                    best = Some((
                        v,
                        WorstPoint {
                            condition: "ii",
                            component: Some(c.name.clone()),
                            x: x.clone(),
                            xi: xi_t(&s),
                            lambda: [l.re, l.im],
                            value: v,
                        },
                    ));
                }
            }
        }
    }
    let (margin, worst) = best.expect("problems have boundary components");
    ScanResult { margin, worst, samples }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCounts {
    pub condition_i: usize,
    pub condition_ii: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub verdict: bool,
    pub min_symbol_modulus: f64,
    pub min_lopatinskii_sigma: f64,
    pub worst_points: Vec<WorstPoint>,
    pub samples_used: SampleCounts,
    pub tolerances: Tolerances,
}

pub fn check_parameter_ellipticity(p: &BVProblem, angle: &Angle, config: &ScanConfig) -> EllipticityReport {
    let i = condition_i_scan(p, angle, config);
    let ii = condition_ii_scan(p, angle, config);
    let tol = config.tolerances;
    EllipticityReport {
        verdict: i.margin > tol.tol_a && ii.margin > tol.tol_b,
        min_symbol_modulus: i.margin,
        min_lopatinskii_sigma: ii.margin,
        worst_points: vec![i.worst, ii.worst],
        samples_used: SampleCounts { condition_i: i.samples, condition_ii: ii.samples },
        tolerances: tol,
    }
}

/// `l = max{0, m_j − 2q + 1/2}`.
pub fn smoothness_threshold(p: &BVProblem) -> f64 {
    let two_q = 2.0 * p.q as f64;
    p.boundary
        .iter()
        .flat_map(|c| c.orders())
        .map(|m| m as f64 - two_q + 0.5)
        .fold(0.0, f64::max)
}

/// `σ₀(φ) > l`.
pub fn admissible_phi(p: &BVProblem, phi: &ROFunction) -> bool {
    matuszewska(phi, &MatuszewskaConfig::default()).map_or(false, |ix| ix.sigma0 > smoothness_threshold(p))
}
