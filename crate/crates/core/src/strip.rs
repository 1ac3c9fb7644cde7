//! Constant-coefficient problems on the periodic strip `Ω = 𝕋¹ × (0, 1)`.
//!
//! A tangential mode `e^{−ik x₁}` turns `D₁ = i∂₁` into multiplication by
//! `k`, leaving a boundary-value problem in `x₂` for every `k`. It is
//! discretized by Chebyshev collocation: unknowns are values at `N`
//! Chebyshev–Lobatto points, the interior equation is imposed at the
//! `N − 2q` first-kind Chebyshev points and the `2q` boundary conditions
//! close the square system.
//!
//! Norms of the weighted operator:
//! * unknowns in `‖·‖_{α,p}` with `α = φϱ^{2q}`, `p = |λ|`;
//! * interior data in `‖·‖_{φ,p}`;
//! * boundary data on the circles with the exact spectral weights
//!   `(β²(⟨k⟩) + β²(p))^{1/2}`, `β = φϱ^{2q−m_j−1/2}`.
//!
//! The interval part of the interior norms is realized by one of two
//! [`NormalProxy`] constructions.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interpolation::InterpError;
use crate::rofunc::{make_interp_param, matuszewska, MatuszewskaConfig, PositiveFunction, ROFunction, RoError};
use crate::symbols::{smoothness_threshold, Angle, BVProblem, DiffExpression};

#[derive(Debug, Error)]
pub enum StripError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("problem not supported on the strip: {0}")]
    Unsupported(String),
    #[error("smoothness parameter is not admissible: σ₀ = {sigma0} < l = {threshold}")]
    Inadmissible { sigma0: f64, threshold: f64 },
    #[error("|λ| = {0} must be at least 1")]
    SmallLambda(f64),
    #[error("mode k = {k} is singular at λ = {lambda}")]
    SingularMode { k: i64, lambda: Complex64 },
    #[error("resonance search did not converge from λ = {0}")]
    NoConvergence(Complex64),
    #[error("mode data: {0}")]
    Data(String),
    #[error(transparent)]
    Ro(#[from] RoError),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

pub type Result<T> = std::result::Result<T, StripError>;

type C64 = Complex64;
type CMatrix = DMatrix<C64>;
type RMatrix = DMatrix<f64>;

fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn bracket(k: i64) -> f64 {
    (1.0 + (k * k) as f64).sqrt()
}

/// Mode cutoff and normal resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripGeometry {
    /// Modes `k ∈ [−kmax+1, kmax]`.
    pub kmax: usize,
    /// Collocation points in the normal direction.
    pub n: usize,
}

impl StripGeometry {
    pub fn new(kmax: usize, n: usize) -> Result<Self> {
        if kmax == 0 || n < 8 {
            return Err(StripError::Geometry(format!("need kmax ≥ 1 and N ≥ 8 (got {kmax}, {n})")));
        }
        Ok(Self { kmax, n })
    }

    pub fn modes(&self) -> impl Iterator<Item = i64> + Clone {
        let k = self.kmax as i64;
        -k + 1..=k
    }

    pub fn id(&self) -> String {
        format!("{}x{}", self.kmax, self.n)
    }

    fn check(&self, q: u32) -> Result<()> {
        if self.n < 4 * q as usize + 4 {
            return Err(StripError::Geometry(format!("N = {} below 4q + 4 = {}", self.n, 4 * q + 4)));
        }
        Ok(())
    }
}

/// Chebyshev points `x = sin²(θ/2)` on `[0, 1]` with barycentric weights.
#[derive(Debug, Clone)]
struct NodeSet {
    theta: Vec<f64>,
    x: Vec<f64>,
    w: Vec<f64>,
}

impl NodeSet {
    fn lobatto(n: usize) -> Self {
        let theta: Vec<f64> = (0..n).map(|j| std::f64::consts::PI * j as f64 / (n - 1) as f64).collect();
        let w = (0..n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Self::from_theta(theta, w)
    }

    fn first_kind(m: usize) -> Self {
        let theta: Vec<f64> = (0..m)
            .map(|i| std::f64::consts::PI * (2 * i + 1) as f64 / (2 * m) as f64)
            .collect();
        let w = theta
            .iter()
            .enumerate()
            .map(|(i, t)| if i % 2 == 0 { t.sin() } else { -t.sin() })
            .collect();
        Self::from_theta(theta, w)
    }

    fn from_theta(theta: Vec<f64>, w: Vec<f64>) -> Self {
        let x = theta.iter().map(|t| (t / 2.0).sin().powi(2)).collect();
        Self { theta, x, w }
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    /// `x(a) − x(b)` without cancellation.
    fn gap(a: f64, b: f64) -> f64 {
        ((a + b) / 2.0).sin() * ((a - b) / 2.0).sin()
    }

    fn differentiation(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i != j {
                    let v = self.w[j] / self.w[i] / Self::gap(self.theta[i], self.theta[j]);
                    d[(i, j)] = v;
                    diag -= v;
                }
            }
            d[(i, i)] = diag;
        }
        d
    }

    /// Barycentric interpolation from these nodes to `target`.
    fn interpolation_to(&self, target: &NodeSet) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(target.len(), self.len());
        for (i, &t) in target.theta.iter().enumerate() {
            if let Some(j) = self.theta.iter().position(|&s| Self::gap(t, s).abs() < 1e-15) {
                p[(i, j)] = 1.0;
                continue;
            }
            let terms: Vec<f64> = self
                .theta
                .iter()
                .zip(&self.w)
                .map(|(&s, w)| w / Self::gap(t, s))
                .collect();
            let sum: f64 = terms.iter().sum();
            for (j, v) in terms.into_iter().enumerate() {
                p[(i, j)] = v / sum;
            }
        }
        p
    }

    /// `V[j, n] = √(2n+1) P_n(2x_j − 1)`, orthonormal Legendre polynomials on `[0, 1]`.
    fn legendre_vandermonde(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut v = DMatrix::zeros(n, n);
        for (j, &x) in self.x.iter().enumerate() {
            let t = 2.0 * x - 1.0;
            let (mut p0, mut p1) = (1.0, t);
            for k in 0..n {
                let pk = if k == 0 {
                    1.0
                } else if k == 1 {
                    t
                } else {
                    let next = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = next;
                    next
                };
                v[(j, k)] = ((2 * k + 1) as f64).sqrt() * pk;
            }
        }
        v
    }
}

/// Nodal differentiation and exact `L₂(0,1)` factor of the interpolant.
#[derive(Debug, Clone)]
struct NodalSpace {
    nodes: NodeSet,
    d: RMatrix,
    /// Legendre Vandermonde `V`.
    v: RMatrix,
    /// `E = V⁻¹`; `|E u|` is the `L₂` norm of the interpolant of `u`.
    e: RMatrix,
    /// `E D^j`, `j = 0, 1, …`
    ed: Vec<RMatrix>,
}

impl NodalSpace {
    fn new(nodes: NodeSet) -> Self {
        let d = nodes.differentiation();
        let v = nodes.legendre_vandermonde();
        let e = v.clone().try_inverse().expect("Legendre Vandermonde at Chebyshev points is invertible");
        let mut ed = vec![e.clone()];
        let mut dj = RMatrix::identity(d.nrows(), d.nrows());
        for _ in 0..4 {
            dj = &d * dj;
            ed.push(&e * &dj);
        }
        Self { nodes, d, v, e, ed }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn derivative_factor(&self, j: usize) -> RMatrix {
        match self.ed.get(j) {
            Some(m) => m.clone(),
            None => {
                let mut m = self.ed.last().unwrap().clone();
                for _ in self.ed.len() - 1..j {
                    m = m * &self.d;
                }
                m
            }
        }
    }

    /// `R_s` with `|R_s u|² = Σ_j C(s,j) ⟨k⟩^{2(s−j)} ‖D^j u‖² + p^{2s} ‖u‖²`.
    fn sobolev_factor(&self, s: usize, kb: f64, p: f64) -> RMatrix {
        let n = self.len();
        let mut stacked = RMatrix::zeros((s + 2) * n, n);
        let mut binom: f64 = 1.0;
        for j in 0..=s {
            let scale = binom.sqrt() * kb.powi((s - j) as i32);
            stacked.view_mut((j * n, 0), (n, n)).copy_from(&(self.derivative_factor(j) * scale));
            binom = binom * (s - j) as f64 / (j + 1) as f64;
        }
        stacked.view_mut(((s + 1) * n, 0), (n, n)).copy_from(&(&self.e * p.powi(s as i32)));
        stacked.qr().r()
    }

    /// Eigenpairs of the `H¹` seminorm Gram matrix in Legendre coordinates.
    fn neumann_spectrum(&self) -> NormalSpectrum {
        let dc = &self.e * &self.d * &self.v;
        let s = dc.transpose() * &dc;
        let s = (&s + s.transpose()) * 0.5;
        let eig = s.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let eigenvalues: Vec<f64> = order
            .iter()
            .map(|&i| {
                let v = eig.eigenvalues[i];
                if v.abs() <= 1e-12 * top {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let basis = DMatrix::from_fn(self.len(), self.len(), |r, c| eig.eigenvectors[(r, order[c])]);
        let nodal = &self.v * &basis;
        NormalSpectrum { eigenvalues, basis, nodal }
    }
}

/// Eigen-decomposition of the Neumann-type operator `−d²/dx₂²` on the
/// collocation polynomials.
#[derive(Debug, Clone)]
pub struct NormalSpectrum {
    /// `μ₀ = 0 ≤ μ₁ ≤ …`
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors in Legendre coordinates.
    pub basis: DMatrix<f64>,
    /// The same eigenvectors as nodal values.
    pub nodal: DMatrix<f64>,
}

pub fn normal_spectrum_basis(n: usize) -> NormalSpectrum {
    NodalSpace::new(NodeSet::lobatto(n.max(4))).neumann_spectrum()
}

/// How the `x₂`-part of the interior norms is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormalProxy {
    /// Exact integer-order Sobolev norms with the parameter weight, combined
    /// by interpolation with the parameter built from `α`.
    #[default]
    SobolevInterpolated,
    /// Diagonal weights `(α²(Λ) + α²(p))^{1/2}`, `Λ² = ⟨k⟩² + μ_m`, in the
    /// Neumann eigenbasis.
    NeumannSpectral,
}

/// `(α²(Λ) + α²(p))^{1/2}` with `Λ = (⟨k⟩² + μ)^{1/2}`.
pub fn neumann_weight(alpha: &ROFunction, k: i64, mu: f64, p: f64) -> f64 {
    let lam = (bracket(k).powi(2) + mu).sqrt();
    (alpha.value(lam).powi(2) + alpha.value(p).powi(2)).sqrt()
}

/// `(β²(⟨k⟩) + β²(p))^{1/2}`.
pub fn boundary_weight(beta: &ROFunction, k: i64, p: f64) -> f64 {
    (beta.value(bracket(k)).powi(2) + beta.value(p).powi(2)).sqrt()
}

/// Integer orders `s0 < s1` around the estimated indices of `α`, or a
/// single order when `α` is an integer power.
fn sobolev_orders(alpha: &ROFunction) -> Result<(usize, Option<usize>)> {
    if let Some(s) = alpha.as_power() {
        if s >= 0.0 && s.fract() == 0.0 {
            return Ok((s as usize, None));
        }
        let s0 = s.floor().max(0.0);
        return Ok((s0 as usize, Some(s0 as usize + 1)));
    }
    let idx = matuszewska(alpha, &MatuszewskaConfig::default())?;
    let s0 = (idx.sigma0.ceil() - 1.0).max(0.0);
    let s1 = (idx.sigma1.floor() + 1.0).max(s0 + 1.0);
    Ok((s0 as usize, Some(s1 as usize)))
}

/// Norm factor `F` and its inverse: `‖u‖ = |F u|`.
#[derive(Debug, Clone)]
struct Factor {
    f: RMatrix,
    inv: RMatrix,
}

fn upper_inverse(r: &RMatrix) -> Result<RMatrix> {
    r.solve_upper_triangular(&RMatrix::identity(r.nrows(), r.nrows()))
        .ok_or_else(|| StripError::Geometry("singular norm factor".into()))
}

/// `[R_{s0}, R_{s1}]` interpolated with `ψ`: with `R_{s1} R_{s0}⁻¹ = U Σ Vᵀ`,
/// `F = ψ(Σ) Vᵀ R_{s0}`.
fn interpolated_factor(r0: &RMatrix, r1: &RMatrix, psi: &impl PositiveFunction) -> Result<Factor> {
    let r0_inv = upper_inverse(r0)?;
    let svd = (r1 * &r0_inv).svd(false, true);
    let vt = svd.v_t.expect("requested");
    let vals: Vec<f64> = svd.singular_values.iter().map(|&t| psi.value(t)).collect();
    if let Some(v) = vals.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(StripError::Interp(InterpError::NotEvaluable(*v)));
    }
    let mut f = &vt * r0;
    for (mut row, v) in f.row_iter_mut().zip(&vals) {
        row *= *v;
    }
    let mut inv = r0_inv * vt.transpose();
    for (mut col, v) in inv.column_iter_mut().zip(&vals) {
        col /= *v;
    }
    Ok(Factor { f, inv })
}

/// `α` with the Sobolev orders used to realize it.
#[derive(Debug, Clone)]
struct Realized {
    alpha: ROFunction,
    orders: (usize, Option<usize>),
}

impl Realized {
    fn new(alpha: ROFunction) -> Result<Self> {
        let orders = sobolev_orders(&alpha)?;
        Ok(Self { alpha, orders })
    }
}

fn interior_factor(space: &NodalSpace, alpha: &Realized, k: i64, p: f64, proxy: NormalProxy, spectrum: &NormalSpectrum) -> Result<Factor> {
    let kb = bracket(k);
    match proxy {
        NormalProxy::SobolevInterpolated => match alpha.orders {
            (s, None) => {
                let r = space.sobolev_factor(s, kb, p);
                let inv = upper_inverse(&r)?;
                Ok(Factor { f: r, inv })
            }
            (s0, Some(s1)) => {
                let psi = make_interp_param(alpha.alpha.clone(), s0 as f64, s1 as f64)?;
                interpolated_factor(&space.sobolev_factor(s0, kb, p), &space.sobolev_factor(s1, kb, p), &psi)
            }
        },
        NormalProxy::NeumannSpectral => {
            let w: Vec<f64> = spectrum.eigenvalues.iter().map(|&mu| neumann_weight(&alpha.alpha, k, mu, p)).collect();
            let mut f = spectrum.basis.transpose() * &space.e;
            for (mut row, wi) in f.row_iter_mut().zip(&w) {
                row *= *wi;
            }
            let mut inv = &space.v * &spectrum.basis;
            for (mut col, wi) in inv.column_iter_mut().zip(&w) {
                col /= *wi;
            }
            Ok(Factor { f, inv })
        }
    }
}

/// Precomputed collocation data for a problem of order `2q`.
#[derive(Debug, Clone)]
pub struct Collocation {
    q: usize,
    lobatto: NodalSpace,
    interior: NodalSpace,
    /// Interpolation from Lobatto values to the first-kind points.
    interp: CMatrix,
    /// `(iD)^j` on the Lobatto points.
    d_powers: Vec<CMatrix>,
    lobatto_spectrum: NormalSpectrum,
    interior_spectrum: NormalSpectrum,
}

impl Collocation {
    pub fn new(n: usize, q: u32, max_order: usize) -> Self {
        let q = q as usize;
        let lobatto = NodalSpace::new(NodeSet::lobatto(n));
        let interior = NodalSpace::new(NodeSet::first_kind(n - 2 * q));
        let interp = lobatto.nodes.interpolation_to(&interior.nodes).map(cr);
        let id = lobatto.d.map(|v| C64::new(0.0, v));
        let mut d_powers = vec![CMatrix::identity(n, n)];
        for j in 0..max_order {
            d_powers.push(&id * &d_powers[j]);
        }
        let lobatto_spectrum = lobatto.neumann_spectrum();
        let interior_spectrum = interior.neumann_spectrum();
        Self { q, lobatto, interior, interp, d_powers, lobatto_spectrum, interior_spectrum }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.lobatto.nodes.x
    }

    /// Points where the interior equation is imposed.
    pub fn interior_nodes(&self) -> &[f64] {
        &self.interior.nodes.x
    }

    pub fn n(&self) -> usize {
        self.lobatto.len()
    }
}

/// Rows of one tangential mode, split by powers of `λ`:
/// `T(λ) = Σ_e λ^e parts[e]`. Interior rows first, then one row per
/// boundary operator, bottom before top.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub k: i64,
    pub parts: Vec<CMatrix>,
    pub interior_rows: usize,
}

impl ModeOperator {
    pub fn at(&self, lambda: C64) -> CMatrix {
        let mut out = CMatrix::zeros(self.parts[0].nrows(), self.parts[0].ncols());
        let mut pw = cr(1.0);
        for part in &self.parts {
            out += part * pw;
            pw *= lambda;
        }
        out
    }

    /// `dT/dλ`.
    pub fn derivative(&self, lambda: C64) -> CMatrix {
        let mut out = CMatrix::zeros(self.parts[0].nrows(), self.parts[0].ncols());
        let mut pw = cr(1.0);
        for (e, part) in self.parts.iter().enumerate().skip(1) {
            out += part * (pw * e as f64);
            pw *= lambda;
        }
        out
    }
}

fn constant_terms(expr: &DiffExpression) -> Result<Vec<(u32, [u32; 2], C64)>> {
    expr.terms
        .iter()
        .map(|t| {
            let c = t
                .coeff
                .as_const()
                .ok_or_else(|| StripError::Unsupported("variable coefficients".into()))?;
            Ok((expr.order - t.r, [t.mu.0[0], t.mu.0[1]], c))
        })
        .collect()
}

/// Boundary components ordered bottom (`ν = +e₂`) then top (`ν = −e₂`).
fn strip_components(p: &BVProblem) -> Result<Vec<(usize, &crate::symbols::BoundaryComponent)>> {
    if p.dim != 2 {
        return Err(StripError::Unsupported(format!("dimension {} (the strip is two-dimensional)", p.dim)));
    }
    let find = |nu2: f64| p.boundary.iter().find(|c| c.normal == [0.0, nu2]);
    match (find(1.0), find(-1.0), p.boundary.len()) {
        (Some(b), Some(t), 2) => Ok(vec![(0, b), (usize::MAX, t)]),
        _ => Err(StripError::Unsupported("need exactly two components with normals +e₂ and −e₂".into())),
    }
}

fn max_normal_order(p: &BVProblem) -> usize {
    p.boundary
        .iter()
        .flat_map(|c| &c.ops)
        .chain(std::iter::once(&p.interior))
        .flat_map(|e| e.terms.iter().map(|t| t.mu.0.get(1).copied().unwrap_or(0) as usize))
        .max()
        .unwrap_or(0)
}

fn max_lambda_power(p: &BVProblem) -> usize {
    p.boundary
        .iter()
        .flat_map(|c| c.ops.iter().map(|o| o.order as usize))
        .chain(std::iter::once(p.interior.order as usize))
        .max()
        .unwrap_or(0)
}

/// Collocation data sized for `p` on `geometry`.
pub fn collocation_for(p: &BVProblem, geometry: &StripGeometry) -> Result<Collocation> {
    geometry.check(p.q)?;
    strip_components(p)?;
    Ok(Collocation::new(geometry.n, p.q, max_normal_order(p)))
}

pub fn assemble_mode(p: &BVProblem, k: i64, colloc: &Collocation) -> Result<ModeOperator> {
    let n = colloc.n();
    let m = n - 2 * colloc.q;
    let kc = cr(k as f64);
    let interior = constant_terms(&p.interior)?;
    let mut parts = vec![CMatrix::zeros(n, n); max_lambda_power(p) + 1];
    let line = |terms: &[(u32, [u32; 2], C64)], parts: &mut Vec<CMatrix>| -> Vec<CMatrix> {
        let mut by_power = vec![CMatrix::zeros(n, n); parts.len()];
        for &(e, [a, b], c) in terms {
            by_power[e as usize] += &colloc.d_powers[b as usize] * (c * kc.powu(a));
        }
        by_power
    };
    for (e, a) in line(&interior, &mut parts).into_iter().enumerate() {
        parts[e].view_mut((0, 0), (m, n)).copy_from(&(&colloc.interp * a));
    }
    let mut row = m;
    for (node, comp) in strip_components(p)? {
        let node = if node == 0 { 0 } else { n - 1 };
        for op in &comp.ops {
            let terms = constant_terms(op)?;
            for (e, b) in line(&terms, &mut parts).into_iter().enumerate() {
                parts[e].row_mut(row).copy_from(&b.row(node));
            }
            row += 1;
        }
    }
    Ok(ModeOperator { k, parts, interior_rows: m })
}

/// Weighted block `blockdiag(F_f, W_g) · T_k(λ) · F_u⁻¹` of one mode.
#[derive(Debug, Clone)]
pub struct WeightedMode {
    pub k: i64,
    pub matrix: CMatrix,
}

/// Validated weighting data for one `(φ, problem)` pair.
#[derive(Debug, Clone)]
pub struct NormWeighting {
    pub proxy: NormalProxy,
    /// `φϱ^{2q}`
    lhs: Realized,
    /// `φ`
    rhs: Realized,
    /// `φϱ^{2q−m_j−1/2}`, one per boundary row.
    pub boundary: Vec<ROFunction>,
}

fn mixed_product(left: &RMatrix, t: &CMatrix, right: &RMatrix) -> CMatrix {
    let re = left * t.map(|z| z.re) * right;
    let im = left * t.map(|z| z.im) * right;
    CMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

impl NormWeighting {
    /// Accepts `σ₀(φ) ≥ l` up to `1e−9`, so that `φ ≡ 1` is usable for
    /// problems with `l = 0`.
    pub fn new(p: &BVProblem, phi: &ROFunction, proxy: NormalProxy) -> Result<Self> {
        let threshold = smoothness_threshold(p);
        let sigma0 = phi_lower_index(phi)?;
        if sigma0 < threshold - 1e-9 {
            return Err(StripError::Inadmissible { sigma0, threshold });
        }
        let two_q = 2.0 * p.q as f64;
        let boundary = strip_components(p)?
            .iter()
            .flat_map(|(_, c)| c.ops.iter().map(|o| phi.with_power_shift(two_q - o.order as f64 - 0.5)))
            .collect();
        Ok(Self {
            proxy,
            lhs: Realized::new(phi.with_power_shift(two_q))?,
            rhs: Realized::new(phi.clone())?,
            boundary,
        })
    }

    /// `φϱ^{2q}`, the weight of the unknowns.
    pub fn lhs_alpha(&self) -> &ROFunction {
        &self.lhs.alpha
    }

    fn factors(&self, colloc: &Collocation, k: i64, p: f64) -> Result<(Factor, RMatrix)> {
        let lhs = interior_factor(&colloc.lobatto, &self.lhs, k, p, self.proxy, &colloc.lobatto_spectrum)?;
        let rhs = interior_factor(&colloc.interior, &self.rhs, k, p, self.proxy, &colloc.interior_spectrum)?;
        let m = rhs.f.nrows();
        let nb = self.boundary.len();
        let mut out = RMatrix::zeros(m + nb, m + nb);
        out.view_mut((0, 0), (m, m)).copy_from(&rhs.f);
        for (j, beta) in self.boundary.iter().enumerate() {
            out[(m + j, m + j)] = boundary_weight(beta, k, p);
        }
        Ok((lhs, out))
    }

    pub fn weighted_mode(&self, op: &ModeOperator, colloc: &Collocation, lambda: C64) -> Result<WeightedMode> {
        let (lhs, rhs) = self.factors(colloc, op.k, lambda.norm())?;
        Ok(WeightedMode { k: op.k, matrix: mixed_product(&rhs, &op.at(lambda), &lhs.inv) })
    }
}

/// All weighted mode blocks at one `λ`.
pub fn weighted_operator(
    p: &BVProblem,
    lambda: C64,
    phi: &ROFunction,
    geometry: &StripGeometry,
    proxy: NormalProxy,
) -> Result<Vec<WeightedMode>> {
    if lambda.norm() < 1.0 {
        return Err(StripError::SmallLambda(lambda.norm()));
    }
    let weights = NormWeighting::new(p, phi, proxy)?;
    let colloc = collocation_for(p, geometry)?;
    geometry
        .modes()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| weights.weighted_mode(&assemble_mode(p, k, &colloc)?, &colloc, lambda))
        .collect()
}

/// Rows scaled to unit maximum modulus; rank-revealing without the
/// `N^{2q}` spread between interior and boundary rows.
fn equilibrated(t: &CMatrix) -> CMatrix {
    let mut out = t.clone();
    for mut row in out.row_iter_mut() {
        let m = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if m > 0.0 {
            row /= cr(m);
        }
    }
    out
}

fn extreme_singular_values(m: &CMatrix) -> (f64, f64) {
    let sv = m.clone().singular_values();
    (sv.min(), sv.max())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda_abs: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub problem_id: String,
    pub phi_id: String,
    pub arg: f64,
    pub kmax: usize,
    pub n_normal: usize,
    pub proxy: NormalProxy,
    pub rows: Vec<ScanRow>,
}

impl ScanResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda_abs,arg,sigma_min,sigma_max,kmax,n_normal,phi_id\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.12e},{:.12e},{},{},{}",
                r.lambda_abs, self.arg, r.sigma_min, r.sigma_max, self.kmax, self.n_normal, self.phi_id
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scan results serialize")
    }

    /// Log-log plot of both extreme singular values against `|λ|`.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 50.0);
        let xs: Vec<f64> = self.rows.iter().map(|r| r.lambda_abs.log10()).collect();
        let ys: Vec<f64> = self
            .rows
            .iter()
            .flat_map(|r| [r.sigma_min.max(1e-300).log10(), r.sigma_max.max(1e-300).log10()])
            .collect();
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(&xs);
        let (y0, y1) = span(&ys);
        let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(s, r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - 2.0 * pad, h - 2.0 * pad);
        for (name, color, pick) in [
            ("sigma_min", "#1f77b4", 0usize),
            ("sigma_max", "#d62728", 1usize),
        ] {
            let pts: Vec<String> = self
                .rows
                .iter()
                .zip(&xs)
                .map(|(r, &x)| {
                    let v = if pick == 0 { r.sigma_min } else { r.sigma_max };
                    format!("{:.2},{:.2}", px(x), py(v.max(1e-300).log10()))
                })
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"><title>{name}</title></polyline>"#, pts.join(" "));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">log10 |lambda| [{x0:.2}, {x1:.2}]</text>"#, w / 2.0, h - 15.0);
        let _ = writeln!(s, r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">log10 sigma [{y0:.2}, {y1:.2}]</text>"#, h / 2.0, h / 2.0);
        let _ = writeln!(s, r#"<text x="{pad}" y="30" font-size="13">{} {} arg={:.4} grid {}x{}</text>"#, self.problem_id, self.phi_id, self.arg, self.kmax, self.n_normal);
        s.push_str("</svg>\n");
        s
    }
}

/// Extreme singular values of the weighted operator along a ray.
pub fn estimate_scan(
    p: &BVProblem,
    phi: &ROFunction,
    ray: &Angle,
    lambdas: &[f64],
    geometry: &StripGeometry,
    proxy: NormalProxy,
) -> Result<ScanResult> {
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 1.0)) {
        return Err(StripError::SmallLambda(*l));
    }
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(StripError::Data("lambda magnitudes must be sorted".into()));
    }
    let weights = NormWeighting::new(p, phi, proxy)?;
    let colloc = collocation_for(p, geometry)?;
    let ops: Vec<ModeOperator> = geometry
        .modes()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| assemble_mode(p, k, &colloc))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..lambdas.len()).flat_map(|i| (0..ops.len()).map(move |j| (i, j))).collect();
    let ext: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let lambda = C64::from_polar(lambdas[i], ray.arg_lo);
            let wm = weights.weighted_mode(&ops[j], &colloc, lambda)?;
            Ok(extreme_singular_values(&wm.matrix))
        })
        .collect::<Result<_>>()?;
    let rows = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let block = &ext[i * ops.len()..(i + 1) * ops.len()];
            ScanRow {
                lambda_abs: l,
                sigma_min: block.iter().map(|e| e.0).fold(f64::INFINITY, f64::min),
                sigma_max: block.iter().map(|e| e.1).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(ScanResult {
        problem_id: "problem".into(),
        phi_id: phi.id(),
        arg: ray.arg_lo,
        kmax: geometry.kmax,
        n_normal: geometry.n,
        proxy,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FredholmReport {
    pub lambda: [f64; 2],
    pub dim_ker: usize,
    pub dim_coker: usize,
    /// Modes contributing to the kernel.
    pub modes: Vec<i64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

/// Numerical kernel and cokernel dimensions of the unweighted `T(λ)`:
/// singular values of `T` and `T*` below `1e−8·σ_max`, after scaling every
/// row to unit maximum modulus.
pub fn fredholm_probe(p: &BVProblem, lambda: C64, geometry: &StripGeometry) -> Result<FredholmReport> {
    let colloc = collocation_for(p, geometry)?;
    let per_mode: Vec<(i64, Vec<f64>, Vec<f64>)> = geometry
        .modes()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| {
            let t = equilibrated(&assemble_mode(p, k, &colloc)?.at(lambda));
            let sv: Vec<f64> = t.clone().singular_values().iter().copied().collect();
            let sv_adj: Vec<f64> = t.adjoint().singular_values().iter().copied().collect();
            Ok((k, sv, sv_adj))
        })
        .collect::<Result<_>>()?;
    let sigma_max = per_mode.iter().flat_map(|m| m.1.iter().copied()).fold(0.0, f64::max);
    let sigma_min = per_mode.iter().flat_map(|m| m.1.iter().copied()).fold(f64::INFINITY, f64::min);
    let cut = 1e-8 * sigma_max;
    let mut dim_ker = 0;
    let mut dim_coker = 0;
    let mut modes = Vec::new();
    for (k, sv, sv_adj) in &per_mode {
        let dk = sv.iter().filter(|s| **s < cut).count();
        dim_coker += sv_adj.iter().filter(|s| **s < cut).count();
        if dk > 0 {
            modes.push(*k);
        }
        dim_ker += dk;
    }
    Ok(FredholmReport { lambda: [lambda.re, lambda.im], dim_ker, dim_coker, modes, sigma_min, sigma_max })
}

/// Newton iteration on `log det T_k(λ)`: `λ ← λ − 1/tr(T⁻¹ T')`.
pub fn find_resonance(p: &BVProblem, k: i64, start: C64, geometry: &StripGeometry) -> Result<C64> {
    let colloc = collocation_for(p, geometry)?;
    let op = assemble_mode(p, k, &colloc)?;
    let mut lambda = start;
    for _ in 0..60 {
        let lu = op.at(lambda).lu();
        let Some(x) = lu.solve(&op.derivative(lambda)) else {
            return Ok(lambda);
        };
        let step = cr(1.0) / x.trace();
        if !step.is_finite() {
            return Err(StripError::NoConvergence(start));
        }
        lambda -= step;
        if step.norm() <= 1e-14 * lambda.norm().max(1.0) {
            return Ok(lambda);
        }
    }
    Err(StripError::NoConvergence(start))
}

/// Data for one tangential mode: `f` at [`Collocation::interior_nodes`],
/// `g` one value per boundary operator, bottom before top.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeData {
    pub k: i64,
    pub f: Vec<C64>,
    pub g: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripSolution {
    /// Values at [`Collocation::nodes`] per mode.
    pub modes: Vec<(i64, Vec<C64>)>,
    /// `|T u − b| / |b|` for the stacked system.
    pub residual: f64,
}

pub fn solve(p: &BVProblem, lambda: C64, data: &[ModeData], geometry: &StripGeometry) -> Result<StripSolution> {
    let colloc = collocation_for(p, geometry)?;
    let n = colloc.n();
    let m = n - 2 * colloc.q;
    let results: Vec<(i64, Vec<C64>, f64, f64)> = data
        .par_iter()
        .map(|d| {
            if d.f.len() != m || d.g.len() != 2 * colloc.q {
                return Err(StripError::Data(format!(
                    "mode {} needs {m} interior and {} boundary values",
                    d.k,
                    2 * colloc.q
                )));
            }
            let t = assemble_mode(p, d.k, &colloc)?.at(lambda);
            let (smin, smax) = extreme_singular_values(&equilibrated(&t));
            if smin < 1e-8 * smax {
                return Err(StripError::SingularMode { k: d.k, lambda });
            }
            let b = DVector::from_iterator(n, d.f.iter().chain(&d.g).copied());
            let u = t.clone().lu().solve(&b).ok_or(StripError::SingularMode { k: d.k, lambda })?;
            let r = (&t * &u - &b).norm_squared();
            Ok((d.k, u.iter().copied().collect(), r, b.norm_squared()))
        })
        .collect::<Result<_>>()?;
    let (res, norm) = results.iter().fold((0.0, 0.0), |a, r| (a.0 + r.2, a.1 + r.3));
    Ok(StripSolution {
        residual: if norm > 0.0 { (res / norm).sqrt() } else { res.sqrt() },
        modes: results.into_iter().map(|r| (r.0, r.1)).collect(),
    })
}

/// `σ₀(φ)`: exact for powers, estimated otherwise.
pub fn phi_lower_index(phi: &ROFunction) -> Result<f64> {
    Ok(match phi.as_power() {
        Some(s) => s,
        None => matuszewska(phi, &MatuszewskaConfig::default())?.sigma0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn dirichlet() -> BVProblem {
        BVProblem::helmholtz_dirichlet()
    }

    #[test]
    fn differentiation_is_exact_on_polynomials() {
        let s = NodalSpace::new(NodeSet::lobatto(16));
        let u: Vec<f64> = s.nodes.x.iter().map(|x| x.powi(5) - 2.0 * x * x).collect();
        let du = &s.d * DVector::from_vec(u);
        for (x, d) in s.nodes.x.iter().zip(du.iter()) {
            assert_relative_eq!(*d, 5.0 * x.powi(4) - 4.0 * x, epsilon = 1e-11);
        }
        let f = NodalSpace::new(NodeSet::first_kind(12));
        let u: Vec<f64> = f.nodes.x.iter().map(|x| x.powi(3)).collect();
        let du = &f.d * DVector::from_vec(u);
        for (x, d) in f.nodes.x.iter().zip(du.iter()) {
            assert_relative_eq!(*d, 3.0 * x * x, epsilon = 1e-11);
        }
    }

    #[test]
    fn legendre_factor_gives_l2_norms() {
        let s = NodalSpace::new(NodeSet::lobatto(20));
        // ∫₀¹ (x³ + 1)² dx = 1/7 + 1/2 + 1
        let u = DVector::from_iterator(20, s.nodes.x.iter().map(|x| x.powi(3) + 1.0));
        assert_relative_eq!((&s.e * u).norm_squared(), 1.0 / 7.0 + 0.5 + 1.0, max_relative = 1e-13);
        let f = NodalSpace::new(NodeSet::first_kind(9));
        let u = DVector::from_iterator(9, f.nodes.x.iter().copied());
        assert_relative_eq!((&f.e * u).norm_squared(), 1.0 / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn sobolev_factor_matches_integrals() {
        let s = NodalSpace::new(NodeSet::lobatto(16));
        let (kb, p): (f64, f64) = (2.0, 3.0);
        // u = x²: ‖u‖² = 1/5, ‖u'‖² = 4/3, ‖u''‖² = 4
        let u = DVector::from_iterator(16, s.nodes.x.iter().map(|x| x * x));
        let want = kb.powi(4) / 5.0 + 2.0 * kb * kb * 4.0 / 3.0 + 4.0 + p.powi(4) / 5.0;
        assert_relative_eq!((s.sobolev_factor(2, kb, p) * u).norm_squared(), want, max_relative = 1e-10);
    }

    #[test]
    fn interpolation_matrix_reproduces_polynomials() {
        let a = NodeSet::lobatto(12);
        let b = NodeSet::first_kind(10);
        let p = a.interpolation_to(&b);
        let u = DVector::from_iterator(12, a.x.iter().map(|x| x.powi(7) - x));
        let pu = p * u;
        for (x, v) in b.x.iter().zip(pu.iter()) {
            assert_relative_eq!(*v, x.powi(7) - x, epsilon = 1e-13);
        }
        let same = a.interpolation_to(&a);
        assert_relative_eq!((same - DMatrix::<f64>::identity(12, 12)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn normal_spectrum_examples() {
        let s = normal_spectrum_basis(24);
        assert_eq!(s.eigenvalues[0], 0.0);
        let c0 = s.nodal.column(0);
        let spread = c0.max() - c0.min();
        assert!(spread < 1e-10, "{spread}");
        let gram = s.basis.transpose() * &s.basis;
        assert!((gram - DMatrix::<f64>::identity(24, 24)).norm() < 1e-12);
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        // the low end approaches the Neumann eigenvalues (mπ)²
        for m in 1..4 {
            assert_relative_eq!(s.eigenvalues[m], (m as f64 * PI).powi(2), max_relative = 1e-6);
        }
    }

    #[test]
    fn weight_examples() {
        let one = ROFunction::power(0.0);
        let alpha = one.with_power_shift(2.0);
        assert_relative_eq!(neumann_weight(&alpha, 0, 0.0, 10.0), (1.0f64 + 1e4).sqrt(), max_relative = 1e-15);
        let lam: f64 = 7.0;
        assert_relative_eq!(
            neumann_weight(&alpha, 3, lam * lam - 10.0, 5.0),
            (lam.powi(4) + 5f64.powi(4)).sqrt(),
            max_relative = 1e-13
        );
        let beta = one.with_power_shift(1.5);
        for k in [0i64, 3, -7] {
            assert_relative_eq!(boundary_weight(&beta, k, 4.0), (bracket(k).powi(3) + 64.0).sqrt(), max_relative = 1e-13);
        }
        let w = NormWeighting::new(&dirichlet(), &one, NormalProxy::NeumannSpectral).unwrap();
        assert_eq!(w.boundary.len(), 2);
        assert_eq!(w.boundary[0].as_power(), Some(1.5));
    }

    #[test]
    fn weights_increase_in_k_and_mu() {
        for alpha in [ROFunction::power(2.0), ROFunction::power_log(2.0, 1.0), ROFunction::oscillating(2.5, 0.2)] {
            for p in [1.0, 30.0] {
                let mut prev = 0.0;
                for k in 0..20 {
                    let w = neumann_weight(&alpha, k, 3.0, p);
                    assert!(w > prev);
                    prev = w;
                }
                let mut prev = 0.0;
                for mu in [0.0, 1.0, 10.0, 100.0, 1e4] {
                    let w = neumann_weight(&alpha, 2, mu, p);
                    assert!(w > prev);
                    prev = w;
                }
            }
        }
        // the interpolated proxy is monotone in ⟨k⟩ on any fixed vector
        let space = NodalSpace::new(NodeSet::lobatto(16));
        let alpha = Realized::new(ROFunction::power_log(2.0, 1.0)).unwrap();
        let spectrum = space.neumann_spectrum();
        let u = DVector::from_iterator(16, space.nodes.x.iter().map(|x| x.sin()));
        let mut prev = 0.0;
        for k in 0..8 {
            let f = interior_factor(&space, &alpha, k, 2.0, NormalProxy::SobolevInterpolated, &spectrum).unwrap();
            let v = (&f.f * &u).norm();
            assert!(v > prev);
            prev = v;
            assert!((&f.f * &f.inv - RMatrix::identity(16, 16)).norm() < 1e-8);
        }
    }

    #[test]
    fn interpolated_factor_agrees_with_factor_couple() {
        use crate::interpolation::{FactorCouple, HilbertCouple};
        let space = NodalSpace::new(NodeSet::lobatto(12));
        let alpha = ROFunction::power_log(1.5, 1.0);
        let (r0, r1) = (space.sobolev_factor(1, 3.0, 2.0), space.sobolev_factor(2, 3.0, 2.0));
        let psi = make_interp_param(alpha, 1.0, 2.0).unwrap();
        let f = interpolated_factor(&r0, &r1, &psi).unwrap();
        let j = FactorCouple::new(r0.map(cr), r1.map(cr)).unwrap().generating_operator().unwrap();
        let u = DVector::from_iterator(12, space.nodes.x.iter().map(|x| (3.0 * x).cos()));
        let want = j.interp_norm(&u.map(cr), &psi).unwrap();
        assert_relative_eq!((&f.f * &u).norm(), want, max_relative = 1e-9);
    }

    #[test]
    fn helmholtz_interior_rows() {
        let g = StripGeometry::new(4, 16).unwrap();
        let p = dirichlet();
        let colloc = collocation_for(&p, &g).unwrap();
        let lambda = C64::new(0.0, 2.0);
        let t = assemble_mode(&p, 0, &colloc).unwrap().at(lambda);
        let u = DVector::from_iterator(16, colloc.nodes().iter().map(|x| cr(x * (1.0 - x))));
        let tu = &t * &u;
        for (i, z) in colloc.interior_nodes().iter().enumerate() {
            let want = lambda * lambda * (z * (1.0 - z)) - 2.0;
            assert!((tu[i] - want).norm() < 1e-10, "{} vs {}", tu[i], want);
        }
        // Dirichlet rows pick u(0) and u(1)
        let m = colloc.interior_nodes().len();
        assert_eq!(t.row(m).iter().filter(|z| z.norm() > 0.0).count(), 1);
        assert_eq!(t[(m, 0)], cr(1.0));
        assert_eq!(t[(m + 1, 15)], cr(1.0));
    }

    #[test]
    fn robin_boundary_rows() {
        let g = StripGeometry::new(4, 16).unwrap();
        let p = BVProblem::helmholtz_robin();
        let colloc = collocation_for(&p, &g).unwrap();
        let lambda = C64::new(0.0, 1.0);
        let t = assemble_mode(&p, 0, &colloc).unwrap().at(lambda);
        let m = colloc.interior_nodes().len();
        let u = DVector::from_iterator(16, colloc.nodes().iter().map(|x| cr(*x)));
        let tu = &t * &u;
        // bottom: ∂₂u − λu = 1 at x₂ = 0; top: −∂₂u − λu = −1 − i at x₂ = 1
        assert!((tu[m] - cr(1.0)).norm() < 1e-12);
        assert!((tu[m + 1] - C64::new(-1.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn block_diagonal_singular_values() {
        let g = StripGeometry::new(2, 10).unwrap();
        let p = dirichlet();
        let blocks = weighted_operator(&p, C64::new(0.0, 3.0), &ROFunction::power(0.0), &g, NormalProxy::default()).unwrap();
        let n = 10;
        let mut full = CMatrix::zeros(n * blocks.len(), n * blocks.len());
        let mut union = Vec::new();
        for (i, b) in blocks.iter().enumerate() {
            full.view_mut((i * n, i * n), (n, n)).copy_from(&b.matrix);
            union.extend(b.matrix.clone().singular_values().iter().copied());
        }
        let mut dense: Vec<f64> = full.singular_values().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        union.sort_by(f64::total_cmp);
        for (a, b) in dense.iter().zip(&union) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn smoke_scan() {
        let g = StripGeometry::new(1, 8).unwrap();
        let r = estimate_scan(&dirichlet(), &ROFunction::power(0.0), &Angle::ray(FRAC_PI_2), &[2.0], &g, NormalProxy::default()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.rows[0].sigma_min > 0.0 && r.rows[0].sigma_min <= r.rows[0].sigma_max);
        assert!(r.to_csv().starts_with("lambda_abs,arg,sigma_min,sigma_max,kmax,n_normal,phi_id\n2,"));
        assert!(r.to_svg().contains("<polyline"));
        let back: ScanResult = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(estimate_scan(&dirichlet(), &ROFunction::power(0.0), &Angle::ray(0.0), &[0.5], &g, NormalProxy::default()).is_err());
    }

    #[test]
    fn inadmissible_phi_is_rejected() {
        let g = StripGeometry::new(2, 10).unwrap();
        let e = weighted_operator(&dirichlet(), C64::new(0.0, 2.0), &ROFunction::power(-0.5), &g, NormalProxy::default());
        assert!(matches!(e, Err(StripError::Inadmissible { .. })));
    }

    #[test]
    fn refinement_stability() {
        let p = dirichlet();
        let phi = ROFunction::power(0.0);
        let lambdas = [8.0];
        let ray = Angle::ray(FRAC_PI_2);
        let a = estimate_scan(&p, &phi, &ray, &lambdas, &StripGeometry::new(8, 32).unwrap(), NormalProxy::default()).unwrap();
        let b = estimate_scan(&p, &phi, &ray, &lambdas, &StripGeometry::new(8, 64).unwrap(), NormalProxy::default()).unwrap();
        let (ra, rb) = (a.rows[0], b.rows[0]);
        assert!((rb.sigma_min / ra.sigma_min - 1.0).abs() < 0.25, "{ra:?} {rb:?}");
        assert!((rb.sigma_max / ra.sigma_max - 1.0).abs() < 0.25, "{ra:?} {rb:?}");
    }

    fn mms_data(colloc: &Collocation, lambda: C64, a: f64) -> Vec<ModeData> {
        // u = e^{−ix₁} x₂^a, so A(λ)u = e^{−ix₁}(a(a−1)x₂^{a−2} + (λ² − 1)x₂^a)
        let f = colloc
            .interior_nodes()
            .iter()
            .map(|z| cr(a * (a - 1.0) * z.powf(a - 2.0)) + (lambda * lambda - 1.0) * z.powf(a))
            .collect();
        vec![ModeData { k: 1, f, g: vec![cr(0.0), cr(1.0)] }]
    }

    fn mms_error(n: usize, a: f64) -> (f64, f64) {
        let p = dirichlet();
        let g = StripGeometry::new(4, n).unwrap();
        let colloc = collocation_for(&p, &g).unwrap();
        let lambda = C64::new(0.0, 2.0);
        let sol = solve(&p, lambda, &mms_data(&colloc, lambda, a), &g).unwrap();
        let u = &sol.modes[0].1;
        let (mut err, mut norm) = (0.0f64, 0.0f64);
        for (x, v) in colloc.nodes().iter().zip(u) {
            err = err.max((v - cr(x.powf(a))).norm());
            norm = norm.max(x.powf(a));
        }
        (err / norm, sol.residual)
    }

    #[test]
    fn manufactured_solutions() {
        let (e, r) = mms_error(64, 2.0);
        assert!(e < 1e-10, "{e}");
        assert!(r < 1e-8, "{r}");
        // x₂^{3/2} is rough enough at x₂ = 0 for truncation error to dominate
        let (e64, _) = mms_error(64, 1.5);
        let (e128, _) = mms_error(128, 1.5);
        assert!(e128 < e64 / 4.0, "{e64} → {e128}");
    }

    #[test]
    fn zero_data_and_linearity() {
        let p = dirichlet();
        let g = StripGeometry::new(4, 16).unwrap();
        let colloc = collocation_for(&p, &g).unwrap();
        let m = colloc.interior_nodes().len();
        let lambda = C64::new(0.0, 2.0);
        let zero = solve(&p, lambda, &[ModeData { k: 2, f: vec![cr(0.0); m], g: vec![cr(0.0); 2] }], &g).unwrap();
        assert!(zero.modes[0].1.iter().all(|v| v.norm() == 0.0));
        let f1: Vec<C64> = colloc.interior_nodes().iter().map(|z| C64::new(z.cos(), 1.0)).collect();
        let f2: Vec<C64> = colloc.interior_nodes().iter().map(|z| C64::new(0.0, z * z)).collect();
        let g1 = vec![cr(1.0), C64::new(0.0, 2.0)];
        let g2 = vec![cr(-3.0), cr(0.5)];
        let s = |f: Vec<C64>, gg: Vec<C64>| solve(&p, lambda, &[ModeData { k: 2, f, g: gg }], &g).unwrap().modes[0].1.clone();
        let a = s(f1.clone(), g1.clone());
        let b = s(f2.clone(), g2.clone());
        let sum = s(
            f1.iter().zip(&f2).map(|(x, y)| x + y).collect(),
            g1.iter().zip(&g2).map(|(x, y)| x + y).collect(),
        );
        for ((x, y), z) in a.iter().zip(&b).zip(&sum) {
            assert!((x + y - z).norm() < 1e-10);
        }
        assert!(solve(&p, lambda, &[ModeData { k: 0, f: vec![], g: vec![] }], &g).is_err());
    }

    #[test]
    fn fredholm_examples() {
        let p = dirichlet();
        let g = StripGeometry::new(4, 24).unwrap();
        let r = fredholm_probe(&p, C64::new(0.0, 2.0), &g).unwrap();
        assert_eq!((r.dim_ker, r.dim_coker), (0, 0));
        let res = find_resonance(&p, 0, cr(3.0), &g).unwrap();
        assert_relative_eq!(res.re, PI, max_relative = 1e-8);
        assert!(res.im.abs() < 1e-8);
        let r = fredholm_probe(&p, res, &g).unwrap();
        assert!(r.dim_ker >= 1);
        assert_eq!(r.dim_ker, r.dim_coker);
        let e = solve(&p, res, &[ModeData { k: 0, f: vec![cr(0.0); 22], g: vec![cr(0.0); 2] }], &g);
        assert!(matches!(e, Err(StripError::SingularMode { k: 0, .. })));
    }
}
