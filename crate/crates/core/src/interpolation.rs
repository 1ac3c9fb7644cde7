//! Interpolation with a function parameter between finite-dimensional
//! Hilbert spaces.
//!
//! For an admissible couple `[X₀, X₁]` the generating operator `J` is the
//! positive operator, self-adjoint in `X₀`, with `‖Ju‖_{X₀} = ‖u‖_{X₁}`. The
//! interpolation norm is `‖u‖_ψ = ‖ψ(J)u‖_{X₀}`; in finite dimensions this is
//! exact spectral calculus on the eigen-decomposition of `J`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rofunc::{make_interp_param, PositiveFunction, ROFunction, RoError};
use crate::spaces::Spectrum;

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("invalid couple: {0}")]
    InvalidCouple(String),
    #[error("matrix is not Hermitian positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("function parameter is not positive and finite at eigenvalue {0}")]
    NotEvaluable(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Ro(#[from] RoError),
}

pub type Result<T> = std::result::Result<T, InterpError>;

type CMatrix = DMatrix<Complex64>;
type CVector = DVector<Complex64>;

fn cr(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Eigen-decomposition of a generating operator.
///
/// `coords` maps `u` to its coefficients in the `X₀`-orthonormal eigenbasis,
/// so `‖u‖_{X₀} = |coords · u|` and `‖ψ(J) u‖_{X₀} = |diag ψ(eigenvalues) · coords · u|`.
#[derive(Debug, Clone)]
pub struct GeneratingOperator {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, orthonormal in `X₀`.
    pub basis: CMatrix,
    pub coords: CMatrix,
}

impl GeneratingOperator {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn psi_values(&self, psi: &impl PositiveFunction) -> Result<Vec<f64>> {
        self.eigenvalues
            .iter()
            .map(|&t| {
                let v = psi.value(t);
                if v.is_finite() && v > 0.0 {
                    Ok(v)
                } else {
                    Err(InterpError::NotEvaluable(t))
                }
            })
            .collect()
    }

    /// `F` with `‖u‖_ψ = |F u|`.
    pub fn norm_factor(&self, psi: &impl PositiveFunction) -> Result<CMatrix> {
        let vals = self.psi_values(psi)?;
        let mut f = self.coords.clone();
        for (mut row, v) in f.row_iter_mut().zip(vals) {
            row *= cr(v);
        }
        Ok(f)
    }

    /// Inverse of [`Self::norm_factor`].
    pub fn inverse_factor(&self, psi: &impl PositiveFunction) -> Result<CMatrix> {
        let vals = self.psi_values(psi)?;
        let mut g = self.basis.clone();
        for (mut col, v) in g.column_iter_mut().zip(vals) {
            col /= cr(v);
        }
        Ok(g)
    }

    /// `J u`.
    pub fn apply(&self, u: &CVector) -> CVector {
        let c = &self.coords * u;
        let scaled = CVector::from_iterator(
            c.len(),
            c.iter().zip(&self.eigenvalues).map(|(x, l)| x * l),
        );
        &self.basis * scaled
    }

    pub fn interp_norm(&self, u: &CVector, psi: &impl PositiveFunction) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(InterpError::Dimension(format!(
                "vector of length {} for a couple of dimension {}",
                u.len(),
                self.dim()
            )));
        }
        let vals = self.psi_values(psi)?;
        let c = &self.coords * u;
        Ok(c.iter().zip(vals).map(|(x, v)| v * v * x.norm_sqr()).sum::<f64>().sqrt())
    }
}

/// A finite-dimensional admissible couple of Hilbert spaces.
pub trait HilbertCouple {
    fn dim(&self) -> usize;
    fn norm0(&self, u: &CVector) -> f64;
    fn norm1(&self, u: &CVector) -> f64;
    fn generating_operator(&self) -> Result<GeneratingOperator>;

    /// `‖ψ(J) u‖_{X₀}`.
    fn interp_norm(&self, u: &CVector, psi: &impl PositiveFunction) -> Result<f64> {
        self.generating_operator()?.interp_norm(u, psi)
    }
}

/// `‖u‖²_{X_j} = Σ_k w_{j,k} |u_k|²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalCouple {
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
}

impl DiagonalCouple {
    pub fn new(w0: Vec<f64>, w1: Vec<f64>) -> Result<Self> {
        if w0.len() != w1.len() {
            return Err(InterpError::InvalidCouple(format!(
                "weight lengths differ ({} vs {})",
                w0.len(),
                w1.len()
            )));
        }
        if w0.iter().chain(&w1).any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(InterpError::InvalidCouple("weights must be positive".into()));
        }
        Ok(Self { w0, w1 })
    }

    /// `‖u‖_{X₀} ≤ ‖u‖_{X₁}` for all `u`.
    pub fn is_normal(&self) -> bool {
        self.w0.iter().zip(&self.w1).all(|(a, b)| a <= b)
    }

    fn weighted(w: &[f64], u: &CVector) -> f64 {
        w.iter().zip(u.iter()).map(|(w, x)| w * x.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl HilbertCouple for DiagonalCouple {
    fn dim(&self) -> usize {
        self.w0.len()
    }

    fn norm0(&self, u: &CVector) -> f64 {
        Self::weighted(&self.w0, u)
    }

    fn norm1(&self, u: &CVector) -> f64 {
        Self::weighted(&self.w1, u)
    }

    fn generating_operator(&self) -> Result<GeneratingOperator> {
        let n = self.dim();
        Ok(GeneratingOperator {
            eigenvalues: self.w0.iter().zip(&self.w1).map(|(a, b)| (b / a).sqrt()).collect(),
            basis: CMatrix::from_diagonal(&CVector::from_iterator(n, self.w0.iter().map(|w| cr(1.0 / w.sqrt())))),
            coords: CMatrix::from_diagonal(&CVector::from_iterator(n, self.w0.iter().map(|w| cr(w.sqrt())))),
        })
    }

    fn interp_norm(&self, u: &CVector, psi: &impl PositiveFunction) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(InterpError::Dimension(format!(
                "vector of length {} for a couple of dimension {}",
                u.len(),
                self.dim()
            )));
        }
        let mut sum = 0.0;
        for ((a, b), x) in self.w0.iter().zip(&self.w1).zip(u.iter()) {
            let t = (b / a).sqrt();
            let v = psi.value(t);
            if !(v.is_finite() && v > 0.0) {
                return Err(InterpError::NotEvaluable(t));
            }
            sum += a * v * v * x.norm_sqr();
        }
        Ok(sum.sqrt())
    }
}

/// `‖u‖²_{X_j} = u* G_j u` with Hermitian positive-definite Gram matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GramCouple {
    pub g0: CMatrix,
    pub g1: CMatrix,
}

fn check_hermitian(m: &CMatrix, name: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(InterpError::InvalidCouple(format!("{name} is not square")));
    }
    let scale = m.iter().map(|x| x.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let asym = (m - m.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max);
    if asym > 1e-12 * scale {
        return Err(InterpError::NotPositiveDefinite(name));
    }
    Ok(())
}

impl GramCouple {
    pub fn new(g0: CMatrix, g1: CMatrix) -> Result<Self> {
        check_hermitian(&g0, "g0")?;
        check_hermitian(&g1, "g1")?;
        if g0.shape() != g1.shape() {
            return Err(InterpError::InvalidCouple("Gram matrices differ in size".into()));
        }
        for (g, name) in [(&g0, "g0"), (&g1, "g1")] {
            if g.nrows() > 0 && !(g.clone().symmetric_eigenvalues().min() > 0.0) {
                return Err(InterpError::NotPositiveDefinite(name));
            }
        }
        Ok(Self { g0, g1 })
    }

    fn quad(g: &CMatrix, u: &CVector) -> f64 {
        (u.adjoint() * g * u)[(0, 0)].re.max(0.0).sqrt()
    }
}

impl HilbertCouple for GramCouple {
    fn dim(&self) -> usize {
        self.g0.nrows()
    }

    fn norm0(&self, u: &CVector) -> f64 {
        Self::quad(&self.g0, u)
    }

    fn norm1(&self, u: &CVector) -> f64 {
        Self::quad(&self.g1, u)
    }

    /// Solves `G₁ v = μ G₀ v` through the Cholesky factor `G₀ = L L*`: the
    /// Hermitian matrix `L⁻¹ G₁ L⁻*` has eigenpairs `(μ, Q)`, the eigenvalues
    /// of `J` are `√μ` and `V = L⁻* Q` is `G₀`-orthonormal.
    fn generating_operator(&self) -> Result<GeneratingOperator> {
        let n = self.dim();
        if n == 0 {
            return Ok(GeneratingOperator {
                eigenvalues: Vec::new(),
                basis: CMatrix::zeros(0, 0),
                coords: CMatrix::zeros(0, 0),
            });
        }
        let l = self
            .g0
            .clone()
            .cholesky()
            .ok_or(InterpError::NotPositiveDefinite("g0"))?
            .l();
        let x = l
            .solve_lower_triangular(&self.g1)
            .ok_or(InterpError::NotPositiveDefinite("g0"))?;
        let c = l
            .solve_lower_triangular(&x.adjoint())
            .ok_or(InterpError::NotPositiveDefinite("g0"))?;
        let c = (&c + c.adjoint()) * cr(0.5);
        let eig = c.symmetric_eigen();
        if eig.eigenvalues.iter().any(|m| *m <= 0.0) {
            return Err(InterpError::NotPositiveDefinite("g1"));
        }
        let q = eig.eigenvectors;
        let basis = l
            .adjoint()
            .solve_upper_triangular(&q)
            .ok_or(InterpError::NotPositiveDefinite("g0"))?;
        let coords = q.adjoint() * l.adjoint();
        Ok(GeneratingOperator {
            eigenvalues: eig.eigenvalues.iter().map(|m| m.sqrt()).collect(),
            basis,
            coords,
        })
    }
}

/// Couple given by norm factors, `‖u‖_{X_j} = |F_j u|`, with `F₀` square and
/// invertible. Avoids forming Gram matrices when the two norms differ by many
/// orders of magnitude.
#[derive(Debug, Clone)]
pub struct FactorCouple {
    pub f0: CMatrix,
    pub f1: CMatrix,
}

impl FactorCouple {
    pub fn new(f0: CMatrix, f1: CMatrix) -> Result<Self> {
        if !f0.is_square() || f1.ncols() != f0.ncols() || f1.nrows() < f1.ncols() {
            return Err(InterpError::InvalidCouple(format!(
                "factor shapes {:?} and {:?}",
                f0.shape(),
                f1.shape()
            )));
        }
        Ok(Self { f0, f1 })
    }
}

impl HilbertCouple for FactorCouple {
    fn dim(&self) -> usize {
        self.f0.ncols()
    }

    fn norm0(&self, u: &CVector) -> f64 {
        (&self.f0 * u).norm()
    }

    fn norm1(&self, u: &CVector) -> f64 {
        (&self.f1 * u).norm()
    }

    /// With `K = F₁ F₀⁻¹ = U Σ V*`, `J` acts as `V Σ V*` in `F₀` coordinates.
    fn generating_operator(&self) -> Result<GeneratingOperator> {
        let lu = self.f0.clone().lu();
        let f0_inv = lu.try_inverse().ok_or(InterpError::NotPositiveDefinite("f0"))?;
        let k = &self.f1 * &f0_inv;
        let svd = k.svd(false, true);
        let vt = svd.v_t.ok_or(InterpError::NotPositiveDefinite("f1"))?;
        let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        if let Some(s) = sv.iter().find(|s| !(**s > 0.0)) {
            return Err(InterpError::NotEvaluable(*s));
        }
        Ok(GeneratingOperator {
            eigenvalues: sv,
            basis: &f0_inv * vt.adjoint(),
            coords: &vt * &self.f0,
        })
    }
}

/// Serializable couple: `{"kind":"diagonal","w0":[…],"w1":[…]}` or
/// `{"kind":"gram","g0":[[[re,im],…],…],"g1":…}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Couple {
    Diagonal(DiagonalCouple),
    Gram(GramCouple),
}

impl Couple {
    fn to_gram(&self) -> (CMatrix, CMatrix) {
        match self {
            Couple::Diagonal(d) => (
                CMatrix::from_diagonal(&CVector::from_iterator(d.dim(), d.w0.iter().map(|w| cr(*w)))),
                CMatrix::from_diagonal(&CVector::from_iterator(d.dim(), d.w1.iter().map(|w| cr(*w)))),
            ),
            Couple::Gram(g) => (g.g0.clone(), g.g1.clone()),
        }
    }
}

impl HilbertCouple for Couple {
    fn dim(&self) -> usize {
        match self {
            Couple::Diagonal(d) => d.dim(),
            Couple::Gram(g) => g.dim(),
        }
    }

    fn norm0(&self, u: &CVector) -> f64 {
        match self {
            Couple::Diagonal(d) => d.norm0(u),
            Couple::Gram(g) => g.norm0(u),
        }
    }

    fn norm1(&self, u: &CVector) -> f64 {
        match self {
            Couple::Diagonal(d) => d.norm1(u),
            Couple::Gram(g) => g.norm1(u),
        }
    }

    fn generating_operator(&self) -> Result<GeneratingOperator> {
        match self {
            Couple::Diagonal(d) => d.generating_operator(),
            Couple::Gram(g) => g.generating_operator(),
        }
    }

    fn interp_norm(&self, u: &CVector, psi: &impl PositiveFunction) -> Result<f64> {
        match self {
            Couple::Diagonal(d) => d.interp_norm(u, psi),
            Couple::Gram(g) => g.interp_norm(u, psi),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CoupleSpec {
    Diagonal { w0: Vec<f64>, w1: Vec<f64> },
    Gram { g0: Vec<Vec<[f64; 2]>>, g1: Vec<Vec<[f64; 2]>> },
}

fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    m.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect()
}

fn rows_to_matrix(rows: &[Vec<[f64; 2]>]) -> std::result::Result<CMatrix, String> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err("Gram matrix rows must form a square matrix".into());
    }
    Ok(CMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

impl Serialize for Couple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Couple::Diagonal(d) => CoupleSpec::Diagonal {
                w0: d.w0.clone(),
                w1: d.w1.clone(),
            },
            Couple::Gram(g) => CoupleSpec::Gram {
                g0: matrix_to_rows(&g.g0),
                g1: matrix_to_rows(&g.g1),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Couple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        match CoupleSpec::deserialize(d)? {
            CoupleSpec::Diagonal { w0, w1 } => DiagonalCouple::new(w0, w1).map(Couple::Diagonal).map_err(D::Error::custom),
            CoupleSpec::Gram { g0, g1 } => {
                let g0 = rows_to_matrix(&g0).map_err(D::Error::custom)?;
                let g1 = rows_to_matrix(&g1).map_err(D::Error::custom)?;
                GramCouple::new(g0, g1).map(Couple::Gram).map_err(D::Error::custom)
            }
        }
    }
}

/// Generating operator of any couple.
pub fn generating_operator(couple: &impl HilbertCouple) -> Result<GeneratingOperator> {
    couple.generating_operator()
}

/// `‖ψ(J) u‖_{X₀}`.
pub fn interp_norm(u: &CVector, couple: &impl HilbertCouple, psi: &impl PositiveFunction) -> Result<f64> {
    couple.interp_norm(u, psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub relerr: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let relerr = if rhs == 0.0 { lhs.abs() } else { (lhs - rhs).abs() / rhs.abs() };
        Self { lhs, rhs, relerr }
    }
}

fn spectrum_vector(u: &Spectrum) -> CVector {
    CVector::from_column_slice(&u.coeffs)
}

/// Interpolates the torus couple `[H^{(s0)}, H^{(s1)}]` with the parameter
/// built from `α` and compares against `‖u‖_{H^α}`.
pub fn sobolev_scale_identity(u: &Spectrum, alpha: &ROFunction, s0: f64, s1: f64) -> Result<IdentityCheck> {
    let psi = make_interp_param(alpha.clone(), s0, s1)?;
    let b = u.grid.brackets();
    let couple = DiagonalCouple::new(
        b.iter().map(|x| x.powf(2.0 * s0)).collect(),
        b.iter().map(|x| x.powf(2.0 * s1)).collect(),
    )?;
    let lhs = interp_norm(&spectrum_vector(u), &couple, &psi)?;
    Ok(IdentityCheck::new(lhs, crate::spaces::hnorm(u, alpha)))
}

/// Same identity for the shifted-weight norms: the couple with weights
/// `(⟨k⟩+p)^{2s_j}` interpolates to `(Σ α²(⟨k⟩+p)|û_k|²)^{1/2}`.
pub fn param_scale_identity(u: &Spectrum, alpha: &ROFunction, s0: f64, s1: f64, p: f64) -> Result<IdentityCheck> {
    let psi = make_interp_param(alpha.clone(), s0, s1)?;
    let b = u.grid.brackets();
    let couple = DiagonalCouple::new(
        b.iter().map(|x| (x + p).powf(2.0 * s0)).collect(),
        b.iter().map(|x| (x + p).powf(2.0 * s1)).collect(),
    )?;
    let lhs = interp_norm(&spectrum_vector(u), &couple, &psi)?;
    let rhs = b
        .iter()
        .zip(&u.coeffs)
        .map(|(x, c)| alpha.value(x + p).powi(2) * c.norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(IdentityCheck::new(lhs, rhs))
}

/// `‖T‖_{X_ψ → Y_ψ}` as the largest singular value of `F^Y_ψ T (F^X_ψ)⁻¹`.
pub fn operator_norm(
    t: &CMatrix,
    x: &GeneratingOperator,
    y: &GeneratingOperator,
    psi: &impl PositiveFunction,
) -> Result<f64> {
    if t.ncols() != x.dim() || t.nrows() != y.dim() {
        return Err(InterpError::Dimension(format!(
            "operator {:?} between couples of dimensions {} and {}",
            t.shape(),
            x.dim(),
            y.dim()
        )));
    }
    if t.is_empty() {
        return Ok(0.0);
    }
    let m = y.norm_factor(psi)? * t * x.inverse_factor(psi)?;
    Ok(m.singular_values().max())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeinzCheck {
    pub norm0: f64,
    pub norm1: f64,
    pub norm_theta: f64,
    pub bound: f64,
    pub pass: bool,
}

/// With `ψ(t) = t^θ`: `‖T‖_ψ ≤ ‖T‖₀^{1-θ} ‖T‖₁^θ`.
pub fn heinz_bound_check(
    t: &CMatrix,
    x: &impl HilbertCouple,
    y: &impl HilbertCouple,
    theta: f64,
) -> Result<HeinzCheck> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(InterpError::InvalidCouple(format!("theta = {theta} outside (0, 1)")));
    }
    let (gx, gy) = (x.generating_operator()?, y.generating_operator()?);
    let norm0 = operator_norm(t, &gx, &gy, &|_: f64| 1.0)?;
    let norm1 = operator_norm(t, &gx, &gy, &|s: f64| s)?;
    let norm_theta = operator_norm(t, &gx, &gy, &|s: f64| s.powf(theta))?;
    let bound = norm0.powf(1.0 - theta) * norm1.powf(theta);
    Ok(HeinzCheck {
        norm0,
        norm1,
        norm_theta,
        bound,
        pass: norm_theta <= bound * (1.0 + 1e-9),
    })
}

/// `‖T‖_ψ / max(‖T‖₀, ‖T‖₁)`: the empirical constant for a general parameter.
pub fn interpolation_constant_ratio(
    t: &CMatrix,
    x: &impl HilbertCouple,
    y: &impl HilbertCouple,
    psi: &impl PositiveFunction,
) -> Result<f64> {
    let (gx, gy) = (x.generating_operator()?, y.generating_operator()?);
    let n0 = operator_norm(t, &gx, &gy, &|_: f64| 1.0)?;
    let n1 = operator_norm(t, &gx, &gy, &|s: f64| s)?;
    Ok(operator_norm(t, &gx, &gy, psi)? / n0.max(n1))
}

/// Interpolation of a direct sum equals the ℓ₂ sum of the parts.
pub fn direct_sum_interp(parts: &[CVector], couples: &[Couple], psi: &impl PositiveFunction) -> Result<IdentityCheck> {
    if parts.len() != couples.len() {
        return Err(InterpError::Dimension(format!(
            "{} vectors for {} couples",
            parts.len(),
            couples.len()
        )));
    }
    let mut rhs2 = 0.0;
    for (u, c) in parts.iter().zip(couples) {
        rhs2 += interp_norm(u, c, psi)?.powi(2);
    }
    let total: usize = couples.iter().map(|c| c.dim()).sum();
    let joined = CVector::from_iterator(total, parts.iter().flat_map(|u| u.iter().copied()));
    let lhs = if couples.iter().all(|c| matches!(c, Couple::Diagonal(_))) {
        let mut w0 = Vec::with_capacity(total);
        let mut w1 = Vec::with_capacity(total);
        for c in couples {
            if let Couple::Diagonal(d) = c {
                w0.extend(&d.w0);
                w1.extend(&d.w1);
            }
        }
        interp_norm(&joined, &DiagonalCouple::new(w0, w1)?, psi)?
    } else {
        let mut g0 = CMatrix::zeros(total, total);
        let mut g1 = CMatrix::zeros(total, total);
        let mut at = 0;
        for c in couples {
            let (a, b) = c.to_gram();
            let n = a.nrows();
            g0.view_mut((at, at), (n, n)).copy_from(&a);
            g1.view_mut((at, at), (n, n)).copy_from(&b);
            at += n;
        }
        interp_norm(&joined, &GramCouple::new(g0, g1)?, psi)?
    };
    Ok(IdentityCheck::new(lhs, rhs2.sqrt()))
}
