//! Dense symmetric eigendecomposition, the φ reshaping of eigenvalues, the
//! Ĥ norm operator, interval projectors and a Davis–Kahan diagnostic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::oracle::HessianEstimate;

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const ASYMMETRY_TOL: f64 = 1e-8;
const PINV_REL_TOL: f64 = 1e-12;

/// Smallest band index; also the floor of `p_max`.
pub const P_MIN: u32 = 16;

/// `M = Q diag(λ) Qᵀ` with eigenvalues ascending and orthonormal columns in `Q`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Operator norm of the decomposed matrix.
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, l| m.max(l.abs()))
    }

    /// `Q g(Λ) Qᵀ`.
    pub fn map_eigenvalues(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let mut scaled = q.clone();
        for (j, lambda) in self.eigenvalues.iter().enumerate() {
            let s = g(*lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        scaled * q.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_eigenvalues(|l| l)
    }
}

/// Symmetrizes `m`, rejecting matrices whose asymmetry exceeds 1e-8 relative
/// to `max(1, max|mᵢⱼ|)`.
pub fn symmetrized(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Argument(format!("matrix must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let scale = m.amax().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > ASYMMETRY_TOL * scale {
        return Err(Error::Argument(format!("matrix is not symmetric: max |M - Mᵀ| = {worst:e}")));
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Cyclic Jacobi eigensolver.
///
/// Sweeps until the off-diagonal Frobenius norm drops to `1e-12·‖M‖_F`, with a
/// cap of 100 sweeps.
pub fn sym_eigendecomp(m: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let mut a = symmetrized(m)?;
    let n = a.nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = JACOBI_REL_TOL * a.norm();

    let mut converged = false;
    let mut off = off_diagonal_norm(&a);
    for sweep in 0..JACOBI_MAX_SWEEPS {
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let g = 100.0 * apq.abs();
                // Rotation would not change either diagonal entry in floating point.
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
        off = off_diagonal_norm(&a);
    }
    if !converged && off > tol {
        return Err(Error::NoConvergence { sweeps: JACOBI_MAX_SWEEPS, off_norm: off });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &v.column(src));
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// `A ← JᵀAJ`, `V ← VJ` for the plane rotation with `J_pp = J_qq = c`, `J_pq = s`.
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Operator norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eigendecomp(m)?.spectral_norm())
}

/// `max{⌈log₂(L₁/δ)⌉, 16}`.
pub fn p_max(l1: f64, delta: f64) -> u32 {
    let raw = (l1 / delta).log2().ceil();
    if raw.is_nan() || raw <= P_MIN as f64 {
        P_MIN
    } else {
        raw.min(u32::MAX as f64) as u32
    }
}

/// `(32δ + |λ|)·p_max / ⌈log₂(max{|λ|, 2δ}/δ)⌉`, with the denominator clamped at 1.
pub fn phi(lambda: f64, delta: f64, l1: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("phi requires delta > 0, got {delta}")));
    }
    if !lambda.is_finite() || !(l1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "phi requires finite lambda and L1 > 0, got lambda={lambda}, L1={l1}"
        )));
    }
    Ok(phi_with_pmax(lambda, delta, p_max(l1, delta)))
}

/// [`phi`] with a precomputed `p_max` and no argument checks.
pub fn phi_with_pmax(lambda: f64, delta: f64, p_max: u32) -> f64 {
    let a = lambda.abs();
    let band = (a.max(2.0 * delta) / delta).log2().ceil().max(1.0);
    (32.0 * delta + a) * p_max as f64 / band
}

/// Ĥ = Σ φ(λⱼ) hⱼhⱼᵀ for a Hessian estimate, with dense powers precomputed.
#[derive(Debug, Clone)]
pub struct NormOperator {
    pub base: SpectralDecomposition,
    pub delta: f64,
    pub l1: f64,
    pub p_max: u32,
    pub phi_values: DVector<f64>,
    pub hhat: DMatrix<f64>,
    pub hhat_sqrt: DMatrix<f64>,
    pub hhat_inv_sqrt: DMatrix<f64>,
    pub hhat_inv: DMatrix<f64>,
}

impl NormOperator {
    /// Builds Ĥ from an existing decomposition, requiring every eigenvalue of
    /// the decomposed matrix in `[-3δ, 2L₁]`.
    pub fn from_decomposition(base: SpectralDecomposition, delta: f64, l1: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("norm operator requires delta > 0, got {delta}")));
        }
        if !(l1 > 0.0) || !l1.is_finite() {
            return Err(Error::InvalidParameter(format!("norm operator requires finite L1 > 0, got {l1}")));
        }
        let (lo, hi) = (-3.0 * delta, 2.0 * l1);
        if let Some(bad) = base.eigenvalues.iter().find(|&&l| l < lo || l > hi) {
            return Err(Error::Contract(format!(
                "eigenvalue {bad:e} of the Hessian estimate lies outside [{lo:e}, {hi:e}]"
            )));
        }
        let p_max = p_max(l1, delta);
        let phi_values = base.eigenvalues.map(|l| phi_with_pmax(l, delta, p_max));
        let at = |g: &dyn Fn(f64) -> f64| {
            let mut scaled = base.eigenvectors.clone();
            for (j, v) in phi_values.iter().enumerate() {
                scaled.column_mut(j).scale_mut(g(*v));
            }
            scaled * base.eigenvectors.transpose()
        };
        let hhat = at(&|v| v);
        let hhat_sqrt = at(&|v| v.sqrt());
        let hhat_inv_sqrt = at(&|v| 1.0 / v.sqrt());
        let hhat_inv = at(&|v| 1.0 / v);
        Ok(Self { base, delta, l1, p_max, phi_values, hhat, hhat_sqrt, hhat_inv_sqrt, hhat_inv })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Smallest eigenvalue of Ĥ, read off the φ values.
    pub fn min_phi(&self) -> f64 {
        self.phi_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖Ĥ^{1/2} v‖²`.
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        (&self.hhat_sqrt * v).norm_squared()
    }
}

pub fn build_norm_operator(h: &HessianEstimate, delta_eff: f64, l1: f64) -> Result<NormOperator> {
    NormOperator::from_decomposition(sym_eigendecomp(&h.matrix)?, delta_eff, l1)
}

/// Projector onto eigenvectors whose eigenvalue (or its magnitude, in
/// `abs_mode`) lies in `[lo, hi]`. An empty selection gives the zero matrix.
pub fn project_interval(decomp: &SpectralDecomposition, lo: f64, hi: f64, abs_mode: bool) -> DMatrix<f64> {
    let n = decomp.dim();
    let mut pi = DMatrix::<f64>::zeros(n, n);
    for (j, lambda) in decomp.eigenvalues.iter().enumerate() {
        let key = if abs_mode { lambda.abs() } else { *lambda };
        if key >= lo && key <= hi {
            let h = decomp.eigenvectors.column(j);
            pi += h * h.transpose();
        }
    }
    pi
}

/// Moore–Penrose pseudoinverse of `ΠHΠ`; eigenvalues with magnitude at most
/// `1e-12·‖H‖` count as zero.
pub fn pinv_on_subspace(h: &DMatrix<f64>, pi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let tol = PINV_REL_TOL * sym_spectral_norm(h)?;
    let compressed = pi * h * pi;
    let decomp = sym_eigendecomp(&compressed)?;
    Ok(decomp.map_eigenvalues(|l| if l.abs() > tol { 1.0 / l } else { 0.0 }))
}

/// Band constants `l_p, r_p, ξ_p, l̄_p` for a band index `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandConstants {
    pub p: u32,
    pub p_max: u32,
    pub l_p: f64,
    pub r_p: f64,
    pub xi_p: f64,
    pub l_bar_p: f64,
}

impl BandConstants {
    pub fn new(p: u32, p_max: u32) -> Self {
        let pf = p as f64;
        let pm = p_max as f64;
        let l_p = (pf + 1.0) / (pm * (1.0 + 2f64.powf(-(pf - 5.0))));
        let r_p = (pf + 1.0) / (pm * (1.0 + 2f64.powf(-(pf - 4.0))));
        let xi_p = pf.sqrt() / (2f64.powf(pf / 2.0) * pm);
        Self { p, p_max, l_p, r_p, xi_p, l_bar_p: l_p - xi_p }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DavisKahanStatus {
    Admissible,
    PreconditionViolated(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DavisKahanReport {
    /// `‖Π_[a,b](M) − Π_[a−γ,b+γ](M̃)‖`.
    pub lhs: f64,
    /// `ξ/γ`.
    pub rhs: f64,
    /// Measured `‖M − M̃‖`.
    pub xi: f64,
    pub pass: bool,
    pub status: DavisKahanStatus,
}

/// Compares `Π_[a,b](M)` against `Π_[a−γ,b+γ](M̃)`.
///
/// Admissibility requires `γ > ξ` and no eigenvalue of `M` in
/// `[a−γ−ξ, a) ∪ (b, b+γ+ξ]`. The extra `ξ` keeps every eigenvalue of `M`
/// outside the guard band from drifting into `[a−γ, b+γ]` under the
/// perturbation, which would change the projector rank.
pub fn davis_kahan_check(
    m: &DMatrix<f64>,
    m_tilde: &DMatrix<f64>,
    a: f64,
    b: f64,
    gamma: f64,
) -> Result<DavisKahanReport> {
    if m.shape() != m_tilde.shape() {
        return Err(Error::Dimension { expected: m.nrows(), got: m_tilde.nrows() });
    }
    let xi = sym_spectral_norm(&(m - m_tilde))?;
    let dm = sym_eigendecomp(m)?;
    let dmt = sym_eigendecomp(m_tilde)?;
    let lhs =
        sym_spectral_norm(&(project_interval(&dm, a, b, false) - project_interval(&dmt, a - gamma, b + gamma, false)))?;
    let rhs = if gamma > 0.0 { xi / gamma } else { f64::INFINITY };

    let status = if !(a <= b) {
        DavisKahanStatus::PreconditionViolated(format!("empty interval [{a}, {b}]"))
    } else if !(gamma > xi) {
        DavisKahanStatus::PreconditionViolated(format!("gamma {gamma:e} <= xi {xi:e}"))
    } else if let Some(l) =
        dm.eigenvalues.iter().find(|&&l| (l >= a - gamma - xi && l < a) || (l > b && l <= b + gamma + xi))
    {
        DavisKahanStatus::PreconditionViolated(format!(
            "eigenvalue {l:e} of M lies in the guard band around [{a}, {b}]"
        ))
    } else {
        DavisKahanStatus::Admissible
    };
    Ok(DavisKahanReport { lhs, rhs, xi, pass: lhs <= rhs + 1e-9, status })
}
