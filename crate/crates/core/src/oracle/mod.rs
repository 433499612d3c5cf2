//! Objectives with certified constants, the metered gradient oracle and the
//! four δ-approximate Hessian oracle modes.

mod families;
mod ledger;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::spectral::sym_spectral_norm;

pub use families::{
    make_test_objective, FamilyParams, QuadCos, RandomCubicReg, SaddleBand, SeparableQuartic, FAMILIES,
};
pub use ledger::{QueryCounts, QueryLedger};

/// A twice-differentiable function on `R^d`.
pub trait SmoothFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    /// Analytic Hessian, when the function provides one.
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// A function together with the constants the solvers are allowed to use.
#[derive(Debug, Clone)]
pub struct Objective {
    pub name: String,
    pub func: Arc<dyn SmoothFunction>,
    /// Gradient Lipschitz constant; `None` when no finite bound is known.
    pub l1: Option<f64>,
    pub l2: f64,
    /// Δ with `f(x0) − inf f ≤ Δ`.
    pub delta_bound: f64,
    pub x0: DVector<f64>,
}

impl Objective {
    pub fn new(
        name: impl Into<String>,
        func: Arc<dyn SmoothFunction>,
        l1: Option<f64>,
        l2: f64,
        delta_bound: f64,
        x0: DVector<f64>,
    ) -> Result<Self> {
        check_dim(func.dim(), x0.len())?;
        if func.dim() == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        if !(l2 > 0.0 && l2.is_finite()) {
            return Err(Error::InvalidParameter(format!("L2 must be positive and finite, got {l2}")));
        }
        if let Some(l1) = l1 {
            if !(l1 > 0.0 && l1.is_finite()) {
                return Err(Error::InvalidParameter(format!("L1 must be positive and finite, got {l1}")));
            }
        }
        if !(delta_bound > 0.0 && delta_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "suboptimality bound must be positive and finite, got {delta_bound}"
            )));
        }
        Ok(Self { name: name.into(), func, l1, l2, delta_bound, x0 })
    }

    pub fn dim(&self) -> usize {
        self.func.dim()
    }

    /// The same objective with `L₁` hidden from the solvers.
    pub fn without_l1(&self) -> Self {
        Self { l1: None, ..self.clone() }
    }

    pub fn require_l1(&self) -> Result<f64> {
        self.l1.ok_or_else(|| {
            Error::InvalidParameter(format!("objective '{}' has no gradient Lipschitz constant", self.name))
        })
    }

    /// Unmetered evaluation, for diagnostics that are not oracle queries.
    pub fn value_at(&self, x: &DVector<f64>) -> f64 {
        self.func.value(x)
    }

    /// Unmetered gradient, for diagnostics that are not oracle queries.
    pub fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        self.func.gradient_into(x, &mut g);
        g
    }
}

/// A symmetric matrix certified to satisfy `‖matrix − ∇²f(ref_point)‖ ≤ delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianEstimate {
    pub matrix: DMatrix<f64>,
    pub ref_point: DVector<f64>,
    pub delta: f64,
}

impl HessianEstimate {
    pub fn new(matrix: DMatrix<f64>, ref_point: DVector<f64>, delta: f64) -> Self {
        Self { matrix, ref_point, delta }
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }
}

pub fn query_gradient(obj: &Objective, x: &DVector<f64>, ledger: &mut QueryLedger) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(obj.dim());
    query_gradient_into(obj, x, &mut out, ledger)?;
    Ok(out)
}

/// Writes `∇f(x)` into `out`; charged as one gradient query.
pub fn query_gradient_into(
    obj: &Objective,
    x: &DVector<f64>,
    out: &mut DVector<f64>,
    ledger: &mut QueryLedger,
) -> Result<()> {
    check_dim(obj.dim(), x.len())?;
    check_dim(obj.dim(), out.len())?;
    ledger.record_grad();
    obj.func.gradient_into(x, out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at a point of norm {:e}", x.norm())));
    }
    Ok(())
}

/// Function value; charged as one value query.
pub fn query_value(obj: &Objective, x: &DVector<f64>, ledger: &mut QueryLedger) -> Result<f64> {
    check_dim(obj.dim(), x.len())?;
    ledger.record_value();
    Ok(obj.func.value(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    /// Analytic Hessian, δ = 0.
    Exact,
    /// The zero matrix, δ = L₁.
    Zero,
    /// Analytic Hessian plus a symmetric perturbation of norm `δ·u`, `u ~ U[0,1]`.
    Noisy { delta: f64 },
    /// Symmetrized central differences of the gradient.
    FiniteDifference { delta: f64 },
}

impl OracleMode {
    /// Builds a mode from its CLI name; `delta` is ignored by `exact` and `zero`.
    pub fn parse(name: &str, delta: f64) -> Result<Self> {
        match name {
            "exact" => Ok(Self::Exact),
            "zero" => Ok(Self::Zero),
            "noisy" => Ok(Self::Noisy { delta }),
            "fd" | "finite_difference" => Ok(Self::FiniteDifference { delta }),
            other => Err(Error::Argument(format!("unknown oracle mode '{other}' (expected exact, zero, noisy or fd)"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Zero => "zero",
            Self::Noisy { .. } => "noisy",
            Self::FiniteDifference { .. } => "fd",
        }
    }

    /// Accuracy guaranteed by this mode on `obj`.
    pub fn certified_delta(&self, obj: &Objective) -> Result<f64> {
        match *self {
            Self::Exact => Ok(0.0),
            Self::Zero => obj.require_l1(),
            Self::Noisy { delta } | Self::FiniteDifference { delta } => Ok(delta),
        }
    }
}

/// A Hessian oracle in a fixed mode. Owns the RNG used by the noisy mode.
#[derive(Debug, Clone)]
pub struct HessianOracle {
    mode: OracleMode,
    rng: ChaCha8Rng,
}

impl HessianOracle {
    pub fn new(mode: OracleMode, seed: u64) -> Self {
        Self { mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

/// Anything that answers Hessian queries for an objective and charges them.
pub trait HessianSource {
    fn mode(&self) -> OracleMode;
    fn query(&mut self, obj: &Objective, x: &DVector<f64>, ledger: &mut QueryLedger) -> Result<HessianEstimate>;
}

impl HessianSource for HessianOracle {
    fn mode(&self) -> OracleMode {
        self.mode
    }

    fn query(&mut self, obj: &Objective, x: &DVector<f64>, ledger: &mut QueryLedger) -> Result<HessianEstimate> {
        query_hessian_estimate(obj, x, self, ledger)
    }
}

pub fn query_hessian_estimate(
    obj: &Objective,
    x: &DVector<f64>,
    oracle: &mut HessianOracle,
    ledger: &mut QueryLedger,
) -> Result<HessianEstimate> {
    check_dim(obj.dim(), x.len())?;
    let d = obj.dim();
    let est = match oracle.mode {
        OracleMode::Exact => {
            let h = analytic_hessian(obj, x)?;
            HessianEstimate::new(h, x.clone(), 0.0)
        }
        OracleMode::Zero => {
            let l1 = obj.require_l1()?;
            HessianEstimate::new(DMatrix::zeros(d, d), x.clone(), l1)
        }
        OracleMode::Noisy { delta } => {
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(Error::InvalidParameter(format!("noisy oracle needs delta >= 0, got {delta}")));
            }
            let h = analytic_hessian(obj, x)?;
            let u: f64 = oracle.rng.random();
            let e = goe_with_norm(d, delta * u, &mut oracle.rng)?;
            HessianEstimate::new(h + e, x.clone(), delta)
        }
        OracleMode::FiniteDifference { delta } => fd_hessian(obj, x, delta, true, ledger)?,
    };
    ledger.record_hess();
    Ok(est)
}

fn analytic_hessian(obj: &Objective, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    obj.func.hessian(x).ok_or_else(|| {
        Error::UnsupportedMode(format!("exact Hessian requested but '{}' has no analytic Hessian", obj.name))
    })
}

/// Finite-difference Hessian estimate with step `h = 2δ/(√d·L₂)`.
///
/// Column `i` is `(∇f(x+heᵢ) − ∇f(x−heᵢ))/(2h)`, costing `2d` gradient
/// queries in total. The column error is at most `L₂h/2 = δ/√d`, so the
/// Frobenius (and operator) error is at most δ. `symmetrize = false` exists
/// only to exercise the symmetry check; it does not charge a Hessian query.
pub fn fd_hessian(
    obj: &Objective,
    x: &DVector<f64>,
    delta: f64,
    symmetrize: bool,
    ledger: &mut QueryLedger,
) -> Result<HessianEstimate> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("finite-difference oracle needs delta > 0, got {delta}")));
    }
    let d = obj.dim();
    let h = 2.0 * delta / ((d as f64).sqrt() * obj.l2);
    let mut m = DMatrix::zeros(d, d);
    let mut gp = DVector::zeros(d);
    let mut gm = DVector::zeros(d);
    let mut probe = x.clone();
    for i in 0..d {
        probe[i] = x[i] + h;
        query_gradient_into(obj, &probe, &mut gp, ledger)?;
        probe[i] = x[i] - h;
        query_gradient_into(obj, &probe, &mut gm, ledger)?;
        probe[i] = x[i];
        m.set_column(i, &((&gp - &gm) / (2.0 * h)));
    }
    if symmetrize {
        m = (&m + m.transpose()) * 0.5;
    }
    Ok(HessianEstimate::new(m, x.clone(), delta))
}

/// Gaussian orthogonal ensemble sample rescaled to operator norm `norm`.
fn goe_with_norm(d: usize, norm: f64, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let s = (&g + g.transpose()) * std::f64::consts::FRAC_1_SQRT_2;
    let n = sym_spectral_norm(&s)?;
    if n == 0.0 {
        return Ok(DMatrix::zeros(d, d));
    }
    Ok(s * (norm / n))
}
