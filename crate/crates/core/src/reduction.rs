//! Reduction to functions without a gradient-Lipschitz constant: split the
//! spectrum of one Hessian estimate at `ℓ`, solve the restriction to the small
//! eigenvalues, then take a Newton step on the large ones.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bounds::check_eps_range;
use crate::error::{check_dim, Error, Result};
use crate::oracle::{
    query_gradient, query_value, HessianEstimate, HessianOracle, HessianSource, Objective, OracleMode, QueryLedger,
    SmoothFunction,
};
use crate::restarted::{run_restarted, SolverOptions, SolverReport, Termination};
use crate::spectral::{pinv_on_subspace, project_interval, sym_eigendecomp, SpectralDecomposition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionParams {
    pub eps: f64,
    pub l2: f64,
    pub big_delta: f64,
    pub delta: f64,
    pub n_h: u64,
    /// `min{L₁, δ + ΔL₂/(n_H ε)}`, with L₁ = ∞ when absent.
    pub c_delta: f64,
    pub ell_hat: f64,
    /// `log₂(ℓ̂/c_δ + 16)`.
    pub lg: f64,
    pub delta_out: f64,
    pub r_out: f64,
    pub ell: f64,
    /// Largest of the lower bounds `ℓ` must clear.
    pub ell_floor: f64,
}

impl ReductionParams {
    pub fn new(l1: Option<f64>, l2: f64, big_delta: f64, delta: f64, eps: f64, n_h: u64) -> Result<Self> {
        if n_h == 0 {
            return Err(Error::InvalidParameter("n_H must be at least 1".into()));
        }
        for (name, v) in [("L2", l2), ("Delta", big_delta), ("eps", eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
        }
        let c_delta = crate::bounds::c_delta(l1, l2, big_delta, delta, eps, n_h as f64);
        let ell_hat = (800.0 * big_delta / (eps * eps) * (3.0 * l2 * big_delta / eps + delta).powi(2)).max(2.0 * delta);
        let lg = (ell_hat / c_delta + 16.0).log2();
        let delta_out = 54.0 * (big_delta + delta * eps / l2) * lg.powi(9) + eps.powf(1.5) / (6.0 * l2.sqrt());
        let r_out = 3.0 * big_delta / eps * lg.powi(9);
        let ell = ell_hat * (ell_hat / c_delta).log2().powi(19);
        let ell_floor = (800.0 * big_delta / (eps * eps) * (l2 * r_out + delta).powi(2))
            .max(48.0 * l2 * delta_out / eps)
            .max(24.0 * delta_out.cbrt() * l2.powf(2.0 / 3.0))
            .max(2.0 * delta);
        if !(ell >= ell_floor) {
            return Err(Error::Contract(format!(
                "threshold ell={ell:e} is below its required floor {ell_floor:e} (ell_hat/c_delta={:e})",
                ell_hat / c_delta
            )));
        }
        Ok(Self { eps, l2, big_delta, delta, n_h, c_delta, ell_hat, lg, delta_out, r_out, ell, ell_floor })
    }

    /// `2√(3Δ_out/ℓ)`.
    pub fn newton_step_bound(&self) -> f64 {
        2.0 * (3.0 * self.delta_out / self.ell).sqrt()
    }

    /// `2δ√(3Δ_out/ℓ) + 6L₂Δ_out/ℓ`.
    pub fn large_grad_bound(&self) -> f64 {
        self.delta * self.newton_step_bound() + 6.0 * self.l2 * self.delta_out / self.ell
    }

    /// `(2ΔL₂^{1/4}/ε^{7/4})·√(min{ℓ, δ + ΔL₂/(n_H ε)})·log₂¹⁸(ℓ̂/c_δ + 16)`.
    pub fn grad_ceiling(&self) -> f64 {
        let c = self.ell.min(self.delta + self.big_delta * self.l2 / (self.n_h as f64 * self.eps));
        2.0 * self.big_delta * self.l2.powf(0.25) / self.eps.powf(1.75) * c.sqrt() * self.lg.powi(18)
    }
}

/// `x ↦ f(x₀ + Π(x − x₀))`.
#[derive(Debug)]
pub struct RestrictedFn {
    parent: Arc<dyn SmoothFunction>,
    x0: DVector<f64>,
    pi: DMatrix<f64>,
}

impl RestrictedFn {
    pub fn lift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.x0 + &self.pi * (x - &self.x0)
    }
}

impl SmoothFunction for RestrictedFn {
    fn dim(&self) -> usize {
        self.x0.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.parent.value(&self.lift(x))
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let mut g = DVector::zeros(self.x0.len());
        self.parent.gradient_into(&self.lift(x), &mut g);
        out.gemv(1.0, &self.pi, &g, 0.0);
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.parent.hessian(&self.lift(x)).map(|h| &self.pi * h * &self.pi)
    }
}

#[derive(Debug, Clone)]
pub struct RestrictedObjective {
    /// The restriction, advertising `L₁ = ℓ`.
    pub objective: Objective,
    pub func: Arc<RestrictedFn>,
    pub x0: DVector<f64>,
    pub ell: f64,
    pub decomposition: SpectralDecomposition,
    /// Projector onto eigenvectors with `|λ| ≤ ℓ`.
    pub pi_small: DMatrix<f64>,
    pub pi_large: DMatrix<f64>,
}

pub fn build_restricted(
    obj: &Objective,
    x0: &DVector<f64>,
    h: &HessianEstimate,
    ell: f64,
) -> Result<RestrictedObjective> {
    check_dim(obj.dim(), x0.len())?;
    check_dim(obj.dim(), h.matrix.nrows())?;
    if !(ell >= 2.0 * h.delta) || !ell.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "threshold ell={ell} must be finite and at least 2*delta={}",
            2.0 * h.delta
        )));
    }
    let decomposition = sym_eigendecomp(&h.matrix)?;
    let pi_small = project_interval(&decomposition, 0.0, ell, true);
    let n = obj.dim();
    let pi_large = DMatrix::identity(n, n) - &pi_small;
    let func = Arc::new(RestrictedFn { parent: obj.func.clone(), x0: x0.clone(), pi: pi_small.clone() });
    let objective = Objective::new(
        format!("{}_restricted", obj.name),
        func.clone(),
        Some(ell),
        obj.l2,
        obj.delta_bound,
        x0.clone(),
    )?;
    Ok(RestrictedObjective { objective, func, x0: x0.clone(), ell, decomposition, pi_small, pi_large })
}

/// Hessian queries for the restriction, answered by compressing the parent
/// oracle's estimate at the lifted point.
struct RestrictedOracle<'a> {
    parent: &'a Objective,
    source: &'a mut dyn HessianSource,
    func: Arc<RestrictedFn>,
}

impl HessianSource for RestrictedOracle<'_> {
    fn mode(&self) -> OracleMode {
        self.source.mode()
    }

    fn query(&mut self, _obj: &Objective, x: &DVector<f64>, ledger: &mut QueryLedger) -> Result<HessianEstimate> {
        let h = self.source.query(self.parent, &self.func.lift(x), ledger)?;
        let pi = &self.func.pi;
        Ok(HessianEstimate::new(pi * h.matrix * pi, x.clone(), h.delta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionDiagnostics {
    pub x_sub: DVector<f64>,
    pub sub_terminated: Termination,
    pub sub_grad_norm: f64,
    pub large_rank: usize,
    pub newton_step_norm: f64,
    pub newton_step_bound: f64,
    /// `‖Π_{>ℓ}∇f(y)‖`.
    pub large_grad_norm: f64,
    pub large_grad_bound: f64,
    pub movement: f64,
    pub r_out: f64,
    /// `f(x_sub) − f(x₀) + Δ`, an upper bound on `f(x_sub) − inf f`.
    pub suboptimality_upper: f64,
    pub delta_out: f64,
}

impl ReductionDiagnostics {
    pub fn newton_step_ok(&self) -> bool {
        self.newton_step_norm <= self.newton_step_bound
    }

    pub fn large_grad_ok(&self) -> bool {
        self.large_grad_norm <= self.large_grad_bound
    }
}

#[derive(Debug, Clone)]
pub struct ReductionReport {
    /// Final point `y` and the combined ledger. `terminated` is the
    /// subroutine's, or `AccuracyMiss` when it succeeded but `y` is not
    /// ε-critical.
    pub report: SolverReport,
    pub params: ReductionParams,
    pub diagnostics: ReductionDiagnostics,
}

pub fn reduction_to_unbounded(
    obj: &Objective,
    delta: f64,
    eps: f64,
    n_h: u64,
    mode: OracleMode,
) -> Result<ReductionReport> {
    reduction_to_unbounded_with(obj, delta, eps, n_h, mode, &SolverOptions::default())
}

pub fn reduction_to_unbounded_with(
    obj: &Objective,
    delta: f64,
    eps: f64,
    n_h: u64,
    mode: OracleMode,
    options: &SolverOptions,
) -> Result<ReductionReport> {
    check_eps_range(eps, None, obj.l2, obj.delta_bound)?;
    let certified = mode.certified_delta(obj)?;
    if !(delta >= certified) {
        return Err(Error::InvalidParameter(format!(
            "delta={delta} is below the {} oracle's accuracy {certified}",
            mode.label()
        )));
    }
    let params = ReductionParams::new(obj.l1, obj.l2, obj.delta_bound, delta, eps, n_h)?;
    let mut oracle = HessianOracle::new(mode, options.seed);
    let mut ledger = QueryLedger::new();

    ledger.enter_phase("restricted_solve");
    let h0 = oracle.query(obj, &obj.x0, &mut ledger)?;
    let restricted = build_restricted(obj, &obj.x0, &h0, params.ell)?;
    let pi = &restricted.pi_small;
    let initial = HessianEstimate::new(pi * &h0.matrix * pi, obj.x0.clone(), h0.delta);
    let mut source = RestrictedOracle { parent: obj, source: &mut oracle, func: restricted.func.clone() };
    let sub =
        run_restarted(&restricted.objective, delta, eps / 2.0, n_h, &mut source, Some(initial), options, &mut ledger)
            .map_err(|e| context(e, "restricted solve"))?;

    ledger.enter_phase("newton_correction");
    let x_sub = sub.x_out.clone();
    let g = query_gradient(obj, &x_sub, &mut ledger)?;
    let step = pinv_on_subspace(&h0.matrix, &restricted.pi_large)? * &g;
    let y = &x_sub - &step;
    let gy = query_gradient(obj, &y, &mut ledger)?;
    let f_sub = query_value(obj, &x_sub, &mut ledger)?;
    let f_final = query_value(obj, &y, &mut ledger)?;
    ledger.leave_phase();

    let grad_norm_final = gy.norm();
    let terminated = match sub.terminated {
        Termination::EpsCritical if grad_norm_final > eps => Termination::AccuracyMiss,
        t => t,
    };
    let diagnostics = ReductionDiagnostics {
        sub_terminated: sub.terminated,
        sub_grad_norm: sub.grad_norm_final,
        large_rank: restricted.decomposition.eigenvalues.iter().filter(|l| l.abs() > params.ell).count(),
        newton_step_norm: step.norm(),
        newton_step_bound: params.newton_step_bound(),
        large_grad_norm: (&restricted.pi_large * &gy).norm(),
        large_grad_bound: params.large_grad_bound(),
        movement: (&x_sub - &obj.x0).norm(),
        r_out: params.r_out,
        suboptimality_upper: f_sub - obj.value_at(&obj.x0) + obj.delta_bound,
        delta_out: params.delta_out,
        x_sub,
    };
    let mut report = sub.into_report(ledger);
    report.x_out = y;
    report.grad_norm_final = grad_norm_final;
    report.f_final = f_final;
    report.terminated = terminated;
    Ok(ReductionReport { report, params, diagnostics })
}

fn context(e: Error, what: &str) -> Error {
    match e {
        Error::Contract(s) => Error::Contract(format!("{what}: {s}")),
        Error::Numeric(s) => Error::Numeric(format!("{what}: {s}")),
        Error::InvalidParameter(s) => Error::InvalidParameter(format!("{what}: {s}")),
        other => other,
    }
}
