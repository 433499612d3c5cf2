//! Restarted approximate-Hessian AGD: lazy Hessian refresh, negative-curvature
//! steps, and Critical-or-Progress inner calls.

use nalgebra::DVector;

use crate::agd_core::{self, AgdConfig, AgdOutcome, AgdParams, AgdTraceRow, TraceLevel};
use crate::bounds::{c_delta, check_eps_range};
use crate::error::{Error, Result};
use crate::oracle::{
    query_gradient, query_value, HessianEstimate, HessianOracle, HessianSource, Objective, OracleMode, QueryLedger,
};
use crate::spectral::{p_max, sym_eigendecomp, NormOperator, SpectralDecomposition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartParams {
    pub n_h: u64,
    pub l1: f64,
    pub l2: f64,
    pub big_delta: f64,
    pub delta: f64,
    pub eps: f64,
    /// Refresh radius.
    pub r: f64,
    pub delta_tilde: f64,
    pub p_tilde: u32,
    pub iter_cap: u64,
}

impl RestartParams {
    pub fn new(n_h: u64, l1: f64, l2: f64, big_delta: f64, delta: f64, eps: f64) -> Result<Self> {
        if n_h == 0 {
            return Err(Error::InvalidParameter("n_H must be at least 1".into()));
        }
        for (name, v) in [("L1", l1), ("L2", l2), ("Delta", big_delta), ("eps", eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
        }
        let n = n_h as f64;
        let base = 3.0 * big_delta / (n * eps);
        let r = base * (l1 / (delta + l2 * base) + 16.0).log2().powi(8);
        let delta_tilde = (delta + l2 * r).min(2.0 * l1);
        let p_tilde = p_max(l1, delta_tilde);
        let cap = (p_tilde as f64).powi(12) * big_delta * (l2 / eps.powi(3)).sqrt();
        let iter_cap = if cap.ceil() >= (u64::MAX - 1) as f64 { u64::MAX } else { cap.ceil() as u64 + 1 };
        Ok(Self { n_h, l1, l2, big_delta, delta, eps, r, delta_tilde, p_tilde, iter_cap })
    }

    /// `p̃^{-12}√(ε³/L₂)`, the decrease on every iteration whose next iterate is
    /// not ε-critical.
    pub fn decrease_target(&self) -> f64 {
        (self.p_tilde as f64).powi(-12) * (self.eps.powi(3) / self.l2).sqrt()
    }

    pub fn c_delta(&self) -> f64 {
        c_delta(Some(self.l1), self.l2, self.big_delta, self.delta, self.eps, self.n_h as f64)
    }

    /// `2ΔL₂^{1/4}c_δ^{1/2}ε^{-7/4}·log₂¹⁸(L₁/c_δ + 16)`.
    pub fn grad_ceiling(&self) -> f64 {
        let c = self.c_delta();
        2.0 * self.big_delta * self.l2.powf(0.25) * c.sqrt() / self.eps.powf(1.75)
            * (self.l1 / c + 16.0).log2().powi(18)
    }

    /// `(3Δ/ε)·log₂⁸(L₁/c_δ + 16)`.
    pub fn movement_bound(&self) -> f64 {
        3.0 * self.big_delta / self.eps * (self.l1 / self.c_delta() + 16.0).log2().powi(8)
    }

    /// `(54c_δε/L₂)·log₂⁸(L₁/c_δ + 16) + ε^{3/2}/(6√L₂)`, using the looser of
    /// the two constants stated for this bound.
    pub fn suboptimality_bound(&self) -> f64 {
        let c = self.c_delta();
        54.0 * c * self.eps / self.l2 * (self.l1 / c + 16.0).log2().powi(8)
            + self.eps.powf(1.5) / (6.0 * self.l2.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    NegativeCurvature,
    InnerAgd,
}

impl StepKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::NegativeCurvature => "negative_curvature",
            Self::InnerAgd => "inner_agd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    EpsCritical,
    IterCap,
    BudgetBreach,
    /// An inner call returned its input bitwise; every later iteration would
    /// repeat it.
    Stalled,
    /// The reduction's final point missed ε.
    AccuracyMiss,
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Self::EpsCritical => "eps_critical",
            Self::IterCap => "iter_cap",
            Self::BudgetBreach => "budget_breach",
            Self::Stalled => "stalled",
            Self::AccuracyMiss => "accuracy_miss",
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: u64,
    pub kind: StepKind,
    /// `f(x^(t))`.
    pub f: f64,
    pub grad_norm: f64,
    pub dist_to_ref: f64,
    pub refreshed: bool,
    pub hess_count: u64,
    pub grad_queries: u64,
    pub inner_outcome: Option<AgdOutcome>,
    pub inner_k_stop: Option<u64>,
    pub inner: Vec<AgdTraceRow>,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub x_out: DVector<f64>,
    pub grad_norm_final: f64,
    pub f_final: f64,
    pub ledger: QueryLedger,
    pub iterations: u64,
    pub step_kinds: Vec<StepKind>,
    pub terminated: Termination,
    pub params: RestartParams,
    /// Empty unless tracing is on.
    pub trace: Vec<StepRecord>,
}

impl SolverReport {
    /// Iterations `t` whose successor is not ε-critical and whose decrease
    /// falls short of the target (with `1e-12` slack). Needs a trace.
    pub fn decrease_violations(&self) -> Vec<u64> {
        let target = self.params.decrease_target();
        let mut out = Vec::new();
        for w in self.trace.windows(2) {
            if w[1].grad_norm > self.params.eps && w[1].f - w[0].f > -target + 1e-12 {
                out.push(w[0].t);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Multiplier on δ̃ for the inner accuracy; the listing uses 4.
    pub inner_delta_factor: f64,
    /// Constant relaxation passed to the inner calls; 1 is faithful.
    pub scale: f64,
    /// Lowers the iteration cap.
    pub iteration_limit: Option<u64>,
    pub trace: TraceLevel,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { inner_delta_factor: 4.0, scale: 1.0, iteration_limit: None, trace: TraceLevel::Summary, seed: 0 }
    }
}

/// Runs the restarted solver with a fresh oracle in `mode`.
pub fn restarted_agd(obj: &Objective, delta: f64, eps: f64, n_h: u64, mode: OracleMode) -> Result<SolverReport> {
    restarted_agd_with(obj, delta, eps, n_h, mode, &SolverOptions::default())
}

pub fn restarted_agd_with(
    obj: &Objective,
    delta: f64,
    eps: f64,
    n_h: u64,
    mode: OracleMode,
    options: &SolverOptions,
) -> Result<SolverReport> {
    let certified = mode.certified_delta(obj)?;
    if !(delta >= certified) {
        return Err(Error::InvalidParameter(format!(
            "delta={delta} is below the {} oracle's accuracy {certified}",
            mode.label()
        )));
    }
    let mut oracle = HessianOracle::new(mode, options.seed);
    let mut ledger = QueryLedger::new();
    let out = run_restarted(obj, delta, eps, n_h, &mut oracle, None, options, &mut ledger)?;
    Ok(out.into_report(ledger))
}

/// Everything but the ledger, which the caller owns.
#[derive(Debug, Clone)]
pub(crate) struct RestartedOutput {
    pub x_out: DVector<f64>,
    pub grad_norm_final: f64,
    pub iterations: u64,
    pub step_kinds: Vec<StepKind>,
    pub terminated: Termination,
    pub params: RestartParams,
    pub trace: Vec<StepRecord>,
    pub f_final: f64,
}

impl RestartedOutput {
    pub fn into_report(self, ledger: QueryLedger) -> SolverReport {
        SolverReport {
            x_out: self.x_out,
            grad_norm_final: self.grad_norm_final,
            f_final: self.f_final,
            ledger,
            iterations: self.iterations,
            step_kinds: self.step_kinds,
            terminated: self.terminated,
            params: self.params,
            trace: self.trace,
        }
    }
}

/// Core loop. `initial` is a Hessian estimate at `obj.x0` that was already
/// charged by the caller; it counts as one of the `n_h` queries.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_restarted(
    obj: &Objective,
    delta: f64,
    eps: f64,
    n_h: u64,
    source: &mut dyn HessianSource,
    initial: Option<HessianEstimate>,
    options: &SolverOptions,
    ledger: &mut QueryLedger,
) -> Result<RestartedOutput> {
    let l1 = obj.require_l1()?;
    check_eps_range(eps, Some(l1), obj.l2, obj.delta_bound)?;
    let params = RestartParams::new(n_h, l1, obj.l2, obj.delta_bound, delta, eps)?;
    if !(options.inner_delta_factor > 0.0) {
        return Err(Error::InvalidParameter("inner_delta_factor must be positive".into()));
    }
    let inner_delta = options.inner_delta_factor * params.delta_tilde;
    let agd_params = AgdParams::new(inner_delta, eps, l1, obj.l2, options.scale)?;
    let agd_config = AgdConfig { scale: options.scale, trace: options.trace, require_delta_le_l1: false };
    let cap = options.iteration_limit.map_or(params.iter_cap, |l| l.min(params.iter_cap));

    let mut x = obj.x0.clone();
    let mut x_bar = x.clone();
    let h = match initial {
        Some(h) => h,
        None => source.query(obj, &x, ledger)?,
    };
    let mut hess_used = 1u64;
    let mut decomp = decompose(&h)?;
    let mut op: Option<NormOperator> = None;

    let mut step_kinds = Vec::new();
    let mut trace = Vec::new();
    let mut t = 0u64;
    let (terminated, grad_norm_final) = loop {
        let g = query_gradient(obj, &x, ledger)?;
        let grad_norm = g.norm();
        let f = if options.trace != TraceLevel::Off { query_value(obj, &x, ledger)? } else { f64::NAN };
        if grad_norm <= eps {
            if options.trace != TraceLevel::Off {
                trace.push(terminal_row(t, f, grad_norm, &x, &x_bar, hess_used, ledger));
            }
            break (Termination::EpsCritical, grad_norm);
        }
        if t >= cap {
            break (Termination::IterCap, grad_norm);
        }
        let dist = (&x - &x_bar).norm();
        let refreshed = dist >= params.r;
        if refreshed {
            if hess_used >= n_h {
                break (Termination::BudgetBreach, grad_norm);
            }
            x_bar = x.clone();
            decomp = decompose(&source.query(obj, &x, ledger)?)?;
            hess_used += 1;
            op = None;
        }
        let (x_next, kind, inner_outcome, inner_k_stop, inner) = if decomp.min_eigenvalue() < -3.0 * params.delta_tilde
        {
            let v = descent_direction(&decomp, &g);
            (&x + v * params.r, StepKind::NegativeCurvature, None, None, Vec::new())
        } else {
            if op.is_none() {
                // Checked here, not up front: runs that only take
                // negative-curvature steps never need it.
                agd_core::check_preconditions(inner_delta, eps, l1, obj.l2, &agd_config)?;
                op = Some(NormOperator::from_decomposition(decomp.clone(), inner_delta, l1)?);
            }
            let op = op.as_ref().expect("built above");
            let res = agd_core::run(&x, op, &agd_params, obj, ledger, options.trace)?;
            (res.x_out, StepKind::InnerAgd, Some(res.outcome), Some(res.k_stop), res.trace)
        };
        step_kinds.push(kind);
        if options.trace != TraceLevel::Off {
            trace.push(StepRecord {
                t,
                kind,
                f,
                grad_norm,
                dist_to_ref: dist,
                refreshed,
                hess_count: hess_used,
                grad_queries: ledger.grad_count(),
                inner_outcome,
                inner_k_stop,
                inner,
            });
        }
        t += 1;
        if x_next == x {
            break (Termination::Stalled, grad_norm);
        }
        x = x_next;
    };
    let f_final = query_value(obj, &x, ledger)?;
    Ok(RestartedOutput { x_out: x, grad_norm_final, iterations: t, step_kinds, terminated, params, trace, f_final })
}

fn decompose(h: &HessianEstimate) -> Result<SpectralDecomposition> {
    sym_eigendecomp(&h.matrix)
}

fn terminal_row(
    t: u64,
    f: f64,
    grad_norm: f64,
    x: &DVector<f64>,
    x_bar: &DVector<f64>,
    hess_count: u64,
    ledger: &QueryLedger,
) -> StepRecord {
    StepRecord {
        t,
        kind: StepKind::InnerAgd,
        f,
        grad_norm,
        dist_to_ref: (x - x_bar).norm(),
        refreshed: false,
        hess_count,
        grad_queries: ledger.grad_count(),
        inner_outcome: None,
        inner_k_stop: None,
        inner: Vec::new(),
    }
}

/// Unit eigenvector of `λ_min` with `⟨v, g⟩ ≤ 0`. On a tie the first nonzero
/// component is positive.
pub fn descent_direction(decomp: &SpectralDecomposition, g: &DVector<f64>) -> DVector<f64> {
    let mut v: DVector<f64> = decomp.eigenvectors.column(0).into_owned();
    v /= v.norm();
    if v.iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0) {
        v.neg_mut();
    }
    if v.dot(g) > 0.0 {
        v.neg_mut();
    }
    v
}
