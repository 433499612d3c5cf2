//! Critical-or-Progress: accelerated gradient descent in the norm induced by
//! Ĥ, with a movement trigger and an averaged fallback output.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::oracle::{query_gradient_into, query_value, HessianEstimate, Objective, QueryLedger};
use crate::spectral::{p_max, sym_eigendecomp, NormOperator};

/// How much per-iteration detail a solver records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceLevel {
    Off,
    /// One row per outer iteration; no inner AGD rows.
    #[default]
    Summary,
    /// Every inner AGD iteration as well. Costs one value query per row.
    Full,
}

/// Step size, momentum and trigger constants for one call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgdParams {
    pub p_max: u32,
    pub eps_tilde: f64,
    pub eta: f64,
    pub b: f64,
    pub k: u64,
    pub theta: f64,
    /// Constant relaxation in (0, 1]; 1 is faithful.
    pub scale: f64,
    pub l2: f64,
    /// `12·δ·(s·p_max)·B²`.
    pub trigger_threshold: f64,
}

impl AgdParams {
    pub fn new(delta: f64, eps: f64, l1: f64, l2: f64, scale: f64) -> Result<Self> {
        for (name, v) in [("delta", delta), ("eps", eps), ("L1", l1), ("L2", l2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::InvalidParameter(format!("scale must lie in (0, 1], got {scale}")));
        }
        let p_max = p_max(l1, delta);
        let pm = p_max as f64;
        let eps_tilde = eps / (scale * pm.powi(8));
        let b = (eps_tilde / l2).sqrt() / 3.0;
        let k_real = (delta.sqrt() / (eps_tilde * l2).powf(0.25)).ceil().max(1.0);
        let k = if k_real >= u64::MAX as f64 { u64::MAX - 1 } else { k_real as u64 };
        Ok(Self {
            p_max,
            eps_tilde,
            eta: 0.25,
            b,
            k,
            theta: 1.0 / k as f64,
            scale,
            l2,
            trigger_threshold: 12.0 * delta * (scale * pm) * b * b,
        })
    }

    /// `L₂^{-1/2}·ε̃^{3/2}`, the guaranteed decrease when the output is not ε-critical.
    pub fn progress_target(&self) -> f64 {
        self.eps_tilde.powf(1.5) / self.l2.sqrt()
    }

    pub fn movement_bound(&self) -> f64 {
        7.0 * self.b
    }

    /// `6δε/L₂ + ε^{3/2}/(6√L₂)`, a ceiling on `f(x_out) − f(x0)`. Its
    /// derivation covers the averaged output only, so only that case is checked.
    pub fn value_ceiling(&self, delta: f64, eps: f64) -> f64 {
        6.0 * delta * eps / self.l2 + eps.powf(1.5) / (6.0 * self.l2.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgdOutcome {
    TriggeredProgress,
    AveragedOutput,
}

impl AgdOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            Self::TriggeredProgress => "triggered_progress",
            Self::AveragedOutput => "averaged_output",
        }
    }
}

/// One inner iteration, recorded at [`TraceLevel::Full`].
#[derive(Debug, Clone)]
pub struct AgdTraceRow {
    pub k: u64,
    pub f_y: f64,
    pub grad_norm_y: f64,
    /// `‖Ĥ^{1/2}(x^(k+1) − x^(k))‖`.
    pub step_hnorm: f64,
    /// `k·Σ_{κ<k} ‖Ĥ^{1/2}(x^(κ+1) − x^(κ))‖²`.
    pub trigger_lhs: f64,
    pub y: DVector<f64>,
    pub grad_y: DVector<f64>,
    pub x_next: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct AgdResult {
    pub x_out: DVector<f64>,
    pub outcome: AgdOutcome,
    /// Iteration at which the trigger fired, or `K` for the averaged output.
    pub k_stop: u64,
    /// Argmin index used for the average.
    pub k0: Option<u64>,
    pub movement: f64,
    pub grad_queries: u64,
    pub params: AgdParams,
    pub trace: Vec<AgdTraceRow>,
}

impl AgdResult {
    pub fn within_movement_bound(&self) -> bool {
        self.movement <= self.params.movement_bound() + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgdConfig {
    pub scale: f64,
    pub trace: TraceLevel,
    /// Enforce `δ ≤ L₁`. The restarted solver calls with `4δ̃`, which can be
    /// as large as `8L₁`, and turns this off.
    pub require_delta_le_l1: bool,
}

impl Default for AgdConfig {
    fn default() -> Self {
        Self { scale: 1.0, trace: TraceLevel::Summary, require_delta_le_l1: true }
    }
}

/// Faithful Critical-or-Progress from `x0` with Hessian estimate `h`.
#[allow(clippy::too_many_arguments)]
pub fn critical_or_progress(
    x0: &DVector<f64>,
    h: &HessianEstimate,
    delta: f64,
    eps: f64,
    l1: f64,
    l2: f64,
    obj: &Objective,
    ledger: &mut QueryLedger,
) -> Result<AgdResult> {
    critical_or_progress_with(x0, h, delta, eps, l1, l2, obj, ledger, &AgdConfig::default())
}

#[allow(clippy::too_many_arguments)]
pub fn critical_or_progress_with(
    x0: &DVector<f64>,
    h: &HessianEstimate,
    delta: f64,
    eps: f64,
    l1: f64,
    l2: f64,
    obj: &Objective,
    ledger: &mut QueryLedger,
    config: &AgdConfig,
) -> Result<AgdResult> {
    check_dim(obj.dim(), x0.len())?;
    check_dim(obj.dim(), h.matrix.nrows())?;
    let params = AgdParams::new(delta, eps, l1, l2, config.scale)?;
    check_preconditions(delta, eps, l1, l2, config)?;
    let op = NormOperator::from_decomposition(sym_eigendecomp(&h.matrix)?, delta, l1)?;
    run(x0, &op, &params, obj, ledger, config.trace)
}

pub(crate) fn check_preconditions(delta: f64, eps: f64, l1: f64, l2: f64, config: &AgdConfig) -> Result<()> {
    if config.require_delta_le_l1 && delta > l1 {
        return Err(Error::Contract(format!("requires delta <= L1, got delta={delta}, L1={l1}")));
    }
    if eps > delta * delta / l2 {
        return Err(Error::Contract(format!("requires eps <= delta^2/L2 = {:e}, got eps={eps}", delta * delta / l2)));
    }
    Ok(())
}

/// Runs the iteration with a prebuilt `Ĥ`. `op` must have been built with the
/// same `δ` and `L₁` as `params`.
pub(crate) fn run(
    x0: &DVector<f64>,
    op: &NormOperator,
    params: &AgdParams,
    obj: &Objective,
    ledger: &mut QueryLedger,
    trace_level: TraceLevel,
) -> Result<AgdResult> {
    let d = x0.len();
    let k_max = params.k;
    let half = k_max / 2;
    let three_quarters = ((k_max as u128 * 3) / 4) as u64;
    let momentum = 1.0 - params.theta;
    let start_grads = ledger.grad_count();

    let mut x_prev = x0.clone();
    let mut x = x0.clone();
    let mut x_next = DVector::zeros(d);
    let mut y = DVector::zeros(d);
    let mut g = DVector::zeros(d);
    let mut s = DVector::zeros(d);
    let mut hs = DVector::zeros(d);

    // Σ_{κ<k} ‖Ĥ^{1/2}(x^(κ+1) − x^(κ))‖²
    let mut step_sum = 0.0;
    // Running Σ y^(j) for j ≥ ⌊K/2⌋, snapshotted at each new argmin candidate.
    let mut running = DVector::zeros(d);
    let mut best = f64::INFINITY;
    let mut snapshot: Option<(DVector<f64>, u64)> = None;
    let mut trace = Vec::new();

    let mut k: u64 = 0;
    loop {
        for i in 0..d {
            y[i] = x[i] + momentum * (x[i] - x_prev[i]);
        }
        query_gradient_into(obj, &y, &mut g, ledger)?;
        x_next.copy_from(&y);
        x_next.gemv(-params.eta, &op.hhat_inv, &g, 1.0);
        s.copy_from(&x_next);
        s -= &x;
        hs.gemv(1.0, &op.hhat_sqrt, &s, 0.0);
        let step_sq = hs.norm_squared();
        if !step_sq.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite step at inner iteration {k} (|y| = {:e}, |grad| = {:e})",
                y.norm(),
                g.norm()
            )));
        }
        let lhs = k as f64 * step_sum;
        if trace_level == TraceLevel::Full {
            trace.push(AgdTraceRow {
                k,
                f_y: query_value(obj, &y, ledger)?,
                grad_norm_y: g.norm(),
                step_hnorm: step_sq.sqrt(),
                trigger_lhs: lhs,
                y: y.clone(),
                grad_y: g.clone(),
                x_next: x_next.clone(),
            });
        }
        if lhs >= params.trigger_threshold {
            return Ok(AgdResult {
                movement: (&x - x0).norm(),
                x_out: x,
                outcome: AgdOutcome::TriggeredProgress,
                k_stop: k,
                k0: None,
                grad_queries: ledger.grad_count() - start_grads,
                params: *params,
                trace,
            });
        }
        if k >= half {
            running += &y;
        }
        if k >= three_quarters && k < k_max && step_sq < best {
            best = step_sq;
            snapshot = Some((running.clone(), k));
        }
        step_sum += step_sq;

        // A bitwise fixed point repeats forever: y = x and the same gradient.
        if x_next == x && x == x_prev && k < k_max {
            return finish_at_fixed_point(
                x0,
                x,
                k,
                step_sum,
                running,
                best,
                snapshot,
                half,
                three_quarters,
                params,
                ledger,
                start_grads,
                trace,
            );
        }
        if k == k_max {
            break;
        }
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut x, &mut x_next);
        k += 1;
    }

    // ⌊3K/4⌋ ≥ ⌊K/2⌋ for every K ≥ 1, so the window is nonempty and its
    // argmin never precedes the start of the average.
    let (sum, k0) = snapshot.expect("argmin window is nonempty for K >= 1");
    debug_assert!(k0 >= half);
    let x_out = sum / (k0 + 1 - half) as f64;
    Ok(AgdResult {
        movement: (&x_out - x0).norm(),
        x_out,
        outcome: AgdOutcome::AveragedOutput,
        k_stop: k_max,
        k0: Some(k0),
        grad_queries: ledger.grad_count() - start_grads,
        params: *params,
        trace,
    })
}

/// Completes a run whose iterates have stopped moving in floating point.
///
/// From iteration `k` on, every `y^(j)` equals `x` and every step is zero, so
/// the remaining iterations are determined without evaluating them. Their
/// gradient queries are still charged, since the listing makes them.
#[allow(clippy::too_many_arguments)]
fn finish_at_fixed_point(
    x0: &DVector<f64>,
    x: DVector<f64>,
    k: u64,
    step_sum: f64,
    running: DVector<f64>,
    best: f64,
    snapshot: Option<(DVector<f64>, u64)>,
    half: u64,
    three_quarters: u64,
    params: &AgdParams,
    ledger: &mut QueryLedger,
    start_grads: u64,
    trace: Vec<AgdTraceRow>,
) -> Result<AgdResult> {
    let k_max = params.k;
    // Trigger at the first j > k with j·step_sum ≥ threshold.
    if step_sum > 0.0 {
        let j = (params.trigger_threshold / step_sum).ceil().max((k + 1) as f64);
        if j <= k_max as f64 {
            let j = j as u64;
            ledger.charge_replayed_grads(j - k);
            return Ok(AgdResult {
                movement: (&x - x0).norm(),
                x_out: x,
                outcome: AgdOutcome::TriggeredProgress,
                k_stop: j,
                k0: None,
                grad_queries: ledger.grad_count() - start_grads,
                params: *params,
                trace,
            });
        }
    }
    ledger.charge_replayed_grads(k_max - k);
    // Later steps are zero, so the argmin moves to the first later index in
    // the window unless a zero step was already recorded.
    let first_later = (k + 1).max(three_quarters);
    let (sum, k0) = if best > 0.0 && first_later < k_max {
        let added = first_later + 1 - (k + 1).max(half);
        (running + &x * added as f64, first_later)
    } else {
        snapshot.expect("argmin window is nonempty for K >= 1")
    };
    let x_out = sum / (k0 + 1 - half) as f64;
    Ok(AgdResult {
        movement: (&x_out - x0).norm(),
        x_out,
        outcome: AgdOutcome::AveragedOutput,
        k_stop: k_max,
        k0: Some(k0),
        grad_queries: ledger.grad_count() - start_grads,
        params: *params,
        trace,
    })
}
