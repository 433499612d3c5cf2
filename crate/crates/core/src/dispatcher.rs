//! Top-level entry: picks the restarted solver or the reduction, and the
//! finite-difference pipeline that chooses its own Hessian budget.

use crate::bounds::{c_delta, c_ell, check_eps_range};
use crate::error::{Error, Result};
use crate::oracle::{Objective, OracleMode};
use crate::reduction::{reduction_to_unbounded_with, ReductionDiagnostics, ReductionParams};
use crate::restarted::{restarted_agd_with, RestartParams, SolverOptions, SolverReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Restarted,
    Reduction,
}

impl Branch {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Restarted => "restarted",
            Self::Reduction => "reduction",
        }
    }
}

/// Which threshold decides the branch. The two differ only in `Δδ/ε²` versus
/// `Δδ²/ε²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DispatchRule {
    /// `L₁ ≤ L₂²Δ³/ε⁴ + Δδ/ε² + δ`.
    #[default]
    ProofCondition,
    /// `L₁ ≤ L₂²Δ³/ε⁴ + Δδ²/ε² + δ`, the expression inside `c_ℓ`.
    CEll,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchDecision {
    pub branch: Branch,
    pub rule: DispatchRule,
    pub threshold_value: f64,
    pub c_delta: f64,
    pub c_ell: f64,
    /// `ΔL₂^{1/4}c^{1/2}ε^{-7/4}` with the branch's effective `c`.
    pub core: f64,
    /// `2·log₂¹⁸(·)` as implemented by the branch.
    pub log_factor: f64,
    pub predicted_grad_ceiling: f64,
}

pub fn decide(
    l1: Option<f64>,
    l2: f64,
    big_delta: f64,
    delta: f64,
    eps: f64,
    n_h: u64,
    rule: DispatchRule,
) -> Result<DispatchDecision> {
    check_eps_range(eps, l1, l2, big_delta)?;
    let lead = l2 * l2 * big_delta.powi(3) / eps.powi(4) + delta;
    let threshold_value = match rule {
        DispatchRule::ProofCondition => lead + big_delta * delta / (eps * eps),
        DispatchRule::CEll => lead + big_delta * delta * delta / (eps * eps),
    };
    let branch = match l1 {
        Some(l1) if l1 <= threshold_value => Branch::Restarted,
        _ => Branch::Reduction,
    };
    let cd = c_delta(l1, l2, big_delta, delta, eps, n_h as f64);
    let scale = big_delta * l2.powf(0.25) / eps.powf(1.75);
    let (core, log_factor) = match branch {
        Branch::Restarted => {
            let l1 = l1.expect("restarted branch has L1");
            (scale * cd.sqrt(), 2.0 * (l1 / cd + 16.0).log2().powi(18))
        }
        Branch::Reduction => {
            let p = ReductionParams::new(l1, l2, big_delta, delta, eps, n_h)?;
            let c = p.ell.min(delta + big_delta * l2 / (n_h as f64 * eps));
            (scale * c.sqrt(), 2.0 * p.lg.powi(18))
        }
    };
    Ok(DispatchDecision {
        branch,
        rule,
        threshold_value,
        c_delta: cd,
        c_ell: c_ell(l1, l2, big_delta, delta, eps),
        core,
        log_factor,
        predicted_grad_ceiling: core * log_factor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DispatchOptions {
    pub rule: DispatchRule,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub report: SolverReport,
    pub decision: DispatchDecision,
    pub reduction: Option<(ReductionParams, ReductionDiagnostics)>,
}

impl Solution {
    pub fn restart_params(&self) -> &RestartParams {
        &self.report.params
    }
}

pub fn find_critical_point(obj: &Objective, delta: f64, eps: f64, n_h: u64, mode: OracleMode) -> Result<Solution> {
    find_critical_point_with(obj, delta, eps, n_h, mode, &DispatchOptions::default())
}

pub fn find_critical_point_with(
    obj: &Objective,
    delta: f64,
    eps: f64,
    n_h: u64,
    mode: OracleMode,
    options: &DispatchOptions,
) -> Result<Solution> {
    let decision = decide(obj.l1, obj.l2, obj.delta_bound, delta, eps, n_h, options.rule)?;
    match decision.branch {
        Branch::Restarted => {
            let report = restarted_agd_with(obj, delta, eps, n_h, mode, &options.solver)?;
            Ok(Solution { report, decision, reduction: None })
        }
        Branch::Reduction => {
            let r = reduction_to_unbounded_with(obj, delta, eps, n_h, mode, &options.solver)?;
            Ok(Solution { report: r.report, decision, reduction: Some((r.params, r.diagnostics)) })
        }
    }
}

/// Oracle accuracy used by the finite-difference pipeline:
/// `min{ΔL₂/(n_H ε), L₁}`. This balances `δ` against the other term of `c_δ`.
pub fn fd_delta(l1: Option<f64>, l2: f64, big_delta: f64, eps: f64, n_h: u64) -> f64 {
    let v = big_delta * l2 / (n_h as f64 * eps);
    l1.map_or(v, |l1| v.min(l1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetChoice {
    pub n_h: u64,
    pub delta: f64,
    /// Predicted gradient ceiling plus `2d·n_H` for the Hessian builds.
    pub predicted_total: f64,
}

/// Predicted total gradient queries of the finite-difference pipeline at one
/// budget, or `None` when the parameters are inadmissible.
pub fn fd_predicted_total(
    d: usize,
    l1: Option<f64>,
    l2: f64,
    big_delta: f64,
    eps: f64,
    n_h: u64,
    rule: DispatchRule,
) -> Option<BudgetChoice> {
    let delta = fd_delta(l1, l2, big_delta, eps, n_h);
    let decision = decide(l1, l2, big_delta, delta, eps, n_h, rule).ok()?;
    let predicted_total = decision.predicted_grad_ceiling + 2.0 * d as f64 * n_h as f64;
    predicted_total.is_finite().then_some(BudgetChoice { n_h, delta, predicted_total })
}

/// Exact scan of `n_H ∈ {1, …, ⌈d^{2/3}⌉·64}`; ties go to the smaller budget.
pub fn select_hessian_budget(
    d: usize,
    l1: Option<f64>,
    l2: f64,
    big_delta: f64,
    eps: f64,
    rule: DispatchRule,
) -> Result<BudgetChoice> {
    let hi = ((d as f64).powf(2.0 / 3.0).ceil() as u64).max(1) * 64;
    let mut best: Option<BudgetChoice> = None;
    for n_h in 1..=hi {
        if let Some(c) = fd_predicted_total(d, l1, l2, big_delta, eps, n_h, rule) {
            if best.is_none_or(|b| c.predicted_total < b.predicted_total) {
                best = Some(c);
            }
        }
    }
    best.ok_or_else(|| Error::Contract(format!("no admissible Hessian budget in 1..={hi}")))
}

pub fn fd_pipeline(obj: &Objective, eps: f64, n_h: Option<u64>, options: &DispatchOptions) -> Result<Solution> {
    let n_h = match n_h {
        Some(n) => n,
        None => select_hessian_budget(obj.dim(), obj.l1, obj.l2, obj.delta_bound, eps, options.rule)?.n_h,
    };
    let delta = fd_delta(obj.l1, obj.l2, obj.delta_bound, eps, n_h);
    find_critical_point_with(obj, delta, eps, n_h, OracleMode::FiniteDifference { delta }, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_l1_takes_the_restarted_branch() {
        let d = decide(Some(1.0), 1.0, 1.0, 0.0, 0.1, 1, DispatchRule::ProofCondition).unwrap();
        assert_eq!(d.branch, Branch::Restarted);
        // L₂²Δ³/ε⁴ = 10⁴ up to rounding of 0.1⁴.
        assert!(d.threshold_value >= 1e4 * (1.0 - 1e-12));
    }

    #[test]
    fn missing_l1_forces_the_reduction() {
        let d = decide(None, 1.0, 1.0, 0.0, 0.1, 1, DispatchRule::ProofCondition).unwrap();
        assert_eq!(d.branch, Branch::Reduction);
    }

    #[test]
    fn rules_differ_only_in_the_delta_term() {
        // With δ = 0.5, Δδ/ε² ≈ 6173 and Δδ²/ε² ≈ 3086 straddle L₁.
        let (l2, big_delta, eps, delta) = (1e-6, 1.0, 9e-3, 0.5);
        let p = decide(Some(5000.0), l2, big_delta, delta, eps, 1, DispatchRule::ProofCondition).unwrap();
        let c = decide(Some(5000.0), l2, big_delta, delta, eps, 1, DispatchRule::CEll).unwrap();
        assert_eq!(p.branch, Branch::Restarted);
        assert_eq!(c.branch, Branch::Reduction);
    }

    #[test]
    fn ceiling_is_core_times_log_factor() {
        let d = decide(Some(1.0), 1.0, 1.0, 0.0, 0.1, 4, DispatchRule::ProofCondition).unwrap();
        let cd = (1.0f64).min(1.0 / 0.4);
        let core = 0.1f64.powf(-1.75) * cd.sqrt();
        assert_eq!(d.core, core);
        assert_eq!(d.predicted_grad_ceiling, core * 2.0 * (1.0 / cd + 16.0).log2().powi(18));
    }

    #[test]
    fn out_of_range_eps_names_its_bound() {
        match decide(Some(0.1), 1.0, 1.0, 0.0, 0.5, 1, DispatchRule::ProofCondition) {
            Err(Error::Range { bound_name, .. }) => assert_eq!(bound_name, "L1^2/L2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fd_delta_is_capped_by_l1() {
        assert_eq!(fd_delta(Some(0.5), 1.0, 1.0, 0.1, 1), 0.5);
        assert_eq!(fd_delta(None, 1.0, 1.0, 0.1, 4), 2.5);
    }
}
