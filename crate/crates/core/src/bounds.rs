//! Closed-form gradient-query counts with O-constants set to 1.
//!
//! These exist for trend comparison, not absolute prediction. Log factors are
//! evaluated literally (base 2) where a formula carries them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `(1 + √5)/2`.
pub const GOLDEN: f64 = 1.618_033_988_749_895;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Vavasis,
    LiLin,
    NesterovPolyak,
    Doikov,
    Jiang,
    FdHessianAgd,
    ApproxHessianAgd,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Vavasis,
        Method::LiLin,
        Method::NesterovPolyak,
        Method::Doikov,
        Method::Jiang,
        Method::FdHessianAgd,
        Method::ApproxHessianAgd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Vavasis => "vavasis",
            Self::LiLin => "li_lin",
            Self::NesterovPolyak => "nesterov_polyak",
            Self::Doikov => "doikov",
            Self::Jiang => "jiang",
            Self::FdHessianAgd => "fd_hessian_agd",
            Self::ApproxHessianAgd => "approx_hessian_agd",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Argument(format!("unknown method '{name}'")))
    }

    fn needs_l1(&self) -> bool {
        matches!(self, Self::LiLin | Self::Jiang)
    }
}

/// Problem constants. `d` and `n_h` are real so limits can be probed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityInputs {
    pub d: f64,
    pub l1: Option<f64>,
    pub l2: f64,
    pub big_delta: f64,
    pub eps: f64,
    pub n_h: f64,
    /// Hessian-oracle accuracy δ ≥ 0.
    pub delta: f64,
}

impl ComplexityInputs {
    pub fn validate(&self) -> Result<()> {
        let pos = [("d", self.d), ("L2", self.l2), ("Delta", self.big_delta), ("eps", self.eps), ("n_H", self.n_h)];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let Some(l1) = self.l1 {
            if !(l1 > 0.0 && l1.is_finite()) {
                return Err(Error::InvalidParameter(format!("L1 must be positive and finite, got {l1}")));
            }
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }

    /// `ε ≤ min{L₁²/L₂, Δ^{2/3}L₂^{1/3}}`, dropping the first term without L₁.
    pub fn check_regime(&self) -> Result<()> {
        check_eps_range(self.eps, self.l1, self.l2, self.big_delta)
    }

    pub fn c_delta(&self) -> f64 {
        c_delta(self.l1, self.l2, self.big_delta, self.delta, self.eps, self.n_h)
    }

    pub fn c_ell(&self) -> f64 {
        c_ell(self.l1, self.l2, self.big_delta, self.delta, self.eps)
    }
}

/// Range check shared by the solvers and the calculator.
pub fn check_eps_range(eps: f64, l1: Option<f64>, l2: f64, big_delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be positive and finite, got {eps}")));
    }
    if let Some(l1) = l1 {
        let b = l1 * l1 / l2;
        if eps > b {
            return Err(Error::Range { eps, bound_name: "L1^2/L2", bound: b });
        }
    }
    let b = big_delta.powf(2.0 / 3.0) * l2.cbrt();
    if eps > b {
        return Err(Error::Range { eps, bound_name: "Delta^(2/3)*L2^(1/3)", bound: b });
    }
    Ok(())
}

/// `min{L₁, δ + ΔL₂/(n_H ε)}`; without L₁ only the second term.
pub fn c_delta(l1: Option<f64>, l2: f64, big_delta: f64, delta: f64, eps: f64, n_h: f64) -> f64 {
    let v = delta + big_delta * l2 / (n_h * eps);
    l1.map_or(v, |l1| l1.min(v))
}

/// `min{L₁, L₂²Δ³/ε⁴ + Δδ²/ε² + δ}`; without L₁ only the second term.
pub fn c_ell(l1: Option<f64>, l2: f64, big_delta: f64, delta: f64, eps: f64) -> f64 {
    let v = l2 * l2 * big_delta.powi(3) / eps.powi(4) + big_delta * delta * delta / (eps * eps) + delta;
    l1.map_or(v, |l1| l1.min(v))
}

/// `ΔL₂^{1/4}c_δ^{1/2}ε^{-7/4}`.
pub fn approx_hessian_core(inputs: &ComplexityInputs) -> f64 {
    inputs.big_delta * inputs.l2.powf(0.25) * inputs.c_delta().sqrt() / inputs.eps.powf(1.75)
}

/// `log₂¹⁸(L₁/c_δ + 16)`, or `log₂¹⁸(c_ℓ/c_δ + 16)` when L₁ is absent.
pub fn approx_hessian_log_factor(inputs: &ComplexityInputs) -> f64 {
    let top = inputs.l1.unwrap_or_else(|| inputs.c_ell());
    (top / inputs.c_delta() + 16.0).log2().powi(18)
}

pub fn predicted_queries(method: Method, inputs: &ComplexityInputs) -> Result<f64> {
    inputs.validate()?;
    inputs.check_regime()?;
    let l1 = if method.needs_l1() {
        inputs.l1.ok_or_else(|| Error::InvalidParameter(format!("{} requires L1", method.name())))?
    } else {
        inputs.l1.unwrap_or(f64::NAN)
    };
    let ComplexityInputs { d, l2, big_delta, eps, .. } = *inputs;
    let v = match method {
        Method::Vavasis => 2f64.powf(d) + eps.powf(-2.0 * d / (d + 2.0)),
        Method::LiLin => l1.sqrt() * l2.powf(0.25) * big_delta / eps.powf(1.75),
        Method::NesterovPolyak => d * l2.sqrt() * big_delta / eps.powf(1.5),
        Method::Doikov => (d * l2).sqrt() * big_delta / eps.powf(1.5) + d,
        Method::Jiang => {
            let b = big_delta * l2 / l1;
            if eps > b {
                return Err(Error::Range { eps, bound_name: "Delta*L2/L1", bound: b });
            }
            d.powf(0.25) * l1.powf(0.25) * l2.powf(0.375) * big_delta / eps.powf(13.0 / 8.0)
        }
        Method::FdHessianAgd => d.cbrt() * l2.sqrt() * big_delta / eps.powf(1.5) + d,
        Method::ApproxHessianAgd => approx_hessian_core(inputs) * approx_hessian_log_factor(inputs),
    };
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffRatio {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub ratio: f64,
}

/// `min{A + d, B}/G` with `A = √(dL₂)Δε^{-3/2}`, `B = L₁^{1/2}L₂^{1/4}Δε^{-7/4}`
/// and `G = d^{1/4}L₁^{1/4}L₂^{3/8}Δε^{-13/8}`.
pub fn tradeoff_ratio(d: f64, l1: f64, l2: f64, big_delta: f64, eps: f64) -> TradeoffRatio {
    let a = (d * l2).sqrt() * big_delta / eps.powf(1.5);
    let b = l1.sqrt() * l2.powf(0.25) * big_delta / eps.powf(1.75);
    let g = d.powf(0.25) * l1.powf(0.25) * l2.powf(0.375) * big_delta / eps.powf(13.0 / 8.0);
    TradeoffRatio { a, b, g, ratio: (a + d).min(b) / g }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffReport {
    pub trials: u64,
    pub max_ratio: f64,
    /// `(d, L₁, L₂, Δ, ε)` at the maximum.
    pub argmax: (f64, f64, f64, f64, f64),
    pub bound: f64,
    pub pass: bool,
}

/// Samples admissible `(d, L₁, L₂, Δ, ε)` and records the largest ratio.
///
/// `d` is an integer in `[1, 10⁸]`, the constants are log-uniform in
/// `[10⁻⁴, 10⁴]`, and ε is log-uniform over eight decades below
/// `min{L₁²/L₂, Δ^{2/3}L₂^{1/3}, ΔL₂/L₁}`.
pub fn verify_tradeoff_lemma(trials: u64, seed: u64) -> TradeoffReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_uniform = |lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..=hi));
    let bound = GOLDEN.sqrt() + 1e-9;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut argmax = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..trials {
        let d = log_uniform(0.0, 8.0).round().max(1.0);
        let (l1, l2, big_delta) = (log_uniform(-4.0, 4.0), log_uniform(-4.0, 4.0), log_uniform(-4.0, 4.0));
        let top = (l1 * l1 / l2).min(big_delta.powf(2.0 / 3.0) * l2.cbrt()).min(big_delta * l2 / l1);
        let eps = top * log_uniform(-8.0, 0.0);
        let r = tradeoff_ratio(d, l1, l2, big_delta, eps).ratio;
        if r > max_ratio {
            max_ratio = r;
            argmax = (d, l1, l2, big_delta, eps);
        }
    }
    TradeoffReport { trials, max_ratio, argmax, bound, pass: max_ratio <= bound }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ComplexityInputs {
        ComplexityInputs { d: 1.0, l1: Some(1.0), l2: 1.0, big_delta: 1.0, eps: 1.0, n_h: 1.0, delta: 0.0 }
    }

    #[test]
    fn doikov_reference_value() {
        let x = ComplexityInputs { d: 4.0, ..unit() };
        assert_eq!(predicted_queries(Method::Doikov, &x).unwrap(), 6.0);
    }

    #[test]
    fn li_lin_is_one_at_unit_inputs() {
        assert_eq!(predicted_queries(Method::LiLin, &unit()).unwrap(), 1.0);
    }

    #[test]
    fn approx_hessian_core_vanishes_with_the_hessian_budget() {
        let mut x = ComplexityInputs { l1: Some(1e6), eps: 0.1, ..unit() };
        let mut last = f64::INFINITY;
        for n_h in [1e0, 1e3, 1e6, 1e9, 1e12] {
            x.n_h = n_h;
            let core = approx_hessian_core(&x);
            assert!(core < last);
            last = core;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn regime_violations_name_the_bound() {
        let x = ComplexityInputs { l1: Some(0.5), ..unit() };
        match predicted_queries(Method::LiLin, &x) {
            Err(Error::Range { bound_name, .. }) => assert_eq!(bound_name, "L1^2/L2"),
            other => panic!("{other:?}"),
        }
        let x = ComplexityInputs { l1: None, big_delta: 1e-3, ..unit() };
        match predicted_queries(Method::Doikov, &x) {
            Err(Error::Range { bound_name, .. }) => assert_eq!(bound_name, "Delta^(2/3)*L2^(1/3)"),
            other => panic!("{other:?}"),
        }
        let x = ComplexityInputs { l1: Some(2.0), ..unit() };
        match predicted_queries(Method::Jiang, &x) {
            Err(Error::Range { bound_name, .. }) => assert_eq!(bound_name, "Delta*L2/L1"),
            other => panic!("{other:?}"),
        }
        assert!(predicted_queries(Method::LiLin, &ComplexityInputs { l1: None, ..unit() }).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("newton").is_err());
    }

    #[test]
    fn outputs_decrease_in_eps() {
        // approx_hessian_agd is excluded; only its core is monotone, see below.
        let eps_grid: Vec<f64> = (0..40).map(|i| 10f64.powf(-0.1 * i as f64)).collect();
        for d in [1.0, 7.0, 100.0] {
            for m in Method::ALL.into_iter().filter(|m| *m != Method::ApproxHessianAgd) {
                let mut last = 0.0;
                for &eps in &eps_grid {
                    let x = ComplexityInputs { d, l1: Some(10.0), l2: 1.0, big_delta: 10.0, eps, n_h: 1.0, delta: 0.0 };
                    let v = match predicted_queries(m, &x) {
                        Ok(v) => v,
                        Err(Error::Range { .. }) => continue,
                        Err(e) => panic!("{e}"),
                    };
                    assert!(v.is_finite() && v > 0.0);
                    // Non-strict: 2^d can absorb the ε term in f64.
                    assert!(v >= last, "{} at eps={eps}", m.name());
                    last = v;
                }
            }
        }
        for n_h in [1.0, 100.0, 1e4] {
            let mut last = 0.0;
            for &eps in &eps_grid {
                let x = ComplexityInputs { d: 1.0, l1: Some(10.0), l2: 1.0, big_delta: 10.0, eps, n_h, delta: 0.0 };
                let core = approx_hessian_core(&x);
                assert!(core > last);
                last = core;
            }
        }
    }

    #[test]
    fn literal_log_factor_breaks_monotonicity_for_large_budgets() {
        // The core decreases in ε, but with many Hessian queries c_δ grows
        // faster than the core shrinks and the log¹⁸ factor overtakes it.
        let at =
            |eps| ComplexityInputs { d: 1.0, l1: Some(10.0), l2: 1.0, big_delta: 1.0, eps, n_h: 100.0, delta: 0.0 };
        let lo = predicted_queries(Method::ApproxHessianAgd, &at(0.1)).unwrap();
        let hi = predicted_queries(Method::ApproxHessianAgd, &at(0.2)).unwrap();
        assert!(lo < hi, "{lo:e} vs {hi:e}");
        assert!(approx_hessian_core(&at(0.1)) > approx_hessian_core(&at(0.2)));
    }

    #[test]
    fn tradeoff_single_point() {
        let r = tradeoff_ratio(1.0, 1.0, 1.0, 1.0, 1.0);
        assert_eq!((r.a, r.b, r.g, r.ratio), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn tradeoff_supremum_is_reached_on_the_balancing_manifold() {
        // With L₁ = Δ^{1/3}L₂^{2/3} and ε at its cap, the ratio is
        // min{√d + d, 1}/d^{1/4}, maximal where √d + d = 1.
        let d = GOLDEN.powi(-2);
        let (l2, big_delta) = (3.0_f64, 0.7_f64);
        let l1 = big_delta.cbrt() * l2.powf(2.0 / 3.0);
        let eps = big_delta.powf(2.0 / 3.0) * l2.cbrt();
        let r = tradeoff_ratio(d, l1, l2, big_delta, eps).ratio;
        assert!((r - GOLDEN.sqrt()).abs() < 1e-12, "{r}");
    }
}
