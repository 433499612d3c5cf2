//! Property suites bundled behind the `selfcheck` subcommand.
//!
//! Each suite is deterministic given its seed. [`Hooks`] swaps in a different
//! φ or disables finite-difference symmetrization so that mutation tests can
//! confirm the suites notice.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use critpoint_core::bounds::verify_tradeoff_lemma;
use critpoint_core::oracle::{fd_hessian, make_test_objective, FamilyParams, QueryLedger};
use critpoint_core::spectral::{
    davis_kahan_check, p_max, phi_with_pmax, pinv_on_subspace, project_interval, sym_eigendecomp, sym_spectral_norm,
    BandConstants, DavisKahanStatus,
};

/// `φ(λ, δ, p_max)`.
pub type PhiFn = fn(f64, f64, u32) -> f64;

#[derive(Debug, Clone, Copy)]
pub struct Hooks {
    pub phi: PhiFn,
    pub fd_symmetrize: bool,
}

impl Default for Hooks {
    fn default() -> Self {
        Self { phi: phi_with_pmax, fd_symmetrize: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfcheckConfig {
    /// Random `(δ, L₁)` pairs for the φ suites.
    pub phi_trials: usize,
    pub grid: usize,
    pub dk_instances: usize,
    pub fd_trials: usize,
    pub tradeoff_trials: u64,
    pub projector_trials: usize,
    pub seed: u64,
}

impl Default for SelfcheckConfig {
    fn default() -> Self {
        Self {
            phi_trials: 1000,
            grid: 10_000,
            dk_instances: 200,
            fd_trials: 100,
            tradeoff_trials: 100_000,
            projector_trials: 100,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: u64,
    pub failures: u64,
    /// Worst value of the suite's headline quantity; see `detail`.
    pub worst: f64,
    pub detail: String,
    pub elapsed_ms: u128,
}

impl SuiteResult {
    pub fn pass(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfcheckReport {
    pub suites: Vec<SuiteResult>,
}

impl SelfcheckReport {
    pub fn pass(&self) -> bool {
        self.suites.iter().all(SuiteResult::pass)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            out.push_str(&format!(
                "{:<5} {:<16} {:>7} cases {:>6} failures  {}  ({} ms)\n",
                if s.pass() { "PASS" } else { "FAIL" },
                s.name,
                s.cases,
                s.failures,
                s.detail,
                s.elapsed_ms
            ));
        }
        out
    }
}

pub fn run_all(config: &SelfcheckConfig, hooks: &Hooks) -> SelfcheckReport {
    SelfcheckReport {
        suites: vec![
            phi_monotonicity(config, hooks),
            band_inclusion(config, hooks),
            hhat_floor(config, hooks),
            davis_kahan(config),
            fd_accuracy(config, hooks),
            tradeoff_lemma(config),
            projectors(config),
        ],
    }
}

fn timed(name: &'static str, body: impl FnOnce() -> (u64, u64, f64, String)) -> SuiteResult {
    let start = Instant::now();
    let (cases, failures, worst, detail) = body();
    SuiteResult { name, cases, failures, worst, detail, elapsed_ms: start.elapsed().as_millis() }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// `δ ∈ [1e-4, 1]` and `L₁/δ ∈ [2, 2²⁰]`, both log-uniform.
fn random_delta_l1(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let delta = log_uniform(rng, 1e-4, 1.0);
    let ratio = 2f64.powf(rng.random_range(1.0..=20.0));
    (delta, delta * ratio)
}

/// `n` points symmetric about zero on `[-hi, hi]`, log-spaced in magnitude
/// from `δ/16`.
fn symmetric_grid(delta: f64, hi: f64, n: usize) -> Vec<f64> {
    let half = n / 2;
    let (lo_ln, hi_ln) = ((delta / 16.0).ln(), hi.ln());
    let mags: Vec<f64> = (0..half).map(|i| (lo_ln + (hi_ln - lo_ln) * i as f64 / (half - 1) as f64).exp()).collect();
    mags.iter().rev().map(|m| -m).chain(mags.iter().copied()).collect()
}

/// `λφ(λ)⁻¹` nondecreasing on `[-L₁, L₁]`.
pub fn phi_monotonicity(config: &SelfcheckConfig, hooks: &Hooks) -> SuiteResult {
    timed("phi_monotone", || {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (mut failures, mut worst) = (0, 0.0f64);
        for _ in 0..config.phi_trials {
            let (delta, l1) = random_delta_l1(&mut rng);
            let pm = p_max(l1, delta);
            let grid = symmetric_grid(delta, l1, config.grid);
            let vals: Vec<f64> = grid.iter().map(|&l| l / (hooks.phi)(l, delta, pm)).collect();
            let drop = vals.windows(2).map(|w| w[0] - w[1]).fold(0.0f64, f64::max);
            worst = worst.max(drop);
            if drop > 0.0 {
                failures += 1;
            }
        }
        (config.phi_trials as u64, failures, worst, format!("largest decrease {worst:.3e}"))
    })
}

/// `l_p < |λ|/φ(λ) ≤ r_p` for `2^pδ < |λ| ≤ 2^{p+1}δ`, with `1e-12` relative
/// slack on both ends. Just above a band edge the true margin over `l_p` is
/// below one ulp once `p` is large.
pub fn band_inclusion(config: &SelfcheckConfig, hooks: &Hooks) -> SuiteResult {
    timed("band", || {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 1);
        let (mut cases, mut failures, mut worst) = (0u64, 0u64, 0.0f64);
        for _ in 0..config.phi_trials {
            let (delta, l1) = random_delta_l1(&mut rng);
            let pm = p_max(l1, delta);
            let mut grid = symmetric_grid(delta, l1, config.grid);
            // Both ends of every band.
            let mut k = 1;
            while 2f64.powi(k) * delta < l1 {
                let edge = 2f64.powi(k) * delta;
                grid.extend([edge, edge * (1.0 + 1e-12), -edge]);
                k += 1;
            }
            for &lam in &grid {
                let a = lam.abs();
                if a <= 2.0 * delta || a > l1 {
                    continue;
                }
                let mut p = (a / delta).log2().floor() as i32;
                while a <= 2f64.powi(p) * delta {
                    p -= 1;
                }
                while a > 2f64.powi(p + 1) * delta {
                    p += 1;
                }
                let band = BandConstants::new(p as u32, pm);
                let v = a / (hooks.phi)(lam, delta, pm);
                cases += 1;
                let (lo, hi) = (band.l_p * (1.0 - 1e-12), band.r_p * (1.0 + 1e-12));
                if v <= lo || v > hi {
                    let miss = (lo - v).max(v - hi);
                    failures += 1;
                    worst = worst.max(miss / band.r_p);
                }
            }
        }
        (cases, failures, worst, format!("largest relative excursion {worst:.3e}"))
    })
}

/// `λ_min(Ĥ) ≥ 12δp_max − 1e-9` over the envelope `[-3δ, 2L₁]`.
///
/// Scans φ on a grid with both ends of every band, then builds Ĥ for an
/// 8×8 estimate whose spectrum contains the scan's minimizer and checks the
/// eigensolver agrees. `worst` is the smallest `λ_min(Ĥ)/(δp_max)`.
pub fn hhat_floor(config: &SelfcheckConfig, hooks: &Hooks) -> SuiteResult {
    timed("hhat_floor", || {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 2);
        let (mut failures, mut worst) = (0u64, f64::INFINITY);
        for _ in 0..config.phi_trials {
            let (delta, l1) = random_delta_l1(&mut rng);
            let pm = p_max(l1, delta);
            let mut grid: Vec<f64> =
                symmetric_grid(delta, 2.0 * l1, config.grid).into_iter().filter(|&l| l >= -3.0 * delta).collect();
            let mut k = 1;
            while 2f64.powi(k) * delta <= 2.0 * l1 {
                let edge = 2f64.powi(k) * delta;
                grid.extend([edge, edge * (1.0 + 1e-12)]);
                k += 1;
            }
            let argmin = grid
                .iter()
                .copied()
                .min_by(|a, b| (hooks.phi)(*a, delta, pm).total_cmp(&(hooks.phi)(*b, delta, pm)))
                .expect("grid is nonempty");
            let mut spectrum: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0 * delta..=2.0 * l1)).collect();
            spectrum.push(argmin);
            let q = random_orthogonal(8, &mut rng);
            let h = &q * DMatrix::from_diagonal(&DVector::from_vec(spectrum)) * q.transpose();
            let lam_min = match sym_eigendecomp(&h).and_then(|dec| {
                let hhat = dec.map_eigenvalues(|l| (hooks.phi)(l, delta, pm));
                sym_eigendecomp(&hhat)
            }) {
                Ok(dec) => dec.min_eigenvalue(),
                Err(_) => f64::NEG_INFINITY,
            };
            let ratio = lam_min / (delta * pm as f64);
            worst = worst.min(ratio);
            if lam_min < 12.0 * delta * pm as f64 - 1e-9 {
                failures += 1;
            }
        }
        (config.phi_trials as u64, failures, worst, format!("min lambda_min/(delta*p_max) = {worst:.6} vs 12"))
    })
}

/// `‖Π_[a,b](M) − Π_[a−γ,b+γ](M̃)‖ ≤ ξ/γ + 1e-9` on admissible instances.
/// `worst` is the largest `lhs − rhs`.
pub fn davis_kahan(config: &SelfcheckConfig) -> SuiteResult {
    timed("davis_kahan", || {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 3);
        let (mut admissible, mut failures, mut rejected, mut worst) = (0u64, 0u64, 0u64, f64::NEG_INFINITY);
        while (admissible as usize) < config.dk_instances {
            let d = rng.random_range(2..=20usize);
            let mut eig: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
            eig.sort_by(f64::total_cmp);
            let i = rng.random_range(0..d);
            let j = rng.random_range(i..d);
            let left_gap = if i == 0 { 1.0 } else { eig[i] - eig[i - 1] };
            let right_gap = if j + 1 == d { 1.0 } else { eig[j + 1] - eig[j] };
            let a = eig[i] - rng.random_range(0.0..=0.25) * left_gap;
            let b = eig[j] + rng.random_range(0.0..=0.25) * right_gap;
            let room = (a - if i == 0 { f64::NEG_INFINITY } else { eig[i - 1] })
                .min(if j + 1 == d { f64::INFINITY } else { eig[j + 1] } - b)
                .min(1.0);
            let gamma = rng.random_range(0.05..=0.45) * room;
            let xi = rng.random_range(0.05..=0.95) * gamma;
            let q = random_orthogonal(d, &mut rng);
            let m = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
            let m = (&m + m.transpose()) * 0.5;
            let m_tilde = &m + random_symmetric_with_norm(d, xi, &mut rng);
            match davis_kahan_check(&m, &m_tilde, a, b, gamma) {
                Ok(r) if r.status == DavisKahanStatus::Admissible => {
                    admissible += 1;
                    worst = worst.max(r.lhs - r.rhs);
                    if r.lhs > r.rhs + 1e-9 {
                        failures += 1;
                    }
                }
                _ => rejected += 1,
            }
        }
        (admissible, failures, worst, format!("max lhs-rhs {worst:.3e}, {rejected} resampled"))
    })
}

/// Finite-difference Hessians on `quad_cos` for `d ∈ {5, 20, 50}` and
/// `δ ∈ {1e-2, 1e-1}`: operator error at most δ, exactly `2d` gradient
/// queries, and an exactly symmetric estimate. `worst` is the largest
/// error/δ.
pub fn fd_accuracy(config: &SelfcheckConfig, hooks: &Hooks) -> SuiteResult {
    timed("fd_accuracy", || {
        const CELLS: [(usize, f64); 6] = [(5, 1e-2), (5, 1e-1), (20, 1e-2), (20, 1e-1), (50, 1e-2), (50, 1e-1)];
        let (mut failures, mut worst) = (0u64, 0.0f64);
        let (mut asym, mut cost, mut acc) = (0u64, 0u64, 0u64);
        for t in 0..config.fd_trials {
            let (d, delta) = CELLS[t % CELLS.len()];
            let obj = match make_test_objective("quad_cos", d, &FamilyParams::new(), config.seed.wrapping_add(t as u64))
            {
                Ok(o) => o,
                Err(_) => {
                    failures += 1;
                    continue;
                }
            };
            let exact = obj.func.hessian(&obj.x0).expect("quad_cos has an analytic Hessian");
            let mut ledger = QueryLedger::new();
            let est = match fd_hessian(&obj, &obj.x0, delta, hooks.fd_symmetrize, &mut ledger) {
                Ok(e) => e,
                Err(_) => {
                    failures += 1;
                    continue;
                }
            };
            let diff = &est.matrix - &exact;
            let err = diff.clone().svd(false, false).singular_values.max();
            worst = worst.max(err / delta);
            let mut bad = false;
            if est.max_asymmetry() != 0.0 {
                asym += 1;
                bad = true;
            }
            if ledger.grad_count() != 2 * d as u64 {
                cost += 1;
                bad = true;
            }
            if err > delta {
                acc += 1;
                bad = true;
            }
            failures += u64::from(bad);
        }
        let detail = format!("max error/delta {worst:.3e}; asymmetric {asym}, wrong cost {cost}, inaccurate {acc}");
        (config.fd_trials as u64, failures, worst, detail)
    })
}

/// Monte Carlo check of the gradient/Hessian trade-off constant.
pub fn tradeoff_lemma(config: &SelfcheckConfig) -> SuiteResult {
    timed("tradeoff_lemma", || {
        let r = verify_tradeoff_lemma(config.tradeoff_trials, config.seed ^ 4);
        (r.trials, u64::from(!r.pass), r.max_ratio, format!("max ratio {:.6} vs {:.6}", r.max_ratio, r.bound))
    })
}

/// Spectral projectors split by `|λ| ≤ ℓ`: idempotent, symmetric, commuting
/// with `M`, complementary with the right rank, and the pseudoinverse on the
/// large part is a generalized inverse there. `worst` is the largest
/// residual relative to `‖M‖`.
pub fn projectors(config: &SelfcheckConfig) -> SuiteResult {
    timed("projector", || {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 5);
        let (mut failures, mut worst) = (0u64, 0.0f64);
        for _ in 0..config.projector_trials {
            let d = rng.random_range(2..=20usize);
            let eig: Vec<f64> = (0..d)
                .map(|_| {
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    s * log_uniform(&mut rng, 1e-3, 1e3)
                })
                .collect();
            let ell = log_uniform(&mut rng, 1e-3, 1e3);
            let small = eig.iter().filter(|l| l.abs() <= ell).count();
            let q = random_orthogonal(d, &mut rng);
            let m = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
            let m = (&m + m.transpose()) * 0.5;
            let residual = (|| -> critpoint_core::Result<f64> {
                let norm = sym_spectral_norm(&m)?;
                let dec = sym_eigendecomp(&m)?;
                let ps = project_interval(&dec, 0.0, ell, true);
                let pl = DMatrix::identity(d, d) - &ps;
                let mut r = 0.0f64;
                for p in [&ps, &pl] {
                    r = r.max((p * p - p).amax());
                    r = r.max((p - p.transpose()).amax());
                    r = r.max((p * &m - &m * p).amax() / norm);
                }
                r = r.max((&ps * &pl).amax());
                r = r.max((ps.trace() - small as f64).abs());
                let compressed = &pl * &m * &pl;
                let pinv = pinv_on_subspace(&m, &pl)?;
                r = r.max((&compressed * &pinv * &compressed - &compressed).amax() / norm);
                Ok(r)
            })();
            let r = residual.unwrap_or(f64::INFINITY);
            worst = worst.max(r);
            if r > 1e-9 {
                failures += 1;
            }
        }
        (config.projector_trials as u64, failures, worst, format!("max residual {worst:.3e}"))
    })
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    g.qr().q()
}

fn random_symmetric_with_norm(d: usize, norm: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let s = (&g + g.transpose()) * 0.5;
    let n = sym_spectral_norm(&s).unwrap_or(0.0);
    if n == 0.0 {
        s
    } else {
        s * (norm / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SelfcheckConfig {
        SelfcheckConfig {
            phi_trials: 20,
            grid: 400,
            dk_instances: 10,
            fd_trials: 6,
            tradeoff_trials: 1000,
            projector_trials: 10,
            seed: 1,
        }
    }

    #[test]
    fn grid_is_symmetric_and_sorted() {
        let g = symmetric_grid(0.5, 8.0, 10);
        assert_eq!(g.len(), 10);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g[0], -g[9]);
        assert!((g[9] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn suites_other_than_the_floor_pass_on_a_small_config() {
        let r = run_all(&small(), &Hooks::default());
        for s in &r.suites {
            if s.name != "hhat_floor" {
                assert!(s.pass(), "{}", r.render());
            }
        }
    }

    #[test]
    fn floor_ratio_sits_at_the_left_edge_of_band_five() {
        // min φ/(δp_max) = (32 + 16)/5 = 9.6, approached from λ = 16δ⁺.
        let r = hhat_floor(&small(), &Hooks::default());
        assert!((r.worst - 9.6).abs() < 1e-6, "{}", r.worst);
        assert!(!r.pass());
    }

    fn phi_31(lambda: f64, delta: f64, p_max: u32) -> f64 {
        let a = lambda.abs();
        let band = (a.max(2.0 * delta) / delta).log2().ceil().max(1.0);
        (31.0 * delta + a) * p_max as f64 / band
    }

    #[test]
    fn floor_suite_catches_a_smaller_offset() {
        let baseline = hhat_floor(&small(), &Hooks::default());
        let mutated = hhat_floor(&small(), &Hooks { phi: phi_31, ..Hooks::default() });
        assert!(!mutated.pass());
        assert!(mutated.failures >= baseline.failures);
        // (31 + 16)/5 = 9.4.
        assert!((mutated.worst - 9.4).abs() < 1e-6, "{}", mutated.worst);
    }

    #[test]
    fn fd_suite_catches_missing_symmetrization() {
        let config = small();
        let r = fd_accuracy(&config, &Hooks { fd_symmetrize: false, ..Hooks::default() });
        assert!(!r.pass());
        assert!(r.detail.contains(&format!("asymmetric {}", config.fd_trials)), "{}", r.detail);
    }
}
