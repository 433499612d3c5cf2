//! Built-in test families with analytic constants.
//!
//! These are benchmark choices of this crate, not part of the method.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Objective, SmoothFunction};
use crate::error::{Error, Result};

pub const FAMILIES: [&str; 4] = ["quad_cos", "separable_quartic", "saddle_band", "random_cubic_reg"];

/// Named scalar parameters for a family. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FamilyParams(BTreeMap<String, f64>);

impl FamilyParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    pub fn insert(&mut self, key: &str, value: f64) {
        self.0.insert(key.to_string(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.0.iter()
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.0.get(key).copied().unwrap_or(default)
    }

    fn check_keys(&self, family: &str, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Argument(format!(
                "unknown parameter '{k}' for family {family} (allowed: {})",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

/// Builds a seeded instance of a named family.
///
/// Every family accepts `delta_bound`, which replaces the computed Δ
/// certificate with a looser value.
pub fn make_test_objective(family: &str, d: usize, params: &FamilyParams, seed: u64) -> Result<Objective> {
    if d == 0 {
        return Err(Error::Argument("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (obj, gap) = match family {
        "quad_cos" => {
            params.check_keys(family, &["a_min", "a_max", "beta", "stiff", "rotate", "x0_scale", "delta_bound"])?;
            QuadCos::instance(d, params, &mut rng)?
        }
        "separable_quartic" => {
            params.check_keys(family, &["x0_scale", "delta_bound"])?;
            SeparableQuartic::instance(d, params, &mut rng)?
        }
        "saddle_band" => {
            params.check_keys(family, &["neg", "a_lo", "a_hi", "x0_scale", "delta_bound"])?;
            SaddleBand::instance(d, params, &mut rng)?
        }
        "random_cubic_reg" => {
            params.check_keys(family, &["g_scale", "a_scale", "sigma", "x0_scale", "delta_bound"])?;
            RandomCubicReg::instance(d, params, &mut rng)?
        }
        other => {
            return Err(Error::Argument(format!("unknown family '{other}' (expected one of {})", FAMILIES.join(", "))))
        }
    };
    let delta_bound = match params.0.get("delta_bound") {
        Some(&db) if db < gap => {
            return Err(Error::InvalidParameter(format!("delta_bound {db} is below the certified gap {gap}")))
        }
        Some(&db) => db,
        None => gap,
    };
    Objective { delta_bound, ..obj }.validated()
}

impl Objective {
    fn validated(self) -> Result<Self> {
        Objective::new(self.name, self.func, self.l1, self.l2, self.delta_bound, self.x0)
    }
}

fn standard_normal(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix column signs so the distribution does not depend on QR conventions.
    let mut q = q;
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![hi],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `f(x) = ½xᵀAx + β Σ cos(xᵢ)` with `A ⪰ 0`; `L₂ = β`, `L₁ = ‖A‖ + β`.
#[derive(Debug, Clone)]
pub struct QuadCos {
    pub a: DMatrix<f64>,
    pub beta: f64,
}

impl QuadCos {
    fn instance(d: usize, params: &FamilyParams, rng: &mut ChaCha8Rng) -> Result<(Objective, f64)> {
        let a_min = params.get("a_min", 0.25);
        let a_max = params.get("a_max", 4.0);
        let beta = params.get("beta", 0.5);
        let stiff = params.get("stiff", 0.0);
        let rotate = params.get("rotate", 1.0) != 0.0;
        let x0_scale = params.get("x0_scale", 1.0);
        if !(0.0 <= a_min && a_min <= a_max && beta > 0.0 && stiff >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "quad_cos needs 0 <= a_min <= a_max, beta > 0, stiff >= 0; got a_min={a_min}, a_max={a_max}, beta={beta}, stiff={stiff}"
            )));
        }
        // A stiff eigenvalue lives on the first axis so that the remaining
        // block is never mixed with it in floating point.
        let offset = usize::from(stiff > 0.0);
        if offset == 1 && d < 2 {
            return Err(Error::InvalidParameter("quad_cos with a stiff direction needs d >= 2".into()));
        }
        let m = d - offset;
        let spectrum = linspace(a_min, a_max, m);
        let q = if rotate { random_orthogonal(m, rng) } else { DMatrix::identity(m, m) };
        let block = &q * DMatrix::from_diagonal(&DVector::from_vec(spectrum)) * q.transpose();
        let mut a = DMatrix::zeros(d, d);
        a.view_mut((offset, offset), (m, m)).copy_from(&((&block + block.transpose()) * 0.5));
        if offset == 1 {
            a[(0, 0)] = stiff;
        }
        let mut x0 = standard_normal(d, rng) * x0_scale;
        if offset == 1 {
            x0[0] *= (a_max / stiff).sqrt();
        }
        let func = QuadCos { a, beta };
        let lower = d as f64 * scalar_floor(a_min, beta);
        let gap = func.value(&x0) - lower;
        let l1 = a_max.max(stiff) + beta;
        let obj =
            Objective { name: "quad_cos".into(), func: Arc::new(func), l1: Some(l1), l2: beta, delta_bound: gap, x0 };
        Ok((obj, gap))
    }
}

/// Certified lower bound on `min_t ½at² + β cos t`.
///
/// Exact (`= β`) when `a ≥ β`. Otherwise the minimizer lies in
/// `[0, 2√(β/a)]`; a grid minimum minus the Lipschitz slack `h·max|g'|/2` is
/// a valid floor.
fn scalar_floor(a: f64, beta: f64) -> f64 {
    if a >= beta {
        return beta;
    }
    if a == 0.0 {
        return -beta;
    }
    let hi = 2.0 * (beta / a).sqrt();
    let n = 20_000;
    let h = hi / n as f64;
    let g = |t: f64| 0.5 * a * t * t + beta * t.cos();
    let grid_min = (0..=n).map(|i| g(i as f64 * h)).fold(f64::INFINITY, f64::min);
    (grid_min - 0.5 * h * (a * hi + beta)).max(-beta)
}

impl SmoothFunction for QuadCos {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.a * x)) + self.beta * x.iter().map(|v| v.cos()).sum::<f64>()
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.a, x, 0.0);
        for (o, xi) in out.iter_mut().zip(x.iter()) {
            *o -= self.beta * xi.sin();
        }
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut h = self.a.clone();
        for i in 0..x.len() {
            h[(i, i)] -= self.beta * x[i].cos();
        }
        Some(h)
    }
}

/// `f(x) = Σ q(xᵢ)` with `q(t) = t⁴/12` on `|t| ≤ 1`, continued for `|t| > 1`
/// by `q''(t) = 2 − e^{−2(|t|−1)}`, so `q''' ` stays continuous and
/// bounded by 2. Hence `L₁ = L₂ = 2` and `inf f = 0`.
#[derive(Debug, Clone)]
pub struct SeparableQuartic {
    pub d: usize,
}

impl SeparableQuartic {
    fn instance(d: usize, params: &FamilyParams, rng: &mut ChaCha8Rng) -> Result<(Objective, f64)> {
        let x0 = standard_normal(d, rng) * params.get("x0_scale", 1.0);
        let func = SeparableQuartic { d };
        let gap = func.value(&x0);
        let obj = Objective {
            name: "separable_quartic".into(),
            func: Arc::new(func),
            l1: Some(2.0),
            l2: 2.0,
            delta_bound: gap,
            x0,
        };
        Ok((obj, gap))
    }

    pub fn q(t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 {
            t.powi(4) / 12.0
        } else {
            let u = a - 1.0;
            1.0 / 12.0 - u / 6.0 + u * u + (1.0 - (-2.0 * u).exp()) / 4.0
        }
    }

    pub fn dq(t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 {
            t.powi(3) / 3.0
        } else {
            let u = a - 1.0;
            t.signum() * (1.0 / 3.0 + 2.0 * u + ((-2.0 * u).exp() - 1.0) / 2.0)
        }
    }

    pub fn d2q(t: f64) -> f64 {
        let a = t.abs();
        if a <= 1.0 {
            t * t
        } else {
            2.0 - (-2.0 * (a - 1.0)).exp()
        }
    }
}

impl SmoothFunction for SeparableQuartic {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|&t| Self::q(t)).sum()
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for (o, &t) in out.iter_mut().zip(x.iter()) {
            *o = Self::dq(t);
        }
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&x.map(Self::d2q)))
    }
}

/// `f(x) = Σ aᵢ(1 − cos xᵢ)` started at `x0 = (π, z)`, where the first
/// coordinate sits on a ridge with curvature `−a₁`. `L₁ = L₂ = max aᵢ`,
/// `inf f = 0`.
#[derive(Debug, Clone)]
pub struct SaddleBand {
    pub a: DVector<f64>,
}

impl SaddleBand {
    fn instance(d: usize, params: &FamilyParams, rng: &mut ChaCha8Rng) -> Result<(Objective, f64)> {
        let neg = params.get("neg", 1.0);
        let a_lo = params.get("a_lo", 1.0);
        let a_hi = params.get("a_hi", 2.0);
        if !(neg > 0.0 && a_lo > 0.0 && a_lo <= a_hi) {
            return Err(Error::InvalidParameter(format!(
                "saddle_band needs neg > 0 and 0 < a_lo <= a_hi; got neg={neg}, a_lo={a_lo}, a_hi={a_hi}"
            )));
        }
        let mut coeffs = vec![neg];
        coeffs.extend(linspace(a_lo, a_hi, d - 1));
        let a = DVector::from_vec(coeffs);
        let mut x0 = standard_normal(d, rng) * params.get("x0_scale", 0.3);
        x0[0] = PI;
        let amax = a.max();
        let func = SaddleBand { a };
        let gap = func.value(&x0);
        let obj = Objective {
            name: "saddle_band".into(),
            func: Arc::new(func),
            l1: Some(amax),
            l2: amax,
            delta_bound: gap,
            x0,
        };
        Ok((obj, gap))
    }
}

impl SmoothFunction for SaddleBand {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.a.iter().zip(x.iter()).map(|(a, t)| a * (1.0 - t.cos())).sum()
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for ((o, a), t) in out.iter_mut().zip(self.a.iter()).zip(x.iter()) {
            *o = a * t.sin();
        }
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&self.a.zip_map(x, |a, t| a * t.cos())))
    }
}

/// `f(x) = gᵀx + ½xᵀAx + (σ/6)‖x‖³` with indefinite `A`. The Hessian is
/// unbounded, so no `L₁` is advertised; `L₂ = σ`.
#[derive(Debug, Clone)]
pub struct RandomCubicReg {
    pub g: DVector<f64>,
    pub a: DMatrix<f64>,
    pub sigma: f64,
}

impl RandomCubicReg {
    fn instance(d: usize, params: &FamilyParams, rng: &mut ChaCha8Rng) -> Result<(Objective, f64)> {
        let g_scale = params.get("g_scale", 1.0);
        let a_scale = params.get("a_scale", 1.0);
        let sigma = params.get("sigma", 1.0);
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("random_cubic_reg needs sigma > 0, got {sigma}")));
        }
        let g = standard_normal(d, rng) * g_scale;
        let raw = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        let a = (&raw + raw.transpose()) * (0.5 * a_scale / (d as f64).sqrt());
        let x0 = standard_normal(d, rng) * params.get("x0_scale", 0.0);
        // f ≥ ψ(‖x‖) = −‖g‖r − ½‖A‖r² + (σ/6)r³, minimized at the positive root of ψ'.
        let a_norm = crate::spectral::sym_spectral_norm(&a)?;
        let gn = g.norm();
        let r = (a_norm + (a_norm * a_norm + 2.0 * sigma * gn).sqrt()) / sigma;
        let floor = -gn * r - 0.5 * a_norm * r * r + sigma / 6.0 * r.powi(3);
        let func = RandomCubicReg { g, a, sigma };
        let gap = func.value(&x0) - floor;
        let obj = Objective {
            name: "random_cubic_reg".into(),
            func: Arc::new(func),
            l1: None,
            l2: sigma,
            delta_bound: gap,
            x0,
        };
        Ok((obj, gap))
    }
}

impl SmoothFunction for RandomCubicReg {
    fn dim(&self) -> usize {
        self.g.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.g.dot(x) + 0.5 * x.dot(&(&self.a * x)) + self.sigma / 6.0 * x.norm().powi(3)
    }

    fn gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.g);
        out.gemv(1.0, &self.a, x, 1.0);
        out.axpy(0.5 * self.sigma * x.norm(), x, 1.0);
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let r = x.norm();
        let mut h = self.a.clone();
        if r > 0.0 {
            h += (DMatrix::identity(x.len(), x.len()) * r + x * x.transpose() / r) * (0.5 * self.sigma);
        }
        Some(h)
    }
}
