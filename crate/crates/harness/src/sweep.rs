//! Sweep orchestration and the result CSV.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use critpoint_core::dispatcher::{fd_delta, fd_pipeline, find_critical_point_with, DispatchOptions};
use critpoint_core::reduction::reduction_to_unbounded_with;
use critpoint_core::restarted::restarted_agd_with;
use critpoint_core::{
    agd_core::TraceLevel, make_test_objective, FamilyParams, OracleMode, SolverOptions, SolverReport,
};

use crate::config::{ConstantMode, ExperimentConfig, SweepMethod};

pub const HEADER: [&str; 16] = [
    "run_id",
    "family",
    "d",
    "method",
    "epsilon",
    "n_H",
    "oracle_mode",
    "delta",
    "grad_queries",
    "hess_queries",
    "iterations",
    "final_grad_norm",
    "f_final",
    "terminated",
    "wall_ms",
    "seed",
];

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "CRITPOINT_THREADS";

/// One solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub family: String,
    pub d: usize,
    pub params: FamilyParams,
    pub method: SweepMethod,
    pub eps: f64,
    pub n_h: u64,
    pub oracle: String,
    pub delta: f64,
    pub mode: ConstantMode,
    pub iteration_limit: Option<u64>,
    pub withhold_l1: bool,
    /// Instance seed.
    pub seed: u64,
    /// Oracle seed.
    pub oracle_seed: u64,
    pub timing: bool,
}

/// A solved cell. Query fields are `None` when the run errored, in which case
/// `terminated` carries the message.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run_id: u64,
    pub family: String,
    pub d: usize,
    pub method: String,
    pub epsilon: f64,
    pub n_h: u64,
    pub oracle_mode: String,
    pub delta: f64,
    pub grad_queries: Option<u64>,
    pub hess_queries: Option<u64>,
    pub iterations: Option<u64>,
    pub final_grad_norm: Option<f64>,
    pub f_final: Option<f64>,
    pub terminated: String,
    pub wall_ms: u64,
    pub seed: u64,
}

impl ResultRow {
    pub fn record(&self) -> [String; 16] {
        let opt_u = |v: Option<u64>| v.map_or(String::new(), |v| v.to_string());
        let opt_f = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        [
            self.run_id.to_string(),
            self.family.clone(),
            self.d.to_string(),
            self.method.clone(),
            self.epsilon.to_string(),
            self.n_h.to_string(),
            self.oracle_mode.clone(),
            self.delta.to_string(),
            opt_u(self.grad_queries),
            opt_u(self.hess_queries),
            opt_u(self.iterations),
            opt_f(self.final_grad_norm),
            opt_f(self.f_final),
            self.terminated.clone(),
            self.wall_ms.to_string(),
            self.seed.to_string(),
        ]
    }

    pub fn is_error(&self) -> bool {
        self.grad_queries.is_none()
    }
}

/// Outcome of one cell together with the branch the dispatcher took.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub method_label: String,
    pub delta_used: f64,
    pub report: Result<SolverReport, critpoint_core::Error>,
}

pub fn solve_cell(spec: &CellSpec) -> CellOutcome {
    let requested = spec.method.label().to_string();
    let fail = |e: critpoint_core::Error| CellOutcome {
        method_label: requested.clone(),
        delta_used: spec.delta,
        report: Err(e),
    };
    let obj = match make_test_objective(&spec.family, spec.d, &spec.params, spec.seed) {
        Ok(o) if spec.withhold_l1 => o.without_l1(),
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let solver = SolverOptions {
        scale: spec.mode.scale(),
        iteration_limit: spec.iteration_limit,
        trace: TraceLevel::Off,
        seed: spec.oracle_seed,
        ..SolverOptions::default()
    };
    let options = DispatchOptions { solver, ..DispatchOptions::default() };
    match spec.method {
        SweepMethod::Fd => match fd_pipeline(&obj, spec.eps, Some(spec.n_h), &options) {
            Ok(s) => CellOutcome {
                method_label: format!("fd:{}", s.decision.branch.label()),
                delta_used: fd_delta(obj.l1, obj.l2, obj.delta_bound, spec.eps, spec.n_h),
                report: Ok(s.report),
            },
            Err(e) => fail(e),
        },
        _ => {
            let mode = match OracleMode::parse(&spec.oracle, spec.delta) {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            match spec.method {
                SweepMethod::Auto => {
                    match find_critical_point_with(&obj, spec.delta, spec.eps, spec.n_h, mode, &options) {
                        Ok(s) => CellOutcome {
                            method_label: format!("auto:{}", s.decision.branch.label()),
                            delta_used: spec.delta,
                            report: Ok(s.report),
                        },
                        Err(e) => fail(e),
                    }
                }
                SweepMethod::Restarted => CellOutcome {
                    method_label: requested.clone(),
                    delta_used: spec.delta,
                    report: restarted_agd_with(&obj, spec.delta, spec.eps, spec.n_h, mode, &solver),
                },
                SweepMethod::Reduction => CellOutcome {
                    method_label: requested.clone(),
                    delta_used: spec.delta,
                    report: reduction_to_unbounded_with(&obj, spec.delta, spec.eps, spec.n_h, mode, &solver)
                        .map(|r| r.report),
                },
                SweepMethod::Fd => unreachable!("handled above"),
            }
        }
    }
}

pub fn run_cell(run_id: u64, spec: &CellSpec) -> ResultRow {
    let start = Instant::now();
    let out = solve_cell(spec);
    let wall_ms = if spec.timing { start.elapsed().as_millis() as u64 } else { 0 };
    let oracle_mode = if spec.method == SweepMethod::Fd { "fd".to_string() } else { spec.oracle.clone() };
    let mut row = ResultRow {
        run_id,
        family: spec.family.clone(),
        d: spec.d,
        method: out.method_label,
        epsilon: spec.eps,
        n_h: spec.n_h,
        oracle_mode,
        delta: out.delta_used,
        grad_queries: None,
        hess_queries: None,
        iterations: None,
        final_grad_norm: None,
        f_final: None,
        terminated: String::new(),
        wall_ms,
        seed: spec.seed,
    };
    match out.report {
        Ok(r) => {
            row.grad_queries = Some(r.ledger.grad_count());
            row.hess_queries = Some(r.ledger.hess_count());
            row.iterations = Some(r.iterations);
            row.final_grad_norm = Some(r.grad_norm_final);
            row.f_final = Some(r.f_final);
            row.terminated = r.terminated.label().to_string();
        }
        Err(e) => row.terminated = format!("error: {e}"),
    }
    row
}

/// Cells in run-id order: experiment, method, ε, n_H, seed, repeat.
pub fn expand(configs: &[ExperimentConfig]) -> Vec<(String, CellSpec)> {
    let mut cells = Vec::new();
    for c in configs {
        for &method in &c.methods {
            for &eps in &c.eps {
                for &n_h in &c.n_h {
                    for &seed in &c.seeds {
                        for rep in 0..c.repeat {
                            cells.push((
                                c.name.clone(),
                                CellSpec {
                                    family: c.family.clone(),
                                    d: c.d,
                                    params: c.params.clone(),
                                    method,
                                    eps,
                                    n_h,
                                    oracle: c.oracle.clone(),
                                    delta: c.delta,
                                    mode: c.mode,
                                    iteration_limit: c.iteration_limit,
                                    withhold_l1: c.withhold_l1,
                                    seed,
                                    oracle_seed: seed.wrapping_mul(1_000_003).wrapping_add(u64::from(rep)),
                                    timing: c.timing,
                                },
                            ));
                        }
                    }
                }
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub n_h: u64,
    pub runs: usize,
    pub errors: usize,
    pub median_grad_queries: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

/// Worker count: `CRITPOINT_THREADS` when it parses to a positive integer,
/// otherwise rayon's default.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|n: &usize| *n > 0)
}

pub fn run_sweep(configs: &[ExperimentConfig], threads: Option<usize>) -> io::Result<SweepResult> {
    let cells = expand(configs);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(io::Error::other)?;
    let mut rows: Vec<(String, ResultRow)> = pool.install(|| {
        cells.par_iter().enumerate().map(|(i, (name, spec))| (name.clone(), run_cell(i as u64, spec))).collect()
    });
    rows.sort_by_key(|(_, r)| r.run_id);
    let summary = summarize(&rows);
    Ok(SweepResult { rows: rows.into_iter().map(|(_, r)| r).collect(), summary })
}

fn summarize(rows: &[(String, ResultRow)]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64), (usize, usize, Vec<u64>)> = BTreeMap::new();
    let mut order: Vec<(String, u64)> = Vec::new();
    for (name, r) in rows {
        let key = (name.clone(), r.n_h);
        let g = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0, 0, Vec::new())
        });
        g.0 += 1;
        match r.grad_queries {
            Some(q) => g.2.push(q),
            None => g.1 += 1,
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (runs, errors, q) = groups.remove(&key).expect("key recorded");
            SummaryRow { experiment: key.0, n_h: key.1, runs, errors, median_grad_queries: median(q) }
        })
        .collect()
}

pub fn median(mut v: Vec<u64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0 })
}

pub fn render_summary(summary: &[SummaryRow]) -> String {
    let mut out =
        format!("{:<20} {:>8} {:>6} {:>7} {:>20}\n", "experiment", "n_H", "runs", "errors", "median grad_queries");
    for s in summary {
        let med = s.median_grad_queries.map_or("-".to_string(), |m| m.to_string());
        out.push_str(&format!("{:<20} {:>8} {:>6} {:>7} {:>20}\n", s.experiment, s.n_h, s.runs, s.errors, med));
    }
    out
}

pub fn to_csv(rows: &[ResultRow]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> io::Result<()> {
    std::fs::write(path, to_csv(rows)?)
}
