//! Command-line interface.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{self, ConstantMode, SweepMethod};
use crate::selfcheck::{self, Hooks, SelfcheckConfig};
use crate::sweep::{self, CellSpec};
use crate::{exit, exit_code_for, plot};
use critpoint_core::bounds::{predicted_queries, ComplexityInputs, Method};
use critpoint_core::FamilyParams;

#[derive(Parser)]
#[command(name = "critpoint", version, about = "Critical points from gradients and approximate Hessians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the result.
    Solve(SolveArgs),
    /// Run every cell of an experiment file and write a CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot gradient queries against n_H from a sweep CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted gradient-query counts across methods.
    Bounds {
        #[arg(long)]
        d: f64,
        #[arg(long)]
        l1: Option<f64>,
        #[arg(long)]
        l2: f64,
        #[arg(long = "delta-subopt")]
        delta_subopt: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        nh: f64,
        /// Hessian-oracle accuracy.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
    /// Run the property suites.
    Selfcheck {
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    family: String,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1)]
    nh: u64,
    #[arg(long, default_value = "exact")]
    oracle: String,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value = "faithful")]
    mode: String,
    /// Constant relaxation for `--mode practical`.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// auto, restarted, reduction or fd.
    #[arg(long, default_value = "auto")]
    method: String,
    /// Family parameter as `name=value`; repeatable.
    #[arg(long = "param")]
    params: Vec<String>,
    #[arg(long)]
    withhold_l1: bool,
    #[arg(long)]
    iteration_limit: Option<u64>,
}

/// Parses `args` (including the program name) and runs the command, returning
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    match cli.command {
        Command::Solve(a) => solve(a),
        Command::Sweep { config, out } => run_sweep(config, out),
        Command::Plot { csv, out } => match plot::emit_tradeoff_plot(&csv, &out) {
            Ok(n) => {
                println!("wrote {} ({n} points)", out.display());
                exit::OK
            }
            Err(e @ plot::PlotError::Parse { .. }) => fail(exit::CONFIG, &e),
            Err(e) => fail(exit::RUN, &e),
        },
        Command::Bounds { d, l1, l2, delta_subopt, eps, nh, delta } => {
            bounds(ComplexityInputs { d, l1, l2, big_delta: delta_subopt, eps, n_h: nh, delta })
        }
        Command::Selfcheck { seed } => {
            let mut config = SelfcheckConfig::default();
            if let Some(s) = seed {
                config.seed = s;
            }
            let report = selfcheck::run_all(&config, &Hooks::default());
            print!("{}", report.render());
            if report.pass() {
                exit::OK
            } else {
                exit::SELFCHECK
            }
        }
    }
}

fn fail(code: i32, e: &dyn std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    code
}

fn solve(a: SolveArgs) -> i32 {
    let Some(method) = SweepMethod::parse(&a.method) else {
        return fail(exit::CONFIG, &format!("unknown method '{}'", a.method));
    };
    let mode = match a.mode.as_str() {
        "faithful" => ConstantMode::Faithful,
        "practical" if a.scale > 0.0 && a.scale <= 1.0 => ConstantMode::Practical { scale: a.scale },
        "practical" => return fail(exit::CONFIG, &format!("scale must lie in (0, 1], got {}", a.scale)),
        other => return fail(exit::CONFIG, &format!("unknown mode '{other}'")),
    };
    let mut params = FamilyParams::new();
    for p in &a.params {
        match p.split_once('=').map(|(k, v)| (k.trim(), v.trim().parse::<f64>())) {
            Some((k, Ok(v))) if !k.is_empty() => params.insert(k, v),
            _ => return fail(exit::CONFIG, &format!("bad --param '{p}', expected name=value")),
        }
    }
    let spec = CellSpec {
        family: a.family,
        d: a.d,
        params,
        method,
        eps: a.eps,
        n_h: a.nh,
        oracle: a.oracle,
        delta: a.delta,
        mode,
        iteration_limit: a.iteration_limit,
        withhold_l1: a.withhold_l1,
        seed: a.seed,
        oracle_seed: a.seed,
        timing: true,
    };
    let out = sweep::solve_cell(&spec);
    match out.report {
        Ok(r) => {
            println!("method           {}", out.method_label);
            println!("terminated       {}", r.terminated.label());
            println!("grad_queries     {}", r.ledger.grad_count());
            println!("hess_queries     {}", r.ledger.hess_count());
            println!("iterations       {}", r.iterations);
            println!("final_grad_norm  {:e}", r.grad_norm_final);
            println!("f_final          {}", r.f_final);
            println!("delta            {}", out.delta_used);
            if r.terminated == critpoint_core::Termination::EpsCritical {
                exit::OK
            } else {
                exit::RUN
            }
        }
        Err(e) => fail(exit_code_for(&e), &e),
    }
}

fn run_sweep(config_path: PathBuf, out: Option<PathBuf>) -> i32 {
    let configs = match config::load(&config_path) {
        Ok(c) => c,
        Err(e) => return fail(exit::CONFIG, &e),
    };
    let Some(out) = out.or_else(|| configs.iter().find_map(|c| c.out.clone())) else {
        return fail(exit::CONFIG, &"no output path: pass --out or set 'out' in the config");
    };
    let result = match sweep::run_sweep(&configs, sweep::thread_cap()) {
        Ok(r) => r,
        Err(e) => return fail(exit::RUN, &e),
    };
    if let Err(e) = sweep::write_csv(&result.rows, &out) {
        return fail(exit::RUN, &format!("{}: {e}", out.display()));
    }
    print!("{}", sweep::render_summary(&result.summary));
    println!("wrote {} rows to {}", result.rows.len(), out.display());
    exit::OK
}

fn bounds(inputs: ComplexityInputs) -> i32 {
    if let Err(e) = inputs.validate() {
        return fail(exit::CONFIG, &e);
    }
    println!("O-constants set to 1; log factors evaluated literally where present.");
    println!("{:<16} {:>14}", "method", "grad queries");
    for m in Method::ALL {
        match predicted_queries(m, &inputs) {
            Ok(v) => println!("{:<16} {:>14.4e}", m.name(), v),
            Err(e) => println!("{:<16} {:>14}  ({e})", m.name(), "n/a"),
        }
    }
    exit::OK
}
