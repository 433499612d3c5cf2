//! Experiment runner around `critpoint-core`: INI sweeps, CSV results, SVG
//! trade-off plots and the self-check suites.

pub mod cli;
pub mod config;
pub mod plot;
pub mod selfcheck;
pub mod sweep;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const RUN: i32 = 3;
    pub const SELFCHECK: i32 = 4;
}

/// Exit code for a core error: bad inputs are configuration errors, anything
/// raised while running is a run failure.
pub fn exit_code_for(e: &critpoint_core::Error) -> i32 {
    use critpoint_core::Error::*;
    match e {
        Dimension { .. } | Argument(_) | InvalidParameter(_) | UnsupportedMode(_) | Range { .. } => exit::CONFIG,
        Contract(_) | Numeric(_) | NoConvergence { .. } => exit::RUN,
    }
}
