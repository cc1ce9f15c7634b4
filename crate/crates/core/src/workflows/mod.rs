//! End-to-end workflows driven by a JSON [`RunConfig`]: Bayes, minimax and
//! decision solves, sweeps over power and sample size, the global-null
//! ablation, and the files they write.

pub mod config;
pub mod export;
pub mod pipeline;
pub mod report;
pub mod runs;

pub use config::{LossBlock, PriorBlock, Problem, RunConfig, Workflow, PRESETS};
pub use export::{export_curves, export_regions, write_curve_run, write_run};
pub use pipeline::{max_power, solve_problem, solve_with_power, BaselineRow, PowerUse, Solved, Summary, Table1Row};
pub use report::{CurveTable, MatchedBaseline, Outcome, RunReport};
pub use runs::{
    matched_baselines, rebuild_lp, run_bayes, run_baseline_comparison, run_decision, run_global_null_ablation, run_minimax,
    run_sample_size_sweep, run_tradeoff, Run,
};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "MTP_THREADS";

/// Size the global worker pool from `MTP_THREADS` when set. Has no effect
/// once the pool exists.
pub fn init_threads() {
    let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) else {
        return;
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::debug!("worker pool already set up: {e}");
    }
}
