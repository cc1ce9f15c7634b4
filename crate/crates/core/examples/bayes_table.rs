//! Constrained Bayes optimal procedures for the symmetric and asymmetric
//! trials, side by side with the analytic baselines.
//!
//! ```text
//! cargo run --example bayes_table -- sym 0.88
//! ```

use optimal_mtp::workflows::{run_bayes, RunConfig};

fn main() -> optimal_mtp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "sym".into());
    let mut config = RunConfig::preset(&preset)?;
    if let Some(p) = args.next() {
        config.objective.power = Some(p.parse().expect("power must be a number"));
    }

    let run = run_bayes(&config)?;
    let r = &run.report;
    print!("{}", r.table_text());
    if let Some(p) = r.summary.power.as_ref().filter(|p| p.clamped) {
        println!("power {:.3} is out of reach on this grid; solved at {:.6}", p.target, p.rhs_used);
    }
    println!("outcome: {:?}", r.outcome);
    println!("active constraints:");
    for a in &r.summary.active {
        println!("  {:<36} dual {:.4e}", a.label, a.dual);
    }
    Ok(())
}
