//! The analytic procedures (UMP combined test, Rosenbaum, Bergmann-Hommel,
//! augmented Song-Chi) against the optimum required to match each one's
//! power for the combined population.

use optimal_mtp::workflows::{run_baseline_comparison, RunConfig};

fn main() -> optimal_mtp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let preset = std::env::args().nth(1).unwrap_or_else(|| "sym".into());
    let config = RunConfig::preset(&preset)?;
    println!("{:<16} {:>8} {:>8} {:>8} {:>8}", "procedure", "1-risk", "H01", "H02", "H0C");
    for m in run_baseline_comparison(&config)? {
        for r in [&m.baseline, &m.optimum] {
            println!(
                "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                r.label, r.one_minus_bayes_risk, r.h01_power, r.h02_power, r.h0c_power
            );
        }
        println!(
            "{:<16} {:>+8.4} {:>+8.4} {:>+8.4}\n",
            "advantage", m.advantage[0], m.advantage[1], m.advantage[2]
        );
    }
    Ok(())
}
