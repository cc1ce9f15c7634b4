//! Solve once and write every artifact of the run: frozen config, JSON
//! report, procedure, region CSV, checkpoint and solver logs.

use optimal_mtp::workflows::{run_bayes, write_run, RunConfig};
use std::path::PathBuf;

fn main() -> optimal_mtp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mtp-sym-0.88"));
    let mut config = RunConfig::preset("sym")?;
    config.objective.power = Some(0.88);
    config.grid.refine_rounds = 0;

    let run = run_bayes(&config)?;
    for f in write_run(&run, &config, &out)? {
        let len = std::fs::metadata(&f)?.len();
        println!("{:>10} bytes  {}", len, f.display());
    }
    println!("config sha256 {}", run.report.provenance.config_sha256);
    Ok(())
}
