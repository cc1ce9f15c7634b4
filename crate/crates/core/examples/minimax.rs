//! Minimax risk over the three minimum-effect alternatives, found by
//! bisection on a common risk cap.

use optimal_mtp::workflows::{run_minimax, RunConfig};

fn main() -> optimal_mtp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let preset = std::env::args().nth(1).unwrap_or_else(|| "sym".into());
    let mut config = RunConfig::preset(&preset)?;
    config.objective.power = Some(0.88);

    let run = run_minimax(&config, None)?;
    let m = run.report.minimax.as_ref().expect("minimax result");
    for s in &m.steps {
        println!("cap {:.5}  {}", s.cap, if s.feasible { "feasible" } else { "infeasible" });
    }
    for (d, r) in m.alternatives.iter().zip(&m.risks) {
        println!("risk at ({:.3}, {:.3}) = {:.4}", d[0], d[1], r);
    }
    println!(
        "minimax value {:.4} after {} feasibility solves; largest risk at ({:.3}, {:.3})",
        m.value, m.solves, m.maximizer[0], m.maximizer[1]
    );
    Ok(())
}
