//! Runs a few replicas of the particle system and prints the replica mean
//! of the moments and of the Lyapunov functional over time.
//!
//! cargo run --release --example simulate -- [N] [T] [replicas]

use fhn_chaos::config::RunConfig;
use fhn_chaos::pipeline::{aggregate, run_particles, run_replicas};

fn main() -> fhn_chaos::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(128, |s| s.parse().expect("N"));
    let t_end: f64 = args.next().map_or(10.0, |s| s.parse().expect("T"));
    let replicas: usize = args.next().map_or(4, |s| s.parse().expect("replicas"));
    let mut cfg = RunConfig { n, t_end, replicas, ..Default::default() };
    cfg.set_linear('x', -0.2, 0.0);
    cfg.validate()?;
    let dy = cfg.dynamics()?;

    let threads = cfg.effective_threads(None);
    let reps = run_replicas(replicas, cfg.seed, threads, |_, seed| run_particles(&cfg, &dy, seed))?;
    let s = aggregate(&reps)?;
    let cols = ["t", "mean_x_mean", "var_x_mean", "mean_c_mean", "mean_h_mean", "mean_h_se"];
    let data: Vec<Vec<f64>> = cols.iter().map(|c| s.column(c)).collect::<Result<_, _>>()?;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10} {:>9}", "t", "E x", "Var x", "E c", "E H", "SE");
    for k in (0..s.len()).step_by((s.len() / 12).max(1)) {
        println!(
            "{:6.2} {:10.4} {:10.4} {:10.4} {:10.4} {:9.2e}",
            data[0][k], data[1][k], data[2][k], data[3][k], data[4][k], data[5][k]
        );
    }
    Ok(())
}
