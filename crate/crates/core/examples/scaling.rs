//! Coupling distance against N: time-averaged mean pair distance for a
//! range of system sizes, with the fitted log-log slope.
//!
//! cargo run --release --example scaling -- [T] [replicas]

use fhn_chaos::config::RunConfig;
use fhn_chaos::metrics::fit_scaling;
use fhn_chaos::pipeline::{aggregate, ledger_for, run_coupled, run_replicas};
use fhn_chaos::verify::SMALL_KERNEL_A11;

fn main() -> fhn_chaos::Result<()> {
    let mut args = std::env::args().skip(1);
    let t_end: f64 = args.next().map_or(4.0, |s| s.parse().expect("T"));
    let replicas: usize = args.next().map_or(8, |s| s.parse().expect("replicas"));
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for n in [16, 32, 64, 128] {
        let mut cfg = RunConfig { n, m: 4 * n, t_end, replicas, sample_stride: 100, ..Default::default() };
        cfg.set_linear('x', SMALL_KERNEL_A11, 0.0);
        let dy = cfg.dynamics()?;
        let ledger = ledger_for(&cfg)?;
        let threads = cfg.effective_threads(None);
        let reps = run_replicas(replicas, cfg.seed, threads, |_, s| run_coupled(&cfg, &dy, &ledger, s))?;
        let s = aggregate(&reps)?;
        // skip the first half, where the pairs are still separating
        let r = s.column("mean_r_mean")?;
        let tail = &r[r.len() / 2..];
        let avg = tail.iter().sum::<f64>() / tail.len() as f64;
        println!("N = {n:4}  time-averaged E r = {avg:.4}");
        xs.push(n as f64);
        ys.push(avg);
    }
    let fit = fit_scaling(&xs, &ys)?;
    println!("slope {:.3}  (95% CI {:.3} .. {:.3}, r^2 = {:.3})", fit.slope, fit.ci95.0, fit.ci95.1, fit.r_squared);
    Ok(())
}
