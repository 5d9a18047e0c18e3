//! Sensitivity of the coupling to the mollifier width: the same run at
//! xi = 1e-2 R, 1e-3 R and 1e-4 R. Informational only.
//!
//! cargo run --release --example xi_sweep -- [N] [T] [replicas]

use fhn_chaos::config::RunConfig;
use fhn_chaos::pipeline::{aggregate, ledger_for, run_coupled, run_replicas};
use fhn_chaos::verify::SMALL_KERNEL_A11;

fn main() -> fhn_chaos::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(64, |s| s.parse().expect("N"));
    let t_end: f64 = args.next().map_or(4.0, |s| s.parse().expect("T"));
    let replicas: usize = args.next().map_or(4, |s| s.parse().expect("replicas"));
    let mut cfg = RunConfig { n, t_end, replicas, sample_stride: 100, ..Default::default() };
    cfg.set_linear('x', SMALL_KERNEL_A11, 0.0);
    let big_r = ledger_for(&cfg)?.r;
    for frac in [1e-2, 1e-3, 1e-4] {
        cfg.xi = Some(frac * big_r);
        let dy = cfg.dynamics()?;
        let ledger = ledger_for(&cfg)?;
        let threads = cfg.effective_threads(None);
        let reps = run_replicas(replicas, cfg.seed, threads, |_, s| run_coupled(&cfg, &dy, &ledger, s))?;
        let s = aggregate(&reps)?;
        let (r, refl) = (s.column("mean_r_mean")?, s.column("frac_reflect_mean")?);
        let last = s.len() - 1;
        println!(
            "xi = {frac:.0e} R = {:.4}: E r(T) = {:.4}  reflecting at T = {:.3}",
            ledger.xi, r[last], refl[last]
        );
    }
    Ok(())
}
