//! The degenerate variant with no noise on x: the coupling reflects the
//! c-noise instead, and the ledger is derived for that channel.
//!
//! cargo run --release --example c_variant -- [N] [T]

use fhn_chaos::config::RunConfig;
use fhn_chaos::pipeline::{ledger_for, run_coupled};
use fhn_chaos::sim::Coupling;
use fhn_chaos::verify::SMALL_KERNEL_A11;

fn main() -> fhn_chaos::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(64, |s| s.parse().expect("N"));
    let t_end: f64 = args.next().map_or(5.0, |s| s.parse().expect("T"));
    let mut cfg = RunConfig { n, t_end, sigma_x: 0.0, coupling: Coupling::ReflectionC, ..Default::default() };
    cfg.set_linear('x', SMALL_KERNEL_A11, 0.0);
    cfg.validate()?;
    let dy = cfg.dynamics()?;
    let ledger = ledger_for(&cfg)?;
    println!("channel {:?}  delta = {}  R = {:.3}  xi = {:.4}", cfg.channel(), ledger.delta, ledger.r, ledger.xi);

    let s = run_coupled(&cfg, &dy, &ledger, cfg.seed)?;
    let (t, r, refl) = (s.column("t")?, s.column("mean_r")?, s.column("frac_reflect")?);
    for k in (0..s.len()).step_by((s.len() / 10).max(1)) {
        println!("t = {:5.2}  mean r = {:.4e}  reflecting = {:.3}", t[k], r[k], refl[k]);
    }
    Ok(())
}
