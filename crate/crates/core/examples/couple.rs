//! Reflection coupling of an N-particle system to the self-interacting
//! proxy of its limit, with a small attractive kernel on x.
//!
//! cargo run --release --example couple -- [N] [T]

use std::time::Instant;

use fhn_chaos::config::RunConfig;
use fhn_chaos::pipeline::{ledger_for, run_coupled};

fn main() -> fhn_chaos::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(64, |s| s.parse().expect("N"));
    let t_end: f64 = args.next().map_or(5.0, |s| s.parse().expect("T"));
    let mut cfg = RunConfig { n, t_end, ..Default::default() };
    cfg.set_linear('x', -0.005, 0.0);
    cfg.validate()?;
    let dy = cfg.dynamics()?;
    let ledger = ledger_for(&cfg)?;
    println!("R = {:.3}  xi = {:.4}", ledger.r, ledger.xi);

    let clock = Instant::now();
    let s = run_coupled(&cfg, &dy, &ledger, cfg.seed)?;
    println!("{} samples in {:.2?}", s.len(), clock.elapsed());
    let (t, rho, w1, refl) = (s.column("t")?, s.column("rho")?, s.column("w1_bound")?, s.column("frac_reflect")?);
    for k in (0..s.len()).step_by((s.len() / 10).max(1)) {
        println!("t = {:5.2}  rho = {:.4e}  W1 bound = {:.4e}  reflecting = {:.3}", t[k], rho[k], w1[k], refl[k]);
    }
    Ok(())
}
