//! Wall-clock cost of the particle system at N = 256, T = 20, dt = 1e-3,
//! and of the coupled system at the same size.
//!
//! cargo run --release --example benchmark

use std::time::Instant;

use fhn_chaos::config::RunConfig;
use fhn_chaos::pipeline::{ledger_for, run_coupled, run_particles};

fn main() -> fhn_chaos::Result<()> {
    let mut cfg = RunConfig { n: 256, m: 256, t_end: 20.0, sample_stride: 1000, ..Default::default() };
    cfg.set_linear('x', -0.2, 0.0);
    let dy = cfg.dynamics()?;
    let clock = Instant::now();
    run_particles(&cfg, &dy, cfg.seed)?;
    let secs = clock.elapsed().as_secs_f64();
    println!("particles: {} steps in {secs:.2} s ({:.1} ns per particle-step)", cfg.steps(), 1e9 * secs / (cfg.steps() as f64 * 256.0));

    let ledger = ledger_for(&cfg)?;
    let clock = Instant::now();
    run_coupled(&cfg, &dy, &ledger, cfg.seed)?;
    println!("coupled:   {:.2} s", clock.elapsed().as_secs_f64());
    Ok(())
}
