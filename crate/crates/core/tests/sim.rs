use std::time::Instant;

use fhn_chaos::config::RunConfig;
use fhn_chaos::model::{intrinsic_drift, Kernel, ModelParams, State};
use fhn_chaos::pipeline::{run_coupled, run_particles, aggregate};
use fhn_chaos::rng;
use fhn_chaos::sim::{
    mollifiers, step_coupled, step_particles, step_particles_driven, Coupling, CoupledEnsemble, Dynamics, Ensemble,
    InitialLaw,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn mollifiers_on_unit_circle(u in 0.0..30.0f64, xi in 1e-3..2.0f64, r in 3.0..20.0f64) {
        let (s, c) = mollifiers(u, xi, r);
        prop_assert!((s * s + c * c - 1.0).abs() <= 1e-15);
        prop_assert!((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&c));
    }
}

#[test]
fn mollifier_examples() {
    let (xi, r) = (0.4, 7.0);
    assert_eq!(mollifiers(0.0, xi, r), (1.0, 0.0));
    assert_eq!(mollifiers(0.5 * (xi + r), xi, r), (0.0, 1.0));
    let (s, c) = mollifiers(0.75 * xi, xi, r);
    assert!((c - 0.5).abs() < 1e-15 && (s - 0.75f64.sqrt()).abs() < 1e-15);
    assert_eq!(mollifiers(r + xi, xi, r), (1.0, 0.0));
}

fn coupled(coupling: Coupling, p: &ModelParams, n: usize, m: usize) -> CoupledEnsemble {
    CoupledEnsemble::self_proxy(n, m, &InitialLaw::default(), 99, coupling, 0.05, 40.0, p).unwrap()
}

#[test]
fn system_marginal_replays_bit_for_bit() {
    let p = ModelParams::default();
    let pc = ModelParams { sigma_x: 0.0, ..p };
    let kx = Kernel::bounded_tanh(0.3, 1.0);
    let kc = Kernel::linear(0.02, -0.01);
    for (coupling, p) in [(Coupling::Synchronous, p), (Coupling::ReflectionX, p), (Coupling::ReflectionC, pc)] {
        let dy = Dynamics::new(p, kx.clone(), kc.clone());
        let mut ce = coupled(coupling, &p, 32, 64);
        // spread the limit side so that every regime of the switch is visited
        for (k, z) in ce.limit.states.iter_mut().enumerate() {
            z.x += 0.02 * k as f64;
        }
        let mut alone = Ensemble::new(ce.system.states.clone(), 0, rng::DOMAIN_AUX).unwrap();
        let mut trace = Vec::new();
        for _ in 0..300 {
            step_coupled(&mut ce, &dy, 1e-3, Some(&mut trace)).unwrap();
            step_particles_driven(&mut alone, &dy, 1e-3, &trace).unwrap();
            assert_eq!(alone.states, ce.system.states, "{coupling:?}");
        }
    }
}

#[test]
fn synchronous_zero_kernels_keep_pairs_together() {
    let p = ModelParams::default();
    let dy = Dynamics::new(p, Kernel::zero(), Kernel::zero());
    let mut ce = coupled(Coupling::Synchronous, &p, 64, 128);
    for _ in 0..2000 {
        step_coupled(&mut ce, &dy, 1e-3, None).unwrap();
        assert_eq!(&ce.system.states[..], ce.paired_limit());
    }
}

/// Reconstructs the X-noise increment from one noisy step.
fn x_increment(before: State, after: State, p: &ModelParams, dt: f64) -> f64 {
    (after.x - before.x - intrinsic_drift(before, p).0 * dt) / p.sigma_x
}

#[test]
fn reflection_flips_the_x_noise() {
    let p = ModelParams::default();
    let dy = Dynamics::new(p, Kernel::zero(), Kernel::zero());
    let dt = 1e-3;
    for (gap, reflected) in [(5.0, true), (100.0, false)] {
        let mut ce = coupled(Coupling::ReflectionX, &p, 4, 8);
        let sys0: Vec<State> = (0..4).map(|k| State::new(0.1 * k as f64, 0.2)).collect();
        let lim0: Vec<State> = sys0.iter().map(|z| State::new(z.x + gap, z.c)).collect();
        ce.system.states = sys0.clone();
        ce.limit.states[..4].copy_from_slice(&lim0);
        step_coupled(&mut ce, &dy, dt, None).unwrap();
        for k in 0..4 {
            let a = x_increment(sys0[k], ce.system.states[k], &p, dt);
            let b = x_increment(lim0[k], ce.limit.states[k], &p, dt);
            let expect = if reflected { -a } else { a };
            assert!((b - expect).abs() < 1e-9, "gap {gap}: {a} vs {b}");
            // the C channel is shared in both regimes
            let dc_sys = ce.system.states[k].c - sys0[k].c - intrinsic_drift(sys0[k], &p).1 * dt;
            let dc_lim = ce.limit.states[k].c - lim0[k].c - intrinsic_drift(lim0[k], &p).1 * dt;
            assert!((dc_sys - dc_lim).abs() < 1e-12);
        }
    }
}

#[test]
fn reflection_c_construction_rules() {
    let law = InitialLaw::default();
    let p = ModelParams::default();
    let p0 = ModelParams { sigma_x: 0.0, ..p };
    assert!(CoupledEnsemble::self_proxy(4, 8, &law, 1, Coupling::ReflectionC, 0.1, 5.0, &p).is_err());
    assert!(CoupledEnsemble::self_proxy(4, 8, &law, 1, Coupling::ReflectionC, 0.1, 5.0, &p0).is_ok());
    let p00 = ModelParams { sigma_c: 0.0, ..p0 };
    assert!(CoupledEnsemble::self_proxy(4, 8, &law, 1, Coupling::ReflectionC, 0.1, 5.0, &p00).is_err());
    assert!(CoupledEnsemble::self_proxy(4, 8, &law, 1, Coupling::ReflectionX, 0.1, 5.0, &p0).is_err());
    assert!(CoupledEnsemble::self_proxy(4, 3, &law, 1, Coupling::Synchronous, 0.1, 5.0, &p).is_err());
}

#[test]
fn thread_count_does_not_change_trajectories() {
    let mut cfg = RunConfig { n: 300, m: 700, t_end: 0.5, sample_stride: 50, ..RunConfig::default() };
    cfg.set_linear('x', -0.2, 0.1);
    let dy = cfg.dynamics().unwrap();
    let ledger = fhn_chaos::pipeline::ledger_for(&cfg).unwrap();
    let one = in_pool(1, || (run_particles(&cfg, &dy, 5).unwrap(), run_coupled(&cfg, &dy, &ledger, 5).unwrap()));
    let many = in_pool(6, || (run_particles(&cfg, &dy, 5).unwrap(), run_coupled(&cfg, &dy, &ledger, 5).unwrap()));
    assert_eq!(one.0.to_csv().unwrap(), many.0.to_csv().unwrap());
    assert_eq!(one.1.to_csv().unwrap(), many.1.to_csv().unwrap());
}

#[test]
fn noise_free_step_is_an_euler_step() {
    let p = ModelParams { sigma_x: 0.0, sigma_c: 0.0, ..ModelParams::default() };
    let dy = Dynamics::new(p, Kernel::zero(), Kernel::zero());
    let z = State::new(0.7, -0.3);
    let mut ens = Ensemble::new(vec![z], 1, rng::DOMAIN_PAIR).unwrap();
    step_particles(&mut ens, &dy, 0.01).unwrap();
    let (dx, dc) = intrinsic_drift(z, &p);
    assert_eq!(ens.states[0], State::new(z.x + 0.01 * dx, z.c + 0.01 * dc));
    assert!(step_particles(&mut ens, &dy, 0.0).is_err());
}

#[test]
fn euler_maruyama_strong_order() {
    // one Brownian path per particle at a fine resolution; coarse runs are
    // driven by sums of its increments
    let p = ModelParams::default();
    let dy = Dynamics::new(p, Kernel::zero(), Kernel::zero());
    let n = 200;
    let base = 16usize;
    let fine = base * 64;
    let t_end = 1.0;
    let dt_fine = t_end / fine as f64;
    let law = InitialLaw::default();
    let start: Vec<State> = (0..n).map(|k| law.sample(4, k as u64)).collect();
    let mut paths = vec![vec![(0.0, 0.0); n]; fine];
    for i in 0..n {
        let mut r = rng::stream(8, rng::DOMAIN_AUX, i as u64, 0);
        for step in paths.iter_mut() {
            let gx: f64 = r.sample(StandardNormal);
            let gc: f64 = r.sample(StandardNormal);
            step[i] = (gx * dt_fine.sqrt(), gc * dt_fine.sqrt());
        }
    }
    let run = |steps: usize| -> Vec<State> {
        let agg = fine / steps;
        let mut ens = Ensemble::new(start.clone(), 0, rng::DOMAIN_AUX).unwrap();
        for s in 0..steps {
            let inc: Vec<(f64, f64)> = (0..n)
                .map(|i| paths[s * agg..(s + 1) * agg].iter().fold((0.0, 0.0), |a, w| (a.0 + w[i].0, a.1 + w[i].1)))
                .collect();
            step_particles_driven(&mut ens, &dy, t_end / steps as f64, &inc).unwrap();
        }
        ens.states
    };
    let reference = run(fine);
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for steps in [base, 2 * base, 4 * base, 8 * base] {
        let out = run(steps);
        let e = out.iter().zip(&reference).map(|(a, b)| (*a - *b).l1()).sum::<f64>() / n as f64;
        dts.push(t_end / steps as f64);
        errs.push(e);
    }
    let fit = fhn_chaos::metrics::fit_scaling(&dts, &errs).unwrap();
    assert!((0.5..=1.2).contains(&fit.slope), "observed order {}", fit.slope);
}

#[test]
fn zero_horizon_has_only_the_initial_record() {
    let cfg = RunConfig { n: 8, m: 16, t_end: 0.0, ..RunConfig::default() };
    let dy = cfg.dynamics().unwrap();
    let s = run_particles(&cfg, &dy, 1).unwrap();
    assert_eq!(s.len(), 1);
    let ledger = fhn_chaos::pipeline::ledger_for(&cfg).unwrap();
    let c = run_coupled(&cfg, &dy, &ledger, 1).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c.column("rho").unwrap(), vec![0.0]);
}

#[test]
fn no_blow_up_over_a_million_steps() {
    // default model and dt, a few particles to keep the run short
    let cfg = RunConfig { n: 16, m: 16, t_end: 1000.0, sample_stride: 100_000, ..RunConfig::default() };
    assert_eq!(cfg.steps(), 1_000_000);
    let dy = cfg.dynamics().unwrap();
    let s = run_particles(&cfg, &dy, cfg.seed).unwrap();
    assert_eq!(s.len(), 11);
    assert!(s.rows.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn benchmark_within_budget() {
    // N = 256, T = 20, dt = 1e-3; target one minute, asserted at five
    let cfg = RunConfig { n: 256, m: 256, t_end: 20.0, sample_stride: 1000, ..RunConfig::default() };
    let dy = cfg.dynamics().unwrap();
    let t0 = Instant::now();
    let s = run_particles(&cfg, &dy, 3).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    assert_eq!(s.len(), 21);
    assert!(secs < 300.0, "{secs} s");
    let agg = aggregate(&[s]).unwrap();
    assert!(agg.column("mean_x_se").unwrap().iter().all(|v| v.is_nan()));
}
