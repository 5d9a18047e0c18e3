//! Runs configured experiments across replicas and writes their records.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::distance::{derive_ledger, rho_summary, verify_ledger, CouplingLedger, LedgerReport};
use crate::error::{Error, Result};
use crate::lyapunov::{check_kernel_admissibility, h, h_tilde, initial_h_bound, tilt, AdmissibilityReport};
use crate::metrics::{coupled_w1_bound, mean_se};
use crate::model::State;
use crate::records::Series;
use crate::rng::{replica_seed, DOMAIN_PAIR};
use crate::sim::{mollifiers, step_coupled, step_particles, CoupledEnsemble, Coupling, Dynamics, Ensemble};

pub const PARTICLE_COLUMNS: [&str; 8] =
    ["t", "mean_x", "mean_c", "var_x", "var_c", "mean_h", "mean_h_tilde", "max_abs_x"];

pub const COUPLED_COLUMNS: [&str; 12] = [
    "t",
    "rho",
    "mean_f",
    "max_G",
    "mean_r",
    "w1_bound",
    "mean_l2sq",
    "frac_reflect",
    "mean_h_sys",
    "mean_h_lim",
    "mean_x_sys",
    "mean_x_lim",
];

fn particle_row(t: f64, states: &[State], dy: &Dynamics, a: f64) -> Vec<f64> {
    let n = states.len() as f64;
    let p = &dy.params;
    let (mut sx, mut sc, mut hs, mut hts, mut mx) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    for z in states {
        sx += z.x;
        sc += z.c;
        hs += h(*z, p);
        hts += h_tilde(*z, a, p);
        mx = mx.max(z.x.abs());
    }
    let (mean_x, mean_c) = (sx / n, sc / n);
    let (mut vx, mut vc) = (0.0, 0.0);
    for z in states {
        vx += (z.x - mean_x).powi(2);
        vc += (z.c - mean_c).powi(2);
    }
    vec![t, mean_x, mean_c, vx / n, vc / n, hs / n, hts / n, mx]
}

/// One replica of the particle system, sampled every `sample_stride` steps.
pub fn run_particles(cfg: &RunConfig, dy: &Dynamics, seed: u64) -> Result<Series> {
    let a = tilt(&dy.params, cfg.a_tilde);
    let mut ens = Ensemble::sample(cfg.n, &cfg.initial_law(), seed, DOMAIN_PAIR)?;
    let mut out = Series::new(PARTICLE_COLUMNS);
    out.push(particle_row(0.0, &ens.states, dy, a));
    for s in 1..=cfg.steps() {
        step_particles(&mut ens, dy, cfg.dt)?;
        if s % cfg.sample_stride == 0 {
            out.push(particle_row(ens.time(), &ens.states, dy, a));
        }
    }
    Ok(out)
}

fn coupled_row(ce: &CoupledEnsemble, dy: &Dynamics, ledger: &CouplingLedger) -> Result<Vec<f64>> {
    let sys = &ce.system.states;
    let lim = ce.paired_limit();
    let rs = rho_summary(sys, lim, ledger)?;
    let n = sys.len() as f64;
    let p = &dy.params;
    let (mut l2, mut refl, mut hs, mut hl, mut xs, mut xl) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (z, zb) in sys.iter().zip(lim) {
        l2 += (*z - *zb).l2_sq();
        if ce.coupling != Coupling::Synchronous && mollifiers(ce.switch_argument(*z, *zb), ce.xi, ce.big_r).1 > 0.0 {
            refl += 1.0;
        }
        hs += h(*z, p);
        hl += h(*zb, p);
        xs += z.x;
        xl += zb.x;
    }
    Ok(vec![
        ce.time(),
        rs.rho,
        rs.mean_f,
        rs.max_g,
        rs.mean_r,
        coupled_w1_bound(sys, lim, 1)?,
        l2 / n,
        refl / n,
        hs / n,
        hl / n,
        xs / n,
        xl / n,
    ])
}

/// One replica of `N` coupled pairs against an `M`-particle proxy.
pub fn run_coupled(cfg: &RunConfig, dy: &Dynamics, ledger: &CouplingLedger, seed: u64) -> Result<Series> {
    let mut ce = CoupledEnsemble::self_proxy(
        cfg.n,
        cfg.m,
        &cfg.initial_law(),
        seed,
        cfg.coupling,
        ledger.xi,
        ledger.r,
        &dy.params,
    )?;
    let mut out = Series::new(COUPLED_COLUMNS);
    out.push(coupled_row(&ce, dy, ledger)?);
    for s in 1..=cfg.steps() {
        step_coupled(&mut ce, dy, cfg.dt, None)?;
        if s % cfg.sample_stride == 0 {
            out.push(coupled_row(&ce, dy, ledger)?);
        }
    }
    Ok(out)
}

/// Runs `f(k, seed_k)` for every replica on a pool of `threads` workers.
/// Results are in replica order whatever the thread count.
pub fn run_replicas<F>(replicas: usize, seed: u64, threads: usize, f: F) -> Result<Vec<Series>>
where
    F: Fn(usize, u64) -> Result<Series> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| (0..replicas).into_par_iter().map(|k| f(k, replica_seed(seed, k))).collect())
}

/// Per-time mean and standard error across replicas: `t`, then
/// `<col>_mean`, `<col>_se` for every other column.
pub fn aggregate(series: &[Series]) -> Result<Series> {
    let first = series.first().ok_or(Error::EmptyEnsemble)?;
    for s in series {
        if s.columns != first.columns {
            return Err(Error::invalid("series", "replicas have different columns"));
        }
        if s.len() != first.len() {
            return Err(Error::SizeMismatch(s.len(), first.len()));
        }
    }
    let mut cols = vec![first.columns[0].clone()];
    for c in &first.columns[1..] {
        cols.push(format!("{c}_mean"));
        cols.push(format!("{c}_se"));
    }
    let mut out = Series::new(cols);
    for k in 0..first.len() {
        let mut row = vec![first.rows[k][0]];
        for j in 1..first.columns.len() {
            let xs: Vec<f64> = series.iter().map(|s| s.rows[k][j]).collect();
            let (m, se) = mean_se(&xs);
            row.push(m);
            row.push(se);
        }
        out.push(row);
    }
    Ok(out)
}

/// Constants of the finite-horizon bound: `E‖Z − Z̄‖ ≤ C e^{rate·t}/√N`
/// with the second-moment bound `C_{0,1} + C_{0,2}·t` behind `C`.
#[derive(Clone, Debug, Serialize)]
pub struct GronwallConstants {
    pub e_h0_bound: f64,
    #[serde(rename = "C01")]
    pub c01: f64,
    #[serde(rename = "C02")]
    pub c02: f64,
    pub rate: f64,
}

impl GronwallConstants {
    pub fn new(cfg: &RunConfig, ledger: &CouplingLedger) -> Self {
        let p = &ledger.params;
        let ly = &ledger.lyapunov;
        let e_h0 = initial_h_bound(p, cfg.a_tilde, cfg.c_init_exp);
        Self {
            e_h0_bound: e_h0,
            c01: 4.0 * (e_h0 + ly.b / ly.lambda.abs()) / p.gamma.min(1.0),
            c02: (-ly.lambda).max(0.0),
            rate: 1.0 + p.gamma + 2.0 * ly.l_x + 2.0 * ly.l_c,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub content_hash: String,
    pub config: RunConfig,
    pub ledger: CouplingLedger,
    pub ledger_report: LedgerReport,
    pub admissibility: AdmissibilityReport,
    pub gronwall: GronwallConstants,
}

/// `sha256("blob <len>\0" ‖ text)`, the git object hash scheme.
pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn ledger_for(cfg: &RunConfig) -> Result<CouplingLedger> {
    derive_ledger(&cfg.params(), &cfg.ledger_inputs()?)
}

pub fn manifest(cfg: &RunConfig, ledger: &CouplingLedger) -> Manifest {
    let ly = &ledger.lyapunov;
    Manifest {
        version: env!("CARGO_PKG_VERSION"),
        content_hash: content_hash(&cfg.to_toml()),
        config: cfg.clone(),
        ledger: ledger.clone(),
        ledger_report: verify_ledger(ledger),
        admissibility: check_kernel_admissibility(&ledger.params, ly.l_x, ly.l_c, ledger),
        gronwall: GronwallConstants::new(cfg, ledger),
    }
}

pub fn write_manifest(dir: &Path, m: &Manifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(m)? + "\n")?;
    Ok(path)
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub replicas: Vec<Series>,
    pub summary: Series,
    pub files: Vec<PathBuf>,
}

fn write_run(dir: &Path, kind: &str, replicas: Vec<Series>, cfg: &RunConfig, ledger: &CouplingLedger) -> Result<RunOutput> {
    let mut files = vec![write_manifest(dir, &manifest(cfg, ledger))?];
    for (k, s) in replicas.iter().enumerate() {
        let path = dir.join(format!("series_{kind}_{k:03}.csv"));
        s.write(&path)?;
        files.push(path);
    }
    let summary = aggregate(&replicas)?;
    let path = dir.join(format!("summary_{kind}.csv"));
    summary.write(&path)?;
    files.push(path);
    Ok(RunOutput { replicas, summary, files })
}

/// `simulate`: particle-system replicas, written under `out_dir`.
pub fn simulate(cfg: &RunConfig, threads: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let dy = cfg.dynamics()?;
    let ledger = ledger_for(cfg)?;
    let reps = run_replicas(cfg.replicas, cfg.seed, threads, |_, s| run_particles(cfg, &dy, s))?;
    write_run(&cfg.out_dir, "particles", reps, cfg, &ledger)
}

/// `couple`: coupled-pair replicas, written under `out_dir`.
pub fn couple(cfg: &RunConfig, threads: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let dy = cfg.dynamics()?;
    let ledger = ledger_for(cfg)?;
    let reps = run_replicas(cfg.replicas, cfg.seed, threads, |_, s| run_coupled(cfg, &dy, &ledger, s))?;
    write_run(&cfg.out_dir, "coupled", reps, cfg, &ledger)
}
