use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fhn_chaos::config::RunConfig;
use fhn_chaos::lyapunov::check_kernel_admissibility;
use fhn_chaos::pipeline::{self, ledger_for};
use fhn_chaos::verify::{run_criterion, Scale, VerifyOptions, CRITERIA};
use fhn_chaos::Error;

#[derive(Parser)]
#[command(name = "fhn", version, about = "Mean-field FitzHugh-Nagumo particles and their couplings")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Flat TOML run configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    #[arg(long, global = true, env = "FHN_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derive and verify the coupling ledger, write the manifest.
    Params,
    /// Run the particle system.
    Simulate,
    /// Run coupled pairs against the limit proxy.
    Couple,
    /// Run acceptance criteria (all when none given).
    Verify {
        criteria: Vec<u8>,
        /// Tiny sizes, for checking the plumbing only.
        #[arg(long)]
        smoke: bool,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INADMISSIBLE: u8 = 3;

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn params(cfg: &RunConfig) -> Result<u8, Error> {
    let ledger = ledger_for(cfg)?;
    let m = pipeline::manifest(cfg, &ledger);
    let ly = &ledger.lyapunov;
    println!("{:<14} {}", "lambda", ly.lambda);
    println!("{:<14} {}", "B", ly.b);
    println!("{:<14} {}", "B_tilde", ly.b_tilde);
    println!("{:<14} {}", "a", ly.a);
    println!("{:<14} {}", "delta", ledger.delta);
    println!("{:<14} {}", "R0", ledger.r0);
    println!("{:<14} {}", "R", ledger.r);
    println!("{:<14} {}", "Cf1", ledger.cf1);
    println!("{:<14} {}", "Cf2", ledger.cf2);
    println!("{:<14} {}", "xi", ledger.xi);
    println!("{:<14} {}", "ln c", ledger.ln_c);
    println!("{:<14} {}", "ln eps", ledger.ln_epsilon);
    println!("{:<14} {}", "ln phi_min", ledger.ln_phi_min);
    println!("{:<14} {}", "ln C1", ledger.ln_c1);
    println!("{:<14} {}", "ln C2", ledger.ln_c2);
    println!("{:<14} {}", "ln Cz", ledger.ln_cz);
    println!();
    for c in &m.ledger_report.checks {
        println!("{:<4} {}  (worst slack {:e})", if c.pass { "ok" } else { "FAIL" }, c.name, c.worst_slack);
    }
    let adm = check_kernel_admissibility(&ledger.params, ly.l_x, ly.l_c, &ledger);
    println!();
    for c in &adm.checks {
        println!("{:<4} {}  (ln slack {:e})", if c.pass { "ok" } else { "FAIL" }, c.name, c.ln_slack);
    }
    let path = pipeline::write_manifest(&cfg.out_dir, &m)?;
    println!("\nmanifest: {}", path.display());
    Ok(if !m.ledger_report.pass() {
        EXIT_FAIL
    } else if !adm.pass() {
        println!("ledger valid; kernels outside the uniform-in-time regime (binding: {})", adm.binding);
        EXIT_INADMISSIBLE
    } else {
        0
    })
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = load(cli)?;
    let threads = cfg.effective_threads(cli.threads);
    match &cli.cmd {
        Cmd::Params => params(&cfg),
        Cmd::Simulate | Cmd::Couple => {
            let out = if matches!(cli.cmd, Cmd::Simulate) {
                pipeline::simulate(&cfg, threads)?
            } else {
                pipeline::couple(&cfg, threads)?
            };
            for f in &out.files {
                println!("{}", f.display());
            }
            Ok(0)
        }
        Cmd::Verify { criteria, smoke } => {
            let opts = VerifyOptions {
                seed: cfg.seed,
                threads,
                replicas: cli.replicas.unwrap_or(32),
                scale: if *smoke { Scale::Smoke } else { Scale::Full },
                out_dir: Some(cfg.out_dir.clone()),
            };
            let ids: Vec<u8> = if criteria.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { criteria.clone() };
            let mut all = true;
            for id in ids {
                let v = run_criterion(id, &opts)?;
                println!("{}", v.line());
                all &= v.pass;
            }
            Ok(if all { 0 } else { EXIT_FAIL })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fhn: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Invalid { .. } => EXIT_CONFIG,
                _ => EXIT_FAIL,
            })
        }
    }
}
