use std::path::Path;
use std::process::{Command, Output};

use fhn_chaos::config::{KernelChoice, RunConfig};
use fhn_chaos::records::Series;
use fhn_chaos::sim::Coupling;
use fhn_chaos::Error;
use proptest::prelude::*;

fn fhn(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fhn"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("FHN_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: &str = "n = 16\nm = 32\nt_end = 0.2\nsample_stride = 20\nreplicas = 2\n";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(
        alpha in -2.0..2.0f64,
        gamma in 0.1..3.0f64,
        a11 in -1.0..1.0f64,
        n in 1usize..64,
        seed in any::<u64>(),
        sync in any::<bool>(),
        xi in prop::option::of(1e-3..1.0f64),
    ) {
        let mut cfg = RunConfig { alpha, gamma, n, m: 64, seed, xi, ..RunConfig::default() };
        cfg.set_linear('x', a11, 0.0);
        if sync {
            cfg.coupling = Coupling::Synchronous;
        }
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }
}

#[test]
fn config_errors_name_the_field() {
    let e = RunConfig::from_toml("n = 4\nsigmax = 0.5\n").unwrap_err();
    assert!(matches!(e, Error::Config(_)) && e.to_string().contains("sigmax"), "{e}");
    let e = RunConfig::from_toml("sample_stride = 7\n").unwrap_err();
    assert!(e.to_string().contains("sample_stride"), "{e}");
    let e = RunConfig::from_toml("n = 10\nm = 5\n").unwrap_err();
    assert!(e.to_string().contains("`m`"), "{e}");
    let e = RunConfig::from_toml("kernel_x = \"linear\"\nkernel_x_a11 = 1.0\nkernel_x_lipschitz = 0.5\n").unwrap_err();
    assert!(e.to_string().contains("kernel_x_lipschitz"), "{e}");
    let e = RunConfig::from_toml("kernel_x = \"zero\"\nkernel_x_a11 = 1.0\n").unwrap_err();
    assert!(e.to_string().contains("kernel_x"), "{e}");
    let e = RunConfig::from_toml("coupling = \"reflection_c\"\n").unwrap_err();
    assert!(e.to_string().contains("coupling"), "{e}");
    let cfg = RunConfig::from_toml("kernel_x = \"bounded_tanh\"\nkernel_x_scale = 0.5\nkernel_x_rate = 2.0\n").unwrap();
    assert_eq!(cfg.kernel_x, KernelChoice::BoundedTanh);
    assert_eq!(cfg.kernel_x().unwrap().lipschitz, 1.0);
}

#[test]
fn params_default_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = fhn(dir.path(), "", &["params"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("delta") && !stdout.contains("FAIL"));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["ledger"]["delta"].as_f64().unwrap(), 6.875);
    assert_eq!(m["content_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn params_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fhn(dir.path(), "eta = 4.0\n", &["params"])), 2);
    assert_eq!(code(&fhn(dir.path(), "bogus = 1\n", &["params"])), 2);
    let big = "kernel_x = \"linear\"\nkernel_x_a11 = 4.0\n";
    let o = fhn(dir.path(), big, &["params"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn simulate_zero_horizon_is_one_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = fhn(dir.path(), "n = 8\nm = 8\nt_end = 0.0\n", &["simulate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = Series::read(&dir.path().join("out/series_particles_000.csv")).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s.column("t").unwrap(), vec![0.0]);
}

#[test]
fn synchronous_zero_kernel_rho_vanishes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}coupling = \"synchronous\"\n");
    let o = fhn(dir.path(), &cfg, &["couple"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..2 {
        let s = Series::read(&dir.path().join(format!("out/series_coupled_{k:03}.csv"))).unwrap();
        assert!(s.column("rho").unwrap().iter().all(|&v| v == 0.0));
        assert!(s.column("w1_bound").unwrap().iter().all(|&v| v == 0.0));
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn replay_is_byte_identical_across_thread_counts() {
    // the manifest records out_dir, so every run writes to the same place
    let cfg = format!("{SMALL}kernel_x = \"linear\"\nkernel_x_a11 = -0.3\n");
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        let o = fhn(dir.path(), &cfg, &[&["couple"], extra].concat());
        assert_eq!(code(&o), 0);
        files(&dir.path().join("out"))
    };
    let first = run(&["--threads", "1"]);
    assert!(first.len() >= 4);
    assert_eq!(run(&["--threads", "3"]), first);
    assert_eq!(run(&["--threads", "1"]), first);
    assert_ne!(run(&["--seed", "7"]), first);
}

#[test]
fn verify_writes_a_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = fhn(dir.path(), "", &["verify", "7", "--smoke"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("criterion 7"), "{stdout}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/verdict_7.json")).unwrap()).unwrap();
    for key in ["criterion", "pass", "statistic", "tolerance"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(code(&o), if v["pass"].as_bool().unwrap() { 0 } else { 1 });
}
