//! Derives and verifies the coupling ledger for the default parameters,
//! then checks the kernel admissibility of a few Lipschitz constants.
//!
//! cargo run --example ledger

use fhn_chaos::distance::{derive_ledger, verify_ledger, LedgerInputs};
use fhn_chaos::lyapunov::check_kernel_admissibility;
use fhn_chaos::model::ModelParams;

fn main() -> fhn_chaos::Result<()> {
    let p = ModelParams::default();
    let ledger = derive_ledger(&p, &LedgerInputs::default())?;
    let ly = &ledger.lyapunov;
    println!("lambda = {}  B = {}  B_tilde = {}  a = {}", ly.lambda, ly.b, ly.b_tilde, ly.a);
    println!("delta = {}  R0 = {}  R = {}  q = {}", ledger.delta, ledger.r0, ledger.r, ledger.q);
    println!("ln c = {}  ln eps = {}  ln phi_min = {}", ledger.ln_c, ledger.ln_epsilon, ledger.ln_phi_min);
    println!("ln C1 = {}  ln C2 = {}  ln Cz = {}", ledger.ln_c1, ledger.ln_c2, ledger.ln_cz);
    for n in &ledger.notes {
        println!("note: {n}");
    }

    let report = verify_ledger(&ledger);
    for c in &report.checks {
        println!("{:<5} {:<36} worst slack {:e}", if c.pass { "ok" } else { "FAIL" }, c.name, c.worst_slack);
    }
    println!("ledger {}", if report.pass() { "valid" } else { "INVALID" });

    for l_x in [0.0, 1e-3, 4.0] {
        let adm = check_kernel_admissibility(&p, l_x, 0.0, &ledger);
        println!(
            "L_X = {l_x}: admissible {}  (lyapunov block {}), binding {}",
            adm.pass(),
            adm.lyapunov_block_pass(),
            adm.binding
        );
    }
    Ok(())
}
