//! Evaluates the built-in interaction kernels and the particle drift on a
//! small cloud, and compares the linear shortcut against the double sum.
//!
//! cargo run --example drift

use fhn_chaos::model::{empirical_convolution, intrinsic_drift, kernel_eval, mean_field_drift, Kernel, ModelParams, State};

fn main() -> fhn_chaos::Result<()> {
    let p = ModelParams::default();
    let kernels = [
        ("zero", Kernel::zero()),
        ("linear(-0.3, 0.1)", Kernel::linear(-0.3, 0.1)),
        ("bounded_tanh(0.5, 2)", Kernel::bounded_tanh(0.5, 2.0)),
        ("custom sin", Kernel::custom(|z| 0.2 * z.x.sin(), 0.2)?),
    ];
    let dz = State::new(0.8, -0.4);
    for (name, k) in &kernels {
        println!("{name:<22} K(0.8, -0.4) = {:+.6}  L = {}", kernel_eval(k, dz)?, k.lipschitz);
    }

    let cloud: Vec<State> = (0..8).map(|k| State::new((k as f64 * 0.7).sin(), 0.1 * k as f64 - 0.3)).collect();
    let (dx0, dc0) = intrinsic_drift(cloud[0], &p);
    println!("\nintrinsic drift of particle 0: ({dx0:+.6}, {dc0:+.6})");
    for (name, k) in &kernels {
        let (dx, dc) = mean_field_drift(0, &cloud, k, &Kernel::zero(), &p)?;
        println!("{name:<22} mean-field drift ({dx:+.6}, {dc:+.6})");
    }

    // linear kernels reduce to the cloud mean, the sum over pairs agrees
    let lin = Kernel::linear(-0.3, 0.1);
    let n = cloud.len() as f64;
    let (mx, mc) = (cloud.iter().map(|z| z.x).sum::<f64>() / n, cloud.iter().map(|z| z.c).sum::<f64>() / n);
    let direct: f64 = cloud.iter().map(|w| -0.3 * (cloud[0].x - w.x) + 0.1 * (cloud[0].c - w.c)).sum::<f64>() / 8.0;
    println!(
        "\nlinear: via library {:+.15}  by hand {:+.15}  via mean {:+.15}",
        empirical_convolution(&lin, cloud[0], &cloud),
        direct,
        -0.3 * (cloud[0].x - mx) + 0.1 * (cloud[0].c - mc)
    );
    Ok(())
}
