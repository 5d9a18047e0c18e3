//! Exact W1 and W2 between two empirical clouds via the Hungarian
//! algorithm, against the naive bound of the identity coupling. W1 is
//! taken with the l1 ground distance and W2 with the Euclidean one, so W2
//! can come out below W1.
//!
//! cargo run --release --example wasserstein -- [n]

use fhn_chaos::metrics::{coupled_w1_bound, wasserstein_exact};
use fhn_chaos::model::State;
use fhn_chaos::rng;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> fhn_chaos::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(128, |s| s.parse().expect("n"));
    let mut r = rng::stream(11, rng::DOMAIN_AUX, 0, 0);
    let mut gauss = |shift: f64| -> Vec<State> {
        (0..n)
            .map(|_| State::new(shift + r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal)))
            .collect()
    };
    let a = gauss(0.0);
    for shift in [0.0, 0.5, 1.0, 3.0] {
        let b = gauss(shift);
        println!(
            "shift {shift:3.1}: W1 = {:.4}  W2 = {:.4}  identity coupling = {:.4}",
            wasserstein_exact(&a, &b, 1)?,
            wasserstein_exact(&a, &b, 2)?,
            coupled_w1_bound(&a, &b, 1)?
        );
    }
    Ok(())
}
