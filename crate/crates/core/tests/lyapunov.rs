use fhn_chaos::config::RunConfig;
use fhn_chaos::distance::{derive_ledger, LedgerInputs};
use fhn_chaos::lyapunov::{
    check_kernel_admissibility, derive_b, derive_b_tilde, h, h_tilde, ln_h_tilde, sup_tilted, tilt, LyapunovConstants,
};
use fhn_chaos::model::{ModelParams, State};
use fhn_chaos::numeric::poly_sup;
use fhn_chaos::pipeline::{aggregate, run_particles, run_replicas};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = ModelParams> {
    (-2.0..2.0f64, -2.0..2.0f64, 0.1..4.0f64).prop_map(|(alpha, beta, gamma)| ModelParams {
        alpha,
        beta,
        gamma,
        sigma_x: 0.5,
        sigma_c: 0.5,
    })
}

fn state() -> impl Strategy<Value = State> {
    prop_oneof![
        (-3.0..3.0f64, -3.0..3.0f64),
        (-1e3..1e3f64, -1e3..1e3f64),
    ]
    .prop_map(|(x, c)| State::new(x, c))
}

fn le(a: f64, b: f64) -> bool {
    a <= b + 1e-12 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5000))]

    #[test]
    fn h_lower_bounds(p in model(), z in state()) {
        let hv = h(z, &p);
        prop_assert!(hv >= 0.0);
        prop_assert!(le(p.gamma * z.x * z.x / 4.0 + z.c * z.c / 4.0, hv));
        let shifted = (p.gamma * z.x + p.beta).powi(2) + (z.c + p.alpha).powi(2);
        prop_assert!(le(shifted / (2.0 * p.gamma.max(1.0)), hv));
    }

    #[test]
    fn weighted_distance_by_h(p in model(), z in state(), w in state(), delta in 0.1..10.0f64) {
        let r = (z.x - w.x).abs() + delta * (z.c - w.c).abs();
        let bound = 16.0 * (1.0 + delta * delta) / p.gamma.min(1.0) * (h(z, &p) + h(w, &p));
        prop_assert!(le(r * r, bound));
    }

    #[test]
    fn h_tilde_sandwich(p in model(), z in (-30.0..30.0f64, -30.0..30.0f64), a_tilde in 0.2..2.0f64) {
        let z = State::new(z.0, z.1);
        let a = tilt(&p, a_tilde);
        let hv = h(z, &p);
        let ht = h_tilde(z, a, &p);
        let e = (a * hv.sqrt()).exp();
        prop_assert!(le(hv, ht));
        prop_assert!(le(ht, hv * e));
        prop_assert!(le(e - 2.0 / (a * a) * (0.5 * a * a).exp_m1(), ht));
        prop_assert!(le(ht, 2.0 / a * hv.sqrt() * e));
        prop_assert!(le(hv.sqrt() * e / a - (std::f64::consts::E - 2.0) / (a * a), ht));
        if ht > 0.0 {
            prop_assert!((ln_h_tilde(z, a, &p) - ht.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn b_is_nonnegative(p in model(), l_x in 0.0..2.0f64, l_c in 0.0..0.2f64) {
        let lam = 2.0 * (1.0 - l_x / 8.0 - l_c * 17.0 / 8.0) * 0.5;
        prop_assert!(derive_b(&p, l_x, l_c, lam).unwrap() >= 0.0);
    }
}

#[test]
fn h_tilde_matches_numerical_integral() {
    // midpoint rule on ∫₀^H e^{a√u} du with 2·10⁶ cells
    let p = ModelParams { alpha: 0.0, beta: 0.0, gamma: 2.0, sigma_x: 0.5, sigma_c: 0.5 };
    let z = State::new(2.0, 0.0);
    let hv = h(z, &p);
    assert_eq!(hv, 4.0);
    let n = 2_000_000;
    let du = hv / n as f64;
    let s: f64 = (0..n).map(|k| (0.5 * ((k as f64 + 0.5) * du).sqrt()).exp()).sum::<f64>() * du;
    let ht = h_tilde(z, 0.5, &p);
    assert!(((ht - s) / s).abs() < 1e-9, "{ht} vs {s}");
}

#[test]
fn b_examples() {
    let p = ModelParams { alpha: 0.0, beta: 0.0, gamma: 1.0, sigma_x: 0.0, sigma_c: 0.0 };
    // sup of −x⁴ + 1.5x², attained at x² = 3/4
    let b = derive_b(&p, 0.0, 0.0, 1.0).unwrap();
    assert!((b - 0.5625).abs() < 1e-10);
    let (_, v) = poly_sup(&[0.0, 0.0, -1.0, 0.0, -2.0], 1e-12);
    assert_eq!(v, 0.0);
    assert!(derive_b(&p, 8.0, 0.0, 1.0).is_err());
}

#[test]
fn b_tilde_examples() {
    assert_eq!(sup_tilted(0.0, 4.0, 1.0), 0.0);
    assert_eq!(sup_tilted(-3.0, 4.0, 1.0), 0.0);
    assert!((sup_tilted(1.0, 4.0, 1e-10) - 1.0).abs() < 1e-9);
    // grid oracle for sup of e^{√h}(1−h) on [0,1]
    let grid = (0..=1_000_000).map(|k| k as f64 * 1e-6).map(|h| h.sqrt().exp() * (1.0 - h));
    let brute = grid.fold(f64::MIN, f64::max);
    assert!((sup_tilted(1.0, 4.0, 1.0) - brute).abs() < 1e-9);
    let p = ModelParams::default();
    assert!(derive_b_tilde(&p, 0.0, 0.0, 0.0, 0.1, 1.0).is_err());
    let (bt, br) = derive_b_tilde(&p, 0.0, 0.0, 1.0, 0.18, 10.0).unwrap();
    assert_eq!(bt, br.nonlinear.max(br.particle));
}

#[test]
fn constants_respect_lambda_window() {
    let p = ModelParams::default();
    for (l_x, l_c) in [(0.0, 0.0), (0.3, 0.01), (2.0, 0.1)] {
        let k = LyapunovConstants::derive(&p, l_x, l_c, None, 1.0, 20.0).unwrap();
        assert!(l_x / 8.0 + l_c * (2.0 + 1.0 / 8.0) < 1.0 - k.lambda / 2.0);
        assert_eq!(k.moments.alpha_x, p.gamma / 2.0 + 0.5);
        assert_eq!((k.moments.beta_x, k.moments.alpha_c, k.moments.beta_c), (8.5, 1.0 / 16.0, 0.5 + 1.0 / 32.0));
        assert!(k.b_tilde >= k.b);
    }
    assert!(LyapunovConstants::derive(&p, 0.0, 0.0, Some(0.0), 1.0, 20.0).is_err());
}

#[test]
fn admissibility_examples() {
    let p = ModelParams::default();
    let ledger = derive_ledger(&p, &LedgerInputs::default()).unwrap();
    let zero = check_kernel_admissibility(&p, 0.0, 0.0, &ledger);
    assert!(zero.pass(), "{:?}", zero.checks);

    let big = check_kernel_admissibility(&p, 4.0, 0.0, &ledger);
    assert!(!big.pass());
    assert!(!big.lyapunov_block_pass());

    // the bound c/(2C₁) is inclusive; in f64 it underflows to 0 at the default ledger
    let edge = (ledger.ln_c - 2f64.ln() - ledger.ln_c1).exp();
    let at = check_kernel_admissibility(&p, edge, 0.0, &ledger);
    let c = at.checks.iter().find(|c| c.name == "L_X <= c/(2 C1)").unwrap();
    assert!(c.pass);
}

#[test]
fn expected_h_stays_below_drift_bound() {
    // E_t ≤ max(E_0, B/λ) within three standard errors, small linear kernel
    let mut cfg = RunConfig { n: 128, t_end: 2.0, sample_stride: 50, ..RunConfig::default() };
    cfg.set_linear('x', -0.005, 0.0);
    let dy = cfg.dynamics().unwrap();
    let k = LyapunovConstants::derive(&dy.params, 0.005, 0.0, None, cfg.a_tilde, cfg.c_init_exp).unwrap();
    let reps = run_replicas(16, 7, 1, |_, s| run_particles(&cfg, &dy, s)).unwrap();
    let agg = aggregate(&reps).unwrap();
    let mean = agg.column("mean_h_mean").unwrap();
    let se = agg.column("mean_h_se").unwrap();
    let cap = mean[0].max(k.b / k.lambda);
    for (m, s) in mean.iter().zip(&se) {
        assert!(*m <= cap + 3.0 * s, "{m} > {cap} + 3·{s}");
    }
}
