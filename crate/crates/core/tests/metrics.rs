use fhn_chaos::metrics::{
    assignment_cost, coupled_w1_bound, cost_matrix, exact_cost_difference, expectation_series, fit_exponential_envelope, fit_scaling,
    hungarian, mean_se, wasserstein_exact,
};
use fhn_chaos::model::State;
use fhn_chaos::rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn cloud(n: usize) -> impl Strategy<Value = Vec<State>> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, c)| State::new(x, c)), n)
}

/// Minimum over all permutations, by Heap's algorithm.
fn brute_force(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    let mut best = total(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

#[test]
fn wasserstein_examples() {
    let a = [State::new(0.0, 0.0)];
    let b = [State::new(1.0, 0.0)];
    assert_eq!(wasserstein_exact(&a, &b, 1).unwrap(), 1.0);
    assert_eq!(wasserstein_exact(&a, &b, 2).unwrap(), 1.0);
    let big: Vec<State> = (0..257).map(|k| State::new(k as f64, 0.0)).collect();
    assert!(wasserstein_exact(&big, &big, 1).is_err());
    assert!(wasserstein_exact(&a, &b, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn hungarian_matches_brute_force(a in cloud(8), b in cloud(8), p in 1u32..=2) {
        let cost = cost_matrix(&a, &b, p);
        let perm = hungarian(&cost);
        let mut seen = perm.clone();
        seen.sort();
        prop_assert_eq!(seen, (0..8).collect::<Vec<_>>());
        let best = brute_force(&cost);
        prop_assert!((assignment_cost(&cost, &perm) - best).abs() <= 1e-12 * best.max(1.0));
    }
}

/// Points far apart on a few lattice values, so that many assignments tie
/// or nearly tie in l1 cost.
fn tied_cloud(n: usize) -> impl Strategy<Value = Vec<State>> {
    let coord = (prop::sample::select(vec![-1e3, 0.0, 1e3]), -1.0..1.0f64).prop_map(|(a, e)| a + e);
    prop::collection::vec((coord.clone(), coord).prop_map(|(x, c)| State::new(x, c)), n)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hungarian_is_optimal_in_exact_arithmetic(a in tied_cloud(7), b in tied_cloud(7), p in 1u32..=2) {
        let cost = cost_matrix(&a, &b, p);
        let perm = hungarian(&cost);
        for other in permutations(7) {
            prop_assert!(exact_cost_difference(&cost, &perm, &other) <= 0.0, "{other:?} beats {perm:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wasserstein_is_a_metric(a in cloud(12), b in cloud(12), c in cloud(12), p in 1u32..=2) {
        let ab = wasserstein_exact(&a, &b, p).unwrap();
        let ba = wasserstein_exact(&b, &a, p).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(wasserstein_exact(&a, &a, p).unwrap(), 0.0);
        let bc = wasserstein_exact(&b, &c, p).unwrap();
        let ac = wasserstein_exact(&a, &c, p).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn identity_coupling_bounds_the_optimum(a in cloud(20), b in cloud(20)) {
        let bound = coupled_w1_bound(&a, &b, 1).unwrap();
        prop_assert!(wasserstein_exact(&a, &b, 1).unwrap() <= bound + 1e-12);
        let l2: f64 = a.iter().zip(&b).map(|(x, y)| (*x - *y).l2_sq()).sum::<f64>() / 20.0;
        prop_assert!(wasserstein_exact(&a, &b, 2).unwrap().powi(2) <= l2 + 1e-12);
    }
}

#[test]
fn coupled_bound_examples() {
    let a = [State::new(1.0, 2.0), State::new(-1.0, 0.0)];
    assert_eq!(coupled_w1_bound(&a, &a, 2).unwrap(), 0.0);
    let b = [State::new(0.0, 2.0), State::new(-1.0, 3.0)];
    assert_eq!(coupled_w1_bound(&a, &b, 1).unwrap(), 2.0);
    assert_eq!(coupled_w1_bound(&a, &b, 2).unwrap(), 4.0);
    assert!(coupled_w1_bound(&a, &b, 3).is_err());
    assert!(coupled_w1_bound(&a, &b[..1], 1).is_err());
}

#[test]
fn expectation_series_examples() {
    let t = [0.0, 1.0];
    let s = expectation_series(&t, &[vec![2.0, 3.0], vec![2.0, 3.0], vec![2.0, 3.0]]).unwrap();
    assert_eq!(s.mean, vec![2.0, 3.0]);
    assert_eq!(s.se, Some(vec![0.0, 0.0]));
    let one = expectation_series(&t, &[vec![1.0, 5.0]]).unwrap();
    assert!(one.se.is_none());
    assert!(expectation_series(&t, &[]).is_err());
    assert!(expectation_series(&t, &[vec![1.0]]).is_err());
}

#[test]
fn standard_error_against_analytic() {
    // m = 100 Gaussian draws of σ = 2, SE should be near σ/√m = 0.2
    let mut r = rng::stream(1, rng::DOMAIN_AUX, 0, 0);
    let mut ses = Vec::new();
    for _ in 0..200 {
        let xs: Vec<f64> = (0..100).map(|_| 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
        ses.push(mean_se(&xs).1);
    }
    let avg = ses.iter().sum::<f64>() / ses.len() as f64;
    assert!((avg - 0.2).abs() < 0.2 * 0.2, "{avg}");
    let within = ses.iter().filter(|s| (**s - 0.2).abs() < 0.04).count();
    assert!(within >= 180, "{within}");
}

#[test]
fn fit_examples() {
    let xs = [16.0, 32.0, 64.0, 128.0];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 / x.sqrt()).collect();
    let f = fit_scaling(&xs, &ys).unwrap();
    assert!((f.slope + 0.5).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
    let f = fit_scaling(&xs, &[2.0; 4]).unwrap();
    assert!(f.slope.abs() < 1e-12);
    let ts = [0.0, 0.5, 1.0, 1.5];
    let f = fit_exponential_envelope(&ts, &ts.map(|t| (2.0 * t).exp())).unwrap();
    assert!((f.slope - 2.0).abs() < 1e-12);
    let f = fit_exponential_envelope(&ts, &ts.map(|t| (-t).exp() + 0.1)).unwrap();
    assert!(f.slope < 0.0);
    assert!(fit_scaling(&xs, &[1.0, 0.0, 1.0, 1.0]).is_err());
    assert!(fit_scaling(&xs[..2], &ys[..2]).is_err());
}

#[test]
fn scaling_confidence_interval_is_calibrated() {
    let xs = [16.0, 32.0, 64.0, 128.0, 256.0, 512.0];
    let mut r = rng::stream(2, rng::DOMAIN_AUX, 0, 0);
    let mut hits = 0;
    for _ in 0..100 {
        let ys: Vec<f64> = xs
            .iter()
            .map(|x: &f64| 0.7 * x.powf(-0.5) * (0.1 * r.sample::<f64, _>(StandardNormal)).exp())
            .collect();
        let f = fit_scaling(&xs, &ys).unwrap();
        if f.ci95.0 <= -0.5 && -0.5 <= f.ci95.1 {
            hits += 1;
        }
    }
    assert!(hits >= 90, "{hits}/100");
}
