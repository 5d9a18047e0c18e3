//! Wasserstein distances, replica statistics and rate fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::State;
use crate::numeric::{exact_sum_difference, expansion_add, expansion_value};

pub const MAX_OT_SIZE: usize = 256;

/// Minimum-cost perfect assignment (shortest augmenting paths with
/// potentials). Returns `assign[i] = j`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let col_potential: Vec<f64> = v[1..].to_vec();
    cancel_negative_cycles(cost, &mut assign, &col_potential);
    assign
}

/// The floating-point potentials above can settle on an assignment a few
/// ulps worse than a near-tied one. Bellman-Ford on the exchange graph,
/// with path lengths kept as exact expansions, removes any improving
/// cycle, so the result is optimal for the cost matrix as given. Starting
/// from the column potentials, only rounding-level relaxations remain.
fn cancel_negative_cycles(cost: &[Vec<f64>], assign: &mut [usize], col_potential: &[f64]) {
    let n = assign.len();
    // edge i → j: row i takes the column of row j
    let weight = |a: &[usize], i: usize, j: usize, e: &mut Vec<f64>| {
        expansion_add(e, cost[i][a[j]]);
        expansion_add(e, -cost[i][a[i]]);
    };
    let cycle_weight = |a: &[usize], cycle: &[usize], pred: &[usize]| {
        let mut total = Vec::new();
        for &x in cycle {
            weight(a, pred[x], x, &mut total);
        }
        expansion_value(&total)
    };
    'restart: loop {
        let mut dist: Vec<Vec<f64>> = assign.iter().map(|&k| vec![col_potential[k]]).collect();
        let mut approx: Vec<f64> = dist.iter().map(|d| d[0]).collect();
        let mut pred = vec![usize::MAX; n];
        for _ in 0..=n {
            let mut relaxed = false;
            for i in 0..n {
                let own = cost[i][assign[i]];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let c = cost[i][assign[j]];
                    let guess = approx[i] + c - own;
                    let slack = 1e-10 * (approx[i].abs() + c.abs() + own.abs() + approx[j].abs());
                    if guess > approx[j] + slack {
                        continue;
                    }
                    let mut cand = dist[i].clone();
                    weight(assign, i, j, &mut cand);
                    let mut d = cand.clone();
                    for &x in &dist[j] {
                        expansion_add(&mut d, -x);
                    }
                    if expansion_value(&d) < 0.0 {
                        approx[j] = expansion_value(&cand);
                        dist[j] = cand;
                        pred[j] = i;
                        relaxed = true;
                    }
                }
            }
            if !relaxed {
                return;
            }
            // a cycle among the predecessors is an improving exchange
            if let Some(cycle) = pred_cycle(&pred) {
                if cycle_weight(assign, &cycle, &pred) < 0.0 {
                    let old = assign.to_vec();
                    for &x in &cycle {
                        assign[pred[x]] = old[x];
                    }
                    continue 'restart;
                }
            }
        }
        return;
    }
}

/// Some cycle of the functional graph `x → pred[x]`, if any.
fn pred_cycle(pred: &[usize]) -> Option<Vec<usize>> {
    let n = pred.len();
    let mut state = vec![0u8; n];
    for start in 0..n {
        let mut x = start;
        while x != usize::MAX && state[x] == 0 {
            state[x] = 1;
            x = pred[x];
        }
        if x != usize::MAX && state[x] == 1 {
            let mut cycle = vec![x];
            let mut u = pred[x];
            while u != x {
                cycle.push(u);
                u = pred[u];
            }
            return Some(cycle);
        }
        let mut y = start;
        while y != usize::MAX && state[y] == 1 {
            state[y] = 2;
            y = pred[y];
        }
    }
    None
}

/// `‖z − w‖_p^p`
#[inline]
pub fn ground_cost(z: State, w: State, p: u32) -> f64 {
    let d = z - w;
    match p {
        1 => d.l1(),
        _ => d.l2_sq(),
    }
}

pub fn cost_matrix(a: &[State], b: &[State], p: u32) -> Vec<Vec<f64>> {
    a.iter().map(|&z| b.iter().map(|&w| ground_cost(z, w, p)).collect()).collect()
}

/// Sum of `cost[i][perm[i]]` in index order.
pub fn assignment_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// `cost(a) − cost(b)` for two assignments, computed without rounding
/// error until the final result. Zero exactly for tied assignments.
pub fn exact_cost_difference(cost: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
    let ca: Vec<f64> = a.iter().enumerate().map(|(i, &j)| cost[i][j]).collect();
    let cb: Vec<f64> = b.iter().enumerate().map(|(i, &j)| cost[i][j]).collect();
    exact_sum_difference(&ca, &cb)
}

/// Exact `W_p` between two uniform clouds of equal size.
pub fn wasserstein_exact(a: &[State], b: &[State], p: u32) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if a.len() > MAX_OT_SIZE {
        return Err(Error::invalid("n", format!("exact transport capped at {MAX_OT_SIZE} points")));
    }
    if p != 1 && p != 2 {
        return Err(Error::invalid("p", "must be 1 or 2"));
    }
    let cost = cost_matrix(a, b, p);
    let perm = hungarian(&cost);
    let mean = assignment_cost(&cost, &perm) / a.len() as f64;
    Ok(if p == 1 { mean } else { mean.sqrt() })
}

/// `k·(1/N)Σᵢ ‖Zⁱ − Z̄ⁱ‖₁`, the coupling bound on `W₁` of the `k`-marginals.
pub fn coupled_w1_bound(system: &[State], limit: &[State], k: usize) -> Result<f64> {
    if system.len() != limit.len() {
        return Err(Error::SizeMismatch(system.len(), limit.len()));
    }
    if k == 0 || k > system.len() {
        return Err(Error::invalid("k", "need 1 ≤ k ≤ N"));
    }
    let s: f64 = system.iter().zip(limit).map(|(a, b)| (*a - *b).l1()).sum();
    Ok(k as f64 * s / system.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationSeries {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    /// `None` with a single replica.
    pub se: Option<Vec<f64>>,
}

/// Per-time mean and standard error across replicas; `values[r][k]` is
/// replica `r` at time `t[k]`.
pub fn expectation_series(t: &[f64], values: &[Vec<f64>]) -> Result<ExpectationSeries> {
    if values.is_empty() || t.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if let Some(bad) = values.iter().find(|v| v.len() != t.len()) {
        return Err(Error::SizeMismatch(bad.len(), t.len()));
    }
    let m = values.len() as f64;
    let mean: Vec<f64> = (0..t.len()).map(|k| values.iter().map(|v| v[k]).sum::<f64>() / m).collect();
    let se = if values.len() >= 2 {
        Some(
            (0..t.len())
                .map(|k| {
                    let ss: f64 = values.iter().map(|v| (v[k] - mean[k]).powi(2)).sum();
                    (ss / (m - 1.0) / m).sqrt()
                })
                .collect(),
        )
    } else {
        None
    };
    Ok(ExpectationSeries { t: t.to_vec(), mean, se })
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (m - 1.0) / m).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ci95: (f64, f64),
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(Error::Fit("need at least 3 points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite data".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    let se = (ss_res / (n - 2.0) / sxx).sqrt();
    let tq = StudentsT::new(0.0, 1.0, n - 2.0).map_err(|e| Error::Fit(e.to_string()))?.inverse_cdf(0.975);
    Ok(RateFit { slope, intercept, r_squared, ci95: (slope - tq * se, slope + tq * se) })
}

fn logs(ys: &[f64]) -> Result<Vec<f64>> {
    if ys.iter().any(|&y| !(y > 0.0)) {
        return Err(Error::Fit("values must be positive".into()));
    }
    Ok(ys.iter().map(|y| y.ln()).collect())
}

/// Least squares on `(ln x, ln y)`.
pub fn fit_scaling(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    let lx = logs(xs)?;
    let ly = logs(ys)?;
    linear_fit(&lx, &ly)
}

/// Least squares on `(t, ln y)`.
pub fn fit_exponential_envelope(ts: &[f64], ys: &[f64]) -> Result<RateFit> {
    let ly = logs(ys)?;
    linear_fit(ts, &ly)
}
