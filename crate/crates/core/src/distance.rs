//! Semimetric `r`, concave transform `f`, weights `G`, `ρ`, and the ledger
//! of coupling constants.
//!
//! The constants `c`, `ε`, `φ_min`, `C₁`, `C₂`, `C_z` lie far outside the
//! range of `f64` for any realistic parameters, so the ledger stores their
//! natural logarithms and every comparison involving them is made in log
//! scale.

use std::f64::consts::{E, PI};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{h, ln_h_tilde, LyapunovConstants};
use crate::model::{ModelParams, State};
use crate::numeric::{adaptive_simpson, gauss_integral, log_add_exp};

/// Which noise channel carries the reflection: `X` for `σ_X > 0`, `C` for
/// the degenerate case `σ_X = 0`, `σ_C > 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChannel {
    #[default]
    X,
    C,
}

/// `|x − x̄| + δ|c − c̄|`
#[inline]
pub fn r_dist(z: State, zbar: State, delta: f64) -> f64 {
    (z.x - zbar.x).abs() + delta * (z.c - zbar.c).abs()
}

/// `δ|x − x̄| + |2(x − x̄) − (c − c̄)|`, the distance used when only `C` is noisy.
#[inline]
pub fn r_dist_c(z: State, zbar: State, delta: f64) -> f64 {
    let dx = z.x - zbar.x;
    let dc = z.c - zbar.c;
    delta * dx.abs() + (2.0 * dx - dc).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerInputs {
    pub l_x: f64,
    pub l_c: f64,
    pub l_x_max: f64,
    pub l_c_max: f64,
    pub eta: f64,
    pub delta_tilde: f64,
    pub a_tilde: f64,
    pub c_init_exp: f64,
    /// Mollifier width; `None` means `1e-3·R`.
    pub xi: Option<f64>,
    pub lambda: Option<f64>,
    pub channel: NoiseChannel,
}

impl Default for LedgerInputs {
    fn default() -> Self {
        Self {
            l_x: 0.0,
            l_c: 0.0,
            l_x_max: 4.0,
            l_c_max: 0.2,
            eta: 5.0,
            delta_tilde: 0.1,
            a_tilde: 1.0,
            c_init_exp: 20.0,
            xi: None,
            lambda: None,
            channel: NoiseChannel::X,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingLedger {
    pub params: ModelParams,
    pub inputs: LedgerInputs,
    pub lyapunov: LyapunovConstants,
    /// Noise level of the reflected channel.
    pub sigma: f64,
    pub delta: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "Cf1")]
    pub cf1: f64,
    #[serde(rename = "Cf2")]
    pub cf2: f64,
    /// `ln` of the three candidates for `c`.
    pub ln_c_branches: [f64; 3],
    /// Index of the candidate achieving the minimum.
    pub c_binding: usize,
    pub ln_c: f64,
    pub ln_epsilon: f64,
    pub ln_phi_min: f64,
    #[serde(rename = "ln_C1")]
    pub ln_c1: f64,
    #[serde(rename = "ln_C2")]
    pub ln_c2: f64,
    #[serde(rename = "ln_Cz")]
    pub ln_cz: f64,
    /// Exponent of `φ(r) = e^{-q r²}`.
    pub q: f64,
    pub xi: f64,
    pub notes: Vec<String>,
    #[serde(skip)]
    profile: OnceLock<Arc<Profile>>,
}

fn sigma_for(p: &ModelParams, channel: NoiseChannel) -> f64 {
    match channel {
        NoiseChannel::X => p.sigma_x,
        NoiseChannel::C => p.sigma_c,
    }
}

/// `16((1/a²)(γ + a(β+α/δ)√(2m))(e^{a²/2} − 1) + √(2m)(√γ + 1/δ)(e − 2))`, `m = max(γ,1)`
pub fn cf1(p: &ModelParams, a: f64, delta: f64) -> f64 {
    let s = (2.0 * p.gamma.max(1.0)).sqrt();
    16.0 * ((p.gamma + a * (p.beta + p.alpha / delta) * s) * ((0.5 * a * a).exp_m1()) / (a * a)
        + s * (p.gamma.sqrt() + 1.0 / delta) * (E - 2.0))
}

/// `4(γ + (a(β+α/δ) + 2a²(√γ + 1/δ))√(2m))`
pub fn cf2(p: &ModelParams, a: f64, delta: f64) -> f64 {
    let s = (2.0 * p.gamma.max(1.0)).sqrt();
    4.0 * (p.gamma + (a * (p.beta + p.alpha / delta) + 2.0 * a * a * (p.gamma.sqrt() + 1.0 / delta)) * s)
}

pub fn derive_ledger(p: &ModelParams, inp: &LedgerInputs) -> Result<CouplingLedger> {
    p.validate()?;
    if !(inp.eta > 4.0) {
        return Err(Error::invalid("eta", "must be > 4"));
    }
    if !(inp.delta_tilde > 0.0) {
        return Err(Error::invalid("delta_tilde", "must be > 0"));
    }
    if !(inp.l_c_max < 1.0 && inp.l_c_max >= 0.0 && inp.l_x_max >= 0.0) {
        return Err(Error::invalid("l_c_max/l_x_max", "need 0 ≤ L_X,max and 0 ≤ L_C,max < 1"));
    }
    if !(inp.l_x >= 0.0 && inp.l_x <= inp.l_x_max) {
        return Err(Error::invalid("l_x", "need 0 ≤ L_X ≤ L_X,max"));
    }
    if !(inp.l_c >= 0.0 && inp.l_c <= inp.l_c_max) {
        return Err(Error::invalid("l_c", "need 0 ≤ L_C ≤ L_C,max"));
    }
    match inp.channel {
        NoiseChannel::X if !(p.sigma_x > 0.0) => {
            return Err(Error::invalid("sigma_x", "must be > 0 (or select the C channel)"))
        }
        NoiseChannel::C if p.sigma_x != 0.0 || !(p.sigma_c > 0.0) => {
            return Err(Error::invalid("sigma_x/sigma_c", "the C channel requires sigma_x = 0 and sigma_c > 0"))
        }
        _ => {}
    }
    let (l_x, l_c, lxm, lcm) = (inp.l_x, inp.l_c, inp.l_x_max, inp.l_c_max);
    let lyap = LyapunovConstants::derive(p, l_x, l_c, inp.lambda, inp.a_tilde, inp.c_init_exp)?;
    let lambda = lyap.lambda;
    let bt = lyap.b_tilde;
    if !(bt > 0.0) {
        return Err(Error::derivation("B_tilde", "must be > 0"));
    }
    let a = lyap.a;
    let sigma = sigma_for(p, inp.channel);
    let mut notes = vec![format!(
        "B_tilde branches: nonlinear {} particle {}",
        lyap.b_tilde_branches.nonlinear, lyap.b_tilde_branches.particle
    )];

    let mut delta = (1.0 + inp.delta_tilde) * (1.0 + lxm) / (1.0 - lcm);
    if inp.channel == NoiseChannel::C && delta <= 2.0 * (1.0 + inp.delta_tilde) {
        delta = 2.0 * (1.0 + inp.delta_tilde);
        notes.push("delta raised to 2(1+delta_tilde) for the C-channel distance".into());
    }
    if !(delta > (1.0 + l_x) / (1.0 - l_c)) {
        return Err(Error::derivation("delta", "must exceed (1+L_X)/(1-L_C)"));
    }
    let gmin = p.gamma.min(1.0);
    let r0 = (1280.0 * bt / (lambda * gmin)).sqrt();
    let big_r = (1.0 + delta * delta).sqrt() * r0;
    let cf1 = cf1(p, a, delta);
    let cf2 = cf2(p, a, delta);
    let margin = 1.0 - l_c - (1.0 + l_x) / delta;
    if !(margin > 0.0) {
        return Err(Error::derivation("1 - L_C - (1+L_X)/delta", "must be > 0"));
    }
    let s2 = sigma * sigma;
    let q_worst = (1.0 + delta * p.gamma + lxm + delta * lcm + (cf1 + cf2) * s2) / (4.0 * s2);
    let branches = [
        (2.0 * bt / inp.eta).ln(),
        (lambda / 160.0 * (inp.eta - 4.0) / inp.eta).ln(),
        -(2.0 * (1.0 + inp.eta)).ln() + (sigma / (PI.sqrt() * big_r)).min(margin).ln() - q_worst * big_r * big_r,
    ];
    let mut c_binding = 0;
    for k in 1..3 {
        if branches[k] < branches[c_binding] {
            c_binding = k;
        }
    }
    let ln_c = branches[c_binding];
    let ln_epsilon = inp.eta.ln() + ln_c - (2.0 * bt).ln();
    if !(ln_epsilon <= 0.0) {
        return Err(Error::derivation("epsilon", "must be ≤ 1"));
    }
    let eps = ln_epsilon.exp();
    let q_phi = (1.0 + delta * p.gamma + lxm + delta * lcm + (eps * cf1 + cf2) * s2) / (4.0 * s2);
    let ln_phi_min = -q_phi * big_r * big_r;
    let q = (1.0 + delta * p.gamma + l_x + delta * l_c + (eps * cf1 + cf2) * s2) / (4.0 * s2);
    let ln2 = 2f64.ln();
    let ln_h_ratio = (16.0 * (1.0 + delta * delta) / gmin).ln() - ln_epsilon;
    let ln_c1 = -delta.min(1.0).ln() + ln2 - ln_phi_min + ln_h_ratio.max(0.0);
    let ln_c2 = -(delta * delta).min(1.0).ln() + ln2 - ln_phi_min + ln_h_ratio.max(0.0);
    let ln_cz = ln2 - ln_phi_min + (4f64.ln() - ln_epsilon + (1.0 / p.gamma).sqrt().max(1.0).ln()).max(0.0);
    notes.push(
        "c exponential branch uses (Cf1 + Cf2), phi_min and q use (eps Cf1 + Cf2)".into(),
    );
    let xi = inp.xi.unwrap_or(1e-3 * big_r);
    if !(xi > 0.0 && xi < big_r) {
        return Err(Error::invalid("xi", "need 0 < xi < R"));
    }
    Ok(CouplingLedger {
        params: *p,
        inputs: inp.clone(),
        lyapunov: lyap,
        sigma,
        delta,
        r0,
        r: big_r,
        cf1,
        cf2,
        ln_c_branches: branches,
        c_binding,
        ln_c,
        ln_epsilon,
        ln_phi_min,
        ln_c1,
        ln_c2,
        ln_cz,
        q,
        xi,
        notes,
        profile: OnceLock::new(),
    })
}

impl CouplingLedger {
    pub fn c_rate(&self) -> f64 {
        self.ln_c.exp()
    }

    pub fn epsilon(&self) -> f64 {
        self.ln_epsilon.exp()
    }

    pub fn phi_min(&self) -> f64 {
        self.ln_phi_min.exp()
    }

    pub fn channel(&self) -> NoiseChannel {
        self.inputs.channel
    }

    /// `ln((c + 2εB̃)/σ²)`, the prefactor of the integral in `g`.
    pub fn ln_g_prefactor(&self) -> f64 {
        let ln_num = log_add_exp(self.ln_c, 2f64.ln() + self.ln_epsilon + self.lyapunov.b_tilde.ln());
        ln_num - 2.0 * self.sigma.ln()
    }

    pub fn pair_distance(&self, z: State, zbar: State) -> f64 {
        match self.inputs.channel {
            NoiseChannel::X => r_dist(z, zbar, self.delta),
            NoiseChannel::C => r_dist_c(z, zbar, self.delta),
        }
    }

    /// Drop the cached profile, e.g. after editing fields by hand.
    pub fn invalidate(&mut self) {
        self.profile = OnceLock::new();
    }

    pub fn profile(&self) -> &Profile {
        self.profile
            .get_or_init(|| Arc::new(Profile::new(self.q, self.ln_g_prefactor(), self.r, PROFILE_NODES)))
    }

    pub fn phi(&self, r: f64) -> f64 {
        (-self.q * r * r).exp()
    }

    #[allow(non_snake_case)]
    pub fn Phi(&self, r: f64) -> f64 {
        gauss_integral(self.q, r)
    }

    pub fn g(&self, r: f64) -> f64 {
        self.profile().g(r)
    }

    pub fn f(&self, r: f64) -> f64 {
        self.profile().f(r)
    }

    pub fn ln_f(&self, r: f64) -> f64 {
        self.f(r).ln()
    }

    pub fn ln_f_prime(&self, r: f64) -> f64 {
        self.profile().ln_f_prime(r)
    }

    /// `εH̃(z)`, evaluated through logarithms so that `0·∞` never occurs.
    pub fn eps_h_tilde(&self, z: State) -> f64 {
        (self.ln_epsilon + ln_h_tilde(z, self.lyapunov.a, &self.params)).exp()
    }
}

pub const PROFILE_NODES: usize = 10_000;

/// Tabulated `f`, `f'`, `g` on `[0, R]`.
///
/// With `S(r) = e^{-qr²}∫₀^r Φ(s)e^{qs²}ds` and `W(r) = ∫₀^r S`, one has
/// `g = 1 − K e^{qr²} S`, `f' = e^{-qr²} − K S` and `f = Φ − K W`.
/// `S` is advanced segment by segment in this scaled form, which stays
/// bounded where `∫Φ/φ` itself overflows. Two uniform pieces are used: a
/// dense one where `φ` is representable and a coarse tail up to `R`.
#[derive(Clone, Debug)]
pub struct Profile {
    q: f64,
    ln_k: f64,
    big_r: f64,
    ra: f64,
    ha: f64,
    hb: f64,
    n: usize,
    s: Vec<f64>,
    w: Vec<f64>,
    with_w: bool,
    with_s: bool,
}

impl Profile {
    pub fn new(q: f64, ln_k: f64, big_r: f64, n: usize) -> Self {
        let ra = big_r.min(40.0 / q.sqrt());
        let ha = ra / n as f64;
        let hb = (big_r - ra) / n as f64;
        let phi_inf = gauss_integral(q, f64::INFINITY);
        // K·W(R) ≤ K·Φ(∞)·R²; below ~1e-300 the correction is invisible.
        let with_w = ln_k + (phi_inf * big_r * big_r).ln() > -690.0;
        // S ≤ rΦ(∞), so K e^{qr²} S underflows to 0 on [0, R] and g ≡ 1
        let with_s = ln_k + q * big_r * big_r + (phi_inf * big_r).ln() > -760.0;
        let mut nodes = Vec::with_capacity(2 * n + 1);
        for k in 0..=n {
            nodes.push(k as f64 * ha);
        }
        if hb > 0.0 {
            for k in 1..n {
                nodes.push(ra + k as f64 * hb);
            }
            nodes.push(big_r);
        }
        let mut s = vec![0.0; nodes.len()];
        let mut w = vec![0.0; nodes.len()];
        for k in 0..if with_s { nodes.len() - 1 } else { 0 } {
            let (u0, u1) = (nodes[k], nodes[k + 1]);
            s[k + 1] = s[k] * (-q * (u1 * u1 - u0 * u0)).exp() + scaled_segment(q, u0, u1);
            if with_w {
                let s0 = s[k];
                let phi_cap = |u: f64| gauss_integral(q, u);
                let s_at = |t: f64| {
                    let inner = adaptive_simpson(&|v: f64| phi_cap(v) * (q * (v * v - t * t)).exp(), u0, t, 1e-15, 1e-10);
                    s0 * (-q * (t * t - u0 * u0)).exp() + inner
                };
                w[k + 1] = w[k] + adaptive_simpson(&s_at, u0, u1, 1e-15, 1e-10);
            }
        }
        Self { q, ln_k, big_r, ra, ha, hb, n, s, w, with_w, with_s }
    }

    pub fn r_max(&self) -> f64 {
        self.big_r
    }

    /// Node abscissae (dense piece followed by the tail).
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.s.len()).map(|k| self.node(k)).collect()
    }

    fn node(&self, k: usize) -> f64 {
        if k <= self.n {
            k as f64 * self.ha
        } else if k == 2 * self.n {
            self.big_r
        } else {
            self.ra + (k - self.n) as f64 * self.hb
        }
    }

    fn locate(&self, r: f64) -> (usize, f64) {
        let last = self.s.len() - 1;
        if r <= self.ra || self.hb == 0.0 {
            let t = r / self.ha;
            let k = (t.floor() as usize).min(self.n.saturating_sub(1));
            (k, r - k as f64 * self.ha)
        } else {
            let t = (r - self.ra) / self.hb;
            let mut k = self.n + (t.floor() as usize).min(last - self.n - 1);
            // rounding can put the node just above r
            while k > self.n && self.node(k) > r {
                k -= 1;
            }
            (k, (r - self.node(k)).max(0.0))
        }
    }

    fn seg_h(&self, k: usize) -> f64 {
        if k < self.n {
            self.ha
        } else {
            self.hb
        }
    }

    fn phi_cap(&self, r: f64) -> f64 {
        gauss_integral(self.q, r)
    }

    fn s_prime(&self, r: f64, s: f64) -> f64 {
        self.phi_cap(r) - 2.0 * self.q * r * s
    }

    /// Scaled integral `S(r)`: cubic Hermite interpolation on the dense
    /// piece; on the tail, where `S' = Φ − 2qrS` is lost to cancellation,
    /// the segment integral is evaluated directly.
    pub fn s(&self, r: f64) -> f64 {
        if r <= 0.0 || !self.with_s {
            return 0.0;
        }
        let r = r.min(self.big_r);
        let (k, t) = self.locate(r);
        let (r0, r1) = (self.node(k), self.node(k + 1));
        if k >= self.n {
            if t == 0.0 {
                return self.s[k];
            }
            return self.s[k] * (-self.q * (r * r - r0 * r0)).exp() + scaled_segment(self.q, r0, r);
        }
        let hk = self.seg_h(k);
        hermite(self.s[k], self.s[k + 1], self.s_prime(r0, self.s[k]), self.s_prime(r1, self.s[k + 1]), hk, t)
    }

    fn w_at(&self, r: f64) -> f64 {
        if !self.with_w || r <= 0.0 {
            return 0.0;
        }
        let r = r.min(self.big_r);
        let (k, t) = self.locate(r);
        let hk = self.seg_h(k);
        hermite(self.w[k], self.w[k + 1], self.s[k], self.s[k + 1], hk, t)
    }

    /// `ln(K ∫₀^r Φ/φ)`
    fn ln_k_int(&self, r: f64) -> f64 {
        self.ln_k + self.s(r).ln() + self.q * r * r
    }

    pub fn g(&self, r: f64) -> f64 {
        let r = r.clamp(0.0, self.big_r);
        1.0 - self.ln_k_int(r).exp()
    }

    pub fn ln_g(&self, r: f64) -> f64 {
        let r = r.clamp(0.0, self.big_r);
        let v = self.ln_k_int(r).exp();
        if v >= 1.0 {
            f64::NEG_INFINITY
        } else {
            (-v).ln_1p()
        }
    }

    pub fn f(&self, r: f64) -> f64 {
        let r = r.clamp(0.0, self.big_r);
        self.phi_cap(r) - self.ln_k.exp() * self.w_at(r)
    }

    /// Left derivative, `φ(r)g(r)` on `(0, R]`, 0 beyond `R`.
    pub fn f_prime(&self, r: f64) -> f64 {
        self.ln_f_prime(r).exp()
    }

    pub fn ln_f_prime(&self, r: f64) -> f64 {
        if r > self.big_r {
            return f64::NEG_INFINITY;
        }
        -self.q * r * r + self.ln_g(r)
    }
}

/// `∫_{u0}^{u1} Φ(t)e^{q(t²−u1²)}dt`. With `w = q(u1² − t²)` the integrand
/// becomes `e^{-w}Φ(t)/(2qt)`, smooth, and negligible past `w = 60`.
fn scaled_segment(q: f64, u0: f64, u1: f64) -> f64 {
    if !(u1 > u0) {
        return 0.0;
    }
    let w_max = (q * (u1 * u1 - u0 * u0)).min(60.0);
    let integrand = |w: f64| {
        let t = (u1 * u1 - w / q).max(0.0).sqrt();
        let ratio = if t > 0.0 { gauss_integral(q, t) / t } else { 1.0 };
        ratio * (-w).exp() / (2.0 * q)
    };
    adaptive_simpson(&integrand, 0.0, w_max, 1e-17, 1e-12)
}

fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, t: f64) -> f64 {
    let u = t / h;
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0 + (u3 - 2.0 * u2 + u) * h * d0 + (-2.0 * u3 + 3.0 * u2) * y1 + (u3 - u2) * h * d1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Smallest margin seen; log-scale for checks marked `ln`.
    pub worst_slack: f64,
    /// Abscissa of the worst margin, if the check runs on a grid.
    pub at: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerReport {
    pub checks: Vec<Check>,
}

impl LedgerReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct GridCheck {
    name: &'static str,
    worst: f64,
    at: f64,
}

impl GridCheck {
    fn new(name: &'static str) -> Self {
        Self { name, worst: f64::INFINITY, at: 0.0 }
    }

    fn see(&mut self, slack: f64, r: f64) {
        if slack < self.worst || slack.is_nan() {
            self.worst = slack;
            self.at = r;
        }
    }

    fn finish(self, tol: f64) -> Check {
        Check { name: self.name.into(), pass: self.worst >= -tol, worst_slack: self.worst, at: Some(self.at) }
    }
}

fn scalar(name: &str, slack: f64) -> Check {
    Check { name: name.into(), pass: slack >= 0.0, worst_slack: slack, at: None }
}

pub const VERIFY_GRID: usize = 10_000;

pub fn verify_ledger(ledger: &CouplingLedger) -> LedgerReport {
    let prof = ledger.profile();
    let big_r = ledger.r;
    let lyap = &ledger.lyapunov;
    let (l_x, l_c) = (ledger.inputs.l_x, ledger.inputs.l_c);
    let mut grid: Vec<f64> = (1..=VERIFY_GRID).map(|k| big_r * k as f64 / VERIFY_GRID as f64).collect();
    grid.extend(prof.nodes().into_iter().filter(|&r| r > 0.0));
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let f_r = prof.f(big_r);
    let ln_fp_r = prof.ln_f_prime(big_r);
    let ln_f_r = f_r.ln();
    let mut checks = Vec::new();

    // concavity: f' nonincreasing in log scale on every node, and second
    // differences of f on the dense piece
    let nodes = prof.nodes();
    let mut mono = GridCheck::new("f' nonincreasing (ln)");
    let mut prev = prof.ln_f_prime(0.0);
    for &r in nodes.iter().skip(1) {
        let cur = prof.ln_f_prime(r);
        mono.see(prev - cur, r);
        prev = cur;
    }
    checks.push(mono.finish(1e-12));
    let dense: Vec<(f64, f64)> = nodes.iter().take(prof.n + 1).map(|&r| (r, prof.f(r))).collect();
    let d2: Vec<(f64, f64)> =
        dense.windows(3).map(|w| (w[1].0, w[2].1 - 2.0 * w[1].1 + w[0].1)).collect();
    let scale = d2.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let mut conc = GridCheck::new("f'' <= 0 (second differences)");
    for &(r, v) in &d2 {
        conc.see(-v, r);
    }
    checks.push(conc.finish(1e-6 * scale));

    let mut nonneg = GridCheck::new("f >= 0");
    let mut nondec = GridCheck::new("f nondecreasing");
    let mut upper = GridCheck::new("f(s) <= min(s, f(R))");
    let mut upper_r = GridCheck::new("f(s) <= min(s, R)");
    let mut lower = GridCheck::new("min(s,R) f'(R) <= f(s) (ln)");
    let mut phi_ok = GridCheck::new("phi >= phi_min on [0,R] (ln)");
    let mut g_ok = GridCheck::new("g >= 1/2 on [0,R]");
    let mut ratio = f64::INFINITY;
    let mut ratio_at = 0.0;
    let mut fprev = 0.0;
    for &s in &grid {
        let fs = prof.f(s);
        nonneg.see(fs, s);
        nondec.see(fs - fprev + 1e-15 * fs, s);
        fprev = fs;
        upper.see(s.min(f_r) - fs + 1e-15 * fs, s);
        upper_r.see(s.min(big_r) - fs + 1e-15 * fs, s);
        lower.see(fs.ln() - (s.min(big_r).ln() + ln_fp_r), s);
        phi_ok.see(-ledger.q * s * s - ledger.ln_phi_min, s);
        g_ok.see(prof.g(s) - 0.5, s);
        let rr = prof.ln_f_prime(s) + s.ln() - fs.ln();
        if rr < ratio {
            ratio = rr;
            ratio_at = s;
        }
    }
    // points beyond R for the envelope
    for k in 1..=100 {
        let s = big_r * (1.0 + k as f64 / 100.0);
        let fs = ledger.f(s);
        upper.see(s.min(f_r) - fs + 1e-15 * fs, s);
        upper_r.see(s.min(big_r) - fs + 1e-15 * fs, s);
        lower.see(fs.ln() - (s.min(big_r).ln() + ln_fp_r), s);
    }
    for c in [nonneg, nondec, upper, upper_r, lower, phi_ok, g_ok] {
        checks.push(c.finish(0.0));
    }
    checks.push(Check { name: "f'(0+) = 1".into(), pass: ((prof.f(1e-6) / 1e-6) - 1.0).abs() <= 1e-4, worst_slack: 1e-4 - ((prof.f(1e-6) / 1e-6) - 1.0).abs(), at: Some(0.0) });
    checks.push(scalar("f'(R-) > 0 (ln finite)", if ln_fp_r.is_finite() { 1.0 } else { -1.0 }));
    checks.push(scalar("f(R) = f on [R, inf)", if ledger.f(2.0 * big_r) == f_r { 0.0 } else { -1.0 }));
    checks.push(scalar("2 f'(R) >= exp(-q R^2) (ln)", 2f64.ln() + ln_fp_r + ledger.q * big_r * big_r));

    let margin = 1.0 - l_c - (1.0 + l_x) / ledger.delta;
    let ln_lhs = log_add_exp(2f64.ln() + ledger.ln_c, 4f64.ln() + ledger.ln_epsilon + lyap.b_tilde.ln());
    checks.push(Check {
        name: "2c + 4 eps B_tilde <= margin * min f'(r) r / f(r) (ln)".into(),
        pass: margin > 0.0 && ln_lhs <= margin.ln() + ratio,
        worst_slack: margin.ln() + ratio - ln_lhs,
        at: Some(ratio_at),
    });
    let lam = lyap.lambda;
    let ln_u = 80f64.ln() + ledger.ln_epsilon + lyap.b_tilde.ln() - lam.ln();
    let ln_rhs = (lam / 160.0).ln() + ln_u - ln_u.exp().ln_1p();
    checks.push(scalar("c <= (lambda/160) u/(1+u), u = 80 eps B_tilde/lambda (ln)", ln_rhs - ledger.ln_c));
    let eta = ledger.inputs.eta;
    let ln_eps_def = eta.ln() + ledger.ln_c - (2.0 * lyap.b_tilde).ln();
    checks.push(scalar("eps = eta c/(2 B_tilde) (ln)", 1e-9 * (1.0 + ln_eps_def.abs()) - (ledger.ln_epsilon - ln_eps_def).abs()));
    for (k, name) in ["c <= 2 B_tilde/eta (ln)", "c <= lambda(eta-4)/(160 eta) (ln)", "c <= exponential branch (ln)"].iter().enumerate() {
        let b = ledger.ln_c_branches[k];
        checks.push(scalar(name, b - ledger.ln_c + 1e-12 * (1.0 + b.abs())));
    }
    checks.push(scalar("delta > (1+L_X)/(1-L_C)", ledger.delta - (1.0 + l_x) / (1.0 - l_c)));
    checks.push(scalar("eps <= 1 (ln)", -ledger.ln_epsilon));
    let r0_def = (1280.0 * lyap.b_tilde / (lam * ledger.params.gamma.min(1.0))).sqrt();
    checks.push(scalar("R0 definition", 1e-12 * r0_def - (ledger.r0 - r0_def).abs()));
    let r_def = (1.0 + ledger.delta * ledger.delta).sqrt() * ledger.r0;
    checks.push(scalar("R = sqrt(1+delta^2) R0", 1e-12 * r_def - (ledger.r - r_def).abs()));
    checks.push(scalar("g(0) = 1", 1e-15 - (prof.g(0.0) - 1.0).abs()));
    let _ = ln_f_r;
    LedgerReport { checks }
}

/// Mean of `εH̃` over a cloud.
pub fn mean_eps_h_tilde(states: &[State], ledger: &CouplingLedger) -> f64 {
    let mut s = 0.0;
    for z in states {
        s += ledger.eps_h_tilde(*z);
    }
    s / states.len() as f64
}

pub fn g_weight(i: usize, ens: &[State], ensbar: &[State], ledger: &CouplingLedger) -> Result<f64> {
    if ens.len() != ensbar.len() {
        return Err(Error::SizeMismatch(ens.len(), ensbar.len()));
    }
    if i >= ens.len() {
        return Err(Error::Index { index: i, len: ens.len() });
    }
    let tail = mean_eps_h_tilde(ens, ledger) + mean_eps_h_tilde(ensbar, ledger);
    Ok(1.0 + ledger.eps_h_tilde(ens[i]) + ledger.eps_h_tilde(ensbar[i]) + tail)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RhoSummary {
    pub rho: f64,
    pub mean_f: f64,
    pub max_g: f64,
    pub mean_r: f64,
}

pub fn rho_summary(ens: &[State], ensbar: &[State], ledger: &CouplingLedger) -> Result<RhoSummary> {
    if ens.len() != ensbar.len() {
        return Err(Error::SizeMismatch(ens.len(), ensbar.len()));
    }
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let tail = mean_eps_h_tilde(ens, ledger) + mean_eps_h_tilde(ensbar, ledger);
    let n = ens.len() as f64;
    let mut out = RhoSummary::default();
    for (z, zb) in ens.iter().zip(ensbar) {
        let r = ledger.pair_distance(*z, *zb);
        let fr = ledger.f(r);
        let g = 1.0 + ledger.eps_h_tilde(*z) + ledger.eps_h_tilde(*zb) + tail;
        out.rho += fr * g;
        out.mean_f += fr;
        out.mean_r += r;
        out.max_g = out.max_g.max(g);
    }
    out.rho /= n;
    out.mean_f /= n;
    out.mean_r /= n;
    Ok(out)
}

pub fn rho(ens: &[State], ensbar: &[State], ledger: &CouplingLedger) -> Result<f64> {
    Ok(rho_summary(ens, ensbar, ledger)?.rho)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ControlCheck {
    pub ln_lhs: f64,
    pub ln_rhs: f64,
    pub pass: bool,
}

fn control(ln_lhs: f64, ln_rhs: f64) -> ControlCheck {
    let tol = 1e-12 * (1.0 + ln_rhs.abs());
    ControlCheck { ln_lhs, ln_rhs, pass: ln_lhs <= ln_rhs + tol || ln_lhs == f64::NEG_INFINITY }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DistanceControl {
    pub l1: ControlCheck,
    pub l2_sq: ControlCheck,
    pub l1_sqrt_h: ControlCheck,
}

impl DistanceControl {
    pub fn pass(&self) -> bool {
        self.l1.pass && self.l2_sq.pass && self.l1_sqrt_h.pass
    }
}

/// The three controls of the usual distances by `f(r)` and Lyapunov weights,
/// for the `|x − x̄| + δ|c − c̄|` distance.
pub fn check_distance_control(z: State, zbar: State, ledger: &CouplingLedger) -> DistanceControl {
    let d = z - zbar;
    let r = r_dist(z, zbar, ledger.delta);
    let ln_f = ledger.f(r).ln();
    let a = ledger.lyapunov.a;
    let p = &ledger.params;
    let le = ledger.ln_epsilon;
    let w_tilde = log_add_exp(0.0, log_add_exp(le + ln_h_tilde(z, a, p), le + ln_h_tilde(zbar, a, p)));
    let w_sqrt = log_add_exp(0.0, log_add_exp(le + 0.5 * h(z, p).ln(), le + 0.5 * h(zbar, p).ln()));
    DistanceControl {
        l1: control(d.l1().ln(), ledger.ln_c1 + ln_f + w_tilde),
        l2_sq: control(d.l2_sq().ln(), ledger.ln_c2 + ln_f + w_tilde),
        l1_sqrt_h: control(d.l1().ln(), ledger.ln_cz + ln_f + w_sqrt),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_ledger() -> CouplingLedger {
        derive_ledger(&ModelParams::default(), &LedgerInputs::default()).unwrap()
    }

    #[test]
    fn r_examples() {
        let z = State::new(1.0, 2.0);
        assert_eq!(r_dist(z, z, 3.0), 0.0);
        assert_eq!(r_dist(z, State::ZERO, 2.0), 5.0);
    }

    #[test]
    fn delta_example() {
        let l = default_ledger();
        assert!((l.delta - 6.875).abs() < 1e-12);
        assert!(l.ln_epsilon <= 0.0);
        assert!((l.r - (1.0 + l.delta * l.delta).sqrt() * l.r0).abs() < 1e-9);
    }

    #[test]
    fn profile_origin() {
        let l = default_ledger();
        assert_eq!(l.phi(0.0), 1.0);
        assert_eq!(l.Phi(0.0), 0.0);
        assert_eq!(l.g(0.0), 1.0);
        assert_eq!(l.f(0.0), 0.0);
        assert!(((l.f(1e-6) / 1e-6) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn eta_four_rejected() {
        let inp = LedgerInputs { eta: 4.0, ..Default::default() };
        assert!(derive_ledger(&ModelParams::default(), &inp).is_err());
    }

    #[test]
    fn profile_against_direct_quadrature() {
        // a regime where g visibly departs from 1
        let (q, k, big_r) = (1.3, 1e-3f64, 2.5);
        let prof = Profile::new(q, k.ln(), big_r, 2000);
        let phi_cap = |u: f64| gauss_integral(q, u);
        let g_direct = |r: f64| {
            1.0 - k * adaptive_simpson(&|s: f64| phi_cap(s) * (q * s * s).exp(), 0.0, r, 1e-14, 1e-12)
        };
        for &r in &[0.1, 0.7, 1.5, 2.5] {
            assert!(g_direct(r) > 0.5);
            assert!((prof.g(r) - g_direct(r)).abs() < 1e-9, "g at {r}");
            let f_direct = adaptive_simpson(&|s: f64| (-q * s * s).exp() * g_direct(s), 0.0, r, 1e-13, 1e-11);
            assert!((prof.f(r) - f_direct).abs() < 1e-8, "f at {r}: {} vs {}", prof.f(r), f_direct);
            let fp = (-q * r * r).exp() * g_direct(r);
            assert!((prof.f_prime(r) - fp).abs() < 1e-9, "f' at {r}: {} vs {}", prof.f_prime(r), fp);
        }
    }

    #[test]
    fn weights_and_rho() {
        let l = default_ledger();
        let a = [State::new(0.3, -0.2), State::new(-1.0, 0.5)];
        let b = [State::new(0.1, -0.2), State::new(-1.0, 0.7)];
        assert!(g_weight(0, &a, &b, &l).unwrap() >= 1.0);
        assert_eq!(rho(&a, &a, &l).unwrap(), 0.0);
        assert!(rho(&a, &b[..1], &l).is_err());
    }
}
