//! Euler–Maruyama integration of the particle system, the self-interacting
//! proxy of the limit equation, and the coupled pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{intrinsic_drift, intrinsic_drift_clamped, Kernel, KernelKind, ModelParams, State};
use crate::rng::{self, ParticleStreams, CH_C, CH_RC_X, CH_SC_X, CH_SPARE};

/// Above this `|x|` an unclamped run is aborted.
pub const BLOWUP_X: f64 = 1e8;
const CHUNK: usize = 256;

#[derive(Clone, Debug)]
pub struct Dynamics {
    pub params: ModelParams,
    pub kx: Kernel,
    pub kc: Kernel,
    /// Opt-in bound on `|x|` inside the cubic term.
    pub clamp: Option<f64>,
}

impl Dynamics {
    pub fn new(params: ModelParams, kx: Kernel, kc: Kernel) -> Self {
        Self { params, kx, kc, clamp: None }
    }
}

/// Product Gaussian initial law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialLaw {
    pub mean_x: f64,
    pub mean_c: f64,
    pub std_x: f64,
    pub std_c: f64,
}

impl Default for InitialLaw {
    fn default() -> Self {
        Self { mean_x: -1.0, mean_c: 0.0, std_x: 0.5, std_c: 0.5 }
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn abs_exp_moment(t: f64, m: f64, s: f64) -> f64 {
    if s == 0.0 {
        return (t * m.abs()).exp();
    }
    let e = 0.5 * t * t * s * s;
    (t * m + e).exp() * normal_cdf(m / s + t * s) + (-t * m + e).exp() * normal_cdf(-m / s + t * s)
}

impl InitialLaw {
    /// Initial state of particle `index` under `seed`.
    pub fn sample(&self, seed: u64, index: u64) -> State {
        use rand_distr::{Distribution, StandardNormal};
        let mut r = rng::stream(seed, rng::DOMAIN_INIT, index, 0);
        let gx: f64 = StandardNormal.sample(&mut r);
        let gc: f64 = StandardNormal.sample(&mut r);
        State::new(self.mean_x + self.std_x * gx, self.mean_c + self.std_c * gc)
    }

    /// `E e^{ã(|X₀| + |C₀|)}`
    pub fn exp_moment(&self, a_tilde: f64) -> f64 {
        abs_exp_moment(a_tilde, self.mean_x, self.std_x) * abs_exp_moment(a_tilde, self.mean_c, self.std_c)
    }
}

/// Particle states with one set of noise streams per particle.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub states: Vec<State>,
    streams: Vec<ParticleStreams>,
    pub step: u64,
    pub dt: f64,
    pub clamp_events: u64,
}

impl Ensemble {
    pub fn new(states: Vec<State>, seed: u64, domain: u64) -> Result<Self> {
        if states.iter().any(|z| !z.is_finite()) {
            return Err(Error::domain("initial states must be finite"));
        }
        let streams = (0..states.len()).map(|k| ParticleStreams::new(seed, domain, k as u64)).collect();
        Ok(Self { states, streams, step: 0, dt: 0.0, clamp_events: 0 })
    }

    pub fn sample(n: usize, law: &InitialLaw, seed: u64, domain: u64) -> Result<Self> {
        let states = (0..n).map(|k| law.sample(seed, k as u64)).collect();
        Self::new(states, seed, domain)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }
}

/// Component means with a fixed chunked summation order.
pub fn deterministic_mean(states: &[State]) -> (f64, f64) {
    let partial: Vec<(f64, f64)> = states
        .par_chunks(CHUNK)
        .map(|ch| ch.iter().fold((0.0, 0.0), |(a, b), z| (a + z.x, b + z.c)))
        .collect();
    let (sx, sc) = partial.iter().fold((0.0, 0.0), |(a, b), (x, c)| (a + x, b + c));
    let n = states.len() as f64;
    (sx / n, sc / n)
}

enum Conv<'a> {
    Zero,
    Linear { a11: f64, a12: f64, mx: f64, mc: f64 },
    Pairwise(&'a Kernel),
}

impl Conv<'_> {
    #[inline]
    fn eval(&self, z: State, cloud: &[State]) -> f64 {
        match self {
            Conv::Zero => 0.0,
            Conv::Linear { a11, a12, mx, mc } => a11 * (z.x - mx) + a12 * (z.c - mc),
            Conv::Pairwise(k) => {
                let mut s = 0.0;
                for w in cloud {
                    s += k.eval_unchecked(z - *w);
                }
                s / cloud.len() as f64
            }
        }
    }
}

fn conv_for<'a>(k: &'a Kernel, mean: &mut Option<(f64, f64)>, cloud: &[State], pairwise: bool) -> Conv<'a> {
    match k.kind {
        KernelKind::Zero => Conv::Zero,
        KernelKind::Linear { a11, a12 } if !pairwise => {
            let (mx, mc) = *mean.get_or_insert_with(|| deterministic_mean(cloud));
            Conv::Linear { a11, a12, mx, mc }
        }
        _ => Conv::Pairwise(k),
    }
}

/// Drifts at `targets` against the empirical law of `cloud`.
///
/// Linear kernels use `(1/n)Σ_j A(z − w_j) = A(z − mean)`; pass
/// `pairwise = true` to force the literal double sum.
pub fn drifts(targets: &[State], cloud: &[State], dy: &Dynamics, pairwise: bool) -> Vec<(f64, f64)> {
    let mut mean = None;
    let cx = conv_for(&dy.kx, &mut mean, cloud, pairwise);
    let cc = conv_for(&dy.kc, &mut mean, cloud, pairwise);
    let p = dy.params;
    let clamp = dy.clamp;
    targets
        .par_iter()
        .map(|&z| {
            let (dx, dc) = match clamp {
                Some(m) => intrinsic_drift_clamped(z, &p, m),
                None => intrinsic_drift(z, &p),
            };
            (dx + cx.eval(z, cloud), dc + cc.eval(z, cloud))
        })
        .collect()
}

fn count_clamped(states: &[State], dy: &Dynamics) -> u64 {
    match dy.clamp {
        Some(m) => states.iter().filter(|z| z.x.abs() > m).count() as u64,
        None => 0,
    }
}

fn guard(states: &[State], step: u64, dy: &Dynamics) -> Result<()> {
    for (i, z) in states.iter().enumerate() {
        let bad = !z.is_finite() || (dy.clamp.is_none() && z.x.abs() > BLOWUP_X);
        if bad {
            return Err(Error::BlowUp { step, particle: i, x: z.x });
        }
    }
    Ok(())
}

#[inline]
fn advance(z: &mut State, d: (f64, f64), dt: f64, sx: f64, sc: f64, bx: f64, bc: f64) {
    z.x = z.x + d.0 * dt + sx * bx;
    z.c = z.c + d.1 * dt + sc * bc;
}

#[inline]
fn own_increments(st: &mut ParticleStreams, sdt: f64, sx: f64, sc: f64) -> (f64, f64) {
    let bx = if sx != 0.0 { sdt * st.normal(CH_SC_X) } else { 0.0 };
    let bc = if sc != 0.0 { sdt * st.normal(CH_C) } else { 0.0 };
    (bx, bc)
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("dt", "must be > 0"))
    }
}

fn finish_step(ens: &mut Ensemble, dt: f64, clamped: u64) {
    ens.step += 1;
    ens.dt = dt;
    if clamped > 0 {
        if ens.clamp_events == 0 {
            log::warn!("x clamp active at step {} ({} particles)", ens.step, clamped);
        }
        ens.clamp_events += clamped;
    }
}

/// One step of the `N`-particle system, noise from each particle's own streams.
pub fn step_particles(ens: &mut Ensemble, dy: &Dynamics, dt: f64) -> Result<()> {
    check_dt(dt)?;
    let clamped = count_clamped(&ens.states, dy);
    let d = drifts(&ens.states, &ens.states, dy, false);
    let (sx, sc) = (dy.params.sigma_x, dy.params.sigma_c);
    let sdt = dt.sqrt();
    ens.states.par_iter_mut().zip(ens.streams.par_iter_mut()).zip(d.par_iter()).for_each(|((z, st), &d)| {
        let (bx, bc) = own_increments(st, sdt, sx, sc);
        advance(z, d, dt, sx, sc, bx, bc);
    });
    finish_step(ens, dt, clamped);
    guard(&ens.states, ens.step, dy)
}

/// The proxy of the limit equation is itself an `M`-particle system.
pub fn step_limit_proxy(ens: &mut Ensemble, dy: &Dynamics, dt: f64) -> Result<()> {
    if ens.len() < 2 {
        return Err(Error::invalid("M", "proxy needs at least 2 particles"));
    }
    step_particles(ens, dy, dt)
}

/// One step driven by supplied Brownian increments `(ΔB_X, ΔB_C)`.
pub fn step_particles_driven(ens: &mut Ensemble, dy: &Dynamics, dt: f64, increments: &[(f64, f64)]) -> Result<()> {
    check_dt(dt)?;
    if increments.len() != ens.len() {
        return Err(Error::SizeMismatch(increments.len(), ens.len()));
    }
    let clamped = count_clamped(&ens.states, dy);
    let d = drifts(&ens.states, &ens.states, dy, false);
    let (sx, sc) = (dy.params.sigma_x, dy.params.sigma_c);
    ens.states.par_iter_mut().zip(d.par_iter()).zip(increments.par_iter()).for_each(|((z, &d), &(bx, bc))| {
        advance(z, d, dt, sx, sc, bx, bc);
    });
    finish_step(ens, dt, clamped);
    guard(&ens.states, ens.step, dy)
}

/// Switching weights: `φ_rc` is 0 on `[0, ξ/2]`, 1 on `[ξ, R]`, 0 beyond
/// `R + ξ`, linear in between; `φ_sc = √(1 − φ_rc²)`.
#[inline]
pub fn mollifiers(u: f64, xi: f64, big_r: f64) -> (f64, f64) {
    let rc = if u <= 0.5 * xi {
        0.0
    } else if u < xi {
        (u - 0.5 * xi) / (0.5 * xi)
    } else if u <= big_r {
        1.0
    } else if u < big_r + xi {
        (big_r + xi - u) / xi
    } else {
        0.0
    };
    ((1.0 - rc * rc).sqrt(), rc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Synchronous,
    ReflectionX,
    ReflectionC,
}

#[derive(Clone, Debug)]
pub enum ProxyMode {
    /// The limit members are the first `N` particles of an `M`-cloud that
    /// interacts with itself.
    SelfAsProxy(usize),
    /// A fixed cloud standing in for the limit law; it is not advanced.
    Frozen(Vec<State>),
}

#[derive(Clone, Debug)]
pub struct CoupledEnsemble {
    pub system: Ensemble,
    pub limit: Ensemble,
    pub proxy: ProxyMode,
    pub coupling: Coupling,
    pub xi: f64,
    pub big_r: f64,
}

fn check_coupling(coupling: Coupling, p: &ModelParams, xi: f64, big_r: f64) -> Result<()> {
    match coupling {
        Coupling::ReflectionX if !(p.sigma_x > 0.0) => {
            return Err(Error::invalid("coupling", "reflection_x requires sigma_x > 0"))
        }
        Coupling::ReflectionC if p.sigma_x != 0.0 || !(p.sigma_c > 0.0) => {
            return Err(Error::invalid("coupling", "reflection_c requires sigma_x = 0 and sigma_c > 0"))
        }
        _ => {}
    }
    if coupling != Coupling::Synchronous && !(xi > 0.0 && big_r > xi) {
        return Err(Error::invalid("xi", "need 0 < xi < R"));
    }
    Ok(())
}

impl CoupledEnsemble {
    /// `N` pairs with identical initial states; the limit side is the first
    /// `N` particles of an `M`-cloud.
    #[allow(clippy::too_many_arguments)]
    pub fn self_proxy(
        n: usize,
        m: usize,
        law: &InitialLaw,
        seed: u64,
        coupling: Coupling,
        xi: f64,
        big_r: f64,
        p: &ModelParams,
    ) -> Result<Self> {
        check_coupling(coupling, p, xi, big_r)?;
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if m < n.max(2) {
            return Err(Error::invalid("M", "need M ≥ max(N, 2)"));
        }
        let system = Ensemble::sample(n, law, seed, rng::DOMAIN_PAIR)?;
        let limit = Ensemble::sample(m, law, seed, rng::DOMAIN_CLOUD)?;
        Ok(Self { system, limit, proxy: ProxyMode::SelfAsProxy(m), coupling, xi, big_r })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn frozen(
        n: usize,
        law: &InitialLaw,
        seed: u64,
        proxy: Vec<State>,
        coupling: Coupling,
        xi: f64,
        big_r: f64,
        p: &ModelParams,
    ) -> Result<Self> {
        check_coupling(coupling, p, xi, big_r)?;
        if proxy.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let system = Ensemble::sample(n, law, seed, rng::DOMAIN_PAIR)?;
        let limit = Ensemble::sample(n, law, seed, rng::DOMAIN_CLOUD)?;
        Ok(Self { system, limit, proxy: ProxyMode::Frozen(proxy), coupling, xi, big_r })
    }

    pub fn n(&self) -> usize {
        self.system.len()
    }

    /// The limit members paired with the system.
    pub fn paired_limit(&self) -> &[State] {
        &self.limit.states[..self.n()]
    }

    pub fn time(&self) -> f64 {
        self.system.time()
    }

    /// Argument of the switching weights for pair `i`.
    pub fn switch_argument(&self, z: State, zb: State) -> f64 {
        match self.coupling {
            Coupling::ReflectionC => (2.0 * (z.x - zb.x) - (z.c - zb.c)).abs(),
            _ => (z.x - zb.x).abs(),
        }
    }
}

/// Advances both members of every pair. If `trace` is given it receives
/// the increments applied to the system members.
pub fn step_coupled(
    ce: &mut CoupledEnsemble,
    dy: &Dynamics,
    dt: f64,
    trace: Option<&mut Vec<(f64, f64)>>,
) -> Result<()> {
    check_dt(dt)?;
    let n = ce.n();
    let clamped = count_clamped(&ce.system.states, dy) + count_clamped(&ce.limit.states, dy);
    let sys_d = drifts(&ce.system.states, &ce.system.states, dy, false);
    let lim_d = match &ce.proxy {
        ProxyMode::SelfAsProxy(_) => drifts(&ce.limit.states, &ce.limit.states, dy, false),
        ProxyMode::Frozen(cloud) => drifts(&ce.limit.states, cloud, dy, false),
    };
    let (sx, sc) = (dy.params.sigma_x, dy.params.sigma_c);
    let sdt = dt.sqrt();
    let (xi, big_r, coupling) = (ce.xi, ce.big_r, ce.coupling);
    let mut applied = vec![(0.0, 0.0); n];
    let (lim_head, lim_tail) = ce.limit.states.split_at_mut(n);
    ce.system
        .states
        .par_iter_mut()
        .zip(ce.system.streams.par_iter_mut())
        .zip(lim_head.par_iter_mut())
        .zip(sys_d.par_iter().zip(lim_d[..n].par_iter()))
        .zip(applied.par_iter_mut())
        .for_each(|((((z, st), zb), (&d, &db)), app)| {
            let (bx, bc, bxl, bcl) = match coupling {
                Coupling::Synchronous => {
                    let (bx, bc) = own_increments(st, sdt, sx, sc);
                    (bx, bc, bx, bc)
                }
                Coupling::ReflectionX => {
                    let (ws, wr) = mollifiers((z.x - zb.x).abs(), xi, big_r);
                    let bsc = sdt * st.normal(CH_SC_X);
                    let brc = sdt * st.normal(CH_RC_X);
                    let bc = if sc != 0.0 { sdt * st.normal(CH_C) } else { 0.0 };
                    (ws * bsc + wr * brc, bc, ws * bsc - wr * brc, bc)
                }
                Coupling::ReflectionC => {
                    let u = (2.0 * (z.x - zb.x) - (z.c - zb.c)).abs();
                    let (ws, wr) = mollifiers(u, xi, big_r);
                    let csc = sdt * st.normal(CH_C);
                    let crc = sdt * st.normal(CH_SPARE);
                    (0.0, ws * csc + wr * crc, 0.0, ws * csc - wr * crc)
                }
            };
            advance(z, d, dt, sx, sc, bx, bc);
            advance(zb, db, dt, sx, sc, bxl, bcl);
            *app = (bx, bc);
        });
    if !lim_tail.is_empty() {
        lim_tail
            .par_iter_mut()
            .zip(ce.limit.streams[n..].par_iter_mut())
            .zip(lim_d[n..].par_iter())
            .for_each(|((z, st), &d)| {
                let (bx, bc) = own_increments(st, sdt, sx, sc);
                advance(z, d, dt, sx, sc, bx, bc);
            });
    }
    finish_step(&mut ce.system, dt, clamped);
    ce.limit.step += 1;
    ce.limit.dt = dt;
    if let Some(t) = trace {
        *t = applied;
    }
    guard(&ce.system.states, ce.system.step, dy)?;
    guard(&ce.limit.states, ce.limit.step, dy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_values() {
        let (xi, r) = (0.2, 10.0);
        assert_eq!(mollifiers(0.0, xi, r), (1.0, 0.0));
        assert_eq!(mollifiers(0.5 * (xi + r), xi, r), (0.0, 1.0));
        let (s, c) = mollifiers(0.75 * xi, xi, r);
        assert!((c - 0.5).abs() < 1e-15 && (s - 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(mollifiers(r + 2.0 * xi, xi, r), (1.0, 0.0));
        let (_, c) = mollifiers(r + 0.5 * xi, xi, r);
        assert!((c - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noise_free_single_particle_is_euler() {
        let p = ModelParams { alpha: 0.3, beta: 0.7, gamma: 1.2, sigma_x: 0.0, sigma_c: 0.0 };
        let dy = Dynamics::new(p, Kernel::zero(), Kernel::zero());
        let z0 = State::new(0.4, -0.1);
        let mut ens = Ensemble { states: vec![z0], streams: vec![ParticleStreams::new(0, 0, 0)], step: 0, dt: 0.0, clamp_events: 0 };
        step_particles(&mut ens, &dy, 0.01).unwrap();
        let (dx, dc) = intrinsic_drift(z0, &p);
        assert_eq!(ens.states[0], State::new(z0.x + dx * 0.01, z0.c + dc * 0.01));
        assert!((ens.time() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn reflection_c_needs_degenerate_x_noise() {
        let law = InitialLaw::default();
        let p = ModelParams::default();
        assert!(CoupledEnsemble::self_proxy(4, 8, &law, 1, Coupling::ReflectionC, 0.1, 5.0, &p).is_err());
        let p0 = ModelParams { sigma_x: 0.0, ..p };
        assert!(CoupledEnsemble::self_proxy(4, 8, &law, 1, Coupling::ReflectionC, 0.1, 5.0, &p0).is_ok());
        assert!(CoupledEnsemble::self_proxy(4, 8, &law, 1, Coupling::ReflectionX, 0.1, 5.0, &p0).is_err());
    }

    #[test]
    fn exp_moment_matches_monte_carlo() {
        let law = InitialLaw::default();
        let n = 200_000;
        let mc: f64 = (0..n)
            .map(|k| {
                let z = law.sample(5, k);
                (z.x.abs() + z.c.abs()).exp()
            })
            .sum::<f64>()
            / n as f64;
        let exact = law.exp_moment(1.0);
        assert!(((mc - exact) / exact).abs() < 0.01, "{mc} vs {exact}");
    }

    #[test]
    fn blow_up_detected() {
        let p = ModelParams { alpha: 0.0, beta: 1.0, gamma: 1.0, sigma_x: 0.0, sigma_c: 0.1 };
        let dy = Dynamics::new(p, Kernel::zero(), Kernel::zero());
        let mut ens = Ensemble::new(vec![State::new(1e5, 0.0)], 1, 0).unwrap();
        assert!(matches!(step_particles(&mut ens, &dy, 0.1), Err(Error::BlowUp { .. })));
        let mut ens = Ensemble::new(vec![State::new(1e5, 0.0)], 1, 0).unwrap();
        let dy = Dynamics { clamp: Some(10.0), ..dy };
        step_particles(&mut ens, &dy, 0.1).unwrap();
        assert_eq!(ens.clamp_events, 1);
    }
}
