//! FitzHugh–Nagumo parameters, interaction kernels and drift fields.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model constants. `beta` and `gamma` are strictly positive; at least one
/// noise level is nonzero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma_x: f64,
    pub sigma_c: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 1.0, sigma_x: 0.5, sigma_c: 0.5 }
    }
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, sigma_x: f64, sigma_c: f64) -> Result<Self> {
        let p = Self { alpha, beta, gamma, sigma_x, sigma_c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.sigma_x, self.sigma_c];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("model parameters must be finite"));
        }
        if self.beta <= 0.0 {
            return Err(Error::invalid("beta", "must be > 0"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid("gamma", "must be > 0"));
        }
        if self.sigma_x < 0.0 || self.sigma_c < 0.0 {
            return Err(Error::invalid("sigma_x/sigma_c", "must be >= 0"));
        }
        if self.sigma_x == 0.0 && self.sigma_c == 0.0 {
            return Err(Error::invalid("sigma_x/sigma_c", "at least one noise level must be > 0"));
        }
        Ok(())
    }

    /// `β²/γ + α²`, the constant that makes `H` nonnegative.
    pub fn h0(&self) -> f64 {
        self.beta * self.beta / self.gamma + self.alpha * self.alpha
    }
}

/// A particle state `(x, c)`: membrane potential and adaptation variable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub c: f64,
}

impl State {
    pub const ZERO: State = State { x: 0.0, c: 0.0 };

    pub const fn new(x: f64, c: f64) -> Self {
        Self { x, c }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.c.is_finite()
    }

    pub fn l1(&self) -> f64 {
        self.x.abs() + self.c.abs()
    }

    pub fn l2_sq(&self) -> f64 {
        self.x * self.x + self.c * self.c
    }
}

impl std::ops::Sub for State {
    type Output = State;
    fn sub(self, o: State) -> State {
        State::new(self.x - o.x, self.c - o.c)
    }
}

pub type KernelFn = dyn Fn(State) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum KernelKind {
    Zero,
    /// `a11·dx + a12·dc`
    Linear { a11: f64, a12: f64 },
    /// `scale·tanh(rate·dx)`
    BoundedTanh { scale: f64, rate: f64 },
    Custom(Arc<KernelFn>),
}

impl fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Zero => write!(f, "Zero"),
            KernelKind::Linear { a11, a12 } => write!(f, "Linear({a11}, {a12})"),
            KernelKind::BoundedTanh { scale, rate } => write!(f, "BoundedTanh({scale}, {rate})"),
            KernelKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Interaction map evaluated on state differences, with its declared
/// Lipschitz constant in the `‖·‖₁` norm.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub kind: KernelKind,
    pub lipschitz: f64,
}

impl Kernel {
    pub fn zero() -> Self {
        Self { kind: KernelKind::Zero, lipschitz: 0.0 }
    }

    /// Linear kernel with the smallest declared constant `|a11| + |a12|`.
    pub fn linear(a11: f64, a12: f64) -> Self {
        Self { kind: KernelKind::Linear { a11, a12 }, lipschitz: a11.abs() + a12.abs() }
    }

    pub fn bounded_tanh(scale: f64, rate: f64) -> Self {
        Self { kind: KernelKind::BoundedTanh { scale, rate }, lipschitz: (scale * rate).abs() }
    }

    /// Custom kernel. The caller is responsible for `k(0,0) = 0`, which is
    /// checked once here.
    pub fn custom<F>(f: F, lipschitz: f64) -> Result<Self>
    where
        F: Fn(State) -> f64 + Send + Sync + 'static,
    {
        if f(State::ZERO) != 0.0 {
            return Err(Error::invalid("kernel", "custom kernel must vanish at (0,0)"));
        }
        Ok(Self { kind: KernelKind::Custom(Arc::new(f)), lipschitz })
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Result<Self> {
        let min = self.min_lipschitz();
        if !(lipschitz >= 0.0) || lipschitz < min {
            return Err(Error::invalid(
                "lipschitz",
                format!("declared {lipschitz} below the kernel's own constant {min}"),
            ));
        }
        self.lipschitz = lipschitz;
        Ok(self)
    }

    /// Lipschitz constant implied by the built-in constants (0 for custom).
    pub fn min_lipschitz(&self) -> f64 {
        match self.kind {
            KernelKind::Zero | KernelKind::Custom(_) => 0.0,
            KernelKind::Linear { a11, a12 } => a11.abs() + a12.abs(),
            KernelKind::BoundedTanh { scale, rate } => (scale * rate).abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, KernelKind::Zero)
    }

    #[inline]
    pub fn eval_unchecked(&self, dz: State) -> f64 {
        match &self.kind {
            KernelKind::Zero => 0.0,
            KernelKind::Linear { a11, a12 } => a11 * dz.x + a12 * dz.c,
            KernelKind::BoundedTanh { scale, rate } => scale * (rate * dz.x).tanh(),
            KernelKind::Custom(f) => f(dz),
        }
    }
}

pub fn kernel_eval(k: &Kernel, dz: State) -> Result<f64> {
    if !dz.is_finite() {
        return Err(Error::domain("kernel argument must be finite"));
    }
    Ok(k.eval_unchecked(dz))
}

/// `(x − x³ − c − α, γx − c + β)`
#[inline]
pub fn intrinsic_drift(z: State, p: &ModelParams) -> (f64, f64) {
    (z.x - z.x * z.x * z.x - z.c - p.alpha, p.gamma * z.x - z.c + p.beta)
}

/// Same drift with the cubic evaluated at `x` clamped to `[-x_max, x_max]`.
#[inline]
pub fn intrinsic_drift_clamped(z: State, p: &ModelParams, x_max: f64) -> (f64, f64) {
    let xc = z.x.clamp(-x_max, x_max);
    (z.x - xc * xc * xc - z.c - p.alpha, p.gamma * z.x - z.c + p.beta)
}

/// `(1/n) Σ_j K(z − w_j)`, summed in index order.
pub fn empirical_convolution(k: &Kernel, z: State, cloud: &[State]) -> f64 {
    match k.kind {
        KernelKind::Zero => 0.0,
        _ => {
            let mut s = 0.0;
            for w in cloud {
                s += k.eval_unchecked(z - *w);
            }
            s / cloud.len() as f64
        }
    }
}

/// Drift of particle `i` in the `N`-particle system, `j = i` included.
pub fn mean_field_drift(
    i: usize,
    states: &[State],
    kx: &Kernel,
    kc: &Kernel,
    p: &ModelParams,
) -> Result<(f64, f64)> {
    let z = *states.get(i).ok_or(Error::Index { index: i, len: states.len() })?;
    check_finite(z)?;
    let (dx, dc) = intrinsic_drift(z, p);
    Ok((dx + empirical_convolution(kx, z, states), dc + empirical_convolution(kc, z, states)))
}

/// Drift of a limit particle at `z` with the law replaced by a proxy cloud.
pub fn limit_drift(
    z: State,
    proxy: &[State],
    kx: &Kernel,
    kc: &Kernel,
    p: &ModelParams,
) -> Result<(f64, f64)> {
    if proxy.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    check_finite(z)?;
    let (dx, dc) = intrinsic_drift(z, p);
    Ok((dx + empirical_convolution(kx, z, proxy), dc + empirical_convolution(kc, z, proxy)))
}

fn check_finite(z: State) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("state must be finite"))
    }
}
