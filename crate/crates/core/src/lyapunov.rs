//! Lyapunov functions `H`, `H̃` and the rate constants `λ`, `B`, `B̃`.

use serde::{Deserialize, Serialize};

use crate::distance::CouplingLedger;
use crate::error::{Error, Result};
use crate::model::{ModelParams, State};
use crate::numeric::{golden_max, poly_sup};

/// `γx²/2 + βx + c²/2 + αc + β²/γ + α²`
#[inline]
pub fn h(z: State, p: &ModelParams) -> f64 {
    let v = 0.5 * p.gamma * z.x * z.x + p.beta * z.x + 0.5 * z.c * z.c + p.alpha * z.c + p.h0();
    v.max(0.0)
}

/// `∫₀^h e^{a√u} du`
pub fn h_tilde_of(hv: f64, a: f64) -> f64 {
    if hv <= 0.0 {
        return 0.0;
    }
    let y = a * hv.sqrt();
    if y < 0.5 {
        // h Σ 2yᵏ / (k!(k+2))
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..40 {
            if k > 0 {
                term *= y / k as f64;
            }
            let add = 2.0 * term / (k as f64 + 2.0);
            sum += add;
            if add < 1e-18 * sum {
                break;
            }
        }
        hv * sum
    } else {
        2.0 / (a * a) * (y.exp() * (y - 1.0) + 1.0)
    }
}

/// `ln H̃` from `H`, finite far beyond the range where `H̃` itself overflows.
pub fn ln_h_tilde_of(hv: f64, a: f64) -> f64 {
    if hv <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let y = a * hv.sqrt();
    if y < 30.0 {
        h_tilde_of(hv, a).ln()
    } else {
        (2.0 / (a * a)).ln() + y + (y - 1.0 + (-y).exp()).ln()
    }
}

pub fn h_tilde(z: State, a: f64, p: &ModelParams) -> f64 {
    h_tilde_of(h(z, p), a)
}

pub fn ln_h_tilde(z: State, a: f64, p: &ModelParams) -> f64 {
    ln_h_tilde_of(h(z, p), a)
}

/// `a = ã / (4√2·max(√γ, 1))`
pub fn tilt(p: &ModelParams, a_tilde: f64) -> f64 {
    a_tilde / (4.0 * std::f64::consts::SQRT_2 * p.gamma.sqrt().max(1.0))
}

/// Slack of `L_X/8 + L_C(2 + 1/8) < 1 − λ/2`; positive when it holds.
pub fn cond_lambda_slack(l_x: f64, l_c: f64, lambda: f64) -> f64 {
    1.0 - 0.5 * lambda - (l_x / 8.0 + l_c * 17.0 / 8.0)
}

/// Midpoint of the admissible interval `(0, 2(1 − L_X/8 − 17L_C/8))`.
pub fn default_lambda(l_x: f64, l_c: f64) -> Result<f64> {
    let hi = 2.0 * (1.0 - l_x / 8.0 - l_c * 17.0 / 8.0);
    if hi <= 0.0 {
        return Err(Error::Admissibility(format!(
            "no λ > 0 satisfies L_X/8 + 17L_C/8 < 1 − λ/2 for L_X = {l_x}, L_C = {l_c}"
        )));
    }
    Ok(0.5 * hi)
}

/// Coefficients (increasing degree) of the `x` and `c` parts of the
/// polynomial whose supremum is `A`.
pub fn b_polynomials(p: &ModelParams, l_x: f64, l_c: f64, lambda: f64) -> ([f64; 5], [f64; 3]) {
    let (g, b, a) = (p.gamma, p.beta, p.alpha);
    let k2 = (1.0 + 0.5 * lambda) * g + l_x * (1.0 + 2.0 * g + 16.0 * g * g) + 17.0 * l_c;
    let xpoly = [0.0, (1.0 + lambda) * b, k2, -b, -g];
    let kc = l_x / 8.0 + l_c * 17.0 / 8.0 - (1.0 - 0.5 * lambda);
    let cpoly = [0.0, -(1.0 - lambda) * a, kc];
    (xpoly, cpoly)
}

/// `A = sup_x P(x) + sup_c Q(c)`.
pub fn derive_a(p: &ModelParams, l_x: f64, l_c: f64, lambda: f64) -> Result<f64> {
    if cond_lambda_slack(l_x, l_c, lambda) <= 0.0 {
        return Err(Error::Admissibility(format!(
            "L_X/8 + 17L_C/8 < 1 − λ/2 fails for L_X = {l_x}, L_C = {l_c}, λ = {lambda}"
        )));
    }
    let (xp, cp) = b_polynomials(p, l_x, l_c, lambda);
    let (_, sx) = poly_sup(&xp, 1e-10);
    let (_, sc) = poly_sup(&cp, 1e-10);
    Ok((sx + sc).max(0.0))
}

pub fn derive_b(p: &ModelParams, l_x: f64, l_c: f64, lambda: f64) -> Result<f64> {
    let a = derive_a(p, l_x, l_c, lambda)?;
    Ok(a + p.sigma_x * p.sigma_x * p.gamma / 2.0
        + p.sigma_c * p.sigma_c / 2.0
        + lambda * p.h0()
        + 17.0 * p.beta * p.beta * l_x
        + 17.0 * p.alpha * p.alpha * l_c)
}

/// `sup_{h≥0} e^{a√h}(b' − λh/4)`, searched in `s = √h` where the map is unimodal.
pub fn sup_tilted(b_prime: f64, lambda: f64, a: f64) -> f64 {
    if b_prime <= 0.0 {
        return 0.0;
    }
    let s_max = (4.0 * b_prime / lambda).sqrt();
    let obj = |s: f64| (a * s).exp() * (b_prime - 0.25 * lambda * s * s);
    let (_, v) = golden_max(&obj, 0.0, s_max, 1e-13);
    v.max(b_prime)
}

/// The four coefficients multiplying the kernel constants in the mean-field
/// moment terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCoefficients {
    pub alpha_x: f64,
    pub beta_x: f64,
    pub alpha_c: f64,
    pub beta_c: f64,
}

impl MomentCoefficients {
    pub fn new(p: &ModelParams) -> Self {
        Self { alpha_x: p.gamma / 2.0 + 0.5, beta_x: 8.5, alpha_c: 1.0 / 16.0, beta_c: 0.5 + 1.0 / 32.0 }
    }

    pub fn x_row(&self, l_x: f64, l_c: f64) -> f64 {
        self.alpha_x * l_x + self.beta_x * l_c
    }

    pub fn c_row(&self, l_x: f64, l_c: f64) -> f64 {
        self.alpha_c * l_x + self.beta_c * l_c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BTildeBranches {
    /// Offset for the limit process, moment terms bounded by `C_init2`.
    pub nonlinear: f64,
    /// Offset for a particle, moment terms kept explicit.
    pub particle: f64,
}

pub fn derive_b_tilde(
    p: &ModelParams,
    l_x: f64,
    l_c: f64,
    lambda: f64,
    a: f64,
    c_init2: f64,
) -> Result<(f64, BTildeBranches)> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be > 0"));
    }
    if !(a > 0.0) {
        return Err(Error::invalid("a", "must be > 0"));
    }
    let b = derive_b(p, l_x, l_c, lambda)?;
    let m = MomentCoefficients::new(p);
    let s2 = p.sigma_x.powi(2).max(p.sigma_c.powi(2));
    let young = (0.5 * s2 * p.gamma.max(1.0)).powi(2) * a * a / (2.0 * lambda);
    let moments = (m.x_row(l_x, l_c) + m.c_row(l_x, l_c)) * c_init2;
    let branches = BTildeBranches {
        nonlinear: sup_tilted(b + young + moments, lambda, a),
        particle: sup_tilted(b + young, lambda, a),
    };
    Ok((branches.nonlinear.max(branches.particle), branches))
}

/// Bound on `sup_t E(X̄_t² + C̄_t²)` from `E e^{ã(|X₀|+|C₀|)} ≤ C_init_exp`
/// and the Gronwall inequality for `E H`.
pub fn second_moment_bound(p: &ModelParams, a_tilde: f64, c_init_exp: f64, b: f64, lambda: f64) -> f64 {
    let eh0 = initial_h_bound(p, a_tilde, c_init_exp);
    4.0 * eh0.max(b / lambda) / p.gamma.min(1.0)
}

/// `E H(Z₀) ≤ max(γ,1)·E(|X₀|+|C₀|)² + 3H₀/2` with `u² ≤ 4e^{ãu}/(eã)²`.
pub fn initial_h_bound(p: &ModelParams, a_tilde: f64, c_init_exp: f64) -> f64 {
    let m2 = 4.0 * c_init_exp / (std::f64::consts::E * a_tilde).powi(2);
    p.gamma.max(1.0) * m2 + 1.5 * p.h0()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConstants {
    pub lambda: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "B_tilde")]
    pub b_tilde: f64,
    pub b_tilde_branches: BTildeBranches,
    pub a: f64,
    pub moments: MomentCoefficients,
    pub l_x: f64,
    pub l_c: f64,
    pub c_init2: f64,
}

impl LyapunovConstants {
    pub fn derive(
        p: &ModelParams,
        l_x: f64,
        l_c: f64,
        lambda: Option<f64>,
        a_tilde: f64,
        c_init_exp: f64,
    ) -> Result<Self> {
        if !(a_tilde > 0.0) {
            return Err(Error::invalid("a_tilde", "must be > 0"));
        }
        if !(c_init_exp >= 1.0) {
            return Err(Error::invalid("c_init_exp", "an exponential moment is at least 1"));
        }
        let lambda = match lambda {
            Some(l) => l,
            None => default_lambda(l_x, l_c)?,
        };
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be > 0"));
        }
        let b = derive_b(p, l_x, l_c, lambda)?;
        let a = tilt(p, a_tilde);
        let c_init2 = second_moment_bound(p, a_tilde, c_init_exp, b, lambda);
        let (b_tilde, b_tilde_branches) = derive_b_tilde(p, l_x, l_c, lambda, a, c_init2)?;
        Ok(Self { lambda, b, b_tilde, b_tilde_branches, a, moments: MomentCoefficients::new(p), l_x, l_c, c_init2 })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    /// Right-hand side in log scale so that underflowing bounds stay visible.
    pub ln_rhs: f64,
    pub pass: bool,
    /// `ln rhs − ln lhs`.
    pub ln_slack: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub checks: Vec<Inequality>,
    /// The failing inequality with the largest violation, or the tightest
    /// one if all pass.
    pub binding: String,
}

impl AdmissibilityReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Whether the inequalities not involving `ε`, `C₁`, `C_z` hold.
    pub fn lyapunov_block_pass(&self) -> bool {
        self.checks.iter().filter(|c| c.name.starts_with("moment") || c.name.starts_with("lambda")).all(|c| c.pass)
    }
}

fn ineq(name: &str, lhs: f64, ln_rhs: f64, strict: bool) -> Inequality {
    let rhs = ln_rhs.exp();
    let pass = if strict { lhs < rhs } else { lhs <= rhs };
    Inequality { name: name.to_string(), lhs, ln_rhs, pass, ln_slack: ln_rhs - lhs.ln() }
}

pub fn check_kernel_admissibility(p: &ModelParams, l_x: f64, l_c: f64, ledger: &CouplingLedger) -> AdmissibilityReport {
    let lam = ledger.lyapunov.lambda;
    let a = ledger.lyapunov.a;
    let ln_d = ledger.delta.ln();
    let (ln_eps, ln_cz, ln_c1, ln_c) = (ledger.ln_epsilon, ledger.ln_cz, ledger.ln_c1, ledger.ln_c);
    let m = MomentCoefficients::new(p);
    let b1 = lam.ln() - 128f64.ln() - ln_cz;
    let b2 = lam.ln() + a.ln() - 512f64.ln() - ln_eps - ln_cz;
    let b3 = ln_c - 2f64.ln() - ln_c1;
    let checks = vec![
        ineq("L_X <= lambda/(128 Cz)", l_x, b1, false),
        ineq("L_X <= lambda a/(512 eps Cz)", l_x, b2, false),
        ineq("L_X <= c/(2 C1)", l_x, b3, false),
        ineq("L_C <= lambda/(128 delta Cz)", l_c, b1 - ln_d, false),
        ineq("L_C <= lambda a/(512 eps delta Cz)", l_c, b2 - ln_d, false),
        ineq("L_C <= c/(2 delta C1)", l_c, b3 - ln_d, false),
        ineq("moment x-row <= gamma lambda/128", m.x_row(l_x, l_c), (p.gamma * lam / 128.0).ln(), false),
        ineq("moment c-row <= lambda/128", m.c_row(l_x, l_c), (lam / 128.0).ln(), false),
        ineq("lambda condition", l_x / 8.0 + l_c * 17.0 / 8.0, (1.0 - lam / 2.0).max(0.0).ln(), true),
    ];
    let binding = checks
        .iter()
        .filter(|c| c.lhs > 0.0 || !c.pass)
        .min_by(|x, y| x.ln_slack.total_cmp(&y.ln_slack))
        .map(|c| c.name.clone())
        .unwrap_or_else(|| "none".to_string());
    AdmissibilityReport { checks, binding }
}

/// Largest `L_X` (with `L_C = 0`) satisfying the two moment rows.
pub fn moment_block_limit(p: &ModelParams, lambda: f64) -> f64 {
    let m = MomentCoefficients::new(p);
    (p.gamma * lambda / 128.0 / m.alpha_x).min(lambda / 128.0 / m.alpha_c)
}
