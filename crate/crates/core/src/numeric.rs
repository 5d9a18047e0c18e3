//! Quadrature, 1D optimisation and log-domain helpers.

/// Adds `x` to a nonoverlapping expansion without rounding error.
pub fn expansion_add(partials: &mut Vec<f64>, mut x: f64) {
    let mut i = 0;
    for j in 0..partials.len() {
        let y = partials[j];
        let hi = x + y;
        let bb = hi - x;
        let lo = (x - (hi - bb)) + (y - bb);
        if lo != 0.0 {
            partials[i] = lo;
            i += 1;
        }
        x = hi;
    }
    partials.truncate(i);
    partials.push(x);
}

/// Value of an expansion, rounded once. Its sign is exact.
pub fn expansion_value(partials: &[f64]) -> f64 {
    partials.iter().sum()
}

/// `Σa − Σb` carried as a nonoverlapping expansion, rounded once at the
/// end. Zero exactly when the two sums agree as reals.
pub fn exact_sum_difference(a: &[f64], b: &[f64]) -> f64 {
    let mut partials = Vec::new();
    for x in a.iter().copied().chain(b.iter().map(|v| -v)) {
        expansion_add(&mut partials, x);
    }
    expansion_value(&partials)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, abs_tol, rel_tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    abs_tol: f64,
    rel_tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let both = left + right;
    let err = (both - whole).abs();
    if depth == 0 || err <= 15.0 * abs_tol.max(rel_tol * both.abs()) {
        return both + (both - whole) / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * abs_tol, rel_tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * abs_tol, rel_tol, depth - 1)
}

/// Bisection for a sign change of `f` on `[a, b]`.
pub fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol {
            return m;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Maximiser of a unimodal `f` on `[a, b]` by golden-section search.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol * (1.0 + a.abs().max(b.abs())) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    let mut best = (x, fx);
    for (xe, fe) in [(x1, f1), (x2, f2)] {
        if fe > best.1 {
            best = (xe, fe);
        }
    }
    best
}

/// Horner evaluation, coefficients in increasing degree.
pub fn poly_eval(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

/// Supremum over the real line of a polynomial with negative leading
/// coefficient (or of degree 0). Critical points are located by bisection
/// on the derivative inside the Cauchy bound.
pub fn poly_sup(coef: &[f64], tol: f64) -> (f64, f64) {
    let mut c: Vec<f64> = coef.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    if c.len() == 1 {
        return (0.0, c[0]);
    }
    let deriv: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
    let lead = *deriv.last().unwrap();
    let bound = 1.0 + deriv[..deriv.len() - 1].iter().map(|a| (a / lead).abs()).fold(0.0, f64::max);
    let dp = |x: f64| poly_eval(&deriv, x);
    let n = 4000;
    let mut best = (0.0, poly_eval(&c, 0.0));
    let mut consider = |x: f64| {
        let v = poly_eval(&c, x);
        if v > best.1 {
            best = (x, v);
        }
    };
    let mut xa = -bound;
    let mut da = dp(xa);
    for k in 1..=n {
        let xb = -bound + 2.0 * bound * k as f64 / n as f64;
        let db = dp(xb);
        if da == 0.0 {
            consider(xa);
        } else if (da < 0.0) != (db < 0.0) {
            consider(bisect(&dp, xa, xb, tol));
        }
        xa = xb;
        da = db;
    }
    consider(xa);
    best
}

/// `ln(eᵃ + eᵇ)`
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `∫₀^r e^{-q s²} ds`
pub fn gauss_integral(q: f64, r: f64) -> f64 {
    let s = q.sqrt();
    0.5 * (std::f64::consts::PI / q).sqrt() * statrs::function::erf::erf(s * r)
}
