//! Quadrature and scalar root finding.
//!
//! The phase-plane quantities (periods, arc lengths, traversal lengths) are
//! integrals of the form `∫ dm / sqrt(g(m))` where `g` vanishes linearly at
//! simple turning points. [`inverse_sqrt_integral`] removes those endpoint
//! singularities with the substitution `m = end ∓ t²` before handing the
//! now-smooth integrand to adaptive Gauss–Legendre.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const GL_ORDER: usize = 20;
const MAX_PANELS: usize = 1 << 16;

fn gauss_legendre_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gauss_legendre_rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes.iter().zip(weights).map(|(&t, &w)| w * f(mid + half * t)).sum::<f64>() * half
}

/// Adaptive Gauss–Legendre quadrature of a smooth integrand on `[a, b]`.
///
/// Panels are bisected until a panel and its two halves agree to
/// `rel_tol` relative to the running total.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = gl_panel(&f, a, b);
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut total = 0.0f64;
    let mut panels = 0usize;
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    while let Some((lo, hi, estimate, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gl_panel(&f, lo, mid);
        let right = gl_panel(&f, mid, hi);
        let refined = left + right;
        panels += 1;
        let tol = rel_tol * scale.max(total.abs());
        if (refined - estimate).abs() <= tol || depth >= 40 || panels >= MAX_PANELS {
            total += refined;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    total
}

/// `∫_a^b dm / sqrt(g(m))` for `g > 0` on `(a, b)`, allowing `g` to vanish
/// linearly at either endpoint. Returns a signed value (negative if `b < a`).
pub fn inverse_sqrt_integral<G: Fn(f64) -> f64>(g: G, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -inverse_sqrt_integral(g, b, a, rel_tol);
    }
    let half_width = 0.5 * (b - a);
    let t_max = half_width.sqrt();
    // Near a turning point `g` is a difference of nearly equal values and
    // its rounding noise can dominate. Below the noise floor, fall back on the
    // linear model `g ≈ s t²` fitted slightly inside the interval.
    let noise = 1e-13 * g(0.5 * (a + b)).abs();
    let probe = (half_width * 1e-4).sqrt();
    let s_left = g(a + probe * probe) / (probe * probe);
    let s_right = g(b - probe * probe) / (probe * probe);
    let integrand = |t: f64, v: f64, s: f64| {
        if v > noise {
            2.0 * t / v.sqrt()
        } else if s > 0.0 {
            2.0 / s.sqrt()
        } else {
            0.0
        }
    };
    let left = integrate(|t| integrand(t, g(a + t * t), s_left), 0.0, t_max, rel_tol);
    let right = integrate(|t| integrand(t, g(b - t * t), s_right), 0.0, t_max, rel_tol);
    left + right
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to an absolute width of `x_tol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NotBracketed(format!("f({lo:.6e}) = {f_lo:.3e}, f({hi:.6e}) = {f_hi:.3e}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= x_tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection in `ln x` for a sign change on `[lo, hi]` with `0 < lo < hi`.
pub fn bisect_log<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    let t = bisect(|s| f(s.exp()), lo.ln(), hi.ln(), rel_tol)?;
    Ok(t.exp())
}
