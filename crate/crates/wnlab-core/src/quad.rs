//! Composite Simpson quadrature on compact intervals.
//!
//! All kernel integrals in this crate are smooth with compact support, so a
//! fixed-resolution Simpson rule with 2^14 panels keeps the quadrature error
//! far below every tolerance used by callers.

use crate::math;

/// Number of panels used by [`simpson`]; must stay even.
pub const SIMPSON_PANELS: usize = 1 << 14;

/// ∫_a^b f(x) dx by composite Simpson with [`SIMPSON_PANELS`] panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    simpson_n(f, a, b, SIMPSON_PANELS)
}

/// Composite Simpson with an explicit (even) panel count.
pub fn simpson_n<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n % 2 == 0, "panel count must be even and >= 2");
    if a == b {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + h * i as f64;
        acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

/// k-th moment ∫ f(x) x^k dx over [a, b].
pub fn moment<F: Fn(f64) -> f64>(f: F, k: u32, a: f64, b: f64) -> f64 {
    simpson(|x| f(x) * math::powi(x, k as i32), a, b)
}

/// L_p norm (∫ |f|^p)^{1/p} over [a, b] for finite p >= 1.
pub fn lp_norm<F: Fn(f64) -> f64>(f: F, p: f64, a: f64, b: f64) -> f64 {
    let ip = simpson(|x| math::powf(math::abs(f(x)), p), a, b);
    math::powf(ip, 1.0 / p)
}

/// Supremum of |f| over a dense uniform sample of [a, b].
pub fn sup_norm<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, samples: usize) -> f64 {
    let mut best = 0.0f64;
    for i in 0..=samples {
        let x = a + (b - a) * i as f64 / samples as f64;
        let v = math::abs(f(x));
        if v > best {
            best = v;
        }
    }
    best
}
