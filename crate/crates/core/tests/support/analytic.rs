//! Closed-form dispersion relations used as references for the mode solver.
//! Nothing here touches the crate under test.
#![allow(dead_code)]

use std::f64::consts::PI;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Bessel J_n from its integral representation.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    simpson(|t| (n as f64 * t - x * t.sin()).cos(), 0.0, PI, 4000) / PI
}

/// Modified Bessel K_ν for x > 0.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    // integrand below 1e-30 of its value at 0 beyond t_max
    let t_max = ((70.0 / x) + 1.0).acosh() + 1.0;
    simpson(|t| (-x * t.cosh()).exp() * (nu * t).cosh(), 0.0, t_max, 20000)
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if (b - a).abs() < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}

/// Largest root of `f` on (lo, hi) found by scanning downward from `hi`.
fn highest_root(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> Option<f64> {
    let h = (hi - lo) / steps as f64;
    let mut b = hi - 1e-9;
    let mut fb = f(b);
    for k in 1..=steps {
        let a = (hi - k as f64 * h).max(lo + 1e-9);
        let fa = f(a);
        if fa.is_finite() && fb.is_finite() && (fa > 0.0) != (fb > 0.0) {
            // reject sign flips across poles of tan
            let r = bisect(&f, a, b);
            if f(r).abs() < 1e-6 {
                return Some(r);
            }
        }
        b = a;
        fb = fa;
    }
    None
}

/// Fundamental TE effective index of a symmetric slab (thickness in nm).
pub fn slab_te0(n_core: f64, n_clad: f64, thickness_nm: f64, wavelength_nm: f64) -> f64 {
    let k0 = 2.0 * PI / wavelength_nm;
    let f = |n: f64| {
        let kt = (n_core * n_core - n * n).sqrt();
        let g = (n * n - n_clad * n_clad).sqrt();
        kt * (k0 * kt * thickness_nm / 2.0).tan() - g
    };
    highest_root(f, n_clad, n_core, 20000).expect("slab TE0 root")
}

/// HE11 effective index of a step-index rod from the exact vector
/// characteristic equation.
pub fn fiber_he11(n_core: f64, n_clad: f64, diameter_nm: f64, wavelength_nm: f64) -> f64 {
    let k0 = 2.0 * PI / wavelength_nm;
    let a = diameter_nm / 2.0;
    let r2 = (n_clad / n_core).powi(2);
    let f = |n: f64| {
        let u = k0 * a * (n_core * n_core - n * n).sqrt();
        let w = k0 * a * (n * n - n_clad * n_clad).sqrt();
        let j1 = bessel_j(1, u);
        let k1 = bessel_k(1.0, w);
        let jp = (bessel_j(0, u) - j1 / u) / (u * j1);
        let kp = (-bessel_k(0.0, w) - k1 / w) / (w * k1);
        (jp + kp) * (jp + r2 * kp) - (1.0 / (u * u) + 1.0 / (w * w)) * (1.0 / (u * u) + r2 / (w * w))
    };
    highest_root(f, n_clad, n_core, 2000).expect("HE11 root")
}

#[cfg(test)]
mod self_check {
    use super::*;

    #[test]
    fn bessel_values() {
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-12);
        assert!((bessel_j(1, 2.5) - 0.497_094_102_464_274_4).abs() < 1e-12);
        assert!((bessel_k(0.0, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-10);
        assert!((bessel_k(1.0, 0.5) - 1.656_441_120_003_300_9).abs() < 1e-10);
    }

    #[test]
    fn reference_roots() {
        assert!((slab_te0(3.46, 1.0, 160.0, 940.0) - 2.931_645_597).abs() < 1e-8);
        assert!((fiber_he11(1.45, 1.0, 1000.0, 940.0) - 1.323_006_520).abs() < 1e-8);
    }
}
