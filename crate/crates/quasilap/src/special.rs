//! Scalar special functions used by the numerical kernels.
//!
//! Everything here is classical: the exponential integral `E1` via its
//! power series and a Lentz continued fraction, Bessel `J0` via the
//! ascending series and the Hankel asymptotic expansion, and Gauss-Legendre
//! nodes by Newton iteration on the Legendre recurrence. Each routine is
//! pinned in tests against an independent quadrature oracle.

use std::f64::consts::PI;

pub(crate) const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = int_x^inf e^{-t}/t dt` for `x > 0`.
///
/// Power series for small `x`, modified Lentz continued fraction beyond;
/// both branches agree to ~1e-15 near the switch.
pub(crate) fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 needs a positive argument, got {x}");
    if x <= 1.5 {
        // E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..=60 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * (1.0 + sum.abs()) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() + sum
    } else {
        // E1(x) = e^{-x} / (x + 1 - 1/(x + 3 - 4/(x + 5 - 9/(...))))
        let tiny = 1e-300;
        let mut f = tiny;
        let mut c = f;
        let mut d = 0.0;
        for i in 0..200 {
            let (a, b) = if i == 0 {
                (1.0, x + 1.0)
            } else {
                let k = i as f64;
                (-k * k, x + 2.0 * k + 1.0)
            };
            d = b + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x).exp() * f
    }
}

/// Coefficient `a_m(nu)` of the Hankel asymptotic expansion.
fn hankel_coeffs(nu: f64, m_max: usize) -> Vec<f64> {
    let mu = 4.0 * nu * nu;
    let mut a = Vec::with_capacity(m_max + 1);
    a.push(1.0);
    for m in 1..=m_max {
        let j = (2 * m - 1) as f64;
        let prev = a[m - 1];
        a.push(prev * (mu - j * j) / (8.0 * m as f64));
    }
    a
}

fn bessel_asymptotic(nu: f64, x: f64) -> f64 {
    // J_nu(x) ~ sqrt(2/(pi x)) [P cos(chi) - Q sin(chi)], chi = x - (2nu+1)pi/4,
    // P = sum (-1)^k a_{2k} x^{-2k}, Q = sum (-1)^k a_{2k+1} x^{-2k-1}.
    let a = hankel_coeffs(nu, 17);
    let inv2 = 1.0 / (x * x);
    let mut p = 0.0;
    let mut q = 0.0;
    let mut sign = 1.0;
    let mut x_pow = 1.0;
    for k in 0..=8 {
        p += sign * a[2 * k] * x_pow;
        q += sign * a[2 * k + 1] * x_pow / x;
        sign = -sign;
        x_pow *= inv2;
    }
    let chi = x - (2.0 * nu + 1.0) * PI / 4.0;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Bessel function of the first kind, order zero.
pub(crate) fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        // sum (-1)^k (x/2)^{2k} / (k!)^2
        let y = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=60 {
            term *= -y / ((k * k) as f64);
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        bessel_asymptotic(0.0, x)
    }
}

/// Nodes and weights of `n`-point Gauss-Legendre quadrature on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
