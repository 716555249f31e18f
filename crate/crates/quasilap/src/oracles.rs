//! Exact genus-one reference values.
//!
//! For the flat torus `C / (Z + zZ)` everything downstream is checkable in
//! closed form:
//!
//! * the Dedekind eta function
//!   `eta(z) = q^{1/24} prod_{n>=1} (1 - q^n)`, `q = exp(2 pi i z)`,
//!   computed as `exp(i pi z / 12)` times the truncated product with a
//!   rigorous tail bound;
//! * the regularized determinant of the flat Laplacian in the normalization
//!   `log det'(z) = log(2 pi sqrt(Im z) |eta(z)|^2)`;
//! * its extension `log(2 pi ((z - w)/2i)^{1/2} eta(z) conj(eta(conj(w))))`,
//!   holomorphic in `z` in the upper half-plane and in `w` in the lower
//!   half-plane, which restricts to the determinant on `w = conj(z)`;
//! * the Laplace eigenvalues `4 pi^2 |m z - n|^2 / (Im z)^2`, the squared
//!   norms of the dual lattice of `Z + zZ` scaled by `4 pi^2`.
//!
//! These values are the targets that the spectral machinery in
//! [`crate::determinant`] must reproduce without knowing the formulas.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Smallest `Im z` accepted by [`dedekind_eta`]; below this the truncated
/// product would need unreasonably many terms for full precision.
pub const ETA_MIN_IM: f64 = 0.05;

/// Value of the Dedekind eta function together with its convergence
/// certificate: `terms` factors of the product were used and the relative
/// truncation error is at most `tail_bound`.
#[derive(Debug, Clone, Copy)]
pub struct EtaValue {
    pub z: Complex64,
    pub value: Complex64,
    pub terms: usize,
    pub tail_bound: f64,
}

/// Dedekind eta via the defining product, `Im z >= ETA_MIN_IM`.
pub fn dedekind_eta(z: Complex64) -> Result<EtaValue> {
    if !z.is_finite() || z.im < ETA_MIN_IM {
        return Err(Error::EtaDomain { min: ETA_MIN_IM, got: z.im });
    }
    let i = Complex64::new(0.0, 1.0);
    let q = (2.0 * PI * i * z).exp();
    let rho = q.norm();
    // |sum_{n>M} log(1 - q^n)| <= rho^{M+1} / ((1 - rho)(1 - rho^{M+1})).
    let mut terms = 0;
    let mut tail_bound = f64::INFINITY;
    for m in 1..=400usize {
        let t = rho.powi(m as i32 + 1) / ((1.0 - rho) * (1.0 - rho.powi(m as i32 + 1)));
        if t <= 1e-16 {
            terms = m;
            tail_bound = t;
            break;
        }
    }
    if terms == 0 {
        terms = 400;
        tail_bound = rho.powi(401) / ((1.0 - rho) * (1.0 - rho.powi(401)));
    }
    let mut product = Complex64::new(1.0, 0.0);
    let mut qn = Complex64::new(1.0, 0.0);
    for _ in 0..terms {
        qn *= q;
        product *= Complex64::new(1.0, 0.0) - qn;
    }
    // q^{1/24} on the branch continuous in z, not the principal power of q.
    let prefactor = (i * PI * z / 12.0).exp();
    let value = prefactor * product;
    if !value.is_finite() {
        return Err(Error::NonFinite("dedekind_eta"));
    }
    Ok(EtaValue { z, value, terms, tail_bound: tail_bound * (1.0 + tail_bound) })
}

/// `log det'` of the flat Laplacian on `C / (Z + zZ)` in the normalization
/// `log(2 pi sqrt(Im z) |eta(z)|^2)`. Invariant under `z -> z + 1` and
/// `z -> -1/z`.
pub fn torus_logdet_exact(z: Complex64) -> Result<f64> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidModulus(z));
    }
    let eta = dedekind_eta(z)?;
    Ok((2.0 * PI).ln() + 0.5 * z.im.ln() + 2.0 * eta.value.norm().ln())
}

/// Two-variable holomorphic extension of [`torus_logdet_exact`]:
///
/// ```text
/// Log(2 pi) + (1/2) Log((z - w)/2i) + Log(eta(z)) + Log(conj(eta(conj(w))))
/// ```
///
/// defined for `Im z > 0`, `Im w < -ETA_MIN_IM`, holomorphic in both
/// variables there, real and equal to the determinant on the antidiagonal
/// `w = conj(z)`. The square root needs `Re((z - w)/2i) = (Im z - Im w)/2`
/// positive, so the principal logarithms never cross their cuts; calls
/// with `w` too high (in particular `w` in the upper half-plane) are
/// rejected rather than silently landing on a wrong branch.
pub fn torus_logdet_extension(z: Complex64, w: Complex64) -> Result<Complex64> {
    let s = (z - w) / Complex64::new(0.0, 2.0);
    if s.re <= 0.0 {
        return Err(Error::BranchAmbiguity(s.re));
    }
    if w.im > -ETA_MIN_IM {
        return Err(Error::EtaDomain { min: ETA_MIN_IM, got: -w.im });
    }
    let eta_z = dedekind_eta(z)?.value;
    let eta_wbar = dedekind_eta(w.conj())?.value;
    let value = Complex64::new((2.0 * PI).ln(), 0.0)
        + 0.5 * s.ln()
        + eta_z.ln()
        + eta_wbar.conj().ln();
    if !value.is_finite() {
        return Err(Error::NonFinite("torus_logdet_extension"));
    }
    Ok(value)
}

/// All Laplace eigenvalues of the flat torus below `lambda_cut`, sorted
/// ascending with multiplicity, starting with the single `0`.
///
/// The dual lattice of `Z + zZ` (with `z = a + ib`) is spanned by
/// `1 - (a/b) i` and `i/b`, so the eigenvalues are
/// `4 pi^2 (m^2 + (n - m a)^2 / b^2)` over integer pairs `(m, n)`.
pub fn torus_eigenvalues(z: Complex64, lambda_cut: f64) -> Result<Vec<f64>> {
    if !(z.im > 0.0) || !z.is_finite() {
        return Err(Error::InvalidModulus(z));
    }
    if !(lambda_cut > 0.0) || !lambda_cut.is_finite() {
        return Err(Error::InvalidStep(lambda_cut));
    }
    let (a, b) = (z.re, z.im);
    let r2 = lambda_cut / (4.0 * PI * PI);
    let r = r2.sqrt();
    let mut out = Vec::new();
    let m_max = r.floor() as i64;
    for m in -m_max..=m_max {
        let rem = r2 - (m * m) as f64;
        if rem < 0.0 {
            continue;
        }
        let s = b * rem.sqrt();
        let center = m as f64 * a;
        let lo = (center - s).ceil() as i64;
        let hi = (center + s).floor() as i64;
        for n in lo..=hi {
            let d = (n as f64 - center) / b;
            let lambda = 4.0 * PI * PI * ((m * m) as f64 + d * d);
            if lambda <= lambda_cut {
                out.push(lambda);
            }
        }
    }
    out.sort_by(|p, q| p.partial_cmp(q).unwrap());
    Ok(out)
}
