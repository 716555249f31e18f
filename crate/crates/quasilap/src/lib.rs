//! Computational spectral geometry on flat tori and plane domains.
//!
//! The crate builds, layer by layer, the ingredients needed to study a
//! holomorphic two-parameter family of elliptic operators and its
//! regularized determinant:
//!
//! * [`grid`]: sampling grids on tori `C / (Z + zZ)` and compact windows in
//!   the upper half-plane, spectral and finite-difference Wirtinger
//!   derivatives, and a binary container for sampled fields;
//! * [`oracles`]: exact genus-one reference values (Dedekind eta, the flat
//!   torus determinant `log(2pi sqrt(Im z) |eta(z)|^2)`, its two-variable
//!   holomorphic extension, and explicit Laplace eigenvalues);
//! * [`beltrami`]: normalized solutions of the Beltrami equation
//!   `dbar w = mu dw` on tori and on the plane, including the two-sided
//!   problem whose coefficient is `mu` above the real axis and the
//!   reflected `conj(nu(conj(p)))` below;
//! * [`operator`]: the family `Delta_{mu,nu}`, holomorphic in `mu` and
//!   antiholomorphic in `nu`, that restricts to the pullback Laplacian on
//!   the diagonal `nu = mu`, with symbol-angle, invariance, and energy
//!   diagnostics;
//! * [`determinant`]: dense certified spectra of the discretized operators,
//!   branch-cut `log det'`, a zeta-regularized torus determinant computed
//!   from the heat trace, and first-variation plus holomorphy checks;
//! * [`potential`]: potentials for closed (1,1)-forms by integration over
//!   cones of radial segments, the genus-one Weil-Petersson density, and
//!   the splitting of the extended torus determinant.
//!
//! Everything downstream of [`grid`] reports certificates (equation
//! residuals, eigenpair residuals, quadrature error estimates) rather than
//! trusting construction, so tests can assert numerical claims directly.

pub mod beltrami;
pub mod determinant;
pub mod error;
mod fft;
pub mod grid;
pub mod operator;
pub mod oracles;
pub mod potential;
pub mod presets;
mod special;

pub use error::{Error, Result};

/// Crate version, embedded in run manifests by downstream tools.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use num_complex::Complex64;

/// Parses a complex number written as `a`, `bi`, `a+bi`, or `a-bi`.
///
/// Both parts are ordinary `f64` literals; a bare `i` or `-i` denotes a
/// unit imaginary part, and whitespace around the sign is ignored.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return Err(Error::ParseComplex(s.to_string()));
    }
    let parse_imag = |u: &str| -> Option<f64> {
        let body = u.strip_suffix(['i', 'I'])?;
        match body {
            "" | "+" => Some(1.0),
            "-" => Some(-1.0),
            _ => body.parse().ok(),
        }
    };
    // Split at the last +/- that is not a leading sign and not part of an
    // exponent such as 1e-3.
    let bytes = t.as_bytes();
    let mut split = None;
    for j in (1..bytes.len()).rev() {
        let c = bytes[j] as char;
        if (c == '+' || c == '-') && !matches!(bytes[j - 1] as char, 'e' | 'E') {
            split = Some(j);
            break;
        }
    }
    let value = match split {
        Some(j) => {
            let (re, im) = (&t[..j], &t[j..]);
            match (re.parse::<f64>().ok(), parse_imag(im)) {
                (Some(a), Some(b)) => Some(Complex64::new(a, b)),
                _ => None,
            }
        }
        None => parse_imag(&t)
            .map(|b| Complex64::new(0.0, b))
            .or_else(|| t.parse::<f64>().ok().map(|a| Complex64::new(a, 0.0))),
    };
    value.ok_or_else(|| Error::ParseComplex(s.to_string()))
}
