//! Branch-cut regularized determinants for the operator family.
//!
//! The family members are elliptic but not self-adjoint: their spectra fill
//! a sector around the positive reals whose half-angle grows linearly in the
//! off-diagonal distance `|mu - nu|`. A determinant therefore needs two
//! choices made explicit: a cut angle `theta` fixing the branch of every
//! `log lambda` (we use `arg lambda` in the half-open window
//! `(theta - 2 pi, theta]`), and a kernel radius `rho` below which
//! eigenvalues are treated as exact zeros and excluded from the product.
//! Changing `theta` across an eigenvalue moves `log det` by an exact integer
//! multiple of `2 pi i`; the integer is reported, never hidden.
//!
//! Two evaluation routes live here.
//!
//! * Dense matrices. [`discretize`] writes the action of a flat-flavor
//!   family member in the Fourier-collocation basis, where pointwise
//!   coefficient multiplication becomes circular convolution of coefficient
//!   spectra and each derivative is an exact diagonal multiplier. The
//!   matrix agrees with [`HoloLaplacian::apply`] to roundoff because both
//!   are assembled from the same multipliers. [`eigen_spectrum`] runs a
//!   dense nonsymmetric eigensolve and certifies every eigenpair residual
//!   against the matrix norm before anything downstream trusts it;
//!   [`log_det_branch`] then sums the chosen logarithm branch over the
//!   nonkernel spectrum.
//!
//! * Exact zeta value on the torus. For the diagonal point of the family at
//!   modulus `z` the spectrum is the dual lattice, and the zeta-regularized
//!   determinant has a closed continuation: split the heat trace at `t = 1`,
//!   Poisson-sum the small-time half, and subtract the pole. What remains
//!   are two rapidly convergent lattice sums,
//!
//!   `log det' = A/(4 pi) + gamma - (A/pi) sum_w exp(-|w|^2/4)/|w|^2
//!               - sum_{w*} E1(4 pi^2 |w*|^2)`,
//!
//!   over the nonzero direct and dual lattice vectors, with `A = Im z` the
//!   cell area. [`zeta_logdet_torus`] evaluates this and rescales to the
//!   normalization `log(2 pi sqrt(Im z) |eta(z)|^2)` used across the crate,
//!   so it is an independent check of [`crate::oracles::torus_logdet_exact`]
//!   through a completely different route (heat kernel versus Dedekind eta).
//!
//! The two consistency probes tie the routes together. [`variation_check`]
//! compares a finite-difference derivative of `log det` along a matrix
//! family against the trace formula `Tr((1 - P0) A^{-1} dA)` with the
//! kernel projected out, and refuses to difference across a branch-cut or
//! kernel-radius crossing. [`det_holomorphy_check`] measures the
//! Cauchy-Riemann residual of `log det` in the first coefficient and the
//! conjugate residual in the second: both vanish to `O(h^2)` for the
//! assembled family, while the diagonal one-parameter candidate
//! `mu = nu` fails by orders of magnitude, which is the numerical
//! signature that the determinant is a holomorphic function of the pair
//! `(mu, conj(nu))` and not of any fewer variables.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Inverse};
use num_complex::Complex64;

use crate::beltrami::{solve_torus, BeltramiCoefficient, SolveOptions, SupportKind};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::grid::{try_cr_residual, wirtinger_multipliers, GridKind, SampledField, Wirtinger};
use crate::operator::{
    build_delta_mn, symbol_report, Flavor, HoloLaplacian, FLAT_SPECTRAL_SCALE,
};
use crate::special::{exp_integral_e1, EULER_GAMMA};

/// Largest number of unknowns a dense solve will accept.
pub const DISCRETIZE_CAP: usize = 4096;

/// Eigenvalues closer than this to the cut ray make the branch ill-defined.
pub const CUT_TOL: f64 = 1e-10;

/// Relative eigenpair residual every dense solve must certify.
pub const EIGEN_TOL: f64 = 1e-9;

/// Modulus box on which the exact torus zeta value is evaluated.
pub const ZETA_MODULUS_MIN: f64 = 0.1;
/// See [`ZETA_MODULUS_MIN`].
pub const ZETA_MODULUS_MAX: f64 = 10.0;
/// Shortest cell height for which the heat-kernel lattice sums stay small.
pub const ZETA_IM_MIN: f64 = 0.05;

/// How a determinant value was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetMethod {
    /// Branch-summed logarithm of a certified dense spectrum.
    MatrixBranch,
    /// Closed-form heat-kernel continuation on the flat torus.
    ZetaExactTorus,
}

/// A regularized log-determinant together with its branch bookkeeping.
#[derive(Clone, Copy, Debug)]
pub struct DetResult {
    /// `sum log lambda` over the nonkernel spectrum, on the declared branch.
    pub log_det: Complex64,
    /// Integer `n` with `log_det = log_det_principal + 2 pi i n`, where the
    /// principal value uses `arg lambda` in `(-pi, pi]` for every factor.
    pub branch_index: i64,
    /// Which route produced the value.
    pub method: DetMethod,
}

/// A certified dense spectrum with the branch data needed downstream.
///
/// `eigenvalues` is sorted by modulus. Exactly `kernel_dim` of them lie
/// inside `|lambda| < rho` and are excluded from determinants; every
/// eigenvalue outside is guaranteed to sit at least [`CUT_TOL`] away from
/// the cut ray at angle `theta`, so the branch window `(theta - 2 pi,
/// theta]` is unambiguous on the whole nonkernel spectrum. The imaginary
/// part of any branch sum over `K` factors then lies in the declared strip
/// `(K (theta - 2 pi), K theta]`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// All eigenvalues, sorted by increasing modulus.
    pub eigenvalues: Vec<Complex64>,
    /// Cut angle of the logarithm branch.
    pub theta: f64,
    /// Kernel radius: eigenvalues with `|lambda| < rho` count as zeros.
    pub rho: f64,
    /// Largest certified eigenpair residual `|A v - lambda v| / |v|`.
    pub residual_bound: f64,
    /// Number of eigenvalues inside the kernel radius.
    pub kernel_dim: usize,
}

impl SpectralDecomposition {
    /// Re-declares the cut angle, revalidating the distance of every
    /// nonkernel eigenvalue to the new ray.
    pub fn with_cut(&self, theta: f64) -> Result<Self> {
        let mut out = self.clone();
        out.theta = theta;
        check_cut_distance(&out.eigenvalues, theta, out.rho)?;
        Ok(out)
    }

    /// Errors unless exactly `expected` eigenvalues lie inside the kernel
    /// radius.
    pub fn expect_kernel(&self, expected: usize) -> Result<&Self> {
        if self.kernel_dim != expected {
            return Err(Error::KernelDimension {
                got: self.kernel_dim,
                expected,
                rho: self.rho,
            });
        }
        Ok(self)
    }

    /// Smallest nonkernel eigenvalue modulus, or zero if none exist.
    pub fn min_nonzero(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.norm())
            .find(|&m| m >= self.rho)
            .unwrap_or(0.0)
    }
}

/// Distance from `lambda` to the ray `{ r e^{i theta} : r >= 0 }`.
fn ray_distance(lambda: Complex64, theta: f64) -> f64 {
    let dir = Complex64::from_polar(1.0, theta);
    let along = (lambda * dir.conj()).re;
    if along <= 0.0 {
        lambda.norm()
    } else {
        (lambda - along * dir).norm()
    }
}

fn check_cut_distance(eigenvalues: &[Complex64], theta: f64, rho: f64) -> Result<()> {
    for &lambda in eigenvalues {
        if lambda.norm() < rho {
            continue;
        }
        let distance = ray_distance(lambda, theta);
        if distance < CUT_TOL {
            return Err(Error::CutRayConflict {
                value: lambda,
                distance,
                theta,
            });
        }
    }
    Ok(())
}

/// Dense matrix of [`HoloLaplacian::apply`] in the Fourier-collocation
/// basis of an `n x n` torus grid.
///
/// Rows and columns are indexed by the grid's frequency layout (row-major,
/// signed frequencies per axis), acting on vectors of unnormalized forward
/// Fourier coefficients: `forward(apply(u)) = A forward(u)` to roundoff.
/// Pointwise coefficient fields become circular convolutions by their
/// Fourier spectra; the derivative multipliers sit on the column index.
/// Constant coefficients therefore give an exactly diagonal matrix, and the
/// constant mode's column vanishes because every term carries at least one
/// derivative.
///
/// Only the flat flavor is accepted (the hyperbolic members live on
/// windows where this basis is not available), `n` must match the
/// operator's grid, and `n^2` may not exceed [`DISCRETIZE_CAP`].
pub fn discretize(op: &HoloLaplacian, n: usize) -> Result<Array2<Complex64>> {
    if op.flavor() != Flavor::Flat {
        return Err(Error::NotAdmissible(
            "dense discretization is defined for the flat-torus flavor only".into(),
        ));
    }
    if !matches!(op.grid().kind(), GridKind::Torus(_)) {
        return Err(Error::GridKindMismatch {
            expected: "torus",
            got: op.grid().kind().name(),
        });
    }
    if op.grid().n() != n {
        return Err(Error::BadResolution(
            n,
            "matrix resolution must match the operator grid",
        ));
    }
    let nn = n * n;
    if nn > DISCRETIZE_CAP {
        return Err(Error::MatrixTooLarge {
            n: nn,
            cap: DISCRETIZE_CAP,
        });
    }
    let z = op.grid().modulus()?;
    let d = wirtinger_multipliers(z, n, Wirtinger::D);
    let db = wirtinger_multipliers(z, n, Wirtinger::DBar);

    // Fourier spectra of the five coefficient fields, prefactor folded in.
    let mut fft = Fft2::new(n);
    let pre = op.prefactor();
    let spectra: Vec<Vec<Complex64>> = op
        .coefficients()
        .iter()
        .map(|c| {
            let mut v: Vec<Complex64> =
                c.iter().zip(pre).map(|(&ci, &pi)| pi * ci).collect();
            fft.forward(&mut v);
            let scale = 1.0 / nn as f64;
            for x in &mut v {
                *x *= scale;
            }
            v
        })
        .collect();

    // Derivative multipliers per column frequency.
    let mults: Vec<[Complex64; 5]> = (0..nn)
        .map(|i| [d[i] * d[i], d[i] * db[i], db[i] * db[i], d[i], db[i]])
        .collect();

    let mut a = Array2::<Complex64>::zeros((nn, nn));
    let slice = a.as_slice_mut().expect("freshly allocated, standard layout");
    for row in 0..nn {
        let (rj, cj) = (row / n, row % n);
        let out = &mut slice[row * nn..(row + 1) * nn];
        for (col, entry) in out.iter_mut().enumerate() {
            let (ri, ci) = (col / n, col % n);
            let g = ((rj + n - ri) % n) * n + ((cj + n - ci) % n);
            let m = &mults[col];
            *entry = spectra[0][g] * m[0]
                + spectra[1][g] * m[1]
                + spectra[2][g] * m[2]
                + spectra[3][g] * m[3]
                + spectra[4][g] * m[4];
        }
    }
    Ok(a)
}

/// [`discretize`] rescaled by the flat spectral normalization, so that the
/// diagonal family member has positive spectrum and the default cut
/// `theta = pi` stays far from it.
pub fn spectral_matrix(op: &HoloLaplacian, n: usize) -> Result<Array2<Complex64>> {
    let mut a = discretize(op, n)?;
    let s = FLAT_SPECTRAL_SCALE;
    a.mapv_inplace(|x| s * x);
    Ok(a)
}

/// Row-major `ikj` product; complex GEMM without a BLAS dependency, fast
/// enough for the capped dense sizes. Inputs in any memory order.
fn matmul(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let (n, k) = a.dim();
    let (kb, m) = b.dim();
    assert_eq!(k, kb, "inner dimensions must agree");
    let a_row = a.as_standard_layout();
    let b_row = b.as_standard_layout();
    let mut out = Array2::<Complex64>::zeros((n, m));
    let a_s = a_row.as_slice().expect("standard layout after conversion");
    let b_s = b_row.as_slice().expect("standard layout after conversion");
    let o_s = out.as_slice_mut().expect("freshly allocated");
    for i in 0..n {
        let arow = &a_s[i * k..(i + 1) * k];
        let orow = &mut o_s[i * m..(i + 1) * m];
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == Complex64::new(0.0, 0.0) {
                continue;
            }
            let brow = &b_s[kk * m..(kk + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Full dense nonsymmetric eigensolve with certified residuals.
///
/// Every eigenpair residual `|A v - lambda v|` (unit eigenvectors) is
/// recomputed from the matrix and must stay below `EIGEN_TOL` times the
/// Frobenius norm, otherwise the solve is rejected rather than propagated.
/// Eigenvalues inside `|lambda| < rho` are counted as kernel; every other
/// eigenvalue must clear the cut ray at angle `theta` by [`CUT_TOL`], or
/// the call fails asking for a different cut.
pub fn eigen_spectrum(
    a: &Array2<Complex64>,
    theta: f64,
    rho: f64,
) -> Result<SpectralDecomposition> {
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::NotAdmissible("eigensolve needs a square matrix".into()));
    }
    if n > DISCRETIZE_CAP {
        return Err(Error::MatrixTooLarge {
            n,
            cap: DISCRETIZE_CAP,
        });
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::NotAdmissible(
            "kernel radius rho must be positive and finite".into(),
        ));
    }
    if !theta.is_finite() {
        return Err(Error::NotAdmissible("cut angle theta must be finite".into()));
    }
    let (vals, vecs): (Array1<Complex64>, Array2<Complex64>) = a
        .eig()
        .map_err(|e| Error::EigenBackend(e.to_string()))?;

    // Certify: columns of A V against the eigenvalues.
    let av = matmul(a, &vecs);
    let norm_a = frobenius(a);
    let bound = EIGEN_TOL * norm_a;
    let mut residual_bound = 0.0_f64;
    for (j, &lambda) in vals.iter().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += (av[[i, j]] - lambda * vecs[[i, j]]).norm_sqr();
            den += vecs[[i, j]].norm_sqr();
        }
        let residual = (num / den.max(1e-300)).sqrt();
        residual_bound = residual_bound.max(residual);
        if residual > bound {
            return Err(Error::EigenCertificate { residual, bound });
        }
    }

    let mut eigenvalues: Vec<Complex64> = vals.to_vec();
    eigenvalues.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
    let kernel_dim = eigenvalues.iter().filter(|l| l.norm() < rho).count();
    check_cut_distance(&eigenvalues, theta, rho)?;
    Ok(SpectralDecomposition {
        eigenvalues,
        theta,
        rho,
        residual_bound,
        kernel_dim,
    })
}

/// Eigensolve specialized to matrices that are already diagonal in the
/// Fourier-collocation basis (constant-coefficient family members).
///
/// Instead of a dense reduction, the off-diagonal mass of each column is
/// the certified residual of the corresponding coordinate eigenvector; the
/// call fails unless every column certifies below `EIGEN_TOL` times the
/// matrix norm. This keeps the constant-coefficient route exact and cheap
/// at sizes where the general reduction would dominate the run.
pub fn eigen_spectrum_fourier(
    a: &Array2<Complex64>,
    theta: f64,
    rho: f64,
) -> Result<SpectralDecomposition> {
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::NotAdmissible("eigensolve needs a square matrix".into()));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::NotAdmissible(
            "kernel radius rho must be positive and finite".into(),
        ));
    }
    let norm_a = frobenius(a);
    let bound = EIGEN_TOL * norm_a;
    let mut residual_bound = 0.0_f64;
    for j in 0..n {
        let mut off = 0.0;
        for i in 0..n {
            if i != j {
                off += a[[i, j]].norm_sqr();
            }
        }
        let residual = off.sqrt();
        residual_bound = residual_bound.max(residual);
        if residual > bound {
            return Err(Error::EigenCertificate { residual, bound });
        }
    }
    let mut eigenvalues: Vec<Complex64> = (0..n).map(|j| a[[j, j]]).collect();
    eigenvalues.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
    let kernel_dim = eigenvalues.iter().filter(|l| l.norm() < rho).count();
    check_cut_distance(&eigenvalues, theta, rho)?;
    Ok(SpectralDecomposition {
        eigenvalues,
        theta,
        rho,
        residual_bound,
        kernel_dim,
    })
}

/// `arg lambda` folded into the branch window `(theta - 2 pi, theta]`.
fn arg_on_branch(lambda: Complex64, theta: f64) -> f64 {
    let mut a = lambda.arg();
    while a > theta {
        a -= 2.0 * PI;
    }
    while a <= theta - 2.0 * PI {
        a += 2.0 * PI;
    }
    a
}

/// Branch-summed log-determinant over the nonkernel spectrum.
///
/// Each factor contributes `ln |lambda| + i arg lambda` with the argument
/// taken in `(theta - 2 pi, theta]`; kernel eigenvalues (inside `rho`) are
/// omitted. The reported `branch_index` locates the value relative to the
/// all-principal-arguments sum, so two decompositions of the same matrix
/// with different admissible cuts differ by exactly
/// `2 pi i (n_1 - n_2)`.
pub fn log_det_branch(spec: &SpectralDecomposition) -> Result<DetResult> {
    let mut log_det = Complex64::new(0.0, 0.0);
    let mut principal_im = 0.0_f64;
    for &lambda in &spec.eigenvalues {
        if lambda.norm() < spec.rho {
            continue;
        }
        log_det += Complex64::new(lambda.norm().ln(), arg_on_branch(lambda, spec.theta));
        principal_im += lambda.arg();
    }
    if !log_det.is_finite() {
        return Err(Error::NonFinite("log_det_branch"));
    }
    let branch_index = ((log_det.im - principal_im) / (2.0 * PI)).round() as i64;
    Ok(DetResult {
        log_det,
        branch_index,
        method: DetMethod::MatrixBranch,
    })
}

/// Exact zeta-regularized determinant of the diagonal family member on the
/// torus of modulus `z`, in the crate normalization
/// `log(2 pi sqrt(Im z) |eta(z)|^2)`.
///
/// Heat-trace continuation: with `A = Im z` the determinant of the standard
/// flat Laplacian is
///
/// `log det'_std = A/(4 pi) + gamma - (A/pi) S_gauss - S_e1`,
///
/// `S_gauss = sum_{w in L, w != 0} exp(-|w|^2/4) / |w|^2` over the period
/// lattice `L = Z + z Z` and `S_e1 = sum_{w* != 0} E1(4 pi^2 |w*|^2)` over
/// the dual lattice (`|w*| = |k - m z| / Im z`). Both sums converge like
/// Gaussians; the truncation radii below leave tails under `1e-18`. The
/// returned value is `log 2 pi + (log det'_std - log Im z) / 2`, the same
/// normalization the eta-product oracle uses, reached here without eta.
///
/// The modulus must satisfy `Im z >= 0.05` and `0.1 <= |z| <= 10`; outside
/// that box the lattice sums lose their fast decay and the call refuses.
pub fn zeta_logdet_torus(z: Complex64) -> Result<DetResult> {
    if !z.is_finite() || !(z.im > 0.0) {
        return Err(Error::InvalidModulus(z));
    }
    let r = z.norm();
    if !(ZETA_MODULUS_MIN..=ZETA_MODULUS_MAX).contains(&r) {
        return Err(Error::ModulusOutOfRange(r, ZETA_MODULUS_MIN, ZETA_MODULUS_MAX));
    }
    if z.im < ZETA_IM_MIN {
        return Err(Error::OutsideDomain(
            z,
            format!("moduli with Im z >= {ZETA_IM_MIN} (heat-kernel sums)"),
        ));
    }
    let area = z.im;

    // Direct-lattice Gaussian sum; exp(-q/4)/q < 1e-19 once q > 171.
    const RADIUS: f64 = 13.1;
    let mut s_gauss = 0.0_f64;
    let kmax = (RADIUS / z.im).ceil() as i64;
    for k in -kmax..=kmax {
        let center = -(k as f64) * z.re;
        let m_lo = (center - RADIUS).floor() as i64;
        let m_hi = (center + RADIUS).ceil() as i64;
        for m in m_lo..=m_hi {
            if m == 0 && k == 0 {
                continue;
            }
            let w = Complex64::new(m as f64 + k as f64 * z.re, k as f64 * z.im);
            let q = w.norm_sqr();
            if q > RADIUS * RADIUS {
                continue;
            }
            s_gauss += (-q / 4.0).exp() / q;
        }
    }

    // Dual-lattice E1 sum; E1(4 pi^2 q) < 1e-20 once q > 1.21.
    const DUAL_RADIUS: f64 = 1.1;
    let mut s_e1 = 0.0_f64;
    let span = DUAL_RADIUS * z.im;
    let mmax = DUAL_RADIUS.ceil() as i64;
    for m in -mmax..=mmax {
        let center = m as f64 * z.re;
        let k_lo = (center - span).floor() as i64 - 1;
        let k_hi = (center + span).ceil() as i64 + 1;
        for k in k_lo..=k_hi {
            if m == 0 && k == 0 {
                continue;
            }
            let w = Complex64::new(k as f64 - m as f64 * z.re, -(m as f64) * z.im);
            let q = w.norm_sqr() / (z.im * z.im);
            if q > DUAL_RADIUS * DUAL_RADIUS {
                continue;
            }
            s_e1 += exp_integral_e1(4.0 * PI * PI * q);
        }
    }

    let logdet_std = area / (4.0 * PI) + EULER_GAMMA - area / PI * s_gauss - s_e1;
    let value = (2.0 * PI).ln() + 0.5 * (logdet_std - area.ln());
    if !value.is_finite() {
        return Err(Error::NonFinite("zeta_logdet_torus"));
    }
    Ok(DetResult {
        log_det: Complex64::new(value, 0.0),
        branch_index: 0,
        method: DetMethod::ZetaExactTorus,
    })
}

/// Both sides of the first-variation identity and their gap.
#[derive(Clone, Copy, Debug)]
pub struct VariationReport {
    /// Fourth-order finite difference of `log det` along the family.
    pub fd: Complex64,
    /// `Tr((1 - P0) A^{-1} dA)` with the kernel projected out.
    pub trace: Complex64,
    /// `|fd - trace|`.
    pub defect: f64,
}

/// Compares the finite-difference derivative of `log_det_branch` along the
/// `s`-direction of a two-parameter matrix family against the trace
/// formula at `(s0, t0)`.
///
/// The derivative uses the five-point fourth-order stencil, so the stencil
/// error is `O(h^4)` and closed-form families certify to near roundoff.
/// The trace side inverts the eigenbasis of the base matrix and sums
/// `(V^{-1} dA V)_{ii} / lambda_i` over the nonkernel spectrum, which is
/// the derivative of the branch sum as long as no eigenvalue crosses the
/// contour: a kernel-count change across the stencil or a `2 pi` jump of
/// `Im log det` between neighboring stencil points aborts the check
/// instead of silently differencing across the cut.
pub fn variation_check(
    family: &mut dyn FnMut(f64, f64) -> Result<Array2<Complex64>>,
    s0: f64,
    t0: f64,
    h: f64,
    theta: f64,
    rho: f64,
) -> Result<VariationReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidStep(h));
    }
    let base = family(s0, t0)?;
    let spec0 = eigen_spectrum(&base, theta, rho)?;

    let offsets = [-2.0, -1.0, 1.0, 2.0];
    let mut logs = Vec::with_capacity(4);
    let mut mats = Vec::with_capacity(4);
    for (step, c) in offsets.iter().enumerate() {
        let a = family(s0 + c * h, t0)?;
        let spec = eigen_spectrum(&a, theta, rho)?;
        if spec.kernel_dim != spec0.kernel_dim {
            let nearest = spec
                .eigenvalues
                .iter()
                .map(|l| l.norm())
                .min_by(|x, y| (x - rho).abs().total_cmp(&(y - rho).abs()))
                .unwrap_or(0.0);
            return Err(Error::KernelCrossing(nearest, step));
        }
        logs.push(log_det_branch(&spec)?.log_det);
        mats.push(a);
    }
    for pair in logs.windows(2) {
        if (pair[1].im - pair[0].im).abs() > PI {
            return Err(Error::NotAdmissible(
                "an eigenvalue crossed the branch cut inside the difference \
                 stencil; shrink h or rotate theta"
                    .into(),
            ));
        }
    }
    let fd = (logs[0] - 8.0 * logs[1] + 8.0 * logs[2] - logs[3]) / (12.0 * h);

    let nn = base.dim().0;
    let mut da = Array2::<Complex64>::zeros((nn, nn));
    for i in 0..nn {
        for j in 0..nn {
            da[[i, j]] = (mats[0][[i, j]] - 8.0 * mats[1][[i, j]] + 8.0 * mats[2][[i, j]]
                - mats[3][[i, j]])
                / (12.0 * h);
        }
    }

    let (vals, vecs) = base
        .eig()
        .map_err(|e| Error::EigenBackend(e.to_string()))?;
    let w = vecs
        .inv()
        .map_err(|e| Error::EigenBackend(format!("eigenbasis inversion: {e}")))?;
    let p = matmul(&da, &vecs);
    let mut trace = Complex64::new(0.0, 0.0);
    for (i, &lambda) in vals.iter().enumerate() {
        if lambda.norm() < rho {
            continue;
        }
        let mut diag = Complex64::new(0.0, 0.0);
        for kk in 0..nn {
            diag += w[[i, kk]] * p[[kk, i]];
        }
        trace += diag / lambda;
    }
    let defect = (fd - trace).norm();
    if !defect.is_finite() {
        return Err(Error::NonFinite("variation_check"));
    }
    Ok(VariationReport { fd, trace, defect })
}

/// Options for [`det_holomorphy_check`].
#[derive(Clone, Debug)]
pub struct HolomorphyOptions {
    /// Branch-cut angle (default `pi`, opposite the flat spectrum).
    pub theta: f64,
    /// Kernel radius; `0.0` calibrates to half the smallest nonzero
    /// eigenvalue modulus of the base point.
    pub rho: f64,
    /// Admissible bound on the symbol sector half-angle.
    pub angle_bound: f64,
    /// Solver options for the coefficient solves at every stencil point.
    pub solve: SolveOptions,
}

impl Default for HolomorphyOptions {
    fn default() -> Self {
        Self {
            theta: PI,
            rho: 0.0,
            angle_bound: 0.5 * PI,
            solve: SolveOptions::default(),
        }
    }
}

/// What [`det_holomorphy_check`] measured at the base point.
#[derive(Clone, Copy, Debug)]
pub struct HolomorphyReport {
    /// Cauchy-Riemann residual of `log det` in the first-coefficient
    /// direction.
    pub res_s: f64,
    /// Conjugate Cauchy-Riemann residual in the second-coefficient
    /// direction.
    pub res_t: f64,
    /// Symbol sector half-angle at the base point.
    pub max_abs_arg: f64,
    /// Smallest nonzero eigenvalue modulus at the base point.
    pub min_gap: f64,
    /// Base-point log-determinant on the declared branch.
    pub log_det: Complex64,
}

/// Measures holomorphy of the determinant in the coefficient pair.
///
/// `log det` of the assembled family is tested as a holomorphic function
/// of `s` along `mu + s mu1` (Cauchy-Riemann residual `res_s`) and as an
/// antiholomorphic function of `t` along `nu + t nu1` (conjugate residual
/// `res_t`); both are centered second-order stencils, so an exact branch
/// returns `O(h^2)` plus eigensolver noise. Every stencil point must pass
/// the admissibility gates first: the perturbed coefficient stays a
/// contraction, the symbol sector half-angle stays below
/// `opts.angle_bound`, and the spectrum keeps a one-dimensional kernel
/// inside the (auto-calibrated) radius; the first gate that fails names
/// itself in the error.
pub fn det_holomorphy_check(
    mu: &BeltramiCoefficient,
    nu: &BeltramiCoefficient,
    mu1: &SampledField,
    nu1: &SampledField,
    h: f64,
    opts: &HolomorphyOptions,
) -> Result<HolomorphyReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidStep(h));
    }
    let grid = mu.field.grid().clone();
    if nu.field.grid() != &grid || mu1.grid() != &grid || nu1.grid() != &grid {
        return Err(Error::GridMismatch);
    }
    let n = grid.n();

    let fnm_base = solve_torus(nu, &opts.solve)?;
    let fmn_base = solve_torus(mu, &opts.solve)?;
    let base_op = build_delta_mn(mu, nu, &fmn_base, &fnm_base)?;
    let base_rep = symbol_report(&base_op, 16)?;
    if base_rep.max_abs_arg >= opts.angle_bound {
        return Err(Error::SymbolAngle {
            angle: base_rep.max_abs_arg,
            bound: opts.angle_bound,
        });
    }
    let base_mat = spectral_matrix(&base_op, n)?;
    // Provisional kernel window from the matrix scale, then the declared or
    // auto-calibrated radius.
    let provisional = 1e-8 * frobenius(&base_mat).max(1.0);
    let base_spec = eigen_spectrum(&base_mat, opts.theta, provisional)?;
    base_spec.expect_kernel(1)?;
    let rho = if opts.rho > 0.0 {
        opts.rho
    } else {
        0.5 * base_spec.min_nonzero()
    };
    let base_spec = base_spec.with_cut(opts.theta)?;
    let min_gap = base_spec.min_nonzero();
    let log_det = log_det_branch(&SpectralDecomposition {
        rho,
        ..base_spec.clone()
    })?
    .log_det;

    let eval = |shift_mu: Option<Complex64>, shift_nu: Option<Complex64>| -> Result<Complex64> {
        let mu_s = match shift_mu {
            Some(s) => BeltramiCoefficient::new(
                mu.field.zip_map(mu1, |a, b| a + s * b)?,
                SupportKind::Periodic,
            )?,
            None => mu.clone(),
        };
        let nu_t = match shift_nu {
            Some(t) => BeltramiCoefficient::new(
                nu.field.zip_map(nu1, |a, b| a + t * b)?,
                SupportKind::Periodic,
            )?,
            None => nu.clone(),
        };
        let op = build_delta_mn(
            &mu_s,
            &nu_t,
            &solve_torus(&mu_s, &opts.solve)?,
            &solve_torus(&nu_t, &opts.solve)?,
        )?;
        let rep = symbol_report(&op, 16)?;
        if rep.max_abs_arg >= opts.angle_bound {
            return Err(Error::SymbolAngle {
                angle: rep.max_abs_arg,
                bound: opts.angle_bound,
            });
        }
        let a = spectral_matrix(&op, n)?;
        let spec = eigen_spectrum(&a, opts.theta, rho)?;
        spec.expect_kernel(1)?;
        Ok(log_det_branch(&spec)?.log_det)
    };

    let res_s = try_cr_residual(
        |s| eval(Some(s), None),
        Complex64::new(0.0, 0.0),
        h,
    )?;
    let res_t = try_cr_residual(
        |t| Ok(eval(None, Some(t))?.conj()),
        Complex64::new(0.0, 0.0),
        h,
    )?;
    Ok(HolomorphyReport {
        res_s,
        res_t,
        max_abs_arg: base_rep.max_abs_arg,
        min_gap,
        log_det,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_torus_grid, ComplexGrid};
    use crate::oracles::{torus_eigenvalues, torus_logdet_exact};
    use crate::presets::BeltramiPreset;

    fn torus(n: usize, z: Complex64) -> ComplexGrid {
        make_torus_grid(z, n).unwrap()
    }

    fn coeff(preset: &BeltramiPreset, grid: &ComplexGrid) -> BeltramiCoefficient {
        BeltramiCoefficient::new(preset.sample(grid).unwrap(), SupportKind::Periodic).unwrap()
    }

    fn diag_matrix(entries: &[Complex64]) -> Array2<Complex64> {
        let n = entries.len();
        let mut a = Array2::zeros((n, n));
        for (i, &e) in entries.iter().enumerate() {
            a[[i, i]] = e;
        }
        a
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn matrix_reproduces_apply_on_random_fields() {
        let z = c(0.3, 1.1);
        let grid = torus(16, z);
        let mu = coeff(
            &BeltramiPreset::RandomBand {
                seed: 5,
                band: 3,
                sup: 0.35,
            },
            &grid,
        );
        let nu = coeff(
            &BeltramiPreset::Fourier {
                m: 1,
                k: -1,
                amp: c(0.12, 0.08),
            },
            &grid,
        );
        let op =
            crate::operator::solve_delta_mn(&mu, &nu, &SolveOptions::default()).unwrap();
        let a = discretize(&op, 16).unwrap();

        // Random trigonometric field, two routes to forward(apply(u)).
        let u = SampledField::from_fn(grid.clone(), |p| {
            (c(0.0, 2.0 * PI) * (2.0 * p.re - 3.0 * p.im)).exp()
                + 0.3 * (c(0.0, 2.0 * PI) * (p.re + p.im)).exp()
        });
        let mut fft = Fft2::new(16);
        let mut u_hat = u.values().to_vec();
        fft.forward(&mut u_hat);
        let mut want = op.apply(&u).unwrap().into_values();
        fft.forward(&mut want);

        let scale = want.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut worst = 0.0_f64;
        for row in 0..256 {
            let mut acc = c(0.0, 0.0);
            for col in 0..256 {
                acc += a[[row, col]] * u_hat[col];
            }
            worst = worst.max((acc - want[row]).norm());
        }
        assert!(worst <= 1e-12 * scale, "matrix vs apply: {:.3e}", worst / scale);
    }

    #[test]
    fn zero_coefficients_discretize_to_the_diagonal_mode_multipliers() {
        let grid = torus(8, c(0.0, 1.0));
        let zero = coeff(&BeltramiPreset::Constant { value: c(0.0, 0.0) }, &grid);
        let op =
            crate::operator::solve_delta_mn(&zero, &zero, &SolveOptions::default()).unwrap();
        let a = discretize(&op, 8).unwrap();
        let mut off = 0.0_f64;
        let mut diag_err = 0.0_f64;
        for row in 0..64 {
            for col in 0..64 {
                if row == col {
                    let m = crate::fft::signed_freq(col % 8, 8) as f64;
                    let k = crate::fft::signed_freq(col / 8, 8) as f64;
                    let want = -PI * PI * (m * m + k * k);
                    diag_err = diag_err.max((a[[row, col]] - want).norm());
                } else {
                    off = off.max(a[[row, col]].norm());
                }
            }
        }
        assert!(diag_err < 1e-10, "diagonal entries: {diag_err:.3e}");
        assert!(off < 1e-10, "off-diagonal mass: {off:.3e}");
    }

    #[test]
    fn constant_real_coefficient_gives_a_hermitian_matrix() {
        let grid = torus(16, c(0.2, 0.9));
        let mu = coeff(&BeltramiPreset::Constant { value: c(0.35, 0.0) }, &grid);
        let op =
            crate::operator::solve_delta_mn(&mu, &mu, &SolveOptions::default()).unwrap();
        let a = discretize(&op, 16).unwrap();
        let norm = frobenius(&a);
        let mut defect = 0.0_f64;
        for i in 0..256 {
            for j in 0..=i {
                defect = defect.max((a[[i, j]] - a[[j, i]].conj()).norm());
            }
        }
        assert!(defect <= 1e-12 * norm, "hermiticity: {:.3e}", defect / norm);
    }

    #[test]
    fn constants_are_annihilated() {
        let grid = torus(12, c(0.1, 1.3));
        let mu = coeff(
            &BeltramiPreset::RandomBand {
                seed: 3,
                band: 2,
                sup: 0.3,
            },
            &grid,
        );
        let op =
            crate::operator::solve_delta_mn(&mu, &mu, &SolveOptions::default()).unwrap();
        let a = discretize(&op, 12).unwrap();
        let norm = frobenius(&a);
        // Column of the constant Fourier mode (frequency (0, 0) sits at
        // index 0): every term carries a derivative, so it must vanish.
        let mut col0 = 0.0_f64;
        for row in 0..144 {
            col0 = col0.max(a[[row, 0]].norm());
        }
        assert!(col0 <= 1e-12 * norm, "constant column: {:.3e}", col0 / norm);
    }

    #[test]
    fn cap_and_flavor_gates_hold() {
        let grid = torus(128, c(0.0, 1.0));
        let zero = coeff(&BeltramiPreset::Constant { value: c(0.0, 0.0) }, &grid);
        let op =
            crate::operator::solve_delta_mn(&zero, &zero, &SolveOptions::default()).unwrap();
        match discretize(&op, 128) {
            Err(Error::MatrixTooLarge { n, cap }) => {
                assert_eq!(n, 128 * 128);
                assert_eq!(cap, DISCRETIZE_CAP);
            }
            other => panic!("expected the cap error, got {other:?}"),
        }
        match discretize(&op, 64) {
            Err(Error::BadResolution(_, _)) => {}
            other => panic!("expected a resolution mismatch, got {other:?}"),
        }
    }

    #[test]
    fn branch_sum_matches_the_diagonal_example() {
        let a = diag_matrix(&[c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        let spec = eigen_spectrum(&a, PI, 0.5).unwrap();
        spec.expect_kernel(1).unwrap();
        assert!(spec.residual_bound <= 1e-12);
        let det = log_det_branch(&spec).unwrap();
        assert!((det.log_det - c(6.0_f64.ln(), 0.0)).norm() < 1e-12);
        assert_eq!(det.branch_index, 0);
        assert_eq!(det.method, DetMethod::MatrixBranch);
    }

    #[test]
    fn cut_conflicts_are_refused_and_resolved_by_rotating_theta() {
        let a = diag_matrix(&[c(0.0, 0.0), c(-1.0, 0.0), c(2.0, 0.0)]);
        match eigen_spectrum(&a, PI, 0.5) {
            Err(Error::CutRayConflict { theta, .. }) => assert_eq!(theta, PI),
            other => panic!("expected a cut conflict, got {other:?}"),
        }
        let spec = eigen_spectrum(&a, 0.5 * PI, 0.5).unwrap();
        let det = log_det_branch(&spec).unwrap();
        // arg(-1) folded into (pi/2 - 2 pi, pi/2] is -pi.
        assert!((det.log_det - c(2.0_f64.ln(), -PI)).norm() < 1e-12);
        assert_eq!(det.branch_index, -1);
    }

    #[test]
    fn different_cuts_differ_by_exact_multiples_of_two_pi_i() {
        let entries = [
            c(0.0, 0.0),
            c(2.0, 1.0),
            c(1.5, -2.0),
            c(-0.3, 2.4),
            c(-1.1, -0.7),
            c(3.0, 0.4),
        ];
        let a = diag_matrix(&entries);
        let spec = eigen_spectrum(&a, PI, 0.1).unwrap();
        let thetas = [PI, 0.4 * PI, 1.7 * PI];
        let dets: Vec<Complex64> = thetas
            .iter()
            .map(|&t| log_det_branch(&spec.with_cut(t).unwrap()).unwrap().log_det)
            .collect();
        for i in 0..dets.len() {
            for j in 0..i {
                let gap = dets[i] - dets[j];
                assert!(gap.re.abs() < 1e-12, "real parts must agree");
                let windings = gap.im / (2.0 * PI);
                assert!(
                    (windings - windings.round()).abs() < 1e-12,
                    "cut change must quantize: {windings}"
                );
            }
        }
    }

    #[test]
    fn flat_diagonal_spectrum_matches_the_mode_oracle() {
        let z = c(0.3, 1.1);
        let grid = torus(16, z);
        let zero = coeff(&BeltramiPreset::Constant { value: c(0.0, 0.0) }, &grid);
        let op =
            crate::operator::solve_delta_mn(&zero, &zero, &SolveOptions::default()).unwrap();
        let a = spectral_matrix(&op, 16).unwrap();
        let spec = eigen_spectrum(&a, PI, 1.0).unwrap();
        spec.expect_kernel(1).unwrap();

        // Well inside the band the dense eigenvalues and the exact dual
        // lattice agree to solver precision.
        let oracle = torus_eigenvalues(z, 70.0).unwrap();
        for (got, want) in spec.eigenvalues[1..].iter().zip(&oracle[1..]) {
            if *want > 60.0 {
                break;
            }
            assert!(
                (got - c(*want, 0.0)).norm() <= 1e-10 * want,
                "mode mismatch: {got} vs {want}"
            );
        }
    }

    #[test]
    fn fourier_route_certifies_the_constant_coefficient_case() {
        let z = c(0.2, 1.4);
        let grid = torus(16, z);
        let mu = coeff(&BeltramiPreset::Constant { value: c(0.22, -0.1) }, &grid);
        let op =
            crate::operator::solve_delta_mn(&mu, &mu, &SolveOptions::default()).unwrap();
        let a = spectral_matrix(&op, 16).unwrap();
        let fast = eigen_spectrum_fourier(&a, PI, 1.0).unwrap();
        let dense = eigen_spectrum(&a, PI, 1.0).unwrap();
        fast.expect_kernel(1).unwrap();
        for (x, y) in fast.eigenvalues.iter().zip(&dense.eigenvalues) {
            assert!((x - y).norm() <= 1e-9 * (1.0 + x.norm()));
        }
        // Self-adjointness of the diagonal member: real positive spectrum.
        for lambda in &fast.eigenvalues[1..] {
            assert!(lambda.im.abs() <= 1e-9 * lambda.norm());
            assert!(lambda.re > 0.0);
        }
    }

    #[test]
    fn zeta_value_matches_the_eta_oracle() {
        for &z in &[c(0.0, 1.0), c(0.5, 1.0), c(0.0, 0.5)] {
            let got = zeta_logdet_torus(z).unwrap();
            let want = torus_logdet_exact(z).unwrap();
            assert_eq!(got.method, DetMethod::ZetaExactTorus);
            assert!(
                (got.log_det.re - want).abs() <= 1e-9 * want.abs(),
                "zeta vs eta at {z}: {} vs {}",
                got.log_det.re,
                want
            );
            assert_eq!(got.log_det.im, 0.0);
        }
    }

    #[test]
    fn zeta_value_is_periodic_in_the_modulus() {
        let a = zeta_logdet_torus(c(0.3, 1.2)).unwrap().log_det.re;
        let b = zeta_logdet_torus(c(1.3, 1.2)).unwrap().log_det.re;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zeta_domain_gates_hold() {
        assert!(matches!(
            zeta_logdet_torus(c(0.0, 20.0)),
            Err(Error::ModulusOutOfRange(_, _, _))
        ));
        assert!(matches!(
            zeta_logdet_torus(c(0.0, 0.04)),
            Err(Error::ModulusOutOfRange(_, _, _))
        ));
        assert!(matches!(
            zeta_logdet_torus(c(3.0, 0.02)),
            Err(Error::OutsideDomain(_, _))
        ));
        assert!(matches!(
            zeta_logdet_torus(c(1.0, -1.0)),
            Err(Error::InvalidModulus(_))
        ));
    }

    #[test]
    fn variation_matches_the_closed_form_diagonal_family() {
        let mut family = |s: f64, _t: f64| -> Result<Array2<Complex64>> {
            Ok(diag_matrix(&[c(1.0 + s, 0.0), c(2.0, 0.0), c(3.0, 0.0)]))
        };
        let report = variation_check(&mut family, 0.1, 0.0, 1e-3, PI, 0.5).unwrap();
        let want = 1.0 / 1.1;
        assert!(
            (report.fd - c(want, 0.0)).norm() < 1e-10,
            "fd: {}",
            report.fd
        );
        assert!((report.trace - c(want, 0.0)).norm() < 1e-12);
        assert!(report.defect < 1e-10, "defect {:.3e}", report.defect);
    }

    #[test]
    fn variation_vanishes_for_constant_families() {
        let mut family = |_s: f64, _t: f64| -> Result<Array2<Complex64>> {
            Ok(diag_matrix(&[c(0.0, 0.0), c(1.0, 1.0), c(2.0, -0.5)]))
        };
        let report = variation_check(&mut family, 0.0, 0.0, 1e-3, PI, 0.1).unwrap();
        // Identical stencil values cancel up to non-associative rounding of
        // the 1-8-8-1 weights, then get divided by 12 h.
        assert!(report.fd.norm() < 1e-12, "fd {:.3e}", report.fd.norm());
        assert!(report.trace.norm() < 1e-14);
        assert!(report.defect < 1e-12);
    }

    #[test]
    fn variation_refuses_to_difference_across_the_cut() {
        // One eigenvalue swings through the cut at theta = pi inside the
        // stencil.
        let mut family = |s: f64, _t: f64| -> Result<Array2<Complex64>> {
            let swing = Complex64::from_polar(1.0, PI * (0.999 + 10.0 * s));
            Ok(diag_matrix(&[c(0.0, 0.0), swing, c(2.0, 0.0)]))
        };
        match variation_check(&mut family, 0.0, 0.0, 1e-3, PI, 0.5) {
            Err(Error::CutRayConflict { .. }) | Err(Error::NotAdmissible(_)) => {}
            other => panic!("expected a cut crossing error, got {other:?}"),
        }
    }

    #[test]
    fn variation_refuses_a_kernel_crossing() {
        // An eigenvalue shrinks through the kernel radius inside the
        // stencil.
        let mut family = |s: f64, _t: f64| -> Result<Array2<Complex64>> {
            Ok(diag_matrix(&[c(0.0, 0.0), c(0.5 + 40.0 * s, 0.0), c(2.0, 0.0)]))
        };
        match variation_check(&mut family, 0.0, 0.0, 1e-2, PI, 0.5) {
            Err(Error::KernelCrossing(_, _)) => {}
            other => panic!("expected a kernel crossing error, got {other:?}"),
        }
    }

    #[test]
    fn variation_certifies_the_operator_family() {
        // d/ds log det of the assembled family along a Fourier direction,
        // dense route at a small size.
        let z = c(0.0, 1.0);
        let grid = torus(12, z);
        let dir = BeltramiPreset::Fourier {
            m: 1,
            k: 0,
            amp: c(0.05, 0.0),
        }
        .sample(&grid)
        .unwrap();
        let base = BeltramiPreset::Constant { value: c(0.1, 0.0) }.sample(&grid).unwrap();
        let nu = coeff(&BeltramiPreset::Constant { value: c(0.1, 0.0) }, &grid);
        let opts = SolveOptions::default();
        let mut family = |s: f64, _t: f64| -> Result<Array2<Complex64>> {
            let mu = BeltramiCoefficient::new(
                base.zip_map(&dir, |a, b| a + s * b)?,
                SupportKind::Periodic,
            )?;
            let op = crate::operator::solve_delta_mn(&mu, &nu, &opts)?;
            spectral_matrix(&op, 12)
        };
        let report = variation_check(&mut family, 0.0, 0.0, 1e-4, PI, 1.0).unwrap();
        assert!(
            report.defect <= 1e-6 * (1.0 + report.trace.norm()),
            "variation defect {:.3e}",
            report.defect
        );
    }

    #[test]
    fn holomorphy_residual_is_small_and_the_diagonal_contrast_is_large() {
        let z = c(0.0, 1.0);
        let grid = torus(12, z);
        let mu = coeff(&BeltramiPreset::Constant { value: c(0.1, 0.0) }, &grid);
        let nu = coeff(&BeltramiPreset::Constant { value: c(0.1, 0.0) }, &grid);
        let dir = BeltramiPreset::Constant { value: c(0.05, 0.0) }.sample(&grid).unwrap();
        let zero_dir = BeltramiPreset::Constant { value: c(0.0, 0.0) }.sample(&grid).unwrap();
        let h = 1e-3;
        let opts = HolomorphyOptions::default();

        let report = det_holomorphy_check(&mu, &nu, &dir, &zero_dir, h, &opts).unwrap();
        assert!(report.res_s < 1e-4, "res_s {:.3e}", report.res_s);
        assert!(report.res_t < 1e-10, "frozen direction res_t {:.3e}", report.res_t);
        assert!(report.max_abs_arg < 1e-10);
        assert!(report.min_gap > 1.0);

        let both = det_holomorphy_check(&mu, &nu, &dir, &dir, h, &opts).unwrap();
        assert!(both.res_t < 1e-4, "res_t {:.3e}", both.res_t);

        // The one-parameter diagonal candidate s -> log det(mu + s d, mu + s d)
        // is genuinely non-holomorphic: its Cauchy-Riemann residual is the
        // t-side derivative magnitude, orders above the assembled family's.
        let solve = SolveOptions::default();
        let diagonal = |s: Complex64| -> Result<Complex64> {
            let m = BeltramiCoefficient::new(
                mu.field.zip_map(&dir, |a, b| a + s * b)?,
                SupportKind::Periodic,
            )?;
            let op = crate::operator::solve_delta_mn(&m, &m, &solve)?;
            let a = spectral_matrix(&op, 12)?;
            let spec = eigen_spectrum(&a, PI, 1.0)?;
            Ok(log_det_branch(&spec)?.log_det)
        };
        let res_diag = try_cr_residual(diagonal, c(0.0, 0.0), h).unwrap();
        assert!(
            res_diag > 10.0 * report.res_s.max(1e-12),
            "diagonal candidate must fail by 10x: {:.3e} vs {:.3e}",
            res_diag,
            report.res_s
        );
    }

    #[test]
    fn zero_directions_give_exactly_zero_residuals() {
        let grid = torus(12, c(0.0, 1.0));
        let mu = coeff(&BeltramiPreset::Constant { value: c(0.12, 0.04) }, &grid);
        let nu = coeff(&BeltramiPreset::Constant { value: c(0.1, -0.02) }, &grid);
        let zero = BeltramiPreset::Constant { value: c(0.0, 0.0) }.sample(&grid).unwrap();
        let report =
            det_holomorphy_check(&mu, &nu, &zero, &zero, 1e-3, &HolomorphyOptions::default())
                .unwrap();
        assert_eq!(report.res_s, 0.0);
        assert_eq!(report.res_t, 0.0);
    }

    #[test]
    fn inadmissible_stencils_name_the_failed_gate() {
        let grid = torus(12, c(0.0, 1.0));
        let mu = coeff(&BeltramiPreset::Constant { value: c(0.9, 0.0) }, &grid);
        let nu = coeff(&BeltramiPreset::Constant { value: c(0.0, 0.0) }, &grid);
        let dir = SampledField::from_fn(grid.clone(), |_| c(1.0, 0.0));
        let zero = BeltramiPreset::Constant { value: c(0.0, 0.0) }.sample(&grid).unwrap();
        // mu + h * 1 crosses the contraction bound at the stencil edge.
        match det_holomorphy_check(&mu, &nu, &dir, &zero, 0.2, &HolomorphyOptions::default()) {
            Err(Error::DilatationTooLarge(_)) => {}
            other => panic!("expected the contraction gate, got {other:?}"),
        }
    }
}
