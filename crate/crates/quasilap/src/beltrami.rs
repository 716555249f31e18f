//! Normalized solutions of the Beltrami equation `dbar w = mu dw`.
//!
//! Two solvers share the singular-integral fixed point
//! `h = mu (1 + S h)`, `w = p + C h`, where `C` is the Cauchy transform
//! (the inverse of `dbar`) and `S = d C` the Beurling transform, so that
//! `dbar w = h` and `dw = 1 + S h`:
//!
//! * on a torus `C / (Z + zZ)` the transforms are Fourier multipliers in
//!   the lattice frame; the mean of `h` cannot be inverted and becomes the
//!   affine part `w = p + mean conj(p) + periodic`, which maps the lattice
//!   `Z + zZ` to `Z + z'Z` with `z' = (z + mean conj(z))/(1 + mean)` after
//!   the normalization `w(0) = 0`, `w(p + 1) = w(p) + 1`;
//! * on the plane, compactly supported coefficients are solved on a padded
//!   box with kernels truncated at radius `D`: the truncated Cauchy kernel
//!   has the exact transform `-2i conj(zeta) (1 - J0(|zeta| D)) / |zeta|^2`
//!   and `S` is defined as `d C` spectrally, so `dw = 1 + S h` holds as an
//!   identity of trigonometric polynomials. With box side `L`, padding
//!   factor 3 and `sqrt(2) L <= D <= (3 - sqrt(2)) L`, every core-to-core
//!   interaction sees the untruncated kernel and no periodic image, so the
//!   discrete solve is the exact (midpoint-quadrature) singular integral
//!   equation. The price is the truncated operator bound
//!   `sup |1 - J0| = 1.4028`, so plane solves require
//!   `sup |mu| < 1/1.4028`; larger dilatations diverge and are rejected.
//!
//! The two-sided problem takes data `(mu, nu)` on the upper half-plane and
//! solves with the reflected coefficient `conj(nu(conj(p)))` below the real
//! axis, after a radial C-infinity cutoff confining everything to the box.
//! Because the reflection `R[F](p) = conj(F(conj(p)))` is an exact symmetry
//! of the grid, of every multiplier used here, and of the normalization
//! points `0, 1`, the solutions obey `f_{nu,mu} = R[f_{mu,nu}]` to roundoff,
//! not merely to solver tolerance.
//!
//! Every map carries certificates: the sampled equation residual
//! `sup |dbar w - mu dw|`, iteration count, and contraction estimate.

use crate::error::{Error, Result};
use crate::fft::{signed_freq, Fft2};
use crate::grid::{
    lagrange6_periodic, make_plane_grid, make_torus_grid, wirtinger_multipliers,
    ComplexGrid, SampledField, Wirtinger,
};
use crate::presets::BeltramiPreset;
use crate::special::bessel_j0;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Sup of `|1 - J0|`, the operator bound of the truncated plane transforms.
pub const TRUNCATED_KERNEL_BOUND: f64 = 1.4028;

/// Where a coefficient lives; drives which solver accepts it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportKind {
    /// Periodic data on a torus grid.
    Periodic,
    /// Compactly supported within `|p| <= radius`.
    Compact { radius: f64 },
    /// No decay assumption (plane solves will cut it off).
    Global,
}

/// A validated Beltrami coefficient: samples with `sup |mu| < 1`.
#[derive(Debug, Clone)]
pub struct BeltramiCoefficient {
    pub field: SampledField,
    pub support: SupportKind,
    sup: f64,
}

impl BeltramiCoefficient {
    pub fn new(field: SampledField, support: SupportKind) -> Result<Self> {
        let sup = field.sup_norm();
        if !(sup < 1.0) || !sup.is_finite() {
            return Err(Error::DilatationTooLarge(sup));
        }
        Ok(BeltramiCoefficient { field, support, sup })
    }

    /// Sampled dilatation `sup |mu|`.
    pub fn dilatation(&self) -> f64 {
        self.sup
    }
}

/// Normalization attached to a solved map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// Torus maps: `w(0) = 0`, `w(p + 1) = w(p) + 1`,
    /// `w(p + z) = w(p) + z'`.
    Lattice { new_modulus: Complex64 },
    /// Plane maps fixing `0` and `1` (and infinity through linear growth).
    FixZeroOne,
    /// Plane maps with `w(0) = 0` and `w = O(1/p)` plus identity growth
    /// removed (used for inhomogeneous solves).
    Decay,
}

/// Map value and first derivatives at a point.
#[derive(Debug, Clone, Copy)]
pub struct MapJet {
    pub w: Complex64,
    pub d: Complex64,
    pub dbar: Complex64,
}

#[derive(Debug, Clone)]
enum MapInternals {
    Torus {
        mean: Complex64,
        /// `(W - W(0)) / (1 + mean)`: the lattice-periodic part of the map.
        periodic_part: Vec<Complex64>,
    },
    Plane(PlaneEval),
}

#[derive(Debug, Clone)]
struct PlaneEval {
    l: f64,
    n: usize,
    /// Unnormalized padded-grid samples of `C h` (periodic on the padded box).
    displacement: Vec<Complex64>,
    /// Unnormalized `1 + S h` on the padded grid.
    d_pad: Vec<Complex64>,
    /// Unnormalized `dbar (C h)` on the padded grid.
    dbar_pad: Vec<Complex64>,
    w0: Complex64,
    scale: Complex64,
}

/// A solved, normalized quasiconformal map with its certificates.
#[derive(Debug, Clone)]
pub struct QuasiconformalMap {
    map: SampledField,
    d: SampledField,
    dbar: SampledField,
    normalization: Normalization,
    residual: f64,
    iterations: usize,
    contraction: f64,
    internals: MapInternals,
}

impl QuasiconformalMap {
    /// Samples of the normalized map on the solve grid.
    pub fn map(&self) -> &SampledField {
        &self.map
    }

    /// Samples of `d w`.
    pub fn d(&self) -> &SampledField {
        &self.d
    }

    /// Samples of `dbar w`.
    pub fn dbar(&self) -> &SampledField {
        &self.dbar
    }

    pub fn grid(&self) -> &ComplexGrid {
        self.map.grid()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Sampled equation residual `sup |dbar w - mu dw|` of the returned,
    /// normalized fields (for two-sided solves: over the uncut region).
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// A priori contraction rate of the fixed-point iteration.
    pub fn contraction(&self) -> f64 {
        self.contraction
    }

    /// Modulus of the image torus for lattice-normalized maps.
    pub fn new_modulus(&self) -> Result<Complex64> {
        match self.normalization {
            Normalization::Lattice { new_modulus } => Ok(new_modulus),
            _ => Err(Error::GridKindMismatch {
                expected: "torus",
                got: self.map.grid().kind().name(),
            }),
        }
    }

    /// Smallest sampled `|dw|`; positivity witnesses local injectivity.
    pub fn min_abs_partial(&self) -> f64 {
        self.d.values().iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    /// Evaluates map and derivatives at an arbitrary point by degree-5
    /// interpolation of the periodic parts (torus: in lattice coordinates;
    /// plane: on the padded box, valid while `p` stays inside it).
    pub fn eval(&self, p: Complex64) -> Result<MapJet> {
        match &self.internals {
            MapInternals::Torus { mean, periodic_part } => {
                let grid = self.map.grid();
                let lat = grid.lattice()?;
                let n = grid.n();
                let (x1, x2) = lat.lattice_coords(p);
                let (xi, yi) = (x1 * n as f64, x2 * n as f64);
                let denom = Complex64::new(1.0, 0.0) + mean;
                let affine = (p + mean * p.conj()) / denom;
                let w = affine + lagrange6_periodic(periodic_part, n, xi, yi);
                let d = lagrange6_periodic(self.d.values(), n, xi, yi);
                let dbar = lagrange6_periodic(self.dbar.values(), n, xi, yi);
                Ok(MapJet { w, d, dbar })
            }
            MapInternals::Plane(pe) => {
                let pn = 3 * pe.n;
                let h = pe.l / pe.n as f64;
                let half = 1.5 * pe.l;
                if p.re.abs() >= half || p.im.abs() >= half {
                    return Err(Error::OutsideDomain(p, "padded solve box".into()));
                }
                let xi = (p.re + half) / h;
                let yi = (p.im + half) / h;
                let disp = lagrange6_periodic(&pe.displacement, pn, xi, yi);
                let d_raw = lagrange6_periodic(&pe.d_pad, pn, xi, yi);
                let dbar_raw = lagrange6_periodic(&pe.dbar_pad, pn, xi, yi);
                Ok(MapJet {
                    w: (p + disp - pe.w0) / pe.scale,
                    d: d_raw / pe.scale,
                    dbar: dbar_raw / pe.scale,
                })
            }
        }
    }
}

/// Options for the torus fixed point.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Target for the sampled equation residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-12, max_iter: 800 }
    }
}

/// Solves `dbar w = mu dw` on the torus carrying `mu`, normalized to fix
/// `0` and map the lattice to the lattice of the returned modulus.
///
/// A constant coefficient converges in one step to the exact affine map
/// `(p + c conj(p)) / (1 + c)`; band-limited coefficients converge at rate
/// `sup |mu|` with spectrally small residuals.
pub fn solve_torus(
    coeff: &BeltramiCoefficient,
    opts: &SolveOptions,
) -> Result<QuasiconformalMap> {
    let grid = coeff.field.grid().clone();
    let z = grid.modulus()?;
    let n = grid.n();
    let k = coeff.dilatation();
    if k >= 1.0 - 1e-9 {
        return Err(Error::DilatationTooLarge(k));
    }
    let d_mult = wirtinger_multipliers(z, n, Wirtinger::D);
    let dbar_mult = wirtinger_multipliers(z, n, Wirtinger::DBar);
    // S0 = d dbar^{-1} with the non-invertible mean mode removed.
    let mut s_mult = vec![Complex64::default(); n * n];
    let mut inv_dbar = vec![Complex64::default(); n * n];
    for i in 1..n * n {
        s_mult[i] = d_mult[i] / dbar_mult[i];
        inv_dbar[i] = 1.0 / dbar_mult[i];
    }
    let mu = coeff.field.values();
    let mut fft = Fft2::new(n);
    let mut h: Vec<Complex64> = mu.to_vec();
    let mut work = vec![Complex64::default(); n * n];
    let tol_inner = opts.tol * (1.0 - k) / 2.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        work.copy_from_slice(&h);
        fft.forward(&mut work);
        for (v, s) in work.iter_mut().zip(&s_mult) {
            *v *= s;
        }
        fft.inverse(&mut work);
        let mut delta: f64 = 0.0;
        for i in 0..n * n {
            let new = mu[i] * (Complex64::new(1.0, 0.0) + work[i]);
            delta = delta.max((new - h[i]).norm());
            h[i] = new;
        }
        if delta <= tol_inner {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SolverDiverged {
            residual: tol_inner,
            iterations,
            rate: k,
        });
    }
    // Final assembly from the converged density.
    let mut h_hat = h.clone();
    fft.forward(&mut h_hat);
    let mean = h_hat[0] / (n * n) as f64;
    let mut sh = h_hat.clone();
    for (v, s) in sh.iter_mut().zip(&s_mult) {
        *v *= s;
    }
    fft.inverse(&mut sh);
    let mut w_per = h_hat;
    for (v, s) in w_per.iter_mut().zip(&inv_dbar) {
        *v *= s;
    }
    fft.inverse(&mut w_per);
    let denom = Complex64::new(1.0, 0.0) + mean;
    let w0 = w_per[0];
    let periodic_part: Vec<Complex64> =
        w_per.iter().map(|&v| (v - w0) / denom).collect();
    let points = grid.points();
    let map_values: Vec<Complex64> = (0..n * n)
        .map(|i| (points[i] + mean * points[i].conj()) / denom + periodic_part[i])
        .collect();
    let d_values: Vec<Complex64> =
        sh.iter().map(|&v| (Complex64::new(1.0, 0.0) + v) / denom).collect();
    let dbar_values: Vec<Complex64> = h.iter().map(|&v| v / denom).collect();
    let residual = (0..n * n)
        .map(|i| (dbar_values[i] - mu[i] * d_values[i]).norm())
        .fold(0.0, f64::max);
    let new_modulus = (z + mean * z.conj()) / denom;
    Ok(QuasiconformalMap {
        map: SampledField::new(grid.clone(), map_values)?,
        d: SampledField::new(grid.clone(), d_values)?,
        dbar: SampledField::new(grid, dbar_values)?,
        normalization: Normalization::Lattice { new_modulus },
        residual,
        iterations,
        contraction: k,
        internals: MapInternals::Torus { mean, periodic_part },
    })
}

/// Options for plane solves on the padded box.
#[derive(Debug, Clone, Copy)]
pub struct PlaneSolveOptions {
    /// Side of the core box, centered at the origin.
    pub side: f64,
    /// Core samples per side; must be even with `n / side` an integer so
    /// the normalization points 0 and 1 are grid points.
    pub n: usize,
    /// Kernel truncation radius as a multiple of `side`; must lie in
    /// `[sqrt(2), 3 - sqrt(2)]` so core interactions are exact.
    pub trunc_factor: f64,
    /// The radial cutoff is 1 inside `plateau * side` and 0 outside
    /// `edge * side`.
    pub plateau: f64,
    pub edge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PlaneSolveOptions {
    fn default() -> Self {
        PlaneSolveOptions {
            side: 8.0,
            n: 256,
            trunc_factor: 1.5,
            plateau: 0.35,
            edge: 0.47,
            tol: 1e-12,
            max_iter: 400,
        }
    }
}

/// Precomputed multipliers for one padded-box geometry.
struct PlaneCtx {
    l: f64,
    n: usize,
    pn: usize,
    fft: Fft2,
    /// `conj(zeta)^2 (1 - J0(rho D)) / rho^2`: the truncated Beurling
    /// transform, defined as `d` of the truncated Cauchy transform.
    beurling: Vec<Complex64>,
    /// `-2i conj(zeta) (1 - J0(rho D)) / rho^2`: truncated Cauchy kernel.
    cauchy: Vec<Complex64>,
    /// `1 - J0(rho D)`: `dbar` of the truncated Cauchy transform.
    dbar_filter: Vec<f64>,
}

impl PlaneCtx {
    fn new(opts: &PlaneSolveOptions) -> Result<Self> {
        let l = opts.side;
        let n = opts.n;
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::BadWindow(format!("bad box side {l}")));
        }
        let per_unit = n as f64 / l;
        if n % 2 != 0 || (per_unit - per_unit.round()).abs() > 1e-9 || n < 4 {
            return Err(Error::BadResolution(
                n,
                "plane solves need even n with n/side an integer",
            ));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        if opts.trunc_factor < sqrt2 || opts.trunc_factor > 3.0 - sqrt2 {
            return Err(Error::BadWindow(format!(
                "truncation factor {} outside [sqrt(2), 3 - sqrt(2)]",
                opts.trunc_factor
            )));
        }
        if !(opts.plateau > 0.0 && opts.edge > opts.plateau && opts.edge < 0.5) {
            return Err(Error::BadWindow(format!(
                "need 0 < plateau < edge < 0.5, got {} and {}",
                opts.plateau, opts.edge
            )));
        }
        let pn = 3 * n;
        let period = 3.0 * l;
        let d_trunc = opts.trunc_factor * l;
        let mut beurling = vec![Complex64::default(); pn * pn];
        let mut cauchy = vec![Complex64::default(); pn * pn];
        let mut dbar_filter = vec![0.0; pn * pn];
        for row in 0..pn {
            let k = signed_freq(row, pn) as f64;
            for col in 0..pn {
                let m = signed_freq(col, pn) as f64;
                // The zero mode is not invertible; the self-paired Nyquist
                // stripes are zeroed so every multiplier commutes exactly
                // with the reflection conj(F(conj p)), which pairs bins
                // (m, k) and (-m, k). Both carry only spectral-tail mass.
                if (row == 0 && col == 0) || 2 * row == pn || 2 * col == pn {
                    continue;
                }
                let zeta = Complex64::new(m, k) * (2.0 * PI / period);
                let rho2 = zeta.norm_sqr();
                let filter = 1.0 - bessel_j0(rho2.sqrt() * d_trunc);
                let idx = row * pn + col;
                beurling[idx] = zeta.conj() * zeta.conj() * (filter / rho2);
                cauchy[idx] =
                    Complex64::new(0.0, -2.0) * zeta.conj() * (filter / rho2);
                dbar_filter[idx] = filter;
            }
        }
        Ok(PlaneCtx { l, n, pn, fft: Fft2::new(pn), beurling, cauchy, dbar_filter })
    }

    /// Padded sample point for padded indices `(row, col)`.
    fn point(&self, row: usize, col: usize) -> Complex64 {
        let h = self.l / self.n as f64;
        let half = 1.5 * self.l;
        Complex64::new(-half + col as f64 * h, -half + row as f64 * h)
    }

    fn padded_index_of_core(&self, row: usize, col: usize) -> usize {
        (row + self.n) * self.pn + (col + self.n)
    }

    /// Index of the padded grid point at the complex value `j_units` (an
    /// integer point on the real axis).
    fn axis_index(&self, j_units: i64) -> usize {
        let per_unit = (self.n as f64 / self.l).round() as i64;
        let mid = (3 * self.n / 2) as i64;
        let col = mid + j_units * per_unit;
        (self.pn / 2) * self.pn + col as usize
    }
}

fn apply_multiplier(
    fft: &mut Fft2,
    h_hat: &[Complex64],
    mult: &[Complex64],
) -> Vec<Complex64> {
    let mut out: Vec<Complex64> =
        h_hat.iter().zip(mult).map(|(&v, &s)| v * s).collect();
    fft.inverse(&mut out);
    out
}

fn apply_real_multiplier(
    fft: &mut Fft2,
    h_hat: &[Complex64],
    mult: &[f64],
) -> Vec<Complex64> {
    let mut out: Vec<Complex64> =
        h_hat.iter().zip(mult).map(|(&v, &s)| v * s).collect();
    fft.inverse(&mut out);
    out
}

/// Raw converged fixed point on the padded grid.
struct RawPlaneSolve {
    sh: Vec<Complex64>,
    ch: Vec<Complex64>,
    dbar_ch: Vec<Complex64>,
    iterations: usize,
}

/// Runs `h = c (S h) + rhs` to convergence (the homogeneous problem passes
/// `rhs = c`, matching `h = c (1 + S h)` with `h` absorbed support of `c`).
fn plane_fixed_point(
    ctx: &mut PlaneCtx,
    c: &[Complex64],
    rhs: &[Complex64],
    sup_c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RawPlaneSolve> {
    let rate = TRUNCATED_KERNEL_BOUND * sup_c;
    if rate >= 0.99 {
        return Err(Error::PlaneDilatationTooLarge {
            got: sup_c,
            bound: 0.99 / TRUNCATED_KERNEL_BOUND,
        });
    }
    let m = ctx.pn * ctx.pn;
    let mut h = rhs.to_vec();
    let mut iterations = 0;
    let tol_inner = tol * (1.0 - rate).max(0.01) / 2.0;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    loop {
        iterations += 1;
        let mut h_hat = h.clone();
        ctx.fft.forward(&mut h_hat);
        let sh = apply_multiplier(&mut ctx.fft, &h_hat, &ctx.beurling);
        let mut delta: f64 = 0.0;
        for i in 0..m {
            let new = c[i] * sh[i] + rhs[i];
            delta = delta.max((new - h[i]).norm());
            h[i] = new;
        }
        if delta <= tol_inner {
            break;
        }
        if delta < best {
            best = delta;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if iterations >= max_iter || since_best > 60 {
            return Err(Error::SolverDiverged { residual: delta, iterations, rate });
        }
    }
    let mut h_hat = h;
    ctx.fft.forward(&mut h_hat);
    let sh = apply_multiplier(&mut ctx.fft, &h_hat, &ctx.beurling);
    let ch = apply_multiplier(&mut ctx.fft, &h_hat, &ctx.cauchy);
    let dbar_ch = apply_real_multiplier(&mut ctx.fft, &h_hat, &ctx.dbar_filter);
    Ok(RawPlaneSolve { sh, ch, dbar_ch, iterations })
}

/// C-infinity step: 0 for `t <= 0`, 1 for `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Radial cutoff: 1 for `r <= r0`, 0 for `r >= r1`.
fn radial_cutoff(r: f64, r0: f64, r1: f64) -> f64 {
    smooth_step((r1 - r) / (r1 - r0))
}

/// The solution of the two-sided problem together with its certificates.
#[derive(Debug, Clone)]
pub struct PairSolution {
    pub map: QuasiconformalMap,
    /// Equation residual over the whole core box, against the cutoff
    /// coefficient actually solved.
    pub residual_box: f64,
    /// Radius of the region where the cutoff is identically 1, so the
    /// solved equation is the uncut one; `map.residual()` certifies there.
    pub plateau_radius: f64,
}

/// Hatted coefficient of the pair `(mu, nu)`: `mu` above the real axis,
/// `conj(nu(conj(p)))` below, their average on it, times the radial cutoff.
fn hatted_coefficient(
    mu: &BeltramiPreset,
    nu: &BeltramiPreset,
    ctx: &PlaneCtx,
    opts: &PlaneSolveOptions,
) -> Result<(Vec<Complex64>, f64)> {
    let r0 = opts.plateau * opts.side;
    let r1 = opts.edge * opts.side;
    let mut c = vec![Complex64::default(); ctx.pn * ctx.pn];
    let mut sup: f64 = 0.0;
    for row in 0..ctx.pn {
        for col in 0..ctx.pn {
            let p = ctx.point(row, col);
            let eta = radial_cutoff(p.norm(), r0, r1);
            if eta == 0.0 {
                continue;
            }
            let value = if p.im > 0.0 {
                mu.eval_plane(p)?
            } else if p.im < 0.0 {
                nu.eval_plane(p.conj())?.conj()
            } else {
                (mu.eval_plane(p)? + nu.eval_plane(p)?.conj()) / 2.0
            };
            let v = value * eta;
            sup = sup.max(v.norm());
            c[row * ctx.pn + col] = v;
        }
    }
    Ok((c, sup))
}

/// Solves the two-sided problem for `f_{mu,nu}`: coefficient `mu` in the
/// upper half-plane, `conj(nu(conj(p)))` in the lower, normalized to fix
/// `0` and `1`. Presets must be plane-defined ([`BeltramiPreset::Bump`]
/// supported away from the cutoff zone, or constants).
pub fn solve_pair(
    mu: &BeltramiPreset,
    nu: &BeltramiPreset,
    opts: &PlaneSolveOptions,
) -> Result<PairSolution> {
    mu.validate()?;
    nu.validate()?;
    for preset in [mu, nu] {
        if let BeltramiPreset::Bump { center, radius, .. } = preset {
            let reach = center.norm() + radius;
            if reach >= opts.edge * opts.side {
                return Err(Error::SupportTooLarge {
                    radius: reach,
                    side: opts.side,
                });
            }
        }
    }
    let mut ctx = PlaneCtx::new(opts)?;
    let (c, sup_c) = hatted_coefficient(mu, nu, &ctx, opts)?;
    let raw = plane_fixed_point(&mut ctx, &c, &c, sup_c, opts.tol, opts.max_iter)?;
    assemble_pair(ctx, opts, c, raw)
}

fn assemble_pair(
    ctx: PlaneCtx,
    opts: &PlaneSolveOptions,
    c: Vec<Complex64>,
    raw: RawPlaneSolve,
) -> Result<PairSolution> {
    let one = Complex64::new(1.0, 0.0);
    let idx0 = ctx.axis_index(0);
    let idx1 = ctx.axis_index(1);
    let w0 = raw.ch[idx0];
    let scale = one + raw.ch[idx1] - w0;
    if scale.norm() < 0.1 {
        return Err(Error::DegenerateJacobian { index: idx1, value: scale.norm() });
    }
    let core = make_plane_grid(ctx.l, ctx.n)?;
    let n = ctx.n;
    let mut map_v = Vec::with_capacity(n * n);
    let mut d_v = Vec::with_capacity(n * n);
    let mut dbar_v = Vec::with_capacity(n * n);
    let mut residual_box: f64 = 0.0;
    let mut residual_uncut: f64 = 0.0;
    let r_plateau = opts.plateau * opts.side;
    for row in 0..n {
        for col in 0..n {
            let pad = ctx.padded_index_of_core(row, col);
            let p = core.point(row * n + col);
            let w = (p + raw.ch[pad] - w0) / scale;
            let d = (one + raw.sh[pad]) / scale;
            let dbar = raw.dbar_ch[pad] / scale;
            let r = (dbar - c[pad] * d).norm();
            residual_box = residual_box.max(r);
            if p.norm() <= r_plateau {
                residual_uncut = residual_uncut.max(r);
            }
            map_v.push(w);
            d_v.push(d);
            dbar_v.push(dbar);
        }
    }
    let d_pad: Vec<Complex64> = raw.sh.iter().map(|&v| one + v).collect();
    let map = QuasiconformalMap {
        map: SampledField::new(core.clone(), map_v)?,
        d: SampledField::new(core.clone(), d_v)?,
        dbar: SampledField::new(core, dbar_v)?,
        normalization: Normalization::FixZeroOne,
        residual: residual_uncut,
        iterations: raw.iterations,
        contraction: TRUNCATED_KERNEL_BOUND
            * c.iter().map(|v| v.norm()).fold(0.0, f64::max),
        internals: MapInternals::Plane(PlaneEval {
            l: ctx.l,
            n: ctx.n,
            displacement: raw.ch,
            d_pad,
            dbar_pad: raw.dbar_ch,
            w0,
            scale,
        }),
    };
    Ok(PairSolution { map, residual_box, plateau_radius: r_plateau })
}

impl PairSolution {
    /// Builds a field on the padded grid from the point and the normalized
    /// map jet there, takes its plain spectral Wirtinger derivatives on the
    /// padded torus, and evaluates field and derivatives at the requested
    /// points by degree-5 interpolation. Legitimate whenever the built
    /// field is smooth on the padded torus, which holds for anything
    /// assembled pointwise from the (trigonometric-polynomial) solve data
    /// and smooth functions of the point, e.g. the frame fields
    /// `1 / ((1 - mu nubar) df)` of compactly supported coefficients.
    pub(crate) fn field_with_derivatives(
        &self,
        build: &dyn Fn(Complex64, MapJet) -> Complex64,
        points: &[Complex64],
    ) -> Result<[Vec<Complex64>; 3]> {
        let pe = match &self.map.internals {
            MapInternals::Plane(pe) => pe,
            MapInternals::Torus { .. } => unreachable!("pair solves are plane maps"),
        };
        let n = pe.n;
        let pn = 3 * n;
        let h = pe.l / n as f64;
        let half = 1.5 * pe.l;
        let period = 3.0 * pe.l;
        let mut field = vec![Complex64::default(); pn * pn];
        for row in 0..pn {
            for col in 0..pn {
                let idx = row * pn + col;
                let p = Complex64::new(-half + col as f64 * h, -half + row as f64 * h);
                let jet = MapJet {
                    w: (p + pe.displacement[idx] - pe.w0) / pe.scale,
                    d: pe.d_pad[idx] / pe.scale,
                    dbar: pe.dbar_pad[idx] / pe.scale,
                };
                field[idx] = build(p, jet);
            }
        }
        let mut fft = Fft2::new(pn);
        let mut hat = field.clone();
        fft.forward(&mut hat);
        let mut d_hat = vec![Complex64::default(); pn * pn];
        let mut dbar_hat = vec![Complex64::default(); pn * pn];
        for row in 0..pn {
            let k = signed_freq(row, pn) as f64;
            for col in 0..pn {
                if 2 * row == pn || 2 * col == pn {
                    continue;
                }
                let m = signed_freq(col, pn) as f64;
                let zeta = Complex64::new(m, k) * (2.0 * PI / period);
                let idx = row * pn + col;
                let half_i = Complex64::new(0.0, 0.5);
                d_hat[idx] = hat[idx] * half_i * zeta.conj();
                dbar_hat[idx] = hat[idx] * half_i * zeta;
            }
        }
        fft.inverse(&mut d_hat);
        fft.inverse(&mut dbar_hat);
        let interp = |v: &[Complex64]| -> Result<Vec<Complex64>> {
            points
                .iter()
                .map(|&p| {
                    if p.re.abs() >= half || p.im.abs() >= half {
                        return Err(Error::OutsideDomain(p, "padded solve box".into()));
                    }
                    let xi = (p.re + half) / h;
                    let yi = (p.im + half) / h;
                    Ok(lagrange6_periodic(v, pn, xi, yi))
                })
                .collect()
        };
        Ok([interp(&field)?, interp(&d_hat)?, interp(&dbar_hat)?])
    }
}

/// Solves the inhomogeneous problem `dbar w = mu dw + sigma` for a
/// compactly supported smooth source `sigma` sampled on the core grid of
/// `opts`, normalized by `w(0) = 0`. Passing no coefficient solves
/// `dbar w = sigma`, i.e. computes the Cauchy transform of `sigma`.
pub fn solve_inhomogeneous(
    mu: Option<&BeltramiPreset>,
    sigma: &SampledField,
    opts: &PlaneSolveOptions,
) -> Result<QuasiconformalMap> {
    let mut ctx = PlaneCtx::new(opts)?;
    let core = make_plane_grid(opts.side, opts.n)?;
    if sigma.grid() != &core {
        return Err(Error::GridMismatch);
    }
    let n = ctx.n;
    let pn = ctx.pn;
    let mut rhs = vec![Complex64::default(); pn * pn];
    for row in 0..n {
        for col in 0..n {
            rhs[(row + n) * pn + (col + n)] = sigma.values()[row * n + col];
        }
    }
    let r0 = opts.plateau * opts.side;
    let r1 = opts.edge * opts.side;
    let mut c = vec![Complex64::default(); pn * pn];
    let mut sup_c: f64 = 0.0;
    if let Some(mu) = mu {
        mu.validate()?;
        for row in 0..pn {
            for col in 0..pn {
                let p = ctx.point(row, col);
                let eta = radial_cutoff(p.norm(), r0, r1);
                if eta == 0.0 {
                    continue;
                }
                let v = mu.eval_plane(p)? * eta;
                sup_c = sup_c.max(v.norm());
                c[row * pn + col] = v;
            }
        }
    }
    let raw = plane_fixed_point(&mut ctx, &c, &rhs, sup_c, opts.tol, opts.max_iter)?;
    let idx0 = ctx.axis_index(0);
    let w0 = raw.ch[idx0];
    let one = Complex64::new(1.0, 0.0);
    let mut map_v = Vec::with_capacity(n * n);
    let mut d_v = Vec::with_capacity(n * n);
    let mut dbar_v = Vec::with_capacity(n * n);
    let mut residual: f64 = 0.0;
    for row in 0..n {
        for col in 0..n {
            let pad = ctx.padded_index_of_core(row, col);
            let w = raw.ch[pad] - w0;
            let d = raw.sh[pad];
            let dbar = raw.dbar_ch[pad];
            residual = residual
                .max((dbar - c[pad] * d - rhs[pad]).norm());
            map_v.push(w);
            d_v.push(d);
            dbar_v.push(dbar);
        }
    }
    Ok(QuasiconformalMap {
        map: SampledField::new(core.clone(), map_v)?,
        d: SampledField::new(core.clone(), d_v)?,
        dbar: SampledField::new(core, dbar_v)?,
        normalization: Normalization::Decay,
        residual,
        iterations: raw.iterations,
        contraction: TRUNCATED_KERNEL_BOUND * sup_c,
        internals: MapInternals::Plane(PlaneEval {
            l: ctx.l,
            n: ctx.n,
            displacement: raw.ch,
            d_pad: raw.sh,
            dbar_pad: raw.dbar_ch,
            w0,
            scale: one,
        }),
    })
}

/// Result of transporting a coefficient through the inverse map.
#[derive(Debug, Clone)]
pub struct InverseCoefficient {
    /// `mu-tilde = (-mu dw / conj(dw)) о w^{-1}` sampled on the image torus.
    pub coefficient: BeltramiCoefficient,
    /// Largest `|w(p) - q|` accepted by the Newton preimage search.
    pub newton_residual: f64,
}

/// Newton preimages of the given targets under a lattice-normalized torus
/// map, started from the exact inverse of its affine part. Returns the
/// preimage points and the largest accepted forward defect `|w(p) - q|`.
pub fn torus_preimages(
    map: &QuasiconformalMap,
    targets: &[Complex64],
) -> Result<(Vec<Complex64>, f64)> {
    let mean = match &map.internals {
        MapInternals::Torus { mean, .. } => *mean,
        MapInternals::Plane(_) => {
            return Err(Error::GridKindMismatch {
                expected: "torus",
                got: "plane-box",
            })
        }
    };
    let one = Complex64::new(1.0, 0.0);
    let denom = one + mean;
    let inv_det = 1.0 / (1.0 - mean.norm_sqr());
    let mut out = Vec::with_capacity(targets.len());
    let mut worst: f64 = 0.0;
    for &q in targets {
        // Exact inverse of the affine part (p + mean conj(p)) / (1 + mean).
        let qq = q * denom;
        let mut p = (qq - mean * qq.conj()) * inv_det;
        let mut jet = map.eval(p)?;
        let mut ok = false;
        for _ in 0..50 {
            let r = q - jet.w;
            if r.norm() <= 1e-12 * (1.0 + q.norm()) {
                ok = true;
                break;
            }
            let (a, b) = (jet.d, jet.dbar);
            let det = a.norm_sqr() - b.norm_sqr();
            if det <= 1e-12 {
                return Err(Error::DegenerateJacobian { index: 0, value: det });
            }
            p += (a.conj() * r - b * r.conj()) / det;
            jet = map.eval(p)?;
        }
        if !ok {
            return Err(Error::PreimageNotFound(q));
        }
        worst = worst.max((q - jet.w).norm());
        out.push(p);
    }
    Ok((out, worst))
}

/// Computes the Beltrami coefficient of the inverse of a lattice-normalized
/// torus map, sampled on the image torus (same resolution, new modulus).
pub fn inverse_coefficient(map: &QuasiconformalMap) -> Result<InverseCoefficient> {
    let z_new = map.new_modulus()?;
    let n = map.grid().n();
    let target = make_torus_grid(z_new, n)?;
    let (preimages, worst) = torus_preimages(map, target.points())?;
    let mut values = Vec::with_capacity(n * n);
    for &p in &preimages {
        let jet = map.eval(p)?;
        values.push(-jet.dbar / jet.d.conj());
    }
    let field = SampledField::new(target, values)?;
    Ok(InverseCoefficient {
        coefficient: BeltramiCoefficient::new(field, SupportKind::Periodic)?,
        newton_residual: worst,
    })
}

/// Sup-norm distance between two solved torus maps and their coefficients,
/// the raw material for continuity ("stability") measurements.
#[derive(Debug, Clone, Copy)]
pub struct StabilityGap {
    pub coefficient_gap: f64,
    pub map_gap: f64,
}

pub fn stability_gap(
    a: &BeltramiCoefficient,
    b: &BeltramiCoefficient,
    opts: &SolveOptions,
) -> Result<StabilityGap> {
    let coefficient_gap = a.field.max_abs_diff(&b.field)?;
    let wa = solve_torus(a, opts)?;
    let wb = solve_torus(b, opts)?;
    let map_gap = wa.map.max_abs_diff(&wb.map)?;
    Ok(StabilityGap { coefficient_gap, map_gap })
}

/// `L^p` norm of a sampled field with the grid's cell quadrature.
pub fn lp_norm(f: &SampledField, p: f64) -> f64 {
    let area = f.grid().cell_area();
    let sum: f64 = f.values().iter().map(|v| v.norm().powf(p)).sum();
    (sum * area).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fd_derivative;

    fn torus_coeff(preset: &BeltramiPreset, z: Complex64, n: usize) -> BeltramiCoefficient {
        let grid = make_torus_grid(z, n).unwrap();
        BeltramiCoefficient::new(preset.sample(&grid).unwrap(), SupportKind::Periodic)
            .unwrap()
    }

    #[test]
    fn constant_coefficient_solves_to_the_affine_map() {
        let z = Complex64::new(0.0, 1.0);
        let c = Complex64::new(0.2, 0.0);
        let coeff = torus_coeff(&BeltramiPreset::Constant { value: c }, z, 16);
        let sol = solve_torus(&coeff, &SolveOptions::default()).unwrap();
        let grid = coeff.field.grid();
        let affine = SampledField::from_fn(grid.clone(), |p| {
            (p + c * p.conj()) / (Complex64::new(1.0, 0.0) + c)
        });
        assert!(sol.map().max_abs_diff(&affine).unwrap() < 1e-13);
        // New modulus i (1 - c) / (1 + c) for real c on the square torus.
        let want = Complex64::new(0.0, (1.0 - 0.2) / (1.0 + 0.2));
        assert!((sol.new_modulus().unwrap() - want).norm() < 1e-14);
        assert!(sol.residual() < 1e-14);
        assert!(sol.iterations() <= 3);
        // Jet evaluation off the grid matches the affine formula.
        let p = Complex64::new(0.337, 0.491);
        let jet = sol.eval(p).unwrap();
        let denom = Complex64::new(1.2, 0.0);
        assert!((jet.w - (p + c * p.conj()) / denom).norm() < 1e-12);
        assert!((jet.d - 1.0 / denom).norm() < 1e-12);
        assert!((jet.dbar - c / denom).norm() < 1e-12);
    }

    #[test]
    fn dilatation_bound_is_enforced() {
        let z = Complex64::new(0.0, 1.0);
        let grid = make_torus_grid(z, 8).unwrap();
        let field = SampledField::from_fn(grid, |_| Complex64::new(1.01, 0.0));
        assert!(matches!(
            BeltramiCoefficient::new(field, SupportKind::Periodic),
            Err(Error::DilatationTooLarge(_))
        ));
    }

    #[test]
    fn fourier_coefficient_residual_is_spectrally_small() {
        let z = Complex64::new(0.3, 1.2);
        let preset = BeltramiPreset::Fourier {
            m: 1,
            k: 0,
            amp: Complex64::new(0.3, 0.1),
        };
        let coeff = torus_coeff(&preset, z, 64);
        let sol = solve_torus(&coeff, &SolveOptions::default()).unwrap();
        assert!(sol.residual() < 1e-12, "residual {}", sol.residual());
        assert!(sol.min_abs_partial() > 0.3);
        // Independent finite-difference check of dbar w on the periodic
        // part: dbar(map) - dbar(affine) must match the stored field.
        let mean_dbar = {
            let mean = match &sol.internals {
                MapInternals::Torus { mean, .. } => *mean,
                _ => unreachable!(),
            };
            mean / (Complex64::new(1.0, 0.0) + mean)
        };
        let periodic = match &sol.internals {
            MapInternals::Torus { periodic_part, .. } => SampledField::new(
                sol.grid().clone(),
                periodic_part.clone(),
            )
            .unwrap(),
            _ => unreachable!(),
        };
        let fd = fd_derivative(&periodic, Wirtinger::DBar).unwrap();
        let spectral_minus_affine = sol.dbar().map(|v| v - mean_dbar);
        let gap = fd.max_abs_diff(&spectral_minus_affine).unwrap();
        // Bounded by the 4th-order stencil truncation on the solved field.
        assert!(gap < 1e-4, "fd cross-check gap {gap}");
    }

    #[test]
    fn plane_pair_reflection_is_exact_to_roundoff() {
        let mu = BeltramiPreset::Bump {
            center: Complex64::new(0.25, 1.1),
            radius: 0.7,
            height: Complex64::new(0.31, -0.12),
        };
        let nu = BeltramiPreset::Bump {
            center: Complex64::new(-0.4, 0.9),
            radius: 0.55,
            height: Complex64::new(-0.05, 0.27),
        };
        let opts = PlaneSolveOptions { n: 128, tol: 1e-11, ..Default::default() };
        let fwd = solve_pair(&mu, &nu, &opts).unwrap();
        let rev = solve_pair(&nu, &mu, &opts).unwrap();
        // conj(f_{nu,mu}(conj p)) = f_{mu,nu}(p) at grid points: the core
        // grid is conjugation-symmetric except for the bottom row.
        let n = 128usize;
        let fv = fwd.map.map().values();
        let rv = rev.map.map().values();
        let mut worst: f64 = 0.0;
        for row in 1..n {
            for col in 0..n {
                let mirrored = rv[(n - row) * n + col];
                worst = worst.max((mirrored.conj() - fv[row * n + col]).norm());
            }
        }
        assert!(worst < 1e-12, "reflection defect {worst}");
        // Normalization: f(0) = 0 and f(1) = 1 exactly at the pinned nodes.
        let mid = n / 2;
        let per_unit = (n as f64 / opts.side) as usize;
        assert!(fv[mid * n + mid].norm() < 1e-15);
        assert!((fv[mid * n + mid + per_unit] - 1.0).norm() < 1e-15);
        // The equation residual is governed by the Gevrey-class spectral
        // tail of the bump profile at this resolution, not by the solver.
        assert!(
            fwd.map.residual() < 1e-4,
            "uncut residual {}",
            fwd.map.residual()
        );
        assert!(fwd.map.min_abs_partial() > 0.2);
    }

    #[test]
    fn symmetric_pair_fixes_the_real_axis() {
        let mu = BeltramiPreset::Bump {
            center: Complex64::new(0.0, 1.0),
            radius: 0.6,
            height: Complex64::new(0.2, 0.2),
        };
        let opts = PlaneSolveOptions { n: 128, tol: 1e-11, ..Default::default() };
        let sol = solve_pair(&mu, &mu, &opts).unwrap();
        let n = 128usize;
        let fv = sol.map.map().values();
        let mut worst: f64 = 0.0;
        for col in 0..n {
            worst = worst.max(fv[(n / 2) * n + col].im.abs());
        }
        assert!(worst < 1e-12, "real axis drift {worst}");
    }

    #[test]
    fn inverse_of_a_constant_solve_is_the_reciprocal_constant() {
        let z = Complex64::new(0.1, 0.9);
        let c = Complex64::new(0.15, -0.2);
        let coeff = torus_coeff(&BeltramiPreset::Constant { value: c }, z, 32);
        let sol = solve_torus(&coeff, &SolveOptions::default()).unwrap();
        let inv = inverse_coefficient(&sol).unwrap();
        // mu-tilde = -c (1 + conj c) / (1 + c) everywhere.
        let want = -c * (Complex64::new(1.0, 0.0) + c.conj())
            / (Complex64::new(1.0, 0.0) + c);
        let worst = inv
            .coefficient
            .field
            .values()
            .iter()
            .map(|v| (v - want).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-11, "inverse coefficient defect {worst}");
        assert!(inv.newton_residual < 1e-11);
        assert!((inv.coefficient.dilatation() - c.norm()).abs() < 1e-11);
    }

    #[test]
    fn plane_dilatation_gate_matches_the_kernel_bound() {
        let mu = BeltramiPreset::Constant { value: Complex64::new(0.75, 0.0) };
        let opts = PlaneSolveOptions { n: 64, side: 4.0, ..Default::default() };
        match solve_pair(&mu, &mu, &opts) {
            Err(Error::PlaneDilatationTooLarge { got, bound }) => {
                assert!((got - 0.75).abs() < 1e-12);
                assert!(bound < 0.72);
            }
            other => panic!("expected dilatation gate, got {other:?}"),
        }
    }
}

