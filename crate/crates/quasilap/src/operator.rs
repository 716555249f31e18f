//! The two-parameter family of elliptic operators built from normalized
//! Beltrami solutions.
//!
//! For coefficients `(mu, nu)` with `sup|mu| sup|nu| < 1`, the frame field
//! is `alpha = 1 / ((1 - mu conj(nu)) df)` with `f` the normalized solution
//! for `mu`, and `g = conj(alpha-tilde)` the conjugate frame of the
//! solution for `nu`. Writing `A = alpha g`, the second-order family is
//!
//! ```text
//! (d dbar)_{mu,nu} = A (-mu d^2 + (1 + mu conj(nu)) dbar d - conj(nu) dbar^2)
//!                  + A ((dbar - mu d) alpha / alpha) d
//!                  + A ((d - conj(nu) dbar) g / g) dbar
//! ```
//!
//! which is holomorphic in `mu` and antiholomorphic in `nu` by
//! construction. Two flavors differ only in the prefactor multiplying it:
//! the flat flavor keeps the family as is (prefactor one), so that
//! `(0, 0)` is literally `d dbar` and `exp(2 pi i x)` maps to
//! `-pi^2 exp(2 pi i x)` on the square torus; the hyperbolic flavor
//! multiplies by the squared separation `(f - conj(f-tilde))^2` of the
//! two-sided plane solves, which at `(0, 0)` is `(z - conj z)^2 = -4 y^2`
//! and reproduces the positive hyperbolic Laplacian. Spectral consumers of
//! the flat flavor (symbol sectors, matrix discretizations, quadratic
//! forms) rescale by [`FLAT_SPECTRAL_SCALE`] so that the diagonal spectrum
//! is the positive torus one, `4 pi^2 |k - z m|^2 / (Im z)^2`.
//!
//! Three independent routes exist on the diagonal `nu = mu` and are kept
//! deliberately separate: the generic assembly [`build_delta_mn`], the
//! hand-specialized diagonal assembly [`pullback_laplacian`] that enforces
//! the conjugate coefficient symmetry structurally, and the chart route
//! [`ChartLaplacian`] that transports a function through the normalized
//! map, applies `d dbar` on the image torus, and samples back.

use crate::beltrami::{
    solve_pair, solve_torus, torus_preimages, BeltramiCoefficient, PlaneSolveOptions,
    QuasiconformalMap, SolveOptions, SupportKind,
};
use crate::error::{Error, Result};
use crate::fft::{signed_freq, Fft2};
use crate::grid::{
    fd_derivative, lagrange6_periodic, make_torus_grid, make_window_grid,
    spectral_derivative, wirtinger_multipliers, ComplexGrid, CompactWindow, GridKind,
    LatticeSpec, SampledField, Wirtinger,
};
use crate::presets::BeltramiPreset;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Scale tying the flat-flavor family to the spectrally positive torus
/// Laplacian: `FLAT_SPECTRAL_SCALE * (d dbar)` at `(0,0)` has eigenvalues
/// `4 pi^2 |k - z m|^2 / (Im z)^2`. Applied at spectral boundaries only
/// (symbols, discretizations, quadratic-form pairings); [`HoloLaplacian::apply`]
/// stays at the `d dbar` level.
pub const FLAT_SPECTRAL_SCALE: f64 = -4.0;

/// Which prefactor multiplies the second-order family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// Prefactor one: the operator is `(d dbar)_{mu,nu}` itself.
    Flat,
    /// The squared separation `(f - conj(f-tilde))^2`; the half-plane
    /// normalization, `-4 y^2` at the origin of the family.
    Hyperbolic,
}

/// An assembled member of the operator family, sampled on one grid.
#[derive(Debug, Clone)]
pub struct HoloLaplacian {
    grid: ComplexGrid,
    flavor: Flavor,
    prefactor: Vec<Complex64>,
    frame_product: Vec<Complex64>,
    c20: Vec<Complex64>,
    c11: Vec<Complex64>,
    c02: Vec<Complex64>,
    c10: Vec<Complex64>,
    c01: Vec<Complex64>,
    mu: Vec<Complex64>,
    nu: Vec<Complex64>,
}

impl HoloLaplacian {
    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn prefactor(&self) -> &[Complex64] {
        &self.prefactor
    }

    /// The frame product `A = alpha g`.
    pub fn frame_product(&self) -> &[Complex64] {
        &self.frame_product
    }

    pub fn mu(&self) -> &[Complex64] {
        &self.mu
    }

    pub fn nu(&self) -> &[Complex64] {
        &self.nu
    }

    /// Coefficients of `(d^2, dbar d, dbar^2, d, dbar)` before the
    /// prefactor.
    pub fn coefficients(&self) -> [&[Complex64]; 5] {
        [&self.c20, &self.c11, &self.c02, &self.c10, &self.c01]
    }

    /// Applies the operator to a sampled function: spectral derivatives on
    /// tori, 4th-order finite differences on windows.
    pub fn apply(&self, u: &SampledField) -> Result<SampledField> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        match self.grid.kind() {
            GridKind::Torus(_) => self.apply_torus(u),
            GridKind::Window(_) => self.apply_window(u),
            GridKind::PlaneBox { .. } => Err(Error::GridKindMismatch {
                expected: "torus or window",
                got: "plane-box",
            }),
        }
    }

    fn apply_torus(&self, u: &SampledField) -> Result<SampledField> {
        let z = self.grid.modulus()?;
        let n = self.grid.n();
        let d_m = wirtinger_multipliers(z, n, Wirtinger::D);
        let db_m = wirtinger_multipliers(z, n, Wirtinger::DBar);
        let mut fft = Fft2::new(n);
        let mut hat = u.values().to_vec();
        fft.forward(&mut hat);
        let mut field = |sym: &dyn Fn(usize) -> Complex64| -> Vec<Complex64> {
            let mut v: Vec<Complex64> =
                hat.iter().enumerate().map(|(i, &h)| h * sym(i)).collect();
            fft.inverse(&mut v);
            v
        };
        let uxx = field(&|i| d_m[i] * d_m[i]);
        let uxy = field(&|i| d_m[i] * db_m[i]);
        let uyy = field(&|i| db_m[i] * db_m[i]);
        let ux = field(&|i| d_m[i]);
        let uy = field(&|i| db_m[i]);
        let values = (0..n * n)
            .map(|i| {
                self.prefactor[i]
                    * (self.c20[i] * uxx[i]
                        + self.c11[i] * uxy[i]
                        + self.c02[i] * uyy[i]
                        + self.c10[i] * ux[i]
                        + self.c01[i] * uy[i])
            })
            .collect();
        SampledField::new(self.grid.clone(), values)
    }

    fn apply_window(&self, u: &SampledField) -> Result<SampledField> {
        let du = fd_derivative(u, Wirtinger::D)?;
        let dbu = fd_derivative(u, Wirtinger::DBar)?;
        let uxx = fd_derivative(&du, Wirtinger::D)?;
        let uxy = fd_derivative(&du, Wirtinger::DBar)?;
        let uyy = fd_derivative(&dbu, Wirtinger::DBar)?;
        let values = (0..self.grid.len())
            .map(|i| {
                self.prefactor[i]
                    * (self.c20[i] * uxx.values()[i]
                        + self.c11[i] * uxy.values()[i]
                        + self.c02[i] * uyy.values()[i]
                        + self.c10[i] * du.values()[i]
                        + self.c01[i] * dbu.values()[i])
            })
            .collect();
        SampledField::new(self.grid.clone(), values)
    }

    /// Leading factor of the principal symbol: `-prefactor` in the
    /// hyperbolic flavor (positive `4 y^2`-like on the diagonal), the
    /// positive spectral normalization `-FLAT_SPECTRAL_SCALE = 4` in the
    /// flat flavor.
    fn symbol_lead(&self, i: usize) -> Complex64 {
        match self.flavor {
            Flavor::Flat => Complex64::new(-FLAT_SPECTRAL_SCALE, 0.0),
            Flavor::Hyperbolic => -self.prefactor[i],
        }
    }

    /// Principal symbol at sample `i` in the unit cotangent direction
    /// `zeta`, with the convention `symbol(dbar) = i zeta`:
    /// `lead * A * (zeta - mu conj(zeta)) (conj(zeta) - conj(nu) zeta)`,
    /// where `lead` is [`Self::symbol_lead`]. On the diagonal the value is
    /// real and positive in both flavors.
    pub fn symbol(&self, i: usize, zeta: Complex64) -> Complex64 {
        let quartic = (zeta - self.mu[i] * zeta.conj())
            * (zeta.conj() - self.nu[i].conj() * zeta);
        self.symbol_lead(i) * self.frame_product[i] * quartic
    }
}

fn guard_partials(d: &[Complex64]) -> Result<()> {
    for (i, v) in d.iter().enumerate() {
        if v.norm() < 1e-8 {
            return Err(Error::DegenerateJacobian { index: i, value: v.norm() });
        }
    }
    Ok(())
}

fn guard_solves(coeff: &BeltramiCoefficient, map: &QuasiconformalMap) -> Result<()> {
    if map.grid() != coeff.field.grid() {
        return Err(Error::GridMismatch);
    }
    let mut worst = 0.0f64;
    for i in 0..map.grid().len() {
        let r = map.dbar().values()[i] - coeff.field.values()[i] * map.d().values()[i];
        worst = worst.max(r.norm());
    }
    if worst > 1e-6 {
        return Err(Error::NotAdmissible(format!(
            "the supplied map does not solve the coefficient's Beltrami \
             equation: residual {worst:.2e}"
        )));
    }
    guard_partials(map.d().values())
}

/// Hand-specialized diagonal assembly `nu = mu`: the pullback of `d dbar`
/// through the normalized solution `f`, with `alpha = 1/((1-|mu|^2) df)`
/// and `A = |alpha|^2`,
///
/// ```text
/// A (-mu d^2 + (1+|mu|^2) dbar d - conj(mu) dbar^2)
///   + A ((dbar - mu d) alpha / alpha) d + conj(...) dbar .
/// ```
///
/// The conjugate symmetries `c02 = conj(c20)`, `c01 = conj(c10)` and the
/// reality of `A` are enforced structurally, not left to arithmetic; the
/// generic [`build_delta_mn`] at `nu = mu` must agree with this to
/// roundoff, which is a meaningful cross-check because the two share no
/// assembly line.
pub fn pullback_laplacian(
    mu: &BeltramiCoefficient,
    f: &QuasiconformalMap,
) -> Result<HoloLaplacian> {
    guard_solves(mu, f)?;
    let grid = mu.field.grid().clone();
    let n2 = grid.len();
    let one = Complex64::new(1.0, 0.0);
    let mu_v = mu.field.values();
    let mut alpha = Vec::with_capacity(n2);
    for i in 0..n2 {
        let joint = 1.0 - mu_v[i].norm_sqr();
        alpha.push(one / (joint * f.d().values()[i]));
    }
    let alpha_f = SampledField::new(grid.clone(), alpha)?;
    let d_alpha = spectral_derivative(&alpha_f, Wirtinger::D)?;
    let db_alpha = spectral_derivative(&alpha_f, Wirtinger::DBar)?;
    let mut frame_product = Vec::with_capacity(n2);
    let mut c20 = Vec::with_capacity(n2);
    let mut c11 = Vec::with_capacity(n2);
    let mut c02 = Vec::with_capacity(n2);
    let mut c10 = Vec::with_capacity(n2);
    let mut c01 = Vec::with_capacity(n2);
    for i in 0..n2 {
        let a = Complex64::new(alpha_f.values()[i].norm_sqr(), 0.0);
        frame_product.push(a);
        let c2 = -mu_v[i] * a;
        c20.push(c2);
        c02.push(c2.conj());
        c11.push(Complex64::new((1.0 + mu_v[i].norm_sqr()) * a.re, 0.0));
        let c1 = a
            * (db_alpha.values()[i] - mu_v[i] * d_alpha.values()[i])
            / alpha_f.values()[i];
        c10.push(c1);
        c01.push(c1.conj());
    }
    Ok(HoloLaplacian {
        grid,
        flavor: Flavor::Flat,
        prefactor: vec![one; n2],
        frame_product,
        c20,
        c11,
        c02,
        c10,
        c01,
        mu: mu_v.to_vec(),
        nu: mu_v.to_vec(),
    })
}

/// Generic assembly of the flat-flavor family member from the two solved
/// torus maps for `mu` and `nu`. Requires joint ellipticity
/// `sup|mu| sup|nu| < 1`.
pub fn build_delta_mn(
    mu: &BeltramiCoefficient,
    nu: &BeltramiCoefficient,
    fmn: &QuasiconformalMap,
    fnm: &QuasiconformalMap,
) -> Result<HoloLaplacian> {
    let grid = mu.field.grid().clone();
    if nu.field.grid() != &grid {
        return Err(Error::GridMismatch);
    }
    let joint = mu.dilatation() * nu.dilatation();
    if joint >= 1.0 {
        return Err(Error::JointDilatationTooLarge(joint));
    }
    guard_solves(mu, fmn)?;
    guard_solves(nu, fnm)?;
    let n2 = grid.len();
    let one = Complex64::new(1.0, 0.0);
    let mu_v = mu.field.values();
    let nu_v = nu.field.values();
    let mut alpha = Vec::with_capacity(n2);
    let mut g = Vec::with_capacity(n2);
    for i in 0..n2 {
        let joint_i = one - mu_v[i] * nu_v[i].conj();
        alpha.push(one / (joint_i * fmn.d().values()[i]));
        g.push(one / (joint_i * fnm.d().values()[i].conj()));
    }
    let alpha_f = SampledField::new(grid.clone(), alpha)?;
    let g_f = SampledField::new(grid.clone(), g)?;
    let d_alpha = spectral_derivative(&alpha_f, Wirtinger::D)?;
    let db_alpha = spectral_derivative(&alpha_f, Wirtinger::DBar)?;
    let d_g = spectral_derivative(&g_f, Wirtinger::D)?;
    let db_g = spectral_derivative(&g_f, Wirtinger::DBar)?;
    let mut frame_product = Vec::with_capacity(n2);
    let mut c20 = Vec::with_capacity(n2);
    let mut c11 = Vec::with_capacity(n2);
    let mut c02 = Vec::with_capacity(n2);
    let mut c10 = Vec::with_capacity(n2);
    let mut c01 = Vec::with_capacity(n2);
    for i in 0..n2 {
        let a = alpha_f.values()[i] * g_f.values()[i];
        frame_product.push(a);
        c20.push(-mu_v[i] * a);
        c11.push((one + mu_v[i] * nu_v[i].conj()) * a);
        c02.push(-nu_v[i].conj() * a);
        c10.push(
            a * (db_alpha.values()[i] - mu_v[i] * d_alpha.values()[i])
                / alpha_f.values()[i],
        );
        c01.push(
            a * (d_g.values()[i] - nu_v[i].conj() * db_g.values()[i])
                / g_f.values()[i],
        );
    }
    Ok(HoloLaplacian {
        grid,
        flavor: Flavor::Flat,
        prefactor: vec![one; n2],
        frame_product,
        c20,
        c11,
        c02,
        c10,
        c01,
        mu: mu_v.to_vec(),
        nu: nu_v.to_vec(),
    })
}

/// Solves both coefficients and assembles the flat-flavor member in one
/// call.
pub fn solve_delta_mn(
    mu: &BeltramiCoefficient,
    nu: &BeltramiCoefficient,
    opts: &SolveOptions,
) -> Result<HoloLaplacian> {
    let fmn = solve_torus(mu, opts)?;
    let fnm = solve_torus(nu, opts)?;
    build_delta_mn(mu, nu, &fmn, &fnm)
}

/// Assembles the hyperbolic-flavor family member on a compact window in the
/// upper half-plane from two-sided plane solves for `(mu, nu)` and
/// `(nu, mu)`. The window must sit inside the cutoff plateau so that the
/// solved equation there is the uncut one.
pub fn build_window_hyperbolic(
    mu: &BeltramiPreset,
    nu: &BeltramiPreset,
    window: CompactWindow,
    n: usize,
    popts: &PlaneSolveOptions,
) -> Result<HoloLaplacian> {
    if !mu.is_plane_defined() || !nu.is_plane_defined() {
        return Err(Error::TorusOnlyPreset(if mu.is_plane_defined() {
            nu.kind_name()
        } else {
            mu.kind_name()
        }));
    }
    let fwd = solve_pair(mu, nu, popts)?;
    let rev = solve_pair(nu, mu, popts)?;
    let reach = [
        Complex64::new(window.x0, window.y0),
        Complex64::new(window.x1, window.y0),
        Complex64::new(window.x0, window.y1),
        Complex64::new(window.x1, window.y1),
    ]
    .iter()
    .map(|c| c.norm())
    .fold(0.0, f64::max);
    if reach >= fwd.plateau_radius {
        return Err(Error::NotAdmissible(format!(
            "window reaches radius {reach:.3} but the solve is uncut only \
             within {:.3}; shrink the window or enlarge the box",
            fwd.plateau_radius
        )));
    }
    let grid = make_window_grid(window, n)?;
    let pts = grid.points().to_vec();
    let one = Complex64::new(1.0, 0.0);
    let joint = |p: Complex64| -> Complex64 {
        let m = mu.eval_plane(p).expect("preset is plane-defined");
        let v = nu.eval_plane(p).expect("preset is plane-defined");
        one - m * v.conj()
    };
    let [alpha, d_alpha, db_alpha] =
        fwd.field_with_derivatives(&|p, jet| one / (joint(p) * jet.d), &pts)?;
    let [g, d_g, db_g] =
        rev.field_with_derivatives(&|p, jet| one / (joint(p) * jet.d.conj()), &pts)?;
    let n2 = grid.len();
    let mut prefactor = Vec::with_capacity(n2);
    let mut frame_product = Vec::with_capacity(n2);
    let mut c20 = Vec::with_capacity(n2);
    let mut c11 = Vec::with_capacity(n2);
    let mut c02 = Vec::with_capacity(n2);
    let mut c10 = Vec::with_capacity(n2);
    let mut c01 = Vec::with_capacity(n2);
    let mut mu_v = Vec::with_capacity(n2);
    let mut nu_v = Vec::with_capacity(n2);
    for (i, &p) in pts.iter().enumerate() {
        let m = mu.eval_plane(p)?;
        let v = nu.eval_plane(p)?;
        let f = fwd.map.eval(p)?.w;
        let ft = rev.map.eval(p)?.w;
        let sep = f - ft.conj();
        let a = alpha[i] * g[i];
        prefactor.push(sep * sep);
        frame_product.push(a);
        c20.push(-m * a);
        c11.push((one + m * v.conj()) * a);
        c02.push(-v.conj() * a);
        c10.push(a * (db_alpha[i] - m * d_alpha[i]) / alpha[i]);
        c01.push(a * (d_g[i] - v.conj() * db_g[i]) / g[i]);
        mu_v.push(m);
        nu_v.push(v);
    }
    Ok(HoloLaplacian {
        grid,
        flavor: Flavor::Hyperbolic,
        prefactor,
        frame_product,
        c20,
        c11,
        c02,
        c10,
        c01,
        mu: mu_v,
        nu: nu_v,
    })
}

/// The chart route for the diagonal operator: transport through the
/// normalized map, `d dbar` on the image torus, sample back. This shares
/// no coefficient algebra with [`pullback_laplacian`]; the two agreeing on
/// `nu = mu` is the pullback identity of the family.
#[derive(Debug)]
pub struct ChartLaplacian {
    map: QuasiconformalMap,
    image_modulus: Complex64,
    upsample: usize,
}

impl ChartLaplacian {
    pub fn new(map: QuasiconformalMap) -> Result<Self> {
        let image_modulus = map.new_modulus()?;
        Ok(ChartLaplacian { map, image_modulus, upsample: 8 })
    }

    pub fn new_modulus(&self) -> Complex64 {
        self.image_modulus
    }

    pub fn map(&self) -> &QuasiconformalMap {
        &self.map
    }

    /// Applies `(d dbar)` of the image torus to `u o w^{-1}` and samples
    /// the result along `w`, i.e. evaluates the pullback operator on `u`.
    /// The function is taken as a closure so the transport to the image
    /// grid is exact up to the Newton tolerance.
    pub fn apply(&self, u: &dyn Fn(Complex64) -> Complex64) -> Result<SampledField> {
        let n = self.map.grid().n();
        let image = make_torus_grid(self.image_modulus, n)?;
        let (pre, _) = torus_preimages(&self.map, image.points())?;
        let mut hat: Vec<Complex64> = pre.iter().map(|&p| u(p)).collect();
        let mut fft = Fft2::new(n);
        fft.forward(&mut hat);
        let d_m = wirtinger_multipliers(self.image_modulus, n, Wirtinger::D);
        let db_m = wirtinger_multipliers(self.image_modulus, n, Wirtinger::DBar);
        for i in 0..n * n {
            hat[i] *= d_m[i] * db_m[i];
        }
        // Zero-pad the spectrum so the samples along the map can be read
        // off with degree-5 interpolation at negligible cost in accuracy.
        let nn = self.upsample * n;
        let amp = (nn * nn) as f64 / (n * n) as f64;
        let mut fine = vec![Complex64::default(); nn * nn];
        for row in 0..n {
            let k = signed_freq(row, n).rem_euclid(nn as i64) as usize;
            for col in 0..n {
                let m = signed_freq(col, n).rem_euclid(nn as i64) as usize;
                fine[k * nn + m] = hat[row * n + col] * amp;
            }
        }
        let mut fft_fine = Fft2::new(nn);
        fft_fine.inverse(&mut fine);
        let lat = LatticeSpec::new(self.image_modulus)?;
        let values = self
            .map
            .map()
            .values()
            .iter()
            .map(|&q| {
                let (x1, x2) = lat.lattice_coords(q);
                lagrange6_periodic(&fine, nn, x1 * nn as f64, x2 * nn as f64)
            })
            .collect();
        SampledField::new(self.map.grid().clone(), values)
    }
}

/// Lattice character `exp(2 pi i (a x1 + b x2))` as a closure usable both
/// for sampling and for exact evaluation at preimage points.
pub fn lattice_mode(z: Complex64, a: i64, b: i64) -> Result<impl Fn(Complex64) -> Complex64> {
    let lat = LatticeSpec::new(z)?;
    Ok(move |p: Complex64| {
        let (x1, x2) = lat.lattice_coords(p);
        (Complex64::new(0.0, 2.0 * PI) * (a as f64 * x1 + b as f64 * x2)).exp()
    })
}

/// Sup-norm disagreement of the assembled diagonal operator and the chart
/// route on the lattice character `(a, b)`. Decays spectrally in the grid
/// size; the floor is the chart route's interpolation.
pub fn chart_defect(
    coeff: &BeltramiCoefficient,
    mode: (i64, i64),
    opts: &SolveOptions,
) -> Result<f64> {
    let grid = coeff.field.grid().clone();
    let z = grid.modulus()?;
    let u_fn = lattice_mode(z, mode.0, mode.1)?;
    let map = solve_torus(coeff, opts)?;
    let assembled = pullback_laplacian(coeff, &map)?;
    let via_fields = assembled.apply(&SampledField::from_fn(grid, &u_fn))?;
    let chart = ChartLaplacian::new(map)?;
    let via_chart = chart.apply(&u_fn)?;
    via_fields.max_abs_diff(&via_chart)
}

fn shifted_by_cell(values: &[Complex64], n: usize, dr: usize, dc: usize) -> Vec<Complex64> {
    // field_s(z) = field(z - (dc w1 + dr w2)/n), so sample (row, col)
    // reads (row - dr, col - dc) cyclically.
    let mut out = vec![Complex64::default(); n * n];
    for row in 0..n {
        let sr = (row + n - dr) % n;
        for col in 0..n {
            let sc = (col + n - dc) % n;
            out[row * n + col] = values[sr * n + sc];
        }
    }
    out
}

/// Translation equivariance of the whole solve-and-assemble pipeline: the
/// coefficients are shifted by one grid cell along each lattice generator,
/// both solves and the assembly are redone from the shifted data, and the
/// result is compared against the shift of the original coefficient
/// fields. Exactly zero for constant coefficients (the shifted input is
/// bitwise identical); otherwise bounded by solver and derivative
/// roundoff.
pub fn invariance_check(op: &HoloLaplacian, opts: &SolveOptions) -> Result<f64> {
    if !matches!(op.grid.kind(), GridKind::Torus(_)) {
        return Err(Error::GridKindMismatch {
            expected: "torus",
            got: op.grid.kind().name(),
        });
    }
    let n = op.grid.n();
    let mut worst = 0.0f64;
    for &(dr, dc) in &[(0usize, 1usize), (1, 0)] {
        let mu_s = BeltramiCoefficient::new(
            SampledField::new(op.grid.clone(), shifted_by_cell(&op.mu, n, dr, dc))?,
            SupportKind::Periodic,
        )?;
        let nu_s = BeltramiCoefficient::new(
            SampledField::new(op.grid.clone(), shifted_by_cell(&op.nu, n, dr, dc))?,
            SupportKind::Periodic,
        )?;
        let rebuilt = solve_delta_mn(&mu_s, &nu_s, opts)?;
        for (built, orig) in rebuilt.coefficients().iter().zip(op.coefficients().iter())
        {
            let shifted = shifted_by_cell(orig, n, dr, dc);
            for i in 0..n * n {
                worst = worst.max((built[i] - shifted[i]).norm());
            }
        }
    }
    Ok(worst)
}

/// One sampled principal-symbol value.
#[derive(Debug, Clone, Copy)]
pub struct SymbolSample {
    pub index: usize,
    pub direction: Complex64,
    pub value: Complex64,
}

/// Extremes of the principal symbol over all samples and a fan of unit
/// directions. `max_abs_arg` is the sector opening; `per_factor_args`
/// holds the individual openings of the four symbol factors, in order the
/// leading prefactor, the squared joint-dilatation factor `(1 - mu
/// conj(nu))^2` as it enters the symbol, the frame factor `df_{mu,nu}
/// conj(df_{nu,mu})`, and the direction quartic `(zeta - mu conj(zeta))
/// (conj(zeta) - conj(nu) zeta)`; the total opening is at most their sum.
#[derive(Debug, Clone, Copy)]
pub struct SymbolReport {
    pub max_abs_arg: f64,
    pub per_factor_args: [f64; 4],
    pub min_modulus: f64,
    pub worst: SymbolSample,
    pub directions: usize,
    pub sample_count: usize,
}

pub fn symbol_report(op: &HoloLaplacian, directions: usize) -> Result<SymbolReport> {
    if directions < 4 {
        return Err(Error::BadResolution(
            directions,
            "symbol reports need at least 4 directions",
        ));
    }
    let mut max_abs_arg: f64 = 0.0;
    let mut per_factor_args = [0.0f64; 4];
    let mut min_modulus = f64::INFINITY;
    let mut worst = SymbolSample {
        index: 0,
        direction: Complex64::new(1.0, 0.0),
        value: Complex64::default(),
    };
    let one = Complex64::new(1.0, 0.0);
    for i in 0..op.len() {
        let joint = one - op.mu[i] * op.nu[i].conj();
        per_factor_args[0] = per_factor_args[0].max(op.symbol_lead(i).arg().abs());
        per_factor_args[1] = per_factor_args[1].max((joint * joint).arg().abs());
        // A = 1 / (joint^2 df conj(df-tilde)) recovers the frame factor.
        per_factor_args[2] = per_factor_args[2]
            .max((joint * joint * op.frame_product[i]).arg().abs());
        for j in 0..directions {
            let theta = 2.0 * PI * j as f64 / directions as f64;
            let zeta = Complex64::new(theta.cos(), theta.sin());
            let quartic = (zeta - op.mu[i] * zeta.conj())
                * (zeta.conj() - op.nu[i].conj() * zeta);
            per_factor_args[3] = per_factor_args[3].max(quartic.arg().abs());
            let value = op.symbol_lead(i) * op.frame_product[i] * quartic;
            if value.norm() == 0.0 {
                return Err(Error::NotAdmissible(format!(
                    "principal symbol vanishes at sample {i}, direction \
                     {theta:.3} rad: ellipticity lost"
                )));
            }
            let angle = value.arg().abs();
            if angle > max_abs_arg {
                max_abs_arg = angle;
                worst = SymbolSample { index: i, direction: zeta, value };
            }
            min_modulus = min_modulus.min(value.norm());
        }
    }
    Ok(SymbolReport {
        max_abs_arg,
        per_factor_args,
        min_modulus,
        worst,
        directions,
        sample_count: op.len(),
    })
}

/// Quadratic-form data of one function against one diagonal coefficient.
#[derive(Debug, Clone, Copy)]
pub struct HodgeEnergy {
    /// `int du wedge star du` with the comparison star written in the
    /// `(dz, dzbar)` frame.
    pub energy: f64,
    /// `int (1 - |mu|^2) (|d u|^2 + |dbar u|^2)`: the pointwise lower
    /// bound.
    pub comparison: f64,
    /// `int (|d u|^2 + |dbar u|^2)`: half the flat Dirichlet energy.
    pub flat_half: f64,
}

/// Evaluates the comparison quadratic form of `u`: the quadrature of
/// `du wedge star du` with the star acting on `(conj a, conj b)`,
/// `(a, b) = (d u, dbar u)`, through the matrix
///
/// ```text
/// i (1-|mu|^2)^{-2} [ 2 conj(mu)   -(1+|mu|^2) ]
///                   [ 1+|mu|^2     -2 mu       ] ,
/// ```
///
/// giving the density `2 (1-|mu|^2)^{-2} [ (1+|mu|^2)(|a|^2+|b|^2) -
/// 4 Re(mu a conj(b)) ]`. The chain `energy >= comparison >= (1-k^2)
/// flat_half` holds pointwise for every `k < 1`, and at `mu = 0` the
/// energy is exactly the flat Dirichlet integral `2 flat_half`.
///
/// This star convention carries one factor `(1-|mu|^2)^{-1}` more than
/// the conformally invariant star; it is the comparison machinery, not
/// the pairing `<u, Delta u>`. That identity belongs to [`garding_check`],
/// whose gradient density has the extra factor removed.
pub fn hodge_quadratic_form(
    mu: &BeltramiCoefficient,
    u: &SampledField,
) -> Result<HodgeEnergy> {
    if mu.field.grid() != u.grid() {
        return Err(Error::GridMismatch);
    }
    if u.values().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NotAdmissible(
            "the sampled function has non-finite values".into(),
        ));
    }
    let a = spectral_derivative(u, Wirtinger::D)?;
    let b = spectral_derivative(u, Wirtinger::DBar)?;
    let area = u.grid().cell_area();
    let mut energy = 0.0;
    let mut comparison = 0.0;
    let mut flat_half = 0.0;
    for i in 0..u.grid().len() {
        let m = mu.field.values()[i];
        let k2 = m.norm_sqr();
        if k2 >= 1.0 {
            return Err(Error::DilatationTooLarge(k2.sqrt()));
        }
        let (av, bv) = (a.values()[i], b.values()[i]);
        let grad2 = av.norm_sqr() + bv.norm_sqr();
        let cross = (m * av * bv.conj()).re;
        energy += 2.0 / ((1.0 - k2) * (1.0 - k2)) * ((1.0 + k2) * grad2 - 4.0 * cross);
        comparison += (1.0 - k2) * grad2;
        flat_half += grad2;
    }
    Ok(HodgeEnergy {
        energy: energy * area,
        comparison: comparison * area,
        flat_half: flat_half * area,
    })
}

/// Outcome of the quadratic-form estimate for one `(mu, nu, u)`: the
/// pairing `<u, Delta_{mu,nu} u>` in the `mu`-metric against the gradient
/// energy `|grad u|^2` of the same metric.
#[derive(Debug, Clone, Copy)]
pub struct GardingReport {
    /// Real part of `<u, FLAT_SPECTRAL_SCALE Delta_{mu,nu} u>` in the
    /// pulled-back area measure `rho = (1-|mu|^2)|df|^2`.
    pub pairing: f64,
    /// Imaginary part of the pairing; a self-adjointness witness on the
    /// diagonal, `O(eps)` off it.
    pub pairing_imag: f64,
    /// The gradient energy `int |grad u|^2` of the `mu`-metric: density
    /// `2 (1-|mu|^2)^{-1} [ (1+|mu|^2)(|a|^2+|b|^2) - 4 Re(mu a conj(b)) ]`.
    pub grad_energy: f64,
    /// `int |u|^2 rho`.
    pub l2_norm_sq: f64,
    /// The coefficient distance `eps`: sup of `mu - nu` and its first and
    /// second spectral derivatives.
    pub epsilon: f64,
    /// Raw defect `|pairing - grad_energy|`.
    pub defect: f64,
    /// `defect / (eps (grad_energy + l2_norm_sq))`, or the raw defect when
    /// `eps = 0` (then it is pure quadrature error).
    pub value: f64,
}

/// Integration-by-parts estimate: on the diagonal `nu = mu` the pairing
/// equals the gradient energy exactly, and off it the defect is
/// `O(eps) (|grad u|^2 + |u|^2)` with `eps` the coefficient distance.
pub fn garding_check(
    mu: &BeltramiCoefficient,
    nu: &BeltramiCoefficient,
    u: &SampledField,
    opts: &SolveOptions,
) -> Result<GardingReport> {
    let grid = u.grid();
    if mu.field.grid() != grid || nu.field.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let fmn = solve_torus(mu, opts)?;
    let fnm = solve_torus(nu, opts)?;
    let op = build_delta_mn(mu, nu, &fmn, &fnm)?;
    let au = op.apply(u)?;
    let a = spectral_derivative(u, Wirtinger::D)?;
    let b = spectral_derivative(u, Wirtinger::DBar)?;
    let area = grid.cell_area();
    let mut pairing = Complex64::default();
    let mut grad = 0.0;
    let mut l2 = 0.0;
    for i in 0..grid.len() {
        let m = mu.field.values()[i];
        let k2 = m.norm_sqr();
        let rho = (1.0 - k2) * fmn.d().values()[i].norm_sqr();
        pairing += u.values()[i].conj() * au.values()[i] * (FLAT_SPECTRAL_SCALE * rho);
        let (av, bv) = (a.values()[i], b.values()[i]);
        let grad2 = av.norm_sqr() + bv.norm_sqr();
        let cross = (m * av * bv.conj()).re;
        grad += 2.0 / (1.0 - k2) * ((1.0 + k2) * grad2 - 4.0 * cross);
        l2 += u.values()[i].norm_sqr() * rho;
    }
    pairing *= area;
    grad *= area;
    l2 *= area;
    let diff = mu.field.zip_map(&nu.field, |x, y| x - y)?;
    let epsilon = c2_surrogate(&diff)?;
    let defect = (pairing.re - grad).abs();
    let value = if epsilon == 0.0 { defect } else { defect / (epsilon * (grad + l2)) };
    Ok(GardingReport {
        pairing: pairing.re,
        pairing_imag: pairing.im,
        grad_energy: grad,
        l2_norm_sq: l2,
        epsilon,
        defect,
        value,
    })
}

/// Size surrogate for perturbation bounds: `sup` of the field and of its
/// first and second spectral derivatives.
pub fn c2_surrogate(f: &SampledField) -> Result<f64> {
    let d1 = spectral_derivative(f, Wirtinger::D)?;
    let b1 = spectral_derivative(f, Wirtinger::DBar)?;
    let d2 = spectral_derivative(&d1, Wirtinger::D)?;
    let m2 = spectral_derivative(&d1, Wirtinger::DBar)?;
    let b2 = spectral_derivative(&b1, Wirtinger::DBar)?;
    Ok(f.sup_norm()
        + d1.sup_norm()
        + b1.sup_norm()
        + d2.sup_norm()
        + m2.sup_norm()
        + b2.sup_norm())
}
