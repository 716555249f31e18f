//! Sampling grids, Wirtinger derivatives, and the field container.
//!
//! Three grid kinds back everything downstream:
//!
//! * flat tori `C / (Z + zZ)`, `Im z > 0`, sampled at `p = (j + k z)/n`
//!   with `j` the coefficient of `1` (fast, along a row) and `k` the
//!   coefficient of `z` (slow);
//! * compact windows, axis-aligned rectangles with a guard margin that keep
//!   a positive distance to the real axis;
//! * plane boxes, squares `[-L/2, L/2)^2` centered at the origin used by the
//!   whole-plane Beltrami solver, sampled so that `0` and `1` are grid
//!   points when `n` is an even multiple of `L`.
//!
//! On tori, derivatives are Fourier collocation in the lattice coordinates
//! `(x1, x2)` of `p = x1 + z x2`, followed by the constant frame change
//!
//! ```text
//! d    = (f_x2 - conj(z) f_x1) / (2i Im z)
//! dbar = (z f_x1 - f_x2) / (2i Im z)
//! ```
//!
//! which is exact on band-limited data: the exponential
//! `e(m,k) = exp(2 pi i (m x1 + k x2))` is an eigenvector of `d` with value
//! `pi (k - conj(z) m) / Im z` and of `dbar` with value
//! `pi (z m - k) / Im z`. Windows and boxes use 4th-order centered finite
//! differences with one-sided closures at the edges, and the same stencils
//! serve as the independent oracle for the spectral path on tori.

use crate::error::{Error, Result};
use crate::fft::{signed_freq, Fft2};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

/// A flat torus `C / (Z + zZ)` described by its modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    modulus: Complex64,
}

impl LatticeSpec {
    pub fn new(modulus: Complex64) -> Result<Self> {
        if !(modulus.im > 0.0) || !modulus.is_finite() {
            return Err(Error::InvalidModulus(modulus));
        }
        Ok(LatticeSpec { modulus })
    }

    pub fn modulus(&self) -> Complex64 {
        self.modulus
    }

    /// Area of the fundamental domain spanned by `1` and `z`.
    pub fn area(&self) -> f64 {
        self.modulus.im
    }

    /// Lattice coordinates `(x1, x2)` of a point `p = x1 + z x2`.
    pub fn lattice_coords(&self, p: Complex64) -> (f64, f64) {
        let z = self.modulus;
        let x2 = p.im / z.im;
        let x1 = p.re - z.re * x2;
        (x1, x2)
    }
}

/// An axis-aligned rectangle `[x0, x1] x [y0, y1]` in the upper half-plane
/// with a guard margin: `y0 - margin > 0`, so the closed margin-fattened
/// rectangle stays compactly inside the half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactWindow {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub margin: f64,
}

impl CompactWindow {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, margin: f64) -> Result<Self> {
        let all_finite =
            [x0, x1, y0, y1, margin].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::BadWindow("non-finite bound".into()));
        }
        if !(x1 > x0) || !(y1 > y0) {
            return Err(Error::BadWindow(format!(
                "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        if !(margin > 0.0) || y0 - margin <= 0.0 {
            return Err(Error::BadWindow(format!(
                "need margin > 0 and y0 - margin > 0, got y0 = {y0}, margin = {margin}"
            )));
        }
        Ok(CompactWindow { x0, x1, y0, y1, margin })
    }

    pub fn contains(&self, p: Complex64) -> bool {
        p.re >= self.x0 && p.re <= self.x1 && p.im >= self.y0 && p.im <= self.y1
    }
}

/// Geometry of a grid: torus, compact window, or centered plane box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    Torus(LatticeSpec),
    Window(CompactWindow),
    PlaneBox { side: f64 },
}

impl GridKind {
    pub fn name(&self) -> &'static str {
        match self {
            GridKind::Torus(_) => "torus",
            GridKind::Window(_) => "window",
            GridKind::PlaneBox { .. } => "plane-box",
        }
    }
}

/// A concrete `n x n` sampling of one of the [`GridKind`] geometries.
///
/// Points are stored row-major; cloning is cheap (the point table is
/// shared). Two grids compare equal when geometry and resolution agree.
#[derive(Debug, Clone)]
pub struct ComplexGrid {
    kind: GridKind,
    n: usize,
    points: Arc<Vec<Complex64>>,
}

impl PartialEq for ComplexGrid {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.n == other.n
    }
}

impl ComplexGrid {
    fn build(kind: GridKind, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::BadResolution(n, "need at least 4 samples per side"));
        }
        if n > 1 << 14 {
            return Err(Error::BadResolution(n, "side exceeds 16384"));
        }
        let mut points = Vec::with_capacity(n * n);
        match kind {
            GridKind::Torus(lat) => {
                let z = lat.modulus();
                for k in 0..n {
                    let x2 = k as f64 / n as f64;
                    for j in 0..n {
                        let x1 = j as f64 / n as f64;
                        points.push(Complex64::new(x1, 0.0) + z * x2);
                    }
                }
            }
            GridKind::Window(w) => {
                let dx = (w.x1 - w.x0) / (n - 1) as f64;
                let dy = (w.y1 - w.y0) / (n - 1) as f64;
                for k in 0..n {
                    let y = w.y0 + k as f64 * dy;
                    for j in 0..n {
                        points.push(Complex64::new(w.x0 + j as f64 * dx, y));
                    }
                }
            }
            GridKind::PlaneBox { side } => {
                if !(side > 0.0) || !side.is_finite() {
                    return Err(Error::BadWindow(format!("bad box side {side}")));
                }
                let h = side / n as f64;
                for k in 0..n {
                    let y = -side / 2.0 + k as f64 * h;
                    for j in 0..n {
                        points.push(Complex64::new(-side / 2.0 + j as f64 * h, y));
                    }
                }
            }
        }
        Ok(ComplexGrid { kind, n, points: Arc::new(points) })
    }

    pub fn kind(&self) -> &GridKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> Complex64 {
        self.points[idx]
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n && col < self.n);
        row * self.n + col
    }

    /// Torus modulus, or an error for the other kinds.
    pub fn modulus(&self) -> Result<Complex64> {
        match self.kind {
            GridKind::Torus(l) => Ok(l.modulus()),
            ref k => Err(Error::GridKindMismatch { expected: "torus", got: k.name() }),
        }
    }

    pub fn lattice(&self) -> Result<LatticeSpec> {
        match self.kind {
            GridKind::Torus(l) => Ok(l),
            ref k => Err(Error::GridKindMismatch { expected: "torus", got: k.name() }),
        }
    }

    /// Quadrature weight of one sample for integrals over the geometry.
    pub fn cell_area(&self) -> f64 {
        match self.kind {
            GridKind::Torus(l) => l.area() / (self.n * self.n) as f64,
            GridKind::Window(w) => {
                let m = (self.n - 1) as f64;
                (w.x1 - w.x0) / m * ((w.y1 - w.y0) / m)
            }
            GridKind::PlaneBox { side } => {
                let h = side / self.n as f64;
                h * h
            }
        }
    }

    /// Grid spacings `(dx, dy)` in the sampling coordinates.
    pub fn spacing(&self) -> (f64, f64) {
        match self.kind {
            GridKind::Torus(_) => {
                let h = 1.0 / self.n as f64;
                (h, h)
            }
            GridKind::Window(w) => {
                let m = (self.n - 1) as f64;
                ((w.x1 - w.x0) / m, (w.y1 - w.y0) / m)
            }
            GridKind::PlaneBox { side } => {
                let h = side / self.n as f64;
                (h, h)
            }
        }
    }
}

/// Torus grid with modulus `z` and `n` samples per lattice direction.
pub fn make_torus_grid(modulus: Complex64, n: usize) -> Result<ComplexGrid> {
    ComplexGrid::build(GridKind::Torus(LatticeSpec::new(modulus)?), n)
}

/// Window grid with `n` samples per side, endpoints included.
pub fn make_window_grid(window: CompactWindow, n: usize) -> Result<ComplexGrid> {
    ComplexGrid::build(GridKind::Window(window), n)
}

/// Centered square box of the given side, periodic-compatible sampling.
pub fn make_plane_grid(side: f64, n: usize) -> Result<ComplexGrid> {
    ComplexGrid::build(GridKind::PlaneBox { side }, n)
}

/// Complex samples of a function on a [`ComplexGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: ComplexGrid,
    values: Vec<Complex64>,
}

impl SampledField {
    pub fn new(grid: ComplexGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(SampledField { grid, values })
    }

    pub fn zeros(grid: ComplexGrid) -> Self {
        let len = grid.len();
        SampledField { grid, values: vec![Complex64::default(); len] }
    }

    pub fn from_fn(grid: ComplexGrid, f: impl Fn(Complex64) -> Complex64) -> Self {
        let values = grid.points().iter().map(|&p| f(p)).collect();
        SampledField { grid, values }
    }

    /// Samples from `(row, col, point)`, for data natural in grid indices.
    pub fn from_indexed_fn(
        grid: ComplexGrid,
        f: impl Fn(usize, usize, Complex64) -> Complex64,
    ) -> Self {
        let n = grid.n();
        let values = grid
            .points()
            .iter()
            .enumerate()
            .map(|(idx, &p)| f(idx / n, idx % n, p))
            .collect();
        SampledField { grid, values }
    }

    pub fn grid(&self) -> &ComplexGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> SampledField {
        SampledField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &SampledField,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<SampledField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(SampledField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    pub fn max_abs_diff(&self, other: &SampledField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Writes the binary QLAP container (all scalars little-endian):
    /// magic `QLAP`, version `u32`, grid kind `u8`, side `u32`, modulus
    /// re/im `f64` (zero for non-torus kinds), a per-kind geometry block
    /// (window: x0, x1, y0, y1, margin; plane box: side), then the
    /// row-major samples as re/im `f64` pairs.
    pub fn write_qlap<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"QLAP")?;
        w.write_all(&1u32.to_le_bytes())?;
        let (kind, modulus) = match self.grid.kind() {
            GridKind::Torus(l) => (0u8, l.modulus()),
            GridKind::Window(_) => (1u8, Complex64::default()),
            GridKind::PlaneBox { .. } => (2u8, Complex64::default()),
        };
        w.write_all(&[kind])?;
        w.write_all(&(self.grid.n() as u32).to_le_bytes())?;
        w.write_all(&modulus.re.to_le_bytes())?;
        w.write_all(&modulus.im.to_le_bytes())?;
        match self.grid.kind() {
            GridKind::Torus(_) => {}
            GridKind::Window(win) => {
                for v in [win.x0, win.x1, win.y0, win.y1, win.margin] {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            GridKind::PlaneBox { side } => {
                w.write_all(&side.to_le_bytes())?;
            }
        }
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a container written by [`SampledField::write_qlap`].
    pub fn read_qlap<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"QLAP" {
            return Err(Error::BadContainer(format!("bad magic {magic:?}")));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(Error::BadContainer(format!("unsupported version {version}")));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let n = read_u32(r)? as usize;
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        let grid = match kind[0] {
            0 => make_torus_grid(Complex64::new(re, im), n)?,
            1 => {
                let x0 = read_f64(r)?;
                let x1 = read_f64(r)?;
                let y0 = read_f64(r)?;
                let y1 = read_f64(r)?;
                let margin = read_f64(r)?;
                make_window_grid(CompactWindow::new(x0, x1, y0, y1, margin)?, n)?
            }
            2 => make_plane_grid(read_f64(r)?, n)?,
            k => return Err(Error::BadContainer(format!("unknown grid kind {k}"))),
        };
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            let re = read_f64(r)?;
            let im = read_f64(r)?;
            values.push(Complex64::new(re, im));
        }
        SampledField::new(grid, values)
    }

    /// CSV export with columns `re_p, im_p, re_v, im_v`, one sample per row.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "re_p,im_p,re_v,im_v")?;
        for (p, v) in self.grid.points().iter().zip(&self.values) {
            writeln!(w, "{},{},{},{}", p.re, p.im, v.re, v.im)?;
        }
        Ok(())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// The two Wirtinger derivatives `d = (dx - i dy)/2`, `dbar = (dx + i dy)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wirtinger {
    D,
    DBar,
}

/// The exact multiplier of `e(m, k)` under the chosen derivative on the
/// torus with modulus `z`: `pi (k - conj(z) m)/Im z` for `d` and
/// `pi (z m - k)/Im z` for `dbar`, with `m` the column (coefficient of 1)
/// frequency and `k` the row (coefficient of z) frequency.
pub fn torus_symbol(z: Complex64, which: Wirtinger, m: i64, k: i64) -> Complex64 {
    let m = Complex64::new(m as f64, 0.0);
    let k = Complex64::new(k as f64, 0.0);
    match which {
        Wirtinger::D => (k - z.conj() * m) * (PI / z.im),
        Wirtinger::DBar => (z * m - k) * (PI / z.im),
    }
}

pub(crate) fn wirtinger_multipliers(
    z: Complex64,
    n: usize,
    which: Wirtinger,
) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n * n);
    for row in 0..n {
        let k = signed_freq(row, n);
        for col in 0..n {
            let m = signed_freq(col, n);
            out.push(torus_symbol(z, which, m, k));
        }
    }
    out
}

/// Fourier-collocation Wirtinger derivative on a torus grid. Exact for
/// band-limited fields; other grid kinds must use [`fd_derivative`].
pub fn spectral_derivative(f: &SampledField, which: Wirtinger) -> Result<SampledField> {
    let z = f.grid().modulus()?;
    let n = f.grid().n();
    let mult = wirtinger_multipliers(z, n, which);
    let mut data = f.values().to_vec();
    let mut fft = Fft2::new(n);
    fft.forward(&mut data);
    for (v, m) in data.iter_mut().zip(&mult) {
        *v *= m;
    }
    fft.inverse(&mut data);
    SampledField::new(f.grid().clone(), data)
}

/// 4th-order finite-difference Wirtinger derivative.
///
/// On tori the stencil wraps periodically in lattice coordinates and the
/// same frame change as the spectral path applies, which makes this an
/// independent oracle for [`spectral_derivative`]. Windows and plane boxes
/// differentiate in the real coordinates with one-sided closures at edges.
pub fn fd_derivative(f: &SampledField, which: Wirtinger) -> Result<SampledField> {
    let n = f.grid().n();
    if n < 5 {
        return Err(Error::BadResolution(n, "finite differences need n >= 5"));
    }
    let (dx, dy) = f.grid().spacing();
    let periodic = !matches!(f.grid().kind(), GridKind::Window(_));
    let along_cols = axis_derivative(f.values(), n, true, dx, periodic);
    let along_rows = axis_derivative(f.values(), n, false, dy, periodic);
    let values = match f.grid().kind() {
        GridKind::Torus(lat) => {
            let z = lat.modulus();
            let den = Complex64::new(0.0, 2.0 * z.im);
            along_cols
                .iter()
                .zip(&along_rows)
                .map(|(&fx1, &fx2)| match which {
                    Wirtinger::D => (fx2 - z.conj() * fx1) / den,
                    Wirtinger::DBar => (z * fx1 - fx2) / den,
                })
                .collect()
        }
        _ => along_cols
            .iter()
            .zip(&along_rows)
            .map(|(&fx, &fy)| {
                let ify = Complex64::new(0.0, 1.0) * fy;
                match which {
                    Wirtinger::D => (fx - ify) / 2.0,
                    Wirtinger::DBar => (fx + ify) / 2.0,
                }
            })
            .collect(),
    };
    SampledField::new(f.grid().clone(), values)
}

/// First derivative along one axis of a row-major `n x n` array.
fn axis_derivative(
    values: &[Complex64],
    n: usize,
    along_row: bool,
    h: f64,
    periodic: bool,
) -> Vec<Complex64> {
    let at = |r: usize, c: usize| values[r * n + c];
    let mut out = vec![Complex64::default(); n * n];
    let scale = 1.0 / (12.0 * h);
    for r in 0..n {
        for c in 0..n {
            let line = if along_row { c } else { r };
            let get = |i: i64| -> Complex64 {
                let i = if periodic {
                    (i.rem_euclid(n as i64)) as usize
                } else {
                    i as usize
                };
                if along_row {
                    at(r, i)
                } else {
                    at(i, c)
                }
            };
            let i = line as i64;
            let v = if periodic || (line >= 2 && line + 2 < n) {
                (get(i - 2) - get(i + 2) + 8.0 * (get(i + 1) - get(i - 1))) * scale
            } else if line < 2 {
                // 4th-order one-sided closures at the lower edge.
                let (a, b, c4, d, e) = (get(0), get(1), get(2), get(3), get(4));
                if line == 0 {
                    (-25.0 * a + 48.0 * b - 36.0 * c4 + 16.0 * d - 3.0 * e) * scale
                } else {
                    (-3.0 * a - 10.0 * b + 18.0 * c4 - 6.0 * d + e) * scale
                }
            } else {
                // Mirrored closures at the upper edge.
                let m = (n - 1) as i64;
                let (a, b, c4, d, e) = (get(m), get(m - 1), get(m - 2), get(m - 3), get(m - 4));
                if line + 1 == n {
                    -(-25.0 * a + 48.0 * b - 36.0 * c4 + 16.0 * d - 3.0 * e) * scale
                } else {
                    -(-3.0 * a - 10.0 * b + 18.0 * c4 - 6.0 * d + e) * scale
                }
            };
            out[r * n + c] = v;
        }
    }
    out
}

/// Degree-5 Lagrange weights for the 6 equispaced nodes `j0-2 .. j0+3`
/// around the fractional index `x`, via the barycentric formula with
/// weights proportional to `(-1)^j C(5, j)`.
fn lagrange6_weights(frac: f64) -> [f64; 6] {
    const BARY: [f64; 6] = [1.0, -5.0, 10.0, -10.0, 5.0, -1.0];
    // Nodes sit at offsets -2..=3 relative to the base index.
    let mut w = [0.0; 6];
    for (j, slot) in w.iter_mut().enumerate() {
        let d = frac - (j as f64 - 2.0);
        if d.abs() < 1e-12 {
            let mut exact = [0.0; 6];
            exact[j] = 1.0;
            return exact;
        }
        *slot = BARY[j] / d;
    }
    let total: f64 = w.iter().sum();
    for slot in w.iter_mut() {
        *slot /= total;
    }
    w
}

/// Tensor-product degree-5 interpolation of a row-major periodic `n x n`
/// array at fractional indices (`x_idx` along columns, `y_idx` along rows).
/// Accuracy is `O(h^6)` for smooth periodic data.
pub(crate) fn lagrange6_periodic(
    values: &[Complex64],
    n: usize,
    x_idx: f64,
    y_idx: f64,
) -> Complex64 {
    debug_assert_eq!(values.len(), n * n);
    let xb = x_idx.floor();
    let yb = y_idx.floor();
    let wx = lagrange6_weights(x_idx - xb);
    let wy = lagrange6_weights(y_idx - yb);
    let n_i = n as i64;
    let mut acc = Complex64::default();
    for (jy, wyv) in wy.iter().enumerate() {
        if *wyv == 0.0 {
            continue;
        }
        let row = (yb as i64 + jy as i64 - 2).rem_euclid(n_i) as usize;
        let mut line = Complex64::default();
        for (jx, wxv) in wx.iter().enumerate() {
            if *wxv == 0.0 {
                continue;
            }
            let col = (xb as i64 + jx as i64 - 2).rem_euclid(n_i) as usize;
            line += values[row * n + col] * *wxv;
        }
        acc += line * *wyv;
    }
    acc
}

/// Centered Cauchy-Riemann residual of `f` at `s0`:
/// `|(Fx + i Fy)/2|` with `Fx, Fy` the centered difference quotients at
/// step `h`. Vanishes to `O(h^2)` iff `f` is holomorphic near `s0`; for
/// smooth non-holomorphic `f` it approximates `|dbar f(s0)|`.
pub fn cr_residual(
    f: impl Fn(Complex64) -> Complex64,
    s0: Complex64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidStep(h));
    }
    let i = Complex64::new(0.0, 1.0);
    let fx = (f(s0 + h) - f(s0 - h)) / (2.0 * h);
    let fy = (f(s0 + i * h) - f(s0 - i * h)) / (2.0 * h);
    let r = (fx + i * fy) / 2.0;
    if !r.is_finite() {
        return Err(Error::NonFinite("cr_residual"));
    }
    Ok(r.norm())
}

/// Fallible variant for functions that can reject evaluation points.
pub fn try_cr_residual(
    mut f: impl FnMut(Complex64) -> Result<Complex64>,
    s0: Complex64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidStep(h));
    }
    let i = Complex64::new(0.0, 1.0);
    let fx = (f(s0 + h)? - f(s0 - h)?) / (2.0 * h);
    let fy = (f(s0 + i * h)? - f(s0 - i * h)?) / (2.0 * h);
    let r = (fx + i * fy) / 2.0;
    if !r.is_finite() {
        return Err(Error::NonFinite("cr_residual"));
    }
    Ok(r.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn test_modulus() -> Complex64 {
        Complex64::new(0.3, 1.1)
    }

    fn mode_field(grid: &ComplexGrid, m: i64, k: i64) -> SampledField {
        let n = grid.n();
        SampledField::from_indexed_fn(grid.clone(), |row, col, _| {
            let phase = TAU * (m * col as i64 + k * row as i64) as f64 / n as f64;
            Complex64::new(0.0, phase).exp()
        })
    }

    #[test]
    fn torus_grid_layout() {
        let z = test_modulus();
        let g = make_torus_grid(z, 8).unwrap();
        assert_eq!(g.point(0), Complex64::new(0.0, 0.0));
        assert_eq!(g.point(3), Complex64::new(3.0 / 8.0, 0.0));
        let p = g.point(g.index(2, 3));
        let expect = Complex64::new(3.0 / 8.0, 0.0) + z * (2.0 / 8.0);
        assert!((p - expect).norm() < 1e-15);
        assert!((g.cell_area() - z.im / 64.0).abs() < 1e-15);
        assert!(make_torus_grid(Complex64::new(0.0, -1.0), 8).is_err());
        assert!(make_torus_grid(z, 3).is_err());
    }

    #[test]
    fn spectral_derivative_is_exact_on_modes() {
        let z = test_modulus();
        let g = make_torus_grid(z, 32).unwrap();
        for &(m, k) in &[(0i64, 0i64), (1, 0), (0, 1), (3, -2), (-5, 7)] {
            let f = mode_field(&g, m, k);
            for which in [Wirtinger::D, Wirtinger::DBar] {
                let df = spectral_derivative(&f, which).unwrap();
                let sym = torus_symbol(z, which, m, k);
                let expect = f.map(|v| sym * v);
                assert!(
                    df.max_abs_diff(&expect).unwrap() < 1e-11 * (1.0 + sym.norm()),
                    "mode ({m},{k})"
                );
            }
        }
    }

    #[test]
    fn conjugation_swaps_derivatives() {
        let g = make_torus_grid(test_modulus(), 24).unwrap();
        let f = mode_field(&g, 2, 3).map(|v| v + Complex64::new(0.2, -0.4) * v * v);
        let a = spectral_derivative(&f.map(|v| v.conj()), Wirtinger::DBar).unwrap();
        let b = spectral_derivative(&f, Wirtinger::D).unwrap().map(|v| v.conj());
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn finite_differences_converge_to_spectral() {
        let z = test_modulus();
        let field_on = |n: usize| {
            let g = make_torus_grid(z, n).unwrap();
            SampledField::from_indexed_fn(g, |row, col, _| {
                let x1 = col as f64 / n as f64;
                let x2 = row as f64 / n as f64;
                Complex64::new(
                    (TAU * x1).sin().exp() * (TAU * x2).cos(),
                    (TAU * (x1 + 2.0 * x2)).sin(),
                )
            })
        };
        let mut errs = Vec::new();
        for n in [32, 64] {
            let f = field_on(n);
            let s = spectral_derivative(&f, Wirtinger::DBar).unwrap();
            let d = fd_derivative(&f, Wirtinger::DBar).unwrap();
            errs.push(s.max_abs_diff(&d).unwrap());
        }
        // 4th-order convergence: doubling n divides the error by ~16.
        assert!(errs[0] < 2e-2, "coarse error {}", errs[0]);
        assert!(errs[1] < errs[0] / 10.0, "errors {errs:?}");
    }

    #[test]
    fn window_fd_is_exact_on_low_degree_polynomials() {
        let w = CompactWindow::new(-0.5, 0.5, 0.5, 1.5, 0.25).unwrap();
        let g = make_window_grid(w, 16).unwrap();
        let f = SampledField::from_fn(g.clone(), |p| p * p);
        let d = fd_derivative(&f, Wirtinger::D).unwrap();
        let dbar = fd_derivative(&f, Wirtinger::DBar).unwrap();
        let expect = SampledField::from_fn(g, |p| 2.0 * p);
        assert!(d.max_abs_diff(&expect).unwrap() < 1e-12);
        assert!(dbar.sup_norm() < 1e-12);
    }

    #[test]
    fn cr_residual_examples() {
        // conj(s) has residual exactly 1 everywhere.
        let r = cr_residual(|s| s.conj(), Complex64::new(0.7, -0.3), 1e-3).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
        // |s|^2 has dbar = s, so residual 2 at s0 = 2.
        let r = cr_residual(|s| Complex64::new(s.norm_sqr(), 0.0), Complex64::new(2.0, 0.0), 1e-4)
            .unwrap();
        assert!((r - 2.0).abs() < 1e-8);
        // Entire functions give O(h^2).
        let r = cr_residual(|s| (s * s).exp(), Complex64::new(0.4, 0.2), 1e-5).unwrap();
        assert!(r < 1e-9);
        assert!(cr_residual(|s| s, Complex64::default(), 0.0).is_err());
    }

    #[test]
    fn qlap_round_trip() {
        let g = make_torus_grid(test_modulus(), 8).unwrap();
        let f = SampledField::from_fn(g, |p| p * p.conj() + Complex64::new(0.1, -0.7));
        let mut buf = Vec::new();
        f.write_qlap(&mut buf).unwrap();
        let back = SampledField::read_qlap(&mut buf.as_slice()).unwrap();
        assert_eq!(f, back);

        let w = CompactWindow::new(-1.0, 1.0, 0.2, 1.2, 0.1).unwrap();
        let g = make_window_grid(w, 8).unwrap();
        let f = SampledField::from_fn(g, |p| p.exp());
        let mut buf = Vec::new();
        f.write_qlap(&mut buf).unwrap();
        let back = SampledField::read_qlap(&mut buf.as_slice()).unwrap();
        assert_eq!(f, back);

        buf[0] = b'X';
        assert!(matches!(
            SampledField::read_qlap(&mut buf.as_slice()),
            Err(Error::BadContainer(_))
        ));
    }

    #[test]
    fn csv_export_shape() {
        let g = make_torus_grid(test_modulus(), 4).unwrap();
        let f = SampledField::from_fn(g, |p| p);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "re_p,im_p,re_v,im_v");
        assert_eq!(lines.len(), 17);
        assert!(lines[1].starts_with("0,0,"));
    }

    #[test]
    fn lagrange6_reproduces_band_limited_data() {
        let n = 48;
        let f = |x1: f64, x2: f64| {
            Complex64::new(
                (TAU * x1).cos() + 0.3 * (2.0 * TAU * x2).sin(),
                (TAU * (x1 + x2)).sin(),
            )
        };
        let values: Vec<Complex64> = (0..n * n)
            .map(|idx| f((idx % n) as f64 / n as f64, (idx / n) as f64 / n as f64))
            .collect();
        let mut worst: f64 = 0.0;
        for &(x, y) in &[(0.37, 0.81), (0.501, 0.002), (0.99, 0.49), (5.0, 7.0)] {
            let got = lagrange6_periodic(&values, n, x * n as f64, y * n as f64);
            let want = f(x, y);
            worst = worst.max((got - want).norm());
        }
        assert!(worst < 2e-6, "interpolation error {worst}");
        // Exactly reproduces node values.
        let got = lagrange6_periodic(&values, n, 7.0, 11.0);
        assert!((got - values[11 * n + 7]).norm() < 1e-14);
    }

    #[test]
    fn window_validation() {
        assert!(CompactWindow::new(-1.0, 1.0, 0.5, 1.5, 0.25).is_ok());
        assert!(CompactWindow::new(-1.0, 1.0, 0.2, 1.5, 0.25).is_err());
        assert!(CompactWindow::new(1.0, -1.0, 0.5, 1.5, 0.1).is_err());
        assert!(CompactWindow::new(-1.0, 1.0, 0.5, 1.5, 0.0).is_err());
    }
}
