//! Parameterized families of Beltrami coefficients.
//!
//! A preset is a named, reproducible recipe for a coefficient `mu` with
//! `sup |mu| < 1`:
//!
//! * `constant:c` - the constant `c`;
//! * `bump:center,radius,height` - a radially symmetric compactly
//!   supported C-infinity bump `height * exp(1 - 1/(1 - s^2))`,
//!   `s = |p - center| / radius`;
//! * `fourier:m,k,amp` - the single lattice mode
//!   `amp * exp(2 pi i (m x1 + k x2))` in the lattice coordinates of a
//!   torus (`p = x1 + z x2`);
//! * `random:seed,band,k` - a seeded band-limited random field on a torus,
//!   rescaled so its sampled sup norm is exactly `k`. The spectrum is
//!   drawn once from the seed on a fixed internal resolution, so the same
//!   preset denotes the same function at every grid size.
//!
//! Constant and bump presets are defined on the whole plane and can feed
//! the two-sided solver; the lattice presets are torus-only.

use crate::error::{Error, Result};
use crate::fft::{signed_freq, Fft2};
use crate::grid::{ComplexGrid, GridKind, SampledField};
use crate::parse_complex;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::f64::consts::TAU;
use std::fmt;

/// Internal resolution on which random presets are normalized.
const RANDOM_NORM_GRID: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub enum BeltramiPreset {
    Constant { value: Complex64 },
    Bump { center: Complex64, radius: f64, height: Complex64 },
    Fourier { m: i64, k: i64, amp: Complex64 },
    RandomBand { seed: u64, band: u32, sup: f64 },
}

impl BeltramiPreset {
    /// Checks the defining parameters, in particular `sup |mu| < 1`.
    pub fn validate(&self) -> Result<()> {
        let sup = self.sup_bound();
        if !(sup < 1.0) || !sup.is_finite() {
            return Err(Error::DilatationTooLarge(sup));
        }
        match *self {
            BeltramiPreset::Bump { radius, .. } if !(radius > 0.0) => Err(
                Error::BadWindow(format!("bump radius must be positive, got {radius}")),
            ),
            BeltramiPreset::RandomBand { band, .. } if band == 0 => Err(Error::BadWindow(
                "random preset needs band >= 1".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Exact sup norm of the coefficient (for random presets, of the
    /// normalized samples).
    pub fn sup_bound(&self) -> f64 {
        match *self {
            BeltramiPreset::Constant { value } => value.norm(),
            BeltramiPreset::Bump { height, .. } => height.norm(),
            BeltramiPreset::Fourier { amp, .. } => amp.norm(),
            BeltramiPreset::RandomBand { sup, .. } => sup,
        }
    }

    /// Pointwise value for the plane-defined presets; lattice presets are
    /// rejected because their value depends on a torus.
    pub fn eval_plane(&self, p: Complex64) -> Result<Complex64> {
        match *self {
            BeltramiPreset::Constant { value } => Ok(value),
            BeltramiPreset::Bump { center, radius, height } => {
                Ok(bump_profile(p, center, radius) * height)
            }
            BeltramiPreset::Fourier { .. } => Err(Error::TorusOnlyPreset("fourier")),
            BeltramiPreset::RandomBand { .. } => Err(Error::TorusOnlyPreset("random")),
        }
    }

    /// Samples the preset on a grid. Lattice presets require a torus grid.
    pub fn sample(&self, grid: &ComplexGrid) -> Result<SampledField> {
        self.validate()?;
        match *self {
            BeltramiPreset::Constant { value } => {
                Ok(SampledField::from_fn(grid.clone(), |_| value))
            }
            BeltramiPreset::Bump { center, radius, height } => {
                Ok(SampledField::from_fn(grid.clone(), |p| {
                    bump_profile(p, center, radius) * height
                }))
            }
            BeltramiPreset::Fourier { m, k, amp } => {
                let n = grid.n();
                grid.modulus().map_err(|_| Error::TorusOnlyPreset("fourier"))?;
                Ok(SampledField::from_indexed_fn(grid.clone(), |row, col, _| {
                    let phase =
                        TAU * (m * col as i64 + k * row as i64) as f64 / n as f64;
                    amp * Complex64::new(0.0, phase).exp()
                }))
            }
            BeltramiPreset::RandomBand { seed, band, sup } => {
                grid.modulus().map_err(|_| Error::TorusOnlyPreset("random"))?;
                let n = grid.n();
                if n <= 2 * band as usize + 1 {
                    return Err(Error::BadResolution(
                        n,
                        "grid too coarse for the requested random band",
                    ));
                }
                let modes = random_modes(seed, band);
                // Normalize on the fixed internal grid so the preset is the
                // same function at every resolution.
                let reference_sup = band_limited_samples(&modes, band, RANDOM_NORM_GRID)
                    .iter()
                    .map(|v| v.norm())
                    .fold(0.0, f64::max);
                let scale = sup / reference_sup;
                let scaled: Vec<Complex64> =
                    modes.iter().map(|&c| c * scale).collect();
                SampledField::new(grid.clone(), band_limited_samples(&scaled, band, n))
            }
        }
    }

    /// Parses the `name:args` syntax described in the module docs.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::BadPreset(s.to_string(), msg.to_string());
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| bad("expected name:args"))?;
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let preset = match name.trim() {
            "constant" => {
                if parts.len() != 1 {
                    return Err(bad("constant takes one value"));
                }
                BeltramiPreset::Constant { value: parse_complex(parts[0])? }
            }
            "bump" => {
                if parts.len() != 3 {
                    return Err(bad("bump takes center,radius,height"));
                }
                BeltramiPreset::Bump {
                    center: parse_complex(parts[0])?,
                    radius: parts[1].parse().map_err(|_| bad("bad radius"))?,
                    height: parse_complex(parts[2])?,
                }
            }
            "fourier" => {
                if parts.len() != 3 {
                    return Err(bad("fourier takes m,k,amp"));
                }
                BeltramiPreset::Fourier {
                    m: parts[0].parse().map_err(|_| bad("bad m"))?,
                    k: parts[1].parse().map_err(|_| bad("bad k"))?,
                    amp: parse_complex(parts[2])?,
                }
            }
            "random" => {
                if parts.len() != 3 {
                    return Err(bad("random takes seed,band,k"));
                }
                BeltramiPreset::RandomBand {
                    seed: parts[0].parse().map_err(|_| bad("bad seed"))?,
                    band: parts[1].parse().map_err(|_| bad("bad band"))?,
                    sup: parts[2].parse().map_err(|_| bad("bad sup"))?,
                }
            }
            other => {
                return Err(bad(&format!("unknown preset kind {other:?}")));
            }
        };
        preset.validate()?;
        Ok(preset)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BeltramiPreset::Constant { .. } => "constant",
            BeltramiPreset::Bump { .. } => "bump",
            BeltramiPreset::Fourier { .. } => "fourier",
            BeltramiPreset::RandomBand { .. } => "random",
        }
    }

    /// True when [`BeltramiPreset::eval_plane`] is defined.
    pub fn is_plane_defined(&self) -> bool {
        matches!(
            self,
            BeltramiPreset::Constant { .. } | BeltramiPreset::Bump { .. }
        )
    }
}

impl fmt::Display for BeltramiPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = |v: Complex64| format!("{}{}{}i", v.re, if v.im < 0.0 { "" } else { "+" }, v.im);
        match *self {
            BeltramiPreset::Constant { value } => write!(f, "constant:{}", c(value)),
            BeltramiPreset::Bump { center, radius, height } => {
                write!(f, "bump:{},{},{}", c(center), radius, c(height))
            }
            BeltramiPreset::Fourier { m, k, amp } => {
                write!(f, "fourier:{},{},{}", m, k, c(amp))
            }
            BeltramiPreset::RandomBand { seed, band, sup } => {
                write!(f, "random:{},{},{}", seed, band, sup)
            }
        }
    }
}

/// `exp(1 - 1/(1 - s^2))` inside the unit of `s`, zero outside: a radial
/// C-infinity bump equal to 1 at the center.
fn bump_profile(p: Complex64, center: Complex64, radius: f64) -> f64 {
    let s2 = ((p - center) / radius).norm_sqr();
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

/// Seeded spectrum on the `(2 band + 1)^2 - 1` nonzero modes, row-major in
/// `(m, k)` over `[-band, band]^2`, the zero mode skipped.
fn random_modes(seed: u64, band: u32) -> Vec<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let b = band as i64;
    let mut out = Vec::new();
    for m in -b..=b {
        for k in -b..=b {
            if m == 0 && k == 0 {
                continue;
            }
            // Mild spectral decay keeps the field visually smooth.
            let decay = 1.0 / (1.0 + (m * m + k * k) as f64);
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            out.push(Complex64::new(re, im) * decay);
        }
    }
    out
}

/// Evaluates the band-limited field with the given mode list on an `n x n`
/// index grid by zero-padded inverse FFT.
fn band_limited_samples(modes: &[Complex64], band: u32, n: usize) -> Vec<Complex64> {
    let b = band as i64;
    let mut spectrum = vec![Complex64::default(); n * n];
    let mut it = modes.iter();
    for m in -b..=b {
        for k in -b..=b {
            if m == 0 && k == 0 {
                continue;
            }
            let c = *it.next().expect("mode list length");
            let col = m.rem_euclid(n as i64) as usize;
            let row = k.rem_euclid(n as i64) as usize;
            // The inverse FFT divides by n^2; pre-scale so coefficients are
            // the plain Fourier coefficients of the field.
            spectrum[row * n + col] = c * (n * n) as f64;
        }
    }
    let mut fft = Fft2::new(n);
    fft.inverse(&mut spectrum);
    spectrum
}

/// Verifies that both lattice frequencies of a sampled band-limited field
/// stay at or below `band` (used by tests and diagnostics).
pub fn sampled_band(field: &SampledField) -> Result<u32> {
    let n = field.grid().n();
    if !matches!(field.grid().kind(), GridKind::Torus(_)) {
        return Err(Error::GridKindMismatch {
            expected: "torus",
            got: field.grid().kind().name(),
        });
    }
    let mut data = field.values().to_vec();
    let mut fft = Fft2::new(n);
    fft.forward(&mut data);
    let sup: f64 = data.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut band = 0u32;
    for (idx, v) in data.iter().enumerate() {
        if v.norm() > 1e-12 * sup {
            let m = signed_freq(idx % n, n).unsigned_abs() as u32;
            let k = signed_freq(idx / n, n).unsigned_abs() as u32;
            band = band.max(m).max(k);
        }
    }
    Ok(band)
}
