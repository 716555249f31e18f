//! Minimal square 2D FFT built on row transforms plus a transpose.
//!
//! Data is row-major with the first lattice direction varying along a row,
//! so a forward transform FFTs every row, transposes, FFTs again, and
//! transposes back. The inverse normalizes by `1/n^2` so that
//! `inverse(forward(x)) == x` up to roundoff.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub(crate) struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transpose_buf: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Fft2 {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            transpose_buf: vec![Complex64::default(); n * n],
        }
    }

    fn transpose(&mut self, data: &mut [Complex64]) {
        let n = self.n;
        for r in 0..n {
            for c in 0..n {
                self.transpose_buf[c * n + r] = data[r * n + c];
            }
        }
        data.copy_from_slice(&self.transpose_buf);
    }

    fn pass(&mut self, data: &mut [Complex64], fwd: bool) {
        let plan = if fwd {
            self.forward.clone()
        } else {
            self.inverse.clone()
        };
        plan.process_with_scratch(data, &mut self.scratch);
        self.transpose(data);
        plan.process_with_scratch(data, &mut self.scratch);
        self.transpose(data);
    }

    /// Unnormalized forward DFT over both axes.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n * self.n);
        self.pass(data, true);
    }

    /// Inverse DFT including the `1/n^2` normalization.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n * self.n);
        self.pass(data, false);
        let scale = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Signed DFT frequency for index `i` of an `n`-point transform, following
/// the usual fftfreq layout (`n/2` maps to `-n/2` for even `n`).
pub(crate) fn signed_freq(i: usize, n: usize) -> i64 {
    let i = i as i64;
    let n = n as i64;
    if i < (n + 1) / 2 {
        i
    } else {
        i - n
    }
}
