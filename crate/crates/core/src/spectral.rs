//! Periodic 2D FFT helper for the split-step integrators.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

/// 2D transform of a row-major `n1 x n2` array. The spectrum is kept in
/// transposed layout (`k2`-major), which saves a transpose per step.
pub struct Fft2 {
    pub n1: usize,
    pub n2: usize,
    f1: Arc<dyn Fft<f64>>,
    i1: Arc<dyn Fft<f64>>,
    f2: Arc<dyn Fft<f64>>,
    i2: Arc<dyn Fft<f64>>,
    work: Vec<C64>,
}

impl Fft2 {
    pub fn new(n1: usize, n2: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            n1,
            n2,
            f1: p.plan_fft_forward(n1),
            i1: p.plan_fft_inverse(n1),
            f2: p.plan_fft_forward(n2),
            i2: p.plan_fft_inverse(n2),
            work: vec![C64::new(0.0, 0.0); n1 * n2],
        }
    }

    /// Signed integer frequency of bin `i` out of `n`.
    pub fn freq(i: usize, n: usize) -> f64 {
        if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        }
    }

    /// `data <- IFFT(mult * FFT(data))`, with `mult[k2 * n1 + k1]`.
    pub fn apply_multiplier(&mut self, data: &mut [C64], mult: &[C64]) {
        let (n1, n2) = (self.n1, self.n2);
        debug_assert_eq!(data.len(), n1 * n2);
        self.f2.process(data);
        transpose(data, &mut self.work, n1, n2);
        self.f1.process(&mut self.work);
        let scale = 1.0 / (n1 * n2) as f64;
        self.work.iter_mut().zip(mult).for_each(|(w, m)| *w *= m * scale);
        self.i1.process(&mut self.work);
        transpose(&self.work, data, n2, n1);
        self.i2.process(data);
    }
}

/// `dst[j * rows + i] = src[i * cols + j]`, blocked for cache.
fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize) {
    const B: usize = 32;
    for ib in (0..rows).step_by(B) {
        for jb in (0..cols).step_by(B) {
            for i in ib..(ib + B).min(rows) {
                for j in jb..(jb + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_of_second_derivative() {
        let (n1, n2) = (16, 12);
        let mut f = Fft2::new(n1, n2);
        let l = 2.0 * std::f64::consts::PI;
        let mut u: Vec<C64> = (0..n1 * n2)
            .map(|q| {
                let (i, j) = (q / n2, q % n2);
                let x = l * i as f64 / n1 as f64;
                let y = l * j as f64 / n2 as f64;
                C64::new((2.0 * x).cos() * (3.0 * y).sin(), 0.0)
            })
            .collect();
        let u0 = u.clone();
        let mut mult = vec![C64::new(0.0, 0.0); n1 * n2];
        for k2 in 0..n2 {
            for k1 in 0..n1 {
                let a = Fft2::freq(k1, n1);
                let b = Fft2::freq(k2, n2);
                mult[k2 * n1 + k1] = C64::new(-(a * a + b * b), 0.0);
            }
        }
        f.apply_multiplier(&mut u, &mult);
        for (a, b) in u.iter().zip(&u0) {
            assert!((a - b * (-13.0)).norm() < 1e-12);
        }
    }
}
