//! Thin wrapper around `rustfft` for square 1D/2D arrays stored row-major.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse transforms of length `n` along every axis of an `n^dim` array.
#[derive(Clone)]
pub(crate) struct Transform {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transform")
            .field("n", &self.n)
            .field("dim", &self.dim)
            .finish()
    }
}

impl Transform {
    pub(crate) fn new(n: usize, dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            dim,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Unnormalized forward transform, in place.
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    /// Inverse transform including the `1/n^dim` factor, in place.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.len());
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        if self.dim == 2 {
            transpose_square(data, self.n);
            plan.process_with_scratch(data, &mut scratch);
            transpose_square(data, self.n);
        }
    }

    /// Transform only the rows in `rows` (each of length `n`) of a row-major block.
    pub(crate) fn forward_rows(&self, data: &mut [Complex64], rows: std::ops::Range<usize>) {
        let slice = &mut data[rows.start * self.n..rows.end * self.n];
        let mut scratch = vec![Complex64::default(); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(slice, &mut scratch);
    }

    pub(crate) fn inverse_rows(&self, data: &mut [Complex64], rows: std::ops::Range<usize>) {
        let slice = &mut data[rows.start * self.n..rows.end * self.n];
        let mut scratch = vec![Complex64::default(); self.inverse.get_inplace_scratch_len()];
        self.inverse.process_with_scratch(slice, &mut scratch);
    }
}

/// In-place transpose of an `n x n` row-major matrix, blocked for cache reuse.
pub(crate) fn transpose_square<T: Copy>(data: &mut [T], n: usize) {
    const BLOCK: usize = 32;
    for bi in (0..n).step_by(BLOCK) {
        for bj in (bi..n).step_by(BLOCK) {
            for i in bi..(bi + BLOCK).min(n) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + BLOCK).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_is_involution() {
        for n in [1usize, 3, 33, 64, 70] {
            let orig: Vec<usize> = (0..n * n).collect();
            let mut data = orig.clone();
            transpose_square(&mut data, n);
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(data[i * n + j], orig[j * n + i]);
                }
            }
            transpose_square(&mut data, n);
            assert_eq!(data, orig);
        }
    }

    #[test]
    fn forward_then_inverse_roundtrips_2d() {
        let t = Transform::new(16, 2);
        let orig: Vec<Complex64> = (0..256)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut data = orig.clone();
        t.forward(&mut data);
        t.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
