use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Row-major 2-D complex FFT of a fixed geometry.
#[derive(Clone)]
pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl Fft2 {
    pub(crate) fn new(planner: &mut FftPlanner<f64>, rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.rows * self.cols
    }

    /// Unnormalized forward transform.
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform, scaled by `1 / (rows * cols)`.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.len());
        row.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = data[r * self.cols + c];
            }
            col.process(&mut column);
            for r in 0..self.rows {
                data[r * self.cols + c] = column[r];
            }
        }
    }
}

/// Fourier-domain decimation: averages the `factor x factor` spectral blocks,
/// which equals the spectrum of the spatially subsampled signal.
pub(crate) fn periodize(
    spectrum: &[Complex64],
    rows: usize,
    cols: usize,
    factor: usize,
) -> Vec<Complex64> {
    if factor == 1 {
        return spectrum.to_vec();
    }
    let (sr, sc) = (rows / factor, cols / factor);
    let mut out = vec![Complex64::new(0.0, 0.0); sr * sc];
    for br in 0..factor {
        for bc in 0..factor {
            for r in 0..sr {
                let src = (br * sr + r) * cols + bc * sc;
                let dst = r * sc;
                for c in 0..sc {
                    out[dst + c] += spectrum[src + c];
                }
            }
        }
    }
    let scale = 1.0 / (factor * factor) as f64;
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_recovers_signal() {
        let mut planner = FftPlanner::new();
        let fft = Fft2::new(&mut planner, 8, 4);
        let orig: Vec<Complex64> = (0..32)
            .map(|i| Complex64::new(i as f64 * 0.5 - 3.0, (i % 5) as f64))
            .collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn periodization_matches_spatial_decimation() {
        let mut planner = FftPlanner::new();
        let full = Fft2::new(&mut planner, 8, 8);
        let half = Fft2::new(&mut planner, 4, 4);
        let signal: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new(((i * 7) % 11) as f64, 0.0))
            .collect();
        let mut spec = signal.clone();
        full.forward(&mut spec);
        let mut sub = periodize(&spec, 8, 8, 2);
        half.inverse(&mut sub);
        for r in 0..4 {
            for c in 0..4 {
                let expected = signal[(2 * r) * 8 + 2 * c];
                assert!((sub[r * 4 + c] - expected).norm() < 1e-12);
            }
        }
    }
}
