//! Depth-2 wavelet scattering transform.
//!
//! A [`FilterBank`] holds Morlet band-pass filters and a Gaussian low-pass
//! filter in the Fourier domain for one padded image geometry. [`scatter2d`]
//! computes `A_J |W2 |W1 x||` per input channel:
//!
//! * order 0: `A_J x`
//! * order 1: `A_J |x * psi(j1, t1)|`
//! * order 2: `A_J ||x * psi(j1, t1)| * psi(j2, t2)|` for `j1 < j2`
//!
//! All filters are divided by the square root of the Littlewood-Paley maximum
//! so the transform is nonexpansive.

mod fft2;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use fft2::{periodize, Fft2};

/// Scattering path descriptor for one output channel of a single input channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterPath {
    Order0,
    Order1 { j1: usize, theta1: usize },
    Order2 { j1: usize, theta1: usize, j2: usize, theta2: usize },
}

#[derive(Debug, Clone)]
struct BandPass {
    j: usize,
    theta: usize,
    /// `levels[r]` is the filter periodized to resolution `2^-r`, for `r <= j`.
    levels: Vec<Vec<Complex64>>,
}

/// Precomputed Fourier-domain filters for one image geometry.
#[derive(Debug, Clone)]
pub struct FilterBank {
    scales: usize,
    orientations: usize,
    height: usize,
    width: usize,
    padded_height: usize,
    padded_width: usize,
    psi: Vec<BandPass>,
    /// Low-pass filter at resolutions `0..scales`.
    phi: Vec<Vec<Complex64>>,
    lp_max: f64,
    ffts: Vec<Fft2>,
}

impl PartialEq for FilterBank {
    fn eq(&self, other: &Self) -> bool {
        self.scales == other.scales
            && self.orientations == other.orientations
            && self.height == other.height
            && self.width == other.width
            && self.lp_max.to_bits() == other.lp_max.to_bits()
            && self.phi == other.phi
            && self.psi.len() == other.psi.len()
            && self
                .psi
                .iter()
                .zip(&other.psi)
                .all(|(a, b)| a.j == b.j && a.theta == b.theta && a.levels == b.levels)
    }
}

/// Next power of two, which is also a multiple of `2^J` once `len >= 2^J`.
fn padded_len(len: usize, scales: usize) -> usize {
    len.next_power_of_two().max(1 << scales)
}

/// Spatial Gabor filter periodized over the `rows x cols` grid.
fn gabor_2d(rows: usize, cols: usize, sigma: f64, theta: f64, xi: f64, slant: f64) -> Vec<Complex64> {
    let (s, c) = theta.sin_cos();
    // R * diag(1, slant^2) * R^T / (2 sigma^2)
    let d = slant * slant;
    let a = (c * c + d * s * s) / (2.0 * sigma * sigma);
    let b = ((1.0 - d) * c * s) / (2.0 * sigma * sigma);
    let e = (s * s + d * c * c) / (2.0 * sigma * sigma);
    let norm = 2.0 * PI * sigma * sigma / slant;
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    for ex in -2i64..=2 {
        for ey in -2i64..=2 {
            for r in 0..rows {
                let x = (r as i64 + ex * rows as i64) as f64;
                for col in 0..cols {
                    let y = (col as i64 + ey * cols as i64) as f64;
                    let quad = -(a * x * x + 2.0 * b * x * y + e * y * y);
                    let phase = xi * (x * c + y * s);
                    out[r * cols + col] += Complex64::from_polar(quad.exp(), phase);
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Zero-mean Morlet wavelet: a Gabor filter minus a matched Gaussian envelope.
fn morlet_2d(rows: usize, cols: usize, sigma: f64, theta: f64, xi: f64, slant: f64) -> Vec<Complex64> {
    let wave = gabor_2d(rows, cols, sigma, theta, xi, slant);
    let envelope = gabor_2d(rows, cols, sigma, theta, 0.0, slant);
    let k = wave.iter().sum::<Complex64>() / envelope.iter().sum::<Complex64>();
    wave.iter().zip(&envelope).map(|(w, g)| w - k * g).collect()
}

/// Real part of the spectrum; the filters are Hermitian in space up to rounding.
fn real_spectrum(fft: &Fft2, mut spatial: Vec<Complex64>) -> Vec<Complex64> {
    fft.forward(&mut spatial);
    spatial.iter().map(|v| Complex64::new(v.re, 0.0)).collect()
}

pub fn build_filter_bank(scales: usize, orientations: usize, height: usize, width: usize) -> Result<FilterBank> {
    if scales == 0 {
        return Err(Error::invalid("scale depth J must be at least 1"));
    }
    if orientations == 0 {
        return Err(Error::invalid("orientation count L must be at least 1"));
    }
    if scales > 16 {
        return Err(Error::invalid(format!("scale depth J = {scales} is too large")));
    }
    let min = 1usize << scales;
    if height < min || width < min {
        return Err(Error::invalid(format!(
            "image geometry {height}x{width} is smaller than 2^J = {min}"
        )));
    }
    let ph = padded_len(height, scales);
    let pw = padded_len(width, scales);
    if ph - height >= height || pw - width >= width {
        return Err(Error::invalid(format!(
            "image geometry {height}x{width} too small for reflection padding to {ph}x{pw}"
        )));
    }

    let mut planner = FftPlanner::new();
    let ffts: Vec<Fft2> = (0..=scales)
        .map(|r| Fft2::new(&mut planner, ph >> r, pw >> r))
        .collect();

    let mut psi_full = Vec::with_capacity(scales * orientations);
    for j in 0..scales {
        for theta in 0..orientations {
            let l = orientations as f64;
            let angle = ((l - l / 2.0 - 1.0).trunc() - theta as f64) * PI / l;
            let spatial = morlet_2d(
                ph,
                pw,
                0.8 * (1u64 << j) as f64,
                angle,
                0.75 * PI / (1u64 << j) as f64,
                4.0 / orientations as f64,
            );
            psi_full.push((j, theta, real_spectrum(&ffts[0], spatial)));
        }
    }
    let phi_full = real_spectrum(
        &ffts[0],
        gabor_2d(ph, pw, 0.8 * (1u64 << (scales - 1)) as f64, 0.0, 0.0, 1.0),
    );

    let lp = lp_sum_max(&phi_full, psi_full.iter().map(|(_, _, f)| f.as_slice()));
    let inv = 1.0 / lp.sqrt();
    let normalize = |f: &[Complex64]| -> Vec<Complex64> { f.iter().map(|v| v * inv).collect() };

    let psi = psi_full
        .iter()
        .map(|(j, theta, f)| {
            let f = normalize(f);
            let levels = (0..=*j).map(|r| periodize(&f, ph, pw, 1 << r)).collect();
            BandPass { j: *j, theta: *theta, levels }
        })
        .collect();
    let phi_norm = normalize(&phi_full);
    let phi = (0..scales).map(|r| periodize(&phi_norm, ph, pw, 1 << r)).collect();

    let mut bank = FilterBank {
        scales,
        orientations,
        height,
        width,
        padded_height: ph,
        padded_width: pw,
        psi,
        phi,
        lp_max: 0.0,
        ffts,
    };
    bank.lp_max = littlewood_paley_max(&bank);
    Ok(bank)
}

fn lp_sum_max<'a>(phi: &[Complex64], psi: impl Iterator<Item = &'a [Complex64]>) -> f64 {
    let mut sum: Vec<f64> = phi.iter().map(|v| v.norm_sqr()).collect();
    for f in psi {
        for (s, v) in sum.iter_mut().zip(f) {
            *s += v.norm_sqr();
        }
    }
    sum.into_iter().fold(0.0, f64::max)
}

/// Maximum over the full-resolution frequency grid of `|phi|^2 + sum |psi|^2`.
pub fn littlewood_paley_max(bank: &FilterBank) -> f64 {
    lp_sum_max(&bank.phi[0], bank.psi.iter().map(|p| p.levels[0].as_slice()))
}

impl FilterBank {
    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }

    /// Logical (unpadded) input geometry.
    pub fn geometry(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn padded_geometry(&self) -> (usize, usize) {
        (self.padded_height, self.padded_width)
    }

    /// Spatial size of every output channel.
    pub fn output_geometry(&self) -> (usize, usize) {
        let step = 1usize << self.scales;
        (self.height.div_ceil(step), self.width.div_ceil(step))
    }

    /// Cached Littlewood-Paley maximum.
    pub fn lp_max(&self) -> f64 {
        self.lp_max
    }

    pub fn band_pass_count(&self) -> usize {
        self.psi.len()
    }

    pub fn low_pass_count(&self) -> usize {
        1
    }

    /// Output channels per input channel, `1 + L*J + L^2*J*(J-1)/2`.
    pub fn channels_per_input(&self) -> usize {
        let (j, l) = (self.scales, self.orientations);
        1 + l * j + l * l * j * (j - 1) / 2
    }

    /// Output path for each channel of one input channel, in output order.
    pub fn paths(&self) -> Vec<ScatterPath> {
        let mut paths = vec![ScatterPath::Order0];
        for p1 in &self.psi {
            paths.push(ScatterPath::Order1 { j1: p1.j, theta1: p1.theta });
            for p2 in self.psi.iter().filter(|p2| p2.j > p1.j) {
                paths.push(ScatterPath::Order2 {
                    j1: p1.j,
                    theta1: p1.theta,
                    j2: p2.j,
                    theta2: p2.theta,
                });
            }
        }
        paths
    }

    /// Copy of the bank with every filter multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> FilterBank {
        let mut out = self.clone();
        for p in out.psi.iter_mut() {
            for level in p.levels.iter_mut() {
                level.iter_mut().for_each(|v| *v *= factor);
            }
        }
        for level in out.phi.iter_mut() {
            level.iter_mut().for_each(|v| *v *= factor);
        }
        out.lp_max = littlewood_paley_max(&out);
        out
    }

    fn reflect_pad(&self, channel: &[f64]) -> Vec<Complex64> {
        let (h, w) = (self.height, self.width);
        let (ph, pw) = (self.padded_height, self.padded_width);
        let (top, left) = ((ph - h) / 2, (pw - w) / 2);
        let reflect = |i: isize, n: usize| -> usize {
            let n = n as isize;
            let i = if i < 0 { -i } else { i };
            (if i >= n { 2 * (n - 1) - i } else { i }) as usize
        };
        let mut out = Vec::with_capacity(ph * pw);
        for r in 0..ph {
            let sr = reflect(r as isize - top as isize, h);
            for c in 0..pw {
                let sc = reflect(c as isize - left as isize, w);
                out.push(Complex64::new(channel[sr * w + sc], 0.0));
            }
        }
        out
    }

    /// Low-pass, decimate to resolution `2^-J`, crop to the logical output.
    fn average(&self, spectrum: &[Complex64], res: usize, out: &mut [f64], clamp: bool) {
        let (rows, cols) = (self.padded_height >> res, self.padded_width >> res);
        let prod: Vec<Complex64> = spectrum.iter().zip(&self.phi[res]).map(|(a, b)| a * b).collect();
        let mut sub = periodize(&prod, rows, cols, 1 << (self.scales - res));
        self.ffts[self.scales].inverse(&mut sub);
        let full_cols = self.padded_width >> self.scales;
        let full_rows = self.padded_height >> self.scales;
        let (oh, ow) = self.output_geometry();
        let r0 = (((self.padded_height - self.height) / 2) >> self.scales).min(full_rows - oh);
        let c0 = (((self.padded_width - self.width) / 2) >> self.scales).min(full_cols - ow);
        for r in 0..oh {
            for c in 0..ow {
                let v = sub[(r0 + r) * full_cols + c0 + c].re;
                out[r * ow + c] = if clamp { v.max(0.0) } else { v };
            }
        }
    }

    /// Band-pass at resolution `res`, decimate to the filter's scale, modulus,
    /// and return the spectrum of the result at the new resolution.
    fn propagate(&self, spectrum: &[Complex64], filter: &BandPass, res: usize) -> Vec<Complex64> {
        let (rows, cols) = (self.padded_height >> res, self.padded_width >> res);
        let prod: Vec<Complex64> = spectrum
            .iter()
            .zip(&filter.levels[res])
            .map(|(a, b)| a * b)
            .collect();
        let mut sub = periodize(&prod, rows, cols, 1 << (filter.j - res));
        let fft = &self.ffts[filter.j];
        fft.inverse(&mut sub);
        for v in sub.iter_mut() {
            *v = Complex64::new(v.norm(), 0.0);
        }
        fft.forward(&mut sub);
        sub
    }

    fn scatter_channel(&self, channel: &[f64], out: &mut [f64]) {
        let plane = {
            let (oh, ow) = self.output_geometry();
            oh * ow
        };
        let nonneg = channel.iter().all(|&v| v >= 0.0);
        let mut x = self.reflect_pad(channel);
        self.ffts[0].forward(&mut x);

        let mut chunks = out.chunks_mut(plane);
        self.average(&x, 0, chunks.next().expect("order-0 slot"), nonneg);
        for p1 in &self.psi {
            let u1 = self.propagate(&x, p1, 0);
            self.average(&u1, p1.j, chunks.next().expect("order-1 slot"), true);
            for p2 in self.psi.iter().filter(|p2| p2.j > p1.j) {
                let u2 = self.propagate(&u1, p2, p1.j);
                self.average(&u2, p2.j, chunks.next().expect("order-2 slot"), true);
            }
        }
    }
}

/// Real image tensor laid out as `channels x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::GeometryMismatch {
                expected: format!("{} values ({channels}x{height}x{width})", channels * height * width),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }
}

/// Scattering coefficients of one sample, laid out as `channels x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.values[(c * self.height + i) * self.width + j]
    }

    pub fn l2_distance(&self, other: &FeatureMap) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Scattering transform of every channel of `image`.
pub fn scatter2d(image: &Image, bank: &FilterBank) -> Result<FeatureMap> {
    if (image.height, image.width) != bank.geometry() {
        return Err(Error::GeometryMismatch {
            expected: format!("{}x{}", bank.height, bank.width),
            found: format!("{}x{}", image.height, image.width),
        });
    }
    if image.channels == 0 || image.data.len() != image.channels * image.height * image.width {
        return Err(Error::GeometryMismatch {
            expected: format!("{}x{}x{} values", image.channels, image.height, image.width),
            found: format!("{} values", image.data.len()),
        });
    }
    let (oh, ow) = bank.output_geometry();
    let per_input = bank.channels_per_input() * oh * ow;
    let mut values = vec![0.0; image.channels * per_input];
    let pixels = image.height * image.width;
    values
        .par_chunks_mut(per_input)
        .zip(image.data.par_chunks(pixels))
        .for_each(|(out, channel)| bank.scatter_channel(channel, out));
    Ok(FeatureMap {
        channels: image.channels * bank.channels_per_input(),
        height: oh,
        width: ow,
        values,
    })
}
