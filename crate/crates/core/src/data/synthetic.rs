//! Seeded synthetic datasets for examples and tests that must run without
//! the real image corpora.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DatasetId, FeatureSet, Provenance, RawDataset, ScatterParams, Split, NUM_CLASSES};
use crate::error::Result;
use crate::rng::{self, Stream};

/// Images of a bright bar whose orientation encodes the class
/// (`angle = pi * label / 10`), with a random offset and pixel noise.
pub fn oriented_bars(n: usize, channels: usize, size: usize, noise: f64, seed: u64) -> RawDataset {
    let mut rng = rng::stream(seed, Stream::Synthetic);
    let plane = size * size;
    let mut images = Vec::with_capacity(n * channels * plane);
    let mut labels = Vec::with_capacity(n);
    let mid = (size as f64 - 1.0) / 2.0;
    for _ in 0..n {
        let label = rng.random_range(0..NUM_CLASSES) as u8;
        let angle = PI * label as f64 / NUM_CLASSES as f64;
        let (s, c) = angle.sin_cos();
        let shift = rng.random_range(-0.15..0.15) * size as f64;
        let width = 1.0 + rng.random::<f64>();
        for ch in 0..channels {
            let gain = 0.6 + 0.4 * (ch as f64 + 1.0) / channels as f64;
            for r in 0..size {
                for col in 0..size {
                    let (y, x) = (r as f64 - mid, col as f64 - mid);
                    // Distance to the line through the shifted center along (c, s).
                    let dist = (x * s - y * c - shift).abs();
                    let v = gain * (-(dist * dist) / (2.0 * width * width)).exp();
                    let jitter: f64 = noise * rng.random::<f64>();
                    images.push((v + jitter).clamp(0.0, 1.0) as f32);
                }
            }
        }
        labels.push(label);
    }
    RawDataset {
        id: DatasetId::Synthetic,
        split: Split::Train,
        channels,
        height: size,
        width: size,
        images,
        labels,
        subset: None,
    }
}

/// Gaussian class clusters in feature space: `x = mu_label + noise`, with
/// class means drawn once from `N(0, separation^2)` and isotropic unit noise.
pub fn gaussian_clusters(
    n: usize,
    channels: usize,
    height: usize,
    width: usize,
    separation: f64,
    seed: u64,
) -> Result<FeatureSet> {
    let mut rng = rng::stream(seed, Stream::Synthetic);
    let dim = channels * height * width;
    let means: Vec<f64> = (0..NUM_CLASSES * dim)
        .map(|_| separation * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % NUM_CLASSES) as u8;
        let mu = &means[label as usize * dim..(label as usize + 1) * dim];
        for &m in mu {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push((m + z) as f32);
        }
        labels.push(label);
    }
    let prov = Provenance::new(DatasetId::Synthetic, Split::Train, ScatterParams::default());
    FeatureSet::new(channels, height, width, features, labels, prov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bars_are_seeded_and_in_range() {
        let a = oriented_bars(5, 1, 28, 0.1, 1);
        assert_eq!(a, oriented_bars(5, 1, 28, 0.1, 1));
        assert!(a.images.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert_eq!(a.images.len(), 5 * 28 * 28);
    }

    #[test]
    fn clusters_shape() {
        let s = gaussian_clusters(20, 3, 2, 2, 1.0, 4).unwrap();
        assert_eq!((s.len(), s.dim()), (20, 12));
    }
}
