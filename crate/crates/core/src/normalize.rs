//! Feature normalization.
//!
//! Group normalization standardizes channel groups within each sample and
//! costs no privacy. Private data normalization estimates per-channel mean
//! and variance over the training set with two clipped Gaussian mechanisms;
//! its RDP charge is `alpha / sigma_norm^2`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AppliedNorm, FeatureSet};
use crate::error::{Error, Result};
use crate::scatter::FeatureMap;

/// Default variance floor for private data normalization.
pub const DEFAULT_TAU: f64 = 1e-5;
/// Variance floor inside group normalization.
pub const GROUP_VAR_FLOOR: f64 = 1e-8;

const REDUCE_CHUNK: usize = 1024;

/// Private per-channel statistics and the parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub sigma_norm: f64,
    pub tau: f64,
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        sum += v;
        n += 1;
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var)
}

fn check_groups(channels: usize, groups: usize) -> Result<()> {
    if groups == 0 || channels % groups != 0 {
        return Err(Error::invalid(format!(
            "group count {groups} does not divide {channels} channels"
        )));
    }
    Ok(())
}

/// Per-group `(mean, 1/std)` of one sample.
fn group_stats(sample: impl Fn(usize) -> f64, dim: usize, groups: usize) -> Vec<(f64, f64)> {
    let len = dim / groups;
    (0..groups)
        .map(|g| {
            let (m, v) = mean_var((g * len..(g + 1) * len).map(&sample));
            (m, 1.0 / v.max(GROUP_VAR_FLOOR).sqrt())
        })
        .collect()
}

/// Standardizes each of `groups` contiguous channel groups to zero mean and
/// unit variance.
pub fn group_norm(features: &FeatureMap, groups: usize) -> Result<FeatureMap> {
    check_groups(features.channels, groups)?;
    let dim = features.values.len();
    let stats = group_stats(|i| features.values[i], dim, groups);
    let len = dim / groups;
    let values = features
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (m, inv) = stats[i / len];
            (v - m) * inv
        })
        .collect();
    Ok(FeatureMap { values, ..features.clone() })
}

/// Clipped, noised mean of per-sample spatial channel means (of `x` or `x^2`).
fn channel_mean_impl(
    data: &FeatureSet,
    clip: f64,
    sigma_norm: f64,
    square: bool,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("cannot estimate channel means of an empty dataset"));
    }
    if !(clip > 0.0) {
        return Err(Error::invalid(format!("clip norm must be > 0, got {clip}")));
    }
    if !(sigma_norm >= 0.0) {
        return Err(Error::invalid(format!("noise multiplier must be >= 0, got {sigma_norm}")));
    }
    let (k, plane) = (data.channels, data.plane());
    let indices: Vec<usize> = (0..data.len()).collect();
    let partials: Vec<Vec<f64>> = indices
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; k];
            let mut mu = vec![0.0; k];
            for &i in chunk {
                let x = data.sample(i);
                for (c, m) in mu.iter_mut().enumerate() {
                    let s: f64 = x[c * plane..(c + 1) * plane]
                        .iter()
                        .map(|&v| if square { v as f64 * v as f64 } else { v as f64 })
                        .sum();
                    *m = s / plane as f64;
                }
                let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = if norm > clip { clip / norm } else { 1.0 };
                for (a, m) in acc.iter_mut().zip(&mu) {
                    *a += m * scale;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; k];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    let n = data.len() as f64;
    let noise_std = sigma_norm * clip / n;
    for t in total.iter_mut() {
        *t /= n;
        if sigma_norm > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            *t += noise_std * z;
        }
    }
    Ok(total)
}

/// Private per-channel mean: clip each sample's vector of spatial channel
/// means to norm `clip`, average, and add `N(0, (sigma_norm * clip / N)^2)`.
pub fn priv_channel_mean(data: &FeatureSet, clip: f64, sigma_norm: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    channel_mean_impl(data, clip, sigma_norm, false, rng)
}

impl NormStats {
    /// Private mean and variance estimates; the mean noise is drawn before
    /// the mean-square noise.
    pub fn fit(data: &FeatureSet, c1: f64, c2: f64, sigma_norm: f64, tau: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid(format!("variance floor must be > 0, got {tau}")));
        }
        let mean = channel_mean_impl(data, c1, sigma_norm, false, rng)?;
        let mean_sq = channel_mean_impl(data, c2, sigma_norm, true, rng)?;
        let var = mean_sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s - m * m).max(tau))
            .collect();
        Ok(Self { mean, var, c1, c2, sigma_norm, tau })
    }

    /// Materialized `(x - mean) / sqrt(var)` per channel.
    pub fn apply(&self, data: &FeatureSet) -> Result<FeatureSet> {
        let transform = FeatureTransform::from_stats(self, data)?;
        let mut out = transform.materialize(data);
        out.provenance.normalization = AppliedNorm::Data { stats: self.clone() };
        Ok(out)
    }
}

/// Private data normalization of `data`, returning the normalized features
/// and the statistics to reuse on held-out data.
pub fn priv_data_norm(
    data: &FeatureSet,
    c1: f64,
    c2: f64,
    sigma_norm: f64,
    tau: f64,
    rng: &mut impl Rng,
) -> Result<(FeatureSet, NormStats)> {
    let stats = NormStats::fit(data, c1, c2, sigma_norm, tau, rng)?;
    Ok((stats.apply(data)?, stats))
}

/// Group normalization of every sample in a feature set.
pub fn group_norm_set(data: &FeatureSet, groups: usize) -> Result<FeatureSet> {
    let transform = FeatureTransform::group(data, groups)?;
    let mut out = transform.materialize(data);
    out.provenance.normalization = AppliedNorm::Group { groups };
    Ok(out)
}

/// Per-sample affine map from stored features to model inputs, applied on
/// the fly so large feature sets are never duplicated.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureTransform {
    Identity,
    /// Per-channel `(x - shift) * scale`.
    Channel { shift: Vec<f64>, scale: Vec<f64>, plane: usize },
    /// Per-sample, per-group `(x - shift) * scale`.
    Group { group_len: usize, groups: usize, stats: Vec<(f64, f64)> },
}

impl FeatureTransform {
    pub fn from_stats(stats: &NormStats, data: &FeatureSet) -> Result<Self> {
        if stats.mean.len() != data.channels || stats.var.len() != data.channels {
            return Err(Error::GeometryMismatch {
                expected: format!("{} channels", stats.mean.len()),
                found: format!("{} channels", data.channels),
            });
        }
        Ok(FeatureTransform::Channel {
            shift: stats.mean.clone(),
            scale: stats.var.iter().map(|v| 1.0 / v.sqrt()).collect(),
            plane: data.plane(),
        })
    }

    pub fn group(data: &FeatureSet, groups: usize) -> Result<Self> {
        check_groups(data.channels, groups)?;
        let dim = data.dim();
        let stats = (0..data.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let x = data.sample(i);
                group_stats(|j| x[j] as f64, dim, groups)
            })
            .collect();
        Ok(FeatureTransform::Group { group_len: dim / groups, groups, stats })
    }

    /// Writes the transformed sample `index` (stored as `raw`) into `out`.
    pub fn apply_into(&self, index: usize, raw: &[f32], out: &mut [f64]) {
        match self {
            FeatureTransform::Identity => {
                for (o, &v) in out.iter_mut().zip(raw) {
                    *o = v as f64;
                }
            }
            FeatureTransform::Channel { shift, scale, plane } => {
                for (c, (o, x)) in out.chunks_mut(*plane).zip(raw.chunks(*plane)).enumerate() {
                    let (m, s) = (shift[c], scale[c]);
                    for (o, &v) in o.iter_mut().zip(x) {
                        *o = (v as f64 - m) * s;
                    }
                }
            }
            FeatureTransform::Group { group_len, groups, stats } => {
                let sample_stats = &stats[index * groups..(index + 1) * groups];
                for ((o, x), &(m, s)) in out.chunks_mut(*group_len).zip(raw.chunks(*group_len)).zip(sample_stats) {
                    for (o, &v) in o.iter_mut().zip(x) {
                        *o = (v as f64 - m) * s;
                    }
                }
            }
        }
    }

    pub fn materialize(&self, data: &FeatureSet) -> FeatureSet {
        let dim = data.dim();
        let mut features = vec![0f32; data.features.len()];
        features.par_chunks_mut(dim).enumerate().for_each_init(
            || vec![0.0; dim],
            |buf, (i, out)| {
                self.apply_into(i, data.sample(i), buf);
                for (o, v) in out.iter_mut().zip(buf.iter()) {
                    *o = *v as f32;
                }
            },
        );
        FeatureSet { features, ..data.clone() }
    }
}
