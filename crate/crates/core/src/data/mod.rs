//! Dataset ingestion, scattering feature extraction, caching and subsets.

mod cache;
mod loaders;
pub mod synthetic;

use std::fmt;
use std::path::PathBuf;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::NormStats;
use crate::rng::{self, Stream};
use crate::scatter::{build_filter_bank, scatter2d, Image};

pub use cache::{cache_features, load_features, CACHE_MAGIC, CACHE_VERSION};
pub use loaders::{load_cifar10, load_cifar10_batch, load_idx, load_named, CIFAR_BATCH_BYTES};

/// Environment variable naming the dataset root directory.
pub const DATA_ENV: &str = "SCATTERDP_DATA";
/// Environment variable naming the feature cache directory.
pub const CACHE_ENV: &str = "SCATTERDP_CACHE";

pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetId {
    Mnist,
    Fashion,
    Cifar10,
    Synthetic,
}

impl DatasetId {
    pub fn name(self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Fashion => "fashion",
            DatasetId::Cifar10 => "cifar10",
            DatasetId::Synthetic => "synthetic",
        }
    }

    /// Subdirectory of the data root holding this dataset's files.
    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Fashion => "fashion-mnist",
            DatasetId::Cifar10 => "cifar-10-batches-bin",
            DatasetId::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetId::Mnist),
            "fashion" | "fashion-mnist" => Ok(DatasetId::Fashion),
            "cifar10" | "cifar-10" => Ok(DatasetId::Cifar10),
            "synthetic" => Ok(DatasetId::Synthetic),
            other => Err(Error::invalid(format!("unknown dataset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetInfo {
    pub size: usize,
    pub seed: u64,
}

/// Images scaled to `[0, 1]`, laid out `N x C x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub id: DatasetId,
    pub split: Split,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
    pub subset: Option<SubsetInfo>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let p = self.pixels();
        &self.images[i * p..(i + 1) * p]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScatterParams {
    pub scales: usize,
    pub orientations: usize,
}

impl Default for ScatterParams {
    fn default() -> Self {
        Self { scales: 2, orientations: 8 }
    }
}

/// Normalization baked into a stored feature tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AppliedNorm {
    None,
    Group { groups: usize },
    Data { stats: NormStats },
}

/// Everything needed to regenerate a feature tensor bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: DatasetId,
    pub split: Split,
    pub subset: Option<SubsetInfo>,
    pub scatter: ScatterParams,
    pub normalization: AppliedNorm,
}

impl Provenance {
    pub fn new(dataset: DatasetId, split: Split, scatter: ScatterParams) -> Self {
        Self { dataset, split, subset: None, scatter, normalization: AppliedNorm::None }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("provenance serializes")
    }
}

/// Scattering features (`N x K x h x w`, 32-bit) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub features: Vec<f32>,
    pub labels: Vec<u8>,
    pub provenance: Provenance,
}

impl FeatureSet {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        features: Vec<f32>,
        labels: Vec<u8>,
        provenance: Provenance,
    ) -> Result<Self> {
        let dim = channels * height * width;
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::GeometryMismatch {
                expected: format!("{} x {dim} features", labels.len()),
                found: format!("{} values", features.len()),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
            return Err(Error::BadLabel { index, label });
        }
        Ok(Self { channels, height, width, features, labels, provenance })
    }

    /// Unlabeled-provenance constructor for in-memory data.
    pub fn from_parts(channels: usize, height: usize, width: usize, features: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        let prov = Provenance::new(DatasetId::Synthetic, Split::Train, ScatterParams::default());
        Self::new(channels, height, width, features, labels, prov)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Flattened feature dimension `K * h * w`.
    pub fn dim(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.features[i * d..(i + 1) * d]
    }

    /// Rows `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        let d = self.dim();
        let mut features = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            features.extend_from_slice(self.sample(i));
        }
        FeatureSet {
            channels: self.channels,
            height: self.height,
            width: self.width,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Scattering features of every image in `raw`, written in sample order.
pub fn extract_features(raw: &RawDataset, params: &ScatterParams) -> Result<FeatureSet> {
    let bank = build_filter_bank(params.scales, params.orientations, raw.height, raw.width)?;
    let (oh, ow) = bank.output_geometry();
    let channels = raw.channels * bank.channels_per_input();
    let dim = channels * oh * ow;
    let mut features = vec![0f32; raw.len() * dim];
    features
        .par_chunks_mut(dim)
        .enumerate()
        .try_for_each(|(i, out)| -> Result<()> {
            let image = Image::new(
                raw.channels,
                raw.height,
                raw.width,
                raw.image(i).iter().map(|&v| v as f64).collect(),
            )?;
            let map = scatter2d(&image, &bank)?;
            for (o, v) in out.iter_mut().zip(&map.values) {
                *o = *v as f32;
            }
            Ok(())
        })?;
    let provenance = Provenance {
        dataset: raw.id,
        split: raw.split,
        subset: raw.subset,
        scatter: *params,
        normalization: AppliedNorm::None,
    };
    FeatureSet::new(channels, oh, ow, features, raw.labels.clone(), provenance)
}

/// Uniform sample of `size` records without replacement, kept in original order.
pub fn subset(raw: &RawDataset, size: usize, seed: u64) -> Result<RawDataset> {
    if size > raw.len() {
        return Err(Error::invalid(format!(
            "subset size {size} exceeds dataset size {}",
            raw.len()
        )));
    }
    let picked = subset_indices(raw.len(), size, seed);
    let p = raw.pixels();
    let mut images = Vec::with_capacity(size * p);
    for &i in &picked {
        images.extend_from_slice(raw.image(i));
    }
    Ok(RawDataset {
        images,
        labels: picked.iter().map(|&i| raw.labels[i]).collect(),
        subset: Some(SubsetInfo { size, seed }),
        ..raw.clone_header()
    })
}

fn subset_indices(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, Stream::Subset);
    let mut picked = index::sample(&mut rng, n, size).into_vec();
    picked.sort_unstable();
    picked
}

/// Feature-space counterpart of [`subset`]: picks the same records.
pub fn subset_features(set: &FeatureSet, size: usize, seed: u64) -> Result<FeatureSet> {
    if size > set.len() {
        return Err(Error::invalid(format!(
            "subset size {size} exceeds dataset size {}",
            set.len()
        )));
    }
    let mut out = set.select(&subset_indices(set.len(), size, seed));
    out.provenance.subset = Some(SubsetInfo { size, seed });
    Ok(out)
}

impl RawDataset {
    fn clone_header(&self) -> RawDataset {
        RawDataset {
            id: self.id,
            split: self.split,
            channels: self.channels,
            height: self.height,
            width: self.width,
            images: Vec::new(),
            labels: Vec::new(),
            subset: self.subset,
        }
    }
}

/// Dataset root from `SCATTERDP_DATA`, if set.
pub fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ENV).map(PathBuf::from)
}

/// Feature cache directory from `SCATTERDP_CACHE`, if set.
pub fn cache_root() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).map(PathBuf::from)
}
