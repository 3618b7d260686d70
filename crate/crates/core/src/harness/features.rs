//! Loading (or extracting and caching) the feature sets an experiment needs.

use std::path::{Path, PathBuf};

use crate::data::{
    self, cache_features, extract_features, load_features, load_named, synthetic, DatasetId, FeatureSet,
    Provenance, ScatterParams, Split,
};
use crate::error::{Error, Result};

use super::config::SyntheticSpec;

/// Train and test features of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPair {
    pub train: FeatureSet,
    pub test: FeatureSet,
}

/// Where an experiment finds raw data and cached features.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataSources {
    pub data_root: Option<PathBuf>,
    pub cache_root: Option<PathBuf>,
}

impl DataSources {
    /// Reads `SCATTERDP_DATA` and `SCATTERDP_CACHE`.
    pub fn from_env() -> Self {
        Self { data_root: data::data_root(), cache_root: data::cache_root() }
    }
}

/// Canonical cache file for one split, e.g. `mnist-train-J2L8.bin`.
pub fn cache_path(root: &Path, id: DatasetId, split: Split, scatter: &ScatterParams) -> PathBuf {
    let split = match split {
        Split::Train => "train",
        Split::Test => "test",
    };
    root.join(format!("{}-{split}-J{}L{}.bin", id.name(), scatter.scales, scatter.orientations))
}

/// Features of one split: from the cache when present, otherwise extracted
/// from the raw files (and cached when a cache directory is configured).
pub fn split_features(id: DatasetId, split: Split, scatter: &ScatterParams, src: &DataSources) -> Result<FeatureSet> {
    let provenance = Provenance::new(id, split, *scatter);
    if let Some(cache) = &src.cache_root {
        let path = cache_path(cache, id, split, scatter);
        if path.exists() {
            return load_features(&path, &provenance);
        }
    }
    let root = src.data_root.as_ref().ok_or_else(|| {
        Error::MissingData(format!(
            "no cached {id} features and {} is not set",
            data::DATA_ENV
        ))
    })?;
    let raw = load_named(root, id, split)?;
    let set = extract_features(&raw, scatter)?;
    if let Some(cache) = &src.cache_root {
        std::fs::create_dir_all(cache)?;
        cache_features(cache_path(cache, id, split, scatter), &set)?;
    }
    Ok(set)
}

/// Oriented-bar images (class = bar angle) pushed through the scattering
/// transform; train and test use disjoint generator seeds.
pub fn synthetic_pair(spec: &SyntheticSpec, scatter: &ScatterParams, seed: u64) -> Result<DataPair> {
    let train_raw = synthetic::oriented_bars(spec.train, 1, spec.size, spec.noise, seed);
    let mut test_raw = synthetic::oriented_bars(spec.test, 1, spec.size, spec.noise, seed ^ 0x5eed_7e57);
    test_raw.split = Split::Test;
    Ok(DataPair { train: extract_features(&train_raw, scatter)?, test: extract_features(&test_raw, scatter)? })
}

pub fn load_pair(id: DatasetId, scatter: &ScatterParams, synthetic: &SyntheticSpec, src: &DataSources) -> Result<DataPair> {
    if id == DatasetId::Synthetic {
        return synthetic_pair(synthetic, scatter, 0);
    }
    Ok(DataPair {
        train: split_features(id, Split::Train, scatter, src)?,
        test: split_features(id, Split::Test, scatter, src)?,
    })
}
