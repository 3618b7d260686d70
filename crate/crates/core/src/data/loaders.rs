use std::fs;
use std::path::Path;

use super::{DatasetId, RawDataset, Split, NUM_CLASSES};
use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const CIFAR_RECORDS: usize = 10_000;
const CIFAR_PIXELS: usize = 3 * 32 * 32;
/// Size of one CIFAR-10 binary batch: 10000 records of 1 label byte + 3072 pixels.
pub const CIFAR_BATCH_BYTES: usize = CIFAR_RECORDS * (1 + CIFAR_PIXELS);

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn read_idx(path: &Path, magic: u32, dims: usize) -> Result<(Vec<usize>, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let header = 4 + 4 * dims;
    if bytes.len() < header {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header as u64,
            actual: bytes.len() as u64,
        });
    }
    let found = be_u32(&bytes, 0);
    if found != magic {
        return Err(Error::BadMagic { path: path.to_path_buf(), expected: magic, found });
    }
    let shape: Vec<usize> = (0..dims).map(|d| be_u32(&bytes, 4 + 4 * d) as usize).collect();
    let expected = header + shape.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes.len() > expected {
        return Err(Error::invalid(format!(
            "{}: {} trailing bytes after IDX payload",
            path.display(),
            bytes.len() - expected
        )));
    }
    Ok((shape, bytes[header..].to_vec()))
}

fn check_labels(labels: &[u8]) -> Result<()> {
    match labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
        Some(index) => Err(Error::BadLabel { index, label: labels[index] }),
        None => Ok(()),
    }
}

/// Reads an IDX image file (`0x00000803`) and label file (`0x00000801`).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawDataset> {
    let (shape, pixels) = read_idx(images_path.as_ref(), IDX_IMAGES_MAGIC, 3)?;
    let (lshape, labels) = read_idx(labels_path.as_ref(), IDX_LABELS_MAGIC, 1)?;
    if shape[0] != lshape[0] {
        return Err(Error::CountMismatch { images: shape[0], labels: lshape[0] });
    }
    check_labels(&labels)?;
    Ok(RawDataset {
        id: DatasetId::Mnist,
        split: Split::Train,
        channels: 1,
        height: shape[1],
        width: shape[2],
        images: pixels.iter().map(|&p| p as f32 / 255.0).collect(),
        labels,
        subset: None,
    })
}

/// Reads one CIFAR-10 binary batch file.
pub fn load_cifar10_batch(path: impl AsRef<Path>) -> Result<RawDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() != CIFAR_BATCH_BYTES {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: CIFAR_BATCH_BYTES as u64,
            actual: bytes.len() as u64,
        });
    }
    let mut images = Vec::with_capacity(CIFAR_RECORDS * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(CIFAR_RECORDS);
    for (index, record) in bytes.chunks_exact(1 + CIFAR_PIXELS).enumerate() {
        if record[0] as usize >= NUM_CLASSES {
            return Err(Error::BadLabel { index, label: record[0] });
        }
        labels.push(record[0]);
        images.extend(record[1..].iter().map(|&p| p as f32 / 255.0));
    }
    Ok(RawDataset {
        id: DatasetId::Cifar10,
        split: Split::Train,
        channels: 3,
        height: 32,
        width: 32,
        images,
        labels,
        subset: None,
    })
}

/// Reads the CIFAR-10 binary distribution directory.
pub fn load_cifar10(dir: impl AsRef<Path>, split: Split) -> Result<RawDataset> {
    let dir = dir.as_ref();
    let files: Vec<String> = match split {
        Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".to_string()],
    };
    let mut out: Option<RawDataset> = None;
    for name in files {
        let batch = load_cifar10_batch(dir.join(name))?;
        match out.as_mut() {
            None => out = Some(batch),
            Some(acc) => {
                acc.images.extend_from_slice(&batch.images);
                acc.labels.extend_from_slice(&batch.labels);
            }
        }
    }
    let mut out = out.expect("at least one batch");
    out.split = split;
    Ok(out)
}

/// Loads a dataset from `root/<dataset dir>` using the standard file names.
pub fn load_named(root: impl AsRef<Path>, id: DatasetId, split: Split) -> Result<RawDataset> {
    let dir = root.as_ref().join(id.dir_name());
    let mut raw = match id {
        DatasetId::Mnist | DatasetId::Fashion => {
            let prefix = match split {
                Split::Train => "train",
                Split::Test => "t10k",
            };
            load_idx(
                dir.join(format!("{prefix}-images-idx3-ubyte")),
                dir.join(format!("{prefix}-labels-idx1-ubyte")),
            )?
        }
        DatasetId::Cifar10 => load_cifar10(&dir, split)?,
        DatasetId::Synthetic => {
            return Err(Error::invalid("synthetic data has no on-disk files"));
        }
    };
    raw.id = id;
    raw.split = split;
    Ok(raw)
}
