//! On-disk feature cache.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "SCDPFEAT" | version u32 | n u64 | channels u32 | height u32 | width u32
//! | dtype u8 (1 = f32) | provenance hash u64 | provenance length u32 | provenance JSON
//! | features f32[n * channels * height * width] | labels u8[n] | checksum u64
//! ```
//!
//! The provenance hash and checksum are the first eight bytes (little-endian)
//! of a SHA-256 digest; the checksum covers every preceding byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{FeatureSet, Provenance};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"SCDPFEAT";
pub const CACHE_VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

fn digest64(hasher: Sha256) -> u64 {
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

fn provenance_hash(json: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(json.as_bytes());
    digest64(h)
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> HashingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }
}

struct HashingReader<R: Read> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> HashingReader<R> {
    fn take(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::CacheFormat("unexpected end of file".into())
            } else {
                Error::Io(e)
            }
        })?;
        self.hasher.update(&*buf);
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.take(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
}

/// Writes `set` to `path` in the cache format.
pub fn cache_features(path: impl AsRef<Path>, set: &FeatureSet) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = HashingWriter { inner: BufWriter::new(file), hasher: Sha256::new() };
    let json = set.provenance.to_json();
    w.put(CACHE_MAGIC)?;
    w.put(&CACHE_VERSION.to_le_bytes())?;
    w.put(&(set.len() as u64).to_le_bytes())?;
    for dim in [set.channels, set.height, set.width] {
        w.put(&(dim as u32).to_le_bytes())?;
    }
    w.put(&[DTYPE_F32])?;
    w.put(&provenance_hash(&json).to_le_bytes())?;
    w.put(&(json.len() as u32).to_le_bytes())?;
    w.put(json.as_bytes())?;
    let mut buf = Vec::with_capacity(4 * 4096);
    for chunk in set.features.chunks(4096) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.put(&buf)?;
    }
    w.put(&set.labels)?;
    let checksum = digest64(w.hasher.clone());
    w.inner.write_all(&checksum.to_le_bytes())?;
    w.inner.flush()?;
    Ok(())
}

fn read_cache(path: &Path) -> Result<FeatureSet> {
    let file = File::open(path)?;
    let mut r = HashingReader { inner: BufReader::new(file), hasher: Sha256::new() };
    let mut magic = [0u8; 8];
    r.take(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::CacheFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::CacheFormat(format!("unsupported version {version}")));
    }
    let n = r.u64()? as usize;
    let channels = r.u32()? as usize;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let mut dtype = [0u8; 1];
    r.take(&mut dtype)?;
    if dtype[0] != DTYPE_F32 {
        return Err(Error::CacheFormat(format!("unsupported dtype tag {}", dtype[0])));
    }
    let stored_hash = r.u64()?;
    let json_len = r.u32()? as usize;
    let mut json = vec![0u8; json_len];
    r.take(&mut json)?;
    let json = String::from_utf8(json).map_err(|_| Error::CacheFormat("provenance is not UTF-8".into()))?;

    let count = n
        .checked_mul(channels * height * width)
        .ok_or_else(|| Error::CacheFormat("shape overflows".into()))?;
    let mut features = Vec::with_capacity(count);
    let mut buf = vec![0u8; 4 * 4096];
    let mut remaining = count;
    while remaining > 0 {
        let take = remaining.min(4096);
        r.take(&mut buf[..4 * take])?;
        features.extend(
            buf[..4 * take]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))),
        );
        remaining -= take;
    }
    let mut labels = vec![0u8; n];
    r.take(&mut labels)?;

    let computed = digest64(r.hasher.clone());
    let mut tail = [0u8; 8];
    r.inner
        .read_exact(&mut tail)
        .map_err(|_| Error::CacheFormat("missing checksum".into()))?;
    let stored = u64::from_le_bytes(tail);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    if provenance_hash(&json) != stored_hash {
        return Err(Error::CacheFormat("provenance hash does not match provenance".into()));
    }
    let provenance: Provenance =
        serde_json::from_str(&json).map_err(|e| Error::CacheFormat(format!("provenance: {e}")))?;
    FeatureSet::new(channels, height, width, features, labels, provenance)
}

/// Reads a cache and checks that it was built with `expected` provenance.
pub fn load_features(path: impl AsRef<Path>, expected: &Provenance) -> Result<FeatureSet> {
    let set = read_cache(path.as_ref())?;
    if &set.provenance != expected {
        return Err(Error::ProvenanceMismatch {
            expected: expected.to_json(),
            found: set.provenance.to_json(),
        });
    }
    Ok(set)
}
