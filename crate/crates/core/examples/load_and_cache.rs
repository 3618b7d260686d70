//! Reading dataset files and round-tripping features through the on-disk
//! cache. Uses the real datasets when SCATTERDP_DATA is set; otherwise
//! writes a tiny IDX pair to a temporary directory and reads that.
//!
//! cargo run --release --example load_and_cache

use scatterdp::data::{
    cache_features, extract_features, load_features, load_idx, load_named, data_root, subset, DatasetId,
    ScatterParams, Split,
};

fn write_tiny_idx(dir: &std::path::Path) -> std::io::Result<(std::path::PathBuf, std::path::PathBuf)> {
    let n = 20u32;
    let mut images = Vec::new();
    images.extend_from_slice(&0x0803u32.to_be_bytes());
    images.extend_from_slice(&n.to_be_bytes());
    images.extend_from_slice(&28u32.to_be_bytes());
    images.extend_from_slice(&28u32.to_be_bytes());
    images.extend((0..n as usize * 784).map(|i| ((i * 7) % 256) as u8));
    let mut labels = Vec::new();
    labels.extend_from_slice(&0x0801u32.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    labels.extend((0..n).map(|i| (i % 10) as u8));
    let (pi, pl) = (dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"));
    std::fs::write(&pi, images)?;
    std::fs::write(&pl, labels)?;
    Ok((pi, pl))
}

fn main() -> scatterdp::Result<()> {
    let tmp = std::env::temp_dir().join(format!("scatterdp-example-{}", std::process::id()));
    std::fs::create_dir_all(&tmp)?;

    let raw = match data_root() {
        Some(root) => subset(&load_named(root, DatasetId::Mnist, Split::Train)?, 500, 0)?,
        None => {
            println!("SCATTERDP_DATA not set; using a generated IDX file");
            let (images, labels) = write_tiny_idx(&tmp)?;
            load_idx(images, labels)?
        }
    };
    println!("loaded {} images of {}x{}x{}", raw.len(), raw.channels, raw.height, raw.width);

    let features = extract_features(&raw, &ScatterParams::default())?;
    let path = tmp.join("features.bin");
    cache_features(&path, &features)?;
    let size = std::fs::metadata(&path)?.len();
    let back = load_features(&path, &features.provenance)?;
    println!(
        "cached {} x {} features ({size} bytes); round trip exact: {}",
        back.len(),
        back.dim(),
        back == features
    );

    let mut other = features.provenance.clone();
    other.scatter.orientations = 6;
    match load_features(&path, &other) {
        Err(e) => println!("loading with different scattering parameters fails: {e}"),
        Ok(_) => println!("unexpected: provenance check passed"),
    }
    std::fs::remove_dir_all(&tmp)?;
    Ok(())
}
