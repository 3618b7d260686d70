//! Builds the default scattering filter bank (J=2, L=8) and transforms one
//! synthetic 28x28 image and one 3-channel 32x32 image.
//!
//! cargo run --release --example scatter_features

use scatterdp::data::synthetic::oriented_bars;
use scatterdp::scatter::{build_filter_bank, littlewood_paley_max, scatter2d, Image, ScatterPath};

fn main() -> scatterdp::Result<()> {
    let bank = build_filter_bank(2, 8, 28, 28)?;
    println!(
        "bank: {} band-pass + {} low-pass filters, padded to {:?}, Littlewood-Paley max {:.6}",
        bank.band_pass_count(),
        bank.low_pass_count(),
        bank.padded_geometry(),
        littlewood_paley_max(&bank)
    );

    let raw = oriented_bars(1, 1, 28, 0.1, 7);
    let image = Image::new(1, 28, 28, raw.images.iter().map(|&v| v as f64).collect())?;
    let s = scatter2d(&image, &bank)?;
    println!("28x28 grayscale -> {:?} (channels, h, w)", s.shape());

    let paths = bank.paths();
    let order = |p: &ScatterPath| match p {
        ScatterPath::Order0 => 0,
        ScatterPath::Order1 { .. } => 1,
        ScatterPath::Order2 { .. } => 2,
    };
    for k in 0..3 {
        let idx: Vec<usize> = (0..paths.len()).filter(|&i| order(&paths[i]) == k).collect();
        let energy: f64 = idx
            .iter()
            .map(|&c| (0..7).flat_map(|i| (0..7).map(move |j| (i, j))).map(|(i, j)| s.get(c, i, j).powi(2)).sum::<f64>())
            .sum();
        println!("  order {k}: {:>2} channels, energy {energy:.4}", idx.len());
    }

    let color = build_filter_bank(2, 8, 32, 32)?;
    let rgb = Image::new(3, 32, 32, (0..3 * 32 * 32).map(|i| ((i * 37) % 101) as f64 / 100.0).collect())?;
    println!("32x32 RGB -> {:?}", scatter2d(&rgb, &color)?.shape());
    Ok(())
}
