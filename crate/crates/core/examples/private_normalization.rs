//! Private per-channel standardization of feature tensors, compared with
//! exact standardization and with per-sample group normalization.
//!
//! cargo run --release --example private_normalization

use scatterdp::data::synthetic::gaussian_clusters;
use scatterdp::normalize::{group_norm_set, priv_data_norm, DEFAULT_TAU};
use scatterdp::privacy::{data_norm_curve, default_orders, to_dp};
use scatterdp::rng::{stream, Stream};

fn main() -> scatterdp::Result<()> {
    let data = gaussian_clusters(20_000, 9, 3, 3, 0.5, 1)?;

    let mut rng = stream(0, Stream::Normalization);
    let (_, exact) = priv_data_norm(&data, 100.0, 100.0, 0.0, DEFAULT_TAU, &mut rng)?;
    let mut rng = stream(0, Stream::Normalization);
    let (normalized, private) = priv_data_norm(&data, 2.0, 8.0, 8.0, DEFAULT_TAU, &mut rng)?;

    println!("channel  exact mean  private mean   exact var  private var");
    for c in 0..data.channels {
        println!(
            "{c:>7}  {:>10.4}  {:>12.4}  {:>10.4}  {:>11.4}",
            exact.mean[c], private.mean[c], exact.var[c], private.var[c]
        );
    }
    let dim = normalized.dim();
    let avg: f64 = normalized.features.iter().map(|&v| v as f64).sum::<f64>() / normalized.features.len() as f64;
    println!("normalized features: {} x {dim}, overall mean {avg:.4}", normalized.len());

    // The normalization charge on its own, for reference.
    let dp = to_dp(&data_norm_curve(8.0, &default_orders())?, 1e-5)?;
    println!("normalization alone at sigma_norm=8 costs eps {:.4} at delta=1e-5", dp.epsilon);

    let grouped = group_norm_set(&data, 3)?;
    let s = grouped.sample(0);
    let g0: Vec<f64> = s[..dim / 3].iter().map(|&v| v as f64).collect();
    let m = g0.iter().sum::<f64>() / g0.len() as f64;
    println!("group norm (G=3), first group of sample 0: mean {m:.2e}");
    Ok(())
}
