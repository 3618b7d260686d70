//! Private training end to end on synthetic images: scattering features,
//! private data normalization, and DP-SGD calibrated to (epsilon=3, delta=1e-5).
//!
//! cargo run --release --example dp_sgd_synthetic

use scatterdp::data::ScatterParams;
use scatterdp::harness::{synthetic_pair, SyntheticSpec};
use scatterdp::sgd::{train, DpSgdConfig, Normalization, SamplerKind};

fn main() -> scatterdp::Result<()> {
    let spec = SyntheticSpec { train: 4000, test: 1000, ..SyntheticSpec::default() };
    let data = synthetic_pair(&spec, &ScatterParams::default(), 0)?;
    println!("features: {} train / {} test, dim {}", data.train.len(), data.test.len(), data.train.dim());

    let (epsilon, delta) = (3.0, 1e-5);
    let mut cfg = DpSgdConfig {
        dataset_size: data.train.len(),
        batch_size: 512,
        clip: 0.1,
        sigma: 0.0,
        base_lr: 1.0,
        momentum: 0.9,
        epochs: 20,
        sampler: SamplerKind::Poisson,
        normalization: Normalization::Data { c1: 0.2, c2: 0.05, sigma_norm: 8.0, tau: 1e-5 },
        seed: 0,
    };
    cfg.sigma = cfg.calibrate_sigma(epsilon, delta)?;
    println!("noise multiplier for eps={epsilon}: {:.4}", cfg.sigma);

    let record = train(&cfg, &data.train, &data.test, delta)?;
    for e in &record.epochs {
        println!("epoch {:>2}  accuracy {:.4}  epsilon {:.3}", e.epoch, e.accuracy, e.epsilon);
    }

    let clean = DpSgdConfig { sigma: 0.0, normalization: Normalization::Data { c1: 0.2, c2: 0.05, sigma_norm: 0.0, tau: 1e-5 }, ..cfg };
    let baseline = train(&clean, &data.train, &data.test, delta)?;
    println!("non-private baseline: {:.4}", baseline.final_accuracy());
    Ok(())
}
