//! Poisson subsampling vs. shuffled fixed-size batches at the same privacy
//! budget, on synthetic scattering features.
//!
//! cargo run --release --example sampling_compare

use scatterdp::data::ScatterParams;
use scatterdp::harness::{mean, synthetic_pair, SyntheticSpec};
use scatterdp::sgd::{poisson_batches, shuffle_batches, train, DpSgdConfig, Normalization, SamplerKind};
use scatterdp::rng::{stream, Stream};

fn main() -> scatterdp::Result<()> {
    let sizes: Vec<usize> = poisson_batches(10_000, 512, stream(0, Stream::Sampler)).take(8).map(|b| b.len()).collect();
    println!("Poisson batch sizes (expected 512): {sizes:?}");
    let mut s = shuffle_batches(10_000, 512, stream(0, Stream::Sampler));
    println!("shuffle: {} batches per epoch", s.batches_per_epoch());
    let last = (0..s.batches_per_epoch()).map(|_| s.next().unwrap().len()).last().unwrap();
    println!("  last batch of the epoch holds {last} samples");

    let data = synthetic_pair(&SyntheticSpec { train: 4000, test: 1000, ..SyntheticSpec::default() }, &ScatterParams::default(), 0)?;
    for sampler in [SamplerKind::Poisson, SamplerKind::Shuffle] {
        let mut accs = Vec::new();
        let mut sigma = 0.0;
        for seed in 0..3 {
            let mut cfg = DpSgdConfig {
                dataset_size: data.train.len(),
                batch_size: 512,
                clip: 0.1,
                sigma: 0.0,
                base_lr: 1.0,
                momentum: 0.9,
                epochs: 15,
                sampler,
                normalization: Normalization::Group { groups: 27 },
                seed,
            };
            cfg.sigma = cfg.calibrate_sigma(3.0, 1e-5)?;
            sigma = cfg.sigma;
            accs.push(train(&cfg, &data.train, &data.test, 1e-5)?.final_accuracy());
        }
        println!("{sampler:?}: sigma {sigma:.4}, accuracies {accs:.3?}, mean {:.4}", mean(&accs));
    }
    Ok(())
}
