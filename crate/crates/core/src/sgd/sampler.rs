use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Poisson,
    Shuffle,
}

impl std::str::FromStr for SamplerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "poisson" => Ok(SamplerKind::Poisson),
            "shuffle" => Ok(SamplerKind::Shuffle),
            other => Err(crate::Error::invalid(format!("unknown sampler '{other}'"))),
        }
    }
}

/// Endless stream of Poisson batches: every index joins independently with
/// probability `B / N`.
#[derive(Debug, Clone)]
pub struct PoissonBatches<R> {
    n: usize,
    rate: f64,
    rng: R,
}

pub fn poisson_batches<R: Rng>(n: usize, batch_size: usize, rng: R) -> PoissonBatches<R> {
    assert!(batch_size > 0 && batch_size <= n, "need 0 < B <= N");
    PoissonBatches { n, rate: batch_size as f64 / n as f64, rng }
}

impl<R: Rng> PoissonBatches<R> {
    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl<R: Rng> Iterator for PoissonBatches<R> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.rate >= 1.0 {
            return Some((0..self.n).collect());
        }
        let rate = self.rate;
        let rng = &mut self.rng;
        Some((0..self.n).filter(|_| rng.random::<f64>() < rate).collect())
    }
}

/// Endless stream of shuffled epochs, each split into consecutive batches of
/// `B` (the last batch of an epoch may be shorter).
#[derive(Debug, Clone)]
pub struct ShuffleBatches<R> {
    batch_size: usize,
    order: Vec<usize>,
    pos: usize,
    rng: R,
}

pub fn shuffle_batches<R: Rng>(n: usize, batch_size: usize, rng: R) -> ShuffleBatches<R> {
    assert!(batch_size > 0 && batch_size <= n, "need 0 < B <= N");
    ShuffleBatches { batch_size, order: (0..n).collect(), pos: n, rng }
}

impl<R: Rng> ShuffleBatches<R> {
    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl<R: Rng> Iterator for ShuffleBatches<R> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.order.len() {
            self.order.sort_unstable();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(batch)
    }
}
