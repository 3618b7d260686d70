//! DP-SGD for a linear softmax classifier.
//!
//! Per-sample gradients of `-log softmax(W^T x + b)_y` are `x (p - e_y)^T`
//! and `p - e_y`, so their norm factors as `sqrt(|x|^2 + 1) |p - e_y|` and
//! clipping never has to materialize a per-sample gradient.

mod sampler;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSet, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::normalize::{FeatureTransform, NormStats, DEFAULT_TAU};
use crate::privacy::{self, PrivacyLedger, RdpCurve};
use crate::rng::{self, Stream};

pub use sampler::{poisson_batches, shuffle_batches, PoissonBatches, SamplerKind, ShuffleBatches};

/// Batch size at which the base learning rate applies unscaled.
pub const LR_REFERENCE_BATCH: f64 = 512.0;

/// Samples per partial sum; fixed so the reduction tree never depends on
/// the worker count.
const REDUCE_CHUNK: usize = 256;

/// Weights `d x k` (row-major) and a per-class bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    dim: usize,
    classes: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self { dim, classes, weights: vec![0.0; dim * classes], bias: vec![0.0; classes] }
    }

    pub fn from_parts(dim: usize, classes: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != dim * classes || bias.len() != classes {
            return Err(Error::invalid("weight or bias length does not match d x k"));
        }
        Ok(Self { dim, classes, weights, bias })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `(d + 1) * k`.
    pub fn param_count(&self) -> usize {
        (self.dim + 1) * self.classes
    }

    /// Flattened parameters: weights row by row, then the bias row.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    pub fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (xj, row) in x.iter().zip(self.weights.chunks_exact(self.classes)) {
            if *xj != 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xj * w;
                }
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        self.logits_into(x, &mut out);
        out
    }

    /// Cross-entropy `-log softmax(logits)_y`.
    pub fn loss(&self, x: &[f64], y: usize) -> f64 {
        let z = self.logits(x);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        lse - z[y]
    }
}

/// Softmax in place; returns false if the logits are not finite.
fn softmax(z: &mut [f64]) -> bool {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return false;
    }
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    true
}

/// Gradient of the cross-entropy at one sample, laid out like
/// [`LinearModel::params`].
pub fn per_sample_grad(model: &LinearModel, x: &[f64], y: usize) -> Result<Vec<f64>> {
    if y >= model.classes {
        return Err(Error::invalid(format!("label {y} out of range for {} classes", model.classes)));
    }
    if x.len() != model.dim {
        return Err(Error::GeometryMismatch {
            expected: format!("{} features", model.dim),
            found: format!("{} features", x.len()),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input features"));
    }
    let mut r = model.logits(x);
    if !softmax(&mut r) {
        return Err(Error::invalid("non-finite logits"));
    }
    r[y] -= 1.0;
    let mut g = Vec::with_capacity(model.param_count());
    for xj in x {
        g.extend(r.iter().map(|rc| xj * rc));
    }
    g.extend_from_slice(&r);
    Ok(g)
}

/// `g * min(1, clip / |g|)`.
pub fn clip_grad(grad: &[f64], clip: f64) -> Vec<f64> {
    debug_assert!(clip > 0.0);
    let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= clip {
        grad.to_vec()
    } else {
        let s = clip / norm;
        grad.iter().map(|v| v * s).collect()
    }
}

/// Which normalization a run applies to its features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Normalization {
    None,
    Group {
        groups: usize,
    },
    Data {
        c1: f64,
        c2: f64,
        sigma_norm: f64,
        #[serde(default = "default_tau")]
        tau: f64,
    },
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl Normalization {
    /// Noise multiplier charged to the ledger, if this normalization is private.
    pub fn privacy_charge(&self) -> Option<f64> {
        match self {
            Normalization::Data { sigma_norm, .. } => Some(*sigma_norm),
            _ => None,
        }
    }
}

fn default_momentum() -> f64 {
    0.9
}

fn default_sampler() -> SamplerKind {
    SamplerKind::Poisson
}

/// One training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSgdConfig {
    pub dataset_size: usize,
    pub batch_size: usize,
    pub clip: f64,
    pub sigma: f64,
    pub base_lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub epochs: usize,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    pub normalization: Normalization,
    #[serde(default)]
    pub seed: u64,
}

impl DpSgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > self.dataset_size {
            return Err(Error::invalid(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.dataset_size
            )));
        }
        if !(self.clip > 0.0) {
            return Err(Error::invalid("clip norm must be > 0"));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid("noise multiplier must be >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.base_lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("learning rate must be > 0 and momentum in [0, 1)"));
        }
        match self.normalization {
            Normalization::Group { groups } if groups == 0 => {
                Err(Error::invalid("group count must be >= 1"))
            }
            Normalization::Data { c1, c2, sigma_norm, tau }
                if !(c1 > 0.0 && c2 > 0.0 && sigma_norm >= 0.0 && tau > 0.0) =>
            {
                Err(Error::invalid("data normalization needs c1, c2, tau > 0 and sigma_norm >= 0"))
            }
            _ => Ok(()),
        }
    }

    /// `eta = eta_base * B / 512`.
    pub fn learning_rate(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / LR_REFERENCE_BATCH
    }

    pub fn sampling_rate(&self) -> f64 {
        self.batch_size as f64 / self.dataset_size as f64
    }

    /// `floor(N / B)` for Poisson sampling, `ceil(N / B)` for shuffling.
    pub fn steps_per_epoch(&self) -> usize {
        match self.sampler {
            SamplerKind::Poisson => self.dataset_size / self.batch_size,
            SamplerKind::Shuffle => self.dataset_size.div_ceil(self.batch_size),
        }
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch() * self.epochs
    }

    /// Per-coordinate std of the noise in the averaged gradient, `sigma C / B`.
    pub fn gradient_noise_std(&self) -> f64 {
        self.sigma * self.clip / self.batch_size as f64
    }

    /// Per-coordinate variance the noise adds to one parameter update.
    pub fn update_noise_variance(&self) -> f64 {
        (self.learning_rate() * self.gradient_noise_std()).powi(2)
    }

    /// Noise multiplier that spends exactly `epsilon` at `delta` over the
    /// whole run, including the normalization charge.
    pub fn calibrate_sigma(&self, epsilon: f64, delta: f64) -> Result<f64> {
        privacy::solve_sigma_with(
            self.sampling_rate(),
            self.total_steps() as u64,
            epsilon,
            delta,
            self.normalization.privacy_charge(),
            &privacy::default_orders(),
        )
    }
}

/// Momentum buffer, same layout as [`LinearModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub velocity: Vec<f64>,
}

impl MomentumState {
    pub fn zeros(model: &LinearModel) -> Self {
        Self { velocity: vec![0.0; model.param_count()] }
    }
}

/// Features plus the transform that turns stored values into model inputs.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    pub set: &'a FeatureSet,
    pub transform: &'a FeatureTransform,
}

impl<'a> TrainingView<'a> {
    pub fn new(set: &'a FeatureSet, transform: &'a FeatureTransform) -> Self {
        Self { set, transform }
    }

    pub fn input_into(&self, i: usize, out: &mut [f64]) {
        self.transform.apply_into(i, self.set.sample(i), out);
    }
}

/// Sum of clipped per-sample gradients over `batch`, in the parameter layout.
///
/// Partial sums over fixed-size chunks are combined by a pairwise tree, so
/// the result is independent of the thread count.
pub fn clipped_grad_sum(model: &LinearModel, data: TrainingView<'_>, batch: &[usize], clip: f64) -> Result<Vec<f64>> {
    let (d, k) = (model.dim, model.classes);
    let p = model.param_count();
    let mut partials: Vec<Vec<f64>> = batch
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; p];
            let mut x = vec![0.0; d];
            let mut r = vec![0.0; k];
            for &i in chunk {
                data.input_into(i, &mut x);
                model.logits_into(&x, &mut r);
                if !softmax(&mut r) {
                    return Err(Error::Divergence { step: 0 });
                }
                r[data.set.labels[i] as usize] -= 1.0;
                let x_sq: f64 = x.iter().map(|v| v * v).sum();
                let r_sq: f64 = r.iter().map(|v| v * v).sum();
                let norm = ((x_sq + 1.0) * r_sq).sqrt();
                let scale = if norm > clip { clip / norm } else { 1.0 };
                debug_assert!(norm * scale <= clip + 1e-9, "clipped norm {} above {clip}", norm * scale);
                for rc in r.iter_mut() {
                    *rc *= scale;
                }
                for (xj, row) in x.iter().zip(acc.chunks_exact_mut(k)) {
                    if *xj != 0.0 {
                        for (a, rc) in row.iter_mut().zip(&r) {
                            *a += xj * rc;
                        }
                    }
                }
                for (a, rc) in acc[d * k..].iter_mut().zip(&r) {
                    *a += rc;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    if partials.is_empty() {
        return Ok(vec![0.0; p]);
    }
    while partials.len() > 1 {
        let mut next = Vec::with_capacity(partials.len().div_ceil(2));
        let mut it = partials.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        partials = next;
    }
    Ok(partials.pop().expect("one partial"))
}

/// One DP-SGD step with momentum:
/// `g = (sum of clipped grads + N(0, sigma^2 C^2 I)) / B`, `v = mu v + g`,
/// `theta -= eta v`. The divisor is the expected batch size `B`.
pub fn dp_sgd_step(
    model: &mut LinearModel,
    state: &mut MomentumState,
    data: TrainingView<'_>,
    batch: &[usize],
    cfg: &DpSgdConfig,
    step: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let mut grad = clipped_grad_sum(model, data, batch, cfg.clip).map_err(|e| match e {
        Error::Divergence { .. } => Error::Divergence { step },
        other => other,
    })?;
    if cfg.sigma > 0.0 {
        let std = cfg.sigma * cfg.clip;
        for g in grad.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *g += std * z;
        }
    }
    let inv_b = 1.0 / cfg.batch_size as f64;
    let lr = cfg.learning_rate();
    let mut params = model.params();
    for ((theta, v), g) in params.iter_mut().zip(state.velocity.iter_mut()).zip(&grad) {
        *v = cfg.momentum * *v + g * inv_b;
        *theta -= lr * *v;
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { step });
    }
    model.set_params(&params);
    Ok(())
}

/// Fraction of samples whose arg-max logit (lowest index on ties) equals the label.
pub fn evaluate_with(model: &LinearModel, data: TrainingView<'_>) -> Result<f64> {
    let n = data.set.len();
    if n == 0 {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    if data.set.dim() != model.dim {
        return Err(Error::GeometryMismatch {
            expected: format!("{} features", model.dim),
            found: format!("{} features", data.set.dim()),
        });
    }
    let correct: usize = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; model.dim], vec![0.0; model.classes]),
            |(x, z), i| {
                data.input_into(i, x);
                model.logits_into(x, z);
                let mut best = 0;
                for c in 1..z.len() {
                    if z[c] > z[best] {
                        best = c;
                    }
                }
                usize::from(best == data.set.labels[i] as usize)
            },
        )
        .sum();
    Ok(correct as f64 / n as f64)
}

pub fn evaluate(model: &LinearModel, set: &FeatureSet) -> Result<f64> {
    evaluate_with(model, TrainingView::new(set, &FeatureTransform::Identity))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub accuracy: f64,
    /// Spent epsilon at the run's delta; infinite for non-private runs.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub config: DpSgdConfig,
    pub delta: f64,
    pub epochs: Vec<EpochRecord>,
    pub model: LinearModel,
    pub norm_stats: Option<NormStats>,
}

impl TrainingRecord {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.accuracy)
    }

    pub fn best_accuracy(&self) -> f64 {
        self.epochs.iter().map(|e| e.accuracy).fold(0.0, f64::max)
    }

    /// Best per-epoch accuracy among epochs whose spent epsilon is within `limit`.
    pub fn best_within(&self, limit: f64) -> Option<f64> {
        self.epochs
            .iter()
            .filter(|e| e.epsilon <= limit)
            .map(|e| e.accuracy)
            .reduce(f64::max)
    }

    pub fn final_epsilon(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.epsilon)
    }
}

/// Normalization transforms for a run, fitted on the training set only.
pub fn prepare_transforms(
    cfg: &DpSgdConfig,
    train: &FeatureSet,
    test: &FeatureSet,
) -> Result<(FeatureTransform, FeatureTransform, Option<NormStats>)> {
    Ok(match cfg.normalization {
        Normalization::None => (FeatureTransform::Identity, FeatureTransform::Identity, None),
        Normalization::Group { groups } => (
            FeatureTransform::group(train, groups)?,
            FeatureTransform::group(test, groups)?,
            None,
        ),
        Normalization::Data { c1, c2, sigma_norm, tau } => {
            let mut rng = rng::stream(cfg.seed, Stream::Normalization);
            let stats = NormStats::fit(train, c1, c2, sigma_norm, tau, &mut rng)?;
            (
                FeatureTransform::from_stats(&stats, train)?,
                FeatureTransform::from_stats(&stats, test)?,
                Some(stats),
            )
        }
    })
}

/// Runs `epochs * steps_per_epoch` DP-SGD steps from a zero model, recording
/// test accuracy and the spent epsilon after every epoch.
pub fn train(cfg: &DpSgdConfig, train_set: &FeatureSet, test_set: &FeatureSet, delta: f64) -> Result<TrainingRecord> {
    cfg.validate()?;
    if cfg.dataset_size != train_set.len() {
        return Err(Error::invalid(format!(
            "config dataset size {} but {} training samples",
            cfg.dataset_size,
            train_set.len()
        )));
    }
    if train_set.dim() != test_set.dim() {
        return Err(Error::GeometryMismatch {
            expected: format!("{} test features", train_set.dim()),
            found: format!("{} test features", test_set.dim()),
        });
    }
    let (train_tf, test_tf, norm_stats) = prepare_transforms(cfg, train_set, test_set)?;
    let train_view = TrainingView::new(train_set, &train_tf);
    let test_view = TrainingView::new(test_set, &test_tf);

    let mut ledger = PrivacyLedger::new(delta)?;
    // A noiseless mechanism anywhere in the pipeline means no finite guarantee.
    let mut private = cfg.sigma > 0.0;
    if let Some(sigma_norm) = cfg.normalization.privacy_charge() {
        if sigma_norm > 0.0 {
            ledger.charge_data_norm(sigma_norm)?;
        } else {
            private = false;
        }
    }
    let epoch_curve: Option<RdpCurve> = if private {
        let step = privacy::subsampled_gaussian_curve(cfg.sampling_rate(), cfg.sigma, ledger.sgd_curve().alphas())?;
        Some(privacy::compose_steps(&step, cfg.steps_per_epoch() as u64))
    } else {
        None
    };

    let mut model = LinearModel::zeros(train_set.dim(), NUM_CLASSES);
    let mut state = MomentumState::zeros(&model);
    let sampler_rng = rng::stream(cfg.seed, Stream::Sampler);
    let mut batches: Box<dyn Iterator<Item = Vec<usize>>> = match cfg.sampler {
        SamplerKind::Poisson => Box::new(poisson_batches(cfg.dataset_size, cfg.batch_size, sampler_rng)),
        SamplerKind::Shuffle => Box::new(shuffle_batches(cfg.dataset_size, cfg.batch_size, sampler_rng)),
    };

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        for _ in 0..cfg.steps_per_epoch() {
            let batch = batches.next().expect("samplers are endless");
            let mut noise = rng::stream(cfg.seed, Stream::StepNoise(step as u64));
            dp_sgd_step(&mut model, &mut state, train_view, &batch, cfg, step, &mut noise)?;
            step += 1;
        }
        let epsilon = match &epoch_curve {
            Some(curve) => {
                ledger.charge_curve(curve)?;
                ledger.total()?.epsilon
            }
            None => f64::INFINITY,
        };
        let accuracy = evaluate_with(&model, test_view)?;
        epochs.push(EpochRecord { epoch, accuracy, epsilon });
    }
    Ok(TrainingRecord { config: cfg.clone(), delta, epochs, model, norm_stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_bias_gradient() {
        let model = LinearModel::zeros(3, 10);
        let g = per_sample_grad(&model, &[0.5, -1.0, 2.0], 4).unwrap();
        let bias = &g[30..];
        for (c, v) in bias.iter().enumerate() {
            let expected = 0.1 - if c == 4 { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn per_sample_grad_rejects_bad_input() {
        let model = LinearModel::zeros(2, 10);
        assert!(per_sample_grad(&model, &[0.0, f64::NAN], 0).is_err());
        assert!(per_sample_grad(&model, &[0.0, 0.0], 10).is_err());
    }

    #[test]
    fn scaling_input_scales_weight_gradient_only() {
        let model = LinearModel::zeros(2, 10);
        let g1 = per_sample_grad(&model, &[0.3, -0.2], 1).unwrap();
        let g2 = per_sample_grad(&model, &[3.0, -2.0], 1).unwrap();
        for j in 0..20 {
            assert!((g2[j] - 10.0 * g1[j]).abs() < 1e-12);
        }
        assert_eq!(&g1[20..], &g2[20..]);
    }

    #[test]
    fn clip_cases() {
        let small = vec![0.03, 0.04];
        assert_eq!(clip_grad(&small, 0.1), small);
        let big = vec![0.6, 0.8];
        let c = clip_grad(&big, 0.1);
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 0.1).abs() < 1e-15);
        assert_eq!(clip_grad(&c, 0.1), c);
    }

    #[test]
    fn config_rules() {
        let cfg = DpSgdConfig {
            dataset_size: 50_000,
            batch_size: 4096,
            clip: 0.1,
            sigma: 1.0,
            base_lr: 1.0,
            momentum: 0.9,
            epochs: 40,
            sampler: SamplerKind::Poisson,
            normalization: Normalization::None,
            seed: 0,
        };
        assert_eq!(cfg.learning_rate(), 8.0);
        assert_eq!(cfg.steps_per_epoch(), 12);
        assert!(DpSgdConfig { epochs: 0, ..cfg.clone() }.validate().is_err());
        assert!(DpSgdConfig { batch_size: 60_000, ..cfg.clone() }.validate().is_err());
        assert!(DpSgdConfig { clip: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn zero_model_accuracy_is_class_zero_frequency() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
        let set = FeatureSet::from_parts(1, 1, 2, vec![0.5; 200], labels).unwrap();
        let acc = evaluate(&LinearModel::zeros(2, 10), &set).unwrap();
        assert!((acc - 0.1).abs() < 1e-15);
    }
}
