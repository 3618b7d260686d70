//! Test-side oracles, written independently of the library code paths.

#![allow(dead_code)]

use std::f64::consts::PI;

use scatterdp::data::FeatureSet;
use scatterdp::sgd::{DpSgdConfig, LinearModel};

/// `log((1 + t)^alpha - 1 - alpha t)`, which is >= 0 by convexity for t > -1.
fn log_excess(t: f64, alpha: f64) -> f64 {
    let log_pow = alpha * t.ln_1p();
    if log_pow > 30.0 {
        return log_pow + (-(1.0 + alpha * t) * (-log_pow).exp()).ln_1p();
    }
    if (alpha * t).abs() < 1e-2 {
        // Generalized binomial series from the quadratic term on.
        let mut coef = alpha * (alpha - 1.0) / 2.0;
        let mut power = t * t;
        let mut sum = 0.0;
        for k in 2..200 {
            let term = coef * power;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            coef *= (alpha - k as f64) / (k as f64 + 1.0);
            power *= t;
        }
        return sum.ln();
    }
    (log_pow.exp_m1() - alpha * t).ln()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson over `pieces` equal subintervals, to a tolerance relative
/// to a composite-Simpson estimate of the whole integral.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, pieces: usize, rel_tol: f64) -> f64 {
    let w = (b - a) / pieces as f64;
    let ends: Vec<(f64, f64, f64, f64, f64)> = (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + w * i as f64, a + w * (i + 1) as f64);
            (lo, hi, f(lo), f(0.5 * (lo + hi)), f(hi))
        })
        .collect();
    let coarse: f64 = ends.iter().map(|&(lo, hi, fa, fm, fb)| (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)).sum();
    let tol = rel_tol * coarse.abs() / pieces as f64;
    ends.iter()
        .map(|&(lo, hi, fa, fm, fb)| {
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(f, lo, hi, fa, fm, fb, whole, tol, 30)
        })
        .sum()
}

/// RDP at order `alpha` of the Poisson-subsampled Gaussian, from the
/// definition `A = E_{z~N(0,s^2)}[(1 - q + q exp((2z - 1) / (2 s^2)))^alpha]`.
///
/// The linear term `alpha q (exp(u) - 1)` integrates to zero and is removed
/// analytically, leaving a nonnegative integrand that is integrated in log
/// scale around its peak with adaptive Simpson.
pub fn rdp_by_quadrature(q: f64, sigma: f64, alpha: f64) -> f64 {
    let s2 = sigma * sigma;
    let log_f = |z: f64| {
        let u = (2.0 * z - 1.0) / (2.0 * s2);
        let t = q * u.exp_m1();
        -z * z / (2.0 * s2) - 0.5 * (2.0 * PI * s2).ln() + log_excess(t, alpha)
    };
    let (lo, hi) = (-40.0 * sigma - 2.0, alpha + 40.0 * sigma + 2.0);
    let peak = (0..=4000)
        .map(|i| lo + (hi - lo) * i as f64 / 4000.0)
        .map(|z| log_f(z))
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let f = |z: f64| {
        let v = log_f(z) - peak;
        if v.is_finite() { v.exp() } else { 0.0 }
    };
    let integral = integrate(&f, lo, hi, 400, 1e-11);
    let log_a_minus_1 = peak + integral.ln();
    let log_a = if log_a_minus_1 > 0.0 {
        log_a_minus_1 + (-log_a_minus_1).exp().ln_1p()
    } else {
        log_a_minus_1.exp().ln_1p()
    };
    log_a / (alpha - 1.0)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Same random triples for every suite: q log-uniform on [1e-4, 0.2],
/// sigma uniform on [0.5, 10], integer alpha in [2, 64].
pub fn oracle_triples(count: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let q = (rng.random_range(1e-4f64.ln()..0.2f64.ln())).exp();
            let sigma = rng.random_range(0.5..10.0);
            let alpha = rng.random_range(2..=64) as f64;
            (q, sigma, alpha)
        })
        .collect()
}

/// Clipped momentum SGD written out step by step, in the same operation
/// order as the library: logits, softmax, residual, factorized norm, then
/// accumulation row by row.
pub fn reference_step(model: &mut LinearModel, velocity: &mut [f64], set: &FeatureSet, batch: &[usize], cfg: &DpSgdConfig) {
    let (d, k) = (model.dim(), model.classes());
    let mut acc = vec![0.0; (d + 1) * k];
    for &i in batch {
        let x: Vec<f64> = set.sample(i).iter().map(|&v| v as f64).collect();
        let mut r = model.bias().to_vec();
        for (j, xj) in x.iter().enumerate() {
            if *xj != 0.0 {
                for c in 0..k {
                    r[c] += xj * model.weights()[j * k + c];
                }
            }
        }
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in r.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in r.iter_mut() {
            *v /= sum;
        }
        r[set.labels[i] as usize] -= 1.0;
        let x_sq: f64 = x.iter().map(|v| v * v).sum();
        let r_sq: f64 = r.iter().map(|v| v * v).sum();
        let norm = ((x_sq + 1.0) * r_sq).sqrt();
        let scale = if norm > cfg.clip { cfg.clip / norm } else { 1.0 };
        for v in r.iter_mut() {
            *v *= scale;
        }
        for (j, xj) in x.iter().enumerate() {
            if *xj != 0.0 {
                for c in 0..k {
                    acc[j * k + c] += xj * r[c];
                }
            }
        }
        for c in 0..k {
            acc[d * k + c] += r[c];
        }
    }
    let inv_b = 1.0 / cfg.batch_size as f64;
    let lr = cfg.learning_rate();
    let mut params = model.params();
    for ((theta, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&acc) {
        *v = cfg.momentum * *v + g * inv_b;
        *theta -= lr * *v;
    }
    model.set_params(&params);
}
