//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Per-step RDP values are composed additively over training steps and with
//! the charge of private data normalization, then converted to `(eps, delta)`.

mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bisection bracket for [`solve_sigma`].
pub const SIGMA_MIN: f64 = 1e-2;
pub const SIGMA_MAX: f64 = 1e4;
/// Relative width at which the noise bisection stops.
pub const SIGMA_REL_TOL: f64 = 1e-4;

/// Rényi orders used by default: `{1.25, 1.5, 1.75, 2.5, 3.5} ∪ {2, ..., 256}`.
pub fn default_orders() -> Vec<f64> {
    let mut orders: Vec<f64> = vec![1.25, 1.5, 1.75, 2.5, 3.5];
    orders.extend((2..=256).map(|a| a as f64));
    orders.sort_by(|a, b| a.partial_cmp(b).expect("finite orders"));
    orders
}

/// `eps(alpha)` over an increasing grid of orders `alpha > 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    alphas: Vec<f64>,
    eps: Vec<f64>,
}

impl RdpCurve {
    pub fn new(alphas: Vec<f64>, eps: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::invalid("RDP curve needs at least one order"));
        }
        if alphas.len() != eps.len() {
            return Err(Error::invalid("RDP curve orders and values differ in length"));
        }
        if alphas.iter().any(|&a| !(a > 1.0) || !a.is_finite()) {
            return Err(Error::invalid("RDP orders must be finite and > 1"));
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("RDP orders must be strictly increasing"));
        }
        if eps.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::invalid("RDP values must be >= 0"));
        }
        Ok(Self { alphas, eps })
    }

    pub fn zeros(alphas: &[f64]) -> Result<Self> {
        Self::new(alphas.to_vec(), vec![0.0; alphas.len()])
    }

    /// Curve of `f(alpha)` evaluated on `alphas`.
    pub fn from_fn(alphas: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let eps = alphas.iter().map(|&a| f(a)).collect::<Result<Vec<_>>>()?;
        Self::new(alphas.to_vec(), eps)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Entrywise sum (sequential composition). Both curves must share the grid.
    pub fn compose(&self, other: &RdpCurve) -> Result<RdpCurve> {
        if self.alphas != other.alphas {
            return Err(Error::invalid("cannot compose RDP curves on different order grids"));
        }
        Ok(RdpCurve {
            alphas: self.alphas.clone(),
            eps: self.eps.iter().zip(&other.eps).map(|(a, b)| a + b).collect(),
        })
    }
}

/// RDP of the Gaussian mechanism with sensitivity 1: `alpha / (2 sigma^2)`.
pub fn gaussian_rdp(alpha: f64, sigma: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::invalid(format!("Rényi order must be > 1, got {alpha}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("noise multiplier must be > 0, got {sigma}")));
    }
    Ok(alpha / (2.0 * sigma * sigma))
}

/// `log(a + b)` from `log a` and `log b`.
fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(exp(x) - 1)` for `x > 0`.
fn log_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `log(A - 1)` for integer order, where
/// `A = sum_k C(a,k) (1-q)^(a-k) q^k exp((k^2 - k) / (2 sigma^2))`.
///
/// Writing each exponential as `1 + expm1(.)` cancels the leading 1 exactly,
/// leaving a sum of nonnegative terms that is accurate for tiny `q`.
fn log_a_minus_one_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    let log_q = q.ln();
    let log_1mq = (-q).ln_1p();
    let a = alpha as f64;
    let mut log_binom = 0.0; // log C(alpha, 0)
    let mut acc = f64::NEG_INFINITY;
    for k in 1..=alpha {
        let kf = k as f64;
        log_binom += (a - kf + 1.0).ln() - kf.ln();
        if k < 2 {
            continue;
        }
        let exponent = (kf * kf - kf) / (2.0 * sigma * sigma);
        let term = log_binom + kf * log_q + (a - kf) * log_1mq + log_expm1(exponent);
        acc = log_add(acc, term);
    }
    acc
}

/// RDP of one step of the Poisson-subsampled Gaussian mechanism.
///
/// Integer orders use the binomial expansion; other orders integrate
/// `E_{x~N(0,s^2)}[(P(x)/Q(x))^alpha]` numerically.
pub fn subsampled_gaussian_rdp(q: f64, sigma: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("sampling rate must be in [0, 1], got {q}")));
    }
    gaussian_rdp(alpha, sigma)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return gaussian_rdp(alpha, sigma);
    }
    let log_a = if alpha.fract() == 0.0 && alpha <= u32::MAX as f64 {
        let lam1 = log_a_minus_one_int(q, sigma, alpha as u64);
        // log(1 + exp(lam1))
        if lam1 > 0.0 {
            lam1 + (-lam1).exp().ln_1p()
        } else {
            lam1.exp().ln_1p()
        }
    } else {
        quadrature::log_moment(q, sigma, alpha)
    };
    Ok((log_a / (alpha - 1.0)).max(0.0))
}

/// One-step curve of the subsampled Gaussian mechanism on `alphas`.
pub fn subsampled_gaussian_curve(q: f64, sigma: f64, alphas: &[f64]) -> Result<RdpCurve> {
    RdpCurve::from_fn(alphas, |a| subsampled_gaussian_rdp(q, sigma, a))
}

/// `steps`-fold composition of `curve`.
pub fn compose_steps(curve: &RdpCurve, steps: u64) -> RdpCurve {
    RdpCurve {
        alphas: curve.alphas.clone(),
        eps: curve.eps.iter().map(|e| e * steps as f64).collect(),
    }
}

/// Result of converting an RDP curve to an `(eps, delta)` guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGuarantee {
    pub epsilon: f64,
    pub alpha: f64,
}

/// `min_alpha eps(alpha) + log(1/delta) / (alpha - 1)` and the minimizing order.
pub fn to_dp(curve: &RdpCurve, delta: f64) -> Result<DpGuarantee> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    if curve.is_empty() {
        return Err(Error::invalid("empty RDP curve"));
    }
    let log_inv_delta = -delta.ln();
    let mut best = DpGuarantee { epsilon: f64::INFINITY, alpha: curve.alphas[0] };
    for (&alpha, &eps) in curve.alphas.iter().zip(&curve.eps) {
        let total = eps + log_inv_delta / (alpha - 1.0);
        if total < best.epsilon {
            best = DpGuarantee { epsilon: total, alpha };
        }
    }
    Ok(best)
}

/// RDP curve charged by private data normalization: two Gaussian
/// mechanisms at `sigma_norm`, i.e. `alpha / sigma_norm^2`.
pub fn data_norm_curve(sigma_norm: f64, alphas: &[f64]) -> Result<RdpCurve> {
    RdpCurve::from_fn(alphas, |a| Ok(2.0 * gaussian_rdp(a, sigma_norm)?))
}

/// Total `(eps, delta)` of optional normalization plus the DP-SGD curve.
pub fn ledger_total(norm_sigma: Option<f64>, sgd_curve: &RdpCurve, delta: f64) -> Result<DpGuarantee> {
    match norm_sigma {
        None => to_dp(sgd_curve, delta),
        Some(s) => {
            let norm = data_norm_curve(s, sgd_curve.alphas())?;
            to_dp(&norm.compose(sgd_curve)?, delta)
        }
    }
}

/// Smallest noise multiplier (up to the bisection tolerance) for which
/// `steps` subsampled Gaussian steps at rate `q` spend at most `eps_target`.
pub fn solve_sigma(q: f64, steps: u64, eps_target: f64, delta: f64) -> Result<f64> {
    solve_sigma_with(q, steps, eps_target, delta, None, &default_orders())
}

/// [`solve_sigma`] on a given order grid, with an optional normalization
/// pre-charge that the budget must also cover.
pub fn solve_sigma_with(
    q: f64,
    steps: u64,
    eps_target: f64,
    delta: f64,
    norm_sigma: Option<f64>,
    alphas: &[f64],
) -> Result<f64> {
    if !(eps_target > 0.0) {
        return Err(Error::invalid(format!("target epsilon must be > 0, got {eps_target}")));
    }
    let spent = |sigma: f64| -> Result<f64> {
        let curve = compose_steps(&subsampled_gaussian_curve(q, sigma, alphas)?, steps);
        Ok(ledger_total(norm_sigma, &curve, delta)?.epsilon)
    };
    let achieved = spent(SIGMA_MAX)?;
    if achieved > eps_target {
        return Err(Error::BracketExhausted { sigma_max: SIGMA_MAX, target: eps_target, achieved });
    }
    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    if spent(lo)? <= eps_target {
        return Ok(lo);
    }
    // Invariant: spent(lo) > target >= spent(hi).
    while hi / lo > 1.0 + SIGMA_REL_TOL {
        let mid = (lo * hi).sqrt();
        if spent(mid)? <= eps_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Composed privacy budget: normalization charge plus DP-SGD steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyLedger {
    norm_curve: RdpCurve,
    sgd_curve: RdpCurve,
    norm_sigma: Option<f64>,
    delta: f64,
}

impl PrivacyLedger {
    pub fn new(delta: f64) -> Result<Self> {
        Self::with_orders(delta, &default_orders())
    }

    pub fn with_orders(delta: f64, alphas: &[f64]) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
        }
        Ok(Self {
            norm_curve: RdpCurve::zeros(alphas)?,
            sgd_curve: RdpCurve::zeros(alphas)?,
            norm_sigma: None,
            delta,
        })
    }

    /// Charge private data normalization at `sigma_norm`.
    pub fn charge_data_norm(&mut self, sigma_norm: f64) -> Result<()> {
        let charge = data_norm_curve(sigma_norm, self.norm_curve.alphas())?;
        self.norm_curve = self.norm_curve.compose(&charge)?;
        self.norm_sigma = Some(sigma_norm);
        Ok(())
    }

    /// Append `steps` subsampled Gaussian steps.
    pub fn charge_steps(&mut self, q: f64, sigma: f64, steps: u64) -> Result<()> {
        let step = subsampled_gaussian_curve(q, sigma, self.sgd_curve.alphas())?;
        self.sgd_curve = self.sgd_curve.compose(&compose_steps(&step, steps))?;
        Ok(())
    }

    /// Append an already-composed DP-SGD curve on the ledger's orders.
    pub fn charge_curve(&mut self, curve: &RdpCurve) -> Result<()> {
        self.sgd_curve = self.sgd_curve.compose(curve)?;
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn norm_curve(&self) -> &RdpCurve {
        &self.norm_curve
    }

    pub fn sgd_curve(&self) -> &RdpCurve {
        &self.sgd_curve
    }

    pub fn total(&self) -> Result<DpGuarantee> {
        to_dp(&self.norm_curve.compose(&self.sgd_curve)?, self.delta)
    }
}
