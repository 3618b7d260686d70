//! Fractional-order moments of the subsampled Gaussian by adaptive
//! Gauss-Kronrod quadrature.

use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive integration: split the worst interval until the summed
/// error estimate drops below `rel_tol * |integral|`.
#[cfg(test)]
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, max_intervals: usize) -> f64 {
    let breaks: Vec<f64> = (0..=16).map(|i| a + (b - a) * i as f64 / 16.0).collect();
    integrate_over(f, &breaks, rel_tol, max_intervals)
}

/// Adaptive integration starting from the given sorted breakpoints, so narrow
/// features that a coarse initial grid would step over are resolved.
pub(crate) fn integrate_over(f: impl Fn(f64) -> f64, breaks: &[f64], rel_tol: f64, max_intervals: usize) -> f64 {
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(breaks.len());
    for w in breaks.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1]);
        parts.push((w[0], w[1], v, e));
    }
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || err == 0.0 || parts.len() >= max_intervals {
            return total;
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// `log E_{x~N(0, sigma^2)}[(P(x)/Q(x))^alpha]` for the mixture
/// `P = (1-q) N(0, sigma^2) + q N(1, sigma^2)` and `Q = N(0, sigma^2)`.
pub(crate) fn log_moment(q: f64, sigma: f64, alpha: f64) -> f64 {
    let s2 = sigma * sigma;
    let log_norm = -(sigma * (2.0 * PI).sqrt()).ln();
    // ln(1 + q (e^t - 1)), rewritten for t > 0 so that e^t cannot overflow.
    let log_ratio = |x: f64| {
        let t = (2.0 * x - 1.0) / (2.0 * s2);
        if t > 0.0 {
            t + (q + (1.0 - q) * (-t).exp()).ln()
        } else {
            (q * t.exp_m1()).ln_1p()
        }
    };
    let log_integrand = |x: f64| log_norm - x * x / (2.0 * s2) + alpha * log_ratio(x);

    let lo = -40.0 * sigma - 1.0;
    let hi = alpha + 40.0 * sigma + 1.0;
    let breaks = breakpoints(lo, hi, sigma, &[0.0, 0.5, alpha]);
    let grid = (0..=2000).map(|i| lo + (hi - lo) * i as f64 / 2000.0);
    let peak = grid.chain(breaks.iter().copied()).map(log_integrand).fold(f64::NEG_INFINITY, f64::max);

    let max_intervals = breaks.len() + 4000;
    if peak < 300.0 {
        // Integrate A - 1 directly so tiny moments keep their relative accuracy.
        let excess = integrate_over(
            |x| {
                let log_gauss = log_norm - x * x / (2.0 * s2);
                let log_a = alpha * log_ratio(x);
                if log_a < 700.0 {
                    log_gauss.exp() * log_a.exp_m1()
                } else {
                    (log_gauss + log_a).exp() - log_gauss.exp()
                }
            },
            &breaks,
            1e-13,
            max_intervals,
        );
        excess.ln_1p()
    } else {
        let scaled = integrate_over(|x| (log_integrand(x) - peak).exp(), &breaks, 1e-13, max_intervals);
        peak + scaled.ln()
    }
}

/// Initial breakpoints on `[lo, hi]`: a coarse uniform grid plus points spaced
/// a fraction of `sigma` around each center, where the integrand has modes
/// (0 and alpha) or switches regime (1/2) on a length scale of `sigma`.
fn breakpoints(lo: f64, hi: f64, sigma: f64, centers: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=16).map(|i| lo + (hi - lo) * i as f64 / 16.0).collect();
    for &c in centers {
        for k in -24..=24 {
            pts.push(c + 0.5 * sigma * k as f64);
        }
        for k in -20..=20 {
            pts.push(c + 2.0 * sigma * k as f64);
        }
    }
    pts.retain(|&x| x >= lo && x <= hi);
    pts.sort_by(f64::total_cmp);
    let min_gap = 1e-12 * (hi - lo);
    pts.dedup_by(|b, a| *b - *a < min_gap);
    if let Some(last) = pts.last_mut() {
        *last = hi;
    }
    pts
}
