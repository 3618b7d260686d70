//! Renyi-DP accounting: per-step RDP of the subsampled Gaussian, composition,
//! conversion to (epsilon, delta), and solving for the noise multiplier.
//!
//! cargo run --release --example privacy_accounting

use scatterdp::privacy::{
    compose_steps, default_orders, solve_sigma, solve_sigma_with, subsampled_gaussian_curve,
    subsampled_gaussian_rdp, to_dp, PrivacyLedger,
};

fn main() -> scatterdp::Result<()> {
    let (n, batch, epochs, delta) = (60_000usize, 4096usize, 40usize, 1e-5);
    let q = batch as f64 / n as f64;
    let steps = (epochs * (n / batch)) as u64;
    println!("N={n} B={batch} T={epochs}: q={q:.5}, {steps} steps");

    for alpha in [2.0, 8.0, 32.0] {
        println!("  one step at sigma=3, alpha={alpha}: {:.3e}", subsampled_gaussian_rdp(q, 3.0, alpha)?);
    }

    let sigma = solve_sigma(q, steps, 3.0, delta)?;
    let curve = compose_steps(&subsampled_gaussian_curve(q, sigma, &default_orders())?, steps);
    let dp = to_dp(&curve, delta)?;
    println!("sigma for eps=3: {sigma:.4} -> eps {:.4} at alpha {}", dp.epsilon, dp.alpha);

    // Private data normalization is charged before training, so the
    // remaining budget needs a slightly larger sigma.
    let with_norm = solve_sigma_with(q, steps, 3.0, delta, Some(8.0), &default_orders())?;
    let mut ledger = PrivacyLedger::new(delta)?;
    ledger.charge_data_norm(8.0)?;
    ledger.charge_steps(q, with_norm, steps)?;
    println!("with normalization at sigma_norm=8: sigma {with_norm:.4}, total eps {:.4}", ledger.total()?.epsilon);

    println!("noise scale vs sampling rate (eps=3, 60 epochs):");
    for k in (4..=10).rev() {
        let q = 2f64.powi(-k);
        let s = solve_sigma(q, (60.0 / q) as u64, 3.0, delta)?;
        println!("  q=2^-{k:<2} sigma={s:.4}  sigma/sqrt(q)={:.3}", s / q.sqrt());
    }
    Ok(())
}
