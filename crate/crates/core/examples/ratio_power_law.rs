//! Fit `L = L0(M, D) r^beta` with one exponent shared across model and data
//! scales, and read off how much loss a smaller target share costs.
//!
//! cargo run --example ratio_power_law

use lrsweep::fit::{fit_ratio_power_law, RatioPoint};
use lrsweep::surrogate::keyed_normal;

pub fn main() -> lrsweep::Result<()> {
    let groups = [(1.5e7, 6.7e10, 3.9), (1.2e8, 8.3e9, 3.3), (4.7e8, 2.1e9, 3.0)];
    let mut pts = Vec::new();
    for (i, &(m, d, l0)) in groups.iter().enumerate() {
        for j in 0..4 {
            let r = 0.5f64.powi(j);
            // 0.5% multiplicative noise, keyed so the example is reproducible.
            let noise = (0.005 * keyed_normal(7, &format!("{i}/{j}"))).exp();
            pts.push(RatioPoint { m, d, r, loss: l0 * r.powf(-0.101) * noise });
        }
    }
    let fit = fit_ratio_power_law(&pts)?;
    println!("shared beta = {:.4} over {} groups", fit.beta, fit.groups.len());
    for g in &fit.groups {
        println!("  M = {:.1e}, D = {:.1e}: L0 = {:.4}", g.m, g.d, g.l0);
    }
    println!(
        "halving the target share multiplies loss by {:.4}",
        0.5f64.powf(fit.beta)
    );
    Ok(())
}
