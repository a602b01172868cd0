//! Fit the optimal epoch count per budget, then the shift model
//! `log2 k* = h(f_D - a log2(C/C0))`, and extrapolate to a larger budget.
//!
//! cargo run --example epoch_extrapolation

use lrsweep::budget::reference_constants;
use lrsweep::fit::{fit_epoch_quadratic, fit_kstar_model, predict_kstar, KStarPoint};
use lrsweep::search::Approach;
use lrsweep::surrogate::{planted_quadratic, PlantedKStar};

pub fn main() -> lrsweep::Result<()> {
    // One loss-versus-epochs curve.
    let curve = planted_quadratic(0.04, -0.2, 3.1, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    let q = fit_epoch_quadratic(&curve)?;
    println!("quadratic: f_k* = {:.3}, k* = {:.2} epochs (convex: {})", q.f_k_star, q.k_star, q.convex);

    // Curves at two small budgets from a known model.
    let rc = reference_constants();
    let truth = PlantedKStar::linear(0.5, -6.0, 0.0, 4.0);
    let f_ds: Vec<f64> = (-7..=0).map(f64::from).collect();
    let pts: Vec<KStarPoint> = truth
        .curves(rc.c0, &[-4.0, -2.0], &f_ds)
        .into_iter()
        .map(|(c, f_d, log2_k_star)| KStarPoint { c, f_d, log2_k_star })
        .collect();
    let fit = fit_kstar_model(&pts, Approach::Mono1Stage, None)?;
    println!("shift exponent a = {:.4} (rss {:.2e})", fit.model.a, fit.diagnostics.rss);

    println!("\nextrapolated to C = {:.0e}:", rc.c0);
    println!("{:>12} {:>10} {:>10}", "D_T", "k* fit", "k* true");
    for f_d in [-6, -4, -2, 0] {
        let d_t = rc.d_t0 * f64::from(f_d).exp2();
        let k = predict_kstar(&fit.model, rc.c0, d_t, false);
        let want = truth.log2_kstar(0.0, f64::from(f_d)).exp2();
        println!("{d_t:>12.3e} {k:>10.3} {want:>10.3}");
    }
    Ok(())
}
