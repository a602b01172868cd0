//! Run the full analysis on a synthetic loss landscape and locate the corpus
//! size below which two-stage multilingual training wins.
//!
//! cargo run --example surrogate_threshold

use lrsweep::analysis::{analyze, AnalysisOptions, IngestReport, ResultSet};
use lrsweep::search::{enumerate_all, SearchRanges};
use lrsweep::surrogate::{generate_dataset, SurrogateParams};

pub fn main() -> lrsweep::Result<()> {
    let setups = enumerate_all(&SearchRanges::default());
    for gamma in [0.5, 0.0] {
        let params = SurrogateParams { gamma, ..Default::default() };
        let mut results = ResultSet::default();
        for r in generate_dataset(&setups, &params, 0, "sim") {
            results.pairs.entry(r.language_pair).or_default().insert(r.setup_id, r.val_loss);
        }
        let a = analyze(&results, IngestReport::default(), &setups, "sim", AnalysisOptions::default())?;

        println!("gamma = {gamma}");
        for t in &a.report.thresholds {
            let verdict = match &t.crossing {
                None => "mono-1stage wins everywhere".to_string(),
                Some(c) => format!(
                    "multi-2stage wins up to D_T = D*/{:.0}, mono-1stage from D*/{:.0}",
                    1.0 / c.ratio_low,
                    1.0 / c.ratio_high.unwrap_or(f64::NAN)
                ),
            };
            println!("  C = {:.3e}  D* = {:.3e}  {verdict}", t.c, t.d_star);
        }
    }
    Ok(())
}
