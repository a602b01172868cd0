//! Which model scale wins at each corpus size, and how far it drifts.
//!
//! cargo run --example optimal_scale

use lrsweep::analysis::{optimal_scale_table, Observation};
use lrsweep::search::{enumerate_all, Category, SearchRanges};
use lrsweep::surrogate::{composite_loss, SetupPoint, SurrogateParams};

pub fn main() -> lrsweep::Result<()> {
    let setups = enumerate_all(&SearchRanges::default());
    let params = SurrogateParams::default();
    let obs: Vec<Observation> = setups
        .iter()
        .map(|s| Observation { setup: s, loss: composite_loss(&SetupPoint::from_setup(s), &params) })
        .collect();
    for cat in [Category::Mono1Stage, Category::Multi2Stage] {
        println!("{}", cat.as_str());
        for row in optimal_scale_table(&obs, cat) {
            let fms: Vec<String> = row.winners.iter().map(|w| format!("{:>2}", w.f_m)).collect();
            println!(
                "  f_C={:>2}: winning f_M by f_D [{}], fold change {}",
                row.f_c,
                fms.join(" "),
                row.fold_change
            );
        }
    }
    Ok(())
}
