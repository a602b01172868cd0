//! Enumerate the sweep grid and summarise it per compute budget.
//!
//! cargo run --example enumerate_grid

use std::collections::BTreeMap;

use lrsweep::search::{enumerate_all, group_by_budget, Approach, SearchRanges};

pub fn main() -> lrsweep::Result<()> {
    let setups = enumerate_all(&SearchRanges::default());
    println!("{} setups on the default grid", setups.len());

    let mut counts: BTreeMap<i32, BTreeMap<Approach, usize>> = BTreeMap::new();
    for s in &setups {
        *counts.entry(s.factors.f_c).or_default().entry(s.approach).or_default() += 1;
    }
    println!("{:>5} {:>12} {:>13} {:>13}", "f_C", "mono-1stage", "multi-1stage", "multi-2stage");
    for (f_c, by) in counts.iter().rev() {
        let n = |a| by.get(&a).copied().unwrap_or(0);
        println!(
            "{f_c:>5} {:>12} {:>13} {:>13}",
            n(Approach::Mono1Stage),
            n(Approach::Multi1Stage),
            n(Approach::Multi2Stage)
        );
    }

    // Every setup in a (f_C, f_D) group spends the same compute on the same
    // target corpus; the analysis compares setups within these groups.
    let groups = group_by_budget(&setups);
    let ((f_c, f_d), members) = groups.iter().next_back().expect("non-empty grid");
    println!("\ngroup f_C={f_c}, f_D={f_d}: {} setups, e.g.", members.len());
    for s in members.iter().step_by(members.len() / 4).take(4) {
        let d = s.derived();
        println!("  {:<40} M={:.2e} k={:>3} r={}", s.id, d.m, d.epochs(), d.ratio());
    }
    Ok(())
}
