//! Split a two-stage setup's token budget into stages and interleave target
//! and high-resource batches deterministically.
//!
//! cargo run --example mixture_schedule

use lrsweep::search::parse_setup_id;
use lrsweep::mixture::{build_schedule, Source};

pub fn main() -> lrsweep::Result<()> {
    let setup = parse_setup_id("fC-4_fD-6_fr1_fM0_fk1_r1=1/4_r2=3/4")?;
    let derived = setup.derived();
    let split = setup.split();
    let schedule = build_schedule(&setup.id, &derived, split.as_ref(), 131_072, 42, None)?;

    println!(
        "{}: {} epochs over {} unique target tokens",
        schedule.setup_id, schedule.k, schedule.unique_target_tokens
    );
    for st in &schedule.stages {
        let b = &st.budget;
        let preview: String = st
            .pattern
            .iter()
            .take(32)
            .map(|s| if s == Source::Target { 'T' } else { '.' })
            .collect();
        println!(
            "stage {}: ratio {}, {} target + {} high tokens, {} batches  {preview}",
            b.stage,
            b.ratio,
            b.target,
            b.high,
            st.batches()
        );
    }
    println!(
        "target tokens across stages: {} (= k x U = {})",
        schedule.total_target_tokens(),
        schedule.k * schedule.unique_target_tokens
    );
    println!("epoch seeds: {:x?}", schedule.epoch_seeds);
    Ok(())
}
