//! Derive a full training configuration for one setup: model shape, peak
//! learning rate, batch size and per-stage step counts.
//!
//! cargo run --example training_plan [setup-id]

use lrsweep::search::parse_setup_id;
use lrsweep::train::{build_training_plan, PlanConfig};

pub fn main() -> lrsweep::Result<()> {
    let id = std::env::args()
        .nth(1)
        .filter(|a| a.starts_with("fC"))
        .unwrap_or_else(|| "fC-2_fD-5_fr2_fM0_fk1_r1=1/8_r2=1/2".to_string());
    let setup = parse_setup_id(&id)?;
    let plan = build_training_plan(&setup, &PlanConfig::default())?;

    let m = &plan.model;
    println!("setup      {}", plan.setup_id);
    println!(
        "model      {} layers, {} heads, d_model {} (M = {:.3e} FLOPs/token)",
        m.n_layers, m.n_heads, m.d_model, m.m as f64
    );
    println!("peak lr    {:.4e}", plan.eta_max);
    let b = &plan.batch;
    println!(
        "batch      {} seqs/device x {} devices x {} accumulation = {} seqs ({} tokens)",
        b.local_batch, b.devices, b.accumulation, b.global_batch_seqs, b.global_batch_tokens
    );
    for st in &plan.stages {
        let ms = st.lr_schedule.milestone_steps(st.steps);
        println!(
            "stage {}    ratio {:<5} {:>12} tokens, {:>6} steps, lr drops at {:?}{}",
            st.stage,
            st.ratio_exact,
            st.tokens,
            st.steps,
            ms,
            if st.warnings.is_empty() { "" } else { "  (warmup longer than stage)" }
        );
    }
    Ok(())
}
