//! Token-mixture schedules.
//!
//! A schedule fixes, per stage, how many target-language and high-resource
//! tokens are consumed, which seed reshuffles each pass over the target
//! corpus, and in which order target and high-resource batches alternate.
//!
//! Batch interleaving uses error diffusion: a running deficit accumulates the
//! stage ratio each batch and a target batch is emitted whenever the deficit
//! reaches one half. After `n` batches exactly `floor(n·r + 1/2)` target
//! batches have been emitted, so any prefix stays within half a batch of the
//! requested ratio and each position can be computed without replaying the
//! sequence.

use std::io::Write;

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::budget::{ratio_f64, ratio_string, DerivedSetup, Ratio, StageSplit};
use crate::error::{Error, Result};

type Wide = num_rational::Ratio<i128>;

fn widen(r: &Ratio) -> Wide {
    Wide::new(*r.numer() as i128, *r.denom() as i128)
}

fn round_tokens(x: Wide) -> u64 {
    x.round().to_integer().to_u64().expect("token count fits in u64")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTokenBudget {
    /// 1-based stage index.
    pub stage: u8,
    pub total: u64,
    pub target: u64,
    pub high: u64,
    pub ratio: Ratio,
}

impl StageTokenBudget {
    pub fn ratio_f64(&self) -> f64 {
        ratio_f64(&self.ratio)
    }
}

impl Serialize for StageTokenBudget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StageTokenBudgetRepr {
            stage: self.stage,
            total: self.total,
            target: self.target,
            high: self.high,
            ratio: self.ratio_f64(),
            ratio_exact: ratio_string(&self.ratio),
        }
        .serialize(s)
    }
}

#[derive(Serialize, Deserialize)]
struct StageTokenBudgetRepr {
    stage: u8,
    total: u64,
    target: u64,
    high: u64,
    ratio: f64,
    ratio_exact: String,
}

/// Per-stage token counts.
///
/// Stage `i` receives `s_i·D_total` tokens of which `r_i·s_i·D_total` are
/// target tokens. Counts are integers; the second stage absorbs rounding so
/// that the target total is exactly `k·U` and high-resource tokens sum to
/// `D_total − k·U`.
pub fn stage_budgets(
    setup: &DerivedSetup,
    split: Option<&StageSplit>,
    high_available: Option<u64>,
) -> Result<Vec<StageTokenBudget>> {
    let total = setup.total_tokens();
    let target_total = setup.unique_target_tokens() * setup.epochs();
    let high_total = total - target_total;
    if let Some(avail) = high_available {
        if high_total > avail {
            return Err(Error::InsufficientCorpus {
                required: high_total,
                available: avail,
            });
        }
    }
    let Some(split) = split else {
        return Ok(vec![StageTokenBudget {
            stage: 1,
            total,
            target: target_total,
            high: high_total,
            ratio: setup.ratio(),
        }]);
    };
    let t = Wide::from_integer(total as i128);
    let s1 = widen(&split.s1);
    let r1 = widen(&split.r1);
    let target1 = round_tokens(r1 * s1 * t);
    let high1 = round_tokens((Wide::from_integer(1) - r1) * s1 * t);
    let target2 = target_total - target1;
    let high2 = high_total - high1;
    Ok(vec![
        StageTokenBudget {
            stage: 1,
            total: target1 + high1,
            target: target1,
            high: high1,
            ratio: split.r1,
        },
        StageTokenBudget {
            stage: 2,
            total: target2 + high2,
            target: target2,
            high: high2,
            ratio: split.r2,
        },
    ])
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for epoch `i` (1-based): `mix64(base + i·γ)` with the SplitMix64
/// increment `γ`.
///
/// `γ` is odd and `mix64` is bijective, so the seeds of one base are pairwise
/// distinct for any `k < 2^64`. Two bases `b`, `b'` share a seed only when
/// `b − b' ≡ (j − i)·γ (mod 2^64)` for some epochs `i`, `j`.
pub fn epoch_seed(base_seed: u64, epoch: u64) -> u64 {
    mix64(base_seed.wrapping_add(epoch.wrapping_mul(GOLDEN_GAMMA)))
}

pub fn epoch_seeds(k: u64, base_seed: u64) -> Vec<u64> {
    (1..=k).map(|i| epoch_seed(base_seed, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Target,
    High,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Target => "target",
            Source::High => "high",
        }
    }
}

/// Error-diffusion batch pattern at a fixed ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterleavePattern {
    pub ratio: Ratio,
    pub batch_tokens: u64,
}

impl InterleavePattern {
    /// Target batches among the first `n` batches: `floor(n·r + 1/2)`.
    pub fn targets_in_prefix(&self, n: u64) -> u64 {
        let num = *self.ratio.numer() as u128;
        let den = *self.ratio.denom() as u128;
        ((2 * n as u128 * num + den) / (2 * den)) as u64
    }

    pub fn source_at(&self, index: u64) -> Source {
        if self.targets_in_prefix(index + 1) > self.targets_in_prefix(index) {
            Source::Target
        } else {
            Source::High
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Source> + '_ {
        (0..).map(move |i| self.source_at(i))
    }
}

impl Serialize for InterleavePattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            kind: &'static str,
            ratio: f64,
            ratio_exact: String,
            batch_tokens: u64,
        }
        Repr {
            kind: "error-diffusion",
            ratio: ratio_f64(&self.ratio),
            ratio_exact: ratio_string(&self.ratio),
            batch_tokens: self.batch_tokens,
        }
        .serialize(s)
    }
}

/// Builds the pattern for a stage ratio in `[0, 1]`; out-of-range ratios are
/// clamped.
pub fn interleave_pattern(r_stage: Ratio, global_batch_tokens: u64) -> InterleavePattern {
    let ratio = r_stage.clamp(Ratio::zero(), Ratio::from_integer(1));
    InterleavePattern {
        ratio,
        batch_tokens: global_batch_tokens,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSchedule {
    pub budget: StageTokenBudget,
    pub target_batches: u64,
    pub high_batches: u64,
    /// Pattern over this stage's batches. Its ratio is the exact batch-count
    /// ratio, which is within one batch of the stage ratio.
    pub pattern: InterleavePattern,
}

impl StageSchedule {
    pub fn batches(&self) -> u64 {
        self.target_batches + self.high_batches
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleSpec {
    pub setup_id: String,
    pub k: u64,
    pub unique_target_tokens: u64,
    pub base_seed: u64,
    pub epoch_seeds: Vec<u64>,
    pub global_batch_tokens: u64,
    pub stages: Vec<StageSchedule>,
    /// `k·U` is not a multiple of the batch size; the last target batch is
    /// partial rather than dropped.
    pub trailing_partial_epoch: bool,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

pub fn build_schedule(
    setup_id: &str,
    setup: &DerivedSetup,
    split: Option<&StageSplit>,
    global_batch_tokens: u64,
    base_seed: u64,
    high_available: Option<u64>,
) -> Result<ScheduleSpec> {
    assert!(global_batch_tokens > 0, "global batch must hold tokens");
    let budgets = stage_budgets(setup, split, high_available)?;
    let stages = budgets
        .into_iter()
        .map(|budget| {
            let target_batches = ceil_div(budget.target, global_batch_tokens);
            let high_batches = ceil_div(budget.high, global_batch_tokens);
            let n = target_batches + high_batches;
            let ratio = if n == 0 {
                Ratio::zero()
            } else {
                Ratio::new(target_batches as i64, n as i64)
            };
            StageSchedule {
                budget,
                target_batches,
                high_batches,
                pattern: interleave_pattern(ratio, global_batch_tokens),
            }
        })
        .collect();
    let k = setup.epochs();
    let unique = setup.unique_target_tokens();
    Ok(ScheduleSpec {
        setup_id: setup_id.to_string(),
        k,
        unique_target_tokens: unique,
        base_seed,
        epoch_seeds: epoch_seeds(k, base_seed),
        global_batch_tokens,
        stages,
        trailing_partial_epoch: (k * unique) % global_batch_tokens != 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BatchRow {
    pub batch_index: u64,
    pub stage: u8,
    pub source: Source,
    pub tokens: u64,
}

impl ScheduleSpec {
    pub fn total_target_tokens(&self) -> u64 {
        self.stages.iter().map(|s| s.budget.target).sum()
    }

    /// Every batch in order. The last batch of each source within a stage
    /// carries the remainder, so token counts add up exactly.
    pub fn expand(&self) -> impl Iterator<Item = BatchRow> + '_ {
        let b = self.global_batch_tokens;
        let mut offset = 0u64;
        self.stages.iter().flat_map(move |st| {
            let start = offset;
            offset += st.batches();
            let mut seen_t = 0u64;
            let mut seen_h = 0u64;
            (0..st.batches()).map(move |i| {
                let source = st.pattern.source_at(i);
                let (seen, count, budget) = match source {
                    Source::Target => (&mut seen_t, st.target_batches, st.budget.target),
                    Source::High => (&mut seen_h, st.high_batches, st.budget.high),
                };
                *seen += 1;
                let tokens = if *seen == count {
                    budget - (count - 1) * b
                } else {
                    b
                };
                BatchRow {
                    batch_index: start + i,
                    stage: st.budget.stage,
                    source,
                    tokens,
                }
            })
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["batch_index", "stage", "source", "tokens"])
            .map_err(csv_err)?;
        for row in self.expand() {
            out.write_record([
                row.batch_index.to_string(),
                row.stage.to_string(),
                row.source.as_str().to_string(),
                row.tokens.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        location: "<csv output>".into(),
        message: e.to_string(),
    }
}
