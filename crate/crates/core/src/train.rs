//! Concrete training plans: model shape, learning rate, batch sizing and
//! per-stage step schedules.

use serde::{Deserialize, Serialize};

use crate::budget::{ratio_f64, ratio_string};
use crate::error::{Error, Result};
use crate::mixture::stage_budgets;
use crate::search::SetupSpec;

pub const SEQ_LEN: u32 = 4096;
pub const DEFAULT_DEVICES: u32 = 8;
pub const PLAN_SCHEMA_VERSION: u32 = 1;

/// Non-embedding FLOPs per token: `72·n·d² + 12·n·d·L`.
pub fn model_scale(n_layers: u64, d_model: u64, seq_len: u64) -> u64 {
    72 * n_layers * d_model * d_model + 12 * n_layers * d_model * seq_len
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_layers: u32,
    pub n_heads: u32,
    pub d_model: u32,
    pub seq_len: u32,
    /// FLOPs per token.
    #[serde(rename = "M")]
    pub m: u64,
}

impl ModelShape {
    pub fn new(n_layers: u32, n_heads: u32, d_model: u32, seq_len: u32) -> Self {
        Self {
            n_layers,
            n_heads,
            d_model,
            seq_len,
            m: model_scale(n_layers as u64, d_model as u64, seq_len as u64),
        }
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.d_model as f64 / self.n_layers as f64
    }

    /// `n_layers · d_model²`, the quantity batch sizing branches on.
    pub fn complexity(&self) -> u64 {
        self.n_layers as u64 * (self.d_model as u64).pow(2)
    }
}

/// `(f_M, n_layers, n_heads, d_model, printed M)`.
pub const SHAPE_TABLE: [(i32, u32, u32, u32, f64); 7] = [
    (5, 2, 4, 128, 1.49e7),
    (4, 4, 4, 128, 2.99e7),
    (3, 4, 7, 224, 5.85e7),
    (2, 4, 12, 384, 1.18e8),
    (1, 8, 12, 384, 2.36e8),
    (0, 8, 39, 624, 4.70e8),
    (-1, 16, 39, 624, 9.39e8),
];

pub fn shape_for_factor(f_m: i32) -> Result<ModelShape> {
    SHAPE_TABLE
        .iter()
        .find(|row| row.0 == f_m)
        .map(|&(_, n, h, d, _)| ModelShape::new(n, h, d, SEQ_LEN))
        .ok_or(Error::UnsupportedScale(f_m))
}

/// Peak learning rate `0.3118 · C^-0.125`.
pub fn learning_rate(compute: f64) -> f64 {
    0.3118 * compute.powf(-0.1250)
}

/// Unadjusted batch size `0.292 · C^0.3271` in tokens.
pub fn optimal_batch_tokens(compute: f64) -> f64 {
    0.292 * compute.powf(0.3271)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub local_batch: u64,
    pub devices: u32,
    pub accumulation: u64,
    pub global_batch_seqs: u64,
    pub global_batch_tokens: u64,
}

/// Batch sizing by model complexity.
///
/// The local batch starts at 4/2/1 sequences for complexity below
/// 1e7/5e7/1.1e8. The compute-optimal local batch is
/// `round(0.292·C^0.3271 / (seq_len·devices))`; when smaller it replaces the
/// local batch without accumulation, otherwise the accumulation count is
/// `round(optimal / local)`. Rounding is half away from zero.
pub fn batch_config(compute: f64, shape: &ModelShape, devices: u32) -> Result<BatchConfig> {
    let complexity = shape.complexity();
    let mut local = if complexity < 10_000_000 {
        4
    } else if complexity < 50_000_000 {
        2
    } else if complexity < 110_000_000 {
        1
    } else {
        return Err(Error::UnsupportedModel { complexity });
    };
    let optimal =
        (optimal_batch_tokens(compute) / (shape.seq_len as f64 * devices as f64)).round() as u64;
    if optimal == 0 {
        return Err(Error::MinimumBatch { compute });
    }
    let accumulation = if optimal < local {
        local = optimal;
        1
    } else {
        (optimal as f64 / local as f64).round() as u64
    };
    let seqs = local * devices as u64 * accumulation;
    Ok(BatchConfig {
        local_batch: local,
        devices,
        accumulation,
        global_batch_seqs: seqs,
        global_batch_tokens: seqs * shape.seq_len as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Milestone {
    /// Fraction of the stage's steps after which the multiplier applies.
    pub fraction: f64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub eta_max: f64,
    pub warmup_steps: u64,
    pub milestones: Vec<Milestone>,
    /// Warmup and milestones restart at every stage.
    pub per_stage: bool,
}

impl LrSchedule {
    pub fn multi_step(eta_max: f64) -> Self {
        Self {
            eta_max,
            warmup_steps: 500,
            milestones: vec![
                Milestone {
                    fraction: 0.8,
                    multiplier: 0.316,
                },
                Milestone {
                    fraction: 0.9,
                    multiplier: 0.1,
                },
            ],
            per_stage: true,
        }
    }

    /// First step (0-based) at which each milestone is active.
    pub fn milestone_steps(&self, stage_steps: u64) -> Vec<u64> {
        self.milestones
            .iter()
            .map(|m| (m.fraction * stage_steps as f64).ceil() as u64)
            .collect()
    }

    /// Learning rate at a 0-based step within a stage of `stage_steps` steps:
    /// linear warmup to `eta_max`, then the latest reached milestone multiplier.
    pub fn lr_at(&self, step: u64, stage_steps: u64) -> f64 {
        let warm = if step < self.warmup_steps {
            (step + 1) as f64 / self.warmup_steps as f64
        } else {
            1.0
        };
        let mult = self
            .milestones
            .iter()
            .zip(self.milestone_steps(stage_steps))
            .filter(|(_, at)| step >= *at)
            .map(|(m, _)| m.multiplier)
            .last()
            .unwrap_or(1.0);
        self.eta_max * warm * mult
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub init_std: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            adam_beta1: 0.9,
            adam_beta2: 0.95,
            adam_epsilon: 1e-8,
            weight_decay: 0.1,
            grad_clip_norm: 1.0,
            init_std: 0.006,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanWarning {
    WarmupExceedsStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: u8,
    pub ratio: f64,
    pub ratio_exact: String,
    pub tokens: u64,
    pub target_tokens: u64,
    pub high_tokens: u64,
    pub steps: u64,
    pub lr_schedule: LrSchedule,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<PlanWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub schema_version: u32,
    pub setup_id: String,
    pub model: ModelShape,
    pub eta_max: f64,
    pub optimizer: OptimizerConfig,
    pub batch: BatchConfig,
    pub stages: Vec<StagePlan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanConfig {
    pub devices: u32,
    pub high_resource_available: Option<u64>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            devices: DEFAULT_DEVICES,
            high_resource_available: None,
        }
    }
}

pub fn build_training_plan(setup: &SetupSpec, cfg: &PlanConfig) -> Result<TrainingPlan> {
    let derived = setup.derived();
    let split = setup.split();
    let model = shape_for_factor(setup.factors.f_m)?;
    let batch = batch_config(derived.c, &model, cfg.devices)?;
    let eta_max = learning_rate(derived.c);
    let budgets = stage_budgets(&derived, split.as_ref(), cfg.high_resource_available)?;
    let stages = budgets
        .into_iter()
        .map(|b| {
            let steps = b.total.div_ceil(batch.global_batch_tokens);
            let lr_schedule = LrSchedule::multi_step(eta_max);
            let mut warnings = Vec::new();
            if steps < lr_schedule.warmup_steps {
                warnings.push(PlanWarning::WarmupExceedsStage);
            }
            StagePlan {
                stage: b.stage,
                ratio: ratio_f64(&b.ratio),
                ratio_exact: ratio_string(&b.ratio),
                tokens: b.total,
                target_tokens: b.target,
                high_tokens: b.high,
                steps,
                lr_schedule,
                warnings,
            }
        })
        .collect();
    Ok(TrainingPlan {
        schema_version: PLAN_SCHEMA_VERSION,
        setup_id: setup.id.clone(),
        model,
        eta_max,
        optimizer: OptimizerConfig::default(),
        batch,
        stages,
    })
}
