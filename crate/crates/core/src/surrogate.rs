//! Synthetic loss landscapes.
//!
//! Nothing here models real training runs. The generators exist so the
//! analysis and fitting code can be exercised end to end against data whose
//! structure is known in advance: planted quadratics, planted `k*` curves,
//! planted ratio power laws, the data-mixing power law in training steps, and
//! a composite landscape over whole setups.
//!
//! The composite landscape is
//!
//! ```text
//! L = (E + A/M^αM + B/D_eff^αD) · r_eff^β
//! D_eff = U · (1 + R*·(1 − exp(−(k − 1)/R*)))
//! ```
//!
//! where `U = D_T + D_high` counts every unique token seen (the target corpus
//! once plus the never-repeated high-resource tokens) and
//! `r_eff = r2^γ · r^(1−γ)` for two-stage setups (`r_eff = r` otherwise). With
//! `γ = 0` a two-stage setup scores exactly like the single-stage setup with
//! the same average ratio. Defaults are tuned so that, on the default grid,
//! two-stage training wins only for small target corpora and single-stage
//! multilingual training never beats monolingual training.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::LossRecord;
use crate::budget::ratio_f64;
use crate::mixture::mix64;
use crate::search::SetupSpec;

/// Parameters of `L = (A0/s^α + A1)·A3/r^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeParams {
    pub a0: f64,
    pub a1: f64,
    pub a3: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Domain loss after `steps` steps at mixture proportion `r`.
pub fn ge_loss(steps: f64, r: f64, p: &GeParams) -> f64 {
    (p.a0 / steps.powf(p.alpha) + p.a1) * p.a3 / r.powf(p.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateParams {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha_m: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha_d: f64,
    /// Ratio exponent; negative so loss grows as the ratio shrinks.
    pub beta: f64,
    /// Repeated-data decay constant.
    pub r_star: f64,
    /// Weight of the second-stage ratio in the effective ratio.
    pub gamma: f64,
    /// Standard deviation of multiplicative log-normal noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            e: 0.4225,
            a: 500.0,
            alpha_m: 0.3,
            b: 500.0,
            alpha_d: 0.3,
            beta: -0.4,
            r_star: 15.4,
            gamma: 0.5,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Two-stage mixing of a setup: ratios and first-stage proportion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStageMix {
    pub r1: f64,
    pub r2: f64,
    pub s1: f64,
}

/// Setup quantities the composite landscape depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetupPoint {
    pub m: f64,
    pub d_t: f64,
    pub k: f64,
    pub r: f64,
    pub two_stage: Option<TwoStageMix>,
}

impl SetupPoint {
    pub fn from_setup(s: &SetupSpec) -> Self {
        let d = s.derived();
        Self {
            m: d.m,
            d_t: d.d_t,
            k: d.k,
            r: d.r,
            two_stage: s.split().map(|sp| TwoStageMix {
                r1: ratio_f64(&sp.r1),
                r2: ratio_f64(&sp.r2),
                s1: sp.s1_f64(),
            }),
        }
    }

    /// Unique tokens seen: the target corpus once plus all high-resource tokens.
    pub fn unique_tokens(&self) -> f64 {
        let total = self.k * self.d_t / self.r;
        self.d_t + (total - self.k * self.d_t)
    }
}

pub fn effective_data(unique: f64, k: f64, r_star: f64) -> f64 {
    unique * (1.0 + r_star * (1.0 - (-(k - 1.0) / r_star).exp()))
}

pub fn effective_ratio(p: &SetupPoint, gamma: f64) -> f64 {
    match p.two_stage {
        None => p.r,
        Some(mix) => mix.r2.powf(gamma) * p.r.powf(1.0 - gamma),
    }
}

/// Noiseless composite loss.
pub fn composite_loss(p: &SetupPoint, params: &SurrogateParams) -> f64 {
    let d_eff = effective_data(p.unique_tokens(), p.k, params.r_star);
    let base = params.e + params.a / p.m.powf(params.alpha_m) + params.b / d_eff.powf(params.alpha_d);
    base * effective_ratio(p, params.gamma).powf(params.beta)
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Standard normal draw keyed by `(seed, key)`; independent of call order.
pub fn keyed_normal(seed: u64, key: &str) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(fnv1a(key.as_bytes()))));
    StandardNormal.sample(&mut rng)
}

/// One record per setup, in input order.
pub fn generate_dataset(
    setups: &[SetupSpec],
    params: &SurrogateParams,
    seed: u64,
    language_pair: &str,
) -> Vec<LossRecord> {
    setups
        .iter()
        .map(|s| {
            let mut loss = composite_loss(&SetupPoint::from_setup(s), params);
            if params.noise_sigma > 0.0 {
                loss *= (params.noise_sigma * keyed_normal(seed, &s.id)).exp();
            }
            LossRecord {
                setup_id: s.id.clone(),
                language_pair: language_pair.to_string(),
                val_loss: loss,
            }
        })
        .collect()
}

/// Planted `log2 k*` model: `h(f_D − a·log2(C/C0))` with `h` piecewise linear
/// through `(f_D, h)` knots, linear beyond the ends and clamped at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedKStar {
    pub a: f64,
    /// `(f_D, h)` pairs in any order; sorted on use.
    pub knots: Vec<(f64, f64)>,
}

impl PlantedKStar {
    /// Straight line from `(f_D = lo, h = h_max)` to `(f_D = hi, h = 0)`.
    pub fn linear(a: f64, lo: f64, hi: f64, h_max: f64) -> Self {
        Self {
            a,
            knots: vec![(lo, h_max), (hi, 0.0)],
        }
    }

    pub fn h(&self, x: f64) -> f64 {
        let mut k = self.knots.clone();
        k.sort_by(|p, q| p.0.total_cmp(&q.0));
        let seg = match k.iter().position(|p| p.0 > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => k.len() - 2,
        };
        let (x0, y0) = k[seg];
        let (x1, y1) = k[seg + 1];
        (y0 + (y1 - y0) * (x - x0) / (x1 - x0)).max(0.0)
    }

    /// `log2 k*` at compute exponent `delta = log2(C/C0)`.
    pub fn log2_kstar(&self, delta: f64, f_d: f64) -> f64 {
        self.h(f_d - self.a * delta)
    }

    /// `(C, f_D, log2 k*)` samples over a grid.
    pub fn curves(&self, c0: f64, deltas: &[f64], f_ds: &[f64]) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &d in deltas {
            for &f in f_ds {
                out.push((c0 * d.exp2(), f, self.log2_kstar(d, f)));
            }
        }
        out
    }
}

/// `(f_k, L)` samples of `a2·f_k² + a1·f_k + a0`.
pub fn planted_quadratic(a2: f64, a1: f64, a0: f64, f_ks: &[f64]) -> Vec<(f64, f64)> {
    f_ks.iter().map(|&x| (x, a2 * x * x + a1 * x + a0)).collect()
}

/// `(M, D, r, L)` samples of `L = L0·r^β` for each `(M, D, L0)` group.
pub fn planted_ratio_law(beta: f64, groups: &[(f64, f64, f64)], rs: &[f64]) -> Vec<(f64, f64, f64, f64)> {
    let mut out = Vec::new();
    for &(m, d, l0) in groups {
        for &r in rs {
            out.push((m, d, r, l0 * r.powf(beta)));
        }
    }
    out
}
