//! Reference constants, factor parametrization and stage proportions.
//!
//! Every setup on the sweep grid is described by four integer factors
//! `(f_r, f_M, f_k, f_C)`. The concrete quantities are powers of two times a
//! reference value:
//!
//! ```text
//! r = 2^-f_r      M = M0 / 2^f_M      k = 2^f_k
//! C = 2^f_C * C0  D_T = 2^f_D * D_T0  with f_D = -f_r + f_M - f_k + f_C
//! ```
//!
//! Budget identities are checked on the integer exponents, so they hold
//! exactly regardless of floating point rounding in `D_T0`.

use std::fmt;
use std::sync::OnceLock;

use num_rational::Ratio as RawRatio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational used for language ratios and stage proportions.
pub type Ratio = RawRatio<i64>;

/// Renders a ratio as `num/den` (always with a denominator, `0/1` for zero).
pub fn ratio_string(r: &Ratio) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `num/den` or a bare integer.
pub fn parse_ratio(s: &str) -> Option<Ratio> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            (d != 0).then(|| Ratio::new(n, d))
        }
        None => s.parse::<i64>().ok().map(Ratio::from_integer),
    }
}

pub fn ratio_f64(r: &Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// Reference budget the whole grid is expressed against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConstants {
    /// Reference compute budget in FLOPs.
    pub c0: f64,
    /// Reference target-corpus size in tokens.
    pub d_t0: f64,
    /// Reference model scale in non-embedding FLOPs per token.
    pub m0: f64,
}

pub const REFERENCE_COMPUTE: f64 = 1e18;
const CORPUS_COEFFICIENT: f64 = 5.8316;
const CORPUS_EXPONENT: f64 = 0.4757;

/// Returns the process-wide reference constants, computed on first use.
pub fn reference_constants() -> ReferenceConstants {
    static REFERENCE: OnceLock<ReferenceConstants> = OnceLock::new();
    *REFERENCE.get_or_init(|| {
        let c0 = REFERENCE_COMPUTE;
        let d_t0 = CORPUS_COEFFICIENT * c0.powf(CORPUS_EXPONENT);
        ReferenceConstants {
            c0,
            d_t0,
            m0: c0 / d_t0,
        }
    })
}

/// Integer factors of a single-stage setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactorTuple {
    pub f_r: i32,
    pub f_m: i32,
    pub f_k: i32,
    pub f_c: i32,
}

impl FactorTuple {
    pub const fn new(f_r: i32, f_m: i32, f_k: i32, f_c: i32) -> Self {
        Self { f_r, f_m, f_k, f_c }
    }

    /// Corpus factor implied by the other four.
    pub const fn f_d(&self) -> i32 {
        -self.f_r + self.f_m - self.f_k + self.f_c
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_r < 0 {
            return Err(Error::InvalidFactor {
                name: "f_r",
                value: self.f_r,
                reason: "ratio factor must be >= 0",
            });
        }
        if self.f_k < 0 {
            return Err(Error::InvalidFactor {
                name: "f_k",
                value: self.f_k,
                reason: "epoch factor must be >= 0",
            });
        }
        Ok(())
    }
}

impl fmt::Display for FactorTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(f_r={}, f_M={}, f_k={}, f_C={})",
            self.f_r, self.f_m, self.f_k, self.f_c
        )
    }
}

/// Base-2 exponents of the budget quantities relative to their references:
/// `M = M0·2^model`, `D_total = D_T0·2^tokens`, `C = C0·2^compute`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetExponents {
    pub model: i32,
    pub tokens: i32,
    pub compute: i32,
}

impl BudgetExponents {
    /// `M·D_total = C`, using `M0·D_T0 = C0`.
    pub fn balanced(&self) -> bool {
        self.model + self.tokens == self.compute
    }
}

/// Concrete hyperparameters of a single-stage setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedSetup {
    pub factors: FactorTuple,
    /// Target-language ratio.
    pub r: f64,
    /// Model scale (FLOPs/token).
    pub m: f64,
    /// Epochs over the target corpus.
    pub k: f64,
    /// Compute budget (FLOPs).
    pub c: f64,
    /// Unique target-language tokens.
    pub d_t: f64,
    /// Tokens processed across all languages, `k·D_T/r`.
    pub d_total: f64,
    pub f_d: i32,
}

impl DerivedSetup {
    pub fn ratio(&self) -> Ratio {
        Ratio::new(1, 1i64 << self.factors.f_r)
    }

    pub fn epochs(&self) -> u64 {
        1u64 << self.factors.f_k
    }

    pub fn exponents(&self) -> BudgetExponents {
        let f = &self.factors;
        BudgetExponents {
            model: -f.f_m,
            tokens: f.f_k + self.f_d + f.f_r,
            compute: f.f_c,
        }
    }

    /// Unique target tokens as an integer count (`D_T` rounded to nearest).
    pub fn unique_target_tokens(&self) -> u64 {
        self.d_t.round() as u64
    }

    /// Total integer token budget: `k · U · 2^f_r`, so `r·total = k·U` exactly.
    pub fn total_tokens(&self) -> u64 {
        self.unique_target_tokens() * self.epochs() * (1u64 << self.factors.f_r)
    }
}

pub fn derive_single_stage(factors: FactorTuple) -> Result<DerivedSetup> {
    factors.validate()?;
    let refc = reference_constants();
    let f_d = factors.f_d();
    let r = pow2(-factors.f_r);
    let k = pow2(factors.f_k);
    let d_t = pow2(f_d) * refc.d_t0;
    Ok(DerivedSetup {
        factors,
        r,
        m: refc.m0 / pow2(factors.f_m),
        k,
        c: pow2(factors.f_c) * refc.c0,
        d_t,
        d_total: k * d_t / r,
        f_d,
    })
}

/// Two-stage proportions for an average ratio `r = s1·r1 + s2·r2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StageSplit {
    pub r1: Ratio,
    pub r2: Ratio,
    pub r: Ratio,
    pub s1: Ratio,
    pub s2: Ratio,
}

impl StageSplit {
    /// One stage has zero length; equivalent to a single-stage setup.
    pub fn is_degenerate(&self) -> bool {
        self.s1.is_zero() || self.s2.is_zero()
    }

    pub fn s1_f64(&self) -> f64 {
        ratio_f64(&self.s1)
    }

    pub fn s2_f64(&self) -> f64 {
        ratio_f64(&self.s2)
    }

    /// `s1·r1 + s2·r2`, which equals `r` exactly.
    pub fn average_ratio(&self) -> Ratio {
        self.s1 * self.r1 + self.s2 * self.r2
    }
}

fn check_unit(r: &Ratio) -> Result<()> {
    if *r < Ratio::zero() || *r > Ratio::from_integer(1) {
        return Err(Error::InvalidRatio(ratio_string(r)));
    }
    Ok(())
}

pub fn stage_split(r1: Ratio, r2: Ratio, r: Ratio) -> Result<StageSplit> {
    for x in [&r1, &r2, &r] {
        check_unit(x)?;
    }
    if r1 >= r2 {
        return Err(Error::SplitOrdering {
            r1: ratio_string(&r1),
            r2: ratio_string(&r2),
        });
    }
    if r < r1 || r > r2 {
        return Err(Error::InfeasibleSplit {
            r1: ratio_string(&r1),
            r2: ratio_string(&r2),
            r: ratio_string(&r),
        });
    }
    let s1 = (r2 - r) / (r2 - r1);
    Ok(StageSplit {
        r1,
        r2,
        r,
        s1,
        s2: Ratio::from_integer(1) - s1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Ratio {
        Ratio::new(n, d)
    }

    #[test]
    fn reference_values() {
        let c = reference_constants();
        assert_eq!(c.c0, 1e18);
        // 30-digit evaluation of 5.8316·10^(18·0.4757) and its quotient.
        assert!((c.d_t0 / 2_130_039_843.836_564_3 - 1.0).abs() < 1e-12, "{}", c.d_t0);
        assert!((c.m0 / 469_474_786.067_301_8 - 1.0).abs() < 1e-12, "{}", c.m0);
        assert!((c.m0 * c.d_t0 / c.c0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_factors() {
        let d = derive_single_stage(FactorTuple::new(0, 0, 0, 0)).unwrap();
        let c = reference_constants();
        assert_eq!(d.r, 1.0);
        assert_eq!(d.m, c.m0);
        assert_eq!(d.k, 1.0);
        assert_eq!(d.c, 1e18);
        assert_eq!(d.d_t, c.d_t0);
        assert_eq!(d.f_d, 0);
    }

    #[test]
    fn mixed_factors() {
        let d = derive_single_stage(FactorTuple::new(2, 1, 3, -2)).unwrap();
        let c = reference_constants();
        assert_eq!(d.f_d, -6);
        assert_eq!(d.r, 0.25);
        assert_eq!(d.m, c.m0 / 2.0);
        assert_eq!(d.k, 8.0);
        assert_eq!(d.c, c.c0 / 4.0);
        assert_eq!(d.d_t, c.d_t0 / 64.0);
        assert!(d.exponents().balanced());
        assert!((d.m * d.d_total / d.c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_factors_rejected() {
        assert!(matches!(
            derive_single_stage(FactorTuple::new(-1, 0, 0, 0)),
            Err(Error::InvalidFactor { name: "f_r", .. })
        ));
        assert!(matches!(
            derive_single_stage(FactorTuple::new(0, 0, -1, 0)),
            Err(Error::InvalidFactor { name: "f_k", .. })
        ));
    }

    #[test]
    fn split_examples() {
        let s = stage_split(q(0, 1), q(1, 2), q(1, 4)).unwrap();
        assert_eq!((s.s1, s.s2), (q(1, 2), q(1, 2)));

        let s = stage_split(q(1, 8), q(1, 2), q(1, 4)).unwrap();
        assert_eq!((s.s1, s.s2), (q(2, 3), q(1, 3)));
        assert_eq!(s.average_ratio(), q(1, 4));

        let s = stage_split(q(1, 8), q(1, 2), q(1, 2)).unwrap();
        assert_eq!((s.s1, s.s2), (q(0, 1), q(1, 1)));
        assert!(s.is_degenerate());
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            stage_split(q(1, 2), q(1, 4), q(1, 3)),
            Err(Error::SplitOrdering { .. })
        ));
        assert!(matches!(
            stage_split(q(1, 8), q(1, 4), q(1, 2)),
            Err(Error::InfeasibleSplit { .. })
        ));
        assert!(matches!(
            stage_split(q(0, 1), q(3, 2), q(1, 2)),
            Err(Error::InvalidRatio(_))
        ));
    }

    #[test]
    fn ratio_strings() {
        assert_eq!(ratio_string(&q(0, 5)), "0/1");
        assert_eq!(ratio_string(&q(3, 4)), "3/4");
        assert_eq!(parse_ratio("3/4"), Some(q(3, 4)));
        assert_eq!(parse_ratio("1"), Some(q(1, 1)));
        assert_eq!(parse_ratio("1/0"), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn exponent_identity(f_r in 0..8i32, f_m in -4..8i32, f_k in 0..12i32, f_c in -8..1i32) {
                let d = derive_single_stage(FactorTuple::new(f_r, f_m, f_k, f_c)).unwrap();
                prop_assert!(d.exponents().balanced());
                prop_assert!((d.k * d.d_t / d.d_total - d.r).abs() <= 1e-15);
            }

            #[test]
            fn split_round_trip(a in 0i64..64, b in 1i64..=64, c in 0i64..=64) {
                let (lo, hi) = (a.min(b - 1), b);
                prop_assume!(lo < hi);
                let mid = lo + c % (hi - lo + 1);
                let s = stage_split(q(lo, 64), q(hi, 64), q(mid, 64)).unwrap();
                prop_assert_eq!(s.average_ratio(), q(mid, 64));
                prop_assert_eq!(s.s1 + s.s2, q(1, 1));
                let approx = s.s1_f64() * ratio_f64(&s.r1) + s.s2_f64() * ratio_f64(&s.r2);
                prop_assert!((approx - ratio_f64(&s.r)).abs() <= 1e-12 * ratio_f64(&s.r).max(1e-300));
            }
        }
    }
}
