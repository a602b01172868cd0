//! Grid enumeration of single-stage and two-stage setups.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::budget::{
    derive_single_stage, parse_ratio, ratio_f64, ratio_string, stage_split, DerivedSetup,
    FactorTuple, Ratio, StageSplit,
};
use crate::error::{Error, Result};

/// Half-open integer interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: i32,
    pub hi: i32,
}

impl Interval {
    pub const fn new(lo: i32, hi: i32) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: i32) -> bool {
        self.lo <= v && v < self.hi
    }

    pub fn iter(&self) -> std::ops::Range<i32> {
        self.lo..self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

/// Factor ranges for one compute factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRow {
    pub f_c: i32,
    pub f_r: Interval,
    pub f_m: Interval,
    pub f_k: Interval,
    pub f_d: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRanges {
    pub rows: Vec<RangeRow>,
}

impl Default for SearchRanges {
    fn default() -> Self {
        let row = |f_c, f_m: (i32, i32), f_d: (i32, i32)| RangeRow {
            f_c,
            f_r: Interval::new(0, 4),
            f_m: Interval::new(f_m.0, f_m.1),
            f_k: Interval::new(0, 10),
            f_d: Interval::new(f_d.0, f_d.1),
        };
        Self {
            rows: vec![
                row(0, (-1, 5), (-5, 2)),
                row(-1, (0, 5), (-6, 1)),
                row(-2, (0, 5), (-6, 1)),
                row(-3, (1, 6), (-7, 0)),
                row(-4, (1, 6), (-7, 0)),
            ],
        }
    }
}

impl SearchRanges {
    /// Keeps only the rows whose compute factor is listed.
    pub fn restrict_compute(mut self, f_cs: &[i32]) -> Self {
        self.rows.retain(|row| f_cs.contains(&row.f_c));
        self
    }

    pub fn row(&self, f_c: i32) -> Option<&RangeRow> {
        self.rows.iter().find(|row| row.f_c == f_c)
    }
}

/// First-stage ratio candidates.
pub fn first_stage_ratios() -> [Ratio; 6] {
    [
        Ratio::new(1, 2),
        Ratio::new(1, 4),
        Ratio::new(1, 8),
        Ratio::new(1, 16),
        Ratio::new(1, 32),
        Ratio::new(0, 1),
    ]
}

/// Second-stage ratio candidates.
pub fn second_stage_ratios() -> [Ratio; 4] {
    [
        Ratio::new(1, 4),
        Ratio::new(1, 2),
        Ratio::new(3, 4),
        Ratio::new(1, 1),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "mono-1stage")]
    Mono1Stage,
    #[serde(rename = "multi-1stage")]
    Multi1Stage,
    #[serde(rename = "multi-2stage")]
    Multi2Stage,
}

impl Approach {
    pub fn as_str(&self) -> &'static str {
        match self {
            Approach::Mono1Stage => "mono-1stage",
            Approach::Multi1Stage => "multi-1stage",
            Approach::Multi2Stage => "multi-2stage",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nested analysis categories: each contains the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    /// Single-stage, `f_r = 0`.
    #[serde(rename = "mono-1stage")]
    Mono1Stage,
    /// All single-stage setups.
    #[serde(rename = "multi-1stage")]
    Multi1Stage,
    /// Every setup.
    #[serde(rename = "multi-2stage")]
    Multi2Stage,
}

impl Category {
    pub const ALL: [Category; 3] = [
        Category::Mono1Stage,
        Category::Multi1Stage,
        Category::Multi2Stage,
    ];

    pub fn contains(&self, approach: Approach) -> bool {
        match self {
            Category::Mono1Stage => approach == Approach::Mono1Stage,
            Category::Multi1Stage => approach != Approach::Multi2Stage,
            Category::Multi2Stage => true,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Mono1Stage => "mono-1stage",
            Category::Multi1Stage => "multi-1stage",
            Category::Multi2Stage => "multi-2stage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stages {
    Single,
    TwoStage { r1: Ratio, r2: Ratio },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetupSpec {
    pub id: String,
    pub factors: FactorTuple,
    pub stages: Stages,
    pub approach: Approach,
}

impl SetupSpec {
    pub fn single(factors: FactorTuple) -> Result<Self> {
        factors.validate()?;
        let approach = if factors.f_r == 0 {
            Approach::Mono1Stage
        } else {
            Approach::Multi1Stage
        };
        Ok(Self {
            id: setup_id(&factors, &Stages::Single),
            factors,
            stages: Stages::Single,
            approach,
        })
    }

    /// Two-stage setup; `r1 < r < r2` must hold strictly.
    pub fn two_stage(factors: FactorTuple, r1: Ratio, r2: Ratio) -> Result<Self> {
        factors.validate()?;
        let r = Ratio::new(1, 1i64 << factors.f_r);
        let split = stage_split(r1, r2, r)?;
        if split.is_degenerate() {
            return Err(Error::InfeasibleSplit {
                r1: ratio_string(&r1),
                r2: ratio_string(&r2),
                r: ratio_string(&r),
            });
        }
        let stages = Stages::TwoStage { r1, r2 };
        Ok(Self {
            id: setup_id(&factors, &stages),
            factors,
            stages,
            approach: Approach::Multi2Stage,
        })
    }

    pub fn derived(&self) -> DerivedSetup {
        derive_single_stage(self.factors).expect("factors validated on construction")
    }

    pub fn split(&self) -> Option<StageSplit> {
        match self.stages {
            Stages::Single => None,
            Stages::TwoStage { r1, r2 } => {
                let r = Ratio::new(1, 1i64 << self.factors.f_r);
                Some(stage_split(r1, r2, r).expect("split validated on construction"))
            }
        }
    }

    pub fn f_d(&self) -> i32 {
        self.factors.f_d()
    }

    pub fn is_single_stage(&self) -> bool {
        matches!(self.stages, Stages::Single)
    }

    /// Record form used for the JSONL setup listing.
    pub fn to_record(&self) -> SetupRecord {
        let d = self.derived();
        let split = self.split();
        let (r1, r2) = match self.stages {
            Stages::Single => (None, None),
            Stages::TwoStage { r1, r2 } => (Some(r1), Some(r2)),
        };
        SetupRecord {
            id: self.id.clone(),
            approach: self.approach,
            f_r: self.factors.f_r,
            f_m: self.factors.f_m,
            f_k: self.factors.f_k,
            f_c: self.factors.f_c,
            f_d: d.f_d,
            r1: r1.as_ref().map(ratio_f64),
            r1_exact: r1.as_ref().map(ratio_string),
            r2: r2.as_ref().map(ratio_f64),
            r2_exact: r2.as_ref().map(ratio_string),
            derived: DerivedRecord {
                r: d.r,
                r_exact: ratio_string(&d.ratio()),
                m: d.m,
                k: d.k,
                c: d.c,
                d_t: d.d_t,
                d_total: d.d_total,
                s1: split.map(|s| s.s1_f64()),
                s1_exact: split.map(|s| ratio_string(&s.s1)),
                s2: split.map(|s| s.s2_f64()),
                s2_exact: split.map(|s| ratio_string(&s.s2)),
            },
        }
    }

    pub fn from_record(rec: &SetupRecord) -> Result<Self> {
        let factors = FactorTuple::new(rec.f_r, rec.f_m, rec.f_k, rec.f_c);
        let bad = |msg: String| Error::Validation {
            location: format!("setup {}", rec.id),
            message: msg,
        };
        let spec = match (&rec.r1_exact, &rec.r2_exact) {
            (None, None) => Self::single(factors)?,
            (Some(a), Some(b)) => {
                let r1 = parse_ratio(a).ok_or_else(|| bad(format!("bad r1_exact `{a}`")))?;
                let r2 = parse_ratio(b).ok_or_else(|| bad(format!("bad r2_exact `{b}`")))?;
                Self::two_stage(factors, r1, r2)?
            }
            _ => return Err(bad("r1/r2 must be given together".into())),
        };
        if spec.id != rec.id {
            return Err(bad(format!("id does not match fields (expected {})", spec.id)));
        }
        if spec.factors.f_d() != rec.f_d {
            return Err(bad(format!("f_D={} inconsistent with factors", rec.f_d)));
        }
        Ok(spec)
    }
}

/// Canonical id: `fC<c>_fD<d>_fr<r>_fM<m>_fk<k>[_r1=<a/b>_r2=<c/d>]`.
pub fn setup_id(f: &FactorTuple, stages: &Stages) -> String {
    let mut id = format!(
        "fC{}_fD{}_fr{}_fM{}_fk{}",
        f.f_c,
        f.f_d(),
        f.f_r,
        f.f_m,
        f.f_k
    );
    if let Stages::TwoStage { r1, r2 } = stages {
        id.push_str(&format!("_r1={}_r2={}", ratio_string(r1), ratio_string(r2)));
    }
    id
}

/// Parse a canonical setup id back into a setup.
pub fn parse_setup_id(id: &str) -> Result<SetupSpec> {
    let bad = || Error::UnknownSetup(id.to_string());
    let parts: Vec<&str> = id.split('_').collect();
    if parts.len() != 5 && parts.len() != 7 {
        return Err(bad());
    }
    let num = |part: &str, prefix: &str| -> Result<i32> {
        part.strip_prefix(prefix)
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)
    };
    let f_c = num(parts[0], "fC")?;
    num(parts[1], "fD")?;
    let f = FactorTuple::new(
        num(parts[2], "fr")?,
        num(parts[3], "fM")?,
        num(parts[4], "fk")?,
        f_c,
    );
    let spec = if parts.len() == 7 {
        let ratio = |part: &str, prefix: &str| {
            part.strip_prefix(prefix).and_then(parse_ratio).ok_or_else(bad)
        };
        SetupSpec::two_stage(f, ratio(parts[5], "r1=")?, ratio(parts[6], "r2=")?)?
    } else {
        SetupSpec::single(f)?
    };
    // Rejects a stated f_D that disagrees with the factors, and
    // non-canonical spellings such as `r1=2/4`.
    if spec.id != id {
        return Err(bad());
    }
    Ok(spec)
}

/// Single-stage setups in `(f_C, f_D, f_r, f_M, f_k)` order.
pub fn enumerate_single_stage(ranges: &SearchRanges) -> Vec<SetupSpec> {
    let mut out = Vec::new();
    for row in &ranges.rows {
        for f_r in row.f_r.iter() {
            for f_m in row.f_m.iter() {
                for f_k in row.f_k.iter() {
                    let f = FactorTuple::new(f_r, f_m, f_k, row.f_c);
                    if row.f_d.contains(f.f_d()) && f.validate().is_ok() {
                        out.push(SetupSpec::single(f).expect("validated"));
                    }
                }
            }
        }
    }
    out.sort_by_key(|s| {
        let f = s.factors;
        (f.f_c, f.f_d(), f.f_r, f.f_m, f.f_k)
    });
    out
}

/// Two-stage variants of every single-stage tuple, with `r1 < r < r2`.
/// Ordered like the single-stage list, then by `(r1, r2)` ascending.
pub fn enumerate_two_stage(ranges: &SearchRanges) -> Vec<SetupSpec> {
    let mut r1s = first_stage_ratios();
    r1s.sort();
    let r2s = second_stage_ratios();
    let mut out = Vec::new();
    for base in enumerate_single_stage(ranges) {
        let r = Ratio::new(1, 1i64 << base.factors.f_r);
        for r1 in r1s.iter().filter(|&&r1| r1 < r) {
            for r2 in r2s.iter().filter(|&&r2| r2 > r) {
                out.push(SetupSpec::two_stage(base.factors, *r1, *r2).expect("strict split"));
            }
        }
    }
    out
}

/// Single-stage list followed by the two-stage list.
pub fn enumerate_all(ranges: &SearchRanges) -> Vec<SetupSpec> {
    let mut all = enumerate_single_stage(ranges);
    all.extend(enumerate_two_stage(ranges));
    all
}

/// Partitions setups by `(f_C, f_D)`, preserving input order within groups.
pub fn group_by_budget(setups: &[SetupSpec]) -> BTreeMap<(i32, i32), Vec<SetupSpec>> {
    let mut groups: BTreeMap<(i32, i32), Vec<SetupSpec>> = BTreeMap::new();
    for s in setups {
        groups
            .entry((s.factors.f_c, s.f_d()))
            .or_default()
            .push(s.clone());
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedRecord {
    pub r: f64,
    pub r_exact: String,
    #[serde(rename = "M")]
    pub m: f64,
    pub k: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D_T")]
    pub d_t: f64,
    #[serde(rename = "D_total")]
    pub d_total: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s1_exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s2_exact: Option<String>,
}

/// One line of the setup listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupRecord {
    pub id: String,
    pub approach: Approach,
    pub f_r: i32,
    #[serde(rename = "f_M")]
    pub f_m: i32,
    pub f_k: i32,
    #[serde(rename = "f_C")]
    pub f_c: i32,
    #[serde(rename = "f_D")]
    pub f_d: i32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r1_exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r2_exact: Option<String>,
    pub derived: DerivedRecord,
}

pub fn write_jsonl<W: Write>(setups: &[SetupSpec], mut w: W) -> Result<()> {
    for s in setups {
        serde_json::to_writer(&mut w, &s.to_record())?;
        w.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

/// Reads a setup listing; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(r: R, source: &str) -> Result<Vec<SetupSpec>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SetupRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            location: format!("{source}:{}", i + 1),
            message: e.to_string(),
        })?;
        out.push(SetupSpec::from_record(&rec).map_err(|e| Error::Validation {
            location: format!("{source}:{}", i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
