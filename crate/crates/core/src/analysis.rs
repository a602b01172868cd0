//! Results ingestion and the sweep analyses: nested-category minima,
//! compute-optimal corpus size, approach-switch thresholds, optimal model
//! scale tables, and the curve tables the fitters consume.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::budget::reference_constants;
use crate::fit::fit_epoch_quadratic;
use crate::search::{Approach, Category, SetupSpec};
use crate::{Error, Result};

pub const RESULTS_HEADER: [&str; 3] = ["setup_id", "language_pair", "val_loss"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub setup_id: String,
    pub language_pair: String,
    pub val_loss: f64,
}

pub fn write_results_csv<W: Write>(records: &[LossRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in records {
        out.write_record([&r.setup_id, &r.language_pair, &r.val_loss.to_string()])
            .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        location: e
            .position()
            .map(|p| format!("line {}", p.line()))
            .unwrap_or_else(|| "<csv>".into()),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub setup_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub accepted: usize,
    /// Rows dropped because another row for the same setup had a lower loss.
    pub duplicates: usize,
    pub rejected: Vec<RejectedRow>,
}

/// Validated losses keyed by language pair, then setup id. Duplicate
/// measurements of a setup keep the minimum.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultSet {
    pub pairs: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ResultSet {
    pub fn is_empty(&self) -> bool {
        self.pairs.values().all(BTreeMap::is_empty)
    }

    pub fn language_pairs(&self) -> Vec<&str> {
        self.pairs.keys().map(String::as_str).collect()
    }

    /// Observations for one pair, in `setups` order.
    pub fn observations<'a>(&self, pair: &str, setups: &'a [SetupSpec]) -> Vec<Observation<'a>> {
        let Some(losses) = self.pairs.get(pair) else {
            return Vec::new();
        };
        setups
            .iter()
            .filter_map(|s| losses.get(&s.id).map(|&loss| Observation { setup: s, loss }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<'a> {
    pub setup: &'a SetupSpec,
    pub loss: f64,
}

/// Total order used everywhere a winner is picked: loss, then fewer epochs,
/// then smaller `f_M`, then id.
fn rank(a: &Observation, b: &Observation) -> Ordering {
    a.loss
        .total_cmp(&b.loss)
        .then(a.setup.factors.f_k.cmp(&b.setup.factors.f_k))
        .then(a.setup.factors.f_m.cmp(&b.setup.factors.f_m))
        .then(a.setup.id.cmp(&b.setup.id))
}

fn best<'a, 'b>(it: impl Iterator<Item = &'b Observation<'a>>) -> Option<&'b Observation<'a>>
where
    'a: 'b,
{
    it.min_by(|a, b| rank(a, b))
}

/// Ingest a results CSV. Unknown setup ids are skipped and listed; malformed
/// rows and non-positive losses abort.
pub fn ingest<R: Read>(input: R, source: &str, setups: &[SetupSpec]) -> Result<(ResultSet, IngestReport)> {
    let known: BTreeSet<&str> = setups.iter().map(|s| s.id.as_str()).collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut set = ResultSet::default();
    let mut report = IngestReport::default();
    let mut header_seen = false;
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| Error::Parse {
            location: format!(
                "{source}:{}",
                e.position().map(|p| p.line()).unwrap_or(0)
            ),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let loc = || format!("{source}:{line}");
        if !header_seen {
            header_seen = true;
            let got: Vec<&str> = record.iter().map(str::trim).collect();
            if got != RESULTS_HEADER {
                return Err(Error::Parse {
                    location: loc(),
                    message: format!("expected header `{}`", RESULTS_HEADER.join(",")),
                });
            }
            continue;
        }
        if record.len() != 3 {
            return Err(Error::Parse {
                location: loc(),
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        report.rows += 1;
        let id = record[0].trim();
        let pair = record[1].trim();
        let loss: f64 = record[2].trim().parse().map_err(|_| Error::Parse {
            location: loc(),
            message: format!("val_loss `{}` is not a number", &record[2]),
        })?;
        if !(loss.is_finite() && loss > 0.0) {
            return Err(Error::Validation {
                location: loc(),
                message: format!("val_loss must be positive and finite, got {loss}"),
            });
        }
        if !known.contains(id) {
            report.rejected.push(RejectedRow {
                line,
                setup_id: id.to_string(),
            });
            continue;
        }
        let slot = set.pairs.entry(pair.to_string()).or_default();
        match slot.get_mut(id) {
            Some(prev) => {
                report.duplicates += 1;
                if loss < *prev {
                    *prev = loss;
                }
            }
            None => {
                slot.insert(id.to_string(), loss);
            }
        }
    }
    report.accepted = set.pairs.values().map(BTreeMap::len).sum();
    Ok((set, report))
}

// ---------------------------------------------------------------------------
// Category minima

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    pub setup_id: String,
    pub val_loss: f64,
}

impl Winner {
    fn of(o: &Observation) -> Self {
        Self {
            setup_id: o.setup.id.clone(),
            val_loss: o.loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMinima {
    #[serde(rename = "f_C")]
    pub f_c: i32,
    #[serde(rename = "f_D")]
    pub f_d: i32,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D_T")]
    pub d_t: f64,
    #[serde(rename = "mono-1stage")]
    pub mono: Option<Winner>,
    #[serde(rename = "multi-1stage")]
    pub multi1: Option<Winner>,
    #[serde(rename = "multi-2stage")]
    pub multi2: Option<Winner>,
}

impl CategoryMinima {
    pub fn get(&self, cat: Category) -> Option<&Winner> {
        match cat {
            Category::Mono1Stage => self.mono.as_ref(),
            Category::Multi1Stage => self.multi1.as_ref(),
            Category::Multi2Stage => self.multi2.as_ref(),
        }
    }

    fn nesting_holds(&self) -> bool {
        let l = |w: &Option<Winner>| w.as_ref().map(|w| w.val_loss);
        let le = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a <= b,
            (None, Some(_)) => false,
            _ => true,
        };
        le(l(&self.multi2), l(&self.multi1)) && le(l(&self.multi1), l(&self.mono))
    }
}

fn budget_axes(f_c: i32, f_d: i32) -> (f64, f64) {
    let rc = reference_constants();
    (rc.c0 * f64::from(f_c).exp2(), rc.d_t0 * f64::from(f_d).exp2())
}

/// Per `(f_C, f_D)` minima of each nested category, sorted by key.
pub fn category_minima(obs: &[Observation]) -> Result<Vec<CategoryMinima>> {
    let mut groups: BTreeMap<(i32, i32), Vec<&Observation>> = BTreeMap::new();
    for o in obs {
        groups
            .entry((o.setup.factors.f_c, o.setup.f_d()))
            .or_default()
            .push(o);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((f_c, f_d), members) in groups {
        let pick = |cat: Category| {
            best(members.iter().copied().filter(|o| cat.contains(o.setup.approach))).map(Winner::of)
        };
        let (c, d_t) = budget_axes(f_c, f_d);
        let m = CategoryMinima {
            f_c,
            f_d,
            c,
            d_t,
            mono: pick(Category::Mono1Stage),
            multi1: pick(Category::Multi1Stage),
            multi2: pick(Category::Multi2Stage),
        };
        if !m.nesting_holds() {
            return Err(Error::NestingViolation { f_c, f_d });
        }
        out.push(m);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Compute-optimal corpus

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeOptimalEstimate {
    #[serde(rename = "f_C")]
    pub f_c: i32,
    #[serde(rename = "C")]
    pub c: f64,
    /// `k·D_T` of the best monolingual single-stage setup.
    #[serde(rename = "D_star")]
    pub d_star: f64,
    /// `log2(D_star / D_T0)`; an integer on the factor grid.
    #[serde(rename = "f_D_star")]
    pub f_d_star: i32,
    #[serde(rename = "f_M_star")]
    pub f_m_star: i32,
    pub setup_id: String,
    pub val_loss: f64,
}

pub fn estimate_compute_optimal(obs: &[Observation], f_c: i32) -> Result<ComputeOptimalEstimate> {
    let w = best(
        obs.iter()
            .filter(|o| o.setup.factors.f_c == f_c && o.setup.approach == Approach::Mono1Stage),
    )
    .ok_or_else(|| Error::InsufficientData(format!("no mono-1stage records at f_C={f_c}")))?;
    let d = w.setup.derived();
    Ok(ComputeOptimalEstimate {
        f_c,
        c: d.c,
        d_star: d.k * d.d_t,
        f_d_star: w.setup.f_d() + w.setup.factors.f_k,
        f_m_star: w.setup.factors.f_m,
        setup_id: w.setup.id.clone(),
        val_loss: w.loss,
    })
}

// ---------------------------------------------------------------------------
// Approach-switch threshold

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupVerdict {
    #[serde(rename = "f_D")]
    pub f_d: i32,
    #[serde(rename = "D_T")]
    pub d_t: f64,
    pub mono_loss: f64,
    pub multi_2stage_loss: f64,
    pub winner: Approach,
}

/// Grid interval bracketing the switch. `d_t_high` is absent when
/// multi-2stage still wins at the largest corpus examined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    #[serde(rename = "f_D_low")]
    pub f_d_low: i32,
    #[serde(rename = "D_T_low")]
    pub d_t_low: f64,
    #[serde(rename = "f_D_high")]
    pub f_d_high: Option<i32>,
    #[serde(rename = "D_T_high")]
    pub d_t_high: Option<f64>,
    pub no_upper_crossing: bool,
    /// `D_T_low / D_star`.
    pub ratio_low: f64,
    pub ratio_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    #[serde(rename = "f_C")]
    pub f_c: i32,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D_star")]
    pub d_star: f64,
    pub epsilon: f64,
    pub verdicts: Vec<GroupVerdict>,
    pub crossing: Option<Crossing>,
}

/// Locate the largest `D_T` where multi-2stage beats mono-1stage by more than
/// `epsilon` and the next larger `D_T` where it does not. Ties go to mono.
pub fn detect_threshold(minima: &[CategoryMinima], f_c: i32, d_star: f64, epsilon: f64) -> ThresholdReport {
    let mut verdicts: Vec<GroupVerdict> = minima
        .iter()
        .filter(|m| m.f_c == f_c)
        .filter_map(|m| {
            let (mono, multi) = (m.mono.as_ref()?, m.multi2.as_ref()?);
            let winner = if multi.val_loss + epsilon < mono.val_loss {
                Approach::Multi2Stage
            } else {
                Approach::Mono1Stage
            };
            Some(GroupVerdict {
                f_d: m.f_d,
                d_t: m.d_t,
                mono_loss: mono.val_loss,
                multi_2stage_loss: multi.val_loss,
                winner,
            })
        })
        .collect();
    verdicts.sort_by_key(|v| v.f_d);

    let crossing = verdicts
        .iter()
        .rposition(|v| v.winner == Approach::Multi2Stage)
        .map(|i| {
            let low = &verdicts[i];
            let high = verdicts.get(i + 1);
            Crossing {
                f_d_low: low.f_d,
                d_t_low: low.d_t,
                f_d_high: high.map(|h| h.f_d),
                d_t_high: high.map(|h| h.d_t),
                no_upper_crossing: high.is_none(),
                ratio_low: low.d_t / d_star,
                ratio_high: high.map(|h| h.d_t / d_star),
            }
        });
    ThresholdReport {
        f_c,
        c: budget_axes(f_c, 0).0,
        d_star,
        epsilon,
        verdicts,
        crossing,
    }
}

// ---------------------------------------------------------------------------
// Optimal model scale

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleCurveRow {
    #[serde(rename = "f_C")]
    pub f_c: i32,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "f_D")]
    pub f_d: i32,
    #[serde(rename = "D_T")]
    pub d_t: f64,
    #[serde(rename = "f_M")]
    pub f_m: i32,
    #[serde(rename = "M")]
    pub m: f64,
    pub min_loss: f64,
    pub setup_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    #[serde(rename = "f_C")]
    pub f_c: i32,
    /// Winning scale per `f_D`, ascending `f_D`.
    pub winners: Vec<ScaleCurveRow>,
    /// Largest over smallest winning `M` across the `D_T` range.
    pub fold_change: f64,
}

/// Minimum loss per `(f_C, f_D, f_M)` within `category`.
pub fn scale_curves(obs: &[Observation], category: Category) -> Vec<ScaleCurveRow> {
    let mut cells: BTreeMap<(i32, i32, i32), &Observation> = BTreeMap::new();
    for o in obs.iter().filter(|o| category.contains(o.setup.approach)) {
        let f = o.setup.factors;
        let key = (f.f_c, o.setup.f_d(), f.f_m);
        match cells.get(&key) {
            Some(cur) if rank(cur, o) != Ordering::Greater => {}
            _ => {
                cells.insert(key, o);
            }
        }
    }
    cells
        .into_iter()
        .map(|((f_c, f_d, f_m), o)| {
            let (c, d_t) = budget_axes(f_c, f_d);
            ScaleCurveRow {
                f_c,
                c,
                f_d,
                d_t,
                f_m,
                m: o.setup.derived().m,
                min_loss: o.loss,
                setup_id: o.setup.id.clone(),
            }
        })
        .collect()
}

/// Winning model scale per `(C, D_T)` and its spread across `D_T` at fixed `C`.
pub fn optimal_scale_table(obs: &[Observation], category: Category) -> Vec<ScaleSummary> {
    let curves = scale_curves(obs, category);
    let mut per_c: BTreeMap<i32, BTreeMap<i32, ScaleCurveRow>> = BTreeMap::new();
    for row in curves {
        let slot = per_c.entry(row.f_c).or_default();
        match slot.get(&row.f_d) {
            // Ties prefer the smaller model (larger f_M).
            Some(cur) if cur.min_loss < row.min_loss || (cur.min_loss == row.min_loss && cur.f_m > row.f_m) => {}
            _ => {
                slot.insert(row.f_d, row);
            }
        }
    }
    per_c
        .into_iter()
        .map(|(f_c, by_d)| {
            let winners: Vec<ScaleCurveRow> = by_d.into_values().collect();
            let hi = winners.iter().map(|w| w.m).fold(f64::NEG_INFINITY, f64::max);
            let lo = winners.iter().map(|w| w.m).fold(f64::INFINITY, f64::min);
            ScaleSummary {
                f_c,
                winners,
                fold_change: hi / lo,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Curves for the fitters

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochCurveRow {
    pub category: Category,
    #[serde(rename = "f_C")]
    pub f_c: i32,
    #[serde(rename = "f_D")]
    pub f_d: i32,
    pub f_k: i32,
    pub min_loss: f64,
}

/// Minimum loss per `(category, f_C, f_D, f_k)`.
pub fn epoch_curves(obs: &[Observation]) -> Vec<EpochCurveRow> {
    let mut cells: BTreeMap<(Category, i32, i32, i32), f64> = BTreeMap::new();
    for o in obs {
        for cat in Category::ALL {
            if cat.contains(o.setup.approach) {
                let key = (cat, o.setup.factors.f_c, o.setup.f_d(), o.setup.factors.f_k);
                let e = cells.entry(key).or_insert(f64::INFINITY);
                *e = e.min(o.loss);
            }
        }
    }
    cells
        .into_iter()
        .map(|((category, f_c, f_d, f_k), min_loss)| EpochCurveRow {
            category,
            f_c,
            f_d,
            f_k,
            min_loss,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KStarCurveRow {
    pub category: Category,
    #[serde(rename = "f_C")]
    pub f_c: i32,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "f_D")]
    pub f_d: i32,
    pub log2_k_star: f64,
    pub convex: bool,
    pub extrapolated: bool,
}

/// Quadratic epoch optimum per `(category, f_C, f_D)` curve with at least
/// three distinct epoch counts.
pub fn kstar_curves(epochs: &[EpochCurveRow]) -> Vec<KStarCurveRow> {
    let mut groups: BTreeMap<(Category, i32, i32), Vec<(f64, f64)>> = BTreeMap::new();
    for e in epochs {
        groups
            .entry((e.category, e.f_c, e.f_d))
            .or_default()
            .push((f64::from(e.f_k), e.min_loss));
    }
    groups
        .into_iter()
        .filter_map(|((category, f_c, f_d), pts)| {
            let fit = fit_epoch_quadratic(&pts).ok()?;
            Some(KStarCurveRow {
                category,
                f_c,
                c: budget_axes(f_c, f_d).0,
                f_d,
                log2_k_star: fit.f_k_star,
                convex: fit.convex,
                extrapolated: fit.extrapolated,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPointRow {
    #[serde(rename = "f_C")]
    pub f_c: i32,
    #[serde(rename = "f_M")]
    pub f_m: i32,
    #[serde(rename = "M")]
    pub m: f64,
    /// Total training tokens `C / M`.
    #[serde(rename = "D")]
    pub d: f64,
    pub r: f64,
    pub loss: f64,
}

/// Single-stage, single-epoch observations: the inputs of the ratio law.
/// `(f_C, f_M)` groups that see a single ratio are left out.
pub fn ratio_points(obs: &[Observation]) -> Vec<RatioPointRow> {
    let mut rows: Vec<RatioPointRow> = obs
        .iter()
        .filter(|o| o.setup.is_single_stage() && o.setup.factors.f_k == 0)
        .map(|o| {
            let d = o.setup.derived();
            RatioPointRow {
                f_c: o.setup.factors.f_c,
                f_m: o.setup.factors.f_m,
                m: d.m,
                d: d.d_total,
                r: d.r,
                loss: o.loss,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.f_c, a.f_m)
            .cmp(&(b.f_c, b.f_m))
            .then(b.r.total_cmp(&a.r))
    });
    let mut ratios: BTreeMap<(i32, i32), BTreeSet<u64>> = BTreeMap::new();
    for row in &rows {
        ratios.entry((row.f_c, row.f_m)).or_default().insert(row.r.to_bits());
    }
    rows.retain(|row| ratios[&(row.f_c, row.f_m)].len() > 1);
    rows
}

// ---------------------------------------------------------------------------
// Whole-dataset analysis

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub language_pair: String,
    pub ingest: IngestReport,
    pub category_minima: Vec<CategoryMinima>,
    pub compute_optimal: Vec<ComputeOptimalEstimate>,
    pub thresholds: Vec<ThresholdReport>,
    pub optimal_scale: Vec<ScaleSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub scale_curves: Vec<ScaleCurveRow>,
    pub epoch_curves: Vec<EpochCurveRow>,
    pub kstar_curves: Vec<KStarCurveRow>,
    pub ratio_points: Vec<RatioPointRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    /// Margin multi-2stage must beat mono-1stage by to count as a win.
    pub epsilon: f64,
    /// Category whose setups compete in the optimal-scale table.
    pub scale_category: Category,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            scale_category: Category::Multi2Stage,
        }
    }
}

pub fn analyze(
    results: &ResultSet,
    ingest_report: IngestReport,
    setups: &[SetupSpec],
    language_pair: &str,
    opts: AnalysisOptions,
) -> Result<Analysis> {
    let obs = results.observations(language_pair, setups);
    let minima = category_minima(&obs)?;
    let compute_budgets: BTreeSet<i32> = obs.iter().map(|o| o.setup.factors.f_c).collect();
    let mut compute_optimal = Vec::new();
    let mut thresholds = Vec::new();
    for f_c in compute_budgets {
        let Ok(est) = estimate_compute_optimal(&obs, f_c) else {
            continue;
        };
        thresholds.push(detect_threshold(&minima, f_c, est.d_star, opts.epsilon));
        compute_optimal.push(est);
    }
    let epochs = epoch_curves(&obs);
    let kstar = kstar_curves(&epochs);
    Ok(Analysis {
        report: AnalysisReport {
            language_pair: language_pair.to_string(),
            ingest: ingest_report,
            category_minima: minima,
            compute_optimal,
            thresholds,
            optimal_scale: optimal_scale_table(&obs, opts.scale_category),
        },
        scale_curves: scale_curves(&obs, opts.scale_category),
        epoch_curves: epochs,
        kstar_curves: kstar,
        ratio_points: ratio_points(&obs),
    })
}

/// Flat row form of [`CategoryMinima`] for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryMinimaRow {
    #[serde(rename = "f_C")]
    pub f_c: i32,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "f_D")]
    pub f_d: i32,
    #[serde(rename = "D_T")]
    pub d_t: f64,
    pub mono_1stage: Option<f64>,
    pub multi_1stage: Option<f64>,
    pub multi_2stage: Option<f64>,
}

impl From<&CategoryMinima> for CategoryMinimaRow {
    fn from(m: &CategoryMinima) -> Self {
        let l = |w: &Option<Winner>| w.as_ref().map(|w| w.val_loss);
        Self {
            f_c: m.f_c,
            c: m.c,
            f_d: m.f_d,
            d_t: m.d_t,
            mono_1stage: l(&m.mono),
            multi_1stage: l(&m.multi1),
            multi_2stage: l(&m.multi2),
        }
    }
}

/// Serialize rows as CSV with a header derived from the row type.
pub fn write_rows_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::FactorTuple;
    use crate::search::{enumerate_all, enumerate_single_stage, SearchRanges};
    use crate::surrogate::{composite_loss, generate_dataset, SetupPoint, SurrogateParams};

    fn csv_of(rows: &[(&str, &str, &str)]) -> String {
        let mut s = String::from("setup_id,language_pair,val_loss\n");
        for (a, b, c) in rows {
            s.push_str(&format!("{a},{b},{c}\n"));
        }
        s
    }

    fn small_setups() -> Vec<SetupSpec> {
        enumerate_single_stage(&SearchRanges::default().restrict_compute(&[-4]))
    }

    #[test]
    fn ingest_rules() {
        let setups = small_setups();
        let id = setups[0].id.as_str();
        let text = csv_of(&[(id, "ja-en", "2.0"), ("nope", "ja-en", "1.0"), (id, "ja-en", "1.9")]);
        let (set, rep) = ingest(text.as_bytes(), "r.csv", &setups).unwrap();
        assert_eq!(set.pairs["ja-en"][id], 1.9);
        assert_eq!(rep.duplicates, 1);
        assert_eq!(rep.accepted, 1);
        assert_eq!(rep.rows, 3);
        assert_eq!(
            rep.rejected,
            vec![RejectedRow {
                line: 3,
                setup_id: "nope".into()
            }]
        );
    }

    #[test]
    fn ingest_empty_and_errors() {
        let setups = small_setups();
        let (set, rep) = ingest("".as_bytes(), "r.csv", &setups).unwrap();
        assert!(set.is_empty());
        assert_eq!(rep, IngestReport::default());
        let (set, _) = ingest(csv_of(&[]).as_bytes(), "r.csv", &setups).unwrap();
        assert!(set.is_empty());

        let id = setups[0].id.as_str();
        let err = ingest(csv_of(&[(id, "x", "abc")]).as_bytes(), "r.csv", &setups).unwrap_err();
        assert!(matches!(&err, Error::Parse { location, .. } if location == "r.csv:2"));
        let err = ingest(csv_of(&[(id, "x", "0")]).as_bytes(), "r.csv", &setups).unwrap_err();
        assert!(matches!(&err, Error::Validation { location, .. } if location == "r.csv:2"));
        let err = ingest("a,b,c\n".as_bytes(), "r.csv", &setups).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let bad = format!("setup_id,language_pair,val_loss\n{id},x\n");
        assert!(matches!(
            ingest(bad.as_bytes(), "r.csv", &setups).unwrap_err(),
            Error::Parse { .. }
        ));
    }

    #[test]
    fn results_csv_round_trip() {
        let setups = small_setups();
        let recs = generate_dataset(&setups, &SurrogateParams::default(), 1, "ja-en");
        let mut buf = Vec::new();
        write_results_csv(&recs, &mut buf).unwrap();
        let (set, rep) = ingest(buf.as_slice(), "mem", &setups).unwrap();
        assert_eq!(rep.accepted, setups.len());
        for r in &recs {
            assert_eq!(set.pairs["ja-en"][&r.setup_id], r.val_loss);
        }
    }

    fn observe(setups: &[SetupSpec], f: impl Fn(&SetupSpec) -> f64) -> Vec<Observation<'_>> {
        setups.iter().map(|s| Observation { setup: s, loss: f(s) }).collect()
    }

    #[test]
    fn singleton_group() {
        let s = vec![SetupSpec::single(FactorTuple::new(0, 0, 0, 0)).unwrap()];
        let obs = observe(&s, |_| 2.5);
        let m = category_minima(&obs).unwrap();
        assert_eq!(m.len(), 1);
        for cat in Category::ALL {
            assert_eq!(m[0].get(cat).unwrap().val_loss, 2.5);
        }
        let est = estimate_compute_optimal(&obs, 0).unwrap();
        assert_eq!(est.d_star, reference_constants().d_t0);
    }

    #[test]
    fn group_without_mono_has_no_mono_entry() {
        let s = vec![SetupSpec::single(FactorTuple::new(1, 0, 0, 0)).unwrap()];
        let obs = observe(&s, |_| 2.5);
        let m = category_minima(&obs).unwrap();
        assert!(m[0].mono.is_none());
        assert!(m[0].multi1.is_some());
        assert!(matches!(
            estimate_compute_optimal(&obs, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn compute_optimal_tie_prefers_fewer_epochs() {
        let s = vec![
            SetupSpec::single(FactorTuple::new(0, 1, 1, 0)).unwrap(),
            SetupSpec::single(FactorTuple::new(0, 0, 0, 0)).unwrap(),
        ];
        let obs = observe(&s, |_| 2.0);
        let est = estimate_compute_optimal(&obs, 0).unwrap();
        assert_eq!(est.setup_id, s[1].id);
        let single = &obs[..1];
        let est = estimate_compute_optimal(single, 0).unwrap();
        let d = s[0].derived();
        assert_eq!(est.d_star, 2.0 * d.d_t);
    }

    #[test]
    fn planted_minimum_wins_its_category() {
        let setups = enumerate_all(&SearchRanges::default().restrict_compute(&[0]));
        let planted = setups
            .iter()
            .find(|s| s.approach == Approach::Multi2Stage && s.f_d() == -2)
            .unwrap()
            .id
            .clone();
        let obs = observe(&setups, |s| {
            let base = composite_loss(&SetupPoint::from_setup(s), &SurrogateParams::default());
            if s.id == planted {
                0.5
            } else {
                base
            }
        });
        let m = category_minima(&obs).unwrap();
        let g = m.iter().find(|g| g.f_d == -2).unwrap();
        assert_eq!(g.multi2.as_ref().unwrap().setup_id, planted);
        // Brute force the mono winner of the same group.
        let want = obs
            .iter()
            .filter(|o| o.setup.f_d() == -2 && o.setup.approach == Approach::Mono1Stage)
            .min_by(|a, b| a.loss.total_cmp(&b.loss))
            .unwrap();
        assert_eq!(g.mono.as_ref().unwrap().setup_id, want.setup.id);
    }

    fn minima(f_d: i32, mono: f64, multi: f64) -> CategoryMinima {
        let w = |l: f64| Some(Winner { setup_id: "x".into(), val_loss: l });
        let (c, d_t) = budget_axes(0, f_d);
        CategoryMinima {
            f_c: 0,
            f_d,
            c,
            d_t,
            mono: w(mono),
            multi1: w(mono.min(multi)),
            multi2: w(multi),
        }
    }

    #[test]
    fn threshold_cases() {
        let d0 = reference_constants().d_t0;
        let all_multi = [minima(-3, 3.0, 2.9), minima(-2, 3.0, 2.9)];
        let r = detect_threshold(&all_multi, 0, d0, 0.0);
        let c = r.crossing.unwrap();
        assert!(c.no_upper_crossing);
        assert_eq!(c.f_d_low, -2);
        assert_eq!(c.d_t_high, None);

        let tied = [minima(-3, 3.0, 3.0), minima(-2, 3.0, 3.1)];
        assert!(detect_threshold(&tied, 0, d0, 0.0).crossing.is_none());

        let switch = [minima(-4, 3.0, 2.8), minima(-3, 3.0, 2.95), minima(-2, 3.0, 3.0)];
        let c = detect_threshold(&switch, 0, d0, 0.0).crossing.unwrap();
        assert_eq!((c.f_d_low, c.f_d_high), (-3, Some(-2)));
        assert!((c.ratio_low - 0.125).abs() < 1e-15);
        // A margin moves the switch down a step.
        let c = detect_threshold(&switch, 0, d0, 0.1).crossing.unwrap();
        assert_eq!((c.f_d_low, c.f_d_high), (-4, Some(-3)));
    }

    #[test]
    fn fixture_threshold_below_compute_optimum() {
        let setups = enumerate_all(&SearchRanges::default());
        let recs = generate_dataset(&setups, &SurrogateParams::default(), 0, "ja-en");
        let mut buf = Vec::new();
        write_results_csv(&recs, &mut buf).unwrap();
        let (set, rep) = ingest(buf.as_slice(), "mem", &setups).unwrap();
        let a = analyze(&set, rep, &setups, "ja-en", AnalysisOptions::default()).unwrap();
        assert_eq!(a.report.thresholds.len(), 5);
        for t in &a.report.thresholds {
            let c = t.crossing.as_ref().expect("crossing present");
            let hi = c.d_t_high.expect("bounded");
            assert!(hi <= t.d_star, "f_C={}", t.f_c);
            assert!(c.ratio_low >= 1.0 / 16.0 - 1e-12 && hi / t.d_star <= 0.25 + 1e-12);
        }
        for s in &a.report.optimal_scale {
            assert!(s.fold_change >= 1.0);
        }
        assert!(!a.kstar_curves.is_empty());
        // Single-epoch losses factor as L0(M, D)·r^β in the surrogate.
        let pts: Vec<crate::fit::RatioPoint> = a
            .ratio_points
            .iter()
            .map(|p| crate::fit::RatioPoint { m: p.m, d: p.d, r: p.r, loss: p.loss })
            .collect();
        let fit = crate::fit::fit_ratio_power_law(&pts).unwrap();
        assert!((fit.beta - SurrogateParams::default().beta).abs() < 1e-9);
    }

    #[test]
    fn gamma_zero_has_no_crossing() {
        let setups = enumerate_all(&SearchRanges::default());
        let p = SurrogateParams {
            gamma: 0.0,
            ..Default::default()
        };
        let recs = generate_dataset(&setups, &p, 0, "ja-en");
        let mut set = ResultSet::default();
        for r in recs {
            set.pairs.entry(r.language_pair).or_default().insert(r.setup_id, r.val_loss);
        }
        let a = analyze(&set, IngestReport::default(), &setups, "ja-en", AnalysisOptions::default()).unwrap();
        assert!(a.report.thresholds.iter().all(|t| t.crossing.is_none()));
    }

    #[test]
    fn scale_table_cases() {
        let s = vec![SetupSpec::single(FactorTuple::new(0, 2, 0, 0)).unwrap()];
        let obs = observe(&s, |_| 2.0);
        let t = optimal_scale_table(&obs, Category::Multi2Stage);
        assert_eq!(t[0].winners[0].f_m, 2);
        assert_eq!(t[0].fold_change, 1.0);

        // Planted scale-independent optimum at f_M = 1.
        let setups = enumerate_all(&SearchRanges::default().restrict_compute(&[-1]));
        let obs = observe(&setups, |s| {
            let base = composite_loss(&SetupPoint::from_setup(s), &SurrogateParams::default());
            if s.factors.f_m == 1 {
                base * 0.5
            } else {
                base
            }
        });
        let t = optimal_scale_table(&obs, Category::Multi2Stage);
        assert!(t[0].winners.iter().all(|w| w.f_m == 1));

        let two = vec![
            SetupSpec::single(FactorTuple::new(0, 0, 0, 0)).unwrap(),
            SetupSpec::single(FactorTuple::new(0, 1, 1, 0)).unwrap(),
            SetupSpec::single(FactorTuple::new(0, 1, 0, 0)).unwrap(),
        ];
        let obs = observe(&two, |s| if s.factors.f_m == 0 { 1.0 } else { 2.0 });
        let t = optimal_scale_table(&obs, Category::Multi2Stage);
        assert_eq!(t[0].fold_change, 2.0);
    }

    #[test]
    fn non_minimum_records_do_not_move_threshold() {
        let setups = enumerate_all(&SearchRanges::default().restrict_compute(&[-2]));
        let recs = generate_dataset(&setups, &SurrogateParams::default(), 0, "p");
        let mut set = ResultSet::default();
        for r in &recs {
            set.pairs.entry(r.language_pair.clone()).or_default().insert(r.setup_id.clone(), r.val_loss);
        }
        let obs = set.observations("p", &setups);
        let m0 = category_minima(&obs).unwrap();
        let d = estimate_compute_optimal(&obs, -2).unwrap().d_star;
        let t0 = detect_threshold(&m0, -2, d, 0.0);
        // Degrade every non-winning record; the threshold must not change.
        let winners: BTreeSet<String> = m0
            .iter()
            .flat_map(|m| [&m.mono, &m.multi1, &m.multi2])
            .flatten()
            .map(|w| w.setup_id.clone())
            .collect();
        let bumped: Vec<Observation> = obs
            .iter()
            .map(|o| Observation {
                loss: if winners.contains(&o.setup.id) { o.loss } else { o.loss + 1.0 },
                ..*o
            })
            .collect();
        let m1 = category_minima(&bumped).unwrap();
        assert_eq!(t0, detect_threshold(&m1, -2, d, 0.0));
    }
}
