//! Fitted models: the epoch quadratic, the `k*(C, D_T)` extrapolation model
//! and the shared-exponent ratio power law.
//!
//! Regressions run in natural log internally; everything user-facing is
//! reported in base 2 (`f_k`, `f_D`, `log2 k*`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::budget::reference_constants;
use crate::search::Approach;
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rss: f64,
    pub n_points: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn distinct_count(mut xs: Vec<f64>) -> usize {
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.len()
}

// ---------------------------------------------------------------------------
// Quadratic in f_k

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticEpochFit {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    pub f_k_star: f64,
    pub k_star: f64,
    /// Set when `a2 > 0` and the minimizer is the vertex.
    pub convex: bool,
    /// Vertex lies more than one step outside the sampled `f_k` range.
    pub extrapolated: bool,
    pub rss: f64,
    pub n_points: usize,
}

impl QuadraticEpochFit {
    pub fn predict(&self, f_k: f64) -> f64 {
        self.a2 * f_k * f_k + self.a1 * f_k + self.a0
    }

    /// `k*` rounded to the nearest power of two (in log space).
    pub fn k_star_pow2(&self) -> f64 {
        self.f_k_star.round().exp2()
    }
}

/// OLS fit of `L ≈ a2·f_k² + a1·f_k + a0`.
pub fn fit_epoch_quadratic(points: &[(f64, f64)]) -> Result<QuadraticEpochFit> {
    let distinct = distinct_count(points.iter().map(|p| p.0).collect());
    if distinct < 3 {
        return Err(Error::Underdetermined {
            needed: 3,
            got: distinct,
        });
    }
    // Centre the abscissae for conditioning, then map back.
    let n = points.len() as f64;
    let xm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for &(x, y) in points {
        let u = x - xm;
        let mut p = 1.0;
        for (i, si) in s.iter_mut().enumerate() {
            *si += p;
            if i < 3 {
                t[i] += p * y;
            }
            p *= u;
        }
    }
    let c = solve(
        vec![
            vec![s[0], s[1], s[2]],
            vec![s[1], s[2], s[3]],
            vec![s[2], s[3], s[4]],
        ],
        t.to_vec(),
    )
    .ok_or(Error::Underdetermined {
        needed: 3,
        got: distinct,
    })?;
    let (c0, c1, c2) = (c[0], c[1], c[2]);
    let a2 = c2;
    let a1 = c1 - 2.0 * c2 * xm;
    let a0 = c0 - c1 * xm + c2 * xm * xm;

    let rss = points
        .iter()
        .map(|&(x, y)| {
            let u = x - xm;
            let e = y - (c0 + c1 * u + c2 * u * u);
            e * e
        })
        .sum();

    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (f_k_star, convex) = if a2 > 0.0 {
        (xm - c1 / (2.0 * c2), true)
    } else {
        let best = points
            .iter()
            .min_by(|p, q| p.1.total_cmp(&q.1).then(p.0.total_cmp(&q.0)))
            .expect("non-empty");
        (best.0, false)
    };
    Ok(QuadraticEpochFit {
        a2,
        a1,
        a0,
        f_k_star,
        k_star: f_k_star.exp2(),
        convex,
        extrapolated: f_k_star < lo - 1.0 || f_k_star > hi + 1.0,
        rss,
        n_points: points.len(),
    })
}

// ---------------------------------------------------------------------------
// k* model

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub h: f64,
    #[serde(rename = "f_D")]
    pub f_d: f64,
}

/// `log2 k* = h(f_D − a·log2(C/C0))`, `h` piecewise linear and decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KStarModel {
    pub a: f64,
    /// Ordered by increasing `h`, hence strictly decreasing `f_D`.
    pub knots: Vec<Knot>,
    pub approach: Approach,
}

/// Default `h` grid top for an approach.
pub fn default_h_max(approach: Approach) -> f64 {
    match approach {
        Approach::Multi2Stage => 3.0,
        _ => 4.0,
    }
}

/// Piecewise-linear interpolation through `knots` (increasing h, decreasing
/// f_D), linear on the end segments, clamped at 0.
fn eval_h(knots: &[Knot], x: f64) -> f64 {
    let n = knots.len();
    if n == 1 {
        return knots[0].h.max(0.0);
    }
    // Segment j joins knots j and j+1; find the one whose f_D span holds x.
    let mut seg = n - 2;
    for j in 0..n - 1 {
        if x >= knots[j + 1].f_d {
            seg = j;
            break;
        }
    }
    let (k0, k1) = (knots[seg], knots[seg + 1]);
    let y = k0.h + (k1.h - k0.h) * (x - k0.f_d) / (k1.f_d - k0.f_d);
    y.max(0.0)
}

impl KStarModel {
    pub fn h(&self, x: f64) -> f64 {
        eval_h(&self.knots, x)
    }

    /// `log2 k*` at compute `c` and target corpus exponent `f_d`.
    pub fn log2_kstar(&self, c: f64, f_d: f64) -> f64 {
        let delta = (c / reference_constants().c0).log2();
        self.h(f_d - self.a * delta)
    }

    pub fn knots_strictly_decreasing(&self) -> bool {
        self.knots.windows(2).all(|w| w[1].f_d < w[0].f_d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KStarFit {
    pub model: KStarModel,
    pub diagnostics: Diagnostics,
}

/// One observation for the k* fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KStarPoint {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "f_D")]
    pub f_d: f64,
    pub log2_k_star: f64,
}

const A_LO: f64 = 0.05;
const A_HI: f64 = 1.5;
const MIN_GAP: f64 = 1e-6;
/// RMS residual (in log2 k*) above which a fit is flagged.
const RESIDUAL_WARN: f64 = 0.25;

/// Decreasing isotonic regression (pool adjacent violators) on `ys` already
/// sorted by abscissa.
pub fn isotonic_decreasing(ys: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() > 1 {
            let (m1, n1) = blocks[blocks.len() - 1];
            let (m0, n0) = blocks[blocks.len() - 2];
            if m0 >= m1 {
                break;
            }
            blocks.pop();
            let n = n0 + n1;
            *blocks.last_mut().unwrap() = ((m0 * n0 as f64 + m1 * n1 as f64) / n as f64, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat_n(m, n))
        .collect()
}

fn h_levels(h_max: f64) -> Vec<f64> {
    let n = (h_max / 0.5).round() as usize;
    (0..=n).map(|i| i as f64 * 0.5).collect()
}

/// Initial knot positions read off the isotonic fit of the shifted data.
fn initial_knots(xs: &[f64], ys: &[f64], levels: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let sx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let iso = isotonic_decreasing(&idx.iter().map(|&i| ys[i]).collect::<Vec<_>>());

    // Level crossings where the isotonic curve brackets the level with a
    // strict drop; others are filled in by extrapolation below.
    let pos: Vec<Option<f64>> = levels
        .iter()
        .map(|&lv| {
            (0..sx.len().saturating_sub(1)).find_map(|i| {
                let (y0, y1) = (iso[i], iso[i + 1]);
                if y0 >= lv && lv >= y1 && y0 > y1 && sx[i + 1] > sx[i] {
                    Some(sx[i] + (y0 - lv) / (y0 - y1) * (sx[i + 1] - sx[i]))
                } else {
                    None
                }
            })
        })
        .collect();

    let known: Vec<usize> = (0..levels.len()).filter(|&j| pos[j].is_some()).collect();
    if known.len() < 2 {
        // Fall back to a straight line across the data span.
        let (lo, hi) = (sx[0], sx[sx.len() - 1]);
        let top = levels[levels.len() - 1];
        let span = if hi > lo { hi - lo } else { 1.0 };
        return levels.iter().map(|&lv| hi - lv / top * span).collect();
    }
    let slope_at = |j0: usize, j1: usize| {
        let (p0, p1) = (pos[j0].unwrap(), pos[j1].unwrap());
        (p1 - p0) / (levels[j1] - levels[j0])
    };
    let (first, second) = (known[0], known[1]);
    let (penult, last) = (known[known.len() - 2], known[known.len() - 1]);
    let lo_slope = slope_at(first, second);
    let hi_slope = slope_at(penult, last);
    let mut out: Vec<f64> = (0..levels.len())
        .map(|j| match pos[j] {
            Some(p) => p,
            None if j < first => pos[first].unwrap() + lo_slope * (levels[j] - levels[first]),
            None if j > last => pos[last].unwrap() + hi_slope * (levels[j] - levels[last]),
            None => {
                // Interior gap: interpolate between neighbouring known knots.
                let prev = *known.iter().rev().find(|&&k| k < j).unwrap();
                let next = *known.iter().find(|&&k| k > j).unwrap();
                pos[prev].unwrap() + slope_at(prev, next) * (levels[j] - levels[prev])
            }
        })
        .collect();
    enforce_order(&mut out);
    out
}

fn enforce_order(f_ds: &mut [f64]) {
    for j in 1..f_ds.len() {
        if f_ds[j] > f_ds[j - 1] - MIN_GAP {
            f_ds[j] = f_ds[j - 1] - MIN_GAP;
        }
    }
}

fn make_knots(levels: &[f64], f_ds: &[f64]) -> Vec<Knot> {
    levels
        .iter()
        .zip(f_ds)
        .map(|(&h, &f_d)| Knot { h, f_d })
        .collect()
}

fn sse(levels: &[f64], f_ds: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    let knots = make_knots(levels, f_ds);
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - eval_h(&knots, x);
            e * e
        })
        .sum()
}

/// Levenberg-Marquardt on knot positions, projected back onto the ordering
/// constraint after every step.
fn refine_knots(levels: &[f64], init: Vec<f64>, xs: &[f64], ys: &[f64]) -> (Vec<f64>, f64) {
    let p = init.len();
    let mut f = init;
    let mut cur = sse(levels, &f, xs, ys);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        if cur < 1e-28 {
            break;
        }
        // Numerical Jacobian of the residual vector.
        let knots = make_knots(levels, &f);
        let res: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| y - eval_h(&knots, x))
            .collect();
        let mut jac = vec![vec![0.0; p]; xs.len()];
        for j in 0..p {
            let step = 1e-7 * (1.0 + f[j].abs());
            let mut g = f.clone();
            g[j] += step;
            let kn = make_knots(levels, &g);
            for (i, &x) in xs.iter().enumerate() {
                let r2 = ys[i] - eval_h(&kn, x);
                jac[i][j] = (r2 - res[i]) / step;
            }
        }
        let mut jtj = vec![vec![0.0; p]; p];
        let mut jtr = vec![0.0; p];
        for i in 0..xs.len() {
            for a in 0..p {
                jtr[a] += jac[i][a] * res[i];
                for b in 0..p {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut m = jtj.clone();
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * (jtj[a][a] + 1e-9);
            }
            let Some(delta) = solve(m, jtr.clone()) else {
                lambda *= 10.0;
                continue;
            };
            // Residual r = y − h, so the Gauss-Newton step is −(JᵀJ)⁻¹Jᵀr.
            let mut cand: Vec<f64> = f.iter().zip(&delta).map(|(v, d)| v - d).collect();
            enforce_order(&mut cand);
            let val = sse(levels, &cand, xs, ys);
            if val < cur {
                f = cand;
                cur = val;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (f, cur)
}

/// Dense solve by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn inner_fit(a: f64, pts: &[KStarPoint], levels: &[f64]) -> (Vec<f64>, f64) {
    let c0 = reference_constants().c0;
    let xs: Vec<f64> = pts
        .iter()
        .map(|p| p.f_d - a * (p.c / c0).log2())
        .collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.log2_k_star).collect();
    let init = initial_knots(&xs, &ys, levels);
    refine_knots(levels, init, &xs, &ys)
}

/// Least-squares fit of the k* model.
///
/// The shift exponent `a` is found by a coarse scan over `[0.05, 1.5]`
/// followed by golden-section refinement; for each candidate `a` the knot
/// positions are fitted under the monotonicity constraint.
pub fn fit_kstar_model(pts: &[KStarPoint], approach: Approach, h_max: Option<f64>) -> Result<KStarFit> {
    let n_c = distinct_count(pts.iter().map(|p| p.c).collect());
    if n_c < 2 {
        return Err(Error::Unidentifiable);
    }
    let levels = h_levels(h_max.unwrap_or_else(|| default_h_max(approach)));
    let obj = |a: f64| inner_fit(a, pts, &levels).1;

    const COARSE: usize = 30;
    let grid: Vec<f64> = (0..=COARSE)
        .map(|i| A_LO + (A_HI - A_LO) * i as f64 / COARSE as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&a| obj(a)).collect();
    let best = (0..grid.len())
        .min_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .unwrap();

    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(COARSE)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (obj(x1), obj(x2));
    while hi - lo > 1e-7 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = obj(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = obj(x2);
        }
    }
    // Keep the coarse winner if refinement did not improve on it.
    let (a, (f_ds, rss)) = {
        let mid = 0.5 * (lo + hi);
        let refined = inner_fit(mid, pts, &levels);
        if refined.1 <= vals[best] {
            (mid, refined)
        } else {
            (grid[best], inner_fit(grid[best], pts, &levels))
        }
    };

    let mut warnings = Vec::new();
    let rms = (rss / pts.len() as f64).sqrt();
    if rms > RESIDUAL_WARN {
        warnings.push(format!(
            "large residual: rms {rms:.3} in log2 k*; data may not be monotone in the shifted corpus size"
        ));
    }
    Ok(KStarFit {
        model: KStarModel {
            a,
            knots: make_knots(&levels, &f_ds),
            approach,
        },
        diagnostics: Diagnostics {
            rss,
            n_points: pts.len(),
            warnings,
        },
    })
}

/// `k* = 2^h(f_D − a·Δ)`, clamped to at least 1.
pub fn predict_kstar(model: &KStarModel, c: f64, d_t: f64, round_pow2: bool) -> f64 {
    let f_d = (d_t / reference_constants().d_t0).log2();
    let y = model.log2_kstar(c, f_d);
    let y = if round_pow2 { y.round() } else { y };
    y.exp2().max(1.0)
}

// ---------------------------------------------------------------------------
// Ratio power law

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub r: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioGroup {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPowerLawFit {
    pub beta: f64,
    pub groups: Vec<RatioGroup>,
    /// `ln L − ln L̂`, in input order.
    pub residuals: Vec<f64>,
    pub rss: f64,
}

impl RatioPowerLawFit {
    pub fn predict(&self, m: f64, d: f64, r: f64) -> Option<f64> {
        self.groups
            .iter()
            .find(|g| g.m == m && g.d == d)
            .map(|g| g.l0 * r.powf(self.beta))
    }
}

/// Shared-slope regression of `ln L` on `ln r` with one intercept per `(M, D)`.
pub fn fit_ratio_power_law(points: &[RatioPoint]) -> Result<RatioPowerLawFit> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no ratio points".into()));
    }
    let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        if !(p.loss > 0.0 && p.r > 0.0) {
            return Err(Error::Validation {
                location: format!("point {}", i + 1),
                message: "loss and r must be positive".into(),
            });
        }
        groups.entry((p.m.to_bits(), p.d.to_bits())).or_default().push(i);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut means = Vec::with_capacity(groups.len());
    for idx in groups.values() {
        let p0 = points[idx[0]];
        if distinct_count(idx.iter().map(|&i| points[i].r).collect()) < 2 {
            return Err(Error::DegenerateGroup { m: p0.m, d: p0.d });
        }
        let n = idx.len() as f64;
        let xm = idx.iter().map(|&i| points[i].r.ln()).sum::<f64>() / n;
        let ym = idx.iter().map(|&i| points[i].loss.ln()).sum::<f64>() / n;
        for &i in idx {
            let dx = points[i].r.ln() - xm;
            num += dx * (points[i].loss.ln() - ym);
            den += dx * dx;
        }
        means.push((p0, xm, ym, idx.len()));
    }
    let beta = num / den;
    let groups_out: Vec<RatioGroup> = means
        .iter()
        .map(|&(p0, xm, ym, n)| RatioGroup {
            m: p0.m,
            d: p0.d,
            l0: (ym - beta * xm).exp(),
            n_points: n,
        })
        .collect();
    let lookup: BTreeMap<(u64, u64), f64> = groups_out
        .iter()
        .map(|g| ((g.m.to_bits(), g.d.to_bits()), g.l0.ln()))
        .collect();
    let residuals: Vec<f64> = points
        .iter()
        .map(|p| p.loss.ln() - (lookup[&(p.m.to_bits(), p.d.to_bits())] + beta * p.r.ln()))
        .collect();
    let rss = residuals.iter().map(|e| e * e).sum();
    Ok(RatioPowerLawFit {
        beta,
        groups: groups_out,
        residuals,
        rss,
    })
}

// ---------------------------------------------------------------------------
// Serialized form

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", content = "parameters", rename_all = "kebab-case")]
pub enum FittedModel {
    EpochQuadratic(QuadraticEpochFit),
    Kstar(KStarModel),
    RatioPowerLaw(RatioPowerLawFit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub model: FittedModel,
    pub diagnostics: Diagnostics,
}

impl ModelFile {
    pub fn epoch(fit: QuadraticEpochFit) -> Self {
        let mut warnings = Vec::new();
        if !fit.convex {
            warnings.push("not convex: minimizer is the grid argmin".into());
        }
        if fit.extrapolated {
            warnings.push("minimizer extrapolated beyond the sampled epoch range".into());
        }
        let diagnostics = Diagnostics {
            rss: fit.rss,
            n_points: fit.n_points,
            warnings,
        };
        Self {
            model: FittedModel::EpochQuadratic(fit),
            diagnostics,
        }
    }

    pub fn kstar(fit: KStarFit) -> Self {
        Self {
            model: FittedModel::Kstar(fit.model),
            diagnostics: fit.diagnostics,
        }
    }

    pub fn ratio(fit: RatioPowerLawFit) -> Self {
        let diagnostics = Diagnostics {
            rss: fit.rss,
            n_points: fit.residuals.len(),
            warnings: Vec::new(),
        };
        Self {
            model: FittedModel::RatioPowerLaw(fit),
            diagnostics,
        }
    }
}
