//! Clark residues of the Krein-shift inner function.
//!
//! Breakpoints `a_n` split the line into gaps `(a_n, a_{n+1})` with midpoints
//! `b_n`. The shift `u` is `+1/2` on `(a_n, b_n)` and `-1/2` on `(b_n, a_{n+1})`,
//! and `(1 - θ)/(1 + θ) = const · e^{Ku}`. Each gap contributes an elementary
//! logarithm to `Ku`, so everything here is an atom sum:
//!
//! `L(x) = Σ_j ½ ln[(b_j - x)² / |(a_j - x)(a_{j+1} - x)|]`
//!
//! with `|θ'(x)| = |L'(x)| / cosh L(x)` on the line and residue weights
//! `β_n = (δ_n/2) exp(-Σ_{j≠n} L_j(b_n))`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, GapError, Result};
use crate::seqcore::Interval;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClarkConfig {
    /// Atoms with `|b_j - x| <= radius` are summed exactly.
    pub radius: f64,
    /// Gap cap; defaults to the largest gap.
    pub cap: Option<f64>,
    /// Add the mean-gap estimate `δ̄/(8D)` of each truncated side.
    pub extrapolate: bool,
    /// Only gaps whose midpoint lies here get residue weights.
    pub targets: Option<Interval>,
}

impl Default for ClarkConfig {
    fn default() -> Self {
        Self { radius: 1e4, cap: None, extrapolate: true, targets: None }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidueWeight {
    /// Position of the gap in the breakpoint list.
    pub n: usize,
    pub a: f64,
    pub delta: f64,
    /// `Σ_{j≠n}` of atom contributions at `b_n`, tails included when extrapolating.
    pub log_sum: f64,
    pub beta: f64,
    /// Bound on `|β_n - β_n^∞|` from gaps beyond the summed range.
    pub tail_bound: f64,
}

impl ResidueWeight {
    pub fn midpoint(&self) -> f64 {
        self.a + 0.5 * self.delta
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KreinInner {
    pub breakpoints: Vec<f64>,
    pub midpoints: Vec<f64>,
    pub gaps: Vec<f64>,
    pub cap: f64,
    pub config: ClarkConfig,
    pub weights: Vec<ResidueWeight>,
}

/// `½ ln[D² / |D² - h²|]` for an atom of half-width `h` at offset `D`.
fn atom(d: f64, h: f64) -> f64 {
    let r = h / d;
    if r.abs() < 0.5 {
        -0.5 * (-r * r).ln_1p()
    } else {
        0.5 * (2.0 * d.abs().ln() - (d - h).abs().ln() - (d + h).abs().ln())
    }
}

/// `d/dx` of the atom term at `x`, where `d = b - x`.
fn atom_derivative(x: f64, a0: f64, b: f64, a1: f64) -> f64 {
    1.0 / (x - b) - 0.5 / (x - a0) - 0.5 / (x - a1)
}

struct Side {
    count: usize,
    gap_sum: f64,
    edge: f64,
}

impl KreinInner {
    pub fn new(breakpoints: &[f64], cfg: ClarkConfig) -> Result<Self> {
        if breakpoints.len() < 2 {
            return param("need at least two breakpoints");
        }
        if cfg.radius.is_nan() || cfg.radius <= 0.0 {
            return param(format!("truncation radius must be positive, got {}", cfg.radius));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| w[1] <= w[0]) {
            return Err(GapError::Domain(format!("breakpoints must increase strictly ({} then {})", w[0], w[1])));
        }
        let gaps: Vec<f64> = breakpoints.windows(2).map(|w| w[1] - w[0]).collect();
        let midpoints: Vec<f64> = breakpoints.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let widest = gaps.iter().copied().fold(0.0, f64::max);
        let cap = match cfg.cap {
            Some(c) if c < widest => {
                return Err(GapError::Domain(format!("gap {widest} exceeds the cap {c}")));
            }
            Some(c) => c,
            None => widest,
        };
        let mut inner = KreinInner { breakpoints: breakpoints.to_vec(), midpoints, gaps, cap, config: cfg, weights: vec![] };
        let targets: Vec<usize> = (0..inner.gaps.len())
            .filter(|&n| cfg.targets.is_none_or(|t| t.contains_closed(inner.midpoints[n])))
            .collect();
        inner.weights = targets.par_iter().map(|&n| inner.weight(n)).collect();
        Ok(inner)
    }

    /// Indices `lo..hi` of gaps with midpoint within the radius of `x`.
    fn range_about(&self, x: f64) -> (usize, usize) {
        let r = self.config.radius;
        let lo = self.midpoints.partition_point(|&b| b < x - r);
        let hi = self.midpoints.partition_point(|&b| b <= x + r);
        (lo, hi)
    }

    fn side(&self, idx: impl Iterator<Item = usize>, x: f64) -> Side {
        let mut s = Side { count: 0, gap_sum: 0.0, edge: 0.0 };
        for j in idx {
            s.count += 1;
            s.gap_sum += self.gaps[j];
            s.edge = s.edge.max((self.midpoints[j] - x).abs());
        }
        s
    }

    /// Estimated and bounded contribution of the gaps past one side.
    fn tail(&self, side: &Side, x_halfwidth: f64) -> (f64, f64) {
        let edge = if side.count == 0 { x_halfwidth } else { side.edge };
        let bound = self.cap / (4.0 * edge);
        let estimate = if self.config.extrapolate && side.count > 0 {
            let mean = side.gap_sum / side.count as f64;
            mean / (8.0 * (edge + 0.5 * mean))
        } else {
            0.0
        };
        (estimate, bound)
    }

    fn weight(&self, n: usize) -> ResidueWeight {
        let b = self.midpoints[n];
        let (lo, hi) = self.range_about(b);
        let mut sum = 0.0;
        for j in (lo..hi).filter(|&j| j != n) {
            sum += atom(self.midpoints[j] - b, 0.5 * self.gaps[j]);
        }
        let half = 0.5 * self.gaps[n];
        let (el, bl) = self.tail(&self.side(lo..n, b), half);
        let (er, br) = self.tail(&self.side(n + 1..hi, b), half);
        let log_sum = sum + el + er;
        let beta = half * (-log_sum).exp();
        // the true sum lies within bl + br of the estimate
        let tail_bound = beta * ((bl + br).exp() - 1.0);
        ResidueWeight { n, a: self.breakpoints[n], delta: self.gaps[n], log_sum, beta, tail_bound }
    }

    /// `L(x)` and `L'(x)`; the tail estimate enters `L` only.
    pub fn log_shift(&self, x: f64) -> (f64, f64) {
        let (lo, hi) = self.range_about(x);
        let mut l = 0.0;
        let mut dl = 0.0;
        for j in lo..hi {
            l += atom(self.midpoints[j] - x, 0.5 * self.gaps[j]);
            dl += atom_derivative(x, self.breakpoints[j], self.midpoints[j], self.breakpoints[j + 1]);
        }
        let split = lo + self.midpoints[lo..hi].partition_point(|&b| b < x);
        let (el, _) = self.tail(&self.side(lo..split, x), 0.0);
        let (er, _) = self.tail(&self.side(split..hi, x), 0.0);
        (l + el + er, dl)
    }

    /// Residue weight of the gap with the given position.
    pub fn weight_of(&self, n: usize) -> Option<&ResidueWeight> {
        self.weights.iter().find(|w| w.n == n)
    }
}

pub fn residue_weights(breakpoints: &[f64], radius: f64) -> Result<Vec<ResidueWeight>> {
    Ok(KreinInner::new(breakpoints, ClarkConfig { radius, ..ClarkConfig::default() })?.weights)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfilePoint {
    pub x: f64,
    /// `Σ β_n / (x - b_n)²` over the computed weights in range.
    pub beta_branch: f64,
    /// `|θ'(x)| = |L'(x)| / cosh L(x)`
    pub exact: f64,
}

/// Moves `x` by `1e-9` when it sits on a breakpoint or midpoint.
fn nudge(inner: &KreinInner, x: f64) -> f64 {
    let hit = |v: &[f64]| v.binary_search_by(|p| p.total_cmp(&x)).is_ok();
    if hit(&inner.breakpoints) || hit(&inner.midpoints) {
        x + 1e-9
    } else {
        x
    }
}

pub fn theta_derivative_profile(inner: &KreinInner, grid: &[f64]) -> Vec<ProfilePoint> {
    let r = inner.config.radius;
    grid.par_iter()
        .map(|&x0| {
            let x = nudge(inner, x0);
            let beta_branch = inner
                .weights
                .iter()
                .filter(|w| (w.midpoint() - x).abs() <= r)
                .map(|w| w.beta / (x - w.midpoint()).powi(2))
                .sum();
            let (l, dl) = inner.log_shift(x);
            let e = (-l.abs()).exp();
            ProfilePoint { x, beta_branch, exact: dl.abs() * 2.0 * e / (1.0 + e * e) }
        })
        .collect()
}

/// `|θ'|` at a midpoint, the limit `2/β_n`.
pub fn midpoint_derivative(w: &ResidueWeight) -> f64 {
    2.0 / w.beta
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MiddleThird {
    pub n: usize,
    pub delta: f64,
    pub min_derivative: f64,
    pub max_derivative: f64,
}

impl MiddleThird {
    /// `min|θ'|·δ`, `max|θ'|·δ²`, `min|θ'|·δ²`, `max|θ'|·δ`
    fn ratios(&self) -> [f64; 4] {
        let d = self.delta;
        [self.min_derivative * d, self.max_derivative * d * d, self.min_derivative * d * d, self.max_derivative * d]
    }
}

/// Constants of one ordering `lower ≲ |θ'| ≲ upper` over a set of gaps.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrderingFit {
    /// Largest `c` with `|θ'| >= c · lower` everywhere.
    pub lower_constant: f64,
    /// Smallest `C` with `|θ'| <= C · upper` everywhere.
    pub upper_constant: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegimeReport {
    pub gaps: usize,
    /// `δ⁻¹ ≲ |θ'| ≲ δ⁻²`
    pub inverse_below: Option<OrderingFit>,
    /// `δ⁻² ≲ |θ'| ≲ δ⁻¹`
    pub inverse_above: Option<OrderingFit>,
    /// Whether each ordering is consistent (`lower <= upper` wherever it is applied).
    pub inverse_below_holds: bool,
    pub inverse_above_holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MiddleThirdReport {
    pub rows: Vec<MiddleThird>,
    /// Gaps shorter than 1.
    pub short_gaps: RegimeReport,
    /// Gaps of length at least 1.
    pub long_gaps: RegimeReport,
}

fn regime(rows: &[&MiddleThird]) -> RegimeReport {
    let fit = |lo: usize, hi: usize| {
        if rows.is_empty() {
            return None;
        }
        let r: Vec<[f64; 4]> = rows.iter().map(|m| m.ratios()).collect();
        Some(OrderingFit {
            lower_constant: r.iter().map(|x| x[lo]).fold(f64::INFINITY, f64::min),
            upper_constant: r.iter().map(|x| x[hi]).fold(0.0, f64::max),
        })
    };
    let below = fit(0, 1);
    let above = fit(2, 3);
    // lower and upper envelopes must be ordered on every gap of the regime
    let ordered = |swap: bool| {
        rows.iter().all(|m| {
            let (l, u) = if swap { (m.delta.powi(-2), m.delta.recip()) } else { (m.delta.recip(), m.delta.powi(-2)) };
            l <= u * (1.0 + 1e-12)
        })
    };
    RegimeReport {
        gaps: rows.len(),
        inverse_below: below,
        inverse_above: above,
        inverse_below_holds: !rows.is_empty() && ordered(false) && below.is_some_and(|f| f.lower_constant > 0.0),
        inverse_above_holds: !rows.is_empty() && ordered(true) && above.is_some_and(|f| f.lower_constant > 0.0),
    }
}

/// Samples `|θ'|` on the middle third of every weighted gap.
pub fn middle_third_bounds(inner: &KreinInner, samples: usize) -> MiddleThirdReport {
    let samples = samples.max(2);
    let rows: Vec<MiddleThird> = inner
        .weights
        .par_iter()
        .map(|w| {
            let grid: Vec<f64> = (0..samples)
                .map(|i| w.a + w.delta * (1.0 / 3.0 + i as f64 / (3.0 * (samples - 1) as f64)))
                .collect();
            let vals: Vec<f64> = grid
                .iter()
                .map(|&x| {
                    let x = nudge(inner, x);
                    let (l, dl) = inner.log_shift(x);
                    let e = (-l.abs()).exp();
                    dl.abs() * 2.0 * e / (1.0 + e * e)
                })
                .collect();
            MiddleThird {
                n: w.n,
                delta: w.delta,
                min_derivative: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max_derivative: vals.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    let short: Vec<&MiddleThird> = rows.iter().filter(|m| m.delta < 1.0).collect();
    let long: Vec<&MiddleThird> = rows.iter().filter(|m| m.delta >= 1.0).collect();
    MiddleThirdReport { short_gaps: regime(&short), long_gaps: regime(&long), rows }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandReport {
    pub beta_over_delta: (f64, f64),
    pub beta_over_delta_sq: (f64, f64),
    pub max_beta_over_delta: f64,
}

impl BandReport {
    pub fn spread(&self) -> (f64, f64) {
        (self.beta_over_delta.1 / self.beta_over_delta.0, self.beta_over_delta_sq.1 / self.beta_over_delta_sq.0)
    }
}

/// Extremes of `β/δ` and `β/δ²` over a set of weights.
pub fn band(weights: &[ResidueWeight]) -> BandReport {
    let mut r1 = (f64::INFINITY, 0.0f64);
    let mut r2 = (f64::INFINITY, 0.0f64);
    for w in weights {
        let (x, y) = (w.beta / w.delta, w.beta / (w.delta * w.delta));
        r1 = (r1.0.min(x), r1.1.max(x));
        r2 = (r2.0.min(y), r2.1.max(y));
    }
    BandReport { beta_over_delta: r1, beta_over_delta_sq: r2, max_beta_over_delta: r1.1 }
}
