//! Logarithmic (2D Coulomb) energy of point configurations, per-interval
//! energies over a partition, the energy-condition series with its
//! truncation diagnostic, and closed-form log-kernel integrals of step
//! densities.
//!
//! Energies use ordered pairs with `k != l`:
//! `E(Λ) = Σ_{k≠l} log|λ_k - λ_l|`, so `{0, 1, 2}` has energy `2·log 2`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, GapError, Result};
use crate::fit;
use crate::seqcore::{Interval, Partition, PointSequence};

/// Above this size `total_energy` tries the arithmetic-progression fast path.
pub const DIRECT_ENERGY_LIMIT: usize = 20_000;

/// Size of the prefix used to cross-check the fast path against the double loop.
const FAST_PATH_GUARD: usize = 2_000;

/// Energy of an increasing slice of points: `2 Σ_{j>k} log(x_j - x_k)`.
fn energy_sorted(points: &[f64]) -> f64 {
    let row = |j: usize| -> f64 {
        let xj = points[j];
        points[..j].iter().map(|&xk| (xj - xk).ln()).sum::<f64>()
    };
    let s: f64 = if points.len() > 256 {
        (1..points.len()).into_par_iter().map(row).sum()
    } else {
        (1..points.len()).map(row).sum()
    };
    2.0 * s
}

fn check_distinct(points: &[f64]) -> Result<()> {
    match points.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(GapError::Domain(format!(
            "log 0: points {} and {} coincide or are unsorted",
            points[i],
            points[i + 1]
        ))),
        None => Ok(()),
    }
}

/// Closed form for `n` points in arithmetic progression with step `h`:
/// `E = 2 Σ_{d=1}^{n-1} (n-d) log(d·h)`.
pub fn progression_energy(n: usize, h: f64) -> f64 {
    let lh = h.ln();
    2.0 * (1..n).map(|d| (n - d) as f64 * ((d as f64).ln() + lh)).sum::<f64>()
}

fn uniform_step(points: &[f64]) -> Option<f64> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let h = (points[n - 1] - points[0]) / (n - 1) as f64;
    let tol = 1e-12 * h.abs().max(points[0].abs()).max(points[n - 1].abs());
    points.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= tol).then_some(h)
}

/// Energy of an increasing list of points; fails on coincident points.
pub fn energy_of(points: &[f64]) -> Result<f64> {
    check_distinct(points)?;
    if points.len() > DIRECT_ENERGY_LIMIT {
        if let Some(h) = uniform_step(points) {
            let guard = &points[..FAST_PATH_GUARD];
            let direct = energy_sorted(guard);
            let closed = progression_energy(FAST_PATH_GUARD, h);
            if (direct - closed).abs() <= 1e-9 * direct.abs().max(1.0) {
                return Ok(progression_energy(points.len(), h));
            }
        }
    }
    Ok(energy_sorted(points))
}

/// `E(Λ)` for the whole truncation; a single point (or none) has energy 0.
pub fn total_energy(seq: &PointSequence) -> Result<f64> {
    energy_of(seq.points())
}

/// Count and energy of the points of `seq` inside `iv`, using `(a, b]` or,
/// with `include_endpoints`, `[a, b]`.
pub fn interval_energy(seq: &PointSequence, iv: &Interval, include_endpoints: bool) -> (usize, f64) {
    let (lo, hi) = if include_endpoints { seq.closed_range(iv) } else { seq.half_open_range(iv) };
    let pts = &seq.points()[lo..hi];
    let e = if pts.len() < 2 { 0.0 } else { energy_sorted(pts) };
    (pts.len(), e)
}

/// Three-valued reading of a truncated series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesVerdict {
    Supported,
    Unsupported,
    Inconclusive,
}

impl SeriesVerdict {
    /// Ordering used when comparing reports: supported is best.
    pub fn rank(self) -> u8 {
        match self {
            SeriesVerdict::Supported => 2,
            SeriesVerdict::Inconclusive => 1,
            SeriesVerdict::Unsupported => 0,
        }
    }
}

/// Thresholds for the tail-growth diagnostic of a truncated positive series.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailConfig {
    /// Supported when the last-third slope is at most this fraction of the
    /// mean first-third summand.
    pub supported_ratio: f64,
    /// Unsupported (linear growth) when the last-third slope is at least this
    /// fraction of the mean first-third summand.
    pub unsupported_ratio: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self { supported_ratio: 1e-3, unsupported_ratio: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailDiagnostic {
    pub last_third_slope: f64,
    pub first_third_mean: f64,
    pub verdict: SeriesVerdict,
}

/// Slope of the partial sums over their last third, compared with the mean
/// summand over the first third.
pub fn tail_diagnostic(summands: &[f64], cfg: &TailConfig) -> TailDiagnostic {
    let n = summands.len();
    if n < 3 {
        return TailDiagnostic {
            last_third_slope: f64::NAN,
            first_third_mean: f64::NAN,
            verdict: SeriesVerdict::Inconclusive,
        };
    }
    let partial: Vec<f64> = summands
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect();
    let third = (n / 3).max(1);
    let first_mean = fit::mean(&summands[..third]);
    let start = n - third.max(2);
    let xs: Vec<f64> = (start..n).map(|i| i as f64).collect();
    let slope = fit::lsq_slope(&xs, &partial[start..]).unwrap_or(0.0);
    // absolute floor absorbs rounding on series whose summands vanish
    let floor = 1e-12 * (1.0 + first_mean.abs());
    let verdict = if slope <= cfg.supported_ratio * first_mean.max(0.0) + floor {
        SeriesVerdict::Supported
    } else if first_mean > 0.0 && slope >= cfg.unsupported_ratio * first_mean {
        SeriesVerdict::Unsupported
    } else {
        SeriesVerdict::Inconclusive
    };
    TailDiagnostic { last_third_slope: slope, first_third_mean: first_mean, verdict }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyRecord {
    pub index: i64,
    pub interval: Interval,
    pub count: usize,
    pub energy: f64,
    /// `(Δ_n² log|I_n| - E_n) / (1 + dist²(0, I_n))`
    pub summand: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    /// Intervals ordered by increasing `dist(0, I_n)`, ties by index.
    pub records: Vec<EnergyRecord>,
    /// Cumulative sums of the summands, aligned with `records`.
    pub partial_sums: Vec<f64>,
    pub tail: TailDiagnostic,
    pub window: Interval,
    pub include_endpoints: bool,
}

impl EnergyReport {
    pub fn verdict(&self) -> SeriesVerdict {
        self.tail.verdict
    }

    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }

    /// One row per interval: `index,a,b,count,energy,summand`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["index", "a", "b", "count", "energy", "summand"])?;
        for r in &self.records {
            wtr.write_record(&[
                r.index.to_string(),
                r.interval.a.to_string(),
                r.interval.b.to_string(),
                r.count.to_string(),
                r.energy.to_string(),
                r.summand.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn summand(count: usize, energy: f64, iv: &Interval) -> f64 {
    let d = count as f64;
    (d * d * iv.len().ln() - energy) * iv.poisson_weight()
}

/// Energy-condition report with the default half-open convention.
pub fn energy_condition_report(seq: &PointSequence, part: &Partition) -> Result<EnergyReport> {
    energy_condition_report_with(seq, part, false, &TailConfig::default())
}

pub fn energy_condition_report_with(
    seq: &PointSequence,
    part: &Partition,
    include_endpoints: bool,
    cfg: &TailConfig,
) -> Result<EnergyReport> {
    let intervals = part.intervals();
    if intervals.is_empty() {
        return param("partition has no intervals");
    }
    let mut records: Vec<EnergyRecord> = intervals
        .par_iter()
        .map(|ii| {
            let (count, energy) = interval_energy(seq, &ii.interval, include_endpoints);
            EnergyRecord {
                index: ii.index,
                interval: ii.interval,
                count,
                energy,
                summand: summand(count, energy, &ii.interval),
            }
        })
        .collect();
    records.sort_by(|x, y| {
        x.interval.dist_to_origin().total_cmp(&y.interval.dist_to_origin()).then(x.index.cmp(&y.index))
    });
    let ordered: Vec<f64> = records.iter().map(|r| r.summand).collect();
    let partial_sums = ordered
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect();
    let tail = tail_diagnostic(&ordered, cfg);
    Ok(EnergyReport { records, partial_sums, tail, window: seq.window(), include_endpoints })
}

// ---------------------------------------------------------------------------
// Log-kernel integrals of step densities

/// Nonnegative step density on `(edges[0], edges[last])` integrating to 1 and
/// bounded by `cap > 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDensity {
    edges: Vec<f64>,
    heights: Vec<f64>,
    cap: f64,
}

impl StepDensity {
    pub fn new(edges: Vec<f64>, heights: Vec<f64>, cap: f64) -> Result<Self> {
        if edges.len() < 2 || heights.len() + 1 != edges.len() {
            return param("step density needs k+1 edges for k heights (k >= 1)");
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return param("step edges must be strictly increasing");
        }
        if heights.iter().any(|&h| !(h >= 0.0 && h.is_finite())) {
            return param("step heights must be nonnegative");
        }
        if cap.is_nan() || cap <= 1.0 {
            return param(format!("density cap must exceed 1, got {cap}"));
        }
        if let Some(h) = heights.iter().find(|&&h| h > cap) {
            return param(format!("height {h} exceeds the declared cap {cap}"));
        }
        let mass: f64 = heights.iter().zip(edges.windows(2)).map(|(h, w)| h * (w[1] - w[0])).sum();
        if (mass - 1.0).abs() > 1e-9 {
            return param(format!("density must integrate to 1, got {mass}"));
        }
        Ok(Self { edges, heights, cap })
    }

    /// Uniform density `1/(b-a)` on `(a, b)` with the given cap.
    pub fn uniform(a: f64, b: f64, cap: f64) -> Result<Self> {
        if a.is_nan() || b.is_nan() || a >= b {
            return param("uniform density needs a < b");
        }
        Self::new(vec![a, b], vec![1.0 / (b - a)], cap)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    fn steps(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.edges.windows(2).zip(&self.heights).map(|(w, &h)| (w[0], w[1], h))
    }

    /// `∫ log₊|x - y| α(x) dx`.
    pub fn log_plus_potential(&self, y: f64) -> f64 {
        self.steps().map(|(p, q, h)| h * (f1_plus(q - y) - f1_plus(p - y))).sum()
    }
}

/// Which part of the logarithm to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogPart {
    /// `log₊ x = max(0, log x)`
    Plus,
    /// `log₋ x = max(0, -log x)`
    Minus,
}

pub fn log_plus(x: f64) -> f64 {
    x.ln().max(0.0)
}

pub fn log_minus(x: f64) -> f64 {
    (-x.ln()).max(0.0)
}

/// Antiderivative of `log₊|t|` vanishing at 0 (odd).
fn f1_plus(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        0.0
    } else {
        t.signum() * (a * a.ln() - a + 1.0)
    }
}

/// Second antiderivative of `log|t|` vanishing at 0 (even).
fn f2_log(t: f64) -> f64 {
    let a = t.abs();
    if a == 0.0 {
        0.0
    } else {
        0.5 * a * a * a.ln() - 0.75 * a * a
    }
}

/// Second antiderivative of `log₊|t|` vanishing on `[-1, 1]` (even).
fn f2_plus(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        0.0
    } else {
        0.5 * a * a * a.ln() - 0.75 * a * a + a - 0.25
    }
}

fn f2(part: LogPart, t: f64) -> f64 {
    match part {
        LogPart::Plus => f2_plus(t),
        LogPart::Minus => f2_plus(t) - f2_log(t),
    }
}

/// `∫_p^q ∫_r^s log±|x - y| dy dx` in closed form.
fn rect_integral(part: LogPart, p: f64, q: f64, r: f64, s: f64) -> f64 {
    f2(part, q - r) - f2(part, p - r) - f2(part, q - s) + f2(part, p - s)
}

/// `∬ log±|x - y| α(x) β(y) dx dy` summed in closed form over step pairs.
pub fn log_kernel_integral(alpha: &StepDensity, beta: &StepDensity, part: LogPart) -> f64 {
    alpha
        .steps()
        .flat_map(|(p, q, ha)| beta.steps().map(move |(r, s, hb)| ha * hb * rect_integral(part, p, q, r, s)))
        .sum()
}

/// Constant used for the one-variable bounds (parts 5 and 6); the
/// density of `|x - y|/L` is at most 4, which gives `1 + ln 4`.
pub const POTENTIAL_BOUND_CONST: f64 = 1.0 + std::f64::consts::LN_2 * 2.0;

/// Slack in the self-interaction upper bound `log₋(1/A) + 1`.
pub const SELF_INTERACTION_SLACK: f64 = 1.0;

/// Slack in the touching-intervals bound `min(log₋(1/A), log₋(1/B)) + 1`.
pub const TOUCHING_SLACK: f64 = 1.0;

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub part: u8,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(part: u8, lower: f64, value: f64, upper: f64) -> Self {
        let tol = 1e-9 * (1.0 + value.abs());
        Self { part, lower, value, upper, holds: lower <= value + tol && value <= upper + tol }
    }
}

/// Evaluates every applicable two-sided log-kernel bound for the pair
/// `(α, β)`:
///
/// 1. `log₋(a₂-a₁) ≤ ∬ log₋|x-y| αα ≤ log₋(1/A) + 1`
/// 2. `a₂ < b₁`: `log₋(b₂-a₁) ≤ ∬ log₋ αβ ≤ log₋(b₁-a₂)`
/// 3. `a₂ = b₁`: `∬ log₋ αβ ≤ min(log₋(1/A), log₋(1/B)) + 1`
/// 4. `a₂ ≤ b₁`: `log₊(b₁-a₂) ≤ ∬ log₊ αβ ≤ log₊(b₂-a₁)`
/// 5. `A/2 ≤ α ≤ A`, `y ∈ (a₁,a₂)`: `|∫ log₊|x-y| α - log₊(a₂-a₁)| ≤ C`
/// 6. `A/2 ≤ α ≤ A`, `y > a₂`: `log₊(y-a₁) - C ≤ ∫ log₊|x-y| α ≤ log₊(y-a₁)`
///
/// `probes` supplies the `y` values for parts 5 and 6.
pub fn log_bound_checks(alpha: &StepDensity, beta: &StepDensity, probes: &[f64]) -> Vec<BoundCheck> {
    let (a1, a2) = alpha.support();
    let (b1, b2) = beta.support();
    let (ca, cb) = (alpha.cap(), beta.cap());
    let mut out = Vec::new();

    for d in [alpha, beta] {
        let (l, r) = d.support();
        let v = log_kernel_integral(d, d, LogPart::Minus);
        out.push(BoundCheck::new(1, log_minus(r - l), v, log_minus(1.0 / d.cap()) + SELF_INTERACTION_SLACK));
    }
    if a2 < b1 {
        let v = log_kernel_integral(alpha, beta, LogPart::Minus);
        out.push(BoundCheck::new(2, log_minus(b2 - a1), v, log_minus(b1 - a2)));
    }
    if a2 == b1 {
        let v = log_kernel_integral(alpha, beta, LogPart::Minus);
        let up = log_minus(1.0 / ca).min(log_minus(1.0 / cb)) + TOUCHING_SLACK;
        out.push(BoundCheck::new(3, f64::NEG_INFINITY, v, up));
    }
    if a2 <= b1 {
        let v = log_kernel_integral(alpha, beta, LogPart::Plus);
        out.push(BoundCheck::new(4, log_plus(b1 - a2), v, log_plus(b2 - a1)));
    }
    let banded = alpha.heights().iter().all(|&h| h >= ca / 2.0 && h <= ca);
    if banded {
        for &y in probes {
            let v = alpha.log_plus_potential(y);
            if a1 < y && y < a2 {
                let c = log_plus(a2 - a1);
                out.push(BoundCheck::new(5, c - POTENTIAL_BOUND_CONST, v, c + POTENTIAL_BOUND_CONST));
            } else if y > a2 {
                let c = log_plus(y - a1);
                out.push(BoundCheck::new(6, c - POTENTIAL_BOUND_CONST, v, c));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::{generate, SequenceLaw};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(points: &[f64]) -> PointSequence {
        PointSequence::from_points(points.to_vec(), "t").unwrap()
    }

    /// Independent O(N^2) oracle over all ordered pairs.
    fn oracle_energy(p: &[f64]) -> f64 {
        let mut e = 0.0;
        for (k, x) in p.iter().enumerate() {
            for (l, y) in p.iter().enumerate() {
                if k != l {
                    e += (x - y).abs().ln();
                }
            }
        }
        e
    }

    #[test]
    fn small_energies() {
        assert_eq!(total_energy(&seq(&[0.0, 1.0])).unwrap(), 0.0);
        assert_abs_diff_eq!(total_energy(&seq(&[0.0, 1.0, 2.0])).unwrap(), 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_eq!(total_energy(&seq(&[3.0])).unwrap(), 0.0);
    }

    #[test]
    fn duplicate_points_are_a_domain_error() {
        assert!(matches!(energy_of(&[0.0, 1.0, 1.0]), Err(GapError::Domain(_))));
    }

    #[test]
    fn unit_lattice_matches_oracle_and_asymptotics() {
        let k = 1000;
        let pts: Vec<f64> = (1..=k).map(|i| i as f64).collect();
        let e = energy_of(&pts).unwrap();
        let o = oracle_energy(&pts);
        assert!((e - o).abs() <= 1e-9 * o.abs());
        let kf = k as f64;
        assert!((e - (kf * kf * kf.ln() - 1.5 * kf * kf)).abs() <= 0.1 * kf * kf);
    }

    #[test]
    fn progression_fast_path_agrees() {
        let n = DIRECT_ENERGY_LIMIT + 500;
        let pts: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let fast = energy_of(&pts).unwrap();
        let slow = energy_sorted(&pts);
        assert!((fast - slow).abs() <= 1e-9 * slow.abs());
    }

    #[test]
    fn interval_energy_examples() {
        let s = seq(&[0.0, 1.0, 2.0, 3.0]);
        let (c, e) = interval_energy(&s, &Interval::new(0.0, 2.0).unwrap(), false);
        assert_eq!((c, e), (2, 0.0));
        let (c, e) = interval_energy(&s, &Interval::new(0.0, 3.0).unwrap(), false);
        assert_eq!(c, 3);
        assert_abs_diff_eq!(e, 2.0 * 2f64.ln(), epsilon = 1e-15);
        let (c, _) = interval_energy(&s, &Interval::new(0.0, 3.0).unwrap(), true);
        assert_eq!(c, 4);
    }

    #[test]
    fn interval_energy_on_lattice_matches_oracle() {
        let s = generate(&SequenceLaw::Lattice { h: 1.0 }, Interval::window(-20.0, 120.0).unwrap(), None).unwrap();
        let (c, e) = interval_energy(&s, &Interval::new(0.0, 100.0).unwrap(), false);
        let pts: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(c, 100);
        assert!((e - oracle_energy(&pts)).abs() <= 1e-9 * e.abs());
    }

    fn dyadic_growth() -> Partition {
        Partition::symmetric(&[10.0, 30.0, 70.0, 150.0]).unwrap()
    }

    #[test]
    fn lattice_report_on_dyadic_growth() {
        let s = generate(&SequenceLaw::Lattice { h: 1.0 }, Interval::window(-150.0, 150.0).unwrap(), None).unwrap();
        let rep = energy_condition_report(&s, &dyadic_growth()).unwrap();
        assert_eq!(rep.records.len(), 8);
        for r in &rep.records {
            assert!(r.summand >= 0.0);
            let norm = r.interval.len().powi(2) * r.interval.poisson_weight();
            let ratio = r.summand / norm;
            assert!((0.5..=2.5).contains(&ratio), "normalized summand {ratio} on {}", r.interval);
        }
        assert!(rep.partial_sums.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn one_point_per_interval() {
        let s = seq(&[-5.0, 0.5, 5.0, 20.0]);
        let part = Partition::new(vec![-10.0, 0.0, 1.0, 10.0, 30.0]).unwrap();
        let rep = energy_condition_report(&s, &part).unwrap();
        for r in &rep.records {
            assert_eq!(r.count, 1);
            assert_eq!(r.energy, 0.0);
            assert_abs_diff_eq!(r.summand, r.interval.len().ln() * r.interval.poisson_weight(), epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_summands_are_supported() {
        let s = generate(&SequenceLaw::Lattice { h: 1.0 }, Interval::window(-50.0, 50.0).unwrap(), None).unwrap();
        let bp: Vec<f64> = (-50..=50).map(|i| i as f64).collect();
        let rep = energy_condition_report(&s, &Partition::new(bp).unwrap()).unwrap();
        assert_eq!(rep.verdict(), SeriesVerdict::Supported);
    }

    #[test]
    fn non_decaying_summands_are_unsupported() {
        let t = tail_diagnostic(&[1.0; 30], &TailConfig::default());
        assert_eq!(t.verdict, SeriesVerdict::Unsupported);
        let decaying: Vec<f64> = (1..200).map(|n| 1.0 / (n as f64).powi(4)).collect();
        assert_eq!(tail_diagnostic(&decaying, &TailConfig::default()).verdict, SeriesVerdict::Supported);
    }

    #[test]
    fn csv_has_one_row_per_interval() {
        let s = generate(&SequenceLaw::Lattice { h: 1.0 }, Interval::window(-150.0, 150.0).unwrap(), None).unwrap();
        let rep = energy_condition_report(&s, &dyadic_growth()).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("index,a,b,count,energy,summand"));
    }

    // --- log-kernel integrals -------------------------------------------

    /// Midpoint-rule oracle on an n x n grid.
    fn quadrature(alpha: &StepDensity, beta: &StepDensity, part: LogPart, n: usize) -> f64 {
        let dens = |d: &StepDensity, x: f64| -> f64 {
            d.steps().find(|&(p, q, _)| p <= x && x < q).map(|s| s.2).unwrap_or(0.0)
        };
        let (a1, a2) = alpha.support();
        let (b1, b2) = beta.support();
        let (hx, hy) = ((a2 - a1) / n as f64, (b2 - b1) / n as f64);
        let mut s = 0.0;
        for i in 0..n {
            let x = a1 + (i as f64 + 0.5) * hx;
            let ax = dens(alpha, x);
            for j in 0..n {
                let y = b1 + (j as f64 + 0.5) * hy;
                let d = (x - y).abs();
                let k = match part {
                    LogPart::Plus => log_plus(d),
                    LogPart::Minus => log_minus(d),
                };
                s += ax * dens(beta, y) * k;
            }
        }
        s * hx * hy
    }

    #[test]
    fn log_integral_examples() {
        let u01 = StepDensity::uniform(0.0, 1.0, 2.0).unwrap();
        assert_eq!(log_kernel_integral(&u01, &u01, LogPart::Plus), 0.0);
        let far = StepDensity::uniform(10.0, 11.0, 2.0).unwrap();
        assert_eq!(log_kernel_integral(&u01, &far, LogPart::Minus), 0.0);

        let near = StepDensity::uniform(2.0, 3.0, 2.0).unwrap();
        let v = log_kernel_integral(&u01, &near, LogPart::Plus);
        let q = quadrature(&u01, &near, LogPart::Plus, 10_000);
        assert!((v - q).abs() <= 1e-6, "closed form {v} vs quadrature {q}");
        assert!(v >= 0.0 && v <= 3f64.ln());
    }

    #[test]
    fn log_minus_self_interaction_of_uniform() {
        // E[-log|X-Y|] for X, Y uniform on (0, 1) is 3/2
        let u = StepDensity::uniform(0.0, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(log_kernel_integral(&u, &u, LogPart::Minus), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn multi_step_against_quadrature() {
        let a = StepDensity::new(vec![0.0, 0.3, 0.5, 1.2], vec![1.0, 1.5, 0.4 / 0.7], 2.0).unwrap();
        let b = StepDensity::new(vec![0.8, 1.0, 2.5], vec![2.0, 0.4], 2.5).unwrap();
        for part in [LogPart::Plus, LogPart::Minus] {
            let v = log_kernel_integral(&a, &b, part);
            let q = quadrature(&a, &b, part, 3000);
            assert!((v - q).abs() <= 5e-4, "{part:?}: {v} vs {q}");
        }
    }

    #[test]
    fn non_normalized_density_rejected() {
        assert!(StepDensity::new(vec![0.0, 1.0], vec![0.5], 2.0).is_err());
        assert!(StepDensity::new(vec![0.0, 1.0], vec![1.0], 1.0).is_err());
        assert!(StepDensity::new(vec![0.0, 0.25], vec![4.0], 3.0).is_err());
    }

    #[test]
    fn potential_matches_quadrature() {
        let a = StepDensity::new(vec![0.0, 2.0, 5.0], vec![0.2, 0.2], 0.3 + 1.0).unwrap();
        for y in [-3.0, 1.0, 4.0, 9.0] {
            let n = 200_000;
            let h = 5.0 / n as f64;
            let q: f64 = (0..n).map(|i| 0.2 * log_plus((h * (i as f64 + 0.5) - y).abs())).sum::<f64>() * h;
            assert!((a.log_plus_potential(y) - q).abs() < 1e-6);
        }
    }

    /// Uniform density at its cap on an interval shorter than 1: the
    /// self-interaction is `log A + 3/2`, above `log₋(1/A) + 1`.
    #[test]
    fn saturated_uniform_density_exceeds_unit_self_interaction_slack() {
        let d = StepDensity::uniform(0.0, 0.1, 10.0).unwrap();
        let v = log_kernel_integral(&d, &d, LogPart::Minus);
        assert_abs_diff_eq!(v, 10f64.ln() + 1.5, epsilon = 1e-12);
        let checks = log_bound_checks(&d, &d, &[]);
        assert!(!checks.iter().find(|c| c.part == 1).unwrap().holds);
    }

    #[test]
    fn touching_bound_is_sharp_but_holds() {
        let a = StepDensity::uniform(-0.001, 0.0, 1000.0).unwrap();
        let b = StepDensity::uniform(0.0, 0.5, 2.0).unwrap();
        let checks = log_bound_checks(&a, &b, &[]);
        let c3 = checks.iter().find(|c| c.part == 3).unwrap();
        assert!(c3.holds, "{c3:?}");
        assert!(c3.upper - c3.value < 0.01);
    }

    /// Normalized step density on `[lo, lo + len]` with heights in `[h0, 1]`
    /// before scaling, and a cap of `max · u` pushed above 1.
    fn step_density(heights: &[f64], lo: f64, len: f64, u: f64) -> StepDensity {
        let k = heights.len();
        let edges: Vec<f64> = (0..=k).map(|i| lo + len * i as f64 / k as f64).collect();
        let mass: f64 = heights.iter().sum::<f64>() * len / k as f64;
        let h: Vec<f64> = heights.iter().map(|x| x / mass).collect();
        let max = h.iter().copied().fold(0.0, f64::max);
        StepDensity::new(edges, h, (max * u).max(1.0 + 1e-3).max(max)).unwrap()
    }

    proptest! {
        #[test]
        fn log_bounds_hold_with_sharp_self_constant(
            ha in prop::collection::vec(0.5f64..1.0, 1..5),
            hb in prop::collection::vec(0.05f64..1.0, 1..5),
            la in 0.03f64..2.0,
            lb in 0.03f64..5.0,
            gap in prop_oneof![Just(0.0), 0.01f64..10.0],
            u in 1.0f64..2.0,
            ys in prop::collection::vec(0.0f64..1.0, 1..6),
        ) {
            let alpha = step_density(&ha, 0.0, la, u);
            let beta = step_density(&hb, la + gap, lb, u);
            let probes: Vec<f64> = ys.iter().flat_map(|y| [y * la, la + 20.0 * y]).collect();
            for c in log_bound_checks(&alpha, &beta, &probes) {
                if c.part == 1 {
                    prop_assert!(c.lower <= c.value + 1e-9 && c.value <= c.upper + 0.5 + 1e-9, "{c:?}");
                } else {
                    prop_assert!(c.holds, "{c:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn energy_translation_invariant(raw in prop::collection::vec(-100.0f64..100.0, 2..40), c in -1e3f64..1e3) {
            let mut p = raw.clone();
            p.sort_by(f64::total_cmp);
            p.dedup();
            prop_assume!(p.windows(2).all(|w| w[1] - w[0] > 1e-6));
            let s = seq(&p);
            let e0 = total_energy(&s).unwrap();
            let e1 = total_energy(&s.translated(c).unwrap()).unwrap();
            prop_assert!((e0 - e1).abs() <= 1e-6 * (1.0 + e0.abs()));
        }

        #[test]
        fn energy_scaling_law(raw in prop::collection::vec(-100.0f64..100.0, 2..40), t in 0.01f64..50.0) {
            let mut p = raw.clone();
            p.sort_by(f64::total_cmp);
            p.dedup();
            prop_assume!(p.windows(2).all(|w| w[1] - w[0] > 1e-6));
            let s = seq(&p);
            let n = p.len() as f64;
            let e0 = total_energy(&s).unwrap();
            let e1 = total_energy(&s.scaled(t).unwrap()).unwrap();
            prop_assert!((e1 - (e0 + n * (n - 1.0) * t.ln())).abs() <= 1e-9 * (1.0 + e1.abs()));
        }

        #[test]
        fn summands_positive_and_monotone_under_deletion(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..40);
            let len: f64 = rng.random_range(1.0..30.0);
            let off: f64 = rng.random_range(-50.0..50.0);
            let mut p: Vec<f64> = (0..n).map(|_| off + rng.random_range(0.0..len)).collect();
            p.sort_by(f64::total_cmp);
            p.dedup();
            let iv = Interval::new(off, off + len).unwrap();
            let s = PointSequence::new(p.clone(), Interval::window(off, off + len).unwrap(), "r").unwrap();
            let (c, e) = interval_energy(&s, &iv, false);
            let s0 = summand(c, e, &iv);
            prop_assert!(s0 >= -1e-9);
            let k = rng.random_range(0..p.len());
            p.remove(k);
            let s2 = PointSequence::new(p, s.window(), "r").unwrap();
            let (c2, e2) = interval_energy(&s2, &iv, false);
            prop_assert!(summand(c2, e2, &iv) <= s0 + 1e-9);
        }
    }
}
