//! Shortness of interval families, validity of partitions, and the greedy
//! density partition that starts at `a_0 = 0` and grows outward.

use serde::Serialize;

use crate::error::{param, GapError, Result};
use crate::fit;
use crate::seqcore::{IndexedInterval, Interval, Partition, PointSequence};

/// Three-valued shortness verdict of a truncated interval family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shortness {
    Short,
    Long,
    Inconclusive,
}

/// Thresholds on the fitted decay exponent of `|I_n|²/(1+dist²)` against the
/// outward rank of the interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShortnessConfig {
    /// Short when the fitted exponent is below this value.
    pub short_exponent: f64,
    /// Long when the fitted exponent is above this value and the outer terms
    /// stay above `long_floor` times the median term.
    pub long_exponent: f64,
    pub long_floor: f64,
}

impl Default for ShortnessConfig {
    fn default() -> Self {
        Self { short_exponent: -1.2, long_exponent: -0.5, long_floor: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SideFit {
    pub right: bool,
    pub terms: usize,
    pub exponent: f64,
    pub verdict: Shortness,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShortnessReport {
    /// `|I_n|²/(1+dist²(0,I_n))` in breakpoint order.
    pub terms: Vec<f64>,
    /// Cumulative sums of the terms ordered by distance to the origin.
    pub partial_sums: Vec<f64>,
    pub sides: Vec<SideFit>,
    pub verdict: Shortness,
    pub window: Option<Interval>,
}

impl ShortnessReport {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

/// `|I|²/(1+dist²(0,I))`
pub fn shortness_term(iv: &Interval) -> f64 {
    iv.len() * iv.len() * iv.poisson_weight()
}

fn classify_side(terms: &[f64], cfg: &ShortnessConfig) -> (f64, Shortness) {
    let n = terms.len();
    let outer_start = n / 2;
    let range = if n - outer_start >= 3 { outer_start..n } else { 0..n };
    let (xs, ys): (Vec<f64>, Vec<f64>) = range
        .clone()
        .filter(|&i| terms[i] > 0.0)
        .map(|i| (((i + 1) as f64).ln(), terms[i].ln()))
        .unzip();
    let Some(exponent) = fit::lsq_slope(&xs, &ys) else {
        return (f64::NAN, Shortness::Inconclusive);
    };
    let med = fit::median(terms);
    let outer_min = terms[range].iter().copied().fold(f64::INFINITY, f64::min);
    let verdict = if exponent < cfg.short_exponent {
        Shortness::Short
    } else if exponent > cfg.long_exponent && outer_min >= cfg.long_floor * med && med > 0.0 {
        Shortness::Long
    } else {
        Shortness::Inconclusive
    };
    (exponent, verdict)
}

/// Verdict for an interval family given per side as terms in outward order.
/// Sides with fewer than three terms are not fitted; any long side makes the
/// family long.
pub fn classify_family(right: &[f64], left: &[f64], cfg: &ShortnessConfig) -> (Vec<SideFit>, Shortness) {
    let mut sides = Vec::new();
    for (is_right, terms) in [(true, right), (false, left)] {
        if terms.len() >= 3 {
            let (exponent, verdict) = classify_side(terms, cfg);
            sides.push(SideFit { right: is_right, terms: terms.len(), exponent, verdict });
        }
    }
    let verdict = if sides.is_empty() {
        Shortness::Inconclusive
    } else if sides.iter().any(|s| s.verdict == Shortness::Long) {
        Shortness::Long
    } else if sides.iter().all(|s| s.verdict == Shortness::Short) {
        Shortness::Short
    } else {
        Shortness::Inconclusive
    };
    (sides, verdict)
}

fn split_sides(intervals: &[IndexedInterval]) -> (Vec<&IndexedInterval>, Vec<&IndexedInterval>) {
    let mut right: Vec<_> = intervals.iter().filter(|i| i.is_right()).collect();
    let mut left: Vec<_> = intervals.iter().filter(|i| !i.is_right()).collect();
    right.sort_by_key(|i| i.side_rank());
    left.sort_by_key(|i| i.side_rank());
    (right, left)
}

pub fn shortness(part: &Partition) -> ShortnessReport {
    shortness_with(part, &ShortnessConfig::default())
}

pub fn shortness_with(part: &Partition, cfg: &ShortnessConfig) -> ShortnessReport {
    let intervals = part.intervals();
    let terms: Vec<f64> = intervals.iter().map(|i| shortness_term(&i.interval)).collect();
    let mut by_dist: Vec<(f64, f64)> = intervals
        .iter()
        .zip(&terms)
        .map(|(i, &t)| (i.interval.dist_to_origin(), t))
        .collect();
    by_dist.sort_by(|x, y| x.0.total_cmp(&y.0));
    let partial_sums = by_dist
        .iter()
        .scan(0.0, |acc, &(_, t)| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    let (right, left) = split_sides(&intervals);
    let r: Vec<f64> = right.iter().map(|i| shortness_term(&i.interval)).collect();
    let l: Vec<f64> = left.iter().map(|i| shortness_term(&i.interval)).collect();
    let (sides, verdict) = classify_family(&r, &l, cfg);
    ShortnessReport { terms, partial_sums, sides, verdict, window: part.span() }
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionValidity {
    pub valid: bool,
    pub reasons: Vec<String>,
    pub shortness: Shortness,
    /// Lengths never decrease away from the origin on either side.
    pub monotone: bool,
    /// Truncation proxy for `|I_n| -> ∞`: lengths non-decreasing over the
    /// outer half of each side and strictly larger at the end than at the
    /// start of that half.
    pub lengths_grow: bool,
}

fn grows(lengths: &[f64]) -> bool {
    if lengths.len() < 2 {
        return false;
    }
    let outer = &lengths[lengths.len() / 2..];
    let outer = if outer.len() < 2 { &lengths[lengths.len() - 2..] } else { outer };
    outer.windows(2).all(|w| w[1] >= w[0]) && outer[outer.len() - 1] > outer[0]
}

pub fn is_admissible_partition(part: &Partition) -> PartitionValidity {
    let report = shortness(part);
    let intervals = part.intervals();
    let (right, left) = split_sides(&intervals);
    let lens = |v: &[&IndexedInterval]| -> Vec<f64> { v.iter().map(|i| i.interval.len()).collect() };
    let (lr, ll) = (lens(&right), lens(&left));
    let monotone = [&lr, &ll].iter().all(|l| l.windows(2).all(|w| w[1] >= w[0]));
    let sides: Vec<&Vec<f64>> = [&lr, &ll].into_iter().filter(|l| !l.is_empty()).collect();
    let lengths_grow = !sides.is_empty() && sides.iter().all(|l| grows(l));

    let mut reasons = Vec::new();
    match report.verdict {
        Shortness::Short => {}
        Shortness::Long => reasons.push("long".to_string()),
        Shortness::Inconclusive => reasons.push("shortness inconclusive".to_string()),
    }
    if !lengths_grow {
        reasons.push("interval lengths do not grow".to_string());
    }
    PartitionValidity { valid: reasons.is_empty(), reasons, shortness: report.verdict, monotone, lengths_grow }
}

// ---------------------------------------------------------------------------
// Greedy construction

/// Where and why a greedy side construction stopped short of the window.
#[derive(Debug, Clone, Serialize)]
pub struct GreedyFailure {
    pub right: bool,
    /// Last breakpoint reached.
    pub at: f64,
    /// Uncovered distance to the window end.
    pub uncovered: f64,
}

impl std::fmt::Display for GreedyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let side = if self.right { "right" } else { "left" };
        write!(
            f,
            "{side} side exhausted at {}: no candidate meets the count condition ({} left uncovered)",
            self.at, self.uncovered
        )
    }
}

/// Breakpoints on one side, as distances from the origin in outward order.
fn greedy_side(seq: &PointSequence, d: f64, monotone: bool, right: bool) -> std::result::Result<Vec<f64>, GreedyFailure> {
    let w = seq.window();
    let extent = if right { w.b.max(0.0) } else { (-w.a).max(0.0) };
    // candidate positions as outward distances: side points and the window end
    let mut cands: Vec<f64> = if right {
        seq.points().iter().copied().filter(|&x| x > 0.0).collect()
    } else {
        seq.points().iter().rev().copied().filter(|&x| x < 0.0).map(|x| -x).collect()
    };
    if extent > 0.0 && cands.last().is_none_or(|&c| c < extent) {
        cands.push(extent);
    }
    let count = |from: f64, to: f64| -> usize {
        let iv = if right { Interval { a: from, b: to } } else { Interval { a: -to, b: -from } };
        seq.count_in(&iv)
    };

    let mut bps = Vec::new();
    let (mut cur, mut last_len) = (0.0_f64, 0.0_f64);
    let mut start = 0;
    loop {
        let found = (start..cands.len()).find(|&j| {
            let len = cands[j] - cur;
            (!monotone || len >= last_len) && count(cur, cands[j]) as f64 >= d * len
        });
        match found {
            Some(j) => {
                last_len = cands[j] - cur;
                cur = cands[j];
                bps.push(cur);
                start = j + 1;
            }
            None => {
                let uncovered = extent - cur;
                let slack = (2.0 * last_len).max(1.0 / d).max(0.05 * extent);
                if uncovered > slack {
                    return Err(GreedyFailure { right, at: if right { cur } else { -cur }, uncovered });
                }
                return Ok(bps);
            }
        }
    }
}

/// Greedy partition with target density `d`: from `a_0 = 0`, each next
/// breakpoint is the nearest candidate (sequence point or window end) such
/// that `#Λ∩(a_i, a_{i+1}] >= d·(a_{i+1} - a_i)` and, when `monotone`, the
/// new interval is at least as long as the previous one. Both sides are
/// built independently.
pub fn greedy_partition(seq: &PointSequence, d: f64, monotone: bool) -> Result<Partition> {
    if !(d > 0.0 && d.is_finite()) {
        return param(format!("target density must be positive, got {d}"));
    }
    let (r, l) = rayon::join(|| greedy_side(seq, d, monotone, true), || greedy_side(seq, d, monotone, false));
    let r = r.map_err(|e| GapError::Infeasible(e.to_string()))?;
    let l = l.map_err(|e| GapError::Infeasible(e.to_string()))?;
    let mut bp: Vec<f64> = l.iter().rev().map(|x| -x).collect();
    bp.push(0.0);
    bp.extend(r);
    Partition::new(bp)
}

/// The monotone greedy partition.
pub fn greedy_density_partition(seq: &PointSequence, d: f64) -> Result<Partition> {
    greedy_partition(seq, d, true)
}

/// Re-checks the count condition (and optionally monotone growth) on every
/// interval of `part`; returns the first offending interval.
pub fn verify_density_partition(seq: &PointSequence, part: &Partition, d: f64, monotone: bool) -> std::result::Result<(), IndexedInterval> {
    let intervals = part.intervals();
    let (right, left) = split_sides(&intervals);
    for side in [right, left] {
        let mut prev = 0.0;
        for ii in side {
            let len = ii.interval.len();
            if (seq.count_in(&ii.interval) as f64) < d * len || (monotone && len < prev) {
                return Err(*ii);
            }
            prev = len;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::{generate, SequenceLaw};
    use proptest::prelude::*;

    fn signed_breakpoints(f: impl Fn(i64) -> f64, n: i64) -> Partition {
        Partition::new((-n..=n).map(|k| if k == 0 { 0.0 } else { k.signum() as f64 * f(k.abs()) }).collect()).unwrap()
    }

    fn dyadic() -> Partition {
        signed_breakpoints(|k| 2f64.powi(k as i32 - 1), 20)
    }

    fn squares() -> Partition {
        signed_breakpoints(|k| (k * k) as f64, 60)
    }

    fn unit() -> Partition {
        signed_breakpoints(|k| k as f64, 60)
    }

    fn lattice(h: f64, lo: f64, hi: f64) -> PointSequence {
        generate(&SequenceLaw::Lattice { h }, Interval::window(lo, hi).unwrap(), None).unwrap()
    }

    #[test]
    fn shortness_examples() {
        let d = shortness(&dyadic());
        assert_eq!(d.verdict, Shortness::Long);
        let outer = d.terms[d.terms.len() - 1];
        assert!((outer - 1.0).abs() < 1e-3);
        assert_eq!(shortness(&squares()).verdict, Shortness::Short);
        assert_eq!(shortness(&unit()).verdict, Shortness::Short);
    }

    #[test]
    fn squares_terms_decay_like_inverse_square() {
        let r = shortness(&squares());
        for s in &r.sides {
            assert!((s.exponent + 2.0).abs() < 0.2, "exponent {}", s.exponent);
        }
    }

    #[test]
    fn too_few_intervals_is_inconclusive() {
        let p = Partition::new(vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(shortness(&p).verdict, Shortness::Inconclusive);
    }

    #[test]
    fn validity_examples() {
        let u = is_admissible_partition(&unit());
        assert!(!u.valid);
        assert!(u.reasons.iter().any(|r| r == "interval lengths do not grow"));

        let s = is_admissible_partition(&squares());
        assert!(s.valid, "{:?}", s.reasons);
        assert!(s.monotone);

        let d = is_admissible_partition(&dyadic());
        assert!(!d.valid);
        assert!(d.reasons.iter().any(|r| r == "long"));
    }

    #[test]
    fn greedy_on_unit_lattice_gives_unit_intervals() {
        let s = lattice(1.0, -100.0, 100.0);
        let p = greedy_density_partition(&s, 1.0).unwrap();
        let expected: Vec<f64> = (-100..=100).map(|k| k as f64).collect();
        assert_eq!(p.breakpoints(), &expected[..]);
        for ii in p.intervals() {
            assert_eq!(s.count_in(&ii.interval), 1);
        }
    }

    #[test]
    fn greedy_fails_below_density() {
        let s = lattice(2.0, -100.0, 100.0);
        assert!(matches!(greedy_density_partition(&s, 1.0), Err(GapError::Infeasible(_))));
    }

    #[test]
    fn greedy_fails_on_lacunary() {
        let s = generate(&SequenceLaw::Lacunary { q: 2.0 }, Interval::window(1.0, 2f64.powi(20)).unwrap(), None).unwrap();
        let err = greedy_density_partition(&s, 0.01).unwrap_err().to_string();
        assert!(err.contains("right side"), "{err}");
    }

    #[test]
    fn nonpositive_density_rejected() {
        let s = lattice(1.0, -5.0, 5.0);
        assert!(matches!(greedy_density_partition(&s, 0.0), Err(GapError::Parameter(_))));
        assert!(matches!(greedy_density_partition(&s, -1.0), Err(GapError::Parameter(_))));
    }

    fn assert_minimal(seq: &PointSequence, part: &Partition, d: f64, monotone: bool) {
        let pts = seq.points();
        let bp = part.breakpoints();
        let z = bp.iter().position(|&x| x == 0.0).unwrap();
        let ok = |iv: Interval, prev_len: f64| {
            seq.count_in(&iv) as f64 >= d * iv.len() && (!monotone || iv.len() >= prev_len)
        };
        // pulling the outer endpoint back to the previous candidate must break a condition
        let mut prev_len = 0.0;
        for i in z..bp.len() - 1 {
            let (a, b) = (bp[i], bp[i + 1]);
            if let Some(&c) = pts.iter().rev().find(|&&x| x > a && x < b) {
                assert!(!ok(Interval { a, b: c }, prev_len), "breakpoint {b} could shrink to {c}");
            }
            prev_len = b - a;
        }
        let mut prev_len = 0.0;
        for i in (1..=z).rev() {
            let (a, b) = (bp[i - 1], bp[i]);
            if let Some(&c) = pts.iter().find(|&&x| x > a && x < b) {
                assert!(!ok(Interval { a: c, b }, prev_len), "breakpoint {a} could shrink to {c}");
            }
            prev_len = b - a;
        }
    }

    #[test]
    fn greedy_is_minimal_on_perturbed_lattice() {
        let s = generate(
            &SequenceLaw::PerturbedLattice { h: 1.0, jitter: 0.3 },
            Interval::window(-500.0, 500.0).unwrap(),
            Some(3),
        )
        .unwrap();
        for (d, mono) in [(0.9, true), (0.97, true), (0.9, false)] {
            let p = greedy_partition(&s, d, mono).unwrap();
            verify_density_partition(&s, &p, d, mono).unwrap();
            assert_minimal(&s, &p, d, mono);
        }
    }

    proptest! {
        #[test]
        fn shortness_reflection_invariant(raw in prop::collection::vec(0.1f64..50.0, 3..30), left in prop::collection::vec(0.1f64..50.0, 0..30)) {
            let mut bp = vec![0.0];
            let mut x = 0.0;
            for g in &raw { x += g; bp.push(x); }
            let mut y = 0.0;
            for g in &left { y -= g; bp.insert(0, y); }
            let p = Partition::new(bp).unwrap();
            prop_assert_eq!(shortness(&p).verdict, shortness(&p.reflected()).verdict);
        }

        #[test]
        fn greedy_success_is_downward_closed(seed in 0u64..40, h in 0.5f64..2.0) {
            let s = generate(
                &SequenceLaw::PerturbedLattice { h, jitter: 0.2 * h },
                Interval::window(-300.0, 300.0).unwrap(),
                Some(seed),
            ).unwrap();
            let grid: Vec<f64> = (1..=30).map(|k| k as f64 * 0.05 / h).collect();
            let ok: Vec<bool> = grid.iter().map(|&d| greedy_density_partition(&s, d).is_ok()).collect();
            if let Some(last) = ok.iter().rposition(|&b| b) {
                prop_assert!(ok[..=last].iter().all(|&b| b), "{:?}", ok);
            }
        }
    }
}
