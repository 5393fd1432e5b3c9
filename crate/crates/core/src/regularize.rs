//! Point spreading on an interval without a large loss of energy, and gap
//! filling that bounds the maximal gap of a sequence by `2C`.

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::energy_of;
use crate::error::{param, GapError, Result};
use crate::seqcore::{Interval, PointSequence};

/// How the points inside `J` were placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Unchanged,
    /// Equal spacing with points on both ends of `J`.
    Endpoints,
    /// Equal spacing at the midpoints of `m` equal cells of `J`.
    Cells,
    /// Closest configuration (least squares) with gaps `>= C` inside `J`.
    MinimalDisplacement,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpreadOutcome {
    pub gamma: PointSequence,
    pub placement: Placement,
    pub moved: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    /// `E(Λ) - (log C / C)|J| N`
    pub bound: f64,
    pub margin: f64,
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 1.0 && c.is_finite()) {
        return param(format!("spacing constant C must exceed 1, got {c}"));
    }
    Ok(())
}

/// Pool-adjacent-violators: non-decreasing least-squares fit of `y`.
fn isotonic(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * n1 as f64 + m2 * n2 as f64) / (n1 + n2) as f64, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)).collect()
}

fn placements(inside: &[f64], j: &Interval, c: f64) -> Vec<(Placement, Vec<f64>)> {
    let m = inside.len();
    let len = j.len();
    let endpoints = if m == 1 {
        vec![0.5 * (j.a + j.b)]
    } else {
        (0..m).map(|k| if k + 1 == m { j.b } else { j.a + len * k as f64 / (m - 1) as f64 }).collect()
    };
    let cells = (0..m).map(|k| j.a + len * (k as f64 + 0.5) / m as f64).collect();
    let shifted: Vec<f64> = inside.iter().enumerate().map(|(k, x)| x - k as f64 * c).collect();
    let hi = j.b - (m - 1) as f64 * c;
    let minimal = isotonic(&shifted)
        .iter()
        .enumerate()
        .map(|(k, w)| (w.clamp(j.a, hi) + k as f64 * c).min(j.b))
        .collect();
    vec![(Placement::Endpoints, endpoints), (Placement::Cells, cells), (Placement::MinimalDisplacement, minimal)]
}

/// Energy terms that depend on the inside configuration: its own energy plus
/// twice the interaction with the fixed outside points.
fn placement_score(cand: &[f64], outside: &[f64]) -> f64 {
    let own = energy_of(cand).unwrap_or(f64::NEG_INFINITY);
    let cross: f64 = cand.par_iter().map(|&x| outside.iter().map(|&y| (x - y).abs().ln()).sum::<f64>()).sum();
    own + 2.0 * cross
}

/// Moves the points of `Λ∩J` (closed `J`) to a configuration inside `J` with
/// pairwise gaps at least `C`, keeping every point outside `J`. Among three
/// admissible placements the one with the largest energy is kept, and the
/// bound `E(Γ) >= E(Λ) - (log C / C)|J|N` is checked on the result.
pub fn spread_points(seq: &PointSequence, j: &Interval, c: f64) -> Result<SpreadOutcome> {
    check_c(c)?;
    let (lo, hi) = seq.closed_range(j);
    let m = hi - lo;
    let pts = seq.points();
    let n = pts.len();
    let e0 = if n > 1 { energy_of(pts)? } else { 0.0 };
    let bound = e0 - (c.ln() / c) * j.len() * n as f64;
    if m == 0 {
        return Ok(SpreadOutcome {
            gamma: seq.clone(),
            placement: Placement::Unchanged,
            moved: 0,
            energy_before: e0,
            energy_after: e0,
            bound,
            margin: e0 - bound,
        });
    }
    if m as f64 > j.len() / c - 1.0 {
        return Err(GapError::Infeasible(format!(
            "{m} points do not fit in {j} with spacing {c} (at most |J|/C - 1 = {:.3})",
            j.len() / c - 1.0
        )));
    }
    let inside = &pts[lo..hi];
    let outside: Vec<f64> = pts[..lo].iter().chain(&pts[hi..]).copied().collect();
    let (placement, chosen) = placements(inside, j, c)
        .into_iter()
        .map(|(p, v)| {
            let s = placement_score(&v, &outside);
            (p, v, s)
        })
        .max_by(|x, y| x.2.total_cmp(&y.2))
        .map(|(p, v, _)| (p, v))
        .expect("three placements");

    let mut new_pts: Vec<f64> = pts[..lo].to_vec();
    new_pts.extend(&chosen);
    new_pts.extend(&pts[hi..]);
    let w = seq.window();
    let hull = Interval { a: w.a.min(j.a), b: w.b.max(j.b) };
    let gamma = PointSequence::new(new_pts, hull, format!("spread({})", seq.label()))?;
    if chosen.windows(2).any(|w| w[1] - w[0] < c * (1.0 - 1e-12)) {
        return Err(GapError::PostCondition("spread points closer than C".into()));
    }
    let e1 = if n > 1 { energy_of(gamma.points())? } else { 0.0 };
    let tol = 1e-9 * (1.0 + e0.abs());
    if e1 < bound - tol {
        return Err(GapError::PostCondition(format!("energy bound violated: E(Γ) = {e1} < {bound}")));
    }
    Ok(SpreadOutcome {
        gamma,
        placement,
        moved: m,
        energy_before: e0,
        energy_after: e1,
        bound,
        margin: e1 - bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverAudit {
    /// Closed cover interval `J_k` spanning a run of oversized gaps.
    pub interval: Interval,
    pub count: usize,
    /// `|J_k| / (2C)`
    pub lower: f64,
    /// `|J_k| / C - 1`
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularizeOutcome {
    pub gamma: PointSequence,
    pub added: PointSequence,
    pub c: f64,
    pub max_gap: f64,
    /// Smallest distance between an inserted point and any other point of Γ.
    pub min_inserted_spacing: f64,
    pub covers: Vec<CoverAudit>,
}

/// Fills every gap `g` longer than `C` with equally spaced points at spacing
/// `g / floor(g / C)`, which lies in `[C, 2C)`; gaps shorter than `2C` need no
/// new point. Runs of adjacent filled gaps form the cover intervals reported
/// in the audit.
pub fn regularize_gaps(seq: &PointSequence, c: f64) -> Result<RegularizeOutcome> {
    check_c(c)?;
    let pts = seq.points();
    let fills: Vec<Vec<f64>> = pts
        .par_windows(2)
        .map(|w| {
            let g = w[1] - w[0];
            let k = (g / c).floor() as usize;
            if k < 2 {
                return Vec::new();
            }
            let step = g / k as f64;
            (1..k).map(|i| w[0] + step * i as f64).collect()
        })
        .collect();

    let mut covers = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    let flush = |run: Option<(usize, usize)>, covers: &mut Vec<Interval>| {
        if let Some((s, e)) = run {
            covers.push(Interval { a: pts[s], b: pts[e] });
        }
    };
    let mut cover_ivs = Vec::new();
    for (i, f) in fills.iter().enumerate() {
        if f.is_empty() {
            flush(run.take(), &mut cover_ivs);
        } else {
            run = Some(match run {
                Some((s, _)) => (s, i + 1),
                None => (i, i + 1),
            });
        }
    }
    flush(run, &mut cover_ivs);

    let added_pts: Vec<f64> = fills.into_iter().flatten().collect();
    let mut all = pts.to_vec();
    all.extend(&added_pts);
    all.sort_by(f64::total_cmp);
    let gamma = PointSequence::new(all, seq.window(), format!("regularized({})", seq.label()))?;
    let added = PointSequence::new(added_pts, seq.window(), format!("added({})", seq.label()))?;

    let g = gamma.points();
    let max_gap = g.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let min_inserted_spacing = added
        .points()
        .iter()
        .map(|&x| {
            let i = g.partition_point(|&y| y < x);
            let left = if i > 0 { x - g[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < g.len() { g[i + 1] - x } else { f64::INFINITY };
            left.min(right)
        })
        .fold(f64::INFINITY, f64::min);

    for iv in cover_ivs {
        let count = gamma.closed_range(&iv).1 - gamma.closed_range(&iv).0;
        let lower = iv.len() / (2.0 * c);
        let upper = iv.len() / c - 1.0;
        covers.push(CoverAudit {
            interval: iv,
            count,
            lower,
            upper,
            lower_ok: count as f64 >= lower,
            upper_ok: count as f64 <= upper,
        });
    }

    let tol = 1e-9 * c;
    if max_gap > 2.0 * c + tol {
        return Err(GapError::PostCondition(format!("max gap {max_gap} exceeds 2C = {}", 2.0 * c)));
    }
    if !added.is_empty() && min_inserted_spacing < c - tol {
        return Err(GapError::PostCondition(format!("inserted spacing {min_inserted_spacing} below C = {c}")));
    }
    Ok(RegularizeOutcome { gamma, added, c, max_gap, min_inserted_spacing, covers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::bm_density;
    use crate::energy::{energy_condition_report, total_energy};
    use crate::partitions::greedy_density_partition;
    use crate::seqcore::{generate, SequenceLaw};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(p: &[f64], lo: f64, hi: f64) -> PointSequence {
        PointSequence::new(p.to_vec(), Interval::window(lo, hi).unwrap(), "t").unwrap()
    }

    #[test]
    fn spread_example() {
        let s = seq(&[0.0, 0.1, 10.0], 0.0, 10.0);
        let out = spread_points(&s, &Interval::window(0.0, 10.0).unwrap(), 2.0).unwrap();
        assert_eq!(out.gamma.points(), &[0.0, 5.0, 10.0]);
        let expected = 2.0 * (5f64.ln() + 10f64.ln() + 5f64.ln());
        assert_abs_diff_eq!(out.energy_after, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(out.bound, total_energy(&s).unwrap() - 2f64.ln() / 2.0 * 30.0, epsilon = 1e-12);
    }

    #[test]
    fn spread_nothing_inside() {
        let s = seq(&[-5.0, 12.0], -10.0, 20.0);
        let out = spread_points(&s, &Interval::window(0.0, 10.0).unwrap(), 2.0).unwrap();
        assert_eq!(out.gamma.points(), s.points());
        assert_eq!(out.placement, Placement::Unchanged);
    }

    #[test]
    fn spread_separates_close_pair() {
        let s = seq(&[1.0, 1.01], 0.0, 10.0);
        let out = spread_points(&s, &Interval::window(0.0, 10.0).unwrap(), 3.0).unwrap();
        let g = out.gamma.points();
        assert!(g[1] - g[0] >= 3.0);
        assert!(out.energy_after > out.energy_before);
    }

    #[test]
    fn spread_rejects_overfull_interval() {
        let s = seq(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.0, 10.0);
        let r = spread_points(&s, &Interval::window(0.0, 10.0).unwrap(), 2.0);
        assert!(matches!(r, Err(GapError::Infeasible(_))));
    }

    /// Endpoint placement alone loses too much energy when an outside point
    /// sits next to an end of `J`.
    #[test]
    fn outside_neighbour_defeats_endpoint_placement() {
        let s = seq(&[-0.001, 3.0, 7.0], -1.0, 10.0);
        let j = Interval::window(0.0, 10.0).unwrap();
        let out = spread_points(&s, &j, 2.0).unwrap();
        let endpoint = seq(&[-0.001, 0.0, 10.0], -1.0, 10.0);
        assert!(total_energy(&endpoint).unwrap() < out.bound);
        assert_ne!(out.placement, Placement::Endpoints);
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn regularize_lattice_is_noop() {
        let s = generate(&SequenceLaw::Lattice { h: 1.0 }, Interval::window(-50.0, 50.0).unwrap(), None).unwrap();
        let out = regularize_gaps(&s, 5.0).unwrap();
        assert_eq!(out.gamma.points(), s.points());
        assert!(out.added.is_empty());
    }

    #[test]
    fn regularize_lacunary() {
        let s = generate(&SequenceLaw::Lacunary { q: 2.0 }, Interval::window(1.0, 1024.0).unwrap(), None).unwrap();
        let out = regularize_gaps(&s, 4.0).unwrap();
        assert!(out.max_gap <= 8.0);
        assert!(out.min_inserted_spacing >= 4.0);
        // gaps (2^k, 2^{k+1}] with k >= 3 are filled
        for k in 3..10 {
            let iv = Interval { a: 2f64.powi(k), b: 2f64.powi(k + 1) };
            assert!(out.added.count_in(&iv) > 0, "gap at 2^{k}");
        }
        assert!(bm_density(&out.added).value <= 0.25 + 0.05);
        assert!(out.covers.iter().all(|c| c.lower_ok));
    }

    #[test]
    fn regularize_two_points() {
        let s = seq(&[0.0, 100.0], 0.0, 100.0);
        let out = regularize_gaps(&s, 10.0).unwrap();
        let expected: Vec<f64> = (1..10).map(|k| 10.0 * k as f64).collect();
        assert_eq!(out.added.points(), &expected[..]);
        assert_eq!(out.covers.len(), 1);
        assert_eq!(out.covers[0].count, 11);
    }

    #[test]
    fn regularize_is_idempotent() {
        let s = generate(&SequenceLaw::Poisson { rate: 0.2 }, Interval::window(-300.0, 300.0).unwrap(), Some(5)).unwrap();
        let once = regularize_gaps(&s, 2.0).unwrap();
        let twice = regularize_gaps(&once.gamma, 2.0).unwrap();
        assert!(twice.added.is_empty());
        assert_eq!(twice.gamma.points(), once.gamma.points());
    }

    #[test]
    fn regularizing_keeps_energy_verdict() {
        let base = generate(&SequenceLaw::Lattice { h: 1.0 }, Interval::window(-2000.0, 2000.0).unwrap(), None).unwrap();
        let pts: Vec<f64> = base.points().iter().copied().filter(|x| (x.abs() as i64) % 97 > 8).collect();
        let s = base.with_points(pts, "holes").unwrap();
        let part = greedy_density_partition(&s, 0.5).unwrap();
        let before = energy_condition_report(&s, &part).unwrap().verdict();
        let out = regularize_gaps(&s, 2.0).unwrap();
        assert!(!out.added.is_empty());
        let after = energy_condition_report(&out.gamma, &part).unwrap().verdict();
        assert!(after.rank() >= before.rank(), "{before:?} -> {after:?}");
    }

    #[test]
    fn bad_constant_rejected() {
        let s = seq(&[0.0, 1.0], 0.0, 1.0);
        assert!(matches!(regularize_gaps(&s, 1.0), Err(GapError::Parameter(_))));
        assert!(spread_points(&s, &Interval::window(0.0, 1.0).unwrap(), 0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn spread_energy_bound_holds(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c: f64 = rng.random_range(1.05..6.0);
            let len: f64 = rng.random_range(2.5 * c..40.0 * c);
            let ja: f64 = rng.random_range(-50.0..50.0);
            let j = Interval::window(ja, ja + len).unwrap();
            let cap = (len / c - 1.0).floor() as usize;
            let m = rng.random_range(0..=cap);
            let mut p: Vec<f64> = (0..m).map(|_| rng.random_range(ja..ja + len)).collect();
            let extra = rng.random_range(0..20);
            p.extend((0..extra).map(|_| {
                let d: f64 = rng.random_range(1e-3..30.0);
                if rng.random_bool(0.5) { ja - d } else { ja + len + d }
            }));
            p.sort_by(f64::total_cmp);
            p.dedup();
            let lo = p.first().copied().unwrap_or(ja).min(ja);
            let hi = p.last().copied().unwrap_or(ja + len).max(ja + len);
            let s = seq(&p, lo, hi);
            let out = spread_points(&s, &j, c).unwrap();
            prop_assert!(out.energy_after >= out.bound - 1e-9 * (1.0 + out.energy_before.abs()));
            prop_assert_eq!(out.gamma.len(), s.len());
        }
    }
}
