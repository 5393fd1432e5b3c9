//! Truncation-scale estimators for the interior densities `d1`..`d4` and the
//! Beurling–Malliavin density, each returned with a re-checked witness.
//!
//! * `d1`, `d2`: largest `a` admitting a short greedy partition with
//!   `#Λ∩I_n >= a|I_n|` (monotone / not necessarily monotone).
//! * `d3`: largest `a` for which a greedily matched subsequence has a
//!   counting function with a flattening residual `∫|n - ax|/(1+x²)`.
//! * `d4`: infimum of the `a` refuted by a long family of disjoint open
//!   intervals with `#Λ∩I < a|I|`.
//! * `bm`: largest `d` admitting a long family of half-open intervals with
//!   `#Λ∩I >= d|I|`.

use serde::Serialize;

use crate::partitions::{classify_family, greedy_partition, shortness, verify_density_partition, Shortness, ShortnessConfig};
use crate::seqcore::{Interval, Partition, PointSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    D1,
    D2,
    D3,
    D4,
    Bm,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(Method::D1),
            "d2" => Ok(Method::D2),
            "d3" => Ok(Method::D3),
            "d4" => Ok(Method::D4),
            "bm" | "dbm" => Ok(Method::Bm),
            other => Err(format!("unknown density method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensityConfig {
    /// Grid step of the bisection.
    pub resolution: f64,
    /// Largest value probed by the exponential bracketing.
    pub max_value: f64,
    /// The `d3` residual is flat when
    /// `R(W) - R(W/2) <= flat_tolerance * a + fluctuation * Σ 1/W_side`,
    /// the second term absorbing a bounded `|n(x) - ax| <= fluctuation`.
    pub flat_tolerance: f64,
    pub fluctuation: f64,
    /// A family is long only if its shortness sum reaches this value.
    pub divergence_threshold: f64,
    /// Fraction of the side extent the family must reach.
    pub reach_fraction: f64,
    pub shortness: ShortnessConfig,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            resolution: 1e-3,
            max_value: 1e6,
            flat_tolerance: 5e-3,
            fluctuation: 2.0,
            divergence_threshold: 10.0,
            reach_fraction: 0.5,
            shortness: ShortnessConfig::default(),
        }
    }
}

/// Disjoint intervals found on the two sides of the origin.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalFamily {
    pub members: Vec<Interval>,
    /// Endpoints excluded from the counts (`d4`) or the usual `(a, b]`.
    pub open: bool,
    pub terms: Vec<f64>,
    pub sum: f64,
    pub verdict: Shortness,
    pub reaches_outer: bool,
}

impl IntervalFamily {
    pub fn is_long(&self, cfg: &DensityConfig) -> bool {
        self.sum >= cfg.divergence_threshold && self.verdict == Shortness::Long && self.reaches_outer
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualCurve {
    pub a: f64,
    pub residual: f64,
    pub residual_half: f64,
    pub subsequence_len: usize,
}

impl ResidualCurve {
    pub fn growth(&self) -> f64 {
        self.residual - self.residual_half
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    None,
    Partition { d: f64, partition: Partition },
    Family { d: f64, family: IntervalFamily },
    Residual { curve: ResidualCurve },
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub method: Method,
    pub witness: Witness,
    pub window: Interval,
    /// The witness passed its independent re-check.
    pub verified: bool,
}

/// Largest `k·res` (k >= 1) with `feasible`, assuming feasibility is
/// downward closed; 0 when even `res` fails.
fn sup_on_grid(res: f64, max: f64, mut feasible: impl FnMut(f64) -> bool) -> f64 {
    let kmax = (max / res).floor() as u64;
    if !feasible(res) {
        return 0.0;
    }
    let (mut lo, mut hi) = (1u64, ((1.0 / res).round() as u64).max(2));
    while hi <= kmax && feasible(hi as f64 * res) {
        lo = hi;
        hi *= 2;
    }
    if hi > kmax {
        if feasible(kmax as f64 * res) {
            return kmax as f64 * res;
        }
        hi = kmax;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid as f64 * res) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo as f64 * res
}

// ---------------------------------------------------------------------------
// d1 / d2

fn lower_feasible(seq: &PointSequence, a: f64, monotone: bool) -> Option<Partition> {
    let part = greedy_partition(seq, a, monotone).ok()?;
    (shortness(&part).verdict == Shortness::Short).then_some(part)
}

pub fn density_lower(seq: &PointSequence, method: Method) -> DensityEstimate {
    density_lower_with(seq, method, &DensityConfig::default())
}

/// `d1` (monotone) or `d2` (not necessarily monotone) by bisection over the
/// greedy partition.
pub fn density_lower_with(seq: &PointSequence, method: Method, cfg: &DensityConfig) -> DensityEstimate {
    let monotone = match method {
        Method::D1 => true,
        Method::D2 => false,
        _ => panic!("density_lower handles d1 and d2 only"),
    };
    let value = if seq.is_empty() {
        0.0
    } else {
        sup_on_grid(cfg.resolution, cfg.max_value, |a| lower_feasible(seq, a, monotone).is_some())
    };
    let (witness, verified) = match (value > 0.0).then(|| lower_feasible(seq, value, monotone)).flatten() {
        Some(partition) => {
            let ok = verify_density_partition(seq, &partition, value, monotone).is_ok();
            (Witness::Partition { d: value, partition }, ok)
        }
        None => (Witness::None, value == 0.0),
    };
    DensityEstimate { value, method, witness, window: seq.window(), verified }
}

// ---------------------------------------------------------------------------
// d3

/// Greedy matching of sequence points to the ideal progression `k/a` on each
/// side: the k-th ideal point takes the nearest unused point at or beyond
/// `k/a - 1/(2a)` (measured outward).
pub fn matched_subsequence(seq: &PointSequence, a: f64) -> Vec<f64> {
    let w = seq.window();
    let half = 0.5 / a;
    let side = |pts: Vec<f64>, extent: f64| -> Vec<f64> {
        let mut out = Vec::new();
        let mut next = 0;
        for k in 1.. {
            let ideal = k as f64 / a;
            if ideal > extent {
                break;
            }
            let thr = ideal - half;
            while next < pts.len() && pts[next] < thr {
                next += 1;
            }
            if next == pts.len() {
                break;
            }
            out.push(pts[next]);
            next += 1;
        }
        out
    };
    let right: Vec<f64> = seq.points().iter().copied().filter(|&x| x > 0.0).collect();
    let left: Vec<f64> = seq.points().iter().rev().copied().filter(|&x| x < 0.0).map(|x| -x).collect();
    let r = side(right, w.b.max(0.0));
    let l = side(left, (-w.a).max(0.0));
    l.iter().rev().map(|x| -x).chain(r).collect()
}

/// `∫_u^v |c - a x| / (1 + x²) dx` in closed form.
fn abs_linear_poisson(c: f64, a: f64, u: f64, v: f64) -> f64 {
    if v <= u {
        return 0.0;
    }
    let f = |x: f64| c * x.atan() - 0.5 * a * x.mul_add(x, 1.0).ln();
    let x0 = c / a;
    if x0 > u && x0 < v {
        (f(x0) - f(u)).abs() + (f(v) - f(x0)).abs()
    } else {
        (f(v) - f(u)).abs()
    }
}

/// `∫_lo^hi |n(x) - a x| / (1 + x²) dx` for the counting function of the
/// increasing points `sub` anchored by `n(0) = 0`.
pub fn counting_residual(sub: &[f64], a: f64, lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    // right of the origin: n = k on [s_k, s_{k+1})
    if hi > 0.0 {
        let pos: Vec<f64> = sub.iter().copied().filter(|&x| x > 0.0 && x < hi).collect();
        let mut u = lo.max(0.0);
        for (k, &s) in pos.iter().enumerate() {
            if s > u {
                total += abs_linear_poisson(k as f64, a, u, s);
                u = s;
            }
        }
        total += abs_linear_poisson(pos.len() as f64, a, u, hi);
    }
    // left of the origin: n = -k on [t_{k+1}, t_k)
    if lo < 0.0 {
        let neg: Vec<f64> = sub.iter().rev().copied().filter(|&x| x <= 0.0 && x > lo).collect();
        let mut v = hi.min(0.0);
        let mut k = 0.0;
        for &t in &neg {
            if t < v {
                total += abs_linear_poisson(-k, a, t, v);
                v = t;
            }
            k += 1.0;
        }
        total += abs_linear_poisson(-k, a, lo, v);
    }
    total
}

/// Residual `∫_window |n(x) - a x|/(1+x²) dx` of the greedily matched
/// subsequence, together with the same integral over the half window.
pub fn density_d3(seq: &PointSequence, a: f64) -> ResidualCurve {
    let w = seq.window();
    let sub = matched_subsequence(seq, a);
    ResidualCurve {
        a,
        residual: counting_residual(&sub, a, w.a, w.b),
        residual_half: counting_residual(&sub, a, 0.5 * w.a, 0.5 * w.b),
        subsequence_len: sub.len(),
    }
}

pub fn d3_estimate(seq: &PointSequence, cfg: &DensityConfig) -> DensityEstimate {
    let w = seq.window();
    let inv = |e: f64| if e > 0.0 { 1.0 / e } else { 0.0 };
    let allowance = cfg.fluctuation * (inv(w.b.max(0.0)) + inv((-w.a).max(0.0)));
    let flat = |a: f64| density_d3(seq, a).growth() <= cfg.flat_tolerance * a + allowance;
    let value = if seq.is_empty() { 0.0 } else { sup_on_grid(cfg.resolution, cfg.max_value, flat) };
    let (witness, verified) = if value > 0.0 {
        let curve = density_d3(seq, value);
        // independent re-check by midpoint quadrature of the same counting function
        let sub = matched_subsequence(seq, value);
        let q = residual_quadrature(&sub, value, w.a, w.b, 400_000);
        let ok = (q - curve.residual).abs() <= 1e-3 * (1.0 + curve.residual);
        (Witness::Residual { curve }, ok)
    } else {
        (Witness::None, true)
    };
    DensityEstimate { value, method: Method::D3, witness, window: seq.window(), verified }
}

fn residual_quadrature(sub: &[f64], a: f64, lo: f64, hi: f64, n: usize) -> f64 {
    let z = sub.partition_point(|&x| x <= 0.0);
    let h = (hi - lo) / n as f64;
    (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            let nx = if x >= 0.0 {
                (sub.partition_point(|&s| s <= x) - z) as f64
            } else {
                -((z - sub.partition_point(|&s| s <= x)) as f64)
            };
            (nx - a * x).abs() / (1.0 + x * x)
        })
        .sum::<f64>()
        * h
}

// ---------------------------------------------------------------------------
// Interval families (d4 and d_BM)

/// Min/max segment tree answering "first index in a range with value below /
/// at least a threshold".
struct SegTree {
    size: usize,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl SegTree {
    fn new(values: &[f64]) -> Self {
        let size = values.len().next_power_of_two().max(1);
        let mut min = vec![f64::INFINITY; 2 * size];
        let mut max = vec![f64::NEG_INFINITY; 2 * size];
        for (i, &v) in values.iter().enumerate() {
            min[size + i] = v;
            max[size + i] = v;
        }
        for i in (1..size).rev() {
            min[i] = min[2 * i].min(min[2 * i + 1]);
            max[i] = max[2 * i].max(max[2 * i + 1]);
        }
        Self { size, min, max }
    }

    fn first_where(&self, l: usize, r: usize, pred: &dyn Fn(f64, f64) -> bool, node: usize, nl: usize, nr: usize) -> Option<usize> {
        if nr < l || r < nl || !pred(self.min[node], self.max[node]) {
            return None;
        }
        if nl == nr {
            return Some(nl);
        }
        let mid = (nl + nr) / 2;
        self.first_where(l, r, pred, 2 * node, nl, mid)
            .or_else(|| self.first_where(l, r, pred, 2 * node + 1, mid + 1, nr))
    }

    fn first_below(&self, l: usize, r: usize, thr: f64) -> Option<usize> {
        self.first_where(l, r, &|mn, _| mn < thr, 1, 0, self.size - 1)
    }

    fn first_at_least(&self, l: usize, r: usize, thr: f64) -> Option<usize> {
        self.first_where(l, r, &|_, mx| mx >= thr, 1, 0, self.size - 1)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum FamilyKind {
    /// `#Λ∩(u, v) < a (v - u)`
    Sparse,
    /// `#Λ∩I >= d |I|` with the partition convention `(u, v]`
    Dense,
}

/// One side of the origin as outward distances `s_0 = 0 < s_1 < ...`, the
/// anchor `s_0` followed by the side's points.
struct Side {
    right: bool,
    s: Vec<f64>,
    extent: f64,
    zero_in_seq: bool,
}

impl Side {
    fn of(seq: &PointSequence, right: bool) -> Self {
        let w = seq.window();
        let mut s = vec![0.0];
        if right {
            s.extend(seq.points().iter().copied().filter(|&x| x > 0.0));
        } else {
            s.extend(seq.points().iter().rev().copied().filter(|&x| x < 0.0).map(|x| -x));
        }
        let extent = if right { w.b.max(0.0) } else { (-w.a).max(0.0) };
        Self { right, s, extent, zero_in_seq: seq.points().contains(&0.0) }
    }

    fn to_interval(&self, i: usize, j: usize) -> Interval {
        if self.right {
            Interval { a: self.s[i], b: self.s[j] }
        } else {
            Interval { a: -self.s[j], b: -self.s[i] }
        }
    }

    /// Doubling family: from `s_i`, the first `s_j` with
    /// `max(s_i, 1) <= s_j - s_i <= 4 max(s_i, 1)` meeting the count
    /// condition; the next member starts at `s_j`, otherwise at `s_{i+1}`.
    fn family(&self, kind: FamilyKind, a: f64) -> Vec<(usize, usize)> {
        let g: Vec<f64> = self.s.iter().enumerate().map(|(j, &x)| j as f64 - a * x).collect();
        let tree = SegTree::new(&g);
        let m = self.s.len();
        let mut out = Vec::new();
        let mut i = 0;
        while i + 1 < m {
            let c = self.s[i];
            let l0 = c.max(1.0);
            let jmin = self.s.partition_point(|&x| x - c < l0);
            let jmax = self.s.partition_point(|&x| x - c <= 4.0 * l0);
            let hit = if jmin < jmax {
                match kind {
                    // j - i - 1 < a (s_j - s_i)
                    FamilyKind::Sparse => tree.first_below(jmin, jmax - 1, g[i] + 1.0),
                    // j - i + corr >= d (s_j - s_i); on the left the anchor
                    // interval [0, s_j) also holds the point 0 when present
                    FamilyKind::Dense => {
                        let corr = if !self.right && i == 0 { self.zero_in_seq as i32 as f64 - 1.0 } else { 0.0 };
                        tree.first_at_least(jmin, jmax - 1, g[i] - corr)
                    }
                }
            } else {
                None
            };
            match hit {
                Some(j) => {
                    out.push((i, j));
                    i = j;
                }
                None => i += 1,
            }
        }
        out
    }
}

fn count_open(seq: &PointSequence, iv: &Interval) -> usize {
    let p = seq.points();
    let lo = p.partition_point(|&x| x <= iv.a);
    let hi = p.partition_point(|&x| x < iv.b);
    hi.saturating_sub(lo)
}

fn build_family(seq: &PointSequence, kind: FamilyKind, a: f64, cfg: &DensityConfig) -> IntervalFamily {
    let sides = [Side::of(seq, true), Side::of(seq, false)];
    let mut members = Vec::new();
    let mut side_terms: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut reaches_outer = false;
    for (k, side) in sides.iter().enumerate() {
        let fam = side.family(kind, a);
        for &(i, j) in &fam {
            let iv = side.to_interval(i, j);
            side_terms[k].push(crate::partitions::shortness_term(&iv));
            members.push(iv);
        }
        if let Some(&(_, j)) = fam.last() {
            if side.extent > 0.0 && side.s[j] >= cfg.reach_fraction * side.extent {
                reaches_outer = true;
            }
        }
    }
    members.sort_by(|x, y| x.a.total_cmp(&y.a));
    let (_, verdict) = classify_family(&side_terms[0], &side_terms[1], &cfg.shortness);
    let terms: Vec<f64> = members.iter().map(crate::partitions::shortness_term).collect();
    let sum = terms.iter().sum();
    IntervalFamily { members, open: kind == FamilyKind::Sparse, terms, sum, verdict, reaches_outer }
}

/// Re-checks disjointness and the count condition of every member.
pub fn verify_family(seq: &PointSequence, family: &IntervalFamily, a: f64) -> bool {
    let disjoint = family.members.windows(2).all(|w| w[0].b <= w[1].a);
    let counts = family.members.iter().all(|iv| {
        if family.open {
            (count_open(seq, iv) as f64) < a * iv.len()
        } else {
            seq.count_in(iv) as f64 >= a * iv.len()
        }
    });
    disjoint && counts
}

#[derive(Debug, Clone, Serialize)]
pub struct D4Result {
    pub a: f64,
    pub refuted: bool,
    pub witness: IntervalFamily,
}

pub fn density_upper_d4(seq: &PointSequence, a: f64) -> D4Result {
    density_upper_d4_with(seq, a, &DensityConfig::default())
}

/// Searches a long family of disjoint open intervals with endpoints on the
/// sequence (or the origin) and `#Λ∩I < a|I|`.
pub fn density_upper_d4_with(seq: &PointSequence, a: f64, cfg: &DensityConfig) -> D4Result {
    let witness = build_family(seq, FamilyKind::Sparse, a, cfg);
    D4Result { a, refuted: witness.is_long(cfg), witness }
}

/// `d4` estimate: the infimum of the refuted grid values minus one grid step.
pub fn d4_estimate(seq: &PointSequence, cfg: &DensityConfig) -> DensityEstimate {
    let not_refuted = |a: f64| !density_upper_d4_with(seq, a, cfg).refuted;
    let last_ok = sup_on_grid(cfg.resolution, cfg.max_value, not_refuted);
    let first_refuted = last_ok + cfg.resolution;
    let value = (first_refuted - cfg.resolution).max(0.0);
    let r = density_upper_d4_with(seq, first_refuted, cfg);
    let verified = r.refuted && verify_family(seq, &r.witness, first_refuted);
    DensityEstimate {
        value,
        method: Method::D4,
        witness: Witness::Family { d: first_refuted, family: r.witness },
        window: seq.window(),
        verified,
    }
}

/// Long family of half-open intervals with `#Λ∩I >= d|I|`, if one is found.
pub fn bm_family(seq: &PointSequence, d: f64, cfg: &DensityConfig) -> IntervalFamily {
    build_family(seq, FamilyKind::Dense, d, cfg)
}

pub fn bm_density(seq: &PointSequence) -> DensityEstimate {
    bm_density_with(seq, &DensityConfig::default())
}

pub fn bm_density_with(seq: &PointSequence, cfg: &DensityConfig) -> DensityEstimate {
    let value = if seq.is_empty() {
        0.0
    } else {
        sup_on_grid(cfg.resolution, cfg.max_value, |d| bm_family(seq, d, cfg).is_long(cfg))
    };
    let (witness, verified) = if value > 0.0 {
        let family = bm_family(seq, value, cfg);
        let ok = family.is_long(cfg) && verify_family(seq, &family, value);
        (Witness::Family { d: value, family }, ok)
    } else {
        (Witness::None, true)
    };
    DensityEstimate { value, method: Method::Bm, witness, window: seq.window(), verified }
}

/// Dispatches to the estimator for `method`.
pub fn estimate(seq: &PointSequence, method: Method, cfg: &DensityConfig) -> DensityEstimate {
    match method {
        Method::D1 | Method::D2 => density_lower_with(seq, method, cfg),
        Method::D3 => d3_estimate(seq, cfg),
        Method::D4 => d4_estimate(seq, cfg),
        Method::Bm => bm_density_with(seq, cfg),
    }
}
