//! Core domain types shared by every estimator: point sequences, half-open
//! intervals, partitions anchored at the origin, atomic measures, and the
//! generators for the standard sequence families.
//!
//! Infinite sequences are always handled through a finite truncation plus the
//! window it was taken from; every estimator downstream reports that window.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{param, GapError, Result};

/// Interval with endpoints `a < b`.
///
/// The default membership convention is half-open, `(a, b]`, matching the
/// intervals of a partition. Windows and spreading intervals use the closed
/// convention through [`Interval::contains_closed`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return param(format!("interval endpoints must be finite, got ({a}, {b}]"));
        }
        if a >= b {
            return param(format!("interval needs a < b, got ({a}, {b}]"));
        }
        Ok(Self { a, b })
    }

    /// Closed window `[lo, hi]`; a degenerate window (`lo == hi`) is allowed.
    pub fn window(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return param(format!("window needs finite lo <= hi, got [{lo}, {hi}]"));
        }
        Ok(Self { a: lo, b: hi })
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a < x && x <= self.b
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }

    /// Distance from the origin to the interval (zero if it contains 0).
    pub fn dist_to_origin(&self) -> f64 {
        if self.a >= 0.0 {
            self.a
        } else if self.b <= 0.0 {
            -self.b
        } else {
            0.0
        }
    }

    /// Poisson weight `1 / (1 + dist^2(0, I))`.
    pub fn poisson_weight(&self) -> f64 {
        let d = self.dist_to_origin();
        1.0 / (1.0 + d * d)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}]", self.a, self.b)
    }
}

/// Sorted finite truncation of a discrete real sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSequence {
    points: Vec<f64>,
    window: Interval,
    label: String,
}

impl PointSequence {
    pub fn new(points: Vec<f64>, window: Interval, label: impl Into<String>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(GapError::Domain(format!("point {i} is not finite")));
            }
            if !window.contains_closed(*p) {
                return Err(GapError::Domain(format!(
                    "point {p} lies outside the window [{}, {}]",
                    window.a, window.b
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[0] >= w[1]) {
            return Err(GapError::Domain(format!(
                "points must be strictly increasing: {} then {}",
                points[i],
                points[i + 1]
            )));
        }
        Ok(Self { points, window, label: label.into() })
    }

    /// Builds a sequence whose window is the hull of the points.
    pub fn from_points(points: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let window = match (points.first(), points.last()) {
            (Some(&lo), Some(&hi)) => Interval::window(lo, hi)?,
            _ => Interval { a: 0.0, b: 0.0 },
        };
        Self::new(points, window, label)
    }

    pub fn empty(window: Interval) -> Self {
        Self { points: Vec::new(), window, label: "empty".into() }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn window(&self) -> Interval {
        self.window
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points in the half-open interval `(a, b]`.
    pub fn count_in(&self, iv: &Interval) -> usize {
        let (lo, hi) = self.half_open_range(iv);
        hi - lo
    }

    /// Index range of the points lying in `(a, b]`.
    pub fn half_open_range(&self, iv: &Interval) -> (usize, usize) {
        let lo = self.points.partition_point(|&x| x <= iv.a);
        let hi = self.points.partition_point(|&x| x <= iv.b);
        (lo, hi.max(lo))
    }

    /// Index range of the points lying in `[a, b]`.
    pub fn closed_range(&self, iv: &Interval) -> (usize, usize) {
        let lo = self.points.partition_point(|&x| x < iv.a);
        let hi = self.points.partition_point(|&x| x <= iv.b);
        (lo, hi.max(lo))
    }

    /// The sequence `t * Λ` (t > 0), window scaled accordingly.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return param(format!("scale factor must be positive, got {t}"));
        }
        let pts = self.points.iter().map(|x| x * t).collect();
        let w = Interval { a: self.window.a * t, b: self.window.b * t };
        Self::new(pts, w, format!("{}*{t}", self.label))
    }

    pub fn translated(&self, c: f64) -> Result<Self> {
        let pts = self.points.iter().map(|x| x + c).collect();
        let w = Interval { a: self.window.a + c, b: self.window.b + c };
        Self::new(pts, w, format!("{}+{c}", self.label))
    }

    /// Reflection `x -> -x`.
    pub fn reflected(&self) -> Self {
        let pts = self.points.iter().rev().map(|x| -x).collect();
        Self {
            points: pts,
            window: Interval { a: -self.window.b, b: -self.window.a },
            label: format!("-({})", self.label),
        }
    }

    /// Same window, different points; the points are sorted and deduplicated.
    pub fn with_points(&self, mut points: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        points.sort_by(f64::total_cmp);
        points.dedup();
        Self::new(points, self.window, label)
    }

    /// The `n` points nearest to the origin, returned in increasing order.
    pub fn nearest_to_origin(&self, n: usize) -> Vec<f64> {
        if n >= self.points.len() {
            return self.points.clone();
        }
        // two-pointer expansion around the insertion point of 0
        let mid = self.points.partition_point(|&x| x < 0.0);
        let (mut l, mut r) = (mid, mid);
        while r - l < n {
            let take_left = match (l > 0, r < self.points.len()) {
                (true, true) => -self.points[l - 1] <= self.points[r],
                (true, false) => true,
                _ => false,
            };
            if take_left {
                l -= 1;
            } else {
                r += 1;
            }
        }
        self.points[l..r].to_vec()
    }

    /// Reads the plain-text sequence format: one decimal real per line,
    /// strictly increasing, `#` comment lines and blank lines ignored.
    pub fn read_text<R: BufRead>(reader: R, window: Option<Interval>, label: &str) -> Result<Self> {
        let mut pts = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let x: f64 = t.parse().map_err(|_| GapError::Parse {
                line: i + 1,
                msg: format!("not a decimal real: {t:?}"),
            })?;
            if let Some(&prev) = pts.last() {
                if x <= prev {
                    return Err(GapError::Parse {
                        line: i + 1,
                        msg: format!("values must be strictly increasing ({prev} then {x})"),
                    });
                }
            }
            pts.push(x);
        }
        match window {
            Some(w) => {
                pts.retain(|&x| w.contains_closed(x));
                Self::new(pts, w, label)
            }
            None => Self::from_points(pts, label),
        }
    }

    pub fn read_file(path: &Path, window: Option<Interval>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(f), window, &path.display().to_string())
    }

    /// One point per line, nothing else.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.points {
            writeln!(w, "{p}")?;
        }
        Ok(())
    }
}

/// Ordered breakpoints `... < a_{-1} < a_0 = 0 < a_1 < ...`; the derived
/// intervals are `I_n = (a_n, a_{n+1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    breakpoints: Vec<f64>,
}

/// An interval of a partition together with its signed index `n`
/// (`I_n = (a_n, a_{n+1}]`, so `n >= 0` lies right of the origin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexedInterval {
    pub index: i64,
    pub interval: Interval,
}

impl IndexedInterval {
    /// Rank counted outward from the origin on the interval's own side (1, 2, ...).
    pub fn side_rank(&self) -> usize {
        if self.index >= 0 {
            self.index as usize + 1
        } else {
            (-self.index) as usize
        }
    }

    pub fn is_right(&self) -> bool {
        self.index >= 0
    }
}

impl Partition {
    pub fn new(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.iter().any(|x| !x.is_finite()) {
            return param("partition breakpoints must be finite");
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return param("partition breakpoints must be strictly increasing");
        }
        if !breakpoints.contains(&0.0) {
            return param("partition must contain 0 as a breakpoint");
        }
        Ok(Self { breakpoints })
    }

    /// Symmetric partition from the positive breakpoints `0 < p_1 < p_2 < ...`
    /// mirrored to the left.
    pub fn symmetric(positive: &[f64]) -> Result<Self> {
        let mut bp: Vec<f64> = positive.iter().rev().map(|x| -x).collect();
        bp.push(0.0);
        bp.extend_from_slice(positive);
        Self::new(bp)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn zero_index(&self) -> usize {
        self.breakpoints.iter().position(|&x| x == 0.0).expect("0 is a breakpoint")
    }

    pub fn num_intervals(&self) -> usize {
        self.breakpoints.len().saturating_sub(1)
    }

    pub fn intervals(&self) -> Vec<IndexedInterval> {
        let z = self.zero_index() as i64;
        self.breakpoints
            .windows(2)
            .enumerate()
            .map(|(k, w)| IndexedInterval {
                index: k as i64 - z,
                interval: Interval { a: w[0], b: w[1] },
            })
            .collect()
    }

    /// Covered range `(a_min, a_max]`.
    pub fn span(&self) -> Option<Interval> {
        match (self.breakpoints.first(), self.breakpoints.last()) {
            (Some(&a), Some(&b)) if a < b => Some(Interval { a, b }),
            _ => None,
        }
    }

    pub fn reflected(&self) -> Self {
        Self { breakpoints: self.breakpoints.iter().rev().map(|x| -x).collect() }
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { breakpoints: self.breakpoints.iter().map(|x| x * t).collect() }
    }
}

/// Finite atomic measure `Σ α_n δ_{x_n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, Complex64)>,
}

/// Largest admissible `|t·λ|` in Fourier evaluation.
pub const MAX_PHASE: f64 = 1e9;

impl AtomicMeasure {
    pub fn new(atoms: Vec<(f64, Complex64)>) -> Result<Self> {
        if atoms.windows(2).any(|w| w[0].0 >= w[1].0) {
            return param("atom positions must be strictly increasing");
        }
        if atoms.iter().any(|(x, w)| !x.is_finite() || !w.re.is_finite() || !w.im.is_finite()) {
            return param("atoms must be finite");
        }
        Ok(Self { atoms })
    }

    pub fn dirac(x: f64) -> Self {
        Self { atoms: vec![(x, Complex64::new(1.0, 0.0))] }
    }

    pub fn atoms(&self) -> &[(f64, Complex64)] {
        &self.atoms
    }

    pub fn is_trivial(&self) -> bool {
        self.atoms.iter().all(|(_, w)| w.norm() == 0.0)
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w.norm()).sum()
    }

    /// `μ̂(t) = Σ α_n exp(-i t λ_n)`.
    pub fn fourier_at(&self, t: f64) -> Complex64 {
        self.atoms
            .iter()
            .map(|&(x, w)| w * Complex64::from_polar(1.0, -t * x))
            .sum()
    }
}

/// Evaluates the Fourier transform of `mu` on every grid point.
pub fn fourier_eval(mu: &AtomicMeasure, t_grid: &[f64]) -> Result<Vec<Complex64>> {
    let max_x = mu.atoms.iter().map(|(x, _)| x.abs()).fold(0.0, f64::max);
    for &t in t_grid {
        if !t.is_finite() || (t.abs() * max_x) > MAX_PHASE {
            return Err(GapError::Domain(format!(
                "phase |t·λ| = {} exceeds {MAX_PHASE:e}",
                t.abs() * max_x
            )));
        }
    }
    Ok(t_grid.iter().map(|&t| mu.fourier_at(t)).collect())
}

/// Sequence-law descriptors for [`generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum SequenceLaw {
    /// `h·Z`.
    Lattice { h: f64 },
    /// `h·k + U(-jitter, jitter)`, `0 <= jitter < h/2`.
    PerturbedLattice { h: f64, jitter: f64 },
    /// `{±q^k : k >= 0}`.
    Lacunary { q: f64 },
    /// Homogeneous Poisson process of the given rate, started at the window's left end.
    Poisson { rate: f64 },
    /// Explicit point list.
    Explicit { points: Vec<f64> },
}

impl SequenceLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SequenceLaw::Lattice { h } if !(h > 0.0 && h.is_finite()) => {
                param(format!("lattice step must be positive, got {h}"))
            }
            SequenceLaw::PerturbedLattice { h, jitter } => {
                if !(h > 0.0 && h.is_finite()) {
                    param(format!("lattice step must be positive, got {h}"))
                } else if !(jitter >= 0.0 && jitter < h / 2.0) {
                    param(format!("jitter must lie in [0, h/2), got {jitter} for h = {h}"))
                } else {
                    Ok(())
                }
            }
            SequenceLaw::Lacunary { q } if !(q > 1.0 && q.is_finite()) => {
                param(format!("lacunary ratio must exceed 1, got {q}"))
            }
            SequenceLaw::Poisson { rate } if !(rate > 0.0 && rate.is_finite()) => {
                param(format!("poisson rate must be positive, got {rate}"))
            }
            _ => Ok(()),
        }
    }

    fn label(&self) -> String {
        match self {
            SequenceLaw::Lattice { h } => format!("lattice:{h}"),
            SequenceLaw::PerturbedLattice { h, jitter } => format!("perturbed:{h},{jitter}"),
            SequenceLaw::Lacunary { q } => format!("lacunary:{q}"),
            SequenceLaw::Poisson { rate } => format!("poisson:{rate}"),
            SequenceLaw::Explicit { points } => format!("explicit[{}]", points.len()),
        }
    }
}

impl FromStr for SequenceLaw {
    type Err = GapError;

    /// `lattice:<h>`, `perturbed:<h>,<jitter>`, `lacunary:<q>`, `poisson:<rate>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = args
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| GapError::Parameter(format!("bad numeric arguments in {s:?}")))?;
        let law = match (kind, nums.as_slice()) {
            ("lattice", [h]) => SequenceLaw::Lattice { h: *h },
            ("perturbed" | "perturbed-lattice", [h, j]) => {
                SequenceLaw::PerturbedLattice { h: *h, jitter: *j }
            }
            ("lacunary", [q]) => SequenceLaw::Lacunary { q: *q },
            ("poisson", [r]) => SequenceLaw::Poisson { rate: *r },
            _ => return param(format!("unrecognized sequence law {s:?}")),
        };
        law.validate()?;
        Ok(law)
    }
}

/// Materializes a sequence law inside `window`; deterministic for a given seed
/// (seed 0 when none is given).
pub fn generate(law: &SequenceLaw, window: Interval, seed: Option<u64>) -> Result<PointSequence> {
    law.validate()?;
    let (lo, hi) = (window.a, window.b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let points: Vec<f64> = match law {
        SequenceLaw::Lattice { h } => {
            let k0 = (lo / h).ceil() as i64;
            let k1 = (hi / h).floor() as i64;
            (k0..=k1).map(|k| k as f64 * h).filter(|x| window.contains_closed(*x)).collect()
        }
        SequenceLaw::PerturbedLattice { h, jitter } => {
            let k0 = (lo / h).floor() as i64 - 1;
            let k1 = (hi / h).ceil() as i64 + 1;
            let mut v = Vec::with_capacity((k1 - k0 + 1).max(0) as usize);
            for k in k0..=k1 {
                let u: f64 = if *jitter > 0.0 { rng.random_range(-jitter..*jitter) } else { 0.0 };
                let x = k as f64 * h + u;
                if window.contains_closed(x) {
                    v.push(x);
                }
            }
            v
        }
        SequenceLaw::Lacunary { q } => {
            let reach = lo.abs().max(hi.abs());
            let mut pos = Vec::new();
            let mut k = 0;
            loop {
                let x = q.powi(k);
                if x > reach || !x.is_finite() {
                    break;
                }
                pos.push(x);
                k += 1;
            }
            let mut v: Vec<f64> = pos.iter().rev().map(|x| -x).chain(pos.iter().copied()).collect();
            v.retain(|x| window.contains_closed(*x));
            v
        }
        SequenceLaw::Poisson { rate } => {
            let exp = Exp::new(*rate).map_err(|e| GapError::Parameter(e.to_string()))?;
            let mut v = Vec::new();
            let mut x = lo;
            loop {
                x += exp.sample(&mut rng);
                if x > hi {
                    break;
                }
                if v.last().is_none_or(|&p| x > p) {
                    v.push(x);
                }
            }
            v
        }
        SequenceLaw::Explicit { points } => {
            let mut v: Vec<f64> = points.iter().copied().filter(|x| window.contains_closed(*x)).collect();
            v.sort_by(f64::total_cmp);
            v
        }
    };
    PointSequence::new(points, window, law.label())
}
