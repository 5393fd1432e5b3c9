//! Spectral-gap probes at truncation scale.
//!
//! For points `λ_1 < ... < λ_N` and a gap length `a`, the Gram matrix
//! `G_jk = ∫_0^a e^{it(λ_j - λ_k)} dt` satisfies
//! `w* G w = ∫_0^a |Σ w_n e^{-iλ_n t}|² dt`, so its smallest eigenvalue
//! measures how close the atomic measures on `λ` come to having the spectral
//! gap `[0, a]`. `G` is unitarily similar to the real kernel
//! `K_jk = 2 sin(aΔ/2)/Δ` through `diag(e^{iaλ_j/2})`, which is what gets
//! diagonalized.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::energy::{energy_condition_report, SeriesVerdict};
use crate::error::{param, GapError, Result};
use crate::partitions::{greedy_density_partition, shortness, verify_density_partition, Shortness};
use crate::seqcore::{AtomicMeasure, Interval, Partition, PointSequence};

pub const MAX_GRAM_SIZE: usize = 2048;

#[derive(Debug, Clone, Serialize)]
pub struct GramProbe {
    pub a: f64,
    pub lambda: Vec<f64>,
    /// Eigenvalues of the Gram matrix in increasing order.
    pub eigenvalues: Vec<f64>,
    pub sigma_min: f64,
    /// Unit-norm minimizer of `w* G w`.
    pub minimizing_weights: Vec<Complex64>,
}

impl GramProbe {
    /// The Hermitian Gram matrix itself.
    pub fn gram(&self) -> DMatrix<Complex64> {
        gram_entries(&self.lambda, self.a)
    }

    /// `w* G w`
    pub fn quadratic_form(&self, w: &[Complex64]) -> f64 {
        let g = self.gram();
        let mut s = Complex64::new(0.0, 0.0);
        for (j, wj) in w.iter().enumerate() {
            for (k, wk) in w.iter().enumerate() {
                s += wj.conj() * g[(j, k)] * wk;
            }
        }
        s.re
    }
}

fn check_lambda(lambda: &[f64], a: f64) -> Result<()> {
    if lambda.is_empty() {
        return param("Gram probe needs at least one point");
    }
    if lambda.len() > MAX_GRAM_SIZE {
        return Err(GapError::Size(format!("{} points exceed the Gram limit {MAX_GRAM_SIZE}", lambda.len())));
    }
    if !(a > 0.0 && a.is_finite()) {
        return param(format!("gap length must be positive, got {a}"));
    }
    if let Some(w) = lambda.windows(2).find(|w| w[1] <= w[0]) {
        return Err(GapError::Domain(format!("points must be distinct and increasing ({} then {})", w[0], w[1])));
    }
    Ok(())
}

fn sinc_kernel(lambda: &[f64], a: f64) -> DMatrix<f64> {
    let n = lambda.len();
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            a
        } else {
            let d = lambda[j] - lambda[k];
            2.0 * (0.5 * a * d).sin() / d
        }
    })
}

fn gram_entries(lambda: &[f64], a: f64) -> DMatrix<Complex64> {
    let n = lambda.len();
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            Complex64::new(a, 0.0)
        } else {
            // (e^{iaΔ} - 1)/(iΔ) = e^{iaΔ/2} · 2 sin(aΔ/2)/Δ
            let d = lambda[j] - lambda[k];
            Complex64::from_polar(2.0 * (0.5 * a * d).sin() / d, 0.5 * a * d)
        }
    })
}

/// Smallest eigenvalue and its eigenvector of the Gram matrix of `λ` on `[0, a]`.
pub fn gram_matrix(lambda: &[f64], a: f64) -> Result<GramProbe> {
    check_lambda(lambda, a)?;
    let n = lambda.len();
    let eig = SymmetricEigen::new(sinc_kernel(lambda, a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lmin = eigenvalues[0];
    let trace = a * n as f64;
    if lmin < -1e-10 * trace {
        return Err(GapError::PostCondition(format!("Gram matrix not positive semidefinite: {lmin}")));
    }
    let v = eig.eigenvectors.column(order[0]);
    let minimizing_weights =
        lambda.iter().zip(v.iter()).map(|(&l, &x)| Complex64::from_polar(x, 0.5 * a * l)).collect();
    Ok(GramProbe { a, lambda: lambda.to_vec(), eigenvalues, sigma_min: lmin.max(0.0), minimizing_weights })
}

/// Smallest Gram eigenvalue alone, without eigenvectors.
pub fn sigma_min(lambda: &[f64], a: f64) -> Result<f64> {
    check_lambda(lambda, a)?;
    let lmin = sinc_kernel(lambda, a).symmetric_eigenvalues().min();
    if lmin < -1e-10 * a * lambda.len() as f64 {
        return Err(GapError::PostCondition(format!("Gram matrix not positive semidefinite: {lmin}")));
    }
    Ok(lmin.max(0.0))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KneeConfig {
    /// `log σ` is floored at `floor_rel · a · N` before differencing.
    pub floor_rel: f64,
}

impl Default for KneeConfig {
    fn default() -> Self {
        Self { floor_rel: 1e-12 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Sweep {
    pub curve: Vec<(f64, f64)>,
    /// Number of steps with `σ(a_{i+1}) - σ(a_i) < -1e-10`.
    pub monotone_violations: usize,
    pub min_increment: f64,
    /// Grid point where `log σ` bends most sharply into its plateau
    /// (most negative second divided difference).
    pub knee: Option<f64>,
}

impl Sweep {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["a", "sigma_min"])?;
        for (a, s) in &self.curve {
            wtr.write_record(&[a.to_string(), s.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Knee of a curve sampled on an increasing grid, from the second divided
/// difference of `log max(σ, floor)`.
pub fn knee_location(curve: &[(f64, f64)], n: usize, cfg: &KneeConfig) -> Option<f64> {
    if curve.len() < 3 {
        return None;
    }
    let f: Vec<f64> = curve.iter().map(|&(a, s)| s.max(cfg.floor_rel * a * n as f64).ln()).collect();
    (1..curve.len() - 1)
        .map(|i| {
            let (a0, a1, a2) = (curve[i - 1].0, curve[i].0, curve[i + 1].0);
            let d = 2.0 * ((f[i + 1] - f[i]) / (a2 - a1) - (f[i] - f[i - 1]) / (a1 - a0)) / (a2 - a0);
            (i, d)
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(i, _)| curve[i].0)
}

pub fn sigma_min_sweep(lambda: &[f64], a_grid: &[f64]) -> Result<Sweep> {
    sigma_min_sweep_with(lambda, a_grid, &KneeConfig::default())
}

pub fn sigma_min_sweep_with(lambda: &[f64], a_grid: &[f64], cfg: &KneeConfig) -> Result<Sweep> {
    if a_grid.is_empty() {
        return param("sweep grid is empty");
    }
    if a_grid.windows(2).any(|w| w[1] <= w[0]) {
        return param("sweep grid must be increasing");
    }
    check_lambda(lambda, a_grid[0])?;
    let sig: Vec<f64> = a_grid.par_iter().map(|&a| sigma_min(lambda, a)).collect::<Result<_>>()?;
    let curve: Vec<(f64, f64)> = a_grid.iter().copied().zip(sig).collect();
    let incs: Vec<f64> = curve.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let monotone_violations = incs.iter().filter(|&&d| d < -1e-10).count();
    let min_increment = incs.iter().copied().fold(f64::INFINITY, f64::min);
    let knee = knee_location(&curve, lambda.len(), cfg);
    Ok(Sweep { curve, monotone_violations, min_increment, knee })
}

/// `a0:a1:steps` grid with `steps` equally spaced points.
pub fn linear_grid(a0: f64, a1: f64, steps: usize) -> Result<Vec<f64>> {
    if !(a0 > 0.0 && a1 > a0) || steps < 2 {
        return param("sweep grid needs 0 < a0 < a1 and at least 2 steps");
    }
    Ok((0..steps).map(|i| a0 + (a1 - a0) * i as f64 / (steps - 1) as f64).collect())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` from the Legendre Jacobi
/// matrix.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        t[(k, k - 1)] = b;
        t[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(t);
    let mut nw: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    nw.sort_by(|x, y| x.0.total_cmp(&y.0));
    nw.into_iter().unzip()
}

/// Composite Gauss–Legendre rule on `[0, a]`.
pub fn composite_nodes(a: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = a / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(c + 0.5 * h * xi);
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

pub const QUADRATURE_PANELS: usize = 256;
pub const QUADRATURE_ORDER: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct GapSynthesis {
    pub measure: AtomicMeasure,
    pub sigma_min: f64,
    pub l2_gap_norm: f64,
    pub sup_gap_norm: f64,
    /// `∫_0^a |μ̂|²` by 4096-node composite Gauss–Legendre quadrature.
    pub quadrature_l2_sq: f64,
}

/// The unit-weight measure on `λ` whose Fourier transform is smallest in
/// `L²[0, a]`, with the norms of `μ̂` on the gap.
pub fn synthesize_gap_measure(lambda: &[f64], a: f64) -> Result<GapSynthesis> {
    let probe = gram_matrix(lambda, a)?;
    let measure = AtomicMeasure::new(lambda.iter().copied().zip(probe.minimizing_weights.iter().copied()).collect())?;
    let (nodes, weights) = composite_nodes(a, QUADRATURE_PANELS, QUADRATURE_ORDER);
    let vals = crate::seqcore::fourier_eval(&measure, &nodes)?;
    let quad: f64 = vals.iter().zip(&weights).map(|(v, w)| v.norm_sqr() * w).sum();
    let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if (quad - probe.sigma_min).abs() > 1e-8 {
        return Err(GapError::PostCondition(format!(
            "quadrature of |μ̂|² ({quad}) disagrees with sigma_min ({})",
            probe.sigma_min
        )));
    }
    Ok(GapSynthesis {
        measure,
        sigma_min: probe.sigma_min,
        l2_gap_norm: probe.sigma_min.sqrt(),
        sup_gap_norm: sup,
        quadrature_l2_sq: quad,
    })
}

// ---------------------------------------------------------------------------
// End-to-end certificate

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapConfig {
    pub resolution: f64,
    pub max_value: f64,
    /// Points nearest the origin used for the Gram sweep.
    pub sweep_points: usize,
    pub sweep_steps: usize,
    /// Sweep range as multiples of `2π` times the sub-window density.
    pub sweep_lo: f64,
    pub sweep_hi: f64,
    /// Relative tolerance between the knee and `2π c`.
    pub knee_tolerance: f64,
    pub knee: KneeConfig,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            resolution: 1e-3,
            max_value: 1e6,
            sweep_points: 512,
            sweep_steps: 48,
            sweep_lo: 0.05,
            sweep_hi: 2.0,
            knee_tolerance: 0.15,
            knee: KneeConfig::default(),
        }
    }
}

/// Why a candidate `a` is not certified.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstruction {
    GreedyFailed { detail: String },
    NotShort { verdict: Shortness },
}

impl Obstruction {
    fn inconclusive(&self) -> bool {
        matches!(
            self,
            Obstruction::NotShort { verdict: Shortness::Inconclusive }
        )
    }
}

fn certify(seq: &PointSequence, a: f64) -> std::result::Result<Partition, Obstruction> {
    let part = greedy_density_partition(seq, a).map_err(|e| Obstruction::GreedyFailed { detail: e.to_string() })?;
    let s = shortness(&part).verdict;
    if s != Shortness::Short {
        return Err(Obstruction::NotShort { verdict: s });
    }
    Ok(part)
}

#[derive(Debug, Clone, Serialize)]
pub struct GapCertificate {
    /// Largest grid value with a monotone, short density partition.
    pub c_estimate: f64,
    /// `2π · c_estimate`
    pub g_estimate: f64,
    pub partition: Option<Partition>,
    /// `min_n (#Λ∩I_n - c|I_n|)` over the witness partition.
    pub density_margin: Option<f64>,
    /// Energy condition on the witness partition.
    pub energy_verdict: SeriesVerdict,
    /// What blocks the next grid value `c_estimate + resolution`.
    pub obstruction: Option<Obstruction>,
    pub sweep: Option<Sweep>,
    pub sweep_points: usize,
    pub gram_transition: Option<f64>,
    /// `|knee - 2πc| <= tolerance · 2πc`, when both are available.
    pub knee_agrees: Option<bool>,
    pub verdict: SeriesVerdict,
    pub window: Interval,
}

pub fn estimate_gap_characteristic(seq: &PointSequence, cfg: &GapConfig) -> Result<GapCertificate> {
    if seq.is_empty() {
        return param("gap estimate needs a nonempty sequence");
    }
    let res = cfg.resolution;
    let kmax = (cfg.max_value / res).floor() as u64;
    let feasible = |k: u64| certify(seq, k as f64 * res).is_ok();
    // exponential bracketing then bisection on the grid k·res
    let c_k = if !feasible(1) {
        0
    } else {
        let (mut lo, mut hi) = (1u64, ((1.0 / res).round() as u64).max(2));
        while hi <= kmax && feasible(hi) {
            lo = hi;
            hi *= 2;
        }
        let hi = hi.min(kmax + 1);
        let (mut lo, mut hi) = (lo, hi);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let c = c_k as f64 * res;
    let (partition, energy_verdict) = if c_k > 0 {
        let p = certify(seq, c).expect("bisection keeps a feasible lower end");
        verify_density_partition(seq, &p, c, true)
            .map_err(|iv| GapError::PostCondition(format!("witness interval {} fails the count", iv.interval)))?;
        let v = energy_condition_report(seq, &p)
            .map(|r| r.verdict())
            .unwrap_or(SeriesVerdict::Inconclusive);
        (Some(p), v)
    } else {
        (None, SeriesVerdict::Unsupported)
    };
    let density_margin = partition.as_ref().map(|p| {
        p.intervals()
            .iter()
            .map(|ii| seq.count_in(&ii.interval) as f64 - c * ii.interval.len())
            .fold(f64::INFINITY, f64::min)
    });
    let obstruction = certify(seq, (c_k + 1) as f64 * res).err();

    let sub = seq.nearest_to_origin(cfg.sweep_points.min(MAX_GRAM_SIZE));
    let sweep = if sub.len() >= 2 {
        let dens = (sub.len() - 1) as f64 / (sub[sub.len() - 1] - sub[0]);
        let grid = linear_grid(cfg.sweep_lo * 2.0 * PI * dens, cfg.sweep_hi * 2.0 * PI * dens, cfg.sweep_steps)?;
        Some(sigma_min_sweep_with(&sub, &grid, &cfg.knee)?)
    } else {
        None
    };
    let gram_transition = sweep.as_ref().and_then(|s| s.knee);
    let g = 2.0 * PI * c;
    let knee_agrees = match gram_transition {
        Some(k) if c > 0.0 => Some((k - g).abs() <= cfg.knee_tolerance * g),
        _ => None,
    };
    let verdict = if obstruction.as_ref().is_some_and(Obstruction::inconclusive)
        || knee_agrees == Some(false)
        || (c_k > 0 && energy_verdict == SeriesVerdict::Inconclusive)
    {
        SeriesVerdict::Inconclusive
    } else if c_k == 0 || energy_verdict == SeriesVerdict::Unsupported {
        SeriesVerdict::Unsupported
    } else {
        SeriesVerdict::Supported
    };
    Ok(GapCertificate {
        c_estimate: c,
        g_estimate: g,
        partition,
        density_margin,
        energy_verdict,
        obstruction,
        sweep,
        sweep_points: sub.len(),
        gram_transition,
        knee_agrees,
        verdict,
        window: seq.window(),
    })
}
