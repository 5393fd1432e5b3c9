//! Maximal-energy (Fekete) configurations of `k` points on an interval and
//! the zeros of Jacobi polynomials that describe their interior points.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::energy_of;
use crate::error::{param, Result};
use crate::seqcore::Interval;

/// Zeros of `P_n^{(α,β)}` as eigenvalues of the symmetric Jacobi matrix of
/// the three-term recurrence (Golub–Welsch), in increasing order.
pub fn jacobi_zeros(n: usize, alpha: f64, beta: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return param("Jacobi degree must be at least 1");
    }
    if !(alpha > -1.0 && beta > -1.0) {
        return param(format!("Jacobi parameters must exceed -1, got ({alpha}, {beta})"));
    }
    let ab = alpha + beta;
    let mut t = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        t[(k, k)] = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
    }
    for k in 1..n {
        let kf = k as f64;
        let sq = if k == 1 {
            4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            let s = 2.0 * kf + ab;
            4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab) / (s * s * (s + 1.0) * (s - 1.0))
        };
        let off = sq.sqrt();
        t[(k, k - 1)] = off;
        t[(k - 1, k)] = off;
    }
    let mut z: Vec<f64> = SymmetricEigen::new(t).eigenvalues.iter().copied().collect();
    z.sort_by(f64::total_cmp);
    Ok(z)
}

/// `∂E/∂x_i = 2 Σ_{j≠i} 1/(x_i - x_j)`
pub fn energy_gradient(x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &xi)| 2.0 * x.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &xj)| 1.0 / (xi - xj)).sum::<f64>())
        .collect()
}

/// Largest interior gradient component; the endpoint coordinates are exempt.
pub fn stationarity_residual(x: &[f64]) -> f64 {
    let g = energy_gradient(x);
    if g.len() <= 2 {
        return 0.0;
    }
    g[1..g.len() - 1].iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FeketeConfig {
    pub starts: usize,
    pub ascent_iterations: usize,
    pub newton_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for FeketeConfig {
    fn default() -> Self {
        Self { starts: 20, ascent_iterations: 400, newton_iterations: 100, tolerance: 1e-8, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeketeResult {
    pub points: Vec<f64>,
    pub energy: f64,
    pub residual: f64,
    pub converged: bool,
    /// Endpoints of `I` together with the affine image of the zeros of
    /// `P_{k-2}^{(1,1)}`.
    pub jacobi_prediction: Vec<f64>,
    pub max_deviation: f64,
}

fn is_ordered(x: &[f64], lo: f64, hi: f64) -> bool {
    x.windows(2).all(|w| w[1] > w[0]) && x[0] >= lo && x[x.len() - 1] <= hi
}

/// Projected gradient ascent on `[-1, 1]^k`; each step is damped so that no
/// point moves more than a quarter of its smallest neighbouring gap.
fn ascend(mut x: Vec<f64>, iters: usize) -> Vec<f64> {
    let k = x.len();
    for _ in 0..iters {
        let g = energy_gradient(&x);
        let min_gap = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax == 0.0 {
            break;
        }
        let eta = 0.25 * min_gap / gmax;
        let y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| (xi + eta * gi).clamp(-1.0, 1.0)).collect();
        if !is_ordered(&y, -1.0, 1.0) || y == x {
            break;
        }
        x = y;
    }
    // the endpoint forces always point outward
    x[0] = -1.0;
    x[k - 1] = 1.0;
    x
}

/// Newton iteration on the interior coordinates with the endpoints fixed at
/// `±1`; the energy is strictly concave there, so backtracking on the energy
/// keeps the iterates ordered and ascending.
fn newton_polish(mut x: Vec<f64>, iters: usize, tol: f64) -> Vec<f64> {
    let k = x.len();
    let m = k - 2;
    for _ in 0..iters {
        let g = energy_gradient(&x);
        let gi = DVector::from_iterator(m, g[1..k - 1].iter().copied());
        if gi.amax() <= tol * 1e-3 {
            break;
        }
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 1..k - 1 {
            for j in 0..k {
                if j == i {
                    continue;
                }
                let d2 = 2.0 / (x[i] - x[j]).powi(2);
                h[(i - 1, i - 1)] -= d2;
                if (1..k - 1).contains(&j) {
                    h[(i - 1, j - 1)] += d2;
                }
            }
        }
        let Some(step) = (-h).cholesky().map(|c| c.solve(&gi)) else { break };
        let e0 = energy_of(&x).unwrap_or(f64::NEG_INFINITY);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let mut y = x.clone();
            for i in 0..m {
                y[i + 1] += t * step[i];
            }
            if is_ordered(&y, -1.0, 1.0) {
                if let Ok(e1) = energy_of(&y) {
                    if e1 >= e0 - 1e-12 * e0.abs().max(1.0) {
                        x = y;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

/// Maximizes `E` over `k` points in `I` by multi-start projected gradient
/// ascent followed by a Newton polish of the interior points.
pub fn fekete_optimize(k: usize, iv: &Interval) -> Result<FeketeResult> {
    fekete_optimize_with(k, iv, &FeketeConfig::default())
}

pub fn fekete_optimize_with(k: usize, iv: &Interval, cfg: &FeketeConfig) -> Result<FeketeResult> {
    if k < 2 {
        return param("Fekete problem needs k >= 2");
    }
    if k > 200 {
        return param("Fekete optimizer supports k <= 200");
    }
    let (c, s) = (0.5 * (iv.a + iv.b), 0.5 * iv.len());
    let to_iv = |x: &[f64]| -> Vec<f64> {
        let mut v: Vec<f64> = x.iter().map(|t| c + s * t).collect();
        v[0] = iv.a;
        let n = v.len();
        v[n - 1] = iv.b;
        v
    };
    let prediction = {
        let mut p = vec![-1.0];
        if k > 2 {
            p.extend(jacobi_zeros(k - 2, 1.0, 1.0)?);
        }
        p.push(1.0);
        to_iv(&p)
    };

    let best = if k == 2 {
        vec![-1.0, 1.0]
    } else {
        (0..cfg.starts.max(1))
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
                let h = 2.0 / (k - 1) as f64;
                let mut x: Vec<f64> = (0..k)
                    .map(|i| {
                        let base = -1.0 + h * i as f64;
                        if i == 0 || i + 1 == k || r == 0 {
                            base
                        } else {
                            base + rng.random_range(-0.3..0.3) * h
                        }
                    })
                    .collect();
                x = ascend(x, cfg.ascent_iterations);
                x = newton_polish(x, cfg.newton_iterations, cfg.tolerance);
                let e = energy_of(&x).unwrap_or(f64::NEG_INFINITY);
                (x, e)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(x, _)| x)
            .expect("at least one start")
    };
    let points = to_iv(&best);
    let energy = energy_of(&points)?;
    let residual = stationarity_residual(&points);
    let max_deviation = points.iter().zip(&prediction).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(FeketeResult {
        points,
        energy,
        residual,
        converged: residual <= cfg.tolerance,
        jacobi_prediction: prediction,
        max_deviation,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KeyExample {
    pub k: usize,
    pub length: f64,
    pub energy: f64,
    /// `(k² log L - E) / k²`
    pub normalized_defect: f64,
}

/// Energy of `k` equally spaced points spanning an interval of length `L`
/// (points `j L / (k - 1)`), and its defect from `k² log L`.
pub fn key_example_check(k: usize, length: f64) -> Result<KeyExample> {
    if k < 2 {
        return param("key example needs k >= 2");
    }
    if length.is_nan() || length <= 1.0 {
        return param(format!("key example needs L > 1, got {length}"));
    }
    let h = length / (k - 1) as f64;
    let pts: Vec<f64> = (0..k).map(|j| j as f64 * h).collect();
    let energy = energy_of(&pts)?;
    let k2 = (k * k) as f64;
    Ok(KeyExample { k, length, energy, normalized_defect: (k2 * length.ln() - energy) / k2 })
}
