//! Exact t-SNE.
//!
//! Conditional Gaussian affinities are calibrated per point by bisection on
//! the precision until their entropy matches `ln(perplexity)`, symmetrized
//! into a joint distribution `P`, and matched by a Student-t kernel in two
//! dimensions. Descent uses momentum and per-coordinate adaptive gains, with
//! `P` exaggerated during the first iterations.

use serde::{Deserialize, Serialize};

use crate::error::{CectError, Result};
use crate::par;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, detail: String| {
            Err(CectError::Parameter {
                name: format!("tsne.{name}"),
                detail,
            })
        };
        if !(self.perplexity >= 2.0 && self.perplexity.is_finite()) {
            return bad("perplexity", format!("{} must be at least 2", self.perplexity));
        }
        if self.iterations == 0 {
            return bad("iterations", "must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", format!("{} must be positive", self.learning_rate));
        }
        if !(self.exaggeration >= 1.0 && self.exaggeration.is_finite()) {
            return bad("exaggeration", format!("{} must be at least 1", self.exaggeration));
        }
        Ok(())
    }

    /// Perplexity actually used for `n` points: the configured value, capped
    /// below `n / 3`.
    pub fn effective_perplexity(&self, n: usize) -> Result<f64> {
        let cap = (n as f64 - 1.0) / 3.0;
        let p = self.perplexity.min(cap);
        if p < 1.0 {
            return Err(CectError::Parameter {
                name: "tsne.perplexity".into(),
                detail: format!("{n} points cannot support a perplexity of at least 1"),
            });
        }
        Ok(p)
    }
}

/// Squared distances below this count as this, so duplicate points stay
/// distinguishable in the low-dimensional kernel.
pub const DISTANCE_FLOOR: f64 = 1e-12;
/// Bisection stops once the row entropy is this close to `ln(perplexity)`.
pub const ENTROPY_TOLERANCE: f64 = 1e-10;
const MAX_BISECTION_STEPS: usize = 200;
const INITIAL_STD: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    /// `[n][2]` coordinates, centred at the origin.
    pub points: Vec<[f64; 2]>,
    /// KL(P‖Q) after every iteration, always against the unexaggerated `P`.
    pub kl_trace: Vec<f64>,
    /// Perplexity reached by each conditional row.
    pub row_perplexities: Vec<f64>,
    pub perplexity: f64,
}

/// Joint affinities and the perplexity each row reached.
#[derive(Clone, Debug)]
pub struct Affinities {
    pub n: usize,
    /// Row-major `[n, n]`, symmetric, zero diagonal, sums to 1.
    pub p: Vec<f64>,
    pub row_perplexities: Vec<f64>,
}

fn squared_distances(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    par::map_range(n, |i| {
        let xi = &x[i * d..(i + 1) * d];
        (0..n)
            .map(|j| {
                let xj = &x[j * d..(j + 1) * d];
                xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .collect::<Vec<f64>>()
    })
    .concat()
}

/// Conditional row `p_{j|i}` for precision `beta`, with its entropy (nats).
fn conditional_row(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (o, &dj)) in out.iter_mut().zip(dist).enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (dj - dmin)).exp() };
        sum += *o;
    }
    let mut h = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o /= sum;
        if j != i {
            h += beta * (dist[j] - dmin) * *o;
        }
    }
    h + sum.ln()
}

/// Calibrated, symmetrized affinities of the rows of `x` (`[n, d]`).
pub fn affinities(x: &[f64], n: usize, d: usize, perplexity: f64) -> Result<Affinities> {
    if n < 2 || x.len() != n * d {
        return Err(CectError::dim(
            "tsne",
            format!("expected an [n >= 2, {d}] matrix, got {} values", x.len()),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CectError::Numeric("t-SNE input contains non-finite values".into()));
    }
    let dist = squared_distances(x, n, d);
    let target = perplexity.ln();
    let rows = par::map_range(n, |i| {
        let di = &dist[i * n..(i + 1) * n];
        let mut row = vec![0.0; n];
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let mut h = conditional_row(di, i, beta, &mut row);
        for _ in 0..MAX_BISECTION_STEPS {
            if (h - target).abs() < ENTROPY_TOLERANCE {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = conditional_row(di, i, beta, &mut row);
        }
        (row, h.exp())
    });
    let mut cond = Vec::with_capacity(n * n);
    let mut row_perplexities = Vec::with_capacity(n);
    for (row, perp) in rows {
        cond.extend(row);
        row_perplexities.push(perp);
    }
    let mut p = vec![0.0; n * n];
    let norm = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / norm;
        }
    }
    Ok(Affinities { n, p, row_perplexities })
}

/// Student-t numerators `1 / (1 + |y_i - y_j|²)` and their total.
fn kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let num = par::map_range(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    return 0.0;
                }
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                1.0 / (1.0 + (dx * dx + dy * dy).max(DISTANCE_FLOOR))
            })
            .collect::<Vec<f64>>()
    })
    .concat();
    let total = num.iter().sum();
    (num, total)
}

fn kl_divergence(p: &[f64], num: &[f64], total: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &nij)| pij * (pij / (nij / total).max(f64::MIN_POSITIVE)).ln())
        .sum()
}

/// Embeds the rows of `x` (`[n, d]`, row-major) in two dimensions.
pub fn tsne(x: &[f64], n: usize, d: usize, cfg: &TsneConfig) -> Result<TsneResult> {
    cfg.validate()?;
    let perplexity = cfg.effective_perplexity(n)?;
    let aff = affinities(x, n, d, perplexity)?;
    let p = &aff.p;
    let mut rng = Rng::new(cfg.seed).fork("tsne");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.normal() * INITIAL_STD, rng.normal() * INITIAL_STD])
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let exaggeration = if it < cfg.exaggeration_iterations {
            cfg.exaggeration
        } else {
            1.0
        };
        let momentum = if it < cfg.exaggeration_iterations { 0.5 } else { 0.8 };
        let (num, total) = kernel(&y);
        let grad = par::map_range(n, |i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                let w = (exaggeration * p[i * n + j] - num[i * n + j] / total) * num[i * n + j];
                g[0] += w * (y[i][0] - y[j][0]);
                g[1] += w * (y[i][1] - y[j][1]);
            }
            [4.0 * g[0], 4.0 * g[1]]
        });
        for i in 0..n {
            for k in 0..2 {
                let same_direction = (grad[i][k] > 0.0) == (velocity[i][k] > 0.0);
                gains[i][k] = if same_direction {
                    gains[i][k] * 0.8
                } else {
                    gains[i][k] + 0.2
                };
                gains[i][k] = gains[i][k].max(MIN_GAIN);
                velocity[i][k] = momentum * velocity[i][k] - cfg.learning_rate * gains[i][k] * grad[i][k];
                y[i][k] += velocity[i][k];
            }
        }
        let mean = y.iter().fold([0.0; 2], |m, v| [m[0] + v[0], m[1] + v[1]]);
        for v in &mut y {
            v[0] -= mean[0] / n as f64;
            v[1] -= mean[1] / n as f64;
        }
        let (num, total) = kernel(&y);
        kl_trace.push(kl_divergence(p, &num, total));
        if !kl_trace.last().is_some_and(|k| k.is_finite()) {
            return Err(CectError::Numeric(format!("t-SNE diverged at iteration {it}")));
        }
    }
    Ok(TsneResult {
        points: y,
        kl_trace,
        row_perplexities: aff.row_perplexities,
        perplexity,
    })
}
