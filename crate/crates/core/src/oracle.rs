//! Brute-force reference computations for cross-checking production code.
//!
//! Everything here is deliberately naive and shares no code with the paths it
//! checks: exhaustive pair scans, full sorts, and numeric quadrature. Intended
//! for tests, the acceptance suite, and the `gradcheck` command only.

use ndarray::{Array1, ArrayView1, ArrayView2};
use num_rational::Ratio;

use crate::nn::MlpModel;
use crate::{Error, Result, Scalar};

/// An oracle value tagged with the method that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<V> {
    pub value: V,
    pub method_tag: &'static str,
}

/// Central finite differences of `L(θ) = seed · net(x)` with respect to every
/// parameter, in [`MlpModel::params`] order. Uses forward passes only.
pub fn finite_difference_gradient(
    model: &MlpModel<f64>,
    x: ArrayView1<f64>,
    seed: ArrayView1<f64>,
    h: f64,
) -> Result<Vec<f64>> {
    let base = model.params();
    let loss = |params: &[f64]| -> Result<f64> {
        let out: Array1<f64> = model.with_params(params)?.forward(x)?;
        Ok(out.iter().zip(seed.iter()).map(|(y, c)| y * c).sum())
    };
    let mut probe = base.clone();
    let mut grads = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        probe[i] = base[i] + h;
        let up = loss(&probe)?;
        probe[i] = base[i] - h;
        let down = loss(&probe)?;
        probe[i] = base[i];
        grads.push((up - down) / (2.0 * h));
    }
    Ok(grads)
}

/// AUC by scanning every positive/negative pair, ties counted as half.
/// Accumulates an exact rational before the single final conversion.
pub fn oracle_auc<T: Scalar>(y_true: &[u8], scores: &[T]) -> Result<OracleResult<f64>> {
    if y_true.len() != scores.len() {
        return Err(Error::Input("labels and scores differ in length".into()));
    }
    let pos: Vec<T> = y_true.iter().zip(scores).filter(|(y, _)| **y == 1).map(|(_, s)| *s).collect();
    let neg: Vec<T> = y_true.iter().zip(scores).filter(|(y, _)| **y != 1).map(|(_, s)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::UndefinedAuc);
    }
    let mut credit = Ratio::<u64>::from_integer(0);
    let half = Ratio::new(1u64, 2);
    for p in &pos {
        for n in &neg {
            if p > n {
                credit += Ratio::from_integer(1);
            } else if p == n {
                credit += half;
            }
        }
    }
    let total = credit / Ratio::from_integer((pos.len() * neg.len()) as u64);
    Ok(OracleResult {
        value: *total.numer() as f64 / *total.denom() as f64,
        method_tag: "exhaustive pair scan",
    })
}

/// Exact k nearest rows of `points` to `query` by full sort of Euclidean
/// distances, equal distances ordered by lower row index.
pub fn oracle_nearest<T: Scalar>(points: ArrayView2<T>, query: ArrayView1<T>, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = Vec::new();
    for i in 0..points.nrows() {
        let mut acc = 0.0f64;
        for j in 0..points.ncols() {
            let d = points[[i, j]].as_f64() - query[j].as_f64();
            acc += d * d;
        }
        all.push((acc.sqrt(), i));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Minority indices whose `m` nearest neighbours in minority ∪ majority
/// (excluding the point itself) hold at least `m/2` but fewer than `m`
/// majority rows.
pub fn oracle_danger_set<T: Scalar>(minority: ArrayView2<T>, majority: ArrayView2<T>, m: usize) -> Vec<usize> {
    let w = minority.nrows();
    let mut danger = Vec::new();
    for i in 0..w {
        // combined rows: minority first, then majority
        let mut dists: Vec<(f64, usize)> = Vec::new();
        for j in 0..(w + majority.nrows()) {
            if j == i {
                continue;
            }
            let row = if j < w { minority.row(j) } else { majority.row(j - w) };
            let d: f64 = row
                .iter()
                .zip(minority.row(i).iter())
                .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                .sum::<f64>()
                .sqrt();
            dists.push((d, j));
        }
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
        let majority_count = dists.iter().take(m).filter(|(_, j)| *j >= w).count();
        if 2 * majority_count >= m && majority_count < m {
            danger.push(i);
        }
    }
    danger
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Student-t CDF by quadrature.
///
/// With `x = sqrt(df)·tan θ` the density becomes proportional to
/// `cos^(df-1) θ` on `(-π/2, π/2)`, so the CDF is a ratio of two integrals of
/// a bounded smooth function and needs no gamma-function evaluation.
pub fn oracle_t_cdf(t: f64, df: f64) -> OracleResult<f64> {
    assert!(df >= 1.0, "df must be at least 1");
    let kernel = move |theta: f64| theta.cos().max(0.0).powf(df - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let theta = (t.abs() / df.sqrt()).atan();
    // split at a width matching the kernel's scale so sharp peaks are sampled
    let scale = (1.0 / df.sqrt()).min(half);
    let piecewise = |a: f64, b: f64| -> f64 {
        let mut acc = 0.0;
        let mut lo = a;
        while lo < b {
            let hi = (lo + scale).min(b);
            acc += integrate(&kernel, lo, hi, 1e-14);
            lo = hi;
        }
        acc
    };
    let norm = piecewise(0.0, half);
    let part = piecewise(0.0, theta);
    let tail = 0.5 * part / norm;
    OracleResult {
        value: if t >= 0.0 { 0.5 + tail } else { 0.5 - tail },
        method_tag: "adaptive Simpson on cos^(df-1)",
    }
}
