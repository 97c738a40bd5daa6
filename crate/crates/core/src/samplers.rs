//! Classic interpolating over-samplers: SMOTE, Borderline-SMOTE-1, ADASYN.
//!
//! All three draw a base minority row, pick one of its `k` nearest minority
//! neighbours, and emit `base + λ·(neighbour − base)`. They differ only in how
//! bases are chosen.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::neighbors::{k_nearest, neighbor_lists};
use crate::rng::{seeded, SeededRng};
use crate::{Error, Result, Scalar};

pub const DEFAULT_K_NEIGHBORS: usize = 5;
pub const DEFAULT_M_NEIGHBORS: usize = 5;

#[derive(Debug, Clone)]
pub struct SamplerRequest<'a, T> {
    pub minority: ArrayView2<'a, T>,
    pub majority: ArrayView2<'a, T>,
    /// Number of synthetic rows to emit.
    pub deficit_d: usize,
    pub k_neighbors: usize,
    pub rng_seed: u64,
    /// Overrides the Uniform(0,1) interpolation weight.
    pub fixed_lambda: Option<T>,
}

impl<'a, T: Scalar> SamplerRequest<'a, T> {
    /// Request for exact balancing: `deficit_d = |majority| − |minority|`.
    pub fn balancing(minority: ArrayView2<'a, T>, majority: ArrayView2<'a, T>, rng_seed: u64) -> Self {
        Self {
            minority,
            majority,
            deficit_d: majority.nrows().saturating_sub(minority.nrows()),
            k_neighbors: DEFAULT_K_NEIGHBORS,
            rng_seed,
            fixed_lambda: None,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k_neighbors = k;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerWarning {
    /// `k_neighbors` exceeded `w − 1` and was reduced.
    NeighborsClamped { requested: usize, used: usize },
    /// Borderline found no DANGER points and fell back to plain SMOTE.
    EmptyDangerSet,
    /// ADASYN saw no majority neighbours anywhere and allocated uniformly.
    UniformAllocation,
}

/// Which rows produced a synthetic point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Origin<T> {
    pub base: usize,
    pub neighbor: usize,
    pub lambda: T,
}

#[derive(Debug, Clone)]
pub struct SamplerOutput<T> {
    pub synthetic: Array2<T>,
    pub origins: Vec<Origin<T>>,
    pub warnings: Vec<SamplerWarning>,
}

impl<T: Scalar> SamplerOutput<T> {
    fn empty(width: usize, warnings: Vec<SamplerWarning>) -> Self {
        Self {
            synthetic: Array2::zeros((0, width)),
            origins: Vec::new(),
            warnings,
        }
    }

    /// Minority rows followed by the synthetic rows.
    pub fn merged(&self, minority: ArrayView2<T>) -> Array2<T> {
        concatenate(Axis(0), &[minority, self.synthetic.view()]).expect("matching widths")
    }
}

fn effective_k(w: usize, k: usize, warnings: &mut Vec<SamplerWarning>) -> Result<usize> {
    if w < 2 {
        return Err(Error::InsufficientMinority { needed: 2, got: w });
    }
    if k == 0 {
        return Err(Error::Config("k_neighbors must be at least 1".into()));
    }
    if k > w - 1 {
        warnings.push(SamplerWarning::NeighborsClamped { requested: k, used: w - 1 });
        return Ok(w - 1);
    }
    Ok(k)
}

struct Interpolator<'a, T> {
    minority: ArrayView2<'a, T>,
    neighbors: Vec<Vec<usize>>,
    fixed_lambda: Option<T>,
    rng: SeededRng,
    rows: Vec<T>,
    origins: Vec<Origin<T>>,
}

impl<'a, T: Scalar> Interpolator<'a, T> {
    fn new(req: &SamplerRequest<'a, T>, k: usize) -> Self {
        Self {
            minority: req.minority,
            neighbors: neighbor_lists(req.minority, k),
            fixed_lambda: req.fixed_lambda,
            rng: seeded(req.rng_seed),
            rows: Vec::with_capacity(req.deficit_d * req.minority.ncols()),
            origins: Vec::with_capacity(req.deficit_d),
        }
    }

    fn emit(&mut self, base: usize) {
        let nbrs = &self.neighbors[base];
        let neighbor = nbrs[self.rng.random_range(0..nbrs.len())];
        let draw = self.rng.random::<f64>();
        let lambda = self.fixed_lambda.unwrap_or_else(|| T::lit(draw));
        let a = self.minority.row(base);
        let b = self.minority.row(neighbor);
        self.rows.extend(a.iter().zip(b.iter()).map(|(&x, &y)| x + lambda * (y - x)));
        self.origins.push(Origin { base, neighbor, lambda });
    }

    fn finish(self, warnings: Vec<SamplerWarning>) -> SamplerOutput<T> {
        let n = self.minority.ncols();
        let count = self.origins.len();
        SamplerOutput {
            synthetic: Array2::from_shape_vec((count, n), self.rows).expect("row-major buffer"),
            origins: self.origins,
            warnings,
        }
    }
}

/// Plain SMOTE: bases uniform over the minority.
pub fn smote<T: Scalar>(req: &SamplerRequest<'_, T>) -> Result<SamplerOutput<T>> {
    let mut warnings = Vec::new();
    let k = effective_k(req.minority.nrows(), req.k_neighbors, &mut warnings)?;
    if req.deficit_d == 0 {
        return Ok(SamplerOutput::empty(req.minority.ncols(), warnings));
    }
    let mut interp = Interpolator::new(req, k);
    let w = req.minority.nrows();
    for _ in 0..req.deficit_d {
        let base = interp.rng.random_range(0..w);
        interp.emit(base);
    }
    Ok(interp.finish(warnings))
}

/// Safety class of a minority row under Borderline-SMOTE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Borderline {
    /// Fewer than half of its neighbours are majority.
    Safe,
    /// At least half, but not all.
    Danger,
    /// Every neighbour is majority.
    Noise,
}

/// Classifies every minority row by the majority share among its `m`
/// nearest neighbours in minority ∪ majority.
pub fn classify_borderline<T: Scalar>(minority: ArrayView2<T>, majority: ArrayView2<T>, m: usize) -> Vec<Borderline> {
    let w = minority.nrows();
    let combined = concatenate(Axis(0), &[minority, majority]).expect("matching widths");
    (0..w)
        .map(|i| {
            let nbrs = k_nearest(combined.view(), minority.row(i), m, Some(i));
            let maj = nbrs.iter().filter(|&&j| j >= w).count();
            let m_eff = nbrs.len();
            if maj == m_eff && m_eff > 0 {
                Borderline::Noise
            } else if 2 * maj >= m_eff && m_eff > 0 {
                Borderline::Danger
            } else {
                Borderline::Safe
            }
        })
        .collect()
}

/// Borderline-SMOTE-1: bases drawn uniformly from the DANGER set, neighbours
/// from the minority only. An empty DANGER set falls back to [`smote`].
pub fn borderline_smote<T: Scalar>(req: &SamplerRequest<'_, T>, m_neighbors: usize) -> Result<SamplerOutput<T>> {
    let mut warnings = Vec::new();
    let k = effective_k(req.minority.nrows(), req.k_neighbors, &mut warnings)?;
    if m_neighbors == 0 {
        return Err(Error::Config("m_neighbors must be at least 1".into()));
    }
    if req.majority.nrows() == 0 {
        return Err(Error::Input("borderline_smote needs majority rows".into()));
    }
    let danger: Vec<usize> = classify_borderline(req.minority, req.majority, m_neighbors)
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c == Borderline::Danger)
        .map(|(i, _)| i)
        .collect();
    if danger.is_empty() {
        log::warn!("borderline_smote: empty DANGER set, falling back to SMOTE");
        let mut out = smote(req)?;
        out.warnings.push(SamplerWarning::EmptyDangerSet);
        return Ok(out);
    }
    if req.deficit_d == 0 {
        return Ok(SamplerOutput::empty(req.minority.ncols(), warnings));
    }
    let mut interp = Interpolator::new(req, k);
    for _ in 0..req.deficit_d {
        let base = danger[interp.rng.random_range(0..danger.len())];
        interp.emit(base);
    }
    Ok(interp.finish(warnings))
}

/// Splits `total` into parts proportional to integer `weights` by the
/// largest-remainder method; equal remainders favour the lower index.
/// All-zero weights are treated as equal weights.
pub fn largest_remainder(weights: &[u64], total: usize) -> Vec<usize> {
    let weights: Vec<u64> = if weights.iter().all(|&w| w == 0) {
        vec![1; weights.len()]
    } else {
        weights.to_vec()
    };
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return Vec::new();
    }
    let total = total as u128;
    let mut counts: Vec<usize> = weights.iter().map(|&w| (total * w as u128 / sum) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<(u128, usize)> = weights.iter().enumerate().map(|(i, &w)| (total * w as u128 % sum, i)).collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in order.iter().take(total as usize - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Per-row generation counts for ADASYN and whether the uniform fallback fired.
pub fn adasyn_allocation<T: Scalar>(
    minority: ArrayView2<T>,
    majority: ArrayView2<T>,
    k: usize,
    deficit_d: usize,
) -> (Vec<usize>, bool) {
    let w = minority.nrows();
    let combined = concatenate(Axis(0), &[minority, majority]).expect("matching widths");
    let majority_counts: Vec<u64> = (0..w)
        .map(|i| {
            k_nearest(combined.view(), minority.row(i), k, Some(i))
                .into_iter()
                .filter(|&j| j >= w)
                .count() as u64
        })
        .collect();
    let uniform = majority_counts.iter().all(|&c| c == 0);
    (largest_remainder(&majority_counts, deficit_d), uniform)
}

/// ADASYN: row `i` receives a share of `deficit_d` proportional to the
/// majority fraction among its `k` nearest neighbours in the combined set.
pub fn adasyn<T: Scalar>(req: &SamplerRequest<'_, T>) -> Result<SamplerOutput<T>> {
    let mut warnings = Vec::new();
    let k = effective_k(req.minority.nrows(), req.k_neighbors, &mut warnings)?;
    let (counts, uniform) = adasyn_allocation(req.minority, req.majority, k, req.deficit_d);
    if uniform {
        log::warn!("adasyn: no majority neighbours near any minority row, allocating uniformly");
        warnings.push(SamplerWarning::UniformAllocation);
    }
    if req.deficit_d == 0 {
        return Ok(SamplerOutput::empty(req.minority.ncols(), warnings));
    }
    let mut interp = Interpolator::new(req, k);
    for (base, &g) in counts.iter().enumerate() {
        for _ in 0..g {
            interp.emit(base);
        }
    }
    Ok(interp.finish(warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_danger_set;
    use ndarray::{arr2, Array2};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn req<'a>(min: &'a Array2<f64>, maj: &'a Array2<f64>, d: usize, k: usize, seed: u64) -> SamplerRequest<'a, f64> {
        SamplerRequest {
            minority: min.view(),
            majority: maj.view(),
            deficit_d: d,
            k_neighbors: k,
            rng_seed: seed,
            fixed_lambda: None,
        }
    }

    fn gaussian(n: usize, center: (f64, f64), sd: f64, rng: &mut SeededRng) -> Array2<f64> {
        let norm = Normal::new(0.0, sd).unwrap();
        Array2::from_shape_fn((n, 2), |(_, j)| (if j == 0 { center.0 } else { center.1 }) + norm.sample(rng))
    }

    /// Distance from `s` to segment [a, b] and the projection parameter.
    fn segment_residual(s: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
        let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let len2: f64 = ab.iter().map(|v| v * v).sum();
        let t = if len2 == 0.0 {
            0.0
        } else {
            s.iter().zip(a).zip(&ab).map(|((s, a), d)| (s - a) * d).sum::<f64>() / len2
        };
        let tc = t.clamp(0.0, 1.0);
        let r = s.iter().zip(a).zip(&ab).map(|((s, a), d)| (s - (a + tc * d)).powi(2)).sum::<f64>().sqrt();
        (r, t)
    }

    #[test]
    fn fixed_lambda_gives_midpoint_and_endpoint() {
        let min = arr2(&[[0.0, 0.0], [2.0, 4.0]]);
        let maj = Array2::zeros((0, 2));
        let mut r = req(&min, &maj, 6, 1, 3);
        r.fixed_lambda = Some(0.5);
        let out = smote(&r).unwrap();
        for row in out.synthetic.outer_iter() {
            assert_eq!(row.to_vec(), vec![1.0, 2.0]);
        }
        r.fixed_lambda = Some(0.0);
        let out = smote(&r).unwrap();
        for (row, o) in out.synthetic.outer_iter().zip(&out.origins) {
            assert_eq!(row, min.row(o.base));
        }
    }

    #[test]
    fn pima_deficit() {
        let min = Array2::from_shape_fn((268, 8), |(i, j)| (i * 8 + j) as f64 * 1e-3);
        let maj = Array2::from_shape_fn((500, 8), |(i, j)| 5.0 + (i * 8 + j) as f64 * 1e-3);
        let r = SamplerRequest::balancing(min.view(), maj.view(), 1);
        assert_eq!(r.deficit_d, 232);
        assert_eq!(smote(&r).unwrap().synthetic.nrows(), 232);
    }

    #[test]
    fn zero_deficit_and_tiny_minority() {
        let min = arr2(&[[0.0], [1.0]]);
        let maj = arr2(&[[5.0]]);
        assert_eq!(smote(&req(&min, &maj, 0, 5, 1)).unwrap().synthetic.nrows(), 0);
        let one = arr2(&[[0.0]]);
        assert!(matches!(smote(&req(&one, &maj, 3, 1, 1)), Err(Error::InsufficientMinority { .. })));
    }

    #[test]
    fn clamps_k_with_warning() {
        let min = arr2(&[[0.0], [1.0], [2.0]]);
        let maj = arr2(&[[5.0]]);
        let out = smote(&req(&min, &maj, 4, 10, 1)).unwrap();
        assert_eq!(out.warnings, vec![SamplerWarning::NeighborsClamped { requested: 10, used: 2 }]);
    }

    #[test]
    fn seeds_control_output() {
        let mut rng = seeded(1);
        let min = gaussian(30, (0.0, 0.0), 1.0, &mut rng);
        let maj = gaussian(60, (2.0, 2.0), 1.0, &mut rng);
        let a = smote(&req(&min, &maj, 30, 5, 10)).unwrap().synthetic;
        let b = smote(&req(&min, &maj, 30, 5, 10)).unwrap().synthetic;
        let c = smote(&req(&min, &maj, 30, 5, 11)).unwrap().synthetic;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn borderline_classification_edges() {
        // minority 0 is buried inside majority; minority 1-3 are a clean cluster
        let min = arr2(&[[0.0, 0.0], [10.0, 10.0], [10.1, 10.0], [10.0, 10.1]]);
        let maj = arr2(&[[0.1, 0.0], [-0.1, 0.0], [0.0, 0.1], [0.0, -0.1], [0.1, 0.1]]);
        let classes = classify_borderline(min.view(), maj.view(), 3);
        assert_eq!(classes[0], Borderline::Noise);
        assert_eq!(classes[1], Borderline::Safe);
        let out = borderline_smote(&req(&min, &maj, 10, 2, 4), 3).unwrap();
        assert_eq!(out.warnings, vec![SamplerWarning::EmptyDangerSet]);
        assert_eq!(out.synthetic.nrows(), 10);
    }

    #[test]
    fn borderline_bases_lie_in_contact_zone() {
        let mut rng = seeded(8);
        let min = gaussian(60, (0.0, 0.0), 1.0, &mut rng);
        let maj = gaussian(300, (3.0, 0.0), 1.0, &mut rng);
        let danger = oracle_danger_set(min.view(), maj.view(), 5);
        assert!(!danger.is_empty());
        let out = borderline_smote(&req(&min, &maj, 240, 5, 2), 5).unwrap();
        assert!(out.warnings.is_empty());
        assert!(out.origins.iter().all(|o| danger.contains(&o.base)));
        let production: Vec<usize> = classify_borderline(min.view(), maj.view(), 5)
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Borderline::Danger)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(production, danger);
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(&[1, 0], 4), vec![4, 0]);
        assert_eq!(largest_remainder(&[3, 3, 3], 6), vec![2, 2, 2]);
        // r = (0.6, 0.4) with k = 5 -> 3 and 2 majority neighbours
        assert_eq!(largest_remainder(&[3, 2], 5), vec![3, 2]);
        assert_eq!(largest_remainder(&[1, 1, 1], 4), vec![2, 1, 1]);
        assert_eq!(largest_remainder(&[0, 0], 3), vec![2, 1]);
    }

    #[test]
    fn adasyn_proportional_counts() {
        // minority 0 sits among majority, minority 1 far away with its own minority buddy
        let min = arr2(&[[0.0], [20.0], [20.5]]);
        let maj = arr2(&[[0.2], [-0.2], [0.3], [-0.3]]);
        let (counts, uniform) = adasyn_allocation(min.view(), maj.view(), 1, 4);
        assert!(!uniform);
        assert_eq!(counts, vec![4, 0, 0]);
        let out = adasyn(&req(&min, &maj, 4, 1, 5)).unwrap();
        assert!(out.origins.iter().all(|o| o.base == 0));
    }

    #[test]
    fn adasyn_uniform_fallback() {
        let min = arr2(&[[0.0], [1.0], [2.0]]);
        let maj = arr2(&[[100.0], [101.0]]);
        let out = adasyn(&req(&min, &maj, 6, 2, 5)).unwrap();
        assert!(out.warnings.contains(&SamplerWarning::UniformAllocation));
        let mut per = [0; 3];
        for o in &out.origins {
            per[o.base] += 1;
        }
        assert_eq!(per, [2, 2, 2]);
    }

    proptest! {
        #[test]
        fn synthetic_points_stay_on_segments(seed in any::<u64>(), w in 2usize..20, d in 0usize..50, dim in 1usize..5) {
            let mut rng = seeded(seed);
            let min = Array2::from_shape_simple_fn((w, dim), || rng.random::<f64>());
            let maj = Array2::from_shape_simple_fn((w + d, dim), || rng.random::<f64>());
            for out in [smote(&req(&min, &maj, d, 5, seed)).unwrap(),
                        borderline_smote(&req(&min, &maj, d, 5, seed), 5).unwrap(),
                        adasyn(&req(&min, &maj, d, 5, seed)).unwrap()] {
                prop_assert_eq!(out.synthetic.nrows(), d);
                for (row, o) in out.synthetic.outer_iter().zip(&out.origins) {
                    let (r, t) = segment_residual(&row.to_vec(), &min.row(o.base).to_vec(), &min.row(o.neighbor).to_vec());
                    prop_assert!(r < 1e-9);
                    prop_assert!((0.0..=1.0).contains(&t) || min.row(o.base) == min.row(o.neighbor));
                }
            }
        }
    }
}
