//! Exact brute-force nearest-neighbour queries on squared Euclidean distance.

use std::cmp::Ordering;

use ndarray::{ArrayView1, ArrayView2};

use crate::Scalar;

#[inline]
pub fn squared_distance<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

#[inline]
fn by_distance_then_index<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Indices of the `k` rows of `points` closest to `query`, nearest first.
/// Equal distances are ordered by lower row index; `exclude` removes one row
/// (typically the query itself) from consideration.
pub fn k_nearest<T: Scalar>(points: ArrayView2<T>, query: ArrayView1<T>, k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut cand: Vec<(T, usize)> = points
        .outer_iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, row)| (squared_distance(row, query), i))
        .collect();
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_by(by_distance_then_index);
    cand.into_iter().map(|(_, i)| i).collect()
}

/// For each row of `points`, its `k` nearest other rows.
pub fn neighbor_lists<T: Scalar>(points: ArrayView2<T>, k: usize) -> Vec<Vec<usize>> {
    (0..points.nrows())
        .map(|i| k_nearest(points, points.row(i), k, Some(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_nearest;
    use crate::rng::seeded;
    use ndarray::{arr1, arr2, Array2};
    use rand::Rng;

    #[test]
    fn exact_match_comes_first() {
        let pts = arr2(&[[1.0, 1.0], [0.0, 0.0], [3.0, 3.0]]);
        assert_eq!(k_nearest(pts.view(), arr1(&[0.0, 0.0]).view(), 2, None), vec![1, 0]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let pts = arr2(&[[2.0], [-1.0], [1.0], [-2.0]]);
        assert_eq!(k_nearest(pts.view(), arr1(&[0.0]).view(), 4, None), vec![1, 2, 0, 3]);
    }

    #[test]
    fn exclusion_and_oversized_k() {
        let pts = arr2(&[[0.0], [1.0], [2.0]]);
        assert_eq!(k_nearest(pts.view(), pts.row(0), 10, Some(0)), vec![1, 2]);
    }

    #[test]
    fn agrees_with_oracle_on_random_cases() {
        let mut rng = seeded(500);
        for _ in 0..500 {
            let n = rng.random_range(1..40);
            let d = rng.random_range(1..5);
            // coarse grid coordinates force plenty of distance ties
            let pts = Array2::from_shape_simple_fn((n, d), || rng.random_range(0..4) as f64);
            let q = ndarray::Array1::from_shape_simple_fn(d, || rng.random_range(0..4) as f64);
            let k = rng.random_range(1..=n);
            assert_eq!(k_nearest(pts.view(), q.view(), k, None), oracle_nearest(pts.view(), q.view(), k));
        }
    }
}
