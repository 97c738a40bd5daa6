//! Deep SMOTE: a regression network trained on concatenated minority pairs
//! `[x_s ‖ x_t] ↦ x_s + λ(x_t − x_s)`, then frozen and used as the
//! synthesizer.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::neighbors::neighbor_lists;
use crate::nn::{chain_specs, mlp_init, mse_train, Activation, MlpModel, TrainConfig};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::{Error, Result, Scalar};

/// Number of distinct unordered pairs among `w` rows.
pub fn pair_capacity(w: usize) -> usize {
    w * w.saturating_sub(1) / 2
}

/// Where training pairs are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PairSelection {
    /// Any two distinct minority rows.
    #[default]
    Global,
    /// Only edges of the minority `k`-nearest-neighbour graph.
    Neighborhood { k: usize },
}

/// Candidate unordered pairs `(s, t)` with `s < t`, indexable without
/// materializing the complete graph.
enum PairSpace {
    Complete { w: usize },
    Edges(Vec<(usize, usize)>),
}

impl PairSpace {
    fn new<T: Scalar>(minority: ArrayView2<T>, selection: PairSelection) -> Result<Self> {
        let w = minority.nrows();
        match selection {
            PairSelection::Global => Ok(PairSpace::Complete { w }),
            PairSelection::Neighborhood { k } => {
                if k == 0 {
                    return Err(Error::Config("neighbourhood pair selection needs k >= 1".into()));
                }
                let mut edges: Vec<(usize, usize)> = neighbor_lists(minority, k)
                    .into_iter()
                    .enumerate()
                    .flat_map(|(i, nbrs)| nbrs.into_iter().map(move |j| (i.min(j), i.max(j))))
                    .collect();
                edges.sort_unstable();
                edges.dedup();
                Ok(PairSpace::Edges(edges))
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            PairSpace::Complete { w } => pair_capacity(*w),
            PairSpace::Edges(e) => e.len(),
        }
    }

    fn get(&self, idx: usize) -> (usize, usize) {
        match self {
            PairSpace::Complete { w } => unrank_pair(idx, *w),
            PairSpace::Edges(e) => e[idx],
        }
    }
}

/// Number of pairs whose first element is below `s`.
fn pairs_before(s: usize, w: usize) -> usize {
    s * (w - 1) - s * s.saturating_sub(1) / 2
}

/// Lexicographic unranking of unordered pairs over `0..w`.
fn unrank_pair(idx: usize, w: usize) -> (usize, usize) {
    let (mut lo, mut hi) = (0usize, w - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if pairs_before(mid, w) <= idx {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pairs_before(w - 1) equals the capacity, so `hi` never qualifies
    (lo, lo + 1 + idx - pairs_before(lo, w))
}

/// Supervised set built from minority pairs.
#[derive(Debug, Clone)]
pub struct PairBatch<T> {
    /// Ordered `(first, second)` as concatenated into `x_prime`.
    pub pairs_u: Vec<(usize, usize)>,
    /// `T × 2n` concatenations.
    pub x_prime: Array2<T>,
    /// `T × n` interpolated targets.
    pub y_prime: Array2<T>,
    pub lambda_draws: Vec<T>,
}

fn concat_pair<T: Scalar>(minority: ArrayView2<T>, s: usize, t: usize, out: &mut Vec<T>) {
    out.extend(minority.row(s).iter().copied());
    out.extend(minority.row(t).iter().copied());
}

/// Builds `t_count` training pairs with Uniform(0,1) interpolation weights.
///
/// Pairs are distinct while `t_count ≤ C(w, 2)` (for global selection);
/// beyond capacity every pair is used once and the remainder is re-drawn
/// uniformly with fresh weights.
pub fn build_pair_batch<T: Scalar>(minority: ArrayView2<T>, t_count: usize, rng_seed: u64) -> Result<PairBatch<T>> {
    build_pair_batch_with(minority, t_count, rng_seed, PairSelection::Global, None)
}

pub fn build_pair_batch_with<T: Scalar>(
    minority: ArrayView2<T>,
    t_count: usize,
    rng_seed: u64,
    selection: PairSelection,
    fixed_lambda: Option<T>,
) -> Result<PairBatch<T>> {
    let w = minority.nrows();
    if w < 2 {
        return Err(Error::InsufficientMinority { needed: 2, got: w });
    }
    if t_count == 0 {
        return Err(Error::Config("t_count must be at least 1".into()));
    }
    let space = PairSpace::new(minority, selection)?;
    let capacity = space.len();
    let mut rng = seeded(rng_seed);
    let mut picks: Vec<usize> = if t_count <= capacity {
        index::sample(&mut rng, capacity, t_count).into_vec()
    } else {
        (0..capacity).collect()
    };
    while picks.len() < t_count {
        picks.push(rng.random_range(0..capacity));
    }

    let n = minority.ncols();
    let mut x = Vec::with_capacity(t_count * 2 * n);
    let mut y = Vec::with_capacity(t_count * n);
    let mut pairs_u = Vec::with_capacity(t_count);
    let mut lambda_draws = Vec::with_capacity(t_count);
    for idx in picks {
        let (a, b) = space.get(idx);
        let (s, t) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        let draw = rng.random::<f64>();
        let lambda = fixed_lambda.unwrap_or_else(|| T::lit(draw));
        concat_pair(minority, s, t, &mut x);
        y.extend(
            minority
                .row(s)
                .iter()
                .zip(minority.row(t).iter())
                .map(|(&xs, &xt)| xs + lambda * (xt - xs)),
        );
        pairs_u.push((s, t));
        lambda_draws.push(lambda);
    }
    Ok(PairBatch {
        pairs_u,
        x_prime: Array2::from_shape_vec((t_count, 2 * n), x).expect("row-major"),
        y_prime: Array2::from_shape_vec((t_count, n), y).expect("row-major"),
        lambda_draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSmoteConfig {
    /// Number of training pairs.
    pub t_count: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    #[serde(default)]
    pub pair_selection: PairSelection,
    #[serde(default)]
    pub seed: u64,
}

/// A frozen pair-to-point regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepSmoteModel<T> {
    net: MlpModel<T>,
    feature_dim_n: usize,
}

impl<T: Scalar> DeepSmoteModel<T> {
    pub fn new(net: MlpModel<T>) -> Result<Self> {
        let n = net.output_width();
        if net.input_width() != 2 * n {
            return Err(Error::Dimension {
                context: "deep smote input width (2n)",
                expected: 2 * n,
                got: net.input_width(),
            });
        }
        Ok(Self { net, feature_dim_n: n })
    }

    pub fn net(&self) -> &MlpModel<T> {
        &self.net
    }

    pub fn feature_dim_n(&self) -> usize {
        self.feature_dim_n
    }

    /// Predicts one point per row of concatenated pairs.
    pub fn predict(&self, x_prime: ArrayView2<T>) -> Result<Array2<T>> {
        self.net.forward_batch(x_prime)
    }
}

/// Trains the regressor on a fresh [`PairBatch`]; architecture is
/// `[2n, hidden..., n]`, relu hidden layers and a linear output.
pub fn train_deep_smote<T: Scalar>(minority: ArrayView2<T>, cfg: &DeepSmoteConfig) -> Result<DeepSmoteModel<T>> {
    if cfg.hidden.contains(&0) {
        return Err(Error::Config("hidden widths must be positive".into()));
    }
    let n = minority.ncols();
    let batch = build_pair_batch_with(
        minority,
        cfg.t_count,
        derive_seed(cfg.seed, &["pairs".into()]),
        cfg.pair_selection,
        None,
    )?;
    let mut widths = vec![2 * n];
    widths.extend(&cfg.hidden);
    widths.push(n);
    let specs = chain_specs(&widths, Activation::Relu, Activation::Linear);
    let net = mlp_init(&specs, derive_seed(cfg.seed, &["init".into()]))?;
    let train = TrainConfig {
        shuffle_seed: derive_seed(cfg.seed, &["shuffle".into(), cfg.train.shuffle_seed.into()]),
        ..cfg.train
    };
    let net = mse_train(net, batch.x_prime.view(), batch.y_prime.view(), &train)?;
    DeepSmoteModel::new(net)
}

pub(crate) fn random_pair(w: usize, rng: &mut SeededRng) -> (usize, usize) {
    let s = rng.random_range(0..w);
    let mut t = rng.random_range(0..w - 1);
    if t >= s {
        t += 1;
    }
    (s, t)
}

/// Runs `net` on `deficit_d` random concatenated pairs and returns the
/// minority rows followed by the predictions.
pub fn oversample_with_pair_net<T: Scalar>(
    minority: ArrayView2<T>,
    net: &MlpModel<T>,
    deficit_d: usize,
    rng_seed: u64,
) -> Result<Array2<T>> {
    let n = minority.ncols();
    if net.input_width() != 2 * n || net.output_width() != n {
        return Err(Error::Dimension {
            context: "pair network vs minority width",
            expected: n,
            got: net.output_width(),
        });
    }
    if deficit_d == 0 {
        return Ok(minority.to_owned());
    }
    let w = minority.nrows();
    if w < 2 {
        return Err(Error::InsufficientMinority { needed: 2, got: w });
    }
    let mut rng = seeded(rng_seed);
    let mut x = Vec::with_capacity(deficit_d * 2 * n);
    for _ in 0..deficit_d {
        let (s, t) = random_pair(w, &mut rng);
        concat_pair(minority, s, t, &mut x);
    }
    let x = Array2::from_shape_vec((deficit_d, 2 * n), x).expect("row-major");
    let synthetic = net.forward_batch(x.view())?;
    Ok(concatenate(Axis(0), &[minority, synthetic.view()]).expect("matching widths"))
}

/// Balances the minority with `deficit_d` model predictions; output has
/// `w + deficit_d` rows, minority first.
pub fn oversample_deep_smote<T: Scalar>(
    minority: ArrayView2<T>,
    model: &DeepSmoteModel<T>,
    deficit_d: usize,
    rng_seed: u64,
) -> Result<Array2<T>> {
    if model.feature_dim_n != minority.ncols() {
        return Err(Error::Dimension {
            context: "deep smote feature width",
            expected: model.feature_dim_n,
            got: minority.ncols(),
        });
    }
    oversample_with_pair_net(minority, &model.net, deficit_d, rng_seed)
}

/// Synthetic rows only (drops the leading minority block).
pub fn synthetic_part<T: Scalar>(merged: &Array2<T>, w: usize) -> Array2<T> {
    merged.slice(s![w.., ..]).to_owned()
}
