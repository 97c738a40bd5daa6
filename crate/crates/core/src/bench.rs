//! The fold-wise benchmark protocol and its reports.
//!
//! For every (dataset, repeat, fold, method): fit the min-max scaler on the
//! training fold, over-sample the scaled training minority to exact balance,
//! train the tree on the balanced set and score the untouched test fold.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversarial::{oversample_da_smote, oversample_gan, train_da_smote, train_gan_baseline, AdversarialConfig, GenLossMode};
use crate::cv::{stratified_kfold, Fold};
use crate::data::{load_csv, make_synthetic, registry_entry, registry_standin, validate_against_registry, Dataset, MinMaxScaler, RegistryEntry, SyntheticKind, ValidationReport};
use crate::deep_smote::{oversample_deep_smote, train_deep_smote, DeepSmoteConfig, DeepSmoteModel, PairSelection};
use crate::metrics::{aggregate, Aggregate, FoldMetrics, Metric};
use crate::nn::{MlpModel, Optimizer, TrainConfig};
use crate::rng::{derive_seed, SeedPart};
use crate::samplers::{adasyn, borderline_smote, smote, SamplerRequest, SamplerWarning};
use crate::stats::{paired_t_test, TTest};
use crate::tree::{train_tree, TreeParams};
use crate::{Error, Result};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "REBALANCE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Smote,
    BorderlineSmote,
    Adasyn,
    Gan,
    DeepSmote,
    DaSmote,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::None,
        Method::Smote,
        Method::BorderlineSmote,
        Method::Adasyn,
        Method::Gan,
        Method::DeepSmote,
        Method::DaSmote,
    ];

    /// Methods tested against every other method for significance.
    pub const PROPOSED: [Method; 2] = [Method::DeepSmote, Method::DaSmote];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Smote => "smote",
            Method::BorderlineSmote => "borderline_smote",
            Method::Adasyn => "adasyn",
            Method::Gan => "gan",
            Method::DeepSmote => "deep_smote",
            Method::DaSmote => "da_smote",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::None => "None",
            Method::Smote => "SMOTE",
            Method::BorderlineSmote => "Borderline SMOTE",
            Method::Adasyn => "ADASYN",
            Method::Gan => "GAN",
            Method::DeepSmote => "Deep SMOTE",
            Method::DaSmote => "DA SMOTE",
        }
    }

    /// Trains a network that is then frozen and reused.
    pub fn is_model_based(self) -> bool {
        matches!(self, Method::Gan | Method::DeepSmote | Method::DaSmote)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetRef {
    Csv {
        path: PathBuf,
        label_column: String,
        positive_label: String,
        #[serde(default)]
        name: Option<String>,
        /// Registry row to validate against and take architectures from;
        /// defaults to a lookup by `name`.
        #[serde(default)]
        registry: Option<String>,
    },
    Synthetic {
        generator: SyntheticKind,
        n_major: usize,
        n_minor: usize,
        #[serde(default)]
        overlap: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        name: Option<String>,
    },
    /// Gaussian data with the registry row's exact shape.
    Standin {
        registry: String,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub data: Dataset<f64>,
    pub registry: Option<&'static RegistryEntry>,
}

fn lookup(name: &str) -> Result<&'static RegistryEntry> {
    registry_entry(name).ok_or_else(|| Error::Config(format!("no registry entry named {name:?}")))
}

impl DatasetRef {
    pub fn load(&self) -> Result<LoadedDataset> {
        match self {
            DatasetRef::Csv {
                path,
                label_column,
                positive_label,
                name,
                registry,
            } => {
                let mut data = load_csv(path, label_column, positive_label)?;
                if let Some(name) = name {
                    data.name = name.clone();
                }
                let registry = match registry {
                    Some(r) => Some(lookup(r)?),
                    None => registry_entry(&data.name),
                };
                Ok(LoadedDataset { data, registry })
            }
            DatasetRef::Synthetic {
                generator,
                n_major,
                n_minor,
                overlap,
                seed,
                name,
            } => {
                let mut data = make_synthetic(*generator, *n_major, *n_minor, *overlap, *seed)?;
                if let Some(name) = name {
                    data.name = name.clone();
                }
                Ok(LoadedDataset { data, registry: None })
            }
            DatasetRef::Standin { registry, seed } => {
                let entry = lookup(registry)?;
                Ok(LoadedDataset {
                    data: registry_standin(entry, *seed)?,
                    registry: Some(entry),
                })
            }
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let DatasetRef::Csv { path, .. } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborParams {
    pub k_neighbors: usize,
    /// Borderline only: neighbourhood size for the DANGER test.
    pub m_neighbors: usize,
}

impl Default for NeighborParams {
    fn default() -> Self {
        Self {
            k_neighbors: crate::samplers::DEFAULT_K_NEIGHBORS,
            m_neighbors: crate::samplers::DEFAULT_M_NEIGHBORS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepSmoteParams {
    /// Overrides the per-dataset hidden widths.
    pub hidden: Option<Vec<usize>>,
    /// Overrides the per-dataset training-pair count.
    pub t_count: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub pair_selection: PairSelection,
}

impl Default for DeepSmoteParams {
    fn default() -> Self {
        Self {
            hidden: None,
            t_count: None,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            pair_selection: PairSelection::Global,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialParams {
    /// Overrides the per-dataset generator hidden widths.
    pub gen_hidden: Option<Vec<usize>>,
    /// Overrides the per-dataset discriminator hidden widths.
    pub disc_hidden: Option<Vec<usize>>,
    /// GAN only: latent width (defaults to the registry value or `n`).
    pub noise_dim: Option<usize>,
    pub iterations: usize,
    pub disc_steps_k: usize,
    pub minibatch_m: usize,
    pub gen_loss_mode: GenLossMode,
    pub gen_learning_rate: f64,
    pub disc_learning_rate: f64,
    pub optimizer: Optimizer,
    pub label_smoothing: f64,
}

impl Default for AdversarialParams {
    fn default() -> Self {
        Self {
            gen_hidden: None,
            disc_hidden: None,
            noise_dim: None,
            iterations: 2000,
            disc_steps_k: 5,
            minibatch_m: 32,
            gen_loss_mode: GenLossMode::NonSaturating,
            // A slow generator keeps samples from running off along rays the
            // small discriminators cannot bound.
            gen_learning_rate: 5e-5,
            disc_learning_rate: 1e-3,
            optimizer: Optimizer::Adam {
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
            },
            label_smoothing: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodParams {
    pub smote: NeighborParams,
    pub borderline_smote: NeighborParams,
    pub adasyn: NeighborParams,
    pub deep_smote: DeepSmoteParams,
    pub da_smote: AdversarialParams,
    pub gan: AdversarialParams,
    pub tree: TreeParams,
}

fn default_k_folds() -> usize {
    10
}

fn default_repeats() -> usize {
    3
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("bench-out")
}

fn default_audit() -> bool {
    cfg!(debug_assertions)
}

fn default_alpha() -> f64 {
    0.05
}

/// A benchmark run, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub datasets: Vec<DatasetRef>,
    pub methods: Vec<Method>,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default)]
    pub params: MethodParams,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker count; `REBALANCE_THREADS` takes precedence.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Index-audit every job (on by default in debug builds).
    #[serde(default = "default_audit")]
    pub audit: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl RunConfig {
    pub fn new(datasets: Vec<DatasetRef>, methods: Vec<Method>, global_seed: u64) -> Self {
        Self {
            datasets,
            methods,
            k_folds: default_k_folds(),
            repeats: default_repeats(),
            global_seed,
            params: MethodParams::default(),
            output_dir: default_output_dir(),
            threads: None,
            audit: default_audit(),
            alpha: default_alpha(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative CSV paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.datasets.iter_mut().for_each(|d| d.resolve_paths(base));
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be non-empty".into()));
        }
        if self.k_folds < 2 {
            return Err(Error::Config(format!("k_folds must be at least 2, got {}", self.k_folds)));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("methods contain duplicates".into()));
        }
        Ok(())
    }

    /// Methods in canonical order.
    pub fn ordered_methods(&self) -> Vec<Method> {
        Method::ALL.into_iter().filter(|m| self.methods.contains(m)).collect()
    }

    fn worker_count(&self) -> Result<Option<usize>> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
            },
            Err(_) => Ok(self.threads),
        }
    }
}

/// Network shapes for one dataset, input width first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Architectures {
    pub deep_smote_hidden: Vec<usize>,
    pub deep_smote_t_count: usize,
    pub da_smote_gen: Vec<usize>,
    pub da_smote_disc: Vec<usize>,
    pub gan_gen: Vec<usize>,
    pub gan_disc: Vec<usize>,
}

fn hidden_of(widths: &[usize]) -> Vec<usize> {
    widths[1..widths.len() - 1].to_vec()
}

fn framed(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// Registry tables when available, else widths scaled from `n`. Hidden
/// widths are kept and the input/output widths set from the actual data, so
/// a mirror with a different attribute count still gets valid networks.
pub fn resolve_architectures(n: usize, registry: Option<&RegistryEntry>, params: &MethodParams) -> Architectures {
    let (deep_hidden, t_count, da_gen, da_disc, gan_gen, gan_disc, noise) = match registry {
        Some(e) => (
            e.deep_smote_hidden.to_vec(),
            e.deep_smote_t_count,
            hidden_of(e.da_smote_gen),
            hidden_of(e.da_smote_disc),
            hidden_of(e.gan_gen),
            hidden_of(e.gan_disc),
            if e.gan_gen[0] == e.expected_attributes { n } else { e.gan_gen[0] },
        ),
        None => (
            vec![(4 * n).max(8), (2 * n).max(4)],
            2000,
            vec![(8 * n).max(16), (4 * n).max(8)],
            vec![(4 * n).max(8), (2 * n).max(4)],
            vec![(8 * n).max(16), (4 * n).max(8)],
            vec![(4 * n).max(8), (2 * n).max(4)],
            n,
        ),
    };
    let pick = |o: &Option<Vec<usize>>, d: Vec<usize>| o.clone().unwrap_or(d);
    Architectures {
        deep_smote_hidden: pick(&params.deep_smote.hidden, deep_hidden),
        deep_smote_t_count: params.deep_smote.t_count.unwrap_or(t_count),
        da_smote_gen: framed(2 * n, &pick(&params.da_smote.gen_hidden, da_gen), n),
        da_smote_disc: framed(n, &pick(&params.da_smote.disc_hidden, da_disc), 1),
        gan_gen: framed(params.gan.noise_dim.unwrap_or(noise), &pick(&params.gan.gen_hidden, gan_gen), n),
        gan_disc: framed(n, &pick(&params.gan.disc_hidden, gan_disc), 1),
    }
}

fn adversarial_config(p: &AdversarialParams, gen: &[usize], disc: &[usize], seed: u64) -> AdversarialConfig {
    AdversarialConfig {
        disc_steps_k: p.disc_steps_k,
        minibatch_m: p.minibatch_m,
        gen_loss_mode: p.gen_loss_mode,
        gen_learning_rate: p.gen_learning_rate,
        disc_learning_rate: p.disc_learning_rate,
        optimizer: p.optimizer,
        label_smoothing: p.label_smoothing,
        ..AdversarialConfig::from_widths(gen, disc, p.iterations, seed)
    }
}

/// An over-sampler ready to synthesize. Model-based variants hold a frozen
/// network; the classic ones only their neighbour settings.
#[derive(Debug, Clone)]
pub enum FittedSampler {
    None,
    Smote(NeighborParams),
    BorderlineSmote(NeighborParams),
    Adasyn(NeighborParams),
    Gan(MlpModel<f64>),
    DeepSmote(DeepSmoteModel<f64>),
    DaSmote(MlpModel<f64>),
}

/// Trains whatever `method` needs on the scaled training minority.
pub fn fit_sampler(
    method: Method,
    minority: ArrayView2<f64>,
    arch: &Architectures,
    params: &MethodParams,
    seed: u64,
) -> Result<FittedSampler> {
    Ok(match method {
        Method::None => FittedSampler::None,
        Method::Smote => FittedSampler::Smote(params.smote),
        Method::BorderlineSmote => FittedSampler::BorderlineSmote(params.borderline_smote),
        Method::Adasyn => FittedSampler::Adasyn(params.adasyn),
        Method::DeepSmote => {
            let p = &params.deep_smote;
            let cfg = DeepSmoteConfig {
                t_count: arch.deep_smote_t_count,
                hidden: arch.deep_smote_hidden.clone(),
                train: TrainConfig {
                    optimizer: p.optimizer,
                    ..TrainConfig::new(p.epochs, p.batch_size, p.learning_rate)
                },
                pair_selection: p.pair_selection,
                seed,
            };
            FittedSampler::DeepSmote(train_deep_smote(minority, &cfg)?)
        }
        Method::DaSmote => {
            let cfg = adversarial_config(&params.da_smote, &arch.da_smote_gen, &arch.da_smote_disc, seed);
            FittedSampler::DaSmote(train_da_smote(minority, &cfg)?)
        }
        Method::Gan => {
            let cfg = adversarial_config(&params.gan, &arch.gan_gen, &arch.gan_disc, seed);
            FittedSampler::Gan(train_gan_baseline(minority, &cfg, arch.gan_gen[0])?)
        }
    })
}

impl FittedSampler {
    /// Exactly `deficit_d` synthetic rows (none for [`FittedSampler::None`]).
    pub fn synthesize(
        &self,
        minority: ArrayView2<f64>,
        majority: ArrayView2<f64>,
        deficit_d: usize,
        seed: u64,
    ) -> Result<(Array2<f64>, Vec<SamplerWarning>)> {
        let w = minority.nrows();
        let request = |p: &NeighborParams| SamplerRequest {
            deficit_d,
            k_neighbors: p.k_neighbors,
            ..SamplerRequest::balancing(minority, majority, seed)
        };
        let classic = |out: crate::samplers::SamplerOutput<f64>| (out.synthetic, out.warnings);
        let tail = |merged: Array2<f64>| (merged.slice_move(ndarray::s![w.., ..]), Vec::new());
        Ok(match self {
            FittedSampler::None => (Array2::zeros((0, minority.ncols())), Vec::new()),
            FittedSampler::Smote(p) => classic(smote(&request(p))?),
            FittedSampler::BorderlineSmote(p) => classic(borderline_smote(&request(p), p.m_neighbors)?),
            FittedSampler::Adasyn(p) => classic(adasyn(&request(p))?),
            FittedSampler::DeepSmote(model) => tail(oversample_deep_smote(minority, model, deficit_d, seed)?),
            FittedSampler::DaSmote(gen) => tail(oversample_da_smote(minority, gen, deficit_d, seed)?),
            FittedSampler::Gan(gen) => tail(oversample_gan(minority, gen, deficit_d, seed)?),
        })
    }
}

/// Row indices that reached each training stage of one job.
#[derive(Debug, Clone, Default)]
struct IndexTrail {
    scaler: Vec<usize>,
    sampler: Vec<usize>,
    trainer: Vec<usize>,
}

/// Outcome of the leakage audit for one job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub dataset: String,
    pub method: Method,
    pub repeat: usize,
    pub fold: usize,
    pub test_rows: usize,
    pub scaler_rows: usize,
    pub sampler_rows: usize,
    pub trainer_rows: usize,
    /// Test rows found in any training stage; always 0 in a recorded audit.
    pub overlap: usize,
}

impl IndexTrail {
    fn audit(&self, key: &JobKey, test: &[usize]) -> Result<AuditRecord> {
        let hits = |stage: &[usize]| stage.iter().filter(|i| test.binary_search(i).is_ok()).count();
        let overlap = hits(&self.scaler) + hits(&self.sampler) + hits(&self.trainer);
        if overlap > 0 {
            return Err(Error::Leakage(format!(
                "{overlap} test rows reached training stages in {}/{} repeat {} fold {}",
                key.dataset, key.method, key.repeat, key.fold
            )));
        }
        Ok(AuditRecord {
            dataset: key.dataset.clone(),
            method: key.method,
            repeat: key.repeat,
            fold: key.fold,
            test_rows: test.len(),
            scaler_rows: self.scaler.len(),
            sampler_rows: self.sampler.len(),
            trainer_rows: self.trainer.len(),
            overlap,
        })
    }
}

/// Scaled views of one split. Only training rows inform the scaler.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub minority: Array2<f64>,
    pub majority: Array2<f64>,
    pub test_features: Array2<f64>,
    pub test_labels: Vec<u8>,
    minority_rows: Vec<usize>,
    majority_rows: Vec<usize>,
}

impl FoldData {
    pub fn prepare(ds: &Dataset<f64>, fold: &Fold) -> Result<Self> {
        Self::prepare_traced(ds, fold, &mut IndexTrail::default())
    }

    fn prepare_traced(ds: &Dataset<f64>, fold: &Fold, trail: &mut IndexTrail) -> Result<Self> {
        let train = ds.features.select(Axis(0), &fold.train);
        trail.scaler = fold.train.clone();
        let scaler = MinMaxScaler::fit(train.view())?;
        let scaled = scaler.transform(train.view())?;
        let (mut min_local, mut maj_local) = (Vec::new(), Vec::new());
        for (pos, &row) in fold.train.iter().enumerate() {
            if ds.labels[row] == 1 {
                min_local.push(pos);
            } else {
                maj_local.push(pos);
            }
        }
        Ok(Self {
            minority: scaled.select(Axis(0), &min_local),
            majority: scaled.select(Axis(0), &maj_local),
            test_features: scaler.transform(ds.features.select(Axis(0), &fold.test).view())?,
            test_labels: fold.test.iter().map(|&i| ds.labels[i]).collect(),
            minority_rows: min_local.iter().map(|&p| fold.train[p]).collect(),
            majority_rows: maj_local.iter().map(|&p| fold.train[p]).collect(),
        })
    }

    pub fn deficit(&self) -> usize {
        self.majority.nrows().saturating_sub(self.minority.nrows())
    }
}

/// Identity of one benchmark cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobKey {
    pub dataset: String,
    pub method: Method,
    pub repeat: usize,
    pub fold: usize,
}

impl JobKey {
    fn seed(&self, root: u64) -> u64 {
        derive_seed(
            root,
            &[
                SeedPart::Str(&self.dataset),
                self.repeat.into(),
                self.fold.into(),
                SeedPart::Str(self.method.name()),
            ],
        )
    }

    fn wrap(&self, e: Error) -> Error {
        Error::Job {
            dataset: self.dataset.clone(),
            method: self.method.name().to_owned(),
            repeat: self.repeat,
            fold: self.fold,
            source: Box::new(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub key: JobKey,
    pub metrics: FoldMetrics,
    /// Class counts of the training set the tree saw.
    pub train_pos: usize,
    pub train_neg: usize,
    pub synthetic: usize,
    pub warnings: Vec<SamplerWarning>,
    /// Hash of the synthetic rows.
    pub fingerprint: String,
}

/// Hex SHA-256 prefix of a matrix's shape and little-endian values.
pub fn fingerprint(m: &Array2<f64>) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        h.update(v.to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Balances, trains and scores one fold with an already fitted sampler.
fn score_fold(
    key: &JobKey,
    data: &FoldData,
    sampler: &FittedSampler,
    tree: &TreeParams,
    sample_seed: u64,
    trail: &mut IndexTrail,
) -> Result<JobResult> {
    trail.sampler = data.minority_rows.iter().chain(&data.majority_rows).copied().collect();
    let (synthetic, warnings) = sampler.synthesize(data.minority.view(), data.majority.view(), data.deficit(), sample_seed)?;
    let features = concatenate(Axis(0), &[data.majority.view(), data.minority.view(), synthetic.view()]).expect("matching widths");
    let mut labels = vec![0u8; data.majority.nrows()];
    labels.resize(features.nrows(), 1);
    trail.trainer = data.majority_rows.iter().chain(&data.minority_rows).copied().collect();
    let train_pos = data.minority.nrows() + synthetic.nrows();
    let train_neg = data.majority.nrows();
    if key.method != Method::None && train_pos != train_neg {
        return Err(Error::Input(format!("balance violated: {train_pos} positive vs {train_neg} negative")));
    }
    let model = train_tree(features.view(), &labels, tree)?;
    let proba = model.predict_proba_batch(data.test_features.view());
    let metrics = FoldMetrics::evaluate(&data.test_labels, &proba, key.fold, key.repeat).map_err(|e| match e {
        Error::UndefinedAuc => Error::Stratification("test fold holds a single class".into()),
        other => other,
    })?;
    Ok(JobResult {
        key: key.clone(),
        metrics,
        train_pos,
        train_neg,
        synthetic: synthetic.nrows(),
        warnings,
        fingerprint: fingerprint(&synthetic),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_job(
    key: &JobKey,
    ds: &Dataset<f64>,
    fold: &Fold,
    arch: &Architectures,
    params: &MethodParams,
    root_seed: u64,
    audit: bool,
) -> Result<(JobResult, Option<AuditRecord>)> {
    let seed = key.seed(root_seed);
    let mut trail = IndexTrail::default();
    let data = FoldData::prepare_traced(ds, fold, &mut trail)?;
    let sampler = fit_sampler(key.method, data.minority.view(), arch, params, derive_seed(seed, &["fit".into()]))?;
    let result = score_fold(key, &data, &sampler, &params.tree, derive_seed(seed, &["sample".into()]), &mut trail)?;
    let record = if audit { Some(trail.audit(key, &fold.test)?) } else { None };
    Ok((result, record))
}

/// Per-dataset view of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetInfo {
    pub name: String,
    pub rows: usize,
    pub features: usize,
    pub positives: usize,
    pub negatives: usize,
    pub flipped: bool,
    pub architectures: Architectures,
    pub validation: Option<ValidationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub aggregate: Aggregate,
}

/// Paired t-test of a proposed method against one other method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub proposed: Method,
    pub baseline: Method,
    pub metric: Metric,
    pub test: TTest,
    /// `p < alpha` and the mean difference favours the proposed method.
    pub outperforms: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub dataset: DatasetInfo,
    pub methods: Vec<MethodSummary>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub global_seed: u64,
    pub k_folds: usize,
    pub repeats: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    /// Canonical order: dataset (config order), repeat, fold, method.
    pub results: Vec<JobResult>,
    pub summaries: Vec<DatasetSummary>,
    pub audits: Vec<AuditRecord>,
}

fn split_seed(root: u64, dataset: &str, repeat: usize) -> u64 {
    derive_seed(root, &["split".into(), SeedPart::Str(dataset), repeat.into()])
}

fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs the full grid. The result is independent of the worker count.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let methods = cfg.ordered_methods();
    let loaded: Vec<LoadedDataset> = cfg.datasets.iter().map(DatasetRef::load).collect::<Result<_>>()?;
    let mut names: Vec<&str> = loaded.iter().map(|l| l.data.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("dataset names must be unique".into()));
    }
    let mut infos = Vec::new();
    let mut splits: Vec<Vec<Vec<Fold>>> = Vec::new();
    for l in &loaded {
        let ds = &l.data;
        let per_repeat = (0..cfg.repeats)
            .map(|r| stratified_kfold(&ds.labels, cfg.k_folds, split_seed(cfg.global_seed, &ds.name, r)))
            .collect::<Result<Vec<_>>>()?;
        splits.push(per_repeat);
        infos.push(DatasetInfo {
            name: ds.name.clone(),
            rows: ds.len(),
            features: ds.n_features(),
            positives: ds.positives(),
            negatives: ds.negatives(),
            flipped: ds.flipped,
            architectures: resolve_architectures(ds.n_features(), l.registry, &cfg.params),
            validation: l.registry.map(|e| validate_against_registry(ds, e)),
        });
    }

    let mut jobs = Vec::new();
    for (d, l) in loaded.iter().enumerate() {
        for r in 0..cfg.repeats {
            for f in 0..cfg.k_folds {
                for &method in &methods {
                    jobs.push((
                        d,
                        JobKey {
                            dataset: l.data.name.clone(),
                            method,
                            repeat: r,
                            fold: f,
                        },
                    ));
                }
            }
        }
    }
    log::info!("running {} jobs over {} datasets", jobs.len(), loaded.len());
    let outcomes: Vec<Result<(JobResult, Option<AuditRecord>)>> = with_pool(cfg.worker_count()?, || {
        jobs.par_iter()
            .map(|(d, key)| {
                run_job(key, &loaded[*d].data, &splits[*d][key.repeat][key.fold], &infos[*d].architectures, &cfg.params, cfg.global_seed, cfg.audit)
                    .map_err(|e| key.wrap(e))
            })
            .collect()
    })?;
    let mut results = Vec::with_capacity(outcomes.len());
    let mut audits = Vec::new();
    for outcome in outcomes {
        let (result, audit) = outcome?;
        results.push(result);
        audits.extend(audit);
    }
    let summaries = infos
        .into_iter()
        .map(|info| summarize_dataset(info, &results, &methods, cfg.alpha))
        .collect::<Result<_>>()?;
    Ok(BenchmarkReport {
        global_seed: cfg.global_seed,
        k_folds: cfg.k_folds,
        repeats: cfg.repeats,
        alpha: cfg.alpha,
        methods,
        results,
        summaries,
        audits,
    })
}

fn summarize_dataset(info: DatasetInfo, results: &[JobResult], methods: &[Method], alpha: f64) -> Result<DatasetSummary> {
    let of = |m: Method| -> Vec<FoldMetrics> {
        results.iter().filter(|r| r.key.dataset == info.name && r.key.method == m).map(|r| r.metrics).collect()
    };
    let mut summaries = Vec::new();
    for &m in methods {
        let rows = of(m);
        let aggregate = aggregate(&rows).ok_or_else(|| Error::Input(format!("no results for {}/{m}", info.name)))?;
        summaries.push(MethodSummary { method: m, aggregate });
    }
    let mut comparisons = Vec::new();
    for &proposed in Method::PROPOSED.iter().filter(|p| methods.contains(p)) {
        let a = of(proposed);
        for &baseline in methods.iter().filter(|&&b| b != proposed) {
            let b = of(baseline);
            for metric in Metric::ALL {
                let xs: Vec<f64> = a.iter().map(|f| f.get(metric)).collect();
                let ys: Vec<f64> = b.iter().map(|f| f.get(metric)).collect();
                let test = paired_t_test(&xs, &ys, alpha)?;
                comparisons.push(Comparison {
                    proposed,
                    baseline,
                    metric,
                    outperforms: test.significant && test.mean_diff > 0.0,
                    test,
                });
            }
        }
    }
    Ok(DatasetSummary {
        dataset: info,
        methods: summaries,
        comparisons,
    })
}

impl BenchmarkReport {
    pub fn summary(&self, dataset: &str, method: Method) -> Option<&Aggregate> {
        self.summaries
            .iter()
            .find(|s| s.dataset.name == dataset)?
            .methods
            .iter()
            .find(|m| m.method == method)
            .map(|m| &m.aggregate)
    }

    pub fn results_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "dataset", "method", "repeat", "fold", "precision", "recall", "f1", "auc", "train_pos", "train_neg", "synthetic",
        ])?;
        for r in &self.results {
            let m = &r.metrics;
            w.write_record([
                r.key.dataset.clone(),
                r.key.method.name().to_owned(),
                r.key.repeat.to_string(),
                r.key.fold.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                m.auc.to_string(),
                r.train_pos.to_string(),
                r.train_neg.to_string(),
                r.synthetic.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct View<'a> {
            global_seed: u64,
            k_folds: usize,
            repeats: usize,
            alpha: f64,
            methods: &'a [Method],
            datasets: &'a [DatasetSummary],
            audited_jobs: usize,
        }
        let view = View {
            global_seed: self.global_seed,
            k_folds: self.k_folds,
            repeats: self.repeats,
            alpha: self.alpha,
            methods: &self.methods,
            datasets: &self.summaries,
            audited_jobs: self.audits.len(),
        };
        Ok(serde_json::to_string_pretty(&view)? + "\n")
    }

    pub fn summary_markdown(&self) -> String {
        let std_cell = |s: &crate::metrics::Summary| s.std.map_or("n/a".to_owned(), |v| format!("{v:.4}"));
        let mut out = String::new();
        let _ = writeln!(out, "# Benchmark summary\n");
        let _ = writeln!(
            out,
            "Global seed {}, {}-fold cross-validation repeated {} times, alpha {}.\n",
            self.global_seed, self.k_folds, self.repeats, self.alpha
        );
        let _ = writeln!(out, "## Mean (standard deviation)\n");
        for s in &self.summaries {
            let d = &s.dataset;
            let _ = writeln!(out, "### {} ({} rows, {} features, {} positive)\n", d.name, d.rows, d.features, d.positives);
            if let Some(v) = d.validation.as_ref().filter(|v| !v.is_clean()) {
                let _ = writeln!(out, "Registry warnings ({}): {}\n", v.registry, v.warnings.join("; "));
            }
            let _ = writeln!(out, "| Method | Precision | Recall | F1 | AUC |");
            let _ = writeln!(out, "|---|---|---|---|---|");
            for m in &s.methods {
                let a = &m.aggregate;
                let cell = |x: &crate::metrics::Summary| format!("{:.4} ({})", x.mean, std_cell(x));
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    m.method.label(),
                    cell(&a.precision),
                    cell(&a.recall),
                    cell(&a.f1),
                    cell(&a.auc)
                );
            }
            out.push('\n');
        }
        let _ = writeln!(out, "## Standard deviations\n");
        let _ = writeln!(out, "| Dataset | Method | F1 | AUC |");
        let _ = writeln!(out, "|---|---|---|---|");
        for s in &self.summaries {
            for (i, m) in s.methods.iter().enumerate() {
                let name = if i == 0 { s.dataset.name.as_str() } else { "" };
                let _ = writeln!(out, "| {name} | {} | {} | {} |", m.method.label(), std_cell(&m.aggregate.f1), std_cell(&m.aggregate.auc));
            }
        }
        out.push('\n');
        let proposed: Vec<Method> = Method::PROPOSED.into_iter().filter(|p| self.methods.contains(p)).collect();
        if !proposed.is_empty() {
            let _ = writeln!(out, "## Significance\n");
            let _ = writeln!(
                out,
                "A mark means the proposed method significantly outperforms the baseline (paired t-test over folds and repeats, p < {}).\n",
                self.alpha
            );
            let mut header = String::from("| Dataset | Baseline |");
            let mut rule = String::from("|---|---|");
            for p in &proposed {
                for metric in Metric::ALL {
                    let _ = write!(header, " {} {} |", p.label(), metric.name());
                    rule.push_str("---|");
                }
            }
            let _ = writeln!(out, "{header}\n{rule}");
            for s in &self.summaries {
                for &baseline in &self.methods {
                    let mut row = format!("| {} | {} |", s.dataset.name, baseline.label());
                    for &p in &proposed {
                        for metric in Metric::ALL {
                            let mark = s
                                .comparisons
                                .iter()
                                .find(|c| c.proposed == p && c.baseline == baseline && c.metric == metric)
                                .map_or("", |c| if c.outperforms { "■" } else { "·" });
                            let _ = write!(row, " {mark} |");
                        }
                    }
                    let _ = writeln!(out, "{row}");
                }
            }
        }
        out
    }
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub results_csv: PathBuf,
    pub summary_json: PathBuf,
    pub summary_md: PathBuf,
}

pub fn emit_report(report: &BenchmarkReport, dir: impl AsRef<Path>) -> Result<ReportFiles> {
    if report.results.is_empty() {
        return Err(Error::Input("no results to report".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let files = ReportFiles {
        results_csv: dir.join("results.csv"),
        summary_json: dir.join("summary.json"),
        summary_md: dir.join("summary.md"),
    };
    std::fs::write(&files.results_csv, report.results_csv()?)?;
    std::fs::write(&files.summary_json, report.summary_json()?)?;
    std::fs::write(&files.summary_md, report.summary_markdown())?;
    Ok(files)
}

/// One re-run of the protocol under a single over-sampling seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRun {
    pub seed: u64,
    /// Fold-and-repeat means in [`Metric::ALL`] order.
    pub means: [f64; 4],
    /// Hash over every fold's synthetic rows.
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodStability {
    pub method: Method,
    pub runs: Vec<StabilityRun>,
    /// Sample standard deviation across runs, in [`Metric::ALL`] order.
    pub dispersion: [f64; 4],
    /// Distinct synthetic fingerprints across runs.
    pub distinct_outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodStability>,
}

/// Re-runs the fixed cross-validation protocol once per seed. Splits come
/// from the config's global seed; model-based samplers are trained once per
/// fold and frozen, so across runs only the over-sampling seed changes.
pub fn stability_report(cfg: &RunConfig, dataset: &DatasetRef, seeds: &[u64]) -> Result<StabilityReport> {
    cfg.validate()?;
    if seeds.len() < 2 {
        return Err(Error::Config("stability needs at least two seeds".into()));
    }
    let loaded = dataset.load()?;
    let ds = &loaded.data;
    let arch = resolve_architectures(ds.n_features(), loaded.registry, &cfg.params);
    let methods = cfg.ordered_methods();
    let mut folds = Vec::new();
    for r in 0..cfg.repeats {
        for (f, fold) in stratified_kfold(&ds.labels, cfg.k_folds, split_seed(cfg.global_seed, &ds.name, r))?.into_iter().enumerate() {
            folds.push((r, f, fold));
        }
    }
    let threads = cfg.worker_count()?;
    let mut out = Vec::new();
    for method in methods {
        // one frozen sampler per fold, shared by every run
        let fitted: Vec<(JobKey, FoldData, FittedSampler)> = with_pool(threads, || {
            folds
                .par_iter()
                .map(|(r, f, fold)| {
                    let key = JobKey {
                        dataset: ds.name.clone(),
                        method,
                        repeat: *r,
                        fold: *f,
                    };
                    let data = FoldData::prepare(ds, fold).map_err(|e| key.wrap(e))?;
                    let fit_seed = derive_seed(key.seed(cfg.global_seed), &["fit".into()]);
                    let sampler = fit_sampler(method, data.minority.view(), &arch, &cfg.params, fit_seed).map_err(|e| key.wrap(e))?;
                    Ok((key, data, sampler))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let runs: Vec<StabilityRun> = with_pool(threads, || {
            seeds
                .par_iter()
                .map(|&seed| {
                    let mut per_fold = Vec::with_capacity(fitted.len());
                    let mut hash = Sha256::new();
                    for (key, data, sampler) in &fitted {
                        let sample_seed = derive_seed(seed, &[key.repeat.into(), key.fold.into(), SeedPart::Str(method.name())]);
                        let r = score_fold(key, data, sampler, &cfg.params.tree, sample_seed, &mut IndexTrail::default()).map_err(|e| key.wrap(e))?;
                        hash.update(r.fingerprint.as_bytes());
                        per_fold.push(r.metrics);
                    }
                    let agg = aggregate(&per_fold).expect("at least one fold");
                    Ok(StabilityRun {
                        seed,
                        means: Metric::ALL.map(|m| agg.get(m).mean),
                        fingerprint: hash.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let dispersion = Metric::ALL.map(|m| {
            let i = Metric::ALL.iter().position(|&x| x == m).expect("listed");
            let vals: Vec<f64> = runs.iter().map(|r| r.means[i]).collect();
            crate::metrics::summarize(&vals).and_then(|s| s.std).unwrap_or(0.0)
        });
        let mut prints: Vec<&str> = runs.iter().map(|r| r.fingerprint.as_str()).collect();
        prints.sort_unstable();
        prints.dedup();
        out.push(MethodStability {
            method,
            distinct_outputs: prints.len(),
            runs,
            dispersion,
        });
    }
    Ok(StabilityReport {
        dataset: ds.name.clone(),
        seeds: seeds.to_vec(),
        methods: out,
    })
}

impl StabilityReport {
    pub fn method(&self, m: Method) -> Option<&MethodStability> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn markdown(&self) -> String {
        let mut out = format!("# Stability on {}\n\n{} over-sampling seeds.\n\n", self.dataset, self.seeds.len());
        out.push_str("| Method | Distinct outputs | Precision std | Recall std | F1 std | AUC std |\n|---|---|---|---|---|---|\n");
        for m in &self.methods {
            let d = m.dispersion;
            let _ = writeln!(
                out,
                "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
                m.method.label(),
                m.distinct_outputs,
                d[0],
                d[1],
                d[2],
                d[3]
            );
        }
        out
    }
}

/// Validates one dataset against its registry row (if any).
pub fn validate_dataset(dataset: &DatasetRef) -> Result<(LoadedDataset, Option<ValidationReport>)> {
    let loaded = dataset.load()?;
    let report = loaded.registry.map(|e| validate_against_registry(&loaded.data, e));
    Ok((loaded, report))
}
