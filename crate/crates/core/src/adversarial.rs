//! Adversarial over-samplers sharing one training loop.
//!
//! DA-SMOTE feeds the generator concatenated minority pairs (width `2n`); the
//! plain GAN baseline feeds uniform noise. Everything else (alternating `k`
//! discriminator ascent steps with one generator step) is the same code path,
//! parameterized by a [`LatentSampler`].

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deep_smote::{oversample_with_pair_net, pair_capacity, random_pair};
use crate::nn::{bce_terms, chain_specs, clamp_prob, mlp_init, Activation, Gradients, LayerSpec, MlpModel, Optimizer, OptimizerState};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenLossMode {
    /// Descend mean `log(1 − D(G(z)))`.
    Saturating,
    /// Ascend mean `log D(G(z))`.
    #[default]
    NonSaturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub iterations: usize,
    pub disc_steps_k: usize,
    pub minibatch_m: usize,
    pub gen_arch: Vec<LayerSpec>,
    pub disc_arch: Vec<LayerSpec>,
    pub gen_loss_mode: GenLossMode,
    pub rng_seed: u64,
    pub gen_learning_rate: f64,
    pub disc_learning_rate: f64,
    pub optimizer: Optimizer,
    /// Real-label smoothing; 0 disables it.
    pub label_smoothing: f64,
}

impl AdversarialConfig {
    /// Generator: relu hidden, linear output. Discriminator: leaky_relu(0.2)
    /// hidden, sigmoid output.
    pub fn from_widths(gen_widths: &[usize], disc_widths: &[usize], iterations: usize, rng_seed: u64) -> Self {
        Self {
            iterations,
            disc_steps_k: 1,
            minibatch_m: 32,
            gen_arch: chain_specs(gen_widths, Activation::Relu, Activation::Linear),
            disc_arch: chain_specs(disc_widths, Activation::LEAKY_02, Activation::Sigmoid),
            gen_loss_mode: GenLossMode::default(),
            rng_seed,
            gen_learning_rate: 2e-4,
            disc_learning_rate: 2e-4,
            optimizer: Optimizer::default(),
            label_smoothing: 0.0,
        }
    }

    fn validate(&self, feature_dim: usize, latent_width: usize) -> Result<()> {
        if self.iterations == 0 || self.disc_steps_k == 0 || self.minibatch_m == 0 {
            return Err(Error::Config("iterations, disc_steps_k and minibatch_m must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return Err(Error::Config(format!("label_smoothing {} outside [0, 0.5)", self.label_smoothing)));
        }
        for lr in [self.gen_learning_rate, self.disc_learning_rate] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate {lr} must be positive")));
            }
        }
        let (gen_in, gen_out) = arch_io(&self.gen_arch, "generator")?;
        let (disc_in, disc_out) = arch_io(&self.disc_arch, "discriminator")?;
        let check = |context, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension { context, expected, got })
            }
        };
        check("generator input (latent width)", latent_width, gen_in)?;
        check("generator output (feature width)", feature_dim, gen_out)?;
        check("discriminator input (feature width)", feature_dim, disc_in)?;
        check("discriminator output", 1, disc_out)
    }
}

fn arch_io(arch: &[LayerSpec], name: &str) -> Result<(usize, usize)> {
    match (arch.first(), arch.last()) {
        (Some(first), Some(last)) => Ok((first.input_width, last.output_width)),
        _ => Err(Error::Config(format!("{name} architecture is empty"))),
    }
}

/// Source of generator inputs.
pub trait LatentSampler<T: Scalar> {
    fn width(&self) -> usize;
    /// `m` latent rows.
    fn sample(&mut self, m: usize, rng: &mut SeededRng) -> Array2<T>;
    /// Distinct latent values available, used to cap the minibatch.
    fn capacity(&self) -> usize {
        usize::MAX
    }
}

/// Concatenated random minority pairs.
pub struct PairLatent<'a, T> {
    minority: ArrayView2<'a, T>,
}

impl<'a, T: Scalar> PairLatent<'a, T> {
    pub fn new(minority: ArrayView2<'a, T>) -> Self {
        Self { minority }
    }
}

impl<T: Scalar> LatentSampler<T> for PairLatent<'_, T> {
    fn width(&self) -> usize {
        2 * self.minority.ncols()
    }

    fn sample(&mut self, m: usize, rng: &mut SeededRng) -> Array2<T> {
        let (w, n) = self.minority.dim();
        let mut out = Array2::zeros((m, 2 * n));
        for mut row in out.outer_iter_mut() {
            let (s, t) = random_pair(w, rng);
            for j in 0..n {
                row[j] = self.minority[[s, j]];
                row[n + j] = self.minority[[t, j]];
            }
        }
        out
    }

    fn capacity(&self) -> usize {
        pair_capacity(self.minority.nrows())
    }
}

/// Uniform noise in `[-1, 1]^dim`.
pub struct NoiseLatent {
    pub dim: usize,
}

impl<T: Scalar> LatentSampler<T> for NoiseLatent {
    fn width(&self) -> usize {
        self.dim
    }

    fn sample(&mut self, m: usize, rng: &mut SeededRng) -> Array2<T> {
        Array2::from_shape_simple_fn((m, self.dim), || T::lit(rng.random::<f64>() * 2.0 - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats<T> {
    /// `mean log D(x) + mean log(1 − D(G(z)))` at the last discriminator step.
    pub disc_objective: T,
    /// The generator objective of the active loss mode (before its update).
    pub gen_objective: T,
    /// Mean discriminator output on the generator's minibatch.
    pub mean_d_fake: T,
}

#[derive(Debug, Clone)]
pub struct AdversarialOutcome<T> {
    pub generator: MlpModel<T>,
    pub discriminator: MlpModel<T>,
    pub history: Vec<IterationStats<T>>,
}

fn disc_outputs<T: Scalar>(out: &Array2<T>) -> Vec<T> {
    out.column(0).to_vec()
}

/// Discriminator objective `mean log D(real) + mean log(1 − D(fake))`.
pub fn discriminator_objective<T: Scalar>(disc: &MlpModel<T>, real: ArrayView2<T>, fake: ArrayView2<T>) -> Result<T> {
    let pr = disc_outputs(&disc.forward_batch(real)?);
    let pf = disc_outputs(&disc.forward_batch(fake)?);
    Ok(bce_terms(&pr, &pf)?.0)
}

/// Objective and the gradient of its negation (a descent direction for the
/// discriminator's loss), with optional real-label smoothing.
pub fn discriminator_gradients<T: Scalar>(
    disc: &MlpModel<T>,
    real: ArrayView2<T>,
    fake: ArrayView2<T>,
    label_smoothing: f64,
) -> Result<(T, Gradients<T>)> {
    let smooth = T::lit(label_smoothing);
    let real_trace = disc.forward_traced(real)?;
    let fake_trace = disc.forward_traced(fake)?;
    let pr = disc_outputs(real_trace.output());
    let pf = disc_outputs(fake_trace.output());
    let objective = bce_terms(&pr, &pf)?.0;

    let mr = T::from_usize_lossy(pr.len());
    let mf = T::from_usize_lossy(pf.len());
    let real_grad = Array2::from_shape_fn((pr.len(), 1), |(i, _)| {
        let p = clamp_prob(pr[i]);
        -((T::one() - smooth) / p - smooth / (T::one() - p)) / mr
    });
    let fake_grad = Array2::from_shape_fn((pf.len(), 1), |(i, _)| T::one() / (T::one() - clamp_prob(pf[i])) / mf);
    let (mut g, _) = disc.backward(&real_trace, real_grad.view())?;
    let (gf, _) = disc.backward(&fake_trace, fake_grad.view())?;
    for (a, b) in g.weights.iter_mut().zip(gf.weights) {
        *a += &b;
    }
    for (a, b) in g.biases.iter_mut().zip(gf.biases) {
        *a += &b;
    }
    Ok((objective, g))
}

/// Shared adversarial loop.
pub fn train_adversarial<T: Scalar, L: LatentSampler<T> + ?Sized>(
    minority: ArrayView2<T>,
    cfg: &AdversarialConfig,
    latent: &mut L,
) -> Result<AdversarialOutcome<T>> {
    let (w, n) = minority.dim();
    if w < 2 {
        return Err(Error::InsufficientMinority { needed: 2, got: w });
    }
    cfg.validate(n, latent.width())?;
    let mut gen: MlpModel<T> = mlp_init(&cfg.gen_arch, derive_seed(cfg.rng_seed, &["generator".into()]))?;
    let mut disc: MlpModel<T> = mlp_init(&cfg.disc_arch, derive_seed(cfg.rng_seed, &["discriminator".into()]))?;
    let mut gen_opt = OptimizerState::new(cfg.optimizer, &gen);
    let mut disc_opt = OptimizerState::new(cfg.optimizer, &disc);
    let (gen_lr, disc_lr) = (T::lit(cfg.gen_learning_rate), T::lit(cfg.disc_learning_rate));
    let mut rng = seeded(derive_seed(cfg.rng_seed, &["minibatches".into()]));
    let m = cfg.minibatch_m.min(w).min(latent.capacity()).max(1);
    let mut history = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let mut disc_objective = T::zero();
        for _ in 0..cfg.disc_steps_k {
            let z = latent.sample(m, &mut rng);
            let fake = gen.forward_batch(z.view())?;
            let picks = index::sample(&mut rng, w, m).into_vec();
            let real = minority.select(Axis(0), &picks);
            let (obj, grads) = discriminator_gradients(&disc, real.view(), fake.view(), cfg.label_smoothing)?;
            disc_objective = obj;
            disc_opt.apply(&mut disc, &grads, disc_lr);
        }

        let z = latent.sample(m, &mut rng);
        let gen_trace = gen.forward_traced(z.view())?;
        let disc_trace = disc.forward_traced(gen_trace.output().view())?;
        let p = disc_outputs(disc_trace.output());
        let mm = T::from_usize_lossy(m);
        let (gen_objective, out_grad) = match cfg.gen_loss_mode {
            GenLossMode::Saturating => (
                p.iter().map(|&v| (T::one() - clamp_prob(v)).ln()).sum::<T>() / mm,
                Array2::from_shape_fn((m, 1), |(i, _)| -T::one() / (T::one() - clamp_prob(p[i])) / mm),
            ),
            GenLossMode::NonSaturating => (
                p.iter().map(|&v| clamp_prob(v).ln()).sum::<T>() / mm,
                Array2::from_shape_fn((m, 1), |(i, _)| -T::one() / clamp_prob(p[i]) / mm),
            ),
        };
        let (_, fake_grad) = disc.backward(&disc_trace, out_grad.view())?;
        let (gen_grads, _) = gen.backward(&gen_trace, fake_grad.view())?;
        gen_opt.apply(&mut gen, &gen_grads, gen_lr);

        if !gen.is_finite() || !disc.is_finite() || !disc_objective.is_finite() {
            return Err(Error::Divergence { stage: "iteration", step: it });
        }
        history.push(IterationStats {
            disc_objective,
            gen_objective,
            mean_d_fake: p.iter().copied().sum::<T>() / mm,
        });
    }
    Ok(AdversarialOutcome {
        generator: gen,
        discriminator: disc,
        history,
    })
}

/// DA-SMOTE: adversarial training of a pair-conditioned generator.
pub fn train_da_smote<T: Scalar>(minority: ArrayView2<T>, cfg: &AdversarialConfig) -> Result<MlpModel<T>> {
    Ok(train_adversarial(minority, cfg, &mut PairLatent::new(minority))?.generator)
}

/// Plain GAN baseline with `noise_dim`-wide uniform noise latents.
pub fn train_gan_baseline<T: Scalar>(minority: ArrayView2<T>, cfg: &AdversarialConfig, noise_dim: usize) -> Result<MlpModel<T>> {
    if noise_dim == 0 {
        return Err(Error::Config("noise_dim must be at least 1".into()));
    }
    Ok(train_adversarial(minority, cfg, &mut NoiseLatent { dim: noise_dim })?.generator)
}

/// Minority rows followed by `deficit_d` generator outputs on random pairs.
pub fn oversample_da_smote<T: Scalar>(
    minority: ArrayView2<T>,
    generator: &MlpModel<T>,
    deficit_d: usize,
    rng_seed: u64,
) -> Result<Array2<T>> {
    oversample_with_pair_net(minority, generator, deficit_d, rng_seed)
}

/// Minority rows followed by `deficit_d` generator outputs on fresh noise.
pub fn oversample_gan<T: Scalar>(
    minority: ArrayView2<T>,
    generator: &MlpModel<T>,
    deficit_d: usize,
    rng_seed: u64,
) -> Result<Array2<T>> {
    if generator.output_width() != minority.ncols() {
        return Err(Error::Dimension {
            context: "gan generator output vs minority width",
            expected: minority.ncols(),
            got: generator.output_width(),
        });
    }
    if deficit_d == 0 {
        return Ok(minority.to_owned());
    }
    let mut rng = seeded(rng_seed);
    let z: Array2<T> = NoiseLatent { dim: generator.input_width() }.sample(deficit_d, &mut rng);
    let synthetic = generator.forward_batch(z.view())?;
    Ok(concatenate(Axis(0), &[minority, synthetic.view()]).expect("matching widths"))
}

/// `C(w, 2)`: the number of distinct concatenated-pair latents.
pub fn latent_capacity(w: usize) -> Result<usize> {
    if w < 2 {
        return Err(Error::Domain(format!("latent capacity needs w >= 2, got {w}")));
    }
    Ok(pair_capacity(w))
}
