//! Dense feed-forward networks: initialization, forward and reverse passes,
//! losses, and the optimizers used to train every network in the crate.
//!
//! Weights are stored `output_width × input_width`; batches are row-major with
//! one sample per row.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::{Error, Result, Scalar};

/// Discriminator probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Linear,
}

impl Activation {
    pub const LEAKY_02: Activation = Activation::LeakyRelu { slope: 0.2 };

    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::LeakyRelu { slope } => {
                if z > T::zero() {
                    z
                } else {
                    z * T::lit(slope)
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::lit(slope)
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Linear => T::one(),
        }
    }

    fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu { .. })
    }
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        Self {
            input_width,
            output_width,
            activation,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::Config(format!("layer {index} has a zero width")));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !(slope > 0.0 && slope < 1.0) {
                return Err(Error::Config(format!(
                    "layer {index}: leaky_relu slope {slope} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Builds layer specs from a width list `[in, h1, ..., out]`, using `hidden`
/// for every layer but the last.
pub fn chain_specs(widths: &[usize], hidden: Activation, output: Activation) -> Vec<LayerSpec> {
    let n = widths.len().saturating_sub(1);
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::new(w[0], w[1], if i + 1 == n { output } else { hidden }))
        .collect()
}

fn check_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for (i, spec) in specs.iter().enumerate() {
        spec.validate(i)?;
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].output_width != pair[1].input_width {
            return Err(Error::LayerChain {
                first: i,
                second: i + 1,
                produced: pair[0].output_width,
                expected: pair[1].input_width,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

/// A dense network whose layer chain is validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    layers: Vec<Layer<T>>,
    seed: u64,
}

/// Per-layer gradients mirroring the weight and bias shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(model: &MlpModel<T>) -> Self {
        Self {
            weights: model.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: model.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    /// Flattened in the same order as [`MlpModel::params`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.flatten().into_iter().fold(T::zero(), |m, g| m.max(g.abs()))
    }
}

/// Activations recorded during a forward pass, consumed by [`MlpModel::backward`].
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// `acts[0]` is the input batch, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Array2<T>>,
    pre: Vec<Array2<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Array2<T> {
        self.acts.last().expect("trace holds at least the input")
    }
}

/// Initializes a network: weights uniform in `±sqrt(6/fan_in)` for relu
/// layers and `±sqrt(6/(fan_in + fan_out))` otherwise, biases zero.
pub fn mlp_init<T: Scalar>(specs: &[LayerSpec], seed: u64) -> Result<MlpModel<T>> {
    check_chain(specs)?;
    let mut rng = seeded(seed);
    let layers = specs
        .iter()
        .map(|spec| {
            let fan_in = spec.input_width as f64;
            let fan_out = spec.output_width as f64;
            let bound = match spec.activation {
                Activation::Relu => (6.0 / fan_in).sqrt(),
                _ => (6.0 / (fan_in + fan_out)).sqrt(),
            };
            let weights = Array2::from_shape_simple_fn((spec.output_width, spec.input_width), || {
                T::lit((rng.random::<f64>() * 2.0 - 1.0) * bound)
            });
            Layer {
                spec: *spec,
                weights,
                bias: Array1::zeros(spec.output_width),
            }
        })
        .collect();
    Ok(MlpModel { layers, seed })
}

impl<T: Scalar> MlpModel<T> {
    /// Assembles a network from explicit parameters.
    pub fn from_layers(layers: Vec<Layer<T>>, seed: u64) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        check_chain(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.dim() != (l.spec.output_width, l.spec.input_width) || l.bias.len() != l.spec.output_width {
                return Err(Error::Config(format!("layer {i}: parameter shape disagrees with its spec")));
            }
        }
        let model = Self { layers, seed };
        if !model.is_finite() {
            return Err(Error::Config("non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].spec.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_width
    }

    /// Widths `[in, h1, ..., out]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(|l| l.spec.output_width))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    /// Copy of the model with parameters replaced from a flat vector in
    /// [`params`](Self::params) order.
    pub fn with_params(&self, flat: &[T]) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut model = self.clone();
        let mut it = flat.iter().copied();
        for l in &mut model.layers {
            for w in l.weights.iter_mut() {
                *w = it.next().expect("length checked");
            }
            for b in l.bias.iter_mut() {
                *b = it.next().expect("length checked");
            }
        }
        Ok(model)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        let batch = x.insert_axis(Axis(0));
        Ok(self.forward_batch(batch)?.row(0).to_owned())
    }

    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = a.dot(&l.weights.t());
            z += &l.bias;
            let act = l.spec.activation;
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        Ok(a)
    }

    pub fn forward_traced(&self, x: ArrayView2<T>) -> Result<Trace<T>> {
        self.check_input(x.ncols())?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.to_owned());
        for l in &self.layers {
            let mut z = acts.last().expect("non-empty").dot(&l.weights.t());
            z += &l.bias;
            let act = l.spec.activation;
            let a = z.mapv(|v| act.apply(v));
            pre.push(z);
            acts.push(a);
        }
        Ok(Trace { acts, pre })
    }

    /// Reverse pass. `out_grad` holds dLoss/dOutput per sample row; parameter
    /// gradients are summed over rows. Also returns dLoss/dInput per row.
    pub fn backward(&self, trace: &Trace<T>, out_grad: ArrayView2<T>) -> Result<(Gradients<T>, Array2<T>)> {
        let out = trace.output();
        if out_grad.dim() != out.dim() {
            return Err(Error::Dimension {
                context: "output gradient",
                expected: out.ncols(),
                got: out_grad.ncols(),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = out_grad.to_owned();
        for l in (0..self.layers.len()).rev() {
            let act = self.layers[l].spec.activation;
            Zip::from(&mut delta)
                .and(&trace.pre[l])
                .and(&trace.acts[l + 1])
                .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            grads.weights[l] = delta.t().dot(&trace.acts[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.layers[l].weights);
        }
        Ok((grads, delta))
    }

    /// Exact reverse-mode gradient for one sample given dLoss/dOutput.
    pub fn gradient(&self, x: ArrayView1<T>, loss_grad_at_output: ArrayView1<T>) -> Result<Gradients<T>> {
        if loss_grad_at_output.len() != self.output_width() {
            return Err(Error::Dimension {
                context: "output gradient",
                expected: self.output_width(),
                got: loss_grad_at_output.len(),
            });
        }
        let trace = self.forward_traced(x.insert_axis(Axis(0)))?;
        let (grads, _) = self.backward(&trace, loss_grad_at_output.insert_axis(Axis(0)))?;
        Ok(grads)
    }

    /// Smallest |pre-activation| over relu-family units for input `x`, or
    /// `None` if the network has no kinked activations.
    pub fn kink_margin(&self, x: ArrayView1<T>) -> Result<Option<T>> {
        let trace = self.forward_traced(x.insert_axis(Axis(0)))?;
        let mut margin: Option<T> = None;
        for (l, z) in self.layers.iter().zip(&trace.pre) {
            if l.spec.activation.has_kink() {
                for &v in z.iter() {
                    margin = Some(margin.map_or(v.abs(), |m| m.min(v.abs())));
                }
            }
        }
        Ok(margin)
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_width() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.input_width(),
                got: width,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer moments for one model.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    kind: Optimizer,
    step: i32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: Optimizer, model: &MlpModel<T>) -> Self {
        let n = match kind {
            Optimizer::Sgd => 0,
            Optimizer::Adam { .. } => model.param_count(),
        };
        Self {
            kind,
            step: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    /// Applies one descent step along `grads`.
    pub fn apply(&mut self, model: &mut MlpModel<T>, grads: &Gradients<T>, lr: T) {
        self.step += 1;
        let mut idx = 0usize;
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = grads.weights[l].iter().chain(grads.biases[l].iter());
            for (p, &g) in params.zip(gs) {
                match self.kind {
                    Optimizer::Sgd => *p -= lr * g,
                    Optimizer::Adam { beta1, beta2, eps } => {
                        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
                        let m = &mut self.m[idx];
                        let v = &mut self.v[idx];
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        let m_hat = *m / (T::one() - b1.powi(self.step));
                        let v_hat = *v / (T::one() - b2.powi(self.step));
                        *p -= lr * m_hat / (v_hat.sqrt() + T::lit(eps));
                    }
                }
                idx += 1;
            }
        }
    }
}

fn default_batch_size() -> usize {
    32
}

fn default_learning_rate() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub shuffle_seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64) -> Self {
        Self {
            epochs,
            batch_size,
            learning_rate,
            optimizer: Optimizer::default(),
            shuffle_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

/// Mean squared error over every element, and its gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: ArrayView2<T>, target: ArrayView2<T>) -> (T, Array2<T>) {
    let count = T::from_usize_lossy(pred.len().max(1));
    let diff = &pred - &target;
    let loss = diff.iter().map(|&d| d * d).sum::<T>() / count;
    let scale = T::lit(2.0) / count;
    (loss, diff.mapv(|d| d * scale))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: MlpModel<T>,
    pub initial_loss: T,
    /// Mean minibatch loss for each epoch.
    pub epoch_losses: Vec<T>,
    pub final_loss: T,
}

/// Minibatch gradient descent on mean squared error, recording losses.
pub fn fit_mse<T: Scalar>(
    mut model: MlpModel<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView2<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if inputs.nrows() != targets.nrows() {
        return Err(Error::Dimension {
            context: "training rows",
            expected: inputs.nrows(),
            got: targets.nrows(),
        });
    }
    if inputs.nrows() == 0 {
        return Err(Error::Input("no training rows".into()));
    }
    if targets.ncols() != model.output_width() {
        return Err(Error::Dimension {
            context: "training targets",
            expected: model.output_width(),
            got: targets.ncols(),
        });
    }
    let initial_loss = mse_loss(model.forward_batch(inputs)?.view(), targets).0;
    let lr = T::lit(cfg.learning_rate);
    let mut opt = OptimizerState::new(cfg.optimizer, &model);
    let mut rng = seeded(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..inputs.nrows()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = T::zero();
        for chunk in order.chunks(cfg.batch_size) {
            let xb = inputs.select(Axis(0), chunk);
            let yb = targets.select(Axis(0), chunk);
            let trace = model.forward_traced(xb.view())?;
            let (loss, grad) = mse_loss(trace.output().view(), yb.view());
            if !loss.is_finite() {
                return Err(Error::Divergence { stage: "epoch", step: epoch });
            }
            let (grads, _) = model.backward(&trace, grad.view())?;
            opt.apply(&mut model, &grads, lr);
            total += loss * T::from_usize_lossy(chunk.len());
        }
        let mean = total / T::from_usize_lossy(order.len());
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::Divergence { stage: "epoch", step: epoch });
        }
        epoch_losses.push(mean);
    }
    let final_loss = mse_loss(model.forward_batch(inputs)?.view(), targets).0;
    if !final_loss.is_finite() {
        return Err(Error::Divergence { stage: "epoch", step: cfg.epochs });
    }
    Ok(TrainOutcome {
        model,
        initial_loss,
        epoch_losses,
        final_loss,
    })
}

/// Trains `model` on `(inputs, targets)` for `cfg.epochs` passes.
pub fn mse_train<T: Scalar>(
    model: MlpModel<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView2<T>,
    cfg: &TrainConfig,
) -> Result<MlpModel<T>> {
    fit_mse(model, inputs, targets, cfg).map(|o| o.model)
}

#[inline]
pub fn clamp_prob<T: Scalar>(p: T) -> T {
    let eps = T::lit(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

/// Returns `(mean log D(x) + mean log(1 - D(G(z))), mean log(1 - D(G(z))))`
/// after clamping both probability vectors.
pub fn bce_terms<T: Scalar>(d_real: &[T], d_fake: &[T]) -> Result<(T, T)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Input("bce_terms needs non-empty probability vectors".into()));
    }
    let mean = |v: &[T], f: &dyn Fn(T) -> T| v.iter().map(|&p| f(clamp_prob(p))).sum::<T>() / T::from_usize_lossy(v.len());
    let real = mean(d_real, &|p| p.ln());
    let fake = mean(d_fake, &|p| (T::one() - p).ln());
    Ok((real + fake, fake))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub cases: usize,
    pub parameters_checked: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

/// Finite-difference step used by the gradient self-test.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Maximum relative error accepted by the gradient self-test.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Relative error is measured against `max(|analytic|, |numeric|, floor)`.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Compares backprop against central finite differences on `cases` random
/// architectures (up to 3 hidden layers, widths up to 16, mixed activations),
/// each probed at several random inputs.
pub fn gradient_self_test(cases: usize, inputs_per_case: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = seeded(seed);
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for case in 0..cases {
        let hidden = rng.random_range(0..=3usize);
        let mut widths = vec![rng.random_range(1..=16usize)];
        for _ in 0..hidden {
            widths.push(rng.random_range(1..=16usize));
        }
        widths.push(rng.random_range(1..=16usize));
        let hidden_act = match rng.random_range(0..3u8) {
            0 => Activation::Relu,
            1 => Activation::LEAKY_02,
            _ => Activation::Sigmoid,
        };
        let out_act = if rng.random_bool(0.5) { Activation::Linear } else { Activation::Sigmoid };
        let specs = chain_specs(&widths, hidden_act, out_act);
        let base: MlpModel<f64> = mlp_init(&specs, rng.random())?;
        // nonzero biases so every code path carries a bias gradient
        let perturbed: Vec<f64> = base.params().iter().map(|&p| p + 0.1 * (rng.random::<f64>() - 0.5)).collect();
        let model = base.with_params(&perturbed)?;
        let seed_grad: Array1<f64> = Array1::from_shape_simple_fn(model.output_width(), || rng.random::<f64>() * 2.0 - 1.0);

        let mut probes = 0;
        let mut attempts = 0;
        while probes < inputs_per_case {
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::Domain(format!("gradcheck case {case}: no input away from activation kinks")));
            }
            let x: Array1<f64> = Array1::from_shape_simple_fn(model.input_width(), || rng.random::<f64>() * 2.0 - 1.0);
            if model.kink_margin(x.view())?.is_some_and(|m| m < 1e-3) {
                continue;
            }
            probes += 1;
            let analytic = model.gradient(x.view(), seed_grad.view())?.flatten();
            let numeric = crate::oracle::finite_difference_gradient(&model, x.view(), seed_grad.view(), GRADCHECK_STEP)?;
            for (a, n) in analytic.iter().zip(&numeric) {
                max_rel = max_rel.max(relative_error(*a, *n));
            }
            checked += analytic.len();
        }
    }
    Ok(GradCheckReport {
        cases,
        parameters_checked: checked,
        max_relative_error: max_rel,
        tolerance: GRADCHECK_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2, array};

    fn single(weights: Array2<f64>, bias: Array1<f64>, act: Activation) -> MlpModel<f64> {
        let spec = LayerSpec::new(weights.ncols(), weights.nrows(), act);
        MlpModel::from_layers(vec![Layer { spec, weights, bias }], 0).unwrap()
    }

    fn param_bits(m: &MlpModel<f64>) -> Vec<u64> {
        m.params().iter().map(|p| p.to_bits()).collect()
    }

    #[test]
    fn init_is_deterministic() {
        let specs = [LayerSpec::new(18, 9, Activation::Linear)];
        let a: MlpModel<f64> = mlp_init(&specs, 7).unwrap();
        let b: MlpModel<f64> = mlp_init(&specs, 7).unwrap();
        assert_eq!(param_bits(&a), param_bits(&b));
        let c: MlpModel<f64> = mlp_init(&specs, 8).unwrap();
        assert_ne!(param_bits(&a), param_bits(&c));
        assert!(a.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_respects_bounds() {
        let specs = chain_specs(&[10, 20, 5], Activation::Relu, Activation::Linear);
        let m: MlpModel<f64> = mlp_init(&specs, 1).unwrap();
        let he = (6.0f64 / 10.0).sqrt();
        let xavier = (6.0f64 / 25.0).sqrt();
        assert!(m.layers()[0].weights.iter().all(|w| w.abs() <= he));
        assert!(m.layers()[1].weights.iter().all(|w| w.abs() <= xavier));
    }

    #[test]
    fn wbc_deep_smote_architecture_chains() {
        let specs = chain_specs(&[18, 48, 32, 16, 9], Activation::Relu, Activation::Linear);
        let m: MlpModel<f64> = mlp_init(&specs, 3).unwrap();
        assert_eq!(m.widths(), vec![18, 48, 32, 16, 9]);
    }

    #[test]
    fn chain_mismatch_names_layer_pair() {
        let specs = [LayerSpec::new(4, 8, Activation::Relu), LayerSpec::new(9, 2, Activation::Linear)];
        match mlp_init::<f64>(&specs, 0) {
            Err(Error::LayerChain { first: 0, second: 1, produced: 8, expected: 9 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_slope_and_zero_width() {
        assert!(mlp_init::<f64>(&[LayerSpec::new(2, 2, Activation::LeakyRelu { slope: 1.5 })], 0).is_err());
        assert!(mlp_init::<f64>(&[LayerSpec::new(0, 2, Activation::Linear)], 0).is_err());
        assert!(mlp_init::<f64>(&[], 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let id = single(Array2::eye(2), Array1::zeros(2), Activation::Linear);
        assert_eq!(id.forward(arr1(&[0.2, 0.8]).view()).unwrap(), arr1(&[0.2, 0.8]));

        let relu = single(arr2(&[[1.0, 1.0]]), arr1(&[-5.0]), Activation::Relu);
        assert_eq!(relu.forward(arr1(&[2.0, 2.0]).view()).unwrap(), arr1(&[0.0]));

        let sig = single(arr2(&[[0.0]]), arr1(&[0.0]), Activation::Sigmoid);
        for x in [-3.0, 0.0, 17.0] {
            assert_eq!(sig.forward(arr1(&[x]).view()).unwrap(), arr1(&[0.5]));
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let id = single(Array2::eye(2), Array1::zeros(2), Activation::Linear);
        assert!(matches!(id.forward(arr1(&[1.0]).view()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn forward_is_pure() {
        let specs = chain_specs(&[3, 5, 2], Activation::Relu, Activation::Sigmoid);
        let m: MlpModel<f64> = mlp_init(&specs, 11).unwrap();
        let before = m.clone();
        let x = arr1(&[0.1, -0.4, 0.9]);
        let a = m.forward(x.view()).unwrap();
        let b = m.forward(x.view()).unwrap();
        assert_eq!(a, b);
        assert_eq!(m, before);
    }

    #[test]
    fn single_neuron_gradient_is_analytic() {
        let (w, b, x, t) = (0.7, -0.3, 1.9, 0.4);
        let m = single(arr2(&[[w]]), arr1(&[b]), Activation::Linear);
        let y = w * x + b;
        let g = m.gradient(arr1(&[x]).view(), arr1(&[2.0 * (y - t)]).view()).unwrap();
        assert_eq!(g.weights[0][[0, 0]], 2.0 * (y - t) * x);
        assert_eq!(g.biases[0][0], 2.0 * (y - t));
    }

    #[test]
    fn zero_seed_gives_zero_gradient() {
        let specs = chain_specs(&[4, 6, 3], Activation::Sigmoid, Activation::Linear);
        let m: MlpModel<f64> = mlp_init(&specs, 5).unwrap();
        let g = m.gradient(arr1(&[0.3, 0.1, -0.2, 0.5]).view(), Array1::zeros(3).view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let specs = chain_specs(&[5, 7, 6, 4], Activation::Sigmoid, Activation::Linear);
        let m: MlpModel<f64> = mlp_init(&specs, 21).unwrap();
        let seed_grad = arr1(&[0.3, -1.0, 0.2, 0.7]);
        let mut rng = seeded(4);
        for _ in 0..5 {
            let x = Array1::from_shape_simple_fn(5, || rng.random::<f64>());
            let analytic = m.gradient(x.view(), seed_grad.view()).unwrap().flatten();
            let numeric = crate::oracle::finite_difference_gradient(&m, x.view(), seed_grad.view(), 1e-5).unwrap();
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!(relative_error(*a, *n) < 1e-4, "{a} vs {n}");
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let specs = chain_specs(&[4, 6, 3], Activation::LeakyRelu { slope: 0.2 }, Activation::Sigmoid);
        let m: MlpModel<f64> = mlp_init(&specs, 8).unwrap();
        let w = arr2(&[[0.5, -0.4, 1.1]]);
        let loss = |x: &Array2<f64>| (m.forward_batch(x.view()).unwrap() * &w).sum();
        let mut rng = seeded(6);
        let x = Array2::from_shape_simple_fn((1, 4), || rng.random::<f64>() * 2.0 - 1.0);
        let trace = m.forward_traced(x.view()).unwrap();
        let (_, dx) = m.backward(&trace, w.view()).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[[0, j]] += h;
            down[[0, j]] -= h;
            let numeric = (loss(&up) - loss(&down)) / (2.0 * h);
            assert!((dx[[0, j]] - numeric).abs() < 1e-6, "{} vs {numeric}", dx[[0, j]]);
        }
    }

    #[test]
    fn self_test_passes() {
        let report = gradient_self_test(10, 3, 99).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn fits_line_through_origin() {
        let xs = arr2(&[[0.0], [0.25], [0.5], [0.75], [1.0]]);
        let ys = xs.mapv(|x| 2.0 * x);
        let m: MlpModel<f64> = mlp_init(&[LayerSpec::new(1, 1, Activation::Linear)], 1).unwrap();
        let cfg = TrainConfig {
            optimizer: Optimizer::Sgd,
            ..TrainConfig::new(4000, 5, 0.5)
        };
        let fit = mse_train(m, xs.view(), ys.view(), &cfg).unwrap();
        assert_abs_diff_eq!(fit.layers()[0].weights[[0, 0]], 2.0, epsilon = 1e-3);
        assert_abs_diff_eq!(fit.layers()[0].bias[0], 0.0, epsilon = 1e-3);
    }

    #[test]
    fn constant_targets_drive_bias_to_constant() {
        let xs = arr2(&[[0.1], [0.4], [0.6], [0.9]]);
        let ys = Array2::from_elem((4, 1), 0.37);
        let m: MlpModel<f64> = mlp_init(&[LayerSpec::new(1, 1, Activation::Linear)], 2).unwrap();
        let fit = mse_train(m, xs.view(), ys.view(), &TrainConfig::new(3000, 2, 1e-2)).unwrap();
        let w = fit.layers()[0].weights[[0, 0]];
        assert_abs_diff_eq!(fit.layers()[0].bias[0] + 0.5 * w, 0.37, epsilon = 1e-3);
        assert_abs_diff_eq!(fit.layers()[0].bias[0], 0.37, epsilon = 1e-3);
    }

    #[test]
    fn zero_epochs_rejected() {
        let m: MlpModel<f64> = mlp_init(&[LayerSpec::new(1, 1, Activation::Linear)], 2).unwrap();
        let xs = arr2(&[[1.0]]);
        let err = mse_train(m, xs.view(), xs.view(), &TrainConfig::new(0, 1, 0.1)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn divergence_reports_epoch() {
        let xs = arr2(&[[1e3], [2e3]]);
        let ys = arr2(&[[1e6], [-1e6]]);
        let m: MlpModel<f64> = mlp_init(&[LayerSpec::new(1, 1, Activation::Linear)], 2).unwrap();
        let cfg = TrainConfig {
            optimizer: Optimizer::Sgd,
            ..TrainConfig::new(500, 2, 10.0)
        };
        assert!(matches!(mse_train(m, xs.view(), ys.view(), &cfg), Err(Error::Divergence { stage: "epoch", .. })));
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let xs = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let ys = xs.map_axis(Axis(1), |r| r.sum()).insert_axis(Axis(1));
        let specs = chain_specs(&[3, 8, 1], Activation::Relu, Activation::Linear);
        let cfg = TrainConfig::new(20, 8, 1e-2);
        let a = mse_train(mlp_init::<f64>(&specs, 9).unwrap(), xs.view(), ys.view(), &cfg).unwrap();
        let b = mse_train(mlp_init::<f64>(&specs, 9).unwrap(), xs.view(), ys.view(), &cfg).unwrap();
        assert_eq!(param_bits(&a), param_bits(&b));
    }

    #[test]
    fn single_precision_trains_too() {
        let xs = array![[0.0f32], [0.5], [1.0]];
        let ys = xs.mapv(|x| 1.0 - x);
        let m: MlpModel<f32> = mlp_init(&[LayerSpec::new(1, 1, Activation::Linear)], 4).unwrap();
        let out = fit_mse(m, xs.view(), ys.view(), &TrainConfig::new(2000, 3, 1e-2)).unwrap();
        assert!(out.final_loss < 1e-4);
        assert!(out.final_loss <= out.initial_loss);
    }

    #[test]
    fn bce_examples() {
        let (disc, _) = bce_terms(&[0.5], &[0.5]).unwrap();
        assert_abs_diff_eq!(disc, 2.0 * 0.5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(disc, -1.3863, epsilon = 1e-4);

        let (perfect, _) = bce_terms(&[1.0f64], &[0.0]).unwrap();
        assert!(perfect.is_finite() && perfect > -1e-6 && perfect <= 0.0);

        let (_, gen) = bce_terms(&[0.5], &[0.9]).unwrap();
        assert_abs_diff_eq!(gen, 0.1f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(gen, -2.3026, epsilon = 1e-4);

        assert!(bce_terms::<f64>(&[], &[0.5]).is_err());
    }
}
