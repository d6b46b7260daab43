//! Dense autoencoder used to fuse the two feature sets into one latent code.
//!
//! Encoder widths come from [`AeConfig::layer_sizes`] and the decoder mirrors
//! them. Hidden layers use `tanh`; the latent and output layers are linear.
//! Training minimizes mean squared reconstruction error with Adagrad, all in
//! `f64`, sequentially, so a fixed seed reproduces parameters bit for bit.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csp::{expect_line, header_value, join_floats, parse_floats, parse_header};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};

pub const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    /// Encoder widths, input first, latent last.
    pub layer_sizes: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![123, 64, 16],
            epochs: 110,
            learning_rate: 0.14,
            seed: 0,
            batch_size: 32,
        }
    }
}

impl AeConfig {
    fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::param("autoencoder needs at least two positive layer sizes"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("epochs and batch size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::param("learning rate must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::data(format!("unknown activation {other:?}"))),
        }
    }
}

/// Fully connected layer `act(W x + b)` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            weights: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-s..s)),
            bias: DVector::zeros(fan_out),
            activation,
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Rows of `x` are samples.
    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.weights.transpose();
        for mut row in z.row_iter_mut() {
            row += self.bias.transpose();
        }
        if self.activation == Activation::Tanh {
            z.apply(|v| *v = v.tanh());
        }
        z
    }
}

/// Stack of dense layers trained against an arbitrary target.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradients laid out like the network's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub bias: Vec<DVector<f64>>,
}

impl Gradients {
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }
}

/// Mean over samples and outputs of the squared error.
pub fn mse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (pred - target).norm_squared() / pred.len() as f64
}

impl Mlp {
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.layers.iter().fold(x.clone(), |a, layer| layer.forward(&a))
    }

    pub fn loss(&self, x: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
        mse(&self.forward(x), target)
    }

    /// Loss and backpropagated gradients of [`mse`].
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, Gradients) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        let out = acts.last().unwrap();
        let diff = out - target;
        let loss = diff.norm_squared() / diff.len() as f64;
        let mut delta = diff * (2.0 / out.len() as f64);

        let mut gw = Vec::with_capacity(self.layers.len());
        let mut gb = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Tanh {
                delta.zip_apply(&acts[i + 1], |d, a| *d *= 1.0 - a * a);
            }
            gw.push(delta.transpose() * &acts[i]);
            gb.push(DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum())));
            if i > 0 {
                delta = &delta * &layer.weights;
            }
        }
        gw.reverse();
        gb.reverse();
        (loss, Gradients { weights: gw, bias: gb })
    }

    fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    fn get_param(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights.as_slice()[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    fn set_param(&mut self, idx: usize, value: f64) {
        let mut rest = idx;
        for slice in self.param_slices_mut() {
            if rest < slice.len() {
                slice[rest] = value;
                return;
            }
            rest -= slice.len();
        }
        panic!("parameter index {idx} out of range")
    }

    fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Largest relative error between backprop and central finite differences
    /// (step `h`) over `n_check` parameters sampled without replacement.
    ///
    /// Relative error is `|a - n| / max(|a|, |n|, 1e-7)`.
    pub fn gradient_check(&self, x: &DMatrix<f64>, target: &DMatrix<f64>, n_check: usize, h: f64, seed: u64) -> f64 {
        let (_, grads) = self.loss_and_gradients(x, target);
        let analytic = grads.flatten();
        let mut idx: Vec<usize> = (0..self.n_params()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n_check);
        let mut probe = self.clone();
        idx.into_iter()
            .map(|i| {
                let orig = self.get_param(i);
                probe.set_param(i, orig + h);
                let up = probe.loss(x, target);
                probe.set_param(i, orig - h);
                let down = probe.loss(x, target);
                probe.set_param(i, orig);
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[i];
                (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7)
            })
            .fold(0.0, f64::max)
    }
}

/// One Adagrad update: `acc += g^2`, `p -= lr * g / (sqrt(acc) + eps)`.
pub fn adagrad_step(params: &mut [f64], grads: &[f64], accum: &mut [f64], lr: f64) {
    for ((p, g), a) in params.iter_mut().zip(grads).zip(accum.iter_mut()) {
        *a += g * g;
        *p -= lr * g / (a.sqrt() + ADAGRAD_EPS);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub net: Mlp,
    /// Adagrad accumulators, one per parameter in layer order (weights then bias).
    pub accum: Vec<f64>,
    pub config: AeConfig,
    /// Reconstruction loss before training followed by one entry per epoch.
    pub loss_curve: Vec<f64>,
}

impl AeModel {
    /// Freshly initialized model for `config`.
    pub fn init(config: &AeConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self::init_with(config, &mut rng))
    }

    fn init_with(config: &AeConfig, rng: &mut ChaCha8Rng) -> Self {
        let sizes = &config.layer_sizes;
        let n = sizes.len() - 1;
        let mut layers = Vec::with_capacity(2 * n);
        for i in 0..n {
            let act = if i + 1 == n { Activation::Linear } else { Activation::Tanh };
            layers.push(Dense::glorot(rng, sizes[i], sizes[i + 1], act));
        }
        for i in (0..n).rev() {
            let act = if i == 0 { Activation::Linear } else { Activation::Tanh };
            layers.push(Dense::glorot(rng, sizes[i + 1], sizes[i], act));
        }
        let net = Mlp { layers };
        let accum = vec![0.0; net.n_params()];
        Self { net, accum, config: config.clone(), loss_curve: Vec::new() }
    }

    pub fn input_dim(&self) -> usize {
        self.config.layer_sizes[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.config.layer_sizes.last().unwrap()
    }

    fn n_encoder_layers(&self) -> usize {
        self.config.layer_sizes.len() - 1
    }

    /// Mean squared reconstruction error over the rows of `x`.
    pub fn reconstruction_loss(&self, x: &DMatrix<f64>) -> f64 {
        self.net.loss(x, x)
    }

    /// Latent codes for the rows of `x`.
    pub fn encode_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::param(format!(
                "autoencoder expects {} features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(self.net.layers[..self.n_encoder_layers()]
            .iter()
            .fold(x.clone(), |a, l| l.forward(&a)))
    }

    pub fn encode(&self, v: &FeatureVector) -> Result<FeatureVector> {
        let x = DMatrix::from_row_slice(1, v.len(), &v.values);
        let z = self.encode_matrix(&x)?;
        Ok(FeatureVector {
            values: z.iter().copied().collect(),
            kind: FeatureKind::Fused,
            trial_ref: v.trial_ref.clone(),
        })
    }

    pub fn gradient_check(&self, batch: &DMatrix<f64>, n_check: usize, seed: u64) -> f64 {
        self.net.gradient_check(batch, batch, n_check, 1e-5, seed)
    }
}

/// Trains on the rows of `features` (already standardized).
pub fn train_autoencoder(features: &DMatrix<f64>, config: &AeConfig) -> Result<AeModel> {
    config.validate()?;
    let (n, p) = features.shape();
    if p != config.layer_sizes[0] {
        return Err(Error::param(format!(
            "input has {p} features but the first layer expects {}",
            config.layer_sizes[0]
        )));
    }
    if n < config.batch_size {
        return Err(Error::data(format!(
            "{n} training rows is fewer than the batch size {}",
            config.batch_size
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite training feature"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = AeModel::init_with(config, &mut rng);
    model.loss_curve.push(model.reconstruction_loss(features));

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = features.select_rows(chunk);
            let (loss, grads) = model.net.loss_and_gradients(&batch, &batch);
            if !loss.is_finite() {
                return Err(Error::numerical(format!("non-finite training loss at epoch {epoch}")));
            }
            let flat = grads.flatten();
            let mut offset = 0;
            let lr = config.learning_rate;
            let accum = &mut model.accum;
            for slice in model.net.param_slices_mut() {
                let len = slice.len();
                adagrad_step(slice, &flat[offset..offset + len], &mut accum[offset..offset + len], lr);
                offset += len;
            }
        }
        if !model.net.all_finite() {
            return Err(Error::numerical(format!("non-finite parameter after epoch {epoch}")));
        }
        let loss = model.reconstruction_loss(features);
        if !loss.is_finite() {
            return Err(Error::numerical(format!("non-finite reconstruction loss at epoch {epoch}")));
        }
        model.loss_curve.push(loss);
    }
    Ok(model)
}

impl AeModel {
    /// Text form: header lines, then each layer's row-major weights, bias and
    /// Adagrad accumulators.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        writeln!(out, "autoencoder").unwrap();
        let sizes: Vec<String> = c.layer_sizes.iter().map(usize::to_string).collect();
        writeln!(out, "layers {}", sizes.join(" ")).unwrap();
        let acts: Vec<&str> = self.net.layers.iter().map(|l| l.activation.tag()).collect();
        writeln!(out, "activations {}", acts.join(" ")).unwrap();
        writeln!(out, "seed {}", c.seed).unwrap();
        writeln!(out, "epochs {}", c.epochs).unwrap();
        writeln!(out, "learning_rate {:e}", c.learning_rate).unwrap();
        writeln!(out, "batch_size {}", c.batch_size).unwrap();
        writeln!(out, "loss_curve {}", self.loss_curve.len()).unwrap();
        writeln!(out, "{}", join_floats(self.loss_curve.iter().copied())).unwrap();
        let mut offset = 0;
        for (i, l) in self.net.layers.iter().enumerate() {
            let (rows, cols) = l.weights.shape();
            writeln!(out, "layer {i} {rows} {cols}").unwrap();
            for row in l.weights.row_iter() {
                writeln!(out, "{}", join_floats(row.iter().copied())).unwrap();
            }
            writeln!(out, "bias").unwrap();
            writeln!(out, "{}", join_floats(l.bias.iter().copied())).unwrap();
            // accumulators are stored in the column-major parameter order
            let n = l.n_params();
            writeln!(out, "adagrad").unwrap();
            writeln!(out, "{}", join_floats(self.accum[offset..offset + n].iter().copied())).unwrap();
            offset += n;
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::data(format!("model text ends before {what}")))
        };
        expect_line(next("magic")?, "autoencoder")?;
        let layer_sizes: Vec<usize> = header_value(next("layers")?, "layers")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::data(format!("bad layer size {t:?}"))))
            .collect::<Result<_>>()?;
        let acts: Vec<Activation> = header_value(next("activations")?, "activations")?
            .split_whitespace()
            .map(Activation::from_tag)
            .collect::<Result<_>>()?;
        let config = AeConfig {
            layer_sizes,
            seed: parse_header(next("seed")?, "seed")?,
            epochs: parse_header(next("epochs")?, "epochs")?,
            learning_rate: parse_header(next("learning_rate")?, "learning_rate")?,
            batch_size: parse_header(next("batch_size")?, "batch_size")?,
        };
        config.validate()?;
        let n_loss: usize = parse_header(next("loss_curve")?, "loss_curve")?;
        let loss_line = next("loss values")?;
        let loss_curve = if n_loss == 0 { Vec::new() } else { parse_floats(loss_line, n_loss)? };

        let n_layers = 2 * (config.layer_sizes.len() - 1);
        if acts.len() != n_layers {
            return Err(Error::data(format!("expected {n_layers} activations, found {}", acts.len())));
        }
        let mut layers = Vec::with_capacity(n_layers);
        let mut accum = Vec::new();
        for (i, act) in acts.into_iter().enumerate() {
            let header = next("layer header")?;
            let dims: Vec<usize> = header
                .split_whitespace()
                .skip(2)
                .map(|t| t.parse().map_err(|_| Error::data(format!("bad layer header {header:?}"))))
                .collect::<Result<_>>()?;
            if !header.starts_with(&format!("layer {i} ")) || dims.len() != 2 {
                return Err(Error::data(format!("bad layer header {header:?}")));
            }
            let (rows, cols) = (dims[0], dims[1]);
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                values.extend(parse_floats(next("weights")?, cols)?);
            }
            expect_line(next("bias")?, "bias")?;
            let bias = DVector::from_vec(parse_floats(next("bias values")?, rows)?);
            expect_line(next("adagrad")?, "adagrad")?;
            accum.extend(parse_floats(next("accumulators")?, rows * cols + rows)?);
            layers.push(Dense { weights: DMatrix::from_row_slice(rows, cols, &values), bias, activation: act });
        }
        Ok(Self { net: Mlp { layers }, accum, config, loss_curve })
    }
}
