//! Self-expressing autoencoder.
//!
//! One encoder feeds two heads: a label head producing frame embeddings `Z`
//! and a non-label head whose output is averaged over the chunk into a single
//! vector `B`. A single decoder reconstructs the input twice, once from
//! `[Z | B]` and once from `[Z̄ | B]` where `Z̄` re-expresses every frame as a
//! cosine-weighted mix of the other frames. Both reconstructions are scored
//! by MSE against the input.

mod checkpoint;
pub mod gradcheck;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use train::{
    chunk_corpus, pretrain_autoencoder, sgd_step, train_sea, EpochLoss, TrainReport,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::numerics::{self, dot, Matrix, Real, EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct SeaConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Frames per training chunk; self-expression never crosses chunks.
    pub chunk_frames: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub pretrain_epochs: usize,
    pub sea_epochs: usize,
    pub rng_seed: u32,
    /// Treat the similarity weights as constants in the backward pass.
    pub stop_gradient: bool,
}

impl Default for SeaConfig {
    fn default() -> Self {
        Self {
            input_dim: 13,
            hidden_dim: 256,
            embed_dim: 64,
            chunk_frames: 100,
            learning_rate: 1e-3,
            momentum: 0.9,
            pretrain_epochs: 20,
            sea_epochs: 20,
            rng_seed: 0,
            stop_gradient: false,
        }
    }
}

impl SeaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(Error::Config("model dimensions must be >= 1".into()));
        }
        if self.chunk_frames < 2 {
            return Err(Error::Config("chunk_frames must be >= 2".into()));
        }
        if !self.learning_rate.is_finite() || !self.momentum.is_finite() {
            return Err(Error::Config("learning rate and momentum must be finite".into()));
        }
        Ok(())
    }
}

/// Affine layer `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T = f32> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::from_f64(rng.gen_range(-limit..limit)))
            .collect();
        Self {
            weight: Matrix::new(fan_in, fan_out, data).expect("shape"),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn apply(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut y = x.matmul(&self.weight)?;
        y.add_row(self.bias.as_slice());
        Ok(y)
    }

    fn apply_relu(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(relu(self.apply(x)?))
    }
}

fn relu<T: Real>(mut m: Matrix<T>) -> Matrix<T> {
    for v in m.as_mut_slice() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
    m
}

/// All trainable tensors. Exactly one decoder exists; both branches use it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub enc1: Dense<T>,
    pub enc2: Dense<T>,
    pub label: Dense<T>,
    pub nonlabel: Dense<T>,
    pub dec1: Dense<T>,
    pub dec2: Dense<T>,
    pub dec3: Dense<T>,
}

/// Gradients mirror the parameter layout.
pub type Gradients<T = f32> = ModelParams<T>;

impl<T: Real> ModelParams<T> {
    pub fn zeros(cfg: &SeaConfig) -> Self {
        let (d, h, k) = (cfg.input_dim, cfg.hidden_dim, cfg.embed_dim);
        Self {
            enc1: Dense::zeros(d, h),
            enc2: Dense::zeros(h, h),
            label: Dense::zeros(h, k),
            nonlabel: Dense::zeros(h, k),
            dec1: Dense::zeros(2 * k, h),
            dec2: Dense::zeros(h, h),
            dec3: Dense::zeros(h, d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    pub fn input_dim(&self) -> usize {
        self.enc1.weight.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.label.weight.cols()
    }

    /// Tensors in checkpoint order: each layer's weight then bias, layers
    /// enc1, enc2, label, nonlabel, dec1, dec2, dec3.
    pub fn tensors(&self) -> [&Matrix<T>; 14] {
        [
            &self.enc1.weight,
            &self.enc1.bias,
            &self.enc2.weight,
            &self.enc2.bias,
            &self.label.weight,
            &self.label.bias,
            &self.nonlabel.weight,
            &self.nonlabel.bias,
            &self.dec1.weight,
            &self.dec1.bias,
            &self.dec2.weight,
            &self.dec2.bias,
            &self.dec3.weight,
            &self.dec3.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix<T>; 14] {
        [
            &mut self.enc1.weight,
            &mut self.enc1.bias,
            &mut self.enc2.weight,
            &mut self.enc2.bias,
            &mut self.label.weight,
            &mut self.label.bias,
            &mut self.nonlabel.weight,
            &mut self.nonlabel.bias,
            &mut self.dec1.weight,
            &mut self.dec1.bias,
            &mut self.dec2.weight,
            &mut self.dec2.bias,
            &mut self.dec3.weight,
            &mut self.dec3.bias,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.as_slice().iter().map(|v| v.as_f64()))
            .collect()
    }

    /// Overwrites every parameter from a flat vector in [`Self::tensors`] order.
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter();
        for t in self.tensors_mut() {
            for v in t.as_mut_slice() {
                *v = T::from_f64(*it.next().unwrap());
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let d = |l: &Dense<T>| Dense {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        ModelParams {
            enc1: d(&self.enc1),
            enc2: d(&self.enc2),
            label: d(&self.label),
            nonlabel: d(&self.nonlabel),
            dec1: d(&self.dec1),
            dec2: d(&self.dec2),
            dec3: d(&self.dec3),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn encode(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let h1 = self.enc1.apply_relu(x)?;
        let e = self.enc2.apply_relu(&h1)?;
        Ok((h1, e))
    }

    fn decode(&self, c: &Matrix<T>) -> Result<DecoderPass<T>> {
        let g1 = self.dec1.apply_relu(c)?;
        let g2 = self.dec2.apply_relu(&g1)?;
        let out = self.dec3.apply(&g2)?;
        Ok(DecoderPass { g1, g2, out })
    }
}

/// Glorot-uniform weights from a generator seeded by `rng_seed`; zero biases.
pub fn init_model(cfg: &SeaConfig) -> Result<ModelParams<f32>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed as u64);
    let (d, h, k) = (cfg.input_dim, cfg.hidden_dim, cfg.embed_dim);
    Ok(ModelParams {
        enc1: Dense::glorot(d, h, &mut rng),
        enc2: Dense::glorot(h, h, &mut rng),
        label: Dense::glorot(h, k, &mut rng),
        nonlabel: Dense::glorot(h, k, &mut rng),
        dec1: Dense::glorot(2 * k, h, &mut rng),
        dec2: Dense::glorot(h, h, &mut rng),
        dec3: Dense::glorot(h, d, &mut rng),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Plain autoencoder: only the direct reconstruction is scored.
    Pretrain,
    /// Both reconstructions are scored.
    Sea,
}

#[derive(Debug, Clone)]
pub struct DecoderPass<T> {
    pub g1: Matrix<T>,
    pub g2: Matrix<T>,
    pub out: Matrix<T>,
}

/// Every intermediate of one forward pass over a chunk.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T = f32> {
    pub x: Matrix<T>,
    pub h1: Matrix<T>,
    pub e: Matrix<T>,
    pub z: Matrix<T>,
    /// Non-label head output per frame, before time averaging.
    pub nonlabel_frames: Matrix<T>,
    /// Time-averaged non-label vector (1×K).
    pub b: Matrix<T>,
    pub affinity: Matrix<T>,
    pub weights: Matrix<T>,
    pub z_bar: Matrix<T>,
    pub direct: DecoderPass<T>,
    /// Present in [`Mode::Sea`] only.
    pub expressed: Option<DecoderPass<T>>,
    pub loss_direct: f64,
    pub loss_self: f64,
    pub loss_total: f64,
}

impl<T: Real> ForwardTrace<T> {
    pub fn x_hat(&self) -> &Matrix<T> {
        &self.direct.out
    }

    pub fn x_bar_hat(&self) -> Option<&Matrix<T>> {
        self.expressed.as_ref().map(|d| &d.out)
    }
}

fn broadcast_rows<T: Real>(row: &Matrix<T>, n: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(n, row.cols());
    for i in 0..n {
        out.row_mut(i).copy_from_slice(row.as_slice());
    }
    out
}

pub fn forward<T: Real>(p: &ModelParams<T>, x: &Matrix<T>, mode: Mode) -> Result<ForwardTrace<T>> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::ShapeMismatch(format!(
            "training chunk needs at least 2 frames, got {n}"
        )));
    }
    let (h1, e) = p.encode(x)?;
    let z = p.label.apply_relu(&e)?;
    let nonlabel_frames = p.nonlabel.apply_relu(&e)?;
    let b = Matrix::new(
        1,
        nonlabel_frames.cols(),
        nonlabel_frames
            .col_sums()
            .into_iter()
            .map(|s| T::from_f64(s / n as f64))
            .collect(),
    )?;
    let se = numerics::self_express(&z, EPS)?;
    let bb = broadcast_rows(&b, n);
    let direct = p.decode(&z.hcat(&bb)?)?;
    let loss_direct = numerics::mse(x, &direct.out)?;
    let (expressed, loss_self) = match mode {
        Mode::Pretrain => (None, 0.0),
        Mode::Sea => {
            let pass = p.decode(&se.expressed.hcat(&bb)?)?;
            let l = numerics::mse(x, &pass.out)?;
            (Some(pass), l)
        }
    };
    Ok(ForwardTrace {
        x: x.clone(),
        h1,
        e,
        z,
        nonlabel_frames,
        b,
        affinity: se.affinity,
        weights: se.weights,
        z_bar: se.expressed,
        direct,
        expressed,
        loss_direct,
        loss_self,
        loss_total: loss_direct + loss_self,
    })
}

/// `upstream ⊙ [activation > 0]`.
fn relu_grad<T: Real>(upstream: &Matrix<T>, activation: &Matrix<T>) -> Matrix<T> {
    let mut out = upstream.clone();
    for (g, &a) in out.as_mut_slice().iter_mut().zip(activation.as_slice()) {
        if !(a > T::zero()) {
            *g = T::zero();
        }
    }
    out
}

fn add_into<T: Real>(acc: &mut Matrix<T>, m: &Matrix<T>) {
    for (a, &b) in acc.as_mut_slice().iter_mut().zip(m.as_slice()) {
        *a = *a + b;
    }
}

/// Accumulates the gradients of an affine layer given its input and the
/// gradient at its pre-activation output; returns the input gradient.
fn dense_backward<T: Real>(
    layer: &Dense<T>,
    grad: &mut Dense<T>,
    input: &Matrix<T>,
    d_out: &Matrix<T>,
) -> Result<Matrix<T>> {
    add_into(&mut grad.weight, &input.matmul_tn(d_out)?);
    let sums = d_out.col_sums();
    for (b, s) in grad.bias.as_mut_slice().iter_mut().zip(sums) {
        *b = T::from_f64(b.as_f64() + s);
    }
    d_out.matmul_nt(&layer.weight)
}

fn decoder_backward<T: Real>(
    p: &ModelParams<T>,
    g: &mut Gradients<T>,
    input: &Matrix<T>,
    pass: &DecoderPass<T>,
    d_out: &Matrix<T>,
) -> Result<Matrix<T>> {
    let d_g2 = dense_backward(&p.dec3, &mut g.dec3, &pass.g2, d_out)?;
    let d_g1 = dense_backward(&p.dec2, &mut g.dec2, &pass.g1, &relu_grad(&d_g2, &pass.g2))?;
    dense_backward(&p.dec1, &mut g.dec1, input, &relu_grad(&d_g1, &pass.g1))
}

fn mse_grad<T: Real>(x: &Matrix<T>, out: &Matrix<T>) -> Matrix<T> {
    let scale = 2.0 / x.as_slice().len() as f64;
    let mut d = out.clone();
    for (v, &t) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *v = T::from_f64(scale * (v.as_f64() - t.as_f64()));
    }
    d
}

/// Splits a decoder-input gradient into its embedding part (N×K) and the
/// row-summed non-label part (length K).
fn split_concat_grad<T: Real>(d_c: &Matrix<T>, k: usize) -> (Matrix<T>, Vec<f64>) {
    let n = d_c.rows();
    let mut d_z = Matrix::zeros(n, k);
    let mut d_b = vec![0.0; k];
    for i in 0..n {
        let row = d_c.row(i);
        d_z.row_mut(i).copy_from_slice(&row[..k]);
        for (s, &v) in d_b.iter_mut().zip(&row[k..]) {
            *s += v.as_f64();
        }
    }
    (d_z, d_b)
}

/// Gradient of the embeddings through `Z̄ = row_normalize(zero_diag(cos(Z)))·Z`
/// given `dL/dZ̄`, excluding the direct `Wᵀ·dZ̄` term.
pub fn self_expression_backward<T: Real>(
    z: &Matrix<T>,
    affinity: &Matrix<T>,
    weights: &Matrix<T>,
    d_zbar: &Matrix<T>,
    eps: f64,
) -> Matrix<f64> {
    let n = z.rows();
    // dW = dZ̄ · Zᵀ
    let mut d_a = Matrix::<f64>::zeros(n, n);
    for i in 0..n {
        let row_sum: f64 = affinity.row(i).iter().map(|v| v.as_f64()).sum();
        if row_sum < eps {
            continue;
        }
        let d_w: Vec<f64> = (0..n).map(|j| dot(d_zbar.row(i), z.row(j))).collect();
        let proj: f64 = d_w
            .iter()
            .zip(weights.row(i))
            .map(|(g, w)| g * w.as_f64())
            .sum();
        for j in 0..n {
            // the zeroed diagonal carries no gradient
            if j != i {
                d_a[(i, j)] = (d_w[j] - proj) / row_sum;
            }
        }
    }
    let norms: Vec<f64> = z.row_iter().map(numerics::norm).collect();
    let mut d_z = Matrix::<f64>::zeros(n, z.cols());
    for i in 0..n {
        for j in 0..n {
            let s = d_a[(i, j)] + d_a[(j, i)];
            if s == 0.0 {
                continue;
            }
            let nn = norms[i] * norms[j];
            let den = nn.max(eps);
            let a_ij = dot(z.row(i), z.row(j)) / den;
            let self_coef = if nn >= eps { a_ij / (norms[i] * norms[i]) } else { 0.0 };
            let zi: Vec<f64> = z.row(i).iter().map(|v| v.as_f64()).collect();
            for (c, (out, &zj)) in d_z.row_mut(i).iter_mut().zip(z.row(j)).enumerate() {
                *out += s * (zj.as_f64() / den - self_coef * zi[c]);
            }
        }
    }
    d_z
}

/// Exact gradient of `trace.loss_total` with respect to every parameter.
pub fn backward<T: Real>(
    p: &ModelParams<T>,
    trace: &ForwardTrace<T>,
    mode: Mode,
    stop_gradient: bool,
) -> Result<Gradients<T>> {
    let n = trace.x.rows();
    let k = p.embed_dim();
    let mut g = p.zeros_like();
    let bb = broadcast_rows(&trace.b, n);

    let d_c = decoder_backward(
        p,
        &mut g,
        &trace.z.hcat(&bb)?,
        &trace.direct,
        &mse_grad(&trace.x, &trace.direct.out),
    )?;
    let (mut d_z, mut d_b) = split_concat_grad(&d_c, k);

    if mode == Mode::Sea {
        let pass = trace
            .expressed
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch("trace lacks the self-expressed branch".into()))?;
        let d_c = decoder_backward(
            p,
            &mut g,
            &trace.z_bar.hcat(&bb)?,
            pass,
            &mse_grad(&trace.x, &pass.out),
        )?;
        let (d_zbar, d_b_self) = split_concat_grad(&d_c, k);
        for (a, b) in d_b.iter_mut().zip(d_b_self) {
            *a += b;
        }
        add_into(&mut d_z, &trace.weights.matmul_tn(&d_zbar)?);
        if !stop_gradient {
            let through =
                self_expression_backward(&trace.z, &trace.affinity, &trace.weights, &d_zbar, EPS);
            add_into(&mut d_z, &through.cast());
        }
    }

    // B is the time mean of the non-label frames
    let mut d_nl = Matrix::zeros(n, k);
    for i in 0..n {
        for (v, &s) in d_nl.row_mut(i).iter_mut().zip(&d_b) {
            *v = T::from_f64(s / n as f64);
        }
    }
    let mut d_e = dense_backward(
        &p.nonlabel,
        &mut g.nonlabel,
        &trace.e,
        &relu_grad(&d_nl, &trace.nonlabel_frames),
    )?;
    add_into(
        &mut d_e,
        &dense_backward(&p.label, &mut g.label, &trace.e, &relu_grad(&d_z, &trace.z))?,
    );
    let d_h1 = dense_backward(&p.enc2, &mut g.enc2, &trace.h1, &relu_grad(&d_e, &trace.e))?;
    dense_backward(&p.enc1, &mut g.enc1, &trace.x, &relu_grad(&d_h1, &trace.h1))?;

    const NAMES: [&str; 14] = [
        "enc1.weight",
        "enc1.bias",
        "enc2.weight",
        "enc2.bias",
        "label.weight",
        "label.bias",
        "nonlabel.weight",
        "nonlabel.bias",
        "dec1.weight",
        "dec1.bias",
        "dec2.weight",
        "dec2.bias",
        "dec3.weight",
        "dec3.bias",
    ];
    if let Some(i) = g.tensors().iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFiniteGradient(NAMES[i]));
    }
    Ok(g)
}

/// Label embeddings `Z` for a whole utterance in one pass.
pub fn embed_utterance<T: Real>(p: &ModelParams<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    let (_, e) = p.encode(x)?;
    p.label.apply_relu(&e)
}

#[cfg(test)]
mod tests;
