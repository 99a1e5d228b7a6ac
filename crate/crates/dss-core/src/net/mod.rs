//! The pose regression back-end: four 3x3 convolution blocks (rectifier,
//! cross-channel normalization, max-pooling after the first and third) feeding
//! two fully connected layers that emit the 28-element keypoint vector.
//! Convolution kernels can be initialized from PCA structural priors instead
//! of random weights.

pub mod layers;
pub mod loss;
pub mod train;

use ndarray::{Array1, Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::priors::PriorFilterSet;
use crate::{DssError, Result};
use layers::{
    col2im3, im2col3, lrn_backward, lrn_forward, matmul, matmul_nt, matmul_tn, maxpool2_backward,
    maxpool2_forward, ConvLayer, FcLayer, LrnParams,
};

/// Architecture of the regression network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_channels: usize,
    pub input_rows: usize,
    pub input_cols: usize,
    pub conv_widths: [usize; 4],
    pub fc1_width: usize,
    pub output_width: usize,
    /// 2x2 max-pool after these conv blocks.
    pub pool_after: [bool; 4],
    pub lrn: LrnParams,
    /// Keep probability of fc1 dropout; inference scales by this factor.
    pub dropout_keep: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_channels: 147,
            input_rows: 28,
            input_cols: 18,
            conv_widths: [32, 32, 64, 64],
            fc1_width: 512,
            output_width: 28,
            pool_after: [true, false, true, false],
            lrn: LrnParams::default(),
            dropout_keep: 0.5,
        }
    }
}

impl NetConfig {
    /// Spatial dims after each conv block (pooling included).
    pub fn block_dims(&self) -> [(usize, usize); 4] {
        let mut h = self.input_rows;
        let mut w = self.input_cols;
        let mut out = [(0, 0); 4];
        for i in 0..4 {
            if self.pool_after[i] {
                h /= 2;
                w /= 2;
            }
            out[i] = (h, w);
        }
        out
    }

    pub fn fc_input_len(&self) -> usize {
        let (h, w) = self.block_dims()[3];
        self.conv_widths[3] * h * w
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_width != 28 {
            return Err(DssError::config("output width must be 2 x 14 keypoints"));
        }
        let (h, w) = self.block_dims()[3];
        if h == 0 || w == 0 {
            return Err(DssError::config(
                "input too small: feature maps collapse before the FC layers",
            ));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(DssError::config("dropout_keep must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub lr_after_drop: f64,
    pub drop_epoch: usize,
    pub dropout_keep: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 1e-5,
            lr_after_drop: 1e-6,
            drop_epoch: 20,
            dropout_keep: 0.5,
            batch_size: 20,
            epochs: 90,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.lr_after_drop > 0.0) {
            return Err(DssError::config("learning rates must be positive"));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(DssError::config("dropout_keep must be in (0, 1]"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(DssError::config("batch_size and epochs must be positive"));
        }
        if self.drop_epoch >= self.epochs {
            return Err(DssError::config("drop_epoch must precede epochs"));
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        if epoch >= self.drop_epoch {
            self.lr_after_drop
        } else {
            self.base_lr
        }
    }
}

/// How the convolution kernels were initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    Random,
    StructuralPrior,
}

/// The regression network.
#[derive(Debug, Clone)]
pub struct RegressionNet {
    pub config: NetConfig,
    pub conv: Vec<ConvLayer>,
    pub fc1: FcLayer,
    pub fc2: FcLayer,
    pub init_mode: InitMode,
}

/// Dropout behavior of a forward pass.
pub enum DropoutMode<'a> {
    /// Inference: fc1 activations scaled by the keep probability.
    Infer,
    /// Training: multiply fc1 activations by this 0/1 mask.
    Mask(&'a Array1<f64>),
}

/// Intermediate state kept for backpropagation.
pub struct ForwardCache {
    conv_in: Vec<Array3<f64>>,
    conv_cols: Vec<Array2<f64>>,
    conv_pre: Vec<Array2<f64>>,
    lrn_in: Vec<Array3<f64>>,
    lrn_den: Vec<Array3<f64>>,
    pool_idx: Vec<Option<ndarray::Array3<usize>>>,
    pool_in_dim: Vec<(usize, usize, usize)>,
    flat: Array1<f64>,
    fc1_pre: Array1<f64>,
    pub(crate) fc1_act: Array1<f64>,
    mask: Option<Array1<f64>>,
    pub output: Array1<f64>,
}

/// Per-parameter gradients, same shapes as the network.
pub struct Gradients {
    pub conv_w: Vec<Array4<f64>>,
    pub conv_b: Vec<Array1<f64>>,
    pub fc1_w: Array2<f64>,
    pub fc1_b: Array1<f64>,
    pub fc2_w: Array2<f64>,
    pub fc2_b: Array1<f64>,
}

impl Gradients {
    fn zeros_like(net: &RegressionNet) -> Self {
        Gradients {
            conv_w: net.conv.iter().map(|c| Array4::zeros(c.weight.dim())).collect(),
            conv_b: net.conv.iter().map(|c| Array1::zeros(c.bias.len())).collect(),
            fc1_w: Array2::zeros(net.fc1.weight.dim()),
            fc1_b: Array1::zeros(net.fc1.bias.len()),
            fc2_w: Array2::zeros(net.fc2.weight.dim()),
            fc2_b: Array1::zeros(net.fc2.bias.len()),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.conv_w.iter_mut().zip(&other.conv_w) {
            *a += b;
        }
        for (a, b) in self.conv_b.iter_mut().zip(&other.conv_b) {
            *a += b;
        }
        self.fc1_w += &other.fc1_w;
        self.fc1_b += &other.fc1_b;
        self.fc2_w += &other.fc2_w;
        self.fc2_b += &other.fc2_b;
    }

    fn scale(&mut self, s: f64) {
        for a in &mut self.conv_w {
            a.mapv_inplace(|v| v * s);
        }
        for a in &mut self.conv_b {
            a.mapv_inplace(|v| v * s);
        }
        self.fc1_w.mapv_inplace(|v| v * s);
        self.fc1_b.mapv_inplace(|v| v * s);
        self.fc2_w.mapv_inplace(|v| v * s);
        self.fc2_b.mapv_inplace(|v| v * s);
    }
}

impl RegressionNet {
    /// Random He/Glorot initialization.
    pub fn new_random(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = |std: f64, rng: &mut ChaCha8Rng| -> f64 {
            // Box-Muller
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let mut conv = Vec::with_capacity(4);
        let mut in_c = config.input_channels;
        for &out_c in &config.conv_widths {
            let std = (2.0 / (9.0 * in_c as f64)).sqrt();
            let weight = Array4::from_shape_fn((out_c, in_c, 3, 3), |_| normal(std, &mut rng));
            conv.push(ConvLayer {
                weight,
                bias: Array1::zeros(out_c),
            });
            in_c = out_c;
        }
        let fc_in = config.fc_input_len();
        let lim1 = (6.0 / (fc_in + config.fc1_width) as f64).sqrt();
        let fc1 = FcLayer {
            weight: Array2::from_shape_fn((config.fc1_width, fc_in), |_| {
                rng.gen_range(-lim1..lim1)
            }),
            bias: Array1::zeros(config.fc1_width),
        };
        let lim2 = (6.0 / (config.fc1_width + config.output_width) as f64).sqrt();
        let fc2 = FcLayer {
            weight: Array2::from_shape_fn((config.output_width, config.fc1_width), |_| {
                rng.gen_range(-lim2..lim2)
            }),
            bias: Array1::zeros(config.output_width),
        };
        Ok(RegressionNet {
            config,
            conv,
            fc1,
            fc2,
            init_mode: InitMode::Random,
        })
    }

    /// Installs PCA structural priors as convolution kernels (scaled by each
    /// set's install gain); biases zero, FC layers untouched. Fails without
    /// modifying the net when shapes do not line up.
    pub fn init_with_priors(&self, priors: &[PriorFilterSet]) -> Result<RegressionNet> {
        if priors.len() != 4 {
            return Err(DssError::config(format!(
                "need 4 prior sets, got {}",
                priors.len()
            )));
        }
        let mut in_c = self.config.input_channels;
        for (i, p) in priors.iter().enumerate() {
            let out_c = self.config.conv_widths[i];
            if p.filters.len() != out_c || p.channels != in_c || p.patch_rows != 3 || p.patch_cols != 3
            {
                return Err(DssError::config(format!(
                    "prior set {} has {} filters over {}x{}x{}, layer wants {} over 3x3x{}",
                    i,
                    p.filters.len(),
                    p.patch_rows,
                    p.patch_cols,
                    p.channels,
                    out_c,
                    in_c
                )));
            }
            in_c = out_c;
        }
        let mut net = self.clone();
        for (i, p) in priors.iter().enumerate() {
            let (out_c, in_c) = (net.conv[i].weight.dim().0, net.conv[i].weight.dim().1);
            for oo in 0..out_c {
                let f = &p.filters[oo];
                for ii in 0..in_c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            net.conv[i].weight[[oo, ii, ky, kx]] =
                                p.install_gain * f[[ky, kx, ii]];
                        }
                    }
                }
            }
            net.conv[i].bias.fill(0.0);
        }
        net.init_mode = InitMode::StructuralPrior;
        Ok(net)
    }

    /// Draws a 0/1 fc1 dropout mask with the configured keep probability.
    pub fn sample_dropout_mask(&self, rng: &mut ChaCha8Rng) -> Array1<f64> {
        let keep = self.config.dropout_keep;
        Array1::from_shape_fn(self.config.fc1_width, |_| {
            if rng.gen_range(0.0..1.0) < keep {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Forward pass retaining everything needed for backpropagation.
    pub fn forward_cached(&self, x: &Array3<f64>, dropout: DropoutMode) -> Result<ForwardCache> {
        let (c, h, w) = x.dim();
        if c != self.config.input_channels
            || h != self.config.input_rows
            || w != self.config.input_cols
        {
            return Err(DssError::config(format!(
                "input {c}x{h}x{w} does not match configured {}x{}x{}",
                self.config.input_channels, self.config.input_rows, self.config.input_cols
            )));
        }
        let mut cur = x.clone();
        let mut conv_in = Vec::with_capacity(4);
        let mut conv_cols = Vec::with_capacity(4);
        let mut conv_pre = Vec::with_capacity(4);
        let mut lrn_in = Vec::with_capacity(4);
        let mut lrn_den = Vec::with_capacity(4);
        let mut pool_idx = Vec::with_capacity(4);
        let mut pool_in_dim = Vec::with_capacity(4);
        for (i, layer) in self.conv.iter().enumerate() {
            let (ci, hi, wi) = cur.dim();
            let cols = im2col3(&cur);
            let wm = layer.weight_matrix();
            let mut z = matmul(&wm, &cols);
            for (mut row, &b) in z.outer_iter_mut().zip(layer.bias.iter()) {
                row.mapv_inplace(|v| v + b);
            }
            let out_c = layer.weight.dim().0;
            let relu = Array3::from_shape_fn((out_c, hi, wi), |(o, y, xx)| {
                z[[o, y * wi + xx]].max(0.0)
            });
            let (lrn_out, den) = lrn_forward(&relu, &self.config.lrn);
            conv_in.push(cur);
            conv_cols.push(cols);
            conv_pre.push(z);
            lrn_in.push(relu);
            lrn_den.push(den);
            if self.config.pool_after[i] {
                let (pooled, idx) = maxpool2_forward(&lrn_out);
                pool_in_dim.push(lrn_out.dim());
                pool_idx.push(Some(idx));
                cur = pooled;
            } else {
                pool_in_dim.push(lrn_out.dim());
                pool_idx.push(None);
                cur = lrn_out;
            }
            let _ = ci;
        }
        let flat = Array1::from_iter(cur.iter().copied());
        let fc1_pre = self.fc1.forward(&flat);
        let relu1 = fc1_pre.mapv(|v| v.max(0.0));
        let (fc1_act, mask) = match dropout {
            DropoutMode::Infer => (relu1.mapv(|v| v * self.config.dropout_keep), None),
            DropoutMode::Mask(m) => {
                if m.len() != relu1.len() {
                    return Err(DssError::config("dropout mask length mismatch"));
                }
                ((&relu1 * m).to_owned(), Some(m.clone()))
            }
        };
        let output = self.fc2.forward(&fc1_act);
        if output.iter().any(|v| !v.is_finite()) {
            return Err(DssError::Divergence("non-finite network output".into()));
        }
        Ok(ForwardCache {
            conv_in,
            conv_cols,
            conv_pre,
            lrn_in,
            lrn_den,
            pool_idx,
            pool_in_dim,
            flat,
            fc1_pre,
            fc1_act,
            mask,
            output,
        })
    }

    /// Inference or seeded train-mode forward; returns the 28-element output.
    pub fn forward(&self, x: &Array3<f64>, train_mode: bool, seed: u64) -> Result<Array1<f64>> {
        if train_mode {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mask = self.sample_dropout_mask(&mut rng);
            Ok(self.forward_cached(x, DropoutMode::Mask(&mask))?.output)
        } else {
            Ok(self.forward_cached(x, DropoutMode::Infer)?.output)
        }
    }

    /// Runs only the first `n_blocks` convolution blocks (inference path),
    /// used when learning hierarchical priors.
    pub fn forward_conv_blocks(&self, x: &Array3<f64>, n_blocks: usize) -> Result<Array3<f64>> {
        let mut cur = x.clone();
        for (i, layer) in self.conv.iter().take(n_blocks).enumerate() {
            let (_, hi, wi) = cur.dim();
            let cols = im2col3(&cur);
            let wm = layer.weight_matrix();
            let mut z = matmul(&wm, &cols);
            for (mut row, &b) in z.outer_iter_mut().zip(layer.bias.iter()) {
                row.mapv_inplace(|v| v + b);
            }
            let out_c = layer.weight.dim().0;
            let relu = Array3::from_shape_fn((out_c, hi, wi), |(o, y, xx)| {
                z[[o, y * wi + xx]].max(0.0)
            });
            let (lrn_out, _) = lrn_forward(&relu, &self.config.lrn);
            cur = if self.config.pool_after[i] {
                maxpool2_forward(&lrn_out).0
            } else {
                lrn_out
            };
        }
        Ok(cur)
    }

    /// Backpropagates d(loss)/d(output) through the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, dout: &Array1<f64>) -> Gradients {
        let mut g = Gradients::zeros_like(self);

        // fc2
        for o in 0..self.config.output_width {
            g.fc2_b[o] = dout[o];
            for k in 0..self.config.fc1_width {
                g.fc2_w[[o, k]] = dout[o] * cache.fc1_act[k];
            }
        }
        let mut d_act = Array1::<f64>::zeros(self.config.fc1_width);
        for k in 0..self.config.fc1_width {
            let mut acc = 0.0;
            for o in 0..self.config.output_width {
                acc += self.fc2.weight[[o, k]] * dout[o];
            }
            d_act[k] = acc;
        }
        // dropout and relu
        let d_relu1 = match &cache.mask {
            Some(m) => &d_act * m,
            None => d_act.mapv(|v| v * self.config.dropout_keep),
        };
        let d_fc1pre = Array1::from_shape_fn(self.config.fc1_width, |k| {
            if cache.fc1_pre[k] > 0.0 {
                d_relu1[k]
            } else {
                0.0
            }
        });
        // fc1
        let fc_in = cache.flat.len();
        for o in 0..self.config.fc1_width {
            g.fc1_b[o] = d_fc1pre[o];
            let dv = d_fc1pre[o];
            if dv != 0.0 {
                for k in 0..fc_in {
                    g.fc1_w[[o, k]] = dv * cache.flat[k];
                }
            }
        }
        let mut d_flat = Array1::<f64>::zeros(fc_in);
        for o in 0..self.config.fc1_width {
            let dv = d_fc1pre[o];
            if dv != 0.0 {
                for k in 0..fc_in {
                    d_flat[k] += self.fc1.weight[[o, k]] * dv;
                }
            }
        }

        // reshape to the last block's output
        let (h4, w4) = self.config.block_dims()[3];
        let c4 = self.config.conv_widths[3];
        let mut d_cur =
            Array3::from_shape_vec((c4, h4, w4), d_flat.to_vec()).expect("flat reshape");

        for i in (0..4).rev() {
            // pool
            let d_lrn_out = match &cache.pool_idx[i] {
                Some(idx) => maxpool2_backward(&d_cur, idx, cache.pool_in_dim[i]),
                None => d_cur,
            };
            // lrn
            let d_relu = lrn_backward(
                &cache.lrn_in[i],
                &cache.lrn_den[i],
                &d_lrn_out,
                &self.config.lrn,
            );
            // relu on pre-activation
            let (oc, hh, ww) = d_relu.dim();
            let mut dz = Array2::<f64>::zeros((oc, hh * ww));
            for o in 0..oc {
                for y in 0..hh {
                    for xx in 0..ww {
                        if cache.conv_pre[i][[o, y * ww + xx]] > 0.0 {
                            dz[[o, y * ww + xx]] = d_relu[[o, y, xx]];
                        }
                    }
                }
            }
            // conv weights: dW = dz cols^T, db = row sums
            let dwm = matmul_nt(&dz, &cache.conv_cols[i]);
            let (in_c, in_h, in_w) = cache.conv_in[i].dim();
            for oo in 0..oc {
                g.conv_b[i][oo] = dz.row(oo).sum();
                for ii in 0..in_c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            g.conv_w[i][[oo, ii, ky, kx]] = dwm[[oo, ii * 9 + ky * 3 + kx]];
                        }
                    }
                }
            }
            // input gradient
            let wm = self.conv[i].weight_matrix();
            let dcols = matmul_tn(&wm, &dz);
            d_cur = col2im3(&dcols, in_c, in_h, in_w);
        }
        g
    }

    /// In-place SGD update: w -= lr * g.
    pub fn apply_gradients(&mut self, g: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self
            .conv
            .iter_mut()
            .zip(g.conv_w.iter().zip(g.conv_b.iter()))
        {
            ndarray::Zip::from(&mut layer.weight)
                .and(gw)
                .for_each(|w, &d| *w -= lr * d);
            ndarray::Zip::from(&mut layer.bias)
                .and(gb)
                .for_each(|w, &d| *w -= lr * d);
        }
        ndarray::Zip::from(&mut self.fc1.weight)
            .and(&g.fc1_w)
            .for_each(|w, &d| *w -= lr * d);
        ndarray::Zip::from(&mut self.fc1.bias)
            .and(&g.fc1_b)
            .for_each(|w, &d| *w -= lr * d);
        ndarray::Zip::from(&mut self.fc2.weight)
            .and(&g.fc2_w)
            .for_each(|w, &d| *w -= lr * d);
        ndarray::Zip::from(&mut self.fc2.bias)
            .and(&g.fc2_b)
            .for_each(|w, &d| *w -= lr * d);
    }

    /// All parameter tensors flattened in declared layer order, f32, for
    /// checkpoints.
    pub fn flatten_weights(&self) -> Vec<f32> {
        let mut out = Vec::new();
        for l in &self.conv {
            out.extend(l.weight.iter().map(|&v| v as f32));
            out.extend(l.bias.iter().map(|&v| v as f32));
        }
        out.extend(self.fc1.weight.iter().map(|&v| v as f32));
        out.extend(self.fc1.bias.iter().map(|&v| v as f32));
        out.extend(self.fc2.weight.iter().map(|&v| v as f32));
        out.extend(self.fc2.bias.iter().map(|&v| v as f32));
        out
    }

    /// Rebuilds a network from flattened f32 weights.
    pub fn from_flat_weights(
        config: NetConfig,
        init_mode: InitMode,
        flat: &[f32],
    ) -> Result<Self> {
        config.validate()?;
        let mut net = RegressionNet::new_random(config, 0)?;
        net.init_mode = init_mode;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[f32]> {
            if pos + n > flat.len() {
                return Err(DssError::config("weight buffer too short"));
            }
            let s = &flat[pos..pos + n];
            pos += n;
            Ok(s)
        };
        for l in &mut net.conv {
            let n = l.weight.len();
            let s = take(n)?;
            for (w, &v) in l.weight.iter_mut().zip(s) {
                *w = v as f64;
            }
            let n = l.bias.len();
            let s = take(n)?;
            for (w, &v) in l.bias.iter_mut().zip(s) {
                *w = v as f64;
            }
        }
        for (wgt, bias) in [
            (&mut net.fc1.weight, &mut net.fc1.bias),
            (&mut net.fc2.weight, &mut net.fc2.bias),
        ] {
            let n = wgt.len();
            let s = take(n)?;
            for (w, &v) in wgt.iter_mut().zip(s) {
                *w = v as f64;
            }
            let n = bias.len();
            let s = take(n)?;
            for (w, &v) in bias.iter_mut().zip(s) {
                *w = v as f64;
            }
        }
        if pos != flat.len() {
            return Err(DssError::config("weight buffer has trailing data"));
        }
        Ok(net)
    }
}
