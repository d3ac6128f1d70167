//! Channel-separated convolutional autoencoder producing per-frame visual
//! features: one small conv/FC autoencoder per colour channel, bottlenecks
//! concatenated R‖G‖B.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{adam_step, init_uniform, prefixed, AdamConfig, AdamState, Parameterized, RngStream, Tensor};
use std::collections::HashMap;

use crate::synth::dataset::{Dataset, Sample};
use crate::synth::render::{FrameSize, Image};
use crate::synth::{Pattern, Viewpoint};

pub const CONV1: usize = 8;
pub const CONV2: usize = 16;
pub const BOTTLENECK: usize = 10;
pub const CHANNELS: usize = 3;
pub const FEATURES: usize = BOTTLENECK * CHANNELS;

/// Indices `o` in `0..n_out` with `0 <= 2o + k - 1 < n_in`.
fn span(n_out: usize, k: usize, n_in: usize) -> std::ops::Range<usize> {
    let lo = usize::from(k == 0);
    let hi = ((n_in + 2 - k) / 2).min(n_out);
    lo..hi.max(lo)
}

/// 3×3 kernel, stride 2, padding 1: `out[co, y, x] = b[co] + Σ w[co, ci, ky, kx] · in[ci, 2y+ky−1, 2x+kx−1]`.
fn conv_forward(w: &Tensor<f64>, b: &Tensor<f64>, input: &[f64], cin: usize, h: usize, wd: usize) -> Vec<f64> {
    let cout = b.len();
    let (oh, ow) = (h / 2, wd / 2);
    let mut out = vec![0.0; cout * oh * ow];
    let wt = w.data();
    for co in 0..cout {
        let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = b.data()[co]);
        for ci in 0..cin {
            let src = &input[ci * h * wd..(ci + 1) * h * wd];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = wt[((co * cin + ci) * 3 + ky) * 3 + kx];
                    let xs = span(ow, kx, wd);
                    for oy in span(oh, ky, h) {
                        let row = &src[(2 * oy + ky - 1) * wd..];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        for ox in xs.clone() {
                            dst[ox] += k * row[2 * ox + kx - 1];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`conv_forward`]: accumulates `dw`, `db` and returns `d input`.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    w: &Tensor<f64>,
    input: &[f64],
    dout: &[f64],
    cin: usize,
    h: usize,
    wd: usize,
    gw: &mut Tensor<f64>,
    gb: &mut Tensor<f64>,
    need_input_grad: bool,
) -> Vec<f64> {
    let cout = gb.len();
    let (oh, ow) = (h / 2, wd / 2);
    let mut din = vec![0.0; if need_input_grad { cin * h * wd } else { 0 }];
    let wt = w.data();
    for co in 0..cout {
        let g = &dout[co * oh * ow..(co + 1) * oh * ow];
        gb.data_mut()[co] += g.iter().sum::<f64>();
        for ci in 0..cin {
            let src = &input[ci * h * wd..(ci + 1) * h * wd];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wi = ((co * cin + ci) * 3 + ky) * 3 + kx;
                    let k = wt[wi];
                    let xs = span(ow, kx, wd);
                    let mut acc = 0.0;
                    for oy in span(oh, ky, h) {
                        let base = (2 * oy + ky - 1) * wd + kx;
                        let grow = &g[oy * ow..(oy + 1) * ow];
                        for ox in xs.clone() {
                            acc += grow[ox] * src[base + 2 * ox - 1];
                        }
                        if need_input_grad {
                            let dst = &mut din[ci * h * wd..(ci + 1) * h * wd];
                            for ox in xs.clone() {
                                dst[base + 2 * ox - 1] += k * grow[ox];
                            }
                        }
                    }
                    gw.data_mut()[wi] += acc;
                }
            }
        }
    }
    din
}

/// Transposed convolution doubling the spatial size; weights `[cin, cout, 3, 3]`.
fn deconv_forward(w: &Tensor<f64>, b: &Tensor<f64>, input: &[f64], cin: usize, h: usize, wd: usize) -> Vec<f64> {
    let cout = b.len();
    let (oh, ow) = (2 * h, 2 * wd);
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        out[co * oh * ow..(co + 1) * oh * ow].iter_mut().for_each(|v| *v = b.data()[co]);
    }
    let wt = w.data();
    for ci in 0..cin {
        let src = &input[ci * h * wd..(ci + 1) * h * wd];
        for co in 0..cout {
            let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = wt[((ci * cout + co) * 3 + ky) * 3 + kx];
                    let xs = span(wd, kx, ow);
                    for iy in span(h, ky, oh) {
                        let base = (2 * iy + ky - 1) * ow + kx;
                        let row = &src[iy * wd..(iy + 1) * wd];
                        for ix in xs.clone() {
                            plane[base + 2 * ix - 1] += k * row[ix];
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn deconv_backward(
    w: &Tensor<f64>,
    input: &[f64],
    dout: &[f64],
    cin: usize,
    h: usize,
    wd: usize,
    gw: &mut Tensor<f64>,
    gb: &mut Tensor<f64>,
) -> Vec<f64> {
    let cout = gb.len();
    let (oh, ow) = (2 * h, 2 * wd);
    for co in 0..cout {
        gb.data_mut()[co] += dout[co * oh * ow..(co + 1) * oh * ow].iter().sum::<f64>();
    }
    let mut din = vec![0.0; cin * h * wd];
    let wt = w.data();
    for ci in 0..cin {
        let src = &input[ci * h * wd..(ci + 1) * h * wd];
        let dst = &mut din[ci * h * wd..(ci + 1) * h * wd];
        for co in 0..cout {
            let g = &dout[co * oh * ow..(co + 1) * oh * ow];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wi = ((ci * cout + co) * 3 + ky) * 3 + kx;
                    let k = wt[wi];
                    let xs = span(wd, kx, ow);
                    let mut acc = 0.0;
                    for iy in span(h, ky, oh) {
                        let base = (2 * iy + ky - 1) * ow + kx;
                        for ix in xs.clone() {
                            let gv = g[base + 2 * ix - 1];
                            acc += gv * src[iy * wd + ix];
                            dst[iy * wd + ix] += k * gv;
                        }
                    }
                    gw.data_mut()[wi] += acc;
                }
            }
        }
    }
    din
}

fn kernel_init(rng: &mut RngStream, first: usize, second: usize, fan_in: usize, fan_out: usize) -> Tensor<f64> {
    let flat = init_uniform::<f64>(rng, fan_in * 9, fan_out * 9);
    // Only the bound matters; reshape the first first*second*9 draws.
    let data: Vec<f64> = flat.into_data().into_iter().take(first * second * 9).collect();
    Tensor::from_vec(&[first, second, 3, 3], data).expect("kernel size")
}

/// Autoencoder for one colour channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CaeChannel {
    pub size: FrameSize,
    pub conv1_w: Tensor<f64>,
    pub conv1_b: Tensor<f64>,
    pub conv2_w: Tensor<f64>,
    pub conv2_b: Tensor<f64>,
    pub enc_w: Tensor<f64>,
    pub enc_b: Tensor<f64>,
    pub dec_w: Tensor<f64>,
    pub dec_b: Tensor<f64>,
    pub deconv1_w: Tensor<f64>,
    pub deconv1_b: Tensor<f64>,
    pub deconv2_w: Tensor<f64>,
    pub deconv2_b: Tensor<f64>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct CaeCache {
    input: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    z: Vec<f64>,
    d0: Vec<f64>,
    d1: Vec<f64>,
    pub recon: Vec<f64>,
}

impl CaeCache {
    pub fn bottleneck(&self) -> &[f64] {
        &self.z
    }
}

impl CaeChannel {
    fn flat(size: FrameSize) -> usize {
        CONV2 * (size.height / 4) * (size.width / 4)
    }

    pub fn zeros(size: FrameSize) -> Self {
        let flat = Self::flat(size);
        CaeChannel {
            size,
            conv1_w: Tensor::zeros(&[CONV1, 1, 3, 3]),
            conv1_b: Tensor::zeros(&[CONV1]),
            conv2_w: Tensor::zeros(&[CONV2, CONV1, 3, 3]),
            conv2_b: Tensor::zeros(&[CONV2]),
            enc_w: Tensor::zeros(&[BOTTLENECK, flat]),
            enc_b: Tensor::zeros(&[BOTTLENECK]),
            dec_w: Tensor::zeros(&[flat, BOTTLENECK]),
            dec_b: Tensor::zeros(&[flat]),
            deconv1_w: Tensor::zeros(&[CONV2, CONV1, 3, 3]),
            deconv1_b: Tensor::zeros(&[CONV1]),
            deconv2_w: Tensor::zeros(&[CONV1, 1, 3, 3]),
            deconv2_b: Tensor::zeros(&[1]),
        }
    }

    pub fn init(size: FrameSize, rng: &mut RngStream) -> Result<Self> {
        size.validate()?;
        let flat = Self::flat(size);
        let mut p = Self::zeros(size);
        p.conv1_w = kernel_init(rng, CONV1, 1, 1, CONV1);
        p.conv2_w = kernel_init(rng, CONV2, CONV1, CONV1, CONV2);
        p.enc_w = init_uniform(rng, flat, BOTTLENECK);
        p.dec_w = init_uniform(rng, BOTTLENECK, flat);
        p.deconv1_w = kernel_init(rng, CONV2, CONV1, CONV2, CONV1);
        p.deconv2_w = kernel_init(rng, CONV1, 1, CONV1, 1);
        Ok(p)
    }

    fn check(&self, image: &[f64]) -> Result<()> {
        let want = self.size.height * self.size.width;
        if image.len() != want {
            return Err(Error::shape("CAE channel image", want, image.len()));
        }
        Ok(())
    }

    pub fn forward(&self, image: &[f64]) -> Result<CaeCache> {
        self.check(image)?;
        let (h, w) = (self.size.height, self.size.width);
        let mut a1 = conv_forward(&self.conv1_w, &self.conv1_b, image, 1, h, w);
        a1.iter_mut().for_each(|v| *v = v.tanh());
        let mut a2 = conv_forward(&self.conv2_w, &self.conv2_b, &a1, CONV1, h / 2, w / 2);
        a2.iter_mut().for_each(|v| *v = v.tanh());
        // Linear code: a tanh here saturates under Adam given the large fan-in.
        let z: Vec<f64> = crate::numerics::affine(&self.enc_w, &self.enc_b, &a2)?;
        let d0: Vec<f64> = crate::numerics::affine(&self.dec_w, &self.dec_b, &z)?.into_iter().map(f64::tanh).collect();
        let mut d1 = deconv_forward(&self.deconv1_w, &self.deconv1_b, &d0, CONV2, h / 4, w / 4);
        d1.iter_mut().for_each(|v| *v = v.tanh());
        let mut recon = deconv_forward(&self.deconv2_w, &self.deconv2_b, &d1, CONV1, h / 2, w / 2);
        recon.iter_mut().for_each(|v| *v = crate::numerics::sigmoid(*v));
        Ok(CaeCache {
            input: image.to_vec(),
            a1,
            a2,
            z,
            d0,
            d1,
            recon,
        })
    }

    /// 10-dimensional bottleneck code of one channel image.
    pub fn encode(&self, image: &[f64]) -> Result<Vec<f64>> {
        self.check(image)?;
        let (h, w) = (self.size.height, self.size.width);
        let mut a1 = conv_forward(&self.conv1_w, &self.conv1_b, image, 1, h, w);
        a1.iter_mut().for_each(|v| *v = v.tanh());
        let mut a2 = conv_forward(&self.conv2_w, &self.conv2_b, &a1, CONV1, h / 2, w / 2);
        a2.iter_mut().for_each(|v| *v = v.tanh());
        crate::numerics::affine(&self.enc_w, &self.enc_b, &a2)
    }

    /// Mean squared reconstruction error and its gradient, accumulated into `grads`.
    pub fn loss_grad(&self, image: &[f64], grads: &mut CaeChannel) -> Result<f64> {
        let c = self.forward(image)?;
        let (h, w) = (self.size.height, self.size.width);
        let n = image.len() as f64;
        let mut loss = 0.0;
        let dy: Vec<f64> = c
            .recon
            .iter()
            .zip(image)
            .map(|(&y, &x)| {
                loss += (y - x) * (y - x);
                2.0 * (y - x) / n * y * (1.0 - y)
            })
            .collect();
        let mut dd1 = deconv_backward(&self.deconv2_w, &c.d1, &dy, CONV1, h / 2, w / 2, &mut grads.deconv2_w, &mut grads.deconv2_b);
        tanh_back(&mut dd1, &c.d1);
        let mut dd0 = deconv_backward(&self.deconv1_w, &c.d0, &dd1, CONV2, h / 4, w / 4, &mut grads.deconv1_w, &mut grads.deconv1_b);
        tanh_back(&mut dd0, &c.d0);
        let dz = dense_backward(&self.dec_w, &c.z, &dd0, &mut grads.dec_w, &mut grads.dec_b);
        let mut da2 = dense_backward(&self.enc_w, &c.a2, &dz, &mut grads.enc_w, &mut grads.enc_b);
        tanh_back(&mut da2, &c.a2);
        let mut da1 = conv_backward(&self.conv2_w, &c.a1, &da2, CONV1, h / 2, w / 2, &mut grads.conv2_w, &mut grads.conv2_b, true);
        tanh_back(&mut da1, &c.a1);
        conv_backward(&self.conv1_w, &c.input, &da1, 1, h, w, &mut grads.conv1_w, &mut grads.conv1_b, false);
        Ok(loss / n)
    }

    pub fn loss(&self, image: &[f64]) -> Result<f64> {
        let c = self.forward(image)?;
        Ok(c.recon.iter().zip(image).map(|(y, x)| (y - x) * (y - x)).sum::<f64>() / image.len() as f64)
    }
}

fn tanh_back(d: &mut [f64], act: &[f64]) {
    for (g, a) in d.iter_mut().zip(act) {
        *g *= 1.0 - a * a;
    }
}

fn dense_backward(w: &Tensor<f64>, x: &[f64], dout: &[f64], gw: &mut Tensor<f64>, gb: &mut Tensor<f64>) -> Vec<f64> {
    crate::numerics::outer_acc(gw, dout, x);
    for (b, g) in gb.data_mut().iter_mut().zip(dout) {
        *b += g;
    }
    let mut dx = vec![0.0; x.len()];
    crate::numerics::gemv_t_acc(w, dout, &mut dx);
    dx
}

impl Parameterized<f64> for CaeChannel {
    fn params(&self) -> Vec<(String, &Tensor<f64>)> {
        vec![
            ("conv1_w".into(), &self.conv1_w),
            ("conv1_b".into(), &self.conv1_b),
            ("conv2_w".into(), &self.conv2_w),
            ("conv2_b".into(), &self.conv2_b),
            ("enc_w".into(), &self.enc_w),
            ("enc_b".into(), &self.enc_b),
            ("dec_w".into(), &self.dec_w),
            ("dec_b".into(), &self.dec_b),
            ("deconv1_w".into(), &self.deconv1_w),
            ("deconv1_b".into(), &self.deconv1_b),
            ("deconv2_w".into(), &self.deconv2_w),
            ("deconv2_b".into(), &self.deconv2_b),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        vec![
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.dec_w,
            &mut self.dec_b,
            &mut self.deconv1_w,
            &mut self.deconv1_b,
            &mut self.deconv2_w,
            &mut self.deconv2_b,
        ]
    }
}

/// The three channel autoencoders.
#[derive(Clone, Debug, PartialEq)]
pub struct Cae {
    pub channels: [CaeChannel; CHANNELS],
    /// Per-dimension shift and scale that standardise the raw codes; fitted
    /// on the training frames, identity before that.
    pub feat_mean: Tensor<f64>,
    pub feat_scale: Tensor<f64>,
}

/// Floor on a feature's spread when standardising.
const MIN_FEATURE_STD: f64 = 1e-3;

/// Default spread of each standardised feature. Comparable to the joints'
/// spread, so vision does not drown out the trajectory in the action streams.
pub const DEFAULT_FEATURE_STD: f64 = 0.2;

fn default_feature_std() -> f64 {
    DEFAULT_FEATURE_STD
}

pub const CHANNEL_NAMES: [&str; CHANNELS] = ["r", "g", "b"];

impl Cae {
    pub fn zeros(size: FrameSize) -> Self {
        Cae {
            channels: [CaeChannel::zeros(size), CaeChannel::zeros(size), CaeChannel::zeros(size)],
            feat_mean: Tensor::zeros(&[FEATURES]),
            feat_scale: Tensor::vector(vec![1.0; FEATURES]),
        }
    }

    pub fn init(size: FrameSize, seed: u64) -> Result<Self> {
        let root = RngStream::new(seed);
        let mk = |c: u64| CaeChannel::init(size, &mut root.derive(c));
        Ok(Cae {
            channels: [mk(0)?, mk(1)?, mk(2)?],
            feat_mean: Tensor::zeros(&[FEATURES]),
            feat_scale: Tensor::vector(vec![1.0; FEATURES]),
        })
    }

    pub fn size(&self) -> FrameSize {
        self.channels[0].size
    }

    /// Standardised visual feature vector of one frame, `R‖G‖B`.
    pub fn features(&self, img: &Image) -> Result<Vec<f64>> {
        let raw = self.raw_features(img)?;
        let (m, s) = (self.feat_mean.data(), self.feat_scale.data());
        Ok(raw.iter().enumerate().map(|(k, v)| (v - m[k]) / s[k]).collect())
    }

    /// Fits the standardisation to `frames`: zero mean and a spread of
    /// `target_std` per dimension, raw spread floored at `MIN_FEATURE_STD`.
    pub fn fit_normalisation(&mut self, frames: &[Image], target_std: f64) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::EmptySequence("feature normalisation frames"));
        }
        if !(target_std > 0.0 && target_std.is_finite()) {
            return Err(Error::Config(format!("feature spread must be positive, got {target_std}")));
        }
        let raw = frames.iter().map(|f| self.raw_features(f)).collect::<Result<Vec<_>>>()?;
        let n = raw.len() as f64;
        let mean: Vec<f64> = (0..FEATURES).map(|k| raw.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..FEATURES)
            .map(|k| {
                let var = raw.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                var.sqrt().max(MIN_FEATURE_STD) / target_std
            })
            .collect();
        self.feat_mean = Tensor::vector(mean);
        self.feat_scale = Tensor::vector(scale);
        Ok(())
    }

    /// Concatenated bottleneck codes before standardisation.
    pub fn raw_features(&self, img: &Image) -> Result<Vec<f64>> {
        if img.size() != self.size() {
            return Err(Error::shape(
                "frame size",
                format!("{}x{}", self.size().height, self.size().width),
                format!("{}x{}", img.height, img.width),
            ));
        }
        let mut out = Vec::with_capacity(FEATURES);
        for (c, p) in self.channels.iter().enumerate() {
            out.extend(p.encode(&img.channel(c))?);
        }
        Ok(out)
    }
}

impl Parameterized<f64> for Cae {
    fn params(&self) -> Vec<(String, &Tensor<f64>)> {
        let mut out = Vec::new();
        for (name, ch) in CHANNEL_NAMES.iter().zip(&self.channels) {
            out.extend(prefixed(name, ch.params()));
        }
        out.push(("norm.mean".into(), &self.feat_mean));
        out.push(("norm.scale".into(), &self.feat_scale));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        let mut out: Vec<&mut Tensor<f64>> = self.channels.iter_mut().flat_map(|c| c.params_mut()).collect();
        out.push(&mut self.feat_mean);
        out.push(&mut self.feat_scale);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Keep every `stride`-th frame of each sequence.
    pub stride: usize,
    /// Spread of each feature dimension after standardisation.
    #[serde(default = "default_feature_std")]
    pub feature_std: f64,
}

impl Default for CaeTrainConfig {
    fn default() -> Self {
        CaeTrainConfig {
            epochs: 20,
            batch_size: 16,
            lr: 2e-3,
            seed: 0,
            stride: 5,
            feature_std: DEFAULT_FEATURE_STD,
        }
    }
}

/// Minimises mean squared reconstruction error of one channel with Adam.
/// Returns the parameters and the mean training loss after each epoch.
pub fn cae_train_channel(
    init: CaeChannel,
    images: &[Vec<f64>],
    cfg: &CaeTrainConfig,
    seed: u64,
) -> Result<(CaeChannel, Vec<f64>)> {
    if images.is_empty() {
        return Err(Error::EmptySequence("CAE training frames"));
    }
    let mut p = init;
    let mut grads = CaeChannel::zeros(p.size);
    let mut state = AdamState::for_params(&p);
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut rng = RngStream::new(seed);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            grads.zero_params();
            for &i in batch {
                total += p.loss_grad(&images[i], &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grads.params_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            let g: Vec<&Tensor<f64>> = grads.params().into_iter().map(|(_, t)| t).collect();
            adam_step(&mut p.params_mut(), &g, &mut state, &adam)?;
        }
        let mean = total / images.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("CAE reconstruction loss".into()));
        }
        history.push(mean);
    }
    Ok((p, history))
}

/// Mean reconstruction error of one channel over `images`.
pub fn channel_mse(p: &CaeChannel, images: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for img in images {
        total += p.loss(img)?;
    }
    Ok(total / images.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaeReport {
    pub mse_init: [f64; CHANNELS],
    pub mse_final: [f64; CHANNELS],
    pub history: [Vec<f64>; CHANNELS],
}

/// Trains all three channels independently on the given frames.
pub fn cae_train(frames: &[Image], cfg: &CaeTrainConfig) -> Result<(Cae, CaeReport)> {
    let first = frames.first().ok_or(Error::EmptySequence("CAE training frames"))?;
    let mut cae = Cae::init(first.size(), cfg.seed)?;
    let mut report = CaeReport {
        mse_init: [0.0; CHANNELS],
        mse_final: [0.0; CHANNELS],
        history: Default::default(),
    };
    for c in 0..CHANNELS {
        let images: Vec<Vec<f64>> = frames.iter().map(|f| f.channel(c)).collect();
        report.mse_init[c] = channel_mse(&cae.channels[c], &images)?;
        let (p, hist) = cae_train_channel(cae.channels[c].clone(), &images, cfg, cfg.seed ^ (0x100 + c as u64))?;
        report.mse_final[c] = channel_mse(&p, &images)?;
        report.history[c] = hist;
        cae.channels[c] = p;
    }
    cae.fit_normalisation(frames, cfg.feature_std)?;
    Ok((cae, report))
}

/// Frames for CAE training: every `stride`-th frame of each pattern in both
/// viewpoints. Frames do not depend on the variation, so each pattern is
/// taken once.
pub fn training_frames(ds: &Dataset, stride: usize, samples: Option<&[usize]>) -> Vec<Image> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let all: Vec<usize> = (0..ds.samples.len()).collect();
    for &i in samples.unwrap_or(&all) {
        let s = &ds.samples[i];
        if !seen.insert(s.pattern) {
            continue;
        }
        for view in [Viewpoint::Own, Viewpoint::Opposite] {
            for t in (0..s.len()).step_by(stride.max(1)) {
                out.push(s.frame(t, view, ds.config.frame));
            }
        }
    }
    out
}

/// Per-frame features of every pattern in both viewpoints, keyed by pattern.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureBank {
    pub features: HashMap<(Pattern, Viewpoint), Vec<Vec<f64>>>,
}

impl FeatureBank {
    /// Encodes the patterns of `samples`, or of the whole dataset when `None`.
    pub fn encode(cae: &Cae, ds: &Dataset, samples: Option<&[usize]>) -> Result<Self> {
        let mut features = HashMap::new();
        let all: Vec<usize> = (0..ds.samples.len()).collect();
        for &i in samples.unwrap_or(&all) {
            let s = &ds.samples[i];
            for view in [Viewpoint::Own, Viewpoint::Opposite] {
                if features.contains_key(&(s.pattern, view)) {
                    continue;
                }
                let seq = (0..s.len())
                    .map(|t| cae.features(&s.frame(t, view, ds.config.frame)))
                    .collect::<Result<Vec<_>>>()?;
                features.insert((s.pattern, view), seq);
            }
        }
        Ok(FeatureBank { features })
    }

    pub fn get(&self, s: &Sample, view: Viewpoint) -> Option<Vec<Vec<f64>>> {
        self.features.get(&(s.pattern, view)).cloned()
    }
}
