//! Dense linear algebra, activations, the deterministic RNG, Adam, and the
//! finite-difference gradient checker.
//!
//! Everything here works on plain row-major buffers. Gradients elsewhere in
//! the crate are hand-derived per layer; this module only supplies the
//! primitives and the tooling used to verify them.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating point type a model can be instantiated with.
pub trait Scalar:
    Float
    + FromPrimitive
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    const BITS: u32;

    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const BITS: u32 = 32;

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const BITS: u32 = 64;

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Numeric precision a model runs in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Row-major dense tensor of rank 1 or 2.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    dims: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![F::zero(); len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<F>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if dims.is_empty() || dims.contains(&0) || len != data.len() {
            return Err(Error::shape("tensor", format!("{dims:?}"), data.len()));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<F>) -> Self {
        Tensor {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    pub fn cols(&self) -> usize {
        if self.dims.len() > 1 {
            self.dims[1]
        } else {
            1
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = F::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum()
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| G::lit(v.as_f64())).collect(),
        }
    }

    /// `self += scale * other`, shapes must agree.
    pub fn add_scaled(&mut self, other: &Tensor<F>, scale: F) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(
                "add_scaled",
                format!("{:?}", self.dims),
                format!("{:?}", other.dims),
            ));
        }
        axpy(scale, &other.data, &mut self.data);
        Ok(())
    }
}

#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv = *yv + alpha * *xv;
    }
}

/// `out += W x`, unchecked beyond debug assertions.
#[inline]
pub fn gemv_acc<F: Scalar>(w: &Tensor<F>, x: &[F], out: &mut [F]) {
    debug_assert_eq!(w.cols(), x.len());
    debug_assert_eq!(w.rows(), out.len());
    let c = w.cols();
    for (o, row) in out.iter_mut().zip(w.data.chunks_exact(c)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ g`
#[inline]
pub fn gemv_t_acc<F: Scalar>(w: &Tensor<F>, g: &[F], out: &mut [F]) {
    debug_assert_eq!(w.rows(), g.len());
    debug_assert_eq!(w.cols(), out.len());
    let c = w.cols();
    for (gv, row) in g.iter().zip(w.data.chunks_exact(c)) {
        if *gv != F::zero() {
            axpy(*gv, row, out);
        }
    }
}

/// `grad += g xᵀ`
#[inline]
pub fn outer_acc<F: Scalar>(grad: &mut Tensor<F>, g: &[F], x: &[F]) {
    debug_assert_eq!(grad.rows(), g.len());
    debug_assert_eq!(grad.cols(), x.len());
    let c = grad.cols();
    for (gv, row) in g.iter().zip(grad.data.chunks_exact_mut(c)) {
        if *gv != F::zero() {
            axpy(*gv, x, row);
        }
    }
}

/// Checked matrix-vector product.
pub fn matvec<F: Scalar>(w: &Tensor<F>, x: &[F]) -> Result<Vec<F>> {
    if w.dims().len() != 2 || w.cols() != x.len() {
        return Err(Error::shape(
            "matvec",
            format!("{:?} with input of {}", w.dims(), w.cols()),
            format!("input of {}", x.len()),
        ));
    }
    let mut out = vec![F::zero(); w.rows()];
    gemv_acc(w, x, &mut out);
    Ok(out)
}

/// Checked `W x + b`.
pub fn affine<F: Scalar>(w: &Tensor<F>, b: &Tensor<F>, x: &[F]) -> Result<Vec<F>> {
    if b.len() != w.rows() {
        return Err(Error::shape("affine bias", w.rows(), b.len()));
    }
    let mut out = matvec(w, x)?;
    axpy(F::one(), b.data(), &mut out);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Softmax,
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax_in_place<F: Scalar>(v: &mut [F]) {
    let max = v.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

pub fn activate<F: Scalar>(kind: Activation, v: &[F]) -> Vec<F> {
    match kind {
        Activation::Sigmoid => v.iter().map(|&x| sigmoid(x)).collect(),
        Activation::Tanh => v.iter().map(|x| x.tanh()).collect(),
        Activation::Softmax => {
            let mut out = v.to_vec();
            softmax_in_place(&mut out);
            out
        }
    }
}

/// Seeded xoshiro256++ stream. The 64-bit seed is expanded with SplitMix64,
/// so the sequence depends only on the seed, never on the platform.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for item `index`, seeded `seed ^ index`.
    pub fn derive(&self, index: u64) -> RngStream {
        RngStream::new(self.seed ^ index)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `0..n` (Lemire's widening multiply, rejection on the low word).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.inner.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Glorot-uniform `fan_out × fan_in` matrix.
pub fn init_uniform<F: Scalar>(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> Tensor<F> {
    assert!(fan_in > 0 && fan_out > 0, "init_uniform extents must be positive");
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| F::lit(rng.uniform(-bound, bound)))
        .collect();
    Tensor {
        dims: vec![fan_out, fan_in],
        data,
    }
}

/// Anything holding an ordered, named list of trainable tensors.
///
/// `params` and `params_mut` must list tensors in the same order.
pub trait Parameterized<F: Scalar> {
    fn params(&self) -> Vec<(String, &Tensor<F>)>;

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    fn zero_params(&mut self) {
        for t in self.params_mut() {
            t.fill_zero();
        }
    }
}

impl<F: Scalar> Parameterized<F> for Tensor<F> {
    fn params(&self) -> Vec<(String, &Tensor<F>)> {
        vec![("x".to_string(), self)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        vec![self]
    }
}

pub(crate) fn prefixed<'a, F: Scalar>(
    prefix: &str,
    items: Vec<(String, &'a Tensor<F>)>,
) -> Vec<(String, &'a Tensor<F>)> {
    items
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
    pub step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn for_params<P: Parameterized<F> + ?Sized>(params: &P) -> Self {
        let sizes: Vec<usize> = params.params().iter().map(|(_, t)| t.len()).collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update over matching parameter and gradient lists.
pub fn adam_step<F: Scalar>(
    params: &mut [&mut Tensor<F>],
    grads: &[&Tensor<F>],
    state: &mut AdamState<F>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step tensor count",
            params.len(),
            format!("{} grads / {} moments", grads.len(), state.m.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.dims() != g.dims() || state.m[i].len() != p.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{:?}", p.dims()),
                format!("{:?}", g.dims()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (F::lit(cfg.beta1), F::lit(cfg.beta2));
    let c1 = F::lit(1.0 - cfg.beta1.powi(t));
    let c2 = F::lit(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (F::lit(cfg.lr), F::lit(cfg.eps));
    let one = F::one();
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: usize,
    pub worst: Option<ProbeResult>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss` at `probe_count`
/// distinct randomly chosen coordinates of `model` (all coordinates when there
/// are fewer). The model is restored exactly after each probe.
pub fn grad_check<M, L>(
    model: &mut M,
    analytic: &M,
    mut loss: L,
    probe_count: usize,
    step: f64,
    rng: &mut RngStream,
) -> Result<GradCheckReport>
where
    M: Parameterized<f64>,
    L: FnMut(&M) -> Result<f64>,
{
    let layout: Vec<(String, usize)> = analytic
        .params()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let model_sizes: Vec<usize> = model.params().iter().map(|(_, t)| t.len()).collect();
    if model_sizes != layout.iter().map(|(_, n)| *n).collect::<Vec<_>>() {
        return Err(Error::shape(
            "grad_check layout",
            format!("{:?}", layout),
            format!("{:?}", model_sizes),
        ));
    }
    let total: usize = layout.iter().map(|(_, n)| n).sum();
    let indices: Vec<usize> = if probe_count >= total {
        (0..total).collect()
    } else {
        let mut all: Vec<usize> = (0..total).collect();
        // partial Fisher-Yates
        for i in 0..probe_count {
            let j = i + rng.below(total - i);
            all.swap(i, j);
        }
        all.truncate(probe_count);
        all
    };

    let grads: Vec<&Tensor<f64>> = analytic.params().into_iter().map(|(_, t)| t).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        probes: 0,
        worst: None,
    };
    for flat in indices {
        let (mut tensor_idx, mut offset) = (0, flat);
        while offset >= layout[tensor_idx].1 {
            offset -= layout[tensor_idx].1;
            tensor_idx += 1;
        }
        let original = model.params_mut()[tensor_idx].data()[offset];
        model.params_mut()[tensor_idx].data_mut()[offset] = original + step;
        let plus = loss(model)?;
        model.params_mut()[tensor_idx].data_mut()[offset] = original - step;
        let minus = loss(model)?;
        model.params_mut()[tensor_idx].data_mut()[offset] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss while probing {}[{}]",
                layout[tensor_idx].0, offset
            )));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = grads[tensor_idx].data()[offset];
        let rel = relative_error(a, numeric);
        report.probes += 1;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some(ProbeResult {
                tensor: layout[tensor_idx].0.clone(),
                index: offset,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[rows, cols], data.to_vec()).unwrap()
    }

    #[test]
    fn matvec_identity_zero_and_hand_case() {
        let eye = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(matvec(&eye, &[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
        let zero = Tensor::<f64>::zeros(&[3, 2]);
        assert_eq!(matvec(&zero, &[5.0, 7.0]).unwrap(), vec![0.0; 3]);
        let a = mat(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matvec(&a, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_shape_error_names_extents() {
        let a = mat(2, 3, &[0.0; 6]);
        let err = matvec(&a, &[1.0, 2.0]).unwrap_err().to_string();
        assert!(err.contains('3') && err.contains('2'), "{err}");
    }

    #[test]
    fn long_dot_matches_naive_sum() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 - i as f64 * 0.1).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-10);
    }

    #[test]
    fn activation_fixed_points() {
        assert_eq!(activate(Activation::Softmax, &[0.0f64; 4]), vec![0.25; 4]);
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(activate(Activation::Tanh, &[0.0f64]), vec![0.0]);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        // exact value: 1 / (1 + e^-1000), which is 1 to double precision
        let y = activate(Activation::Softmax, &[1000.0f64, 0.0]);
        assert!(y.iter().all(|v| v.is_finite()));
        assert!((y[0] - 1.0).abs() < 1e-15);
        assert!(y[1] < 1e-300);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut p = Tensor::vector(vec![0.3f64, -1.2, 4.0]);
        let before = p.clone();
        let g = Tensor::<f64>::zeros(&[3]);
        let mut st = AdamState::for_params(&p);
        for _ in 0..50 {
            adam_step(&mut [&mut p], &[&g], &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step, 50);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // closed form: m̂ = g, v̂ = g², so Δ = lr·g/(|g| + ε)
        let mut p = Tensor::vector(vec![1.0f64]);
        let g = Tensor::vector(vec![2.0]);
        let mut st = AdamState::for_params(&p);
        let cfg = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        adam_step(&mut [&mut p], &[&g], &mut st, &cfg).unwrap();
        let expected = 1.0 - 1e-3 * 2.0 / (2.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert!((p.data()[0] - (1.0 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn adam_default_learning_rate() {
        assert_eq!(AdamConfig::default().lr, 1e-5);
        assert_eq!(AdamConfig::default().beta1, 0.9);
        assert_eq!(AdamConfig::default().beta2, 0.999);
        assert_eq!(AdamConfig::default().eps, 1e-8);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut p = Tensor::vector(vec![1.0f64, 2.0]);
        let g = Tensor::vector(vec![1.0f64]);
        let mut st = AdamState::for_params(&p);
        assert!(adam_step(&mut [&mut p], &[&g], &mut st, &AdamConfig::default()).is_err());
    }

    fn check_scalar(x0: f64, f: fn(f64) -> f64, df: f64) -> f64 {
        let mut x = Tensor::vector(vec![x0]);
        let g = Tensor::vector(vec![df]);
        let mut rng = RngStream::new(1);
        grad_check(&mut x, &g, |t| Ok(f(t.data()[0])), 1, 1e-5, &mut rng)
            .unwrap()
            .max_rel_error
    }

    #[test]
    fn grad_check_square_and_sine() {
        assert!(check_scalar(3.0, |x| x * x, 6.0) < 1e-9);
        assert!(check_scalar(1.0, f64::sin, 1f64.cos()) < 1e-8);
    }

    #[test]
    fn grad_check_detects_corrupted_gradient() {
        assert!(check_scalar(1.0, f64::sin, 1f64.cos() * 1.01) > 1e-3);
    }

    #[test]
    fn grad_check_rejects_non_finite_loss() {
        let mut x = Tensor::vector(vec![0.0f64]);
        let g = Tensor::vector(vec![0.0]);
        let mut rng = RngStream::new(1);
        let res = grad_check(&mut x, &g, |_| Ok(f64::NAN), 1, 1e-5, &mut rng);
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }

    #[test]
    fn init_uniform_bounds_and_determinism() {
        let mut a = RngStream::new(9);
        let mut b = RngStream::new(9);
        let ta: Tensor<f64> = init_uniform(&mut a, 3, 3);
        let tb: Tensor<f64> = init_uniform(&mut b, 3, 3);
        assert_eq!(ta, tb);
        assert!(ta.data().iter().all(|v| v.abs() <= 1.0));
        assert_eq!(ta.dims(), &[3, 3]);
    }

    #[test]
    fn init_uniform_mean_is_near_zero() {
        // 10⁴ draws of U(-b, b): std of the mean is b/√(3·10⁴) ≈ 0.0058·b,
        // so 0.01·b is a 1.7σ band; the seed is fixed.
        let mut rng = RngStream::new(2024);
        let t: Tensor<f64> = init_uniform(&mut rng, 100, 100);
        let bound = (6.0f64 / 200.0).sqrt();
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 0.01 * bound, "mean {mean}");
    }

    #[test]
    fn rng_reproducible_over_a_million_draws() {
        let mut a = RngStream::new(0xDEADBEEF);
        let mut b = RngStream::new(0xDEADBEEF);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_below_is_in_range() {
        let mut r = RngStream::new(5);
        let mut seen = [0usize; 5];
        for _ in 0..5000 {
            seen[r.below(5)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_is_a_probability_vector(v in proptest::collection::vec(-500.0f64..500.0, 1..40)) {
                let y = activate(Activation::Softmax, &v);
                prop_assert!(y.iter().all(|&p| p >= 0.0));
                prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn softmax_shift_invariant(v in proptest::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
                let a = activate(Activation::Softmax, &v);
                let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
                let b = activate(Activation::Softmax, &shifted);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }

            #[test]
            fn sigmoid_and_tanh_monotone(a in -40.0f64..40.0, d in 0.0f64..10.0) {
                let b = a + d;
                prop_assert!(sigmoid(a) <= sigmoid(b));
                prop_assert!(a.tanh() <= b.tanh());
            }

            #[test]
            fn adam_zero_grad_identity_any_steps(vals in proptest::collection::vec(-10.0f64..10.0, 1..8), steps in 1usize..30) {
                let mut p = Tensor::vector(vals.clone());
                let g = Tensor::<f64>::zeros(&[vals.len()]);
                let mut st = AdamState::for_params(&p);
                for _ in 0..steps {
                    adam_step(&mut [&mut p], &[&g], &mut st, &AdamConfig::default()).unwrap();
                }
                prop_assert_eq!(p.data(), &vals[..]);
            }
        }
    }
}
