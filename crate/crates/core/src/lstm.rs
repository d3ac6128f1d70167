//! Peephole LSTM cell shared by all four encoders and decoders.
//!
//! Gate layout is `(i, f, g, o)` in every packed tensor. The input and forget
//! gates peek at the previous cell state, the output gate at the new one:
//!
//! ```text
//! i = σ(W_i x + U_i h' + p_i ⊙ c' + b_i)
//! f = σ(W_f x + U_f h' + p_f ⊙ c' + b_f)
//! g = tanh(W_g x + U_g h' + b_g)
//! c = f ⊙ c' + i ⊙ g
//! o = σ(W_o x + U_o h' + p_o ⊙ c + b_o)
//! h = o ⊙ tanh(c)
//! ```

use crate::error::{Error, Result};
use crate::numerics::{
    gemv_acc, gemv_t_acc, init_uniform, outer_acc, prefixed, sigmoid, Parameterized, RngStream,
    Scalar, Tensor,
};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<F> {
    /// `[4H × I]`
    pub w: Tensor<F>,
    /// `[4H × H]`
    pub u: Tensor<F>,
    pub peep_i: Tensor<F>,
    pub peep_f: Tensor<F>,
    pub peep_o: Tensor<F>,
    /// `[4H]`
    pub b: Tensor<F>,
}

impl<F: Scalar> LstmParams<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w: Tensor::zeros(&[4 * hidden, input]),
            u: Tensor::zeros(&[4 * hidden, hidden]),
            peep_i: Tensor::zeros(&[hidden]),
            peep_f: Tensor::zeros(&[hidden]),
            peep_o: Tensor::zeros(&[hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Glorot-uniform weights per gate block; peepholes and biases start at zero.
    pub fn init(rng: &mut RngStream, input: usize, hidden: usize) -> Self {
        let mut p = Self::zeros(input, hidden);
        for gate in 0..4 {
            let wi: Tensor<F> = init_uniform(rng, input, hidden);
            let ui: Tensor<F> = init_uniform(rng, hidden, hidden);
            p.w.data_mut()[gate * hidden * input..(gate + 1) * hidden * input]
                .copy_from_slice(wi.data());
            p.u.data_mut()[gate * hidden * hidden..(gate + 1) * hidden * hidden]
                .copy_from_slice(ui.data());
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.u.cols()
    }
}

impl<F: Scalar> Parameterized<F> for LstmParams<F> {
    fn params(&self) -> Vec<(String, &Tensor<F>)> {
        vec![
            ("w".into(), &self.w),
            ("u".into(), &self.u),
            ("peep_i".into(), &self.peep_i),
            ("peep_f".into(), &self.peep_f),
            ("peep_o".into(), &self.peep_o),
            ("b".into(), &self.b),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        vec![
            &mut self.w,
            &mut self.u,
            &mut self.peep_i,
            &mut self.peep_f,
            &mut self.peep_o,
            &mut self.b,
        ]
    }
}

pub(crate) fn lstm_named<'a, F: Scalar>(
    prefix: &str,
    p: &'a LstmParams<F>,
) -> Vec<(String, &'a Tensor<F>)> {
    prefixed(prefix, p.params())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
}

impl<F: Scalar> LstmState<F> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![F::zero(); hidden],
            c: vec![F::zero(); hidden],
        }
    }

    /// `[h; c]`
    pub fn concat(&self) -> Vec<F> {
        let mut out = self.h.clone();
        out.extend_from_slice(&self.c);
        out
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct StepCache<F> {
    pub x: Vec<F>,
    pub h_prev: Vec<F>,
    pub c_prev: Vec<F>,
    pub i: Vec<F>,
    pub f: Vec<F>,
    pub g: Vec<F>,
    pub o: Vec<F>,
    pub c: Vec<F>,
    pub tanh_c: Vec<F>,
}

pub fn lstm_step<F: Scalar>(
    p: &LstmParams<F>,
    x: &[F],
    prev: &LstmState<F>,
) -> Result<(LstmState<F>, StepCache<F>)> {
    let hidden = p.hidden_size();
    if x.len() != p.input_size() {
        return Err(Error::shape("lstm_step input", p.input_size(), x.len()));
    }
    if prev.h.len() != hidden || prev.c.len() != hidden {
        return Err(Error::shape(
            "lstm_step state",
            hidden,
            format!("h {} / c {}", prev.h.len(), prev.c.len()),
        ));
    }

    let mut a = p.b.data().to_vec();
    gemv_acc(&p.w, x, &mut a);
    gemv_acc(&p.u, &prev.h, &mut a);

    let (pi, pf, po) = (p.peep_i.data(), p.peep_f.data(), p.peep_o.data());
    let mut i = vec![F::zero(); hidden];
    let mut f = vec![F::zero(); hidden];
    let mut g = vec![F::zero(); hidden];
    let mut o = vec![F::zero(); hidden];
    let mut c = vec![F::zero(); hidden];
    let mut tanh_c = vec![F::zero(); hidden];
    let mut h = vec![F::zero(); hidden];
    for k in 0..hidden {
        let cp = prev.c[k];
        i[k] = sigmoid(a[k] + pi[k] * cp);
        f[k] = sigmoid(a[hidden + k] + pf[k] * cp);
        g[k] = a[2 * hidden + k].tanh();
        c[k] = f[k] * cp + i[k] * g[k];
        o[k] = sigmoid(a[3 * hidden + k] + po[k] * c[k]);
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }

    let state = LstmState { h, c: c.clone() };
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        i,
        f,
        g,
        o,
        c,
        tanh_c,
    };
    Ok((state, cache))
}

/// Gradients flowing out of one step.
#[derive(Clone, Debug)]
pub struct StepGrads<F> {
    pub dx: Vec<F>,
    pub dh_prev: Vec<F>,
    pub dc_prev: Vec<F>,
}

/// Reverse-mode step: accumulates parameter gradients into `grads` and returns
/// gradients on the step input and previous state.
pub fn lstm_step_backward<F: Scalar>(
    p: &LstmParams<F>,
    cache: &StepCache<F>,
    dh: &[F],
    dc: &[F],
    grads: &mut LstmParams<F>,
) -> StepGrads<F> {
    let hidden = p.hidden_size();
    let one = F::one();
    let (pi, pf, po) = (p.peep_i.data(), p.peep_f.data(), p.peep_o.data());
    let mut da = vec![F::zero(); 4 * hidden];
    let mut dc_prev = vec![F::zero(); hidden];
    {
        let gpi = grads.peep_i.data_mut();
        for k in 0..hidden {
            let (i, f, g, o) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k]);
            let tc = cache.tanh_c[k];
            let da_o = dh[k] * tc * o * (one - o);
            let dct = dc[k] + dh[k] * o * (one - tc * tc) + da_o * po[k];
            let da_i = dct * g * i * (one - i);
            let da_f = dct * cache.c_prev[k] * f * (one - f);
            let da_g = dct * i * (one - g * g);
            dc_prev[k] = dct * f + da_i * pi[k] + da_f * pf[k];
            da[k] = da_i;
            da[hidden + k] = da_f;
            da[2 * hidden + k] = da_g;
            da[3 * hidden + k] = da_o;
            gpi[k] += da_i * cache.c_prev[k];
        }
    }
    {
        let gpf = grads.peep_f.data_mut();
        for k in 0..hidden {
            gpf[k] += da[hidden + k] * cache.c_prev[k];
        }
    }
    {
        let gpo = grads.peep_o.data_mut();
        for k in 0..hidden {
            gpo[k] += da[3 * hidden + k] * cache.c[k];
        }
    }
    for (gb, d) in grads.b.data_mut().iter_mut().zip(&da) {
        *gb += *d;
    }
    outer_acc(&mut grads.w, &da, &cache.x);
    outer_acc(&mut grads.u, &da, &cache.h_prev);

    let mut dx = vec![F::zero(); p.input_size()];
    gemv_t_acc(&p.w, &da, &mut dx);
    let mut dh_prev = vec![F::zero(); hidden];
    gemv_t_acc(&p.u, &da, &mut dh_prev);
    StepGrads {
        dx,
        dh_prev,
        dc_prev,
    }
}

/// Runs the cell over `xs` from `init` (zeros when `None`), returning every
/// state and cache.
pub fn lstm_forward<F: Scalar>(
    p: &LstmParams<F>,
    xs: &[Vec<F>],
    init: Option<&LstmState<F>>,
) -> Result<(Vec<LstmState<F>>, Vec<StepCache<F>>)> {
    let mut state = match init {
        Some(s) => s.clone(),
        None => LstmState::zeros(p.hidden_size()),
    };
    let mut states = Vec::with_capacity(xs.len());
    let mut caches = Vec::with_capacity(xs.len());
    for x in xs {
        let (next, cache) = lstm_step(p, x, &state)?;
        states.push(next.clone());
        caches.push(cache);
        state = next;
    }
    Ok((states, caches))
}

#[derive(Clone, Debug)]
pub struct SequenceGrads<F> {
    pub dx: Vec<Vec<F>>,
    pub dh0: Vec<F>,
    pub dc0: Vec<F>,
}

/// Full BPTT over a completed forward pass. `dh_seq[t]` is the upstream
/// gradient on `h_t`; `dc_final` is the upstream gradient on the last cell state.
pub fn lstm_backward<F: Scalar>(
    p: &LstmParams<F>,
    caches: &[StepCache<F>],
    dh_seq: &[Vec<F>],
    dc_final: &[F],
    grads: &mut LstmParams<F>,
) -> Result<SequenceGrads<F>> {
    let hidden = p.hidden_size();
    if caches.len() != dh_seq.len() {
        return Err(Error::shape("lstm_backward steps", caches.len(), dh_seq.len()));
    }
    if dc_final.len() != hidden {
        return Err(Error::shape("lstm_backward dc", hidden, dc_final.len()));
    }
    let mut dh_next = vec![F::zero(); hidden];
    let mut dc_next = dc_final.to_vec();
    let mut dx = vec![Vec::new(); caches.len()];
    for t in (0..caches.len()).rev() {
        if dh_seq[t].len() != hidden {
            return Err(Error::shape("lstm_backward dh", hidden, dh_seq[t].len()));
        }
        let dh: Vec<F> = dh_seq[t].iter().zip(&dh_next).map(|(a, b)| *a + *b).collect();
        let sg = lstm_step_backward(p, &caches[t], &dh, &dc_next, grads);
        dx[t] = sg.dx;
        dh_next = sg.dh_prev;
        dc_next = sg.dc_prev;
    }
    Ok(SequenceGrads {
        dx,
        dh0: dh_next,
        dc0: dc_next,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::numerics::{grad_check, RngStream};

    pub(crate) fn randomize<P: Parameterized<f64>>(p: &mut P, rng: &mut RngStream, scale: f64) {
        for t in p.params_mut() {
            for v in t.data_mut() {
                *v = rng.uniform(-scale, scale);
            }
        }
    }

    fn random_inputs(rng: &mut RngStream, steps: usize, input: usize) -> Vec<Vec<f64>> {
        (0..steps)
            .map(|_| (0..input).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect()
    }

    /// Σ_t ⟨a_t, h_t⟩ + ⟨b, c_T⟩ with fixed random projections.
    struct ProjLoss {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    }

    impl ProjLoss {
        fn new(rng: &mut RngStream, steps: usize, hidden: usize) -> Self {
            ProjLoss {
                a: random_inputs(rng, steps, hidden),
                b: (0..hidden).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            }
        }

        fn eval(&self, p: &LstmParams<f64>, xs: &[Vec<f64>], init: Option<&LstmState<f64>>) -> f64 {
            let (states, _) = lstm_forward(p, xs, init).unwrap();
            let mut l = 0.0;
            for (s, a) in states.iter().zip(&self.a) {
                l += s.h.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            }
            let last = states.last().unwrap();
            l + last.c.iter().zip(&self.b).map(|(x, y)| x * y).sum::<f64>()
        }
    }

    #[test]
    fn zero_params_give_half_gates_and_zero_state() {
        let p = LstmParams::<f64>::zeros(3, 4);
        let (s, cache) = lstm_step(&p, &[0.7, -2.0, 5.0], &LstmState::zeros(4)).unwrap();
        assert!(cache.i.iter().chain(&cache.f).chain(&cache.o).all(|&v| v == 0.5));
        assert!(cache.g.iter().all(|&v| v == 0.0));
        assert_eq!(s.c, vec![0.0; 4]);
        assert_eq!(s.h, vec![0.0; 4]);
    }

    #[test]
    fn default_initial_state_is_zero() {
        let mut rng = RngStream::new(3);
        let p = LstmParams::<f64>::init(&mut rng, 2, 3);
        let xs = random_inputs(&mut rng, 4, 2);
        let a = lstm_forward(&p, &xs, None).unwrap().0;
        let b = lstm_forward(&p, &xs, Some(&LstmState::zeros(3))).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let p = LstmParams::<f64>::zeros(3, 2);
        assert!(lstm_step(&p, &[1.0], &LstmState::zeros(2)).is_err());
    }

    #[test]
    fn backward_rejects_mismatched_cache_length() {
        let mut rng = RngStream::new(3);
        let p = LstmParams::<f64>::init(&mut rng, 2, 3);
        let xs = random_inputs(&mut rng, 3, 2);
        let (_, caches) = lstm_forward(&p, &xs, None).unwrap();
        let mut g = LstmParams::zeros(2, 3);
        let res = lstm_backward(&p, &caches, &[vec![0.0; 3]], &[0.0; 3], &mut g);
        assert!(res.is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = RngStream::new(4);
        let mut p = LstmParams::<f64>::zeros(3, 4);
        randomize(&mut p, &mut rng, 0.5);
        let xs = random_inputs(&mut rng, 5, 3);
        let (_, caches) = lstm_forward(&p, &xs, None).unwrap();
        let mut g = LstmParams::zeros(3, 4);
        let out = lstm_backward(&p, &caches, &vec![vec![0.0; 4]; 5], &[0.0; 4], &mut g).unwrap();
        assert!(g.params().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
        assert!(out.dx.iter().flatten().all(|&v| v == 0.0));
    }

    fn gradcheck(hidden: usize, input: usize, steps: usize, seed: u64, probes: usize) -> f64 {
        let mut rng = RngStream::new(seed);
        let mut p = LstmParams::<f64>::zeros(input, hidden);
        randomize(&mut p, &mut rng, 0.6);
        let xs = random_inputs(&mut rng, steps, input);
        let loss = ProjLoss::new(&mut rng, steps, hidden);

        let (_, caches) = lstm_forward(&p, &xs, None).unwrap();
        let mut grads = LstmParams::zeros(input, hidden);
        lstm_backward(&p, &caches, &loss.a, &loss.b, &mut grads).unwrap();

        grad_check(&mut p, &grads, |m| Ok(loss.eval(m, &xs, None)), probes, 1e-5, &mut rng)
            .unwrap()
            .max_rel_error
    }

    #[test]
    fn single_step_hidden_one_matches_finite_differences() {
        assert!(gradcheck(1, 2, 1, 11, usize::MAX) < 1e-6);
    }

    #[test]
    fn three_chained_steps_match_finite_differences() {
        assert!(gradcheck(4, 3, 3, 12, usize::MAX) < 1e-4);
    }

    #[test]
    fn random_small_instances_match_finite_differences() {
        let mut total = 0;
        for (k, (hidden, steps)) in [(8, 5), (5, 4), (2, 5), (7, 2)].into_iter().enumerate() {
            let err = gradcheck(hidden, 3, steps, 100 + k as u64, 60);
            assert!(err < 1e-4, "hidden {hidden} steps {steps}: {err}");
            total += 60;
        }
        assert!(total >= 200);
    }

    #[test]
    fn input_gradient_matches_finite_differences_and_reaches_every_step() {
        let mut rng = RngStream::new(21);
        let mut p = LstmParams::<f64>::zeros(3, 5);
        randomize(&mut p, &mut rng, 0.6);
        let xs = random_inputs(&mut rng, 4, 3);
        let loss = ProjLoss::new(&mut rng, 4, 5);
        let (_, caches) = lstm_forward(&p, &xs, None).unwrap();
        let mut grads = LstmParams::zeros(3, 5);
        let out = lstm_backward(&p, &caches, &loss.a, &loss.b, &mut grads).unwrap();
        for (t, dx) in out.dx.iter().enumerate() {
            assert!(dx.iter().any(|v| v.abs() > 1e-8), "step {t} got no gradient");
            for k in 0..3 {
                let mut plus = xs.clone();
                plus[t][k] += 1e-5;
                let mut minus = xs.clone();
                minus[t][k] -= 1e-5;
                let num = (loss.eval(&p, &plus, None) - loss.eval(&p, &minus, None)) / 2e-5;
                assert!(crate::numerics::relative_error(dx[k], num) < 1e-6);
            }
        }
    }

    #[test]
    fn initial_state_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(22);
        let mut p = LstmParams::<f64>::zeros(2, 3);
        randomize(&mut p, &mut rng, 0.6);
        let xs = random_inputs(&mut rng, 3, 2);
        let init = LstmState {
            h: vec![0.2, -0.4, 0.1],
            c: vec![0.5, 0.3, -0.7],
        };
        let loss = ProjLoss::new(&mut rng, 3, 3);
        let (_, caches) = lstm_forward(&p, &xs, Some(&init)).unwrap();
        let mut grads = LstmParams::zeros(2, 3);
        let out = lstm_backward(&p, &caches, &loss.a, &loss.b, &mut grads).unwrap();
        for k in 0..3 {
            for which in 0..2 {
                let mut plus = init.clone();
                let mut minus = init.clone();
                let (pv, mv) = if which == 0 {
                    (&mut plus.h[k], &mut minus.h[k])
                } else {
                    (&mut plus.c[k], &mut minus.c[k])
                };
                *pv += 1e-5;
                *mv -= 1e-5;
                let num = (loss.eval(&p, &xs, Some(&plus)) - loss.eval(&p, &xs, Some(&minus))) / 2e-5;
                let ana = if which == 0 { out.dh0[k] } else { out.dc0[k] };
                assert!(crate::numerics::relative_error(ana, num) < 1e-6);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn hidden_state_is_bounded(seed in any::<u64>(), steps in 1usize..8) {
                let mut rng = RngStream::new(seed);
                let mut p = LstmParams::<f64>::zeros(3, 6);
                randomize(&mut p, &mut rng, 3.0);
                let xs: Vec<Vec<f64>> = (0..steps).map(|_| (0..3).map(|_| rng.uniform(-5.0, 5.0)).collect()).collect();
                let (states, _) = lstm_forward(&p, &xs, None).unwrap();
                for s in &states {
                    prop_assert!(s.h.iter().all(|v| v.abs() <= 1.0));
                }
            }

            #[test]
            fn prefix_states_match(seed in any::<u64>(), steps in 2usize..8, k in 1usize..8) {
                let k = k.min(steps);
                let mut rng = RngStream::new(seed);
                let mut p = LstmParams::<f64>::zeros(2, 4);
                randomize(&mut p, &mut rng, 1.0);
                let xs: Vec<Vec<f64>> = (0..steps).map(|_| (0..2).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
                let (full, _) = lstm_forward(&p, &xs, None).unwrap();
                let (prefix, _) = lstm_forward(&p, &xs[..k], None).unwrap();
                prop_assert_eq!(&full[..k], &prefix[..]);
                // bit-identical on repeat
                let (again, _) = lstm_forward(&p, &xs, None).unwrap();
                prop_assert_eq!(full, again);
            }
        }
    }
}
