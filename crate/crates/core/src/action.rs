//! Action encoder over `(v_t, j_t)` pairs and the autoregressive joint decoder.

use crate::error::{Error, Result};
use crate::lang::{init_backward, init_state};
use crate::lstm::{
    lstm_forward, lstm_named, lstm_step, lstm_step_backward, LstmParams, LstmState, StepCache,
};
use crate::numerics::{
    gemv_acc, gemv_t_acc, init_uniform, outer_acc, Parameterized, RngStream, Scalar, Tensor,
};

pub const JOINTS: usize = 5;
pub const DEFAULT_VIS_DIM: usize = 30;

/// Rollout length used when no ground-truth sequence is available.
pub fn deployment_steps(slow: bool) -> usize {
    if slow {
        100
    } else {
        50
    }
}

/// A sequence of visual features and joint vectors, both indexed by time.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionInput<F> {
    pub vis: Vec<Vec<F>>,
    pub joints: Vec<Vec<F>>,
}

impl<F: Scalar> ActionInput<F> {
    pub fn new(vis: Vec<Vec<F>>, joints: Vec<Vec<F>>) -> Result<Self> {
        if vis.is_empty() || joints.is_empty() {
            return Err(Error::EmptySequence("act_encode"));
        }
        if vis.len() != joints.len() {
            return Err(Error::shape("action input length", vis.len(), joints.len()));
        }
        check_joints(&joints)?;
        Ok(ActionInput { vis, joints })
    }

    pub fn len(&self) -> usize {
        self.vis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vis.is_empty()
    }

    fn step(&self, t: usize) -> Vec<F> {
        let mut x = self.vis[t].clone();
        x.extend_from_slice(&self.joints[t]);
        x
    }
}

pub(crate) fn check_joints<F: Scalar>(joints: &[Vec<F>]) -> Result<()> {
    for (t, j) in joints.iter().enumerate() {
        if j.len() != JOINTS {
            return Err(Error::shape("joint vector", JOINTS, j.len()));
        }
        if let Some(v) = j.iter().find(|v| !(v.abs() <= F::one())) {
            return Err(Error::JointRange {
                step: t,
                value: v.as_f64(),
            });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionEncoder<F> {
    pub lstm: LstmParams<F>,
}

/// `A_feats = [h_M; c_M]`
#[derive(Clone, Debug, PartialEq)]
pub struct ActionEncoding<F> {
    pub feats: Vec<F>,
}

impl<F: Scalar> ActionEncoder<F> {
    pub fn zeros(vis_dim: usize, hidden: usize) -> Self {
        ActionEncoder {
            lstm: LstmParams::zeros(vis_dim + JOINTS, hidden),
        }
    }

    pub fn init(rng: &mut RngStream, vis_dim: usize, hidden: usize) -> Self {
        ActionEncoder {
            lstm: LstmParams::init(rng, vis_dim + JOINTS, hidden),
        }
    }

    pub fn encode_cached(&self, input: &ActionInput<F>) -> Result<(ActionEncoding<F>, Vec<StepCache<F>>)> {
        if input.is_empty() {
            return Err(Error::EmptySequence("act_encode"));
        }
        let xs: Vec<Vec<F>> = (0..input.len()).map(|t| input.step(t)).collect();
        let (states, caches) = lstm_forward(&self.lstm, &xs, None)?;
        Ok((
            ActionEncoding {
                feats: states.last().expect("non-empty").concat(),
            },
            caches,
        ))
    }

    pub fn encode(&self, input: &ActionInput<F>) -> Result<ActionEncoding<F>> {
        Ok(self.encode_cached(input)?.0)
    }

    pub fn backward(&self, caches: &[StepCache<F>], d_feats: &[F], grads: &mut ActionEncoder<F>) -> Result<()> {
        let hidden = self.lstm.hidden_size();
        let mut dh = vec![vec![F::zero(); hidden]; caches.len()];
        if let Some(last) = dh.last_mut() {
            last.copy_from_slice(&d_feats[..hidden]);
        }
        crate::lstm::lstm_backward(&self.lstm, caches, &dh, &d_feats[hidden..], &mut grads.lstm)?;
        Ok(())
    }
}

impl<F: Scalar> Parameterized<F> for ActionEncoder<F> {
    fn params(&self) -> Vec<(String, &Tensor<F>)> {
        lstm_named("lstm", &self.lstm)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.lstm.params_mut()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionDecoder<F> {
    pub w_init: Tensor<F>,
    pub b_init: Tensor<F>,
    pub lstm: LstmParams<F>,
    /// `[5 × H]`
    pub w_out: Tensor<F>,
    pub b_out: Tensor<F>,
}

/// Joint rollout `ĵ_1 .. ĵ_T`, with `ĵ_1 = j_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout<F> {
    pub joints: Vec<Vec<F>>,
}

impl<F> Rollout<F> {
    /// `ĵ_2 .. ĵ_T`
    pub fn predicted(&self) -> &[Vec<F>] {
        &self.joints[1..]
    }
}

#[derive(Clone, Debug)]
pub struct ActionDecodeCache<F> {
    pub h_shared: Vec<F>,
    pub steps: Vec<StepCache<F>>,
    pub outputs: Vec<Vec<F>>,
}

impl<F: Scalar> ActionDecoder<F> {
    pub fn zeros(vis_dim: usize, hidden: usize) -> Self {
        ActionDecoder {
            w_init: Tensor::zeros(&[2 * hidden, hidden]),
            b_init: Tensor::zeros(&[2 * hidden]),
            lstm: LstmParams::zeros(vis_dim + JOINTS, hidden),
            w_out: Tensor::zeros(&[JOINTS, hidden]),
            b_out: Tensor::zeros(&[JOINTS]),
        }
    }

    pub fn init(rng: &mut RngStream, vis_dim: usize, hidden: usize) -> Self {
        ActionDecoder {
            w_init: init_uniform(rng, hidden, 2 * hidden),
            b_init: Tensor::zeros(&[2 * hidden]),
            lstm: LstmParams::init(rng, vis_dim + JOINTS, hidden),
            w_out: init_uniform(rng, hidden, JOINTS),
            b_out: Tensor::zeros(&[JOINTS]),
        }
    }

    pub fn vis_dim(&self) -> usize {
        self.lstm.input_size() - JOINTS
    }

    /// Rolls out `steps` time steps: step t consumes `(v_t, ĵ_t)` and emits
    /// `ĵ_{t+1} = tanh(W h_t + b)`. Needs `steps − 1` visual frames.
    pub fn forward(
        &self,
        h_shared: &[F],
        vis: &[Vec<F>],
        j1: &[F],
        steps: usize,
    ) -> Result<(Rollout<F>, ActionDecodeCache<F>)> {
        if h_shared.len() != self.w_init.cols() {
            return Err(Error::shape("act_decode h", self.w_init.cols(), h_shared.len()));
        }
        if steps == 0 {
            return Err(Error::EmptySequence("act_decode"));
        }
        if steps - 1 > vis.len() {
            return Err(Error::shape(
                "act_decode visual frames",
                format!("at least {}", steps - 1),
                vis.len(),
            ));
        }
        check_joints(std::slice::from_ref(&j1.to_vec()))?;
        let mut state: LstmState<F> = init_state(&self.w_init, &self.b_init, h_shared);
        let mut joints = vec![j1.to_vec()];
        let mut caches = Vec::with_capacity(steps - 1);
        for v in vis.iter().take(steps - 1) {
            if v.len() != self.vis_dim() {
                return Err(Error::shape("act_decode visual feature", self.vis_dim(), v.len()));
            }
            let mut x = v.clone();
            x.extend_from_slice(joints.last().expect("non-empty"));
            let (next, cache) = lstm_step(&self.lstm, &x, &state)?;
            let mut out = self.b_out.data().to_vec();
            gemv_acc(&self.w_out, &next.h, &mut out);
            out.iter_mut().for_each(|o| *o = o.tanh());
            joints.push(out);
            caches.push(cache);
            state = next;
        }
        let outputs = joints[1..].to_vec();
        Ok((
            Rollout { joints },
            ActionDecodeCache {
                h_shared: h_shared.to_vec(),
                steps: caches,
                outputs,
            },
        ))
    }

    pub fn decode(&self, h_shared: &[F], vis: &[Vec<F>], j1: &[F], steps: usize) -> Result<Rollout<F>> {
        Ok(self.forward(h_shared, vis, j1, steps)?.0)
    }

    /// `d_out[t]` is the loss gradient on `ĵ_{t+2}`. Gradients also flow
    /// through each prediction fed back as the next step's input.
    pub fn backward(&self, cache: &ActionDecodeCache<F>, d_out: &[Vec<F>], grads: &mut ActionDecoder<F>) -> Result<Vec<F>> {
        let n = cache.steps.len();
        if d_out.len() != n {
            return Err(Error::shape("act decoder backward", n, d_out.len()));
        }
        let hidden = self.lstm.hidden_size();
        let vis_dim = self.vis_dim();
        let one = F::one();
        let mut dh_next = vec![F::zero(); hidden];
        let mut dc_next = vec![F::zero(); hidden];
        let mut feedback = vec![F::zero(); JOINTS];
        for t in (0..n).rev() {
            let y = &cache.outputs[t];
            let dpre: Vec<F> = (0..JOINTS)
                .map(|k| (d_out[t][k] + feedback[k]) * (one - y[k] * y[k]))
                .collect();
            let h_t = &cache.steps[t];
            let h_out: Vec<F> = h_t.o.iter().zip(&h_t.tanh_c).map(|(o, tc)| *o * *tc).collect();
            outer_acc(&mut grads.w_out, &dpre, &h_out);
            for (g, d) in grads.b_out.data_mut().iter_mut().zip(&dpre) {
                *g += *d;
            }
            let mut dh = dh_next.clone();
            gemv_t_acc(&self.w_out, &dpre, &mut dh);
            let sg = lstm_step_backward(&self.lstm, h_t, &dh, &dc_next, &mut grads.lstm);
            feedback = sg.dx[vis_dim..].to_vec();
            dh_next = sg.dh_prev;
            dc_next = sg.dc_prev;
        }
        // ĵ_1 is data, so the last feedback term is dropped.
        init_backward(&self.w_init, &cache.h_shared, &dh_next, &dc_next, &mut grads.w_init, &mut grads.b_init)
    }
}

impl<F: Scalar> Parameterized<F> for ActionDecoder<F> {
    fn params(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = vec![("w_init".to_string(), &self.w_init), ("b_init".to_string(), &self.b_init)];
        out.extend(lstm_named("lstm", &self.lstm));
        out.push(("w_out".into(), &self.w_out));
        out.push(("b_out".into(), &self.b_out));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = vec![&mut self.w_init, &mut self.b_init];
        out.extend(self.lstm.params_mut());
        out.push(&mut self.w_out);
        out.push(&mut self.b_out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::tests::randomize;
    use crate::numerics::{grad_check, relative_error, AdamConfig, AdamState};

    fn random_seq(rng: &mut RngStream, steps: usize, vis: usize) -> ActionInput<f64> {
        let v = (0..steps).map(|_| (0..vis).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let j = (0..steps).map(|_| (0..JOINTS).map(|_| rng.uniform(-0.9, 0.9)).collect()).collect();
        ActionInput::new(v, j).unwrap()
    }

    #[test]
    fn zero_encoder_gives_zero_features() {
        let mut rng = RngStream::new(1);
        let enc = ActionEncoder::<f64>::zeros(30, 50);
        let e = enc.encode(&random_seq(&mut rng, 50, 30)).unwrap();
        assert_eq!(e.feats, vec![0.0; 100]);
    }

    #[test]
    fn accepts_length_one_and_slow_lengths() {
        let mut rng = RngStream::new(2);
        let enc = ActionEncoder::<f64>::init(&mut rng, 30, 8);
        for m in [1, 50, 100] {
            assert_eq!(enc.encode(&random_seq(&mut rng, m, 30)).unwrap().feats.len(), 16);
        }
        assert_eq!(deployment_steps(true), 100);
        assert_eq!(deployment_steps(false), 50);
    }

    #[test]
    fn rejects_empty_and_out_of_range_input() {
        assert!(matches!(
            ActionInput::<f64>::new(vec![], vec![]),
            Err(Error::EmptySequence(_))
        ));
        let bad = ActionInput::new(vec![vec![0.0; 3]], vec![vec![0.0, 0.0, 1.5, 0.0, 0.0]]);
        assert!(matches!(bad, Err(Error::JointRange { step: 0, .. })));
    }

    #[test]
    fn encoder_is_order_sensitive() {
        let mut rng = RngStream::new(3);
        let enc = ActionEncoder::<f64>::init(&mut rng, 4, 8);
        let seq = random_seq(&mut rng, 6, 4);
        let mut rev = seq.clone();
        rev.vis.reverse();
        rev.joints.reverse();
        let a = enc.encode(&seq).unwrap().feats;
        let b = enc.encode(&rev).unwrap().feats;
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn rollout_echoes_first_joint_and_stays_in_range() {
        let mut rng = RngStream::new(4);
        let mut dec = ActionDecoder::<f64>::zeros(4, 6);
        randomize(&mut dec, &mut rng, 2.0);
        let seq = random_seq(&mut rng, 10, 4);
        let h: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let r = dec.decode(&h, &seq.vis, &seq.joints[0], 10).unwrap();
        assert_eq!(r.joints[0], seq.joints[0]);
        assert_eq!(r.predicted().len(), 9);
        assert!(r.predicted().iter().flatten().all(|v| v.abs() < 1.0));
        assert!(dec.decode(&h, &seq.vis, &seq.joints[0], 12).is_err());
    }

    #[test]
    fn perturbing_a_prediction_changes_later_steps() {
        // Feed the rollout's own output back manually with one perturbed step.
        let mut rng = RngStream::new(5);
        let mut dec = ActionDecoder::<f64>::zeros(3, 6);
        randomize(&mut dec, &mut rng, 0.8);
        let seq = random_seq(&mut rng, 8, 3);
        let h: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let base = dec.decode(&h, &seq.vis, &seq.joints[0], 8).unwrap();
        let mut j1 = seq.joints[0].clone();
        j1[2] += 0.05;
        let moved = dec.decode(&h, &seq.vis, &j1, 8).unwrap();
        for t in 1..8 {
            assert!(base.joints[t].iter().zip(&moved.joints[t]).any(|(a, b)| (a - b).abs() > 1e-9));
        }
    }

    #[test]
    fn decoder_gradients_match_finite_differences() {
        let mut rng = RngStream::new(6);
        let mut dec = ActionDecoder::<f64>::zeros(3, 5);
        randomize(&mut dec, &mut rng, 0.6);
        let seq = random_seq(&mut rng, 6, 3);
        let h: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let target: Vec<Vec<f64>> = seq.joints[1..].to_vec();
        let loss = |d: &ActionDecoder<f64>, h: &[f64]| {
            let r = d.decode(h, &seq.vis, &seq.joints[0], 6).unwrap();
            r.predicted()
                .iter()
                .zip(&target)
                .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum::<f64>()
        };
        let (r, cache) = dec.forward(&h, &seq.vis, &seq.joints[0], 6).unwrap();
        let d_out: Vec<Vec<f64>> = r
            .predicted()
            .iter()
            .zip(&target)
            .map(|(p, t)| p.iter().zip(t).map(|(a, b)| 2.0 * (a - b)).collect())
            .collect();
        let mut grads = ActionDecoder::zeros(3, 5);
        let dh = dec.backward(&cache, &d_out, &mut grads).unwrap();
        for k in 0..5 {
            let mut hp = h.clone();
            hp[k] += 1e-5;
            let mut hm = h.clone();
            hm[k] -= 1e-5;
            let num = (loss(&dec, &hp) - loss(&dec, &hm)) / 2e-5;
            assert!(relative_error(dh[k], num) < 1e-6);
        }
        let rep = grad_check(&mut dec, &grads, |d| Ok(loss(d, &h)), 400, 1e-5, &mut rng).unwrap();
        assert!(rep.max_rel_error < 1e-5, "{rep:?}");
    }

    #[test]
    fn overfits_a_single_action() {
        // smooth 20-step target trajectory, decoder alone, fixed latent
        let mut rng = RngStream::new(7);
        let steps = 20;
        let vis: Vec<Vec<f64>> = (0..steps).map(|t| vec![t as f64 / steps as f64, 1.0]).collect();
        let joints: Vec<Vec<f64>> = (0..steps)
            .map(|t| {
                let s = t as f64 / (steps - 1) as f64;
                (0..JOINTS).map(|k| 0.5 * (s * (k as f64 + 1.0)).sin() - 0.2).collect()
            })
            .collect();
        let mut dec = ActionDecoder::<f64>::init(&mut rng, 2, 16);
        let h: Vec<f64> = (0..16).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let mut st = AdamState::for_params(&dec);
        let cfg = AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        };
        let mut grads = ActionDecoder::zeros(2, 16);
        let mut max_err = f64::MAX;
        for _ in 0..3000 {
            grads.zero_params();
            let (r, cache) = dec.forward(&h, &vis, &joints[0], steps).unwrap();
            let d: Vec<Vec<f64>> = r
                .predicted()
                .iter()
                .zip(&joints[1..])
                .map(|(p, t)| p.iter().zip(t).map(|(a, b)| 2.0 * (a - b) / (steps - 1) as f64).collect())
                .collect();
            dec.backward(&cache, &d, &mut grads).unwrap();
            let g: Vec<&Tensor<f64>> = grads.params().into_iter().map(|(_, t)| t).collect();
            let mut p = dec.params_mut();
            crate::numerics::adam_step(&mut p, &g, &mut st, &cfg).unwrap();
            max_err = r
                .predicted()
                .iter()
                .zip(&joints[1..])
                .flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if max_err < 0.01 {
                break;
            }
        }
        assert!(max_err < 0.02, "max error {max_err}");
    }
}
