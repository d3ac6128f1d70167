//! Signal-conditioned inputs and targets, the composite loss, and training.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{check_joints, ActionInput};
use crate::error::{Error, Result};
use crate::lang::{Signal, TokenSeq, Vocab};
use crate::model::Pgae;
use crate::numerics::{adam_step, AdamConfig, AdamState, Parameterized, Precision, RngStream, Scalar, Tensor};
use crate::synth::Viewpoint;

pub type TaskSignal = Signal;

/// One paired datum as the model sees it: description, joints and
/// per-frame visual features for one or two viewpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub id: String,
    /// Surface description, e.g. `"push cyan slowly"`.
    pub description: String,
    /// `M × 5`, in `[-1, 1]`.
    pub joints: Vec<Vec<f64>>,
    /// `M × vis_dim`
    pub vis_self: Vec<Vec<f64>>,
    pub vis_opposite: Option<Vec<Vec<f64>>>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn vis(&self, view: Viewpoint) -> Option<&[Vec<f64>]> {
        match view {
            Viewpoint::Own => Some(&self.vis_self),
            Viewpoint::Opposite => self.vis_opposite.as_deref(),
        }
    }
}

/// Encoder inputs and decoder targets for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskIO<F> {
    pub signal: Signal,
    pub view: Viewpoint,
    pub lang_input: TokenSeq,
    pub act_input: ActionInput<F>,
    pub lang_target: TokenSeq,
    /// Visual features the action decoder is teacher-forced with, `v_1 .. v_{T-1}`.
    pub dec_vis: Vec<Vec<F>>,
    pub j1: Vec<F>,
    /// `T − 1` joint targets for `ĵ_2 .. ĵ_T`.
    pub act_target: Vec<Vec<F>>,
}

impl<F> TaskIO<F> {
    pub fn rollout_steps(&self) -> usize {
        self.act_target.len() + 1
    }
}

fn cast_rows<F: Scalar>(rows: &[Vec<f64>]) -> Vec<Vec<F>> {
    rows.iter().map(|r| r.iter().map(|&v| F::lit(v)).collect()).collect()
}

/// Builds the per-signal input/target table:
///
/// | signal          | language in        | action in | language target | action target |
/// |-----------------|--------------------|-----------|-----------------|---------------|
/// | describe        | `[SIG, EOS]`       | full      | description+EOS | `j_M` repeated |
/// | execute         | `[SIG, desc, EOS]` | first     | `[EOS]`         | trajectory    |
/// | repeat-action   | `[SIG, EOS]`       | full      | `[EOS]`         | trajectory    |
/// | repeat-both     | `[SIG, desc, EOS]` | full      | description+EOS | trajectory    |
/// | repeat-language | `[SIG, desc, EOS]` | first     | description+EOS | `j_1` repeated |
///
/// Execute and repeat-language always use the robot's own view.
pub fn build_task_io<F: Scalar>(
    vocab: &Vocab,
    ep: &Episode,
    signal: Signal,
    view: Viewpoint,
) -> Result<TaskIO<F>> {
    let name = signal.name();
    if ep.joints.len() < 2 {
        return Err(Error::MissingModality {
            signal: name,
            requirement: "an action sequence of at least two steps",
        });
    }
    if ep.description.split_whitespace().next().is_none()
        && matches!(
            signal,
            Signal::Describe | Signal::Execute | Signal::RepeatLanguage | Signal::RepeatBoth
        )
    {
        return Err(Error::MissingModality {
            signal: name,
            requirement: "a description",
        });
    }
    let view = match signal {
        Signal::Execute | Signal::RepeatLanguage => Viewpoint::Own,
        _ => view,
    };
    let vis = ep.vis(view).ok_or(Error::MissingModality {
        signal: name,
        requirement: "opposite-view visual features",
    })?;
    if vis.len() != ep.joints.len() {
        return Err(Error::shape("episode visual frames", ep.joints.len(), vis.len()));
    }
    check_joints(&ep.joints)?;

    let m = ep.joints.len();
    let vis_f: Vec<Vec<F>> = cast_rows(vis);
    let joints_f: Vec<Vec<F>> = cast_rows(&ep.joints);
    let first = ActionInput::new(vec![vis_f[0].clone()], vec![joints_f[0].clone()])?;
    let full = || ActionInput::new(vis_f.clone(), joints_f.clone());
    let with_words = || vocab.tokenize(&ep.description, Some(signal));
    let no_words = || vocab.tokenize("", Some(signal));
    let described = || vocab.target(&ep.description);
    let eos_only = || vocab.target("");
    let trajectory = joints_f[1..].to_vec();

    let (lang_input, act_input, lang_target, act_target) = match signal {
        Signal::Describe => (
            no_words()?,
            full()?,
            described()?,
            vec![joints_f[m - 1].clone(); m - 1],
        ),
        Signal::Execute => (with_words()?, first, eos_only()?, trajectory),
        Signal::RepeatAction => (no_words()?, full()?, eos_only()?, trajectory),
        Signal::RepeatBoth => (with_words()?, full()?, described()?, trajectory),
        Signal::RepeatLanguage => (
            with_words()?,
            first,
            described()?,
            vec![joints_f[0].clone(); m - 1],
        ),
    };
    Ok(TaskIO {
        signal,
        view,
        lang_input,
        act_input,
        lang_target,
        dec_vis: vis_f[..m - 1].to_vec(),
        j1: joints_f[0].clone(),
        act_target,
    })
}

const LOG_FLOOR: f64 = 1e-12;

/// Weighted cross entropy averaged over target positions (natural log,
/// probabilities floored at 1e-12).
pub fn lang_loss<F: Scalar>(targets: &[usize], probs: &[Vec<F>], w: &[f64]) -> Result<f64> {
    Ok(lang_loss_grad(targets, probs, w)?.0)
}

/// Loss and its gradient with respect to the pre-softmax logits.
pub fn lang_loss_grad<F: Scalar>(targets: &[usize], probs: &[Vec<F>], w: &[f64]) -> Result<(f64, Vec<Vec<F>>)> {
    if targets.len() != probs.len() || targets.is_empty() {
        return Err(Error::shape("lang_loss rows", targets.len(), probs.len()));
    }
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(probs.len());
    for (&k, row) in targets.iter().zip(probs) {
        if row.len() != w.len() || k >= w.len() {
            return Err(Error::shape("lang_loss width", w.len(), row.len()));
        }
        let y = row[k].as_f64();
        // f64::max would silently swallow a NaN probability
        loss += if y.is_nan() { f64::NAN } else { -w[k] * y.max(LOG_FLOOR).ln() };
        let mut g = vec![F::zero(); row.len()];
        if y > LOG_FLOOR {
            let scale = F::lit(w[k] / n);
            for (gj, &pj) in g.iter_mut().zip(row) {
                *gj = scale * pj;
            }
            g[k] -= scale;
        }
        grads.push(g);
    }
    Ok((loss / n, grads))
}

/// Mean over time of the squared L2 norm of the joint error.
pub fn act_loss<F: Scalar>(target: &[Vec<F>], pred: &[Vec<F>]) -> Result<f64> {
    Ok(act_loss_grad(target, pred)?.0)
}

pub fn act_loss_grad<F: Scalar>(target: &[Vec<F>], pred: &[Vec<F>]) -> Result<(f64, Vec<Vec<F>>)> {
    if target.len() != pred.len() || target.is_empty() {
        return Err(Error::shape("act_loss steps", target.len(), pred.len()));
    }
    let n = target.len() as f64;
    let two = F::lit(2.0 / n);
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(pred.len());
    for (t, p) in target.iter().zip(pred) {
        if t.len() != p.len() {
            return Err(Error::shape("act_loss width", t.len(), p.len()));
        }
        let mut g = Vec::with_capacity(p.len());
        for (&a, &b) in p.iter().zip(t) {
            let d = a - b;
            loss += d.as_f64() * d.as_f64();
            g.push(two * d);
        }
        grads.push(g);
    }
    Ok((loss / n, grads))
}

pub fn total_loss(l_lang: f64, l_act: f64, alpha: f64, beta: f64) -> f64 {
    alpha * l_lang + beta * l_act
}

/// `w[i] = total / (V · count[i])` clamped to `[0.1, 10]`; unseen tokens get 1.
pub fn word_weights<'a>(targets: impl IntoIterator<Item = &'a TokenSeq>, vocab_size: usize) -> Vec<f64> {
    let mut counts = vec![0usize; vocab_size];
    let mut total = 0usize;
    for seq in targets {
        for &t in &seq.tokens {
            counts[t] += 1;
            total += 1;
        }
    }
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                1.0
            } else {
                (total as f64 / (vocab_size as f64 * c as f64)).clamp(0.1, 10.0)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub lang: f64,
    pub act: f64,
}

pub fn task_loss<F: Scalar>(model: &Pgae<F>, io: &TaskIO<F>, w: &[f64], alpha: f64, beta: f64) -> Result<LossParts> {
    let fwd = model.forward(io)?;
    let lang = lang_loss(&io.lang_target.tokens, &fwd.lang_probs, w)?;
    let act = act_loss(&io.act_target, fwd.rollout.predicted())?;
    Ok(LossParts {
        total: total_loss(lang, act, alpha, beta),
        lang,
        act,
    })
}

/// Forward, loss, and backward for one step; gradients accumulate into `grads`.
pub fn task_loss_grad<F: Scalar>(
    model: &Pgae<F>,
    io: &TaskIO<F>,
    w: &[f64],
    alpha: f64,
    beta: f64,
    grads: &mut Pgae<F>,
) -> Result<LossParts> {
    let fwd = model.forward(io)?;
    let (lang, mut dl) = lang_loss_grad(&io.lang_target.tokens, &fwd.lang_probs, w)?;
    let (act, mut dj) = act_loss_grad(&io.act_target, fwd.rollout.predicted())?;
    let (a, b) = (F::lit(alpha), F::lit(beta));
    dl.iter_mut().flatten().for_each(|v| *v = *v * a);
    dj.iter_mut().flatten().for_each(|v| *v = *v * b);
    model.backward(&fwd, &dl, &dj, grads)?;
    Ok(LossParts {
        total: total_loss(lang, act, alpha, beta),
        lang,
        act,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub hidden: usize,
    pub precision: Precision,
    /// Draw the opposite view for action-input signals when available.
    pub mixed_viewpoints: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 6000,
            batch_size: 6,
            lr: 1e-5,
            alpha: 1.0,
            beta: 1.0,
            seed: 0,
            hidden: 50,
            precision: Precision::F64,
            mixed_viewpoints: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Config("epochs, batch size and hidden must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config("lr must be positive, alpha and beta non-negative".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

pub fn sample_signal(rng: &mut RngStream) -> Signal {
    Signal::ALL[rng.below(Signal::ALL.len())]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_total: f64,
    pub mean_lang: f64,
    pub mean_act: f64,
    /// Mean total loss per signal, in `Signal::ALL` order; `None` if not drawn.
    pub per_signal: [Option<f64>; 5],
    /// Smallest fraction, over this epoch's batches, of parameter tensors
    /// that received a nonzero gradient.
    pub min_grad_coverage: f64,
    /// Fraction of parameter tensors that received a nonzero gradient in
    /// at least one batch of the epoch.
    pub grad_coverage: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,mean_total,mean_lang,mean_act,describe,execute,repeat_action,repeat_language,repeat_both\n",
        );
        for e in &self.epochs {
            out.push_str(&format!("{},{:.8},{:.8},{:.8}", e.epoch, e.mean_total, e.mean_lang, e.mean_act));
            for s in &e.per_signal {
                match s {
                    Some(v) => out.push_str(&format!(",{v:.8}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Mini-batch trainer: one uniformly drawn signal (and viewpoint, where it
/// applies) per sample, gradients summed then averaged over the batch, one
/// Adam step per batch.
pub struct Trainer<F> {
    pub model: Pgae<F>,
    pub config: TrainConfig,
    pub weights: Vec<f64>,
    vocab: Vocab,
    grads: Pgae<F>,
    adam: AdamState<F>,
    rng: RngStream,
    epoch: usize,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(model: Pgae<F>, vocab: Vocab, weights: Vec<f64>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if weights.len() != vocab.len() {
            return Err(Error::shape("word weights", vocab.len(), weights.len()));
        }
        let grads = Pgae::zeros(model.config);
        let adam = AdamState::for_params(&model);
        let rng = RngStream::new(config.seed);
        Ok(Trainer {
            model,
            config,
            weights,
            vocab,
            grads,
            adam,
            rng,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn iterations(&self) -> u64 {
        self.adam.step
    }

    fn draw_view(&mut self, signal: Signal, ep: &Episode) -> Viewpoint {
        let mixes = matches!(signal, Signal::Describe | Signal::RepeatAction | Signal::RepeatBoth);
        if self.config.mixed_viewpoints && mixes && ep.vis_opposite.is_some() && self.rng.below(2) == 1 {
            Viewpoint::Opposite
        } else {
            Viewpoint::Own
        }
    }

    pub fn run_epoch(&mut self, data: &[Episode]) -> Result<EpochStats> {
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        self.epoch += 1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        self.rng.shuffle(&mut order);

        let (mut sum, mut count) = (LossParts::default(), 0usize);
        let mut per_signal = [(0.0f64, 0usize); 5];
        let mut min_cov = 1.0f64;
        let mut touched = vec![false; self.grads.params().len()];
        let mut iterations = 0;
        for batch in order.chunks(self.config.batch_size) {
            self.grads.zero_params();
            for &idx in batch {
                let ep = &data[idx];
                let signal = sample_signal(&mut self.rng);
                let view = self.draw_view(signal, ep);
                let io: TaskIO<F> = build_task_io(&self.vocab, ep, signal, view)?;
                let parts = task_loss_grad(
                    &self.model,
                    &io,
                    &self.weights,
                    self.config.alpha,
                    self.config.beta,
                    &mut self.grads,
                )?;
                if !parts.total.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss {} for sample `{}` under signal `{}`",
                        parts.total, ep.id, signal
                    )));
                }
                sum.total += parts.total;
                sum.lang += parts.lang;
                sum.act += parts.act;
                count += 1;
                per_signal[signal.index()].0 += parts.total;
                per_signal[signal.index()].1 += 1;
            }
            let inv = F::lit(1.0 / batch.len() as f64);
            let mut covered = 0usize;
            let mut tensors = 0usize;
            for (ti, g) in self.grads.params_mut().into_iter().enumerate() {
                g.data_mut().iter_mut().for_each(|v| *v = *v * inv);
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "gradient in epoch {} batch {}",
                        self.epoch, iterations
                    )));
                }
                tensors += 1;
                if g.data().iter().any(|v| *v != F::zero()) {
                    covered += 1;
                    touched[ti] = true;
                }
            }
            min_cov = min_cov.min(covered as f64 / tensors as f64);
            let grads: Vec<&Tensor<F>> = self.grads.params().into_iter().map(|(_, t)| t).collect();
            let mut params = self.model.params_mut();
            adam_step(&mut params, &grads, &mut self.adam, &self.config.adam())?;
            iterations += 1;
        }
        let n = count as f64;
        let mut ps = [None; 5];
        for (slot, (s, c)) in ps.iter_mut().zip(per_signal) {
            if c > 0 {
                *slot = Some(s / c as f64);
            }
        }
        Ok(EpochStats {
            epoch: self.epoch,
            mean_total: sum.total / n,
            mean_lang: sum.lang / n,
            mean_act: sum.act / n,
            per_signal: ps,
            min_grad_coverage: min_cov,
            grad_coverage: touched.iter().filter(|&&t| t).count() as f64 / touched.len() as f64,
            iterations,
        })
    }
}

/// Runs `config.epochs` epochs and returns the trained model with its history.
pub fn train<F: Scalar>(
    model: Pgae<F>,
    data: &[Episode],
    vocab: &Vocab,
    weights: Vec<f64>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Pgae<F>, TrainHistory)> {
    let mut trainer = Trainer::new(model, vocab.clone(), weights, config.clone())?;
    let mut history = TrainHistory::default();
    for _ in 0..config.epochs {
        let stats = trainer.run_epoch(data)?;
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok((trainer.model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    pub(crate) fn toy_episode(rng: &mut RngStream, m: usize, vis: usize, desc: &str, opposite: bool) -> Episode {
        let joints = (0..m)
            .map(|t| (0..5).map(|k| (0.1 * t as f64 + k as f64).sin() * 0.8).collect())
            .collect();
        let mut v = || -> Vec<Vec<f64>> { (0..m).map(|_| (0..vis).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect() };
        let vis_self = v();
        let vis_opposite = if opposite { Some(v()) } else { None };
        Episode {
            id: format!("toy-{desc}"),
            description: desc.into(),
            joints,
            vis_self,
            vis_opposite,
        }
    }

    #[test]
    fn execute_uses_first_step_only() {
        let mut rng = RngStream::new(1);
        let ep = toy_episode(&mut rng, 7, 3, "push cyan slowly", true);
        let v = Vocab::default();
        let io: TaskIO<f64> = build_task_io(&v, &ep, Signal::Execute, Viewpoint::Opposite).unwrap();
        assert_eq!(io.act_input.len(), 1);
        assert_eq!(io.view, Viewpoint::Own);
        assert_eq!(io.lang_target.tokens, vec![v.eos()]);
        assert_eq!(io.act_target, ep.joints[1..].to_vec());
        assert_eq!(v.detokenize(&io.lang_input), "push cyan slowly");
    }

    #[test]
    fn describe_targets_final_joints() {
        let mut rng = RngStream::new(2);
        let ep = toy_episode(&mut rng, 6, 3, "pull red fast", false);
        let v = Vocab::default();
        let io: TaskIO<f64> = build_task_io(&v, &ep, Signal::Describe, Viewpoint::Own).unwrap();
        assert_eq!(io.lang_input.tokens, vec![v.signal(Signal::Describe), v.eos()]);
        assert_eq!(io.act_input.len(), 6);
        assert_eq!(io.act_target.len(), 5);
        assert!(io.act_target.iter().all(|j| *j == ep.joints[5]));
        assert_eq!(v.detokenize(&io.lang_target), "pull red fast");
        assert_eq!(*io.lang_target.tokens.last().unwrap(), v.eos());
    }

    #[test]
    fn repeat_language_targets_first_joints() {
        let mut rng = RngStream::new(3);
        let ep = toy_episode(&mut rng, 6, 3, "slide aqua gently", false);
        let v = Vocab::default();
        let io: TaskIO<f64> = build_task_io(&v, &ep, Signal::RepeatLanguage, Viewpoint::Own).unwrap();
        assert!(io.act_target.iter().all(|j| *j == ep.joints[0]));
        assert_eq!(io.act_input.len(), 1);
        assert_eq!(v.detokenize(&io.lang_target), "slide aqua gently");
    }

    #[test]
    fn repeat_action_and_both() {
        let mut rng = RngStream::new(4);
        let ep = toy_episode(&mut rng, 5, 3, "shove lime quickly", true);
        let v = Vocab::default();
        let ra: TaskIO<f64> = build_task_io(&v, &ep, Signal::RepeatAction, Viewpoint::Opposite).unwrap();
        assert_eq!(ra.view, Viewpoint::Opposite);
        assert_eq!(ra.lang_target.tokens, vec![v.eos()]);
        assert_eq!(ra.lang_input.tokens.len(), 2);
        assert_eq!(ra.dec_vis, ep.vis_opposite.as_ref().unwrap()[..4].to_vec());
        let rb: TaskIO<f64> = build_task_io(&v, &ep, Signal::RepeatBoth, Viewpoint::Own).unwrap();
        assert_eq!(rb.act_input.len(), 5);
        assert_eq!(rb.lang_target.tokens.len(), 4);
        assert_eq!(rb.act_target, ep.joints[1..].to_vec());
    }

    #[test]
    fn missing_modalities_are_named() {
        let mut rng = RngStream::new(5);
        let mut ep = toy_episode(&mut rng, 5, 3, "push red fast", false);
        let v = Vocab::default();
        let err = build_task_io::<f64>(&v, &ep, Signal::Describe, Viewpoint::Opposite).unwrap_err();
        assert!(err.to_string().contains("describe") && err.to_string().contains("opposite"));
        ep.description.clear();
        let err = build_task_io::<f64>(&v, &ep, Signal::Execute, Viewpoint::Own).unwrap_err();
        assert!(err.to_string().contains("execute") && err.to_string().contains("description"));
        assert!(build_task_io::<f64>(&v, &ep, Signal::RepeatAction, Viewpoint::Own).is_ok());
    }

    #[test]
    fn build_is_total_over_signals() {
        let mut rng = RngStream::new(6);
        let ep = toy_episode(&mut rng, 5, 3, "push red fast", true);
        let v = Vocab::default();
        for s in Signal::ALL {
            for view in [Viewpoint::Own, Viewpoint::Opposite] {
                let a: TaskIO<f64> = build_task_io(&v, &ep, s, view).unwrap();
                let b: TaskIO<f64> = build_task_io(&v, &ep, s, view).unwrap();
                assert_eq!(a, b);
                assert_eq!(a.dec_vis.len(), a.act_target.len());
            }
        }
    }

    #[test]
    fn lang_loss_cases() {
        let w = vec![1.0; 28];
        let mut onehot = vec![0.0f64; 28];
        onehot[4] = 1.0;
        assert_eq!(lang_loss(&[4], &[onehot], &w).unwrap(), 0.0);
        let uniform = vec![1.0 / 28.0; 28];
        let l = lang_loss(&[7, 3], &[uniform.clone(), uniform.clone()], &w).unwrap();
        assert!((l - 28f64.ln()).abs() < 1e-12);
        assert!((l - 3.3322).abs() < 1e-4);
        let mut w2 = w.clone();
        w2[7] = 2.0;
        let l2 = lang_loss(&[7], &[uniform.clone()], &w2).unwrap();
        assert!((l2 - 2.0 * 28f64.ln()).abs() < 1e-12);
        assert!(lang_loss(&[7, 3], &[uniform], &w).is_err());
    }

    #[test]
    fn act_loss_cases() {
        let a = vec![vec![0.1, 0.2, 0.3, 0.4, 0.5]; 3];
        assert_eq!(act_loss(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.iter_mut().for_each(|r| r[2] += 0.1);
        assert!((act_loss(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        let mut c = a.clone();
        c[0][0] = 0.9;
        c[2][4] = -0.2;
        let mut c_rev = c.clone();
        c_rev.reverse();
        let mut a_rev = a.clone();
        a_rev.reverse();
        assert!((act_loss(&a, &c).unwrap() - act_loss(&a_rev, &c_rev).unwrap()).abs() < 1e-15);
        assert!(act_loss(&a, &a[..2]).is_err());
    }

    #[test]
    fn total_loss_cases() {
        let d = TrainConfig::default();
        assert_eq!((d.alpha, d.beta), (1.0, 1.0));
        assert_eq!(total_loss(2.0, 0.5, 1.0, 1.0), 2.5);
        assert_eq!(total_loss(2.0, 0.5, 1.0, 0.0), 2.0);
    }

    #[test]
    fn train_defaults() {
        let d = TrainConfig::default();
        assert_eq!(d.epochs, 6000);
        assert_eq!(d.batch_size, 6);
        assert_eq!(d.lr, 1e-5);
        assert_eq!(d.hidden, 50);
    }

    fn seq(tokens: Vec<usize>) -> TokenSeq {
        TokenSeq {
            tokens,
            role: crate::lang::Role::DecoderTarget,
        }
    }

    #[test]
    fn word_weight_formula() {
        let uniform: Vec<TokenSeq> = vec![seq((0..28).collect())];
        assert!(word_weights(&uniform, 28).iter().all(|&w| (w - 1.0).abs() < 1e-12));

        // token 0 twice as often as uniform: 56 tokens, count 4 vs 2
        let mut toks: Vec<usize> = (0..28).flat_map(|i| [i, i]).collect();
        toks.retain(|&t| t != 1);
        toks.extend([0, 0]);
        let w = word_weights(&[seq(toks)], 28);
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert_eq!(w[1], 1.0);

        let mut rare = vec![0usize; 1_000_000];
        rare.push(5);
        let w = word_weights(&[seq(rare)], 28);
        assert_eq!(w[5], 10.0);
        assert_eq!(w[0], 0.1);
    }

    #[test]
    fn signal_draws_are_uniform() {
        let mut rng = RngStream::new(77);
        let mut hist = [0usize; 5];
        for _ in 0..10_000 {
            hist[sample_signal(&mut rng).index()] += 1;
        }
        for c in hist {
            assert!((c as f64 - 2000.0).abs() < 0.05 * 2000.0, "{hist:?}");
        }
    }

    #[test]
    fn every_parameter_is_reachable() {
        let cfg = ModelConfig {
            hidden: 6,
            vis_dim: 4,
            ..ModelConfig::default()
        };
        let model = Pgae::<f64>::init(cfg, 3);
        let mut rng = RngStream::new(8);
        let ep = toy_episode(&mut rng, 6, 4, "drag golden fast", true);
        let v = Vocab::default();
        let w = vec![1.0; 28];
        let mut all = Pgae::zeros(cfg);
        for s in Signal::ALL {
            let io: TaskIO<f64> = build_task_io(&v, &ep, s, Viewpoint::Own).unwrap();
            let mut g = Pgae::zeros(cfg);
            task_loss_grad(&model, &io, &w, 1.0, 1.0, &mut g).unwrap();
            // Single-step inputs start from a zero state, so recurrent and
            // peephole weights of that encoder legitimately see nothing.
            for (name, t) in g.params() {
                if name.starts_with("gmu") || name.contains("w_out") || name.contains("b_out") {
                    assert!(t.norm_sq() > 0.0, "{s}: {name} got no gradient");
                }
            }
            task_loss_grad(&model, &io, &w, 1.0, 1.0, &mut all).unwrap();
        }
        for (name, t) in all.params() {
            assert!(t.norm_sq() > 0.0, "{name} got no gradient from any signal");
        }
    }

    #[test]
    fn non_finite_loss_is_reported_with_sample_and_signal() {
        let cfg = ModelConfig {
            hidden: 4,
            vis_dim: 3,
            ..ModelConfig::default()
        };
        let mut model = Pgae::<f64>::init(cfg, 3);
        model.lang_dec.b_out.data_mut()[0] = f64::NAN;
        let mut rng = RngStream::new(9);
        let ep = toy_episode(&mut rng, 4, 3, "push red fast", false);
        let tc = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let mut tr = Trainer::new(model, Vocab::default(), vec![1.0; 28], tc).unwrap();
        let err = tr.run_epoch(&[ep]).unwrap_err().to_string();
        assert!(err.contains("toy-push red fast") && err.contains("signal"), "{err}");
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            epochs: vec![EpochStats {
                epoch: 1,
                mean_total: 1.5,
                mean_lang: 1.0,
                mean_act: 0.5,
                per_signal: [Some(1.0), None, Some(2.0), None, None],
                min_grad_coverage: 1.0,
                grad_coverage: 1.0,
                iterations: 2,
            }],
        };
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0].split(',').count(), 9);
        assert_eq!(lines[1], "1,1.50000000,1.00000000,0.50000000,1.00000000,,2.00000000,,");
    }
}
