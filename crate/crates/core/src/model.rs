//! The assembled model: two encoders, the gated bottleneck, two decoders.

use serde::{Deserialize, Serialize};

use crate::action::{ActionDecodeCache, ActionDecoder, ActionEncoder, Rollout, DEFAULT_VIS_DIM, JOINTS};
use crate::error::{Error, Result};
use crate::fusion::{gmu_backward, gmu_fuse, GmuParams, LatentPair};
use crate::lang::{LangDecodeCache, LangDecoder, LangEncoder, TokenSeq, DEFAULT_MAX_STEPS, VOCAB_SIZE};
use crate::lstm::StepCache;
use crate::numerics::{prefixed, Parameterized, RngStream, Scalar, Tensor};
use crate::task::TaskIO;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub vis_dim: usize,
    pub vocab: usize,
    pub joints: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 50,
            vis_dim: DEFAULT_VIS_DIM,
            vocab: VOCAB_SIZE,
            joints: JOINTS,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.vis_dim == 0 {
            return Err(Error::Config("hidden and vis_dim must be positive".into()));
        }
        if self.vocab != VOCAB_SIZE || self.joints != JOINTS {
            return Err(Error::Config(format!(
                "vocab must be {VOCAB_SIZE} and joints {JOINTS}, got {} / {}",
                self.vocab, self.joints
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pgae<F> {
    pub config: ModelConfig,
    pub lang_enc: LangEncoder<F>,
    pub lang_dec: LangDecoder<F>,
    pub act_enc: ActionEncoder<F>,
    pub act_dec: ActionDecoder<F>,
    pub gmu: GmuParams<F>,
}

/// Forward record for one task step.
#[derive(Clone, Debug)]
pub struct TaskForward<F> {
    pub lang_probs: Vec<Vec<F>>,
    pub rollout: Rollout<F>,
    pub latent: LatentPair<F>,
    lang_enc_cache: Vec<StepCache<F>>,
    act_enc_cache: Vec<StepCache<F>>,
    lang_dec_cache: LangDecodeCache<F>,
    act_dec_cache: ActionDecodeCache<F>,
}

/// Greedy inference output.
#[derive(Clone, Debug, PartialEq)]
pub struct Translation<F> {
    pub tokens: TokenSeq,
    pub rollout: Rollout<F>,
    pub latent: LatentPair<F>,
}

impl<F: Scalar> Pgae<F> {
    pub fn zeros(config: ModelConfig) -> Self {
        let (h, v, x) = (config.hidden, config.vis_dim, config.vocab);
        Pgae {
            config,
            lang_enc: LangEncoder::zeros(x, h),
            lang_dec: LangDecoder::zeros(x, h),
            act_enc: ActionEncoder::zeros(v, h),
            act_dec: ActionDecoder::zeros(v, h),
            gmu: GmuParams::zeros(h),
        }
    }

    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let (h, v, x) = (config.hidden, config.vis_dim, config.vocab);
        Pgae {
            config,
            lang_enc: LangEncoder::init(&mut rng, x, h),
            lang_dec: LangDecoder::init(&mut rng, x, h),
            act_enc: ActionEncoder::init(&mut rng, v, h),
            act_dec: ActionDecoder::init(&mut rng, v, h),
            gmu: GmuParams::init(&mut rng, h),
        }
    }

    /// Same weights in another precision.
    pub fn cast<G: Scalar>(&self) -> Pgae<G> {
        let mut out = Pgae::<G>::zeros(self.config);
        for (dst, (_, src)) in out.params_mut().into_iter().zip(self.params()) {
            *dst = src.cast();
        }
        out
    }

    fn encode_fuse(&self, io: &TaskIO<F>) -> Result<(LatentPair<F>, Vec<StepCache<F>>, Vec<StepCache<F>>)> {
        let (l, lc) = self.lang_enc.encode_cached(&io.lang_input)?;
        let (a, ac) = self.act_enc.encode_cached(&io.act_input)?;
        let latent = gmu_fuse(&self.gmu, &l.feats, &a.feats)?;
        Ok((latent, lc, ac))
    }

    /// Teacher-forced language decoding plus a full joint rollout.
    pub fn forward(&self, io: &TaskIO<F>) -> Result<TaskForward<F>> {
        let (latent, lang_enc_cache, act_enc_cache) = self.encode_fuse(io)?;
        let (lang_probs, lang_dec_cache) = self.lang_dec.forward_teacher(&latent.h, &io.lang_target.tokens)?;
        let (rollout, act_dec_cache) =
            self.act_dec.forward(&latent.h, &io.dec_vis, &io.j1, io.rollout_steps())?;
        Ok(TaskForward {
            lang_probs,
            rollout,
            latent,
            lang_enc_cache,
            act_enc_cache,
            lang_dec_cache,
            act_dec_cache,
        })
    }

    /// Accumulates parameter gradients into `grads` given loss gradients on
    /// the language logits and on the predicted joints.
    pub fn backward(
        &self,
        fwd: &TaskForward<F>,
        d_logits: &[Vec<F>],
        d_joints: &[Vec<F>],
        grads: &mut Pgae<F>,
    ) -> Result<()> {
        let mut dh = self.lang_dec.backward(&fwd.lang_dec_cache, d_logits, &mut grads.lang_dec)?;
        let dh_act = self.act_dec.backward(&fwd.act_dec_cache, d_joints, &mut grads.act_dec)?;
        for (a, b) in dh.iter_mut().zip(&dh_act) {
            *a += *b;
        }
        let fg = gmu_backward(&self.gmu, &fwd.latent, &dh, &mut grads.gmu)?;
        self.lang_enc.backward(&fwd.lang_enc_cache, &fg.d_l_feats, &mut grads.lang_enc)?;
        self.act_enc.backward(&fwd.act_enc_cache, &fg.d_a_feats, &mut grads.act_enc)?;
        Ok(())
    }

    /// Greedy translation for the task described by `io`; targets are ignored.
    pub fn translate(&self, io: &TaskIO<F>, eos: usize) -> Result<Translation<F>> {
        let (latent, _, _) = self.encode_fuse(io)?;
        let (tokens, _) = self.lang_dec.decode(&latent.h, DEFAULT_MAX_STEPS, eos)?;
        let rollout = self.act_dec.decode(&latent.h, &io.dec_vis, &io.j1, io.rollout_steps())?;
        Ok(Translation {
            tokens,
            rollout,
            latent,
        })
    }
}

impl<F: Scalar> Parameterized<F> for Pgae<F> {
    fn params(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = prefixed("lang_enc", self.lang_enc.params());
        out.extend(prefixed("lang_dec", self.lang_dec.params()));
        out.extend(prefixed("act_enc", self.act_enc.params()));
        out.extend(prefixed("act_dec", self.act_dec.params()));
        out.extend(prefixed("gmu", self.gmu.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = self.lang_enc.params_mut();
        out.extend(self.lang_dec.params_mut());
        out.extend(self.act_enc.params_mut());
        out.extend(self.act_dec.params_mut());
        out.extend(self.gmu.params_mut());
        out
    }
}
