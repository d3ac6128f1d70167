//! Vocabulary, task signals, and the language encoder/decoder pair.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{
    lstm_backward, lstm_forward, lstm_named, lstm_step, LstmParams, LstmState, StepCache,
};
use crate::numerics::{
    gemv_acc, gemv_t_acc, init_uniform, outer_acc, softmax_in_place, Parameterized, RngStream,
    Scalar, Tensor,
};
use crate::synth::grammar::{COLOUR_WORDS, SPEED_WORDS, VERB_WORDS};

pub const VOCAB_SIZE: usize = 28;
pub const EOS: &str = "<EOS>";
/// Decoder steps per description: three words and EOS.
pub const DEFAULT_MAX_STEPS: usize = 4;

/// Task selector prepended to the language input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    Describe,
    Execute,
    RepeatAction,
    RepeatLanguage,
    RepeatBoth,
}

impl Signal {
    pub const ALL: [Signal; 5] = [
        Signal::Describe,
        Signal::Execute,
        Signal::RepeatAction,
        Signal::RepeatLanguage,
        Signal::RepeatBoth,
    ];

    /// Signals available at inference time.
    pub const INFERENCE: [Signal; 4] = [
        Signal::Describe,
        Signal::RepeatLanguage,
        Signal::Execute,
        Signal::RepeatAction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Describe => "describe",
            Signal::Execute => "execute",
            Signal::RepeatAction => "repeat-action",
            Signal::RepeatLanguage => "repeat-language",
            Signal::RepeatBoth => "repeat-both",
        }
    }

    pub fn token(self) -> String {
        format!("<{}>", self.name())
    }

    pub fn parse(name: &str) -> Option<Signal> {
        Signal::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The 28-symbol vocabulary: 22 words, EOS, and the five signal tokens.
/// BOS is the zero vector and has no index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut tokens: Vec<String> = VERB_WORDS
            .iter()
            .chain(COLOUR_WORDS.iter())
            .chain(SPEED_WORDS.iter())
            .flatten()
            .map(|w| w.to_string())
            .collect();
        tokens.push(EOS.to_string());
        tokens.extend(Signal::ALL.iter().map(|s| s.token()));
        debug_assert_eq!(tokens.len(), VOCAB_SIZE);
        Vocab { tokens }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    EncoderInput,
    DecoderTarget,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<usize>,
    pub role: Role,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn eos(&self) -> usize {
        self.index(EOS).expect("vocabulary has EOS")
    }

    pub fn signal(&self, s: Signal) -> usize {
        self.index(&s.token()).expect("vocabulary has all signals")
    }

    pub fn signal_of(&self, index: usize) -> Option<Signal> {
        Signal::ALL.into_iter().find(|&s| self.signal(s) == index)
    }

    fn word_ids(&self, words: &str) -> Result<Vec<usize>> {
        words
            .split_whitespace()
            .map(|w| match self.index(w) {
                Some(i) if i != self.eos() && self.signal_of(i).is_none() => Ok(i),
                Some(_) => Err(Error::MissingSignal),
                None => Err(Error::UnknownWord(w.to_string())),
            })
            .collect()
    }

    /// `[signal, w_1 .. w_k, EOS]`.
    pub fn tokenize(&self, words: &str, signal: Option<Signal>) -> Result<TokenSeq> {
        let signal = signal.ok_or(Error::MissingSignal)?;
        let mut tokens = vec![self.signal(signal)];
        tokens.extend(self.word_ids(words)?);
        tokens.push(self.eos());
        Ok(TokenSeq {
            tokens,
            role: Role::EncoderInput,
        })
    }

    /// `[w_1 .. w_k, EOS]`.
    pub fn target(&self, words: &str) -> Result<TokenSeq> {
        let mut tokens = self.word_ids(words)?;
        tokens.push(self.eos());
        Ok(TokenSeq {
            tokens,
            role: Role::DecoderTarget,
        })
    }

    /// Words of a sequence with signal and EOS stripped.
    pub fn detokenize(&self, seq: &TokenSeq) -> String {
        seq.tokens
            .iter()
            .filter(|&&t| t != self.eos() && self.signal_of(t).is_none())
            .map(|&t| self.token(t))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_lines(text.lines().map(str::to_string).collect())
            .map_err(|e| Error::format(path, e))
    }

    pub fn from_lines(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() != VOCAB_SIZE {
            return Err(Error::shape("vocabulary", VOCAB_SIZE, tokens.len()));
        }
        let v = Vocab { tokens };
        if v.index(EOS).is_none() || Signal::ALL.iter().any(|s| v.index(&s.token()).is_none()) {
            return Err(Error::Config("vocabulary lacks EOS or a signal token".into()));
        }
        Ok(v)
    }
}

pub(crate) fn one_hot<F: Scalar>(index: Option<usize>, size: usize) -> Vec<F> {
    let mut v = vec![F::zero(); size];
    if let Some(i) = index {
        v[i] = F::one();
    }
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct LangEncoder<F> {
    pub lstm: LstmParams<F>,
}

/// `L_feats = [h_{N+1}; c_{N+1}]`
#[derive(Clone, Debug, PartialEq)]
pub struct LangEncoding<F> {
    pub feats: Vec<F>,
}

impl<F: Scalar> LangEncoder<F> {
    pub fn zeros(vocab: usize, hidden: usize) -> Self {
        LangEncoder {
            lstm: LstmParams::zeros(vocab, hidden),
        }
    }

    pub fn init(rng: &mut RngStream, vocab: usize, hidden: usize) -> Self {
        LangEncoder {
            lstm: LstmParams::init(rng, vocab, hidden),
        }
    }

    pub fn encode_cached(&self, seq: &TokenSeq) -> Result<(LangEncoding<F>, Vec<StepCache<F>>)> {
        if seq.tokens.is_empty() {
            return Err(Error::EmptySequence("lang_encode"));
        }
        let size = self.lstm.input_size();
        if let Some(&bad) = seq.tokens.iter().find(|&&t| t >= size) {
            return Err(Error::shape("lang_encode token", format!("< {size}"), bad));
        }
        let xs: Vec<Vec<F>> = seq.tokens.iter().map(|&t| one_hot(Some(t), size)).collect();
        let (states, caches) = lstm_forward(&self.lstm, &xs, None)?;
        let last = states.last().expect("non-empty");
        Ok((LangEncoding { feats: last.concat() }, caches))
    }

    pub fn encode(&self, seq: &TokenSeq) -> Result<LangEncoding<F>> {
        Ok(self.encode_cached(seq)?.0)
    }

    /// Backpropagates a gradient on `L_feats` into `grads`.
    pub fn backward(&self, caches: &[StepCache<F>], d_feats: &[F], grads: &mut LangEncoder<F>) -> Result<()> {
        let hidden = self.lstm.hidden_size();
        let mut dh = vec![vec![F::zero(); hidden]; caches.len()];
        if let Some(last) = dh.last_mut() {
            last.copy_from_slice(&d_feats[..hidden]);
        }
        lstm_backward(&self.lstm, caches, &dh, &d_feats[hidden..], &mut grads.lstm)?;
        Ok(())
    }
}

impl<F: Scalar> Parameterized<F> for LangEncoder<F> {
    fn params(&self) -> Vec<(String, &Tensor<F>)> {
        lstm_named("lstm", &self.lstm)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.lstm.params_mut()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LangDecoder<F> {
    /// `[2H × H]`, maps the shared representation to `[h_0; c_0]`.
    pub w_init: Tensor<F>,
    pub b_init: Tensor<F>,
    pub lstm: LstmParams<F>,
    /// `[V × H]`
    pub w_out: Tensor<F>,
    pub b_out: Tensor<F>,
}

/// Teacher-forced forward record.
#[derive(Clone, Debug)]
pub struct LangDecodeCache<F> {
    pub h_shared: Vec<F>,
    pub steps: Vec<StepCache<F>>,
    pub hs: Vec<Vec<F>>,
}

pub(crate) fn init_state<F: Scalar>(w: &Tensor<F>, b: &Tensor<F>, h_shared: &[F]) -> LstmState<F> {
    let hidden = w.rows() / 2;
    let mut hc = b.data().to_vec();
    gemv_acc(w, h_shared, &mut hc);
    let c = hc.split_off(hidden);
    LstmState { h: hc, c }
}

impl<F: Scalar> LangDecoder<F> {
    pub fn zeros(vocab: usize, hidden: usize) -> Self {
        LangDecoder {
            w_init: Tensor::zeros(&[2 * hidden, hidden]),
            b_init: Tensor::zeros(&[2 * hidden]),
            lstm: LstmParams::zeros(vocab, hidden),
            w_out: Tensor::zeros(&[vocab, hidden]),
            b_out: Tensor::zeros(&[vocab]),
        }
    }

    pub fn init(rng: &mut RngStream, vocab: usize, hidden: usize) -> Self {
        LangDecoder {
            w_init: init_uniform(rng, hidden, 2 * hidden),
            b_init: Tensor::zeros(&[2 * hidden]),
            lstm: LstmParams::init(rng, vocab, hidden),
            w_out: init_uniform(rng, hidden, vocab),
            b_out: Tensor::zeros(&[vocab]),
        }
    }

    fn vocab_size(&self) -> usize {
        self.w_out.rows()
    }

    fn check_shared(&self, h_shared: &[F]) -> Result<()> {
        if h_shared.len() != self.w_init.cols() {
            return Err(Error::shape("lang_decode h", self.w_init.cols(), h_shared.len()));
        }
        Ok(())
    }

    fn probs(&self, h: &[F]) -> Vec<F> {
        let mut logits = self.b_out.data().to_vec();
        gemv_acc(&self.w_out, h, &mut logits);
        softmax_in_place(&mut logits);
        logits
    }

    /// Greedy decoding from BOS; stops after EOS or `max_steps` symbols.
    /// Ties resolve to the lowest token index.
    pub fn decode(&self, h_shared: &[F], max_steps: usize, eos: usize) -> Result<(TokenSeq, Vec<Vec<F>>)> {
        self.check_shared(h_shared)?;
        let v = self.vocab_size();
        let mut state = init_state(&self.w_init, &self.b_init, h_shared);
        let mut prev: Option<usize> = None;
        let mut tokens = Vec::new();
        let mut rows = Vec::new();
        for _ in 0..max_steps.max(1) {
            let (next, _) = lstm_step(&self.lstm, &one_hot(prev, v), &state)?;
            let p = self.probs(&next.h);
            let mut best = 0;
            for (k, &pk) in p.iter().enumerate() {
                if pk > p[best] {
                    best = k;
                }
            }
            tokens.push(best);
            rows.push(p);
            state = next;
            prev = Some(best);
            if best == eos {
                break;
            }
        }
        Ok((
            TokenSeq {
                tokens,
                role: Role::DecoderTarget,
            },
            rows,
        ))
    }

    /// Teacher-forced pass: step t consumes the ground-truth token t−1 (BOS at t = 0).
    pub fn forward_teacher(&self, h_shared: &[F], targets: &[usize]) -> Result<(Vec<Vec<F>>, LangDecodeCache<F>)> {
        self.check_shared(h_shared)?;
        let v = self.vocab_size();
        let xs: Vec<Vec<F>> = (0..targets.len())
            .map(|t| one_hot(if t == 0 { None } else { Some(targets[t - 1]) }, v))
            .collect();
        let init = init_state(&self.w_init, &self.b_init, h_shared);
        let (states, steps) = lstm_forward(&self.lstm, &xs, Some(&init))?;
        let probs = states.iter().map(|s| self.probs(&s.h)).collect();
        let hs = states.into_iter().map(|s| s.h).collect();
        Ok((
            probs,
            LangDecodeCache {
                h_shared: h_shared.to_vec(),
                steps,
                hs,
            },
        ))
    }

    /// Backpropagates gradients on the pre-softmax logits; returns the gradient
    /// on the shared representation.
    pub fn backward(&self, cache: &LangDecodeCache<F>, d_logits: &[Vec<F>], grads: &mut LangDecoder<F>) -> Result<Vec<F>> {
        if d_logits.len() != cache.steps.len() {
            return Err(Error::shape("lang decoder backward", cache.steps.len(), d_logits.len()));
        }
        let hidden = self.lstm.hidden_size();
        let mut dh_seq = Vec::with_capacity(d_logits.len());
        for (dl, h) in d_logits.iter().zip(&cache.hs) {
            outer_acc(&mut grads.w_out, dl, h);
            for (gb, d) in grads.b_out.data_mut().iter_mut().zip(dl) {
                *gb += *d;
            }
            let mut dh = vec![F::zero(); hidden];
            gemv_t_acc(&self.w_out, dl, &mut dh);
            dh_seq.push(dh);
        }
        let seq = lstm_backward(&self.lstm, &cache.steps, &dh_seq, &vec![F::zero(); hidden], &mut grads.lstm)?;
        init_backward(&self.w_init, &cache.h_shared, &seq.dh0, &seq.dc0, &mut grads.w_init, &mut grads.b_init)
    }
}

/// Backward through `[h_0; c_0] = W h + b`.
pub(crate) fn init_backward<F: Scalar>(
    w: &Tensor<F>,
    h_shared: &[F],
    dh0: &[F],
    dc0: &[F],
    gw: &mut Tensor<F>,
    gb: &mut Tensor<F>,
) -> Result<Vec<F>> {
    let mut d: Vec<F> = dh0.to_vec();
    d.extend_from_slice(dc0);
    outer_acc(gw, &d, h_shared);
    for (g, v) in gb.data_mut().iter_mut().zip(&d) {
        *g += *v;
    }
    let mut out = vec![F::zero(); h_shared.len()];
    gemv_t_acc(w, &d, &mut out);
    Ok(out)
}

impl<F: Scalar> Parameterized<F> for LangDecoder<F> {
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
