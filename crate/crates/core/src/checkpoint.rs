//! Binary checkpoints shared by the translation model and the CAE.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PGAE"  u32 version
//! u32 n   n bytes of header JSON
//! u32 n   n × (u32 len, utf-8 token)          vocabulary
//! u32 n   n × f64                             word weights
//! u32 n   n × (u32 len, utf-8 name, u32 rank, rank × u64 dim, Π dims × f64)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::Vocab;
use crate::model::{ModelConfig, Pgae};
use crate::numerics::{Parameterized, Precision, Scalar, Tensor};
use crate::synth::render::FrameSize;
use crate::task::TrainConfig;
use crate::vision::{Cae, CaeTrainConfig};

pub const MAGIC: &[u8; 4] = b"PGAE";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Translator,
    Cae,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: Kind,
    pub precision: Precision,
    pub model: Option<ModelConfig>,
    pub frame: Option<FrameSize>,
    pub train: Option<TrainConfig>,
    pub cae_train: Option<CaeTrainConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub vocab: Vec<String>,
    pub word_weights: Vec<f64>,
    pub tensors: Vec<NamedTensor>,
}

fn named<F: Scalar, P: Parameterized<F>>(p: &P) -> Vec<NamedTensor> {
    p.params()
        .into_iter()
        .map(|(name, t)| NamedTensor {
            name,
            dims: t.dims().to_vec(),
            data: t.data().iter().map(|v| v.as_f64()).collect(),
        })
        .collect()
}

fn restore<F: Scalar, P: Parameterized<F>>(target: &mut P, tensors: &[NamedTensor]) -> Result<()> {
    let names: Vec<(String, Vec<usize>)> = target.params().into_iter().map(|(n, t)| (n, t.dims().to_vec())).collect();
    if names.len() != tensors.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} tensors, model expects {}",
            tensors.len(),
            names.len()
        )));
    }
    for ((dst, (name, dims)), src) in target.params_mut().into_iter().zip(&names).zip(tensors) {
        if *name != src.name || *dims != src.dims {
            return Err(Error::Config(format!(
                "checkpoint tensor {} {:?} does not match model tensor {name} {dims:?}",
                src.name, src.dims
            )));
        }
        *dst = Tensor::from_vec(dims, src.data.iter().map(|&v| F::lit(v)).collect())?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_model<F: Scalar>(
        model: &Pgae<F>,
        vocab: &Vocab,
        word_weights: &[f64],
        train: Option<TrainConfig>,
    ) -> Self {
        Checkpoint {
            header: Header {
                kind: Kind::Translator,
                precision: if F::BITS == 32 { Precision::F32 } else { Precision::F64 },
                model: Some(model.config),
                frame: None,
                train,
                cae_train: None,
            },
            vocab: vocab.tokens().to_vec(),
            word_weights: word_weights.to_vec(),
            tensors: named(model),
        }
    }

    pub fn to_model<F: Scalar>(&self) -> Result<Pgae<F>> {
        let config = match (self.header.kind, self.header.model) {
            (Kind::Translator, Some(c)) => c,
            _ => return Err(Error::Config("checkpoint does not hold a translation model".into())),
        };
        config.validate()?;
        let mut model = Pgae::<F>::zeros(config);
        restore(&mut model, &self.tensors)?;
        Ok(model)
    }

    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::from_lines(self.vocab.clone())
    }

    pub fn from_cae(cae: &Cae, train: Option<CaeTrainConfig>) -> Self {
        Checkpoint {
            header: Header {
                kind: Kind::Cae,
                precision: Precision::F64,
                model: None,
                frame: Some(cae.size()),
                train: None,
                cae_train: train,
            },
            vocab: Vec::new(),
            word_weights: Vec::new(),
            tensors: named(cae),
        }
    }

    pub fn to_cae(&self) -> Result<Cae> {
        let size = match (self.header.kind, self.header.frame) {
            (Kind::Cae, Some(s)) => s,
            _ => return Err(Error::Config("checkpoint does not hold a CAE".into())),
        };
        size.validate()?;
        let mut cae = Cae::zeros(size);
        restore(&mut cae, &self.tensors)?;
        Ok(cae)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        put_bytes(&mut out, &header);
        put_u32(&mut out, self.vocab.len());
        for t in &self.vocab {
            put_bytes(&mut out, t.as_bytes());
        }
        put_u32(&mut out, self.word_weights.len());
        for w in &self.word_weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        put_u32(&mut out, self.tensors.len());
        for t in &self.tensors {
            put_bytes(&mut out, t.name.as_bytes());
            put_u32(&mut out, t.dims.len());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("not a PGAE checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let header: Header = serde_json::from_slice(r.block()?).map_err(|e| format!("header: {e}"))?;
        let vocab = (0..r.u32()?)
            .map(|_| r.string())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let word_weights = (0..r.u32()?).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
        let mut tensors = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let dims = (0..r.u32()?)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("tensor too large")?;
            if n.saturating_mul(8) > r.remaining() {
                return Err(format!("tensor {name} truncated"));
            }
            let data = (0..n).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
            tensors.push(NamedTensor { name, dims, data });
        }
        if r.remaining() != 0 {
            return Err(format!("{} trailing bytes", r.remaining()));
        }
        Ok(Checkpoint {
            header,
            vocab,
            word_weights,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }
}

fn put_u32(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u32).to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len());
    out.extend_from_slice(b);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if n > self.remaining() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block(&mut self) -> std::result::Result<&'a [u8], String> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        String::from_utf8(self.block()?.to_vec()).map_err(|e| e.to_string())
    }
}
