//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "ENTLMCK1"
//! version      u32      1
//! config       u32 × 6  vocab_size hidden_dim n_layers n_heads ffn_dim max_seq_len
//!              u64      seed
//! n_tensors    u32
//! tensor × n   u32 rows, u32 cols, f64 × rows·cols (row-major, Params::tensors order)
//! optimizer    u8 flag; if 1:
//!              u64 adam_t, u64 step, u64 total_steps, f64 learning_rate, f64 weight_decay,
//!              u32 n_frozen, u32 × n_frozen rows, then first moments and second
//!              moments as f64 blocks shaped like the parameters
//! label words  u8 flag; if 1: u32 byte length, UTF-8 JSON label-word map
//! extras       u32 count; each: u32 name length, name, u32 rows, u32 cols, f64 data
//! end magic    8 bytes  "ENTLMEND"
//! ```

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{AdamW, ModelConfig, OptimizerState, Params, TinyMlm};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ENTLMCK1";
const END: &[u8; 8] = b"ENTLMEND";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: TinyMlm,
    pub optimizer: Option<OptimizerState>,
    /// Serialized label-word map, when the model was fine-tuned with one.
    pub label_words: Option<String>,
    /// Named tensors outside the model, e.g. a classifier head.
    pub extras: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn new(model: TinyMlm) -> Self {
        Checkpoint {
            model,
            optimizer: None,
            label_words: None,
            extras: Vec::new(),
        }
    }

    pub fn extra(&self, name: &str) -> Option<&Array2<f64>> {
        self.extras.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        let c = &self.model.config;
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, VERSION);
        for v in [c.vocab_size, c.hidden_dim, c.n_layers, c.n_heads, c.ffn_dim, c.max_seq_len] {
            put_u32(&mut w, v as u32);
        }
        w.extend_from_slice(&c.seed.to_le_bytes());
        let tensors = self.model.params.tensors();
        put_u32(&mut w, tensors.len() as u32);
        for t in &tensors {
            put_tensor(&mut w, t);
        }
        match &self.optimizer {
            None => w.push(0),
            Some(o) => {
                w.push(1);
                for v in [o.adam.t, o.step as u64, o.total_steps as u64] {
                    w.extend_from_slice(&v.to_le_bytes());
                }
                w.extend_from_slice(&o.learning_rate.to_le_bytes());
                w.extend_from_slice(&o.adam.weight_decay.to_le_bytes());
                put_u32(&mut w, o.frozen_lm_rows.len() as u32);
                for &r in &o.frozen_lm_rows {
                    put_u32(&mut w, r as u32);
                }
                let zeros: Vec<Array2<f64>>;
                let (m, v) = if o.adam.m.is_empty() {
                    zeros = tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect();
                    (&zeros, &zeros)
                } else {
                    (&o.adam.m, &o.adam.v)
                };
                for t in m.iter().chain(v.iter()) {
                    t.iter().for_each(|x| w.extend_from_slice(&x.to_le_bytes()));
                }
            }
        }
        match &self.label_words {
            None => w.push(0),
            Some(json) => {
                w.push(1);
                put_u32(&mut w, json.len() as u32);
                w.extend_from_slice(json.as_bytes());
            }
        }
        put_u32(&mut w, self.extras.len() as u32);
        for (name, t) in &self.extras {
            put_u32(&mut w, name.len() as u32);
            w.extend_from_slice(name.as_bytes());
            put_tensor(&mut w, t);
        }
        w.extend_from_slice(END);
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let config = ModelConfig {
            vocab_size: dims[0],
            hidden_dim: dims[1],
            n_layers: dims[2],
            n_heads: dims[3],
            ffn_dim: dims[4],
            max_seq_len: dims[5],
            seed: r.u64()?,
        };
        config.validate()?;
        let mut params = Params::init(&config);
        let n = r.u32()? as usize;
        if n != params.tensors().len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {n}", params.tensors().len())));
        }
        for t in params.tensors_mut() {
            let got = r.tensor()?;
            if got.dim() != t.dim() {
                return Err(Error::Checkpoint(format!("tensor shape {:?}, expected {:?}", got.dim(), t.dim())));
            }
            *t = got;
        }
        let optimizer = if r.flag()? {
            let adam_t = r.u64()?;
            let step = r.u64()? as usize;
            let total_steps = r.u64()? as usize;
            let learning_rate = r.f64()?;
            let weight_decay = r.f64()?;
            let n_frozen = r.u32()? as usize;
            let frozen_lm_rows = (0..n_frozen).map(|_| r.u32().map(|x| x as usize)).collect::<Result<_>>()?;
            let mut moments = Vec::new();
            for _ in 0..2 {
                for t in params.tensors() {
                    let mut m = Array2::zeros(t.raw_dim());
                    for x in m.iter_mut() {
                        *x = r.f64()?;
                    }
                    moments.push(m);
                }
            }
            let v = moments.split_off(moments.len() / 2);
            let mut adam = AdamW::new(weight_decay);
            adam.t = adam_t;
            if adam_t > 0 {
                adam.m = moments;
                adam.v = v;
            }
            Some(OptimizerState {
                adam,
                learning_rate,
                step,
                total_steps,
                frozen_lm_rows,
            })
        } else {
            None
        };
        let label_words = if r.flag()? {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            Some(String::from_utf8(raw.to_vec()).map_err(|_| Error::Checkpoint("label words not UTF-8".into()))?)
        } else {
            None
        };
        let n_extra = r.u32()? as usize;
        let mut extras = Vec::with_capacity(n_extra);
        for _ in 0..n_extra {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("extra tensor name not UTF-8".into()))?;
            extras.push((name, r.tensor()?));
        }
        if r.take(8)? != END {
            return Err(Error::Checkpoint("missing end marker".into()));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after end marker".into()));
        }
        Ok(Checkpoint {
            model: TinyMlm::from_params(config, params),
            optimizer,
            label_words,
            extras,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    /// Loads and checks that the model matches a vocabulary of `vocab_size`.
    pub fn load_for_vocab(path: impl AsRef<Path>, vocab_size: usize) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.model.config.vocab_size != vocab_size {
            return Err(Error::Checkpoint(format!(
                "checkpoint vocab_size {} does not match vocabulary of {vocab_size}",
                ck.model.config.vocab_size
            )));
        }
        Ok(ck)
    }
}

pub fn save_checkpoint(model: &TinyMlm, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::new(model.clone()).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TinyMlm> {
    Checkpoint::load(path).map(|c| c.model)
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(w: &mut Vec<u8>, t: &Array2<f64>) {
    put_u32(w, t.nrows() as u32);
    put_u32(w, t.ncols() as u32);
    for x in t.iter() {
        w.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn flag(&mut self) -> Result<bool> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Checkpoint(format!("bad flag byte {b}"))),
        }
    }

    fn tensor(&mut self) -> Result<Array2<f64>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l.saturating_mul(8) <= self.bytes.len() - self.pos)
            .ok_or_else(|| Error::Checkpoint(format!("truncated tensor {rows}×{cols}")))?;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TinyMlm {
        TinyMlm::new(ModelConfig {
            vocab_size: 30,
            hidden_dim: 8,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 16,
            max_seq_len: 6,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = tiny();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ck");
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        let ids = [20, 21, 22];
        assert_eq!(back.forward(&ids).unwrap().logits, m.forward(&ids).unwrap().logits);
    }

    #[test]
    fn optimizer_and_extras_round_trip() {
        let mut ck = Checkpoint::new(tiny());
        let mut opt = OptimizerState::new(1e-3, 0.01, 10);
        opt.frozen_lm_rows = vec![3, 4];
        let mut params = ck.model.params.clone();
        let grads = params.zeros_like();
        crate::tinylm::train::apply_step(&mut opt, &mut params, &grads, Vec::new()).unwrap();
        ck.optimizer = Some(opt);
        ck.label_words = Some("{\"mode\":\"virtual\"}".into());
        ck.extras.push(("head".into(), Array2::from_elem((2, 3), 0.5)));
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn truncated_file_errors() {
        let bytes = Checkpoint::new(tiny()).to_bytes();
        for cut in [0, 7, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn vocab_mismatch_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ck");
        save_checkpoint(&tiny(), &path).unwrap();
        assert!(Checkpoint::load_for_vocab(&path, 31).is_err());
        assert!(Checkpoint::load_for_vocab(&path, 30).is_ok());
    }
}
