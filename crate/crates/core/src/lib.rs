//! Template-free prompt tuning for few-shot named entity recognition.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: sentences, IO tag sequences, CoNLL and gazetteer files,
//!   distant annotation and a synthetic corpus generator.
//! * [`sampler`]: exact K-shot support-set construction.
//! * [`labelwords`]: label-word search over lexicon-annotated data and the
//!   class → label-word mapping, discrete or virtual.
//! * [`tinylm`]: a small masked language model with hand-written gradients,
//!   AdamW with linear decay, MLM pre-training and checkpoints.
//! * [`entlm`]: the entity-oriented LM fine-tuning objective and the
//!   classifier-head baseline.
//! * [`decode`]: one-pass label inference, Viterbi decoding, span extraction.
//! * [`eval`]: span F1 and the decoding-cost harness.
//! * [`pipeline`]: end-to-end experiment cells shared by the CLI and tests.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod corpus;
pub mod decode;
pub mod entlm;
mod error;
pub mod eval;
pub mod exec;
pub mod labelwords;
pub mod pipeline;
pub mod sampler;
pub mod tinylm;

pub use error::{Error, Result};
