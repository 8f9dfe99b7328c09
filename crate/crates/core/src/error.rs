use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid label set: {0}")]
    LabelSet(String),

    #[error("gazetteer: {0}")]
    Gazetteer(String),

    #[error("K-shot sampling infeasible (K = {k}): {}", format_deficits(.deficits))]
    Infeasible {
        k: usize,
        /// `(class, achieved count)` for every class left below K.
        deficits: Vec<(String, usize)>,
    },

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("input of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss has no supervised positions")]
    NoSupervisedPositions,

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: usize },

    #[error("label words: {0}")]
    LabelWords(String),

    #[error("decoding: {0}")]
    Decode(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_deficits(deficits: &[(String, usize)]) -> String {
    deficits
        .iter()
        .map(|(class, got)| format!("{class} reached {got}"))
        .collect::<Vec<_>>()
        .join(", ")
}
