use std::path::PathBuf;

use crate::hwmodel::EngineClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("{context}, line {line}: {message}")]
    ParseLine {
        context: String,
        line: usize,
        message: String,
    },

    #[error("missing required field `{0}`")]
    MissingField(String),

    #[error("invalid value for `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("profile has no peak throughput for engine {0}")]
    MissingEngine(EngineClass),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid sparsity config: {0}")]
    InvalidConfig(String),

    #[error("{config} is incompatible with shape {m}x{k}: {reason}")]
    Incompatible {
        config: String,
        m: u64,
        k: u64,
        reason: String,
    },

    #[error("duplicate {what} `{key}`")]
    Duplicate { what: &'static str, key: String },

    #[error("arithmetic overflow while computing {0}")]
    Overflow(&'static str),

    #[error("arithmetic intensity is undefined for zero bytes moved")]
    UndefinedIntensity,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "measured latency {measured_s:e} s is faster than the speed-of-light bound {sol_s:e} s \
         (fraction {fraction:.4})"
    )]
    FasterThanLight {
        sol_s: f64,
        measured_s: f64,
        fraction: f64,
    },

    #[error(
        "achieved {achieved:e} FLOP/s at intensity {ai} exceeds the {engine} roof {roof:e} FLOP/s"
    )]
    AboveRoof {
        engine: EngineClass,
        ai: f64,
        achieved: f64,
        roof: f64,
    },

    #[error("N:M constraint violated at row {row}, group {group}: {count} nonzeros > {n_keep}")]
    NofMViolation {
        row: usize,
        group: usize,
        count: usize,
        n_keep: u32,
    },

    #[error("no speedup record matched any accuracy record")]
    EmptyJoin,

    #[error("layer `{id}`: {source}")]
    Layer {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid_field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn in_layer(self, id: &str) -> Self {
        Error::Layer {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}
