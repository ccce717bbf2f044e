use thiserror::Error;

/// Errors produced by the library and surfaced through the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid genotype code {0}, expected 1..=10")]
    InvalidGenotypeCode(u8),

    #[error("genotype has no unmutated position left")]
    FullyMutated,

    #[error("invalid read type {0}, expected 1..=8")]
    InvalidReadType(u8),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data error at line {line}: {msg}")]
    DataFormat { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty chain output: no recorded draws")]
    EmptyChain,

    #[error("no valid genotype assignment exists for this tree and pair count")]
    NoValidGenotype,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
