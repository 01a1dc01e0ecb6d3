use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duplicate response for worker `{worker}` on question `{question}`")]
    DuplicateResponse { worker: String, question: String },
    #[error("option `{0}` is not in the declared option set")]
    UnknownOption(String),
    #[error("at least two answer options are required, found {0}")]
    TooFewOptions(usize),
    #[error("dataset contains no responses")]
    EmptyDataset,
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite {what} at coordinate {index} ({name})")]
    NonFinite {
        what: &'static str,
        index: usize,
        name: String,
    },
    #[error("optimizer failed in round {round}: {source}")]
    Optimizer {
        round: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("enumeration over {outcomes} outcomes exceeds the limit of {limit}")]
    EnumerationTooLarge { outcomes: u128, limit: u128 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("no gold labels to evaluate against")]
    EmptyGold,
    #[error("item sets differ between rankings")]
    DisjointItems,
    #[error("every configuration in the grid failed")]
    NoValidConfig,
}
