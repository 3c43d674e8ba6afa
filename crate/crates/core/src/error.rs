use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants are grouped by the exit status the command-line front end maps
/// them to (see [`Error::exit_code`]).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter set or generator configuration violates its invariants.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller-supplied argument is out of range or has the wrong shape.
    #[error("argument error: {0}")]
    Argument(String),

    /// A closed-form bound was evaluated outside its validity region.
    #[error("bound invalid: {reason}")]
    BoundInvalid { reason: String },

    /// The precondition `k >= L * e * ln 2` of the CPA bounds does not hold.
    #[error("condition violated: k = {k} < L * e * ln 2 = {required:.4}")]
    ConditionViolated { k: u32, required: f64 },

    /// The Hoeffding radius exceeds q, so the candidate-count bound says nothing.
    #[error("bound vacuous: t = {t:.4} exceeds q = {q}")]
    BoundVacuous { t: f64, q: usize },

    /// A ciphertext could not have been produced by the assumed probe plaintext.
    #[error("inconsistent ciphertext: {0}")]
    InconsistentCiphertext(String),

    /// Recovered attack data breaks the structure forced by the sensing matrix.
    #[error("structural error: {0}")]
    Structural(String),

    /// The requested instance is too large to enumerate.
    #[error("scale error: {0}")]
    Scale(String),

    /// Malformed input file.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status used by the `sots` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BoundInvalid { .. } | Error::ConditionViolated { .. } | Error::BoundVacuous { .. } => 3,
            Error::InconsistentCiphertext(_) | Error::Structural(_) => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
