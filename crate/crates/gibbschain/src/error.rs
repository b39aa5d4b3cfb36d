//! Shared error type for kernel evaluation and certified transport.

use thiserror::Error;

/// Errors surfaced by lattice, kernel, transport and rate computations.
#[derive(Debug, Error)]
pub enum Error {
    /// A conditioning window does not reach far enough into the past or exterior.
    #[error("window too short at site {site}: need {needed} sites, have {available}")]
    WindowTooShort {
        site: i64,
        needed: usize,
        available: usize,
    },

    /// A word (or a context handed to an enumeration) violates the grammar.
    #[error("inadmissible word at site {site}: {detail}")]
    InadmissibleWord { site: i64, detail: String },

    /// The grammar table has a word with no right or left extension.
    #[error("grammar dead end: word {word:?} cannot be extended {side}")]
    GrammarDeadEnd { word: Vec<u8>, side: &'static str },

    /// The grammar table is empty or structurally unusable.
    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),

    /// An alphabet was declared with no symbols or duplicate names.
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    /// A kernel value that must be strictly positive on admissible input is not.
    #[error("positivity violated: {context} evaluated to {value:e}")]
    PositivityViolated { context: String, value: f64 },

    /// A singleton family fails the normalization check beyond tolerance.
    #[error("normalization defect {defect:e} at site {site} (tolerance {tolerance:e})")]
    NormalizationDefect {
        site: i64,
        defect: f64,
        tolerance: f64,
    },

    /// The two evaluation orders of a pair density disagree beyond tolerance.
    #[error("order consistency violated: gap {gap:e} exceeds tolerance {tolerance:e}")]
    OrderConsistencyViolated { gap: f64, tolerance: f64 },

    /// The boundary envelope did not shrink below the target within the volume cap.
    #[error("spread not contracting: spread {spread:e} after {k_used} volume steps (target {target:e})")]
    SpreadNotContracting {
        spread: f64,
        k_used: usize,
        target: f64,
    },

    /// A conditional ratio has a vanishing denominator (null conditioning event).
    #[error("zero denominator in conditional ratio: {0}")]
    ZeroDenominator(String),

    /// A requested exact enumeration exceeds the configured budget.
    #[error("volume too large: {requested} configurations exceed budget {budget}")]
    VolumeTooLarge { requested: f64, budget: usize },

    /// A truncation parameter cannot certify the requested target error.
    #[error("cannot certify target {target:e}: {detail}")]
    CannotCertify { target: f64, detail: String },

    /// The variation tail bound cannot reach the requested radius.
    #[error(
        "tail not summable: best bound {reached:e} after depth {n_max} (target {target:e})"
    )]
    TailNotSummable {
        target: f64,
        reached: f64,
        n_max: usize,
    },

    /// A model file or parameter set is malformed.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem trouble while loading or writing model files or reports.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
