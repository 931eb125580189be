use thiserror::Error;

/// Errors produced by model construction, data handling, estimation, and
/// the simulation harness.
///
/// Variants split into three groups that the command-line interface maps
/// to distinct exit codes: configuration/usage problems, data problems,
/// and numerical failures. [`Error::exit_code`] encodes that mapping.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside a function's domain, e.g. `log_gamma(-1)`.
    #[error("{function}: argument {value} outside domain {domain}")]
    Domain {
        function: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// Response values outside the open unit interval.
    #[error("response must lie strictly inside (0, 1); offending rows (0-based): {rows:?}")]
    ResponseOutOfSupport { rows: Vec<usize> },

    /// Malformed CSV cell.
    #[error("could not parse `{value}` as a number at row {row}, column `{column}`")]
    CsvCell {
        row: usize,
        column: String,
        value: String,
    },

    /// Missing column, empty file, ragged rows, and similar structural issues.
    #[error("invalid data: {0}")]
    Data(String),

    /// I/O failure while reading or writing files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV-level failure (encoding, ragged records).
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Formula text that does not lex or parse.
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    /// Identifier in a formula that is neither a parameter nor a known covariate.
    #[error("unknown covariate `{name}` (available: {available:?})")]
    UnknownCovariate { name: String, available: Vec<String> },

    /// Parameter indices must be contiguous from 1.
    #[error("parameters must be numbered contiguously from {prefix}1; missing {prefix}{missing}")]
    ParameterGap { prefix: char, missing: usize },

    /// A formula evaluated outside its domain at a specific observation.
    #[error("evaluation error at observation {row}: {message} in `{expr}`")]
    EvalDomain {
        row: usize,
        expr: String,
        message: String,
    },

    /// Invalid model configuration (links, formulas, starting values).
    #[error("invalid model: {0}")]
    Model(String),

    /// Parameters that push mu outside (0, 1) or phi outside (0, inf).
    #[error("inadmissible parameters: {message} at observation {row}")]
    Inadmissible { row: usize, message: String },

    /// Fisher information block too ill-conditioned to solve, even after
    /// a one-shot ridge fallback.
    #[error("singular information matrix in the {block} block")]
    SingularInformation { block: &'static str },

    /// No admissible starting point found by the starting-value ladder.
    #[error("no admissible starting values: {0}")]
    NoAdmissibleStart(String),

    /// Leverage of 1 makes deletion diagnostics undefined.
    #[error("leverage is 1 at observation {row}; deletion diagnostics undefined")]
    UnitLeverage { row: usize },

    /// Combined-residual variance must be positive.
    #[error("nonpositive variance for combined residual at observation {row}")]
    NonpositiveZeta { row: usize },

    /// Degenerate total sum of squares makes P2 undefined.
    #[error("total sum of squares is zero; P2 statistics undefined")]
    ZeroSst,

    /// Unknown scenario identifier.
    #[error("unknown scenario `{id}`; known: {known}")]
    UnknownScenario { id: String, known: String },

    /// Invalid simulation request (bad level, size, replication count).
    #[error("invalid simulation request: {0}")]
    Simulation(String),

    /// Configuration file problems (unreadable, unparsable, inconsistent).
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Exit code the command-line interface uses for this error.
    ///
    /// `2` for usage and configuration errors, `3` for data errors,
    /// `4` for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Model(_)
            | Error::Syntax { .. }
            | Error::ParameterGap { .. }
            | Error::UnknownScenario { .. }
            | Error::Simulation(_) => 2,
            Error::ResponseOutOfSupport { .. }
            | Error::CsvCell { .. }
            | Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::UnknownCovariate { .. } => 3,
            Error::Domain { .. }
            | Error::EvalDomain { .. }
            | Error::Inadmissible { .. }
            | Error::SingularInformation { .. }
            | Error::NoAdmissibleStart(_)
            | Error::UnitLeverage { .. }
            | Error::NonpositiveZeta { .. }
            | Error::ZeroSst => 4,
        }
    }

    /// Stable machine-readable tag for serialized error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::ResponseOutOfSupport { .. } => "response_out_of_support",
            Error::CsvCell { .. } => "csv_cell",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Syntax { .. } => "syntax",
            Error::UnknownCovariate { .. } => "unknown_covariate",
            Error::ParameterGap { .. } => "parameter_gap",
            Error::EvalDomain { .. } => "eval_domain",
            Error::Model(_) => "model",
            Error::Inadmissible { .. } => "inadmissible",
            Error::SingularInformation { .. } => "singular_information",
            Error::NoAdmissibleStart(_) => "no_admissible_start",
            Error::UnitLeverage { .. } => "unit_leverage",
            Error::NonpositiveZeta { .. } => "nonpositive_zeta",
            Error::ZeroSst => "zero_sst",
            Error::UnknownScenario { .. } => "unknown_scenario",
            Error::Simulation(_) => "simulation",
            Error::Config(_) => "config",
        }
    }
}
