use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("variable {var} has inverted bounds [{lower}, {upper}]")]
    InvertedBounds { var: String, lower: f64, upper: f64 },
    #[error("expression references unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("binary variable {var} appears in cone row {row}; binaries may only enter linear rows")]
    BinaryInConeRow { var: String, row: usize },
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("program has {0} binaries, solver supports at most {1}")]
    TooManyBinaries(usize, usize),
    #[error("interior-point backend failed: {0}")]
    Numerical(String),
    #[error("node limit reached before any integer-feasible point was found")]
    NoIncumbent,
}

#[derive(Debug, Error)]
pub enum TextError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported format header {0:?}")]
    BadHeader(String),
}
