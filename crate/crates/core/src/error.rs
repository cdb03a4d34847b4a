use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hurwitz: largest eigenvalue real part is {max_real_part:e}")]
    NotHurwitz { max_real_part: f64 },

    #[error("matrix is rank deficient (condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matching condition infeasible for subsystem {subsystem}: residual {residual:e}")]
    MatchingInfeasible { subsystem: usize, residual: f64 },

    #[error("numerical blowup at t = {t}: {detail}")]
    NumericalBlowup { t: f64, detail: String },

    #[error("subsystem {subsystem} has not yet met the excitation condition")]
    NotYetExcited { subsystem: usize },

    #[error("excitation incomplete at T_f: subsystems {pending:?} have s_i = 0")]
    IieIncomplete { pending: Vec<usize> },

    #[error("run configurations differ beyond estimator mode: {0}")]
    ConfigMismatch(String),

    #[error("{}", fmt_config(.line, .message))]
    Config { line: Option<usize>, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

fn fmt_config(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config error at line {l}: {message}"),
        None => format!("config error: {message}"),
    }
}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::Config { line: None, message: message.into() }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalBlowup { .. } => 3,
            Error::Io(_) | Error::Csv(_) | Error::Serialize(_) => 4,
            _ => 2,
        }
    }
}
