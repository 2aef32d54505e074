use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid probability table: {0}")]
    InvalidPmf(String),

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    /// An exact enumeration or exhaustive decoder would exceed the configured cap.
    #[error("{what} needs {required} enumeration terms, cap is {cap}")]
    BudgetExceeded {
        what: &'static str,
        required: u128,
        cap: u64,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("rate window empty for k={k}, n={n}: need k*H(U)={lo:.6} < ell < n*C={hi:.6}")]
    EmptyRateWindow {
        k: usize,
        n: usize,
        lo: f64,
        hi: f64,
    },

    /// A checked property failed, e.g. a scan found disagreements.
    #[error("property violated: {0}")]
    PropertyViolation(String),

    #[error("internal consistency violated: {0}")]
    InternalConsistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 3 precondition, 4 property violation, 5 resource
    /// cap, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. }
            | Error::OutOfRange { .. }
            | Error::InvalidPmf(_)
            | Error::IndexOutOfRange { .. }
            | Error::Precondition(_)
            | Error::EmptyRateWindow { .. } => 3,
            Error::PropertyViolation(_) => 4,
            Error::BudgetExceeded { .. } => 5,
            Error::InternalConsistency(_) | Error::Io(_) | Error::Json(_) => 1,
        }
    }

    pub(crate) fn check_prob(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<f64> {
        if value.is_finite() && value >= lo && value <= hi {
            Ok(value)
        } else {
            Err(Error::OutOfRange {
                name,
                value,
                lo,
                hi,
            })
        }
    }
}
