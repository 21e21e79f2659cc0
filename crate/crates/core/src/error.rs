use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("MissingColumn: column `{0}` not found")]
    MissingColumn(String),

    #[error("NonNumericCell: row {row}, column `{col}` is not a finite number")]
    NonNumericCell { row: usize, col: String },

    #[error("EmptyFile: no data rows")]
    EmptyFile,

    #[error("AlreadyCentered: dataset has already been centered")]
    AlreadyCentered,

    #[error("DegenerateColumn: {0}")]
    DegenerateColumn(String),

    #[error("InvalidN: interior knot count must be at least 1, got {0}")]
    InvalidN(usize),

    #[error("EmptyBin: knot interval {0} contains no observations")]
    EmptyBin(usize),

    #[error("UnsupportedOrder: spline order {0} not in 2..=4")]
    UnsupportedOrder(usize),

    #[error("InvalidArgs: {0}")]
    InvalidArgs(String),

    #[error("SingularPilotFit: quartic pilot regression is rank deficient")]
    SingularPilotFit,

    #[error("InsufficientLocalData: fewer than two distinct points inside the kernel window at x0 = {0}")]
    InsufficientLocalData(f64),

    #[error("NonFiniteObjective: objective became non-finite after sweep {0}")]
    NonFiniteObjective(usize),

    #[error("DidNotConverge: no convergence after {sweeps} sweeps (kkt residual {kkt:e})")]
    DidNotConverge {
        sweeps: usize,
        kkt: f64,
        last: Vec<f64>,
    },

    #[error("AllGroupsExcluded: every group carries an infinite weight")]
    AllGroupsExcluded,

    #[error("ModelSingular: design is rank deficient at column `{0}`")]
    ModelSingular(String),

    #[error("IndexNotNonlinear: covariate {0} is not in the selected nonlinear set")]
    IndexNotNonlinear(usize),

    #[error("BandwidthTooLarge: grid point {x} outside the interior [{lo}, {hi}]")]
    BandwidthTooLarge { x: f64, lo: f64, hi: f64 },

    #[error("replicate {rep}: {source}")]
    Replicate { rep: usize, source: Box<Error> },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn(_)
                | Error::NonNumericCell { .. }
                | Error::EmptyFile
                | Error::AlreadyCentered
                | Error::InvalidN(_)
                | Error::UnsupportedOrder(_)
                | Error::InvalidArgs(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
