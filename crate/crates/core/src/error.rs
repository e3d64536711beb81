use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh subdivision {nx}x{ny}: both counts must be positive")]
    InvalidSubdivision { nx: usize, ny: usize },

    #[error("cell {0} is not an active cell of this mesh")]
    InactiveCell(usize),

    #[error("mesh is not 1-irregular")]
    NotOneIrregular,

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("unsupported element degree {0} (expected 1 or 2)")]
    UnsupportedDegree(usize),

    #[error("quadrature order {0} out of range 1..=6")]
    QuadratureOrder(usize),

    #[error("second derivatives are required for strong residuals")]
    MissingSecondDerivatives,

    #[error("singular linear system: {0}")]
    SingularMatrix(String),

    #[error("linear system dimension mismatch: matrix {rows}x{cols}, rhs {rhs}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        rhs: usize,
    },

    #[error("Newton iteration did not converge in {iterations} steps (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("empty indicator list")]
    EmptyIndicators,

    #[error("reference non-zero count must be positive")]
    ZeroReference,

    #[error("electric coupling is disabled for this state")]
    ElectricDisabled,

    #[error("all contributions are zero")]
    AllZero,

    #[error("missing H1 error data for level {0}")]
    MissingErrorData(usize),

    #[error("point ({0}, {1}) is the singular point of the analytic solution")]
    SingularPoint(f64, f64),

    #[error("invalid material parameters: {0}")]
    InvalidParams(String),

    #[error("initial guess: {0}")]
    InitialGuess(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_level(self, level: usize) -> Self {
        Error::AtLevel {
            level,
            source: Box::new(self),
        }
    }
}
