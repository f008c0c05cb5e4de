use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("unknown coefficient family `{0}`")]
    UnknownFamily(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("non-elliptic coefficients: kappa_hat = {kappa_hat:e} at (x, t) = ({x}, {t}) along xi = ({:.6}, {:.6})", xi[0], xi[1])]
    NonElliptic {
        x: f64,
        t: f64,
        xi: [f64; 2],
        kappa_hat: f64,
    },
    #[error("dimension n = {0} is not supported (only n = 1)")]
    UnsupportedDimension(usize),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("empty set")]
    EmptySet,
    #[error("linear solver failed at step {step}: residual {residual:e} after {iterations} iterations")]
    SolverFailure {
        step: usize,
        residual: f64,
        iterations: usize,
    },
    #[error("singular system: smallest pivot magnitude {0:e}")]
    Singular(f64),
    #[error("point outside grid: {0}")]
    OutOfDomain(String),
    #[error("under-resolved: {0}")]
    UnderResolved(String),
    #[error("burn-in window {burn_in} exceeds available time extent {available}; increase text")]
    BurnIn { burn_in: f64, available: f64 },
    #[error("lambda stack too sparse: {got:.1} points per decade, need {required}")]
    StackTooSparse { required: usize, got: f64 },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("target density {target} unreachable: floor {floor}")]
    TargetUnreachable { target: f64, floor: f64 },
    #[error("cutoff windows collide: eps = {eps} >= r/4 = {quarter}")]
    CutoffWindows { eps: f64, quarter: f64 },
}
