use thiserror::Error;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "sobolev parameters rejected: need 0<gamma<1/2 and 2<1+2*k*gamma<k, got k={k}, gamma={gamma}"
    )]
    SobolevParams { k: u32, gamma: f64 },

    #[error("quadrature spec rejected: panels_per_cell and gauss_points must both be >= 1")]
    QuadratureSpec,

    #[error("path rejected: {0}")]
    InvalidPath(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("lp exponent must satisfy p >= 1 (or be infinite), got {p}")]
    LpExponent { p: f64 },

    #[error("measure rejected: {0}")]
    InvalidMeasure(String),

    #[error("cost spec rejected: {0}")]
    InvalidCost(String),

    #[error("cost kind `{kind}` cannot price {found} ground points")]
    GroundSpaceMismatch { kind: String, found: &'static str },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("instance size {rows}x{cols} exceeds exact-solver cap {cap}")]
    SolverCap { rows: usize, cols: usize, cap: usize },

    #[error("exact solver stalled after {pivots} pivots; instance is numerically degenerate")]
    SolverStall { pivots: usize },

    #[error(
        "sinkhorn did not reach marginal tolerance {tol:e} within {max_iter} iterations \
         (residual {residual:e})"
    )]
    SinkhornNonConvergence {
        max_iter: usize,
        tol: f64,
        residual: f64,
    },

    #[error(
        "cycle enumeration over {support} support pairs up to length {max_len} needs \
         {needed} tuples, above the cap of {cap}; shrink the support or raise the cap"
    )]
    CycleEnumerationCap {
        support: usize,
        max_len: usize,
        needed: u128,
        cap: u128,
    },

    #[error("grid rejected: {0}")]
    InvalidGrid(String),

    #[error("histogram rejected: {0}")]
    InvalidHistogram(String),

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error(
        "interpolated point {point:?} falls outside the grid box [-{half_range}, {half_range}]^{dim}; \
         enlarge the grid"
    )]
    PointOutsideGrid {
        point: Vec<f64>,
        half_range: f64,
        dim: usize,
    },

    #[error("density bound violated: cell {cell} has density {density} > M = {bound}")]
    DensityBound { cell: usize, density: f64, bound: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
