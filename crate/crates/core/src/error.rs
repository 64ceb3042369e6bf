use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes across the crate. Several of these encode mathematically
/// meaningful events (a fiber over a critical value, an empty dynamical ball)
/// rather than programming errors; callers are expected to match on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero vector cannot represent a projective point")]
    ZeroVector,
    #[error("all map components vanish at the point (indeterminate); the map has a common zero")]
    IndeterminatePoint,
    #[error("image point has no usable affine chart")]
    ChartDegenerate,
    #[error("fiber over a (near-)critical value: preimages coalesce below separation tolerance")]
    DegenerateFiber,
    #[error("preimage solving is only supported for rational k=1, skew product and product k=2 families")]
    UnsupportedFamily,
    #[error("more than 1% of inverse walks aborted; the seed point looks exceptional")]
    ExceptionalSeed,
    #[error("every sampled orbit passed within tolerance of the critical set")]
    CriticalOrbit,
    #[error("log Jac is not numerically integrable over this cloud ({0:.1}% of points are critical)")]
    NonIntegrable(f64),
    #[error("no radius window with enough samples for a dimension fit")]
    EmptyBall,
    #[error("empty dynamical ball; entropy is at least {lower_bound}")]
    EmptyDynamicalBall { lower_bound: f64 },
    #[error("quadrature unstable: refinement changed the value by {rel_change:.3}")]
    QuadratureUnstable { rel_change: f64 },
    #[error("polydisc has no boundedness certificate (or its image leaves the certified chart)")]
    NotBounded,
    #[error("Green potential iteration failed to contract")]
    NonConvergent,
    #[error("composition produced a non-resonant monomial {0} with nonzero coefficient (bug)")]
    ClosureViolation(String),
    #[error("resonant map has a (near-)zero diagonal coefficient and cannot be inverted")]
    SingularDiagonal,
    #[error("cocycle diagonal left the exponent band at step {step}, index {index}")]
    BandViolation { step: usize, index: usize },
    #[error("cocycle is not adapted: composed normal part exceeds the admissible norm at n={step}, i={index}")]
    AdaptednessFailure { step: usize, index: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid map '{name}': {reason}")]
    InvalidMap { name: String, reason: String },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
