//! Crate-wide error type and result alias.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in the pipeline, from instance validation
/// through solving, recovery, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A sensitivity coefficient `beta[j][k]` was zero or negative. The
    /// raw→adjusted attribute map divides by nothing, but it *orients* the
    /// bound images by the sign of beta; negative sensitivities would flip
    /// bound order silently, so they are rejected outright.
    #[error("beta[{j}][{k}] = {value} must be strictly positive")]
    NonPositiveBeta { j: usize, k: usize, value: f64 },

    /// A linear solve of the visit balance system failed: the matrix is
    /// singular (or numerically indistinguishable from singular).
    #[error("visit system is singular; no unique visit vector exists")]
    SingularSystem,

    /// The Markov-chain base visit system (all attributes switched on) has
    /// no unique strictly positive solution, so the model itself is
    /// degenerate and no program can be built from it.
    #[error("Markov-chain base visit system is degenerate: {0}")]
    McBaseSystemDegenerate(String),

    /// A nested-logit instance promises nest-shared margins but some
    /// attribute's margin differs across products within a nest (or is not
    /// strictly positive). Offenders are (nest, attribute) pairs.
    #[error("nest-shared margin violated at (nest, attribute) pairs {offenders:?}")]
    SharedMarginViolated { offenders: Vec<(usize, usize)> },

    /// The attribute designated as shared in a splitting request does not
    /// actually have identical margins across the nest's products.
    #[error("attribute {attr} in nest {nest} is not shared: margins differ across products")]
    NoSharedAttribute { nest: usize, attr: usize },

    /// Two containers that must agree in length do not.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    /// A market share that provably must be strictly positive at an optimum
    /// came back at (or below) numerical zero — recovery would divide by it.
    /// This signals a solver failure, not a property of the instance.
    #[error("share[{index}] = {value} is numerically zero; cannot recover attributes")]
    DegenerateShare { index: usize, value: f64 },

    /// Nested-logit recovery could not disaggregate nest-level attribute
    /// totals into per-product values: the per-nest transportation system
    /// has no solution within tolerance.
    #[error("attribute disaggregation infeasible in nest {nest} (residual {residual:.3e})")]
    DisaggregationInfeasible { nest: usize, residual: f64 },

    /// The lattice oracle only handles small attribute spaces.
    #[error("oracle limited to {limit} lattice dimensions, instance has {dims}")]
    TooManyDims { dims: usize, limit: usize },

    /// The requested lattice would exceed the evaluation budget.
    #[error("lattice would need {evaluations:.3e} evaluations (budget {limit:.3e})")]
    GridBudgetExceeded { evaluations: f64, limit: f64 },

    /// Every lattice point violates the resource constraints; the oracle
    /// considers the instance infeasible.
    #[error("no lattice point satisfies the resource constraints")]
    OracleInfeasible,

    /// The explicit strictly-feasible dual point could not be constructed
    /// with positive interior margin for any perturbation size in the
    /// configured grid. Diagnostic: the instance sits outside the regime
    /// the construction is proven for.
    #[error("strict dual point construction failed: {0}")]
    ConstructionFailed(String),

    /// The interior-point solver hit an unrecoverable numerical problem
    /// (singular Newton system, step collapse, …).
    #[error("numerical failure in solver: {0}")]
    NumericalFailure(String),

    /// Input text failed schema validation. `path` is the JSON field path.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    /// Input parsed but violates a model invariant (named field).
    #[error("invariant violated: {field} {message}")]
    Invariant { field: String, message: String },

    /// File I/O failure in the CLI layer.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Convenience constructor for dimension mismatches.
    pub fn dims(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        }
    }

    /// Convenience constructor for invariant violations.
    pub fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }
}
