use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure carries the module it came from in its message.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("gauge: invalid grid: {0}")]
    InvalidGrid(String),
    #[error("gauge: unknown gauge name `{0}`")]
    UnknownName(String),
    #[error("gauge: bad parameters: {0}")]
    BadParams(String),
    #[error("gauge: growth function not invertible: {0}")]
    NonInvertible(String),

    #[error("hausdorff-set: generation {0} unavailable")]
    GenerationUnavailable(usize),
    #[error("hausdorff-set: verdicts not monotone in alpha ({0})")]
    Undetermined(String),

    #[error("measure: invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("measure: verdicts not monotone between alpha = {lo} and alpha = {hi}")]
    NonMonotoneVerdicts { lo: f64, hi: f64 },

    #[error("borel: evaluation point {x} within {margin} of an atom or density edge")]
    PoleProximity { x: f64, margin: f64 },
    #[error("borel: gauge does not precede t")]
    GaugeNotSubLinear,
    #[error("borel: level set unresolved: {0}")]
    UnresolvedLevelSet(String),

    #[error("halfline: length scale not reached within {n_max} sites (product attained {attained:e})")]
    NotReached { n_max: usize, attained: f64 },

    #[error("sparse-barrier: log beta is not convex ({0})")]
    ConvexityViolation(String),
    #[error("sparse-barrier: degenerate profile: {0}")]
    DegenerateProfile(String),
    #[error("sparse-barrier: scale L_{0} is not materializable")]
    ScaleNotMaterializable(usize),
    #[error("sparse-barrier: truncation did not converge ({0})")]
    TruncationNotConverged(String),

    #[error("rank-one-sule: 1 + lambda F(z) vanishes at z = {0}")]
    Resonance(f64),
    #[error("rank-one-sule: hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("dynamics: boundary leakage {leak:e} exceeds budget {budget:e}; enlarge the box")]
    LeakageExceeded { leak: f64, budget: f64 },
    #[error("dynamics: spectral measure of psi is not uniformly rho-Hoelder at resolved scales")]
    NotUpH,
    #[error("dynamics: hypothesis not certified: {0}")]
    HypothesisNotCertified(String),
    #[error("dynamics: {0}")]
    Dynamics(String),

    #[error("cli: invalid config field `{field}`: {msg}")]
    ConfigInvalid { field: String, msg: String },
    #[error("cli: io: {0}")]
    Io(String),
}
