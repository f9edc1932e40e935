use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric ellipticity violated at x = {point:?}: eigenvalue {eigenvalue} outside [1/2, 2]")]
    EllipticityViolated { point: [f64; 3], eigenvalue: f64 },

    #[error("background is not flat in the collar |x| >= 2 at x = {point:?}")]
    CollarNotFlat { point: [f64; 3] },

    #[error("finite-difference stencil around {point:?} leaves the grid domain")]
    BoundaryStencil { point: [f64; 3] },

    #[error("leaf stops being a graph at u = {u}: N_omega = {n_omega} <= 0.1")]
    GraphBreakdown { u: f64, n_omega: f64 },

    #[error("induced leaf metric lost positivity at u = {u}")]
    DegenerateMetric { u: f64 },

    #[error("lapse degenerate at u = {u}: min a = {min_a} <= a_min = {a_min}")]
    FlowDegenerate { u: f64, min_a: f64, a_min: f64 },

    #[error("step du = {du} exceeds stability bound c_stab * dq^2 = {bound}")]
    StabilityViolated { du: f64, bound: f64 },

    #[error("need at least {needed} leaves, have {have}")]
    InsufficientLeaves { needed: usize, have: usize },

    #[error("LP level {j} outside 0..={max}")]
    LevelOutOfRange { j: usize, max: usize },

    #[error("Gamma-integral quadrature requires alpha < 0, got {alpha}")]
    QuadratureUnsupported { alpha: f64 },

    #[error("tensor field is not trace-free: |tr F| = {trace} at node {node}")]
    NotTraceless { node: usize, trace: f64 },

    #[error("chart Jacobian degenerate: |det| = {det} < 0.1")]
    DegenerateJacobian { det: f64 },

    #[error("need at least {needed} dyadic separations, have {have}")]
    InsufficientSeparations { needed: usize, have: usize },

    #[error("quadrature under-resolved: node doubling changes result by {change} > {tol}")]
    QuadratureUnderResolved { change: f64, tol: f64 },

    #[error("need at least {needed} refinement levels, have {have}")]
    InsufficientLevels { needed: usize, have: usize },

    #[error("march failed for direction (theta = {theta}, phi = {phi}): {source}")]
    Direction {
        theta: f64,
        phi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown {kind} '{name}'; known: {known}")]
    UnknownName { kind: &'static str, name: String, known: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
