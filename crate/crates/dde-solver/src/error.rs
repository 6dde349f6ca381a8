//! Error types shared across the solver.

use thiserror::Error;

/// Errors raised while building problems, evaluating dense output or
/// driving an integration.
#[derive(Debug, Error)]
pub enum SolverError {
    /// A state vector contained NaN or infinite components.
    #[error("non-finite state component at index {index}: {value}")]
    NonFiniteState { index: usize, value: f64 },

    /// A vector field or stage derivative produced NaN/Inf during a step.
    #[error("non-finite derivative encountered at t = {t}")]
    NonFiniteDerivative { t: f64 },

    /// History function queried to the right of its domain.
    #[error("history evaluated at t = {t} but the history domain ends at t0 = {t0}")]
    HistoryDomain { t: f64, t0: f64 },

    /// Dense-output evaluation beyond the integrated frontier.
    #[error("evaluation at t = {t} is beyond the solution frontier {frontier}")]
    OutOfFrontier { t: f64, frontier: f64 },

    /// Trial-interpolant evaluation beyond its covered range.
    #[error("evaluation at t = {t} is beyond the trial interpolant end {t_end}")]
    OutOfTrialRange { t: f64, t_end: f64 },

    /// Appended segment does not start at the buffer frontier.
    #[error("segment starts at {t_start} but the buffer frontier is {frontier}")]
    Contiguity { t_start: f64, frontier: f64 },

    /// A delay function returned a value below the configured guard.
    #[error("delay {index} returned tau = {tau} at t = {t}, below the vanishing-delay guard {guard}")]
    VanishingDelay {
        index: usize,
        t: f64,
        tau: f64,
        guard: f64,
    },

    /// The overlap fixed-point iteration did not converge.
    #[error("fixed-point iteration on [{t_from}, {t_to}] did not converge after {iters} sweeps (last delta {last_delta})")]
    FixedPointDivergence {
        t_from: f64,
        t_to: f64,
        iters: usize,
        last_delta: f64,
    },

    /// Step budget exhausted before reaching the end of the span.
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },

    /// Step size shrank below the resolvable scale.
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },

    /// Mismatched vector dimensions.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Invalid problem, configuration or argument.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A dataset trajectory failed to integrate.
    #[error("trajectory {index} failed: {source}")]
    TrajectoryFailure {
        index: usize,
        #[source]
        source: Box<SolverError>,
    },

    /// Filesystem failure while writing or reading dataset files.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SolverError {
    /// Short machine-parsable kind tag, used by the CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            SolverError::NonFiniteState { .. } => "non-finite-state",
            SolverError::NonFiniteDerivative { .. } => "non-finite-derivative",
            SolverError::HistoryDomain { .. } => "history-domain",
            SolverError::OutOfFrontier { .. } => "out-of-frontier",
            SolverError::OutOfTrialRange { .. } => "out-of-trial-range",
            SolverError::Contiguity { .. } => "contiguity",
            SolverError::VanishingDelay { .. } => "vanishing-delay",
            SolverError::FixedPointDivergence { .. } => "fixed-point-divergence",
            SolverError::MaxStepsExceeded { .. } => "max-steps-exceeded",
            SolverError::StepSizeUnderflow { .. } => "step-size-underflow",
            SolverError::DimensionMismatch { .. } => "dimension-mismatch",
            SolverError::InvalidInput(_) => "invalid-input",
            SolverError::TrajectoryFailure { .. } => "trajectory-failure",
            SolverError::Io(_) => "io",
        }
    }
}
