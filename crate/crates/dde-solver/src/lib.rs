//! Adaptive solver for delay differential equations.
//!
//! Handles constant, time-dependent and state-dependent delays with an
//! embedded Dormand-Prince 5(4) pair, a piecewise-polynomial continuous
//! extension for delayed-argument lookup, explicit breaking-point tracking
//! and fixed-point iteration for steps longer than the smallest delay.
//! Ships the benchmark systems, reference solvers for validation and a
//! reproducible dataset generator.
//!
//! ```
//! use dde_solver::{integrate, DdeProblem, DelayFunction, HistoryFunction,
//!                  SolverConfig, State};
//!
//! // y'(t) = -y(t - 1), y(t <= 0) = 1
//! let problem = DdeProblem::new(
//!     |_t, _y, delayed: &[Vec<f64>], dydt: &mut [f64]| dydt[0] = -delayed[0][0],
//!     vec![DelayFunction::constant(1.0)],
//!     HistoryFunction::constant(State::scalar(1.0).unwrap()),
//!     0.0,
//!     2.0,
//! ).unwrap();
//! let solution = integrate(&problem, &SolverConfig::default(), &[1.0, 2.0]).unwrap();
//! assert!(solution.states[0][0].abs() < 1e-6);          // y(1) = 0
//! assert!((solution.states[1][0] + 0.5).abs() < 1e-6);  // y(2) = -1/2
//! ```

pub mod datagen;
pub mod dense;
pub mod discontinuity;
pub mod error;
pub mod integrator;
pub mod oracle;
pub mod problem;
pub mod state;
pub mod stepper;
pub mod systems;
pub mod validate;

pub use dense::{eval_solution, Segment, SolutionBuffer};
pub use discontinuity::{Discontinuity, DiscontinuitySet};
pub use error::SolverError;
pub use integrator::{detect_discontinuity, integrate, Integration, Solution, SolverStats};
pub use problem::{
    eval_delays, eval_history, DdeProblem, DelayFunction, DelayKind, HistoryFunction,
    SolverConfig, VectorField,
};
pub use state::State;
pub use stepper::{
    build_segment, propose_step, rk_step, weighted_rms, ButcherTableau, DenseOutput, StepOutcome,
};
