//! Problem definition: history functions, delay functions, the equation
//! itself and the solver configuration.
//!
//! A delay differential equation here is
//!
//! ```text
//!   y'(t) = f(t, y(t), y(t - tau_1(t, y)), ..., y(t - tau_k(t, y)))
//!   y(t)  = phi(t)   for t <= t0
//! ```
//!
//! with `k >= 0`; `k = 0` degenerates to an ordinary differential equation.
//! All types are immutable after construction and safe to share across
//! threads. Evaluators must be pure: the solver assumes repeated calls with
//! equal arguments return equal values.

use std::fmt;
use std::sync::Arc;

use crate::discontinuity::Discontinuity;
use crate::error::SolverError;
use crate::state::State;

/// Prescribed solution on `t <= t0`.
///
/// `known_jumps` lists the times where the history or its derivatives are
/// discontinuous; they seed the integrator's breaking-point set.
#[derive(Clone)]
pub struct HistoryFunction {
    evaluator: Arc<dyn Fn(f64) -> State + Send + Sync>,
    known_jumps: Vec<Discontinuity>,
    dim: usize,
}

impl HistoryFunction {
    /// Builds a history from an evaluator.
    ///
    /// `known_jumps` must be strictly increasing. The dimension is probed by
    /// one evaluation at `t = 0` shifted into the domain by the caller's
    /// convention (histories are always consulted at `t <= t0`, so the probe
    /// uses an arbitrary representative argument of `0.0`).
    pub fn new(
        evaluator: impl Fn(f64) -> State + Send + Sync + 'static,
        known_jumps: Vec<Discontinuity>,
    ) -> Result<Self, SolverError> {
        for pair in known_jumps.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(SolverError::InvalidInput(
                    "history known_jumps must be strictly increasing".into(),
                ));
            }
        }
        let dim = evaluator(0.0).dim();
        Ok(HistoryFunction {
            evaluator: Arc::new(evaluator),
            known_jumps,
            dim,
        })
    }

    /// Constant history `phi(t) = value` (componentwise), no jumps.
    pub fn constant(state: State) -> Self {
        HistoryFunction {
            dim: state.dim(),
            evaluator: Arc::new(move |_t| state.clone()),
            known_jumps: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn known_jumps(&self) -> &[Discontinuity] {
        &self.known_jumps
    }

    /// Raw evaluation without the domain check; the buffer uses this after
    /// it has already routed `t <= t0`.
    pub(crate) fn eval_raw(&self, t: f64) -> State {
        (self.evaluator)(t)
    }
}

impl fmt::Debug for HistoryFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HistoryFunction")
            .field("dim", &self.dim)
            .field("known_jumps", &self.known_jumps)
            .finish()
    }
}

/// Evaluates `phi(t)` for `t <= t0`.
pub fn eval_history(history: &HistoryFunction, t0: f64, t: f64) -> Result<State, SolverError> {
    if t > t0 {
        return Err(SolverError::HistoryDomain { t, t0 });
    }
    Ok(history.eval_raw(t))
}

/// Delay classification, mirroring how much of `(t, y)` the function reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayKind {
    Constant,
    TimeDependent,
    StateDependent,
}

/// A single delay `tau_i(t, y(t)) >= 0`.
#[derive(Clone)]
pub struct DelayFunction {
    evaluator: Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    kind: DelayKind,
}

impl DelayFunction {
    /// Fixed delay; the evaluator ignores both arguments by construction.
    pub fn constant(tau: f64) -> Self {
        DelayFunction {
            evaluator: Arc::new(move |_t, _y| tau),
            kind: DelayKind::Constant,
        }
    }

    pub fn time_dependent(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        DelayFunction {
            evaluator: Arc::new(move |t, _y| f(t)),
            kind: DelayKind::TimeDependent,
        }
    }

    pub fn state_dependent(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        DelayFunction {
            evaluator: Arc::new(f),
            kind: DelayKind::StateDependent,
        }
    }

    pub fn kind(&self) -> DelayKind {
        self.kind
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> f64 {
        (self.evaluator)(t, y)
    }
}

impl fmt::Debug for DelayFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayFunction")
            .field("kind", &self.kind)
            .finish()
    }
}

/// Right-hand side: `f(t, y, delayed_states, dydt)`.
///
/// `delayed_states` has exactly one entry per delay, in declaration order,
/// each of the problem dimension. The output slice is zero-initialized by
/// the caller.
pub type VectorField = Arc<dyn Fn(f64, &[f64], &[Vec<f64>], &mut [f64]) + Send + Sync>;

/// A delay differential equation on `[t0, t_final]`.
#[derive(Clone)]
pub struct DdeProblem {
    pub(crate) vector_field: VectorField,
    pub(crate) delays: Vec<DelayFunction>,
    pub(crate) history: HistoryFunction,
    pub(crate) t0: f64,
    pub(crate) t_final: f64,
}

impl DdeProblem {
    pub fn new(
        vector_field: impl Fn(f64, &[f64], &[Vec<f64>], &mut [f64]) + Send + Sync + 'static,
        delays: Vec<DelayFunction>,
        history: HistoryFunction,
        t0: f64,
        t_final: f64,
    ) -> Result<Self, SolverError> {
        if !(t_final.is_finite() && t0.is_finite()) {
            return Err(SolverError::InvalidInput("t0 and t_final must be finite".into()));
        }
        if t_final <= t0 {
            return Err(SolverError::InvalidInput(format!(
                "t_final ({t_final}) must exceed t0 ({t0})"
            )));
        }
        Ok(DdeProblem {
            vector_field: Arc::new(vector_field),
            delays,
            history,
            t0,
            t_final,
        })
    }

    pub fn dim(&self) -> usize {
        self.history.dim()
    }

    pub fn num_delays(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[DelayFunction] {
        &self.delays
    }

    pub fn history(&self) -> &HistoryFunction {
        &self.history
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Evaluates the vector field once.
    pub fn eval_vector_field(
        &self,
        t: f64,
        y: &[f64],
        delayed: &[Vec<f64>],
        dydt: &mut [f64],
    ) {
        (self.vector_field)(t, y, delayed, dydt)
    }
}

impl fmt::Debug for DdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DdeProblem")
            .field("dim", &self.dim())
            .field("num_delays", &self.num_delays())
            .field("t0", &self.t0)
            .field("t_final", &self.t_final)
            .finish()
    }
}

/// Evaluates all delays at `(t, y)` without applying the vanishing guard;
/// the integrator checks the guard at lookup time.
pub fn eval_delays(problem: &DdeProblem, t: f64, y: &State) -> Result<Vec<f64>, SolverError> {
    if y.dim() != problem.dim() {
        return Err(SolverError::DimensionMismatch {
            expected: problem.dim(),
            got: y.dim(),
        });
    }
    Ok(problem
        .delays
        .iter()
        .map(|d| d.eval(t, y.as_slice()))
        .collect())
}

/// Solver tolerances and limits.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Relative tolerance of the embedded error estimate.
    pub rtol: f64,
    /// Absolute tolerance of the embedded error estimate.
    pub atol: f64,
    /// Initial step size; automatic selection when absent.
    pub dt0: Option<f64>,
    /// Budget of attempted steps (accepted plus rejected).
    pub max_steps: usize,
    /// Convergence threshold of the overlap fixed-point iteration, in units
    /// of the weighted error norm (acceptance threshold is 1).
    pub fp_tol: f64,
    /// Maximum sweeps of the overlap fixed-point iteration per step.
    pub fp_max_iters: usize,
    /// Delays below this value abort the integration with a typed error.
    pub min_delay_guard: f64,
    /// Breaking points are propagated until their derivative-jump order
    /// exceeds this cutoff (p + 1 for the order-5 pair).
    pub discontinuity_order_cutoff: u32,
    /// Locate and mesh breaking points by root finding on the delayed
    /// arguments. Disabling leaves accuracy to step-size control alone.
    pub track_discontinuities: bool,
    /// Optional variant: record an inferred breaking point wherever the
    /// controller only accepted a step after a cluster of rejections.
    pub infer_discontinuities_from_rejections: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-7,
            atol: 1e-7,
            dt0: None,
            max_steps: 100_000,
            fp_tol: 0.1,
            fp_max_iters: 10,
            min_delay_guard: 1e-10,
            discontinuity_order_cutoff: 6,
            track_discontinuities: true,
            infer_discontinuities_from_rejections: false,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        SolverConfig {
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn dt0(mut self, dt0: f64) -> Self {
        self.dt0 = Some(dt0);
        self
    }

    pub fn max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn fixed_point(mut self, fp_tol: f64, fp_max_iters: usize) -> Self {
        self.fp_tol = fp_tol;
        self.fp_max_iters = fp_max_iters;
        self
    }

    pub fn track_discontinuities(mut self, on: bool) -> Self {
        self.track_discontinuities = on;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.fp_tol > 0.0) {
            return Err(SolverError::InvalidInput(
                "rtol, atol and fp_tol must be positive".into(),
            ));
        }
        if self.max_steps < 1 || self.fp_max_iters < 1 {
            return Err(SolverError::InvalidInput(
                "max_steps and fp_max_iters must be at least 1".into(),
            ));
        }
        if self.min_delay_guard < 0.0 {
            return Err(SolverError::InvalidInput(
                "min_delay_guard must be non-negative".into(),
            ));
        }
        if let Some(dt0) = self.dt0 {
            if !(dt0 > 0.0 && dt0.is_finite()) {
                return Err(SolverError::InvalidInput("dt0 must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_history_constant() {
        let h = HistoryFunction::constant(State::scalar(0.7).unwrap());
        let v = eval_history(&h, 0.0, -1.5).unwrap();
        assert_eq!(v.as_slice(), &[0.7]);
    }

    #[test]
    fn eval_history_step_function() {
        // step history: y0 for t <= t_jump, y1 otherwise
        let (y0, y1, t_jump) = (0.1, 3.0, -1.0);
        let h = HistoryFunction::new(
            move |t| State::scalar(if t <= t_jump { y0 } else { y1 }).unwrap(),
            vec![Discontinuity {
                t: t_jump,
                order: 0,
            }],
        )
        .unwrap();
        assert_eq!(eval_history(&h, 0.0, -2.0).unwrap().as_slice(), &[0.1]);
        assert_eq!(eval_history(&h, 0.0, -1.0).unwrap().as_slice(), &[0.1]);
        assert_eq!(eval_history(&h, 0.0, -0.5).unwrap().as_slice(), &[3.0]);
    }

    #[test]
    fn eval_history_diffusion_profile() {
        // phi(x, t) = a sin(x) exp(-0.01 t) on the grid x_j = j / 100
        let a = 1.0;
        let h = HistoryFunction::new(
            move |t| {
                let vals = (0..100)
                    .map(|j| a * (j as f64 * 0.01).sin() * (-0.01 * t).exp())
                    .collect();
                State::new(vals).unwrap()
            },
            vec![],
        )
        .unwrap();
        let v = eval_history(&h, 0.0, 0.0).unwrap();
        assert!((v[50] - 0.479425538604203).abs() < 1e-15);
    }

    #[test]
    fn eval_history_rejects_future_times() {
        let h = HistoryFunction::constant(State::scalar(1.0).unwrap());
        assert!(matches!(
            eval_history(&h, 0.0, 0.1),
            Err(SolverError::HistoryDomain { .. })
        ));
    }

    #[test]
    fn eval_delays_examples() {
        let history = HistoryFunction::constant(State::scalar(1.0).unwrap());
        let field = |_t: f64, _y: &[f64], _d: &[Vec<f64>], out: &mut [f64]| out[0] = 0.0;

        let time_dep = DdeProblem::new(
            field,
            vec![DelayFunction::time_dependent(|t| 2.0 + t.sin())],
            history.clone(),
            0.0,
            1.0,
        )
        .unwrap();
        let taus = eval_delays(&time_dep, 0.0, &State::scalar(0.3).unwrap()).unwrap();
        assert_eq!(taus, vec![2.0]);

        let state_dep = DdeProblem::new(
            field,
            vec![DelayFunction::state_dependent(|_t, y| 0.5 * y[0].cos())],
            history.clone(),
            0.0,
            1.0,
        )
        .unwrap();
        let taus = eval_delays(&state_dep, 0.7, &State::scalar(0.0).unwrap()).unwrap();
        assert_eq!(taus, vec![0.5]);

        let constant = DdeProblem::new(
            field,
            vec![DelayFunction::constant(2.0)],
            history,
            0.0,
            1.0,
        )
        .unwrap();
        let taus = eval_delays(&constant, -3.0, &State::scalar(123.0).unwrap()).unwrap();
        assert_eq!(taus, vec![2.0]);
    }

    #[test]
    fn problem_rejects_reversed_span() {
        let history = HistoryFunction::constant(State::scalar(1.0).unwrap());
        let err = DdeProblem::new(
            |_t, _y, _d, out: &mut [f64]| out[0] = 0.0,
            vec![],
            history,
            1.0,
            1.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            rtol: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            fp_max_iters: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
