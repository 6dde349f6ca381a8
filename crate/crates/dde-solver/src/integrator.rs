//! The DDE driver: delayed arguments are frozen through the dense solution
//! buffer, steps whose trial span exceeds the current minimum delay are
//! iterated to a fixed point on the trial interpolant, accepted steps are
//! scanned for breaking points and redone onto them when one is found
//! strictly inside.

use std::cell::Cell;

use serde::Serialize;

use crate::dense::{Segment, SolutionBuffer};
use crate::discontinuity::{Discontinuity, DiscontinuitySet};
use crate::error::SolverError;
use crate::problem::{DdeProblem, DelayKind, SolverConfig};
use crate::state::State;
use crate::stepper::{build_segment, rk_step, weighted_rms, ButcherTableau, StepOutcome};

/// Most re-integrations onto a located breaking point per step.
const MAX_REDOS: usize = 32;
/// Controller memory floor, matching the classic dopri codes.
const ERR_PREV_FLOOR: f64 = 1e-4;

fn time_tolerance(t: f64) -> f64 {
    1e-12 * t.abs().max(1.0)
}

/// Counters collected over one integration.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SolverStats {
    /// Accepted steps (segments stored).
    pub n_steps: usize,
    /// Error-controller rejections.
    pub n_rejected: usize,
    /// Steps re-integrated onto a located breaking point.
    pub n_redone: usize,
    /// Fixed-point refinement sweeps beyond the first, summed over steps.
    pub n_fp_iterations: usize,
    /// Breaking points recorded during the integration.
    pub n_discontinuities_hit: usize,
    /// Vector-field evaluations inside Runge-Kutta stages.
    pub n_vf_evals: usize,
    /// Runge-Kutta step invocations (each costs exactly S evaluations).
    pub n_rk_calls: usize,
    /// Vector-field evaluations outside stages (initial step estimation).
    pub n_aux_evals: usize,
    /// Most sweeps any single overlap iteration used.
    pub max_fp_sweeps: usize,
    /// (first, last) fixed-point delta per overlap step that recorded at
    /// least two deltas.
    pub fp_delta_extremes: Vec<(f64, f64)>,
}

/// Result of an integration: dense output, breaking points, samples and
/// counters.
#[derive(Debug, Clone)]
pub struct Solution {
    pub buffer: SolutionBuffer,
    pub discontinuities: DiscontinuitySet,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: SolverStats,
}

impl Solution {
    pub fn eval(&self, t: f64) -> Result<State, SolverError> {
        State::new(self.buffer.eval(t)?)
    }
}

/// Drives `problem` from `t0` to `t_final` and samples at `save_times`.
///
/// Deterministic for fixed inputs. Fails with the typed error of whatever
/// went wrong first: step budget, vanishing delay, fixed-point divergence
/// or a non-finite state.
pub fn integrate(
    problem: &DdeProblem,
    config: &SolverConfig,
    save_times: &[f64],
) -> Result<Solution, SolverError> {
    validate_save_times(problem, save_times)?;
    let mut integration = Integration::new(problem, config)?;
    while !integration.is_finished() {
        integration.step_once()?;
    }
    integration.into_solution(save_times)
}

fn validate_save_times(problem: &DdeProblem, save_times: &[f64]) -> Result<(), SolverError> {
    for pair in save_times.windows(2) {
        if pair[1] < pair[0] {
            return Err(SolverError::InvalidInput(
                "save_times must be sorted ascending".into(),
            ));
        }
    }
    if let (Some(&first), Some(&last)) = (save_times.first(), save_times.last()) {
        if first < problem.t0() || last > problem.t_final() {
            return Err(SolverError::InvalidInput(format!(
                "save_times must lie within [{}, {}]",
                problem.t0(),
                problem.t_final()
            )));
        }
    }
    Ok(())
}

struct Attempt {
    outcome: StepOutcome,
    segment: Segment,
    sweeps: usize,
    deltas: Vec<f64>,
}

/// An integration in progress; [`integrate`] is the one-shot wrapper.
pub struct Integration {
    problem: DdeProblem,
    config: SolverConfig,
    tableau: ButcherTableau,
    buffer: SolutionBuffer,
    lambdas: DiscontinuitySet,
    y: Vec<f64>,
    h: f64,
    err_prev: f64,
    consecutive_rejects: usize,
    stats: SolverStats,
}

impl Integration {
    pub fn new(problem: &DdeProblem, config: &SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        let tableau = ButcherTableau::dopri5();
        let y0 = problem.history().eval_raw(problem.t0());
        if y0.dim() != problem.dim() {
            return Err(SolverError::DimensionMismatch {
                expected: problem.dim(),
                got: y0.dim(),
            });
        }
        let lambdas = DiscontinuitySet::seed(
            problem.history().known_jumps(),
            problem.t0(),
            config.discontinuity_order_cutoff,
        );
        let buffer = SolutionBuffer::new(problem.history().clone(), problem.t0());
        let mut integration = Integration {
            problem: problem.clone(),
            config: config.clone(),
            tableau,
            buffer,
            lambdas,
            y: y0.into_vec(),
            h: 0.0,
            err_prev: 1.0,
            consecutive_rejects: 0,
            stats: SolverStats::default(),
        };
        integration.h = integration.initial_step_size()?;
        Ok(integration)
    }

    pub fn is_finished(&self) -> bool {
        self.buffer.frontier() >= self.problem.t_final()
    }

    pub fn frontier(&self) -> f64 {
        self.buffer.frontier()
    }

    pub fn stats(&self) -> &SolverStats {
        &self.stats
    }

    pub fn discontinuities(&self) -> &DiscontinuitySet {
        &self.lambdas
    }

    /// Automatic first step: scaled-derivative heuristic, capped by the
    /// smallest initial delay so the first step never overlaps.
    fn initial_step_size(&mut self) -> Result<f64, SolverError> {
        let span = self.problem.t_final() - self.problem.t0();
        if let Some(dt0) = self.config.dt0 {
            return Ok(dt0.min(span));
        }
        let t0 = self.problem.t0();
        let dim = self.problem.dim();
        let mut tau_min = f64::INFINITY;
        let mut delayed = Vec::with_capacity(self.problem.num_delays());
        for (index, delay) in self.problem.delays().iter().enumerate() {
            let tau = delay.eval(t0, &self.y);
            self.check_delay(index, t0, tau)?;
            tau_min = tau_min.min(tau);
            delayed.push(self.problem.history().eval_raw(t0 - tau).into_vec());
        }
        let mut f0 = vec![0.0; dim];
        self.problem.eval_vector_field(t0, &self.y, &delayed, &mut f0);
        self.stats.n_aux_evals += 1;
        if f0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteDerivative { t: t0 });
        }
        let d0 = weighted_rms(&self.y, &self.y, &self.y, self.config.rtol, self.config.atol);
        let d1 = weighted_rms(&f0, &self.y, &self.y, self.config.rtol, self.config.atol);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(tau_min);
        Ok(h0.min(span))
    }

    fn check_delay(&self, index: usize, t: f64, tau: f64) -> Result<(), SolverError> {
        if !tau.is_finite() || tau < self.config.min_delay_guard {
            return Err(SolverError::VanishingDelay {
                index,
                t,
                tau,
                guard: self.config.min_delay_guard,
            });
        }
        Ok(())
    }

    /// One iteration of the driver: attempt, reject/shrink, redo onto a
    /// breaking point, or commit.
    pub fn step_once(&mut self) -> Result<(), SolverError> {
        let t_n = self.buffer.frontier();
        let t_final = self.problem.t_final();
        let mut h = self.h.min(t_final - t_n);
        let mut redo_count = 0usize;
        let mut h_before_redo: Option<f64> = None;

        loop {
            if self.stats.n_steps + self.stats.n_rejected >= self.config.max_steps {
                return Err(SolverError::MaxStepsExceeded {
                    t: t_n,
                    max_steps: self.config.max_steps,
                });
            }
            if h < 32.0 * f64::EPSILON * t_n.abs().max(1.0) {
                return Err(SolverError::StepSizeUnderflow { t: t_n, h });
            }
            let t_next = if t_n + h >= t_final { t_final } else { t_n + h };
            let attempt = self.attempt(t_n, t_next)?;

            if attempt.outcome.err_norm > 1.0 {
                self.stats.n_rejected += 1;
                self.consecutive_rejects += 1;
                h = attempt.outcome.h_next.min(t_final - t_n);
                continue;
            }

            if self.config.track_discontinuities && self.problem.num_delays() > 0 {
                if let Some(found) = detect_discontinuity(
                    t_n,
                    t_next,
                    &self.lambdas,
                    &self.problem,
                    &self.buffer,
                    Some(&attempt.segment),
                    self.config.discontinuity_order_cutoff,
                    self.config.min_delay_guard,
                )? {
                    let coincide_tol = 100.0 * time_tolerance(t_next);
                    if found.t < t_next - coincide_tol {
                        if redo_count < MAX_REDOS {
                            redo_count += 1;
                            self.stats.n_redone += 1;
                            h_before_redo.get_or_insert(h);
                            h = found.t - t_n;
                            continue;
                        }
                        log::warn!(
                            "breaking point at {} left inside step [{}, {}] after {} redos",
                            found.t,
                            t_n,
                            t_next,
                            MAX_REDOS
                        );
                    }
                    if self
                        .lambdas
                        .insert(found, coincide_tol, self.config.discontinuity_order_cutoff)
                    {
                        self.stats.n_discontinuities_hit += 1;
                    }
                }
            }

            return self.commit(t_n, t_next, h, h_before_redo, attempt);
        }
    }

    fn commit(
        &mut self,
        _t_n: f64,
        t_next: f64,
        h: f64,
        h_before_redo: Option<f64>,
        attempt: Attempt,
    ) -> Result<(), SolverError> {
        if attempt.sweeps > 1 {
            self.stats.n_fp_iterations += attempt.sweeps - 1;
            self.stats.max_fp_sweeps = self.stats.max_fp_sweeps.max(attempt.sweeps);
            if attempt.deltas.len() >= 2 {
                self.stats.fp_delta_extremes.push((
                    attempt.deltas[0],
                    *attempt.deltas.last().unwrap(),
                ));
            }
        }
        self.buffer.append_segment(attempt.segment)?;
        self.y = attempt.outcome.y_next;

        if self.config.infer_discontinuities_from_rejections && self.consecutive_rejects >= 3 {
            // The controller only accepted after a cluster of rejections:
            // take the surviving step end as a located jump.
            let inserted = self.lambdas.insert(
                Discontinuity {
                    t: t_next,
                    order: 1,
                },
                100.0 * time_tolerance(t_next),
                self.config.discontinuity_order_cutoff,
            );
            if inserted {
                self.stats.n_discontinuities_hit += 1;
            }
        }
        self.consecutive_rejects = 0;

        // Controller proposal for the next step; a step truncated onto a
        // breaking point must not ratchet the step size down, so the
        // pre-truncation width is restored once the point is passed.
        let mut h_next = attempt.outcome.h_next;
        if let Some(h_old) = h_before_redo {
            h_next = h_next.max(h_old);
        }
        let _ = h;
        self.h = h_next;
        self.err_prev = attempt.outcome.err_norm.max(ERR_PREV_FLOOR);
        self.stats.n_steps += 1;
        Ok(())
    }

    /// Runs one trial over `[t_n, t_next]`, choosing between the plain
    /// frozen step and the overlap fixed-point loop.
    fn attempt(&mut self, t_n: f64, t_next: f64) -> Result<Attempt, SolverError> {
        let h = t_next - t_n;
        let mut tau_min = f64::INFINITY;
        for (index, delay) in self.problem.delays().iter().enumerate() {
            let tau = delay.eval(t_n, &self.y);
            self.check_delay(index, t_n, tau)?;
            tau_min = tau_min.min(tau);
        }
        let pi = self.initial_guess(t_n, t_next)?;
        let overlapping = self.problem.num_delays() > 0 && h > tau_min;
        if overlapping {
            self.overlap_loop(t_n, t_next, pi)
        } else {
            let outcome = self.sweep(t_n, t_next, &pi)?;
            let segment = build_segment(&self.tableau, t_n, t_next, &self.y, &outcome)?;
            Ok(Attempt {
                outcome,
                segment,
                sweeps: 1,
                deltas: Vec::new(),
            })
        }
    }

    /// Initial trial interpolant: the previous step's polynomial carried
    /// forward, or a constant for the very first step.
    fn initial_guess(&self, t_n: f64, t_next: f64) -> Result<Segment, SolverError> {
        match self.buffer.segments().last() {
            Some(last) => last.extend_onto(t_n, t_next),
            None => Segment::constant(t_n, t_next, &self.y),
        }
    }

    /// Fixed-point iteration on the trial interpolant: step with the frozen
    /// right-hand side, rebuild the interpolant from the new stages, repeat
    /// until the step-end state stops moving.
    fn overlap_loop(&mut self, t_n: f64, t_next: f64, mut pi: Segment) -> Result<Attempt, SolverError> {
        let mut prev_y_next: Option<Vec<f64>> = None;
        let mut deltas = Vec::new();
        let mut diff = vec![0.0; self.problem.dim()];

        for sweep in 1..=self.config.fp_max_iters {
            let outcome = self.sweep(t_n, t_next, &pi)?;
            let segment = build_segment(&self.tableau, t_n, t_next, &self.y, &outcome)?;

            if outcome.err_norm > 1.0 {
                // The controller will reject this trial anyway; shrink
                // before spending more sweeps.
                return Ok(Attempt {
                    outcome,
                    segment,
                    sweeps: sweep,
                    deltas,
                });
            }

            let converged = match &prev_y_next {
                Some(prev) => {
                    for ((slot, a), b) in diff.iter_mut().zip(&outcome.y_next).zip(prev) {
                        *slot = a - b;
                    }
                    let delta = weighted_rms(
                        &diff,
                        prev,
                        &outcome.y_next,
                        self.config.rtol,
                        self.config.atol,
                    );
                    deltas.push(delta);
                    delta <= self.config.fp_tol
                }
                None => false,
            };
            prev_y_next = Some(outcome.y_next.clone());

            if converged {
                return Ok(Attempt {
                    outcome,
                    segment,
                    sweeps: sweep,
                    deltas,
                });
            }
            pi = segment;
        }

        Err(SolverError::FixedPointDivergence {
            t_from: t_n,
            t_to: t_next,
            iters: self.config.fp_max_iters,
            last_delta: deltas.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// One frozen Runge-Kutta trial. Delays are evaluated at the stage
    /// abscissae with the stage's trial state; the delayed state itself
    /// comes from the buffer, or from `pi` when the lookup lands inside the
    /// trial interval.
    fn sweep(&mut self, t_n: f64, t_next: f64, pi: &Segment) -> Result<StepOutcome, SolverError> {
        let problem = &self.problem;
        let buffer = &self.buffer;
        let guard = self.config.min_delay_guard;
        let evals = Cell::new(0usize);
        let dim = problem.dim();
        let mut delayed: Vec<Vec<f64>> = vec![vec![0.0; dim]; problem.num_delays()];

        let outcome = {
            let f_ode = |t: f64, y: &[f64], out: &mut [f64]| -> Result<(), SolverError> {
                for (index, delay) in problem.delays().iter().enumerate() {
                    let tau = delay.eval(t, y);
                    if !tau.is_finite() || tau < guard {
                        return Err(SolverError::VanishingDelay {
                            index,
                            t,
                            tau,
                            guard,
                        });
                    }
                    buffer.eval_with_overlap_into(pi, t - tau, &mut delayed[index])?;
                }
                out.fill(0.0);
                problem.eval_vector_field(t, y, &delayed, out);
                evals.set(evals.get() + 1);
                Ok(())
            };
            rk_step(
                &self.tableau,
                f_ode,
                t_n,
                t_next - t_n,
                &self.y,
                self.config.rtol,
                self.config.atol,
                self.err_prev,
            )?
        };
        self.stats.n_rk_calls += 1;
        self.stats.n_vf_evals += evals.get();
        Ok(outcome)
    }

    /// Finalizes the run: samples the dense output on the save grid.
    pub fn into_solution(self, save_times: &[f64]) -> Result<Solution, SolverError> {
        let mut states = Vec::with_capacity(save_times.len());
        for &t in save_times {
            states.push(self.buffer.eval(t)?);
        }
        Ok(Solution {
            buffer: self.buffer,
            discontinuities: self.lambdas,
            times: save_times.to_vec(),
            states,
            stats: self.stats,
        })
    }
}

/// Scans `(t_n, t_next]` for the earliest crossing of an existing breaking
/// point by a delayed argument.
///
/// For every delay `i` and stored point `lambda_s` whose propagated order
/// stays within `cutoff`, the deviation `g(t) = t - tau_i(t, yhat(t)) -
/// lambda_s` is checked for a sign change over the interval; the smallest
/// root (bisected to `1e-12 * max(1, |t_next|)`) is returned with order
/// `lambda_s.order + 1`. Sign changes are exactly the odd-multiplicity
/// roots; tangential touches are ignored.
#[allow(clippy::too_many_arguments)]
pub fn detect_discontinuity(
    t_n: f64,
    t_next: f64,
    lambdas: &DiscontinuitySet,
    problem: &DdeProblem,
    buffer: &SolutionBuffer,
    trial: Option<&Segment>,
    cutoff: u32,
    guard: f64,
) -> Result<Option<Discontinuity>, SolverError> {
    debug_assert!(t_next > t_n);
    let t_tol = time_tolerance(t_next);
    let dim = problem.dim();
    let mut scratch = vec![0.0; dim];
    let mut best: Option<Discontinuity> = None;

    for (index, delay) in problem.delays().iter().enumerate() {
        // deviation(t) = t - tau_i(t, yhat(t)); constant and time-dependent
        // delays never read the state, so the interpolation is skipped.
        let needs_state = delay.kind() == DelayKind::StateDependent;
        let deviation = |t: f64, scratch: &mut Vec<f64>| -> Result<f64, SolverError> {
            let tau = if needs_state {
                match trial {
                    Some(seg) => buffer.eval_with_overlap_into(seg, t, scratch)?,
                    None => buffer.eval_into(t, scratch)?,
                }
                delay.eval(t, scratch)
            } else {
                delay.eval(t, &[])
            };
            if !tau.is_finite() || tau < guard {
                return Err(SolverError::VanishingDelay {
                    index,
                    t,
                    tau,
                    guard,
                });
            }
            Ok(t - tau)
        };

        let dev_start = deviation(t_n, &mut scratch)?;
        let dev_end = deviation(t_next, &mut scratch)?;

        for lambda in lambdas.items() {
            if lambda.order + 1 > cutoff {
                continue;
            }
            let g_start = dev_start - lambda.t;
            let g_end = dev_end - lambda.t;
            let root = if g_start.abs() <= t_tol {
                // standing on this crossing at t_n; it was already meshed
                continue;
            } else if g_end.abs() <= t_tol {
                t_next
            } else if g_start.signum() * g_end.signum() < 0.0 {
                bisect_root(
                    |t, scratch| Ok(deviation(t, scratch)? - lambda.t),
                    t_n,
                    t_next,
                    g_start,
                    t_tol,
                    &mut scratch,
                )?
            } else {
                continue;
            };
            if root <= t_n + t_tol {
                continue;
            }
            let candidate = Discontinuity {
                t: root,
                order: lambda.order + 1,
            };
            match best {
                Some(cur) if cur.t <= candidate.t => {}
                _ => best = Some(candidate),
            }
        }
    }
    Ok(best)
}

/// Bisection on a bracketing interval. After 200 halvings without meeting
/// the width tolerance the bracket midpoint is returned with a warning.
fn bisect_root<F>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    mut f_a: f64,
    xtol: f64,
    scratch: &mut Vec<f64>,
) -> Result<f64, SolverError>
where
    F: FnMut(f64, &mut Vec<f64>) -> Result<f64, SolverError>,
{
    const MAX_BISECTIONS: usize = 200;
    for _ in 0..MAX_BISECTIONS {
        if (b - a) <= xtol {
            return Ok(0.5 * (a + b));
        }
        let mid = 0.5 * (a + b);
        let f_mid = f(mid, scratch)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_a < 0.0) != (f_mid < 0.0) {
            b = mid;
        } else {
            a = mid;
            f_a = f_mid;
        }
    }
    log::warn!("bisection stalled on [{a}, {b}]; using the bracket midpoint");
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{DelayFunction, HistoryFunction};

    fn constant_history(value: f64) -> HistoryFunction {
        HistoryFunction::constant(State::scalar(value).unwrap())
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// y' = -y(t - 1), phi = 1: method of steps gives y = 1 - t on [0, 1]
    /// and y = 1 - t + (t-1)^2/2 on [1, 2].
    fn linear_dde(t_final: f64) -> DdeProblem {
        DdeProblem::new(
            |_t, _y, delayed: &[Vec<f64>], out: &mut [f64]| out[0] = -delayed[0][0],
            vec![DelayFunction::constant(1.0)],
            constant_history(1.0),
            0.0,
            t_final,
        )
        .unwrap()
    }

    #[test]
    fn pure_ode_matches_exponential() {
        let problem = DdeProblem::new(
            |_t, y: &[f64], delayed: &[Vec<f64>], out: &mut [f64]| {
                assert!(delayed.is_empty());
                out[0] = -y[0];
            },
            vec![],
            constant_history(1.0),
            0.0,
            1.0,
        )
        .unwrap();
        let sol = integrate(&problem, &SolverConfig::default(), &[1.0]).unwrap();
        assert!((sol.states[0][0] - (-1.0f64).exp()).abs() < 1e-7);
        assert_eq!(sol.buffer.frontier(), 1.0);
    }

    #[test]
    fn linear_dde_matches_method_of_steps_values() {
        let problem = linear_dde(2.0);
        let config = SolverConfig::with_tolerances(1e-10, 1e-10);
        let sol = integrate(&problem, &config, &[0.5, 1.0, 2.0]).unwrap();
        assert!((sol.states[0][0] - 0.5).abs() < 1e-8, "y(0.5) = {}", sol.states[0][0]);
        assert!(sol.states[1][0].abs() < 1e-8, "y(1) = {}", sol.states[1][0]);
        assert!((sol.states[2][0] + 0.5).abs() < 1e-8, "y(2) = {}", sol.states[2][0]);
    }

    #[test]
    fn logistic_equilibrium_is_preserved() {
        // y' = y (1 - y(t - tau)) with phi = 1 stays at the fixed point
        let problem = DdeProblem::new(
            |_t, y: &[f64], delayed: &[Vec<f64>], out: &mut [f64]| {
                out[0] = y[0] * (1.0 - delayed[0][0]);
            },
            vec![DelayFunction::time_dependent(|t| 2.0 + t.sin())],
            constant_history(1.0),
            0.0,
            5.0,
        )
        .unwrap();
        let sol = integrate(&problem, &SolverConfig::default(), &linspace(0.0, 5.0, 11)).unwrap();
        for s in &sol.states {
            assert!((s[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_overlap_branch_for_short_steps() {
        // tau = 1 with steps capped well below it: the fixed-point loop
        // must never run
        let problem = linear_dde(0.9);
        let config = SolverConfig::default();
        let sol = integrate(&problem, &config, &[]).unwrap();
        assert_eq!(sol.stats.n_fp_iterations, 0);
        assert_eq!(sol.stats.max_fp_sweeps, 0);
    }

    #[test]
    fn step_truncates_onto_breaking_point() {
        let problem = linear_dde(2.0);
        let sol = integrate(&problem, &SolverConfig::default(), &[]).unwrap();
        let boundary_near = |t: f64| {
            sol.buffer
                .segments()
                .iter()
                .any(|s| (s.t_start() - t).abs() < 1e-9 || (s.t_end() - t).abs() < 1e-9)
        };
        assert!(boundary_near(1.0));
        assert!(boundary_near(2.0));
        let orders: Vec<_> = sol
            .discontinuities
            .items()
            .iter()
            .map(|d| (d.t, d.order))
            .collect();
        assert!(orders.contains(&(0.0, 1)));
        assert!(sol
            .discontinuities
            .items()
            .iter()
            .any(|d| (d.t - 1.0).abs() < 1e-9 && d.order == 2));
    }

    #[test]
    fn detect_finds_constant_delay_crossing() {
        let problem = linear_dde(3.0);
        let buffer = SolutionBuffer::new(constant_history(1.0), 0.0);
        let mut lambdas = DiscontinuitySet::new();
        lambdas.insert(Discontinuity { t: 0.0, order: 1 }, 0.0, 6);
        // interval (1.5, 2.5] with tau = 2 crosses lambda = 0 at t = 2
        let problem_tau2 = DdeProblem::new(
            |_t, _y, d: &[Vec<f64>], out: &mut [f64]| out[0] = -d[0][0],
            vec![DelayFunction::constant(2.0)],
            constant_history(1.0),
            0.0,
            3.0,
        )
        .unwrap();
        let _ = problem;
        let found = detect_discontinuity(
            1.5, 2.5, &lambdas, &problem_tau2, &buffer, None, 6, 1e-10,
        )
        .unwrap()
        .expect("crossing expected");
        assert!((found.t - 2.0).abs() < 1e-10);
        assert_eq!(found.order, 2);
    }

    #[test]
    fn detect_returns_none_without_crossing() {
        let problem = linear_dde(3.0);
        let buffer = SolutionBuffer::new(constant_history(1.0), 0.0);
        let mut lambdas = DiscontinuitySet::new();
        lambdas.insert(Discontinuity { t: 0.0, order: 1 }, 0.0, 6);
        // tau = 1: the crossing of lambda = 0 sits at t = 1, outside (1.5, 1.8]
        let found =
            detect_discontinuity(1.5, 1.8, &lambdas, &problem, &buffer, None, 6, 1e-10).unwrap();
        assert!(found.is_none());
    }

    #[test]
    fn detect_locates_time_dependent_root() {
        // tau(t) = 2 + sin(t), lambda_0 = 0: root of t - 2 - sin(t)
        let problem = DdeProblem::new(
            |_t, _y, d: &[Vec<f64>], out: &mut [f64]| out[0] = -d[0][0],
            vec![DelayFunction::time_dependent(|t| 2.0 + t.sin())],
            constant_history(1.0),
            0.0,
            4.0,
        )
        .unwrap();
        let buffer = SolutionBuffer::new(constant_history(1.0), 0.0);
        let mut lambdas = DiscontinuitySet::new();
        lambdas.insert(Discontinuity { t: 0.0, order: 1 }, 0.0, 6);
        let found = detect_discontinuity(2.0, 3.0, &lambdas, &problem, &buffer, None, 6, 1e-10)
            .unwrap()
            .expect("root expected");
        assert!((found.t - 2.554195952837043).abs() < 1e-10);
    }

    #[test]
    fn vanishing_delay_is_rejected() {
        // tau(t) = 0.5 - t reaches the guard at t = 0.5
        let problem = DdeProblem::new(
            |_t, _y, d: &[Vec<f64>], out: &mut [f64]| out[0] = -d[0][0],
            vec![DelayFunction::time_dependent(|t| 0.5 - t)],
            constant_history(1.0),
            0.0,
            1.0,
        )
        .unwrap();
        let err = integrate(&problem, &SolverConfig::default(), &[]).unwrap_err();
        assert!(matches!(err, SolverError::VanishingDelay { .. }));
    }

    #[test]
    fn max_steps_is_enforced() {
        let problem = linear_dde(2.0);
        let config = SolverConfig {
            max_steps: 3,
            ..Default::default()
        };
        let err = integrate(&problem, &config, &[]).unwrap_err();
        assert!(matches!(err, SolverError::MaxStepsExceeded { .. }));
    }

    #[test]
    fn overlap_loop_runs_and_converges() {
        // tau = 0.1 with tracking off and a seeded large step
        let problem = DdeProblem::new(
            |_t, _y, d: &[Vec<f64>], out: &mut [f64]| out[0] = -d[0][0],
            vec![DelayFunction::constant(0.1)],
            constant_history(1.0),
            0.0,
            1.0,
        )
        .unwrap();
        let config = SolverConfig {
            track_discontinuities: false,
            dt0: Some(0.4),
            rtol: 1e-4,
            atol: 1e-4,
            ..Default::default()
        };
        let sol = integrate(&problem, &config, &[]).unwrap();
        assert!(sol.stats.n_fp_iterations > 0, "overlap loop never ran");
        assert!(sol.stats.max_fp_sweeps <= config.fp_max_iters);
    }

    #[test]
    fn save_time_validation() {
        let problem = linear_dde(1.0);
        let config = SolverConfig::default();
        assert!(integrate(&problem, &config, &[0.5, 0.2]).is_err());
        assert!(integrate(&problem, &config, &[0.0, 1.5]).is_err());
    }
}
