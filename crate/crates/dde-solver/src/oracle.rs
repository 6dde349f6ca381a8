//! Reference solvers used to validate the main integrator.
//!
//! Two independent routes: [`method_of_steps_solve`] chains exact-interval
//! ODE solves for constant-delay problems, and [`FixedStepReference`] is a
//! brute-force fixed-step classical Runge-Kutta solver with cubic grid
//! interpolation for the delayed lookups. The latter shares no
//! discretization machinery with the adaptive solver, so agreement between
//! the two is evidence rather than tautology.

use std::cell::Cell;

use serde::Serialize;

use crate::dense::SolutionBuffer;
use crate::error::SolverError;
use crate::integrator::integrate;
use crate::problem::{DdeProblem, DelayKind, HistoryFunction, SolverConfig};
use crate::stepper::{build_segment, rk_step, ButcherTableau};

/// Reference tolerance: two orders below the tightest setting under test.
const REFERENCE_TOL: f64 = 1e-12;
/// Most intervals the method of steps will chain.
const INTERVAL_BUDGET: usize = 64;
/// Most fixed steps the brute-force reference will take.
const FIXED_STEP_BUDGET: usize = 50_000_000;

/// Anything that can be evaluated densely over the integration span.
pub trait DenseReference {
    fn eval_reference(&self, t: f64) -> Result<Vec<f64>, SolverError>;
}

impl DenseReference for SolutionBuffer {
    fn eval_reference(&self, t: f64) -> Result<Vec<f64>, SolverError> {
        self.eval(t)
    }
}

/// Solves a constant-delay problem by the method of steps: the span is
/// split at every sum of delay multiples (seeded from the initial time and
/// the history jumps), and each interval is integrated as a plain ODE at
/// `rtol = atol = 1e-12` with the delayed lookups served by the already
/// accumulated dense output.
pub fn method_of_steps_solve(
    problem: &DdeProblem,
    t_final: f64,
) -> Result<SolutionBuffer, SolverError> {
    let taus: Vec<f64> = problem
        .delays()
        .iter()
        .map(|d| {
            if d.kind() != DelayKind::Constant {
                return Err(SolverError::InvalidInput(
                    "method of steps requires constant delays".into(),
                ));
            }
            let tau = d.eval(0.0, &[]);
            if !(tau > 0.0) {
                return Err(SolverError::InvalidInput(format!(
                    "method of steps requires positive delays, got {tau}"
                )));
            }
            Ok(tau)
        })
        .collect::<Result<_, _>>()?;
    if t_final > problem.t_final() {
        return Err(SolverError::InvalidInput(
            "t_final beyond the problem span".into(),
        ));
    }

    let t0 = problem.t0();
    let split_points = delay_lattice(problem, &taus, t0, t_final)?;

    let tableau = ButcherTableau::dopri5();
    let mut buffer = SolutionBuffer::new(problem.history().clone(), t0);
    let mut y = problem.history().eval_raw(t0).into_vec();
    for pair in split_points.windows(2) {
        y = solve_interval_as_ode(&tableau, problem, &mut buffer, y, pair[0], pair[1])?;
    }
    Ok(buffer)
}

/// All points `seed + sum n_i tau_i` inside `(t0, t_final)`, where the
/// seeds are `t0` and the history jumps, plus both span endpoints.
fn delay_lattice(
    problem: &DdeProblem,
    taus: &[f64],
    t0: f64,
    t_final: f64,
) -> Result<Vec<f64>, SolverError> {
    let tol = 1e-12 * t_final.abs().max(1.0);
    let mut points: Vec<f64> = vec![t0];
    let mut queue: Vec<f64> = vec![t0];
    for jump in problem.history().known_jumps() {
        queue.push(jump.t);
    }
    while let Some(p) = queue.pop() {
        for &tau in taus {
            let q = p + tau;
            if q <= t0 + tol || q >= t_final - tol {
                continue;
            }
            if points.iter().any(|&r| (r - q).abs() <= tol) {
                continue;
            }
            points.push(q);
            queue.push(q);
            if points.len() > INTERVAL_BUDGET {
                return Err(SolverError::InvalidInput(format!(
                    "method of steps exceeded the {INTERVAL_BUDGET}-interval budget"
                )));
            }
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.push(t_final);
    Ok(points)
}

/// Adaptive ODE solve over one method-of-steps interval; every delayed
/// lookup lands at or before the interval start, hence inside `buffer`.
fn solve_interval_as_ode(
    tableau: &ButcherTableau,
    problem: &DdeProblem,
    buffer: &mut SolutionBuffer,
    mut y: Vec<f64>,
    a: f64,
    b: f64,
) -> Result<Vec<f64>, SolverError> {
    const MAX_STEPS_PER_INTERVAL: usize = 200_000;
    let dim = problem.dim();
    let mut t = a;
    let mut h = (b - a).min(1e-3);
    let mut err_prev = 1.0;
    let mut steps = 0usize;
    let mut delayed: Vec<Vec<f64>> = vec![vec![0.0; dim]; problem.num_delays()];

    while t < b {
        steps += 1;
        if steps > MAX_STEPS_PER_INTERVAL {
            return Err(SolverError::MaxStepsExceeded {
                t,
                max_steps: MAX_STEPS_PER_INTERVAL,
            });
        }
        h = h.min(b - t);
        let t_next = if t + h >= b { b } else { t + h };
        let outcome = {
            let buffer_ref = &*buffer;
            let f_ode = |tt: f64, yy: &[f64], out: &mut [f64]| -> Result<(), SolverError> {
                for (i, delay) in problem.delays().iter().enumerate() {
                    let tau = delay.eval(tt, yy);
                    buffer_ref.eval_into(tt - tau, &mut delayed[i])?;
                }
                out.fill(0.0);
                problem.eval_vector_field(tt, yy, &delayed, out);
                Ok(())
            };
            rk_step(
                tableau,
                f_ode,
                t,
                t_next - t,
                &y,
                REFERENCE_TOL,
                REFERENCE_TOL,
                err_prev,
            )?
        };
        if outcome.err_norm <= 1.0 {
            let segment = build_segment(tableau, t, t_next, &y, &outcome)?;
            buffer.append_segment(segment)?;
            y = outcome.y_next;
            t = t_next;
            err_prev = outcome.err_norm.max(1e-4);
        }
        h = outcome.h_next;
    }
    Ok(y)
}

/// Brute-force reference: classical fixed-step RK4 with delayed lookups by
/// cubic Lagrange interpolation on the stored grid.
///
/// Intended for `h` below every delay along the trajectory. If a lookup
/// ever lands past the last completed grid point (a step overlapping its
/// own delay), the stencil anchored at the last four points extrapolates
/// instead and [`FixedStepReference::overlap_extrapolated`] reports it.
#[derive(Debug, Clone)]
pub struct FixedStepReference {
    t0: f64,
    h: f64,
    grid: Vec<Vec<f64>>,
    history: HistoryFunction,
    dim: usize,
    overlap_extrapolated: bool,
}

impl FixedStepReference {
    pub fn compute(problem: &DdeProblem, h: f64, t_final: f64) -> Result<Self, SolverError> {
        if !(h > 0.0) {
            return Err(SolverError::InvalidInput("h must be positive".into()));
        }
        let t0 = problem.t0();
        let span = t_final - t0;
        if !(span > 0.0) {
            return Err(SolverError::InvalidInput("t_final must exceed t0".into()));
        }
        let n = (span / h).ceil() as usize;
        if n > FIXED_STEP_BUDGET {
            return Err(SolverError::InvalidInput(format!(
                "fixed-step budget exceeded: {n} steps"
            )));
        }
        let dim = problem.dim();
        let history = problem.history().clone();
        let mut grid: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        grid.push(history.eval_raw(t0).into_vec());

        let overlap_flag = Cell::new(false);
        let mut delayed: Vec<Vec<f64>> = vec![vec![0.0; dim]; problem.num_delays()];
        let mut k1 = vec![0.0; dim];
        let mut k2 = vec![0.0; dim];
        let mut k3 = vec![0.0; dim];
        let mut k4 = vec![0.0; dim];
        let mut y_stage = vec![0.0; dim];

        for j in 0..n {
            let t = t0 + j as f64 * h;
            let y = grid[j].clone();

            let mut eval = |tt: f64,
                            yy: &[f64],
                            out: &mut Vec<f64>,
                            grid: &Vec<Vec<f64>>,
                            delayed: &mut Vec<Vec<f64>>|
             -> Result<(), SolverError> {
                for (i, delay) in problem.delays().iter().enumerate() {
                    let tau = delay.eval(tt, yy);
                    if !tau.is_finite() || tau < 0.0 {
                        return Err(SolverError::VanishingDelay {
                            index: i,
                            t: tt,
                            tau,
                            guard: 0.0,
                        });
                    }
                    lookup_grid(
                        grid,
                        &history,
                        t0,
                        h,
                        tt - tau,
                        &mut delayed[i],
                        &overlap_flag,
                    );
                }
                out.fill(0.0);
                problem.eval_vector_field(tt, yy, delayed, out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(SolverError::NonFiniteDerivative { t: tt });
                }
                Ok(())
            };

            eval(t, &y, &mut k1, &grid, &mut delayed)?;
            for i in 0..dim {
                y_stage[i] = y[i] + 0.5 * h * k1[i];
            }
            eval(t + 0.5 * h, &y_stage.clone(), &mut k2, &grid, &mut delayed)?;
            for i in 0..dim {
                y_stage[i] = y[i] + 0.5 * h * k2[i];
            }
            eval(t + 0.5 * h, &y_stage.clone(), &mut k3, &grid, &mut delayed)?;
            for i in 0..dim {
                y_stage[i] = y[i] + h * k3[i];
            }
            eval(t + h, &y_stage.clone(), &mut k4, &grid, &mut delayed)?;

            let mut y_next = vec![0.0; dim];
            for i in 0..dim {
                y_next[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            grid.push(y_next);
        }

        if overlap_flag.get() {
            log::warn!(
                "fixed-step reference: h = {h} overlapped a delay; lookups used one-step-lag extrapolation"
            );
        }
        Ok(FixedStepReference {
            t0,
            h,
            grid,
            history,
            dim,
            overlap_extrapolated: overlap_flag.get(),
        })
    }

    pub fn overlap_extrapolated(&self) -> bool {
        self.overlap_extrapolated
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.grid.len() - 1) as f64 * self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), SolverError> {
        if t > self.t_end() + 1e-9 * self.t_end().abs().max(1.0) {
            return Err(SolverError::OutOfFrontier {
                t,
                frontier: self.t_end(),
            });
        }
        let flag = Cell::new(false);
        let mut slot = vec![0.0; self.dim];
        lookup_grid(&self.grid, &self.history, self.t0, self.h, t, &mut slot, &flag);
        out.copy_from_slice(&slot);
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, SolverError> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }
}

impl DenseReference for FixedStepReference {
    fn eval_reference(&self, t: f64) -> Result<Vec<f64>, SolverError> {
        self.eval(t)
    }
}

/// Cubic Lagrange lookup on the uniform grid; history below `t0`,
/// last-stencil extrapolation past the filled range (flagged).
fn lookup_grid(
    grid: &[Vec<f64>],
    history: &HistoryFunction,
    t0: f64,
    h: f64,
    t: f64,
    out: &mut Vec<f64>,
    overlap_flag: &Cell<bool>,
) {
    if t <= t0 {
        out.copy_from_slice(history.eval_raw(t).as_slice());
        return;
    }
    let filled = grid.len();
    if filled == 1 {
        out.copy_from_slice(&grid[0]);
        return;
    }
    let pos = (t - t0) / h;
    let cell = pos.floor() as isize;
    if cell as usize + 1 >= filled {
        overlap_flag.set(true);
    }
    if filled < 4 {
        // too few points for a cubic; fall back to linear on the last pair
        let i1 = (filled - 1).min((cell.max(0) as usize) + 1);
        let i0 = i1 - 1;
        let w = pos - i0 as f64;
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = grid[i0][c] * (1.0 - w) + grid[i1][c] * w;
        }
        return;
    }
    let lo = (cell - 1).clamp(0, filled as isize - 4) as usize;
    // Lagrange weights over nodes lo..lo+4 in grid-index coordinates
    let s = pos - lo as f64;
    let mut weights = [0.0; 4];
    for (m, w) in weights.iter_mut().enumerate() {
        let mut num = 1.0;
        let mut den = 1.0;
        for q in 0..4 {
            if q != m {
                num *= s - q as f64;
                den *= m as f64 - q as f64;
            }
        }
        *w = num / den;
    }
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = (0..4).map(|m| weights[m] * grid[lo + m][c]).sum();
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderStudyEntry {
    pub tolerance: f64,
    pub max_error: f64,
}

/// Result of sweeping the solver over a tolerance grid against a reference.
#[derive(Debug, Clone, Serialize)]
pub struct OrderStudyReport {
    pub entries: Vec<OrderStudyEntry>,
    /// Least-squares slope of log error versus log tolerance.
    pub fitted_order: Option<f64>,
    /// Errors decrease monotonically, at least three grid points, and the
    /// final error is within 10x the final tolerance.
    pub pass: bool,
}

impl OrderStudyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Integrates `problem` at each tolerance (`rtol = atol`), records the
/// maximum error over a fixed 200-point probe grid against `reference`,
/// and fits the observed tolerance order.
pub fn order_study(
    problem: &DdeProblem,
    reference: &dyn DenseReference,
    tolerances: &[f64],
) -> Result<OrderStudyReport, SolverError> {
    const PROBE_POINTS: usize = 200;
    let t0 = problem.t0();
    let t_final = problem.t_final();
    let probe: Vec<f64> = (0..PROBE_POINTS)
        .map(|i| t0 + (t_final - t0) * i as f64 / (PROBE_POINTS - 1) as f64)
        .collect();

    let mut entries = Vec::with_capacity(tolerances.len());
    for &tol in tolerances {
        let config = SolverConfig::with_tolerances(tol, tol);
        let solution = integrate(problem, &config, &probe)?;
        let mut max_error: f64 = 0.0;
        for (t, state) in probe.iter().zip(&solution.states) {
            let reference_state = reference.eval_reference(*t)?;
            for (a, b) in state.iter().zip(&reference_state) {
                max_error = max_error.max((a - b).abs());
            }
        }
        entries.push(OrderStudyEntry {
            tolerance: tol,
            max_error,
        });
    }

    let fitted_order = fit_order(&entries);
    let monotone = entries.windows(2).all(|w| w[1].max_error < w[0].max_error);
    let pass = entries.len() >= 3
        && monotone
        && entries
            .last()
            .map(|e| e.max_error <= 10.0 * e.tolerance)
            .unwrap_or(false);
    Ok(OrderStudyReport {
        entries,
        fitted_order,
        pass,
    })
}

fn fit_order(entries: &[OrderStudyEntry]) -> Option<f64> {
    if entries.len() < 2 || entries.iter().any(|e| e.max_error <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = entries.iter().map(|e| e.tolerance.ln()).collect();
    let ys: Vec<f64> = entries.iter().map(|e| e.max_error.ln()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
