//! Piecewise-polynomial continuous extension of the numerical solution.
//!
//! Every accepted step stores one [`Segment`]: per-component polynomial
//! coefficients in the normalized local variable `theta = (t - t_start) /
//! (t_end - t_start)`. The [`SolutionBuffer`] tiles `[t0, frontier]` with
//! contiguous segments and falls back to the history function for
//! `t <= t0`, so delayed arguments can be looked up anywhere in the past.
//! Segments are kept for the whole integration: a state-dependent delay may
//! reach back arbitrarily far.

use crate::error::SolverError;
use crate::problem::HistoryFunction;
use crate::state::State;

/// One step's dense output.
///
/// `coeffs` is laid out per component: `coeffs[c * n .. (c + 1) * n]` are
/// the monomial coefficients (constant term first) of component `c`, with
/// `n = degree + 1`. Evaluation at `theta = 0` reproduces `y_start`
/// bitwise; `theta = 1` reproduces `y_end` to round-off.
#[derive(Debug, Clone)]
pub struct Segment {
    t_start: f64,
    t_end: f64,
    y_start: Vec<f64>,
    y_end: Vec<f64>,
    coeffs: Vec<f64>,
    coeffs_per_component: usize,
}

impl Segment {
    pub fn new(
        t_start: f64,
        t_end: f64,
        y_start: Vec<f64>,
        y_end: Vec<f64>,
        coeffs: Vec<f64>,
        coeffs_per_component: usize,
    ) -> Result<Self, SolverError> {
        if !(t_end > t_start) {
            return Err(SolverError::InvalidInput(format!(
                "segment needs t_end ({t_end}) > t_start ({t_start})"
            )));
        }
        let dim = y_start.len();
        if y_end.len() != dim {
            return Err(SolverError::DimensionMismatch {
                expected: dim,
                got: y_end.len(),
            });
        }
        if coeffs.len() != dim * coeffs_per_component || coeffs_per_component == 0 {
            return Err(SolverError::DimensionMismatch {
                expected: dim * coeffs_per_component,
                got: coeffs.len(),
            });
        }
        Ok(Segment {
            t_start,
            t_end,
            y_start,
            y_end,
            coeffs,
            coeffs_per_component,
        })
    }

    /// Constant interpolant, used as the very first overlap guess.
    pub fn constant(t_start: f64, t_end: f64, value: &[f64]) -> Result<Self, SolverError> {
        let dim = value.len();
        let mut coeffs = vec![0.0; dim];
        coeffs.copy_from_slice(value);
        Segment::new(
            t_start,
            t_end,
            value.to_vec(),
            value.to_vec(),
            coeffs,
            1,
        )
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn y_start(&self) -> &[f64] {
        &self.y_start
    }

    pub fn y_end(&self) -> &[f64] {
        &self.y_end
    }

    pub fn dim(&self) -> usize {
        self.y_start.len()
    }

    /// Bytes of floating-point payload held by this segment (coefficients
    /// plus stored endpoints); the buffer's memory contract is asserted in
    /// terms of this.
    pub fn payload_bytes(&self) -> usize {
        (self.coeffs.len() + self.y_start.len() + self.y_end.len()) * std::mem::size_of::<f64>()
    }

    /// Evaluates the polynomial at arbitrary `t` (no range check); `t`
    /// beyond `t_end` extrapolates.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t_start) / (self.t_end - self.t_start);
        let n = self.coeffs_per_component;
        for (c, slot) in out.iter_mut().enumerate() {
            let poly = &self.coeffs[c * n..(c + 1) * n];
            let mut acc = poly[n - 1];
            for &coef in poly[..n - 1].iter().rev() {
                acc = acc * theta + coef;
            }
            *slot = acc;
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// Re-expresses this segment's polynomial on a new interval, evaluating
    /// the same global polynomial there. Used to extrapolate the previous
    /// step's interpolant as the initial overlap guess.
    pub fn extend_onto(&self, t_start: f64, t_end: f64) -> Result<Segment, SolverError> {
        if !(t_end > t_start) {
            return Err(SolverError::InvalidInput(
                "extend_onto needs t_end > t_start".into(),
            ));
        }
        let n = self.coeffs_per_component;
        let dim = self.dim();
        let width_old = self.t_end - self.t_start;
        // theta_old = shift + scale * theta_new
        let shift = (t_start - self.t_start) / width_old;
        let scale = (t_end - t_start) / width_old;

        // Compose each component polynomial with the affine map by Horner:
        // p(shift + scale * x) built coefficient-vector-wise.
        let mut coeffs = vec![0.0; dim * n];
        let mut acc = vec![0.0; n];
        for c in 0..dim {
            let poly = &self.coeffs[c * n..(c + 1) * n];
            acc.iter_mut().for_each(|v| *v = 0.0);
            for &coef in poly.iter().rev() {
                // acc <- acc * (shift + scale x) + coef
                for m in (1..n).rev() {
                    acc[m] = acc[m] * shift + acc[m - 1] * scale;
                }
                acc[0] = acc[0] * shift + coef;
            }
            coeffs[c * n..(c + 1) * n].copy_from_slice(&acc);
        }

        let y_start = self.eval(t_start);
        let y_end = self.eval(t_end);
        Segment::new(t_start, t_end, y_start, y_end, coeffs, n)
    }
}

/// Dense solution over `[t0, frontier]`, backed by the history for
/// `t <= t0`.
///
/// Single-writer: only the integrator appends. Reading concurrently is safe
/// once the integration has finished.
#[derive(Debug, Clone)]
pub struct SolutionBuffer {
    t0: f64,
    history: HistoryFunction,
    segments: Vec<Segment>,
}

impl SolutionBuffer {
    pub fn new(history: HistoryFunction, t0: f64) -> Self {
        SolutionBuffer {
            t0,
            history,
            segments: Vec::new(),
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Right edge of the integrated span; `t0` while empty.
    pub fn frontier(&self) -> f64 {
        self.segments.last().map_or(self.t0, |s| s.t_end)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn history(&self) -> &HistoryFunction {
        &self.history
    }

    pub fn dim(&self) -> usize {
        self.history.dim()
    }

    /// Total floating-point payload of all stored segments.
    pub fn payload_bytes(&self) -> usize {
        self.segments.iter().map(Segment::payload_bytes).sum()
    }

    /// Appends the next step; `seg.t_start` must equal the frontier.
    pub fn append_segment(&mut self, seg: Segment) -> Result<(), SolverError> {
        let frontier = self.frontier();
        if seg.t_start != frontier {
            return Err(SolverError::Contiguity {
                t_start: seg.t_start,
                frontier,
            });
        }
        self.segments.push(seg);
        Ok(())
    }

    fn segment_index_for(&self, t: f64) -> usize {
        // first segment whose t_end >= t; boundaries resolve to the left
        // segment, which agrees with the right one to round-off
        self.segments.partition_point(|s| s.t_end < t)
    }

    /// Evaluates the solution at `t <= frontier` (history for `t <= t0`).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), SolverError> {
        if t <= self.t0 {
            out.copy_from_slice(self.history.eval_raw(t).as_slice());
            return Ok(());
        }
        let frontier = self.frontier();
        if t > frontier {
            return Err(SolverError::OutOfFrontier { t, frontier });
        }
        self.segments[self.segment_index_for(t)].eval_into(t, out);
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>, SolverError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Evaluation that additionally covers the trial interval of the step
    /// in progress: the buffer answers for `t <= frontier`, `pi_n` for
    /// `frontier < t <= pi_n.t_end()`. Only used inside the overlap
    /// fixed-point loop.
    pub fn eval_with_overlap_into(
        &self,
        pi_n: &Segment,
        t: f64,
        out: &mut [f64],
    ) -> Result<(), SolverError> {
        let frontier = self.frontier();
        if t <= frontier {
            return self.eval_into(t, out);
        }
        // tiny slack for round-off at the trial right edge
        let slack = 1e-12 * pi_n.t_end().abs().max(1.0);
        if t > pi_n.t_end() + slack {
            return Err(SolverError::OutOfTrialRange {
                t,
                t_end: pi_n.t_end(),
            });
        }
        pi_n.eval_into(t, out);
        Ok(())
    }

    pub fn eval_with_overlap(&self, pi_n: &Segment, t: f64) -> Result<Vec<f64>, SolverError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_with_overlap_into(pi_n, t, &mut out)?;
        Ok(out)
    }
}

/// Convenience wrapper returning a validated [`State`].
pub fn eval_solution(buffer: &SolutionBuffer, t: f64) -> Result<State, SolverError> {
    State::new(buffer.eval(t)?)
}
