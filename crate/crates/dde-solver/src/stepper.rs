//! Embedded explicit Runge-Kutta step on a momentarily frozen ODE, with
//! error norm, step-size proposal and dense-output construction.

use crate::dense::Segment;
use crate::error::SolverError;

/// PI controller constants (order-5 pair).
const CONTROLLER_ALPHA: f64 = 0.7 / 5.0;
const CONTROLLER_BETA: f64 = 0.4 / 5.0;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// How a tableau builds its continuous extension.
#[derive(Debug, Clone)]
pub enum DenseOutput {
    /// Quartic interpolant from the stage values via the extra `d` weights
    /// (the classical scheme for the 5(4) pair below).
    QuarticFromStages { d: Vec<f64> },
    /// Cubic Hermite from the endpoint values and derivatives. Requires the
    /// first-same-as-last property so the final stage is the derivative at
    /// the step end.
    CubicHermite,
}

/// Coefficients of an embedded explicit Runge-Kutta pair.
#[derive(Debug, Clone)]
pub struct ButcherTableau {
    pub a: Vec<Vec<f64>>,
    /// Propagating weights.
    pub b: Vec<f64>,
    /// Embedded (lower-order) weights used for the error estimate.
    pub b_err: Vec<f64>,
    pub c: Vec<f64>,
    pub order: usize,
    pub dense: DenseOutput,
}

impl ButcherTableau {
    /// Dormand-Prince 5(4), seven stages, first-same-as-last, with the
    /// standard quartic continuous extension.
    pub fn dopri5() -> Self {
        let a = vec![
            vec![0.0; 7],
            vec![1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0, 0.0],
            vec![
                19372.0 / 6561.0,
                -25360.0 / 2187.0,
                64448.0 / 6561.0,
                -212.0 / 729.0,
                0.0,
                0.0,
                0.0,
            ],
            vec![
                9017.0 / 3168.0,
                -355.0 / 33.0,
                46732.0 / 5247.0,
                49.0 / 176.0,
                -5103.0 / 18656.0,
                0.0,
                0.0,
            ],
            vec![
                35.0 / 384.0,
                0.0,
                500.0 / 1113.0,
                125.0 / 192.0,
                -2187.0 / 6784.0,
                11.0 / 84.0,
                0.0,
            ],
        ];
        let b = vec![
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
            0.0,
        ];
        let b_err = vec![
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        let c = vec![0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
        let d = vec![
            -12715105075.0 / 11282082432.0,
            0.0,
            87487479700.0 / 32700410799.0,
            -10690763975.0 / 1880347072.0,
            701980252875.0 / 199316789632.0,
            -1453857185.0 / 822651844.0,
            69997945.0 / 29380423.0,
        ];
        let tab = ButcherTableau {
            a,
            b,
            b_err,
            c,
            order: 5,
            dense: DenseOutput::QuarticFromStages { d },
        };
        debug_assert!(tab.validate().is_ok());
        tab
    }

    /// Bogacki-Shampine 3(2), four stages, first-same-as-last. Kept as a
    /// deliberately lower-order pair for order-study contrast.
    pub fn bogacki_shampine() -> Self {
        let a = vec![
            vec![0.0; 4],
            vec![0.5, 0.0, 0.0, 0.0],
            vec![0.0, 0.75, 0.0, 0.0],
            vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0],
        ];
        let b = vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0];
        let b_err = vec![7.0 / 24.0, 0.25, 1.0 / 3.0, 0.125];
        let c = vec![0.0, 0.5, 0.75, 1.0];
        let tab = ButcherTableau {
            a,
            b,
            b_err,
            c,
            order: 3,
            dense: DenseOutput::CubicHermite,
        };
        debug_assert!(tab.validate().is_ok());
        tab
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Monomial coefficients per component stored in a dense-output segment.
    pub fn dense_coeff_count(&self) -> usize {
        match self.dense {
            DenseOutput::QuarticFromStages { .. } => 5,
            DenseOutput::CubicHermite => 4,
        }
    }

    /// Consistency checks: weights sum to one, the first node is zero, the
    /// matrix is strictly lower triangular with row sums equal to the nodes.
    pub fn validate(&self) -> Result<(), SolverError> {
        let s = self.stages();
        let check = |ok: bool, msg: &str| -> Result<(), SolverError> {
            if ok {
                Ok(())
            } else {
                Err(SolverError::InvalidInput(format!("tableau: {msg}")))
            }
        };
        check(
            self.a.len() == s && self.b_err.len() == s && self.c.len() == s,
            "inconsistent sizes",
        )?;
        check((self.b.iter().sum::<f64>() - 1.0).abs() < 1e-12, "sum(b) != 1")?;
        check(
            (self.b_err.iter().sum::<f64>() - 1.0).abs() < 1e-12,
            "sum(b_err) != 1",
        )?;
        check(self.c[0] == 0.0, "c[0] != 0")?;
        for (i, row) in self.a.iter().enumerate() {
            check(row.len() == s, "ragged matrix row")?;
            check(
                row[i..].iter().all(|&v| v == 0.0),
                "matrix not strictly lower triangular",
            )?;
            let row_sum: f64 = row.iter().sum();
            check((row_sum - self.c[i]).abs() < 1e-12, "row sum != c")?;
        }
        if matches!(self.dense, DenseOutput::CubicHermite) {
            // last stage must be evaluated at (t + h, y_next)
            check(self.c[s - 1] == 1.0, "Hermite dense output needs c[S-1] = 1")?;
            for j in 0..s {
                check(
                    (self.a[s - 1][j] - self.b[j]).abs() < 1e-12,
                    "Hermite dense output needs the FSAL property",
                )?;
            }
        }
        Ok(())
    }
}

/// Result of one trial step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub y_next: Vec<f64>,
    /// Weighted RMS error; the step is acceptable iff `err_norm <= 1`.
    pub err_norm: f64,
    /// Stage derivatives, exactly those combined into `y_next`.
    pub stages: Vec<Vec<f64>>,
    pub accepted: bool,
    /// Step proposed by the controller for the next attempt.
    pub h_next: f64,
}

/// Weighted RMS of `v` with weights `atol + rtol * max(|y_ref0|, |y_ref1|)`
/// componentwise.
pub fn weighted_rms(v: &[f64], y_ref0: &[f64], y_ref1: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        let w = atol + rtol * y_ref0[i].abs().max(y_ref1[i].abs());
        let r = v[i] / w;
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}

/// One embedded step of the frozen ODE `y' = f_ode(t, y)` over `[t, t + h]`.
///
/// `err_prev` is the error norm of the previous accepted step (1 when there
/// is none); it feeds the PI controller.
pub fn rk_step<F>(
    tableau: &ButcherTableau,
    mut f_ode: F,
    t: f64,
    h: f64,
    y: &[f64],
    rtol: f64,
    atol: f64,
    err_prev: f64,
) -> Result<StepOutcome, SolverError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), SolverError>,
{
    debug_assert!(h > 0.0);
    let s = tableau.stages();
    let d = y.len();
    let mut stages: Vec<Vec<f64>> = vec![vec![0.0; d]; s];
    let mut y_stage = vec![0.0; d];

    for i in 0..s {
        y_stage.copy_from_slice(y);
        for j in 0..i {
            let a_ij = tableau.a[i][j];
            if a_ij != 0.0 {
                for (ys, k) in y_stage.iter_mut().zip(&stages[j]) {
                    *ys += h * a_ij * k;
                }
            }
        }
        let t_stage = t + tableau.c[i] * h;
        let (before, rest) = stages.split_at_mut(i);
        let _ = before;
        f_ode(t_stage, &y_stage, &mut rest[0])?;
        if rest[0].iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteDerivative { t: t_stage });
        }
    }

    let mut y_next = y.to_vec();
    for j in 0..s {
        let b_j = tableau.b[j];
        if b_j != 0.0 {
            for (yn, k) in y_next.iter_mut().zip(&stages[j]) {
                *yn += h * b_j * k;
            }
        }
    }

    // error estimate: h * sum (b_j - b_err_j) k_j
    let mut err = vec![0.0; d];
    for j in 0..s {
        let w = tableau.b[j] - tableau.b_err[j];
        if w != 0.0 {
            for (e, k) in err.iter_mut().zip(&stages[j]) {
                *e += h * w * k;
            }
        }
    }
    let err_norm = weighted_rms(&err, y, &y_next, rtol, atol);
    let accepted = err_norm <= 1.0;
    let h_next = propose_step(err_norm, h, err_prev);

    Ok(StepOutcome {
        y_next,
        err_norm,
        stages,
        accepted,
        h_next,
    })
}

/// PI step-size controller.
///
/// `h_next = h * clamp(safety * err^-alpha * err_prev^beta, 0.2, 10)`, with
/// the factor pinned to 10 on a zero error estimate.
pub fn propose_step(err_norm: f64, h: f64, err_prev: f64) -> f64 {
    debug_assert!(err_norm >= 0.0);
    if err_norm == 0.0 {
        return h * MAX_FACTOR;
    }
    let err_prev = err_prev.max(1e-4);
    let factor = SAFETY * err_norm.powf(-CONTROLLER_ALPHA) * err_prev.powf(CONTROLLER_BETA);
    h * factor.clamp(MIN_FACTOR, MAX_FACTOR)
}

/// Builds the dense-output segment of an accepted step from its stages.
pub fn build_segment(
    tableau: &ButcherTableau,
    t: f64,
    t_next: f64,
    y: &[f64],
    outcome: &StepOutcome,
) -> Result<Segment, SolverError> {
    let h = t_next - t;
    let d = y.len();
    let n = tableau.dense_coeff_count();
    let mut coeffs = vec![0.0; d * n];

    match &tableau.dense {
        DenseOutput::QuarticFromStages { d: dw } => {
            // cont1 = y_n, cont2 = y_diff, cont3 = h k1 - y_diff,
            // cont4 = y_diff - h k_last - cont3, cont5 = h sum d_j k_j;
            // monomials: a0 = c1, a1 = c2 + c3, a2 = c4 + c5 - c3,
            //            a3 = -c4 - 2 c5, a4 = c5.
            let k_first = &outcome.stages[0];
            let k_last = &outcome.stages[tableau.stages() - 1];
            for c in 0..d {
                let ydiff = outcome.y_next[c] - y[c];
                let c3 = h * k_first[c] - ydiff;
                let c4 = ydiff - h * k_last[c] - c3;
                let mut c5 = 0.0;
                for (j, &w) in dw.iter().enumerate() {
                    if w != 0.0 {
                        c5 += w * outcome.stages[j][c];
                    }
                }
                c5 *= h;
                let poly = &mut coeffs[c * n..(c + 1) * n];
                poly[0] = y[c];
                poly[1] = ydiff + c3;
                poly[2] = c4 + c5 - c3;
                poly[3] = -c4 - 2.0 * c5;
                poly[4] = c5;
            }
        }
        DenseOutput::CubicHermite => {
            let k_first = &outcome.stages[0];
            let k_last = &outcome.stages[tableau.stages() - 1];
            for c in 0..d {
                let y0 = y[c];
                let y1 = outcome.y_next[c];
                let f0 = h * k_first[c];
                let f1 = h * k_last[c];
                let poly = &mut coeffs[c * n..(c + 1) * n];
                poly[0] = y0;
                poly[1] = f0;
                poly[2] = -3.0 * y0 - 2.0 * f0 + 3.0 * y1 - f1;
                poly[3] = 2.0 * y0 + f0 - 2.0 * y1 + f1;
            }
        }
    }

    Segment::new(t, t_next, y.to_vec(), outcome.y_next.clone(), coeffs, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_ode(
        tab: &ButcherTableau,
        f: impl Fn(f64, f64) -> f64,
        t: f64,
        h: f64,
        y: f64,
    ) -> StepOutcome {
        rk_step(
            tab,
            |t, y, out: &mut [f64]| {
                out[0] = f(t, y[0]);
                Ok(())
            },
            t,
            h,
            &[y],
            1e-6,
            1e-6,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_field_is_exact() {
        let tab = ButcherTableau::dopri5();
        let out = step_ode(&tab, |_, _| 0.0, 0.0, 0.3, 5.0);
        assert_eq!(out.y_next[0], 5.0);
        assert_eq!(out.err_norm, 0.0);
        assert!(out.accepted);
    }

    #[test]
    fn constant_field_is_exact() {
        let tab = ButcherTableau::dopri5();
        let out = step_ode(&tab, |_, _| 1.0, 0.0, 0.25, 0.0);
        assert!((out.y_next[0] - 0.25).abs() < 1e-16);
    }

    #[test]
    fn exponential_step_close_to_exact() {
        let tab = ButcherTableau::dopri5();
        let out = step_ode(&tab, |_, y| y, 0.0, 0.1, 1.0);
        assert!((out.y_next[0] - 1.1051709180756477).abs() < 1e-8);
    }

    #[test]
    fn non_finite_derivative_is_reported() {
        let tab = ButcherTableau::dopri5();
        let res = rk_step(
            &tab,
            |_t, _y, out: &mut [f64]| {
                out[0] = f64::NAN;
                Ok(())
            },
            0.0,
            0.1,
            &[1.0],
            1e-6,
            1e-6,
            1.0,
        );
        assert!(matches!(res, Err(SolverError::NonFiniteDerivative { .. })));
    }

    #[test]
    fn controller_fixed_point_and_clamps() {
        assert!((propose_step(1.0, 1.0, 1.0) - 0.9).abs() < 1e-15);
        assert!((propose_step(1e6, 1.0, 1.0) - 0.2).abs() < 1e-15);
        assert!((propose_step(0.0, 1.0, 1.0) - 10.0).abs() < 1e-15);
    }

    #[test]
    fn fifth_order_convergence_on_decay() {
        // y' = -y over [0, 1] at fixed steps; log2 error ratios near 5
        let tab = ButcherTableau::dopri5();
        let run = |h: f64| {
            let n = (1.0 / h).round() as usize;
            let mut y = 1.0;
            for i in 0..n {
                y = step_ode(&tab, |_, y| -y, i as f64 * h, h, y).y_next[0];
            }
            (y - (-1.0f64).exp()).abs()
        };
        let errs = [run(0.1), run(0.05), run(0.025)];
        for w in errs.windows(2) {
            let ratio = (w[0] / w[1]).log2();
            assert!(
                (4.5..=5.5).contains(&ratio),
                "observed order {ratio} outside [4.5, 5.5]"
            );
        }
    }

    #[test]
    fn error_norm_permutation_and_atol_scaling() {
        let v = [0.3, -0.1, 0.7];
        let y = [1.0, 2.0, 3.0];
        let n1 = weighted_rms(&v, &y, &y, 0.0, 1e-3);
        let vp = [0.7, 0.3, -0.1];
        let yp = [3.0, 1.0, 2.0];
        let n2 = weighted_rms(&vp, &yp, &yp, 0.0, 1e-3);
        assert!((n1 - n2).abs() < 1e-12 * n1);
        // doubling atol with zero rtol halves the norm
        let half = weighted_rms(&v, &y, &y, 0.0, 2e-3);
        assert!((n1 - 2.0 * half).abs() < 1e-12 * n1);
    }

    #[test]
    fn stages_reproduce_y_next() {
        let tab = ButcherTableau::dopri5();
        let h = 0.2;
        let out = step_ode(&tab, |t, y| t - y, 0.3, h, 2.0);
        let mut recomputed = 2.0;
        for (j, k) in out.stages.iter().enumerate() {
            recomputed += h * tab.b[j] * k[0];
        }
        assert_eq!(recomputed, out.y_next[0]);
    }

    #[test]
    fn tableaus_validate() {
        assert!(ButcherTableau::dopri5().validate().is_ok());
        assert!(ButcherTableau::bogacki_shampine().validate().is_ok());
    }

    #[test]
    fn dense_output_matches_endpoints_and_derivative() {
        let tab = ButcherTableau::dopri5();
        let h = 0.3;
        let y0 = 1.0;
        let out = step_ode(&tab, |_, y| -y, 0.0, h, y0);
        let seg = build_segment(&tab, 0.0, h, &[y0], &out).unwrap();
        assert_eq!(seg.eval(0.0)[0], y0);
        assert!((seg.eval(h)[0] - out.y_next[0]).abs() < 1e-14);
        // interior accuracy against exp(-t); the quartic interpolant over a
        // step this coarse carries ~1e-6 of interpolation error
        for &t in &[0.05, 0.15, 0.25] {
            assert!((seg.eval(t)[0] - (-t).exp()).abs() < 2e-6);
        }
    }

    #[test]
    fn dense_output_order_at_least_four() {
        // max interpolation error at step midpoints across [0, 1] for a
        // sweep of step sizes; the fitted slope must be >= 4
        let tab = ButcherTableau::dopri5();
        let run = |h: f64| {
            let n = (1.0 / h).round() as usize;
            let mut y = 1.0;
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let t = i as f64 * h;
                let out = step_ode(&tab, |_, y| -y, t, h, y);
                let seg = build_segment(&tab, t, t + h, &[y], &out).unwrap();
                for &frac in &[0.25, 0.5, 0.75] {
                    let tm = t + frac * h;
                    worst = worst.max((seg.eval(tm)[0] - (-tm).exp()).abs());
                }
                y = out.y_next[0];
            }
            worst
        };
        let errs = [run(0.2), run(0.1), run(0.05)];
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(slope >= 4.0, "interpolation order {slope} below 4");
        }
    }
}
