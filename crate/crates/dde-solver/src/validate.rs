//! Self-validation checks: oracle equivalence, the breaking-point lattice
//! and the tracking mechanism. Shared between the command line and the
//! integration tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::SolverError;
use crate::integrator::integrate;
use crate::oracle::{method_of_steps_solve, FixedStepReference};
use crate::problem::{DdeProblem, DelayFunction, HistoryFunction, SolverConfig};
use crate::state::State;
use crate::systems::{HistorySpec, SystemKind, SystemSpec};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Knobs for the validation run.
#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Degrades the solver (tracking off, loose tolerance) to demonstrate
    /// that the lattice and tracking checks genuinely bite.
    pub force_no_tracking: bool,
    /// Random history draws per system in the oracle-equivalence check.
    pub oracle_draws: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            force_no_tracking: false,
            oracle_draws: 5,
        }
    }
}

fn check(name: &'static str, result: Result<(bool, String), SolverError>) -> CheckResult {
    match result {
        Ok((passed, detail)) => CheckResult {
            name,
            passed,
            detail,
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn base_config(options: &ValidationOptions, rtol: f64, atol: f64) -> SolverConfig {
    if options.force_no_tracking {
        SolverConfig {
            track_discontinuities: false,
            ..SolverConfig::with_tolerances(1e-3, 1e-3)
        }
    } else {
        SolverConfig::with_tolerances(rtol, atol)
    }
}

fn linear_unit_delay(t_final: f64) -> Result<DdeProblem, SolverError> {
    DdeProblem::new(
        |_t, _y, d: &[Vec<f64>], out: &mut [f64]| out[0] = -d[0][0],
        vec![DelayFunction::constant(1.0)],
        HistoryFunction::constant(State::scalar(1.0)?),
        0.0,
        t_final,
    )
}

/// Runs every check whose name contains `filter` (all when absent).
pub fn run_checks(filter: Option<&str>, options: &ValidationOptions) -> Vec<CheckResult> {
    let all: Vec<(&'static str, fn(&ValidationOptions) -> CheckResult)> = vec![
        ("method_of_steps", check_method_of_steps),
        ("lattice", check_lattice),
        ("time_dependent_root", check_time_dependent_root),
        ("overlap", check_overlap),
        ("tracking_efficacy", check_tracking_efficacy),
        ("oracle_equivalence", check_oracle_equivalence),
    ];
    all.into_iter()
        .filter(|(name, _)| filter.map_or(true, |f| name.contains(f)))
        .map(|(_, f)| f(options))
        .collect()
}

/// y' = -y(t-1), phi = 1 against the symbolically integrated chain.
fn check_method_of_steps(options: &ValidationOptions) -> CheckResult {
    check("method_of_steps", (|| {
        let problem = linear_unit_delay(2.0)?;
        let config = base_config(options, 1e-10, 1e-10);
        let solution = integrate(&problem, &config, &[1.0, 2.0])?;
        let e1 = solution.states[0][0].abs();
        let e2 = (solution.states[1][0] + 0.5).abs();
        Ok((
            e1 <= 1e-8 && e2 <= 1e-8,
            format!("|y(1)| = {e1:.2e}, |y(2)+1/2| = {e2:.2e} (tolerance 1e-8)"),
        ))
    })())
}

/// Constant delay 2 on [0, 10]: breaking points {2, 4, 6, 8, 10} with
/// orders increasing from 2, nothing past the cutoff.
fn check_lattice(options: &ValidationOptions) -> CheckResult {
    check("lattice", (|| {
        let problem = DdeProblem::new(
            |_t, _y, d: &[Vec<f64>], out: &mut [f64]| out[0] = -d[0][0],
            vec![DelayFunction::constant(2.0)],
            HistoryFunction::constant(State::scalar(1.0)?),
            0.0,
            10.0,
        )?;
        let config = base_config(options, 1e-7, 1e-7);
        let solution = integrate(&problem, &config, &[])?;
        let found: Vec<_> = solution
            .discontinuities
            .items()
            .iter()
            .filter(|d| d.t > 0.0)
            .cloned()
            .collect();
        let expected: Vec<(f64, u32)> = vec![(2.0, 2), (4.0, 3), (6.0, 4), (8.0, 5), (10.0, 6)];
        let mut ok = found.len() == expected.len();
        if ok {
            for (d, (t, order)) in found.iter().zip(&expected) {
                if (d.t - t).abs() > 1e-9 || d.order != *order {
                    ok = false;
                }
            }
        }
        let max_order = solution
            .discontinuities
            .items()
            .iter()
            .map(|d| d.order)
            .max()
            .unwrap_or(0);
        ok = ok && max_order <= 6;
        Ok((
            ok,
            format!(
                "found {:?}",
                found.iter().map(|d| (d.t, d.order)).collect::<Vec<_>>()
            ),
        ))
    })())
}

/// First breaking point of tau(t) = 2 + sin(t) against an independent
/// scalar root of t - 2 - sin(t).
fn check_time_dependent_root(options: &ValidationOptions) -> CheckResult {
    check("time_dependent_root", (|| {
        let problem = DdeProblem::new(
            |t, y: &[f64], d: &[Vec<f64>], out: &mut [f64]| {
                out[0] = crate::systems::logistic_rhs(t, y[0], d[0][0]);
            },
            vec![DelayFunction::time_dependent(|t| 2.0 + t.sin())],
            HistoryFunction::constant(State::scalar(0.5)?),
            0.0,
            4.0,
        )?;
        let config = base_config(options, 1e-7, 1e-7);
        let solution = integrate(&problem, &config, &[])?;
        // standalone bisection of t - 2 - sin(t) on [2, 3]
        let mut a = 2.0f64;
        let mut b = 3.0f64;
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if m - 2.0 - m.sin() < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let reference_root = 0.5 * (a + b);
        let first = solution
            .discontinuities
            .items()
            .iter()
            .find(|d| d.t > 0.0)
            .map(|d| d.t);
        match first {
            Some(t) => {
                let err = (t - reference_root).abs();
                Ok((err <= 1e-8, format!("root {t}, reference {reference_root}, |diff| = {err:.2e}")))
            }
            None => Ok((false, "no breaking point past t = 0 was recorded".into())),
        }
    })())
}

/// Steps forced beyond the delay: the fixed-point loop must run and the
/// result must match the brute-force oracle.
fn check_overlap(options: &ValidationOptions) -> CheckResult {
    check("overlap", (|| {
        let problem = DdeProblem::new(
            |_t, _y, d: &[Vec<f64>], out: &mut [f64]| out[0] = -d[0][0],
            vec![DelayFunction::constant(0.1)],
            HistoryFunction::constant(State::scalar(1.0)?),
            0.0,
            0.5,
        )?;
        let mut config = base_config(options, 1e-7, 1e-7);
        config.track_discontinuities = false;
        let solution = integrate(&problem, &config, &[0.5])?;
        let reference = FixedStepReference::compute(&problem, 1e-5, 0.5)?;
        let err = (solution.states[0][0] - reference.eval(0.5)?[0]).abs();
        let overlapped = solution.stats.n_fp_iterations > 0;
        Ok((
            err <= 1e-5 && overlapped,
            format!(
                "|y(0.5) - oracle| = {err:.2e}, fixed-point refinements = {}",
                solution.stats.n_fp_iterations
            ),
        ))
    })())
}

/// At loose tolerance the tracked run must beat the untracked one.
fn check_tracking_efficacy(options: &ValidationOptions) -> CheckResult {
    check("tracking_efficacy", (|| {
        let problem = linear_unit_delay(3.0)?;
        let reference = method_of_steps_solve(&problem, 3.0)?;
        let probe: Vec<f64> = (0..=120).map(|i| 3.0 * i as f64 / 120.0).collect();
        let mut errs = [0.0f64; 2];
        for (slot, tracking) in errs.iter_mut().zip([true, false]) {
            let config = SolverConfig {
                track_discontinuities: tracking && !options.force_no_tracking,
                ..SolverConfig::with_tolerances(1e-3, 1e-3)
            };
            let solution = integrate(&problem, &config, &probe)?;
            let mut worst: f64 = 0.0;
            for (t, s) in probe.iter().zip(&solution.states) {
                worst = worst.max((s[0] - reference.eval(*t)?[0]).abs());
            }
            *slot = worst;
        }
        Ok((
            errs[0] < errs[1],
            format!("max error tracking on = {:.3e}, off = {:.3e}", errs[0], errs[1]),
        ))
    })())
}

/// All three benchmark systems against the fixed-step oracle for random
/// history draws on their reference grids.
fn check_oracle_equivalence(options: &ValidationOptions) -> CheckResult {
    check("oracle_equivalence", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut detail = String::new();
        let mut ok = true;
        for kind in [
            SystemKind::TimeDependentLogistic,
            SystemKind::StateDependentMackeyGlass,
            SystemKind::DelayedDiffusion,
        ] {
            let (lo, hi) = kind.history_sample_range();
            let t_final = kind.default_t_final();
            let grid: Vec<f64> = (0..kind.default_num_steps())
                .map(|i| t_final * i as f64 / (kind.default_num_steps() - 1) as f64)
                .collect();
            let mut worst: f64 = 0.0;
            for _ in 0..options.oracle_draws {
                let value = rng.random_range(lo..hi);
                let history = if kind == SystemKind::DelayedDiffusion {
                    HistorySpec::DiffusionProfile {
                        amplitude: value,
                        wavenumber: None,
                    }
                } else {
                    HistorySpec::Constant { value }
                };
                let problem = SystemSpec::new(kind, history).build(t_final)?;
                let config = base_config(options, 1e-7, 1e-7);
                let solution = integrate(&problem, &config, &grid)?;
                let reference = FixedStepReference::compute(&problem, 1e-4, t_final)?;
                for (t, s) in grid.iter().zip(&solution.states) {
                    let r = reference.eval(*t)?;
                    for (a, b) in s.iter().zip(&r) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
            ok = ok && worst <= 1e-4;
            detail.push_str(&format!("{}: {:.2e} ", kind.name(), worst));
        }
        Ok((ok, format!("{detail}(bound 1e-4)")))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        let options = ValidationOptions {
            oracle_draws: 1,
            ..Default::default()
        };
        for result in run_checks(Some("lattice"), &options) {
            assert!(result.passed, "{}: {}", result.name, result.detail);
        }
        for result in run_checks(Some("method_of_steps"), &options) {
            assert!(result.passed, "{}: {}", result.name, result.detail);
        }
    }

    #[test]
    fn degraded_solver_fails_lattice() {
        let options = ValidationOptions {
            force_no_tracking: true,
            oracle_draws: 1,
        };
        let results = run_checks(Some("lattice"), &options);
        assert!(results.iter().any(|r| !r.passed));
    }

    #[test]
    fn filter_selects_subset() {
        let options = ValidationOptions {
            oracle_draws: 1,
            ..Default::default()
        };
        let results = run_checks(Some("overlap"), &options);
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].name, "overlap");
    }
}
