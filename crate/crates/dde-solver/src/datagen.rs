//! Reproducible trajectory-dataset generation.
//!
//! History parameters are drawn from a single seeded stream (train split
//! first, so shrinking or growing the test split never perturbs the train
//! draws), trajectories are integrated on an equally spaced save grid
//! starting at `t = 0`, and the results are written as CSV plus a JSON
//! metadata sidecar. Integration fans out across a thread pool but merges
//! in trajectory order, so output bytes do not depend on the worker count.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::SolverError;
use crate::integrator::{integrate, SolverStats};
use crate::problem::SolverConfig;
use crate::systems::{HistorySpec, SystemKind, SystemSpec};

/// Which history family the generator samples per trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryFamily {
    /// Constant history (profile amplitude for the diffusion system) drawn
    /// from the system's training range.
    Standard,
    /// Constant history drawn from the out-of-training extrapolation range.
    Extrapolation,
    /// Step history: two levels from the system's value range and a jump
    /// time from `(-tau_max, 0)`.
    Step,
}

/// Generation parameters.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetConfig {
    pub system: SystemKind,
    pub history_family: HistoryFamily,
    pub n_train: usize,
    pub n_test: usize,
    pub num_steps: usize,
    pub t_final: f64,
    pub seed: u64,
    /// Noise-to-signal variance factor applied to the train split;
    /// 0 leaves both splits clean.
    pub noise_alpha: f64,
    #[serde(skip)]
    pub solver: SolverConfig,
}

impl DatasetConfig {
    /// Reference-grid configuration for a system.
    pub fn preset(system: SystemKind, seed: u64) -> Self {
        DatasetConfig {
            system,
            history_family: HistoryFamily::Standard,
            n_train: 256,
            n_test: 32,
            num_steps: system.default_num_steps(),
            t_final: system.default_t_final(),
            seed,
            noise_alpha: 0.0,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.num_steps < 2 {
            return Err(SolverError::InvalidInput(
                "num_steps must be at least 2".into(),
            ));
        }
        if !(self.t_final > 0.0) {
            return Err(SolverError::InvalidInput("t_final must be positive".into()));
        }
        if self.noise_alpha < 0.0 {
            return Err(SolverError::InvalidInput(
                "noise_alpha must be non-negative".into(),
            ));
        }
        if self.system == SystemKind::DelayedDiffusion
            && self.history_family == HistoryFamily::Step
        {
            return Err(SolverError::InvalidInput(
                "step histories are not defined for the diffusion system".into(),
            ));
        }
        self.solver.validate()
    }
}

/// Aggregated solver counters over a split.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SplitStats {
    pub n_trajectories: usize,
    pub total_steps: usize,
    pub total_rejected: usize,
    pub total_fp_iterations: usize,
    pub total_discontinuities_hit: usize,
}

impl SplitStats {
    fn absorb(&mut self, stats: &SolverStats) {
        self.n_trajectories += 1;
        self.total_steps += stats.n_steps;
        self.total_rejected += stats.n_rejected;
        self.total_fp_iterations += stats.n_fp_iterations;
        self.total_discontinuities_hit += stats.n_discontinuities_hit;
    }
}

/// Sampled trajectories of one split: `n x num_steps x dim`, flat,
/// trajectory-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    data: Vec<f64>,
    n: usize,
    num_steps: usize,
    dim: usize,
    pub times: Vec<f64>,
    pub history_params: Vec<HistorySpec>,
    pub stats: SplitStats,
}

impl TrajectoryDataset {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n, self.num_steps, self.dim)
    }

    pub fn value(&self, traj: usize, step: usize, channel: usize) -> f64 {
        self.data[(traj * self.num_steps + step) * self.dim + channel]
    }

    /// One trajectory as a `num_steps * dim` row-major slice.
    pub fn trajectory(&self, traj: usize) -> &[f64] {
        let len = self.num_steps * self.dim;
        &self.data[traj * len..(traj + 1) * len]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    grid[0] = a;
    grid[n - 1] = b;
    grid
}

fn sample_history(
    system: SystemKind,
    family: HistoryFamily,
    rng: &mut ChaCha8Rng,
) -> HistorySpec {
    match family {
        HistoryFamily::Standard | HistoryFamily::Extrapolation => {
            let (lo, hi) = match family {
                HistoryFamily::Standard => system.history_sample_range(),
                _ => system.extrapolation_sample_range(),
            };
            let value = rng.random_range(lo..hi);
            if system == SystemKind::DelayedDiffusion {
                HistorySpec::DiffusionProfile {
                    amplitude: value,
                    wavenumber: None,
                }
            } else {
                HistorySpec::Constant { value }
            }
        }
        HistoryFamily::Step => {
            let (c0, c1) = system.step_value_range();
            let y0 = rng.random_range(c0..c1);
            let y1 = rng.random_range(c0..c1);
            let t_jump = rng.random_range(-system.tau_max()..0.0);
            HistorySpec::Step { y0, y1, t_jump }
        }
    }
}

/// Draws history parameters, integrates both splits and applies the
/// configured noise to the train split. Deterministic for a fixed seed.
pub fn generate(
    config: &DatasetConfig,
) -> Result<(TrajectoryDataset, TrajectoryDataset), SolverError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train_specs: Vec<HistorySpec> = (0..config.n_train)
        .map(|_| sample_history(config.system, config.history_family, &mut rng))
        .collect();
    let test_specs: Vec<HistorySpec> = (0..config.n_test)
        .map(|_| sample_history(config.system, config.history_family, &mut rng))
        .collect();

    let times = linspace(0.0, config.t_final, config.num_steps);
    let mut train = integrate_split(config, &times, train_specs)?;
    let test = integrate_split(config, &times, test_specs)?;

    if config.noise_alpha > 0.0 {
        // The model-facing protocol trains on noisy data and evaluates on
        // the clean test split; the noise stream reuses the dataset seed.
        train = add_noise(&train, config.noise_alpha, config.seed);
    }
    Ok((train, test))
}

fn integrate_split(
    config: &DatasetConfig,
    times: &[f64],
    history_params: Vec<HistorySpec>,
) -> Result<TrajectoryDataset, SolverError> {
    let dim = config.system.dim();
    let results: Vec<(Vec<Vec<f64>>, SolverStats)> = history_params
        .par_iter()
        .enumerate()
        .map(|(index, history)| {
            let spec = SystemSpec::new(config.system, history.clone());
            let run = || -> Result<(Vec<Vec<f64>>, SolverStats), SolverError> {
                let problem = spec.build(config.t_final)?;
                let solution = integrate(&problem, &config.solver, times)?;
                Ok((solution.states, solution.stats))
            };
            run().map_err(|source| SolverError::TrajectoryFailure {
                index,
                source: Box::new(source),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut data = Vec::with_capacity(history_params.len() * times.len() * dim);
    let mut stats = SplitStats::default();
    for (states, solver_stats) in &results {
        for state in states {
            data.extend_from_slice(state);
        }
        stats.absorb(solver_stats);
    }
    Ok(TrajectoryDataset {
        data,
        n: history_params.len(),
        num_steps: times.len(),
        dim,
        times: times.to_vec(),
        history_params,
        stats,
    })
}

/// Adds Gaussian noise scaled by a factor `alpha` of each trajectory's own
/// per-channel variance over its time samples. `alpha = 0` returns the
/// dataset unchanged.
pub fn add_noise(dataset: &TrajectoryDataset, alpha: f64, seed: u64) -> TrajectoryDataset {
    if alpha == 0.0 {
        return dataset.clone();
    }
    let (n, steps, dim) = dataset.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut noisy = dataset.clone();
    for traj in 0..n {
        // per-channel population variance over this trajectory's samples
        let mut stds = vec![0.0; dim];
        for (channel, std) in stds.iter_mut().enumerate() {
            let mut mean = 0.0;
            for step in 0..steps {
                mean += dataset.value(traj, step, channel);
            }
            mean /= steps as f64;
            let mut var = 0.0;
            for step in 0..steps {
                let d = dataset.value(traj, step, channel) - mean;
                var += d * d;
            }
            var /= steps as f64;
            *std = (alpha * var).sqrt();
        }
        for step in 0..steps {
            for channel in 0..dim {
                let idx = (traj * steps + step) * dim + channel;
                noisy.data[idx] += stds[channel] * normal.sample(&mut rng);
            }
        }
    }
    noisy
}

/// Mean squared error over all trajectories, time points and channels.
pub fn mse(pred: &TrajectoryDataset, truth: &TrajectoryDataset) -> Result<f64, SolverError> {
    if pred.shape() != truth.shape() {
        return Err(SolverError::DimensionMismatch {
            expected: truth.data.len(),
            got: pred.data.len(),
        });
    }
    let total: f64 = pred
        .data
        .iter()
        .zip(&truth.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / pred.data.len() as f64)
}

/// 17-significant-digit decimal rendering; round-trips exactly.
fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a split as CSV: header `traj_id,t,y_0..y_{d-1}`, one row per
/// trajectory and time point, LF line endings.
pub fn write_csv(dataset: &TrajectoryDataset, path: &Path) -> Result<(), SolverError> {
    let mut out = BufWriter::new(File::create(path)?);
    let (n, steps, dim) = dataset.shape();
    let mut header = String::from("traj_id,t");
    for c in 0..dim {
        header.push_str(&format!(",y_{c}"));
    }
    out.write_all(header.as_bytes())?;
    out.write_all(b"\n")?;
    for traj in 0..n {
        for step in 0..steps {
            let mut row = format!("{traj},{}", format_float(dataset.times[step]));
            for channel in 0..dim {
                row.push(',');
                row.push_str(&format_float(dataset.value(traj, step, channel)));
            }
            out.write_all(row.as_bytes())?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MetaDocument<'a> {
    config: &'a DatasetConfig,
    solver: MetaSolver,
    library_version: &'static str,
    train: MetaSplit<'a>,
    test: MetaSplit<'a>,
}

#[derive(Serialize)]
struct MetaSolver {
    rtol: f64,
    atol: f64,
    track_discontinuities: bool,
}

#[derive(Serialize)]
struct MetaSplit<'a> {
    shape: (usize, usize, usize),
    stats: &'a SplitStats,
    history_params: &'a [HistorySpec],
}

/// Writes the JSON metadata sidecar (configuration echo, sampled history
/// parameters and solver counters). Deliberately free of timestamps so
/// reruns are byte-identical.
pub fn write_meta(
    config: &DatasetConfig,
    train: &TrajectoryDataset,
    test: &TrajectoryDataset,
    path: &Path,
) -> Result<(), SolverError> {
    let doc = MetaDocument {
        config,
        solver: MetaSolver {
            rtol: config.solver.rtol,
            atol: config.solver.atol,
            track_discontinuities: config.solver.track_discontinuities,
        },
        library_version: env!("CARGO_PKG_VERSION"),
        train: MetaSplit {
            shape: train.shape(),
            stats: &train.stats,
            history_params: &train.history_params,
        },
        test: MetaSplit {
            shape: test.shape(),
            stats: &test.stats,
            history_params: &test.history_params,
        },
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &doc)
        .map_err(|e| SolverError::InvalidInput(format!("meta serialization: {e}")))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
