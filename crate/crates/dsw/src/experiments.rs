//! Benchmark runs: synthetic data, single inversions, the noise sweep and the
//! regularization-weight search.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use dsw_core::integrator::{self, GenAlphaConfig, TimeGrid};
use dsw_core::inverse::{InverseProblem, InversionConfig, InversionReport, Termination};
use dsw_core::problems::{exact_coefficient, initial_condition, ExampleId, DEFAULT_DT, DOMAIN, FINAL_TIME};
use dsw_core::{Error, Mesh1D, ModelParams, NodalField, SpaceTimeField, SpaceTimeFn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Noise levels of the sweep.
pub const NOISE_LEVELS: [f64; 4] = [0.0, 0.005, 0.01, 0.02];
/// Seeds `0..TABLE1_SEEDS` are used when no seed list is given.
pub const TABLE1_SEEDS: u64 = 5;
pub const DEFAULT_MAX_CG: usize = 500;
/// Candidates for the regularization weight search.
pub const DELTA_GRID: [f64; 11] = [1e-8, 1e-7, 1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
/// Seed used by [`tune_delta`] to produce the shipped defaults.
pub const TUNING_SEED: u64 = 1000;
/// Data are generated on a mesh this many times finer with `fine_data`.
pub const FINE_FACTOR: usize = 4;

/// Regularization weight used when none is given, per example and noise level.
///
/// The values come from [`tune_delta`] on seed [`TUNING_SEED`]; see
/// `data/delta_tuning.csv`. Noise levels between table entries use the entry
/// at or below.
pub fn default_delta(example: ExampleId, noise: f64) -> f64 {
    let table: [f64; 4] = match example {
        ExampleId::Cont => [1e-8, 1e-6, 3e-6, 1e-5],
        ExampleId::Discont => [1e-6, 1e-6, 1e-6, 3e-6],
        ExampleId::Disc2 => [1e-6, 1e-6, 3e-6, 3e-5],
    };
    let idx = NOISE_LEVELS.iter().rposition(|level| noise >= *level).unwrap_or(0);
    table[idx]
}

/// Everything needed to reproduce one inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub example: ExampleId,
    pub h: f64,
    pub dt: f64,
    /// Relative noise level `ε ≥ 0`.
    pub noise: f64,
    pub seed: u64,
    pub delta: f64,
    /// Generate the data on a finer mesh and interpolate them.
    pub fine_data: bool,
    /// Constant bed elevation.
    pub bathymetry: f64,
    /// Constant source term.
    pub forcing: f64,
    /// Constant initial height instead of the benchmark profile.
    pub initial_height: Option<f64>,
    pub grad_floor: f64,
    pub integrator: GenAlphaConfig,
    pub step_stop: f64,
    pub max_cg_iters: usize,
}

impl ExperimentSpec {
    /// Benchmark defaults for `example` with the tuned regularization weight.
    pub fn new(example: ExampleId, noise: f64, seed: u64) -> Self {
        Self {
            example,
            h: example.default_h(),
            dt: DEFAULT_DT,
            noise,
            seed,
            delta: default_delta(example, noise),
            fine_data: false,
            bathymetry: 0.0,
            forcing: 0.0,
            initial_height: None,
            grad_floor: dsw_core::model::DEFAULT_GRAD_FLOOR,
            integrator: GenAlphaConfig::default(),
            step_stop: 1e-3,
            max_cg_iters: DEFAULT_MAX_CG,
        }
    }

    pub fn mesh(&self) -> Result<Mesh1D, Error> {
        Mesh1D::new(DOMAIN.0, DOMAIN.1, self.h)
    }

    pub fn grid(&self) -> Result<TimeGrid, Error> {
        TimeGrid::new(0.0, FINAL_TIME, self.dt)
    }

    pub fn model_params(&self, mesh: &Mesh1D) -> ModelParams {
        let mut params = ModelParams::manning(mesh);
        params.grad_floor = self.grad_floor;
        params.bathymetry = NodalField::constant(mesh.node_count(), self.bathymetry);
        if self.forcing != 0.0 {
            params.forcing = SpaceTimeFn::Constant(self.forcing);
        }
        params
    }

    pub fn initial_state(&self, mesh: &Mesh1D) -> NodalField {
        match self.initial_height {
            Some(u0) => NodalField::constant(mesh.node_count(), u0),
            None => mesh.interpolate(initial_condition),
        }
    }

    pub fn inversion_config(&self, mesh: &Mesh1D) -> InversionConfig {
        let mut config = InversionConfig::new(mesh, self.delta);
        config.step_stop = self.step_stop;
        config.max_cg_iters = self.max_cg_iters;
        config
    }

    /// Checks every field that can be checked without solving.
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "noise",
                value: self.noise,
                reason: "must be non-negative",
            });
        }
        let mesh = self.mesh()?;
        self.grid()?;
        self.integrator.validate()?;
        let params = self.model_params(&mesh);
        params.validate(&mesh)?;
        let u0 = self.initial_state(&mesh);
        if let Some((node, depth)) = u0
            .iter()
            .zip(params.bathymetry.iter())
            .map(|(u, z)| u - z)
            .enumerate()
            .find(|(_, d)| d.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::DryState { node, depth });
        }
        self.inversion_config(&mesh).validate(&mesh)
    }
}

/// Synthetic observations together with the noise-free trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyData {
    pub data: SpaceTimeField,
    pub clean: SpaceTimeField,
    pub noise: f64,
    pub seed: u64,
}

fn restrict(fine: &SpaceTimeField, factor: usize) -> SpaceTimeField {
    let levels = fine
        .levels()
        .iter()
        .map(|level| level.iter().step_by(factor).copied().collect::<Vec<_>>().into())
        .collect();
    SpaceTimeField::new(levels)
}

/// Forward solve at the true coefficient plus `ε max|u| ζ`, with `ζ` drawn
/// independently per node and time level from ChaCha8 seeded with `spec.seed`.
pub fn generate_data(spec: &ExperimentSpec) -> Result<NoisyData, Error> {
    let mesh = spec.mesh()?;
    let grid = spec.grid()?;
    let clean = if spec.fine_data {
        let fine = Mesh1D::with_elements(mesh.left(), mesh.right(), mesh.element_count() * FINE_FACTOR)?;
        let params = spec.model_params(&fine);
        let truth = fine.interpolate(|x| exact_coefficient(spec.example, x));
        let u0 = spec.initial_state(&fine);
        let traj = integrator::solve_forward(&fine, &grid, &params, &truth, &u0, &spec.integrator)?;
        restrict(&traj, FINE_FACTOR)
    } else {
        let params = spec.model_params(&mesh);
        let truth = mesh.interpolate(|x| exact_coefficient(spec.example, x));
        let u0 = spec.initial_state(&mesh);
        integrator::solve_forward(&mesh, &grid, &params, &truth, &u0, &spec.integrator)?
    };
    let mut data = clean.clone();
    if spec.noise > 0.0 {
        let scale = spec.noise * clean.max_abs();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for level in data.levels_mut() {
            for v in level.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += scale * z;
            }
        }
    }
    Ok(NoisyData {
        data,
        clean,
        noise: spec.noise,
        seed: spec.seed,
    })
}

/// Result of one inversion.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: ExperimentSpec,
    pub mesh: Mesh1D,
    pub truth: NodalField,
    pub data: NoisyData,
    pub report: InversionReport,
    pub wall_time: Duration,
}

impl RunOutcome {
    pub fn failed(&self) -> bool {
        matches!(self.report.termination, Termination::SolverFailure(_))
    }
}

/// Generates data for `spec` and runs the conjugate-gradient inversion.
pub fn run_inversion(spec: &ExperimentSpec) -> Result<RunOutcome, Error> {
    spec.validate()?;
    let start = Instant::now();
    let mesh = spec.mesh()?;
    let grid = spec.grid()?;
    let params = spec.model_params(&mesh);
    let u0 = spec.initial_state(&mesh);
    let truth = mesh.interpolate(|x| exact_coefficient(spec.example, x));
    let data = generate_data(spec)?;
    let problem = InverseProblem {
        mesh: &mesh,
        grid: &grid,
        params: &params,
        initial_state: &u0,
        data: &data.data,
        integrator: spec.integrator,
    };
    let report = problem.run_cg(&spec.inversion_config(&mesh), Some(&truth));
    log::debug!(
        "{} eps={} seed={} delta={:e}: e={:?} after {} steps ({:?})",
        spec.example,
        spec.noise,
        spec.seed,
        spec.delta,
        report.final_error,
        report.accepted_steps(),
        report.termination
    );
    Ok(RunOutcome {
        spec: spec.clone(),
        mesh,
        truth,
        data,
        report,
        wall_time: start.elapsed(),
    })
}

/// Short text form of a termination reason.
pub fn termination_label(t: &Termination) -> String {
    match t {
        Termination::StepBelowThreshold { .. } => "step_below_threshold".into(),
        Termination::MaxIterations => "max_iterations".into(),
        Termination::NoDescent => "no_descent".into(),
        Termination::ZeroGradient => "zero_gradient".into(),
        Termination::NullDirection => "null_direction".into(),
        Termination::SolverFailure(e) => format!("failed: {e}"),
    }
}

/// One row of the noise sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub example: ExampleId,
    pub noise: f64,
    pub seed: u64,
    pub delta: f64,
    /// Relative L² error of the final iterate, absent if the run never started.
    pub error: Option<f64>,
    /// Accepted CG steps.
    pub iterations: usize,
    pub final_objective: f64,
    /// Termination reason, or the failure message.
    pub status: String,
    pub wall_time: Duration,
}

impl Table1Row {
    pub fn failed(&self) -> bool {
        self.status.starts_with("failed")
    }

    fn sort_key(&self, other: &Self) -> Ordering {
        self.example
            .cmp(&other.example)
            .then(self.noise.total_cmp(&other.noise))
            .then(self.seed.cmp(&other.seed))
            .then(self.delta.total_cmp(&other.delta))
    }
}

fn run_row(spec: &ExperimentSpec) -> Table1Row {
    let start = Instant::now();
    let base = Table1Row {
        example: spec.example,
        noise: spec.noise,
        seed: spec.seed,
        delta: spec.delta,
        error: None,
        iterations: 0,
        final_objective: f64::NAN,
        status: String::new(),
        wall_time: Duration::ZERO,
    };
    match run_inversion(spec) {
        Ok(out) => Table1Row {
            error: out.report.final_error,
            iterations: out.report.accepted_steps(),
            final_objective: out.report.final_objective,
            status: termination_label(&out.report.termination),
            wall_time: out.wall_time,
            ..base
        },
        Err(e) => Table1Row {
            status: format!("failed: {e}"),
            wall_time: start.elapsed(),
            ..base
        },
    }
}

/// All combinations of examples, noise levels and seeds.
pub fn table1_specs(
    examples: &[ExampleId],
    noise_levels: &[f64],
    seeds: &[u64],
    make: impl Fn(ExampleId, f64, u64) -> ExperimentSpec,
) -> Vec<ExperimentSpec> {
    let mut specs = Vec::with_capacity(examples.len() * noise_levels.len() * seeds.len());
    for &example in examples {
        for &noise in noise_levels {
            for &seed in seeds {
                specs.push(make(example, noise, seed));
            }
        }
    }
    specs
}

/// Runs every spec (in parallel) and returns the rows sorted by example,
/// noise level, seed and δ. Failed runs become rows with a failure status.
pub fn run_table1(specs: &[ExperimentSpec]) -> Vec<Table1Row> {
    let mut rows: Vec<Table1Row> = specs.par_iter().map(run_row).collect();
    rows.sort_by(|a, b| a.sort_key(b));
    rows
}

/// Mean error per (example, noise level) over the successful runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanError {
    pub example: ExampleId,
    pub noise: f64,
    pub mean: f64,
    pub runs: usize,
    pub failures: usize,
}

pub fn mean_errors(rows: &[Table1Row]) -> Vec<MeanError> {
    let mut out: Vec<MeanError> = Vec::new();
    for row in rows {
        let idx = match out
            .iter()
            .position(|m| m.example == row.example && m.noise == row.noise)
        {
            Some(i) => i,
            None => {
                out.push(MeanError {
                    example: row.example,
                    noise: row.noise,
                    mean: 0.0,
                    runs: 0,
                    failures: 0,
                });
                out.len() - 1
            }
        };
        let entry = &mut out[idx];
        match row.error {
            Some(e) if !row.failed() => {
                entry.mean += e;
                entry.runs += 1;
            }
            _ => entry.failures += 1,
        }
    }
    for m in &mut out {
        m.mean = if m.runs > 0 { m.mean / m.runs as f64 } else { f64::NAN };
    }
    out.sort_by(|a, b| a.example.cmp(&b.example).then(a.noise.total_cmp(&b.noise)));
    out
}

/// Errors of every candidate weight for one (example, noise level, seed).
#[derive(Debug, Clone)]
pub struct TuningLog {
    pub rows: Vec<Table1Row>,
    pub best_delta: f64,
    pub best_error: f64,
}

/// Grid search for δ minimizing the final error on a single seed.
pub fn tune_delta(base: &ExperimentSpec, grid: &[f64]) -> TuningLog {
    let specs: Vec<ExperimentSpec> = grid
        .iter()
        .map(|&delta| ExperimentSpec { delta, ..base.clone() })
        .collect();
    let rows = run_table1(&specs);
    let (best_delta, best_error) = rows
        .iter()
        .filter(|r| !r.failed())
        .filter_map(|r| r.error.map(|e| (r.delta, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((f64::NAN, f64::NAN));
    TuningLog {
        rows,
        best_delta,
        best_error,
    }
}
