//! Command-line front end.
//!
//! Every subcommand resolves a [`RunConfig`] (defaults, then `--config`,
//! then flags), validates it before solving, writes its files into the
//! output directory and records them in `manifest.json`.

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dsw_core::integrator;
use dsw_core::problems::exact_coefficient;
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::experiments::{mean_errors, run_inversion, run_table1, table1_specs, termination_label};
use crate::output::{self, Manifest};
use crate::props::{gradient_suite, map_suite, PropertyCheck};

/// Exit status for configuration errors.
pub const EXIT_CONFIG: u8 = 2;
/// Exit status for solver failures and failed checks.
pub const EXIT_FAILURE: u8 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "dsw",
    version,
    about = "Friction coefficient identification for the diffusive wave equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the forward problem at the true coefficient.
    Forward(Overrides),
    /// Reconstruct the coefficient from synthetic data.
    Invert(Overrides),
    /// Noise sweep over examples, noise levels and seeds.
    Table1(Overrides),
    /// Finite-difference and duality checks of the gradient.
    GradCheck(Overrides),
    /// Gradient checks plus the forward-map property suite.
    Props(Overrides),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Forward(_) => "forward",
            Command::Invert(_) => "invert",
            Command::Table1(_) => "table1",
            Command::GradCheck(_) => "grad-check",
            Command::Props(_) => "props",
        }
    }

    fn overrides(&self) -> &Overrides {
        match self {
            Command::Forward(o)
            | Command::Invert(o)
            | Command::Table1(o)
            | Command::GradCheck(o)
            | Command::Props(o) => o,
        }
    }
}

/// Settings shared by all subcommands. Values are parsed and checked by the
/// config layer so that errors name the config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// `key = value` file applied before the flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// cont, discont or disc2; sweeps use all three when unset.
    #[arg(long)]
    pub example: Option<String>,
    /// Mesh size.
    #[arg(long)]
    pub h: Option<String>,
    /// Time step.
    #[arg(long)]
    pub dt: Option<String>,
    /// Relative noise level; sweeps use all levels when unset.
    #[arg(long)]
    pub noise: Option<String>,
    /// First seed.
    #[arg(long)]
    pub seed: Option<String>,
    /// Number of seeds per sweep cell.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Regularization weight; tuned per example and noise level when unset.
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long)]
    pub rho_inf: Option<String>,
    #[arg(long)]
    pub newton_tol: Option<String>,
    #[arg(long)]
    pub max_newton: Option<String>,
    /// CG stops once the step length drops below this.
    #[arg(long)]
    pub step_stop: Option<String>,
    #[arg(long)]
    pub max_cg: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    /// Generate the data on a finer mesh.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fine_data: Option<String>,
    /// Constant bed elevation.
    #[arg(long)]
    pub z: Option<String>,
    /// Constant source term.
    #[arg(long)]
    pub f: Option<String>,
    /// Constant initial height.
    #[arg(long)]
    pub u0: Option<String>,
    #[arg(long)]
    pub grad_floor: Option<String>,
}

impl Overrides {
    fn flags(&self) -> Vec<(&'static str, &str)> {
        [
            ("example", &self.example),
            ("h", &self.h),
            ("dt", &self.dt),
            ("noise", &self.noise),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("delta", &self.delta),
            ("rho_inf", &self.rho_inf),
            ("newton_tol", &self.newton_tol),
            ("max_newton", &self.max_newton),
            ("step_stop", &self.step_stop),
            ("max_cg", &self.max_cg),
            ("out", &self.out),
            ("fine_data", &self.fine_data),
            ("z", &self.z),
            ("f", &self.f),
            ("u0", &self.u0),
            ("grad_floor", &self.grad_floor),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }

    /// Defaults, then the config file, then the flags; validated.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for (key, value) in self.flags() {
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Runs one command and maps the outcome to an exit status.
pub fn run(cli: Cli) -> ExitCode {
    let config = match cli.command.overrides().resolve() {
        Ok(c) => c,
        Err(e) => {
            match e.key() {
                Some(key) => eprintln!("error: {e} (key `{key}`)"),
                None => eprintln!("error: {e}"),
            }
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(cli.command.name(), &config) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

/// Returns whether the command succeeded; `Err` only for IO problems.
pub fn execute(command: &str, config: &RunConfig) -> anyhow::Result<bool> {
    let dir = config.out.as_path();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = Manifest::new(command, &config.entries(), config.seed);
    let ok = match command {
        "forward" => forward(config, dir, &mut manifest),
        "invert" => invert(config, dir, &mut manifest),
        "table1" => table1(config, dir, &mut manifest),
        "grad-check" => checks(config, dir, &mut manifest, false),
        "props" => checks(config, dir, &mut manifest, true),
        other => anyhow::bail!("unknown command `{other}`"),
    };
    let ok = match ok {
        Ok(ok) => ok,
        Err(e) => {
            manifest.fail(format!("{e:#}"));
            manifest.write(dir)?;
            return Err(e);
        }
    };
    let path = manifest.write(dir)?;
    println!("wrote {}", path.display());
    Ok(ok)
}

fn forward(config: &RunConfig, dir: &Path, manifest: &mut Manifest) -> anyhow::Result<bool> {
    let spec = config.spec();
    let mesh = spec.mesh()?;
    let grid = spec.grid()?;
    let params = spec.model_params(&mesh);
    let truth = mesh.interpolate(|x| exact_coefficient(spec.example, x));
    let u0 = spec.initial_state(&mesh);
    let traj = match integrator::solve_forward(&mesh, &grid, &params, &truth, &u0, &spec.integrator) {
        Ok(t) => t,
        Err(e) => {
            manifest.fail(e.to_string());
            eprintln!("error: forward solve failed: {e}");
            return Ok(false);
        }
    };
    output::write_trajectory(output::create(dir, "trajectory.csv", manifest)?, &mesh, &grid, &traj)?;
    manifest.note("example", spec.example.to_string());
    manifest.note("nodes", mesh.node_count());
    manifest.note("levels", grid.level_count());
    println!(
        "{}: {} levels x {} nodes",
        spec.example,
        grid.level_count(),
        mesh.node_count()
    );
    Ok(true)
}

fn invert(config: &RunConfig, dir: &Path, manifest: &mut Manifest) -> anyhow::Result<bool> {
    let spec = config.spec();
    manifest.note("example", spec.example.to_string());
    manifest.note("delta", spec.delta);
    let outcome = match run_inversion(&spec) {
        Ok(o) => o,
        Err(e) => {
            manifest.fail(e.to_string());
            eprintln!("error: {e}");
            return Ok(false);
        }
    };
    let report = &outcome.report;
    let mesh = &outcome.mesh;
    let grid = spec.grid()?;
    output::write_convergence(output::create(dir, "convergence.csv", manifest)?, &report.records)?;
    output::write_reconstruction(
        output::create(dir, "reconstruction.csv", manifest)?,
        mesh,
        &report.coefficient,
        &outcome.truth,
    )?;
    output::write_trajectory(
        output::create(dir, "data.csv", manifest)?,
        mesh,
        &grid,
        &outcome.data.data,
    )?;
    let params = spec.model_params(mesh);
    let u0 = spec.initial_state(mesh);
    match integrator::solve_forward(mesh, &grid, &params, &report.coefficient, &u0, &spec.integrator) {
        Ok(traj) => output::write_trajectory(output::create(dir, "trajectory.csv", manifest)?, mesh, &grid, &traj)?,
        Err(e) => manifest.fail(format!("trajectory at the reconstruction: {e}")),
    }

    let status = termination_label(&report.termination);
    manifest.note("termination", status.clone());
    manifest.note("iterations", report.accepted_steps());
    manifest.note("final_J", report.final_objective);
    if let Some(e) = report.final_error {
        manifest.note("e", e);
    }
    manifest.note("wall_time_s", outcome.wall_time.as_secs_f64());
    println!(
        "{} eps={} delta={:e}: e={} after {} steps, J={:e} ({status})",
        spec.example,
        spec.noise,
        spec.delta,
        report
            .final_error
            .map(|e| format!("{e:.4e}"))
            .unwrap_or_else(|| "n/a".into()),
        report.accepted_steps(),
        report.final_objective,
    );
    if outcome.failed() {
        manifest.fail(status);
        return Ok(false);
    }
    Ok(manifest.error.is_none())
}

fn table1(config: &RunConfig, dir: &Path, manifest: &mut Manifest) -> anyhow::Result<bool> {
    let specs = table1_specs(
        &config.examples(),
        &config.noise_levels(),
        &config.seed_list(),
        |e, n, s| config.spec_for(e, n, s),
    );
    let rows = run_table1(&specs);
    let means = mean_errors(&rows);
    output::write_table1(output::create(dir, "table1.csv", manifest)?, &rows)?;
    output::write_means(output::create(dir, "table1_means.csv", manifest)?, &means)?;
    for m in &means {
        println!(
            "{:<8} eps={:<6} mean e={:.4e} over {} runs ({} failed)",
            m.example, m.noise, m.mean, m.runs, m.failures
        );
    }
    let failures: usize = means.iter().map(|m| m.failures).sum();
    manifest.note("runs", rows.len());
    manifest.note("failures", failures);
    manifest.note(
        "means",
        means
            .iter()
            .map(|m| json!({"example": m.example.to_string(), "noise": m.noise, "mean_e": m.mean}))
            .collect::<Vec<_>>(),
    );
    if failures > 0 {
        manifest.fail(format!("{failures} runs failed"));
        return Ok(false);
    }
    Ok(true)
}

fn checks(config: &RunConfig, dir: &Path, manifest: &mut Manifest, all: bool) -> anyhow::Result<bool> {
    let spec = config.spec();
    let mut results: Vec<PropertyCheck> = gradient_suite(&spec);
    if all {
        results.extend(map_suite(&spec));
    }
    let mut report = String::new();
    for c in &results {
        println!("{}", c.line());
        report.push_str(&c.line());
        report.push('\n');
    }
    fs::write(dir.join("checks.txt"), report)?;
    manifest.outputs.push("checks.txt".into());
    let failed: Vec<&str> = results.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    manifest.note(
        "checks",
        results
            .iter()
            .map(|c| json!({"name": c.name, "passed": c.passed, "detail": c.detail}))
            .collect::<Vec<_>>(),
    );
    if !failed.is_empty() {
        manifest.fail(format!("failed checks: {}", failed.join(", ")));
        return Ok(false);
    }
    Ok(true)
}
