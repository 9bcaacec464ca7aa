//! CSV and JSON files written by the command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dsw_core::inverse::IterationRecord;
use dsw_core::{Mesh1D, SpaceTimeField, TimeGrid};
use serde::Serialize;

use crate::experiments::{MeanError, Table1Row};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest round-trip form, in exponent notation for very small or large
/// magnitudes.
pub fn num(x: f64) -> String {
    if x != 0.0 && x.is_finite() && !(1e-3..1e6).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Columns `t, x, u`, one row per node and time level.
pub fn write_trajectory<W: Write>(w: W, mesh: &Mesh1D, grid: &TimeGrid, traj: &SpaceTimeField) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "x", "u"])?;
    for (level, values) in traj.levels().iter().enumerate() {
        let t = grid.time(level).to_string();
        for (x, u) in mesh.coords().iter().zip(values.iter()) {
            out.write_record([t.as_str(), &x.to_string(), &u.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Columns `x, d_f, d_f_true`.
pub fn write_reconstruction<W: Write>(w: W, mesh: &Mesh1D, d_f: &[f64], truth: &[f64]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "d_f", "d_f_true"])?;
    for ((x, d), t) in mesh.coords().iter().zip(d_f).zip(truth) {
        out.write_record([x.to_string(), d.to_string(), t.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `k, J, e, theta, beta`; θ and β are empty for the last record.
pub fn write_convergence<W: Write>(w: W, records: &[IterationRecord]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "J", "e", "theta", "beta"])?;
    for r in records {
        out.write_record([
            r.iteration.to_string(),
            num(r.objective),
            opt(r.error),
            opt(r.step),
            opt(r.beta),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub const TABLE1_HEADER: [&str; 9] = [
    "example",
    "noise",
    "seed",
    "delta",
    "e",
    "iterations",
    "final_J",
    "status",
    "wall_time_s",
];

/// One row per run; `wall_time_s` is the only column that varies between
/// identical runs and comes last.
pub fn write_table1<W: Write>(w: W, rows: &[Table1Row]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TABLE1_HEADER)?;
    for r in rows {
        out.write_record([
            r.example.to_string(),
            r.noise.to_string(),
            r.seed.to_string(),
            num(r.delta),
            opt(r.error),
            r.iterations.to_string(),
            num(r.final_objective),
            r.status.clone(),
            format!("{:.3}", r.wall_time.as_secs_f64()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_means<W: Write>(w: W, means: &[MeanError]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["example", "noise", "mean_e", "runs", "failures"])?;
    for m in means {
        out.write_record([
            m.example.to_string(),
            m.noise.to_string(),
            num(m.mean),
            m.runs.to_string(),
            m.failures.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Run record written next to every set of output files.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub program: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Fully resolved configuration, every key as accepted by `--config`.
    pub config: serde_json::Map<String, serde_json::Value>,
    pub seed: u64,
    pub outputs: Vec<String>,
    /// `ok`, or `failed` when some outputs are partial or missing.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config: &[(&'static str, String)], seed: u64) -> Self {
        Self {
            program: "dsw",
            version: VERSION,
            command: command.to_string(),
            config: config
                .iter()
                .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone())))
                .collect(),
            seed,
            outputs: Vec::new(),
            status: "ok".into(),
            error: None,
            summary: serde_json::Map::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn fail(&mut self, message: impl Into<String>) {
        self.status = "failed".into();
        self.error = Some(message.into());
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// Creates `dir/name` and records it in the manifest.
pub fn create(dir: &Path, name: &str, manifest: &mut Manifest) -> anyhow::Result<fs::File> {
    let file = fs::File::create(dir.join(name))?;
    manifest.outputs.push(name.to_string());
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsw_core::NodalField;

    #[test]
    fn number_format() {
        assert_eq!(num(1e-8), "1e-8");
        assert_eq!(num(0.025), "0.025");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(2.5e-7).parse::<f64>().unwrap(), 2.5e-7);
    }

    #[test]
    fn trajectory_layout() {
        let mesh = Mesh1D::new(0.0, 1.0, 0.5).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        let traj = SpaceTimeField::new(vec![NodalField::constant(3, 2.0); 3]);
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &mesh, &grid, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], "t,x,u");
        assert_eq!(lines[1], "0,0,2");
        assert_eq!(lines[9], "1,1,2");
    }

    #[test]
    fn convergence_blanks() {
        let rec = IterationRecord {
            iteration: 3,
            objective: 0.5,
            error: None,
            grad_norm: 1.0,
            beta: Some(0.25),
            step: None,
            clamped_nodes: 0,
        };
        let mut buf = Vec::new();
        write_convergence(&mut buf, &[rec]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,J,e,theta,beta\n3,0.5,,,0.25\n");
    }

    #[test]
    fn manifest_json() {
        let mut m = Manifest::new("invert", &[("h", "0.25".into())], 7);
        m.note("e", 0.01);
        m.fail("boom");
        let v: serde_json::Value = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(v["config"]["h"], "0.25");
        assert_eq!(v["seed"], 7);
        assert_eq!(v["status"], "failed");
        assert_eq!(v["error"], "boom");
        assert_eq!(v["version"], VERSION);
    }
}
