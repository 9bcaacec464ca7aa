//! Acceptance criteria of the project, one PASS/FAIL line each.
//!
//! All criteria are evaluated in one test so the shared noise sweep runs
//! once. Criteria that are known not to hold are listed in `KNOWN_FAILURES`
//! with the measured numbers printed; the test fails if the set of failing
//! criteria differs from that list in either direction.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::process::Command;

use dsw::experiments::{run_inversion, table1_specs, ExperimentSpec, RunOutcome, NOISE_LEVELS};
use dsw::props::{gradient_suite, map_suite, PropertyCheck};
use dsw_core::integrator::solve_forward;
use dsw_core::mesh::{assemble_mass, space_time_l2};
use dsw_core::problems::{exact_coefficient, DEFAULT_DT, FINAL_TIME};
use dsw_core::{ExampleId, Mesh1D, NodalField, SpaceTimeField, TimeGrid};

#[path = "../../core/tests/common/backward_euler.rs"]
mod backward_euler;

/// Criteria that fail with the shipped defaults; see the README.
const KNOWN_FAILURES: [&str; 2] = ["6", "fine-data"];

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Report {
    lines: Vec<String>,
    failed: BTreeSet<String>,
}

impl Report {
    fn record(&mut self, id: &str, passed: bool, detail: String) {
        self.lines.push(format!(
            "{} criterion {id}: {detail}",
            if passed { "PASS" } else { "FAIL" }
        ));
        if !passed {
            self.failed.insert(id.to_string());
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn sweep(fine_data: bool) -> Vec<RunOutcome> {
    table1_specs(&ExampleId::ALL, &NOISE_LEVELS, &SEEDS, |e, n, s| {
        let mut spec = ExperimentSpec::new(e, n, s);
        spec.fine_data = fine_data;
        spec
    })
    .iter()
    .map(|spec| run_inversion(spec).expect("valid spec"))
    .collect()
}

fn cell_mean(runs: &[RunOutcome], example: ExampleId, noise: f64) -> f64 {
    mean(
        runs.iter()
            .filter(|r| r.spec.example == example && r.spec.noise == noise)
            .map(|r| r.report.final_error.unwrap_or(f64::INFINITY)),
    )
}

fn single(runs: &[RunOutcome], example: ExampleId, noise: f64) -> &RunOutcome {
    runs.iter()
        .find(|r| r.spec.example == example && r.spec.noise == noise && r.spec.seed == 0)
        .unwrap()
}

fn checks_passed(checks: &[PropertyCheck], names: &[&str]) -> (bool, String) {
    let selected: Vec<&PropertyCheck> = checks
        .iter()
        .filter(|c| names.iter().any(|n| c.name.starts_with(n)))
        .collect();
    let ok = !selected.is_empty() && selected.iter().all(|c| c.passed);
    let detail = selected.iter().map(|c| c.line()).collect::<Vec<_>>().join("; ");
    (ok, detail)
}

fn backward_euler_gap(dt: f64) -> f64 {
    let mesh = Mesh1D::new(-2.0, 2.0, 0.25).unwrap();
    let spec = ExperimentSpec::new(ExampleId::Cont, 0.0, 0);
    let params = spec.model_params(&mesh);
    let d_f = mesh.interpolate(|x| exact_coefficient(ExampleId::Cont, x));
    let u0 = spec.initial_state(&mesh);
    let grid = TimeGrid::new(0.0, FINAL_TIME, dt).unwrap();
    let traj = solve_forward(&mesh, &grid, &params, &d_f, &u0, &spec.integrator).unwrap();
    let oracle = backward_euler::backward_euler(mesh.coords(), &d_f, &u0, FINAL_TIME, dt / 100.0, dt);
    let oracle = SpaceTimeField::new(oracle.into_iter().map(NodalField::from).collect());
    space_time_l2(&mesh, dt, &traj.difference(&oracle)) / space_time_l2(&mesh, dt, &oracle)
}

fn max_mass_drift(mesh: &Mesh1D, traj: &SpaceTimeField) -> f64 {
    let mass = assemble_mass(mesh);
    let ones = NodalField::constant(mesh.node_count(), 1.0);
    let m0 = mass.form(&ones, &traj.levels()[0]);
    traj.levels()
        .iter()
        .map(|u| (mass.form(&ones, u) - m0).abs() / m0.abs())
        .fold(0.0, f64::max)
}

fn table1_csv(dir: &std::path::Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_dsw"))
        .args([
            "table1",
            "--seeds",
            "2",
            "--max-cg",
            "40",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // drop the trailing wall-time column
    fs::read_to_string(dir.join("table1.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect()
}

#[test]
fn acceptance_criteria() {
    let mut report = Report {
        lines: Vec::new(),
        failed: BTreeSet::new(),
    };
    let runs = sweep(false);

    let cont = single(&runs, ExampleId::Cont, 0.0);
    let e1 = cont.report.final_error.unwrap();
    let t1 = cont.wall_time.as_secs_f64();
    report.record(
        "1",
        e1 <= 2e-2 && t1 <= 60.0,
        format!("cont noise-free e = {e1:.4e} (limit 2e-2), {t1:.2} s (limit 60 s)"),
    );

    let e2 = cell_mean(&runs, ExampleId::Cont, 0.02);
    report.record(
        "2",
        e2 <= 0.1,
        format!("cont 2% mean e over {} seeds = {e2:.4e} (limit 1e-1)", SEEDS.len()),
    );

    let e3a = single(&runs, ExampleId::Discont, 0.0).report.final_error.unwrap();
    let e3b = single(&runs, ExampleId::Disc2, 0.0).report.final_error.unwrap();
    report.record(
        "3",
        e3a <= 9e-2 && e3b <= 8e-2,
        format!("discont e = {e3a:.4e} (limit 9e-2), disc2 e = {e3b:.4e} (limit 8e-2)"),
    );

    let mut monotone = true;
    let mut detail = Vec::new();
    for id in ExampleId::ALL {
        let means: Vec<f64> = NOISE_LEVELS.iter().map(|n| cell_mean(&runs, id, *n)).collect();
        monotone &= means.windows(2).all(|w| w[1] >= w[0]);
        detail.push(format!(
            "{id} [{}]",
            means.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>().join(", ")
        ));
    }
    report.record(
        "4",
        monotone,
        format!("mean e over noise levels: {}", detail.join("; ")),
    );

    let increases: Vec<String> = runs
        .iter()
        .filter(|r| {
            let j: Vec<f64> = r.report.records.iter().map(|rec| rec.objective).collect();
            j.windows(2).any(|w| w[1] > w[0]) || r.report.final_objective > j[0]
        })
        .map(|r| format!("{} {} seed {}", r.spec.example, r.spec.noise, r.spec.seed))
        .collect();
    report.record(
        "5",
        increases.is_empty(),
        format!(
            "J non-increasing in {}/{} runs {increases:?}",
            runs.len() - increases.len(),
            runs.len()
        ),
    );

    let (gap, gap_half) = (backward_euler_gap(DEFAULT_DT), backward_euler_gap(DEFAULT_DT / 2.0));
    report.record(
        "6",
        gap <= 1e-3 && gap / gap_half >= 3.5,
        format!(
            "gap to backward Euler at dt/100: {gap:.3e} (limit 1e-3); at dt/2 {gap_half:.3e}, reduction {:.2} (limit 3.5)",
            gap / gap_half
        ),
    );

    let mut drift: f64 = 0.0;
    let mut solves = 0;
    for id in ExampleId::ALL {
        for dt in [DEFAULT_DT, DEFAULT_DT / 2.0] {
            let mut spec = ExperimentSpec::new(id, 0.0, 0);
            spec.dt = dt;
            let mesh = spec.mesh().unwrap();
            let grid = spec.grid().unwrap();
            let params = spec.model_params(&mesh);
            let u0 = spec.initial_state(&mesh);
            let truth = mesh.interpolate(|x| exact_coefficient(id, x));
            let recovered = &single(&runs, id, 0.0).report.coefficient;
            let ones = NodalField::constant(mesh.node_count(), 1.0);
            for d_f in [&truth, recovered, &ones] {
                let traj = solve_forward(&mesh, &grid, &params, d_f, &u0, &spec.integrator).unwrap();
                drift = drift.max(max_mass_drift(&mesh, &traj));
                solves += 1;
            }
        }
    }
    report.record(
        "7",
        drift <= 1e-8,
        format!("max relative mass drift {drift:.2e} over {solves} solves (limit 1e-8)"),
    );

    let spec = ExperimentSpec::new(ExampleId::Cont, 0.0, 0);
    let gradient = gradient_suite(&spec);
    let (ok, detail) = checks_passed(&gradient, &["fd_gradient", "duality"]);
    report.record("8", ok && gradient.len() == 3, detail);

    let map = map_suite(&spec);
    let (ok, detail) = checks_passed(&map, &["frechet_decay"]);
    report.record(
        "9",
        ok && map.iter().filter(|c| c.name.starts_with("frechet")).count() == 3,
        detail,
    );
    let (ok, detail) = checks_passed(&map, &["lipschitz", "bounded_linearization"]);
    report.record("10", ok, detail);

    let tmp = tempfile::tempdir().unwrap();
    let first = table1_csv(&tmp.path().join("a"));
    let second = table1_csv(&tmp.path().join("b"));
    report.record(
        "11",
        first == second && first.lines().count() == 25,
        format!(
            "two table1 runs, {} rows, identical without timing: {}",
            first.lines().count() - 1,
            first == second
        ),
    );

    let fine = sweep(true);
    let mut worst = (0.0, String::new());
    for id in ExampleId::ALL {
        for noise in NOISE_LEVELS {
            let (a, b) = (cell_mean(&runs, id, noise), cell_mean(&fine, id, noise));
            let change = (b - a).abs() / a;
            if change > worst.0 {
                worst = (change, format!("{id} noise {noise}: {a:.3e} -> {b:.3e}"));
            }
        }
    }
    report.record(
        "fine-data",
        worst.0 <= 0.5,
        format!(
            "largest relative change of mean e with fine-mesh data {:.2} at {} (limit 0.5)",
            worst.0, worst.1
        ),
    );

    // written past the test harness capture so the lines show in every run
    let mut out = std::io::stdout().lock();
    writeln!(out, "\n{}", report.lines.join("\n")).unwrap();
    out.flush().unwrap();
    let known: BTreeSet<String> = KNOWN_FAILURES.iter().map(|s| s.to_string()).collect();
    assert_eq!(report.failed, known, "failing criteria differ from the known list");
}
