//! Run directories: snapshots, ledgers, summary, plots, and their verification.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{parse_config_str, InitialField, SimConfig};
use crate::diagnostics::{
    bounds_monitor, boundary_energy, default_theta_gamma_bar, energy_ledger, entropy_ledger,
    extended_energy_monitor, field_energy, lower_bound_sequence, obstacle_check, BoundsReport,
    EnergyRow, EntropyRow, ObstacleReport, ENERGY_TOL,
};
use crate::error::{Error, Result};
use crate::grid::integrate_unchecked;
use crate::plot::{line_plot, Series};
use crate::stepper::{Problem, SimState, StepRecord, Trajectory};

/// Largest accepted complementarity residual.
pub const COMPLEMENTARITY_TOL: f64 = 1e-10;

/// Class of a failed check; each maps to its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    Config,
    Solver,
    Energy,
    Bounds,
    Complementarity,
    Study,
}

impl Failure {
    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Config => 2,
            Failure::Solver => 3,
            Failure::Energy => 4,
            Failure::Bounds => 5,
            Failure::Complementarity => 6,
            Failure::Study => 7,
        }
    }

    /// The most severe failure decides the exit status.
    pub fn exit_status(failures: &[Failure]) -> i32 {
        failures.iter().min().map_or(0, |f| f.exit_code())
    }
}

/// Steps that get a snapshot: `0`, `n`, and `interior` evenly spaced ones in between.
pub fn snapshot_steps(n: usize, interior: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..=interior + 1)
        .map(|j| ((j * n) as f64 / (interior + 1) as f64).round() as usize)
        .collect();
    steps.dedup();
    steps
}

fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("snapshots").join(format!("step_{step:06}.csv"))
}

/// Per-step summary line of `steps.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub time: f64,
    pub p: f64,
    pub u_omega: f64,
    pub coupling_u_omega: f64,
    pub min_theta: f64,
    pub max_theta: f64,
    /// `∫χ / |Ω|`.
    pub liquid_fraction: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub newton_iterations: usize,
    pub volume_iterations: usize,
    pub theta_residual: f64,
    pub max_complementarity: f64,
}

fn step_row(problem: &Problem, s: &SimState, r: &StepRecord) -> StepRow {
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    StepRow {
        step: s.step,
        time: s.time,
        p: r.p,
        u_omega: s.u_omega,
        coupling_u_omega: r.coupling_u_omega,
        min_theta: min(&s.theta),
        max_theta: max(&s.theta),
        liquid_fraction: integrate_unchecked(&problem.grid, &s.chi) / problem.grid.measure(),
        min_u: min(&s.u),
        max_u: max(&s.u),
        newton_iterations: r.newton_iterations,
        volume_iterations: r.volume_iterations,
        theta_residual: r.theta_residual,
        max_complementarity: r.max_complementarity,
    }
}

/// Self-describing header of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub dimension: usize,
    pub extent: [f64; 2],
    pub cells: [usize; 2],
    pub tau: f64,
    pub r: f64,
    pub c_r: f64,
    pub material: String,
    pub sha256: String,
    pub step: usize,
    pub time: f64,
    pub u_omega: f64,
}

impl SnapshotHeader {
    fn new(problem: &Problem, s: &SimState) -> Self {
        Self {
            dimension: problem.grid.dimension(),
            extent: problem.grid.extent(),
            cells: problem.grid.cells(),
            tau: problem.tau(),
            r: problem.config.r,
            c_r: problem.c_r,
            material: problem.model.name().to_string(),
            sha256: problem.model.fingerprint(),
            step: s.step,
            time: s.time,
            u_omega: s.u_omega,
        }
    }

    fn write(&self, out: &mut String) {
        let _ = writeln!(out, "# freezebox snapshot");
        let _ = writeln!(
            out,
            "# dimension={} extent={},{} cells={},{}",
            self.dimension, self.extent[0], self.extent[1], self.cells[0], self.cells[1]
        );
        let _ = writeln!(out, "# tau={} r={} c_r={}", self.tau, self.r, self.c_r);
        let _ = writeln!(out, "# sha256={} material={}", self.sha256, self.material);
        let _ = writeln!(out, "# step={} time={} u_omega={}", self.step, self.time, self.u_omega);
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |m: String| Error::RunDirectory {
            path: path.to_path_buf(),
            message: m,
        };
        let mut kv = BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            // The material name runs to the end of the line and may contain spaces.
            let (line, name) = match line.split_once(" material=") {
                Some((head, name)) => (head, Some(name)),
                None => (line, None),
            };
            if let Some(name) = name {
                kv.insert("material".to_string(), name.to_string());
            }
            for tok in line.trim_start_matches('#').split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    kv.insert(k.to_string(), v.to_string());
                }
            }
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| bad(format!("header lacks `{k}`")));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| bad(format!("header field `{k}` is not a number")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| bad(format!("bad integer `{s}` in header")))
        };
        let pair = |k: &str| -> Result<(String, String)> {
            get(k)?
                .split_once(',')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| bad(format!("header field `{k}` needs two entries")))
        };
        let (e0, e1) = pair("extent")?;
        let (c0, c1) = pair("cells")?;
        let float = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad(format!("bad number `{s}` in header"))) };
        Ok(Self {
            dimension: int(&get("dimension")?)?,
            extent: [float(&e0)?, float(&e1)?],
            cells: [int(&c0)?, int(&c1)?],
            tau: num("tau")?,
            r: num("r")?,
            c_r: num("c_r")?,
            material: get("material")?,
            sha256: get("sha256")?,
            step: int(&get("step")?)?,
            time: num("time")?,
            u_omega: num("u_omega")?,
        })
    }

    /// Names every field that disagrees with the problem.
    fn mismatches(&self, problem: &Problem) -> Vec<&'static str> {
        let expect = SnapshotHeader::new(problem, &problem.initial);
        let mut out = Vec::new();
        if self.dimension != expect.dimension || self.extent != expect.extent || self.cells != expect.cells {
            out.push("grid");
        }
        if self.tau != expect.tau {
            out.push("tau");
        }
        if self.r != expect.r {
            out.push("r");
        }
        if self.c_r != expect.c_r {
            out.push("c_r");
        }
        if self.sha256 != expect.sha256 || self.material != expect.material {
            out.push("material");
        }
        if self.step > problem.steps {
            out.push("step");
        }
        out
    }
}

pub fn write_snapshot(path: &Path, problem: &Problem, s: &SimState) -> Result<()> {
    let mut out = String::new();
    SnapshotHeader::new(problem, s).write(&mut out);
    let two_d = problem.grid.dimension() == 2;
    out.push_str(if two_d { "index,x,y,theta,u,chi\n" } else { "index,x,theta,u,chi\n" });
    for i in 0..problem.grid.len() {
        let c = problem.grid.center(i);
        if two_d {
            let _ = writeln!(out, "{i},{},{},{},{},{}", c[0], c[1], s.theta[i], s.u[i], s.chi[i]);
        } else {
            let _ = writeln!(out, "{i},{},{},{},{}", c[0], s.theta[i], s.u[i], s.chi[i]);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, SimState)> {
    let text = fs::read_to_string(path)?;
    let header = SnapshotHeader::parse(&text, path)?;
    let bad = |m: String| Error::RunDirectory {
        path: path.to_path_buf(),
        message: m,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let names = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |n: &str| names.iter().position(|h| h == n).ok_or_else(|| bad(format!("missing column `{n}`")));
    let (ct, cu, cz) = (col("theta")?, col("u")?, col("chi")?);
    let (mut theta, mut u, mut chi) = (Vec::new(), Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = theta.len();
        let f = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("bad value in row {row}")))
        };
        theta.push(f(ct)?);
        u.push(f(cu)?);
        chi.push(f(cz)?);
    }
    let state = SimState {
        step: header.step,
        time: header.time,
        theta,
        u,
        chi,
        u_omega: header.u_omega,
    };
    Ok((header, state))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::RunDirectory {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::RunDirectory {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let err = |e: csv::Error| Error::RunDirectory {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(err)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySummary {
    pub passed: bool,
    pub worst_relative_margin: f64,
    pub first_failure: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropySummary {
    pub production_nonnegative: bool,
    pub total_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtendedEnergySummary {
    pub theta_gamma_bar: f64,
    pub sup_combination: f64,
    pub final_residual: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub material: String,
    pub material_sha256: String,
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub tau: f64,
    pub r: f64,
    pub cutoff: f64,
    pub c_r: f64,
    pub c_r_min: f64,
    /// A pinned `c_R` below the computed minimum voids the lower-bound guarantee.
    pub c_r_below_minimum: bool,
    pub solver_error: Option<String>,
    pub energy: Option<EnergySummary>,
    pub entropy: Option<EntropySummary>,
    pub bounds: Option<BoundsReport>,
    pub obstacle: Option<ObstacleReport>,
    pub extended_energy: Option<ExtendedEnergySummary>,
    /// Smallest and largest `U` over the run.
    pub u_range: [f64; 2],
    pub failures: Vec<Failure>,
    pub passed: bool,
}

/// Writes a configuration whose initial data are inlined, so the run directory is self-contained.
fn resolved_config(config: &SimConfig, problem: &Problem) -> SimConfig {
    let mut c = config.clone();
    c.initial.theta = InitialField::Values(problem.initial.theta.clone());
    c.initial.u = InitialField::Values(problem.initial.u.clone());
    c.initial.chi = InitialField::Values(problem.initial.chi.clone());
    c.base_dir = None;
    c
}

fn plots(dir: &Path, problem: &Problem, steps: &[StepRow], energy: &[EnergyRow]) -> Result<()> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let series = |label, f: &dyn Fn(&StepRow) -> f64| Series {
        label,
        points: steps.iter().map(|r| (r.time, f(r))).collect(),
    };
    let files = [
        (
            "theta_range.svg",
            line_plot(
                "temperature range",
                "t",
                &[series("min θ", &|r| r.min_theta), series("max θ", &|r| r.max_theta)],
            ),
        ),
        (
            "liquid_fraction.svg",
            line_plot("liquid fraction ∫χ/|Ω|", "t", &[series("χ", &|r| r.liquid_fraction)]),
        ),
        ("u_omega.svg", line_plot("volume change U_Ω", "t", &[series("U_Ω", &|r| r.u_omega)])),
        (
            "energy_margin.svg",
            line_plot(
                "energy ledger",
                "t",
                &[
                    Series {
                        label: "LHS",
                        points: energy.iter().map(|r| (r.time, r.lhs)).collect(),
                    },
                    Series {
                        label: "RHS",
                        points: energy.iter().map(|r| (r.time, r.rhs)).collect(),
                    },
                ],
            ),
        ),
    ];
    let _ = problem;
    for (name, svg) in files {
        fs::write(plots.join(name), svg)?;
    }
    Ok(())
}

fn prepare_dir(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(Error::RunDirectory {
            path: dir.to_path_buf(),
            message: "exists and is not a directory".into(),
        });
    }
    let snaps = dir.join("snapshots");
    if snaps.is_dir() {
        for e in fs::read_dir(&snaps)? {
            let p = e?.path();
            if p.extension().is_some_and(|x| x == "csv") {
                fs::remove_file(p)?;
            }
        }
    }
    fs::create_dir_all(snaps)?;
    Ok(())
}

/// Runs every enabled diagnostic and writes the run directory.
pub fn write_run(
    dir: &Path,
    config: &SimConfig,
    problem: &Problem,
    traj: &Trajectory,
    error: Option<&Error>,
) -> Result<Summary> {
    prepare_dir(dir)?;
    let d = &config.diagnostics;
    let mut failures = Vec::new();
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&resolved_config(config, problem))?,
    )?;
    let n = traj.last().step;
    for step in snapshot_steps(n, config.output.snapshots) {
        write_snapshot(&snapshot_path(dir, step), problem, &traj.states[step])?;
    }
    if let Some(Error::NewtonDivergence { state, .. }) = error {
        let text: String = state.iter().map(|v| format!("{v}\n")).collect();
        fs::write(dir.join("failure_theta.csv"), format!("theta\n{text}"))?;
    }
    let steps: Vec<StepRow> = traj
        .states
        .iter()
        .zip(&traj.records)
        .map(|(s, r)| step_row(problem, s, r))
        .collect();
    write_csv(&dir.join("steps.csv"), &steps)?;
    let energy = energy_ledger(problem, traj);
    write_csv(&dir.join("energy_ledger.csv"), &energy.rows)?;
    let entropy = entropy_ledger(problem, traj);
    write_csv(&dir.join("entropy_ledger.csv"), &entropy.rows)?;
    if error.is_some() {
        failures.push(Failure::Solver);
    }
    if d.energy && !energy.passed {
        failures.push(Failure::Energy);
    }
    let bounds = if d.bounds {
        let b = bounds_monitor(problem, traj)?;
        if !b.passed() {
            failures.push(Failure::Bounds);
        }
        Some(b)
    } else {
        None
    };
    let obstacle = if d.obstacle {
        let o = obstacle_check(problem, traj);
        if !o.passed(COMPLEMENTARITY_TOL) {
            failures.push(Failure::Complementarity);
        }
        Some(o)
    } else {
        None
    };
    let extended = d.extended_energy.then(|| {
        let tb = d
            .theta_gamma_bar
            .unwrap_or_else(|| default_theta_gamma_bar(problem, traj));
        let x = extended_energy_monitor(problem, traj, tb);
        ExtendedEnergySummary {
            theta_gamma_bar: tb,
            sup_combination: x.sup_combination,
            final_residual: x.rows.last().map_or(0.0, |r| r.residual),
        }
    });
    if config.output.plots {
        plots(dir, problem, &steps, &energy.rows)?;
    }
    failures.sort();
    failures.dedup();
    let summary = Summary {
        material: problem.model.name().to_string(),
        material_sha256: problem.model.fingerprint(),
        steps_requested: problem.steps,
        steps_completed: n,
        tau: problem.tau(),
        r: problem.config.r,
        cutoff: problem.family.b(),
        c_r: problem.c_r,
        c_r_min: problem.c_r_min,
        c_r_below_minimum: problem.c_r_below_minimum(),
        solver_error: error.map(|e| e.to_string()),
        energy: d.energy.then_some(EnergySummary {
            passed: energy.passed,
            worst_relative_margin: energy.worst_relative_margin,
            first_failure: energy.first_failure,
        }),
        entropy: d.entropy.then_some(EntropySummary {
            production_nonnegative: entropy.production_nonnegative,
            total_residual: entropy.total_residual,
        }),
        bounds,
        obstacle,
        extended_energy: extended,
        u_range: [
            steps.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min),
            steps.iter().map(|r| r.max_u).fold(f64::NEG_INFINITY, f64::max),
        ],
        passed: failures.is_empty(),
        failures,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Outcome of replaying a run directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub snapshots: usize,
    pub ledger_rows: usize,
    /// Largest relative gap between recomputed and recorded energies.
    pub max_energy_mismatch: f64,
    pub failures: Vec<Failure>,
    pub messages: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn close(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Recomputes energies from the snapshots, replays the ledger inequality, and checks bounds.
///
/// Malformed directories and headers that disagree with `config.json` are errors.
pub fn verify_run(dir: &Path) -> Result<VerifyReport> {
    let text = fs::read_to_string(dir.join("config.json")).map_err(|e| Error::RunDirectory {
        path: dir.join("config.json"),
        message: e.to_string(),
    })?;
    let problem = parse_config_str(&text)?.build()?;
    let energy: Vec<EnergyRow> = read_csv(&dir.join("energy_ledger.csv"))?;
    let steps: Vec<StepRow> = read_csv(&dir.join("steps.csv"))?;
    let _entropy: Vec<EntropyRow> = read_csv(&dir.join("entropy_ledger.csv"))?;
    let mut failures = Vec::new();
    let mut messages = Vec::new();
    let mut fail = |f: Failure, m: String| {
        failures.push(f);
        messages.push(m);
    };
    let mut snaps: Vec<PathBuf> = fs::read_dir(dir.join("snapshots"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    snaps.sort();
    if snaps.is_empty() {
        return Err(Error::RunDirectory {
            path: dir.to_path_buf(),
            message: "no snapshots".into(),
        });
    }
    let n = steps.last().map_or(0, |r| r.step);
    let v = lower_bound_sequence(
        problem.model.constants().theta_star,
        problem.c_r,
        problem.model.bounds().c_low,
        &problem.family,
        problem.tau(),
        n.max(problem.steps),
    )?;
    let mut worst = 0.0f64;
    for path in &snaps {
        let (header, state) = read_snapshot(path)?;
        let bad = header.mismatches(&problem);
        if !bad.is_empty() {
            return Err(Error::RunDirectory {
                path: path.clone(),
                message: format!("header disagrees with config.json in {}", bad.join(", ")),
            });
        }
        problem.grid.check_len(&state.theta)?;
        let name = path.display();
        let (Some(row), Some(srow)) = (energy.get(state.step), steps.get(state.step)) else {
            fail(Failure::Energy, format!("{name}: no ledger row for step {}", state.step));
            continue;
        };
        let field = field_energy(&problem, &state);
        let bnd = boundary_energy(&problem, state.u_omega, srow.p);
        let gap = close(field, row.field_energy).max(close(bnd, row.boundary_energy));
        worst = worst.max(gap);
        if gap > ENERGY_TOL {
            fail(
                Failure::Energy,
                format!("{name}: recomputed energy differs from the ledger by {gap:.3e}"),
            );
        }
        if state.chi.iter().any(|z| !(0.0..=1.0).contains(z)) {
            fail(Failure::Bounds, format!("{name}: χ outside [0,1]"));
        }
        let min = state.theta.iter().copied().fold(f64::INFINITY, f64::min);
        if min < v[state.step] {
            fail(
                Failure::Bounds,
                format!("{name}: min θ = {min} below the lower bound {}", v[state.step]),
            );
        }
    }
    for row in &energy {
        let lhs = row.field_energy + row.boundary_energy + row.boundary_heat;
        if close(lhs, row.lhs) > ENERGY_TOL {
            fail(Failure::Energy, format!("energy ledger step {}: LHS column is inconsistent", row.step));
        }
        if !(row.lhs <= row.rhs + ENERGY_TOL * row.rhs.abs()) {
            fail(Failure::Energy, format!("energy ledger step {}: LHS exceeds RHS", row.step));
        }
    }
    for row in &steps {
        if row.min_theta < v.get(row.step).copied().unwrap_or(0.0) {
            fail(Failure::Bounds, format!("step {}: min θ below the lower bound", row.step));
        }
        if row.max_complementarity > COMPLEMENTARITY_TOL {
            fail(
                Failure::Complementarity,
                format!("step {}: complementarity residual {:.3e}", row.step, row.max_complementarity),
            );
        }
    }
    failures.sort();
    failures.dedup();
    Ok(VerifyReport {
        snapshots: snaps.len(),
        ledger_rows: energy.len(),
        max_energy_mismatch: worst,
        failures,
        messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_cadence() {
        assert_eq!(snapshot_steps(1000, 10).len(), 12);
        assert_eq!(snapshot_steps(1000, 10)[0], 0);
        assert_eq!(*snapshot_steps(1000, 10).last().unwrap(), 1000);
        assert_eq!(snapshot_steps(3, 10), vec![0, 1, 2, 3]);
    }

    #[test]
    fn exit_status_prefers_most_severe() {
        assert_eq!(Failure::exit_status(&[]), 0);
        assert_eq!(Failure::exit_status(&[Failure::Bounds, Failure::Energy]), 4);
        assert_eq!(Failure::exit_status(&[Failure::Complementarity]), 6);
    }
}
