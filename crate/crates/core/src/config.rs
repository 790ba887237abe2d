//! Run configuration: JSON schema, eager validation, and assembly into a [`Problem`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cellsolve::VolumeCoupling;
use crate::diagnostics::PerturbTargets;
use crate::error::{Error, Result};
use crate::grid::{Grid, Side, TimeTable};
use crate::materials::{
    MaterialDefinition, MaterialModel, ModelConstants, PiecewisePolynomial, Polynomial,
};
use crate::stepper::{BoundaryData, Problem, SimState, StepperConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub material: MaterialSpec,
    #[serde(default)]
    pub constants: ModelConstants,
    pub time: TimeSpec,
    pub truncation: TruncationSpec,
    pub initial: InitialSpec,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub seed: u64,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// `extent` and `cells` have one entry per dimension. `h` overrides the material's
/// heat-transfer coefficient per side: `[bottom, top]` in 1D, `[left, right, bottom, top]` in 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dimension: usize,
    pub extent: Vec<f64>,
    pub cells: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Polynomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<PiecewisePolynomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Polynomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Polynomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<PiecewisePolynomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

/// A built-in name, optionally with overrides; any other name needs every law in `overrides`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub name: String,
    #[serde(default)]
    pub overrides: MaterialOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub tau: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    pub r: f64,
    /// Pins `c_R`; computed from the material when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub theta: InitialField,
    pub u: InitialField,
    pub chi: InitialField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialField {
    Constant(f64),
    /// Linear from `from` at coordinate 0 to `to` at the far end of `axis`.
    Ramp { from: f64, to: f64, #[serde(default)] axis: usize },
    Values(Vec<f64>),
    /// Whitespace- or comma-separated values, one per cell; `#` starts a comment.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaGammaSpec {
    pub default: TimeTable,
    /// Per-side tables, keyed by `left`, `right`, `bottom`, `top`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sides: BTreeMap<Side, TimeTable>,
    /// Per-face tables keyed by boundary face index; these win over `sides`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nodes: BTreeMap<usize, TimeTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub theta_gamma: ThetaGammaSpec,
    pub p0: TimeTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Interior snapshots; the first and last step are always written.
    pub snapshots: usize,
    pub plots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("run"),
            snapshots: 10,
            plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSpec {
    pub energy: bool,
    pub entropy: bool,
    pub bounds: bool,
    pub obstacle: bool,
    pub extended_energy: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_gamma_bar: Option<f64>,
    pub tau_levels: usize,
    pub deltas: Vec<f64>,
    pub perturb: PerturbTargets,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            energy: true,
            entropy: true,
            bounds: true,
            obstacle: true,
            extended_energy: true,
            theta_gamma_bar: None,
            tau_levels: 3,
            deltas: vec![1e-2, 1e-3, 1e-4],
            perturb: PerturbTargets::ALL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub newton_tol: f64,
    pub max_newton_iterations: usize,
    pub volume_coupling: VolumeCoupling,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = StepperConfig::new(1.0, 1.0);
        Self {
            newton_tol: s.newton_tol,
            max_newton_iterations: s.max_newton_iterations,
            volume_coupling: s.volume_coupling,
        }
    }
}

/// Reads and validates a configuration; relative paths resolve against its directory.
pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let mut config = parse_config_str(&text)?;
    config.base_dir = path.parent().map(Path::to_path_buf);
    config.validate()?;
    Ok(config)
}

/// Parses without validation or path resolution.
pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    serde_json::from_str(text).map_err(|e| Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string()))
}

fn check_table(path: &str, table: &TimeTable, t_final: f64) -> Result<()> {
    table
        .check()
        .map_err(|e| Error::config(path, e.to_string()))?;
    if !table.covers(t_final) {
        return Err(Error::config(path, format!("tables cover [0,T] = [0,{t_final}]")));
    }
    Ok(())
}

impl SimConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Output directory; relative to the working directory, unlike input files.
    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone()
    }

    pub fn material_model(&self) -> Result<MaterialModel> {
        let o = &self.material.overrides;
        let def = match MaterialDefinition::builtin(&self.material.name) {
            Some(b) => MaterialDefinition {
                name: b.name.clone(),
                c: o.c.clone().unwrap_or(b.c),
                c1: o.c1.clone().unwrap_or(b.c1),
                lambda: o.lambda.clone().unwrap_or(b.lambda),
                kappa: o.kappa.clone().unwrap_or(b.kappa),
                gamma: o.gamma.clone().unwrap_or(b.gamma),
                h: o.h.unwrap_or(b.h),
            },
            None => {
                let need = |name: &str| {
                    Error::config(
                        format!("material.overrides.{name}"),
                        format!("`{}` is not a built-in material, so every law must be given", self.material.name),
                    )
                };
                MaterialDefinition {
                    name: self.material.name.clone(),
                    c: o.c.clone().ok_or_else(|| need("c"))?,
                    c1: o.c1.clone().ok_or_else(|| need("c1"))?,
                    lambda: o.lambda.clone().ok_or_else(|| need("lambda"))?,
                    kappa: o.kappa.clone().ok_or_else(|| need("kappa"))?,
                    gamma: o.gamma.clone().ok_or_else(|| need("gamma"))?,
                    h: o.h.ok_or_else(|| need("h"))?,
                }
            }
        };
        MaterialModel::new(def, self.constants)
    }

    pub fn build_grid(&self, default_h: f64) -> Result<Grid> {
        let g = &self.grid;
        let d = g.dimension;
        if d != 1 && d != 2 {
            return Err(Error::config("grid.dimension", "dimension must be 1 or 2"));
        }
        if g.extent.len() != d || g.cells.len() != d {
            return Err(Error::config("grid", format!("extent and cells need {d} entries")));
        }
        let nh = 2 * d;
        let h = match &g.h {
            Some(h) if h.len() == nh => h.clone(),
            Some(_) => return Err(Error::config("grid.h", format!("expected {nh} coefficients"))),
            None => vec![default_h; nh],
        };
        let mapped = |e: Error| Error::config("grid", e.to_string());
        if d == 1 {
            Grid::slab(g.extent[0], g.cells[0], h[0], h[1]).map_err(mapped)
        } else {
            Grid::rectangle(g.extent[0], g.extent[1], g.cells[0], g.cells[1], [h[0], h[1], h[2], h[3]])
                .map_err(mapped)
        }
    }

    fn initial_field(&self, name: &str, spec: &InitialField, grid: &Grid) -> Result<Vec<f64>> {
        let path = format!("initial.{name}");
        let values = match spec {
            InitialField::Constant(v) => vec![*v; grid.len()],
            InitialField::Ramp { from, to, axis } => {
                if *axis >= grid.dimension() {
                    return Err(Error::config(format!("{path}.ramp.axis"), "axis out of range"));
                }
                let len = grid.extent()[*axis];
                (0..grid.len())
                    .map(|i| from + (to - from) * grid.center(i)[*axis] / len)
                    .collect()
            }
            InitialField::Values(v) => v.clone(),
            InitialField::File(p) => {
                let file = self.resolve(p);
                let text = std::fs::read_to_string(&file)
                    .map_err(|e| Error::config(format!("{path}.file"), format!("{}: {e}", file.display())))?;
                text.lines()
                    .map(|l| l.split('#').next().unwrap_or(""))
                    .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|e| Error::config(format!("{path}.file"), format!("`{s}`: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        if values.len() != grid.len() {
            return Err(Error::config(
                path,
                format!("{} values for {} cells", values.len(), grid.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(path, "non-finite value"));
        }
        Ok(values)
    }

    fn boundary_data(&self, grid: &Grid) -> Result<BoundaryData> {
        let tg = &self.boundary.theta_gamma;
        let faces = grid.boundary();
        if let Some((&i, _)) = tg.nodes.iter().find(|(&i, _)| i >= faces.len()) {
            return Err(Error::config(
                format!("boundary.theta_gamma.nodes.{i}"),
                format!("the grid has {} boundary faces", faces.len()),
            ));
        }
        let tables = faces
            .iter()
            .enumerate()
            .map(|(i, f)| {
                tg.nodes
                    .get(&i)
                    .or_else(|| tg.sides.get(&f.side))
                    .unwrap_or(&tg.default)
                    .clone()
            })
            .collect();
        Ok(BoundaryData {
            theta_gamma: tables,
            p0: self.boundary.p0.clone(),
        })
    }

    /// Checks every data constraint without running anything.
    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }

    pub fn stepper_config(&self) -> StepperConfig {
        StepperConfig {
            c_r: self.truncation.c_r,
            newton_tol: self.solver.newton_tol,
            max_newton_iterations: self.solver.max_newton_iterations,
            volume_coupling: self.solver.volume_coupling,
            ..StepperConfig::new(self.time.tau, self.truncation.r)
        }
    }

    /// Validates and assembles the discrete problem.
    pub fn build(&self) -> Result<Problem> {
        let t = self.time;
        if !(t.tau > 0.0) || !t.tau.is_finite() {
            return Err(Error::config("time.tau", "τ > 0 required"));
        }
        if !(t.t_final >= t.tau) || !t.t_final.is_finite() {
            return Err(Error::config("time.t_final", "T ≥ τ required"));
        }
        if !(self.solver.newton_tol > 0.0) || self.solver.max_newton_iterations == 0 {
            return Err(Error::config("solver", "positive Newton tolerance and iteration cap required"));
        }
        let model = self.material_model()?;
        let k = *model.constants();
        let r = self.truncation.r;
        if !(r > model.r0()) || !r.is_finite() {
            return Err(Error::config(
                "truncation.r",
                format!("R > R₀ = {} required, got {r}", model.r0()),
            ));
        }
        let family = model
            .truncate(r)
            .map_err(|e| Error::config("truncation.r", e.to_string()))?;
        if !(family.b() > k.theta_sup) {
            return Err(Error::config(
                "truncation.r",
                format!("cutoff B(R) = {} must exceed θ* = {}", family.b(), k.theta_sup),
            ));
        }
        let grid = self.build_grid(model.h())?;
        let theta = self.initial_field("theta", &self.initial.theta, &grid)?;
        let u = self.initial_field("u", &self.initial.u, &grid)?;
        let chi = self.initial_field("chi", &self.initial.chi, &grid)?;
        let (lo, hi) = (k.theta_star, k.theta_sup);
        if theta.iter().any(|&x| !(lo..=hi).contains(&x)) {
            return Err(Error::config("initial.theta", format!("θ_* ≤ θ⁰ ≤ θ* with [{lo}, {hi}]")));
        }
        if chi.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::config("initial.chi", "0 ≤ χ⁰ ≤ 1"));
        }
        let tg = &self.boundary.theta_gamma;
        let mut tables = vec![("boundary.theta_gamma.default".to_string(), &tg.default)];
        tables.extend(tg.sides.iter().map(|(s, t)| (format!("boundary.theta_gamma.sides.{}", s.name()), t)));
        tables.extend(tg.nodes.iter().map(|(i, t)| (format!("boundary.theta_gamma.nodes.{i}"), t)));
        for (path, table) in &tables {
            check_table(path, table, t.t_final)?;
            if table.min_value() < lo || table.max_value() > hi {
                return Err(Error::config(path.as_str(), format!("θ_* ≤ θ_Γ ≤ θ* with [{lo}, {hi}]")));
            }
        }
        check_table("boundary.p0", &self.boundary.p0, t.t_final)?;
        if let Some(tb) = self.diagnostics.theta_gamma_bar {
            if !(lo..=hi).contains(&tb) {
                return Err(Error::config("diagnostics.theta_gamma_bar", format!("θ̄_Γ in [{lo}, {hi}] required")));
            }
        }
        if self.diagnostics.deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::config("diagnostics.deltas", "δ ≥ 0 required"));
        }
        let boundary = self.boundary_data(&grid)?;
        let initial = SimState::initial(&grid, theta, u, chi)?;
        Problem::new(grid, model, self.stepper_config(), boundary, initial, t.t_final)
    }
}
