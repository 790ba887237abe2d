use serde::{Deserialize, Serialize};

use crate::grid::integrate_unchecked;
use crate::stepper::{Problem, SimState, Trajectory};

/// Relative tolerance of the energy inequality.
pub const ENERGY_TOL: f64 = 1e-9;

/// One row of the discrete energy inequality `LHS(m) <= RHS(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub step: usize,
    pub time: f64,
    /// `∫ (c E + λ S²/2 - g x3 U + U + 2χ + c_R τ θ θ⁺) dx` at step m.
    pub field_energy: f64,
    /// `(K/2)(U_Ω + p)² + g ζ (U_Ω + p)` at step m.
    pub boundary_energy: f64,
    /// `τ Σ_k ∮ h (θ_k - θ_kΓ) dσ`.
    pub boundary_heat: f64,
    pub lhs: f64,
    /// Field and boundary energy of the initial state.
    pub initial_energy: f64,
    /// `Σ |p_k - p_{k-1}|`.
    pub p_variation: f64,
    /// `max_k |K (U_kΩ + p_k) + g ζ|`.
    pub p_weight: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    pub passed: bool,
    /// Smallest `(RHS - LHS) / |RHS|` after the initial row.
    pub worst_relative_margin: f64,
    pub first_failure: Option<usize>,
}

/// Field part of the ledger's left side for one state.
pub fn field_energy(problem: &Problem, state: &SimState) -> f64 {
    let model = &problem.model;
    let family = &problem.family;
    let g = model.constants().g;
    let f1c = model.f1_critical();
    let density: Vec<f64> = (0..problem.grid.len())
        .map(|i| {
            let (t, u, z) = (state.theta[i], state.u[i], state.chi[i]);
            let s = u + z - 1.0;
            model.c(z) * (family.e1r(t) - f1c) + 0.5 * s * s * model.lambda(z)
                - g * problem.grid.x3(i) * u
                + u
                + 2.0 * z
                + problem.c_r * problem.tau() * t * t.max(0.0)
        })
        .collect();
    integrate_unchecked(&problem.grid, &density)
}

/// Boundary elastic energy, shifted so that it stays defined for `K_Γ = 0`.
pub fn boundary_energy(problem: &Problem, u_omega: f64, p: f64) -> f64 {
    let k = problem.model.constants();
    let y = u_omega + p;
    0.5 * k.k_gamma * y * y + k.g * k.zeta_gamma * y
}

fn pressure_weight(problem: &Problem, u_omega: f64, p: f64) -> f64 {
    let k = problem.model.constants();
    (k.k_gamma * (u_omega + p) + k.g * k.zeta_gamma).abs()
}

pub fn energy_ledger(problem: &Problem, traj: &Trajectory) -> EnergyReport {
    let s0 = &traj.states[0];
    let p0 = traj.records[0].p;
    let initial = field_energy(problem, s0) + boundary_energy(problem, s0.u_omega, p0);
    let mut heat = 0.0;
    let mut variation = 0.0;
    let mut weight = pressure_weight(problem, s0.u_omega, p0);
    let mut rows = Vec::with_capacity(traj.states.len());
    for (m, (state, rec)) in traj.states.iter().zip(&traj.records).enumerate() {
        if m > 0 {
            heat += problem.tau() * rec.boundary_flux;
            variation += (rec.p - traj.records[m - 1].p).abs();
            weight = weight.max(pressure_weight(problem, state.u_omega, rec.p));
        }
        let field = field_energy(problem, state);
        let bnd = boundary_energy(problem, state.u_omega, rec.p);
        let lhs = field + bnd + heat;
        let rhs = initial + variation * weight;
        rows.push(EnergyRow {
            step: m,
            time: state.time,
            field_energy: field,
            boundary_energy: bnd,
            boundary_heat: heat,
            lhs,
            initial_energy: initial,
            p_variation: variation,
            p_weight: weight,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs + ENERGY_TOL * rhs.abs(),
        });
    }
    summarize(rows)
}

pub(crate) fn summarize(rows: Vec<EnergyRow>) -> EnergyReport {
    let first_failure = rows.iter().find(|r| !r.pass).map(|r| r.step);
    let worst = rows
        .iter()
        .skip(1)
        .map(|r| r.margin / r.rhs.abs().max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min);
    EnergyReport {
        passed: first_failure.is_none(),
        worst_relative_margin: worst,
        first_failure,
        rows,
    }
}
