use serde::{Deserialize, Serialize};

use crate::grid::{face_conductivity, integrate_unchecked};
use crate::quadrature::tree_sum;
use crate::stepper::{Problem, SimState, Trajectory};

/// One step of the discrete entropy balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub step: usize,
    pub time: f64,
    /// `∫ (c s1^R + 2χ + U) dx`.
    pub entropy: f64,
    /// Entropy production integrated over the domain at this step.
    pub production: f64,
    /// `∮ h (θ_Γ - θ)/θ dσ`.
    pub boundary_flux: f64,
    /// `ΔS - τ (production + flux)`; zero for the continuous balance.
    pub residual: f64,
    /// Smallest single addend of the production density.
    pub min_integrand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub rows: Vec<EntropyRow>,
    /// Every production addend was non-negative.
    pub production_nonnegative: bool,
    /// `Σ_k |r_k|`.
    pub total_residual: f64,
}

pub fn total_entropy(problem: &Problem, state: &SimState) -> f64 {
    let model = &problem.model;
    let density: Vec<f64> = (0..problem.grid.len())
        .map(|i| {
            model.c(state.chi[i]) * problem.family.s1r(state.theta[i])
                + 2.0 * state.chi[i]
                + state.u[i]
        })
        .collect();
    integrate_unchecked(&problem.grid, &density)
}

/// Production density addends for step `k` from `prev` to `cur`:
/// face terms `κ T (θ_a - θ_b)² / (θ_a θ_b)` and cell terms `γ χ̇²/θ`, `U̇²/θ` per volume.
pub fn production_terms(problem: &Problem, prev: &SimState, cur: &SimState) -> (Vec<f64>, Vec<f64>) {
    let model = &problem.model;
    let tau = problem.tau();
    let kappa: Vec<f64> = prev.chi.iter().map(|&z| model.kappa(z)).collect();
    let t = &cur.theta;
    let faces = problem
        .grid
        .faces()
        .iter()
        .map(|f| {
            let d = t[f.a] - t[f.b];
            face_conductivity(&kappa, f) * f.transmissibility * d * d / (t[f.a] * t[f.b])
        })
        .collect();
    let mut cells = Vec::with_capacity(2 * t.len());
    for (i, &ti) in t.iter().enumerate() {
        let chi_dot = (cur.chi[i] - prev.chi[i]) / tau;
        let u_dot = (cur.u[i] - prev.u[i]) / tau;
        cells.push(model.gamma(prev.theta[i]) * chi_dot * chi_dot / ti);
        cells.push(u_dot * u_dot / ti);
    }
    (faces, cells)
}

pub fn entropy_ledger(problem: &Problem, traj: &Trajectory) -> EntropyReport {
    let v = problem.grid.cell_volume();
    let mut rows = Vec::with_capacity(traj.states.len());
    let mut prev_entropy = total_entropy(problem, &traj.states[0]);
    rows.push(EntropyRow {
        step: 0,
        time: 0.0,
        entropy: prev_entropy,
        production: 0.0,
        boundary_flux: 0.0,
        residual: 0.0,
        min_integrand: 0.0,
    });
    let mut nonnegative = true;
    let mut total = 0.0;
    for k in 1..traj.states.len() {
        let (prev, cur) = (&traj.states[k - 1], &traj.states[k]);
        let (faces, cells) = production_terms(problem, prev, cur);
        let positive_theta = cur.theta.iter().all(|&t| t > 0.0);
        let min_integrand = faces
            .iter()
            .chain(&cells)
            .copied()
            .fold(f64::INFINITY, f64::min);
        nonnegative &= positive_theta && min_integrand >= 0.0;
        let production = tree_sum(&faces) + v * tree_sum(&cells);
        let flux_terms: Vec<f64> = problem
            .grid
            .boundary()
            .iter()
            .zip(&traj.records[k].theta_gamma)
            .map(|(f, tg)| f.h * f.measure * (tg - cur.theta[f.cell]) / cur.theta[f.cell])
            .collect();
        let flux = tree_sum(&flux_terms);
        let entropy = total_entropy(problem, cur);
        let residual = entropy - prev_entropy - problem.tau() * (production + flux);
        total += residual.abs();
        rows.push(EntropyRow {
            step: k,
            time: cur.time,
            entropy,
            production,
            boundary_flux: flux,
            residual,
            min_integrand,
        });
        prev_entropy = entropy;
    }
    EntropyReport {
        rows,
        production_nonnegative: nonnegative,
        total_residual: total,
    }
}
