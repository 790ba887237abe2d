use serde::{Deserialize, Serialize};

use crate::cellsolve::{complementarity_residual, pair_map};
use crate::error::{Error, Result};
use crate::grid::integrate_unchecked;
use crate::materials::TruncationFamily;
use crate::quadrature::{increasing_root, tree_sum};
use crate::stepper::{cell_data, Problem, Trajectory};

use super::energy::{boundary_energy, field_energy};
use super::entropy::{production_terms, total_entropy};

/// Comparison sequence `c_* (e1^R(v_k) - e1^R(v_{k-1})) = -τ c_R v_k²`, `v_0 = θ_*`.
///
/// Returns `v_0, ..., v_n`.
pub fn lower_bound_sequence(
    theta_star: f64,
    c_r: f64,
    c_star: f64,
    family: &TruncationFamily,
    tau: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if !(theta_star > 0.0) || !(c_star > 0.0) || !(tau > 0.0) || !(c_r >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "comparison sequence needs θ_* > 0, c_* > 0, τ > 0, c_R ≥ 0 (got {theta_star}, {c_star}, {tau}, {c_r})"
        )));
    }
    let mut v = Vec::with_capacity(n + 1);
    v.push(theta_star);
    for _ in 0..n {
        let prev = *v.last().expect("non-empty");
        if c_r == 0.0 {
            v.push(prev);
            continue;
        }
        let e_prev = family.e1r(prev);
        let f = |x: f64| {
            (
                c_star * (family.e1r(x) - e_prev) + tau * c_r * x * x,
                c_star * family.c1r(x) + 2.0 * tau * c_r * x,
            )
        };
        let lo = 0.0;
        let f_lo = -c_star * e_prev;
        let f_hi = tau * c_r * prev * prev;
        if !(f_lo < 0.0) {
            return Err(Error::Bracketing(format!(
                "comparison sequence reached e1^R(v) = 0 at v = {prev}"
            )));
        }
        // The tolerance scales with e1^R(v_{k-1}) so tiny v keep full relative accuracy.
        let (x, _) = increasing_root(f, lo, prev, f_lo, f_hi, 1e-15 * c_star * e_prev);
        v.push(x);
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub lower_bound_ok: bool,
    /// First step with `min θ_k < v_k`.
    pub lower_bound_violation: Option<usize>,
    /// Smallest `min θ_k - v_k`.
    pub lower_bound_margin: f64,
    pub chi_in_range: bool,
    pub min_theta: f64,
    pub max_theta: f64,
    pub cutoff: f64,
    pub below_cutoff: bool,
    pub max_abs_u: f64,
    pub max_abs_u_dot: f64,
    pub max_abs_chi_dot: f64,
    /// `max |U| / (1 + B)`, `max |U̇| / (1 + B)`, `max |χ̇| / (1 + B + B² + |f1(B)|)`.
    pub envelope_ratios: [f64; 3],
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.lower_bound_ok && self.chi_in_range
    }
}

/// Checks `min θ_k >= v_k` and `χ ∈ [0, 1]`, and reports the a-priori envelopes.
pub fn bounds_monitor(problem: &Problem, traj: &Trajectory) -> Result<BoundsReport> {
    let n = traj.states.last().map(|s| s.step).unwrap_or(0);
    let model = &problem.model;
    let v = lower_bound_sequence(
        model.constants().theta_star,
        problem.c_r,
        model.bounds().c_low,
        &problem.family,
        problem.tau(),
        n,
    )?;
    let mut report = BoundsReport {
        lower_bound_ok: true,
        lower_bound_violation: None,
        lower_bound_margin: f64::INFINITY,
        chi_in_range: true,
        min_theta: f64::INFINITY,
        max_theta: f64::NEG_INFINITY,
        cutoff: problem.family.b(),
        below_cutoff: true,
        max_abs_u: 0.0,
        max_abs_u_dot: 0.0,
        max_abs_chi_dot: 0.0,
        envelope_ratios: [0.0; 3],
    };
    let tau = problem.tau();
    for (j, s) in traj.states.iter().enumerate() {
        let min = s.theta.iter().copied().fold(f64::INFINITY, f64::min);
        let max = s.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        report.min_theta = report.min_theta.min(min);
        report.max_theta = report.max_theta.max(max);
        let margin = min - v[s.step];
        report.lower_bound_margin = report.lower_bound_margin.min(margin);
        if margin < 0.0 && report.lower_bound_violation.is_none() {
            report.lower_bound_ok = false;
            report.lower_bound_violation = Some(s.step);
        }
        report.chi_in_range &= s.chi.iter().all(|z| (0.0..=1.0).contains(z));
        report.max_abs_u = s.u.iter().fold(report.max_abs_u, |m, x| m.max(x.abs()));
        if j > 0 {
            let p = &traj.states[j - 1];
            let dt = tau * (s.step - p.step) as f64;
            for i in 0..s.u.len() {
                report.max_abs_u_dot = report.max_abs_u_dot.max(((s.u[i] - p.u[i]) / dt).abs());
                report.max_abs_chi_dot =
                    report.max_abs_chi_dot.max(((s.chi[i] - p.chi[i]) / dt).abs());
            }
        }
    }
    let b = problem.family.b();
    report.below_cutoff = report.max_theta < b;
    report.envelope_ratios = [
        report.max_abs_u / (1.0 + b),
        report.max_abs_u_dot / (1.0 + b),
        report.max_abs_chi_dot / (1.0 + b + b * b + model.f1(b).abs()),
    ];
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleReport {
    pub chi_in_range: bool,
    /// Largest complementarity residual of the phase inclusion.
    pub max_complementarity: f64,
    /// Largest residual of the `U` equation, scaled by `τ`.
    pub max_u_residual: f64,
    /// `(step, cell)` of the worst complementarity residual.
    pub worst: Option<(usize, usize)>,
}

impl ObstacleReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.chi_in_range && self.max_complementarity <= tol && self.max_u_residual <= tol
    }
}

/// Re-evaluates both cell equations at every stored step, independently of the solver.
pub fn obstacle_check(problem: &Problem, traj: &Trajectory) -> ObstacleReport {
    let mut rep = ObstacleReport {
        chi_in_range: true,
        max_complementarity: 0.0,
        max_u_residual: 0.0,
        worst: None,
    };
    for k in 1..traj.states.len() {
        let (prev, cur, rec) = (&traj.states[k - 1], &traj.states[k], &traj.records[k]);
        let cells = cell_data(problem, prev, rec.p);
        for (i, c) in cells.iter().enumerate() {
            let (u, chi) = (cur.u[i], cur.chi[i]);
            rep.chi_in_range &= (0.0..=1.0).contains(&chi);
            let r = pair_map(c, u, chi, rec.coupling_u_omega, &problem.family, &problem.model);
            let comp = complementarity_residual(chi, r[1]);
            if comp > rep.max_complementarity {
                rep.max_complementarity = comp;
                rep.worst = Some((cur.step, i));
            }
            rep.max_u_residual = rep.max_u_residual.max((problem.tau() * r[0]).abs());
        }
    }
    rep
}

/// `(θ - a)(θ - b)/θ` and `(θ - √(ab))²/θ - (√b - √a)²`, which agree for positive arguments.
pub fn quadratic_identity(theta: f64, a: f64, b: f64) -> (f64, f64) {
    let lhs = (theta - a) * (theta - b) / theta;
    let rhs = (theta - (a * b).sqrt()).powi(2) / theta - (b.sqrt() - a.sqrt()).powi(2);
    (lhs, rhs)
}

/// One sample of the extended energy balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedEnergyRow {
    pub step: usize,
    pub time: f64,
    /// Field energy (without the `c_R` term) plus boundary energy.
    pub energy: f64,
    /// `θ̄_Γ ∫∫` production.
    pub weighted_dissipation: f64,
    /// `∫∫ h/θ (θ - θ_Γ)(θ - θ̄_Γ)`.
    pub boundary_term: f64,
    /// `E⁰ + E_Γ⁰ - θ̄_Γ S⁰ + θ̄_Γ S(t) + ∫ K P0_t (...)`.
    pub right_side: f64,
    /// Left side minus right side.
    pub residual: f64,
    /// `∫ (e1^R(θ) + U²) + ∫∫ production + ∫∫ h/θ (θ - √(θ̄_Γ θ_Γ))²`.
    pub bounded_combination: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedEnergyReport {
    pub theta_gamma_bar: f64,
    pub rows: Vec<ExtendedEnergyRow>,
    pub sup_combination: f64,
}

/// Default `θ̄_Γ`: time average of the boundary mean of `θ_Γ`, clipped to `[θ_*, θ*]`.
pub fn default_theta_gamma_bar(problem: &Problem, traj: &Trajectory) -> f64 {
    let measure = problem.grid.boundary_measure();
    let means: Vec<f64> = traj
        .records
        .iter()
        .map(|r| {
            let terms: Vec<f64> = problem
                .grid
                .boundary()
                .iter()
                .zip(&r.theta_gamma)
                .map(|(f, tg)| f.measure * tg)
                .collect();
            tree_sum(&terms) / measure
        })
        .collect();
    let avg = tree_sum(&means) / means.len() as f64;
    let k = problem.model.constants();
    avg.clamp(k.theta_star, k.theta_sup)
}

pub fn extended_energy_monitor(
    problem: &Problem,
    traj: &Trajectory,
    theta_gamma_bar: f64,
) -> ExtendedEnergyReport {
    let tau = problem.tau();
    let v = problem.grid.cell_volume();
    let k = problem.model.constants();
    let tb = theta_gamma_bar;
    let energy_of = |m: usize| {
        let s = &traj.states[m];
        let stab: Vec<f64> = s.theta.iter().map(|t| t * t.max(0.0)).collect();
        field_energy(problem, s) - problem.c_r * tau * integrate_unchecked(&problem.grid, &stab)
            + boundary_energy(problem, s.u_omega, traj.records[m].p)
    };
    let e0 = energy_of(0);
    let s0 = total_entropy(problem, &traj.states[0]);
    let mut dissipation = 0.0;
    let mut boundary = 0.0;
    let mut sqrt_boundary = 0.0;
    let mut pressure = 0.0;
    let mut rows = Vec::with_capacity(traj.states.len());
    for m in 0..traj.states.len() {
        let s = &traj.states[m];
        let rec = &traj.records[m];
        if m > 0 {
            let prev = &traj.states[m - 1];
            let (faces, cells) = production_terms(problem, prev, s);
            dissipation += tau * (tree_sum(&faces) + v * tree_sum(&cells));
            for (f, &tg) in problem.grid.boundary().iter().zip(&rec.theta_gamma) {
                let t = s.theta[f.cell];
                boundary += tau * f.h * f.measure * (t - tg) * (t - tb) / t;
                sqrt_boundary += tau * f.h * f.measure * (t - (tb * tg).sqrt()).powi(2) / t;
            }
            let dp = rec.p - traj.records[m - 1].p;
            pressure += dp * (k.k_gamma * (s.u_omega + rec.p) + k.g * k.zeta_gamma);
        }
        let energy = energy_of(m);
        let right = e0 - tb * s0 + tb * total_entropy(problem, s) + pressure;
        let left = energy + tb * dissipation + boundary;
        let density: Vec<f64> = (0..s.theta.len())
            .map(|i| problem.family.e1r(s.theta[i]) + s.u[i] * s.u[i])
            .collect();
        let combination =
            integrate_unchecked(&problem.grid, &density) + dissipation + sqrt_boundary;
        rows.push(ExtendedEnergyRow {
            step: s.step,
            time: s.time,
            energy,
            weighted_dissipation: tb * dissipation,
            boundary_term: boundary,
            right_side: right,
            residual: left - right,
            bounded_combination: combination,
        });
    }
    let sup = rows
        .iter()
        .map(|r| r.bounded_combination)
        .fold(f64::NEG_INFINITY, f64::max);
    ExtendedEnergyReport {
        theta_gamma_bar: tb,
        rows,
        sup_combination: sup,
    }
}
