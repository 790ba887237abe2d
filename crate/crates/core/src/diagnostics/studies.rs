use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_unchecked, TimeTable};
use crate::quadrature::tree_sum;
use crate::stepper::{compute_c_r, run, Problem, SimState, Trajectory};

/// Largest accepted `d_{j+1}/d_j`.
pub const TAU_RATIO_TOL: f64 = 0.67;
/// Largest accepted `max Q / min Q`.
pub const PERTURB_SPREAD_TOL: f64 = 10.0;
/// Largest accepted sup-norm gap between the `R` and `2R` runs.
pub const TRUNCATION_TOL: f64 = 1e-8;

fn squared_gap(problem: &Problem, a: &SimState, b: &SimState) -> f64 {
    let d: Vec<f64> = (0..a.theta.len())
        .map(|i| {
            (a.theta[i] - b.theta[i]).powi(2)
                + (a.u[i] - b.u[i]).powi(2)
                + (a.chi[i] - b.chi[i]).powi(2)
        })
        .collect();
    integrate_unchecked(&problem.grid, &d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauStudy {
    pub taus: Vec<f64>,
    /// `d_j`: discrete `L²(Ω_T)` distance between the `τ/2^j` and `τ/2^{j+1}` runs.
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `Σ_k |r_k|` of the entropy balance per level.
    pub entropy_residuals: Vec<f64>,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
    pub passed: bool,
}

/// Runs `levels + 1` step sizes `τ, τ/2, ...` and compares consecutive levels at the
/// coarse time points.
pub fn tau_convergence_study(problem: &Problem, levels: usize) -> Result<TauStudy> {
    if levels < 3 {
        return Err(Error::InvalidInput(format!("τ study needs at least 3 levels, got {levels}")));
    }
    let problems = (0..=levels)
        .map(|j| problem.with_tau(problem.tau() / 2f64.powi(j as i32)))
        .collect::<Result<Vec<_>>>()?;
    let trajectories = problems
        .par_iter()
        .map(run)
        .collect::<Result<Vec<_>>>()?;
    let mut distances = Vec::with_capacity(levels);
    for j in 0..levels {
        let (coarse, fine) = (&trajectories[j], &trajectories[j + 1]);
        let gaps: Vec<f64> = (1..coarse.states.len())
            .map(|k| squared_gap(problem, &coarse.states[k], &fine.states[2 * k]))
            .collect();
        distances.push((problems[j].tau() * tree_sum(&gaps)).sqrt());
    }
    let ratios: Vec<f64> = distances.windows(2).map(|w| w[1] / w[0]).collect();
    let entropy_residuals = problems
        .iter()
        .zip(&trajectories)
        .map(|(p, t)| super::entropy_ledger(p, t).total_residual)
        .collect();
    let all_zero = distances.iter().all(|&d| d == 0.0);
    let passed = all_zero || ratios.iter().all(|&r| r <= TAU_RATIO_TOL);
    Ok(TauStudy {
        taus: problems.iter().map(|p| p.tau()).collect(),
        distances,
        ratios,
        entropy_residuals,
        trajectories,
        passed,
    })
}

/// Which data the perturbation experiment touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbTargets {
    pub theta0: bool,
    pub chi0: bool,
    pub u0: bool,
    pub p0: bool,
    pub theta_gamma: bool,
}

impl PerturbTargets {
    pub const ALL: Self = Self {
        theta0: true,
        chi0: true,
        u0: true,
        p0: true,
        theta_gamma: true,
    };
    pub const THETA_GAMMA: Self = Self {
        theta0: false,
        chi0: false,
        u0: false,
        p0: false,
        theta_gamma: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSample {
    pub delta: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// `numerator / denominator`; NaN if the perturbation is invisible to the denominator.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbStudy {
    pub samples: Vec<PerturbSample>,
    /// `max Q / min Q` over the finite samples.
    pub spread: f64,
    pub passed: bool,
}

fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn scale_to(values: &mut [f64], norm_sq: f64, delta: f64) {
    if norm_sq > 0.0 {
        let s = delta / norm_sq.sqrt();
        values.iter_mut().for_each(|v| *v *= s);
    }
}

fn perturbed(problem: &Problem, targets: PerturbTargets, delta: f64, seed: u64) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = &problem.grid;
    let n = grid.len();
    let init = &problem.initial;
    let field = |rng: &mut ChaCha8Rng, on: bool| {
        let mut d = if on { unit_direction(rng, n) } else { vec![0.0; n] };
        let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
        scale_to(&mut d, integrate_unchecked(grid, &sq), delta);
        d
    };
    let dtheta = field(&mut rng, targets.theta0);
    // The phase moves only into the admissible set.
    let mut dchi = field(&mut rng, targets.chi0);
    for (d, z) in dchi.iter_mut().zip(&init.chi) {
        *d = if *z >= 0.5 { -d.abs() } else { d.abs() };
    }
    let du = field(&mut rng, targets.u0);
    let theta: Vec<f64> = init.theta.iter().zip(&dtheta).map(|(a, b)| a + b).collect();
    let chi: Vec<f64> = init.chi.iter().zip(&dchi).map(|(a, b)| a + b).collect();
    let u: Vec<f64> = init.u.iter().zip(&du).map(|(a, b)| a + b).collect();
    if theta.iter().any(|&t| t <= 0.0) || chi.iter().any(|z| !(0.0..=1.0).contains(z)) {
        return Err(Error::InvalidInput(format!(
            "perturbation δ = {delta} leaves the admissible initial set"
        )));
    }
    let t = problem.t_final();
    let mut boundary = problem.boundary.clone();
    if targets.p0 {
        let dir: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        boundary.p0 = boundary.p0.shifted(dir * delta / t.sqrt());
    }
    if targets.theta_gamma {
        let faces = grid.boundary();
        let mut d = unit_direction(&mut rng, faces.len());
        let weighted: f64 = faces.iter().zip(&d).map(|(f, x)| f.h * f.measure * x * x).sum();
        let plain: f64 = faces.iter().zip(&d).map(|(f, x)| f.measure * x * x).sum();
        scale_to(&mut d, t * if weighted > 0.0 { weighted } else { plain }, delta);
        boundary.theta_gamma = boundary
            .theta_gamma
            .iter()
            .zip(&d)
            .map(|(tab, s): (&TimeTable, _)| tab.shifted(*s))
            .collect();
    }
    let initial = SimState::initial(grid, theta, u, chi)?;
    Problem::new(
        grid.clone(),
        problem.model.clone(),
        problem.config,
        boundary,
        initial,
        t,
    )
}

fn perturbation_quotient(problem: &Problem, base: &Trajectory, other: &Trajectory) -> (f64, f64) {
    let tau = problem.tau();
    let grid = &problem.grid;
    let sq = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).collect();
        integrate_unchecked(grid, &d)
    };
    let mut theta_sum = 0.0;
    let mut sup = 0.0f64;
    for (k, (a, b)) in base.states.iter().zip(&other.states).enumerate() {
        if k > 0 {
            theta_sum += tau * sq(&a.theta, &b.theta);
        }
        sup = sup.max(sq(&a.chi, &b.chi) + sq(&a.u, &b.u));
    }
    let (a0, b0) = (&base.states[0], &other.states[0]);
    let mut den = sq(&a0.theta, &b0.theta) + sq(&a0.chi, &b0.chi) + sq(&a0.u, &b0.u);
    for k in 1..base.records.len() {
        let (ra, rb) = (&base.records[k], &other.records[k]);
        den += tau * (ra.p - rb.p).powi(2);
        for ((f, x), y) in grid.boundary().iter().zip(&ra.theta_gamma).zip(&rb.theta_gamma) {
            den += tau * f.h * f.measure * (x - y).powi(2);
        }
    }
    (theta_sum + sup, den)
}

/// Continuous-dependence experiment: runs the base problem and one perturbed copy per `δ`.
///
/// Refuses materials with temperature- or phase-dependent conductivity.
pub fn perturbation_experiment(
    problem: &Problem,
    deltas: &[f64],
    targets: PerturbTargets,
    seed: u64,
) -> Result<PerturbStudy> {
    if !problem.model.kappa_is_constant() {
        return Err(Error::config(
            "material.kappa",
            "the perturbation experiment needs a constant conductivity",
        ));
    }
    let base = run(problem)?;
    let samples = deltas
        .par_iter()
        .map(|&delta| {
            let p = perturbed(problem, targets, delta, seed)?;
            let traj = run(&p)?;
            let (numerator, denominator) = perturbation_quotient(problem, &base, &traj);
            let q = if denominator > 0.0 { numerator / denominator } else { f64::NAN };
            Ok(PerturbSample {
                delta,
                numerator,
                denominator,
                q,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let finite: Vec<f64> = samples.iter().map(|s| s.q).filter(|q| q.is_finite()).collect();
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if finite.is_empty() { f64::NAN } else { max / min };
    Ok(PerturbStudy {
        passed: spread <= PERTURB_SPREAD_TOL,
        samples,
        spread,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationStudy {
    pub r: f64,
    pub cutoff: f64,
    pub c_r: f64,
    /// Sup-norm gap over all steps, cells, and fields.
    pub sup_difference: f64,
    pub max_theta: f64,
    pub passed: bool,
}

/// Compares the runs at `R` and `2R` with a common `c_R`: the configured one, or the larger
/// of the two computed values.
pub fn truncation_study(problem: &Problem) -> Result<TruncationStudy> {
    let r = problem.config.r;
    let c_r = match problem.config.c_r {
        Some(c) => c,
        None => {
            let wide = problem.model.truncate(2.0 * r)?;
            problem.c_r.max(compute_c_r(&wide, &problem.model))
        }
    };
    let narrow = problem.with_truncation(r, Some(c_r))?;
    let wide = problem.with_truncation(2.0 * r, Some(c_r))?;
    let runs = [&narrow, &wide]
        .par_iter()
        .map(|p| run(p))
        .collect::<Result<Vec<_>>>()?;
    let mut sup = 0.0f64;
    let mut max_theta = f64::NEG_INFINITY;
    for (a, b) in runs[0].states.iter().zip(&runs[1].states) {
        for i in 0..a.theta.len() {
            sup = sup
                .max((a.theta[i] - b.theta[i]).abs())
                .max((a.u[i] - b.u[i]).abs())
                .max((a.chi[i] - b.chi[i]).abs());
            max_theta = max_theta.max(a.theta[i]).max(b.theta[i]);
        }
    }
    let cutoff = narrow.family.b();
    Ok(TruncationStudy {
        r,
        cutoff,
        c_r,
        sup_difference: sup,
        max_theta,
        passed: sup <= TRUNCATION_TOL && max_theta < cutoff,
    })
}
