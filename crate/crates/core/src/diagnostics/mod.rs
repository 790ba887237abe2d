//! Post-hoc checks on trajectories: ledgers, bounds, and the numerical studies.

mod bounds;
mod energy;
mod entropy;
mod studies;

pub use bounds::{
    bounds_monitor, default_theta_gamma_bar, extended_energy_monitor, lower_bound_sequence,
    obstacle_check, quadratic_identity, BoundsReport, ExtendedEnergyReport, ExtendedEnergyRow,
    ObstacleReport,
};
pub use energy::{boundary_energy, energy_ledger, field_energy, EnergyReport, EnergyRow, ENERGY_TOL};
pub use entropy::{entropy_ledger, production_terms, total_entropy, EntropyReport, EntropyRow};
pub use studies::{
    perturbation_experiment, tau_convergence_study, truncation_study, PerturbSample, PerturbStudy,
    PerturbTargets, TauStudy, TruncationStudy, PERTURB_SPREAD_TOL, TAU_RATIO_TOL, TRUNCATION_TOL,
};
