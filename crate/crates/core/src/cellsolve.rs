//! Per-cell solve for the volume increment `U` and phase fraction `χ`.
//!
//! For fixed `χ` the `U` equation is affine, so `U` is eliminated exactly and
//! what remains is a scalar inclusion `F(χ) + ∂I(χ) ∋ 0` on `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_unchecked, Grid};
use crate::materials::{MaterialModel, TruncationFamily};
use crate::quadrature::increasing_root;

/// Residual tolerance of the scalar inclusion.
pub const INCLUSION_TOL: f64 = 1e-12;
/// Cells below which the per-cell loop stays sequential.
pub const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellData {
    pub theta_prev: f64,
    pub u_prev: f64,
    pub chi_prev: f64,
    pub x3: f64,
    pub tau: f64,
    /// `P0(kτ)`.
    pub p: f64,
}

impl CellData {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.theta_prev,
            self.u_prev,
            self.chi_prev,
            self.x3,
            self.tau,
            self.p,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput(format!("non-finite cell data {self:?}")));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidInput(format!("τ must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.chi_prev) {
            return Err(Error::InvalidInput(format!(
                "previous phase fraction {} outside [0, 1]",
                self.chi_prev
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActiveConstraint {
    Interior,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSolution {
    pub u: f64,
    pub chi: f64,
    pub active: ActiveConstraint,
    /// `F(χ)` at the solution.
    pub f_value: f64,
    /// Complementarity residual: `|F|` inside, `max(-F, 0)` at 0, `max(F, 0)` at 1.
    pub residual: f64,
}

/// Complementarity residual of `F` at `χ`.
pub fn complementarity_residual(chi: f64, f: f64) -> f64 {
    if chi <= 0.0 {
        (-f).max(0.0)
    } else if chi >= 1.0 {
        f.max(0.0)
    } else {
        f.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingTerms {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// The coupling terms `A_k`, `B_k`, `C_k` at one cell.
#[allow(clippy::too_many_arguments)]
pub fn coupling_terms(
    u: f64,
    chi: f64,
    chi_prev: f64,
    theta_prev: f64,
    x3: f64,
    u_omega: f64,
    p: f64,
    family: &TruncationFamily,
    model: &MaterialModel,
) -> CouplingTerms {
    let k = model.constants();
    let s = u - 1.0 + chi;
    let lp = model.lambda(chi_prev);
    CouplingTerms {
        a: lp * s + k.k_gamma * (u_omega + p) + k.g * (k.zeta_gamma - x3) + 1.0,
        b: model.c_prime(chi) * (family.f1r(theta_prev) - model.f1_critical())
            - 2.0 * family.qr(theta_prev),
        c: 0.5 * model.lambda_prime(chi) * s * s + lp * s + 2.0,
    }
}

/// Solves `F(χ) + ∂I(χ) ∋ 0` on `[0, 1]` for increasing `F` returning `(F, F')`.
pub fn solve_scalar_inclusion<F: Fn(f64) -> (f64, f64)>(f: F) -> Result<(f64, ActiveConstraint, f64)> {
    let (f0, _) = f(0.0);
    let (f1, _) = f(1.0);
    if !f0.is_finite() || !f1.is_finite() {
        return Err(Error::InvalidInput(format!(
            "inclusion residual not finite at the endpoints ({f0}, {f1})"
        )));
    }
    if f0 >= 0.0 && f1 < 0.0 {
        return Err(Error::TauTooLarge(format!(
            "phase residual decreases on [0, 1]: F(0) = {f0:.6e}, F(1) = {f1:.6e}"
        )));
    }
    if f0 >= 0.0 {
        return Ok((0.0, ActiveConstraint::Lower, f0));
    }
    if f1 <= 0.0 {
        return Ok((1.0, ActiveConstraint::Upper, f1));
    }
    let (x, fx) = increasing_root(&f, 0.0, 1.0, f0, f1, INCLUSION_TOL);
    Ok((x, ActiveConstraint::Interior, fx))
}

/// Cell quantities that do not depend on `χ` or `U_Ω`.
#[derive(Debug, Clone, Copy)]
struct Frozen {
    gamma_tau: f64,
    chi_prev: f64,
    lp: f64,
    df: f64,
    q: f64,
    denom: f64,
    /// Numerator of `U(χ)` without the `U_Ω` and `χ` parts.
    base: f64,
    k_gamma: f64,
    p: f64,
}

impl Frozen {
    fn new(cell: &CellData, family: &TruncationFamily, model: &MaterialModel) -> Self {
        let k = model.constants();
        let lp = model.lambda(cell.chi_prev);
        let q = family.qr(cell.theta_prev);
        Self {
            gamma_tau: model.gamma(cell.theta_prev) / cell.tau,
            chi_prev: cell.chi_prev,
            lp,
            df: family.f1r(cell.theta_prev) - model.f1_critical(),
            q,
            denom: 1.0 / cell.tau + lp,
            base: cell.u_prev / cell.tau + q + lp - k.g * (k.zeta_gamma - cell.x3) - 1.0,
            k_gamma: k.k_gamma,
            p: cell.p,
        }
    }

    fn u(&self, chi: f64, m: f64) -> f64 {
        (self.base - self.k_gamma * (m + self.p) - self.lp * chi) / self.denom
    }

    fn residual(&self, chi: f64, m: f64, model: &MaterialModel) -> (f64, f64) {
        let s = self.u(chi, m) - 1.0 + chi;
        let ds = 1.0 - self.lp / self.denom;
        let lprime = model.lambda_prime(chi);
        let f = self.gamma_tau * (chi - self.chi_prev) + model.c_prime(chi) * self.df
            - 2.0 * self.q
            + 0.5 * lprime * s * s
            + self.lp * s
            + 2.0;
        let df = self.gamma_tau
            + model.c_second(chi) * self.df
            + 0.5 * model.lambda_second(chi) * s * s
            + (lprime * s + self.lp) * ds;
        (f, df)
    }

    /// Sufficient condition for `F` to be increasing on `[0, 1]`.
    fn check_monotone(&self, m: f64, model: &MaterialModel) -> Result<()> {
        let s_max = (self.u(0.0, m) - 1.0)
            .abs()
            .max(self.u(1.0, m).abs());
        let ds = 1.0 - self.lp / self.denom;
        let lipschitz =
            model.c_second_max() * self.df.abs() + model.bounds().lambda_prime_max * s_max * ds;
        if self.gamma_tau > 2.0 * lipschitz {
            Ok(())
        } else {
            Err(Error::TauTooLarge(format!(
                "γ/τ = {:.4e} does not dominate twice the phase-coupling Lipschitz bound {:.4e}",
                self.gamma_tau, lipschitz
            )))
        }
    }

    fn solve(&self, m: f64, model: &MaterialModel) -> Result<CellSolution> {
        self.check_monotone(m, model)?;
        let (chi, active, f_value) = solve_scalar_inclusion(|x| self.residual(x, m, model))?;
        Ok(CellSolution {
            u: self.u(chi, m),
            chi,
            active,
            f_value,
            residual: complementarity_residual(chi, f_value),
        })
    }
}

/// Solves one cell for a given volume integral `u_omega`.
pub fn solve_cell(
    cell: &CellData,
    u_omega: f64,
    family: &TruncationFamily,
    model: &MaterialModel,
) -> Result<CellSolution> {
    cell.validate()?;
    Frozen::new(cell, family, model).solve(u_omega, model)
}

/// Residual of the inclusion at an arbitrary `(U, χ)`, without eliminating `U`.
///
/// Returns `[(U - U_prev)/τ - Q + A, γ (χ - χ_prev)/τ + B + C]`.
pub fn pair_map(
    cell: &CellData,
    u: f64,
    chi: f64,
    u_omega: f64,
    family: &TruncationFamily,
    model: &MaterialModel,
) -> [f64; 2] {
    let t = coupling_terms(
        u,
        chi,
        cell.chi_prev,
        cell.theta_prev,
        cell.x3,
        u_omega,
        cell.p,
        family,
        model,
    );
    [
        (u - cell.u_prev) / cell.tau - family.qr(cell.theta_prev) + t.a,
        model.gamma(cell.theta_prev) * (chi - cell.chi_prev) / cell.tau + t.b + t.c,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeCoupling {
    /// `U_Ω` solved together with the cells.
    #[default]
    Implicit,
    /// `U_Ω` lagged by one step.
    Explicit,
}

#[derive(Debug, Clone)]
pub struct VolumeSolution {
    /// The `U_Ω` used in the cell solves.
    pub u_omega: f64,
    pub solutions: Vec<CellSolution>,
    pub iterations: usize,
}

fn solve_all(frozen: &[Frozen], m: f64, model: &MaterialModel) -> Result<Vec<CellSolution>> {
    if frozen.len() >= PARALLEL_THRESHOLD {
        frozen.par_iter().map(|f| f.solve(m, model)).collect()
    } else {
        frozen.iter().map(|f| f.solve(m, model)).collect()
    }
}

fn integral(grid: &Grid, sol: &[CellSolution]) -> f64 {
    let u: Vec<f64> = sol.iter().map(|s| s.u).collect();
    integrate_unchecked(grid, &u)
}

/// Solves all cells together with the scalar `U_Ω = ∫U dx`.
///
/// `guess` is the starting value (the previous `U_Ω`); in explicit mode it is
/// used as is.
pub fn solve_volume_coupling(
    cells: &[CellData],
    guess: f64,
    grid: &Grid,
    family: &TruncationFamily,
    model: &MaterialModel,
    mode: VolumeCoupling,
) -> Result<VolumeSolution> {
    if cells.len() != grid.len() {
        return Err(Error::SizeMismatch {
            expected: grid.len(),
            found: cells.len(),
        });
    }
    for c in cells {
        c.validate()?;
    }
    let k_gamma = model.constants().k_gamma;
    if k_gamma < 0.0 {
        return Err(Error::InvalidInput("K_Γ must be non-negative".into()));
    }
    let frozen: Vec<Frozen> = cells.iter().map(|c| Frozen::new(c, family, model)).collect();
    let m0 = if guess.is_finite() { guess } else { 0.0 };
    let first = solve_all(&frozen, m0, model)?;
    if mode == VolumeCoupling::Explicit {
        return Ok(VolumeSolution {
            u_omega: m0,
            solutions: first,
            iterations: 1,
        });
    }
    let i0 = integral(grid, &first);
    if k_gamma == 0.0 {
        // U does not depend on U_Ω; one pass gives the fixed point.
        return Ok(VolumeSolution {
            u_omega: i0,
            solutions: first,
            iterations: 1,
        });
    }
    let tol = 1e-11 * grid.measure();
    let psi0 = i0 - m0;
    if psi0.abs() <= tol {
        return Ok(VolumeSolution {
            u_omega: m0,
            solutions: first,
            iterations: 1,
        });
    }
    // I(m) is non-increasing, so the root lies between m0 and I(m0).
    let m1 = i0;
    let sol1 = solve_all(&frozen, m1, model)?;
    let psi1 = integral(grid, &sol1) - m1;
    if psi1.abs() <= tol {
        return Ok(VolumeSolution {
            u_omega: m1,
            solutions: sol1,
            iterations: 2,
        });
    }
    if psi0.signum() == psi1.signum() {
        return Err(Error::Bracketing(format!(
            "volume residual keeps its sign on [{m0:.6e}, {m1:.6e}] ({psi0:.3e}, {psi1:.3e})"
        )));
    }
    // Illinois regula falsi on the bracket (a, fa) / (b, fb).
    let (mut a, mut fa, mut b, mut fb) = (m0, psi0, m1, psi1);
    let mut side = 0i8;
    let mut best = if psi0.abs() < psi1.abs() {
        (m0, first, psi0)
    } else {
        (m1, sol1, psi1)
    };
    for it in 3..200 {
        let m = (a * fb - b * fa) / (fb - fa);
        let m = if m.is_finite() && (m - a) * (m - b) <= 0.0 {
            m
        } else {
            0.5 * (a + b)
        };
        let sol = solve_all(&frozen, m, model)?;
        let psi = integral(grid, &sol) - m;
        if psi.abs() < best.2.abs() {
            best = (m, sol, psi);
        }
        if psi.abs() <= tol || m == a || m == b {
            return Ok(VolumeSolution {
                u_omega: best.0,
                solutions: best.1,
                iterations: it,
            });
        }
        if psi.signum() == fb.signum() {
            b = m;
            fb = psi;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = m;
            fa = psi;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::Bracketing(format!(
        "volume coupling did not converge: best residual {:.3e}",
        best.2
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::ModelConstants;
    use proptest::prelude::*;

    fn setup(k_gamma: f64, g: f64) -> (MaterialModel, TruncationFamily) {
        let m = MaterialModel::reference()
            .with_constants(ModelConstants {
                k_gamma,
                g,
                zeta_gamma: 0.5,
                theta_star: 0.5,
                theta_sup: 1.0,
                ..Default::default()
            })
            .unwrap();
        let f = m.truncate(4.0).unwrap();
        (m, f)
    }

    fn cell(theta_prev: f64, u_prev: f64, chi_prev: f64, tau: f64) -> CellData {
        CellData {
            theta_prev,
            u_prev,
            chi_prev,
            x3: 0.3,
            tau,
            p: 0.0,
        }
    }

    #[test]
    fn coupling_at_equilibrium() {
        let (m, f) = setup(0.0, 0.0);
        let t = coupling_terms(0.0, 1.0, 1.0, 1.0, 0.2, 0.0, 0.0, &f, &m);
        assert_eq!((t.a, t.b, t.c), (1.0, -2.0, 2.0));
        let t = coupling_terms(0.0, 1.0, 1.0, -1.0, 0.2, 0.0, 0.0, &f, &m);
        assert_eq!(t.b, 1.0 * (0.0 - m.f1(1.0)));
    }

    #[test]
    fn constant_lambda_gives_two() {
        let mut d = crate::materials::MaterialDefinition::reference();
        d.name = "flat".into();
        d.lambda = crate::materials::Polynomial::constant(1.5);
        let m = MaterialModel::new(d, ModelConstants::default()).unwrap();
        let f = m.truncate(4.0).unwrap();
        let t = coupling_terms(0.4, 0.6, 0.2, 1.3, 0.0, 0.0, 0.0, &f, &m);
        assert_eq!(t.c, 2.0);
    }

    #[test]
    fn scalar_inclusion_examples() {
        let r = solve_scalar_inclusion(|x| (x - 0.5, 1.0)).unwrap();
        assert!((r.0 - 0.5).abs() < 1e-12);
        assert_eq!(r.1, ActiveConstraint::Interior);
        let r = solve_scalar_inclusion(|x| (x + 1.0, 1.0)).unwrap();
        assert_eq!((r.0, r.1), (0.0, ActiveConstraint::Lower));
        let r = solve_scalar_inclusion(|x| (x - 2.0, 1.0)).unwrap();
        assert_eq!((r.0, r.1), (1.0, ActiveConstraint::Upper));
        assert!(matches!(
            solve_scalar_inclusion(|x| (0.5 - 2.0 * x, -2.0)),
            Err(Error::TauTooLarge(_))
        ));
    }

    #[test]
    fn stationary_liquid() {
        let (m, f) = setup(0.0, 0.0);
        let s = solve_cell(&cell(1.0, 0.0, 1.0, 1e-3), 0.0, &f, &m).unwrap();
        assert_eq!((s.u, s.chi), (0.0, 1.0));
        assert_eq!(s.active, ActiveConstraint::Upper);
    }

    #[test]
    fn cold_ice_stays_ice() {
        let (m, f) = setup(0.0, 0.0);
        let s = solve_cell(&cell(0.5, 1.0, 0.0, 0.01), 0.0, &f, &m).unwrap();
        assert_eq!(s.chi, 0.0);
        assert_eq!(s.active, ActiveConstraint::Lower);
        assert!((s.f_value - 1.365).abs() < 1e-3, "{}", s.f_value);
        assert!((s.u - (1.0 - 0.005 / 1.02)).abs() < 1e-12);
    }

    #[test]
    fn single_cell_volume_coupling_matches_scalar_root() {
        let (m, f) = setup(0.8, 0.1);
        let grid = Grid::slab(1.0, 1, 1.0, 1.0).unwrap();
        let c = CellData {
            theta_prev: 0.9,
            u_prev: 0.2,
            chi_prev: 0.6,
            x3: 0.5,
            tau: 0.05,
            p: 0.03,
        };
        let v = solve_volume_coupling(&[c], 0.0, &grid, &f, &m, VolumeCoupling::Implicit).unwrap();
        // Direct bisection on m - U[m].
        let g = |x: f64| solve_cell(&c, x, &f, &m).unwrap().u - x;
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((v.u_omega - lo).abs() < 1e-10, "{} {}", v.u_omega, lo);
        assert!((v.solutions[0].u - v.u_omega).abs() < 1e-10);
    }

    #[test]
    fn inert_coupling_takes_one_pass() {
        let (m, f) = setup(0.0, 0.0);
        let grid = Grid::slab(1.0, 3, 1.0, 1.0).unwrap();
        let cells = [cell(0.9, 0.1, 0.5, 0.01), cell(1.1, 0.0, 0.2, 0.01), cell(1.0, -0.1, 1.0, 0.01)];
        let v = solve_volume_coupling(&cells, 7.0, &grid, &f, &m, VolumeCoupling::Implicit).unwrap();
        let sum: f64 = v.solutions.iter().map(|s| s.u).sum::<f64>() / 3.0;
        assert_eq!(v.iterations, 1);
        assert!((v.u_omega - sum).abs() < 1e-14);
    }

    #[test]
    fn oversized_step_is_refused() {
        let (m, f) = setup(0.0, 0.0);
        let r = solve_cell(&cell(0.9, 30.0, 0.5, 10.0), 0.0, &f, &m);
        assert!(matches!(r, Err(Error::TauTooLarge(_))));
    }

    proptest! {
        #[test]
        fn psi_is_decreasing(
            thetas in prop::collection::vec(0.2..3.0f64, 5),
            us in prop::collection::vec(-1.0..1.0f64, 5),
            chis in prop::collection::vec(0.0..=1.0f64, 5),
            m1 in -2.0..2.0f64,
            dm in 0.01..1.0f64,
        ) {
            let (m, f) = setup(0.7, 0.1);
            let grid = Grid::slab(1.0, 5, 1.0, 1.0).unwrap();
            let cells: Vec<CellData> = (0..5).map(|i| CellData {
                theta_prev: thetas[i], u_prev: us[i], chi_prev: chis[i], x3: grid.x3(i), tau: 0.01, p: 0.02,
            }).collect();
            let psi = |x: f64| {
                let u: Vec<f64> = cells.iter().map(|c| solve_cell(c, x, &f, &m).unwrap().u).collect();
                integrate_unchecked(&grid, &u) - x
            };
            prop_assert!(psi(m1) > psi(m1 + dm));
        }

        #[test]
        fn solution_satisfies_both_equations(
            theta in 0.05..5.0f64, u in -1.0..1.0f64, chi in 0.0..=1.0f64,
            tau in 1e-4..0.05f64, om in -1.0..1.0f64,
        ) {
            let (m, f) = setup(0.5, 0.1);
            let c = CellData { theta_prev: theta, u_prev: u, chi_prev: chi, x3: 0.4, tau, p: 0.01 };
            let s = solve_cell(&c, om, &f, &m).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.chi));
            let r = pair_map(&c, s.u, s.chi, om, &f, &m);
            prop_assert!(r[0].abs() < 1e-9 / tau);
            prop_assert!(complementarity_residual(s.chi, r[1]) < 1e-9);
        }
    }
}
