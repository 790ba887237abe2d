use serde::Serialize;

use super::{temperature_grid, MaterialModel};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct ClauseResult {
    pub clause: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub material: String,
    pub samples: usize,
    pub clauses: Vec<ClauseResult>,
    /// Growth of `c1(θ)/θ` at large θ. Reported only; it cannot be decided by sampling.
    pub growth_heuristic: ClauseResult,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, name: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.clause == name)
    }
}

struct Clause {
    name: &'static str,
    failures: Vec<String>,
}

impl Clause {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            failures: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok && self.failures.len() < 4 {
            self.failures.push(what());
        }
    }

    fn finish(self) -> ClauseResult {
        ClauseResult {
            clause: self.name.into(),
            passed: self.failures.is_empty(),
            detail: if self.failures.is_empty() {
                "ok".into()
            } else {
                self.failures.join("; ")
            },
        }
    }
}

/// Checks the constitutive hypotheses (i)-(vi) by finite-difference sampling.
///
/// Phase functions are sampled uniformly on `[0, 1]`, temperature functions on a
/// log grid. `samples` below 100 is raised to 100.
pub fn validate_hypothesis(model: &MaterialModel, samples: usize) -> ValidationReport {
    let n = samples.max(100);
    let b = *model.bounds();
    let delta = 1.0 / n as f64;
    let zs: Vec<f64> = (0..n).map(|i| i as f64 * delta).collect();

    let mut i = Clause::new("i");
    i.require(b.c_low > 0.0, || format!("min c = {} not positive", b.c_low));
    i.require(b.cprime_low > 0.0, || {
        format!("min c' = {} not positive", b.cprime_low)
    });
    for &z in &zs {
        let slope = (model.c(z + delta) - model.c(z)) / delta;
        // The secant slope may exceed the sampled derivative range by O(delta).
        let slack = delta * model.c_second_max() + TOL;
        i.require(
            slope >= b.cprime_low - slack && slope <= b.cprime_high + slack,
            || format!("secant slope {slope:.4} at z = {z:.4} outside [c̲, c̄]"),
        );
        i.require(slope > 0.0, || format!("c decreasing at z = {z:.4}"));
        if z + 2.0 * delta <= 1.0 + 1e-12 {
            let second = model.c(z + 2.0 * delta) - 2.0 * model.c(z + delta) + model.c(z);
            i.require(second >= -TOL, || format!("c not convex at z = {z:.4}"));
        }
    }

    let mut ii = Clause::new("ii");
    let law = model.heat().law();
    let breaks = law.breaks();
    for (j, &x) in breaks.iter().enumerate().skip(1) {
        let left = law.pieces()[j - 1].eval(x);
        let right = law.pieces()[j].eval(x);
        ii.require((left - right).abs() <= TOL * (1.0 + left.abs()), || {
            format!("c1 jumps at θ = {x}: {left} vs {right}")
        });
    }
    let first = law.pieces()[0].coeffs();
    ii.require(first[0] == 0.0, || {
        "c1(0) ≠ 0, so ∫₀¹ c1(r)/r dr diverges".into()
    });
    ii.require(first.get(1).copied().unwrap_or(0.0) != 0.0 || first[0] != 0.0, || {
        "c1 vanishes to second order at 0, so ∫₀¹ c1(r)/r² dr is finite".into()
    });
    ii.require(b.c1_low > 0.0, || {
        format!("min c1 on θ ≥ 1 is {} (needs c* > 0)", b.c1_low)
    });
    let thetas = temperature_grid(1e-6, 1e3, n.max(200), breaks);
    for &t in &thetas {
        ii.require(model.c1(t) >= 0.0, || format!("c1({t:.3e}) < 0"));
    }

    let mut iii = Clause::new("iii");
    iii.require(b.lambda_low > 0.0, || {
        format!("min λ = {} not positive", b.lambda_low)
    });
    for &z in &zs {
        let slope = (model.lambda(z + delta) - model.lambda(z)) / delta;
        let slack = delta * model.lambda_second_max() + TOL;
        iii.require(slope <= TOL, || {
            format!("λ increasing at z = {z:.4} (slope {slope:.4})")
        });
        iii.require(slope >= -b.lambda_prime_max - slack, || {
            format!("λ slope {slope:.4} below -λ* at z = {z:.4}")
        });
        if z + 2.0 * delta <= 1.0 + 1e-12 {
            let second =
                model.lambda(z + 2.0 * delta) - 2.0 * model.lambda(z + delta) + model.lambda(z);
            iii.require(second >= -TOL, || format!("λ not convex at z = {z:.4}"));
        }
    }

    let mut iv = Clause::new("iv");
    iv.require(b.kappa_low > 0.0, || {
        format!("min κ = {} not positive", b.kappa_low)
    });

    let mut v = Clause::new("v");
    v.require(model.h() >= 0.0 && model.h().is_finite(), || {
        format!("h = {} must be finite and non-negative", model.h())
    });

    let mut vi = Clause::new("vi");
    vi.require(b.gamma_low > 0.0, || {
        format!("min γ = {} not positive", b.gamma_low)
    });
    let gamma = &model.definition().gamma;
    for (j, &x) in gamma.breaks().iter().enumerate().skip(1) {
        let left = gamma.pieces()[j - 1].eval(x);
        let right = gamma.pieces()[j].eval(x);
        vi.require((left - right).abs() <= TOL * (1.0 + left.abs()), || {
            format!("γ jumps at θ = {x}")
        });
    }
    for &t in &thetas {
        vi.require(model.gamma(t) >= b.gamma_low - TOL, || {
            format!("γ({t:.3e}) below γ_*")
        });
    }

    // c1(θ)/θ should keep increasing far out; test the last decade of the grid.
    let tail: Vec<f64> = thetas.iter().copied().filter(|&t| t >= 1e2).collect();
    let increasing = tail
        .windows(2)
        .all(|w| model.c1(w[1]) / w[1] >= model.c1(w[0]) / w[0] - TOL);
    let growth_heuristic = ClauseResult {
        clause: "ii-growth".into(),
        passed: increasing,
        detail: format!(
            "c1(θ)/θ from {:.3e} at θ = 1e2 to {:.3e} at θ = 1e3{}",
            model.c1(1e2) / 1e2,
            model.c1(1e3) / 1e3,
            if increasing { "" } else { " (not increasing)" }
        ),
    };

    ValidationReport {
        material: model.name().into(),
        samples: n,
        clauses: vec![
            i.finish(),
            ii.finish(),
            iii.finish(),
            iv.finish(),
            v.finish(),
            vi.finish(),
        ],
        growth_heuristic,
    }
}
