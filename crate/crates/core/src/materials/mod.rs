//! Constitutive laws, caloric integrals, truncation and hypothesis checks.

mod caloric;
mod polynomial;
mod truncation;
mod validation;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use caloric::{CaloricEvaluation, SpecificHeat};
pub use polynomial::{PiecewisePolynomial, Polynomial};
pub use truncation::{cutoff, truncate_family, TruncationFamily};
pub use validation::{validate_hypothesis, ClauseResult, ValidationReport};

use crate::error::{Error, Result};

/// Serializable description of a material: phase laws as polynomials in `χ`,
/// temperature laws as piecewise polynomials on `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialDefinition {
    pub name: String,
    pub c: Polynomial,
    pub c1: PiecewisePolynomial,
    pub lambda: Polynomial,
    pub kappa: Polynomial,
    pub gamma: PiecewisePolynomial,
    /// Default heat-transfer coefficient on the boundary.
    pub h: f64,
}

impl MaterialDefinition {
    /// `c = 1+χ`, `c1 = θ` then `θ²` past 1, `λ = 2-χ`, `κ = 1+χ/2`, `γ = h = 1`.
    pub fn reference() -> Self {
        Self {
            name: "reference".into(),
            c: Polynomial::linear(1.0, 1.0),
            c1: PiecewisePolynomial::new(
                vec![0.0, 1.0],
                vec![
                    Polynomial::linear(0.0, 1.0),
                    Polynomial::new(vec![0.0, 0.0, 1.0]),
                ],
            )
            .expect("reference caloric law"),
            lambda: Polynomial::linear(2.0, -1.0),
            kappa: Polynomial::linear(1.0, 0.5),
            gamma: PiecewisePolynomial::new(vec![0.0], vec![Polynomial::constant(1.0)])
                .expect("constant law"),
            h: 1.0,
        }
    }

    /// The reference material with `κ ≡ 1`.
    pub fn reference_constant_kappa() -> Self {
        Self {
            name: "reference-constant-kappa".into(),
            kappa: Polynomial::constant(1.0),
            ..Self::reference()
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "reference" => Some(Self::reference()),
            "reference-constant-kappa" => Some(Self::reference_constant_kappa()),
            _ => None,
        }
    }
}

/// Physical constants. The first six are fixed by the normalization and only
/// checked; the rest are free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConstants {
    pub latent_heat: f64,
    pub theta_c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
    pub rho0: f64,
    pub g: f64,
    pub zeta_gamma: f64,
    pub k_gamma: f64,
    pub theta_star: f64,
    pub theta_sup: f64,
}

impl Default for ModelConstants {
    fn default() -> Self {
        Self {
            latent_heat: 2.0,
            theta_c: 1.0,
            alpha: 1.0,
            beta: 1.0,
            nu: 1.0,
            rho0: 1.0,
            g: 0.0,
            zeta_gamma: 0.0,
            k_gamma: 0.0,
            theta_star: 1.0,
            theta_sup: 1.0,
        }
    }
}

impl ModelConstants {
    pub fn validate(&self) -> Result<()> {
        let fixed = [
            ("latent_heat", self.latent_heat, 2.0),
            ("theta_c", self.theta_c, 1.0),
            ("alpha", self.alpha, 1.0),
            ("beta", self.beta, 1.0),
            ("nu", self.nu, 1.0),
            ("rho0", self.rho0, 1.0),
        ];
        for (name, value, expected) in fixed {
            if value != expected {
                return Err(Error::config(
                    format!("constants.{name}"),
                    format!("the scheme is written for normalized constants; {name} must be {expected}, got {value}"),
                ));
            }
        }
        for (name, value) in [
            ("g", self.g),
            ("zeta_gamma", self.zeta_gamma),
            ("k_gamma", self.k_gamma),
            ("theta_star", self.theta_star),
            ("theta_sup", self.theta_sup),
        ] {
            if !value.is_finite() {
                return Err(Error::config(format!("constants.{name}"), "must be finite"));
            }
        }
        if self.k_gamma < 0.0 {
            return Err(Error::config("constants.k_gamma", "K_Γ ≥ 0 required"));
        }
        if !(self.theta_star > 0.0) || self.theta_star > self.theta_sup {
            return Err(Error::config(
                "constants.theta_star",
                format!(
                    "0 < θ_* ≤ θ* required, got θ_* = {}, θ* = {}",
                    self.theta_star, self.theta_sup
                ),
            ));
        }
        Ok(())
    }
}

/// The positive constants bounding the constitutive laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisBounds {
    pub c_low: f64,
    pub c1_low: f64,
    pub cprime_low: f64,
    pub cprime_high: f64,
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub lambda_prime_max: f64,
    pub kappa_low: f64,
    pub gamma_low: f64,
}

impl HypothesisBounds {
    pub fn max(&self) -> f64 {
        [
            self.c_low,
            self.c1_low,
            self.cprime_low,
            self.cprime_high,
            self.lambda_low,
            self.lambda_high,
            self.lambda_prime_max,
            self.kappa_low,
            self.gamma_low,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }
}

const PHASE_SAMPLES: usize = 2001;

fn phase_grid() -> impl Iterator<Item = f64> {
    (0..PHASE_SAMPLES).map(|i| i as f64 / (PHASE_SAMPLES - 1) as f64)
}

pub(crate) fn temperature_grid(lo: f64, hi: f64, n: usize, extra: &[f64]) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    out.extend(extra.iter().copied().filter(|&x| x >= lo && x <= hi));
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// A validated material with its constants; immutable after construction.
#[derive(Debug, Clone)]
pub struct MaterialModel {
    definition: MaterialDefinition,
    constants: ModelConstants,
    heat: SpecificHeat,
    dc: Polynomial,
    d2c: Polynomial,
    dlambda: Polynomial,
    d2lambda: Polynomial,
    bounds: HypothesisBounds,
    c_second_max: f64,
    lambda_second_max: f64,
}

impl MaterialModel {
    pub fn new(definition: MaterialDefinition, constants: ModelConstants) -> Result<Self> {
        constants.validate()?;
        for (name, p) in [
            ("c", &definition.c),
            ("lambda", &definition.lambda),
            ("kappa", &definition.kappa),
        ] {
            if !p.is_finite() {
                return Err(Error::config(
                    format!("material.{name}"),
                    "non-finite coefficient",
                ));
            }
        }
        definition
            .c1
            .check()
            .map_err(|e| Error::config("material.c1", e.to_string()))?;
        definition
            .gamma
            .check()
            .map_err(|e| Error::config("material.gamma", e.to_string()))?;
        if !(definition.h >= 0.0) || !definition.h.is_finite() {
            return Err(Error::config("material.h", "h ≥ 0 and finite required"));
        }
        let builtin = MaterialDefinition::builtin(&definition.name)
            .is_some_and(|b| b == definition);
        let evaluation = if builtin {
            CaloricEvaluation::ClosedForm
        } else {
            CaloricEvaluation::Quadrature
        };
        let heat = SpecificHeat::new(definition.c1.clone(), evaluation)?;
        let dc = definition.c.derivative();
        let dlambda = definition.lambda.derivative();
        let mut model = Self {
            d2c: dc.derivative(),
            d2lambda: dlambda.derivative(),
            dc,
            dlambda,
            heat,
            constants,
            definition,
            bounds: HypothesisBounds {
                c_low: 0.0,
                c1_low: 0.0,
                cprime_low: 0.0,
                cprime_high: 0.0,
                lambda_low: 0.0,
                lambda_high: 0.0,
                lambda_prime_max: 0.0,
                kappa_low: 0.0,
                gamma_low: 0.0,
            },
            c_second_max: 0.0,
            lambda_second_max: 0.0,
        };
        model.bounds = model.sample_bounds();
        model.c_second_max = phase_grid()
            .map(|z| model.d2c.eval(z).abs())
            .fold(0.0, f64::max);
        model.lambda_second_max = phase_grid()
            .map(|z| model.d2lambda.eval(z).abs())
            .fold(0.0, f64::max);
        Ok(model)
    }

    pub fn reference() -> Self {
        Self::new(MaterialDefinition::reference(), ModelConstants::default())
            .expect("reference material")
    }

    pub fn reference_constant_kappa() -> Self {
        Self::new(
            MaterialDefinition::reference_constant_kappa(),
            ModelConstants::default(),
        )
        .expect("reference material")
    }

    pub fn with_constants(&self, constants: ModelConstants) -> Result<Self> {
        constants.validate()?;
        Ok(Self {
            constants,
            ..self.clone()
        })
    }

    fn sample_bounds(&self) -> HypothesisBounds {
        let mut b = HypothesisBounds {
            c_low: f64::INFINITY,
            c1_low: f64::INFINITY,
            cprime_low: f64::INFINITY,
            cprime_high: f64::NEG_INFINITY,
            lambda_low: f64::INFINITY,
            lambda_high: f64::NEG_INFINITY,
            lambda_prime_max: 0.0,
            kappa_low: f64::INFINITY,
            gamma_low: f64::INFINITY,
        };
        for z in phase_grid() {
            b.c_low = b.c_low.min(self.c(z));
            b.cprime_low = b.cprime_low.min(self.c_prime(z));
            b.cprime_high = b.cprime_high.max(self.c_prime(z));
            b.lambda_low = b.lambda_low.min(self.lambda(z));
            b.lambda_high = b.lambda_high.max(self.lambda(z));
            b.lambda_prime_max = b.lambda_prime_max.max(-self.lambda_prime(z));
            b.kappa_low = b.kappa_low.min(self.kappa(z));
        }
        let breaks: Vec<f64> = self
            .heat
            .breaks()
            .iter()
            .chain(self.definition.gamma.breaks())
            .copied()
            .collect();
        for t in temperature_grid(1e-6, 1e3, 2000, &[&breaks[..], &[1.0]].concat()) {
            b.gamma_low = b.gamma_low.min(self.gamma(t));
            if t >= 1.0 {
                b.c1_low = b.c1_low.min(self.c1(t));
            }
        }
        b.gamma_low = b.gamma_low.min(self.gamma(0.0));
        b
    }

    pub fn definition(&self) -> &MaterialDefinition {
        &self.definition
    }

    pub fn name(&self) -> &str {
        &self.definition.name
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    pub fn bounds(&self) -> &HypothesisBounds {
        &self.bounds
    }

    pub fn heat(&self) -> &SpecificHeat {
        &self.heat
    }

    /// Smallest admissible truncation level: every hypothesis constant, `θ*` and 1.
    pub fn r0(&self) -> f64 {
        self.bounds.max().max(self.constants.theta_sup).max(1.0)
    }

    pub fn c(&self, z: f64) -> f64 {
        self.definition.c.eval(z)
    }

    pub fn c_prime(&self, z: f64) -> f64 {
        self.dc.eval(z)
    }

    pub fn c_second(&self, z: f64) -> f64 {
        self.d2c.eval(z)
    }

    /// `max |c''|` on `[0, 1]`.
    pub fn c_second_max(&self) -> f64 {
        self.c_second_max
    }

    pub fn lambda(&self, z: f64) -> f64 {
        self.definition.lambda.eval(z)
    }

    pub fn lambda_prime(&self, z: f64) -> f64 {
        self.dlambda.eval(z)
    }

    pub fn lambda_second(&self, z: f64) -> f64 {
        self.d2lambda.eval(z)
    }

    /// `max |λ''|` on `[0, 1]`.
    pub fn lambda_second_max(&self) -> f64 {
        self.lambda_second_max
    }

    pub fn kappa(&self, z: f64) -> f64 {
        self.definition.kappa.eval(z)
    }

    pub fn kappa_is_constant(&self) -> bool {
        self.definition.kappa.degree() == 0
    }

    /// Relaxation coefficient, evaluated at `θ⁺`.
    pub fn gamma(&self, theta: f64) -> f64 {
        self.definition.gamma.eval(theta.max(0.0))
    }

    pub fn h(&self) -> f64 {
        self.definition.h
    }

    pub fn c1(&self, theta: f64) -> f64 {
        self.heat.c1(theta)
    }

    pub fn e1(&self, theta: f64) -> f64 {
        self.heat.e1(theta)
    }

    pub fn s1(&self, theta: f64) -> f64 {
        self.heat.s1(theta)
    }

    pub fn f1(&self, theta: f64) -> f64 {
        self.heat.f1(theta)
    }

    /// `f1(θ_c)`.
    pub fn f1_critical(&self) -> f64 {
        self.heat.f1(self.constants.theta_c)
    }

    pub fn truncate(&self, r: f64) -> Result<TruncationFamily> {
        truncate_family(&self.heat, r)
    }

    /// SHA-256 of the canonical JSON of the definition and constants, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(&(&self.definition, &self.constants))
            .expect("material serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn finite_theta(theta: f64) -> Result<f64> {
    if theta.is_finite() {
        Ok(theta)
    } else {
        Err(Error::InvalidInput(format!(
            "temperature must be finite, got {theta}"
        )))
    }
}

pub fn caloric_e1(model: &MaterialModel, theta: f64) -> Result<f64> {
    Ok(model.e1(finite_theta(theta)?))
}

pub fn caloric_s1(model: &MaterialModel, theta: f64) -> Result<f64> {
    Ok(model.s1(finite_theta(theta)?))
}

pub fn caloric_f1(model: &MaterialModel, theta: f64) -> Result<f64> {
    Ok(model.f1(finite_theta(theta)?))
}
