//! The caloric density `c1(θ)` and its integrals
//!
//! ```text
//! e1(θ) = ∫_0^θ c1(r) dr,   s1(θ) = ∫_0^θ c1(r)/r dr,   f1(θ) = e1(θ) - θ s1(θ)
//! ```
//!
//! `c1` is extended by zero for `θ <= 0`, so all three integrals vanish there.

use super::polynomial::{PiecewisePolynomial, Polynomial};
use crate::error::Result;
use crate::quadrature::adaptive_simpson;

const QUADRATURE_TOL: f64 = 1e-12;

/// How the caloric integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaloricEvaluation {
    /// Exact antiderivatives of the polynomial pieces.
    ClosedForm,
    /// Adaptive Simpson quadrature of the integrands.
    Quadrature,
}

#[derive(Debug, Clone)]
pub struct SpecificHeat {
    law: PiecewisePolynomial,
    evaluation: CaloricEvaluation,
    energy_anti: Vec<Polynomial>,
    energy_at_break: Vec<f64>,
    entropy_at_break: Vec<f64>,
}

impl SpecificHeat {
    pub fn new(law: PiecewisePolynomial, evaluation: CaloricEvaluation) -> Result<Self> {
        law.check()?;
        let energy_anti = law.pieces().iter().map(Polynomial::antiderivative).collect();
        let mut out = Self {
            law,
            evaluation,
            energy_anti,
            energy_at_break: Vec::new(),
            entropy_at_break: Vec::new(),
        };
        let breaks = out.law.breaks().to_vec();
        let mut e = 0.0;
        let mut s = 0.0;
        out.energy_at_break.push(0.0);
        out.entropy_at_break.push(0.0);
        for j in 1..breaks.len() {
            e += out.piece_energy(j - 1, breaks[j - 1], breaks[j]);
            s += out.piece_entropy(j - 1, breaks[j - 1], breaks[j]);
            out.energy_at_break.push(e);
            out.entropy_at_break.push(s);
        }
        Ok(out)
    }

    pub fn law(&self) -> &PiecewisePolynomial {
        &self.law
    }

    pub fn evaluation(&self) -> CaloricEvaluation {
        self.evaluation
    }

    /// Break points of `c1` (start of each polynomial piece).
    pub fn breaks(&self) -> &[f64] {
        self.law.breaks()
    }

    pub fn c1(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            0.0
        } else {
            self.law.eval(theta)
        }
    }

    pub fn e1(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        let j = self.law.piece_index(theta);
        self.energy_at_break[j] + self.piece_energy(j, self.law.breaks()[j], theta)
    }

    pub fn s1(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        let j = self.law.piece_index(theta);
        self.entropy_at_break[j] + self.piece_entropy(j, self.law.breaks()[j], theta)
    }

    pub fn f1(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        self.e1(theta) - theta * self.s1(theta)
    }

    fn piece_energy(&self, j: usize, a: f64, b: f64) -> f64 {
        match self.evaluation {
            CaloricEvaluation::ClosedForm => {
                let anti = &self.energy_anti[j];
                anti.eval(b) - anti.eval(a)
            }
            CaloricEvaluation::Quadrature => {
                let p = &self.law.pieces()[j];
                adaptive_simpson(|r| p.eval(r), a, b, QUADRATURE_TOL)
            }
        }
    }

    fn piece_entropy(&self, j: usize, a: f64, b: f64) -> f64 {
        let p = &self.law.pieces()[j];
        match self.evaluation {
            CaloricEvaluation::ClosedForm => {
                let c = p.coeffs();
                let mut acc = 0.0;
                if c[0] != 0.0 {
                    acc += if a == 0.0 {
                        c[0].signum() * f64::INFINITY
                    } else {
                        c[0] * (b / a).ln()
                    };
                }
                for (k, &ck) in c.iter().enumerate().skip(1) {
                    let k = k as i32;
                    acc += ck * (b.powi(k) - a.powi(k)) / k as f64;
                }
                acc
            }
            CaloricEvaluation::Quadrature => {
                // c1(r)/r at r = 0 is replaced by its limit p'(0) when p(0) = 0.
                let at_zero = if p.eval(0.0) == 0.0 {
                    p.derivative().eval(0.0)
                } else {
                    p.eval(0.0).signum() * f64::INFINITY
                };
                adaptive_simpson(
                    |r| if r > 0.0 { p.eval(r) / r } else { at_zero },
                    a,
                    b,
                    QUADRATURE_TOL,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_law() -> PiecewisePolynomial {
        PiecewisePolynomial::new(
            vec![0.0, 1.0],
            vec![Polynomial::linear(0.0, 1.0), Polynomial::new(vec![0.0, 0.0, 1.0])],
        )
        .unwrap()
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let exact = SpecificHeat::new(reference_law(), CaloricEvaluation::ClosedForm).unwrap();
        let quad = SpecificHeat::new(reference_law(), CaloricEvaluation::Quadrature).unwrap();
        for &t in &[0.1, 0.5, 1.0, 1.7, 2.0, 4.0, 9.5] {
            assert!((exact.e1(t) - quad.e1(t)).abs() < 1e-10, "e1({t})");
            assert!((exact.s1(t) - quad.s1(t)).abs() < 1e-10, "s1({t})");
        }
    }

    #[test]
    fn zero_extension() {
        let h = SpecificHeat::new(reference_law(), CaloricEvaluation::ClosedForm).unwrap();
        for &t in &[0.0, -1.0, -1e9] {
            assert_eq!(h.c1(t), 0.0);
            assert_eq!(h.e1(t), 0.0);
            assert_eq!(h.s1(t), 0.0);
            assert_eq!(h.f1(t), 0.0);
        }
    }

    #[test]
    fn logarithmic_entropy_piece() {
        // c1 = r on [0,1), c1 = 1 beyond: s1(θ) = 1 + ln θ for θ > 1.
        let law = PiecewisePolynomial::new(
            vec![0.0, 1.0],
            vec![Polynomial::linear(0.0, 1.0), Polynomial::constant(1.0)],
        )
        .unwrap();
        let h = SpecificHeat::new(law, CaloricEvaluation::ClosedForm).unwrap();
        assert!((h.s1(3.0) - (1.0 + 3f64.ln())).abs() < 1e-14);
        let q = SpecificHeat::new(h.law().clone(), CaloricEvaluation::Quadrature).unwrap();
        assert!((q.s1(3.0) - (1.0 + 3f64.ln())).abs() < 1e-10);
    }
}
