//! Temperature truncation at level `B(R)`.

use super::caloric::SpecificHeat;
use crate::error::{Error, Result};

/// The truncated caloric functions for one level `R`.
///
/// Below `B(R)` they coincide with the untruncated functions; above it
/// `c1` is frozen at `c1(B)`, so `e1^R` grows affinely and `f1^R` stays constant.
#[derive(Debug, Clone)]
pub struct TruncationFamily {
    heat: SpecificHeat,
    r: f64,
    b: f64,
    c1_b: f64,
    e1_b: f64,
    s1_b: f64,
    f1_b: f64,
}

/// `B(R) = sqrt(R) * min(e1(R), |f1(R)|)^(1/4)`.
pub fn cutoff(heat: &SpecificHeat, r: f64) -> f64 {
    r.sqrt() * heat.e1(r).min(heat.f1(r).abs()).powf(0.25)
}

pub fn truncate_family(heat: &SpecificHeat, r: f64) -> Result<TruncationFamily> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidInput(format!(
            "truncation level must be positive and finite, got {r}"
        )));
    }
    let b = cutoff(heat, r);
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidInput(format!(
            "truncation cutoff B({r}) = {b} is not positive"
        )));
    }
    Ok(TruncationFamily {
        heat: heat.clone(),
        r,
        b,
        c1_b: heat.c1(b),
        e1_b: heat.e1(b),
        s1_b: heat.s1(b),
        f1_b: heat.f1(b),
    })
}

impl TruncationFamily {
    pub fn r(&self) -> f64 {
        self.r
    }

    /// The cutoff `B(R)`.
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn heat(&self) -> &SpecificHeat {
        &self.heat
    }

    pub fn qr(&self, theta: f64) -> f64 {
        theta.max(0.0).min(self.b)
    }

    pub fn c1r(&self, theta: f64) -> f64 {
        if theta > self.b {
            self.c1_b
        } else {
            self.heat.c1(theta)
        }
    }

    pub fn e1r(&self, theta: f64) -> f64 {
        if theta > self.b {
            self.e1_b + self.c1_b * (theta - self.b)
        } else {
            self.heat.e1(theta)
        }
    }

    pub fn s1r(&self, theta: f64) -> f64 {
        if theta > self.b {
            self.s1_b + self.c1_b * (theta - self.b) / self.b
        } else {
            self.heat.s1(theta)
        }
    }

    pub fn f1r(&self, theta: f64) -> f64 {
        if theta > self.b {
            self.f1_b
        } else {
            self.heat.f1(theta)
        }
    }

    /// Points where `c1^R` may fail to be smooth: 0, the material breaks below `B`, and `B`.
    pub fn kinks(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .heat
            .breaks()
            .iter()
            .copied()
            .filter(|&x| x < self.b)
            .collect();
        out.push(self.b);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::caloric::CaloricEvaluation;
    use crate::materials::polynomial::{PiecewisePolynomial, Polynomial};

    fn heat() -> SpecificHeat {
        let law = PiecewisePolynomial::new(
            vec![0.0, 1.0],
            vec![Polynomial::linear(0.0, 1.0), Polynomial::new(vec![0.0, 0.0, 1.0])],
        )
        .unwrap();
        SpecificHeat::new(law, CaloricEvaluation::ClosedForm).unwrap()
    }

    #[test]
    fn cutoff_values() {
        let h = heat();
        assert!((cutoff(&h, 4.0) - 2.0 * 12.5f64.powf(0.25)).abs() < 1e-12);
        assert!((cutoff(&h, 3.0) - 2.692).abs() < 1e-3);
    }

    #[test]
    fn affine_beyond_cutoff() {
        let f = truncate_family(&heat(), 4.0).unwrap();
        let b = f.b();
        let t = b + 1.0;
        assert_eq!(f.f1r(t), f.heat().f1(b));
        assert!((f.e1r(t) - f.heat().e1(b) - b * b).abs() < 1e-12);
        assert!((f.s1r(t) - f.heat().s1(b) - b).abs() < 1e-12);
        assert_eq!(f.qr(t), b);
        assert_eq!(f.qr(-1.0), 0.0);
    }

    #[test]
    fn rejects_nonpositive_level() {
        assert!(truncate_family(&heat(), 0.0).is_err());
        assert!(truncate_family(&heat(), f64::NAN).is_err());
    }
}
