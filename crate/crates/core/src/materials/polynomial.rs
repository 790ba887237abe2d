use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial with coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// `a + b x`
    pub fn linear(a: f64, b: f64) -> Self {
        Self::new(vec![a, b])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::constant(0.0);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| j as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative vanishing at zero.
    pub fn antiderivative(&self) -> Polynomial {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(0.0);
        out.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(j, &c)| c / (j as f64 + 1.0)),
        );
        Polynomial::new(out)
    }
}

/// Piecewise polynomial on `[0, inf)`: piece `i` applies on `[breaks[i], breaks[i+1])`,
/// the last piece extends to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePolynomial {
    breaks: Vec<f64>,
    pieces: Vec<Polynomial>,
}

impl PiecewisePolynomial {
    pub fn new(breaks: Vec<f64>, pieces: Vec<Polynomial>) -> Result<Self> {
        let out = Self { breaks, pieces };
        out.check()?;
        Ok(out)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.breaks.is_empty() || self.breaks.len() != self.pieces.len() {
            return Err(Error::InvalidInput(format!(
                "piecewise polynomial needs one piece per break ({} breaks, {} pieces)",
                self.breaks.len(),
                self.pieces.len()
            )));
        }
        if self.breaks[0] != 0.0 {
            return Err(Error::InvalidInput(
                "piecewise polynomial must start at 0".into(),
            ));
        }
        if self.breaks.windows(2).any(|w| !(w[1] > w[0])) || self.breaks.iter().any(|b| !b.is_finite())
        {
            return Err(Error::InvalidInput(
                "piecewise polynomial breaks must be finite and strictly increasing".into(),
            ));
        }
        if self.pieces.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(
                "piecewise polynomial has non-finite coefficients".into(),
            ));
        }
        Ok(())
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn pieces(&self) -> &[Polynomial] {
        &self.pieces
    }

    /// Index of the piece containing `x >= 0`.
    pub fn piece_index(&self, x: f64) -> usize {
        self.breaks.partition_point(|&b| b <= x).saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_and_calculus() {
        let p = Polynomial::new(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative().coeffs(), &[-2.0, 6.0]);
        assert_eq!(p.antiderivative().eval(1.0), 1.0 - 1.0 + 1.0);
        assert_eq!(Polynomial::constant(4.0).derivative().eval(3.0), 0.0);
    }

    #[test]
    fn trailing_zeros_are_trimmed() {
        assert_eq!(Polynomial::new(vec![1.0, 0.0, 0.0]).degree(), 0);
    }

    #[test]
    fn piece_lookup() {
        let p = PiecewisePolynomial::new(
            vec![0.0, 1.0],
            vec![Polynomial::linear(0.0, 1.0), Polynomial::new(vec![0.0, 0.0, 1.0])],
        )
        .unwrap();
        assert_eq!(p.piece_index(0.0), 0);
        assert_eq!(p.piece_index(0.999), 0);
        assert_eq!(p.piece_index(1.0), 1);
        assert_eq!(p.eval(3.0), 9.0);
    }

    #[test]
    fn rejects_bad_breaks() {
        let one = || Polynomial::constant(1.0);
        assert!(PiecewisePolynomial::new(vec![0.5], vec![one()]).is_err());
        assert!(PiecewisePolynomial::new(vec![0.0, 0.0], vec![one(), one()]).is_err());
        assert!(PiecewisePolynomial::new(vec![0.0, 1.0], vec![one()]).is_err());
    }
}
