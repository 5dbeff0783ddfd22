//! Linear differential operators of order at most two.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value, gradient and row-major Hessian of a function at a point.
///
/// `grad` is empty when only the value was requested, `hess` is empty unless
/// second derivatives were requested.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

/// Coefficients of `sum a_kl d_k d_l u + sum b_k d_k u + c u` at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderCoefficients {
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

pub type CoefficientFn = Arc<dyn Fn(&[f64]) -> SecondOrderCoefficients + Send + Sync>;

#[derive(Clone)]
pub enum OperatorKind {
    Identity,
    Laplacian,
    /// `d^2 / dx_axis^2`; the 1D second derivative is `axis = 0`.
    SecondDerivative {
        axis: usize,
    },
    Constant(SecondOrderCoefficients),
    Variable(CoefficientFn),
}

impl fmt::Debug for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::Identity => write!(f, "Identity"),
            OperatorKind::Laplacian => write!(f, "Laplacian"),
            OperatorKind::SecondDerivative { axis } => write!(f, "SecondDerivative({axis})"),
            OperatorKind::Constant(c) => write!(f, "Constant({c:?})"),
            OperatorKind::Variable(_) => write!(f, "Variable(..)"),
        }
    }
}

/// A linear operator `L`. When `dirichlet_boundary` is set, assembly replaces
/// `L` by the identity at boundary collocation points.
#[derive(Clone, Debug)]
pub struct Operator {
    pub kind: OperatorKind,
    pub dirichlet_boundary: bool,
}

impl Operator {
    pub fn identity() -> Self {
        Operator {
            kind: OperatorKind::Identity,
            dirichlet_boundary: false,
        }
    }

    pub fn laplacian() -> Self {
        Operator {
            kind: OperatorKind::Laplacian,
            dirichlet_boundary: true,
        }
    }

    pub fn second_derivative(axis: usize) -> Self {
        Operator {
            kind: OperatorKind::SecondDerivative { axis },
            dirichlet_boundary: true,
        }
    }

    pub fn general(coefficients: SecondOrderCoefficients) -> Self {
        Operator {
            kind: OperatorKind::Constant(coefficients),
            dirichlet_boundary: true,
        }
    }

    pub fn variable(coefficients: CoefficientFn) -> Self {
        Operator {
            kind: OperatorKind::Variable(coefficients),
            dirichlet_boundary: true,
        }
    }

    pub fn with_dirichlet_boundary(mut self, on: bool) -> Self {
        self.dirichlet_boundary = on;
        self
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, OperatorKind::Identity)
    }

    /// Highest derivative order the operator needs.
    pub fn order(&self) -> usize {
        match &self.kind {
            OperatorKind::Identity => 0,
            _ => 2,
        }
    }

    /// Checks that the operator makes sense in `dim` space dimensions.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match &self.kind {
            OperatorKind::SecondDerivative { axis } if *axis >= dim => Err(Error::invalid(format!(
                "second derivative along axis {axis} in dimension {dim}"
            ))),
            OperatorKind::Constant(c) => check_coefficients(c, dim),
            _ => Ok(()),
        }
    }

    /// Applies the operator to a function given by its jet at `y`.
    pub fn apply(&self, y: &[f64], jet: &Jet) -> f64 {
        let d = y.len();
        match &self.kind {
            OperatorKind::Identity => jet.value,
            OperatorKind::Laplacian => (0..d).map(|k| jet.hess[k * d + k]).sum(),
            OperatorKind::SecondDerivative { axis } => jet.hess[axis * d + axis],
            OperatorKind::Constant(c) => apply_coefficients(c, d, jet),
            OperatorKind::Variable(f) => apply_coefficients(&f(y), d, jet),
        }
    }
}

fn check_coefficients(c: &SecondOrderCoefficients, dim: usize) -> Result<()> {
    if c.a.len() != dim || c.a.iter().any(|row| row.len() != dim) {
        return Err(Error::invalid("second-order coefficient matrix must be d x d"));
    }
    if !c.b.is_empty() && c.b.len() != dim {
        return Err(Error::invalid("first-order coefficient vector must have length d"));
    }
    Ok(())
}

fn apply_coefficients(c: &SecondOrderCoefficients, d: usize, jet: &Jet) -> f64 {
    let mut acc = c.c * jet.value;
    for (k, row) in c.a.iter().enumerate() {
        for (l, a) in row.iter().enumerate() {
            acc += a * jet.hess[k * d + l];
        }
    }
    for (k, b) in c.b.iter().enumerate() {
        acc += b * jet.grad[k];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn general_operator_reduces_to_laplacian() {
        let jet = Jet {
            value: 2.0,
            grad: vec![1.0, -1.0],
            hess: vec![3.0, 0.5, 0.5, 4.0],
        };
        let y = [0.0, 0.0];
        let lap = Operator::laplacian().apply(&y, &jet);
        let gen = Operator::general(SecondOrderCoefficients {
            a: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![],
            c: 0.0,
        })
        .apply(&y, &jet);
        assert_eq!(lap, 7.0);
        assert_eq!(gen, 7.0);
        let full = Operator::general(SecondOrderCoefficients {
            a: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            b: vec![2.0, 1.0],
            c: -1.0,
        })
        .apply(&y, &jet);
        assert_eq!(full, 1.0 + 1.0 - 2.0);
        assert!(Operator::second_derivative(2).validate(2).is_err());
    }
}
