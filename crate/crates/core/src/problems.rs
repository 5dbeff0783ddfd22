//! Boundary value problems with manufactured solutions, and convergence studies.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Bounds;
use crate::operator::{Jet, Operator, SecondOrderCoefficients};
use crate::pipeline::{self, RunConfig};
use crate::solve::RightHandSide;

/// Closed-form exact solutions on `[0, 1]^d`, all vanishing on the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Manufactured {
    /// `prod_k sin(pi x_k)`.
    Sine,
    /// `sum_k x_k (1 - x_k)`.
    Quadratic,
}

impl Manufactured {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.jet(x, 0).value
    }

    pub fn jet(&self, x: &[f64], order: usize) -> Jet {
        let d = x.len();
        match self {
            Manufactured::Sine => {
                let s: Vec<f64> = x.iter().map(|v| (PI * v).sin()).collect();
                let c: Vec<f64> = x.iter().map(|v| (PI * v).cos()).collect();
                let prod_except =
                    |skip: &[usize]| -> f64 { (0..d).filter(|a| !skip.contains(a)).map(|a| s[a]).product() };
                let mut jet = Jet {
                    value: prod_except(&[]),
                    ..Jet::default()
                };
                if order >= 1 {
                    jet.grad = (0..d).map(|a| PI * c[a] * prod_except(&[a])).collect();
                }
                if order >= 2 {
                    let mut h = vec![0.0; d * d];
                    for a in 0..d {
                        for b in 0..d {
                            h[a * d + b] = if a == b {
                                -PI * PI * jet.value
                            } else {
                                PI * PI * c[a] * c[b] * prod_except(&[a, b])
                            };
                        }
                    }
                    jet.hess = h;
                }
                jet
            }
            Manufactured::Quadratic => {
                let mut jet = Jet {
                    value: x.iter().map(|v| v * (1.0 - v)).sum(),
                    ..Jet::default()
                };
                if order >= 1 {
                    jet.grad = x.iter().map(|v| 1.0 - 2.0 * v).collect();
                }
                if order >= 2 {
                    let mut h = vec![0.0; d * d];
                    for a in 0..d {
                        h[a * d + a] = -2.0;
                    }
                    jet.hess = h;
                }
                jet
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `u'' = f` on `[0, 1]`, `u(0) = u(1) = 0`.
    Bvp1d,
    /// `Laplace u = f` on `[0, 1]^2`, `u = 0` on the boundary.
    Poisson2d,
}

impl Preset {
    pub fn dim(&self) -> usize {
        match self {
            Preset::Bvp1d => 1,
            Preset::Poisson2d => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Bvp1d => "bvp1d",
            Preset::Poisson2d => "poisson2d",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bvp1d" => Ok(Preset::Bvp1d),
            "poisson2d" => Ok(Preset::Poisson2d),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Serializable operator description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity,
    Laplacian,
    SecondDerivative {
        #[serde(default)]
        axis: usize,
    },
    General(SecondOrderCoefficients),
}

impl OperatorSpec {
    pub fn build(&self) -> Operator {
        match self {
            OperatorSpec::Identity => Operator::identity(),
            OperatorSpec::Laplacian => Operator::laplacian(),
            OperatorSpec::SecondDerivative { axis } => Operator::second_derivative(*axis),
            OperatorSpec::General(c) => Operator::general(c.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum RhsForm {
    SineSecondDerivative,
    SineLaplacian,
    FromExact,
}

/// An operator equation on a box with Dirichlet data taken from the exact solution.
#[derive(Clone, Debug)]
pub struct Problem {
    pub bounds: Bounds,
    pub operator: Operator,
    pub exact: Manufactured,
    rhs_form: RhsForm,
}

impl Problem {
    /// The named problem; `solution` and `operator` override the defaults, in
    /// which case `f` is obtained by applying the operator to the exact jet.
    pub fn preset(preset: Preset, solution: Option<Manufactured>, operator: Option<&OperatorSpec>) -> Result<Self> {
        let dim = preset.dim();
        let exact = solution.unwrap_or(Manufactured::Sine);
        let (op, form) = match (preset, operator) {
            (_, Some(spec)) => (spec.build(), RhsForm::FromExact),
            (Preset::Bvp1d, None) => (Operator::second_derivative(0), RhsForm::SineSecondDerivative),
            (Preset::Poisson2d, None) => (Operator::laplacian(), RhsForm::SineLaplacian),
        };
        op.validate(dim)?;
        let form = if exact == Manufactured::Sine {
            form
        } else {
            RhsForm::FromExact
        };
        Ok(Problem {
            bounds: Bounds::unit(dim),
            operator: op,
            exact,
            rhs_form: form,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn f(&self, y: &[f64]) -> f64 {
        match self.rhs_form {
            RhsForm::SineSecondDerivative => -PI * PI * (PI * y[0]).sin(),
            RhsForm::SineLaplacian => -2.0 * PI * PI * (PI * y[0]).sin() * (PI * y[1]).sin(),
            RhsForm::FromExact => self.operator.apply(y, &self.exact.jet(y, self.operator.order())),
        }
    }

    pub fn dirichlet(&self, y: &[f64]) -> f64 {
        self.exact.value(y)
    }

    /// Max relative difference between `L u` and `f` at 20 random points.
    pub fn self_consistency(&self, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let y: Vec<f64> = (0..self.dim())
                .map(|a| rng.random_range(self.bounds.lo[a]..self.bounds.hi[a]))
                .collect();
            let lu = self.operator.apply(&y, &self.exact.jet(&y, 2));
            let f = self.f(&y);
            worst = worst.max((lu - f).abs() / f.abs().max(1.0));
        }
        worst
    }
}

impl RightHandSide for Problem {
    fn interior(&self, y: &[f64]) -> f64 {
        self.f(y)
    }

    fn boundary(&self, y: &[f64]) -> f64 {
        self.dirichlet(y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub max_err: f64,
    /// `log(e_prev / e) / log(h_prev / h)`; undefined on the first level.
    pub observed_order: Option<f64>,
}

/// Solves the configured problem at each refinement level and reports
/// interior max-norm errors with observed orders.
pub fn convergence_study(cfg: &RunConfig, levels: &[usize]) -> Result<Vec<ConvergenceRow>> {
    if levels.len() < 3 {
        return Err(Error::config("a convergence study needs at least 3 levels"));
    }
    let results = levels
        .par_iter()
        .enumerate()
        .map(|(i, &level)| {
            let wrap = |e| Error::Level {
                level,
                source: Box::new(e),
            };
            let level_cfg = cfg.at_level(level).map_err(wrap)?;
            let run = pipeline::run(&level_cfg).map_err(wrap)?;
            Ok((i, run.nodes().spacing(), run.nodes().len(), run.interior_max_error()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(results.len());
    for (_, h, n, e) in results {
        let observed_order = rows
            .last()
            .map(|p: &ConvergenceRow| (p.max_err / e).ln() / (p.h / h).ln());
        rows.push(ConvergenceRow {
            h,
            n,
            max_err: e,
            observed_order,
        });
    }
    Ok(rows)
}
