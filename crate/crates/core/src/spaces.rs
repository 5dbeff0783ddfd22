//! Patch spaces `P_i`: multivariate polynomials in local coordinates and
//! (conditionally) positive definite kernel spaces with polynomial augmentation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist2, InfluenceSet, NodeSet};
use crate::linalg::{lu_solve, null_space, numerical_rank};
use crate::operator::{Jet, Operator};

/// `dim Pi^d_q = binom(q + d, d)`.
pub fn poly_dim(dim: usize, degree: usize) -> usize {
    let mut r: usize = 1;
    for i in 1..=dim {
        r = r * (degree + i) / i;
    }
    r
}

/// Exponent vectors of all monomials of total degree `<= degree`, graded by
/// degree and, within a degree, lexicographically descending (`x1^2, x1 x2, x2^2`).
pub fn graded_lex_exponents(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    fn fill(rest: usize, total: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 1 {
            cur.push(total);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=total).rev() {
            cur.push(e);
            fill(rest - 1, total - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::with_capacity(poly_dim(dim, degree));
    for t in 0..=degree as u32 {
        fill(dim, t, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

/// Span of monomials evaluated in shifted and scaled coordinates `(x - shift) / scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySpace {
    dim: usize,
    degree: usize,
    shift: Vec<f64>,
    scale: f64,
    exponents: Vec<Vec<u32>>,
}

impl PolySpace {
    /// The full space `Pi^d_q`.
    pub fn full(dim: usize, degree: usize) -> Self {
        PolySpace {
            dim,
            degree,
            shift: vec![0.0; dim],
            scale: 1.0,
            exponents: graded_lex_exponents(dim, degree),
        }
    }

    /// A hand-picked subset of the monomials of `Pi^d_degree`, kept in the given order.
    pub fn sublist(dim: usize, degree: usize, exponents: Vec<Vec<u32>>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::invalid("monomial sublist is empty"));
        }
        let full = graded_lex_exponents(dim, degree);
        for (i, e) in exponents.iter().enumerate() {
            if !full.contains(e) {
                return Err(Error::invalid(format!(
                    "monomial {e:?} is not in the degree-{degree} list for d = {dim}"
                )));
            }
            if exponents[..i].contains(e) {
                return Err(Error::invalid(format!("monomial {e:?} listed twice")));
            }
        }
        Ok(PolySpace {
            dim,
            degree,
            shift: vec![0.0; dim],
            scale: 1.0,
            exponents,
        })
    }

    /// Same span, evaluated in `(x - shift) / scale`.
    pub fn localized(mut self, shift: &[f64], scale: f64) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: shift.len(),
            });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        self.shift = shift.to_vec();
        self.scale = scale;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn is_full(&self) -> bool {
        self.len() == poly_dim(self.dim, self.degree)
    }

    /// All basis values at `x`, in basis order.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok((0..self.len()).map(|k| self.jet(k, x, 0).value).collect())
    }

    pub fn jet(&self, k: usize, x: &[f64], order: usize) -> Jet {
        let d = self.dim;
        let e = &self.exponents[k];
        let z: Vec<f64> = (0..d).map(|a| (x[a] - self.shift[a]) / self.scale).collect();
        // derivative of z^e of the given order, times the falling factorial
        let dz = |a: usize, o: u32| -> f64 {
            let ea = e[a];
            if o > ea {
                return 0.0;
            }
            let fall: u32 = (0..o).map(|t| ea - t).product();
            fall as f64 * z[a].powi((ea - o) as i32)
        };
        let prod_except = |skip: &[usize], orders: &[u32]| -> f64 {
            let mut p = 1.0;
            for a in 0..d {
                if let Some(pos) = skip.iter().position(|&s| s == a) {
                    p *= dz(a, orders[pos]);
                } else {
                    p *= dz(a, 0);
                }
            }
            p
        };
        let mut jet = Jet {
            value: prod_except(&[], &[]),
            ..Jet::default()
        };
        if order >= 1 {
            let s1 = 1.0 / self.scale;
            jet.grad = (0..d).map(|a| prod_except(&[a], &[1]) * s1).collect();
        }
        if order >= 2 {
            let s2 = 1.0 / (self.scale * self.scale);
            let mut h = vec![0.0; d * d];
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] = if a == b {
                        prod_except(&[a], &[2]) * s2
                    } else {
                        prod_except(&[a, b], &[1, 1]) * s2
                    };
                }
            }
            jet.hess = h;
        }
        jet
    }
}

/// Radial kernel `K(x, y) = phi(|x - y|_2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Kernel {
    /// `phi(r) = exp(-(shape * r)^2)`, positive definite.
    Gauss { shape: f64 },
    /// `phi(r) = r^exponent`, exponent not an even integer.
    Polyharmonic { exponent: f64 },
}

impl Kernel {
    pub fn gauss(shape: f64) -> Result<Self> {
        let k = Kernel::Gauss { shape };
        k.validate()?;
        Ok(k)
    }

    pub fn polyharmonic(exponent: f64) -> Result<Self> {
        let k = Kernel::Polyharmonic { exponent };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gauss { shape } if !(shape > 0.0 && shape.is_finite()) => Err(Error::invalid(format!(
                "Gauss shape parameter must be positive, got {shape}"
            ))),
            Kernel::Polyharmonic { exponent } => {
                if !(exponent > 0.0 && exponent.is_finite()) {
                    return Err(Error::invalid(format!(
                        "polyharmonic exponent must be positive, got {exponent}"
                    )));
                }
                if exponent.fract() == 0.0 && (exponent as u64).is_multiple_of(2) {
                    return Err(Error::invalid(format!(
                        "even polyharmonic exponents ({exponent}) are not supported"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Minimal order `q` of conditional positive definiteness (0 = positive definite).
    pub fn cpd_order(&self) -> usize {
        match *self {
            Kernel::Gauss { .. } => 0,
            Kernel::Polyharmonic { exponent } => (exponent / 2.0).floor() as usize + 1,
        }
    }

    /// Degree of `Pi_{q-1}` for the minimal order, `None` when no augmentation is needed.
    pub fn default_augmentation(&self) -> Option<usize> {
        self.cpd_order().checked_sub(1)
    }

    pub fn phi(&self, r: f64) -> f64 {
        match *self {
            Kernel::Gauss { shape } => (-(shape * r) * (shape * r)).exp(),
            Kernel::Polyharmonic { exponent } => r.powf(exponent),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.phi(dist2(x, y).sqrt())
    }

    /// Jet of `K(., center)` at `x`.
    ///
    /// With `psi1 = phi'(r)/r` and `psi2 = (phi''(r) - phi'(r)/r)/r^2` the
    /// gradient is `psi1 (x - c)` and the Hessian `psi1 I + psi2 (x - c)(x - c)^T`.
    pub fn jet(&self, x: &[f64], center: &[f64], order: usize) -> Jet {
        let d = x.len();
        let diff: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
        let r = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut jet = Jet {
            value: self.phi(r),
            ..Jet::default()
        };
        if order == 0 {
            return jet;
        }
        let (psi1, psi2, grad_at_zero) = match *self {
            Kernel::Gauss { shape } => {
                let e2 = shape * shape;
                (-2.0 * e2 * jet.value, 4.0 * e2 * e2 * jet.value, 0.0)
            }
            Kernel::Polyharmonic { exponent: a } => {
                if r == 0.0 {
                    let g = if a > 1.0 { 0.0 } else { f64::NAN };
                    let h = if a > 2.0 { 0.0 } else { f64::NAN };
                    (h, 0.0, g)
                } else {
                    (a * r.powf(a - 2.0), a * (a - 2.0) * r.powf(a - 4.0), 0.0)
                }
            }
        };
        jet.grad = if r == 0.0 {
            vec![grad_at_zero; d]
        } else {
            diff.iter().map(|v| psi1 * v).collect()
        };
        if order >= 2 {
            let mut h = vec![0.0; d * d];
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] = psi2 * diff[a] * diff[b] + if a == b { psi1 } else { 0.0 };
                }
            }
            jet.hess = h;
        }
        jet
    }
}

/// `P_{K,X,Q}`: kernel translates with moment conditions against `Q`, plus `Q`.
///
/// Basis: the columns `z` of an orthonormal basis of `{c : sum_j c_j q(x_j) = 0 for q in Q}`
/// give `sum_j z_j K(., x_j)`, followed by the monomials of `Q`.
#[derive(Clone, Debug)]
pub struct KernelSpace {
    kernel: Kernel,
    dim: usize,
    centers: Vec<f64>,
    aug: Option<PolySpace>,
    moment_null: DMatrix<f64>,
    aug_rank: usize,
}

impl KernelSpace {
    /// Builds the space on the flat coordinate buffer `centers`.
    pub fn new(kernel: Kernel, dim: usize, centers: Vec<f64>, aug: Option<PolySpace>) -> Result<Self> {
        kernel.validate()?;
        if dim == 0 || centers.is_empty() || !centers.len().is_multiple_of(dim) {
            return Err(Error::invalid("kernel space needs at least one center"));
        }
        let n = centers.len() / dim;
        if let Some(q) = &aug {
            if q.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: q.dim(),
                });
            }
        }
        let (moment_null, aug_rank) = match &aug {
            None => (DMatrix::identity(n, n), 0),
            Some(q) => {
                let p = DMatrix::from_fn(n, q.len(), |i, k| q.jet(k, &centers[i * dim..(i + 1) * dim], 0).value);
                null_space(&p.transpose())
            }
        };
        Ok(KernelSpace {
            kernel,
            dim,
            centers,
            aug,
            moment_null,
            aug_rank,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn augmentation(&self) -> Option<&PolySpace> {
        self.aug.as_ref()
    }

    pub fn num_centers(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    /// Numerical rank of the polynomial block `[q_k(x_j)]`.
    pub fn augmentation_rank(&self) -> usize {
        self.aug_rank
    }

    pub fn is_unisolvent_for_q(&self) -> bool {
        self.aug.as_ref().is_none_or(|q| self.aug_rank == q.len())
    }

    pub fn len(&self) -> usize {
        self.moment_null.ncols() + self.aug.as_ref().map_or(0, |q| q.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn translate_jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        (0..self.num_centers())
            .map(|j| self.kernel.jet(x, self.center(j), order))
            .collect()
    }

    pub fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let translates = self.translate_jets(x, order);
        let mut out = Vec::with_capacity(self.len());
        for col in self.moment_null.column_iter() {
            out.push(combine(&translates, col.iter().copied()));
        }
        if let Some(q) = &self.aug {
            out.extend((0..q.len()).map(|k| q.jet(k, x, order)));
        }
        out
    }

    /// The symmetric saddle matrix `[K P; P^T 0]` on the centers.
    pub fn saddle_matrix(&self) -> DMatrix<f64> {
        let n = self.num_centers();
        let nq = self.aug.as_ref().map_or(0, |q| q.len());
        let mut m = DMatrix::zeros(n + nq, n + nq);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.kernel.eval(self.center(i), self.center(j));
            }
            if let Some(q) = &self.aug {
                for k in 0..nq {
                    let v = q.jet(k, self.center(i), 0).value;
                    m[(i, n + k)] = v;
                    m[(n + k, i)] = v;
                }
            }
        }
        m
    }

    /// Interpolant `sum c_j K(., x_j) + sum d_k q_k` of `values` at the centers.
    pub fn saddle_solve(&self, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.num_centers();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: values.len(),
            });
        }
        let m = self.saddle_matrix();
        let mut rhs = DVector::zeros(m.nrows());
        rhs.rows_mut(0, n).copy_from_slice(values);
        let sol = lu_solve(&m, &rhs).ok_or_else(|| Error::NotISet {
            rank: numerical_rank(&m),
            dim: self.len(),
            nodes: n,
        })?;
        Ok((
            sol.rows(0, n).iter().copied().collect(),
            sol.rows(n, m.nrows() - n).iter().copied().collect(),
        ))
    }
}

fn combine(jets: &[Jet], coeffs: impl Iterator<Item = f64>) -> Jet {
    let mut out = Jet {
        value: 0.0,
        grad: vec![0.0; jets.first().map_or(0, |j| j.grad.len())],
        hess: vec![0.0; jets.first().map_or(0, |j| j.hess.len())],
    };
    for (j, c) in jets.iter().zip(coeffs) {
        if c == 0.0 {
            continue;
        }
        out.value += c * j.value;
        for (o, g) in out.grad.iter_mut().zip(&j.grad) {
            *o += c * g;
        }
        for (o, h) in out.hess.iter_mut().zip(&j.hess) {
            *o += c * h;
        }
    }
    out
}

/// A patch space `P_i`.
#[derive(Clone, Debug)]
pub enum PatchSpace {
    Poly(PolySpace),
    Kernel(KernelSpace),
}

impl PatchSpace {
    pub fn len(&self) -> usize {
        match self {
            PatchSpace::Poly(p) => p.len(),
            PatchSpace::Kernel(k) => k.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spatial_dim(&self) -> usize {
        match self {
            PatchSpace::Poly(p) => p.dim(),
            PatchSpace::Kernel(k) => k.dim,
        }
    }

    /// Jets of every basis function at `x`.
    pub fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        match self {
            PatchSpace::Poly(p) => (0..p.len()).map(|k| p.jet(k, x, order)).collect(),
            PatchSpace::Kernel(k) => k.jets(x, order),
        }
    }

    pub fn eval_all(&self, x: &[f64]) -> Vec<f64> {
        self.jets(x, 0).into_iter().map(|j| j.value).collect()
    }

    pub fn apply_op_all(&self, op: &Operator, y: &[f64]) -> Vec<f64> {
        self.jets(y, op.order()).iter().map(|j| op.apply(y, j)).collect()
    }

    pub fn eval(&self, basis_index: usize, x: &[f64]) -> f64 {
        self.eval_all(x)[basis_index]
    }

    pub fn apply_op(&self, op: &Operator, basis_index: usize, y: &[f64]) -> f64 {
        self.apply_op_all(op, y)[basis_index]
    }

    /// Value of `sum_k coeffs_k b_k(x)`.
    pub fn value(&self, coeffs: &[f64], x: &[f64]) -> f64 {
        self.eval_all(x).iter().zip(coeffs).map(|(b, c)| b * c).sum()
    }

    pub fn apply_op_value(&self, op: &Operator, coeffs: &[f64], y: &[f64]) -> f64 {
        self.apply_op_all(op, y).iter().zip(coeffs).map(|(b, c)| b * c).sum()
    }
}

/// Evaluation matrix `[b_k(x_j)]`, one row per node.
pub fn evaluation_matrix(space: &PatchSpace, nodes: &NodeSet, members: &[usize]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = members.iter().map(|&j| space.eval_all(nodes.point(j))).collect();
    DMatrix::from_fn(members.len(), space.len(), |r, c| rows[r][c])
}

/// Rank of the evaluation matrix and whether the nodes form an I-set
/// (`rank == dim P == |nodes|`).
pub fn unisolvency_rank(space: &PatchSpace, nodes: &NodeSet, members: &[usize]) -> (usize, bool) {
    let rank = numerical_rank(&evaluation_matrix(space, nodes, members));
    (rank, rank == space.len() && rank == members.len())
}

/// Coefficients, in the basis of `space`, of the unique element taking `values` at the nodes.
pub fn local_interpolate(space: &PatchSpace, nodes: &NodeSet, members: &[usize], values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != members.len() {
        return Err(Error::DimensionMismatch {
            expected: members.len(),
            got: values.len(),
        });
    }
    match space {
        PatchSpace::Poly(_) => {
            let v = evaluation_matrix(space, nodes, members);
            let not_iset = || Error::NotISet {
                rank: numerical_rank(&v),
                dim: space.len(),
                nodes: members.len(),
            };
            if v.nrows() != v.ncols() {
                return Err(not_iset());
            }
            let (rank, _) = unisolvency_rank(space, nodes, members);
            if rank < v.ncols() {
                return Err(not_iset());
            }
            let x = lu_solve(&v, &DVector::from_column_slice(values)).ok_or_else(not_iset)?;
            Ok(x.iter().copied().collect())
        }
        PatchSpace::Kernel(ks) => {
            if !same_centers(ks, nodes, members) {
                return Err(Error::invalid(
                    "kernel space centers differ from the interpolation nodes",
                ));
            }
            if !ks.is_unisolvent_for_q() {
                return Err(Error::NotISet {
                    rank: ks.augmentation_rank(),
                    dim: ks.len(),
                    nodes: members.len(),
                });
            }
            let (c, d) = ks.saddle_solve(values)?;
            // c satisfies the moment conditions, so it lies in the span of the orthonormal null basis
            let a = ks.moment_null.transpose() * DVector::from_vec(c);
            let mut out: Vec<f64> = a.iter().copied().collect();
            out.extend(d);
            Ok(out)
        }
    }
}

fn same_centers(ks: &KernelSpace, nodes: &NodeSet, members: &[usize]) -> bool {
    ks.num_centers() == members.len() && members.iter().enumerate().all(|(i, &j)| ks.center(i) == nodes.point(j))
}

/// Declarative recipe for the patch space of one influence set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpaceSpec {
    Poly {
        degree: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sublist: Option<Vec<Vec<u32>>>,
    },
    Gauss {
        shape: f64,
        #[serde(default)]
        augmentation_degree: Option<usize>,
    },
    Polyharmonic {
        exponent: f64,
        #[serde(default)]
        augmentation_degree: Option<usize>,
    },
}

impl SpaceSpec {
    /// Fills in defaults: polyharmonic augmentation at the minimal order.
    pub fn resolved(&self) -> SpaceSpec {
        match self {
            SpaceSpec::Polyharmonic {
                exponent,
                augmentation_degree: None,
            } => SpaceSpec::Polyharmonic {
                exponent: *exponent,
                augmentation_degree: Kernel::Polyharmonic { exponent: *exponent }.default_augmentation(),
            },
            other => other.clone(),
        }
    }

    pub fn kernel(&self) -> Option<Kernel> {
        match *self {
            SpaceSpec::Poly { .. } => None,
            SpaceSpec::Gauss { shape, .. } => Some(Kernel::Gauss { shape }),
            SpaceSpec::Polyharmonic { exponent, .. } => Some(Kernel::Polyharmonic { exponent }),
        }
    }

    /// Builds the space for an influence set; polynomial parts are localized
    /// at the influence center with the stencil radius as scale.
    pub fn build(&self, nodes: &NodeSet, infl: &InfluenceSet) -> Result<PatchSpace> {
        let dim = nodes.dim();
        let center: &[f64] = &infl.center;
        let radius = stencil_radius(nodes, infl);
        let scale = if radius > 0.0 { radius } else { 1.0 };
        match self.resolved() {
            SpaceSpec::Poly { degree, sublist } => {
                let ps = match sublist {
                    Some(list) => PolySpace::sublist(dim, degree, list)?,
                    None => PolySpace::full(dim, degree),
                };
                Ok(PatchSpace::Poly(ps.localized(center, scale)?))
            }
            spec => {
                let kernel = spec.kernel().expect("kernel spec");
                let aug_degree = match spec {
                    SpaceSpec::Gauss {
                        augmentation_degree, ..
                    }
                    | SpaceSpec::Polyharmonic {
                        augmentation_degree, ..
                    } => augmentation_degree,
                    SpaceSpec::Poly { .. } => None,
                };
                if let (Some(min), deg) = (kernel.default_augmentation(), aug_degree) {
                    if deg.is_none_or(|d| d < min) {
                        return Err(Error::config(format!(
                            "kernel {kernel:?} needs polynomial augmentation of degree >= {min}"
                        )));
                    }
                }
                let aug = aug_degree
                    .map(|q| PolySpace::full(dim, q).localized(center, scale))
                    .transpose()?;
                let mut coords = Vec::with_capacity(infl.len() * dim);
                for &j in &infl.members {
                    coords.extend_from_slice(nodes.point(j));
                }
                Ok(PatchSpace::Kernel(KernelSpace::new(kernel, dim, coords, aug)?))
            }
        }
    }
}

/// Largest distance from the influence center to one of its members.
pub fn stencil_radius(nodes: &NodeSet, infl: &InfluenceSet) -> f64 {
    infl.members
        .iter()
        .map(|&j| dist2(&infl.center, nodes.point(j)))
        .fold(0.0, f64::max)
        .sqrt()
}
