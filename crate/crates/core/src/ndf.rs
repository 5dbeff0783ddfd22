//! Numerical differentiation formulas `sum_i w_ji u(x_i) ~ Lu(y_j)` from exactness conditions.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{NodeSet, Point};
use crate::linalg::{lu_solve, min_norm_solve, numerical_rank, RANK_RTOL};
pub use crate::operator::{Jet, Operator, OperatorKind, SecondOrderCoefficients};
use crate::spaces::{KernelSpace, PatchSpace, PolySpace};

/// Relative exactness defect above which a weight solve is rejected.
pub const EXACTNESS_TOL: f64 = 1e-8;

/// One stencil row: weights aligned with `nodes`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StencilWeights {
    pub y: Point,
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
    pub residual: f64,
}

impl StencilWeights {
    /// `(node, weight)` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

fn kronecker(op: &Operator, y: &[f64], nodes: &NodeSet, members: &[usize]) -> Option<StencilWeights> {
    if !op.is_identity() {
        return None;
    }
    let pos = members.iter().position(|&k| nodes.point(k) == y)?;
    Some(StencilWeights {
        y: Point(y.to_vec()),
        nodes: members.to_vec(),
        weights: (0..members.len()).map(|t| if t == pos { 1.0 } else { 0.0 }).collect(),
        residual: 0.0,
    })
}

/// Max over basis functions `b` of `|sum_i w_i b(x_i) - Lb(y)|`, relative to the
/// magnitude of the terms involved.
///
/// `values` holds `b(x_i)` with one row per node, `targets` holds `Lb(y)`.
pub fn exactness_defect(weights: &[f64], values: &DMatrix<f64>, targets: &[f64]) -> f64 {
    let mut worst_abs: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (b, &t) in targets.iter().enumerate() {
        let mut sum = 0.0;
        let mut mag = 0.0;
        for (i, w) in weights.iter().enumerate() {
            let term = w * values[(i, b)];
            sum += term;
            mag += term.abs();
        }
        worst_abs = worst_abs.max((sum - t).abs());
        scale = scale.max(t.abs() + mag);
    }
    if scale > 0.0 {
        worst_abs / scale
    } else {
        worst_abs
    }
}

fn values_and_targets(
    space: &PatchSpace,
    op: &Operator,
    y: &[f64],
    nodes: &NodeSet,
    members: &[usize],
) -> (DMatrix<f64>, Vec<f64>) {
    let rows: Vec<Vec<f64>> = members.iter().map(|&k| space.eval_all(nodes.point(k))).collect();
    let values = DMatrix::from_fn(members.len(), space.len(), |r, c| rows[r][c]);
    (values, space.apply_op_all(op, y))
}

/// Weights exact on a polynomial space.
///
/// Square nonsingular systems have a unique solution; otherwise the minimum
/// 2-norm solution of `V^T w = Lp(y)` is taken and must satisfy the conditions.
pub fn weights_poly(
    op: &Operator,
    y: &[f64],
    nodes: &NodeSet,
    members: &[usize],
    ps: &PolySpace,
) -> Result<StencilWeights> {
    check_inputs(y, nodes, members, ps.dim())?;
    op.validate(ps.dim())?;
    if let Some(sw) = kronecker(op, y, nodes, members) {
        return Ok(sw);
    }
    let space = PatchSpace::Poly(ps.clone());
    let (values, targets) = values_and_targets(&space, op, y, nodes, members);
    let (w, rank) = min_norm_solve(&values.transpose(), &DVector::from_column_slice(&targets));
    let weights: Vec<f64> = w.iter().copied().collect();
    let residual = exactness_defect(&weights, &values, &targets);
    if !(residual <= EXACTNESS_TOL) {
        return Err(Error::UnsolvableExactness {
            rank,
            basis: ps.len(),
            defect: residual,
        });
    }
    Ok(StencilWeights {
        y: Point(y.to_vec()),
        nodes: members.to_vec(),
        weights,
        residual,
    })
}

/// Weights exact on `P_{K,X,Q}` from the saddle system
/// `[K P; P^T 0] [w; lambda] = [LK(y, .); Lq(y)]`.
///
/// A rank-deficient `P` is reduced to its range; the stencil is accepted only
/// when `Lq(y)` is consistent with that reduction.
pub fn weights_kernel(
    op: &Operator,
    y: &[f64],
    nodes: &NodeSet,
    members: &[usize],
    ks: &KernelSpace,
) -> Result<StencilWeights> {
    let dim = nodes.dim();
    check_inputs(y, nodes, members, dim)?;
    op.validate(dim)?;
    if let Some(sw) = kronecker(op, y, nodes, members) {
        return Ok(sw);
    }
    let kernel = ks.kernel();
    let n = members.len();
    let order = op.order();
    let pts: Vec<&[f64]> = members.iter().map(|&k| nodes.point(k)).collect();

    let mut p_block = DMatrix::zeros(n, 0);
    let mut lq = Vec::new();
    if let Some(q) = ks.augmentation() {
        p_block = DMatrix::from_fn(n, q.len(), |i, k| q.jet(k, pts[i], 0).value);
        lq = (0..q.len()).map(|k| op.apply(y, &q.jet(k, y, order))).collect();
    }
    // reduce P to an orthonormal basis of its range when it is rank deficient
    let (p_red, lq_red) = if p_block.ncols() > 0 && numerical_rank(&p_block) < p_block.ncols() {
        reduce_polynomial_block(&p_block, &lq, ks.len())?
    } else {
        (p_block, lq)
    };
    let nq = p_red.ncols();
    let mut m = DMatrix::zeros(n + nq, n + nq);
    let mut rhs = DVector::zeros(n + nq);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = kernel.eval(pts[i], pts[j]);
        }
        for k in 0..nq {
            m[(i, n + k)] = p_red[(i, k)];
            m[(n + k, i)] = p_red[(i, k)];
        }
        rhs[i] = op.apply(y, &kernel.jet(y, pts[i], order));
    }
    for k in 0..nq {
        rhs[n + k] = lq_red[k];
    }
    let sol = lu_solve(&m, &rhs).ok_or_else(|| Error::UnsolvableExactness {
        rank: numerical_rank(&m),
        basis: ks.len(),
        defect: f64::INFINITY,
    })?;
    let weights: Vec<f64> = sol.rows(0, n).iter().copied().collect();

    let space = PatchSpace::Kernel(ks.clone());
    let (values, targets) = values_and_targets(&space, op, y, nodes, members);
    let residual = exactness_defect(&weights, &values, &targets);
    if !(residual <= EXACTNESS_TOL) {
        return Err(Error::UnsolvableExactness {
            rank: numerical_rank(&m),
            basis: ks.len(),
            defect: residual,
        });
    }
    Ok(StencilWeights {
        y: Point(y.to_vec()),
        nodes: members.to_vec(),
        weights,
        residual,
    })
}

fn reduce_polynomial_block(p: &DMatrix<f64>, lq: &[f64], basis: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let rows = p.nrows().max(p.ncols());
    let mut padded = DMatrix::zeros(rows, p.ncols());
    padded.view_mut((0, 0), (p.nrows(), p.ncols())).copy_from(p);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let lqv = DVector::from_column_slice(lq);
    let mut keep = Vec::new();
    let mut defect: f64 = 0.0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let proj = v_t.row(i).transpose().dot(&lqv);
        if s > RANK_RTOL * smax {
            keep.push(i);
        } else {
            defect = defect.max(proj.abs());
        }
    }
    // directions of Q that vanish on the stencil must also vanish under L at y
    let scale = lq.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if defect > EXACTNESS_TOL * scale {
        return Err(Error::UnsolvableExactness {
            rank: keep.len(),
            basis,
            defect: defect / scale,
        });
    }
    let mut p_red = DMatrix::zeros(p.nrows(), keep.len());
    let mut lq_red = Vec::with_capacity(keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let v = v_t.row(i).transpose();
        p_red.set_column(c, &(p * &v));
        lq_red.push(v.dot(&lqv));
    }
    Ok((p_red, lq_red))
}

/// Dispatches on the patch space type.
pub fn weights(
    op: &Operator,
    y: &[f64],
    nodes: &NodeSet,
    members: &[usize],
    space: &PatchSpace,
) -> Result<StencilWeights> {
    match space {
        PatchSpace::Poly(ps) => weights_poly(op, y, nodes, members, ps),
        PatchSpace::Kernel(ks) => weights_kernel(op, y, nodes, members, ks),
    }
}

/// Recomputes the exactness defect of `sw` on a basis re-expanded around `y`.
pub fn verify_exactness(sw: &StencilWeights, nodes: &NodeSet, space: &PatchSpace, op: &Operator) -> f64 {
    let y: &[f64] = &sw.y;
    let relocalized = match space {
        PatchSpace::Poly(ps) => ps
            .clone()
            .localized(y, ps.scale())
            .map(PatchSpace::Poly)
            .unwrap_or_else(|_| space.clone()),
        PatchSpace::Kernel(ks) => {
            let dim = nodes.dim();
            let centers: Vec<f64> = (0..ks.num_centers()).flat_map(|j| ks.center(j).to_vec()).collect();
            let aug = ks.augmentation().map(|q| q.clone().localized(y, q.scale()));
            match aug.transpose() {
                Ok(aug) => KernelSpace::new(ks.kernel(), dim, centers, aug)
                    .map(PatchSpace::Kernel)
                    .unwrap_or_else(|_| space.clone()),
                Err(_) => space.clone(),
            }
        }
    };
    let (values, targets) = values_and_targets(&relocalized, op, y, nodes, &sw.nodes);
    exactness_defect(&sw.weights, &values, &targets)
}

fn check_inputs(y: &[f64], nodes: &NodeSet, members: &[usize], dim: usize) -> Result<()> {
    if y.len() != dim || nodes.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: y.len(),
        });
    }
    if members.is_empty() {
        return Err(Error::invalid("empty stencil"));
    }
    if let Some(&k) = members.iter().find(|&&k| k >= nodes.len()) {
        return Err(Error::invalid(format!("stencil node {k} out of range")));
    }
    Ok(())
}
