//! Global assembly of collocation and least-squares systems, and their solution.

mod sigma;
mod sparse;

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::ndf::{self, verify_exactness, StencilWeights};
use crate::operator::Operator;
use crate::spline::{lagrange_row, OverlapSplineSpace};

pub use sigma::{build_sigma, CollocationPoint, SigmaMap, SigmaStrategy};
pub use sparse::CsrMatrix;

/// How a row's weights are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// `L` applied to the Lagrange basis of patch `sigma(j)`.
    Lagrange,
    /// Solution of the exactness conditions on `P_{sigma(j)}`.
    #[default]
    Exactness,
}

/// Right-hand side `f` and Dirichlet data.
pub trait RightHandSide: Sync {
    fn interior(&self, y: &[f64]) -> f64;
    fn boundary(&self, y: &[f64]) -> f64;
}

/// Adapter for a pair of closures.
pub struct FnRhs<F, G> {
    pub interior: F,
    pub boundary: G,
}

impl<F, G> RightHandSide for FnRhs<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> f64 + Sync,
{
    fn interior(&self, y: &[f64]) -> f64 {
        (self.interior)(y)
    }

    fn boundary(&self, y: &[f64]) -> f64 {
        (self.boundary)(y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowMeta {
    pub y: Point,
    pub patch: usize,
    pub dirichlet: bool,
    pub residual: f64,
}

/// `A u = b` with one row per collocation point and one column per node.
#[derive(Clone, Debug)]
pub struct GlobalSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub rows: Vec<RowMeta>,
}

impl GlobalSystem {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn residual_norm(&self, u: &[f64]) -> f64 {
        norm2(&residual(&self.matrix, u, &self.rhs))
    }

    /// Largest exactness defect over all rows.
    pub fn worst_row_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// Weights of `L` at `y` on patch `patch`, with the exactness residual.
pub fn row_weights(
    space: &OverlapSplineSpace,
    patch: usize,
    op: &Operator,
    y: &[f64],
    route: Route,
) -> Result<StencilWeights> {
    let nodes = space.nodes();
    let p = space.patch(patch);
    match route {
        Route::Exactness => ndf::weights(op, y, nodes, &p.influence.members, &p.space),
        Route::Lagrange => {
            let row = lagrange_row(space, patch, op, y)?;
            let mut sw = StencilWeights {
                y: Point(y.to_vec()),
                nodes: row.iter().map(|e| e.0).collect(),
                weights: row.iter().map(|e| e.1).collect(),
                residual: 0.0,
            };
            sw.residual = verify_exactness(&sw, nodes, &p.space, op);
            Ok(sw)
        }
    }
}

/// Assembles `sum_i w_ji u_i = f(y_j)`; Dirichlet boundary points become unit rows.
pub fn assemble(
    space: &OverlapSplineSpace,
    op: &Operator,
    rhs: &dyn RightHandSide,
    sigma: &SigmaMap,
    route: Route,
) -> Result<GlobalSystem> {
    let nodes = space.nodes();
    op.validate(nodes.dim())?;
    if let Some(p) = sigma.points.iter().find(|p| p.patch >= space.num_patches()) {
        return Err(Error::config(format!("sigma refers to missing patch {}", p.patch)));
    }
    let rows = sigma
        .points
        .par_iter()
        .enumerate()
        .map(|(j, cp)| {
            let y: &[f64] = &cp.y;
            if cp.boundary && op.dirichlet_boundary {
                if let Some(k) = cp.node {
                    let meta = RowMeta {
                        y: cp.y.clone(),
                        patch: cp.patch,
                        dirichlet: true,
                        residual: 0.0,
                    };
                    return Ok((vec![(k, 1.0)], rhs.boundary(y), meta));
                }
            }
            let wrap = |e: Error| Error::Assembly {
                row: j,
                patch: cp.patch,
                source: Box::new(e),
            };
            let sw = row_weights(space, cp.patch, op, y, route).map_err(wrap)?;
            let meta = RowMeta {
                y: cp.y.clone(),
                patch: cp.patch,
                dirichlet: false,
                residual: sw.residual,
            };
            Ok((sw.entries().collect(), rhs.interior(y), meta))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    let mut metas = Vec::with_capacity(rows.len());
    for (e, v, m) in rows {
        entries.push(e);
        b.push(v);
        metas.push(m);
    }
    Ok(GlobalSystem {
        matrix: CsrMatrix::from_rows(nodes.len(), entries)?,
        rhs: b,
        rows: metas,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    SparseLu,
    SparseQr,
    MinNormCgls,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub full_rank: bool,
    /// 1-norm condition estimate of `A` (square) or `sqrt` of that of `A^T A`.
    pub condition_estimate: f64,
    pub method: SolveMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solution {
    pub nodal_values: Vec<f64>,
    pub residual_norm: f64,
    /// `|A^T (A u - b)|`, least squares only.
    pub normal_residual: Option<f64>,
    pub rank: RankReport,
}

/// Runs sparse factorizations on the calling thread, so results do not
/// depend on the size of the worker pool.
pub fn use_serial_factorization() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Singularity threshold for the square solver's condition estimate.
pub const SINGULAR_CONDITION: f64 = 1e15;
/// Rank-deficiency threshold for the least-squares condition estimate.
pub const LSQ_RANK_CONDITION: f64 = 1e7;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &CsrMatrix, u: &[f64], b: &[f64]) -> Vec<f64> {
    a.matvec(u).iter().zip(b).map(|(x, y)| x - y).collect()
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn one_norm_csr(a: &CsrMatrix) -> f64 {
    let mut sums = vec![0.0; a.ncols()];
    for r in 0..a.nrows() {
        let (idx, val) = a.row(r);
        for (&c, v) in idx.iter().zip(val) {
            sums[c] += v.abs();
        }
    }
    sums.into_iter().fold(0.0, f64::max)
}

/// Hager's estimate of `|B|_1` from products with `B` and `B^T`.
fn hager(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>, apply_t: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    for _ in 0..5 {
        let y = apply(&x);
        est = y.iter().map(|v| v.abs()).sum::<f64>();
        if !est.is_finite() {
            return f64::INFINITY;
        }
        let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = apply_t(&xi);
        let (jmax, zmax) =
            z.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc },
            );
        let zx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if zmax <= zx {
            break;
        }
        x = vec![0.0; n];
        x[jmax] = 1.0;
    }
    est
}

/// Direct sparse LU solve of a square system.
pub fn solve_square(gs: &GlobalSystem) -> Result<Solution> {
    let (m, n) = (gs.nrows(), gs.ncols());
    if m != n {
        return Err(Error::config(format!("square solve needs M = N, got {m} x {n}")));
    }
    let a = gs.matrix.to_faer()?;
    let lu = a.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let u = to_vec(&lu.solve(&col(&gs.rhs)));
    let inv_norm = hager(
        n,
        |x| to_vec(&lu.solve(&col(x))),
        |x| to_vec(&lu.solve_transpose(&col(x))),
    );
    let condition = one_norm_csr(&gs.matrix) * inv_norm;
    let res = gs.residual_norm(&u);
    let bnorm = norm2(&gs.rhs);
    let finite = u.iter().all(|v| v.is_finite());
    let res_ok = bnorm == 0.0 || res <= 1e-8 * bnorm;
    if !finite || !(condition <= SINGULAR_CONDITION) || !res_ok {
        return Err(Error::SingularSystem { condition });
    }
    Ok(Solution {
        nodal_values: u,
        residual_norm: res,
        normal_residual: None,
        rank: RankReport {
            full_rank: true,
            condition_estimate: condition,
            method: SolveMethod::SparseLu,
        },
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LsqOptions {
    /// Scale every row to unit 2-norm before solving.
    #[serde(default)]
    pub equilibrate: bool,
}

/// Minimizes `|A u - b|_2` by sparse QR; rank-deficient systems fall back to
/// the minimum-norm solution and are flagged.
pub fn solve_least_squares(gs: &GlobalSystem, opts: LsqOptions) -> Result<Solution> {
    let (m, n) = (gs.nrows(), gs.ncols());
    if m < n {
        return Err(Error::config(format!("least squares needs M >= N, got {m} x {n}")));
    }
    let mut a = gs.matrix.clone();
    let mut b = gs.rhs.clone();
    if opts.equilibrate {
        for r in 0..m {
            let s = norm2(a.row(r).1);
            if s > 0.0 {
                a.scale_row(r, 1.0 / s);
                b[r] /= s;
            }
        }
    }
    let normal = a.normal_matrix()?;
    let condition = match normal.sp_cholesky(Side::Lower) {
        Ok(llt) => {
            let inv = hager(n, |x| to_vec(&llt.solve(&col(x))), |x| to_vec(&llt.solve(&col(x))));
            let mut ata_norm: f64 = 0.0;
            for c in 0..n {
                let s: f64 = normal.val_of_col(c).iter().map(|v| v.abs()).sum();
                ata_norm = ata_norm.max(s);
            }
            (ata_norm * inv).sqrt()
        }
        Err(_) => f64::INFINITY,
    };
    let full_rank = condition.is_finite() && condition <= LSQ_RANK_CONDITION;
    let anorm = a.frobenius_norm();
    let bnorm = norm2(&b);
    let normal_ok = |u: &[f64]| {
        let nr = norm2(&a.transpose_matvec(&residual(&a, u, &b)));
        (nr, nr <= 1e-7 * anorm * bnorm || bnorm == 0.0)
    };
    if full_rank {
        let qr = a
            .to_faer()?
            .sp_qr()
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let u = to_vec(&qr.solve_lstsq(&col(&b)));
        let (nr, ok) = normal_ok(&u);
        if u.iter().all(|v| v.is_finite()) && ok {
            return Ok(Solution {
                residual_norm: gs.residual_norm(&u),
                nodal_values: u,
                normal_residual: Some(nr),
                rank: RankReport {
                    full_rank: true,
                    condition_estimate: condition,
                    method: SolveMethod::SparseQr,
                },
            });
        }
    }
    log::warn!(
        "least-squares system is rank deficient (condition estimate {condition:e}); using the minimum-norm solution"
    );
    let u = cgls(&a, &b, 1e-10, 20 * n.max(10));
    let (nr, _) = normal_ok(&u);
    Ok(Solution {
        residual_norm: gs.residual_norm(&u),
        nodal_values: u,
        normal_residual: Some(nr),
        rank: RankReport {
            full_rank: false,
            condition_estimate: condition,
            method: SolveMethod::MinNormCgls,
        },
    })
}

/// Conjugate gradients on the normal equations from `x = 0`, which converges
/// to the minimum-norm least-squares solution.
fn cgls(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = a.ncols();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut s = a.transpose_matvec(&r);
    let mut p = s.clone();
    let s0 = norm2(&s);
    let mut gamma = s0 * s0;
    if s0 == 0.0 {
        return x;
    }
    for _ in 0..max_iter {
        let q = a.matvec(&p);
        let qq: f64 = q.iter().map(|v| v * v).sum();
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = a.transpose_matvec(&r);
        let gnew: f64 = s.iter().map(|v| v * v).sum();
        if gnew.sqrt() <= tol * s0 {
            break;
        }
        let beta = gnew / gamma;
        gamma = gnew;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    x
}
