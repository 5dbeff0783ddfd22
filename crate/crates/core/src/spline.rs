//! Overlap-spline spaces `S(X, G, P)`: patches on overlapping influence sets
//! tied together by the connection condition at shared nodes.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{InfluenceSet, NodeSet, Point};
use crate::linalg::{null_space, numerical_rank};
use crate::operator::Operator;
use crate::spaces::{
    evaluation_matrix, local_interpolate, poly_dim, unisolvency_rank, PatchSpace, PolySpace, SpaceSpec,
};

/// Largest total coefficient count accepted by [`dimension_analysis`].
pub const DENSE_ANALYSIS_LIMIT: usize = 5000;

/// Where patches are centered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "list", rename_all = "kebab-case")]
pub enum Centers {
    AllNodes,
    InteriorNodes,
    Nodes(Vec<usize>),
    Points(Vec<Vec<f64>>),
}

/// How the influence set `X_i` is picked around a center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Selector {
    Knn {
        k: usize,
    },
    Range {
        radius: f64,
    },
    /// Starts with `k` neighbors and adds the next nearest until the polynomial
    /// part is unisolvent, up to `3 * dim P`.
    KnnUnisolvent {
        k: usize,
    },
}

#[derive(Clone, Debug)]
pub struct Patch {
    pub influence: InfluenceSet,
    pub space: PatchSpace,
    /// Singleton `span{1}` patch added for a boundary node no selector reached.
    pub pad: bool,
    pub iset: bool,
}

#[derive(Clone, Debug)]
pub struct OverlapSplineSpace {
    nodes: NodeSet,
    patches: Vec<Patch>,
    memberships: Vec<Vec<usize>>,
}

impl OverlapSplineSpace {
    /// Assembles a space from explicit patches. Nodes outside every `X_i` are an error.
    pub fn from_patches(nodes: NodeSet, patches: Vec<(InfluenceSet, PatchSpace)>) -> Result<Self> {
        let patches = patches
            .into_iter()
            .map(|(influence, space)| {
                let (_, iset) = unisolvency_rank(&space, &nodes, &influence.members);
                Patch {
                    influence,
                    space,
                    pad: false,
                    iset,
                }
            })
            .collect();
        let space = Self::with_memberships(nodes, patches)?;
        if let Some(j) = space.memberships.iter().position(|m| m.is_empty()) {
            return Err(Error::UncoveredNode(j));
        }
        Ok(space)
    }

    fn with_memberships(nodes: NodeSet, patches: Vec<Patch>) -> Result<Self> {
        let mut memberships = vec![Vec::new(); nodes.len()];
        for (i, p) in patches.iter().enumerate() {
            if p.space.spatial_dim() != nodes.dim() {
                return Err(Error::DimensionMismatch {
                    expected: nodes.dim(),
                    got: p.space.spatial_dim(),
                });
            }
            for &k in &p.influence.members {
                if k >= nodes.len() {
                    return Err(Error::invalid(format!("patch {i} references node {k}")));
                }
                if memberships[k].last() != Some(&i) {
                    memberships[k].push(i);
                }
            }
        }
        Ok(OverlapSplineSpace {
            nodes,
            patches,
            memberships,
        })
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch(&self, i: usize) -> &Patch {
        &self.patches[i]
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    /// Patches containing node `k`, ascending.
    pub fn memberships(&self, k: usize) -> &[usize] {
        &self.memberships[k]
    }

    pub fn is_interpolatory(&self) -> bool {
        self.patches.iter().all(|p| p.iset)
    }

    /// Indices of patches whose `X_i` is not an I-set for `P_i`.
    pub fn failing_patches(&self) -> Vec<usize> {
        (0..self.patches.len()).filter(|&i| !self.patches[i].iset).collect()
    }

    pub fn coefficient_count(&self) -> usize {
        self.patches.iter().map(|p| p.space.len()).sum()
    }

    /// Lower bound `|X| + sum dim P_i - sum |X_i|`.
    pub fn lower_bound(&self) -> i64 {
        self.nodes.len() as i64
            + self
                .patches
                .iter()
                .map(|p| p.space.len() as i64 - p.influence.len() as i64)
                .sum::<i64>()
    }
}

/// Builds `S(X, G, P)` by selecting an influence set around every center.
///
/// Boundary nodes left uncovered receive a `span{1}` pad patch; uncovered
/// interior nodes are an error.
pub fn build_space(
    nodes: NodeSet,
    centers: &Centers,
    selector: &Selector,
    spec: &SpaceSpec,
) -> Result<OverlapSplineSpace> {
    let dim = nodes.dim();
    let center_points: Vec<Vec<f64>> = match centers {
        Centers::AllNodes => nodes.points().map(<[f64]>::to_vec).collect(),
        Centers::InteriorNodes => (0..nodes.len())
            .filter(|&j| !nodes.is_boundary(j))
            .map(|j| nodes.point(j).to_vec())
            .collect(),
        Centers::Nodes(list) => list
            .iter()
            .map(|&j| {
                if j < nodes.len() {
                    Ok(nodes.point(j).to_vec())
                } else {
                    Err(Error::invalid(format!("center node {j} out of range")))
                }
            })
            .collect::<Result<_>>()?,
        Centers::Points(pts) => {
            if let Some(p) = pts.iter().find(|p| p.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            pts.clone()
        }
    };
    if center_points.is_empty() {
        return Err(Error::config("no patch centers"));
    }
    let mut patches = center_points
        .par_iter()
        .map(|c| select_patch(&nodes, c, selector, spec))
        .collect::<Result<Vec<_>>>()?;

    let mut covered = vec![false; nodes.len()];
    for p in &patches {
        for &k in &p.influence.members {
            covered[k] = true;
        }
    }
    for j in 0..nodes.len() {
        if covered[j] {
            continue;
        }
        if !nodes.is_boundary(j) {
            return Err(Error::UncoveredNode(j));
        }
        let c = nodes.point(j);
        let space = PatchSpace::Poly(PolySpace::full(dim, 0).localized(c, 1.0)?);
        patches.push(Patch {
            influence: InfluenceSet {
                center: Point(c.to_vec()),
                center_node: Some(j),
                members: vec![j],
            },
            space,
            pad: true,
            iset: true,
        });
    }
    OverlapSplineSpace::with_memberships(nodes, patches)
}

fn select_patch(nodes: &NodeSet, center: &[f64], selector: &Selector, spec: &SpaceSpec) -> Result<Patch> {
    let (influence, space) = match *selector {
        Selector::Knn { k } => {
            let infl = nodes.knn(center, k)?;
            let space = spec.build(nodes, &infl)?;
            (infl, space)
        }
        Selector::Range { radius } => {
            let infl = nodes.range_search(center, radius)?;
            if infl.is_empty() {
                return Err(Error::config(format!(
                    "range {radius} around {center:?} selects no nodes"
                )));
            }
            let space = spec.build(nodes, &infl)?;
            (infl, space)
        }
        Selector::KnnUnisolvent { k } => grow_until_unisolvent(nodes, center, k, spec)?,
    };
    let (_, iset) = unisolvency_rank(&space, nodes, &influence.members);
    Ok(Patch {
        influence,
        space,
        pad: false,
        iset,
    })
}

/// Dimension of the polynomial part whose unisolvency is required.
fn poly_target(spec: &SpaceSpec, dim: usize) -> usize {
    match spec.resolved() {
        SpaceSpec::Poly { degree, sublist } => sublist.map_or(poly_dim(dim, degree), |s| s.len()),
        SpaceSpec::Gauss {
            augmentation_degree, ..
        }
        | SpaceSpec::Polyharmonic {
            augmentation_degree, ..
        } => augmentation_degree.map_or(0, |q| poly_dim(dim, q)),
    }
}

fn grow_until_unisolvent(
    nodes: &NodeSet,
    center: &[f64],
    k: usize,
    spec: &SpaceSpec,
) -> Result<(InfluenceSet, PatchSpace)> {
    let target = poly_target(spec, nodes.dim());
    let cap = (3 * target).max(k).min(nodes.len());
    let mut k = k.min(nodes.len()).max(1);
    loop {
        let infl = nodes.knn(center, k)?;
        let space = spec.build(nodes, &infl)?;
        let rank = match &space {
            PatchSpace::Poly(_) => unisolvency_rank(&space, nodes, &infl.members).0,
            PatchSpace::Kernel(ks) => ks.augmentation_rank(),
        };
        if rank >= target {
            return Ok((infl, space));
        }
        if k >= cap {
            return Err(Error::NotISet {
                rank,
                dim: target,
                nodes: k,
            });
        }
        k += 1;
    }
}

/// Dimension of `S` together with the split into kernel and image of the restriction map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub dim: usize,
    pub ker: usize,
    pub im: usize,
    pub lower_bound: i64,
    pub upper_bound_unisolvent: Option<usize>,
    pub interpolatory: bool,
}

/// Dense rank computation on the connection-constraint matrix.
///
/// Each node in `m_k` patches contributes `m_k - 1` rows comparing its first
/// patch with each of the others.
pub fn dimension_analysis(space: &OverlapSplineSpace) -> Result<DimensionReport> {
    let d = space.coefficient_count();
    if d > DENSE_ANALYSIS_LIMIT {
        return Err(Error::TooLarge {
            coefficients: d,
            limit: DENSE_ANALYSIS_LIMIT,
        });
    }
    let mut offsets = Vec::with_capacity(space.num_patches());
    let mut acc = 0;
    for p in space.patches() {
        offsets.push(acc);
        acc += p.space.len();
    }
    let nodes = space.nodes();
    let n = nodes.len();
    let values: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|k| {
            space
                .memberships(k)
                .iter()
                .map(|&i| space.patch(i).space.eval_all(nodes.point(k)))
                .collect()
        })
        .collect();
    let nrows: usize = (0..n).map(|k| space.memberships(k).len().saturating_sub(1)).sum();
    let mut c = DMatrix::zeros(nrows, d);
    let mut e = DMatrix::zeros(n, d);
    let mut row = 0;
    for k in 0..n {
        let mem = space.memberships(k);
        let Some(&first) = mem.first() else { continue };
        for (b, v) in values[k][0].iter().enumerate() {
            e[(k, offsets[first] + b)] = *v;
        }
        for (t, &other) in mem.iter().enumerate().skip(1) {
            for (b, v) in values[k][0].iter().enumerate() {
                c[(row, offsets[first] + b)] += *v;
            }
            for (b, v) in values[k][t].iter().enumerate() {
                c[(row, offsets[other] + b)] -= *v;
            }
            row += 1;
        }
    }
    let (z, rank) = null_space(&c);
    let dim = d - rank;
    let im = if dim == 0 { 0 } else { numerical_rank(&(&e * &z)) };
    let unisolvent = space
        .patches()
        .iter()
        .all(|p| unisolvency_rank(&p.space, nodes, &p.influence.members).0 == p.space.len());
    Ok(DimensionReport {
        dim,
        ker: dim - im,
        im,
        lower_bound: space.lower_bound(),
        upper_bound_unisolvent: unisolvent.then_some(n),
        interpolatory: space.is_interpolatory(),
    })
}

/// An element `s = {p_i}` of an overlap-spline space, stored as per-patch coefficients.
#[derive(Clone, Debug)]
pub struct OverlapSpline<'a> {
    space: &'a OverlapSplineSpace,
    coeffs: Vec<Vec<f64>>,
}

fn connection_tol(v: f64) -> f64 {
    1e-9 * (1.0 + v.abs())
}

impl<'a> OverlapSpline<'a> {
    /// Wraps coefficients and checks the connection condition.
    pub fn new(space: &'a OverlapSplineSpace, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.len() != space.num_patches() {
            return Err(Error::DimensionMismatch {
                expected: space.num_patches(),
                got: coeffs.len(),
            });
        }
        for (p, c) in space.patches().iter().zip(&coeffs) {
            if p.space.len() != c.len() {
                return Err(Error::DimensionMismatch {
                    expected: p.space.len(),
                    got: c.len(),
                });
            }
        }
        let s = OverlapSpline { space, coeffs };
        s.nodal_values()?;
        Ok(s)
    }

    /// The spline whose patches interpolate `values` on each `X_i`.
    pub fn from_nodal_values(space: &'a OverlapSplineSpace, values: &[f64]) -> Result<Self> {
        let n = space.nodes().len();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: values.len(),
            });
        }
        let failing = space.failing_patches().len();
        if failing > 0 {
            return Err(Error::NotInterpolatory { failing });
        }
        let coeffs = space
            .patches()
            .par_iter()
            .map(|p| {
                let local: Vec<f64> = p.influence.members.iter().map(|&k| values[k]).collect();
                local_interpolate(&p.space, space.nodes(), &p.influence.members, &local)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OverlapSpline { space, coeffs })
    }

    pub fn space(&self) -> &'a OverlapSplineSpace {
        self.space
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    /// `p_i(x)`.
    pub fn patch_value(&self, i: usize, x: &[f64]) -> f64 {
        self.space.patch(i).space.value(&self.coeffs[i], x)
    }

    fn nodal_values(&self) -> Result<Vec<f64>> {
        let nodes = self.space.nodes();
        let mut out = vec![0.0; nodes.len()];
        for (k, slot) in out.iter_mut().enumerate() {
            let mem = self.space.memberships(k);
            let Some(&first) = mem.first() else {
                return Err(Error::UncoveredNode(k));
            };
            let v = self.patch_value(first, nodes.point(k));
            for &other in &mem[1..] {
                let w = self.patch_value(other, nodes.point(k));
                if (v - w).abs() > connection_tol(v) {
                    return Err(Error::InconsistentSpline {
                        node: k,
                        first,
                        second: other,
                        diff: (v - w).abs(),
                    });
                }
            }
            *slot = v;
        }
        Ok(out)
    }

    /// `s|_X`.
    pub fn restriction(&self) -> Result<Vec<f64>> {
        self.nodal_values()
    }
}

/// Row `(k, L l_{k,i}(y))` for `k` in `J_i`, from the Lagrange basis of patch `i`.
pub fn lagrange_row(space: &OverlapSplineSpace, patch: usize, op: &Operator, y: &[f64]) -> Result<Vec<(usize, f64)>> {
    let p = space.patch(patch);
    let members = &p.influence.members;
    let nodes = space.nodes();
    if !p.iset {
        let (rank, _) = unisolvency_rank(&p.space, nodes, members);
        return Err(Error::NotISet {
            rank,
            dim: p.space.len(),
            nodes: members.len(),
        });
    }
    if op.is_identity() {
        if let Some(pos) = members.iter().position(|&k| nodes.point(k) == y) {
            return Ok(members
                .iter()
                .enumerate()
                .map(|(t, &k)| (k, if t == pos { 1.0 } else { 0.0 }))
                .collect());
        }
    }
    let ly = p.space.apply_op_all(op, y);
    let mut delta = vec![0.0; members.len()];
    let mut row = Vec::with_capacity(members.len());
    for (t, &k) in members.iter().enumerate() {
        delta[t] = 1.0;
        let c = local_interpolate(&p.space, nodes, members, &delta)?;
        delta[t] = 0.0;
        row.push((k, c.iter().zip(&ly).map(|(a, b)| a * b).sum()));
    }
    Ok(row)
}

/// Evaluation matrix `[b_k(x_j)]` of patch `i` over `X_i`.
pub fn patch_evaluation_matrix(space: &OverlapSplineSpace, patch: usize) -> DMatrix<f64> {
    let p = space.patch(patch);
    evaluation_matrix(&p.space, space.nodes(), &p.influence.members)
}
