//! Assignment `sigma` of a patch to every collocation point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point};
use crate::spline::OverlapSplineSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaStrategy {
    /// `y_j = x_j` and `sigma(j)` is the patch centered at `x_j`; boundary nodes
    /// without one go to the first patch containing them.
    SameIndex,
    /// Each `y_j` goes to the patch with the nearest center.
    NearestNode,
    /// `Y` lists the nodes of `X_1`, then those of `X_2`, and so on.
    PerSetAggregate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollocationPoint {
    pub y: Point,
    pub patch: usize,
    /// Node index when `y` is a node.
    pub node: Option<usize>,
    pub boundary: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaMap {
    pub strategy: SigmaStrategy,
    pub points: Vec<CollocationPoint>,
}

impl SigmaMap {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sigma(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.patch).collect()
    }

    /// Whether repeated collocation points carry distinct patches.
    pub fn duplicates_are_distinct(&self) -> bool {
        for (j, a) in self.points.iter().enumerate() {
            for b in &self.points[..j] {
                if a.y == b.y && a.patch == b.patch {
                    return false;
                }
            }
        }
        true
    }
}

/// Builds the map; `collocation` is required by nearest-node and rejected otherwise.
pub fn build_sigma(
    space: &OverlapSplineSpace,
    strategy: SigmaStrategy,
    collocation: Option<&[Vec<f64>]>,
) -> Result<SigmaMap> {
    let nodes = space.nodes();
    let points = match strategy {
        SigmaStrategy::SameIndex => {
            if collocation.is_some() {
                return Err(Error::config(
                    "same-index collocates at the nodes; drop the explicit points",
                ));
            }
            let mut centered = vec![None; nodes.len()];
            for (i, p) in space.patches().iter().enumerate() {
                if let Some(c) = p.influence.center_node {
                    centered[c].get_or_insert(i);
                }
            }
            (0..nodes.len())
                .map(|j| {
                    let patch = match centered[j] {
                        Some(i) => i,
                        None if nodes.is_boundary(j) => space.memberships(j)[0],
                        None => {
                            return Err(Error::config(format!(
                                "same-index: no patch is centered at interior node {j}"
                            )))
                        }
                    };
                    Ok(CollocationPoint {
                        y: Point(nodes.point(j).to_vec()),
                        patch,
                        node: Some(j),
                        boundary: nodes.is_boundary(j),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        SigmaStrategy::NearestNode => {
            let ys = collocation.ok_or_else(|| Error::config("nearest-node needs collocation points"))?;
            let dim = nodes.dim();
            let centers: Vec<f64> = space
                .patches()
                .iter()
                .flat_map(|p| p.influence.center.0.clone())
                .collect();
            let tree = KdTree::new(dim, &centers);
            let mut seen: Vec<&[f64]> = Vec::new();
            let mut out = Vec::with_capacity(ys.len());
            for y in ys {
                if y.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: y.len(),
                    });
                }
                // the c-th repetition of a point takes the (c+1)-th nearest center
                let rep = seen.iter().filter(|p| **p == y.as_slice()).count();
                seen.push(y);
                let near = tree.knn(y, rep + 1);
                let Some(pick) = near.get(rep) else {
                    return Err(Error::config(format!(
                        "point {y:?} repeated more often than there are patches"
                    )));
                };
                let node = nodes.find(y);
                out.push(CollocationPoint {
                    y: Point(y.clone()),
                    patch: pick.index,
                    node,
                    boundary: node.is_some_and(|k| nodes.is_boundary(k)),
                });
            }
            out
        }
        SigmaStrategy::PerSetAggregate => {
            if collocation.is_some() {
                return Err(Error::config("per-set-aggregate collocates at the influence sets"));
            }
            let mut out = Vec::new();
            for (i, p) in space.patches().iter().enumerate() {
                for &k in &p.influence.members {
                    out.push(CollocationPoint {
                        y: Point(nodes.point(k).to_vec()),
                        patch: i,
                        node: Some(k),
                        boundary: nodes.is_boundary(k),
                    });
                }
            }
            out
        }
    };
    Ok(SigmaMap { strategy, points })
}
