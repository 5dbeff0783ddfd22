//! Node clouds, boundary flags and neighbor queries.
//!
//! Influence sets `X_i` are always produced from a node set by a knn or a
//! range query around a center; the enclosing regions are never built.

mod kdtree;

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub(crate) use kdtree::{dist2, KdTree};

/// An owned point in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl std::ops::Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Bounds { lo, hi };
        b.validate()?;
        Ok(b)
    }

    /// The unit cube `[0, 1]^d`.
    pub fn unit(dim: usize) -> Self {
        Bounds {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() {
            return Err(Error::invalid("bounds must have dimension >= 1"));
        }
        if self.lo.len() != self.hi.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lo.len(),
                got: self.hi.len(),
            });
        }
        for (a, b) in self.lo.iter().zip(&self.hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::invalid(format!("degenerate bounds [{a}, {b}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .any(|(v, (a, b))| *v == *a || *v == *b)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// Nodes `X = {x_1, ..., x_N}` with Dirichlet flags and a spatial index.
///
/// Immutable after construction; node indices never change.
#[derive(Clone, Debug)]
pub struct NodeSet {
    dim: usize,
    coords: Vec<f64>,
    boundary: Vec<bool>,
    spacing: f64,
    tree: KdTree,
}

/// A center and the node indices selected around it, ordered by distance then index.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceSet {
    pub center: Point,
    pub center_node: Option<usize>,
    pub members: Vec<usize>,
}

impl InfluenceSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.contains(&node)
    }

    pub fn position(&self, node: usize) -> Option<usize> {
        self.members.iter().position(|&m| m == node)
    }
}

impl NodeSet {
    /// Builds a node set from a flat, row-major coordinate buffer.
    pub fn new(dim: usize, coords: Vec<f64>, boundary: Vec<bool>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::invalid("coordinate buffer is not a multiple of the dimension"));
        }
        let n = coords.len() / dim;
        if boundary.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: boundary.len(),
            });
        }
        if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "node {} has a non-finite coordinate",
                bad / dim
            )));
        }
        let tree = KdTree::new(dim, &coords);
        for j in 0..n {
            let p = &coords[j * dim..(j + 1) * dim];
            let near = tree.knn(p, 2);
            if let Some(other) = near.iter().find(|c| c.index != j && c.dist2 == 0.0) {
                return Err(Error::invalid(format!(
                    "nodes {} and {} coincide",
                    j.min(other.index),
                    j.max(other.index)
                )));
            }
        }
        let spacing = bbox_spacing(dim, &coords);
        Ok(NodeSet {
            dim,
            coords,
            boundary,
            spacing,
            tree,
        })
    }

    pub fn from_points(points: &[Vec<f64>], boundary: Vec<bool>) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        NodeSet::new(dim, coords, boundary)
    }

    fn with_spacing(mut self, h: f64) -> Self {
        self.spacing = h;
        self
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        self.boundary[j]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Characteristic node spacing `h`: the grid step for generated grids,
    /// otherwise `(bounding-box volume / N)^(1/d)`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    fn check_dim(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Index of a node with exactly these coordinates, if any.
    pub fn find(&self, p: &[f64]) -> Option<usize> {
        if p.len() != self.dim {
            return None;
        }
        self.tree.knn(p, 1).first().filter(|n| n.dist2 == 0.0).map(|n| n.index)
    }

    /// The `k` nearest nodes to `center`, ties broken by ascending index.
    pub fn knn(&self, center: &[f64], k: usize) -> Result<InfluenceSet> {
        self.check_dim(center)?;
        if k == 0 || k > self.len() {
            return Err(Error::invalid(format!(
                "knn requires 1 <= k <= N (k = {k}, N = {})",
                self.len()
            )));
        }
        let members = self.tree.knn(center, k).into_iter().map(|n| n.index).collect();
        Ok(self.influence(center, members))
    }

    /// All nodes within Euclidean distance `radius` of `center`.
    pub fn range_search(&self, center: &[f64], radius: f64) -> Result<InfluenceSet> {
        self.check_dim(center)?;
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        let members = self
            .tree
            .within(center, radius * radius)
            .into_iter()
            .map(|n| n.index)
            .collect();
        Ok(self.influence(center, members))
    }

    /// Distance-sorted `(index, squared distance)` pairs for the `k` nearest nodes.
    pub(crate) fn nearest_with_dist2(&self, center: &[f64], k: usize) -> Vec<(usize, f64)> {
        self.tree
            .knn(center, k)
            .into_iter()
            .map(|n| (n.index, n.dist2))
            .collect()
    }

    fn influence(&self, center: &[f64], members: Vec<usize>) -> InfluenceSet {
        InfluenceSet {
            center: Point(center.to_vec()),
            center_node: self.find(center),
            members,
        }
    }

    /// Reads nodes from CSV with header `x1,...,xd,boundary`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let ncols = headers.len();
        if ncols < 2 || headers.get(ncols - 1).map(str::trim) != Some("boundary") {
            return Err(Error::invalid("node CSV header must be `x1,...,xd,boundary`"));
        }
        for (a, h) in headers.iter().take(ncols - 1).enumerate() {
            if h.trim() != format!("x{}", a + 1) {
                return Err(Error::invalid(format!("unexpected node CSV column `{h}`")));
            }
        }
        let dim = ncols - 1;
        let mut coords = Vec::new();
        let mut boundary = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            // the csv reader itself rejects ragged rows
            let rec = rec?;
            for a in 0..dim {
                let v: f64 = rec[a]
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("row {}: bad coordinate `{}`", line + 1, &rec[a])))?;
                coords.push(v);
            }
            boundary.push(match rec[dim].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::invalid(format!(
                        "row {}: boundary flag must be 0 or 1, got `{other}`",
                        line + 1
                    )))
                }
            });
        }
        NodeSet::new(dim, coords, boundary)
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        NodeSet::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|a| format!("x{a}")).collect();
        header.push("boundary".into());
        w.write_record(&header)?;
        for (j, p) in self.points().enumerate() {
            let mut rec: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
            rec.push(if self.boundary[j] { "1" } else { "0" }.into());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bbox_spacing(dim: usize, coords: &[f64]) -> f64 {
    let n = coords.len() / dim;
    if n < 2 {
        return 1.0;
    }
    let mut vol = 1.0;
    for a in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in coords.chunks_exact(dim) {
            lo = lo.min(p[a]);
            hi = hi.max(p[a]);
        }
        vol *= (hi - lo).max(f64::MIN_POSITIVE);
    }
    (vol / n as f64).powf(1.0 / dim as f64)
}

/// Uniform tensor grid with `n_per_axis` nodes along every axis; the first
/// axis varies fastest. Boundary flags mark the box faces.
pub fn generate_grid(dim: usize, n_per_axis: usize, bounds: &Bounds) -> Result<NodeSet> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if n_per_axis < 2 {
        return Err(Error::invalid("a grid needs at least 2 nodes per axis"));
    }
    bounds.validate()?;
    if bounds.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bounds.dim(),
        });
    }
    let total = n_per_axis
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::invalid("grid too large"))?;
    let mut coords = Vec::with_capacity(total * dim);
    let mut boundary = Vec::with_capacity(total);
    let last = n_per_axis - 1;
    for flat in 0..total {
        let mut rem = flat;
        let mut on_face = false;
        for a in 0..dim {
            let i = rem % n_per_axis;
            rem /= n_per_axis;
            on_face |= i == 0 || i == last;
            coords.push(grid_coord(bounds.lo[a], bounds.hi[a], i, last));
        }
        boundary.push(on_face);
    }
    let h = (0..dim)
        .map(|a| (bounds.hi[a] - bounds.lo[a]) / last as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(NodeSet::new(dim, coords, boundary)?.with_spacing(h))
}

fn grid_coord(lo: f64, hi: f64, i: usize, last: usize) -> f64 {
    if i == last {
        hi
    } else {
        lo + (hi - lo) * (i as f64 / last as f64)
    }
}

/// Source of interior points for [`generate_scattered`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PointSource {
    /// Halton sequence in the first `d` prime bases, starting at index 1.
    LowDiscrepancy,
    SeededRandom {
        seed: u64,
    },
}

/// `count` interior points plus an explicit ring of boundary nodes.
///
/// Boundary nodes are the face nodes of a tensor grid with
/// `m = round(count^(1/d)) + 1` nodes per axis; interior points are kept a
/// distance `0.4 * h_b` away from the faces, where `h_b` is that grid's step.
pub fn generate_scattered(dim: usize, count: usize, bounds: &Bounds, source: PointSource) -> Result<NodeSet> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if count == 0 {
        return Err(Error::invalid("scattered node count must be >= 1"));
    }
    bounds.validate()?;
    if bounds.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bounds.dim(),
        });
    }
    let m = ((count as f64).powf(1.0 / dim as f64).round() as usize + 1).max(2);
    let ring = generate_grid(dim, m, bounds)?;

    let mut coords = Vec::new();
    let mut boundary = Vec::new();
    let mut seen = HashSet::new();
    for (j, p) in ring.points().enumerate() {
        if ring.is_boundary(j) {
            seen.insert(key(p));
            coords.extend_from_slice(p);
            boundary.push(true);
        }
    }

    let margin: Vec<f64> = (0..dim)
        .map(|a| 0.4 * (bounds.hi[a] - bounds.lo[a]) / (m - 1) as f64)
        .collect();
    let map = |a: usize, u: f64| {
        let lo = bounds.lo[a] + margin[a];
        let hi = bounds.hi[a] - margin[a];
        lo + (hi - lo) * u
    };

    let mut rng = match source {
        PointSource::SeededRandom { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        PointSource::LowDiscrepancy => None,
    };
    let mut added = 0;
    let mut seq = 1u64;
    while added < count {
        let p: Vec<f64> = match rng.as_mut() {
            Some(rng) => (0..dim).map(|a| map(a, rng.random::<f64>())).collect(),
            None => (0..dim)
                .map(|a| map(a, radical_inverse(seq, PRIMES[a % PRIMES.len()])))
                .collect(),
        };
        seq += 1;
        if seen.insert(key(&p)) {
            coords.extend_from_slice(&p);
            boundary.push(false);
            added += 1;
        }
    }
    NodeSet::new(dim, coords, boundary)
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}
