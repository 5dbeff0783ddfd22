//! Partition-of-unity blending of patches into one globally defined function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist2, InfluenceSet, KdTree, NodeSet};
use crate::spaces::{local_interpolate, stencil_radius, PatchSpace, SpaceSpec};
use crate::spline::{OverlapSpline, OverlapSplineSpace};

/// Default ratio of ball radius to stencil radius.
pub const DEFAULT_RADIUS_FACTOR: f64 = 1.25;

/// Radial bump profile as a function of `t = |x - c_i| / r_i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `(1 - t)_+^2`, C1.
    #[default]
    Quadratic,
    /// `(1 - t)_+^4 (4t + 1)`, C2.
    Wendland,
}

impl Profile {
    pub fn eval(&self, t: f64) -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        match self {
            Profile::Quadratic => s * s,
            Profile::Wendland => s.powi(4) * (4.0 * t + 1.0),
        }
    }
}

/// Shepard-normalized bumps `phi(|x - c_i| / r_i)`.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    dim: usize,
    profile: Profile,
    centers: Vec<f64>,
    radii: Vec<f64>,
    max_radius: f64,
    tree: KdTree,
}

impl PartitionOfUnity {
    pub fn new(dim: usize, centers: &[Vec<f64>], radii: Vec<f64>) -> Result<Self> {
        if centers.len() != radii.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                got: radii.len(),
            });
        }
        if centers.is_empty() {
            return Err(Error::invalid("partition of unity needs at least one ball"));
        }
        if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::invalid(format!("ball radius must be positive, got {r}")));
        }
        let mut flat = Vec::with_capacity(centers.len() * dim);
        for c in centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
            flat.extend_from_slice(c);
        }
        let max_radius = radii.iter().copied().fold(0.0, f64::max);
        Ok(PartitionOfUnity {
            dim,
            tree: KdTree::new(dim, &flat),
            centers: flat,
            radii,
            max_radius,
            profile: Profile::Quadratic,
        })
    }

    pub fn with_profile(mut self, profile: Profile) -> Self {
        self.profile = profile;
        self
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    /// One ball per patch with `r_i = min(factor * rho_i, d_i)`, where `rho_i`
    /// is the stencil radius and `d_i` the distance to the nearest node outside `X_i`.
    pub fn for_space(space: &OverlapSplineSpace, factor: f64) -> Result<Self> {
        let nodes = space.nodes();
        let infls: Vec<&InfluenceSet> = space.patches().iter().map(|p| &p.influence).collect();
        Self::for_influence_sets(nodes, &infls, factor)
    }

    pub fn for_influence_sets(nodes: &NodeSet, infls: &[&InfluenceSet], factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::invalid(format!("radius factor must be positive, got {factor}")));
        }
        let mut centers = Vec::with_capacity(infls.len());
        let mut radii = Vec::with_capacity(infls.len());
        for infl in infls {
            let rho = stencil_radius(nodes, infl);
            let outside = nearest_outside(nodes, infl);
            let r = match (rho > 0.0, outside) {
                (true, Some(d)) => (factor * rho).min(d),
                (true, None) => factor * rho,
                (false, Some(d)) => d,
                (false, None) => 1.0,
            };
            centers.push(infl.center.0.clone());
            radii.push(r);
        }
        Self::new(nodes.dim(), &centers, radii)
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    /// Unnormalized bump values of the balls containing `x`, ascending by ball index.
    pub fn bumps(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .tree
            .within(x, self.max_radius * self.max_radius)
            .into_iter()
            .filter_map(|n| {
                let t = n.dist2.sqrt() / self.radii[n.index];
                (t < 1.0).then(|| (n.index, self.profile.eval(t)))
            })
            .collect();
        out.sort_unstable_by_key(|e| e.0);
        out
    }

    /// `(i, gamma_i(x))` for every ball with `gamma_i(x) > 0`.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut b = self.bumps(x);
        let total: f64 = b.iter().map(|e| e.1).sum();
        if !(total > 0.0) {
            return Err(Error::NotCovered);
        }
        for e in &mut b {
            e.1 /= total;
        }
        Ok(b)
    }

    pub fn is_covered(&self, x: &[f64]) -> bool {
        x.len() == self.dim && !self.bumps(x).is_empty()
    }
}

fn nearest_outside(nodes: &NodeSet, infl: &InfluenceSet) -> Option<f64> {
    let mut k = (infl.len() + 1).min(nodes.len());
    loop {
        let near = nodes.nearest_with_dist2(&infl.center, k);
        if let Some((_, d2)) = near.iter().find(|(j, _)| !infl.contains(*j)) {
            return Some(d2.sqrt());
        }
        if k == nodes.len() {
            return None;
        }
        k = (2 * k).min(nodes.len());
    }
}

/// `s_Gamma(x) = sum_i gamma_i(x) p_i(x)`; balls are matched to patches by index.
pub fn blend(s: &OverlapSpline<'_>, pou: &PartitionOfUnity, x: &[f64]) -> Result<f64> {
    check_layout(s.space().num_patches(), pou)?;
    Ok(pou.weights(x)?.into_iter().map(|(i, g)| g * s.patch_value(i, x)).sum())
}

/// Value of the lowest-index patch whose ball contains `x`.
pub fn pick_first(s: &OverlapSpline<'_>, pou: &PartitionOfUnity, x: &[f64]) -> Result<f64> {
    check_layout(s.space().num_patches(), pou)?;
    let w = pou.weights(x)?;
    Ok(s.patch_value(w[0].0, x))
}

fn check_layout(patches: usize, pou: &PartitionOfUnity) -> Result<()> {
    if patches != pou.len() {
        return Err(Error::DimensionMismatch {
            expected: patches,
            got: pou.len(),
        });
    }
    Ok(())
}

/// A patch fitted on its own, without a connection condition.
#[derive(Clone, Debug)]
pub struct LocalFit {
    pub influence: InfluenceSet,
    pub space: PatchSpace,
    pub coeffs: Vec<f64>,
}

impl LocalFit {
    /// Interpolates `values` (indexed by node) on `infl`.
    pub fn interpolate(nodes: &NodeSet, infl: InfluenceSet, spec: &SpaceSpec, values: &[f64]) -> Result<Self> {
        let space = spec.build(nodes, &infl)?;
        let local: Vec<f64> = infl.members.iter().map(|&k| values[k]).collect();
        let coeffs = local_interpolate(&space, nodes, &infl.members, &local)?;
        Ok(LocalFit {
            influence: infl,
            space,
            coeffs,
        })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.space.value(&self.coeffs, x)
    }
}

/// Blend of a disconnected overlap spline given as independent local fits.
pub fn blend_disconnected(fits: &[LocalFit], pou: &PartitionOfUnity, x: &[f64]) -> Result<f64> {
    check_layout(fits.len(), pou)?;
    Ok(pou.weights(x)?.into_iter().map(|(i, g)| g * fits[i].value(x)).sum())
}

/// Euclidean distance.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_grid, Bounds};
    use crate::spline::{build_space, Centers, Selector};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space2d(n: usize) -> OverlapSplineSpace {
        let h = 1.0 / n as f64;
        build_space(
            generate_grid(2, n + 1, &Bounds::unit(2)).unwrap(),
            &Centers::InteriorNodes,
            &Selector::Range {
                radius: h * (1.0 + 1e-6),
            },
            &SpaceSpec::Poly {
                degree: 2,
                sublist: Some(vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![0, 2]]),
            },
        )
        .unwrap()
    }

    #[test]
    fn weights_sum_to_one_and_vanish_outside() {
        let s = space2d(6);
        let pou = PartitionOfUnity::for_space(&s, DEFAULT_RADIUS_FACTOR).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut checked = 0;
        while checked < 300 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let Ok(w) = pou.weights(&x) else { continue };
            let sum: f64 = w.iter().map(|e| e.1).sum();
            assert!((sum - 1.0).abs() <= 1e-12);
            for (i, g) in w {
                assert!(g > 0.0);
                assert!(distance(&x, pou.center(i)) < pou.radii()[i]);
            }
            checked += 1;
        }
    }

    #[test]
    fn blend_at_nodes_equals_restriction() {
        let s = space2d(5);
        let pou = PartitionOfUnity::for_space(&s, DEFAULT_RADIUS_FACTOR).unwrap();
        let vals: Vec<f64> = s.nodes().points().map(|p| (3.0 * p[0]).sin() + p[1]).collect();
        let sp = OverlapSpline::from_nodal_values(&s, &vals).unwrap();
        for (k, v) in vals.iter().enumerate() {
            assert_abs_diff_eq!(blend(&sp, &pou, s.nodes().point(k)).unwrap(), *v, epsilon = 1e-9);
        }
    }

    #[test]
    fn single_ball_and_uncovered_points() {
        let pou = PartitionOfUnity::new(1, &[vec![0.0]], vec![0.5]).unwrap();
        assert_eq!(pou.weights(&[0.2]).unwrap(), vec![(0, 1.0)]);
        assert!(matches!(pou.weights(&[0.6]), Err(Error::NotCovered)));
        assert!(PartitionOfUnity::new(1, &[vec![0.0]], vec![0.0]).is_err());
    }

    #[test]
    fn bump_is_continuous_across_ball_edges() {
        for profile in [Profile::Quadratic, Profile::Wendland] {
            let pou = PartitionOfUnity::new(1, &[vec![0.0], vec![0.8]], vec![0.5, 0.5])
                .unwrap()
                .with_profile(profile);
            let g0 = |x: f64| {
                pou.weights(&[x])
                    .map(|w| w.iter().find(|e| e.0 == 0).map_or(0.0, |e| e.1))
                    .unwrap_or(0.0)
            };
            let mut x = 0.31;
            while x < 0.5 {
                assert!((g0(x + 1e-6) - g0(x)).abs() <= 1e-4);
                x += 0.001;
            }
        }
    }

    #[test]
    fn wendland_profile_values() {
        assert_eq!(Profile::Wendland.eval(0.0), 1.0);
        assert_eq!(Profile::Wendland.eval(1.0), 0.0);
        assert!((Profile::Wendland.eval(0.5) - 0.1875).abs() < 1e-15);
    }
}
