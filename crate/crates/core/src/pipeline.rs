//! Declarative run configuration and the end-to-end pipeline built from it.
//!
//! A config is TOML (or the same structure as JSON). Every optional field has
//! a serde default, so serializing a parsed config yields the resolved form.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{generate_grid, generate_scattered, Bounds, NodeSet, Point, PointSource};
use crate::ndf::StencilWeights;
use crate::problems::{Manufactured, OperatorSpec, Preset, Problem};
use crate::pum::{blend, distance, PartitionOfUnity, Profile, DEFAULT_RADIUS_FACTOR};
use crate::solve::{
    assemble, build_sigma, row_weights, solve_least_squares, solve_square, GlobalSystem, LsqOptions, Route, SigmaMap,
    SigmaStrategy, Solution,
};
use crate::spaces::SpaceSpec;
use crate::spline::{build_space, Centers, OverlapSpline, OverlapSplineSpace, Selector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub preset: String,
    #[serde(default = "default_solution")]
    pub solution: Manufactured,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
}

fn default_solution() -> Manufactured {
    Manufactured::Sine
}

/// Point sampling for generated clouds; random draws are seeded from [`RunConfig::seed`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sampling {
    #[default]
    LowDiscrepancy,
    SeededRandom,
}

impl Sampling {
    pub fn source(self, seed: u64) -> PointSource {
        match self {
            Sampling::LowDiscrepancy => PointSource::LowDiscrepancy,
            Sampling::SeededRandom => PointSource::SeededRandom { seed },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NodesConfig {
    Grid {
        n_per_axis: usize,
    },
    Scattered {
        count: usize,
        #[serde(default)]
        source: Sampling,
    },
    /// CSV with header `x1..xd,boundary`.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SelectorConfig {
    Knn {
        k: usize,
    },
    KnnUnisolvent {
        k: usize,
    },
    /// Absolute `radius`, or `radius_h` times the node spacing.
    Range {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius_h: Option<f64>,
    },
}

impl SelectorConfig {
    pub fn resolve(&self, spacing: f64) -> Result<Selector> {
        Ok(match *self {
            SelectorConfig::Knn { k } => Selector::Knn { k },
            SelectorConfig::KnnUnisolvent { k } => Selector::KnnUnisolvent { k },
            SelectorConfig::Range {
                radius: Some(r),
                radius_h: None,
            } => Selector::Range { radius: r },
            SelectorConfig::Range {
                radius: None,
                radius_h: Some(f),
            } => Selector::Range { radius: f * spacing },
            SelectorConfig::Range { .. } => {
                return Err(Error::config(
                    "range selector needs exactly one of `radius` and `radius_h`",
                ))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    #[serde(default = "default_centers")]
    pub centers: Centers,
    pub selector: SelectorConfig,
    pub space: SpaceSpec,
}

fn default_centers() -> Centers {
    Centers::AllNodes
}

/// Collocation points for the nearest-node strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationConfig {
    #[serde(default = "yes")]
    pub include_nodes: bool,
    /// Additional points drawn inside the domain.
    #[serde(default)]
    pub extra: usize,
    #[serde(default)]
    pub source: Sampling,
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default = "default_strategy")]
    pub kind: SigmaStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collocation: Option<CollocationConfig>,
}

fn default_strategy() -> SigmaStrategy {
    SigmaStrategy::SameIndex
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: SigmaStrategy::SameIndex,
            collocation: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Collocate,
    Lsq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilConfig {
    /// Node at which the row is computed; uses the patch `sigma` assigns to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    /// Arbitrary point; uses the patch with the nearest center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumConfig {
    #[serde(default = "default_radius_factor")]
    pub radius_factor: f64,
    /// Evaluation grid resolution per axis.
    #[serde(default = "default_eval_grid")]
    pub grid_per_axis: usize,
    #[serde(default)]
    pub profile: Profile,
}

fn default_radius_factor() -> f64 {
    DEFAULT_RADIUS_FACTOR
}

fn default_eval_grid() -> usize {
    21
}

impl Default for PumConfig {
    fn default() -> Self {
        PumConfig {
            radius_factor: DEFAULT_RADIUS_FACTOR,
            grid_per_axis: default_eval_grid(),
            profile: Profile::Quadratic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    /// Grid: intervals per axis. Scattered: points per axis (`count = level^d`).
    pub levels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub nodes: NodesConfig,
    pub patches: PatchConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub route: Route,
    #[serde(default)]
    pub equilibrate: bool,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for assembly; `None` uses all cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stencil: Option<StencilConfig>,
    #[serde(default)]
    pub pum: PumConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str::<RunConfig>(text)
            .map_err(|e| Error::config(e.to_string()))?
            .resolved()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<RunConfig>(text)
            .map_err(|e| Error::config(e.to_string()))?
            .resolved()
    }

    /// Reads TOML, JSON, or a `report.json` whose `config` key holds the config.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::config(e.to_string()))?;
            let inner = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value::<RunConfig>(inner)
                .map_err(|e| Error::config(e.to_string()))?
                .resolved()?
        } else {
            Self::from_toml(&text)?
        };
        if let NodesConfig::File { path: p } = &mut cfg.nodes {
            if p.is_relative() {
                let dir = path.parent().unwrap_or(Path::new(""));
                *p = std::path::absolute(dir.join(&*p))?;
            }
        }
        Ok(cfg)
    }

    /// Materializes defaults that depend on other fields and validates the combination.
    pub fn resolved(mut self) -> Result<Self> {
        self.preset()?;
        self.patches.space = self.patches.space.resolved();
        match (self.strategy.kind, &self.strategy.collocation) {
            (SigmaStrategy::NearestNode, None) => {
                self.strategy.collocation = Some(CollocationConfig {
                    include_nodes: true,
                    extra: 0,
                    source: Sampling::LowDiscrepancy,
                    points: Vec::new(),
                })
            }
            (SigmaStrategy::NearestNode, Some(_)) => {}
            (_, Some(_)) => return Err(Error::config("collocation points are only used by nearest-node")),
            (_, None) => {}
        }
        if self.mode == Mode::Collocate && self.strategy.kind == SigmaStrategy::PerSetAggregate {
            return Err(Error::config(
                "per-set-aggregate produces an oversampled system; use mode = \"lsq\"",
            ));
        }
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(Error::config("threads must be >= 1"));
            }
        }
        Ok(self)
    }

    pub fn preset(&self) -> Result<Preset> {
        self.problem.preset.parse()
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::preset(
            self.preset()?,
            Some(self.problem.solution),
            self.problem.operator.as_ref(),
        )
    }

    /// Same config with the node set refined to `level`.
    pub fn at_level(&self, level: usize) -> Result<Self> {
        let dim = self.preset()?.dim();
        let mut cfg = self.clone();
        cfg.nodes = match &self.nodes {
            NodesConfig::Grid { .. } => NodesConfig::Grid { n_per_axis: level + 1 },
            NodesConfig::Scattered { source, .. } => NodesConfig::Scattered {
                count: level.pow(dim as u32),
                source: *source,
            },
            NodesConfig::File { .. } => return Err(Error::config("convergence levels need generated nodes")),
        };
        Ok(cfg)
    }

    pub fn load_nodes(&self) -> Result<NodeSet> {
        let dim = self.preset()?.dim();
        let bounds = Bounds::unit(dim);
        match &self.nodes {
            NodesConfig::Grid { n_per_axis } => generate_grid(dim, *n_per_axis, &bounds),
            NodesConfig::Scattered { count, source } => {
                generate_scattered(dim, *count, &bounds, source.source(self.seed))
            }
            NodesConfig::File { path } => {
                let ns = NodeSet::read_csv_file(path)?;
                if ns.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: ns.dim(),
                    });
                }
                Ok(ns)
            }
        }
    }

    pub fn build_space(&self) -> Result<OverlapSplineSpace> {
        let nodes = self.load_nodes()?;
        let selector = self.patches.selector.resolve(nodes.spacing())?;
        build_space(nodes, &self.patches.centers, &selector, &self.patches.space)
    }

    pub fn collocation_points(&self, nodes: &NodeSet) -> Result<Option<Vec<Vec<f64>>>> {
        let Some(c) = &self.strategy.collocation else {
            return Ok(None);
        };
        let mut pts: Vec<Vec<f64>> = Vec::new();
        if c.include_nodes {
            pts.extend(nodes.points().map(<[f64]>::to_vec));
        }
        pts.extend(c.points.iter().cloned());
        if c.extra > 0 {
            let dim = nodes.dim();
            let cloud = generate_scattered(
                dim,
                c.extra,
                &Bounds::unit(dim),
                c.source.source(self.seed.wrapping_add(1)),
            )?;
            pts.extend(
                (0..cloud.len())
                    .filter(|&j| !cloud.is_boundary(j))
                    .map(|j| cloud.point(j).to_vec())
                    .take(c.extra),
            );
        }
        Ok(Some(pts))
    }

    pub fn sigma(&self, space: &OverlapSplineSpace) -> Result<SigmaMap> {
        let pts = self.collocation_points(space.nodes())?;
        build_sigma(space, self.strategy.kind, pts.as_deref())
    }
}

/// Everything a solve produced.
#[derive(Debug)]
pub struct RunOutput {
    pub problem: Problem,
    pub space: OverlapSplineSpace,
    pub sigma: SigmaMap,
    pub system: GlobalSystem,
    pub solution: Solution,
}

impl RunOutput {
    pub fn nodes(&self) -> &NodeSet {
        self.space.nodes()
    }

    pub fn exact_values(&self) -> Vec<f64> {
        self.nodes().points().map(|p| self.problem.exact.value(p)).collect()
    }

    /// `max |u_hat_j - u(x_j)|` over interior nodes.
    pub fn interior_max_error(&self) -> f64 {
        let nodes = self.nodes();
        (0..nodes.len())
            .filter(|&j| !nodes.is_boundary(j))
            .map(|j| (self.solution.nodal_values[j] - self.problem.exact.value(nodes.point(j))).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the space, assembles and solves.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let problem = cfg.problem()?;
    let space = cfg.build_space()?;
    let sigma = cfg.sigma(&space)?;
    let system = assemble(&space, &problem.operator, &problem, &sigma, cfg.route)?;
    let solution = match cfg.mode {
        Mode::Collocate => solve_square(&system)?,
        Mode::Lsq => solve_least_squares(
            &system,
            LsqOptions {
                equilibrate: cfg.equilibrate,
            },
        )?,
    };
    Ok(RunOutput {
        problem,
        space,
        sigma,
        system,
        solution,
    })
}

/// A single stencil row and the patch it came from.
#[derive(Clone, Debug)]
pub struct StencilOutput {
    pub weights: StencilWeights,
    pub patch: usize,
    pub dirichlet: bool,
}

/// Row of the configured operator at `[stencil].node` (patch centered there,
/// else the first containing it) or `[stencil].point` (patch with the nearest center).
pub fn stencil(cfg: &RunConfig) -> Result<StencilOutput> {
    let sc = cfg
        .stencil
        .as_ref()
        .ok_or_else(|| Error::config("stencil needs a [stencil] section with `node` or `point`"))?;
    let problem = cfg.problem()?;
    let op = &problem.operator;
    let space = cfg.build_space()?;
    let nodes = space.nodes();
    match (sc.node, &sc.point) {
        (Some(j), None) => {
            if j >= nodes.len() {
                return Err(Error::invalid(format!("node {j} out of range ({} nodes)", nodes.len())));
            }
            let patch = space
                .patches()
                .iter()
                .position(|p| p.influence.center_node == Some(j))
                .unwrap_or_else(|| space.memberships(j)[0]);
            let y = nodes.point(j);
            if nodes.is_boundary(j) && op.dirichlet_boundary {
                let weights = StencilWeights {
                    y: Point(y.to_vec()),
                    nodes: vec![j],
                    weights: vec![1.0],
                    residual: 0.0,
                };
                return Ok(StencilOutput {
                    weights,
                    patch,
                    dirichlet: true,
                });
            }
            Ok(StencilOutput {
                weights: row_weights(&space, patch, op, y, cfg.route)?,
                patch,
                dirichlet: false,
            })
        }
        (None, Some(y)) => {
            if y.len() != nodes.dim() {
                return Err(Error::DimensionMismatch {
                    expected: nodes.dim(),
                    got: y.len(),
                });
            }
            let patch = (0..space.num_patches())
                .min_by(|&a, &b| {
                    let da = distance(&space.patch(a).influence.center, y);
                    let db = distance(&space.patch(b).influence.center, y);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("a built space has at least one patch");
            Ok(StencilOutput {
                weights: row_weights(&space, patch, op, y, cfg.route)?,
                patch,
                dirichlet: false,
            })
        }
        _ => Err(Error::config("[stencil] needs exactly one of `node` and `point`")),
    }
}

/// Blend of the computed solution on a uniform evaluation grid.
#[derive(Debug)]
pub struct PumOutput {
    pub run: RunOutput,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Grid points outside every ball.
    pub skipped: usize,
}

/// Solves, then evaluates `s_Gamma` of the interpolating overlap spline on
/// `[pum].grid_per_axis^d` points.
pub fn pum_eval(cfg: &RunConfig) -> Result<PumOutput> {
    let out = run(cfg)?;
    let s = OverlapSpline::from_nodal_values(&out.space, &out.solution.nodal_values)?;
    let pou = PartitionOfUnity::for_space(&out.space, cfg.pum.radius_factor)?.with_profile(cfg.pum.profile);
    let dim = out.nodes().dim();
    let grid = generate_grid(dim, cfg.pum.grid_per_axis, &Bounds::unit(dim))?;
    let evaluated = grid
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| match blend(&s, &pou, x) {
            Ok(v) => Ok(Some((x.to_vec(), v))),
            Err(Error::NotCovered) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = evaluated.iter().filter(|e| e.is_none()).count();
    let (points, values) = evaluated.into_iter().flatten().unzip();
    Ok(PumOutput {
        run: out,
        points,
        values,
        skipped,
    })
}
