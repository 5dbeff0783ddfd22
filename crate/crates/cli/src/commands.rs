use std::time::Instant;

use meshfd_core::pipeline::{self, ConvergeConfig, StencilConfig};
use meshfd_core::solve::use_serial_factorization;
use meshfd_core::{convergence_study, dimension_analysis, Error, Result, RunConfig};
use serde::Serialize;
use serde_json::json;

use crate::output::{coord_header, num, OutDir};
use crate::{Cli, Command};

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    results: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<serde_json::Value>,
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let (name, path) = match &cli.command {
        Command::Generate(c) => ("generate", &c.config),
        Command::Stencil { cfg, .. } => ("stencil", &cfg.config),
        Command::Dim(c) => ("dim", &c.config),
        Command::Solve(c) => ("solve", &c.config),
        Command::Converge { cfg, .. } => ("converge", &cfg.config),
        Command::PumEval { cfg, .. } => ("pum-eval", &cfg.config),
    };
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    match &cli.command {
        Command::Stencil { node, point, .. } if node.is_some() || point.is_some() => {
            cfg.stencil = Some(StencilConfig {
                node: *node,
                point: point.clone(),
            });
        }
        Command::Converge { levels: Some(l), .. } => cfg.converge = Some(ConvergeConfig { levels: l.clone() }),
        Command::PumEval { grid: Some(g), .. } => cfg.pum.grid_per_axis = *g,
        _ => {}
    }
    let cfg = cfg.resolved()?;

    use_serial_factorization();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let out = OutDir::create(&cli.out_dir)?;
    let results = pool.install(|| run(&cli.command, &cfg, &out))?;

    let report = Report {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        results,
        timings: cli
            .timings
            .then(|| json!({ "total_seconds": started.elapsed().as_secs_f64() })),
    };
    out.json("report.json", &report)
}

fn run(command: &Command, cfg: &RunConfig, out: &OutDir) -> Result<serde_json::Value> {
    match command {
        Command::Generate(_) => generate(cfg, out),
        Command::Stencil { .. } => stencil(cfg, out),
        Command::Dim(_) => dim(cfg, out),
        Command::Solve(_) => solve(cfg, out),
        Command::Converge { .. } => converge(cfg, out),
        Command::PumEval { .. } => pum_eval(cfg, out),
    }
}

fn generate(cfg: &RunConfig, out: &OutDir) -> Result<serde_json::Value> {
    let nodes = cfg.load_nodes()?;
    nodes.write_csv(std::fs::File::create(out.path("nodes.csv"))?)?;
    Ok(json!({
        "nodes": nodes.len(),
        "boundary_nodes": nodes.boundary_mask().iter().filter(|b| **b).count(),
        "dim": nodes.dim(),
        "spacing": nodes.spacing(),
        "files": ["nodes.csv"],
    }))
}

fn stencil(cfg: &RunConfig, out: &OutDir) -> Result<serde_json::Value> {
    let st = pipeline::stencil(cfg)?;
    out.json("stencil.json", &st.weights)?;
    println!("{}", serde_json::to_string(&st.weights).map_err(std::io::Error::from)?);
    Ok(json!({
        "patch": st.patch,
        "dirichlet": st.dirichlet,
        "residual": st.weights.residual,
        "files": ["stencil.json"],
    }))
}

fn dim(cfg: &RunConfig, out: &OutDir) -> Result<serde_json::Value> {
    let space = cfg.build_space()?;
    let rep = dimension_analysis(&space)?;
    let summary = json!({
        "dim": rep.dim,
        "ker": rep.ker,
        "im": rep.im,
        "lower_bound": rep.lower_bound,
        "interpolatory": rep.interpolatory,
    });
    out.json("dim.json", &summary)?;
    println!("{summary}");
    Ok(json!({
        "nodes": space.nodes().len(),
        "patches": space.num_patches(),
        "coefficients": space.coefficient_count(),
        "analysis": rep,
        "files": ["dim.json"],
    }))
}

fn solve(cfg: &RunConfig, out: &OutDir) -> Result<serde_json::Value> {
    let run = pipeline::run(cfg)?;
    let nodes = run.nodes();
    let exact = run.exact_values();
    let mut header = coord_header(nodes.dim());
    header.extend(["u_hat", "u_exact", "abs_err"].map(String::from));
    let u = &run.solution.nodal_values;
    out.csv(
        "solution.csv",
        &header,
        nodes.points().enumerate().map(|(j, p)| {
            let mut r: Vec<String> = p.iter().map(|v| num(*v)).collect();
            r.extend([num(u[j]), num(exact[j]), num((u[j] - exact[j]).abs())]);
            r
        }),
    )?;
    Ok(json!({
        "nodes": nodes.len(),
        "patches": run.space.num_patches(),
        "interpolatory": run.space.is_interpolatory(),
        "rows": run.system.nrows(),
        "cols": run.system.ncols(),
        "nnz": run.system.matrix.nnz(),
        "worst_row_residual": run.system.worst_row_residual(),
        "residual_norm": run.solution.residual_norm,
        "normal_residual": run.solution.normal_residual,
        "rank": run.solution.rank,
        "interior_max_error": run.interior_max_error(),
        "files": ["solution.csv"],
    }))
}

fn converge(cfg: &RunConfig, out: &OutDir) -> Result<serde_json::Value> {
    let levels = cfg
        .converge
        .as_ref()
        .map(|c| c.levels.clone())
        .ok_or_else(|| Error::Config("converge needs [converge].levels or --levels".into()))?;
    let rows = convergence_study(cfg, &levels)?;
    let header = ["h", "N", "max_err", "observed_order"].map(String::from);
    out.csv(
        "converge.csv",
        &header,
        rows.iter().map(|r| {
            vec![
                num(r.h),
                r.n.to_string(),
                num(r.max_err),
                r.observed_order.map(num).unwrap_or_default(),
            ]
        }),
    )?;
    Ok(json!({ "levels": levels, "rows": rows, "files": ["converge.csv"] }))
}

fn pum_eval(cfg: &RunConfig, out: &OutDir) -> Result<serde_json::Value> {
    let res = pipeline::pum_eval(cfg)?;
    let exact = res.run.problem.exact;
    let mut header = coord_header(res.run.nodes().dim());
    header.extend(["s_gamma", "u_exact", "abs_err"].map(String::from));
    let mut worst: f64 = 0.0;
    let rows: Vec<Vec<String>> = res
        .points
        .iter()
        .zip(&res.values)
        .map(|(x, v)| {
            let u = exact.value(x);
            worst = worst.max((v - u).abs());
            let mut r: Vec<String> = x.iter().map(|c| num(*c)).collect();
            r.extend([num(*v), num(u), num((v - u).abs())]);
            r
        })
        .collect();
    out.csv("pum.csv", &header, rows)?;
    Ok(json!({
        "evaluated": res.points.len(),
        "skipped_uncovered": res.skipped,
        "max_abs_err": worst,
        "nodal_max_error": res.run.interior_max_error(),
        "files": ["pum.csv"],
    }))
}
