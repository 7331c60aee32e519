//! Command-line front end: cluster trees, gradient flows, level-set
//! projection walks, hybrid clustering, and the verification suite.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use modalflow::density::{
    find_critical_points, CriticalPoint, DensityModel, DEFAULT_G_TOL, DEFAULT_MORSE_TOL,
};
use modalflow::export;
use modalflow::fixtures::load_fixture;
use modalflow::flow::{assign_basins, integrate_flow, BasinLabel, BasinParams, FlowKind, FlowParams};
use modalflow::grid::{build_grid, Grid, GridSpec};
use modalflow::hybrid::hybrid_partition;
use modalflow::point;
use modalflow::transport::{iterate_projection_walk, ProjectionParams, WalkStop};
use modalflow::tree::{build_cluster_tree, component_count_profile, default_ladder, ladder_between};
use modalflow::verify::{run_all, VerifyFixture};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "modalflow", version, about = "Cluster trees and density gradient flows")]
struct Cli {
    /// Cap the rayon thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the cluster tree over a level ladder and export it.
    Tree(TreeArgs),
    /// Integrate gradient flows and assign basins of attraction.
    Flow(FlowArgs),
    /// Run the iterated metric-projection walk.
    Project(ProjectArgs),
    /// Combined level-set / basin clustering with the noise rule.
    Hybrid(HybridArgs),
    /// Run the verification suite and emit the report.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Fixture definition file (JSON).
    #[arg(long)]
    fixture: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
    /// Analysis box as `lo:hi` pairs, comma separated (default: derived from
    /// the fixture).
    #[arg(long, name = "box", value_name = "lo:hi,...", allow_hyphen_values = true)]
    box_: Option<String>,
}

#[derive(Args)]
struct TreeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Grid resolution per dimension, comma separated.
    #[arg(long, default_value = "256")]
    resolution: String,
    /// Number of uniform ladder levels.
    #[arg(long, default_value_t = 64)]
    levels: usize,
}

#[derive(Args)]
struct FlowArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Flow field: plain-ascent, normalized-ascent, normalized-descent, or
    /// fukunaga-ascent.
    #[arg(long, default_value = "plain-ascent")]
    kind: String,
    /// Start point `x1,x2,...`; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    start: Vec<String>,
    /// Stop when the density reaches this level.
    #[arg(long)]
    target_level: Option<f64>,
    /// Also assign basins for a grid of starts, `n1,n2,...` cells per dim.
    #[arg(long)]
    basin_grid: Option<String>,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Start point `x1,x2,...`.
    #[arg(long, allow_hyphen_values = true)]
    start: String,
    /// Level step per projection.
    #[arg(long)]
    eta: f64,
    /// Stop before a step would target a level above this.
    #[arg(long)]
    level_ceiling: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,
    /// Also export the level-set contour at this level (2D only); repeatable.
    #[arg(long)]
    contour_level: Vec<f64>,
    /// Marching resolution for contour export.
    #[arg(long, default_value_t = 512)]
    contour_resolution: usize,
}

#[derive(Args)]
struct HybridArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Threshold level; required unless --sweep is given.
    #[arg(long)]
    t: Option<f64>,
    /// Run the whole ladder and emit one structural result per level.
    #[arg(long)]
    sweep: bool,
    /// Grid of points to label, `n1,n2,...` cells per dim.
    #[arg(long, default_value = "40")]
    points_grid: String,
    #[arg(long, default_value = "256")]
    resolution: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Fixture definition files; defaults to the canonical fixtures.
    #[arg(long)]
    fixture: Vec<PathBuf>,
    /// Report output path (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Scale all tolerances (0 forces failures; for exit-code testing).
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Tree(args) => cmd_tree(args),
        Command::Flow(args) => cmd_flow(args),
        Command::Project(args) => cmd_project(args),
        Command::Hybrid(args) => cmd_hybrid(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn load_model(path: &Path) -> Result<DensityModel> {
    load_fixture(path).with_context(|| format!("fixture {}", path.display()))
}

fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("number `{s}`")))
        .collect()
}

fn parse_resolution(text: &str, dim: usize) -> Result<Vec<usize>> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("resolution `{s}`")))
        .collect::<Result<_>>()?;
    match parts.len() {
        1 => Ok(vec![parts[0]; dim]),
        n if n == dim => Ok(parts),
        _ => bail!("resolution has {} entries for dimension {}", parts.len(), dim),
    }
}

fn parse_bounds(args: &CommonArgs, model: &DensityModel) -> Result<Vec<(f64, f64)>> {
    match &args.box_ {
        None => Ok(model.suggested_bounds()),
        Some(text) => {
            let bounds: Vec<(f64, f64)> = text
                .split(',')
                .map(|pair| -> Result<(f64, f64)> {
                    let (lo, hi) = pair
                        .split_once(':')
                        .with_context(|| format!("box entry `{pair}` is not lo:hi"))?;
                    Ok((lo.trim().parse()?, hi.trim().parse()?))
                })
                .collect::<Result<_>>()?;
            if bounds.len() != model.dim() {
                bail!("box has {} entries for dimension {}", bounds.len(), model.dim());
            }
            Ok(bounds)
        }
    }
}

fn setup_grid(
    model: &DensityModel,
    bounds: &[(f64, f64)],
    resolution: &str,
) -> Result<(Grid, Vec<CriticalPoint>)> {
    let res = parse_resolution(resolution, model.dim())?;
    let grid = build_grid(model, GridSpec::new(bounds, &res)?)?;
    let seed_res: Vec<usize> = res.iter().map(|&r| (r / 10).clamp(8, 32)).collect();
    let seeds = GridSpec::new(bounds, &seed_res)?;
    let criticals = find_critical_points(model, &seeds, DEFAULT_G_TOL, DEFAULT_MORSE_TOL).points;
    Ok((grid, criticals))
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_tree(args: TreeArgs) -> Result<i32> {
    let model = load_model(&args.common.fixture)?;
    let bounds = parse_bounds(&args.common, &model)?;
    ensure_out_dir(&args.common.out_dir)?;
    let (grid, criticals) = setup_grid(&model, &bounds, &args.resolution)?;
    if args.levels < 2 {
        bail!("--levels must be at least 2");
    }
    let ladder = ladder_between(1e-4 * grid.max_value(), 0.999 * grid.max_value(), args.levels);
    let tree = build_cluster_tree(&grid, &ladder, &criticals)?;
    export::write_text(
        &args.common.out_dir.join("tree.json"),
        &export::tree_json(&tree, &grid),
    )?;
    export::write_text(
        &args.common.out_dir.join("profile.csv"),
        &export::profile_csv(&component_count_profile(&tree)),
    )?;
    println!(
        "tree: {} nodes, {} leaves, {} split events",
        tree.nodes.len(),
        tree.leaves().len(),
        tree.split_events.len()
    );
    Ok(0)
}

fn parse_kind(text: &str) -> Result<FlowKind> {
    Ok(match text {
        "plain-ascent" => FlowKind::PlainAscent,
        "normalized-ascent" => FlowKind::NormalizedAscent,
        "normalized-descent" => FlowKind::NormalizedDescent,
        "fukunaga-ascent" => FlowKind::FukunagaAscent,
        other => bail!("unknown flow kind `{other}`"),
    })
}

fn cmd_flow(args: FlowArgs) -> Result<i32> {
    let model = load_model(&args.common.fixture)?;
    let bounds = parse_bounds(&args.common, &model)?;
    ensure_out_dir(&args.common.out_dir)?;
    let kind = parse_kind(&args.kind)?;
    let params = FlowParams {
        target_level: args.target_level,
        ..FlowParams::default()
    };
    if args.start.is_empty() && args.basin_grid.is_none() {
        bail!("nothing to do: give --start and/or --basin-grid");
    }
    for (i, text) in args.start.iter().enumerate() {
        let coords = parse_floats(text)?;
        if coords.len() != model.dim() {
            bail!("start `{text}` has {} coordinates, model has {}", coords.len(), model.dim());
        }
        let traj = integrate_flow(&model, &point(&coords), kind, &params)?;
        export::write_trajectory(
            &args.common.out_dir,
            &format!("trajectory_{i}"),
            &traj,
            model.dim(),
            &args.kind,
            &params,
        )?;
        println!(
            "trajectory_{i}: {} samples, stop {}",
            traj.samples.len(),
            traj.stop_reason.as_str()
        );
    }
    if let Some(grid_text) = &args.basin_grid {
        let res = parse_resolution(grid_text, model.dim())?;
        let spec = GridSpec::new(&bounds, &res)?;
        let starts: Vec<_> = spec.centers().collect();
        let seeds = GridSpec::new(&bounds, &vec![16; model.dim()])?;
        let criticals =
            find_critical_points(&model, &seeds, DEFAULT_G_TOL, DEFAULT_MORSE_TOL).points;
        let assignment = assign_basins(&model, &criticals, &starts, &BasinParams::default())?;
        let mut csv = String::new();
        for k in 1..=model.dim() {
            csv.push_str(&format!("x_{k},"));
        }
        csv.push_str("label\n");
        for (p, label) in starts.iter().zip(&assignment.labels) {
            for k in 0..model.dim() {
                csv.push_str(&export::fmt_f64(p[k]));
                csv.push(',');
            }
            match label {
                BasinLabel::Mode(m) => csv.push_str(&m.to_string()),
                BasinLabel::Noise => csv.push_str("NOISE"),
            }
            csv.push('\n');
        }
        export::write_text(&args.common.out_dir.join("basins.csv"), &csv)?;
        println!(
            "basins: {} starts, {} modes, {} unconverged",
            starts.len(),
            assignment.modes.len(),
            assignment.unconverged_count
        );
    }
    Ok(0)
}

fn cmd_project(args: ProjectArgs) -> Result<i32> {
    let model = load_model(&args.common.fixture)?;
    ensure_out_dir(&args.common.out_dir)?;
    let coords = parse_floats(&args.start)?;
    if coords.len() != model.dim() {
        bail!("start has {} coordinates, model has {}", coords.len(), model.dim());
    }
    let stop = WalkStop {
        level_ceiling: args.level_ceiling,
        max_steps: args.max_steps,
        ..WalkStop::default()
    };
    let walk = iterate_projection_walk(
        &model,
        &point(&coords),
        args.eta,
        &stop,
        &ProjectionParams::default(),
    );
    export::write_text(
        &args.common.out_dir.join("walk.csv"),
        &export::walk_csv(&walk, model.dim()),
    )?;
    export::write_text(
        &args.common.out_dir.join("walk.json"),
        &export::walk_sidecar(&walk, args.eta),
    )?;
    println!(
        "walk: {} steps, stop {}",
        walk.points.len() - 1,
        walk.stop_reason.as_str()
    );
    let bounds = parse_bounds(&args.common, &model)?;
    for (k, &level) in args.contour_level.iter().enumerate() {
        let n = args.contour_resolution;
        let contour = modalflow::contour::extract_contour_2d(
            &model,
            &bounds,
            [n, n],
            level,
            modalflow::contour::DEFAULT_CONTOUR_TOL,
        )?;
        export::write_text(
            &args.common.out_dir.join(format!("contour_{k}.json")),
            &export::contour_json(&contour),
        )?;
        println!("contour_{k}: level {level}, {} loops", contour.loops.len());
    }
    Ok(0)
}

fn cmd_hybrid(args: HybridArgs) -> Result<i32> {
    let model = load_model(&args.common.fixture)?;
    let bounds = parse_bounds(&args.common, &model)?;
    ensure_out_dir(&args.common.out_dir)?;
    let (grid, criticals) = setup_grid(&model, &bounds, &args.resolution)?;
    let ladder = default_ladder(&grid);
    let tree = build_cluster_tree(&grid, &ladder, &criticals)?;
    let res = parse_resolution(&args.points_grid, model.dim())?;
    let points: Vec<_> = GridSpec::new(&bounds, &res)?.centers().collect();

    if args.sweep {
        let mut sweep = Vec::new();
        for &t in &ladder {
            let result = hybrid_partition(
                &model,
                &grid,
                &tree,
                &criticals,
                t,
                &points,
                &BasinParams::default(),
            )?;
            let noise_count = result
                .labels
                .iter()
                .filter(|l| matches!(l, modalflow::hybrid::HybridLabel::Noise))
                .count();
            sweep.push(serde_json::json!({
                "t": t,
                "groups": result.groups,
                "noise_modes": result.noise_modes,
                "noise_points": noise_count,
            }));
        }
        export::write_text(
            &args.common.out_dir.join("hybrid_sweep.json"),
            &serde_json::to_string_pretty(&sweep)?,
        )?;
        println!("hybrid sweep: {} levels", ladder.len());
        return Ok(0);
    }

    let t = args.t.context("--t is required without --sweep")?;
    let result = hybrid_partition(
        &model,
        &grid,
        &tree,
        &criticals,
        t,
        &points,
        &BasinParams::default(),
    )?;
    export::write_text(
        &args.common.out_dir.join("hybrid.json"),
        &export::hybrid_json(&result),
    )?;
    export::write_text(
        &args.common.out_dir.join("labels.csv"),
        &export::hybrid_labels_csv(&points, &result, model.dim()),
    )?;
    println!(
        "hybrid at t={t}: {} groups, {} noise modes",
        result.groups.len(),
        result.noise_modes.len()
    );
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let fixtures = if args.fixture.is_empty() {
        VerifyFixture::canonical()
    } else {
        let mut out = Vec::new();
        for path in &args.fixture {
            let model = load_model(path)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "fixture".into());
            out.push(VerifyFixture::from_model(&name, model));
        }
        out
    };
    let mut report = run_all(&fixtures, args.seed);
    if args.tolerance_scale != 1.0 {
        report.rescale_tolerances(args.tolerance_scale);
    }
    print!("{}", report.table());
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        export::write_text(out, &report.to_json())?;
    }
    Ok(if report.overall_pass { 0 } else { 1 })
}
