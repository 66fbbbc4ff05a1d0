//! `meshforge` command line: simplify, build-tree, extract, flythrough, compare.
//!
//! Machine-readable results go to standard output, diagnostics to standard
//! error. Every command that writes files also writes a JSON run manifest
//! next to its primary output.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::mesh::{load_obj, save_obj, Mesh};
use crate::metrics::{sampled_deviation, MetricsError};
use crate::simplify::{
    read_log, replay, simplify, simplify_fully, write_log, ContractionRecord, Placement, SimplifyConfig,
};
use crate::tree::VertexTree;
use crate::view::{flythrough, parse_camera_path, write_stats_csv, AdaptParams};

pub const EXIT_IO: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_UNREACHABLE: i32 = 3;
pub const EXIT_TREE: i32 = 4;
pub const EXIT_ZERO_AREA: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "meshforge",
    version,
    about = "Quadric mesh simplification and vertex-tree level of detail"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simplify an OBJ mesh to a face budget.
    Simplify(SimplifyArgs),
    /// Build a vertex tree from a contraction log (or by simplifying first).
    BuildTree(BuildTreeArgs),
    /// Extract the coarsest mesh whose merges all cost at most --error.
    Extract(ExtractArgs),
    /// Run view-dependent adaptation along a camera path.
    Flythrough(FlythroughArgs),
    /// Measure sampled surface deviation between two meshes.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
struct PairArgs {
    /// Pair vertices closer than this even without an edge (0 = edges only).
    #[arg(short = 't', long, default_value_t = 0.0)]
    pair_threshold: f64,
    /// optimal | subset | midpoint
    #[arg(short = 'p', long, default_value = "optimal", value_parser = parse_placement)]
    #[serde(serialize_with = "placement_name")]
    placement: Placement,
}

fn parse_placement(s: &str) -> Result<Placement, String> {
    s.parse()
}

fn placement_name<S: serde::Serializer>(p: &Placement, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(p.as_str())
}

#[derive(Debug, Args, Serialize)]
struct SimplifyArgs {
    input: PathBuf,
    #[arg(short = 'n', long)]
    target_faces: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pairs: PairArgs,
    #[arg(short = 'o', long)]
    output: PathBuf,
    /// Contraction log path (default: output with a .clog extension).
    #[arg(short = 'l', long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BuildTreeArgs {
    input: PathBuf,
    /// Existing contraction log for the input mesh.
    #[arg(short = 'l', long, conflicts_with = "target_faces")]
    log: Option<PathBuf>,
    /// Simplify to this many faces first (default: contract until no pairs remain).
    #[arg(short = 'n', long)]
    target_faces: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pairs: PairArgs,
    #[arg(short = 'o', long)]
    output: PathBuf,
    /// Write the JSON export instead of binary VTREE.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args, Serialize)]
struct ExtractArgs {
    input: PathBuf,
    /// Cost bound; `inf` gives the coarsest forest.
    #[arg(short = 'e', long)]
    error: f64,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FlythroughArgs {
    input: PathBuf,
    /// Camera path JSON.
    #[arg(long)]
    path: PathBuf,
    /// Split threshold in pixels.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Silhouette split threshold in pixels (default: --tau).
    #[arg(long)]
    tau_sil: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    hysteresis: f64,
    /// Cap on splits plus merges per frame.
    #[arg(long)]
    max_ops: Option<usize>,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(short = 's', long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Measure both directions.
    #[arg(long)]
    symmetric: bool,
    /// Write a run manifest here.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    inputs: Vec<String>,
    parameters: serde_json::Value,
    wall_time_s: f64,
    outputs: Vec<String>,
    exit_code: i32,
}

struct Context<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    started: Instant,
}

impl Context<'_> {
    fn emit(&mut self, value: &serde_json::Value) -> Result<(), Failure> {
        writeln!(self.out, "{value}").map_err(|e| Failure::new(EXIT_IO, format!("stdout: {e}")))
    }

    fn warn(&mut self, message: &str) {
        let _ = writeln!(self.err, "meshforge: {message}");
    }

    fn manifest(
        &self,
        command: &str,
        inputs: &[&Path],
        parameters: &impl Serialize,
        outputs: &[&Path],
        exit_code: i32,
        at: &Path,
    ) -> Result<(), Failure> {
        let m = RunManifest {
            tool: "meshforge",
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            parameters: serde_json::to_value(parameters).unwrap_or_default(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            exit_code,
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        write_file(at, text.as_bytes())
    }
}

/// Manifest path for a primary output: `out.obj` → `out.obj.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn read_mesh(path: &Path) -> Result<Mesh, Failure> {
    let text = read_text(path)?;
    load_obj(&text).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn read_tree(path: &Path) -> Result<VertexTree, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    let parsed = if bytes.starts_with(b"VTREE") {
        VertexTree::from_bytes(&bytes)
    } else {
        VertexTree::from_json(&String::from_utf8_lossy(&bytes))
    };
    parsed.map_err(|e| Failure::new(EXIT_TREE, format!("{}: {e}", path.display())))
}

fn cmd_simplify(ctx: &mut Context, args: &SimplifyArgs) -> CmdResult {
    let mesh = read_mesh(&args.input)?;
    let cfg = SimplifyConfig {
        target_faces: args.target_faces,
        pair_threshold: args.pairs.pair_threshold,
        placement: args.pairs.placement,
    };
    let result = simplify(&mesh, &cfg).map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    let log_path = args.log.clone().unwrap_or_else(|| args.output.with_extension("clog"));
    write_file(&args.output, save_obj(&result.mesh).as_bytes())?;
    write_file(&log_path, write_log(&result.log).as_bytes())?;

    let code = match result.shortfall(cfg.target_faces) {
        Some(e) => {
            ctx.warn(&e.to_string());
            EXIT_UNREACHABLE
        }
        None => 0,
    };
    ctx.manifest(
        "simplify",
        &[&args.input],
        args,
        &[&args.output, &log_path],
        code,
        &manifest_path(&args.output),
    )?;
    ctx.emit(&json!({
        "faces_before": mesh.face_count(),
        "vertices_before": mesh.vertex_count(),
        "faces_after": result.mesh.face_count(),
        "vertices_after": result.mesh.vertex_count(),
        "contractions": result.log.len(),
        "total_cost": result.total_cost(),
    }))?;
    Ok(code)
}

fn cmd_build_tree(ctx: &mut Context, args: &BuildTreeArgs) -> CmdResult {
    let mesh = read_mesh(&args.input)?;
    let log: Vec<ContractionRecord> = match &args.log {
        Some(path) => {
            let text = read_text(path)?;
            let log = read_log(&text).map_err(|e| Failure::new(EXIT_TREE, format!("{}: {e}", path.display())))?;
            replay(&mesh, &log).map_err(|e| Failure::new(EXIT_TREE, format!("{}: {e}", path.display())))?;
            log
        }
        None => {
            let cfg = SimplifyConfig {
                target_faces: args.target_faces.unwrap_or(0),
                pair_threshold: args.pairs.pair_threshold,
                placement: args.pairs.placement,
            };
            let result = match args.target_faces {
                Some(_) => simplify(&mesh, &cfg),
                None => simplify_fully(&mesh, &cfg),
            }
            .map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
            if args.target_faces.is_some() {
                if let Some(e) = result.shortfall(cfg.target_faces) {
                    ctx.warn(&e.to_string());
                }
            }
            result.log
        }
    };
    let tree = VertexTree::build(&mesh, &log).map_err(|e| Failure::new(EXIT_TREE, e.to_string()))?;
    if args.json {
        write_file(&args.output, tree.to_json().as_bytes())?;
    } else {
        write_file(&args.output, &tree.to_bytes())?;
    }
    let inputs: Vec<&Path> = std::iter::once(args.input.as_path())
        .chain(args.log.as_deref())
        .collect();
    ctx.manifest(
        "build-tree",
        &inputs,
        args,
        &[&args.output],
        0,
        &manifest_path(&args.output),
    )?;
    ctx.emit(&json!({
        "nodes": tree.node_count(),
        "leaves": tree.leaf_count,
        "roots": tree.roots.len(),
        "records": log.len(),
    }))?;
    Ok(0)
}

fn cmd_extract(ctx: &mut Context, args: &ExtractArgs) -> CmdResult {
    if !(args.error >= 0.0) {
        return Err(Failure::new(EXIT_PARSE, "--error must be non-negative"));
    }
    let tree = read_tree(&args.input)?;
    let mesh = tree.extract_at_error(args.error);
    write_file(&args.output, save_obj(&mesh).as_bytes())?;
    ctx.manifest(
        "extract",
        &[&args.input],
        args,
        &[&args.output],
        0,
        &manifest_path(&args.output),
    )?;
    ctx.emit(&json!({ "faces": mesh.face_count(), "vertices": mesh.vertex_count() }))?;
    Ok(0)
}

fn cmd_flythrough(ctx: &mut Context, args: &FlythroughArgs) -> CmdResult {
    let tree = read_tree(&args.input)?;
    let text = read_text(&args.path)?;
    let path =
        parse_camera_path(&text).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", args.path.display())))?;
    let mut params = AdaptParams::new(args.tau, args.tau_sil.unwrap_or(args.tau), args.hysteresis)
        .map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    params.max_ops_per_frame = args.max_ops;
    let rows = flythrough(&tree, &path, &params);
    let mut buf = Vec::new();
    write_stats_csv(&rows, &mut buf).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    write_file(&args.output, &buf)?;
    ctx.manifest(
        "flythrough",
        &[&args.input, &args.path],
        args,
        &[&args.output],
        0,
        &manifest_path(&args.output),
    )?;
    let last = rows.last().expect("camera path is non-empty");
    ctx.emit(&json!({ "frames": rows.len(), "final_triangles": last.triangles, "final_active": last.active }))?;
    Ok(0)
}

fn cmd_compare(ctx: &mut Context, args: &CompareArgs) -> CmdResult {
    let a = read_mesh(&args.a)?;
    let b = read_mesh(&args.b)?;
    let report = sampled_deviation(&a, &b, args.samples, args.seed, args.symmetric).map_err(|e| match e {
        MetricsError::ZeroArea | MetricsError::NoFaces => Failure::new(EXIT_ZERO_AREA, e.to_string()),
        MetricsError::NoSamples => Failure::new(EXIT_PARSE, e.to_string()),
    })?;
    if let Some(at) = &args.manifest {
        ctx.manifest("compare", &[&args.a, &args.b], args, &[], 0, at)?;
    }
    ctx.emit(&serde_json::to_value(&report).expect("report serializes"))?;
    Ok(0)
}

/// Runs the CLI with explicit streams; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{e}");
                EXIT_PARSE
            } else {
                let _ = write!(out, "{e}");
                0
            };
            return code;
        }
    };
    let mut ctx = Context {
        out,
        err,
        started: Instant::now(),
    };
    let result = match &cli.command {
        Command::Simplify(a) => cmd_simplify(&mut ctx, a),
        Command::BuildTree(a) => cmd_build_tree(&mut ctx, a),
        Command::Extract(a) => cmd_extract(&mut ctx, a),
        Command::Flythrough(a) => cmd_flythrough(&mut ctx, a),
        Command::Compare(a) => cmd_compare(&mut ctx, a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            ctx.warn(&f.message);
            f.code
        }
    }
}
