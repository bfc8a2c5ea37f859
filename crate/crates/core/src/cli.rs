//! Command-line front end: `map`, `eval` and `gen`.
//!
//! Reports go to `out`, diagnostics to `err`. Exit codes: 0 on success, 2 on
//! invalid input, 1 on runtime failures.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gen::{self, RmatParams};
use crate::graphio::{self, Graph};
use crate::metrics;
use crate::pipeline::{map_graph, Objective, PipelineConfig};
use crate::topology::{HierarchySpec, Topology};

#[derive(Debug, Parser)]
#[command(name = "hiermap", version, about = "Map graphs onto hierarchical machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a mapping of a METIS graph onto a machine hierarchy.
    Map(MapArgs),
    /// Evaluate an existing mapping.
    Eval(EvalArgs),
    /// Generate a synthetic graph in METIS format.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Debug, Args)]
struct MachineArgs {
    /// Children per level, bottom-up, e.g. 4:2:5:4.
    #[arg(long)]
    hierarchy: String,
    /// Cost per level, same length, e.g. 1:10:100:1000.
    #[arg(long)]
    distances: String,
}

impl MachineArgs {
    fn topology(&self) -> Result<Topology> {
        Topology::build(HierarchySpec::parse(&self.hierarchy, &self.distances)?)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Coco,
    Edgecut,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Tsv,
}

#[derive(Debug, Args)]
struct MapArgs {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    machine: MachineArgs,
    #[arg(long, default_value_t = 0.03)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    coarsen_iters: usize,
    #[arg(long, default_value_t = 3)]
    refine_rounds: usize,
    #[arg(long, default_value_t = 2)]
    post_rounds: usize,
    /// Hub degree threshold; 0 selects the automatic rule.
    #[arg(long, default_value_t = 0)]
    hub_threshold: usize,
    #[arg(long)]
    no_preprocessing: bool,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Coco)]
    objective: ObjectiveArg,
    /// Mapping output file, one block id per line.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    report: ReportFormat,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    mapping: PathBuf,
    #[command(flatten)]
    machine: MachineArgs,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    report: ReportFormat,
}

#[derive(Debug, Subcommand)]
enum GenCommand {
    /// Barabási–Albert preferential attachment.
    Ba {
        #[arg(long)]
        n: usize,
        /// Edges attached per new vertex.
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Recursive-matrix generator.
    Rmat {
        #[arg(long)]
        scale: u32,
        #[arg(long, default_value_t = 16)]
        edge_factor: usize,
        #[arg(long, default_value_t = 0.57)]
        a: f64,
        #[arg(long, default_value_t = 0.19)]
        b: f64,
        #[arg(long, default_value_t = 0.19)]
        c: f64,
        #[arg(long, default_value_t = 0.05)]
        d: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep all vertices instead of the largest connected component.
        #[arg(long)]
        no_lcc: bool,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Map(a) => cmd_map(&a, out, err),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Gen(g) => cmd_gen(&g, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_graph(path: &PathBuf) -> Result<Graph> {
    graphio::load_metis(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn cmd_map(a: &MapArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let topo = a.machine.topology()?;
    let g = load_graph(&a.graph)?;
    let cfg = PipelineConfig {
        epsilon: a.epsilon,
        workers: a.workers,
        seed: a.seed,
        coarsen_iterations: a.coarsen_iters,
        refine_phases: a.refine_rounds,
        post_phases: a.post_rounds,
        coarsen_threshold: None,
        cluster_cap: None,
        hub_threshold: (a.hub_threshold > 0).then_some(a.hub_threshold),
        objective: match a.objective {
            ObjectiveArg::Coco => Objective::Coco,
            ObjectiveArg::Edgecut => Objective::Edgecut,
        },
        preprocessing: !a.no_preprocessing,
        initial_tries: None,
    };
    let (mapping, report) = map_graph(&g, &topo, &cfg)?;
    if !report.feasible {
        writeln!(err, "warning: mapping exceeds the balance constraint (imbalance {:.4})", report.imbalance)?;
    }
    if let Some(path) = &a.output {
        graphio::write_mapping(path, &mapping)?;
    }
    let value = serde_json::to_value(&report).expect("report serializes");
    write_report(out, &value, a.report)
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let topo = a.machine.topology()?;
    let g = load_graph(&a.graph)?;
    let m = graphio::load_mapping(&a.mapping, g.n(), topo.num_pes())?;
    let value = json!({
        "coco": metrics::coco(&g, &m, &topo),
        "edgecut": metrics::edgecut(&g, &m),
        "imbalance": metrics::imbalance(&g, &m, topo.num_pes()),
    });
    write_report(out, &value, a.report)
}

fn cmd_gen(cmd: &GenCommand, err: &mut dyn Write) -> Result<()> {
    let (g, path) = match cmd {
        GenCommand::Ba { n, d, seed, output } => (gen::gen_ba(*n, *d, *seed)?, output),
        GenCommand::Rmat { scale, edge_factor, a, b, c, d, seed, no_lcc, output } => {
            let g = gen::gen_rmat(*scale, *edge_factor, RmatParams { a: *a, b: *b, c: *c, d: *d }, *seed)?;
            let g = if *no_lcc { g } else { gen::largest_cc(&g).0 };
            (g, output)
        }
    };
    graphio::write_metis(path, &g)?;
    writeln!(err, "wrote {} vertices, {} edges to {}", g.n(), g.m(), path.display())?;
    Ok(())
}

fn write_report(out: &mut dyn Write, value: &Value, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(value).unwrap())?,
        ReportFormat::Tsv => {
            let mut rows = Vec::new();
            flatten("", value, &mut rows);
            for (k, v) in rows {
                writeln!(out, "{k}\t{v}")?;
            }
        }
    }
    Ok(())
}

fn flatten(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, rows);
            }
        }
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}
