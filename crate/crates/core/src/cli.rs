//! The `fdf` command line: check, graph, run, inspect and scenario.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::casestudies::scenario::{self, Scenario};
use crate::check::{check_file, CheckReport};
use crate::diag::Diagnostic;
use crate::dot;
use crate::engine::{self, RunConfig, RunResult};
use crate::library::Library;
use crate::mlkit::{LearnedFunction, Model};
use crate::store::{self, DataManifest};

#[derive(Debug, Parser)]
#[command(name = "fdf", version, about = "Check, draw and run Function+Data Flow pipelines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, validate, check acyclicity and infer types.
    Check {
        file: PathBuf,
        /// Treat warnings as errors.
        #[arg(long)]
        strict: bool,
    },
    /// Print the pipeline as a Graphviz digraph.
    Graph {
        file: PathBuf,
        #[arg(long)]
        dot: bool,
        /// One node per port instead of one per box.
        #[arg(long)]
        ports: bool,
    },
    /// Execute a pipeline.
    Run {
        file: PathBuf,
        /// Manifest mapping sources (and optionally sinks) to CSV files.
        #[arg(long)]
        data: PathBuf,
        /// Directory receiving sinks and exported functions.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        strict: bool,
    },
    /// Summarize a saved function.
    Inspect { file: PathBuf },
    /// Generate synthetic data and run a case study end to end.
    Scenario {
        #[arg(value_enum)]
        name: ScenarioName,
        /// Working directory for data, pipelines and artifacts.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioName {
    Strain,
    Bearing,
    BearingVariant,
    All,
}

/// Parse `args` (program name first) and execute; returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let library = match Library::from_env() {
        Ok(l) => l,
        Err(e) => {
            let _ = writeln!(err, "error: FDF_LIBRARY_MANIFEST: {e}");
            return 1;
        }
    };
    match cli.command {
        Command::Check { file, strict } => cmd_check(&file, strict, &library, out),
        Command::Graph { file, dot: _, ports } => cmd_graph(&file, ports, out, err),
        Command::Run { file, data, out: dir, seed, jobs, strict } => {
            match run_file(&file, &data, &dir, RunConfig { seed, jobs }, strict, &library, out, err) {
                Ok(_) => 0,
                Err(code) => code,
            }
        }
        Command::Inspect { file } => cmd_inspect(&file, out, err),
        Command::Scenario { name, dir, seed, jobs } => cmd_scenario(name, &dir, seed, jobs, out, err),
    }
}

fn print_diagnostics(report: &CheckReport, file: &Path, to: &mut dyn Write) {
    let name = file.display().to_string();
    for d in &report.diagnostics {
        let _ = writeln!(to, "{}", d.render(&name));
    }
}

fn read_check(file: &Path, library: &Library, err: &mut dyn Write) -> Result<(CheckReport, Library), i32> {
    check_file(file, library).map_err(|e| {
        let _ = writeln!(err, "error: cannot read {}: {e}", file.display());
        2
    })
}

/// Exit 0 when clean or only warned, 1 on errors, 2 when the text does not parse.
pub fn cmd_check(file: &Path, strict: bool, library: &Library, out: &mut dyn Write) -> i32 {
    let (report, _) = match read_check(file, library, out) {
        Ok(r) => r,
        Err(code) => return code,
    };
    print_diagnostics(&report, file, out);
    report.exit_code(strict)
}

pub fn cmd_graph(file: &Path, ports: bool, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", file.display());
            return 2;
        }
    };
    let pipeline = match crate::textfmt::parse(&text) {
        Ok(p) => p,
        Err(diags) => {
            let name = file.display().to_string();
            for d in diags {
                let _ = writeln!(err, "{}", d.render(&name));
            }
            return 2;
        }
    };
    let text = if ports {
        dot::ports_to_dot(&pipeline, &crate::graph::build_graph(&pipeline))
    } else {
        dot::boxes_to_dot(&pipeline)
    };
    let _ = out.write_all(text.as_bytes());
    0
}

/// Files written by a successful or partially successful run.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    /// Sink reference (`box.port` or source name) to the CSV written for it.
    pub sinks: BTreeMap<String, PathBuf>,
    /// Export reference to its `.fdfn` file.
    pub exports: BTreeMap<String, PathBuf>,
    pub log: Vec<String>,
}

fn fail(err: &mut dyn Write, msg: impl std::fmt::Display) -> i32 {
    let _ = writeln!(err, "error: {msg}");
    1
}

/// Check, then execute `file` with the batches named in `data`, writing
/// sinks and exports under `out_dir`. Any diagnostic is printed to `err`
/// and the log to `out`; the error value is the exit code.
#[allow(clippy::too_many_arguments)]
pub fn run_file(
    file: &Path,
    data: &Path,
    out_dir: &Path,
    config: RunConfig,
    strict: bool,
    library: &Library,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<RunSummary, i32> {
    let (report, library) = read_check(file, library, err)?;
    print_diagnostics(&report, file, err);
    let code = report.exit_code(strict);
    if code != 0 {
        return Err(code);
    }
    let (pipeline, _, env) = report.checked().expect("exit code 0 means checked");
    let manifest = DataManifest::load(data).map_err(|e| fail(err, format!("{}: {e}", data.display())))?;
    let mut sources = BTreeMap::new();
    for p in pipeline.sources() {
        let name = pipeline.port_ref(*p);
        if let Some(path) = manifest.sources.get(&name) {
            let batch = store::load_batch(path).map_err(|e| fail(err, e))?;
            sources.insert(*p, batch);
        }
    }
    for name in manifest.sources.keys() {
        if !pipeline.sources().iter().any(|p| pipeline.port_ref(*p) == *name) {
            let _ = writeln!(err, "warning: manifest names unknown source `{name}`");
        }
    }
    let result = engine::run(pipeline, env, &library, &sources, config).map_err(|diags| {
        report_failures(&diags, file, err);
        1
    })?;
    std::fs::create_dir_all(out_dir).map_err(|e| fail(err, format!("{}: {e}", out_dir.display())))?;
    let summary = write_results(pipeline, &result, &manifest, out_dir).map_err(|e| fail(err, e))?;
    for line in &summary.log {
        let _ = writeln!(out, "{line}");
    }
    if result.succeeded() {
        Ok(summary)
    } else {
        report_failures(&result.failures, file, err);
        Err(1)
    }
}

fn report_failures(diags: &[Diagnostic], file: &Path, err: &mut dyn Write) {
    let name = file.display().to_string();
    for d in diags {
        let _ = writeln!(err, "{}", d.render(&name));
    }
}

fn write_results(
    pipeline: &crate::ir::Pipeline,
    result: &RunResult,
    manifest: &DataManifest,
    out_dir: &Path,
) -> Result<RunSummary, store::StoreError> {
    let upstream = |q| pipeline.source_of(q).map(|s| pipeline.port_ref(s)).unwrap_or_default();
    let mut summary = RunSummary { log: result.log.iter().map(|l| l.render()).collect(), ..Default::default() };
    for (q, batch) in &result.sinks {
        let name = upstream(*q);
        let path = manifest.sinks.get(&name).cloned().unwrap_or_else(|| out_dir.join(format!("{name}.csv")));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .map_err(|e| store::StoreError::Io { path: dir.display().to_string(), source: e })?;
        }
        store::save_batch(batch, &path)?;
        summary.sinks.insert(name, path);
    }
    for (q, f) in &result.exports {
        let name = upstream(*q);
        let path = out_dir.join(format!("{name}.fdfn"));
        store::save_function(f, &path)?;
        summary.exports.insert(name, path);
    }
    Ok(summary)
}

fn slot_line(widths: &[usize], slots: &[crate::mlkit::SlotType]) -> String {
    widths
        .iter()
        .enumerate()
        .map(|(i, w)| match slots.get(i) {
            Some(s) if !s.labels.is_empty() => format!("{w} (type {} \"{}\")", s.type_id, s.labels.join("\", \"")),
            Some(s) => format!("{w} (type {})", s.type_id),
            None => w.to_string(),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn model_lines(f: &LearnedFunction, indent: &str, lines: &mut Vec<String>) {
    match &f.model {
        Model::PcaEncode(b) | Model::PcaDecode(b) => {
            let kept: f64 = b.explained.iter().sum();
            lines.push(format!(
                "{indent}components: {} ({:.4} of the variance)",
                b.components(),
                kept / b.total_variance
            ));
        }
        Model::StandardizeEncode(s) | Model::StandardizeDecode(s) => {
            lines.push(format!("{indent}columns: {}", s.width()));
        }
        Model::Linreg(m) => lines.push(format!("{indent}weights: {}x{}", m.weights.nrows(), m.weights.ncols())),
        Model::Mlp(m) => {
            let hidden: Vec<String> = m.layers[..m.layers.len() - 1].iter().map(|l| l.w.nrows().to_string()).collect();
            lines.push(format!("{indent}hidden layers: ({})", hidden.join(",")));
            if let Some(w) = m.window {
                lines.push(format!("{indent}window: {} over {} steps", w.len, w.steps));
            }
        }
        Model::Dlinss(m) => {
            lines.push(format!("{indent}state order: {}", m.order()));
            lines.push(format!("{indent}spectral radius: {:.6}", m.spectral_radius()));
        }
        Model::Composed(parts) => {
            for (i, p) in parts.iter().enumerate() {
                lines.push(format!("{indent}part {}: {}", i + 1, p.kind()));
                model_lines(p, &format!("{indent}  "), lines);
            }
        }
    }
}

/// Human-readable description of a saved function.
pub fn describe(f: &LearnedFunction) -> String {
    let mut lines = vec![
        format!("kind: {}", f.kind()),
        format!("inputs: {}", slot_line(&f.in_widths, &f.signature.inputs)),
        format!("outputs: {}", slot_line(&f.out_widths, &f.signature.outputs)),
    ];
    model_lines(f, "", &mut lines);
    let p = &f.provenance;
    lines.push(format!("provenance: pipeline {}, box {}, seed {}", p.pipeline, p.box_id, p.seed));
    for n in &f.notes {
        lines.push(format!("note: {n}"));
    }
    lines.join("\n") + "\n"
}

pub fn cmd_inspect(file: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match store::load_function(file) {
        Ok(f) => {
            let _ = out.write_all(describe(&f).as_bytes());
            0
        }
        Err(e) => fail(err, format!("{}: {e}", file.display())),
    }
}

fn cmd_scenario(
    name: ScenarioName,
    dir: &Path,
    seed: u64,
    jobs: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let which: &[Scenario] = match name {
        ScenarioName::Strain => &[Scenario::Strain],
        ScenarioName::Bearing => &[Scenario::Bearing],
        ScenarioName::BearingVariant => &[Scenario::BearingVariant],
        ScenarioName::All => &[Scenario::Strain, Scenario::Bearing, Scenario::BearingVariant],
    };
    for s in which {
        match scenario::run_scenario(*s, &dir.join(s.name()), seed, jobs) {
            Ok(r) => {
                let _ = out.write_all(r.render().as_bytes());
            }
            Err(e) => return fail(err, format!("scenario {}: {e}", s.name())),
        }
    }
    0
}
