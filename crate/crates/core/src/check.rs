//! The static passes bundled: parse, structure, graph, typing.

use std::path::Path;

use crate::diag::{has_errors, Code, Diagnostic, Severity};
use crate::graph::{build_graph, check_well_formed, CycleWitness, FdfGraph};
use crate::ir::{validate_structure, Pipeline};
use crate::library::Library;
use crate::textfmt;
use crate::typing::{propagate, TypeEnv};

/// Everything the static passes learned about one source text.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub pipeline: Option<Pipeline>,
    pub graph: Option<FdfGraph>,
    pub env: Option<TypeEnv>,
    pub diagnostics: Vec<Diagnostic>,
    /// The text did not parse; nothing else ran.
    pub parse_failed: bool,
}

impl CheckReport {
    pub fn has_errors(&self) -> bool {
        has_errors(&self.diagnostics)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Warning)
    }

    /// 2 on parse failure, 1 on errors (or warnings when `strict`), else 0.
    pub fn exit_code(&self, strict: bool) -> i32 {
        if self.parse_failed {
            2
        } else if self.has_errors() || (strict && self.warnings().next().is_some()) {
            1
        } else {
            0
        }
    }

    /// Pipeline, graph and types, when every pass succeeded without errors.
    pub fn checked(&self) -> Option<(&Pipeline, &FdfGraph, &TypeEnv)> {
        if self.has_errors() {
            return None;
        }
        Some((self.pipeline.as_ref()?, self.graph.as_ref()?, self.env.as_ref()?))
    }
}

pub fn check_source(text: &str, library: &Library) -> CheckReport {
    let mut report =
        CheckReport { pipeline: None, graph: None, env: None, diagnostics: Vec::new(), parse_failed: false };
    let pipeline = match textfmt::parse(text) {
        Ok(p) => p,
        Err(d) => {
            report.diagnostics = d;
            report.parse_failed = true;
            return report;
        }
    };
    check_pipeline_into(pipeline, library, &mut report);
    report
}

pub fn check_pipeline(pipeline: Pipeline, library: &Library) -> CheckReport {
    let mut report =
        CheckReport { pipeline: None, graph: None, env: None, diagnostics: Vec::new(), parse_failed: false };
    check_pipeline_into(pipeline, library, &mut report);
    report
}

fn check_pipeline_into(pipeline: Pipeline, library: &Library, report: &mut CheckReport) {
    report.diagnostics.extend(validate_structure(&pipeline));
    if report.has_errors() {
        report.pipeline = Some(pipeline);
        return;
    }
    let mut graph = build_graph(&pipeline);
    if let Err(CycleWitness(cycle)) = check_well_formed(&mut graph) {
        let mut path: Vec<String> = cycle.iter().map(|p| pipeline.port_ref(*p)).collect();
        path.push(pipeline.port_ref(cycle[0]));
        let span = pipeline.port(cycle[0]).ok().and_then(|p| p.span);
        report.diagnostics.push(
            Diagnostic::new(Code::Cycle, format!("the FDF graph has a cycle: {}", path.join(" -> ")))
                .with_span(span)
                .with_ports(cycle),
        );
        report.pipeline = Some(pipeline);
        report.graph = Some(graph);
        return;
    }
    let (env, diags) = propagate(&pipeline, &graph, library);
    report.diagnostics.extend(diags);
    report.pipeline = Some(pipeline);
    report.graph = Some(graph);
    report.env = Some(env);
}

/// Check a file on disk; relative `file=` arguments resolve next to it.
pub fn check_file(path: &Path, library: &Library) -> std::io::Result<(CheckReport, Library)> {
    let bytes = std::fs::read(path)?;
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let library = library.clone().with_base_dir(dir);
    let report = match std::str::from_utf8(&bytes) {
        Ok(text) => check_source(text, &library),
        Err(_) => CheckReport {
            pipeline: None,
            graph: None,
            env: None,
            diagnostics: textfmt::parse_bytes(&bytes).err().unwrap_or_default(),
            parse_failed: true,
        },
    };
    Ok((report, library))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_fixture_is_clean() {
        let r = check_source(include_str!("../fixtures/minimal.fdf"), &Library::builtin());
        assert!(r.diagnostics.is_empty(), "{:?}", r.diagnostics);
        assert_eq!(r.exit_code(false), 0);
        assert!(r.checked().is_some());
    }

    #[test]
    fn cycles_are_reported_with_a_witness() {
        let text = "box a : processor {\n  predef = \"identity\"\n  in data b.y\n  out data y\n}\n\
                    box b : processor {\n  predef = \"identity\"\n  in data a.y\n  out data y\n}\n";
        let r = check_source(text, &Library::builtin());
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!(r.diagnostics[0].code, Code::Cycle);
        assert_eq!(r.diagnostics[0].ports.len(), 4);
        assert_eq!(r.exit_code(false), 1);
    }

    #[test]
    fn exit_codes() {
        let lib = Library::builtin();
        assert_eq!(check_source("box {", &lib).exit_code(false), 2);
        let warn = "source data a\nsource data b\nbox d : processor {\n  predef = \"sub\"\n  in data a, b\n  out data y\n}\nsink data d.y\n";
        let r = check_source(warn, &lib);
        assert_eq!((r.exit_code(false), r.exit_code(true)), (0, 1));
        let structural = "source data a\nbox d : processor {\n  in data a\n  out data y\n}\nsink data d.y\n";
        assert_eq!(check_source(structural, &lib).exit_code(false), 1);
    }
}
