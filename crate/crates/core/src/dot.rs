//! Graphviz rendering: Processors are rectangles, Coders trapezia, Trainers
//! pentagons; data flows in solid black, functions in dashed red.

use std::fmt::Write;

use crate::graph::FdfGraph;
use crate::ir::{BoxKind, Pipeline, PortClass, DATA_IO, FUNC_OUT};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn node_style(kind: BoxKind) -> &'static str {
    match kind {
        BoxKind::Processor => "shape=box, style=filled, fillcolor=lightblue",
        BoxKind::Coder => "shape=trapezium, style=filled, fillcolor=palegreen",
        BoxKind::Trainer => "shape=pentagon, style=filled, fillcolor=thistle",
        BoxKind::DataIO => "shape=cylinder",
        BoxKind::FuncOut => "shape=doubleoctagon, color=red",
    }
}

fn edge_style(class: PortClass) -> &'static str {
    match class {
        PortClass::Data => "color=black",
        PortClass::Function => "color=red style=dashed",
    }
}

fn box_name(pipeline: &Pipeline, b: usize) -> String {
    match b {
        DATA_IO => "DataIO".to_string(),
        FUNC_OUT => "FuncOut".to_string(),
        _ => pipeline.box_decl(b).id.clone(),
    }
}

fn used(pipeline: &Pipeline, b: usize) -> bool {
    let d = pipeline.box_decl(b);
    !d.kind.is_implicit() || d.inputs().next().is_some() || d.outputs().next().is_some()
}

/// One node per box and one edge per wire, labelled with the port names.
pub fn boxes_to_dot(pipeline: &Pipeline) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(pipeline.name())).unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    for b in 0..pipeline.boxes().len() {
        if !used(pipeline, b) {
            continue;
        }
        let d = pipeline.box_decl(b);
        let label = match &d.param {
            Some(p) if !d.kind.is_implicit() => format!("{}\\n{}", d.label(), p.predef().as_str().replace('"', "'")),
            _ => box_name(pipeline, b),
        };
        writeln!(out, "  {} [label={}, {}];", quote(&box_name(pipeline, b)), quote(&label), node_style(d.kind))
            .unwrap();
    }
    for (input, output) in pipeline.wiring() {
        let (Ok(i), Ok(o)) = (pipeline.port(*input), pipeline.port(*output)) else { continue };
        writeln!(
            out,
            "  {} -> {} [label={}, {}];",
            quote(&box_name(pipeline, o.owner)),
            quote(&box_name(pipeline, i.owner)),
            quote(&format!("{} -> {}", o.name, i.name)),
            edge_style(o.class)
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

/// One node per port, grouped by box, with the edges of the FDF graph.
pub fn ports_to_dot(pipeline: &Pipeline, graph: &FdfGraph) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", quote(pipeline.name())).unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    for b in 0..pipeline.boxes().len() {
        if !used(pipeline, b) {
            continue;
        }
        let d = pipeline.box_decl(b);
        writeln!(out, "  subgraph {} {{", quote(&format!("cluster_{b}"))).unwrap();
        writeln!(out, "    label={};", quote(&box_name(pipeline, b))).unwrap();
        let mut ports: Vec<_> = d.inputs().chain(d.outputs()).collect();
        ports.sort();
        for p in ports {
            let port = pipeline.port(p).expect("declared port");
            let color = match port.class {
                PortClass::Data => "black",
                PortClass::Function => "red",
            };
            let label = format!("{}: {}", p.0, port.name);
            writeln!(out, "    p{} [label={}, shape=circle, color={color}];", p.0, quote(&label)).unwrap();
        }
        out.push_str("  }\n");
    }
    for (a, b) in graph.edges() {
        let class = pipeline.port(*a).map(|p| p.class).unwrap_or(PortClass::Data);
        writeln!(out, "  p{} -> p{} [{}];", a.0, b.0, edge_style(class)).unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::textfmt::parse;

    #[test]
    fn minimal_box_view() {
        let p = parse(include_str!("../fixtures/minimal.fdf")).unwrap();
        let dot = boxes_to_dot(&p);
        assert_eq!(dot.matches("shape=").count(), 5);
        assert_eq!(dot.matches(" -> \"").count(), 8);
        assert_eq!(dot.matches("color=red style=dashed").count(), 4);
        assert!(dot.contains("shape=trapezium") && dot.contains("shape=pentagon"));
    }

    #[test]
    fn minimal_port_view() {
        let p = parse(include_str!("../fixtures/minimal.fdf")).unwrap();
        let dot = ports_to_dot(&p, &build_graph(&p));
        assert_eq!(dot.matches("shape=circle").count(), 14);
    }

    #[test]
    fn empty_pipeline_is_an_empty_digraph() {
        let p = parse("pipeline empty\n").unwrap();
        assert_eq!(boxes_to_dot(&p), "digraph \"empty\" {\n  rankdir=LR;\n}\n");
    }
}
