//! In-memory FDF pipeline: boxes, ports, wiring and the box arity table.
//!
//! A [`Pipeline`] is immutable once built. Ports are numbered densely from 1;
//! the parser renumbers them along a topological order of the FDF graph so
//! that every edge goes from a lower to a higher id.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::diag::{Code, Diagnostic, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId(pub u32);

impl PortId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a box inside [`Pipeline::boxes`].
pub type BoxIndex = usize;

pub const DATA_IO: BoxIndex = 0;
pub const FUNC_OUT: BoxIndex = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoxKind {
    Processor,
    Coder,
    Trainer,
    DataIO,
    FuncOut,
}

impl BoxKind {
    pub fn is_implicit(self) -> bool {
        matches!(self, BoxKind::DataIO | BoxKind::FuncOut)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            BoxKind::Processor => "processor",
            BoxKind::Coder => "coder",
            BoxKind::Trainer => "trainer",
            BoxKind::DataIO => "DataIO",
            BoxKind::FuncOut => "FuncOut",
        }
    }
}

/// Reference to a predefined library function, written `name(args)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LibraryRef {
    raw: String,
    name_len: usize,
}

impl LibraryRef {
    pub fn parse(text: &str) -> Result<Self, String> {
        let raw = text.trim();
        let name_len =
            raw.char_indices().find(|(_, c)| !(c.is_alphanumeric() || *c == '_')).map(|(i, _)| i).unwrap_or(raw.len());
        if name_len == 0 {
            return Err(format!("expected a library function name in {raw:?}"));
        }
        let rest = raw[name_len..].trim_start();
        if !rest.is_empty() {
            if !rest.starts_with('(') || !rest.ends_with(')') {
                return Err(format!("expected `name(args)` in {raw:?}"));
            }
            let inner = &rest[1..rest.len() - 1];
            if inner.contains('(') || inner.contains(')') {
                return Err(format!("nested parentheses in {raw:?}"));
            }
        }
        Ok(LibraryRef { raw: raw.to_string(), name_len })
    }

    pub fn name(&self) -> &str {
        &self.raw[..self.name_len]
    }

    /// Text between the parentheses, empty when there are none.
    pub fn args(&self) -> &str {
        let rest = self.raw[self.name_len..].trim_start();
        if rest.is_empty() {
            ""
        } else {
            rest[1..rest.len() - 1].trim()
        }
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }
}

impl fmt::Display for LibraryRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Param {
    Predef(LibraryRef),
    /// Trainer parameter: the first `k` data inputs are X, the rest are Y.
    Split {
        k: usize,
        predef: LibraryRef,
    },
}

impl Param {
    pub fn predef(&self) -> &LibraryRef {
        match self {
            Param::Predef(r) | Param::Split { predef: r, .. } => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortClass {
    Data,
    Function,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub id: PortId,
    pub direction: Direction,
    pub class: PortClass,
    pub owner: BoxIndex,
    /// Local name inside the owning box (`in1`, `func`, or the declared output name).
    pub name: String,
    pub annotation: Option<String>,
    /// Declaration position inside the owning box; survives renumbering.
    pub slot: u32,
    pub span: Option<SourceSpan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxDecl {
    pub id: String,
    pub kind: BoxKind,
    pub param: Option<Param>,
    pub display_name: Option<String>,
    pub span: Option<SourceSpan>,
    /// Data inputs in declaration order. For a Trainer this order defines the X/Y split.
    pub data_inputs: Vec<PortId>,
    pub func_inputs: Vec<PortId>,
    pub data_outputs: Vec<PortId>,
    pub func_outputs: Vec<PortId>,
}

impl BoxDecl {
    pub fn inputs(&self) -> impl Iterator<Item = PortId> + '_ {
        self.func_inputs.iter().chain(&self.data_inputs).copied()
    }

    pub fn outputs(&self) -> impl Iterator<Item = PortId> + '_ {
        self.data_outputs.iter().chain(&self.func_outputs).copied()
    }

    pub fn label(&self) -> &str {
        self.display_name.as_deref().unwrap_or(&self.id)
    }
}

/// User directive asserting two ports carry the same data type.
#[derive(Debug, Clone, PartialEq)]
pub struct SameType {
    pub a: PortId,
    pub b: PortId,
    pub span: Option<SourceSpan>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IrError {
    #[error("unknown port {0}")]
    UnknownPort(PortId),
    #[error("port {0} is not an input port")]
    NotAnInput(PortId),
    #[error("input port {0} is not wired to any output")]
    Dangling(PortId),
    #[error("duplicate box id `{0}`")]
    DuplicateBox(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    name: String,
    boxes: Vec<BoxDecl>,
    ports: Vec<Port>,
    wiring: BTreeMap<PortId, PortId>,
    same_type: Vec<SameType>,
}

impl Pipeline {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn boxes(&self) -> &[BoxDecl] {
        &self.boxes
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn port_count(&self) -> usize {
        self.ports.len()
    }

    pub fn wiring(&self) -> &BTreeMap<PortId, PortId> {
        &self.wiring
    }

    pub fn same_type(&self) -> &[SameType] {
        &self.same_type
    }

    pub fn port(&self, p: PortId) -> Result<&Port, IrError> {
        if p.0 == 0 {
            return Err(IrError::UnknownPort(p));
        }
        self.ports.get(p.index()).ok_or(IrError::UnknownPort(p))
    }

    pub fn box_decl(&self, b: BoxIndex) -> &BoxDecl {
        &self.boxes[b]
    }

    pub fn box_index(&self, id: &str) -> Option<BoxIndex> {
        self.boxes.iter().position(|b| b.id == id)
    }

    /// User-declared boxes, skipping DataIO and FuncOut.
    pub fn explicit_boxes(&self) -> impl Iterator<Item = (BoxIndex, &BoxDecl)> {
        self.boxes.iter().enumerate().filter(|(_, b)| !b.kind.is_implicit())
    }

    /// Id of the box owning `p`.
    pub fn port_owner(&self, p: PortId) -> Result<&str, IrError> {
        Ok(&self.boxes[self.port(p)?.owner].id)
    }

    /// The output port feeding input port `p`.
    pub fn source_of(&self, p: PortId) -> Result<PortId, IrError> {
        let port = self.port(p)?;
        if port.direction != Direction::Input {
            return Err(IrError::NotAnInput(p));
        }
        self.wiring.get(&p).copied().ok_or(IrError::Dangling(p))
    }

    /// `box.port` style name, or the bare name for DataIO sources.
    pub fn port_ref(&self, p: PortId) -> String {
        match self.port(p) {
            Ok(port) if port.owner == DATA_IO && port.direction == Direction::Output => port.name.clone(),
            Ok(port) if port.owner == DATA_IO || port.owner == FUNC_OUT => port.name.clone(),
            Ok(port) => format!("{}.{}", self.boxes[port.owner].id, port.name),
            Err(_) => format!("#{p}"),
        }
    }

    pub fn sources(&self) -> &[PortId] {
        &self.boxes[DATA_IO].data_outputs
    }

    pub fn sinks(&self) -> &[PortId] {
        &self.boxes[DATA_IO].data_inputs
    }

    pub fn exports(&self) -> &[PortId] {
        &self.boxes[FUNC_OUT].func_inputs
    }

    /// Structural fingerprint independent of port numbering.
    pub fn shape(&self) -> PipelineShape {
        let name_of = |p: PortId| -> (String, String) {
            let port = &self.ports[p.index()];
            (self.boxes[port.owner].id.clone(), port.name.clone())
        };
        let boxes = self
            .boxes
            .iter()
            .map(|b| BoxShape {
                id: b.id.clone(),
                kind: b.kind,
                param: b.param.clone(),
                ports: [&b.data_inputs, &b.func_inputs, &b.data_outputs, &b.func_outputs]
                    .into_iter()
                    .map(|list| {
                        list.iter()
                            .map(|p| {
                                let port = &self.ports[p.index()];
                                (port.name.clone(), port.annotation.clone())
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        let mut wiring: Vec<_> = self.wiring.iter().map(|(q, p)| (name_of(*q), name_of(*p))).collect();
        wiring.sort();
        let same_type = self.same_type.iter().map(|s| (name_of(s.a), name_of(s.b))).collect();
        PipelineShape { name: self.name.clone(), boxes, wiring, same_type }
    }

    /// Rebuild with new port ids: `order[i]` is the old id that becomes `i + 1`.
    pub(crate) fn renumbered(&self, order: &[PortId]) -> Pipeline {
        assert_eq!(order.len(), self.ports.len(), "renumbering must be a permutation");
        let mut new_id = vec![PortId(0); self.ports.len()];
        for (i, old) in order.iter().enumerate() {
            new_id[old.index()] = PortId(i as u32 + 1);
        }
        let map = |p: &PortId| new_id[p.index()];
        let ports = order
            .iter()
            .map(|old| {
                let mut port = self.ports[old.index()].clone();
                port.id = map(old);
                port
            })
            .collect();
        let boxes = self
            .boxes
            .iter()
            .map(|b| BoxDecl {
                data_inputs: b.data_inputs.iter().map(map).collect(),
                func_inputs: b.func_inputs.iter().map(map).collect(),
                data_outputs: b.data_outputs.iter().map(map).collect(),
                func_outputs: b.func_outputs.iter().map(map).collect(),
                ..b.clone()
            })
            .collect();
        let wiring = self.wiring.iter().map(|(q, p)| (map(q), map(p))).collect();
        let same_type = self.same_type.iter().map(|s| SameType { a: map(&s.a), b: map(&s.b), span: s.span }).collect();
        Pipeline { name: self.name.clone(), boxes, ports, wiring, same_type }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxShape {
    pub id: String,
    pub kind: BoxKind,
    pub param: Option<Param>,
    pub ports: Vec<Vec<(String, Option<String>)>>,
}

/// Numbering-free view of a pipeline; equal shapes mean isomorphic pipelines.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineShape {
    pub name: String,
    pub boxes: Vec<BoxShape>,
    pub wiring: Vec<((String, String), (String, String))>,
    pub same_type: Vec<((String, String), (String, String))>,
}

/// Incremental constructor used by the parser and by tests.
#[derive(Debug, Clone)]
pub struct PipelineBuilder {
    inner: Pipeline,
}

impl PipelineBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        let implicit = |id: &str, kind| BoxDecl {
            id: id.to_string(),
            kind,
            param: None,
            display_name: None,
            span: None,
            data_inputs: Vec::new(),
            func_inputs: Vec::new(),
            data_outputs: Vec::new(),
            func_outputs: Vec::new(),
        };
        PipelineBuilder {
            inner: Pipeline {
                name: name.into(),
                boxes: vec![implicit("DataIO", BoxKind::DataIO), implicit("FuncOut", BoxKind::FuncOut)],
                ports: Vec::new(),
                wiring: BTreeMap::new(),
                same_type: Vec::new(),
            },
        }
    }

    pub fn add_box(
        &mut self,
        id: impl Into<String>,
        kind: BoxKind,
        param: Option<Param>,
        span: Option<SourceSpan>,
    ) -> Result<BoxIndex, IrError> {
        let id = id.into();
        assert!(!kind.is_implicit(), "implicit boxes are created by the builder");
        if self.inner.boxes.iter().any(|b| b.id == id) {
            return Err(IrError::DuplicateBox(id));
        }
        self.inner.boxes.push(BoxDecl {
            id,
            kind,
            param,
            display_name: None,
            span,
            data_inputs: Vec::new(),
            func_inputs: Vec::new(),
            data_outputs: Vec::new(),
            func_outputs: Vec::new(),
        });
        Ok(self.inner.boxes.len() - 1)
    }

    pub fn set_display_name(&mut self, b: BoxIndex, name: impl Into<String>) {
        self.inner.boxes[b].display_name = Some(name.into());
    }

    pub fn add_port(
        &mut self,
        owner: BoxIndex,
        direction: Direction,
        class: PortClass,
        name: impl Into<String>,
        annotation: Option<String>,
        span: Option<SourceSpan>,
    ) -> PortId {
        let id = PortId(self.inner.ports.len() as u32 + 1);
        let decl = &mut self.inner.boxes[owner];
        let slot = (decl.data_inputs.len() + decl.func_inputs.len() + decl.data_outputs.len() + decl.func_outputs.len())
            as u32;
        match (direction, class) {
            (Direction::Input, PortClass::Data) => decl.data_inputs.push(id),
            (Direction::Input, PortClass::Function) => decl.func_inputs.push(id),
            (Direction::Output, PortClass::Data) => decl.data_outputs.push(id),
            (Direction::Output, PortClass::Function) => decl.func_outputs.push(id),
        }
        self.inner.ports.push(Port { id, direction, class, owner, name: name.into(), annotation, slot, span });
        id
    }

    pub fn wire(&mut self, input: PortId, output: PortId) {
        self.inner.wiring.insert(input, output);
    }

    pub fn same_type(&mut self, a: PortId, b: PortId, span: Option<SourceSpan>) {
        self.inner.same_type.push(SameType { a, b, span });
    }

    pub fn port(&self, p: PortId) -> &Port {
        &self.inner.ports[p.index()]
    }

    pub fn box_decl(&self, b: BoxIndex) -> &BoxDecl {
        &self.inner.boxes[b]
    }

    pub fn box_index(&self, id: &str) -> Option<BoxIndex> {
        self.inner.box_index(id)
    }

    pub fn build(self) -> Pipeline {
        self.inner
    }
}

/// Arity range (inclusive) for one port category.
#[derive(Debug, Clone, Copy)]
struct Arity {
    min: usize,
    max: Option<usize>,
}

impl Arity {
    const fn between(min: usize, max: usize) -> Self {
        Arity { min, max: Some(max) }
    }
    const fn at_least(min: usize) -> Self {
        Arity { min, max: None }
    }
    fn admits(&self, n: usize) -> bool {
        n >= self.min && self.max.is_none_or(|m| n <= m)
    }
    fn describe(&self) -> String {
        match self.max {
            Some(m) if m == self.min => format!("exactly {m}"),
            Some(m) => format!("{}..={m}", self.min),
            None => format!("at least {}", self.min),
        }
    }
}

/// Rows of the box arity table: (input data, input function, output data, output function).
fn arity_row(kind: BoxKind) -> [Arity; 4] {
    match kind {
        BoxKind::Processor => [Arity::at_least(1), Arity::between(0, 1), Arity::at_least(1), Arity::between(0, 0)],
        BoxKind::Coder => [Arity::at_least(1), Arity::between(0, 0), Arity::between(0, 0), Arity::between(1, 2)],
        BoxKind::Trainer => [Arity::at_least(2), Arity::between(0, 0), Arity::between(0, 0), Arity::between(1, 1)],
        BoxKind::FuncOut => [Arity::between(0, 0), Arity::at_least(0), Arity::between(0, 0), Arity::between(0, 0)],
        BoxKind::DataIO => [Arity::at_least(0), Arity::between(0, 0), Arity::at_least(0), Arity::between(0, 0)],
    }
}

const CATEGORY: [&str; 4] = ["input data ports", "input function ports", "output data ports", "output function ports"];

/// Check the arity table, wiring completeness, wiring class agreement and
/// parameter shape. Returns one diagnostic per violation; empty iff valid.
pub fn validate_structure(pipeline: &Pipeline) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for b in &pipeline.boxes {
        let counts = [b.data_inputs.len(), b.func_inputs.len(), b.data_outputs.len(), b.func_outputs.len()];
        for ((arity, n), what) in arity_row(b.kind).iter().zip(counts).zip(CATEGORY) {
            if !arity.admits(n) {
                out.push(
                    Diagnostic::new(
                        Code::Arity,
                        format!("{} `{}` has {n} {what}, expected {}", b.kind.keyword(), b.id, arity.describe()),
                    )
                    .with_span(b.span)
                    .with_box(&b.id),
                );
            }
        }

        let bad_param = |msg: String| Diagnostic::new(Code::Param, msg).with_span(b.span).with_box(&b.id);
        match (b.kind, &b.param) {
            (BoxKind::Trainer, Some(Param::Split { k, .. })) => {
                let ell = b.data_inputs.len();
                if *k < 1 || *k >= ell {
                    out.push(
                        Diagnostic::new(
                            Code::ParamK,
                            format!(
                                "trainer `{}` splits at k = {k} but has {ell} input data ports (need 1 <= k < {ell})",
                                b.id
                            ),
                        )
                        .with_span(b.span)
                        .with_box(&b.id),
                    );
                }
            }
            (BoxKind::Trainer, _) => out.push(bad_param(format!("trainer `{}` needs `k = <int>` and `predef`", b.id))),
            (BoxKind::Coder, Some(Param::Predef(_))) => {}
            (BoxKind::Coder, _) => out.push(bad_param(format!("coder `{}` needs a `predef` parameter", b.id))),
            (BoxKind::Processor, param) => {
                let has_func = !b.func_inputs.is_empty();
                match (has_func, param) {
                    (true, None) | (false, Some(Param::Predef(_))) => {}
                    (true, Some(_)) => {
                        out.push(bad_param(format!("processor `{}` has both an input function and a `predef`", b.id)))
                    }
                    (false, _) => {
                        out.push(bad_param(format!("processor `{}` needs either `func =` or `predef =`", b.id)))
                    }
                }
            }
            (BoxKind::DataIO | BoxKind::FuncOut, _) => {}
        }
    }

    for port in &pipeline.ports {
        if port.direction != Direction::Input {
            continue;
        }
        let Some(&src) = pipeline.wiring.get(&port.id) else {
            out.push(
                Diagnostic::new(Code::Dangling, format!("input port {} has no source", pipeline.port_ref(port.id)))
                    .with_span(port.span)
                    .with_ports([port.id]),
            );
            continue;
        };
        match pipeline.port(src) {
            Err(_) => out.push(
                Diagnostic::new(Code::Dangling, format!("input port {} wired to unknown port {src}", port.id))
                    .with_span(port.span)
                    .with_ports([port.id]),
            ),
            Ok(s) if s.direction != Direction::Output => out.push(
                Diagnostic::new(Code::Dangling, format!("input port {} wired to input port {src}", port.id))
                    .with_span(port.span)
                    .with_ports([port.id, src]),
            ),
            Ok(s) if s.class != port.class => out.push(
                Diagnostic::new(
                    Code::Class,
                    format!(
                        "{} port {} reads from {} port {}",
                        class_word(port.class),
                        pipeline.port_ref(port.id),
                        class_word(s.class),
                        pipeline.port_ref(src)
                    ),
                )
                .with_span(port.span)
                .with_ports([port.id, src]),
            ),
            Ok(_) => {}
        }
    }
    for q in pipeline.wiring.keys() {
        if pipeline.port(*q).map(|p| p.direction) != Ok(Direction::Input) {
            out.push(Diagnostic::new(Code::Dangling, format!("wiring entry for non-input port {q}")).with_ports([*q]));
        }
    }
    out
}

fn class_word(c: PortClass) -> &'static str {
    match c {
        PortClass::Data => "data",
        PortClass::Function => "function",
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The minimal pipeline built by hand with the canonical port numbers.
    pub(crate) fn minimal_by_hand() -> Pipeline {
        use BoxKind::*;
        use Direction::*;
        use PortClass::*;
        let mut b = PipelineBuilder::new("minimal");
        let b1 =
            b.add_box("b1", Coder, Some(Param::Predef(LibraryRef::parse("pca(var=0.99)").unwrap())), None).unwrap();
        let b2 = b.add_box("b2", Processor, None, None).unwrap();
        let b3 = b
            .add_box(
                "b3",
                Trainer,
                Some(Param::Split { k: 1, predef: LibraryRef::parse("mlp(50,50,opt=sgd)").unwrap() }),
                None,
            )
            .unwrap();
        // Added in id order 1..=14.
        let p1 = b.add_port(DATA_IO, Output, Data, "X", None, None);
        let p2 = b.add_port(DATA_IO, Output, Data, "Y", None, None);
        let p3 = b.add_port(b1, Input, Data, "in1", None, None);
        let p4 = b.add_port(b2, Input, Data, "in1", None, None);
        let p5 = b.add_port(b3, Input, Data, "in2", None, None);
        let p6 = b.add_port(b1, Output, Function, "encode", None, None);
        let p7 = b.add_port(b1, Output, Function, "decode", None, None);
        let p8 = b.add_port(FUNC_OUT, Input, Function, "b1.encode", None, None);
        let p9 = b.add_port(b2, Input, Function, "func", None, None);
        let p10 = b.add_port(FUNC_OUT, Input, Function, "b1.decode", None, None);
        let p11 = b.add_port(b2, Output, Data, "xr", None, None);
        let p12 = b.add_port(b3, Input, Data, "in1", None, None);
        let p13 = b.add_port(b3, Output, Function, "predict", None, None);
        let p14 = b.add_port(FUNC_OUT, Input, Function, "b3.predict", None, None);
        for (q, p) in [(p3, p1), (p4, p1), (p5, p2), (p8, p6), (p9, p6), (p10, p7), (p12, p11), (p14, p13)] {
            b.wire(q, p);
        }
        let mut p = b.build();
        // Trainer input order is X (port 12) then Y (port 5).
        p.boxes[b3].data_inputs = vec![p12, p5];
        p
    }

    #[test]
    fn minimal_pipeline_is_structurally_valid() {
        let p = minimal_by_hand();
        assert_eq!(p.port_count(), 14);
        assert!(validate_structure(&p).is_empty(), "{:?}", validate_structure(&p));
    }

    #[test]
    fn port_owner_matches_formal_definition() {
        let p = minimal_by_hand();
        assert_eq!(p.port_owner(PortId(3)).unwrap(), "b1");
        assert_eq!(p.port_owner(PortId(1)).unwrap(), "DataIO");
        assert_eq!(p.port_owner(PortId(14)).unwrap(), "FuncOut");
        assert_eq!(p.port_owner(PortId(15)), Err(IrError::UnknownPort(PortId(15))));
        assert_eq!(p.port_owner(PortId(0)), Err(IrError::UnknownPort(PortId(0))));
    }

    #[test]
    fn source_of_reads_wiring() {
        let p = minimal_by_hand();
        assert_eq!(p.source_of(PortId(9)).unwrap(), PortId(6));
        assert_eq!(p.source_of(PortId(14)).unwrap(), PortId(13));
        assert_eq!(p.source_of(PortId(6)), Err(IrError::NotAnInput(PortId(6))));

        let mut b = PipelineBuilder::new("d");
        let q = b.add_port(DATA_IO, Direction::Input, PortClass::Data, "sink", None, None);
        let p = b.build();
        assert_eq!(p.source_of(q), Err(IrError::Dangling(q)));
        let diags = validate_structure(&p);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, Code::Dangling);
    }

    #[test]
    fn coder_without_function_output_violates_arity() {
        let mut b = PipelineBuilder::new("c");
        let c = b.add_box("c", BoxKind::Coder, Some(Param::Predef(LibraryRef::parse("pca").unwrap())), None).unwrap();
        let x = b.add_port(DATA_IO, Direction::Output, PortClass::Data, "X", None, None);
        let i = b.add_port(c, Direction::Input, PortClass::Data, "in1", None, None);
        b.wire(i, x);
        let diags = validate_structure(&b.build());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, Code::Arity);
        assert_eq!(diags[0].box_id.as_deref(), Some("c"));
    }

    #[test]
    fn trainer_k_must_be_below_input_count() {
        let mut b = PipelineBuilder::new("t");
        let t = b
            .add_box(
                "t",
                BoxKind::Trainer,
                Some(Param::Split { k: 2, predef: LibraryRef::parse("linreg").unwrap() }),
                None,
            )
            .unwrap();
        let x = b.add_port(DATA_IO, Direction::Output, PortClass::Data, "X", None, None);
        let y = b.add_port(DATA_IO, Direction::Output, PortClass::Data, "Y", None, None);
        let i1 = b.add_port(t, Direction::Input, PortClass::Data, "in1", None, None);
        let i2 = b.add_port(t, Direction::Input, PortClass::Data, "in2", None, None);
        b.add_port(t, Direction::Output, PortClass::Function, "f", None, None);
        b.wire(i1, x);
        b.wire(i2, y);
        let diags = validate_structure(&b.build());
        assert_eq!(diags.iter().map(|d| d.code).collect::<Vec<_>>(), vec![Code::ParamK]);
    }

    #[test]
    fn class_mismatch_across_wiring_is_reported() {
        let mut b = PipelineBuilder::new("m");
        let c = b.add_box("c", BoxKind::Coder, Some(Param::Predef(LibraryRef::parse("pca").unwrap())), None).unwrap();
        let x = b.add_port(DATA_IO, Direction::Output, PortClass::Data, "X", None, None);
        let i = b.add_port(c, Direction::Input, PortClass::Data, "in1", None, None);
        let e = b.add_port(c, Direction::Output, PortClass::Function, "e", None, None);
        let sink = b.add_port(DATA_IO, Direction::Input, PortClass::Data, "c.e", None, None);
        b.wire(i, x);
        b.wire(sink, e);
        let diags = validate_structure(&b.build());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, Code::Class);
        assert_eq!(diags[0].ports, vec![sink, e]);
    }

    #[test]
    fn library_ref_splits_name_and_args() {
        let r = LibraryRef::parse("mlp(50, 50, opt=sgd)").unwrap();
        assert_eq!(r.name(), "mlp");
        assert_eq!(r.args(), "50, 50, opt=sgd");
        let bare = LibraryRef::parse("sub").unwrap();
        assert_eq!(bare.name(), "sub");
        assert_eq!(bare.args(), "");
        assert!(LibraryRef::parse("(x)").is_err());
        assert!(LibraryRef::parse("f(x").is_err());
        assert!(LibraryRef::parse("f x").is_err());
    }
}
