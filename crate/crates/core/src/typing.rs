//! Implicit data types: annotation unification and propagation along the
//! topological order of the FDF graph.
//!
//! Data types are port ids; a union-find whose representative is always the
//! smallest member keeps every port's type at or below its own id.

use std::collections::{BTreeMap, BTreeSet};

use crate::diag::{Code, Diagnostic};
use crate::graph::FdfGraph;
use crate::ir::{BoxIndex, BoxKind, Direction, Param, Pipeline, PortClass, PortId};
use crate::library::{LibError, Library, LibrarySignature, Role, TypeOverride};
use crate::mlkit::{Signature, SlotType};
use crate::textfmt::strip_exponent;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ImplicitType {
    Data(u32),
    Func { inputs: Vec<u32>, outputs: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeEnv {
    parent: Vec<u32>,
    /// Stripped annotations carried by each class, keyed by representative.
    labels: BTreeMap<u32, BTreeSet<String>>,
    funcs: BTreeMap<PortId, (Vec<u32>, Vec<u32>)>,
    classes: Vec<PortClass>,
    poisoned: BTreeSet<PortId>,
}

impl TypeEnv {
    /// Every port starts with its default type, its own id.
    pub fn new(pipeline: &Pipeline) -> Self {
        let m = pipeline.port_count() as u32;
        TypeEnv {
            parent: (1..=m).collect(),
            labels: BTreeMap::new(),
            funcs: BTreeMap::new(),
            classes: pipeline.ports().iter().map(|p| p.class).collect(),
            poisoned: BTreeSet::new(),
        }
    }

    pub fn find(&self, t: u32) -> u32 {
        let mut x = t;
        while self.parent[x as usize - 1] != x {
            x = self.parent[x as usize - 1];
        }
        x
    }

    /// Merge two classes; the smaller representative wins.
    pub fn unify(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi as usize - 1] = lo;
        if let Some(moved) = self.labels.remove(&hi) {
            self.labels.entry(lo).or_default().extend(moved);
        }
        lo
    }

    fn add_labels(&mut self, t: u32, labels: impl IntoIterator<Item = String>) {
        let r = self.find(t);
        self.labels.entry(r).or_default().extend(labels);
    }

    pub fn labels(&self, t: u32) -> BTreeSet<String> {
        self.labels.get(&self.find(t)).cloned().unwrap_or_default()
    }

    pub fn is_poisoned(&self, p: PortId) -> bool {
        self.poisoned.contains(&p)
    }

    pub fn data_type(&self, p: PortId) -> Option<u32> {
        (self.classes.get(p.index()) == Some(&PortClass::Data) && !self.is_poisoned(p)).then(|| self.find(p.0))
    }

    pub fn func_type(&self, p: PortId) -> Option<(Vec<u32>, Vec<u32>)> {
        if self.is_poisoned(p) {
            return None;
        }
        let (i, o) = self.funcs.get(&p)?;
        Some((i.iter().map(|t| self.find(*t)).collect(), o.iter().map(|t| self.find(*t)).collect()))
    }

    pub fn implicit_type(&self, p: PortId) -> Option<ImplicitType> {
        match self.classes.get(p.index())? {
            PortClass::Data => self.data_type(p).map(ImplicitType::Data),
            PortClass::Function => self.func_type(p).map(|(inputs, outputs)| ImplicitType::Func { inputs, outputs }),
        }
    }

    fn slot(&self, t: u32) -> SlotType {
        SlotType { type_id: self.find(t), labels: self.labels(t).into_iter().collect() }
    }

    /// Snapshot stamped on a learned function leaving port `p`.
    pub fn signature_of(&self, p: PortId) -> Option<Signature> {
        let (i, o) = self.func_type(p)?;
        Some(Signature {
            inputs: i.iter().map(|t| self.slot(*t)).collect(),
            outputs: o.iter().map(|t| self.slot(*t)).collect(),
        })
    }

    /// Smallest data port whose type is `t`, the natural name for a type.
    pub fn witness(&self, t: u32) -> Option<PortId> {
        let r = self.find(t);
        (1..=self.parent.len() as u32).map(PortId).find(|p| self.data_type(*p) == Some(r))
    }
}

/// Unify ports whose annotations agree up to exponents, then apply
/// `same_type` directives.
pub fn apply_annotations(pipeline: &Pipeline, env: &mut TypeEnv) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut groups: BTreeMap<&str, Vec<PortId>> = BTreeMap::new();
    for port in pipeline.ports() {
        let Some(a) = &port.annotation else { continue };
        if port.class == PortClass::Function {
            diags.push(
                Diagnostic::new(
                    Code::AnnotClass,
                    format!("annotation \"{a}\" on function port `{}`", pipeline.port_ref(port.id)),
                )
                .with_span(port.span)
                .with_ports([port.id]),
            );
            continue;
        }
        groups.entry(strip_exponent(a)).or_default().push(port.id);
    }
    for (label, ports) in groups {
        for p in &ports {
            env.unify(ports[0].0, p.0);
        }
        env.add_labels(ports[0].0, [label.to_string()]);
    }
    for st in pipeline.same_type() {
        let fun = [st.a, st.b].into_iter().find(|p| env.classes.get(p.index()) != Some(&PortClass::Data));
        if let Some(p) = fun {
            diags.push(
                Diagnostic::new(Code::AnnotClass, format!("`same_type` on function port `{}`", pipeline.port_ref(p)))
                    .with_span(st.span)
                    .with_ports([st.a, st.b]),
            );
            continue;
        }
        env.unify(st.a.0, st.b.0);
    }
    diags
}

struct Propagation<'a> {
    pipeline: &'a Pipeline,
    library: &'a Library,
    env: TypeEnv,
    diags: Vec<Diagnostic>,
}

/// Types every port and collects diagnostics in topological order. Outputs
/// of a box that raised an error are left untyped, and so is everything
/// downstream of them.
pub fn propagate(pipeline: &Pipeline, graph: &FdfGraph, library: &Library) -> (TypeEnv, Vec<Diagnostic>) {
    let mut env = TypeEnv::new(pipeline);
    let diags = apply_annotations(pipeline, &mut env);
    let mut run = Propagation { pipeline, library, env, diags };
    let order: Vec<PortId> = match graph.topo() {
        Some(t) => t.to_vec(),
        None => (1..=pipeline.port_count() as u32).map(PortId).collect(),
    };
    let mut typed = vec![false; pipeline.boxes().len()];
    for p in order {
        let Ok(port) = pipeline.port(p) else { continue };
        match port.direction {
            Direction::Input => run.input(p, port.class),
            Direction::Output => {
                let b = port.owner;
                if !pipeline.box_decl(b).kind.is_implicit() && !typed[b] {
                    typed[b] = true;
                    run.box_rule(b);
                }
            }
        }
    }
    (run.env, run.diags)
}

fn lib_diag(e: &LibError) -> Code {
    match e {
        LibError::Unknown { .. } => Code::UnknownPredef,
        _ => Code::BadArg,
    }
}

impl Propagation<'_> {
    fn input(&mut self, p: PortId, class: PortClass) {
        let Ok(src) = self.pipeline.source_of(p) else { return };
        if self.env.is_poisoned(src) {
            self.env.poisoned.insert(p);
            return;
        }
        match class {
            PortClass::Data => {
                if self.env.classes.get(src.index()) == Some(&PortClass::Data) {
                    self.env.unify(p.0, src.0);
                }
            }
            PortClass::Function => {
                if let Some(f) = self.env.funcs.get(&src).cloned() {
                    self.env.funcs.insert(p, f);
                } else {
                    self.env.poisoned.insert(p);
                }
            }
        }
    }

    fn poison_outputs(&mut self, b: BoxIndex) {
        let outs: Vec<PortId> = self.pipeline.box_decl(b).outputs().collect();
        self.env.poisoned.extend(outs);
    }

    fn error(&mut self, b: BoxIndex, code: Code, msg: String, ports: Vec<PortId>) {
        let decl = self.pipeline.box_decl(b);
        self.diags.push(Diagnostic::new(code, msg).with_span(decl.span).with_box(decl.id.clone()).with_ports(ports));
        self.poison_outputs(b);
    }

    fn warn(&mut self, b: BoxIndex, at: PortId, msg: String, ports: Vec<PortId>) {
        let decl = self.pipeline.box_decl(b);
        let span = self.pipeline.port(at).ok().and_then(|p| p.span).or(decl.span);
        self.diags.push(
            Diagnostic::new(Code::InconsistentInput, msg).with_span(span).with_box(decl.id.clone()).with_ports(ports),
        );
    }

    /// The output feeding `p`, which is what a user can name in `same_type`.
    fn upstream(&self, p: PortId) -> PortId {
        self.pipeline.source_of(p).unwrap_or(p)
    }

    fn signature(&mut self, b: BoxIndex, role: Role) -> Option<LibrarySignature> {
        let decl = self.pipeline.box_decl(b);
        let Some(param) = &decl.param else {
            self.poison_outputs(b);
            return None;
        };
        match self.library.signature(role, param.predef()) {
            Ok(s) => Some(s),
            Err(e) => {
                let id = decl.id.clone();
                self.error(b, lib_diag(&e), format!("box `{id}`: {e}"), vec![]);
                None
            }
        }
    }

    fn box_rule(&mut self, b: BoxIndex) {
        let decl = self.pipeline.box_decl(b).clone();
        if let Some(bad) = decl.inputs().find(|p| self.env.is_poisoned(*p)) {
            if decl.func_inputs.contains(&bad) {
                self.error(
                    b,
                    Code::Upstream,
                    format!("box `{}` applies a function whose type is unknown because of an upstream error", decl.id),
                    vec![bad],
                );
            } else {
                self.poison_outputs(b);
            }
            return;
        }
        let ins: Vec<u32> = decl.data_inputs.iter().map(|p| self.env.find(p.0)).collect();
        match decl.kind {
            BoxKind::Coder => {
                let Some(sig) = self.signature(b, Role::Coder) else { return };
                let Some(min_out) = decl.func_outputs.iter().map(|p| p.0).min() else { return };
                let fresh = match (sig.type_override, ins.first()) {
                    (TypeOverride::OutEqIn1, Some(t1)) => *t1,
                    _ => min_out,
                };
                if let Some(enc) = decl.func_outputs.first() {
                    self.env.funcs.insert(*enc, (ins.clone(), vec![fresh]));
                }
                if let Some(dec) = decl.func_outputs.get(1) {
                    self.env.funcs.insert(*dec, (vec![fresh], ins));
                }
            }
            BoxKind::Trainer => {
                let Some(Param::Split { k, .. }) = decl.param else {
                    self.poison_outputs(b);
                    return;
                };
                if self.signature(b, Role::Trainer).is_none() {
                    return;
                }
                let k = k.min(ins.len());
                if let Some(out) = decl.func_outputs.first() {
                    self.env.funcs.insert(*out, (ins[..k].to_vec(), ins[k..].to_vec()));
                }
            }
            BoxKind::Processor => match decl.func_inputs.first() {
                Some(pf) => self.apply_function(b, *pf),
                None => self.apply_predef(b),
            },
            BoxKind::DataIO | BoxKind::FuncOut => {}
        }
    }

    fn check_arity(&mut self, b: BoxIndex, k: usize, k_out: usize, what: &str) -> bool {
        let decl = self.pipeline.box_decl(b);
        let (have_in, have_out) = (decl.data_inputs.len(), decl.data_outputs.len());
        if (have_in, have_out) != (k, k_out) {
            let id = decl.id.clone();
            let ports: Vec<PortId> = decl.data_inputs.iter().chain(&decl.data_outputs).copied().collect();
            self.error(
                b,
                Code::ArityMismatch,
                format!(
                    "box `{id}` has {have_in} data inputs and {have_out} data outputs but {what} expects {k} and {k_out}"
                ),
                ports,
            );
            return false;
        }
        true
    }

    fn apply_function(&mut self, b: BoxIndex, pf: PortId) {
        let Some((fin, fout)) = self.env.func_type(pf) else {
            self.poison_outputs(b);
            return;
        };
        if !self.check_arity(b, fin.len(), fout.len(), "the applied function") {
            return;
        }
        let decl = self.pipeline.box_decl(b).clone();
        for (p, expected) in decl.data_inputs.iter().zip(&fin) {
            let actual = self.env.find(p.0);
            if actual != *expected {
                let src = self.upstream(*p);
                let other = self.env.witness(*expected).map_or(PortId(*expected), |w| w);
                self.warn(
                    b,
                    *p,
                    format!(
                        "box `{}` feeds `{}` (type {actual}) to a function expecting type {expected}",
                        decl.id,
                        self.pipeline.port_ref(src),
                    ),
                    vec![src, other],
                );
            }
        }
        for (p, t) in decl.data_outputs.iter().zip(&fout) {
            self.env.unify(p.0, *t);
        }
    }

    fn apply_predef(&mut self, b: BoxIndex) {
        let Some(sig) = self.signature(b, Role::Processor) else { return };
        if !self.check_arity(b, sig.k, sig.k_out, "the library function") {
            return;
        }
        let decl = self.pipeline.box_decl(b).clone();
        if let Some(labels) = &sig.labels {
            self.apply_imported(b, labels.inputs.clone(), labels.outputs.clone());
            return;
        }
        let slot = |s: usize| -> PortId {
            if s <= sig.k {
                decl.data_inputs[s - 1]
            } else {
                decl.data_outputs[s - sig.k - 1]
            }
        };
        for part in &sig.partitions {
            let inputs: Vec<PortId> = part.iter().filter(|s| **s <= sig.k).map(|s| slot(*s)).collect();
            let outputs: Vec<PortId> = part.iter().filter(|s| **s > sig.k).map(|s| slot(*s)).collect();
            match inputs.first() {
                Some(first) => {
                    let t = self.env.find(first.0);
                    for p in &inputs[1..] {
                        if self.env.find(p.0) != t {
                            let (a, c) = (self.upstream(*first), self.upstream(*p));
                            self.warn(
                                b,
                                *p,
                                format!(
                                    "box `{}` combines `{}` and `{}`, which have different types",
                                    decl.id,
                                    self.pipeline.port_ref(a),
                                    self.pipeline.port_ref(c)
                                ),
                                vec![a, c],
                            );
                        }
                    }
                    for o in outputs {
                        self.env.unify(o.0, t);
                    }
                }
                None => {
                    for o in &outputs {
                        self.env.unify(outputs[0].0, o.0);
                    }
                }
            }
        }
    }

    /// Functions loaded from artifacts carry annotation labels instead of
    /// pipeline-local type ids.
    fn apply_imported(&mut self, b: BoxIndex, inputs: Vec<Vec<String>>, outputs: Vec<Vec<String>>) {
        let decl = self.pipeline.box_decl(b).clone();
        for (p, expected) in decl.data_inputs.iter().zip(&inputs) {
            let have = self.env.labels(p.0);
            if expected.is_empty() || have.is_empty() || expected.iter().any(|l| have.contains(l)) {
                continue;
            }
            let src = self.upstream(*p);
            let mut ports = vec![src];
            if let Some(w) = self.carrier(expected, self.env.find(p.0)) {
                ports.push(w);
            }
            self.warn(
                b,
                *p,
                format!(
                    "box `{}` feeds `{}` ({}) to a function expecting {}",
                    decl.id,
                    self.pipeline.port_ref(src),
                    quoted(have.iter()),
                    quoted(expected.iter())
                ),
                ports,
            );
        }
        for (p, expected) in decl.data_outputs.iter().zip(&outputs) {
            if let Some(w) = self.carrier(expected, 0) {
                self.env.unify(p.0, w.0);
            }
            self.env.add_labels(p.0, expected.iter().cloned());
        }
    }

    /// Smallest typed data port outside class `except` whose type carries one of `labels`.
    fn carrier(&self, labels: &[String], except: u32) -> Option<PortId> {
        (1..=self.env.parent.len() as u32).map(PortId).find(|p| {
            self.env.data_type(*p).is_some_and(|t| {
                t != except && {
                    let have = self.env.labels(t);
                    labels.iter().any(|l| have.contains(l))
                }
            })
        })
    }
}

fn quoted<'a>(labels: impl Iterator<Item = &'a String>) -> String {
    labels.map(|l| format!("\"{l}\"")).collect::<Vec<_>>().join(", ")
}
