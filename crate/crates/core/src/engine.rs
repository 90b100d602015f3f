//! Box-level execution: a box runs once every box wired into it is done.
//! Independent ready boxes may run on several threads; results do not
//! depend on the interleaving because every box draws its randomness from
//! a seed derived from the run seed and its own id.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::diag::{Code, Diagnostic};
use crate::graph::direct_predecessors;
use crate::ir::{BoxIndex, BoxKind, Direction, Param, Pipeline, PortClass, PortId, DATA_IO};
use crate::library::{LibError, Library, Role};
use crate::mlkit::{self, DataBatch, LearnedFunction, MlError, Provenance};
use crate::typing::TypeEnv;

#[derive(Debug, Clone)]
pub enum Value {
    Data(Arc<DataBatch>),
    Func(Arc<LearnedFunction>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxStatus {
    Blocked,
    Ready,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub box_id: String,
    pub millis: u128,
    pub ports: Vec<PortId>,
}

impl LogEntry {
    pub fn render(&self) -> String {
        let ports: Vec<String> = self.ports.iter().map(|p| p.0.to_string()).collect();
        format!("DONE {} {} {}", self.box_id, self.millis, ports.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { seed: 0, jobs: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Keyed by the sink's input port.
    pub sinks: BTreeMap<PortId, Arc<DataBatch>>,
    /// Keyed by the export's input port.
    pub exports: BTreeMap<PortId, Arc<LearnedFunction>>,
    pub status: Vec<BoxStatus>,
    pub log: Vec<LogEntry>,
    /// One diagnostic per failed box, in box order.
    pub failures: Vec<Diagnostic>,
}

impl RunResult {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Seed for one box, derived from the run seed and the box id.
pub fn box_seed(run_seed: u64, box_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(box_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn ml_code(e: &MlError) -> Code {
    match e {
        MlError::Shape(_) => Code::RuntimeShape,
        _ => Code::Runtime,
    }
}

fn lib_code(e: &LibError) -> Code {
    match e {
        LibError::Unknown { .. } => Code::UnknownPredef,
        _ => Code::BadArg,
    }
}

struct Ctx<'a> {
    pipeline: &'a Pipeline,
    env: &'a TypeEnv,
    library: &'a Library,
    seed: u64,
}

type Outputs = Vec<(PortId, Value)>;

/// Box, outcome, wall milliseconds and completion instant.
type Completion = (BoxIndex, Result<Outputs, Diagnostic>, u128, Instant);

impl Ctx<'_> {
    fn fail(&self, b: BoxIndex, code: Code, msg: impl Into<String>) -> Diagnostic {
        let decl = self.pipeline.box_decl(b);
        Diagnostic::new(code, format!("box `{}`: {}", decl.id, msg.into()))
            .with_span(decl.span)
            .with_box(decl.id.clone())
    }

    fn stamp(&self, b: BoxIndex, port: PortId, mut f: LearnedFunction) -> Value {
        if let Some(sig) = self.env.signature_of(port) {
            f.signature = sig;
        }
        f.provenance = Provenance {
            pipeline: self.pipeline.name().to_string(),
            box_id: self.pipeline.box_decl(b).id.clone(),
            seed: self.seed,
        };
        Value::Func(Arc::new(f))
    }

    fn execute(&self, b: BoxIndex, slots: &[Option<Value>]) -> Result<Outputs, Diagnostic> {
        let decl = self.pipeline.box_decl(b);
        let read = |q: PortId| -> Option<&Value> {
            let src = self.pipeline.source_of(q).ok()?;
            slots[src.index()].as_ref()
        };
        let mut data: Vec<&DataBatch> = Vec::with_capacity(decl.data_inputs.len());
        for q in &decl.data_inputs {
            match read(*q) {
                Some(Value::Data(d)) => data.push(d),
                _ => {
                    return Err(self.fail(
                        b,
                        Code::Runtime,
                        format!("no batch on input `{}`", self.pipeline.port_ref(*q)),
                    ))
                }
            }
        }
        if let Some(first) = data.first() {
            if let Some((j, other)) = data.iter().enumerate().find(|(_, d)| d.n() != first.n()) {
                return Err(self
                    .fail(
                        b,
                        Code::Batch,
                        format!(
                            "input batches have different sample counts ({} on `{}`, {} on `{}`)",
                            first.n(),
                            self.pipeline.port_ref(decl.data_inputs[0]),
                            other.n(),
                            self.pipeline.port_ref(decl.data_inputs[j])
                        ),
                    )
                    .with_ports([decl.data_inputs[0], decl.data_inputs[j]]));
            }
        }
        let seed = box_seed(self.seed, &decl.id);
        let ml = |e: MlError| self.fail(b, ml_code(&e), e.to_string());
        let lookup = |role| {
            let param = decl.param.as_ref().ok_or_else(|| self.fail(b, Code::Param, "missing parameter"))?;
            self.library.lookup(role, param.predef()).map_err(|e| self.fail(b, lib_code(&e), e.to_string()))
        };
        match decl.kind {
            BoxKind::Coder => {
                let (enc, dec) = lookup(Role::Coder)?.code(&data).map_err(ml)?;
                let mut out = Vec::new();
                for (port, f) in decl.func_outputs.iter().zip([enc, dec]) {
                    out.push((*port, self.stamp(b, *port, f)));
                }
                Ok(out)
            }
            BoxKind::Trainer => {
                let Some(Param::Split { k, .. }) = decl.param else {
                    return Err(self.fail(b, Code::ParamK, "trainer without a split"));
                };
                let inst = lookup(Role::Trainer)?;
                let f = inst.train(&data[..k], &data[k..], seed).map_err(ml)?;
                let port = decl.func_outputs[0];
                Ok(vec![(port, self.stamp(b, port, f))])
            }
            BoxKind::Processor => {
                let outs = match decl.func_inputs.first() {
                    Some(pf) => match read(*pf) {
                        Some(Value::Func(f)) => mlkit::apply(f, &data).map_err(ml)?,
                        _ => return Err(self.fail(b, Code::Runtime, "no function on the function input")),
                    },
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        lookup(Role::Processor)?.process(&data, &mut rng).map_err(ml)?
                    }
                };
                if outs.len() != decl.data_outputs.len() {
                    return Err(self.fail(
                        b,
                        Code::RuntimeShape,
                        format!("produced {} outputs for {} output ports", outs.len(), decl.data_outputs.len()),
                    ));
                }
                if let Some(o) = outs.iter().find(|o| data.first().is_some_and(|d| d.n() != o.n())) {
                    return Err(self.fail(b, Code::RuntimeShape, format!("output has {} samples", o.n())));
                }
                Ok(decl.data_outputs.iter().zip(outs).map(|(p, d)| (*p, Value::Data(Arc::new(d)))).collect())
            }
            BoxKind::DataIO | BoxKind::FuncOut => Ok(Vec::new()),
        }
    }
}

/// Per-type widths seen so far; equal types must carry equal widths.
struct Widths(BTreeMap<u32, (usize, PortId)>);

impl Widths {
    fn admit(&mut self, env: &TypeEnv, port: PortId, width: usize) -> Result<(), (PortId, usize)> {
        let Some(t) = env.data_type(port) else { return Ok(()) };
        match self.0.get(&t) {
            Some((w, other)) if *w != width => Err((*other, *w)),
            Some(_) => Ok(()),
            None => {
                self.0.insert(t, (width, port));
                Ok(())
            }
        }
    }
}

/// Execute a checked pipeline. `sources` maps each source port to its batch.
pub fn run(
    pipeline: &Pipeline,
    env: &TypeEnv,
    library: &Library,
    sources: &BTreeMap<PortId, DataBatch>,
    config: RunConfig,
) -> Result<RunResult, Vec<Diagnostic>> {
    let missing: Vec<Diagnostic> = pipeline
        .sources()
        .iter()
        .filter(|p| !sources.contains_key(p))
        .map(|p| {
            Diagnostic::new(Code::MissingSource, format!("no data for source `{}`", pipeline.port_ref(*p)))
                .with_ports([*p])
        })
        .collect();
    if !missing.is_empty() {
        return Err(missing);
    }

    let m = pipeline.port_count();
    let mut slots: Vec<Option<Value>> = vec![None; m];
    let mut widths = Widths(BTreeMap::new());
    let mut failures = Vec::new();
    for p in pipeline.sources() {
        let batch = &sources[p];
        if let Err((other, w)) = widths.admit(env, *p, batch.width()) {
            failures.push(
                Diagnostic::new(
                    Code::RuntimeShape,
                    format!(
                        "source `{}` has width {} but `{}` of the same type has width {w}",
                        pipeline.port_ref(*p),
                        batch.width(),
                        pipeline.port_ref(other)
                    ),
                )
                .with_ports([*p, other]),
            );
        }
        slots[p.index()] = Some(Value::Data(Arc::new(batch.clone())));
    }
    if !failures.is_empty() {
        return Err(failures);
    }

    let nboxes = pipeline.boxes().len();
    let preds: Vec<Vec<BoxIndex>> =
        (0..nboxes).map(|b| direct_predecessors(pipeline, b).into_iter().collect()).collect();
    let mut status = vec![BoxStatus::Blocked; nboxes];
    for (b, decl) in pipeline.boxes().iter().enumerate() {
        if decl.kind.is_implicit() {
            status[b] = BoxStatus::Done;
        }
    }
    let ctx = Ctx { pipeline, env, library, seed: config.seed };
    let mut log = Vec::new();

    loop {
        let mut wave = Vec::new();
        for b in 0..nboxes {
            if status[b] != BoxStatus::Blocked {
                continue;
            }
            if let Some(p) = preds[b].iter().find(|p| status[**p] == BoxStatus::Failed) {
                status[b] = BoxStatus::Failed;
                let upstream = pipeline.box_decl(*p).id.clone();
                failures.push(ctx.fail(b, Code::UpstreamFailed, format!("not run because `{upstream}` failed")));
                continue;
            }
            if preds[b].iter().all(|p| status[*p] == BoxStatus::Done) {
                status[b] = BoxStatus::Ready;
                wave.push(b);
            }
        }
        if wave.is_empty() {
            if status.contains(&BoxStatus::Blocked) {
                // Boxes failed in this pass still have blocked dependents.
                continue;
            }
            break;
        }

        let results: Mutex<Vec<Completion>> = Mutex::new(Vec::new());
        let next = AtomicUsize::new(0);
        let workers = config.jobs.max(1).min(wave.len());
        let work = || loop {
            let i = next.fetch_add(1, Ordering::SeqCst);
            let Some(&b) = wave.get(i) else { break };
            let t0 = Instant::now();
            let r = ctx.execute(b, &slots);
            let done = Instant::now();
            results.lock().expect("no poisoned lock").push((b, r, (done - t0).as_millis(), done));
        };
        if workers <= 1 {
            work();
        } else {
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(work);
                }
            });
        }
        let mut results = results.into_inner().expect("no poisoned lock");
        results.sort_by_key(|(_, _, _, done)| *done);
        let completed: Vec<_> = results.into_iter().map(|(b, r, ms, _)| (b, r, ms)).collect();
        // Apply in box order so that shared state evolves deterministically.
        let mut by_box: Vec<_> = completed.iter().map(|(b, _, _)| *b).collect();
        by_box.sort_unstable();
        let mut outcome: BTreeMap<BoxIndex, Result<Vec<PortId>, Diagnostic>> = BTreeMap::new();
        for b in by_box {
            let (_, r, _) = completed.iter().find(|(x, _, _)| *x == b).expect("present");
            let res = match r {
                Err(d) => Err(d.clone()),
                Ok(outs) => {
                    let mut bad = None;
                    for (p, v) in outs {
                        if let Value::Data(d) = v {
                            if let Err((other, w)) = widths.admit(env, *p, d.width()) {
                                bad = Some(
                                    ctx.fail(
                                        b,
                                        Code::RuntimeShape,
                                        format!(
                                            "`{}` has width {} but `{}` of the same type has width {w}",
                                            pipeline.port_ref(*p),
                                            d.width(),
                                            pipeline.port_ref(other)
                                        ),
                                    )
                                    .with_ports([*p, other]),
                                );
                                break;
                            }
                        }
                    }
                    match bad {
                        Some(d) => Err(d),
                        None => {
                            for (p, v) in outs {
                                assert!(slots[p.index()].is_none(), "port {p} written twice");
                                slots[p.index()] = Some(v.clone());
                            }
                            Ok(outs.iter().map(|(p, _)| *p).collect())
                        }
                    }
                }
            };
            outcome.insert(b, res);
        }
        for (b, _, ms) in &completed {
            match &outcome[b] {
                Ok(ports) => {
                    status[*b] = BoxStatus::Done;
                    log.push(LogEntry { box_id: pipeline.box_decl(*b).id.clone(), millis: *ms, ports: ports.clone() });
                }
                Err(_) => status[*b] = BoxStatus::Failed,
            }
        }
        for (_, r) in outcome {
            if let Err(d) = r {
                failures.push(d);
            }
        }
    }

    let mut sinks = BTreeMap::new();
    let mut exports = BTreeMap::new();
    for port in pipeline.ports() {
        if port.direction != Direction::Input || !pipeline.box_decl(port.owner).kind.is_implicit() {
            continue;
        }
        let Ok(src) = pipeline.source_of(port.id) else { continue };
        match (&slots[src.index()], port.class) {
            (Some(Value::Data(d)), PortClass::Data) if port.owner == DATA_IO => {
                sinks.insert(port.id, d.clone());
            }
            (Some(Value::Func(f)), PortClass::Function) => {
                exports.insert(port.id, f.clone());
            }
            _ => {}
        }
    }
    failures.sort_by_key(|d| d.box_id.as_ref().and_then(|id| pipeline.box_index(id)));
    Ok(RunResult { sinks, exports, status, log, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::check_source;

    fn run_text(text: &str, sources: &[(&str, DataBatch)], jobs: usize) -> (Pipeline, RunResult) {
        let lib = Library::builtin();
        let report = check_source(text, &lib);
        let (p, _, env) = report.checked().unwrap_or_else(|| panic!("{:?}", report.diagnostics));
        let map = sources
            .iter()
            .map(|(name, b)| (*p.sources().iter().find(|s| p.port_ref(**s) == *name).unwrap(), b.clone()))
            .collect();
        let r = run(p, env, &lib, &map, RunConfig { seed: 3, jobs }).unwrap();
        (p.clone(), r)
    }

    fn rank2(n: usize) -> (DataBatch, DataBatch) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let (a, b) = ((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos());
            x.extend([a, b, a + b, a - 2.0 * b, 0.5 * a + 3.0]);
            y.push(a * b);
        }
        (DataBatch::new(n, 5, x).unwrap(), DataBatch::new(n, 1, y).unwrap())
    }

    #[test]
    fn minimal_pipeline_exports_three_functions() {
        let (x, y) = rank2(200);
        let text = include_str!("../fixtures/minimal.fdf").replace("mlp(50,50,opt=sgd)", "mlp(8,epochs=5)");
        let (_, r) = run_text(&text, &[("X", x), ("Y", y)], 1);
        assert!(r.succeeded(), "{:?}", r.failures);
        assert_eq!(r.exports.len(), 3);
        let predict = &r.exports[&PortId(14)];
        assert_eq!(predict.in_widths, vec![2]);
        assert_eq!(predict.signature.inputs[0].type_id, 6);
        assert_eq!(predict.provenance.box_id, "b3");
        assert_eq!(r.log.len(), 3);
    }

    #[test]
    fn identity_is_bit_exact() {
        let (x, _) = rank2(10);
        let text = "source data x\nbox i : processor {\n  predef = \"identity\"\n  in data x\n  out data y\n}\nsink data i.y\n";
        let (_, r) = run_text(text, &[("x", x.clone())], 1);
        assert_eq!(r.sinks.values().next().unwrap().as_ref(), &x);
    }

    #[test]
    fn batch_mismatch_fails_only_dependents() {
        let text = "source data a\nsource data b\n\
            box t : trainer {\n  k = 1\n  predef = \"linreg\"\n  in data a, b\n  out func f\n}\n\
            box p : processor {\n  func = t.f\n  in data a\n  out data y\n}\n\
            box q : processor {\n  predef = \"identity\"\n  in data a\n  out data z\n}\n\
            sink data p.y\nsink data q.z\n";
        let (a, _) = rank2(200);
        let (_, b) = rank2(100);
        let (p, r) = run_text(text, &[("a", a), ("b", b)], 2);
        let codes: Vec<Code> = r.failures.iter().map(|d| d.code).collect();
        assert_eq!(codes, vec![Code::Batch, Code::UpstreamFailed]);
        let st = |id| r.status[p.box_index(id).unwrap()];
        assert_eq!((st("t"), st("p"), st("q")), (BoxStatus::Failed, BoxStatus::Failed, BoxStatus::Done));
        assert_eq!(r.sinks.len(), 1);
    }

    #[test]
    fn missing_sources_are_reported() {
        let lib = Library::builtin();
        let report = check_source("source data x\nsink data x\n", &lib);
        let (p, _, env) = report.checked().unwrap();
        let err = run(p, env, &lib, &BTreeMap::new(), RunConfig::default()).unwrap_err();
        assert_eq!(err[0].code, Code::MissingSource);
    }

    #[test]
    fn equal_types_need_equal_widths() {
        let text = "source data a \"V^E\"\nsource data b \"V^H\"\nsink data a\nsink data b\n";
        let lib = Library::builtin();
        let report = check_source(text, &lib);
        let (p, _, env) = report.checked().unwrap();
        let src = [(p.sources()[0], DataBatch::zeros(2, 3)), (p.sources()[1], DataBatch::zeros(2, 4))];
        let err = run(p, env, &lib, &src.into_iter().collect(), RunConfig::default()).unwrap_err();
        assert_eq!(err[0].code, Code::RuntimeShape);
    }

    #[test]
    fn scheduling_does_not_change_results() {
        let (x, y) = rank2(120);
        let text = include_str!("../fixtures/minimal.fdf").replace("mlp(50,50,opt=sgd)", "mlp(6,epochs=3)");
        let (_, a) = run_text(&text, &[("X", x.clone()), ("Y", y.clone())], 1);
        let (_, b) = run_text(&text, &[("X", x), ("Y", y)], 4);
        assert_eq!(a.exports, b.exports);
        assert_ne!(box_seed(1, "b1"), box_seed(1, "b2"));
        assert_ne!(box_seed(1, "b1"), box_seed(2, "b1"));
    }
}
