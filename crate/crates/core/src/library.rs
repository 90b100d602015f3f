//! Predefined functions available to boxes through `predef`, with the weak
//! type information the checker uses and the behaviour the engine runs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::casestudies::{bearing, strain::StrainConfig};
use crate::ir::{BoxKind, LibraryRef};
use crate::mlkit::{
    self, dlinss_fit, linreg_fit, mlp_fit, pca_fit, standardize_fit, DataBatch, LearnedFunction, MlError, MlpConfig,
    Optimizer, PcaTarget,
};
use crate::store;
use crate::textfmt::strip_exponent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Coder,
    Trainer,
    Processor,
}

impl Role {
    pub fn of(kind: BoxKind) -> Option<Role> {
        match kind {
            BoxKind::Coder => Some(Role::Coder),
            BoxKind::Trainer => Some(Role::Trainer),
            BoxKind::Processor => Some(Role::Processor),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Coder => "coder",
            Role::Trainer => "trainer",
            Role::Processor => "processor",
        }
    }

    fn parse(s: &str) -> Option<Role> {
        match s {
            "coder" => Some(Role::Coder),
            "trainer" => Some(Role::Trainer),
            "processor" => Some(Role::Processor),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TypeOverride {
    #[default]
    None,
    /// The coder's code space is the type of its first input.
    OutEqIn1,
}

/// Per-slot annotation labels recorded when an imported function was learned.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SlotLabels {
    pub inputs: Vec<Vec<String>>,
    pub outputs: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LibrarySignature {
    /// Input arity.
    pub k: usize,
    /// Output arity.
    pub k_out: usize,
    /// Disjoint groups of slots that share a type. Slots `1..=k` are inputs,
    /// `k+1..=k+k_out` outputs.
    pub partitions: Vec<Vec<usize>>,
    pub type_override: TypeOverride,
    pub labels: Option<SlotLabels>,
}

impl LibrarySignature {
    fn fixed(k: usize, k_out: usize, partitions: Vec<Vec<usize>>) -> Self {
        LibrarySignature { k, k_out, partitions, ..Default::default() }
    }

    fn validate(&self) -> Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for part in &self.partitions {
            for s in part {
                if *s == 0 || *s > self.k + self.k_out {
                    return Err(format!("partition slot {s} is outside 1..={}", self.k + self.k_out));
                }
                if !seen.insert(*s) {
                    return Err(format!("slot {s} appears in more than one partition"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LibError {
    #[error("no {role} named `{name}` in the library")]
    Unknown { role: Role, name: String },
    #[error("{0}")]
    BadArg(String),
    #[error("{role} `{name}` is already registered")]
    Duplicate { role: Role, name: String },
    #[error("library manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
}

/// Parsed `name(args)` arguments: positional values then `key=value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Args {
    pub positional: Vec<String>,
    pub named: BTreeMap<String, String>,
}

impl Args {
    pub fn parse(text: &str) -> Result<Args, LibError> {
        let mut a = Args::default();
        for part in text.split(',').map(str::trim) {
            if part.is_empty() {
                if text.trim().is_empty() {
                    continue;
                }
                return Err(LibError::BadArg(format!("empty argument in `{text}`")));
            }
            match part.split_once('=') {
                Some((k, v)) => {
                    let (k, v) = (k.trim(), v.trim());
                    if k.is_empty() || v.is_empty() {
                        return Err(LibError::BadArg(format!("malformed argument `{part}`")));
                    }
                    if a.named.insert(k.to_string(), v.to_string()).is_some() {
                        return Err(LibError::BadArg(format!("argument `{k}` given twice")));
                    }
                }
                None if a.named.is_empty() => a.positional.push(part.to_string()),
                None => return Err(LibError::BadArg(format!("positional argument `{part}` after named ones"))),
            }
        }
        Ok(a)
    }

    fn allow(&self, name: &str, keys: &[&str], max_positional: usize) -> Result<(), LibError> {
        if let Some(k) = self.named.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(LibError::BadArg(format!("`{name}` does not accept argument `{k}`")));
        }
        if self.positional.len() > max_positional {
            return Err(LibError::BadArg(format!("`{name}` takes at most {max_positional} positional arguments")));
        }
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, LibError> {
        self.named
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| LibError::BadArg(format!("bad value `{v}` for `{key}`"))))
            .transpose()
    }

    fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, LibError> {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

/// What a library entry does once instantiated.
#[derive(Debug, Clone)]
pub enum Behavior {
    Pca(PcaTarget),
    Standardize,
    Linreg { ridge: f64 },
    Mlp(MlpConfig),
    Dlinss { order: usize, ridge: f64 },
    Sub,
    Add,
    Identity,
    Linmap(Arc<nalgebra::DMatrix<f64>>),
    AbaqusSurrogate(StrainConfig),
    MaxwellSurrogate,
    Learned(Arc<LearnedFunction>),
}

/// An entry bound to concrete arguments.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub role: Role,
    pub signature: LibrarySignature,
    pub behavior: Behavior,
}

impl Instance {
    /// Coder: fit and return `(encode, decode)`.
    pub fn code(&self, inputs: &[&DataBatch]) -> Result<(LearnedFunction, LearnedFunction), MlError> {
        match &self.behavior {
            Behavior::Pca(t) => pca_fit(inputs, *t),
            Behavior::Standardize => standardize_fit(inputs),
            _ => Err(MlError::BadArgument(format!("`{}` is not a coder", self.name))),
        }
    }

    /// Trainer: learn the map `x ↦ y`.
    pub fn train(&self, x: &[&DataBatch], y: &[&DataBatch], seed: u64) -> Result<LearnedFunction, MlError> {
        match &self.behavior {
            Behavior::Linreg { ridge } => linreg_fit(x, y, *ridge),
            Behavior::Mlp(cfg) => mlp_fit(x, y, &MlpConfig { seed, ..cfg.clone() }),
            Behavior::Dlinss { order, ridge } => dlinss_fit(x, y, *order, *ridge),
            _ => Err(MlError::BadArgument(format!("`{}` is not a trainer", self.name))),
        }
    }

    /// Processor: apply a fixed function sample-wise.
    pub fn process(&self, inputs: &[&DataBatch], rng: &mut ChaCha8Rng) -> Result<Vec<DataBatch>, MlError> {
        let arity = |k: usize| {
            if inputs.len() == k {
                Ok(())
            } else {
                Err(MlError::Shape(format!("`{}` takes {k} inputs, got {}", self.name, inputs.len())))
            }
        };
        let elementwise = |op: fn(f64, f64) -> f64| -> Result<Vec<DataBatch>, MlError> {
            arity(2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.width() != b.width() || a.n() != b.n() {
                return Err(MlError::Shape(format!(
                    "`{}` needs equal shapes, got {}x{} and {}x{}",
                    self.name,
                    a.n(),
                    a.width(),
                    b.n(),
                    b.width()
                )));
            }
            let v = a.values().iter().zip(b.values()).map(|(x, y)| op(*x, *y)).collect();
            Ok(vec![DataBatch::new(a.n(), a.width(), v)?])
        };
        match &self.behavior {
            Behavior::Sub => elementwise(|x, y| x - y),
            Behavior::Add => elementwise(|x, y| x + y),
            Behavior::Identity => {
                arity(1)?;
                Ok(vec![inputs[0].clone()])
            }
            Behavior::Linmap(m) => {
                arity(1)?;
                if inputs[0].width() != m.nrows() {
                    return Err(MlError::Shape(format!(
                        "linmap expects width {}, got {}",
                        m.nrows(),
                        inputs[0].width()
                    )));
                }
                Ok(vec![DataBatch::from_matrix(&(inputs[0].to_matrix() * m.as_ref()))?])
            }
            Behavior::AbaqusSurrogate(cfg) => {
                arity(1)?;
                let (du, eps) = cfg.simulate(inputs[0], rng)?;
                Ok(vec![du, eps])
            }
            Behavior::MaxwellSurrogate => {
                arity(1)?;
                Ok(vec![bearing::nominal_flux(inputs[0])])
            }
            Behavior::Learned(f) => mlkit::apply(f, inputs),
            _ => Err(MlError::BadArgument(format!("`{}` is not a processor", self.name))),
        }
    }

    pub fn learned(&self) -> Option<&LearnedFunction> {
        match &self.behavior {
            Behavior::Learned(f) => Some(f),
            _ => None,
        }
    }
}

/// A named entry: role, weak signature and the builtin factory behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredefEntry {
    pub name: String,
    pub role: Role,
    pub signature: LibrarySignature,
    pub factory: String,
}

const FACTORIES: [(&str, Role); 12] = [
    ("pca", Role::Coder),
    ("standardize", Role::Coder),
    ("linreg", Role::Trainer),
    ("mlp", Role::Trainer),
    ("dlinss", Role::Trainer),
    ("sub", Role::Processor),
    ("add", Role::Processor),
    ("identity", Role::Processor),
    ("linmap", Role::Processor),
    ("abaqus_surrogate", Role::Processor),
    ("maxwell_surrogate", Role::Processor),
    ("learned", Role::Processor),
];

#[derive(Debug, Clone)]
pub struct Library {
    entries: BTreeMap<(Role, String), PredefEntry>,
    base_dir: PathBuf,
}

impl Default for Library {
    fn default() -> Self {
        Library::builtin()
    }
}

impl Library {
    pub fn empty() -> Self {
        Library { entries: BTreeMap::new(), base_dir: PathBuf::from(".") }
    }

    pub fn builtin() -> Self {
        let mut lib = Library::empty();
        let sig = LibrarySignature::fixed;
        let coder = |name: &str, o| PredefEntry {
            name: name.into(),
            role: Role::Coder,
            signature: LibrarySignature { type_override: o, ..sig(1, 2, vec![]) },
            factory: name.into(),
        };
        let entry =
            |name: &str, role, signature| PredefEntry { name: name.into(), role, signature, factory: name.into() };
        let builtins = [
            coder("pca", TypeOverride::None),
            coder("standardize", TypeOverride::OutEqIn1),
            entry("linreg", Role::Trainer, sig(1, 1, vec![])),
            entry("mlp", Role::Trainer, sig(1, 1, vec![])),
            entry("dlinss", Role::Trainer, sig(1, 1, vec![])),
            entry("sub", Role::Processor, sig(2, 1, vec![vec![1, 2, 3]])),
            entry("add", Role::Processor, sig(2, 1, vec![vec![1, 2, 3]])),
            entry("identity", Role::Processor, sig(1, 1, vec![vec![1, 2]])),
            entry("linmap", Role::Processor, sig(1, 1, vec![])),
            entry("abaqus_surrogate", Role::Processor, sig(1, 2, vec![])),
            entry("maxwell_surrogate", Role::Processor, sig(1, 1, vec![])),
            entry("learned", Role::Processor, sig(1, 1, vec![])),
        ];
        for e in builtins {
            lib.register(e).expect("builtin names are unique");
        }
        lib
    }

    /// Builtins plus the manifest named by `FDF_LIBRARY_MANIFEST`, if set.
    pub fn from_env() -> Result<Self, LibError> {
        let mut lib = Library::builtin();
        if let Some(path) = std::env::var_os("FDF_LIBRARY_MANIFEST") {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| LibError::Manifest { line: 0, message: format!("{}: {e}", Path::new(&path).display()) })?;
            lib.load_manifest(&text)?;
        }
        Ok(lib)
    }

    /// Directory against which relative `file=` arguments resolve.
    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn register(&mut self, entry: PredefEntry) -> Result<(), LibError> {
        let key = (entry.role, entry.name.clone());
        if self.entries.contains_key(&key) {
            return Err(LibError::Duplicate { role: entry.role, name: entry.name });
        }
        entry.signature.validate().map_err(LibError::BadArg)?;
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = &PredefEntry> {
        self.entries.values()
    }

    pub fn entry(&self, role: Role, name: &str) -> Option<&PredefEntry> {
        self.entries.get(&(role, name.to_string()))
    }

    /// Lines `predef <role> <name> k=<int> k'=<int> partitions=[[..],..] override=<none|out_eq_in1> factory=<builtin>`.
    pub fn load_manifest(&mut self, text: &str) -> Result<(), LibError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| LibError::Manifest { line: i + 1, message };
            let mut words = line.split_whitespace();
            if words.next() != Some("predef") {
                return Err(bad("expected `predef`".into()));
            }
            let role = words
                .next()
                .and_then(Role::parse)
                .ok_or_else(|| bad("expected a role: coder, trainer or processor".into()))?;
            let name = words.next().ok_or_else(|| bad("missing name".into()))?.to_string();
            let mut sig = LibrarySignature::default();
            let mut factory = None;
            let (mut k, mut k_out) = (None, None);
            for w in words {
                let (key, value) = w.split_once('=').ok_or_else(|| bad(format!("expected key=value, found `{w}`")))?;
                let int = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("`{v}` is not a count")));
                match key {
                    "k" => k = Some(int(value)?),
                    "k'" => k_out = Some(int(value)?),
                    "partitions" => sig.partitions = parse_partitions(value).map_err(&bad)?,
                    "override" => {
                        sig.type_override = match value {
                            "none" => TypeOverride::None,
                            "out_eq_in1" => TypeOverride::OutEqIn1,
                            _ => return Err(bad(format!("unknown override `{value}`"))),
                        }
                    }
                    "factory" => factory = Some(value.to_string()),
                    _ => return Err(bad(format!("unknown field `{key}`"))),
                }
            }
            let factory = factory.ok_or_else(|| bad("missing factory".into()))?;
            match FACTORIES.iter().find(|(f, _)| *f == factory) {
                Some((_, r)) if *r == role => {}
                Some((_, r)) => return Err(bad(format!("factory `{factory}` builds a {r}, not a {role}"))),
                None => return Err(bad(format!("unknown factory `{factory}`"))),
            }
            sig.k = k.ok_or_else(|| bad("missing k".into()))?;
            sig.k_out = k_out.ok_or_else(|| bad("missing k'".into()))?;
            sig.validate().map_err(&bad)?;
            self.register(PredefEntry { name, role, signature: sig, factory }).map_err(|e| bad(e.to_string()))?;
        }
        Ok(())
    }

    /// Resolve `name(args)` for a box of the given role and bind its arguments.
    pub fn lookup(&self, role: Role, r: &LibraryRef) -> Result<Instance, LibError> {
        let entry = self.entry(role, r.name()).ok_or_else(|| LibError::Unknown { role, name: r.name().to_string() })?;
        let args = Args::parse(r.args())?;
        let mut signature = entry.signature.clone();
        let behavior = self.build(&entry.factory, &args, &mut signature)?;
        Ok(Instance { name: entry.name.clone(), role, signature, behavior })
    }

    pub fn signature(&self, role: Role, r: &LibraryRef) -> Result<LibrarySignature, LibError> {
        self.lookup(role, r).map(|i| i.signature)
    }

    fn path(&self, args: &Args, factory: &str) -> Result<PathBuf, LibError> {
        let file =
            args.named.get("file").ok_or_else(|| LibError::BadArg(format!("`{factory}` needs a `file=` argument")))?;
        Ok(self.base_dir.join(file))
    }

    fn build(&self, factory: &str, args: &Args, sig: &mut LibrarySignature) -> Result<Behavior, LibError> {
        let bad = |m: String| LibError::BadArg(m);
        match factory {
            "pca" => {
                args.allow(factory, &["var", "k"], 0)?;
                match (args.get::<f64>("var")?, args.get::<usize>("k")?) {
                    (Some(_), Some(_)) => Err(bad("pca takes either `var` or `k`, not both".into())),
                    (Some(v), None) if v > 0.0 && v <= 1.0 => Ok(Behavior::Pca(PcaTarget::Variance(v))),
                    (Some(v), None) => Err(bad(format!("variance fraction {v} is outside (0, 1]"))),
                    (None, Some(k)) if k >= 1 => Ok(Behavior::Pca(PcaTarget::Components(k))),
                    (None, Some(_)) => Err(bad("pca needs k >= 1".into())),
                    (None, None) => Ok(Behavior::Pca(PcaTarget::Variance(0.99))),
                }
            }
            "standardize" => {
                args.allow(factory, &[], 0)?;
                Ok(Behavior::Standardize)
            }
            "linreg" => {
                args.allow(factory, &["ridge"], 0)?;
                let ridge = args.get_or("ridge", 0.0)?;
                if !(ridge >= 0.0) {
                    return Err(bad(format!("ridge must be non-negative, got {ridge}")));
                }
                Ok(Behavior::Linreg { ridge })
            }
            "mlp" => {
                args.allow(factory, &["opt", "epochs", "lr", "batch", "window"], usize::MAX)?;
                let mut cfg = MlpConfig::default();
                if !args.positional.is_empty() {
                    cfg.hidden = args
                        .positional
                        .iter()
                        .map(|p| p.parse::<usize>().ok().filter(|h| *h > 0))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| {
                            bad(format!("hidden layer widths must be positive integers: {:?}", args.positional))
                        })?;
                }
                cfg.optimizer = match args.named.get("opt").map(String::as_str) {
                    None | Some("sgd") => Optimizer::Sgd,
                    Some("adam") => Optimizer::Adam,
                    Some(o) => return Err(bad(format!("unknown optimizer `{o}`"))),
                };
                cfg.epochs = args.get_or("epochs", cfg.epochs)?;
                cfg.lr = args.get_or("lr", cfg.lr)?;
                cfg.batch = args.get_or("batch", cfg.batch)?;
                cfg.window = args.get("window")?;
                if cfg.epochs == 0 || cfg.batch == 0 || !(cfg.lr > 0.0) || cfg.window == Some(0) {
                    return Err(bad("epochs, batch, lr and window must be positive".into()));
                }
                Ok(Behavior::Mlp(cfg))
            }
            "dlinss" => {
                args.allow(factory, &["order", "ridge"], 1)?;
                let order = match args.positional.first() {
                    Some(p) => p.parse().map_err(|_| bad(format!("bad order `{p}`")))?,
                    None => args.get_or("order", 2)?,
                };
                let ridge = args.get_or("ridge", 0.0)?;
                if order == 0 || !(ridge >= 0.0) {
                    return Err(bad("dlinss needs order >= 1 and ridge >= 0".into()));
                }
                Ok(Behavior::Dlinss { order, ridge })
            }
            "sub" | "add" | "identity" | "maxwell_surrogate" => {
                args.allow(factory, &[], 0)?;
                Ok(match factory {
                    "sub" => Behavior::Sub,
                    "add" => Behavior::Add,
                    "identity" => Behavior::Identity,
                    _ => Behavior::MaxwellSurrogate,
                })
            }
            "linmap" => {
                args.allow(factory, &["file"], 0)?;
                let path = self.path(args, factory)?;
                let m = store::load_batch(&path).map_err(|e| bad(e.to_string()))?;
                Ok(Behavior::Linmap(Arc::new(m.to_matrix())))
            }
            "abaqus_surrogate" => {
                args.allow(factory, &["dim", "latent", "noise", "geometry"], 0)?;
                let d = StrainConfig::default();
                let cfg = StrainConfig {
                    dim: args.get_or("dim", d.dim)?,
                    latent: args.get_or("latent", d.latent)?,
                    noise: args.get_or("noise", d.noise)?,
                    geometry: args.get_or("geometry", d.geometry)?,
                };
                cfg.validate().map_err(|e| bad(e.to_string()))?;
                Ok(Behavior::AbaqusSurrogate(cfg))
            }
            "learned" => {
                args.allow(factory, &["file"], 0)?;
                let path = self.path(args, factory)?;
                let f = store::load_function(&path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
                sig.k = f.in_widths.len();
                sig.k_out = f.out_widths.len();
                sig.partitions.clear();
                let labels = |slots: &[mlkit::SlotType], n: usize| -> Vec<Vec<String>> {
                    (0..n)
                        .map(|i| {
                            slots.get(i).map_or_else(Vec::new, |s| {
                                s.labels.iter().map(|l| strip_exponent(l).to_string()).collect()
                            })
                        })
                        .collect()
                };
                sig.labels = Some(SlotLabels {
                    inputs: labels(&f.signature.inputs, sig.k),
                    outputs: labels(&f.signature.outputs, sig.k_out),
                });
                Ok(Behavior::Learned(Arc::new(f)))
            }
            other => Err(bad(format!("unknown factory `{other}`"))),
        }
    }
}

fn parse_partitions(text: &str) -> Result<Vec<Vec<usize>>, String> {
    let inner = text
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| format!("partitions must look like [[1,2],[3]], found `{text}`"))?;
    let mut out = Vec::new();
    let mut rest = inner.trim();
    while !rest.is_empty() {
        let body = rest.strip_prefix('[').ok_or_else(|| format!("expected `[` in `{text}`"))?;
        let end = body.find(']').ok_or_else(|| format!("unclosed `[` in `{text}`"))?;
        let group = body[..end]
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| format!("bad slot `{s}` in `{text}`")))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(group);
        rest = body[end + 1..].trim_start().trim_start_matches(',').trim_start();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn lref(s: &str) -> LibraryRef {
        LibraryRef::parse(s).unwrap()
    }

    #[test]
    fn builtin_set() {
        let lib = Library::builtin();
        let names: Vec<&str> = lib.entries().map(|e| e.name.as_str()).collect();
        for n in ["pca", "standardize", "linreg", "mlp", "dlinss", "sub", "add", "identity", "linmap"] {
            assert!(names.contains(&n), "{n}");
        }
    }

    #[test]
    fn lookups_bind_arguments() {
        let lib = Library::builtin();
        let pca = lib.lookup(Role::Coder, &lref("pca(var=0.99)")).unwrap();
        assert!(matches!(pca.behavior, Behavior::Pca(PcaTarget::Variance(v)) if v == 0.99));
        let mlp = lib.lookup(Role::Trainer, &lref("mlp(50,50,opt=sgd)")).unwrap();
        let Behavior::Mlp(cfg) = mlp.behavior else { panic!() };
        assert_eq!(cfg.hidden, vec![50, 50]);
        assert_eq!(cfg.optimizer, Optimizer::Sgd);
        assert!(matches!(lib.lookup(Role::Coder, &lref("pca(var=1.5)")), Err(LibError::BadArg(_))));
        assert!(matches!(lib.lookup(Role::Coder, &lref("pca(foo=1)")), Err(LibError::BadArg(_))));
        assert!(matches!(lib.lookup(Role::Coder, &lref("mlp(5)")), Err(LibError::Unknown { .. })));
        assert!(matches!(lib.lookup(Role::Trainer, &lref("nope")), Err(LibError::Unknown { .. })));
        let std = lib.signature(Role::Coder, &lref("standardize")).unwrap();
        assert_eq!(std.type_override, TypeOverride::OutEqIn1);
    }

    #[test]
    fn duplicates_are_rejected() {
        let mut lib = Library::builtin();
        let e = lib.entry(Role::Processor, "sub").unwrap().clone();
        assert!(matches!(lib.register(e.clone()), Err(LibError::Duplicate { .. })));
        let mut renamed = e;
        renamed.name = "minus".into();
        lib.register(renamed.clone()).unwrap();
        assert_eq!(lib.entry(Role::Processor, "minus"), Some(&renamed));
    }

    #[test]
    fn manifests_extend_the_library() {
        let mut lib = Library::builtin();
        lib.load_manifest(
            "# extra entries\npredef processor diff3 k=2 k'=1 partitions=[[1,2,3]] override=none factory=sub\n\
             predef coder zscore k=1 k'=2 partitions=[] override=out_eq_in1 factory=standardize\n",
        )
        .unwrap();
        let sig = lib.signature(Role::Processor, &lref("diff3")).unwrap();
        assert_eq!(sig.partitions, vec![vec![1, 2, 3]]);
        assert!(lib.lookup(Role::Coder, &lref("zscore")).is_ok());
        for bad in [
            "predef processor x k=1 k'=1 factory=pca",
            "predef processor x k=1 k'=1 factory=nothing",
            "predef processor x k=1 factory=sub",
            "predef processor x k=1 k'=1 partitions=[[1,5]] factory=sub",
            "predef processor x k=1 k'=1 partitions=[[1],[1]] factory=sub",
            "predef widget x k=1 k'=1 factory=sub",
        ] {
            assert!(matches!(Library::builtin().load_manifest(bad), Err(LibError::Manifest { line: 1, .. })), "{bad}");
        }
    }

    #[test]
    fn builtin_arities_match_behaviour() {
        let lib = Library::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let probe = DataBatch::from_rows(&[[0.5], [1.0], [1.5], [2.0]]).unwrap();
        for name in ["sub", "add", "identity", "abaqus_surrogate", "maxwell_surrogate"] {
            let inst = lib.lookup(Role::Processor, &lref(name)).unwrap();
            let inputs = vec![&probe; inst.signature.k];
            let out = inst.process(&inputs, &mut rng).unwrap();
            assert_eq!(out.len(), inst.signature.k_out, "{name}");
            assert!(out.iter().all(|b| b.n() == probe.n()));
        }
        let two = DataBatch::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.5]]).unwrap();
        for (role, name) in [(Role::Coder, "pca(k=1)"), (Role::Coder, "standardize")] {
            let (e, d) = lib.lookup(role, &lref(name)).unwrap().code(&[&two]).unwrap();
            assert_eq!((e.in_widths.len(), d.out_widths.len()), (1, 1));
        }
        for name in ["linreg", "mlp(4,epochs=2)"] {
            let f = lib.lookup(Role::Trainer, &lref(name)).unwrap().train(&[&two], &[&probe], 1).unwrap();
            assert_eq!((f.in_widths.len(), f.out_widths.len()), (1, 1));
        }
    }

    #[test]
    fn argument_syntax() {
        assert!(Args::parse("").unwrap().positional.is_empty());
        assert!(Args::parse("a=1,a=2").is_err());
        assert!(Args::parse("a=1,3").is_err());
        assert!(Args::parse("1,,2").is_err());
        let a = Args::parse("50, 50, opt = sgd").unwrap();
        assert_eq!(a.positional, vec!["50", "50"]);
        assert_eq!(a.named["opt"], "sgd");
    }
}
