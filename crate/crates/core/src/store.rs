//! Persistence: `.fdfn` function artifacts, CSV batches and data manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mlkit::{
    DataBatch, Dlinss, FunctionKind, Layer, LearnedFunction, Linreg, Mlp, Model, PcaBasis, Provenance, Scaling,
    Signature, Window,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("artifact format version {found} is newer than supported version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("artifact checksum mismatch (corrupt payload)")]
    Checksum,
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("{path}:{line}: {message}")]
    Csv { path: String, line: u64, message: String },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// Write via a sibling temporary file and rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

// ---------------------------------------------------------------- artifacts

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Array {
    shape: Vec<usize>,
    /// Little-endian f64, row-major.
    data: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Artifact {
    format_version: u32,
    kind: FunctionKind,
    in_widths: Vec<usize>,
    out_widths: Vec<usize>,
    signature: Signature,
    provenance: Provenance,
    #[serde(default)]
    notes: Vec<String>,
    #[serde(default)]
    meta: BTreeMap<String, u64>,
    #[serde(default)]
    params: BTreeMap<String, Array>,
    #[serde(default)]
    parts: Vec<Artifact>,
}

#[derive(Deserialize)]
struct VersionPeek {
    format_version: u32,
}

fn pack(shape: Vec<usize>, values: impl IntoIterator<Item = f64>) -> Array {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Array { shape, data: B64.encode(bytes) }
}

fn pack_matrix(m: &DMatrix<f64>) -> Array {
    pack(vec![m.nrows(), m.ncols()], m.transpose().iter().copied().collect::<Vec<_>>())
}

fn pack_vec(v: &[f64]) -> Array {
    pack(vec![v.len()], v.iter().copied())
}

fn unpack(a: &Array) -> Result<Vec<f64>, StoreError> {
    let bytes = B64.decode(&a.data).map_err(|e| StoreError::Format(e.to_string()))?;
    let expected: usize = a.shape.iter().product();
    if bytes.len() != expected * 8 {
        return Err(StoreError::Format(format!("array of shape {:?} holds {} bytes", a.shape, bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

struct Params<'a>(&'a BTreeMap<String, Array>);

impl Params<'_> {
    fn get(&self, name: &str) -> Result<&Array, StoreError> {
        self.0.get(name).ok_or_else(|| StoreError::Format(format!("missing parameter `{name}`")))
    }

    fn vec(&self, name: &str) -> Result<Vec<f64>, StoreError> {
        unpack(self.get(name)?)
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>, StoreError> {
        let a = self.get(name)?;
        let [r, c] = a.shape[..] else {
            return Err(StoreError::Format(format!("parameter `{name}` is not a matrix")));
        };
        Ok(DMatrix::from_row_slice(r, c, &unpack(a)?))
    }

    fn scalar(&self, name: &str) -> Result<f64, StoreError> {
        self.vec(name)?.first().copied().ok_or_else(|| StoreError::Format(format!("empty parameter `{name}`")))
    }
}

fn to_artifact(f: &LearnedFunction) -> Artifact {
    let mut params = BTreeMap::new();
    let mut meta = BTreeMap::new();
    let mut parts = Vec::new();
    let put_scaling = |prefix: &str, s: &Scaling, params: &mut BTreeMap<String, Array>| {
        params.insert(format!("{prefix}mean"), pack_vec(&s.mean));
        params.insert(format!("{prefix}scale"), pack_vec(&s.scale));
    };
    match &f.model {
        Model::PcaEncode(b) | Model::PcaDecode(b) => {
            params.insert("mean".into(), pack_vec(b.mean.as_slice()));
            params.insert("basis".into(), pack_matrix(&b.basis));
            params.insert("explained".into(), pack_vec(&b.explained));
            params.insert("total_variance".into(), pack_vec(&[b.total_variance]));
        }
        Model::StandardizeEncode(s) | Model::StandardizeDecode(s) => put_scaling("", s, &mut params),
        Model::Linreg(m) => {
            params.insert("weights".into(), pack_matrix(&m.weights));
            params.insert("bias".into(), pack_vec(m.bias.as_slice()));
        }
        Model::Mlp(m) => {
            for (i, l) in m.layers.iter().enumerate() {
                params.insert(format!("layer{i}.w"), pack_matrix(&l.w));
                params.insert(format!("layer{i}.b"), pack_vec(l.b.as_slice()));
            }
            meta.insert("layers".into(), m.layers.len() as u64);
            put_scaling("x.", &m.x_scale, &mut params);
            put_scaling("y.", &m.y_scale, &mut params);
            if let Some(w) = m.window {
                meta.insert("window".into(), w.len as u64);
                meta.insert("steps".into(), w.steps as u64);
            }
        }
        Model::Dlinss(m) => {
            params.insert("a".into(), pack_matrix(&m.a));
            params.insert("b".into(), pack_matrix(&m.b));
            params.insert("c".into(), pack_matrix(&m.c));
            params.insert("d".into(), pack_matrix(&m.d));
            meta.insert("steps".into(), m.steps as u64);
        }
        Model::Composed(fs) => parts = fs.iter().map(to_artifact).collect(),
    }
    Artifact {
        format_version: FORMAT_VERSION,
        kind: f.kind(),
        in_widths: f.in_widths.clone(),
        out_widths: f.out_widths.clone(),
        signature: f.signature.clone(),
        provenance: f.provenance.clone(),
        notes: f.notes.clone(),
        meta,
        params,
        parts,
    }
}

fn from_artifact(a: &Artifact) -> Result<LearnedFunction, StoreError> {
    if a.format_version > FORMAT_VERSION {
        return Err(StoreError::VersionMismatch { found: a.format_version, supported: FORMAT_VERSION });
    }
    let p = Params(&a.params);
    let meta =
        |k: &str| a.meta.get(k).map(|v| *v as usize).ok_or_else(|| StoreError::Format(format!("missing field `{k}`")));
    let scaling = |prefix: &str| -> Result<Scaling, StoreError> {
        Ok(Scaling { mean: p.vec(&format!("{prefix}mean"))?, scale: p.vec(&format!("{prefix}scale"))? })
    };
    let pca = || -> Result<PcaBasis, StoreError> {
        Ok(PcaBasis {
            mean: DVector::from_vec(p.vec("mean")?),
            basis: p.matrix("basis")?,
            explained: p.vec("explained")?,
            total_variance: p.scalar("total_variance")?,
        })
    };
    let model = match a.kind {
        FunctionKind::PcaEncode => Model::PcaEncode(pca()?),
        FunctionKind::PcaDecode => Model::PcaDecode(pca()?),
        FunctionKind::StandardizeEncode => Model::StandardizeEncode(scaling("")?),
        FunctionKind::StandardizeDecode => Model::StandardizeDecode(scaling("")?),
        FunctionKind::Linreg => {
            Model::Linreg(Linreg { weights: p.matrix("weights")?, bias: DVector::from_vec(p.vec("bias")?) })
        }
        FunctionKind::Mlp => {
            let layers = (0..meta("layers")?)
                .map(|i| {
                    Ok(Layer {
                        w: p.matrix(&format!("layer{i}.w"))?,
                        b: DVector::from_vec(p.vec(&format!("layer{i}.b"))?),
                    })
                })
                .collect::<Result<Vec<_>, StoreError>>()?;
            let window = match a.meta.get("window") {
                Some(len) => Some(Window { len: *len as usize, steps: meta("steps")? }),
                None => None,
            };
            Model::Mlp(Mlp { layers, x_scale: scaling("x.")?, y_scale: scaling("y.")?, window })
        }
        FunctionKind::Dlinss => Model::Dlinss(Dlinss {
            a: p.matrix("a")?,
            b: p.matrix("b")?,
            c: p.matrix("c")?,
            d: p.matrix("d")?,
            steps: meta("steps")?,
        }),
        FunctionKind::Composed => Model::Composed(a.parts.iter().map(from_artifact).collect::<Result<_, _>>()?),
    };
    Ok(LearnedFunction {
        model,
        in_widths: a.in_widths.clone(),
        out_widths: a.out_widths.clone(),
        signature: a.signature.clone(),
        provenance: a.provenance.clone(),
        notes: a.notes.clone(),
    })
}

fn checksum(body: &str) -> String {
    Sha256::digest(body.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretty JSON body followed by a `sha256 <hex>` line over the body.
pub fn encode_function(f: &LearnedFunction) -> String {
    let body = serde_json::to_string_pretty(&to_artifact(f)).expect("artifact serializes");
    format!("{body}\nsha256 {}\n", checksum(&body))
}

pub fn decode_function(text: &str) -> Result<LearnedFunction, StoreError> {
    let trimmed = text.trim_end_matches('\n');
    let (body, tail) = trimmed.rsplit_once('\n').ok_or_else(|| StoreError::Format("missing checksum line".into()))?;
    let peek: VersionPeek =
        serde_json::from_str(body).map_err(|_| match serde_json::from_str::<serde_json::Value>(body) {
            Ok(_) => StoreError::Format("missing format_version".into()),
            Err(_) => StoreError::Checksum,
        })?;
    if peek.format_version > FORMAT_VERSION {
        return Err(StoreError::VersionMismatch { found: peek.format_version, supported: FORMAT_VERSION });
    }
    let Some(sum) = tail.strip_prefix("sha256 ") else {
        return Err(StoreError::Format("missing checksum line".into()));
    };
    if sum.trim() != checksum(body) {
        return Err(StoreError::Checksum);
    }
    let artifact: Artifact = serde_json::from_str(body).map_err(|e| StoreError::Format(e.to_string()))?;
    from_artifact(&artifact)
}

pub fn save_function(f: &LearnedFunction, path: &Path) -> Result<(), StoreError> {
    write_atomic(path, encode_function(f).as_bytes())
}

pub fn load_function(path: &Path) -> Result<LearnedFunction, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    decode_function(&text)
}

// ---------------------------------------------------------------- batches

pub fn encode_batch(b: &DataBatch) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..b.width()).map(|j| format!("c{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in b.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_batch(text: &str, origin: &str) -> Result<DataBatch, StoreError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let err = |line: u64, message: String| StoreError::Csv { path: origin.to_string(), line, message };
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let width = header.len();
    for (j, h) in header.iter().enumerate() {
        if h.trim() != format!("c{j}") {
            return Err(err(1, format!("expected header column `c{j}`, found `{h}`")));
        }
    }
    let mut values = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(err(line, format!("expected {width} values, found {}", rec.len())));
        }
        for cell in rec.iter() {
            let v: f64 = cell.trim().parse().map_err(|_| err(line, format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(line, format!("`{cell}` is not finite")));
            }
            values.push(v);
        }
        n += 1;
    }
    DataBatch::new(n, width, values).map_err(|e| err(0, e.to_string()))
}

pub fn save_batch(b: &DataBatch, path: &Path) -> Result<(), StoreError> {
    write_atomic(path, encode_batch(b).as_bytes())
}

pub fn load_batch(path: &Path) -> Result<DataBatch, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    decode_batch(&text, &path.display().to_string())
}

// ---------------------------------------------------------------- manifests

/// Where a run reads its sources and writes its sinks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataManifest {
    pub sources: BTreeMap<String, PathBuf>,
    pub sinks: BTreeMap<String, PathBuf>,
}

impl DataManifest {
    /// Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, StoreError> {
        let mut m = DataManifest::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: &str| StoreError::Manifest { line: i + 1, message: message.to_string() };
            let (kind, rest) =
                line.split_once(char::is_whitespace).ok_or_else(|| bad("expected `source|sink <name> = <path>`"))?;
            let (name, path) = rest.split_once('=').ok_or_else(|| bad("expected `=`"))?;
            let (name, path) = (name.trim(), path.trim());
            if name.is_empty() || path.is_empty() {
                return Err(bad("empty name or path"));
            }
            let table = match kind {
                "source" => &mut m.sources,
                "sink" => &mut m.sinks,
                _ => return Err(bad(&format!("unknown entry kind `{kind}`"))),
            };
            if table.insert(name.to_string(), base.join(path)).is_some() {
                return Err(bad(&format!("duplicate {kind} `{name}`")));
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        DataManifest::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}
