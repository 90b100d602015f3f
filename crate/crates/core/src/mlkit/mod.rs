//! Numeric kernels behind the builtin coders and trainers, and the
//! [`LearnedFunction`] value that flows on function edges.

mod dlinss;
mod linreg;
mod mlp;
mod pca;
mod scaling;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dlinss::{dlinss_fit, Dlinss};
pub use linreg::{linreg_fit, Linreg};
pub use mlp::{mlp_fit, Layer, Mlp, MlpConfig, MlpGradient, Optimizer, Window};
pub use pca::{pca_fit, PcaBasis, PcaTarget};
pub use scaling::{standardize_fit, Scaling};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// An `n × width` batch of samples, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    n: usize,
    width: usize,
    values: Vec<f64>,
}

impl DataBatch {
    pub fn new(n: usize, width: usize, values: Vec<f64>) -> Result<Self, MlError> {
        if values.len() != n * width {
            return Err(MlError::Shape(format!("{} values cannot fill a {n}x{width} batch", values.len())));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(MlError::BadArgument(format!(
                "non-finite value at sample {}, column {}",
                bad / width.max(1),
                bad % width.max(1)
            )));
        }
        Ok(DataBatch { n, width, values })
    }

    pub fn zeros(n: usize, width: usize) -> Self {
        DataBatch { n, width, values: vec![0.0; n * width] }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MlError> {
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * width);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != width {
                return Err(MlError::Shape(format!("row {i} has {} values, expected {width}", r.len())));
            }
            values.extend_from_slice(r);
        }
        DataBatch::new(rows.len(), width, values)
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self, MlError> {
        let (n, w) = m.shape();
        let mut values = Vec::with_capacity(n * w);
        for i in 0..n {
            values.extend(m.row(i).iter());
        }
        DataBatch::new(n, w, values)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.width, &self.values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.width + j]
    }

    /// Column-wise concatenation; all parts must share `n`.
    pub fn hcat(parts: &[&DataBatch]) -> Result<DataBatch, MlError> {
        let Some(first) = parts.first() else {
            return Ok(DataBatch::zeros(0, 0));
        };
        let n = first.n;
        if let Some(p) = parts.iter().find(|p| p.n != n) {
            return Err(MlError::Shape(format!("cannot join batches of {n} and {} samples", p.n)));
        }
        let width = parts.iter().map(|p| p.width).sum();
        let mut values = Vec::with_capacity(n * width);
        for i in 0..n {
            for p in parts {
                values.extend_from_slice(p.row(i));
            }
        }
        Ok(DataBatch { n, width, values })
    }

    /// Split columns into consecutive blocks of the given widths.
    pub fn split(&self, widths: &[usize]) -> Result<Vec<DataBatch>, MlError> {
        if widths.iter().sum::<usize>() != self.width {
            return Err(MlError::Shape(format!("cannot split width {} into {widths:?}", self.width)));
        }
        let mut out: Vec<DataBatch> =
            widths.iter().map(|w| DataBatch { n: self.n, width: *w, values: Vec::with_capacity(self.n * w) }).collect();
        for row in self.rows() {
            let mut at = 0;
            for (o, w) in out.iter_mut().zip(widths) {
                o.values.extend_from_slice(&row[at..at + w]);
                at += w;
            }
        }
        Ok(out)
    }

    /// Rows `range` as a new batch.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> DataBatch {
        DataBatch {
            n: range.len(),
            width: self.width,
            values: self.values[range.start * self.width..range.end * self.width].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionKind {
    PcaEncode,
    PcaDecode,
    StandardizeEncode,
    StandardizeDecode,
    Linreg,
    Mlp,
    Dlinss,
    Composed,
}

impl FunctionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FunctionKind::PcaEncode => "pca-encode",
            FunctionKind::PcaDecode => "pca-decode",
            FunctionKind::StandardizeEncode => "standardize-encode",
            FunctionKind::StandardizeDecode => "standardize-decode",
            FunctionKind::Linreg => "linreg",
            FunctionKind::Mlp => "mlp",
            FunctionKind::Dlinss => "dlinss",
            FunctionKind::Composed => "composed",
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Trained parameters. Immutable once a function is created.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    PcaEncode(PcaBasis),
    PcaDecode(PcaBasis),
    StandardizeEncode(Scaling),
    StandardizeDecode(Scaling),
    Linreg(Linreg),
    Mlp(Mlp),
    Dlinss(Dlinss),
    Composed(Vec<LearnedFunction>),
}

impl Model {
    pub fn kind(&self) -> FunctionKind {
        match self {
            Model::PcaEncode(_) => FunctionKind::PcaEncode,
            Model::PcaDecode(_) => FunctionKind::PcaDecode,
            Model::StandardizeEncode(_) => FunctionKind::StandardizeEncode,
            Model::StandardizeDecode(_) => FunctionKind::StandardizeDecode,
            Model::Linreg(_) => FunctionKind::Linreg,
            Model::Mlp(_) => FunctionKind::Mlp,
            Model::Dlinss(_) => FunctionKind::Dlinss,
            Model::Composed(_) => FunctionKind::Composed,
        }
    }
}

/// Data type of one function slot as seen by the pipeline that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotType {
    /// Canonical data type id; only meaningful inside the originating pipeline.
    pub type_id: u32,
    /// Exponent-free annotations attached to the type.
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Signature {
    pub inputs: Vec<SlotType>,
    pub outputs: Vec<SlotType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub pipeline: String,
    pub box_id: String,
    pub seed: u64,
}

/// A trained function together with its arity and typing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedFunction {
    pub model: Model,
    pub in_widths: Vec<usize>,
    pub out_widths: Vec<usize>,
    pub signature: Signature,
    pub provenance: Provenance,
    /// Non-fatal remarks from training, e.g. an unstable state-space fit.
    pub notes: Vec<String>,
}

impl LearnedFunction {
    pub fn new(model: Model, in_widths: Vec<usize>, out_widths: Vec<usize>) -> Self {
        LearnedFunction {
            model,
            in_widths,
            out_widths,
            signature: Signature::default(),
            provenance: Provenance::default(),
            notes: Vec::new(),
        }
    }

    pub fn kind(&self) -> FunctionKind {
        self.model.kind()
    }

    /// `second ∘ first`; the output widths of `first` must feed `second`.
    pub fn compose(first: LearnedFunction, second: LearnedFunction) -> Result<Self, MlError> {
        if first.out_widths != second.in_widths {
            return Err(MlError::Shape(format!(
                "cannot compose: outputs {:?} do not match inputs {:?}",
                first.out_widths, second.in_widths
            )));
        }
        let signature = Signature { inputs: first.signature.inputs.clone(), outputs: second.signature.outputs.clone() };
        let in_widths = first.in_widths.clone();
        let out_widths = second.out_widths.clone();
        let mut f = LearnedFunction::new(Model::Composed(vec![first, second]), in_widths, out_widths);
        f.signature = signature;
        Ok(f)
    }

    fn eval(&self, x: &DataBatch) -> Result<DataBatch, MlError> {
        match &self.model {
            Model::PcaEncode(b) => Ok(b.encode(x)),
            Model::PcaDecode(b) => Ok(b.decode(x)),
            Model::StandardizeEncode(s) => Ok(s.encode(x)),
            Model::StandardizeDecode(s) => Ok(s.decode(x)),
            Model::Linreg(m) => Ok(m.predict(x)),
            Model::Mlp(m) => m.predict(x),
            Model::Dlinss(m) => m.simulate(x),
            Model::Composed(parts) => {
                let mut inputs = vec![x.clone()];
                for p in parts {
                    let refs: Vec<&DataBatch> = inputs.iter().collect();
                    inputs = apply(p, &refs)?;
                }
                DataBatch::hcat(&inputs.iter().collect::<Vec<_>>())
            }
        }
    }
}

/// Apply `f` sample-wise: input `j` must have width `f.in_widths[j]` and all
/// inputs must share the same number of samples.
pub fn apply(f: &LearnedFunction, inputs: &[&DataBatch]) -> Result<Vec<DataBatch>, MlError> {
    if inputs.len() != f.in_widths.len() {
        return Err(MlError::Shape(format!(
            "{} function expects {} inputs, got {}",
            f.kind(),
            f.in_widths.len(),
            inputs.len()
        )));
    }
    for (j, (x, w)) in inputs.iter().zip(&f.in_widths).enumerate() {
        if x.width() != *w {
            return Err(MlError::Shape(format!(
                "{} function input {} expects width {w}, got {}",
                f.kind(),
                j + 1,
                x.width()
            )));
        }
    }
    let joined = DataBatch::hcat(inputs)?;
    let y = f.eval(&joined)?;
    debug_assert_eq!(y.n(), joined.n());
    y.split(&f.out_widths)
}
