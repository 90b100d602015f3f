use super::{DataBatch, LearnedFunction, MlError, Model};

/// Per-column affine normalisation `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    /// Sample mean and standard deviation (n - 1 denominator) per column.
    pub fn fit(x: &DataBatch) -> Result<Self, MlError> {
        let (n, w) = (x.n(), x.width());
        if n < 2 {
            return Err(MlError::Degenerate(format!("standardize needs at least 2 samples, got {n}")));
        }
        let mut mean = vec![0.0; w];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; w];
        for row in x.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut scale = Vec::with_capacity(w);
        for (j, s) in var.iter().enumerate() {
            let constant = (1..n).all(|i| x.get(i, j) == x.get(0, j));
            if constant {
                return Err(MlError::Degenerate(format!("column {j} has zero variance")));
            }
            scale.push((s / (n as f64 - 1.0)).sqrt());
        }
        Ok(Scaling { mean, scale })
    }

    /// Like [`Scaling::fit`] but constant columns get unit scale instead of an error.
    pub fn fit_lenient(x: &DataBatch) -> Self {
        let n = x.n().max(1) as f64;
        let w = x.width();
        let mut mean = vec![0.0; w];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; w];
        for row in x.rows() {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scale {
            *s = if x.n() > 1 { (*s / (n - 1.0)).sqrt() } else { 0.0 };
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Scaling { mean, scale }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn forward_in_place(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub(crate) fn inverse_in_place(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = *v * s + m;
        }
    }

    pub(super) fn encode(&self, x: &DataBatch) -> DataBatch {
        let mut values = x.values().to_vec();
        for row in values.chunks_mut(self.width().max(1)) {
            self.forward_in_place(row);
        }
        DataBatch::new(x.n(), x.width(), values).expect("finite scaling")
    }

    pub(super) fn decode(&self, z: &DataBatch) -> DataBatch {
        let mut values = z.values().to_vec();
        for row in values.chunks_mut(self.width().max(1)) {
            self.inverse_in_place(row);
        }
        DataBatch::new(z.n(), z.width(), values).expect("finite scaling")
    }
}

/// Fit a standardising encoder and its inverse over the concatenated inputs.
pub fn standardize_fit(inputs: &[&DataBatch]) -> Result<(LearnedFunction, LearnedFunction), MlError> {
    let x = DataBatch::hcat(inputs)?;
    let s = Scaling::fit(&x)?;
    let widths: Vec<usize> = inputs.iter().map(|b| b.width()).collect();
    let total = x.width();
    let encode = LearnedFunction::new(Model::StandardizeEncode(s.clone()), widths.clone(), vec![total]);
    let decode = LearnedFunction::new(Model::StandardizeDecode(s), vec![total], widths);
    Ok((encode, decode))
}
