use nalgebra::{DMatrix, DVector};

use super::{DataBatch, LearnedFunction, MlError, Model};

/// `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linreg {
    /// `w_in × w_out`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Linreg {
    pub(super) fn predict(&self, x: &DataBatch) -> DataBatch {
        let mut y = x.to_matrix() * &self.weights;
        for mut row in y.row_iter_mut() {
            row += self.bias.transpose();
        }
        DataBatch::from_matrix(&y).expect("finite prediction")
    }
}

/// Ridge least squares with an unpenalised intercept, solved by SVD.
/// Without a ridge term a rank-deficient design is reported as singular.
pub fn linreg_fit(x_parts: &[&DataBatch], y_parts: &[&DataBatch], ridge: f64) -> Result<LearnedFunction, MlError> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(MlError::BadArgument(format!("ridge must be a non-negative number, got {ridge}")));
    }
    let x = DataBatch::hcat(x_parts)?;
    let y = DataBatch::hcat(y_parts)?;
    if x.n() != y.n() {
        return Err(MlError::Shape(format!("{} inputs against {} targets", x.n(), y.n())));
    }
    let (n, w) = (x.n(), x.width());
    if n == 0 {
        return Err(MlError::Degenerate("no samples".into()));
    }
    let extra = if ridge > 0.0 { w } else { 0 };
    let mut a = DMatrix::zeros(n + extra, w + 1);
    let mut b = DMatrix::zeros(n + extra, y.width());
    for i in 0..n {
        for j in 0..w {
            a[(i, j)] = x.get(i, j);
        }
        a[(i, w)] = 1.0;
        for j in 0..y.width() {
            b[(i, j)] = y.get(i, j);
        }
    }
    let root = ridge.sqrt();
    for j in 0..extra {
        a[(n + j, j)] = root;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * (n + extra).max(w + 1) as f64;
    if svd.singular_values.iter().any(|s| *s <= tol) || svd.singular_values.len() < w + 1 {
        return Err(MlError::Singular(format!("design matrix of {n} samples and width {w} is rank deficient")));
    }
    let coef = svd.solve(&b, tol).map_err(|e| MlError::Singular(e.to_string()))?;
    let weights = coef.rows(0, w).into_owned();
    let bias = coef.row(w).transpose();
    let in_widths = x_parts.iter().map(|p| p.width()).collect();
    let out_widths = y_parts.iter().map(|p| p.width()).collect();
    Ok(LearnedFunction::new(Model::Linreg(Linreg { weights, bias }), in_widths, out_widths))
}
