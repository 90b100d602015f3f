use nalgebra::{DMatrix, DVector};

use super::{DataBatch, LearnedFunction, MlError, Model};

/// Discrete linear state-space model
/// `x[t+1] = A x[t] + B u[t]`, `y[t] = C x[t] + D u[t]`, simulated from `x[0] = 0`.
///
/// Each batch row is one run: input port `j` holds the sequence of channel
/// `j` of `u`, output port `i` the sequence of channel `i` of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dlinss {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub steps: usize,
}

impl Dlinss {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        if self.a.is_empty() {
            return 0.0;
        }
        self.a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub(super) fn simulate(&self, u: &DataBatch) -> Result<DataBatch, MlError> {
        let (r, m, steps) = (self.b.ncols(), self.c.nrows(), self.steps);
        let mut out = vec![0.0; u.n() * m * steps];
        for (i, row) in u.rows().enumerate() {
            let mut x = DVector::zeros(self.order());
            for t in 0..steps {
                let ut = DVector::from_iterator(r, (0..r).map(|j| row[j * steps + t]));
                let y = &self.c * &x + &self.d * &ut;
                for (ch, v) in y.iter().enumerate() {
                    out[i * m * steps + ch * steps + t] = *v;
                }
                x = &self.a * x + &self.b * ut;
            }
        }
        DataBatch::new(u.n(), m * steps, out)
            .map_err(|_| MlError::BadArgument("state-space simulation overflowed".into()))
    }
}

/// Fit `y[t] = Σ A_i y[t-i] + Σ B_i u[t-i]` over all rows (values before the
/// start of a sequence are zero) by ridge least squares, then convert to
/// block observer canonical form. A note is attached when the identified
/// system has spectral radius ≥ 1.25.
pub fn dlinss_fit(
    u_parts: &[&DataBatch],
    y_parts: &[&DataBatch],
    order: usize,
    ridge: f64,
) -> Result<LearnedFunction, MlError> {
    let steps = u_parts.first().map_or(0, |p| p.width());
    if u_parts.iter().chain(y_parts).any(|p| p.width() != steps) {
        return Err(MlError::Shape("all sequence ports must have the same length".into()));
    }
    let u = DataBatch::hcat(u_parts)?;
    let y = DataBatch::hcat(y_parts)?;
    if u.n() != y.n() {
        return Err(MlError::Shape(format!("{} inputs against {} outputs", u.n(), y.n())));
    }
    let (runs, r, m) = (u.n(), u_parts.len(), y_parts.len());
    if order == 0 || order >= steps {
        return Err(MlError::BadArgument(format!("order {order} must be in 1..{steps}")));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(MlError::BadArgument(format!("ridge must be a non-negative number, got {ridge}")));
    }
    let p = order;
    let cols = p * m + (p + 1) * r;
    let extra = if ridge > 0.0 { cols } else { 0 };
    let total = runs * steps;
    let mut phi = DMatrix::zeros(total + extra, cols);
    let mut target = DMatrix::zeros(total + extra, m);
    for s in 0..runs {
        let (urow, yrow) = (u.row(s), y.row(s));
        for t in 0..steps {
            let k = s * steps + t;
            for i in 1..=p.min(t) {
                for j in 0..m {
                    phi[(k, (i - 1) * m + j)] = yrow[j * steps + t - i];
                }
            }
            for i in 0..=p.min(t) {
                for j in 0..r {
                    phi[(k, p * m + i * r + j)] = urow[j * steps + t - i];
                }
            }
            for j in 0..m {
                target[(k, j)] = yrow[j * steps + t];
            }
        }
    }
    for j in 0..extra {
        phi[(total + j, j)] = ridge.sqrt();
    }
    let svd = phi.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * (total + extra).max(cols) as f64;
    if svd.singular_values.len() < cols || svd.singular_values.iter().any(|s| *s <= tol) {
        return Err(MlError::Singular("input is not rich enough to identify the model".into()));
    }
    // theta: cols × m; row blocks are A_i^T, then B_i^T.
    let theta = svd.solve(&target, tol).map_err(|e| MlError::Singular(e.to_string()))?;
    let a_blk = |i: usize| theta.rows((i - 1) * m, m).transpose();
    let b_blk = |i: usize| theta.rows(p * m + i * r, r).transpose();

    let n = p * m;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, r);
    let d = b_blk(0);
    for i in 1..=p {
        let ai = a_blk(i);
        a.view_mut(((i - 1) * m, 0), (m, m)).copy_from(&ai);
        if i < p {
            a.view_mut(((i - 1) * m, i * m), (m, m)).fill_with_identity();
        }
        b.view_mut(((i - 1) * m, 0), (m, r)).copy_from(&(b_blk(i) + &ai * &d));
    }
    let mut c = DMatrix::zeros(m, n);
    c.view_mut((0, 0), (m, m)).fill_with_identity();
    let model = Dlinss { a, b, c, d, steps };
    let radius = model.spectral_radius();
    let mut f = LearnedFunction::new(Model::Dlinss(model), vec![steps; r], vec![steps; m]);
    if radius >= 1.25 {
        f.notes.push(format!("identified system is unstable (spectral radius {radius:.4})"));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlkit::apply;

    fn excitation(runs: usize, steps: usize, phase: f64) -> DataBatch {
        let mut v = Vec::new();
        for s in 0..runs {
            let amp = 0.5 + 0.1 * s as f64;
            v.extend((0..steps).map(|t| {
                let t = t as f64;
                amp * (0.37 * t + phase * s as f64).sin() + 0.3 * (0.05 * t * (1.0 + s as f64)).cos()
            }));
        }
        DataBatch::new(runs, steps, v).unwrap()
    }

    /// y[t] = 1.5 y[t-1] - 0.7 y[t-2] + 0.5 u[t-1] + 0.2 u[t-2], per row.
    fn reference(u: &DataBatch) -> DataBatch {
        let steps = u.width();
        let mut out = Vec::new();
        for row in u.rows() {
            let mut y = vec![0.0; steps];
            for t in 0..steps {
                let g = |k: usize, v: &[f64]| if t >= k { v[t - k] } else { 0.0 };
                y[t] = 1.5 * g(1, &y) - 0.7 * g(2, &y) + 0.5 * g(1, row) + 0.2 * g(2, row);
            }
            out.extend(y);
        }
        DataBatch::new(u.n(), steps, out).unwrap()
    }

    fn rel_l2(a: &DataBatch, b: &DataBatch) -> f64 {
        let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.values().iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn recovers_a_second_order_system() {
        let u = excitation(8, 64, 0.3);
        let f = dlinss_fit(&[&u], &[&reference(&u)], 2, 0.0).unwrap();
        assert!(f.notes.is_empty());
        let fresh = excitation(5, 64, 1.7);
        let err = rel_l2(&apply(&f, &[&fresh]).unwrap()[0], &reference(&fresh));
        assert!(err <= 1e-3, "relative error {err}");
    }

    #[test]
    fn first_order_gain_is_exact() {
        // φ[t] = (1 - a) φ[t-1] + a v[t]
        let a = 0.3;
        let u = excitation(3, 40, 0.9);
        let mut y = Vec::new();
        for row in u.rows() {
            let mut prev = 0.0;
            for v in row {
                prev = (1.0 - a) * prev + a * v;
                y.push(prev);
            }
        }
        let y = DataBatch::new(3, 40, y).unwrap();
        let f = dlinss_fit(&[&u], &[&y], 1, 0.0).unwrap();
        let Model::Dlinss(m) = &f.model else { unreachable!() };
        assert!((m.d[(0, 0)] - a).abs() < 1e-6);
        assert!((m.a[(0, 0)] - (1.0 - a)).abs() < 1e-6);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let u = excitation(4, 50, 0.2);
        let f = dlinss_fit(&[&u], &[&reference(&u)], 2, 0.0).unwrap();
        let out = apply(&f, &[&DataBatch::zeros(3, 50)]).unwrap().remove(0);
        assert!(out.values().iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn order_must_be_shorter_than_the_sequence() {
        let u = excitation(2, 5, 0.1);
        let y = reference(&u);
        assert!(matches!(dlinss_fit(&[&u], &[&y], 5, 0.0), Err(MlError::BadArgument(_))));
        assert!(matches!(dlinss_fit(&[&u], &[&y], 0, 0.0), Err(MlError::BadArgument(_))));
    }

    #[test]
    fn unstable_fit_is_noted() {
        let u = excitation(2, 30, 0.4);
        let mut y = Vec::new();
        for row in u.rows() {
            let mut prev = 0.0;
            for v in row {
                y.push(prev);
                prev = 1.3 * prev + v;
            }
        }
        let f = dlinss_fit(&[&u], &[&DataBatch::new(2, 30, y).unwrap()], 1, 0.0).unwrap();
        assert_eq!(f.notes.len(), 1);
    }

    #[test]
    fn several_channels() {
        let u1 = excitation(4, 40, 0.5);
        let u2 = excitation(4, 40, 2.1);
        let y1 = reference(&u1);
        let y2: Vec<f64> = reference(&u2).values().iter().zip(u1.values()).map(|(a, b)| a - 0.4 * b).collect();
        let y2 = DataBatch::new(4, 40, y2).unwrap();
        let f = dlinss_fit(&[&u1, &u2], &[&y1, &y2], 2, 0.0).unwrap();
        let out = apply(&f, &[&u1, &u2]).unwrap();
        assert!(rel_l2(&out[0], &y1) < 1e-8);
        assert!(rel_l2(&out[1], &y2) < 1e-8);
    }
}
