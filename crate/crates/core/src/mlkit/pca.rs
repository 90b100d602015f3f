use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{DataBatch, LearnedFunction, MlError, Model};

/// How many principal directions to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaTarget {
    /// Smallest `d` whose cumulative explained variance reaches this fraction.
    Variance(f64),
    Components(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: DVector<f64>,
    /// `w × d`, orthonormal columns sorted by decreasing variance.
    pub basis: DMatrix<f64>,
    /// Variance along each kept direction.
    pub explained: Vec<f64>,
    pub total_variance: f64,
}

impl PcaBasis {
    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    pub(super) fn encode(&self, x: &DataBatch) -> DataBatch {
        let mut centered = x.to_matrix();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        DataBatch::from_matrix(&(centered * &self.basis)).expect("finite projection")
    }

    pub(super) fn decode(&self, z: &DataBatch) -> DataBatch {
        let mut y = z.to_matrix() * self.basis.transpose();
        for mut row in y.row_iter_mut() {
            row += self.mean.transpose();
        }
        DataBatch::from_matrix(&y).expect("finite reconstruction")
    }
}

/// Eigendecomposition of the sample covariance. Eigenpairs are sorted by
/// decreasing eigenvalue (ties keep input order) and each direction is signed
/// so that its first non-negligible component is positive.
pub fn pca_fit(inputs: &[&DataBatch], target: PcaTarget) -> Result<(LearnedFunction, LearnedFunction), MlError> {
    let x = DataBatch::hcat(inputs)?;
    let (n, w) = (x.n(), x.width());
    if n < 2 {
        return Err(MlError::Degenerate(format!("PCA needs at least 2 samples, got {n}")));
    }
    match target {
        PcaTarget::Variance(v) if !(v > 0.0 && v <= 1.0) => {
            return Err(MlError::BadArgument(format!("variance fraction {v} is outside (0, 1]")))
        }
        PcaTarget::Components(k) if k < 1 || k > w => {
            return Err(MlError::BadArgument(format!("cannot keep {k} components of width {w}")))
        }
        _ => {}
    }
    let constant = (0..w).all(|j| (1..n).all(|i| x.get(i, j) == x.get(0, j)));
    if constant {
        return Err(MlError::Degenerate("zero total variance".into()));
    }

    let m = x.to_matrix();
    let mean = m.row_mean().transpose();
    let mut centered = m;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..w).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*b].partial_cmp(&eig.eigenvalues[*a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b))
    });
    let values: Vec<f64> = order.iter().map(|i| eig.eigenvalues[*i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(MlError::Degenerate("zero total variance".into()));
    }
    let d = match target {
        PcaTarget::Components(k) => k,
        PcaTarget::Variance(v) => {
            let mut cum = 0.0;
            let mut d = w;
            for (j, lam) in values.iter().enumerate() {
                cum += lam;
                if cum >= v * total {
                    d = j + 1;
                    break;
                }
            }
            d
        }
    };

    let mut basis = DMatrix::zeros(w, d);
    for (c, src) in order.iter().take(d).enumerate() {
        let mut v = eig.eigenvectors.column(*src).into_owned();
        let scale = v.amax();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                v = -v;
            }
        }
        basis.set_column(c, &v);
    }
    let pca = PcaBasis { mean, basis, explained: values[..d].to_vec(), total_variance: total };
    let widths: Vec<usize> = inputs.iter().map(|b| b.width()).collect();
    let encode = LearnedFunction::new(Model::PcaEncode(pca.clone()), widths.clone(), vec![d]);
    let decode = LearnedFunction::new(Model::PcaDecode(pca), vec![d], widths);
    Ok((encode, decode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlkit::apply;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `n` samples on a `rank`-dimensional affine subspace of width `w`.
    fn low_rank(n: usize, w: usize, rank: usize, seed: u64) -> DataBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs: Vec<Vec<f64>> = (0..rank).map(|_| (0..w).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let offset: Vec<f64> = (0..w).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let coef: Vec<f64> = (0..rank).map(|_| rng.gen_range(-2.0..2.0)).collect();
                (0..w).map(|j| offset[j] + (0..rank).map(|r| coef[r] * dirs[r][j]).sum::<f64>()).collect()
            })
            .collect();
        DataBatch::from_rows(&rows).unwrap()
    }

    /// Rank from an eigendecomposition computed independently of `pca_fit`
    /// (Gram matrix of centred samples, no sorting or truncation).
    fn oracle_rank(x: &DataBatch) -> usize {
        let m = x.to_matrix();
        let mean = m.row_mean();
        let c = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - mean[j]);
        let gram = &c * c.transpose();
        let ev = gram.symmetric_eigenvalues();
        let top = ev.amax();
        ev.iter().filter(|l| **l > 1e-10 * top).count()
    }

    #[test]
    fn rank_two_subspace_is_recovered_exactly() {
        let x = low_rank(100, 5, 2, 3);
        assert_eq!(oracle_rank(&x), 2);
        let (enc, dec) = pca_fit(&[&x], PcaTarget::Variance(0.99)).unwrap();
        assert_eq!(enc.out_widths, vec![2]);
        let z = apply(&enc, &[&x]).unwrap();
        let back = apply(&dec, &[&z[0]]).unwrap();
        for (a, b) in back[0].values().iter().zip(x.values()) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn one_dimensional_batch_round_trips() {
        let x = DataBatch::from_rows(&[[1.0], [2.5], [-0.5], [4.0]]).unwrap();
        let (enc, dec) = pca_fit(&[&x], PcaTarget::Variance(0.99)).unwrap();
        assert_eq!(enc.out_widths, vec![1]);
        let z = apply(&enc, &[&x]).unwrap();
        let back = apply(&dec, &[&z[0]]).unwrap();
        for (a, b) in back[0].values().iter().zip(x.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_batch_is_degenerate() {
        let x = DataBatch::from_rows(&[[0.1, 2.0], [0.1, 2.0], [0.1, 2.0]]).unwrap();
        assert!(matches!(pca_fit(&[&x], PcaTarget::Variance(0.99)), Err(MlError::Degenerate(_))));
    }

    #[test]
    fn bad_targets_are_rejected() {
        let x = low_rank(10, 3, 2, 1);
        assert!(matches!(pca_fit(&[&x], PcaTarget::Variance(1.5)), Err(MlError::BadArgument(_))));
        assert!(matches!(pca_fit(&[&x], PcaTarget::Variance(0.0)), Err(MlError::BadArgument(_))));
        assert!(matches!(pca_fit(&[&x], PcaTarget::Components(4)), Err(MlError::BadArgument(_))));
    }

    #[test]
    fn basis_sign_convention_holds() {
        let x = low_rank(50, 6, 3, 9);
        let (enc, _) = pca_fit(&[&x], PcaTarget::Components(3)).unwrap();
        let Model::PcaEncode(b) = &enc.model else { unreachable!() };
        for c in 0..3 {
            let col = b.basis.column(c);
            let first = col.iter().find(|v| v.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn multiple_inputs_are_concatenated() {
        let x = low_rank(40, 4, 2, 5);
        let parts = x.split(&[1, 3]).unwrap();
        let (enc, dec) = pca_fit(&[&parts[0], &parts[1]], PcaTarget::Variance(0.999)).unwrap();
        assert_eq!(enc.in_widths, vec![1, 3]);
        assert_eq!(dec.out_widths, vec![1, 3]);
        let z = apply(&enc, &[&parts[0], &parts[1]]).unwrap();
        let back = apply(&dec, &[&z[0]]).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back[1].values().iter().zip(parts[1].values()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn components_grow_with_variance_target(seed in 0u64..1000, w in 2usize..8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..w).map(|j| rng.gen_range(-1.0..1.0) * (j + 1) as f64).collect()).collect();
                let x = DataBatch::from_rows(&rows).unwrap();
                let d = |v| pca_fit(&[&x], PcaTarget::Variance(v)).unwrap().0.out_widths[0];
                prop_assert!(d(0.9) <= d(0.99));
                prop_assert!(d(0.99) <= d(0.999));
            }

            #[test]
            fn reconstruction_error_is_bounded_by_discarded_variance(seed in 0u64..1000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
                let x = DataBatch::from_rows(&rows).unwrap();
                let (enc, dec) = pca_fit(&[&x], PcaTarget::Variance(0.8)).unwrap();
                let Model::PcaEncode(b) = &enc.model else { unreachable!() };
                let discarded = b.total_variance - b.explained.iter().sum::<f64>();
                let z = apply(&enc, &[&x]).unwrap();
                let back = apply(&dec, &[&z[0]]).unwrap();
                let sq: f64 = back[0].values().iter().zip(x.values()).map(|(a, b)| (a - b).powi(2)).sum();
                prop_assert!(sq / (x.n() as f64 - 1.0) <= discarded * (1.0 + 1e-9) + 1e-12);
            }
        }
    }
}
