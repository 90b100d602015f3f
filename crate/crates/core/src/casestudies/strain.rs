//! Impact-strain stand-in: a strike of strength `F` deforms a plate (`ΔU`)
//! and leaves a plastic strain field (`ε_p`), both living on a
//! low-dimensional latent manifold embedded in a wide mesh space.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mlkit::{DataBatch, MlError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainConfig {
    /// Mesh width `D` of `ΔU` and `ε_p`.
    pub dim: usize,
    /// Intrinsic dimension `d`.
    pub latent: usize,
    /// Standard deviation of the measurement noise added to `ΔU`.
    pub noise: f64,
    /// Seed of the fixed plate geometry (embedding bases).
    pub geometry: u64,
}

impl Default for StrainConfig {
    fn default() -> Self {
        StrainConfig { dim: 64, latent: 3, noise: 1e-3, geometry: 7 }
    }
}

pub const F_MIN: f64 = 0.5;
pub const F_MAX: f64 = 2.0;

/// Orthonormal columns from the QR factor of a seeded Gaussian matrix.
fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q.columns(0, cols).into_owned()
}

impl StrainConfig {
    pub fn validate(&self) -> Result<(), MlError> {
        if self.latent == 0 || self.latent >= self.dim {
            return Err(MlError::BadArgument(format!("latent dimension {} must be in 1..{}", self.latent, self.dim)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(MlError::BadArgument(format!("noise must be non-negative, got {}", self.noise)));
        }
        Ok(())
    }

    /// (`ΔU` basis, `ε_p` basis), both `D × d`.
    fn bases(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.geometry);
        let u = orthonormal(self.dim, self.latent, &mut rng);
        let e = orthonormal(self.dim, self.latent, &mut rng);
        (u, e)
    }

    /// Orthogonal `D × D` map between scanner coordinates and mesh coordinates.
    pub fn fitting_matrix(&self) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.geometry ^ 0x05ee_df17);
        orthonormal(self.dim, self.dim, &mut rng)
    }

    fn latent_row(&self, f: f64) -> Vec<f64> {
        let s = (f - F_MIN) / (F_MAX - F_MIN);
        (0..self.latent)
            .map(|i| if i == 0 { 2.0 * s - 1.0 } else { (i as f64 * std::f64::consts::PI * s).cos() })
            .collect()
    }

    /// Deformation and plastic strain for each impact strength in `f` (`n × 1`).
    pub fn simulate(&self, f: &DataBatch, rng: &mut ChaCha8Rng) -> Result<(DataBatch, DataBatch), MlError> {
        self.validate()?;
        if f.width() != 1 {
            return Err(MlError::Shape(format!("impact strength must have width 1, got {}", f.width())));
        }
        let (bu, be) = self.bases();
        let (n, d) = (f.n(), self.latent);
        let mut zu = DMatrix::zeros(n, d);
        let mut ze = DMatrix::zeros(n, d);
        for i in 0..n {
            let z = self.latent_row(f.get(i, 0));
            for j in 0..d {
                zu[(i, j)] = z[j] / (j + 1) as f64;
                ze[(i, j)] = 0.01 * if j == 0 { z[0] + 0.3 * z[0] * z[0] } else { z[j] * (1.0 + 0.4 * z[0]) };
            }
        }
        let mut du = zu * bu.transpose();
        if self.noise > 0.0 {
            du.apply(|v| *v += self.noise * rng.sample::<f64, _>(StandardNormal));
        }
        let eps = ze * be.transpose();
        Ok((DataBatch::from_matrix(&du)?, DataBatch::from_matrix(&eps)?))
    }
}

pub fn impact_strengths(n: usize, rng: &mut ChaCha8Rng) -> DataBatch {
    let v = (0..n).map(|_| rng.gen_range(F_MIN..=F_MAX)).collect();
    DataBatch::new(n, 1, v).expect("finite strengths")
}

/// `(F, ΔU, ε_p)` for `n` random impacts.
pub fn gen_strain(n: usize, config: &StrainConfig, seed: u64) -> Result<(DataBatch, DataBatch, DataBatch), MlError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = impact_strengths(n, &mut rng);
    let (du, eps) = config.simulate(&f, &mut rng)?;
    Ok((f, du, eps))
}

/// Scanner images whose fitting (`image · M`) gives back `ΔU`.
pub fn scan(du: &DataBatch, config: &StrainConfig) -> DataBatch {
    let m = config.fitting_matrix();
    DataBatch::from_matrix(&(du.to_matrix() * m.transpose())).expect("finite image")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlkit::{pca_fit, PcaTarget};

    #[test]
    fn seeded_generation_is_reproducible() {
        let cfg = StrainConfig::default();
        assert_eq!(gen_strain(20, &cfg, 3).unwrap(), gen_strain(20, &cfg, 3).unwrap());
        assert_ne!(gen_strain(20, &cfg, 3).unwrap().1, gen_strain(20, &cfg, 4).unwrap().1);
    }

    #[test]
    fn intrinsic_dimension_is_recovered() {
        let cfg = StrainConfig { noise: 0.0, latent: 1, ..Default::default() };
        let (_, du, _) = gen_strain(100, &cfg, 1).unwrap();
        let (enc, _) = pca_fit(&[&du], PcaTarget::Variance(0.999)).unwrap();
        assert_eq!(enc.out_widths, vec![1]);
        let cfg = StrainConfig::default();
        let (_, du, eps) = gen_strain(300, &cfg, 1).unwrap();
        for batch in [&du, &eps] {
            let (enc, _) = pca_fit(&[batch], PcaTarget::Variance(0.999)).unwrap();
            assert!(enc.out_widths[0] <= cfg.latent + 1);
        }
    }

    #[test]
    fn latent_must_be_narrower_than_mesh() {
        let cfg = StrainConfig { dim: 4, latent: 4, ..Default::default() };
        assert!(matches!(gen_strain(5, &cfg, 0), Err(MlError::BadArgument(_))));
    }

    #[test]
    fn fitting_undoes_the_scan() {
        let cfg = StrainConfig::default();
        let (_, du, _) = gen_strain(10, &cfg, 2).unwrap();
        let back = scan(&du, &cfg).to_matrix() * cfg.fitting_matrix();
        assert!((back - du.to_matrix()).abs().max() < 1e-12);
    }
}
