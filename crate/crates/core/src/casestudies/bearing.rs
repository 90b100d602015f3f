//! Magnetic-bearing stand-in: voltage sequences drive a fixed second-order
//! flux response; a manufactured instance deviates from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::mlkit::{DataBatch, MlError};

/// Nominal physics: `φ[t] = 1.6 φ[t-1] - 0.68 φ[t-2] + 0.05 v[t-1] + 0.03 v[t-2]`
/// (poles of modulus √0.68, unit DC gain).
pub fn nominal_flux(v: &DataBatch) -> DataBatch {
    let steps = v.width();
    let mut out = Vec::with_capacity(v.values().len());
    for row in v.rows() {
        let mut phi = vec![0.0; steps];
        for t in 0..steps {
            let p = |k: usize, s: &[f64]| if t >= k { s[t - k] } else { 0.0 };
            phi[t] = 1.6 * p(1, &phi) - 0.68 * p(2, &phi) + 0.05 * p(1, row) + 0.03 * p(2, row);
        }
        out.extend(phi);
    }
    DataBatch::new(v.n(), steps, out).expect("stable response")
}

/// Deviation of a manufactured instance from the nominal flux: a
/// voltage-proportional bias plus a saturating term, scaled by `bias`.
pub fn instance_deviation(v: &[f64], t: usize, bias: f64) -> f64 {
    let prev = if t > 0 { v[t - 1] } else { 0.0 };
    bias * (0.5 * v[t] + 0.3 * (2.0 * prev).tanh())
}

/// Flux measured on the instance for voltages `v`.
pub fn instance_flux(v: &DataBatch, bias: f64, noise: f64, rng: &mut ChaCha8Rng) -> DataBatch {
    let nominal = nominal_flux(v);
    let steps = v.width();
    let mut out = nominal.values().to_vec();
    for (i, row) in v.rows().enumerate() {
        for t in 0..steps {
            let e = if noise > 0.0 { noise * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
            out[i * steps + t] += instance_deviation(row, t, bias) + e;
        }
    }
    DataBatch::new(v.n(), steps, out).expect("finite flux")
}

/// Voltage sequences of varied amplitude and shape: a sinusoid, a square
/// component and an offset.
pub fn voltages(n: usize, steps: usize, rng: &mut ChaCha8Rng) -> DataBatch {
    let mut out = Vec::with_capacity(n * steps);
    for _ in 0..n {
        let amp = rng.gen_range(0.5..1.5);
        let w = rng.gen_range(0.05..0.4);
        let ph = rng.gen_range(0.0..std::f64::consts::TAU);
        let sq = rng.gen_range(0.0..0.5);
        let w2 = rng.gen_range(0.02..0.2);
        let ph2 = rng.gen_range(0.0..std::f64::consts::TAU);
        let c = rng.gen_range(-0.3..0.3);
        out.extend((0..steps).map(|t| {
            let t = t as f64;
            amp * (w * t + ph).sin() + sq * (w2 * t + ph2).sin().signum() + c
        }));
    }
    DataBatch::new(n, steps, out).expect("finite voltages")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BearingData {
    /// Voltages fed to the nominal model.
    pub v_e: DataBatch,
    pub phi_m: DataBatch,
    /// Historical voltages and fluxes measured on the instance.
    pub v_h: DataBatch,
    pub phi_h: DataBatch,
}

pub const DEFAULT_NOISE: f64 = 1e-3;
pub const DEFAULT_BIAS: f64 = 0.5;
pub const DEFAULT_SEQUENCES: usize = 60;
pub const DEFAULT_STEPS: usize = 64;

pub fn gen_bearing(n: usize, steps: usize, instance_bias: f64, seed: u64) -> Result<BearingData, MlError> {
    if steps < 16 {
        return Err(MlError::BadArgument(format!("sequences need at least 16 steps, got {steps}")));
    }
    if n == 0 || !instance_bias.is_finite() {
        return Err(MlError::BadArgument("need at least one sequence and a finite bias".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v_e = voltages(n, steps, &mut rng);
    let phi_m = nominal_flux(&v_e);
    let v_h = voltages(n, steps, &mut rng);
    let phi_h = instance_flux(&v_h, instance_bias, DEFAULT_NOISE, &mut rng);
    Ok(BearingData { v_e, phi_m, v_h, phi_h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_bias_means_nominal_within_noise() {
        let d = gen_bearing(5, 32, 0.0, 1).unwrap();
        let nominal = nominal_flux(&d.v_h);
        let worst = d.phi_h.values().iter().zip(nominal.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 6.0 * DEFAULT_NOISE);
    }

    #[test]
    fn seeded_and_validated() {
        assert_eq!(gen_bearing(3, 20, 0.5, 9).unwrap(), gen_bearing(3, 20, 0.5, 9).unwrap());
        assert!(gen_bearing(3, 8, 0.5, 9).is_err());
    }

    #[test]
    fn nominal_response_has_unit_dc_gain() {
        let v = DataBatch::new(1, 200, vec![1.0; 200]).unwrap();
        let phi = nominal_flux(&v);
        assert!((phi.get(0, 199) - 1.0).abs() < 1e-9);
    }
}
