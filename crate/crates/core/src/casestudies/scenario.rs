//! Learn-then-exploit drivers: synthesize data, write it next to the
//! pipelines, run both pipelines through the same path as `fdf run` and
//! score the exploitation output against the generator's ground truth.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::bearing::{self, gen_bearing};
use super::strain::{gen_strain, scan, StrainConfig};
use super::Fixture;
use crate::cli::{run_file, RunSummary};
use crate::engine::RunConfig;
use crate::library::Library;
use crate::mlkit::{DataBatch, MlError};
use crate::store::{self, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Strain,
    Bearing,
    BearingVariant,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Strain => "strain",
            Scenario::Bearing => "bearing",
            Scenario::BearingVariant => "bearing_variant",
        }
    }

    fn pipelines(self) -> (Fixture, Fixture) {
        match self {
            Scenario::Strain => (super::STRAIN_LEARNING, super::STRAIN_EXPLOITATION),
            Scenario::Bearing => (super::BEARING_LEARNING, super::BEARING_EXPLOITATION),
            Scenario::BearingVariant => (super::BEARING_VARIANT, super::BEARING_VARIANT_EXPLOITATION),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("`{pipeline}` exited with {code}:\n{stderr}")]
    Run { pipeline: String, code: i32, stderr: String },
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub metrics: Vec<(String, f64)>,
    pub learning: RunSummary,
    pub exploitation: RunSummary,
    pub elapsed: Duration,
}

impl ScenarioReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (n, v) in &self.metrics {
            writeln!(s, "{} {n} {v:.6}", self.scenario.name()).unwrap();
        }
        writeln!(s, "{} seconds {:.2}", self.scenario.name(), self.elapsed.as_secs_f64()).unwrap();
        s
    }
}

pub const STRAIN_TRAIN: usize = 300;
pub const STRAIN_TEST: usize = 100;
pub const BEARING_TEST: usize = 40;

/// Seed of the held-out data, distinct from the training seed.
fn held_out(seed: u64) -> u64 {
    seed.wrapping_add(0x9e37_79b9_7f4a_7c15)
}

fn write_fixture(dir: &Path, f: &Fixture) -> Result<(PathBuf, PathBuf), ScenarioError> {
    let fdf = dir.join(format!("{}.fdf", f.name));
    let manifest = dir.join(format!("{}.manifest", f.name));
    store::write_atomic(&fdf, f.text.as_bytes())?;
    store::write_atomic(&manifest, f.manifest.as_bytes())?;
    Ok((fdf, manifest))
}

fn run_fixture(dir: &Path, f: &Fixture, seed: u64, jobs: usize) -> Result<RunSummary, ScenarioError> {
    let (fdf, manifest) = write_fixture(dir, f)?;
    let library = Library::from_env().unwrap_or_default();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    run_file(&fdf, &manifest, dir, RunConfig { seed, jobs }, false, &library, &mut out, &mut err).map_err(|code| {
        ScenarioError::Run { pipeline: f.name.to_string(), code, stderr: String::from_utf8_lossy(&err).into_owned() }
    })
}

/// `‖a − b‖ / ‖b‖` over all entries.
pub fn relative_l2(a: &DataBatch, b: &DataBatch) -> f64 {
    let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.values().iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Root-mean-square difference.
pub fn rms(a: &DataBatch, b: &DataBatch) -> f64 {
    let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
    (num / a.values().len() as f64).sqrt()
}

pub fn run_scenario(s: Scenario, dir: &Path, seed: u64, jobs: usize) -> Result<ScenarioReport, ScenarioError> {
    std::fs::create_dir_all(dir)?;
    let started = Instant::now();
    let (learn, exploit) = s.pipelines();
    let (learning, exploitation, metrics) = match s {
        Scenario::Strain => {
            let cfg = StrainConfig::default();
            let (f, _, _) = gen_strain(STRAIN_TRAIN, &cfg, seed)?;
            store::save_batch(&f, &dir.join("F.csv"))?;
            let learning = run_fixture(dir, &learn, seed, jobs)?;

            let (_, du, eps) = gen_strain(STRAIN_TEST, &cfg, held_out(seed))?;
            store::save_batch(&scan(&du, &cfg), &dir.join("img.csv"))?;
            store::save_batch(&DataBatch::from_matrix(&cfg.fitting_matrix())?, &dir.join("fit.csv"))?;
            store::save_batch(&eps, &dir.join("eps_true.csv"))?;
            let exploitation = run_fixture(dir, &exploit, seed, jobs)?;
            let pred = store::load_batch(&dir.join("eps_pred.csv"))?;
            (learning, exploitation, vec![("eps_relative_l2".to_string(), relative_l2(&pred, &eps))])
        }
        Scenario::Bearing | Scenario::BearingVariant => {
            let (n, steps, bias) = (bearing::DEFAULT_SEQUENCES, bearing::DEFAULT_STEPS, bearing::DEFAULT_BIAS);
            let train = gen_bearing(n, steps, bias, seed)?;
            store::save_batch(&train.v_e, &dir.join("VE.csv"))?;
            store::save_batch(&train.v_h, &dir.join("VH.csv"))?;
            store::save_batch(&train.phi_h, &dir.join("phiH.csv"))?;
            let learning = run_fixture(dir, &learn, seed, jobs)?;

            let test = gen_bearing(BEARING_TEST, steps, bias, held_out(seed))?;
            store::save_batch(&test.v_h, &dir.join("V.csv"))?;
            store::save_batch(&test.phi_h, &dir.join("phi_true.csv"))?;
            let exploitation = run_fixture(dir, &exploit, seed, jobs)?;
            let nominal = store::load_batch(&dir.join("phic.csv"))?;
            let twin = store::load_batch(&dir.join("phi_pred.csv"))?;
            let (e_nominal, e_twin) = (rms(&nominal, &test.phi_h), rms(&twin, &test.phi_h));
            let metrics = vec![
                ("cauer_rms".to_string(), e_nominal),
                ("twin_rms".to_string(), e_twin),
                ("reduction".to_string(), 1.0 - e_twin / e_nominal),
            ];
            (learning, exploitation, metrics)
        }
    };
    Ok(ScenarioReport { scenario: s, metrics, learning, exploitation, elapsed: started.elapsed() })
}
