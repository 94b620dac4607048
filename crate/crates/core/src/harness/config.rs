//! Experiment configuration, read from TOML.
//!
//! A config file only needs the keys it changes; everything else takes the
//! defaults of [`ExperimentConfig::default`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::device::DevicePhysics;
use crate::error::{Error, Result};
use crate::import_pipeline::{ImportConfig, TrainConfig};
use crate::network::{ArrayBiases, NetworkTopology};
use crate::neurons::NeuronParams;
use crate::perf_model::PerfConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronSections {
    pub hidden: NeuronParams<f64>,
    pub output: NeuronParams<f64>,
}

impl Default for NeuronSections {
    fn default() -> Self {
        NeuronSections { hidden: NeuronParams::hidden(), output: NeuronParams::output() }
    }
}

/// Grid of disturb models tried by the `calibrate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSweep {
    pub probabilities: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Fidelity the sweep tries to hit.
    pub target_fidelity: f64,
}

impl Default for CalibrationSweep {
    fn default() -> Self {
        CalibrationSweep {
            probabilities: vec![0.002, 0.005, 0.01],
            sigmas: vec![0.3, 0.4, 0.5],
            target_fidelity: 0.9465,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Training seed.
    pub seed: u64,
    /// One imported network per seed.
    pub import_seeds: Vec<u64>,
    pub noise: bool,
    pub noise_seed: u64,
    /// Binarization threshold as a fraction of full scale.
    pub threshold: f64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Use only the first N training patterns.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Test patterns used for the hidden-layer probe.
    pub probe_patterns: usize,
    /// Technology profiles for `project`: builtin names or profile paths.
    pub techs: Vec<String>,
    pub topology: NetworkTopology,
    pub device: DevicePhysics<f64>,
    pub neurons: NeuronSections,
    pub biases: ArrayBiases,
    pub train: TrainConfig,
    pub import: ImportConfig,
    pub perf: PerfConfig,
    pub calibrate: CalibrationSweep,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            import_seeds: vec![1, 2, 3, 4, 5],
            noise: true,
            noise_seed: 7,
            threshold: 0.5,
            workers: 0,
            data_dir: PathBuf::from("data/mnist"),
            out_dir: PathBuf::from("runs/default"),
            train_limit: None,
            test_limit: None,
            probe_patterns: 200,
            techs: vec!["esf1".into(), "esf3".into()],
            topology: NetworkTopology::default(),
            device: DevicePhysics::default(),
            neurons: NeuronSections::default(),
            biases: ArrayBiases::default(),
            train: TrainConfig::default(),
            import: ImportConfig::default(),
            perf: PerfConfig::default(),
            calibrate: CalibrationSweep::default(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Parses TOML text laid over the defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let over: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut base = toml::Value::try_from(ExperimentConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, over);
        let cfg: ExperimentConfig = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.import_seeds.is_empty() {
            return Err(Error::Config("import_seeds must not be empty".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} must be in [0, 1]", self.threshold)));
        }
        self.topology.validate()?;
        self.device.validate()?;
        self.neurons.hidden.validate()?;
        self.neurons.output.validate()?;
        self.import.validate()?;
        self.perf.validate()?;
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be >= 1".into()));
        }
        Ok(())
    }
}
