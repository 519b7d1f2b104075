use std::path::PathBuf;

use operon_core::dataset::{GenerationParams, Problem};
use operon_core::model::{ModelKind, ModelSpec};
use operon_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// Everything a run depends on. Command-line flags override the values read
/// from `--config`; the effective configuration is written next to every
/// output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: Problem,
    pub functions: usize,
    pub queries: usize,
    /// Master seed of the command: dataset generation for `gen`, model
    /// initialization and shuffling for `train` and `compare`, the fresh
    /// input pair for `eval`.
    pub seed: u64,
    pub generation: GenerationParams,
    pub model: ModelKind,
    pub branches: usize,
    /// Architecture the other kinds are parameter-matched against. `null`
    /// selects the default enhanced DeepONet.
    pub reference: Option<ModelSpec>,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub seeds: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Diffusion,
            functions: 1000,
            queries: 100,
            seed: 0,
            generation: GenerationParams::default(),
            model: ModelKind::EDeepOnet,
            branches: 2,
            reference: None,
            train: TrainConfig::default(),
            train_fraction: 0.9,
            split_seed: 0,
            seeds: 5,
            out: None,
        }
    }
}
