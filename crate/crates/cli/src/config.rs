//! JSON configuration files for `fit` and `simulate`.

use std::path::{Path, PathBuf};

use koopman_core::systems::InitialStates;
use koopman_core::{
    make_standard_dictionary, Dictionary, KoopmanError, OutputMap, ReferenceSystem, RegularizerSpec,
    StandardDictionarySpec, SystemKind,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// Either an explicit basis list or a recipe for the standard families.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DictionaryConfig {
    Explicit(Dictionary),
    Standard(StandardDictionarySpec),
}

impl DictionaryConfig {
    pub fn build(&self) -> Result<Dictionary, KoopmanError> {
        match self {
            DictionaryConfig::Explicit(d) => Ok(d.clone()),
            DictionaryConfig::Standard(spec) => make_standard_dictionary(spec),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFlags {
    /// Include a table of Koopman-mode magnitudes in the summary.
    #[serde(default = "yes")]
    pub compute_modes: bool,
    /// Print the diagnostics report for the training data after fitting.
    #[serde(default)]
    pub diagnostics: bool,
}

fn yes() -> bool {
    true
}

impl Default for FitFlags {
    fn default() -> Self {
        Self { compute_modes: true, diagnostics: false }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Defaults to the state coordinates of the input data.
    /// Relative `input` and `output` paths resolve against the config file.
    #[serde(default)]
    pub dictionary: Option<DictionaryConfig>,
    #[serde(default)]
    pub regularizer: RegularizerSpec,
    #[serde(default)]
    pub koopman_regularizer: Option<RegularizerSpec>,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub options: FitFlags,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemKind,
    #[serde(default)]
    pub output_map: OutputMap,
    pub initial: InitialStates,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl SimulateConfig {
    pub fn reference_system(&self) -> Result<ReferenceSystem, KoopmanError> {
        ReferenceSystem::new(self.system.clone(), self.output_map.clone())
    }
}

/// Reads a JSON file, reporting the JSON path of the first bad value.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, KoopmanError> {
    let text = std::fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| KoopmanError::Json {
        path: format!("{}: {}", path.display(), e.path()),
        message: e.inner().to_string(),
    })
}
