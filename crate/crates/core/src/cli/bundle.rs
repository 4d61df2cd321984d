use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::baselines::{Classifier, ClassifierCheckpoint, ClassifierConfig, MrfGrid, MrfSettings};
use crate::ingest::write_atomic;
use crate::model::{ModelCheckpoint, RoadTagger};
use crate::training::TrainConfig;

pub const BUNDLE_FORMAT: &str = "roadtagger-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// Schedule and architecture of the per-vertex classifier trained next to
/// the tagger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierRun {
    pub enabled: bool,
    pub model: ClassifierConfig,
    pub iterations: usize,
    pub learning_rate: f64,
    pub validation_interval: usize,
}

impl Default for ClassifierRun {
    fn default() -> Self {
        Self {
            enabled: true,
            model: ClassifierConfig::default(),
            iterations: 1000,
            learning_rate: 1e-3,
            validation_interval: 100,
        }
    }
}

impl ClassifierRun {
    /// The tagger schedule with the classifier's own length and step size.
    pub fn schedule(&self, tagger: &TrainConfig) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            validation_interval: self.validation_interval,
            decay_interval: self.iterations.max(1),
            ..tagger.clone()
        }
    }
}

/// Everything `train` reads from its config file. Missing sections take
/// their defaults; unknown keys are errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tagger: TrainConfig,
    pub classifier: ClassifierRun,
    pub mrf: MrfGrid,
}

impl RunConfig {
    /// TOML when the extension says so, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        load_config(path)
    }
}

pub(crate) fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// A trained tagger plus the comparison schemes fitted on the same data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub format: String,
    pub version: u32,
    pub tagger: ModelCheckpoint,
    pub best_iteration: Option<usize>,
    pub classifier: Option<ClassifierCheckpoint>,
    pub mrf: Option<MrfSettings>,
}

impl Bundle {
    pub fn new(
        tagger: &RoadTagger,
        best_iteration: Option<usize>,
        classifier: Option<&Classifier>,
        mrf: Option<MrfSettings>,
    ) -> Self {
        Self {
            format: BUNDLE_FORMAT.to_string(),
            version: BUNDLE_VERSION,
            tagger: tagger.to_checkpoint(),
            best_iteration,
            classifier: classifier.map(Classifier::to_checkpoint),
            mrf,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string(self).map_err(|e| CliError::data(e.to_string()))?;
        write_atomic(path, text.as_bytes()).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let b: Bundle =
            serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if b.format != BUNDLE_FORMAT || b.version != BUNDLE_VERSION {
            return Err(CliError::data(format!(
                "{}: expected {BUNDLE_FORMAT} v{BUNDLE_VERSION}, found {} v{}",
                path.display(),
                b.format,
                b.version
            )));
        }
        Ok(b)
    }

    pub fn tagger(&self) -> Result<RoadTagger, CliError> {
        RoadTagger::from_checkpoint(&self.tagger).map_err(|e| CliError::data(e.to_string()))
    }

    pub fn classifier(&self) -> Result<Classifier, CliError> {
        let ckpt = self
            .classifier
            .as_ref()
            .ok_or_else(|| CliError::data("checkpoint holds no classifier; retrain with it enabled"))?;
        Classifier::from_checkpoint(ckpt).map_err(|e| CliError::data(e.to_string()))
    }
}
