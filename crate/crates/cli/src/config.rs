use std::fs;
use std::path::{Path, PathBuf};

use pmil::dataio::SynthConfig;
use pmil::pseudobag::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Shapley scoring settings for `iis` and the instance block of `eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IisSettings {
    pub mu: usize,
    pub tau: usize,
    /// Pseudo-bag count `M` that sizes the high-attention block (`mu·M`).
    pub pseudo_bags: usize,
}

impl Default for IisSettings {
    fn default() -> Self {
        Self {
            mu: 10,
            tau: 3,
            pseudo_bags: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a run depends on. Loaded from JSON; missing keys take their
/// defaults and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random substream (data generation, init, splits,
    /// coalition draws).
    pub seed: u64,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub iis: IisSettings,
    /// `k` of the top-k attention mass.
    pub attn_k: usize,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            iis: IisSettings::default(),
            attn_k: 10,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// Pushes the run seed into every section.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synth
            .validate()
            .map_err(|e| CliError::Input(format!("synth: {e}")))?;
        self.train
            .validate()
            .map_err(|e| CliError::Input(format!("train: {e}")))?;
        if self.iis.mu == 0 || self.iis.tau == 0 || self.iis.pseudo_bags == 0 {
            return Err(CliError::Input(
                "iis: mu, tau and pseudo_bags must be >= 1".into(),
            ));
        }
        if self.attn_k == 0 {
            return Err(CliError::Input("invalid attn_k: must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
