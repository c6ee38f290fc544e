//! The JSON run configuration. Every field is optional; command-line flags
//! override the file and defaults fill the rest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use beltwatch_core::classifiers::Family;
use beltwatch_core::pipeline::Approach;
use beltwatch_core::synth::{GeneratorConfig, Preset};

use crate::error::FormatError;
use crate::io::read_json;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub tolerance: Option<f64>,
    pub approach: Option<Approach>,
    pub model: Option<Family>,
    pub duty_model: Option<Family>,
    /// Grid-search folds; fixed default hyperparameters when absent.
    pub grid_folds: Option<usize>,
    pub train_months: Option<Vec<String>>,
    pub test_months: Option<Vec<String>>,
    pub detection_only: Option<bool>,
    pub speed_threshold: Option<f64>,
    pub median_window: Option<usize>,
    pub encoder_slots: Option<usize>,
    pub preset: Option<Preset>,
    pub cycles: Option<usize>,
    /// Complete generator settings; `seed` and `cycles` still override.
    pub generator: Option<GeneratorConfig>,
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self, FormatError> {
        read_json(path)
    }

    /// Fields set in `flags` win over fields set here.
    pub fn overlay(self, flags: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => {
                RunConfig { $($f: flags.$f.or(self.$f)),* }
            };
        }
        pick!(
            seed,
            seeds,
            tolerance,
            approach,
            model,
            duty_model,
            grid_folds,
            train_months,
            test_months,
            detection_only,
            speed_threshold,
            median_window,
            encoder_slots,
            preset,
            cycles,
            generator
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win() {
        let file: RunConfig = serde_json::from_str(r#"{"seed": 3, "model": "rf", "approach": 3}"#).unwrap();
        let flags = RunConfig {
            seed: Some(9),
            ..RunConfig::default()
        };
        let r = file.overlay(flags);
        assert_eq!(r.seed, Some(9));
        assert_eq!(r.model, Some(Family::Rf));
        assert_eq!(r.approach, Some(Approach::ThresholdLearned));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"approach": 4}"#).is_err());
    }
}
