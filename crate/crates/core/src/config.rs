//! TOML run configuration with `[model]` and `[train]` tables.
//!
//! ```toml
//! [model]
//! arch = "gat"
//! readout = "virtual"
//! use_category = true
//! d = 64
//! num_layers = 5
//!
//! [train]
//! lr = 1e-4
//! epochs = 25
//! seed = 0
//! ```
//!
//! Missing keys take their defaults; unknown keys are rejected. Command-line
//! flags are applied on top by the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.model.validate()?;
        c.train.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arch, Readout};

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        let c = RunConfig::parse(
            "[model]\narch = \"gin\"\nreadout = \"mean_pool\"\nd = 16\n[train]\nepochs = 3\n",
        )
        .unwrap();
        assert_eq!(
            (c.model.arch, c.model.readout, c.model.d),
            (Arch::Gin, Readout::MeanPool, 16)
        );
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.lr, 1e-4);
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            RunConfig::parse("[model]\nwidth = 3\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("[train]\nlr = -1.0\n"),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::parse("[model]\nd = 0\n").is_err());
    }
}
