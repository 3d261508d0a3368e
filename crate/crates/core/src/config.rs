//! The single JSON document describing an experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::ArchConfig;
use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: PathBuf::from("data"),
            out: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub paths: Paths,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::config(format!("config file {} not found", path.display())),
            _ => Error::io(path, e),
        })?;
        Self::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Field checks of every section plus the cross-section agreements.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate()?;
        self.data.validate()?;
        let pairs = [
            ("arch.input_hw", self.arch.input_hw, "data.size", self.data.size),
            (
                "arch.num_seg_classes",
                self.arch.num_seg_classes,
                "data.num_seg_classes",
                self.data.num_seg_classes,
            ),
            ("arch.num_grades", self.arch.num_grades, "data.num_grades", self.data.num_grades),
        ];
        for (a, av, b, bv) in pairs {
            if av != bv {
                return Err(Error::config(format!("{a} = {av} does not match {b} = {bv}")));
            }
        }
        Ok(())
    }

    /// Writes the full config echo as `config.json` into `dir`.
    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.json");
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))
    }
}
