use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Augmentation, IncrementalSchedule};
use crate::error::{Error, Result};
use crate::model::{ModelDims, Switches};

/// Component switches; `true` keeps the component in the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablations {
    pub cgr: bool,
    pub cga: bool,
    pub wfc: bool,
    pub sfc: bool,
}

impl Ablations {
    pub const FULL: Ablations = Ablations {
        cgr: true,
        cga: true,
        wfc: true,
        sfc: true,
    };
    pub const NONE: Ablations = Ablations {
        cgr: false,
        cga: false,
        wfc: false,
        sfc: false,
    };
}

/// Either a state count (classes split evenly in index order) or explicit
/// class groups per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    States(usize),
    Groups(Vec<Vec<usize>>),
}

impl ScheduleSpec {
    pub fn build(&self, num_classes: usize) -> Result<IncrementalSchedule> {
        match self {
            ScheduleSpec::States(s) => IncrementalSchedule::even(num_classes, *s),
            ScheduleSpec::Groups(g) => IncrementalSchedule::new(g.clone(), num_classes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimsPreset {
    Standard,
    Desk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimsSpec {
    Preset(DimsPreset),
    Explicit(ModelDims),
}

impl DimsSpec {
    pub fn resolve(&self) -> ModelDims {
        match self {
            DimsSpec::Preset(DimsPreset::Standard) => ModelDims::standard(),
            DimsSpec::Preset(DimsPreset::Desk) => ModelDims::desk(),
            DimsSpec::Explicit(d) => d.clone(),
        }
    }
}

/// Architecture and preprocessing settings outside the core hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelOptions {
    pub dims: DimsSpec,
    /// Divide embeddings by the norm of the centered vector.
    pub centered_norm: bool,
    pub augmentation: Augmentation,
    pub fps_start: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            dims: DimsSpec::Preset(DimsPreset::Standard),
            centered_norm: false,
            augmentation: Augmentation::default(),
            fps_start: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub tau: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub m: usize,
    #[serde(rename = "U")]
    pub u: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub exemplar_budget: usize,
    pub seed: u64,
    pub ablations: Ablations,
    pub schedule: ScheduleSpec,
    /// Path of the dataset manifest.
    pub dataset: String,
    #[serde(default)]
    pub model: ModelOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.01,
            lambda2: 0.1,
            gamma: 0.7,
            tau: 64.0,
            l: 64,
            m: 32,
            u: 1024,
            batch_size: 64,
            lr: 0.001,
            weight_decay: 0.0005,
            epochs: 30,
            exemplar_budget: 800,
            seed: 0,
            ablations: Ablations::FULL,
            schedule: ScheduleSpec::States(4),
            dataset: "manifest.json".into(),
            model: ModelOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: TrainConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad(format!(
                "lambda1 and lambda2 must be ≥ 0, got {} and {}",
                self.lambda1, self.lambda2
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0,1), got {}", self.gamma));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.l == 0 || self.m == 0 || self.l > self.u || self.m > self.u {
            return bad(format!(
                "need 1 ≤ L, m ≤ U, got L={} m={} U={}",
                self.l, self.m, self.u
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive".into());
        }
        if !(self.lr > 0.0 && self.weight_decay >= 0.0) {
            return bad(format!(
                "invalid lr {} / weight_decay {}",
                self.lr, self.weight_decay
            ));
        }
        self.model.dims.resolve().validate()
    }

    /// Checks the exemplar budget against the schedule: with replay enabled
    /// every old class must receive at least one exemplar.
    pub fn validate_schedule(&self, schedule: &IncrementalSchedule) -> Result<()> {
        let max_old = schedule.k_old(schedule.num_states());
        if self.exemplar_budget > 0 && self.exemplar_budget < max_old {
            return Err(Error::Validation(format!(
                "exemplar budget {} below the {max_old} old classes of the last state",
                self.exemplar_budget
            )));
        }
        if self.exemplar_budget == 0 && self.ablations.sfc && schedule.num_states() > 1 {
            return Err(Error::Validation(
                "score rectification needs exemplars to measure old-class scores".into(),
            ));
        }
        Ok(())
    }

    pub fn switches(&self) -> Switches {
        Switches {
            cgr: self.ablations.cgr,
            cga: self.ablations.cga,
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// L_obj = L_clc + L_reg + λ1·L_cri + λ2·L_cst, reported for logging.
pub fn total_objective(clc: f64, reg: f64, cri: f64, cst: f64, config: &TrainConfig) -> f64 {
    clc + reg + config.lambda1 * cri + config.lambda2 * cst
}
