use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::{ParamRecord, ParamStore};
use crate::data::IncrementalSchedule;
use crate::error::{Error, Result};
use crate::fairness::ScoreStats;
use crate::model::InorNet;
use crate::reasoning::PrototypeBank;

use super::config::TrainConfig;
use super::exemplars::ExemplarStore;
use super::train::Learner;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training or score a split after a state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub state: usize,
    pub config: TrainConfig,
    pub schedule: IncrementalSchedule,
    pub net: InorNet,
    pub params: Vec<ParamRecord>,
    pub prototypes: PrototypeBank,
    pub score_stats: ScoreStats,
    pub exemplars: ExemplarStore,
}

impl Checkpoint {
    pub fn capture(learner: &Learner) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config_hash: learner.config.hash(),
            state: learner.state,
            config: learner.config.clone(),
            schedule: learner.schedule.clone(),
            net: learner.net.clone(),
            params: learner.net.store.to_records(),
            prototypes: learner.prototypes.clone(),
            score_stats: learner.scores.clone(),
            exemplars: learner.exemplars.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
        ckpt.check()?;
        Ok(ckpt)
    }

    fn check(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.config.hash() != self.config_hash {
            return Err(Error::Checkpoint(
                "config hash does not match the stored config".into(),
            ));
        }
        if self.state > self.schedule.num_states() {
            return Err(Error::Checkpoint(format!(
                "state {} beyond the schedule",
                self.state
            )));
        }
        Ok(())
    }

    /// Restores the learner; fails on any mismatch between the stored
    /// architecture and parameter tensors.
    pub fn restore(self) -> Result<Learner> {
        self.check()?;
        let mut net = self.net;
        net.store = ParamStore::from_records(&self.params)?;
        let expected = if self.state == 0 {
            self.schedule.k_new(1)
        } else {
            self.schedule.k_total(self.state)
        };
        let last = net.store.value(net.classifier.last.weight);
        if net.num_classes() != expected || last.ncols() != expected {
            return Err(Error::Checkpoint(format!(
                "classifier has {} columns, state {} expects {expected}",
                last.ncols(),
                self.state
            )));
        }
        Ok(Learner {
            config: self.config,
            schedule: self.schedule,
            net,
            prototypes: self.prototypes,
            scores: self.score_stats,
            exemplars: self.exemplars,
            state: self.state,
        })
    }
}
