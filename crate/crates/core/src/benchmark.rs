//! The desk-scale synthetic benchmark: eight shape classes learned two at a
//! time, and the ablation variants compared on it.

use std::fmt;

use crate::data::SyntheticSpec;
use crate::model::ModelDims;
use crate::trainer::{Ablations, DimsSpec, ScheduleSpec, TrainConfig};

pub const DESK_SHAPES: [&str; 8] = [
    "sphere", "cube", "cylinder", "cone", "torus", "table", "chair", "capsule",
];

/// 100 train and 30 test clouds of 256 points per class.
pub fn desk_dataset_spec() -> SyntheticSpec {
    SyntheticSpec::from_names(&DESK_SHAPES, 100, 30, 256, 0.02, 7).expect("known shape names")
}

/// Full model on the desk benchmark: 4 states of 2 classes, L=16, m=8,
/// U=256, |M|=40, 30 epochs per state.
pub fn desk_config(seed: u64) -> TrainConfig {
    let mut config = TrainConfig {
        l: 16,
        m: 8,
        u: 256,
        batch_size: 16,
        epochs: 30,
        exemplar_budget: 40,
        seed,
        schedule: ScheduleSpec::States(4),
        dataset: "manifest.json".into(),
        ..TrainConfig::default()
    };
    config.model.dims = DimsSpec::Explicit(ModelDims::desk());
    config
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoWfc,
    NoCga,
    NoCgr,
    /// Same network, no exemplars and no compensation.
    Naive,
}

impl Variant {
    /// Variants that need their own training run; the no-SFC variant reuses
    /// the full model's checkpoints.
    pub const TRAINED: [Variant; 5] = [
        Variant::Full,
        Variant::NoWfc,
        Variant::NoCga,
        Variant::NoCgr,
        Variant::Naive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoWfc => "w/oWFC",
            Variant::NoCga => "w/oCGA",
            Variant::NoCgr => "w/oCGR",
            Variant::Naive => "naive",
        }
    }

    pub fn apply(self, config: &mut TrainConfig) {
        match self {
            Variant::Full => config.ablations = Ablations::FULL,
            Variant::NoWfc => config.ablations.wfc = false,
            Variant::NoCga => config.ablations.cga = false,
            Variant::NoCgr => config.ablations.cgr = false,
            Variant::Naive => {
                config.ablations.wfc = false;
                config.ablations.sfc = false;
                config.exemplar_budget = 0;
            }
        }
    }

    pub fn config(self, seed: u64) -> TrainConfig {
        let mut c = desk_config(seed);
        self.apply(&mut c);
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
