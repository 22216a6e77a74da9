use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization group a parameter belongs to.
///
/// The trainer steps each group with its own objective, so a parameter must
/// belong to exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Group {
    /// Encoder, reasoning layers, embedding heads and classifier.
    EncoderClassifier,
    /// Attention layers.
    Attention,
    /// Critic network.
    Critic,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::EncoderClassifier, Group::Attention, Group::Critic];

    pub fn mask(self) -> GroupMask {
        match self {
            Group::EncoderClassifier => GroupMask::ENCODER_CLASSIFIER,
            Group::Attention => GroupMask::ATTENTION,
            Group::Critic => GroupMask::CRITIC,
        }
    }
}

/// Bit set over [`Group`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct GroupMask(u8);

impl GroupMask {
    pub const NONE: GroupMask = GroupMask(0);
    pub const ENCODER_CLASSIFIER: GroupMask = GroupMask(1);
    pub const ATTENTION: GroupMask = GroupMask(2);
    pub const CRITIC: GroupMask = GroupMask(4);
    pub const ALL: GroupMask = GroupMask(7);

    pub fn union(self, other: GroupMask) -> GroupMask {
        GroupMask(self.0 | other.0)
    }

    pub fn intersects(self, other: GroupMask) -> bool {
        self.0 & other.0 != 0
    }

    pub fn contains(self, group: Group) -> bool {
        self.intersects(group.mask())
    }
}

impl std::ops::BitOr for GroupMask {
    type Output = GroupMask;
    fn bitor(self, rhs: GroupMask) -> GroupMask {
        self.union(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub value: Array2<f64>,
}

/// Flat registry of every trainable tensor in a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Array2<f64>) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.into(),
            group,
            value,
        });
        id
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization, the torch
    /// default for linear and convolution layers.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        group: Group,
        shape: (usize, usize),
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let value = Array2::from_shape_fn(shape, |_| rng.gen_range(-bound..bound));
        self.add(name, group, value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Array2<f64>) {
        self.params[id.0].value = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in(&self, group: Group) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.group == group)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Exports every tensor as (name, group, rows, cols, row-major data).
    pub fn to_records(&self) -> Vec<ParamRecord> {
        self.params
            .iter()
            .map(|p| ParamRecord {
                name: p.name.clone(),
                group: p.group,
                rows: p.value.nrows(),
                cols: p.value.ncols(),
                data: p.value.iter().copied().collect(),
            })
            .collect()
    }

    /// Rebuilds a store in record order, so ids match the exporting store.
    pub fn from_records(records: &[ParamRecord]) -> Result<Self> {
        let mut store = Self::new();
        for r in records {
            let value = Array2::from_shape_vec((r.rows, r.cols), r.data.clone())
                .map_err(|e| Error::Checkpoint(format!("corrupt tensor {}: {e}", r.name)))?;
            store.add(r.name.clone(), r.group, value);
        }
        Ok(store)
    }

    /// Overwrites values from records; names, groups and shapes must match.
    pub fn load_records(&mut self, records: &[ParamRecord]) -> Result<()> {
        if records.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                self.params.len(),
                records.len()
            )));
        }
        for (p, r) in self.params.iter_mut().zip(records) {
            if p.name != r.name || p.group != r.group {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: expected {} found {}",
                    p.name, r.name
                )));
            }
            if r.rows * r.cols != r.data.len() {
                return Err(Error::Checkpoint(format!("corrupt tensor {}", r.name)));
            }
            p.value = Array2::from_shape_vec((r.rows, r.cols), r.data.clone())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub group: Group,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Per-parameter gradient accumulator.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    pub fn with_len(len: usize) -> Self {
        Self {
            grads: vec![None; len],
        }
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Array2<f64>) {
        match &mut self.grads[id.0] {
            Some(acc) => *acc += g,
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|v| v * factor);
        }
    }

    /// Adds `other` into `self`, restricted to parameters in `mask`.
    pub fn merge_masked(&mut self, other: &Gradients, store: &ParamStore, mask: GroupMask) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                if mask.contains(store.get(ParamId(i)).group) {
                    self.accumulate(ParamId(i), g);
                }
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Array2<f64>)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(|g| g.is_none())
    }
}
