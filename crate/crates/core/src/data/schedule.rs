use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered partition of dataset classes into incremental states.
///
/// States are numbered from 1. Model output columns follow the order in
/// which classes are introduced, so [`IncrementalSchedule::column_of`] maps a
/// dataset class to its classifier column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct IncrementalSchedule {
    groups: Vec<Vec<usize>>,
    columns: Vec<usize>,
}

impl TryFrom<Vec<Vec<usize>>> for IncrementalSchedule {
    type Error = Error;
    fn try_from(groups: Vec<Vec<usize>>) -> Result<Self> {
        let n = groups.iter().map(Vec::len).sum();
        Self::new(groups, n)
    }
}

impl From<IncrementalSchedule> for Vec<Vec<usize>> {
    fn from(s: IncrementalSchedule) -> Self {
        s.groups
    }
}

impl IncrementalSchedule {
    pub fn new(groups: Vec<Vec<usize>>, num_classes: usize) -> Result<Self> {
        if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
            return Err(Error::Schedule(
                "every state needs at least one class".into(),
            ));
        }
        let mut columns = vec![usize::MAX; num_classes];
        let mut next = 0;
        for g in &groups {
            for &c in g {
                if c >= num_classes {
                    return Err(Error::Schedule(format!(
                        "class {c} not in dataset of {num_classes}"
                    )));
                }
                if columns[c] != usize::MAX {
                    return Err(Error::Schedule(format!("class {c} scheduled twice")));
                }
                columns[c] = next;
                next += 1;
            }
        }
        if next != num_classes {
            return Err(Error::Schedule(format!(
                "schedule covers {next} of {num_classes} classes"
            )));
        }
        Ok(Self { groups, columns })
    }

    /// Contiguous split of `0..num_classes` into `states` near-equal groups,
    /// larger groups first.
    pub fn even(num_classes: usize, states: usize) -> Result<Self> {
        if states == 0 || states > num_classes {
            return Err(Error::Schedule(format!(
                "cannot split {num_classes} classes into {states} states"
            )));
        }
        let base = num_classes / states;
        let extra = num_classes % states;
        let mut groups = Vec::with_capacity(states);
        let mut next = 0;
        for s in 0..states {
            let size = base + usize::from(s < extra);
            groups.push((next..next + size).collect());
            next += size;
        }
        Self::new(groups, num_classes)
    }

    pub fn num_states(&self) -> usize {
        self.groups.len()
    }

    pub fn num_classes(&self) -> usize {
        self.columns.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Classes introduced at `state` (1-based).
    pub fn new_classes(&self, state: usize) -> &[usize] {
        &self.groups[state - 1]
    }

    /// K_s: number of classes introduced at `state`.
    pub fn k_new(&self, state: usize) -> usize {
        self.groups[state - 1].len()
    }

    /// K_p: number of classes learned before `state`.
    pub fn k_old(&self, state: usize) -> usize {
        self.groups[..state - 1].iter().map(Vec::len).sum()
    }

    pub fn k_total(&self, state: usize) -> usize {
        self.k_old(state) + self.k_new(state)
    }

    /// Every class seen up to and including `state`, in introduction order.
    pub fn seen_classes(&self, state: usize) -> Vec<usize> {
        self.groups[..state].iter().flatten().copied().collect()
    }

    pub fn column_of(&self, class: usize) -> usize {
        self.columns[class]
    }

    /// Dataset class for a classifier column.
    pub fn class_of_column(&self, column: usize) -> usize {
        self.groups
            .iter()
            .flatten()
            .copied()
            .nth(column)
            .expect("column in range")
    }

    /// State (1-based) at which `class` is introduced.
    pub fn state_of(&self, class: usize) -> usize {
        self.groups
            .iter()
            .position(|g| g.contains(&class))
            .map(|s| s + 1)
            .expect("scheduled class")
    }
}
