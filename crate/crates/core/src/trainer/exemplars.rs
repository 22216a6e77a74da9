use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Greedy herding over the rows of `features`: each step picks the row that
/// brings the running mean of the selection closest to the full mean.
/// Returns row indices in selection order; ties go to the smaller index.
pub fn select_exemplars(features: &[Vec<f64>], quota: usize) -> Result<Vec<usize>> {
    if quota > features.len() {
        return Err(Error::OutOfRange {
            what: "exemplar quota",
            value: quota,
            min: 0,
            max: features.len(),
        });
    }
    if quota == 0 {
        return Ok(Vec::new());
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::Shape("herding features of unequal width".into()));
    }
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= features.len() as f64;
    }
    let mut taken = vec![false; features.len()];
    let mut sum = vec![0.0; d];
    let mut order = Vec::with_capacity(quota);
    for t in 1..=quota {
        let mut best: Option<(f64, usize)> = None;
        for (i, f) in features.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let dist: f64 = (0..d)
                .map(|j| {
                    let diff = mean[j] - (sum[j] + f[j]) / t as f64;
                    diff * diff
                })
                .sum();
            if best.map_or(true, |(b, _)| dist < b) {
                best = Some((dist, i));
            }
        }
        let (_, i) = best.expect("quota ≤ available samples");
        taken[i] = true;
        for (s, v) in sum.iter_mut().zip(&features[i]) {
            *s += v;
        }
        order.push(i);
    }
    Ok(order)
}

/// floor(budget / classes) per class with the remainder handed to the
/// lowest class positions.
pub fn exemplar_quotas(budget: usize, classes: usize) -> Vec<usize> {
    if classes == 0 {
        return Vec::new();
    }
    let base = budget / classes;
    let extra = budget % classes;
    (0..classes)
        .map(|i| base + usize::from(i < extra))
        .collect()
}

/// Exemplar sample ids per classifier column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExemplarStore {
    pub budget: usize,
    pub classes: BTreeMap<usize, Vec<String>>,
}

impl ExemplarStore {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            classes: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All ids, grouped by column in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = (usize, &str)> {
        self.classes
            .iter()
            .flat_map(|(&k, ids)| ids.iter().map(move |id| (k, id.as_str())))
    }

    /// Current quota of every stored-or-new column, given `total` columns.
    pub fn quotas(&self, total: usize) -> BTreeMap<usize, usize> {
        exemplar_quotas(self.budget, total)
            .into_iter()
            .enumerate()
            .collect()
    }

    /// Truncates existing lists to their quota and inserts herded lists for
    /// new columns. `herd` receives the column and its quota.
    pub fn rebalance<F>(&mut self, total: usize, new_columns: &[usize], mut herd: F) -> Result<()>
    where
        F: FnMut(usize, usize) -> Result<Vec<String>>,
    {
        let quotas = self.quotas(total);
        for (k, ids) in self.classes.iter_mut() {
            let q = *quotas.get(k).ok_or_else(|| {
                Error::Validation(format!("exemplar column {k} beyond {total} classes"))
            })?;
            ids.truncate(q);
        }
        for &k in new_columns {
            if self.classes.contains_key(&k) {
                return Err(Error::Validation(format!(
                    "column {k} already holds exemplars"
                )));
            }
            let ids = herd(k, quotas[&k])?;
            self.classes.insert(k, ids);
        }
        self.check()
    }

    /// Budget and uniqueness invariants.
    pub fn check(&self) -> Result<()> {
        if self.len() > self.budget {
            return Err(Error::Validation(format!(
                "{} exemplars exceed the budget {}",
                self.len(),
                self.budget
            )));
        }
        let mut seen = BTreeSet::new();
        for (_, id) in self.ids() {
            if !seen.insert(id) {
                return Err(Error::Validation(format!("duplicate exemplar {id}")));
            }
        }
        Ok(())
    }
}
