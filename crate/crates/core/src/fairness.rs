//! Dual fairness compensation: norm rebalancing of the classifier's last
//! layer during training and score rectification at inference.
//!
//! Class indices here are classifier columns, which follow the order in
//! which classes were introduced.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{concatenate, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::argmax;
use crate::autograd::{Group, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, Linear};

/// Classifier C: rectified hidden layers and a last layer W of d_w×K whose
/// columns are the per-class weight vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub hidden: Vec<Linear>,
    pub last: Linear,
}

impl ClassifierHead {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        d_in: usize,
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Self {
        let g = Group::EncoderClassifier;
        let mut width = d_in;
        let layers = hidden
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let l = Linear::new(store, &format!("cls.hidden{i}"), g, width, w, rng);
                width = w;
                l
            })
            .collect();
        let last = Linear::new(store, "cls.last", g, width, classes, rng);
        Self {
            hidden: layers,
            last,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.last.fan_out
    }

    pub fn d_w(&self) -> usize {
        self.last.fan_in
    }

    pub fn forward(&self, tape: &mut Tape<'_>, f_g: Var) -> Var {
        let h = mlp_forward(tape, &self.hidden, f_g);
        self.last.forward(tape, h)
    }

    /// Appends `k_new` output columns initialized like a fresh layer.
    pub fn grow<R: Rng>(&mut self, store: &mut ParamStore, k_new: usize, rng: &mut R) {
        let bound = 1.0 / (self.d_w() as f64).sqrt();
        let w_new = Array2::from_shape_fn((self.d_w(), k_new), |_| rng.gen_range(-bound..bound));
        let b_new = Array2::from_shape_fn((1, k_new), |_| rng.gen_range(-bound..bound));
        let w = concatenate(
            Axis(1),
            &[store.value(self.last.weight).view(), w_new.view()],
        )
        .expect("rows agree");
        let b = concatenate(Axis(1), &[store.value(self.last.bias).view(), b_new.view()])
            .expect("rows agree");
        store.set_value(self.last.weight, w);
        store.set_value(self.last.bias, b);
        self.last.fan_out += k_new;
    }

    /// Applies weight fairness compensation to this head's last layer.
    pub fn compensate(&self, store: &mut ParamStore, k_old: usize, k_new: usize) -> Result<f64> {
        weight_fairness_compensation(store.value_mut(self.last.weight), k_old, k_new)
    }
}

/// Column norms of a d_w×K weight matrix.
pub fn column_norms(w: &Array2<f64>) -> Vec<f64> {
    w.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect()
}

/// W_new ← (mean(N_old)/mean(N_new))·W_new, where the first `k_old` columns
/// are old classes and the next `k_new` are new. Returns the scale applied.
pub fn weight_fairness_compensation(
    w: &mut Array2<f64>,
    k_old: usize,
    k_new: usize,
) -> Result<f64> {
    if k_old + k_new != w.ncols() {
        return Err(Error::Shape(format!(
            "{k_old} old + {k_new} new classes for {} columns",
            w.ncols()
        )));
    }
    if k_old == 0 || k_new == 0 {
        return Ok(1.0);
    }
    let norms = column_norms(w);
    if norms[k_old..].iter().any(|&n| n == 0.0) {
        return Err(Error::ZeroNorm("new-class weight column"));
    }
    let mean_old = norms[..k_old].iter().sum::<f64>() / k_old as f64;
    let mean_new = norms[k_old..].iter().sum::<f64>() / k_new as f64;
    let scale = mean_old / mean_new;
    w.slice_mut(ndarray::s![.., k_old..])
        .mapv_inplace(|v| v * scale);
    Ok(scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    /// ψ_{s_i}(k): mean top score of samples predicted as k when k was new.
    pub psi_init: f64,
    pub initial_state: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateScore {
    /// ψ(s): mean top score of samples predicted as any class new at s.
    pub psi_new_mean: f64,
    /// ψ_s(k) for classes learned before s.
    #[serde(default)]
    pub psi_current: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub per_class: BTreeMap<usize, ClassScore>,
    pub per_state: BTreeMap<usize, StateScore>,
}

/// Mean of the top probability over samples predicted as `class`; when none
/// is, the mean probability assigned to `class` over samples labeled `class`.
fn mean_score_for(predictions: &[Vec<f64>], labels: &[usize], class: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in predictions {
        let k = argmax(p);
        if k == class {
            sum += p[k];
            n += 1;
        }
    }
    if n > 0 {
        return Ok(sum / n as f64);
    }
    for (p, &y) in predictions.iter().zip(labels) {
        if y == class {
            sum += p[class];
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::MissingStatistic(format!(
            "no samples for class {class}"
        )));
    }
    Ok(sum / n as f64)
}

fn check_aligned(predictions: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Records ψ_{s_i}(k) for every class new at `state` and ψ(state), from the
/// softmax outputs over the state's training data.
pub fn record_score_statistics(
    stats: &mut ScoreStats,
    state: usize,
    predictions: &[Vec<f64>],
    labels: &[usize],
    new_classes: &[usize],
) -> Result<()> {
    check_aligned(predictions, labels)?;
    let new: BTreeSet<usize> = new_classes.iter().copied().collect();
    let mut per_class = Vec::with_capacity(new.len());
    for &k in &new {
        if stats.per_class.contains_key(&k) {
            return Err(Error::Validation(format!(
                "initial score of class {k} already recorded"
            )));
        }
        per_class.push((k, mean_score_for(predictions, labels, k)?));
    }
    let tops: Vec<f64> = predictions
        .iter()
        .filter_map(|p| {
            let k = argmax(p);
            new.contains(&k).then_some(p[k])
        })
        .collect();
    let psi_new = if tops.is_empty() {
        per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64
    } else {
        tops.iter().sum::<f64>() / tops.len() as f64
    };
    for (k, psi) in per_class {
        stats.per_class.insert(
            k,
            ClassScore {
                psi_init: psi,
                initial_state: state,
            },
        );
    }
    stats.per_state.entry(state).or_default().psi_new_mean = psi_new;
    Ok(())
}

/// Records ψ_state(k) for classes learned before `state`, from softmax
/// outputs of the current model on samples of those classes.
pub fn record_current_scores(
    stats: &mut ScoreStats,
    state: usize,
    predictions: &[Vec<f64>],
    labels: &[usize],
    old_classes: &[usize],
) -> Result<()> {
    check_aligned(predictions, labels)?;
    let mut current = BTreeMap::new();
    for &k in old_classes {
        current.insert(k, mean_score_for(predictions, labels, k)?);
    }
    stats.per_state.entry(state).or_default().psi_current = current;
    Ok(())
}

/// Rectifies `probs` at `state` when its argmax is one of the state's new
/// classes: each class k first learned at an earlier state is scaled by
/// (ψ_{s_i}(k)/ψ_s(k))·(ψ(s)/ψ(s_i)). Scores are not renormalized.
pub fn score_fairness_compensation(
    probs: &[f64],
    stats: &ScoreStats,
    state: usize,
    current_new_classes: &[usize],
) -> Result<Vec<f64>> {
    let mut out = probs.to_vec();
    if !current_new_classes.contains(&argmax(probs)) {
        return Ok(out);
    }
    let here = stats
        .per_state
        .get(&state)
        .ok_or_else(|| Error::MissingStatistic(format!("state {state}")))?;
    for (k, p) in out.iter_mut().enumerate() {
        if current_new_classes.contains(&k) {
            continue;
        }
        let class = stats
            .per_class
            .get(&k)
            .ok_or_else(|| Error::MissingStatistic(format!("initial score of class {k}")))?;
        if class.initial_state >= state {
            continue;
        }
        let origin = stats
            .per_state
            .get(&class.initial_state)
            .ok_or_else(|| Error::MissingStatistic(format!("state {}", class.initial_state)))?;
        let current = *here.psi_current.get(&k).ok_or_else(|| {
            Error::MissingStatistic(format!("current score of class {k} at state {state}"))
        })?;
        if current == 0.0 || origin.psi_new_mean == 0.0 {
            return Err(Error::ZeroNorm("score statistic"));
        }
        *p *= (class.psi_init / current) * (here.psi_new_mean / origin.psi_new_mean);
    }
    Ok(out)
}
