use std::collections::HashMap;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{
    amelioration_reward, argmax, classification_reward, critic_gain, critic_loss, regression_loss,
};
use crate::autograd::{softmax, Adam, Gradients, Group, Tape};
use crate::data::{augment, mix_seed, DatasetManifest, IncrementalSchedule, PointCloud, Split};
use crate::error::{Error, Result};
use crate::fairness::{
    record_current_scores, record_score_statistics, score_fairness_compensation, ScoreStats,
};
use crate::metrics::{MetricsRecord, StateMetrics};
use crate::model::{InorNet, SampleForward, StructureConfig};
use crate::reasoning::{batch_prototypes, consistency_loss, ema_update_prototypes, PrototypeBank};

use super::checkpoint::Checkpoint;
use super::config::{total_objective, TrainConfig};
use super::exemplars::ExemplarStore;

const TAG_INIT: u64 = 0x11;
const TAG_GROW: u64 = 0x22;
const TAG_ORDER: u64 = 0x33;
const TAG_AUGMENT: u64 = 0x44;

/// Seed of the initial network weights.
pub fn init_seed(seed: u64) -> u64 {
    mix_seed(&[seed, TAG_INIT])
}

/// Seed of the classifier columns added at `state`.
pub fn growth_seed(seed: u64, state: usize) -> u64 {
    mix_seed(&[seed, TAG_GROW, state as u64])
}

/// Seeded permutation of `0..n` for one epoch.
pub fn epoch_order(n: usize, seed: u64, state: usize, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(mix_seed(&[seed, TAG_ORDER, state as u64, epoch as u64]));
    order.shuffle(&mut rng);
    order
}

/// Augmentation seed of one training sample (by its index in the train
/// split) in one epoch.
pub fn sample_seed(seed: u64, state: usize, epoch: usize, index: usize) -> u64 {
    mix_seed(&[seed, TAG_AUGMENT, state as u64, epoch as u64, index as u64])
}

/// Mean cross entropy of a batch of logit rows; softmax is applied inside.
pub fn classification_loss(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (z, &y) in logits.iter().zip(labels) {
        if y >= z.len() {
            return Err(Error::OutOfRange {
                what: "label",
                value: y,
                min: 0,
                max: z.len().saturating_sub(1),
            });
        }
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - z[y];
    }
    Ok(total / logits.len() as f64)
}

/// Train and test clouds of a dataset, resampled and normalized.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub num_classes: usize,
    pub train: Vec<PointCloud>,
    pub test: Vec<PointCloud>,
}

impl Dataset {
    pub fn load(manifest: &DatasetManifest, points: usize) -> Result<Self> {
        manifest.validate()?;
        let load = |split| -> Result<Vec<PointCloud>> {
            let entries: Vec<_> = manifest.split(split).collect();
            entries
                .par_iter()
                .map(|e| manifest.load_sample(e, points))
                .collect()
        };
        Ok(Self {
            num_classes: manifest.num_classes(),
            train: load(Split::Train)?,
            test: load(Split::Test)?,
        })
    }

    pub fn from_clouds(
        num_classes: usize,
        train: Vec<PointCloud>,
        test: Vec<PointCloud>,
    ) -> Result<Self> {
        for pc in train.iter().chain(&test) {
            match pc.label {
                Some(k) if k < num_classes => {}
                _ => {
                    return Err(Error::Validation(format!(
                        "cloud `{}` lacks a valid label",
                        pc.id
                    )))
                }
            }
        }
        Ok(Self {
            num_classes,
            train,
            test,
        })
    }

    fn label(pc: &PointCloud) -> usize {
        pc.label.expect("dataset clouds are labeled")
    }

    /// Indices into `clouds` whose class is in `classes`.
    pub fn indices_of(clouds: &[PointCloud], classes: &[usize]) -> Vec<usize> {
        (0..clouds.len())
            .filter(|&i| classes.contains(&Self::label(&clouds[i])))
            .collect()
    }
}

/// Adam optimizers of the three parameter groups, fresh for every state.
pub struct Optimizers {
    pub encoder_classifier: Adam,
    pub attention: Adam,
    pub critic: Adam,
}

impl Optimizers {
    pub fn new(net: &InorNet, config: &TrainConfig) -> Self {
        let make = |g| {
            Adam::new(
                &net.store,
                net.store.ids_in(g),
                config.lr,
                config.weight_decay,
            )
        };
        Self {
            encoder_classifier: make(Group::EncoderClassifier),
            attention: make(Group::Attention),
            critic: make(Group::Critic),
        }
    }
}

/// Loss sums over the samples of one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSums {
    pub samples: usize,
    pub clc: f64,
    pub cst: f64,
    pub cri: f64,
    pub reg: f64,
}

impl LossSums {
    fn add(&mut self, o: &LossSums) {
        self.samples += o.samples;
        self.clc += o.clc;
        self.cst += o.cst;
        self.cri += o.cri;
        self.reg += o.reg;
    }
}

/// Mean losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub state: usize,
    pub epoch: usize,
    pub clc: f64,
    pub cst: f64,
    pub cri: f64,
    pub reg: f64,
    pub objective: f64,
}

/// Position of one batch in training, for diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct BatchPosition {
    pub state: usize,
    pub epoch: usize,
    pub batch: usize,
}

/// Prediction of one cloud at the learner's current state.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub column: usize,
    pub class: usize,
    /// Class scores per column, rectified when score compensation applies.
    pub scores: Vec<f64>,
}

struct SampleLosses {
    sums: LossSums,
    grads: Gradients,
}

fn add_grads(acc: &mut Gradients, other: &Gradients) {
    for (id, g) in other.iter() {
        acc.accumulate(id, g);
    }
}

/// Model, prototypes, statistics and exemplars carried across states.
#[derive(Debug, Clone)]
pub struct Learner {
    pub config: TrainConfig,
    pub schedule: IncrementalSchedule,
    pub net: InorNet,
    pub prototypes: PrototypeBank,
    pub scores: ScoreStats,
    pub exemplars: ExemplarStore,
    /// Last completed state; 0 before training.
    pub state: usize,
}

impl Learner {
    pub fn new(config: TrainConfig, schedule: IncrementalSchedule) -> Result<Self> {
        config.validate()?;
        config.validate_schedule(&schedule)?;
        let net = InorNet::new(
            config.model.dims.resolve(),
            StructureConfig {
                l: config.l,
                m: config.m,
                fps_start: config.model.fps_start,
            },
            config.tau,
            config.model.centered_norm,
            schedule.k_new(1),
            init_seed(config.seed),
        )?;
        Ok(Self {
            prototypes: PrototypeBank::new(config.gamma)?,
            exemplars: ExemplarStore::new(config.exemplar_budget),
            scores: ScoreStats::default(),
            state: 0,
            net,
            schedule,
            config,
        })
    }

    fn new_columns(&self, state: usize) -> Vec<usize> {
        let start = self.schedule.k_old(state);
        (start..start + self.schedule.k_new(state)).collect()
    }

    /// Widens the classifier for `state` (no-op at the first state).
    pub fn begin_state(&mut self, state: usize) -> Result<()> {
        if state == 0 || state > self.schedule.num_states() {
            return Err(Error::Schedule(format!(
                "state {state} outside 1..={}",
                self.schedule.num_states()
            )));
        }
        if state != self.state + 1 {
            return Err(Error::Checkpoint(format!(
                "state {state} follows state {}",
                self.state
            )));
        }
        let want = self.schedule.k_old(state);
        if self.net.num_classes() != want.max(self.schedule.k_new(1)) {
            return Err(Error::Checkpoint(format!(
                "classifier has {} columns, state {state} expects {want} old classes",
                self.net.num_classes()
            )));
        }
        if state >= 2 {
            let mut rng = ChaCha8Rng::seed_from_u64(growth_seed(self.config.seed, state));
            self.net
                .classifier
                .grow(&mut self.net.store, self.schedule.k_new(state), &mut rng);
        }
        Ok(())
    }

    /// One optimization step on already augmented clouds labeled by column.
    /// Forward once, refresh prototypes, then take the three group steps.
    pub fn train_batch(
        &mut self,
        clouds: &[&PointCloud],
        columns: &[usize],
        opt: &mut Optimizers,
        pos: BatchPosition,
    ) -> Result<LossSums> {
        if clouds.len() != columns.len() || clouds.is_empty() {
            return Err(Error::Shape(format!(
                "{} clouds for {} labels",
                clouds.len(),
                columns.len()
            )));
        }
        let switches = self.config.switches();
        let (l1, l2) = (self.config.lambda1, self.config.lambda2);
        let inv_b = 1.0 / clouds.len() as f64;
        let net = &self.net;

        let forwards: Vec<(Tape<'_>, SampleForward)> = clouds
            .par_iter()
            .map(|pc| {
                let mut tape = Tape::new(&net.store);
                let out = net.forward(&mut tape, &pc.points, switches)?;
                Ok((tape, out))
            })
            .collect::<Result<_>>()?;

        let protos = if switches.cgr {
            let feats: Vec<Vec<f64>> = forwards
                .iter()
                .map(|(t, f)| t.value(f.f_g).iter().copied().collect())
                .collect();
            let estimates = batch_prototypes(&feats, columns);
            ema_update_prototypes(&mut self.prototypes, &estimates, pos.state);
            Some(self.prototypes.candidates())
        } else {
            None
        };

        let per_sample: Vec<SampleLosses> = forwards
            .into_par_iter()
            .zip(columns.par_iter())
            .map(|((mut tape, out), &y)| -> Result<SampleLosses> {
                let tape = &mut tape;
                let mut sums = LossSums {
                    samples: 1,
                    ..LossSums::default()
                };
                let clc = tape.cross_entropy(out.logits, y);
                sums.clc = tape.scalar(clc);
                let mut main = clc;
                if let Some((ids, protos)) = &protos {
                    let target = ids
                        .binary_search(&y)
                        .map_err(|_| Error::UninitializedPrototype(y))?;
                    let cst = consistency_loss(tape, out.f_m, protos, target, &net.embed)?;
                    sums.cst = tape.scalar(cst);
                    let weighted = tape.scale(cst, l2);
                    main = tape.add(main, weighted);
                }
                let scaled = tape.scale(main, inv_b);
                let mut grads = tape.backward(scaled, Group::EncoderClassifier.mask());

                if let Some(a_m) = out.a_m {
                    let gain = critic_gain(tape, out.f_p, a_m, &net.critic)?;
                    let cri = critic_loss(tape, &[gain])?;
                    sums.cri = tape.scalar(cri);
                    let weighted = tape.scale(cri, l1);
                    let att = tape.add(main, weighted);
                    let att = tape.scale(att, inv_b);
                    add_grads(&mut grads, &tape.backward(att, Group::Attention.mask()));

                    let logits: Vec<f64> = tape.value(out.logits).iter().copied().collect();
                    let plain = net.classifier.forward(tape, out.f_g_plain);
                    let with = softmax(&logits);
                    let without = softmax(tape.value(plain).as_slice().expect("contiguous"));
                    let reward = classification_reward(&logits, y)
                        + amelioration_reward(with[y], without[y]);
                    let f_p = tape.detach(out.f_p);
                    let a_m = tape.detach(a_m);
                    let detached = critic_gain(tape, f_p, a_m, &net.critic)?;
                    let reg = regression_loss(tape, &[detached], &[reward])?;
                    sums.reg = tape.scalar(reg);
                    let reg = tape.scale(reg, inv_b);
                    add_grads(&mut grads, &tape.backward(reg, Group::Critic.mask()));
                }
                Ok(SampleLosses { sums, grads })
            })
            .collect::<Result<_>>()?;

        let mut sums = LossSums::default();
        let mut grads = Gradients::zeros_like(&self.net.store);
        for s in &per_sample {
            sums.add(&s.sums);
            add_grads(&mut grads, &s.grads);
        }
        for (name, v) in [
            ("clc", sums.clc),
            ("cst", sums.cst),
            ("cri", sums.cri),
            ("reg", sums.reg),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss {
                    name,
                    state: pos.state,
                    epoch: pos.epoch,
                    batch: pos.batch,
                });
            }
        }
        let store = &mut self.net.store;
        opt.encoder_classifier.step(store, &grads);
        if switches.cga {
            opt.attention.step(store, &grads);
            opt.critic.step(store, &grads);
        }
        Ok(sums)
    }

    /// Train-split indices used at `state`: the new classes' samples
    /// followed by the stored exemplars.
    pub fn training_pool(&self, data: &Dataset, state: usize) -> Result<Vec<usize>> {
        let mut pool = Dataset::indices_of(&data.train, self.schedule.new_classes(state));
        let by_id: HashMap<&str, usize> = data
            .train
            .iter()
            .enumerate()
            .map(|(i, pc)| (pc.id.as_str(), i))
            .collect();
        for (_, id) in self.exemplars.ids() {
            let i = by_id.get(id).ok_or_else(|| {
                Error::Checkpoint(format!("exemplar `{id}` missing from the train split"))
            })?;
            pool.push(*i);
        }
        Ok(pool)
    }

    fn compensate(&mut self, state: usize) -> Result<()> {
        if self.config.ablations.wfc && state >= 2 {
            let (k_old, k_new) = (self.schedule.k_old(state), self.schedule.k_new(state));
            self.net
                .classifier
                .compensate(&mut self.net.store, k_old, k_new)?;
        }
        Ok(())
    }

    /// One pass over `pool` in the epoch's seeded order.
    pub fn train_epoch(
        &mut self,
        data: &Dataset,
        pool: &[usize],
        opt: &mut Optimizers,
        state: usize,
        epoch: usize,
    ) -> Result<EpochLog> {
        let order = epoch_order(pool.len(), self.config.seed, state, epoch);
        let aug = self.config.model.augmentation;
        let mut sums = LossSums::default();
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let idx: Vec<usize> = chunk.iter().map(|&p| pool[p]).collect();
            let clouds: Vec<PointCloud> = idx
                .par_iter()
                .map(|&i| {
                    augment(
                        &data.train[i],
                        sample_seed(self.config.seed, state, epoch, i),
                        &aug,
                    )
                })
                .collect();
            let refs: Vec<&PointCloud> = clouds.iter().collect();
            let columns: Vec<usize> = clouds
                .iter()
                .map(|pc| self.schedule.column_of(Dataset::label(pc)))
                .collect();
            let pos = BatchPosition {
                state,
                epoch,
                batch: b,
            };
            sums.add(&self.train_batch(&refs, &columns, opt, pos)?);
        }
        self.compensate(state)?;
        let n = sums.samples.max(1) as f64;
        let (clc, cst, cri, reg) = (sums.clc / n, sums.cst / n, sums.cri / n, sums.reg / n);
        Ok(EpochLog {
            state,
            epoch,
            clc,
            cst,
            cri,
            reg,
            objective: total_objective(clc, reg, cri, cst, &self.config),
        })
    }

    /// Softmax outputs of the current model, in evaluation mode.
    pub fn predict_probs(&self, clouds: &[&PointCloud]) -> Result<Vec<Vec<f64>>> {
        let switches = self.config.switches();
        clouds
            .par_iter()
            .map(|pc| self.net.predict(&pc.points, switches).map(|p| p.probs))
            .collect()
    }

    fn global_features(&self, clouds: &[&PointCloud]) -> Result<Vec<Vec<f64>>> {
        let switches = self.config.switches();
        clouds
            .par_iter()
            .map(|pc| self.net.predict(&pc.points, switches).map(|p| p.f_g))
            .collect()
    }

    /// Trains the next state end to end and returns its epoch logs.
    pub fn run_state(&mut self, data: &Dataset) -> Result<Vec<EpochLog>> {
        let state = self.state + 1;
        if state > self.schedule.num_states() {
            return Err(Error::Schedule(format!(
                "schedule exhausted after {} states",
                self.schedule.num_states()
            )));
        }
        self.begin_state(state)?;
        let pool = self.training_pool(data, state)?;
        let fresh = Dataset::indices_of(&data.train, self.schedule.new_classes(state));
        if fresh.is_empty() {
            return Err(Error::Validation(format!(
                "no training samples for state {state}"
            )));
        }
        if state >= 2 && self.config.exemplar_budget > 0 {
            let per_old = self.config.exemplar_budget as f64 / self.schedule.k_old(state) as f64;
            let per_new = fresh.len() as f64 / self.schedule.k_new(state) as f64;
            if per_old > per_new / 2.0 {
                warn!("exemplars per old class ({per_old:.1}) not well below samples per new class ({per_new:.1})");
            }
        }

        let mut opt = Optimizers::new(&self.net, &self.config);
        let mut logs = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            let log = self.train_epoch(data, &pool, &mut opt, state, epoch)?;
            info!(
                "state {state} epoch {epoch}: clc {:.4} cst {:.4} cri {:.4} reg {:.4}",
                log.clc, log.cst, log.cri, log.reg
            );
            logs.push(log);
        }
        self.compensate(state)?;

        let new_columns = self.new_columns(state);
        let fresh_clouds: Vec<&PointCloud> = fresh.iter().map(|&i| &data.train[i]).collect();
        let fresh_columns: Vec<usize> = fresh_clouds
            .iter()
            .map(|pc| self.schedule.column_of(Dataset::label(pc)))
            .collect();
        let probs = self.predict_probs(&fresh_clouds)?;
        record_score_statistics(
            &mut self.scores,
            state,
            &probs,
            &fresh_columns,
            &new_columns,
        )?;

        if state >= 2 && !self.exemplars.is_empty() {
            let stored: Vec<usize> = pool[fresh.len()..].to_vec();
            let clouds: Vec<&PointCloud> = stored.iter().map(|&i| &data.train[i]).collect();
            let columns: Vec<usize> = clouds
                .iter()
                .map(|pc| self.schedule.column_of(Dataset::label(pc)))
                .collect();
            let probs = self.predict_probs(&clouds)?;
            let old: Vec<usize> = (0..self.schedule.k_old(state)).collect();
            record_current_scores(&mut self.scores, state, &probs, &columns, &old)?;
        }

        let total = self.schedule.k_total(state);
        let schedule = self.schedule.clone();
        let mut exemplars = std::mem::take(&mut self.exemplars);
        exemplars.rebalance(total, &new_columns, |column, quota| {
            let class = schedule.class_of_column(column);
            let mut members: Vec<&PointCloud> = data
                .train
                .iter()
                .filter(|pc| pc.label == Some(class))
                .collect();
            members.sort_by(|a, b| a.id.cmp(&b.id));
            let quota = quota.min(members.len());
            if quota == 0 {
                return Ok(Vec::new());
            }
            let feats = self.global_features(&members)?;
            let picked = super::exemplars::select_exemplars(&feats, quota)?;
            Ok(picked.into_iter().map(|i| members[i].id.clone()).collect())
        })?;
        self.exemplars = exemplars;
        self.state = state;
        Ok(logs)
    }

    /// Prediction for one cloud; scores are rectified at states ≥ 2 when
    /// `sfc` is set.
    pub fn infer(&self, pc: &PointCloud, sfc: bool) -> Result<Inference> {
        let probs = self.net.predict(&pc.points, self.config.switches())?.probs;
        self.rectify(probs, sfc)
    }

    fn rectify(&self, probs: Vec<f64>, sfc: bool) -> Result<Inference> {
        let scores = if sfc && self.state >= 2 {
            if self.scores.per_class.len() != probs.len() {
                return Err(Error::Checkpoint(format!(
                    "score statistics cover {} classes, model has {}",
                    self.scores.per_class.len(),
                    probs.len()
                )));
            }
            score_fairness_compensation(
                &probs,
                &self.scores,
                self.state,
                &self.new_columns(self.state),
            )?
        } else {
            probs
        };
        let column = argmax(&scores);
        Ok(Inference {
            column,
            class: self.schedule.class_of_column(column),
            scores,
        })
    }

    /// Scores the test samples of every class seen so far.
    pub fn evaluate(&self, data: &Dataset, sfc: bool) -> Result<StateMetrics> {
        self.evaluate_split(data, Split::Test, sfc)
    }

    pub fn evaluate_split(&self, data: &Dataset, split: Split, sfc: bool) -> Result<StateMetrics> {
        if self.state == 0 {
            return Err(Error::Checkpoint("no state has been trained".into()));
        }
        let pool = match split {
            Split::Train => &data.train,
            Split::Test => &data.test,
        };
        let seen = self.schedule.seen_classes(self.state);
        let idx = Dataset::indices_of(pool, &seen);
        let clouds: Vec<&PointCloud> = idx.iter().map(|&i| &pool[i]).collect();
        let probs = self.predict_probs(&clouds)?;
        let preds: Vec<usize> = probs
            .into_iter()
            .map(|p| self.rectify(p, sfc).map(|inf| inf.class))
            .collect::<Result<_>>()?;
        let labels: Vec<usize> = clouds.iter().map(|pc| Dataset::label(pc)).collect();
        StateMetrics::score(self.state, &preds, &labels, data.num_classes)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(self)
    }
}

/// Metrics and logs of a complete incremental run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    /// The same checkpoints scored without rectification, when the run
    /// uses it.
    pub metrics_without_sfc: Option<MetricsRecord>,
    pub epochs: Vec<EpochLog>,
    pub learner: Learner,
}

/// Trains every state in turn, evaluating after each and writing
/// `state_{s}.ckpt.json` into `out` when given.
pub fn run_incremental(
    config: &TrainConfig,
    data: &Dataset,
    run_id: &str,
    out: Option<&Path>,
) -> Result<RunOutput> {
    let schedule = config.schedule.build(data.num_classes)?;
    let mut learner = Learner::new(config.clone(), schedule.clone())?;
    let sfc = config.ablations.sfc;
    let groups = schedule.groups().to_vec();
    let mut metrics = MetricsRecord::new(run_id, config.seed, sfc, groups.clone());
    let mut plain = sfc.then(|| MetricsRecord::new(run_id, config.seed, false, groups));
    let mut epochs = Vec::new();
    for _ in 0..schedule.num_states() {
        epochs.extend(learner.run_state(data)?);
        let m = learner.evaluate(data, sfc)?;
        info!("state {}: top-1 {:.4}", m.s, m.top1);
        metrics.push(m);
        if let Some(p) = plain.as_mut() {
            p.push(learner.evaluate(data, false)?);
        }
        if let Some(dir) = out {
            learner
                .checkpoint()
                .save(dir.join(format!("state_{}.ckpt.json", learner.state)))?;
        }
    }
    Ok(RunOutput {
        metrics,
        metrics_without_sfc: plain,
        epochs,
        learner,
    })
}
