//! A plain cross-entropy trainer written against the network alone: its own
//! batching, its own Adam, no prototypes, attention, critic or compensation.

use inor_core::autograd::{Gradients, Group, ParamId, ParamStore, Tape};
use inor_core::data::{augment, PointCloud, SyntheticSpec};
use inor_core::model::{InorNet, ModelDims, StructureConfig, Switches};
use inor_core::trainer::{
    epoch_order, growth_seed, init_seed, sample_seed, Ablations, Dataset, DimsSpec, Learner,
    ScheduleSpec, TrainConfig,
};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Four classes, 16 train and 4 test clouds of 96 points each.
pub fn small_dataset() -> Dataset {
    let spec = SyntheticSpec::from_names(&["sphere", "cube", "cone", "torus"], 16, 4, 96, 0.02, 3)
        .expect("known shapes");
    Dataset::load(&spec.to_manifest().expect("valid spec"), 96).expect("generated clouds")
}

/// λ1 = λ2 = 0, every component off, no exemplars, two states.
pub fn degenerate_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        l: 8,
        m: 8,
        u: 96,
        batch_size: 8,
        epochs: 3,
        exemplar_budget: 0,
        seed,
        ablations: Ablations::NONE,
        schedule: ScheduleSpec::States(2),
        ..TrainConfig::default()
    };
    c.model.dims = DimsSpec::Explicit(ModelDims::desk());
    c
}

/// Adam with the decay term added to the gradient; tensors without a
/// gradient in a step keep their value and moments.
struct PlainAdam {
    lr: f64,
    wd: f64,
    slots: Vec<(ParamId, Array2<f64>, Array2<f64>, i32)>,
}

impl PlainAdam {
    fn new(store: &ParamStore, lr: f64, wd: f64) -> Self {
        let slots = store
            .iter()
            .filter(|(_, p)| p.group == Group::EncoderClassifier)
            .map(|(id, p)| {
                (
                    id,
                    Array2::zeros(p.value.dim()),
                    Array2::zeros(p.value.dim()),
                    0,
                )
            })
            .collect();
        Self { lr, wd, slots }
    }

    fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        for (id, m, v, t) in &mut self.slots {
            let Some(g) = grads.get(*id) else { continue };
            *t += 1;
            let c1 = 1.0 - B1.powi(*t);
            let c2 = 1.0 - B2.powi(*t);
            let w = store.value_mut(*id);
            for (((w, m), v), g) in w
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(g.iter())
            {
                let g = g + self.wd * *w;
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}

/// Per-epoch mean cross entropy of the reference trainer.
pub fn reference_trace(config: &TrainConfig, data: &Dataset) -> Vec<f64> {
    let schedule = config.schedule.build(data.num_classes).expect("schedule");
    let mut net = InorNet::new(
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
    )
    .expect("network");
    let plain = Switches {
        cgr: false,
        cga: false,
    };
    let mut trace = Vec::new();
    for state in 1..=schedule.num_states() {
        if state >= 2 {
            let mut rng = ChaCha8Rng::seed_from_u64(growth_seed(config.seed, state));
            net.classifier
                .grow(&mut net.store, schedule.k_new(state), &mut rng);
        }
        let pool: Vec<usize> = (0..data.train.len())
            .filter(|&i| {
                schedule
                    .new_classes(state)
                    .contains(&data.train[i].label.unwrap())
            })
            .collect();
        let mut adam = PlainAdam::new(&net.store, config.lr, config.weight_decay);
        for epoch in 0..config.epochs {
            let order = epoch_order(pool.len(), config.seed, state, epoch);
            let mut total = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<(PointCloud, usize)> = chunk
                    .iter()
                    .map(|&p| {
                        let i = pool[p];
                        let pc = augment(
                            &data.train[i],
                            sample_seed(config.seed, state, epoch, i),
                            &config.model.augmentation,
                        );
                        let column = schedule.column_of(pc.label.unwrap());
                        (pc, column)
                    })
                    .collect();
                let mut grads = Gradients::zeros_like(&net.store);
                for (pc, y) in &batch {
                    let mut tape = Tape::new(&net.store);
                    let out = net.forward(&mut tape, &pc.points, plain).expect("forward");
                    let ce = tape.cross_entropy(out.logits, *y);
                    total += tape.scalar(ce);
                    let scaled = tape.scale(ce, 1.0 / batch.len() as f64);
                    for (id, g) in tape
                        .backward(scaled, Group::EncoderClassifier.mask())
                        .iter()
                    {
                        grads.accumulate(id, g);
                    }
                }
                adam.step(&mut net.store, &grads);
            }
            trace.push(total / pool.len() as f64);
        }
    }
    trace
}

/// Per-epoch mean classification loss of the full trainer.
pub fn learner_trace(config: &TrainConfig, data: &Dataset) -> Vec<f64> {
    let schedule = config.schedule.build(data.num_classes).expect("schedule");
    let mut learner = Learner::new(config.clone(), schedule.clone()).expect("learner");
    let mut trace = Vec::new();
    for _ in 0..schedule.num_states() {
        trace.extend(
            learner
                .run_state(data)
                .expect("state")
                .iter()
                .map(|e| e.clc),
        );
    }
    trace
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub reference: Vec<f64>,
    pub learner: Vec<f64>,
    pub max_gap: f64,
}

impl EquivalenceReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.reference.len() == self.learner.len()
            && !self.reference.is_empty()
            && self.max_gap <= tolerance
    }
}

pub fn degenerate_equivalence(seed: u64) -> EquivalenceReport {
    let data = small_dataset();
    let config = degenerate_config(seed);
    let reference = reference_trace(&config, &data);
    let learner = learner_trace(&config, &data);
    let max_gap = reference
        .iter()
        .zip(&learner)
        .map(|(a, b)| (a - b).abs())
        .fold(
            if reference.len() == learner.len() {
                0.0
            } else {
                f64::INFINITY
            },
            f64::max,
        );
    EquivalenceReport {
        reference,
        learner,
        max_gap,
    }
}
