//! Randomized post-conditions of the weight and score compensations.

use std::collections::BTreeMap;

use inor_core::attention::argmax;
use inor_core::fairness::{
    column_norms, score_fairness_compensation, weight_fairness_compensation, ClassScore,
    ScoreStats, StateScore,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Default)]
pub struct FairnessReport {
    pub trials: usize,
    pub failures: Vec<String>,
}

impl FairnessReport {
    pub fn passed(&self) -> bool {
        self.trials > 0 && self.failures.is_empty()
    }

    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok && self.failures.len() < 20 {
            self.failures.push(what());
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean-norm equality, idempotence, direction preservation and untouched old
/// columns on random heads whose columns differ in scale.
pub fn weight_trials(report: &mut FairnessReport, trials: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let d = rng.gen_range(1..=32);
        let k_old = rng.gen_range(1..=12);
        let k_new = rng.gen_range(1..=6);
        let old_scale = rng.gen_range(0.1..5.0);
        let new_scale = rng.gen_range(0.1..5.0);
        let w0 = Array2::from_shape_fn((d, k_old + k_new), |(_, j)| {
            let s = if j < k_old { old_scale } else { new_scale };
            s * rng.gen_range(-1.0..1.0)
        });
        let mut w = w0.clone();
        let scale = weight_fairness_compensation(&mut w, k_old, k_new).expect("nonzero columns");
        let norms = column_norms(&w);
        let (m_old, m_new) = (mean(&norms[..k_old]), mean(&norms[k_old..]));
        report.expect((m_new / m_old - 1.0).abs() <= 1e-9, || {
            format!("trial {t}: mean norms {m_old} vs {m_new}")
        });
        report.expect(scale > 0.0 && scale.is_finite(), || {
            format!("trial {t}: scale {scale}")
        });
        for j in 0..k_old {
            report.expect(w.column(j) == w0.column(j), || {
                format!("trial {t}: old column {j} changed")
            });
        }
        for j in 0..k_old + k_new {
            let c = cosine(&w.column(j).to_vec(), &w0.column(j).to_vec());
            report.expect((c - 1.0).abs() <= 1e-12, || {
                format!("trial {t}: column {j} cosine {c}")
            });
        }
        let mut again = w.clone();
        let second =
            weight_fairness_compensation(&mut again, k_old, k_new).expect("nonzero columns");
        let drift = again
            .iter()
            .zip(w.iter())
            .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
            .fold(0.0, f64::max);
        report.expect((second - 1.0).abs() <= 1e-12 && drift <= 1e-12, || {
            format!("trial {t}: second pass scale {second}, drift {drift}")
        });
        report.trials += 1;
    }
}

struct ScoreCase {
    stats: ScoreStats,
    state: usize,
    new_classes: Vec<usize>,
    old_classes: Vec<usize>,
    probs: Vec<f64>,
}

/// Classes 0..k_old split over states 1..state-1, the rest new at `state`.
fn random_score_case(rng: &mut ChaCha8Rng, uniform: Option<f64>) -> ScoreCase {
    let state = rng.gen_range(2..=5);
    let k_old = rng.gen_range(1..=8);
    let k_new = rng.gen_range(1..=4);
    let psi = |rng: &mut ChaCha8Rng| uniform.unwrap_or_else(|| rng.gen_range(0.05..1.0));
    let mut stats = ScoreStats::default();
    let old_classes: Vec<usize> = (0..k_old).collect();
    let new_classes: Vec<usize> = (k_old..k_old + k_new).collect();
    for &k in &old_classes {
        let initial_state = rng.gen_range(1..state);
        stats.per_class.insert(
            k,
            ClassScore {
                psi_init: psi(rng),
                initial_state,
            },
        );
    }
    for &k in &new_classes {
        stats.per_class.insert(
            k,
            ClassScore {
                psi_init: psi(rng),
                initial_state: state,
            },
        );
    }
    for s in 1..=state {
        let current = if s == state {
            old_classes.iter().map(|&k| (k, psi(rng))).collect()
        } else {
            BTreeMap::new()
        };
        stats.per_state.insert(
            s,
            StateScore {
                psi_new_mean: psi(rng),
                psi_current: current,
            },
        );
    }
    let raw: Vec<f64> = (0..k_old + k_new)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    ScoreCase {
        stats,
        state,
        new_classes,
        old_classes,
        probs: raw.iter().map(|v| v / total).collect(),
    }
}

/// Direct evaluation of the rectification rule.
fn rectify_oracle(case: &ScoreCase) -> Vec<f64> {
    let mut out = case.probs.clone();
    if !case.new_classes.contains(&argmax(&case.probs)) {
        return out;
    }
    let here = &case.stats.per_state[&case.state];
    for &k in &case.old_classes {
        let c = &case.stats.per_class[&k];
        let origin = case.stats.per_state[&c.initial_state].psi_new_mean;
        out[k] = case.probs[k] * (c.psi_init / here.psi_current[&k]) * (here.psi_new_mean / origin);
    }
    out
}

fn doubled(stats: &ScoreStats) -> ScoreStats {
    let mut s = stats.clone();
    for c in s.per_class.values_mut() {
        c.psi_init *= 2.0;
    }
    for st in s.per_state.values_mut() {
        st.psi_new_mean *= 2.0;
        for v in st.psi_current.values_mut() {
            *v *= 2.0;
        }
    }
    s
}

fn within(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
}

/// Identity under equal statistics, the argmax trigger, untouched current
/// classes, scale consistency and agreement with the direct formula.
pub fn score_trials(report: &mut FairnessReport, trials: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let level = rng.gen_range(0.1..1.0);
        let flat = random_score_case(&mut rng, Some(level));
        let out =
            score_fairness_compensation(&flat.probs, &flat.stats, flat.state, &flat.new_classes)
                .unwrap();
        report.expect(within(&out, &flat.probs, 1e-12), || {
            format!("trial {t}: equal statistics changed {:?}", flat.probs)
        });

        let case = random_score_case(&mut rng, None);
        let out =
            score_fairness_compensation(&case.probs, &case.stats, case.state, &case.new_classes)
                .unwrap();
        let triggered = case.new_classes.contains(&argmax(&case.probs));
        if !triggered {
            report.expect(out == case.probs, || {
                format!("trial {t}: old argmax but scores changed")
            });
        }
        for &k in &case.new_classes {
            report.expect(out[k] == case.probs[k], || {
                format!("trial {t}: current class {k} changed")
            });
        }
        let want = rectify_oracle(&case);
        report.expect(within(&out, &want, 1e-12), || {
            format!("trial {t}: {out:?} vs formula {want:?}")
        });
        let scaled = score_fairness_compensation(
            &case.probs,
            &doubled(&case.stats),
            case.state,
            &case.new_classes,
        )
        .unwrap();
        report.expect(
            within(&scaled, &out, 1e-12) && argmax(&scaled) == argmax(&out),
            || format!("trial {t}: doubling statistics changed the result"),
        );
        report.trials += 1;
    }
}

pub fn fairness_suite(trials: usize, seed: u64) -> FairnessReport {
    let mut report = FairnessReport::default();
    weight_trials(&mut report, trials, seed);
    score_trials(&mut report, trials, seed ^ 0x5fc);
    report
}
