//! Hand-evaluated examples, each recomputed through the public API.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use inor_core::attention::{
    amelioration_reward, argmax, critic_loss, critic_loss_value, geometric_attention, global_pool,
    regression_loss, regression_loss_value, AttentionParams,
};
use inor_core::autograd::{Group, ParamStore, Tape};
use inor_core::data::{farthest_point_sampling, knn_query, sample_mesh_surface, OffMesh, Point};
use inor_core::fairness::{
    record_score_statistics, score_fairness_compensation, weight_fairness_compensation, ClassScore,
    ScoreStats, StateScore,
};
use inor_core::metrics::{average, macro_recall, top1_accuracy};
use inor_core::nn::Linear;
use inor_core::reasoning::{
    batch_prototypes, consistency_loss, ema_update_prototypes, normalize_embed, predict_offsets,
    structure_features, update_structures, EmbedParams, LocalStructureSet, PrototypeBank,
};
use inor_core::trainer::{
    classification_loss, exemplar_quotas, select_exemplars, total_objective, TrainConfig,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles::knn_oracle;

/// Arithmetic examples.
pub const EXACT: f64 = 1e-9;
/// Examples involving exp or log.
pub const TRANSCENDENTAL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn close(name: &'static str, got: f64, want: f64, tol: f64) -> Check {
    Check {
        name,
        passed: (got - want).abs() <= tol,
        detail: format!("got {got:.12}, want {want:.12}"),
    }
}

fn close_all(name: &'static str, got: &[f64], want: &[f64], tol: f64) -> Check {
    let ok = got.len() == want.len() && got.iter().zip(want).all(|(a, b)| (a - b).abs() <= tol);
    Check {
        name,
        passed: ok,
        detail: format!("got {got:?}, want {want:?}"),
    }
}

fn equal<T: PartialEq + std::fmt::Debug>(name: &'static str, got: T, want: T) -> Check {
    Check {
        name,
        passed: got == want,
        detail: format!("got {got:?}, want {want:?}"),
    }
}

fn mesh_area_ratio() -> Check {
    // 4.5 at z=0, 0.5 at z=5
    let text = "OFF\n6 2 0\n0 0 0\n3 0 0\n0 3 0\n0 0 5\n1 0 5\n0 1 5\n3 0 1 2\n3 3 4 5\n";
    let mesh = OffMesh::parse(text).expect("valid mesh");
    let pc = sample_mesh_surface(&mesh, 10_000, 99).expect("positive area");
    let big = pc.points.iter().filter(|p| p[2] == 0.0).count() as f64;
    let sigma = (10_000.0f64 * 0.9 * 0.1).sqrt();
    Check {
        name: "mesh sampling 9:1 within 3 sigma",
        passed: (big - 9000.0).abs() <= 3.0 * sigma,
        detail: format!(
            "{big} points on the larger triangle, 3 sigma = {:.1}",
            3.0 * sigma
        ),
    }
}

fn offsets_example() -> Check {
    let mut store = ParamStore::new();
    let gamma_o = Linear::zeros(&mut store, "o", Group::EncoderClassifier, 2, 3);
    store.value_mut(gamma_o.bias).fill(1.0);
    let points: [Point; 2] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let feats = Array2::from_shape_vec((2, 2), vec![0.3, -0.7, 1.1, 0.2]).unwrap();
    let s = LocalStructureSet {
        centroids: vec![[0.0; 3]],
        centroid_features: Array2::zeros((1, 2)),
        neighbors: vec![vec![0, 1]],
    };
    let d = predict_offsets(&s, &points, feats.view(), &gamma_o, &store).unwrap();
    close_all(
        "offset with unit edge weights",
        &d[0],
        &[-0.5, -0.5, 0.0],
        EXACT,
    )
}

fn far_cluster_example() -> Check {
    let mut points: Vec<Point> = (0..6).map(|i| [i as f32 * 0.02, 0.0, 0.0]).collect();
    points.extend((0..6).map(|i| [8.0, i as f32 * 0.02, 0.0]));
    let feats = Array2::zeros((points.len(), 2));
    let s = LocalStructureSet {
        centroids: vec![[0.0; 3]],
        centroid_features: Array2::zeros((1, 2)),
        neighbors: vec![vec![0, 1, 2, 3]],
    };
    let moved = update_structures(&points, &s, &[[8.0, 0.03, 0.0]], feats.view()).unwrap();
    let want = knn_oracle(&points, [8.0, 0.03, 0.0], 4);
    let ok = moved.neighbors[0] == want && moved.neighbors[0].iter().all(|&i| i >= 6);
    Check {
        name: "offset onto a distant cluster reselects its points",
        passed: ok,
        detail: format!("got {:?}, oracle {want:?}", moved.neighbors[0]),
    }
}

fn identity(store: &mut ParamStore, name: &str, d: usize) -> Linear {
    let l = Linear::zeros(store, name, Group::EncoderClassifier, d, d);
    store.set_value(l.weight, Array2::eye(d));
    l
}

fn structure_max_example() -> Check {
    let mut store = ParamStore::new();
    let gamma_s = identity(&mut store, "s", 2);
    let mut tape = Tape::new(&store);
    let f = tape.constant(Array2::from_shape_vec((2, 2), vec![1.0, 5.0, 3.0, 2.0]).unwrap());
    let s = LocalStructureSet {
        centroids: vec![[0.0; 3]],
        centroid_features: Array2::zeros((1, 2)),
        neighbors: vec![vec![0, 1]],
    };
    let out = structure_features(&mut tape, &s, f, &gamma_s);
    close_all(
        "structure feature elementwise max",
        &tape.value(out).row(0).to_vec(),
        &[3.0, 5.0],
        EXACT,
    )
}

fn consistency_example() -> Check {
    let mut store = ParamStore::new();
    let embed = EmbedParams {
        gamma_es: identity(&mut store, "es", 2),
        gamma_eg: identity(&mut store, "eg", 2),
        tau: 1.0,
        centered: false,
    };
    let h = FRAC_1_SQRT_2;
    let mut tape = Tape::new(&store);
    let f_m = tape.constant(Array2::from_shape_vec((1, 2), vec![h, -h]).unwrap());
    let protos = Array2::from_shape_vec((2, 2), vec![h, -h, -h, h]).unwrap();
    let loss = consistency_loss(&mut tape, f_m, &protos, 0, &embed).unwrap();
    close(
        "consistency with one opposed negative",
        tape.scalar(loss),
        0.126928,
        TRANSCENDENTAL,
    )
}

fn attention_half_example() -> Check {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = AttentionParams::new(&mut store, 8, 4, &mut rng).unwrap();
    for id in [p.down.weight, p.down.bias, p.up.weight, p.up.bias] {
        store.value_mut(id).fill(0.0);
    }
    let mut tape = Tape::new(&store);
    let f = Array2::from_shape_fn((4, 8), |_| rng.gen_range(-2.0..2.0));
    let f_m = tape.constant(f.clone());
    let (a_m, f_p) = geometric_attention(&mut tape, f_m, &p);
    let half = tape.value(a_m).iter().all(|&v| v == 0.5);
    let want: Vec<f64> = f.iter().map(|v| 1.5 * v).collect();
    let got: Vec<f64> = tape.value(f_p).iter().copied().collect();
    let mut c = close_all("zero attention layers scale by 1.5", &got, &want, EXACT);
    c.passed &= half;
    c
}

fn pool_example() -> Check {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.constant(Array2::from_shape_vec((2, 2), vec![1.0, 5.0, 3.0, 2.0]).unwrap());
    let g = global_pool(&mut tape, x);
    close_all(
        "global max pool",
        &tape.value(g).row(0).to_vec(),
        &[3.0, 5.0],
        EXACT,
    )
}

fn critic_examples() -> Vec<Check> {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let gains: Vec<_> = [2.0, 4.0]
        .iter()
        .map(|&g| tape.constant(Array2::from_elem((1, 1), g)))
        .collect();
    let cri = critic_loss(&mut tape, &gains).unwrap();
    let zero = tape.constant(Array2::zeros((1, 1)));
    let reg_single = regression_loss(&mut tape, &[zero], &[2]).unwrap();
    let pair: Vec<_> = [1.0, 3.0]
        .iter()
        .map(|&g| tape.constant(Array2::from_elem((1, 1), g)))
        .collect();
    let reg_pair = regression_loss(&mut tape, &pair, &[2, 2]).unwrap();
    vec![
        close(
            "critic loss of gains 2 and 4",
            tape.scalar(cri),
            -3.0,
            EXACT,
        ),
        close(
            "critic loss value of gains 2 and 4",
            critic_loss_value(&[2.0, 4.0]),
            -3.0,
            EXACT,
        ),
        equal(
            "amelioration reward 0.8 vs 0.6",
            amelioration_reward(0.8, 0.6),
            1,
        ),
        close("regression V=0 R=2", tape.scalar(reg_single), 4.0, EXACT),
        close(
            "regression pairs (1,2),(3,2)",
            tape.scalar(reg_pair),
            1.0,
            EXACT,
        ),
        close(
            "regression value pairs (1,2),(3,2)",
            regression_loss_value(&[1.0, 3.0], &[2, 2]).unwrap(),
            1.0,
            EXACT,
        ),
    ]
}

fn wfc_example() -> Check {
    let mut w = Array2::from_shape_vec((2, 2), vec![2.0, 0.6, 0.0, 0.8]).unwrap();
    weight_fairness_compensation(&mut w, 1, 1).unwrap();
    let got = [w[[0, 0]], w[[1, 0]], w[[0, 1]], w[[1, 1]]];
    close_all(
        "weight compensation scales new column by 2",
        &got,
        &[2.0, 0.0, 1.2, 1.6],
        EXACT,
    )
}

fn psi_example() -> Check {
    let mut stats = ScoreStats::default();
    let preds = vec![vec![0.8, 0.2], vec![0.6, 0.4]];
    record_score_statistics(&mut stats, 1, &preds, &[0, 0], &[0]).unwrap();
    close(
        "initial score mean of 0.8 and 0.6",
        stats.per_class[&0].psi_init,
        0.7,
        EXACT,
    )
}

/// Old class 0 from state 1 with ψ_{s_i}=0.8, ψ(s_i)=0.8; at state 2
/// ψ_s(0)=0.4 and ψ(s)=0.5.
fn crafted_stats() -> ScoreStats {
    let mut stats = ScoreStats::default();
    stats.per_class.insert(
        0,
        ClassScore {
            psi_init: 0.8,
            initial_state: 1,
        },
    );
    stats.per_class.insert(
        1,
        ClassScore {
            psi_init: 0.5,
            initial_state: 2,
        },
    );
    stats.per_state.insert(
        1,
        StateScore {
            psi_new_mean: 0.8,
            psi_current: BTreeMap::new(),
        },
    );
    stats.per_state.insert(
        2,
        StateScore {
            psi_new_mean: 0.5,
            psi_current: BTreeMap::from([(0, 0.4)]),
        },
    );
    stats
}

fn sfc_examples() -> Vec<Check> {
    let probs = [0.4, 0.45, 0.15];
    let out = score_fairness_compensation(&probs, &crafted_stats(), 2, &[1, 2]).unwrap();
    vec![
        close("score rectification 0.4 * 2.0 * 0.625", out[0], 0.5, EXACT),
        equal(
            "rectified decision flips to the old class",
            (argmax(&probs), argmax(&out)),
            (1, 0),
        ),
    ]
}

fn herding_enumeration() -> Check {
    let f = vec![vec![0.0, 1.0], vec![2.0, 0.5], vec![1.0, -1.0]];
    let mean = [1.0, 0.5 / 3.0];
    let gap = |picked: &[usize]| -> f64 {
        (0..2)
            .map(|j| {
                let m = picked.iter().map(|&i| f[i][j]).sum::<f64>() / picked.len() as f64;
                (mean[j] - m).powi(2)
            })
            .sum()
    };
    // lexicographic minimum over (first-step gap, second-step gap, indices)
    let mut best: Option<((f64, f64), [usize; 2])> = None;
    for a in 0..3 {
        for b in 0..3 {
            if a == b {
                continue;
            }
            let key = (gap(&[a]), gap(&[a, b]));
            let better = match best {
                None => true,
                Some((k, _)) => key.0 < k.0 || (key.0 == k.0 && key.1 < k.1),
            };
            if better {
                best = Some((key, [a, b]));
            }
        }
    }
    let want = best.unwrap().1.to_vec();
    equal(
        "herding three 2-D samples",
        select_exemplars(&f, 2).unwrap(),
        want,
    )
}

pub fn closed_form_checks() -> Vec<Check> {
    let mut checks = vec![
        mesh_area_ratio(),
        equal(
            "farthest point sampling on a line",
            farthest_point_sampling(&[[0.0; 3], [1.0, 0.0, 0.0], [10.0, 0.0, 0.0]], 2, 0).unwrap(),
            vec![0, 2],
        ),
        equal(
            "nearest two of three collinear points",
            knn_query(
                &[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]],
                [0.0; 3],
                2,
            )
            .unwrap(),
            vec![0, 1],
        ),
        offsets_example(),
        far_cluster_example(),
        structure_max_example(),
        close_all(
            "batch prototype mean",
            &batch_prototypes(&[vec![1.0, 1.0], vec![3.0, 3.0]], &[0, 0])[&0],
            &[2.0, 2.0],
            EXACT,
        ),
    ];
    let mut bank = PrototypeBank::new(0.7).unwrap();
    ema_update_prototypes(&mut bank, &BTreeMap::from([(0, vec![1.0])]), 1);
    ema_update_prototypes(&mut bank, &BTreeMap::from([(0, vec![0.0])]), 1);
    checks.push(close(
        "prototype moving average",
        bank.get(0).unwrap()[0],
        0.7,
        EXACT,
    ));
    checks.push(close_all(
        "embedding normalization",
        &normalize_embed(&[2.0, 0.0], false).unwrap(),
        &[0.5, -0.5],
        EXACT,
    ));
    checks.push(consistency_example());
    checks.push(attention_half_example());
    checks.push(pool_example());
    checks.extend(critic_examples());
    checks.push(wfc_example());
    checks.push(psi_example());
    checks.extend(sfc_examples());
    checks.push(close(
        "cross entropy of a uniform 4-way prediction",
        classification_loss(&[vec![0.0; 4]], &[1]).unwrap(),
        4f64.ln(),
        TRANSCENDENTAL,
    ));
    checks.push(close(
        "cross entropy of a uniform 4-way prediction, literal",
        classification_loss(&[vec![0.0; 4]], &[1]).unwrap(),
        1.386294,
        TRANSCENDENTAL,
    ));
    checks.push(close(
        "weighted objective of unit components",
        total_objective(1.0, 1.0, 1.0, 1.0, &TrainConfig::default()),
        2.11,
        EXACT,
    ));
    checks.push(herding_enumeration());
    checks.push(equal(
        "quotas for 10 over 4 classes",
        exemplar_quotas(10, 4),
        vec![3, 3, 2, 2],
    ));
    checks.push(close(
        "average of 0.9 and 0.7",
        average([0.9, 0.7]),
        0.8,
        EXACT,
    ));
    checks.push(close(
        "top-1 of one hit in two",
        top1_accuracy(&[0, 1], &[0, 0]).unwrap(),
        0.5,
        EXACT,
    ));
    checks.push(close(
        "macro recall from a 2-class confusion",
        macro_recall(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap(),
        0.75,
        EXACT,
    ));
    checks
}
