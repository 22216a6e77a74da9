//! Category-guided geometric reasoning: per-point encoding, adaptive local
//! structures driven by offset voting, structure features, class prototypes
//! and the semantic-consistency loss.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Group, ParamStore, Tape, Var};
use crate::data::sampling::{farthest_point_sampling, knn_query, to_f64};
use crate::data::Point;
use crate::error::{Error, Result};
use crate::nn::{Linear, TNet};

/// Widths of the encoder and of the structure layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub c1: usize,
    pub c2: usize,
    pub d_p: usize,
    pub d_s: usize,
}

/// Encoder E together with the offset layer Γ_o and the structure layer Γ_s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub input_align: TNet,
    pub lift: Linear,
    pub feature_align: TNet,
    pub widen: Linear,
    pub project: Linear,
    pub gamma_o: Linear,
    pub gamma_s: Linear,
}

impl EncoderParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        dims: EncoderDims,
        tnet_pointwise: &[usize],
        tnet_dense: &[usize],
        rng: &mut R,
    ) -> Self {
        let g = Group::EncoderClassifier;
        Self {
            input_align: TNet::new(store, "enc.tnet_in", g, 3, tnet_pointwise, tnet_dense, rng),
            lift: Linear::new(store, "enc.lift", g, 3, dims.c1, rng),
            feature_align: TNet::new(
                store,
                "enc.tnet_feat",
                g,
                dims.c1,
                tnet_pointwise,
                tnet_dense,
                rng,
            ),
            widen: Linear::new(store, "enc.widen", g, dims.c1, dims.c2, rng),
            project: Linear::new(store, "enc.project", g, dims.c2, dims.d_p, rng),
            gamma_o: Linear::new(store, "gamma_o", g, dims.d_p, 3, rng),
            gamma_s: Linear::new(store, "gamma_s", g, dims.d_p, dims.d_s, rng),
        }
    }

    pub fn d_p(&self) -> usize {
        self.project.fan_out
    }

    pub fn d_s(&self) -> usize {
        self.gamma_s.fan_out
    }
}

/// Embedding layers Γ_es, Γ_eg into the shared d_c space, and the scale τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedParams {
    pub gamma_es: Linear,
    pub gamma_eg: Linear,
    pub tau: f64,
    /// Divide by the norm of the centered vector instead of the raw one.
    pub centered: bool,
}

impl EmbedParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        d_s: usize,
        d_c: usize,
        tau: f64,
        centered: bool,
        rng: &mut R,
    ) -> Self {
        let g = Group::EncoderClassifier;
        Self {
            gamma_es: Linear::new(store, "gamma_es", g, d_s, d_c, rng),
            gamma_eg: Linear::new(store, "gamma_eg", g, d_s, d_c, rng),
            tau,
            centered,
        }
    }
}

/// Per-point features, U×d_p.
pub fn encode_points(tape: &mut Tape<'_>, enc: &EncoderParams, points: Var) -> Result<Var> {
    let (_, cols) = tape.shape(points);
    if cols != 3 {
        return Err(Error::Shape(format!(
            "expected U×3 points, found {cols} columns"
        )));
    }
    let x = enc.input_align.align(tape, points);
    let h = enc.lift.forward(tape, x);
    let h = tape.relu(h);
    let h = enc.feature_align.align(tape, h);
    let h = enc.widen.forward(tape, h);
    let h = tape.relu(h);
    Ok(enc.project.forward(tape, h))
}

pub fn points_matrix(points: &[Point]) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), 3), |(i, j)| points[i][j] as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalStructureSet {
    pub centroids: Vec<[f64; 3]>,
    /// f̂_l per structure, L×d_p.
    pub centroid_features: Array2<f64>,
    /// Exactly m indices per structure, nearest first.
    pub neighbors: Vec<Vec<usize>>,
}

impl LocalStructureSet {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn m(&self) -> usize {
        self.neighbors.first().map_or(0, Vec::len)
    }

    /// Neighbor indices flattened structure by structure.
    pub fn flat_neighbors(&self) -> Vec<usize> {
        self.neighbors.iter().flatten().copied().collect()
    }
}

fn mean_rows(features: ArrayView2<'_, f64>, rows: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; features.ncols()];
    for &r in rows {
        for (a, v) in acc.iter_mut().zip(features.row(r)) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Farthest-point centroids with their m nearest neighbors; the centroid
/// feature is the feature of the sampled point itself.
pub fn initial_structures(
    points: &[Point],
    point_features: ArrayView2<'_, f64>,
    l: usize,
    m: usize,
    start: usize,
) -> Result<LocalStructureSet> {
    let seeds = farthest_point_sampling(points, l, start)?;
    let centroids: Vec<[f64; 3]> = seeds.iter().map(|&i| to_f64(&points[i])).collect();
    let neighbors = centroids
        .iter()
        .map(|&c| knn_query(points, c, m))
        .collect::<Result<Vec<_>>>()?;
    let centroid_features = point_features.select(ndarray::Axis(0), &seeds);
    Ok(LocalStructureSet {
        centroids,
        centroid_features,
        neighbors,
    })
}

/// Δp̂_l = (1/m) Σ_i Γ_o(f̂_l − f_li) ⊙ (p̂_l − p_li).
pub fn predict_offsets(
    structures: &LocalStructureSet,
    points: &[Point],
    point_features: ArrayView2<'_, f64>,
    gamma_o: &Linear,
    store: &ParamStore,
) -> Result<Vec<[f64; 3]>> {
    let m = structures.m();
    if m == 0 {
        return Err(Error::Validation(
            "local structures need at least one neighbor".into(),
        ));
    }
    let w = store.value(gamma_o.weight);
    let b = store.value(gamma_o.bias);
    let mut offsets = Vec::with_capacity(structures.len());
    for (l, nbrs) in structures.neighbors.iter().enumerate() {
        let center = structures.centroids[l];
        let f_hat = structures.centroid_features.row(l);
        let mut acc = [0.0; 3];
        for &i in nbrs {
            let edge_feat = &f_hat - &point_features.row(i);
            let weight = edge_feat.dot(w) + b.row(0);
            let p = points[i];
            for c in 0..3 {
                acc[c] += weight[c] * (center[c] - p[c] as f64);
            }
        }
        offsets.push(acc.map(|v| v / m as f64));
    }
    Ok(offsets)
}

/// Moves each centroid by its offset and reselects its m nearest neighbors;
/// the centroid feature becomes the mean of the new neighbors' features.
pub fn update_structures(
    points: &[Point],
    structures: &LocalStructureSet,
    offsets: &[[f64; 3]],
    point_features: ArrayView2<'_, f64>,
) -> Result<LocalStructureSet> {
    if offsets.len() != structures.len() {
        return Err(Error::Shape(format!(
            "{} offsets for {} structures",
            offsets.len(),
            structures.len()
        )));
    }
    let m = structures.m();
    let mut centroids = Vec::with_capacity(offsets.len());
    let mut neighbors = Vec::with_capacity(offsets.len());
    let mut centroid_features = Array2::zeros((offsets.len(), point_features.ncols()));
    for (l, (c, d)) in structures.centroids.iter().zip(offsets).enumerate() {
        let moved = [c[0] + d[0], c[1] + d[1], c[2] + d[2]];
        let nbrs = knn_query(points, moved, m)?;
        let mean = mean_rows(point_features, &nbrs);
        centroid_features
            .row_mut(l)
            .assign(&ndarray::ArrayView1::from(&mean));
        centroids.push(moved);
        neighbors.push(nbrs);
    }
    Ok(LocalStructureSet {
        centroids,
        centroid_features,
        neighbors,
    })
}

/// f_m: row l is max_i Γ_s(f_li) over the structure's neighbors.
pub fn structure_features(
    tape: &mut Tape<'_>,
    structures: &LocalStructureSet,
    point_features: Var,
    gamma_s: &Linear,
) -> Var {
    let gathered = tape.gather(point_features, &structures.flat_neighbors());
    let encoded = gamma_s.forward(tape, gathered);
    tape.group_max(encoded, structures.m())
}

/// Per-class mean of the rows of `features`; classes absent from the batch
/// produce no entry.
pub fn batch_prototypes(features: &[Vec<f64>], labels: &[usize]) -> BTreeMap<usize, Vec<f64>> {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (f, &k) in features.iter().zip(labels) {
        let entry = sums.entry(k).or_insert_with(|| (vec![0.0; f.len()], 0));
        for (a, v) in entry.0.iter_mut().zip(f) {
            *a += v;
        }
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeEntry {
    pub proto: Vec<f64>,
    pub initial_state: usize,
}

/// EMA-maintained global prototype per class, keyed by classifier column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub gamma: f64,
    pub classes: BTreeMap<usize, PrototypeEntry>,
}

impl PrototypeBank {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Validation(format!(
                "gamma must lie in (0,1), got {gamma}"
            )));
        }
        Ok(Self {
            gamma,
            classes: BTreeMap::new(),
        })
    }

    pub fn get(&self, class: usize) -> Option<&[f64]> {
        self.classes.get(&class).map(|e| e.proto.as_slice())
    }

    pub fn is_initialized(&self, class: usize) -> bool {
        self.classes.contains_key(&class)
    }

    /// Initialized classes in ascending order with their prototypes stacked.
    pub fn candidates(&self) -> (Vec<usize>, Array2<f64>) {
        let ids: Vec<usize> = self.classes.keys().copied().collect();
        let d = self.classes.values().next().map_or(0, |e| e.proto.len());
        let data = self
            .classes
            .values()
            .flat_map(|e| e.proto.iter().copied())
            .collect();
        (
            ids.clone(),
            Array2::from_shape_vec((ids.len(), d), data).expect("uniform widths"),
        )
    }
}

/// f_g^k ← γ f_g^k + (1−γ) f̂_g^k for every class with an estimate; a class
/// seen for the first time takes the estimate as is.
pub fn ema_update_prototypes(
    bank: &mut PrototypeBank,
    estimates: &BTreeMap<usize, Vec<f64>>,
    state: usize,
) {
    let g = bank.gamma;
    for (&k, est) in estimates {
        match bank.classes.get_mut(&k) {
            Some(entry) => {
                for (p, e) in entry.proto.iter_mut().zip(est) {
                    *p = g * *p + (1.0 - g) * e;
                }
            }
            None => {
                bank.classes.insert(
                    k,
                    PrototypeEntry {
                        proto: est.clone(),
                        initial_state: state,
                    },
                );
            }
        }
    }
}

/// N(x) = (x − mean(x)) / ‖x‖, or divided by ‖x − mean(x)‖ when `centered`.
pub fn normalize_embed(x: &[f64], centered: bool) -> Result<Vec<f64>> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let norm = if centered {
        x.iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            .sqrt()
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm("embedding"));
    }
    Ok(x.iter().map(|v| (v - mean) / norm).collect())
}

/// Semantic-consistency loss of one sample, summed over its structures.
/// `prototypes` holds the initialized prototypes (one per row, treated as
/// constants) and `target` is the row of the sample's class.
pub fn consistency_loss(
    tape: &mut Tape<'_>,
    f_m: Var,
    prototypes: &Array2<f64>,
    target: usize,
    embed: &EmbedParams,
) -> Result<Var> {
    if target >= prototypes.nrows() {
        return Err(Error::UninitializedPrototype(target));
    }
    let local = embed.gamma_es.forward(tape, f_m);
    let local = tape.row_normalize(local, embed.centered);
    let protos = tape.constant(prototypes.clone());
    let global = embed.gamma_eg.forward(tape, protos);
    let global = tape.row_normalize(global, embed.centered);
    let sim = tape.matmul_t(local, global);
    Ok(tape.consistency(sim, target, embed.tau))
}
