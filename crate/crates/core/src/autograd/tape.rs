use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{s, Array2, Axis};

use super::params::{Gradients, GroupMask, ParamId, ParamStore};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulT(Var, Var),
    /// matrix plus a broadcast 1×n row
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    /// max over consecutive row groups; `arg` holds the winning source row per output element
    GroupMax {
        x: Var,
        arg: Vec<usize>,
    },
    GroupMean {
        x: Var,
        group: usize,
    },
    Gather {
        x: Var,
        rows: Vec<usize>,
    },
    Reshape(Var),
    ConcatCols(Var, Var),
    /// zero-padded im2col for a length-preserving kernel-3 convolution along rows
    ShiftK3(Var),
    RowNormalize {
        x: Var,
        centered: bool,
    },
    CrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<f64>,
    },
    Consistency {
        sim: Var,
        target: usize,
        tau: f64,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Option<Array2<f64>>,
    op: Op,
    mask: GroupMask,
}

/// Reverse-mode tape over dense f64 matrices.
///
/// Parameter leaves borrow their values from the [`ParamStore`]; every other
/// node owns its value. Each node carries the set of parameter groups it
/// depends on, which lets [`Tape::backward`] skip subgraphs that cannot reach
/// the requested groups.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

const NORM_FLOOR: f64 = 1e-12;

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(128),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => self.store.value(*id),
            (_, Some(value)) => value,
            _ => unreachable!("non-parameter node without value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn mask(&self, v: Var) -> GroupMask {
        self.nodes[v.0].mask
    }

    fn push(&mut self, value: Array2<f64>, op: Op, mask: GroupMask) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            mask,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, GroupMask::NONE)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let mask = self.store.get(id).group.mask();
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            mask,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies the value of `v` into a fresh leaf; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn mask2(&self, a: Var, b: Var) -> GroupMask {
        self.mask(a) | self.mask(b)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let mask = self.mask2(a, b);
        self.push(value, Op::MatMul(a, b), mask)
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let mask = self.mask2(a, b);
        self.push(value, Op::MatMulT(a, b), mask)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row expects a 1×n row");
        let value = self.value(a) + r;
        let mask = self.mask2(a, row);
        self.push(value, Op::AddRow(a, row), mask)
    }

    /// x·W + b
    pub fn linear(&mut self, x: Var, weight: ParamId, bias: ParamId) -> Var {
        let w = self.param(weight);
        let b = self.param(bias);
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let mask = self.mask2(a, b);
        self.push(value, Op::Add(a, b), mask)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let mask = self.mask2(a, b);
        self.push(value, Op::Sub(a, b), mask)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let mask = self.mask2(a, b);
        self.push(value, Op::Mul(a, b), mask)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        let mask = self.mask(a);
        self.push(value, Op::Scale(a, factor), mask)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        let mask = self.mask(a);
        self.push(value, Op::AddScalar(a), mask)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v.max(0.0));
        let mask = self.mask(a);
        self.push(value, Op::Relu(a), mask)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let mask = self.mask(a);
        self.push(value, Op::Sigmoid(a), mask)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v * v);
        let mask = self.mask(a);
        self.push(value, Op::Square(a), mask)
    }

    /// Element-wise max over consecutive groups of `group` rows.
    /// Ties resolve to the earliest row of the group.
    pub fn group_max(&mut self, x: Var, group: usize) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        assert!(
            group > 0 && rows % group == 0,
            "group_max: {rows} rows not divisible by {group}"
        );
        let out_rows = rows / group;
        let mut value = Array2::zeros((out_rows, cols));
        let mut arg = vec![0usize; out_rows * cols];
        for g in 0..out_rows {
            for c in 0..cols {
                let mut best = g * group;
                let mut best_v = xv[[best, c]];
                for r in g * group + 1..(g + 1) * group {
                    let v = xv[[r, c]];
                    if v > best_v {
                        best_v = v;
                        best = r;
                    }
                }
                value[[g, c]] = best_v;
                arg[g * cols + c] = best;
            }
        }
        let mask = self.mask(x);
        self.push(value, Op::GroupMax { x, arg }, mask)
    }

    /// Column-wise max over all rows, producing a 1×n row.
    pub fn max_rows(&mut self, x: Var) -> Var {
        let rows = self.value(x).nrows();
        self.group_max(x, rows)
    }

    pub fn group_mean(&mut self, x: Var, group: usize) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        assert!(
            group > 0 && rows % group == 0,
            "group_mean: {rows} rows not divisible by {group}"
        );
        let value = xv
            .view()
            .into_shape_with_order((rows / group, group, cols))
            .expect("standard layout")
            .mean_axis(Axis(1))
            .expect("non-empty group");
        let mask = self.mask(x);
        self.push(value, Op::GroupMean { x, group }, mask)
    }

    pub fn gather(&mut self, x: Var, rows: &[usize]) -> Var {
        let value = self.value(x).select(Axis(0), rows);
        let mask = self.mask(x);
        self.push(
            value,
            Op::Gather {
                x,
                rows: rows.to_vec(),
            },
            mask,
        )
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let value = self
            .value(x)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((rows, cols))
            .expect("reshape: element count mismatch");
        let mask = self.mask(x);
        self.push(value, Op::Reshape(x), mask)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let value = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("concat_cols: row mismatch");
        let mask = self.mask2(a, b);
        self.push(value, Op::ConcatCols(a, b), mask)
    }

    pub fn shift_k3(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        let mut value = Array2::zeros((rows, 3 * cols));
        if rows > 1 {
            value
                .slice_mut(s![1.., 0..cols])
                .assign(&xv.slice(s![..rows - 1, ..]));
            value
                .slice_mut(s![..rows - 1, 2 * cols..])
                .assign(&xv.slice(s![1.., ..]));
        }
        value.slice_mut(s![.., cols..2 * cols]).assign(xv);
        let mask = self.mask(x);
        self.push(value, Op::ShiftK3(x), mask)
    }

    /// Per-row (x − mean(x)) / ‖x‖, or / ‖x − mean(x)‖ when `centered`.
    pub fn row_normalize(&mut self, x: Var, centered: bool) -> Var {
        let xv = self.value(x);
        let mut value = xv.clone();
        for mut row in value.rows_mut() {
            let n = row.len() as f64;
            let mu = row.sum() / n;
            let norm = if centered {
                row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>().sqrt()
            } else {
                row.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            .max(NORM_FLOOR);
            row.mapv_inplace(|v| (v - mu) / norm);
        }
        let mask = self.mask(x);
        self.push(value, Op::RowNormalize { x, centered }, mask)
    }

    /// Softmax cross-entropy of a 1×K logit row against `label`.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), 1, "cross_entropy expects a single logit row");
        assert!(label < lv.ncols(), "label {label} out of range");
        let probs = softmax(lv.row(0).as_slice().expect("contiguous"));
        let loss = -log_softmax_at(lv.row(0).as_slice().expect("contiguous"), label);
        let mask = self.mask(logits);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::CrossEntropy {
                logits,
                label,
                probs,
            },
            mask,
        )
    }

    /// Σ_l log(1 + Σ_{i≠t} exp(τ·sim[l,i] − τ·sim[l,t])) as a 1×1 node.
    pub fn consistency(&mut self, sim: Var, target: usize, tau: f64) -> Var {
        let sv = self.value(sim);
        assert!(target < sv.ncols(), "consistency target out of range");
        let mut total = 0.0;
        for row in sv.rows() {
            total += log1p_sum_exp(&consistency_exponents(
                row.as_slice().expect("contiguous"),
                target,
                tau,
            ));
        }
        let mask = self.mask(sim);
        self.push(
            Array2::from_elem((1, 1), total),
            Op::Consistency { sim, target, tau },
            mask,
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(x).sum());
        let mask = self.mask(x);
        self.push(value, Op::Sum(x), mask)
    }

    /// Hash of every discrete branch taken in the recorded forward pass
    /// (rectifier signs and max-pool winners). Two evaluations with equal
    /// signatures lie in the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Relu(x) => {
                    i.hash(&mut h);
                    for v in self.value(*x).iter() {
                        (*v > 0.0).hash(&mut h);
                    }
                }
                Op::GroupMax { arg, .. } => {
                    i.hash(&mut h);
                    arg.hash(&mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse pass from the 1×1 node `root`, propagating only into nodes
    /// that depend on a group in `wanted`.
    pub fn backward(&self, root: Var, wanted: GroupMask) -> Gradients {
        assert_eq!(self.shape(root), (1, 1), "backward root must be scalar");
        let mut out = Gradients::with_len(self.store.len());
        if !self.mask(root).intersects(wanted) {
            return out;
        }
        let mut grads: Vec<Option<Array2<f64>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(Array2::ones((1, 1)));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let send = |grads: &mut Vec<Option<Array2<f64>>>, v: Var, contrib: Array2<f64>| {
                if self.nodes[v.0].mask.intersects(wanted) {
                    match &mut grads[v.0] {
                        Some(acc) => *acc += &contrib,
                        slot @ None => *slot = Some(contrib),
                    }
                }
            };
            let wants = |v: Var| self.nodes[v.0].mask.intersects(wanted);
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    if wanted.contains(self.store.get(*id).group) {
                        out.accumulate(*id, &g);
                    }
                }
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        send(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if wants(*b) {
                        send(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if wants(*a) {
                        send(&mut grads, *a, g.dot(self.value(*b)));
                    }
                    if wants(*b) {
                        send(&mut grads, *b, g.t().dot(self.value(*a)));
                    }
                }
                Op::AddRow(a, row) => {
                    if wants(*row) {
                        send(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    send(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    if wants(*b) {
                        send(&mut grads, *b, g.clone());
                    }
                    send(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    if wants(*b) {
                        send(&mut grads, *b, -&g);
                    }
                    send(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        send(&mut grads, *a, &g * self.value(*b));
                    }
                    if wants(*b) {
                        send(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::Scale(a, f) => send(&mut grads, *a, g * *f),
                Op::AddScalar(a) => send(&mut grads, *a, g),
                Op::Relu(a) => {
                    let mut ga = g;
                    ndarray::Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| {
                            if x <= 0.0 {
                                *gv = 0.0;
                            }
                        });
                    send(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("value");
                    let ga = ndarray::Zip::from(&g)
                        .and(y)
                        .map_collect(|&gv, &yv| gv * yv * (1.0 - yv));
                    send(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = &g * &(self.value(*a) * 2.0);
                    send(&mut grads, *a, ga);
                }
                Op::GroupMax { x, arg } => {
                    let (rows, cols) = self.shape(*x);
                    let mut gx = Array2::zeros((rows, cols));
                    for (k, &src) in arg.iter().enumerate() {
                        let (r, c) = (k / cols, k % cols);
                        gx[[src, c]] += g[[r, c]];
                    }
                    send(&mut grads, *x, gx);
                }
                Op::GroupMean { x, group } => {
                    let (rows, cols) = self.shape(*x);
                    let inv = 1.0 / *group as f64;
                    let mut gx = Array2::zeros((rows, cols));
                    for r in 0..rows {
                        let gr = g.row(r / group);
                        gx.row_mut(r).assign(&(&gr * inv));
                    }
                    send(&mut grads, *x, gx);
                }
                Op::Gather { x, rows } => {
                    let (n, cols) = self.shape(*x);
                    let mut gx = Array2::zeros((n, cols));
                    for (k, &src) in rows.iter().enumerate() {
                        let mut dst = gx.row_mut(src);
                        dst += &g.row(k);
                    }
                    send(&mut grads, *x, gx);
                }
                Op::Reshape(x) => {
                    let shape = self.shape(*x);
                    let gx = g
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order(shape)
                        .expect("reshape backward");
                    send(&mut grads, *x, gx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a).1;
                    if wants(*b) {
                        send(&mut grads, *b, g.slice(s![.., ca..]).to_owned());
                    }
                    if wants(*a) {
                        send(&mut grads, *a, g.slice(s![.., ..ca]).to_owned());
                    }
                }
                Op::ShiftK3(x) => {
                    let (rows, cols) = self.shape(*x);
                    let mut gx = g.slice(s![.., cols..2 * cols]).to_owned();
                    if rows > 1 {
                        {
                            let mut top = gx.slice_mut(s![..rows - 1, ..]);
                            top += &g.slice(s![1.., 0..cols]);
                        }
                        let mut bottom = gx.slice_mut(s![1.., ..]);
                        bottom += &g.slice(s![..rows - 1, 2 * cols..]);
                    }
                    send(&mut grads, *x, gx);
                }
                Op::RowNormalize { x, centered } => {
                    let xv = self.value(*x);
                    let mut gx = Array2::zeros(xv.dim());
                    for ((xr, gr), mut out_r) in
                        xv.rows().into_iter().zip(g.rows()).zip(gx.rows_mut())
                    {
                        let n = xr.len() as f64;
                        let mu = xr.sum() / n;
                        let c: Vec<f64> = xr.iter().map(|v| v - mu).collect();
                        let gmean = gr.sum() / n;
                        let gc: f64 = gr.iter().zip(&c).map(|(a, b)| a * b).sum();
                        if *centered {
                            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
                            let n3 = norm * norm * norm;
                            // d/dc then project onto zero-mean subspace
                            let raw: Vec<f64> = gr
                                .iter()
                                .zip(&c)
                                .map(|(gj, cj)| gj / norm - cj * gc / n3)
                                .collect();
                            let rmean = raw.iter().sum::<f64>() / n;
                            for (o, r) in out_r.iter_mut().zip(raw) {
                                *o = r - rmean;
                            }
                        } else {
                            let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
                            let n3 = norm * norm * norm;
                            for ((o, gj), xj) in out_r.iter_mut().zip(gr.iter()).zip(xr.iter()) {
                                *o = (gj - gmean) / norm - xj * gc / n3;
                            }
                        }
                    }
                    send(&mut grads, *x, gx);
                }
                Op::CrossEntropy {
                    logits,
                    label,
                    probs,
                } => {
                    let g0 = g[[0, 0]];
                    let mut gl =
                        Array2::from_shape_vec((1, probs.len()), probs.clone()).expect("row");
                    gl[[0, *label]] -= 1.0;
                    gl *= g0;
                    send(&mut grads, *logits, gl);
                }
                Op::Consistency { sim, target, tau } => {
                    let g0 = g[[0, 0]];
                    let sv = self.value(*sim);
                    let mut gs = Array2::zeros(sv.dim());
                    for (row, mut grow) in sv.rows().into_iter().zip(gs.rows_mut()) {
                        let row = row.as_slice().expect("contiguous");
                        let z = consistency_exponents(row, *target, *tau);
                        let weights = log1p_sum_exp_grad(&z);
                        let mut wi = weights.into_iter();
                        let mut total = 0.0;
                        for (i, gi) in grow.iter_mut().enumerate() {
                            if i == *target {
                                continue;
                            }
                            let w = wi.next().expect("weight per negative");
                            *gi = g0 * tau * w;
                            total += w;
                        }
                        grow[*target] = -g0 * tau * total;
                    }
                    send(&mut grads, *sim, gs);
                }
                Op::Sum(x) => {
                    let shape = self.shape(*x);
                    send(&mut grads, *x, Array2::from_elem(shape, g[[0, 0]]));
                }
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits[k] - lse
}

fn consistency_exponents(row: &[f64], target: usize, tau: f64) -> Vec<f64> {
    row.iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, s)| tau * s - tau * row[target])
        .collect()
}

/// log(1 + Σ exp(z_i)), overflow-safe.
fn log1p_sum_exp(z: &[f64]) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let m = z.iter().copied().fold(0.0f64, f64::max);
    m + ((-m).exp() + z.iter().map(|v| (v - m).exp()).sum::<f64>()).ln()
}

fn log1p_sum_exp_grad(z: &[f64]) -> Vec<f64> {
    if z.is_empty() {
        return Vec::new();
    }
    let m = z.iter().copied().fold(0.0f64, f64::max);
    let denom = (-m).exp() + z.iter().map(|v| (v - m).exp()).sum::<f64>();
    z.iter().map(|v| (v - m).exp() / denom).collect()
}
