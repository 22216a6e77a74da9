//! Dense layers shared by every sub-network.

use ndarray::Array2;
use rand::Rng;

use crate::autograd::{Group, ParamId, ParamStore, Tape, Var};

/// Row-vector affine map `x·W + b`, `W` stored input-by-output.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(
            format!("{name}.weight"),
            group,
            (fan_in, fan_out),
            fan_in,
            rng,
        );
        let bias = store.add_uniform(format!("{name}.bias"), group, (1, fan_out), fan_in, rng);
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn zeros(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            group,
            Array2::zeros((fan_in, fan_out)),
        );
        let bias = store.add(format!("{name}.bias"), group, Array2::zeros((1, fan_out)));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        tape.linear(x, self.weight, self.bias)
    }

    /// Plain evaluation on a single row, outside any tape.
    pub fn apply(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let w = store.value(self.weight);
        let b = store.value(self.bias);
        (0..self.fan_out)
            .map(|j| {
                b[[0, j]]
                    + x.iter()
                        .enumerate()
                        .map(|(i, xi)| xi * w[[i, j]])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Stack of rectified linear layers.
pub fn mlp_forward(tape: &mut Tape<'_>, layers: &[Linear], mut x: Var) -> Var {
    for layer in layers {
        let z = layer.forward(tape, x);
        x = tape.relu(z);
    }
    x
}

/// Alignment network predicting a k×k transform from an N×k point set:
/// pointwise layers, max-pool over points, dense layers, then a k² output
/// added to the identity. The output layer starts at zero so the initial
/// transform is exactly the identity.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TNet {
    pub k: usize,
    pub pointwise: Vec<Linear>,
    pub dense: Vec<Linear>,
    pub out: Linear,
}

impl TNet {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        group: Group,
        k: usize,
        pointwise: &[usize],
        dense: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut width = k;
        let pw = pointwise
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let l = Linear::new(store, &format!("{name}.point{i}"), group, width, w, rng);
                width = w;
                l
            })
            .collect();
        let dn = dense
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let l = Linear::new(store, &format!("{name}.dense{i}"), group, width, w, rng);
                width = w;
                l
            })
            .collect();
        let out = Linear::zeros(store, &format!("{name}.out"), group, width, k * k);
        Self {
            k,
            pointwise: pw,
            dense: dn,
            out,
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let h = mlp_forward(tape, &self.pointwise, x);
        let pooled = tape.max_rows(h);
        let h = mlp_forward(tape, &self.dense, pooled);
        let flat = self.out.forward(tape, h);
        let t = tape.reshape(flat, self.k, self.k);
        let eye = tape.constant(Array2::eye(self.k));
        tape.add(t, eye)
    }

    /// Applies the predicted transform: x·T.
    pub fn align(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let t = self.forward(tape, x);
        tape.matmul(x, t)
    }
}
