//! Residual geometric attention over local structures, the two-branch critic
//! and the losses and rewards that train them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Group, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Linear;

/// Channel-downscaling Γ_d (d_s→d_s/r) and upscaling Γ_u (d_s/r→d_s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub down: Linear,
    pub up: Linear,
}

impl AttentionParams {
    pub fn new<R: Rng>(store: &mut ParamStore, d_s: usize, r: usize, rng: &mut R) -> Result<Self> {
        if r == 0 || d_s % r != 0 {
            return Err(Error::Validation(format!(
                "attention ratio {r} does not divide {d_s}"
            )));
        }
        let g = Group::Attention;
        Ok(Self {
            down: Linear::new(store, "attn.down", g, d_s, d_s / r, rng),
            up: Linear::new(store, "attn.up", g, d_s / r, d_s, rng),
        })
    }
}

/// Tape handles of one attention pass.
#[derive(Debug, Clone, Copy)]
pub struct AttentionBundle {
    pub f_m: Var,
    pub a_m: Var,
    pub f_p: Var,
    pub f_g: Var,
    /// Max-pool of f_m, the attention-free global feature.
    pub f_g_plain: Var,
}

/// A_m = sigmoid(Γ_u(relu(Γ_d(f_m)))); returns (A_m, f_p = A_m ⊙ f_m + f_m).
pub fn geometric_attention(tape: &mut Tape<'_>, f_m: Var, params: &AttentionParams) -> (Var, Var) {
    let z = params.down.forward(tape, f_m);
    let z = tape.relu(z);
    let z = params.up.forward(tape, z);
    let a_m = tape.sigmoid(z);
    (a_m, apply_attention(tape, f_m, a_m))
}

pub fn apply_attention(tape: &mut Tape<'_>, f_m: Var, a_m: Var) -> Var {
    let gated = tape.mul(a_m, f_m);
    tape.add(gated, f_m)
}

/// Element-wise max over the structure axis.
pub fn global_pool(tape: &mut Tape<'_>, features: Var) -> Var {
    tape.max_rows(features)
}

pub fn attend_and_pool(tape: &mut Tape<'_>, f_m: Var, params: &AttentionParams) -> AttentionBundle {
    let (a_m, f_p) = geometric_attention(tape, f_m, params);
    let f_g = global_pool(tape, f_p);
    let f_g_plain = global_pool(tape, f_m);
    AttentionBundle {
        f_m,
        a_m,
        f_p,
        f_g,
        f_g_plain,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticDims {
    pub conv: usize,
    pub state_hidden: usize,
    pub branch: usize,
}

/// Critic Γ_c: a state branch over f_p (conv, flatten, two dense layers), a
/// policy branch over A_m (conv, flatten, one dense layer) and a dense fusion
/// of their concatenation to a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticParams {
    pub structures: usize,
    pub state_conv: Linear,
    pub state_fc1: Linear,
    pub state_fc2: Linear,
    pub policy_conv: Linear,
    pub policy_fc: Linear,
    pub fusion: Linear,
}

impl CriticParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        d_s: usize,
        l: usize,
        dims: CriticDims,
        rng: &mut R,
    ) -> Self {
        let g = Group::Critic;
        Self {
            structures: l,
            state_conv: Linear::new(store, "critic.state_conv", g, 3 * d_s, dims.conv, rng),
            state_fc1: Linear::new(
                store,
                "critic.state_fc1",
                g,
                dims.conv * l,
                dims.state_hidden,
                rng,
            ),
            state_fc2: Linear::new(
                store,
                "critic.state_fc2",
                g,
                dims.state_hidden,
                dims.branch,
                rng,
            ),
            policy_conv: Linear::new(store, "critic.policy_conv", g, 3 * d_s, dims.conv, rng),
            policy_fc: Linear::new(
                store,
                "critic.policy_fc",
                g,
                dims.conv * l,
                dims.branch,
                rng,
            ),
            fusion: Linear::new(store, "critic.fusion", g, 2 * dims.branch, 1, rng),
        }
    }
}

/// Length-preserving kernel-3 convolution along the structure axis, then a
/// rectifier and a row-major flatten to 1×(L·channels).
fn conv_block(tape: &mut Tape<'_>, x: Var, conv: &Linear) -> Var {
    let cols = tape.shift_k3(x);
    let y = conv.forward(tape, cols);
    let y = tape.relu(y);
    let (l, c) = tape.shape(y);
    tape.reshape(y, 1, l * c)
}

/// V_cri = Γ_c(f_p, A_m), a 1×1 node.
pub fn critic_gain(tape: &mut Tape<'_>, f_p: Var, a_m: Var, params: &CriticParams) -> Result<Var> {
    let (l, d) = tape.shape(f_p);
    if tape.shape(a_m) != (l, d) || l != params.structures || 3 * d != params.state_conv.fan_in {
        return Err(Error::Shape(format!(
            "critic built for {}×{} inputs, got f_p {:?} and A_m {:?}",
            params.structures,
            params.state_conv.fan_in / 3,
            tape.shape(f_p),
            tape.shape(a_m)
        )));
    }
    let s = conv_block(tape, f_p, &params.state_conv);
    let s = params.state_fc1.forward(tape, s);
    let s = tape.relu(s);
    let s = params.state_fc2.forward(tape, s);
    let s = tape.relu(s);
    let p = conv_block(tape, a_m, &params.policy_conv);
    let p = params.policy_fc.forward(tape, p);
    let p = tape.relu(p);
    let joined = tape.concat_cols(s, p);
    Ok(params.fusion.forward(tape, joined))
}

/// L_cri = mean(−V_cri).
pub fn critic_loss(tape: &mut Tape<'_>, gains: &[Var]) -> Result<Var> {
    let total = sum_nodes(tape, gains)?;
    Ok(tape.scale(total, -1.0 / gains.len() as f64))
}

pub fn critic_loss_value(gains: &[f64]) -> f64 {
    -gains.iter().sum::<f64>() / gains.len() as f64
}

/// L_reg = mean((V_cri − R)²); rewards enter as constants.
pub fn regression_loss(tape: &mut Tape<'_>, gains: &[Var], rewards: &[u8]) -> Result<Var> {
    if gains.len() != rewards.len() {
        return Err(Error::Shape(format!(
            "{} gains for {} rewards",
            gains.len(),
            rewards.len()
        )));
    }
    let terms: Vec<Var> = gains
        .iter()
        .zip(rewards)
        .map(|(&v, &r)| {
            let d = tape.add_scalar(v, -(r as f64));
            tape.square(d)
        })
        .collect();
    let total = sum_nodes(tape, &terms)?;
    Ok(tape.scale(total, 1.0 / gains.len() as f64))
}

pub fn regression_loss_value(gains: &[f64], rewards: &[u8]) -> Result<f64> {
    if gains.len() != rewards.len() || gains.is_empty() {
        return Err(Error::Shape(format!(
            "{} gains for {} rewards",
            gains.len(),
            rewards.len()
        )));
    }
    Ok(gains
        .iter()
        .zip(rewards)
        .map(|(v, &r)| (v - r as f64).powi(2))
        .sum::<f64>()
        / gains.len() as f64)
}

fn sum_nodes(tape: &mut Tape<'_>, nodes: &[Var]) -> Result<Var> {
    let (&first, rest) = nodes
        .split_first()
        .ok_or_else(|| Error::Validation("empty batch".into()))?;
    Ok(rest.iter().fold(first, |acc, &v| tape.add(acc, v)))
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// R_c: 1 when the attended prediction is correct.
pub fn classification_reward(logits: &[f64], label: usize) -> u8 {
    u8::from(argmax(logits) == label)
}

/// R_a: 1 when attention strictly raises the true-class probability.
pub fn amelioration_reward(prob_with: f64, prob_without: f64) -> u8 {
    u8::from(prob_with > prob_without)
}
