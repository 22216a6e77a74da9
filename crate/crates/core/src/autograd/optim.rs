use ndarray::Array2;

use super::params::{Gradients, ParamId, ParamStore};

/// Adam with coupled L2 weight decay (decay term added to the gradient).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    params: Vec<ParamId>,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    /// Updates applied per parameter, for bias correction.
    counts: Vec<u64>,
    step: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, params: Vec<ParamId>, lr: f64, weight_decay: f64) -> Self {
        let m = params
            .iter()
            .map(|id| Array2::zeros(store.value(*id).dim()))
            .collect::<Vec<_>>();
        let v = m.clone();
        let counts = vec![0; params.len()];
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            params,
            m,
            v,
            counts,
            step: 0,
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every managed parameter that has a gradient; parameters
    /// without one are left untouched, moments included.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let (b1, b2, wd, eps, lr) = (self.beta1, self.beta2, self.weight_decay, self.eps, self.lr);
        for (slot, id) in self.params.iter().enumerate() {
            let Some(g) = grads.get(*id) else { continue };
            self.counts[slot] += 1;
            let t = self.counts[slot] as i32;
            let bc1 = 1.0 - b1.powi(t);
            let bc2 = 1.0 - b2.powi(t);
            let step_size = lr / bc1;
            ndarray::Zip::from(store.value_mut(*id).view_mut())
                .and(self.m[slot].view_mut())
                .and(self.v[slot].view_mut())
                .and(g)
                .for_each(|p, mi, vi, &g| {
                    let g = g + wd * *p;
                    *mi = b1 * *mi + (1.0 - b1) * g;
                    *vi = b2 * *vi + (1.0 - b2) * g * g;
                    *p -= step_size * *mi / ((*vi / bc2).sqrt() + eps);
                });
        }
    }
}
