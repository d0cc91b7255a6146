use serde::{Deserialize, Serialize};

use super::params::{ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

/// Adam over one parameter group.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    group: ParamGroup,
    step: u64,
    /// First and second moments, indexed like the store.
    moments: Vec<Option<(Tensor, Tensor)>>,
}

impl Adam {
    pub fn new(config: AdamConfig, group: ParamGroup) -> Self {
        Self {
            config,
            group,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn group(&self) -> ParamGroup {
        self.group
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr`. Gradients of parameters
    /// outside this optimizer's group are ignored.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)], lr: f64) {
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        for (id, grad) in grads {
            if store.group(*id) != self.group {
                continue;
            }
            let value = store.value_mut(*id);
            let (m, v) = self.moments[id.index()]
                .get_or_insert_with(|| (Tensor::zeros(grad.rows(), grad.cols()), Tensor::zeros(grad.rows(), grad.cols())));
            for (((p, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let g = g + weight_decay * *p;
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// `(param index, first moment, second moment)` for every touched parameter.
    pub fn export(&self) -> Vec<(usize, &Tensor, &Tensor)> {
        self.moments
            .iter()
            .enumerate()
            .filter_map(|(i, mv)| mv.as_ref().map(|(m, v)| (i, m, v)))
            .collect()
    }

    pub fn restore(&mut self, step: u64, moments: Vec<(usize, Tensor, Tensor)>, n_params: usize) {
        self.step = step;
        self.moments = vec![None; n_params];
        for (i, m, v) in moments {
            self.moments[i] = Some((m, v));
        }
    }
}
