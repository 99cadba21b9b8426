use std::collections::BTreeMap;

use ndarray::ArrayD;

use super::network::Network;
use super::params::{ParameterStore, TensorData};
use crate::error::{Error, Result};

/// Adam optimizer with bias-corrected first and second moments, one moment
/// pair per parameter path.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    m: BTreeMap<String, ArrayD<f64>>,
    v: BTreeMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step_count: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every network parameter from its accumulated
    /// gradient: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2, then
    /// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
    pub fn step(&mut self, net: &mut Network, lr: f64) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (beta1, beta2, eps) = (self.beta1, self.beta2, self.eps);
        let (m_map, v_map) = (&mut self.m, &mut self.v);
        net.visit_params(&mut |mut p| {
            let m = m_map
                .entry(p.path.clone())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            let v = v_map
                .entry(p.path.clone())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            for (((theta, &g), m_i), v_i) in p
                .value
                .iter_mut()
                .zip(p.grad.iter())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m_i = beta1 * *m_i + (1.0 - beta1) * g;
                *v_i = beta2 * *v_i + (1.0 - beta2) * g * g;
                let m_hat = *m_i / bc1;
                let v_hat = *v_i / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    }

    /// Serializes moment buffers and the step counter into `store` under
    /// `prefix`.
    pub fn export_state(&self, prefix: &str, store: &mut ParameterStore) {
        store.insert(
            &format!("{prefix}step"),
            TensorData {
                shape: vec![1],
                data: vec![self.step_count as f64],
            },
        );
        for (name, m) in &self.m {
            store.insert(
                &format!("{prefix}m.{name}"),
                TensorData {
                    shape: m.shape().to_vec(),
                    data: m.iter().copied().collect(),
                },
            );
        }
        for (name, v) in &self.v {
            store.insert(
                &format!("{prefix}v.{name}"),
                TensorData {
                    shape: v.shape().to_vec(),
                    data: v.iter().copied().collect(),
                },
            );
        }
    }

    /// Restores state written by `export_state`.
    pub fn import_state(&mut self, prefix: &str, store: &ParameterStore) -> Result<()> {
        let step = store
            .get(&format!("{prefix}step"))
            .ok_or_else(|| Error::Checkpoint(format!("missing optimizer state {prefix}step")))?;
        self.step_count = step.data[0] as u64;
        self.m.clear();
        self.v.clear();
        for (name, tensor) in store.iter() {
            let rest = match name.strip_prefix(prefix) {
                Some(r) => r,
                None => continue,
            };
            let arr = ArrayD::from_shape_vec(tensor.shape.clone(), tensor.data.clone())
                .map_err(|e| Error::Checkpoint(format!("optimizer tensor {name}: {e}")))?;
            if let Some(param) = rest.strip_prefix("m.") {
                self.m.insert(param.to_string(), arr);
            } else if let Some(param) = rest.strip_prefix("v.") {
                self.v.insert(param.to_string(), arr);
            }
        }
        Ok(())
    }
}
