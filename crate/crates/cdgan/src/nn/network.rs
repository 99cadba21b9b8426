use super::layer::{Cache, Layer, ParamVisit};
use super::params::{ParameterStore, TensorData};
use super::Feat;
use crate::error::{Error, Result};

/// A sequential stack of named layers.
pub struct Network {
    layers: Vec<(String, Box<dyn Layer>)>,
}

/// The per-application record a `forward` call leaves behind; one `Tape`
/// is consumed by exactly one `backward` call.
pub struct Tape {
    caches: Vec<Cache>,
}

impl Network {
    pub fn new(layers: Vec<(String, Box<dyn Layer>)>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, x: &Feat) -> Result<(Feat, Tape)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (_, layer) in &self.layers {
            let (next, cache) = layer.forward(&cur, true)?;
            caches.push(cache);
            cur = next;
        }
        Ok((cur, Tape { caches }))
    }

    /// Forward pass without gradient bookkeeping.
    pub fn infer(&self, x: &Feat) -> Result<Feat> {
        let mut cur = x.clone();
        for (_, layer) in &self.layers {
            let (next, _) = layer.forward(&cur, false)?;
            cur = next;
        }
        Ok(cur)
    }

    /// Backpropagates `grad_out` through the application recorded on
    /// `tape`, accumulating parameter gradients, and returns the gradient
    /// with respect to the network input.
    pub fn backward(&mut self, tape: &Tape, grad_out: &Feat) -> Result<Feat> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::Config("tape does not match network depth".into()));
        }
        let mut grad = grad_out.clone();
        for ((_, layer), cache) in self.layers.iter_mut().zip(tape.caches.iter()).rev() {
            grad = layer.backward(cache, &grad)?;
        }
        Ok(grad)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(ParamVisit<'_>)) {
        for (name, layer) in &mut self.layers {
            layer.visit_params(name, f);
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |mut p| p.grad.fill(0.0));
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    /// Snapshot of all parameter values keyed by path.
    pub fn parameter_store(&mut self) -> ParameterStore {
        let mut store = ParameterStore::default();
        self.visit_params(&mut |p| {
            store.insert(
                &p.path,
                TensorData {
                    shape: p.value.shape().to_vec(),
                    data: p.value.iter().copied().collect(),
                },
            );
        });
        store
    }

    /// Loads parameter values from a snapshot; every network parameter
    /// must be present with a matching shape.
    pub fn load_parameter_store(&mut self, store: &ParameterStore) -> Result<()> {
        let mut missing = Vec::new();
        let mut result = Ok(());
        self.visit_params(&mut |mut p| {
            if result.is_err() {
                return;
            }
            match store.get(&p.path) {
                None => missing.push(p.path.clone()),
                Some(t) => {
                    if t.shape != p.value.shape() {
                        result = Err(Error::shape_mismatch(
                            format!("parameter {}", p.path),
                            &t.shape,
                            p.value.shape(),
                        ));
                        return;
                    }
                    for (dst, src) in p.value.iter_mut().zip(t.data.iter()) {
                        *dst = *src;
                    }
                }
            }
        });
        result?;
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!(
                "missing parameters: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Conv2d, PadMode, Relu};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_net(rng: &mut ChaCha8Rng) -> Network {
        let mut net = Network::new(vec![
            ("l00".into(), Box::new(Conv2d::new(1, 2, 3, 1, PadMode::Zero(1))) as Box<dyn Layer>),
            ("l01".into(), Box::new(Relu)),
            ("l02".into(), Box::new(Conv2d::new(2, 1, 3, 1, PadMode::Zero(1)))),
        ]);
        net.visit_params(&mut |mut p| {
            for v in p.value.iter_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        });
        net
    }

    #[test]
    fn parameter_store_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = tiny_net(&mut rng);
        let store = net.parameter_store();
        let x = Array3::from_shape_fn((1, 6, 6), |_| rng.gen_range(-1.0..1.0));
        let before = net.infer(&x).unwrap();

        let mut other = tiny_net(&mut rng); // different weights
        other.load_parameter_store(&store).unwrap();
        let after = other.infer(&x).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn loading_a_truncated_store_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = tiny_net(&mut rng);
        let mut store = net.parameter_store();
        store.remove("l02.bias");
        assert!(net.load_parameter_store(&store).is_err());
    }
}
