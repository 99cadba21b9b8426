use super::conv::{Conv2d, PadMode};
use super::layer::{Cache, Layer, ParamVisit};
use super::norm::InstanceNorm2d;
use super::{Feat, Relu};
use crate::error::Result;

/// Residual block: conv-norm-relu-conv-norm plus the identity skip.
/// Both convolutions are 3x3 stride 1 with the same filter count, so the
/// block preserves shape. No activation after the addition.
pub struct ResidualBlock {
    body: Vec<Box<dyn Layer>>,
}

impl ResidualBlock {
    pub fn new(filters: usize) -> Self {
        let body: Vec<Box<dyn Layer>> = vec![
            Box::new(Conv2d::new(filters, filters, 3, 1, PadMode::Zero(1))),
            Box::new(InstanceNorm2d::new(filters)),
            Box::new(Relu),
            Box::new(Conv2d::new(filters, filters, 3, 1, PadMode::Zero(1))),
            Box::new(InstanceNorm2d::new(filters)),
        ];
        Self { body }
    }

    fn stage_name(i: usize) -> &'static str {
        ["conv1", "norm1", "relu", "conv2", "norm2"][i]
    }
}

impl Layer for ResidualBlock {
    fn forward(&self, x: &Feat, want_cache: bool) -> Result<(Feat, Cache)> {
        let mut caches = Vec::with_capacity(self.body.len());
        let mut cur = x.clone();
        for layer in &self.body {
            let (next, cache) = layer.forward(&cur, want_cache)?;
            caches.push(cache);
            cur = next;
        }
        cur += x;
        let cache = if want_cache { Cache::Seq(caches) } else { Cache::None };
        Ok((cur, cache))
    }

    fn backward(&mut self, cache: &Cache, grad_out: &Feat) -> Result<Feat> {
        let caches = cache.seq();
        let mut grad = grad_out.clone();
        for (layer, cache) in self.body.iter_mut().zip(caches.iter()).rev() {
            grad = layer.backward(cache, &grad)?;
        }
        grad += grad_out; // skip connection
        Ok(grad)
    }

    fn visit_params(&mut self, path: &str, f: &mut dyn FnMut(ParamVisit<'_>)) {
        for (i, layer) in self.body.iter_mut().enumerate() {
            layer.visit_params(&format!("{path}.{}", Self::stage_name(i)), f);
        }
    }
}
