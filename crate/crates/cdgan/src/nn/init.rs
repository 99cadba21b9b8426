use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::ParamKind;
use super::network::Network;

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;

/// Initializes all parameters in place: convolution and deconvolution
/// weights from N(0, 0.02^2), biases and norm shifts to 0, norm scales
/// to 1. Deterministic for a given seed.
pub fn init_weights(net: &mut Network, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    net.visit_params(&mut |mut p| match p.kind {
        ParamKind::ConvWeight => {
            for v in p.value.iter_mut() {
                *v = normal.sample(&mut rng);
            }
        }
        ParamKind::Bias | ParamKind::NormShift => p.value.fill(0.0),
        ParamKind::NormScale => p.value.fill(1.0),
    });
}
