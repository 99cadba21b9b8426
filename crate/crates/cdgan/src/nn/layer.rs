use ndarray::ArrayViewMutD;

use super::Feat;
use crate::error::Result;

/// Per-application state saved by `forward` and consumed by `backward`.
///
/// Keeping the cache outside the layer lets one parameter set be applied
/// several times within a single optimization step (the cycle pass applies
/// each generator twice) with gradients accumulating across applications.
#[derive(Debug, Clone)]
pub enum Cache {
    None,
    Feat(Feat),
    Seq(Vec<Cache>),
}

impl Cache {
    pub(crate) fn feat(&self) -> &Feat {
        match self {
            Cache::Feat(f) => f,
            _ => panic!("backward called with a cache from a different layer kind"),
        }
    }

    pub(crate) fn seq(&self) -> &[Cache] {
        match self {
            Cache::Seq(v) => v,
            _ => panic!("backward called with a cache from a different layer kind"),
        }
    }
}

/// What a parameter tensor is, so initialization can treat each correctly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    Bias,
    NormScale,
    NormShift,
}

/// A visit of one named parameter tensor together with its gradient buffer.
pub struct ParamVisit<'a> {
    pub path: String,
    pub kind: ParamKind,
    pub value: ArrayViewMutD<'a, f64>,
    pub grad: ArrayViewMutD<'a, f64>,
}

/// One differentiable stage of a network.
pub trait Layer: Send + Sync {
    /// Runs the layer. When `want_cache` is false the returned cache is
    /// `Cache::None` and the result must not be used for `backward`.
    fn forward(&self, x: &Feat, want_cache: bool) -> Result<(Feat, Cache)>;

    /// Propagates `grad_out` back through the application recorded in
    /// `cache`, accumulating parameter gradients, and returns the gradient
    /// with respect to the layer input.
    fn backward(&mut self, cache: &Cache, grad_out: &Feat) -> Result<Feat>;

    /// Visits every (parameter, gradient) pair under `path`.
    fn visit_params(&mut self, path: &str, f: &mut dyn FnMut(ParamVisit<'_>));
}

/// Rectified linear activation.
pub struct Relu;

impl Layer for Relu {
    fn forward(&self, x: &Feat, want_cache: bool) -> Result<(Feat, Cache)> {
        let y = x.mapv(|v| v.max(0.0));
        Ok((y, save_input(x, want_cache)))
    }

    fn backward(&mut self, cache: &Cache, grad_out: &Feat) -> Result<Feat> {
        let x = cache.feat();
        Ok(elementwise_gate(x, grad_out, |v| if v > 0.0 { 1.0 } else { 0.0 }))
    }

    fn visit_params(&mut self, _path: &str, _f: &mut dyn FnMut(ParamVisit<'_>)) {}
}

/// Leaky rectified linear activation with a configurable negative slope.
pub struct LeakyRelu {
    pub slope: f64,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope }
    }
}

impl Layer for LeakyRelu {
    fn forward(&self, x: &Feat, want_cache: bool) -> Result<(Feat, Cache)> {
        let s = self.slope;
        let y = x.mapv(|v| if v > 0.0 { v } else { s * v });
        Ok((y, save_input(x, want_cache)))
    }

    fn backward(&mut self, cache: &Cache, grad_out: &Feat) -> Result<Feat> {
        let s = self.slope;
        let x = cache.feat();
        Ok(elementwise_gate(x, grad_out, |v| if v > 0.0 { 1.0 } else { s }))
    }

    fn visit_params(&mut self, _path: &str, _f: &mut dyn FnMut(ParamVisit<'_>)) {}
}

/// Hyperbolic-tangent activation; output is always within [-1, 1].
pub struct Tanh;

impl Layer for Tanh {
    fn forward(&self, x: &Feat, want_cache: bool) -> Result<(Feat, Cache)> {
        let y = x.mapv(f64::tanh);
        Ok((y, save_input(x, want_cache)))
    }

    fn backward(&mut self, cache: &Cache, grad_out: &Feat) -> Result<Feat> {
        let x = cache.feat();
        Ok(elementwise_gate(x, grad_out, |v| {
            let t = v.tanh();
            1.0 - t * t
        }))
    }

    fn visit_params(&mut self, _path: &str, _f: &mut dyn FnMut(ParamVisit<'_>)) {}
}

pub(crate) fn save_input(x: &Feat, want_cache: bool) -> Cache {
    if want_cache {
        Cache::Feat(x.clone())
    } else {
        Cache::None
    }
}

fn elementwise_gate(x: &Feat, grad_out: &Feat, factor: impl Fn(f64) -> f64) -> Feat {
    let mut g = grad_out.clone();
    g.zip_mut_with(x, |gv, &xv| *gv *= factor(xv));
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn tanh_output_stays_in_range() {
        let x = Array3::from_shape_fn((1, 3, 3), |(_, i, j)| (i as f64 - j as f64) * 40.0);
        let (y, _) = Tanh.forward(&x, false).unwrap();
        assert!(y.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn leaky_relu_slope_applies_to_negatives() {
        let x = Array3::from_shape_vec((1, 1, 2), vec![-2.0, 3.0]).unwrap();
        let (y, _) = LeakyRelu::new(0.2).forward(&x, false).unwrap();
        assert_eq!(y.as_slice().unwrap(), &[-0.4, 3.0]);
    }
}
