use ndarray::Array1;

use super::layer::{save_input, Cache, Layer, ParamKind, ParamVisit};
use super::Feat;
use crate::error::{Error, Result};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-channel feature standardization with a learned affine transform:
/// `y = scale * (x - mean) / sqrt(var + eps) + shift`, statistics taken
/// over each channel's spatial positions.
pub struct InstanceNorm2d {
    scale: Array1<f64>,
    shift: Array1<f64>,
    grad_scale: Array1<f64>,
    grad_shift: Array1<f64>,
    eps: f64,
}

impl InstanceNorm2d {
    pub fn new(channels: usize) -> Self {
        Self::with_eps(channels, INSTANCE_NORM_EPS)
    }

    pub fn with_eps(channels: usize, eps: f64) -> Self {
        Self {
            scale: Array1::ones(channels),
            shift: Array1::zeros(channels),
            grad_scale: Array1::zeros(channels),
            grad_shift: Array1::zeros(channels),
            eps,
        }
    }

    fn channel_stats(x: &Feat, c: usize) -> (f64, f64) {
        let plane = x.index_axis(ndarray::Axis(0), c);
        let n = plane.len() as f64;
        let mean = plane.sum() / n;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var)
    }
}

impl Layer for InstanceNorm2d {
    fn forward(&self, x: &Feat, want_cache: bool) -> Result<(Feat, Cache)> {
        let (c, h, w) = x.dim();
        if c != self.scale.len() {
            return Err(Error::shape_mismatch(
                "instance norm channels",
                &[c],
                &[self.scale.len()],
            ));
        }
        if h * w < 2 {
            return Err(Error::LayerSpec(
                "instance norm needs at least 2 spatial positions".into(),
            ));
        }
        let mut out = x.clone();
        for ci in 0..c {
            let (mean, var) = Self::channel_stats(x, ci);
            let inv_std = 1.0 / (var + self.eps).sqrt();
            let (g, b) = (self.scale[ci], self.shift[ci]);
            out.index_axis_mut(ndarray::Axis(0), ci)
                .mapv_inplace(|v| (v - mean) * inv_std * g + b);
        }
        Ok((out, save_input(x, want_cache)))
    }

    fn backward(&mut self, cache: &Cache, grad_out: &Feat) -> Result<Feat> {
        let x = cache.feat();
        let (c, h, w) = x.dim();
        let n = (h * w) as f64;
        let mut dx = Feat::zeros((c, h, w));
        for ci in 0..c {
            let (mean, var) = Self::channel_stats(x, ci);
            let inv_std = 1.0 / (var + self.eps).sqrt();
            let xs = x.index_axis(ndarray::Axis(0), ci);
            let gs = grad_out.index_axis(ndarray::Axis(0), ci);

            let mut sum_g = 0.0;
            let mut sum_g_xhat = 0.0;
            for (&xv, &gv) in xs.iter().zip(gs.iter()) {
                let xhat = (xv - mean) * inv_std;
                sum_g += gv;
                sum_g_xhat += gv * xhat;
            }
            self.grad_shift[ci] += sum_g;
            self.grad_scale[ci] += sum_g_xhat;

            let g_affine = self.scale[ci];
            let mean_g = sum_g / n;
            let mean_g_xhat = sum_g_xhat / n;
            let mut dplane = dx.index_axis_mut(ndarray::Axis(0), ci);
            for ((dv, &xv), &gv) in dplane.iter_mut().zip(xs.iter()).zip(gs.iter()) {
                let xhat = (xv - mean) * inv_std;
                *dv = g_affine * inv_std * (gv - mean_g - xhat * mean_g_xhat);
            }
        }
        Ok(dx)
    }

    fn visit_params(&mut self, path: &str, f: &mut dyn FnMut(ParamVisit<'_>)) {
        f(ParamVisit {
            path: format!("{path}.scale"),
            kind: ParamKind::NormScale,
            value: self.scale.view_mut().into_dyn(),
            grad: self.grad_scale.view_mut().into_dyn(),
        });
        f(ParamVisit {
            path: format!("{path}.shift"),
            kind: ParamKind::NormShift,
            value: self.shift.view_mut().into_dyn(),
            grad: self.grad_shift.view_mut().into_dyn(),
        });
    }
}
