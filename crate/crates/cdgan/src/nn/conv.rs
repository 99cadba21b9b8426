use ndarray::{Array1, Array2, Array4, Axis};

use super::layer::{save_input, Cache, Layer, ParamKind, ParamVisit};
use super::Feat;
use crate::error::{Error, Result};

/// Spatial padding applied before convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero(usize),
    /// Mirror padding without edge duplication; requires pad <= size - 1.
    Reflect(usize),
}

impl PadMode {
    pub fn amount(self) -> usize {
        match self {
            PadMode::Zero(p) | PadMode::Reflect(p) => p,
        }
    }
}

fn pad(x: &Feat, mode: PadMode) -> Feat {
    let p = mode.amount();
    if p == 0 {
        return x.clone();
    }
    let (c, h, w) = x.dim();
    let mut out = Feat::zeros((c, h + 2 * p, w + 2 * p));
    out.slice_mut(ndarray::s![.., p..p + h, p..p + w]).assign(x);
    if let PadMode::Reflect(_) = mode {
        assert!(p < h && p < w, "reflect pad {p} too large for {h}x{w}");
        let (_, ph, pw) = out.dim();
        for ci in 0..c {
            for py in 0..ph {
                let sy = reflect_index(py, p, h);
                for px in 0..pw {
                    let sx = reflect_index(px, p, w);
                    if sy + p != py || sx + p != px {
                        out[(ci, py, px)] = x[(ci, sy, sx)];
                    }
                }
            }
        }
    }
    out
}

/// Gradient of `pad`: crops zero padding, folds reflected positions back
/// onto their source pixels.
fn pad_backward(grad_padded: &Feat, mode: PadMode, h: usize, w: usize) -> Feat {
    let p = mode.amount();
    if p == 0 {
        return grad_padded.clone();
    }
    let c = grad_padded.dim().0;
    match mode {
        PadMode::Zero(_) => grad_padded
            .slice(ndarray::s![.., p..p + h, p..p + w])
            .to_owned(),
        PadMode::Reflect(_) => {
            let (_, ph, pw) = grad_padded.dim();
            let mut out = Feat::zeros((c, h, w));
            for ci in 0..c {
                for py in 0..ph {
                    let sy = reflect_index(py, p, h);
                    for px in 0..pw {
                        let sx = reflect_index(px, p, w);
                        out[(ci, sy, sx)] += grad_padded[(ci, py, px)];
                    }
                }
            }
            out
        }
    }
}

fn reflect_index(padded_pos: usize, p: usize, size: usize) -> usize {
    let rel = padded_pos as isize - p as isize;
    let idx = if rel < 0 {
        -rel
    } else if rel >= size as isize {
        2 * (size as isize - 1) - rel
    } else {
        rel
    };
    idx as usize
}

/// Unrolls k×k patches of `padded` into a (c·k·k, oh·ow) matrix.
fn im2col(padded: &Feat, k: usize, s: usize, oh: usize, ow: usize) -> Array2<f64> {
    let (c, ph, pw) = padded.dim();
    debug_assert!(ph >= k && pw >= k);
    let src = padded.as_slice().expect("padded buffer is contiguous");
    let mut cols = Array2::<f64>::zeros((c * k * k, oh * ow));
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row_idx = (ci * k + ky) * k + kx;
                let mut row = cols.row_mut(row_idx);
                let dst = row.as_slice_mut().expect("row is contiguous");
                for y in 0..oh {
                    let base = ci * ph * pw + (y * s + ky) * pw + kx;
                    let out_base = y * ow;
                    if s == 1 {
                        dst[out_base..out_base + ow].copy_from_slice(&src[base..base + ow]);
                    } else {
                        for x in 0..ow {
                            dst[out_base + x] = src[base + x * s];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of `im2col`: scatter-adds column gradients back into padded space.
fn col2im_add(cols: &Array2<f64>, c: usize, ph: usize, pw: usize, k: usize, s: usize, oh: usize, ow: usize) -> Feat {
    let mut out = Feat::zeros((c, ph, pw));
    let dst = out.as_slice_mut().expect("output buffer is contiguous");
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row_idx = (ci * k + ky) * k + kx;
                let row = cols.row(row_idx);
                let src = row.as_slice().expect("row is contiguous");
                for y in 0..oh {
                    let base = ci * ph * pw + (y * s + ky) * pw + kx;
                    let in_base = y * ow;
                    for x in 0..ow {
                        dst[base + x * s] += src[in_base + x];
                    }
                }
            }
        }
    }
    out
}

/// 2D convolution (cross-correlation) with bias.
pub struct Conv2d {
    weight: Array4<f64>,
    bias: Array1<f64>,
    grad_weight: Array4<f64>,
    grad_bias: Array1<f64>,
    stride: usize,
    padding: PadMode,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: PadMode) -> Self {
        Self {
            weight: Array4::zeros((out_channels, in_channels, kernel, kernel)),
            bias: Array1::zeros(out_channels),
            grad_weight: Array4::zeros((out_channels, in_channels, kernel, kernel)),
            grad_bias: Array1::zeros(out_channels),
            stride,
            padding,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.kernel();
        let p = self.padding.amount();
        let s = self.stride;
        let oh = (h + 2 * p).checked_sub(k)? / s + 1;
        let ow = (w + 2 * p).checked_sub(k)? / s + 1;
        (oh > 0 && ow > 0).then_some((oh, ow))
    }

    #[cfg(test)]
    pub(crate) fn weight_mut(&mut self) -> &mut Array4<f64> {
        &mut self.weight
    }

    fn check_in_channels(&self, x: &Feat) -> Result<()> {
        if x.dim().0 != self.weight.dim().1 {
            return Err(Error::shape_mismatch(
                "conv input channels",
                &[x.dim().0],
                &[self.weight.dim().1],
            ));
        }
        Ok(())
    }
}

impl Layer for Conv2d {
    fn forward(&self, x: &Feat, want_cache: bool) -> Result<(Feat, Cache)> {
        self.check_in_channels(x)?;
        let (_, h, w) = x.dim();
        let (out_c, in_c, k, _) = self.weight.dim();
        let (oh, ow) = self.out_spatial(h, w).ok_or_else(|| {
            Error::LayerSpec(format!("input {h}x{w} too small for kernel {k}"))
        })?;
        let padded = pad(x, self.padding);
        let cols = im2col(&padded, k, self.stride, oh, ow);
        let w2 = self
            .weight
            .view()
            .into_shape((out_c, in_c * k * k))
            .expect("weight is contiguous");
        let mut out2 = w2.dot(&cols);
        for (mut row, &b) in out2.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row += b;
        }
        let out = out2.into_shape((out_c, oh, ow)).expect("shape product matches");
        Ok((out, save_input(x, want_cache)))
    }

    fn backward(&mut self, cache: &Cache, grad_out: &Feat) -> Result<Feat> {
        let x = cache.feat();
        let (in_c, h, w) = x.dim();
        let (out_c, _, k, _) = self.weight.dim();
        let (oc, oh, ow) = grad_out.dim();
        debug_assert_eq!(oc, out_c);
        let padded = pad(x, self.padding);
        let (_, ph, pw) = padded.dim();
        let cols = im2col(&padded, k, self.stride, oh, ow);
        let g2 = grad_out
            .view()
            .into_shape((out_c, oh * ow))
            .expect("grad is contiguous");

        let dw = g2.dot(&cols.t());
        self.grad_weight
            .view_mut()
            .into_shape((out_c, in_c * k * k))
            .expect("grad weight is contiguous")
            .zip_mut_with(&dw, |acc, &v| *acc += v);
        self.grad_bias
            .zip_mut_with(&g2.sum_axis(Axis(1)), |acc, &v| *acc += v);

        let w2 = self
            .weight
            .view()
            .into_shape((out_c, in_c * k * k))
            .expect("weight is contiguous");
        let dcols = w2.t().dot(&g2);
        let dpadded = col2im_add(&dcols, in_c, ph, pw, k, self.stride, oh, ow);
        Ok(pad_backward(&dpadded, self.padding, h, w))
    }

    fn visit_params(&mut self, path: &str, f: &mut dyn FnMut(ParamVisit<'_>)) {
        f(ParamVisit {
            path: format!("{path}.weight"),
            kind: ParamKind::ConvWeight,
            value: self.weight.view_mut().into_dyn(),
            grad: self.grad_weight.view_mut().into_dyn(),
        });
        f(ParamVisit {
            path: format!("{path}.bias"),
            kind: ParamKind::Bias,
            value: self.bias.view_mut().into_dyn(),
            grad: self.grad_bias.view_mut().into_dyn(),
        });
    }
}

/// Transposed convolution used for learned upsampling. With stride 2,
/// padding 1, output padding 1 and kernel 3 it exactly doubles the spatial
/// size. The weight keeps the (out, in, k, k) layout of `Conv2d`.
pub struct ConvTranspose2d {
    weight: Array4<f64>,
    bias: Array1<f64>,
    grad_weight: Array4<f64>,
    grad_bias: Array1<f64>,
    stride: usize,
    padding: usize,
    output_padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        Self {
            weight: Array4::zeros((out_channels, in_channels, kernel, kernel)),
            bias: Array1::zeros(out_channels),
            grad_weight: Array4::zeros((out_channels, in_channels, kernel, kernel)),
            grad_bias: Array1::zeros(out_channels),
            stride,
            padding,
            output_padding,
        }
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.weight.dim().2;
        let oh = (h - 1) * self.stride + k + self.output_padding - 2 * self.padding;
        let ow = (w - 1) * self.stride + k + self.output_padding - 2 * self.padding;
        (oh, ow)
    }

    /// Weight rearranged to (out·k·k, in), the layout the GEMM formulation
    /// of the scatter pass wants.
    fn weight_rows(&self) -> Array2<f64> {
        let (out_c, in_c, k, _) = self.weight.dim();
        let perm = self.weight.view().permuted_axes([0, 2, 3, 1]);
        let owned: Array4<f64> = perm.as_standard_layout().into_owned();
        owned
            .into_shape((out_c * k * k, in_c))
            .expect("permuted weight is contiguous")
    }
}

impl Layer for ConvTranspose2d {
    fn forward(&self, x: &Feat, want_cache: bool) -> Result<(Feat, Cache)> {
        let (in_c, h, w) = x.dim();
        if in_c != self.weight.dim().1 {
            return Err(Error::shape_mismatch(
                "transposed conv input channels",
                &[in_c],
                &[self.weight.dim().1],
            ));
        }
        let (out_c, _, k, _) = self.weight.dim();
        let (oh, ow) = self.out_spatial(h, w);
        let in2 = x.view().into_shape((in_c, h * w)).expect("input is contiguous");
        // cols[(o,ky,kx), (y,x)] = sum_i W[o,i,ky,kx] * x[i,y,x]
        let cols = self.weight_rows().dot(&in2);
        let mut out = Feat::zeros((out_c, oh, ow));
        {
            let dst = out.as_slice_mut().expect("output buffer is contiguous");
            let s = self.stride as isize;
            let p = self.padding as isize;
            for o in 0..out_c {
                for ky in 0..k {
                    for kx in 0..k {
                        let row = cols.row((o * k + ky) * k + kx);
                        let src = row.as_slice().expect("row is contiguous");
                        for y in 0..h {
                            let oy = y as isize * s - p + ky as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let base = o * oh * ow + oy as usize * ow;
                            for x_ in 0..w {
                                let ox = x_ as isize * s - p + kx as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                dst[base + ox as usize] += src[y * w + x_];
                            }
                        }
                    }
                }
            }
        }
        for (mut plane, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            plane += b;
        }
        Ok((out, save_input(x, want_cache)))
    }

    fn backward(&mut self, cache: &Cache, grad_out: &Feat) -> Result<Feat> {
        let x = cache.feat();
        let (in_c, h, w) = x.dim();
        let (out_c, _, k, _) = self.weight.dim();
        let (_, oh, ow) = grad_out.dim();
        let s = self.stride as isize;
        let p = self.padding as isize;

        // Gather pass: dcols[(o,ky,kx), (y,x)] = grad_out[o, y*s-p+ky, x*s-p+kx]
        let mut dcols = Array2::<f64>::zeros((out_c * k * k, h * w));
        {
            let src = grad_out.as_slice().expect("grad is contiguous");
            for o in 0..out_c {
                for ky in 0..k {
                    for kx in 0..k {
                        let mut row = dcols.row_mut((o * k + ky) * k + kx);
                        let dst = row.as_slice_mut().expect("row is contiguous");
                        for y in 0..h {
                            let oy = y as isize * s - p + ky as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let base = o * oh * ow + oy as usize * ow;
                            for x_ in 0..w {
                                let ox = x_ as isize * s - p + kx as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                dst[y * w + x_] = src[base + ox as usize];
                            }
                        }
                    }
                }
            }
        }

        let in2 = x.view().into_shape((in_c, h * w)).expect("input is contiguous");
        let dwr = dcols.dot(&in2.t()); // (out*k*k, in)
        for o in 0..out_c {
            for ky in 0..k {
                for kx in 0..k {
                    let r = (o * k + ky) * k + kx;
                    for i in 0..in_c {
                        self.grad_weight[(o, i, ky, kx)] += dwr[(r, i)];
                    }
                }
            }
        }
        self.grad_bias.zip_mut_with(
            &grad_out
                .view()
                .into_shape((out_c, oh * ow))
                .expect("grad is contiguous")
                .sum_axis(Axis(1)),
            |acc, &v| *acc += v,
        );

        let din2 = self.weight_rows().t().dot(&dcols); // (in, h*w)
        Ok(din2.into_shape((in_c, h, w)).expect("shape product matches"))
    }

    fn visit_params(&mut self, path: &str, f: &mut dyn FnMut(ParamVisit<'_>)) {
        f(ParamVisit {
            path: format!("{path}.weight"),
            kind: ParamKind::ConvWeight,
            value: self.weight.view_mut().into_dyn(),
            grad: self.grad_weight.view_mut().into_dyn(),
        });
        f(ParamVisit {
            path: format!("{path}.bias"),
            kind: ParamKind::Bias,
            value: self.bias.view_mut().into_dyn(),
            grad: self.grad_bias.view_mut().into_dyn(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_feat(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Feat {
        Array3::from_shape_fn((c, h, w), |_| rng.gen_range(-1.0..1.0))
    }

    fn randomize(layer: &mut dyn Layer, rng: &mut ChaCha8Rng) {
        layer.visit_params("t", &mut |mut p| {
            for v in p.value.iter_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        });
    }

    /// Direct nested-loop convolution used as an independent oracle.
    fn conv_oracle(x: &Feat, weight: &Array4<f64>, bias: &Array1<f64>, stride: usize, mode: PadMode) -> Feat {
        let padded = pad(x, mode);
        let (in_c, ph, pw) = padded.dim();
        let (out_c, wc, k, _) = weight.dim();
        assert_eq!(in_c, wc);
        let oh = (ph - k) / stride + 1;
        let ow = (pw - k) / stride + 1;
        let mut out = Feat::zeros((out_c, oh, ow));
        for o in 0..out_c {
            for y in 0..oh {
                for x_ in 0..ow {
                    let mut acc = bias[o];
                    for i in 0..in_c {
                        for ky in 0..k {
                            for kx in 0..k {
                                acc += weight[(o, i, ky, kx)] * padded[(i, y * stride + ky, x_ * stride + kx)];
                            }
                        }
                    }
                    out[(o, y, x_)] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(stride, mode) in &[(1, PadMode::Zero(1)), (2, PadMode::Zero(1)), (1, PadMode::Reflect(3))] {
            let k = if mode == PadMode::Reflect(3) { 7 } else { 3 };
            let mut conv = Conv2d::new(2, 3, k, stride, mode);
            randomize(&mut conv, &mut rng);
            let x = random_feat(&mut rng, 2, 8, 10);
            let (y, _) = conv.forward(&x, false).unwrap();
            let oracle = conv_oracle(&x, &conv.weight, &conv.bias, stride, mode);
            assert_eq!(y.dim(), oracle.dim());
            for (a, b) in y.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_output_shape_follows_arithmetic() {
        let conv = Conv2d::new(3, 4, 4, 2, PadMode::Zero(1));
        assert_eq!(conv.out_spatial(256, 256), Some((128, 128)));
        let conv = Conv2d::new(3, 4, 4, 1, PadMode::Zero(1));
        assert_eq!(conv.out_spatial(31, 31), Some((30, 30)));
    }

    #[test]
    fn deconv_doubles_spatial_size() {
        let deconv = ConvTranspose2d::new(4, 2, 3, 2, 1, 1);
        assert_eq!(deconv.out_spatial(16, 24), (32, 48));
    }

    /// <conv(x), y> == <x, conv_transposed(y)> for matching geometry; the
    /// adjointness pins the deconvolution against the convolution without
    /// trusting either implementation in isolation.
    #[test]
    fn deconv_is_adjoint_to_strided_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // stride-2 conv (4 -> 3 channels), k=3, p=1: 8x8 -> 4x4
        let mut conv = Conv2d::new(4, 3, 3, 2, PadMode::Zero(1));
        randomize(&mut conv, &mut rng);
        conv.bias.fill(0.0);
        // matching transposed conv (3 -> 4 channels) sharing the weight,
        // with output padding 1 so 4x4 -> 8x8
        let mut deconv = ConvTranspose2d::new(3, 4, 3, 2, 1, 1);
        for o in 0..4 {
            for i in 0..3 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        deconv.weight[(o, i, ky, kx)] = conv.weight[(i, o, ky, kx)];
                    }
                }
            }
        }
        let x = random_feat(&mut rng, 4, 8, 8);
        let y = random_feat(&mut rng, 3, 4, 4);
        let (cx, _) = conv.forward(&x, false).unwrap();
        let (dty, _) = deconv.forward(&y, false).unwrap();
        // The deconv output covers 8x8 = the conv input exactly.
        let lhs: f64 = cx.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(dty.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn reflect_pad_round_trips_constant_gradient_mass() {
        let x = Array3::from_shape_fn((1, 5, 5), |(_, i, j)| (i * 5 + j) as f64);
        let padded = pad(&x, PadMode::Reflect(2));
        assert_eq!(padded.dim(), (1, 9, 9));
        // reflected corners: padded[0][0][0] should equal x[2][2]
        assert_eq!(padded[(0, 0, 0)], x[(0, 2, 2)]);
        // total gradient mass is preserved by the fold
        let ones = Feat::ones((1, 9, 9));
        let folded = pad_backward(&ones, PadMode::Reflect(2), 5, 5);
        assert_eq!(folded.sum(), 81.0);
    }
}
