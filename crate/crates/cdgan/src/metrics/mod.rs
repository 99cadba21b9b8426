//! Image-quality metrics (SSIM, MSE, PSNR, LPIPS) and dataset-level
//! evaluation. All four are computed on denormalized [0, 255] images.

mod anchors;
mod lpips;

pub use anchors::{psnr_consistency_deviations, ReportedCell, REPORTED_SCORES};
pub use lpips::{backbone_from_spec, lpips, ArchiveBackbone, FeatureExtractor, RandomStackBackbone};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, PairedSample, ValueRange};
use crate::trainer::{infer, Direction, TrainState};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const DYNAMIC_RANGE: f64 = 255.0;

fn check_byte_pair(context: &str, x: &ImageTensor, y: &ImageTensor) -> Result<()> {
    if x.range() != ValueRange::Byte || y.range() != ValueRange::Byte {
        return Err(Error::Metric(format!(
            "{context} expects byte-range images; denormalize network outputs first"
        )));
    }
    if x.shape() != y.shape() {
        let (a, b, c) = x.shape();
        let (d, e, f) = y.shape();
        return Err(Error::shape_mismatch(context, &[a, b, c], &[d, e, f]));
    }
    Ok(())
}

/// Mean squared error on the [0, 255] scale.
pub fn mse(x: &ImageTensor, y: &ImageTensor) -> Result<f64> {
    check_byte_pair("mse", x, y)?;
    let n = x.data().len() as f64;
    Ok(x.data()
        .iter()
        .zip(y.data().iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in decibels: 10 log10(255^2 / mse).
/// Identical images produce `f64::INFINITY`, which dataset averaging
/// excludes with a warning count.
pub fn psnr(x: &ImageTensor, y: &ImageTensor) -> Result<f64> {
    let err = mse(x, y)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / err).log10())
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode filtering: rows then columns.
fn filter_valid(plane: &ArrayView2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (h, w) = plane.dim();
    let k = kernel.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = Array2::<f64>::zeros((h, ow));
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                acc += kv * plane[(y, x + i)];
            }
            rows[(y, x)] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((oh, ow));
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in kernel.iter().enumerate() {
                acc += kv * rows[(y + i, x)];
            }
            out[(y, x)] = acc;
        }
    }
    out
}

/// Mean local structural similarity with an 11x11 Gaussian window
/// (sigma 1.5), K1=0.01, K2=0.03, L=255, computed per channel and
/// averaged. Always <= 1, with 1 exactly when the images are identical;
/// can go negative for anti-correlated structure.
pub fn ssim(x: &ImageTensor, y: &ImageTensor) -> Result<f64> {
    check_byte_pair("ssim", x, y)?;
    let (c, h, w) = x.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Metric(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * DYNAMIC_RANGE) * (SSIM_K1 * DYNAMIC_RANGE);
    let c2 = (SSIM_K2 * DYNAMIC_RANGE) * (SSIM_K2 * DYNAMIC_RANGE);
    let mut total = 0.0;
    for ch in 0..c {
        let xp = x.data().index_axis(ndarray::Axis(0), ch);
        let yp = y.data().index_axis(ndarray::Axis(0), ch);
        let mu_x = filter_valid(&xp, &kernel);
        let mu_y = filter_valid(&yp, &kernel);
        let xx = filter_valid(&xp.mapv(|v| v * v).view(), &kernel);
        let yy = filter_valid(&yp.mapv(|v| v * v).view(), &kernel);
        let xy = filter_valid(&(&xp.to_owned() * &yp).view(), &kernel);
        let mut acc = 0.0;
        let n = mu_x.len() as f64;
        for ((((&mx, &my), &sxx), &syy), &sxy) in mu_x
            .iter()
            .zip(mu_y.iter())
            .zip(xx.iter())
            .zip(yy.iter())
            .zip(xy.iter())
        {
            let var_x = sxx - mx * mx;
            let var_y = syy - my * my;
            let cov = sxy - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
            acc += num / den;
        }
        total += acc / n;
    }
    Ok(total / c as f64)
}

/// Per-image metric values for one evaluated pair.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub id: String,
    pub ssim: f64,
    pub mse: f64,
    pub psnr: f64,
    pub lpips: f64,
}

/// Per-image rows plus dataset means. Infinite PSNR rows (identical
/// images) are excluded from the PSNR mean and counted.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean_ssim: f64,
    pub mean_mse: f64,
    pub mean_psnr: f64,
    pub mean_lpips: f64,
    pub psnr_excluded: usize,
}

impl MetricReport {
    pub fn from_rows(rows: Vec<MetricRow>) -> Self {
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&MetricRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        let finite_psnr: Vec<f64> = rows.iter().map(|r| r.psnr).filter(|p| p.is_finite()).collect();
        let mean_psnr = if finite_psnr.is_empty() {
            f64::INFINITY
        } else {
            finite_psnr.iter().sum::<f64>() / finite_psnr.len() as f64
        };
        MetricReport {
            psnr_excluded: rows.len() - finite_psnr.len(),
            mean_ssim: mean(&|r| r.ssim),
            mean_mse: mean(&|r| r.mse),
            mean_psnr,
            mean_lpips: mean(&|r| r.lpips),
            rows,
        }
    }

    /// Tab-separated table: one row per image plus a trailing mean row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\tssim\tmse\tpsnr\tlpips\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                r.id, r.ssim, r.mse, r.psnr, r.lpips
            ));
        }
        out.push_str(&format!(
            "mean\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
            self.mean_ssim, self.mean_mse, self.mean_psnr, self.mean_lpips
        ));
        out
    }
}

/// Evaluates an arbitrary translation function over paired samples.
/// `map` receives the source-domain image and must return a signed-unit
/// translation; metrics compare it against the target domain on the byte
/// scale.
pub fn evaluate_with<F>(
    map: F,
    pairs: &[PairedSample],
    direction: Direction,
    backbone: &dyn FeatureExtractor,
) -> Result<MetricReport>
where
    F: Fn(&ImageTensor) -> Result<ImageTensor>,
{
    if pairs.is_empty() {
        return Err(Error::Metric("evaluation needs a nonempty test set".into()));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (source, target) = match direction {
            Direction::A2B => (&pair.image_a, &pair.image_b),
            Direction::B2A => (&pair.image_b, &pair.image_a),
        };
        let output = map(source)?;
        let (out_bytes, _) = output.denormalized();
        let (target_bytes, _) = target.denormalized();
        rows.push(MetricRow {
            id: pair.id.clone(),
            ssim: ssim(&out_bytes, &target_bytes)?,
            mse: mse(&out_bytes, &target_bytes)?,
            psnr: psnr(&out_bytes, &target_bytes)?,
            lpips: lpips(&out_bytes, &target_bytes, backbone)?,
        });
    }
    Ok(MetricReport::from_rows(rows))
}

/// Evaluates a trained state on a test set.
pub fn evaluate(
    state: &TrainState,
    pairs: &[PairedSample],
    direction: Direction,
    backbone: &dyn FeatureExtractor,
) -> Result<MetricReport> {
    evaluate_with(|img| infer(state, img, direction), pairs, direction, backbone)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn byte_image(data: Array3<f64>) -> ImageTensor {
        ImageTensor::new(data, ValueRange::Byte).unwrap()
    }

    fn random_byte_image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> ImageTensor {
        byte_image(Array3::from_shape_fn((c, h, w), |_| rng.gen_range(0.0..255.0)))
    }

    #[test]
    fn mse_endpoints() {
        let zeros = byte_image(Array3::zeros((3, 4, 4)));
        let peak = byte_image(Array3::from_elem((3, 4, 4), 255.0));
        assert_eq!(mse(&zeros, &zeros).unwrap(), 0.0);
        assert_eq!(mse(&zeros, &peak).unwrap(), 65025.0);
    }

    #[test]
    fn mse_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_byte_image(&mut rng, 3, 4, 4);
        let y = random_byte_image(&mut rng, 3, 4, 4);
        let mut acc = 0.0;
        for (a, b) in x.data().iter().zip(y.data().iter()) {
            acc += (a - b) * (a - b);
        }
        let expect = acc / 48.0;
        assert!((mse(&x, &y).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn psnr_at_peak_error_is_zero_db() {
        let zeros = byte_image(Array3::zeros((3, 4, 4)));
        let peak = byte_image(Array3::from_elem((3, 4, 4), 255.0));
        assert!(psnr(&zeros, &peak).unwrap().abs() < 1e-12);
        assert_eq!(psnr(&zeros, &zeros).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_is_strictly_decreasing_in_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = random_byte_image(&mut rng, 3, 8, 8);
        let mut prev_psnr = f64::INFINITY;
        let mut prev_mse = -1.0;
        for scale in [1.0, 4.0, 9.0, 20.0] {
            let noisy = byte_image(base.data().mapv(|v| (v + scale).min(255.0)));
            let m = mse(&base, &noisy).unwrap();
            let p = psnr(&base, &noisy).unwrap();
            assert!(m > prev_mse);
            assert!(p < prev_psnr);
            prev_mse = m;
            prev_psnr = p;
        }
    }

    #[test]
    fn ssim_is_one_exactly_for_identical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_byte_image(&mut rng, 3, 16, 16);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_images_follow_the_closed_form() {
        let (c1v, c2v) = (80.0, 140.0);
        let x = byte_image(Array3::from_elem((1, 16, 16), c1v));
        let y = byte_image(Array3::from_elem((1, 16, 16), c2v));
        let c1 = (SSIM_K1 * 255.0) * (SSIM_K1 * 255.0);
        let expect = (2.0 * c1v * c2v + c1) / (c1v * c1v + c2v * c2v + c1);
        assert!((ssim(&x, &y).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn anti_correlated_patches_yield_negative_ssim() {
        // checkerboard around a common mean: y = 2*mean - x, so the local
        // covariance is negative and dominates the structure term
        let x = byte_image(Array3::from_shape_fn((1, 16, 16), |(_, i, j)| {
            if (i + j) % 2 == 0 {
                178.0
            } else {
                78.0
            }
        }));
        let y = byte_image(x.data().mapv(|v| 256.0 - v).mapv(|v| v.min(255.0)));
        let s = ssim(&x, &y).unwrap();
        assert!(s < 0.0, "ssim {s}");
    }

    #[test]
    fn ssim_is_symmetric_and_below_one_for_distinct_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_byte_image(&mut rng, 3, 16, 16);
        let y = random_byte_image(&mut rng, 3, 16, 16);
        let xy = ssim(&x, &y).unwrap();
        let yx = ssim(&y, &x).unwrap();
        assert!((xy - yx).abs() < 1e-9);
        assert!(xy < 1.0);
    }

    #[test]
    fn undersized_images_are_rejected() {
        let x = byte_image(Array3::zeros((1, 8, 8)));
        assert!(matches!(ssim(&x, &x), Err(Error::Metric(_))));
    }

    #[test]
    fn evaluating_the_same_state_twice_gives_identical_reports() {
        use crate::trainer::{TrainConfig, TrainState};
        let cfg = TrainConfig {
            epochs_total: 1,
            epochs_constant_lr: 1,
            seed: 6,
            ..TrainConfig::default()
        };
        let state = TrainState::new(&cfg).unwrap();
        let pairs = crate::data::make_toy_dataset(2, 32, 7).unwrap();
        let backbone = RandomStackBackbone::new(1);
        let r1 = evaluate(&state, &pairs, Direction::A2B, &backbone).unwrap();
        let r2 = evaluate(&state, &pairs, Direction::A2B, &backbone).unwrap();
        assert_eq!(r1.to_tsv(), r2.to_tsv());
    }

    #[test]
    fn identity_mapping_scores_perfectly_when_b_equals_a() {
        // dataset where both domains hold the same image
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let backbone = RandomStackBackbone::new(0);
        let pairs: Vec<PairedSample> = (0..3)
            .map(|i| {
                let img = ImageTensor::new(
                    Array3::from_shape_fn((3, 16, 16), |_| rng.gen_range(-1.0..1.0)),
                    ValueRange::SignedUnit,
                )
                .unwrap();
                PairedSample::new(format!("p{i}"), img.clone(), img).unwrap()
            })
            .collect();
        let report = evaluate_with(|img| Ok(img.clone()), &pairs, Direction::A2B, &backbone).unwrap();
        for row in &report.rows {
            assert!((row.ssim - 1.0).abs() < 1e-12);
            assert_eq!(row.mse, 0.0);
            assert!(row.psnr.is_infinite());
            assert!(row.lpips.abs() < 1e-12);
        }
        assert_eq!(report.psnr_excluded, 3);
        // means equal hand-computed means of the rows
        let hand_ssim = report.rows.iter().map(|r| r.ssim).sum::<f64>() / 3.0;
        assert_eq!(report.mean_ssim, hand_ssim);
    }
}
