//! Learned-perceptual-distance scoring with pluggable feature backbones.
//!
//! Two backbones stand behind the same trait: a loader for an external
//! weights archive (for scores comparable with published numbers) and a
//! fixed-seed random convolutional stack for CI, where only the metric
//! axioms are asserted, never absolute values.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, ValueRange};
use crate::nn::{Archive, Conv2d, Feat, Layer, LeakyRelu, PadMode};

/// A stack of feature maps plus per-channel weights, the two things the
/// perceptual distance needs from any backbone.
pub trait FeatureExtractor: Send + Sync {
    fn id(&self) -> &str;
    /// Layer activations for an image in [-1, 1].
    fn features(&self, img: &Feat) -> Result<Vec<Feat>>;
    /// One weight vector per returned layer, length = channel count.
    fn channel_weights(&self) -> &[Vec<f64>];
}

/// Perceptual distance: for each backbone layer, unit-normalize features
/// along channels, then average the weighted squared difference over
/// spatial positions and sum across layers. Zero iff inputs identical,
/// symmetric by construction.
pub fn lpips(x: &ImageTensor, y: &ImageTensor, backbone: &dyn FeatureExtractor) -> Result<f64> {
    if x.shape() != y.shape() {
        let (a, b, c) = x.shape();
        let (d, e, f) = y.shape();
        return Err(Error::shape_mismatch("lpips", &[a, b, c], &[d, e, f]));
    }
    if x.range() != ValueRange::Byte || y.range() != ValueRange::Byte {
        return Err(Error::Metric("lpips expects byte-range images".into()));
    }
    let fx = backbone.features(&to_signed_unit(x))?;
    let fy = backbone.features(&to_signed_unit(y))?;
    let weights = backbone.channel_weights();
    if fx.len() != weights.len() {
        return Err(Error::Metric(format!(
            "backbone `{}` returned {} layers but has {} weight vectors",
            backbone.id(),
            fx.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    for ((fx_l, fy_l), w_l) in fx.iter().zip(fy.iter()).zip(weights.iter()) {
        let nx = unit_normalize_channels(fx_l);
        let ny = unit_normalize_channels(fy_l);
        let (c, h, w) = nx.dim();
        if w_l.len() != c {
            return Err(Error::Metric(format!(
                "backbone `{}` weight vector length {} != {} channels",
                backbone.id(),
                w_l.len(),
                c
            )));
        }
        let mut acc = 0.0;
        for y_ in 0..h {
            for x_ in 0..w {
                for ch in 0..c {
                    let d = w_l[ch] * (nx[(ch, y_, x_)] - ny[(ch, y_, x_)]);
                    acc += d * d;
                }
            }
        }
        total += acc / (h * w) as f64;
    }
    Ok(total)
}

fn to_signed_unit(img: &ImageTensor) -> Feat {
    img.data().mapv(|v| v / 127.5 - 1.0)
}

fn unit_normalize_channels(f: &Feat) -> Feat {
    let (c, h, w) = f.dim();
    let mut out = f.clone();
    for y in 0..h {
        for x in 0..w {
            let mut norm_sq = 0.0;
            for ch in 0..c {
                norm_sq += f[(ch, y, x)] * f[(ch, y, x)];
            }
            let inv = 1.0 / (norm_sq.sqrt() + 1e-10);
            for ch in 0..c {
                out[(ch, y, x)] *= inv;
            }
        }
    }
    out
}

struct ConvStage {
    conv: Conv2d,
    act: LeakyRelu,
}

impl ConvStage {
    fn apply(&self, x: &Feat) -> Result<Feat> {
        let (y, _) = self.conv.forward(x, false)?;
        let (out, _) = self.act.forward(&y, false)?;
        Ok(out)
    }
}

/// Fixed-seed random convolutional stack: three stride-2 stages whose
/// activations serve as feature layers. Deterministic for a given seed.
pub struct RandomStackBackbone {
    id: String,
    stages: Vec<ConvStage>,
    weights: Vec<Vec<f64>>,
}

impl RandomStackBackbone {
    pub fn new(seed: u64) -> Self {
        let widths = [(3usize, 16usize), (16, 32), (32, 64)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = Vec::new();
        let mut weights = Vec::new();
        for (cin, cout) in widths {
            let mut conv = Conv2d::new(cin, cout, 3, 2, PadMode::Zero(1));
            // variance-preserving scale for a 3x3 kernel
            let std = (2.0 / (9.0 * cin as f64)).sqrt();
            let normal = Normal::new(0.0, std).expect("valid std");
            conv.visit_params("b", &mut |mut p| {
                if p.kind == crate::nn::ParamKind::ConvWeight {
                    for v in p.value.iter_mut() {
                        *v = normal.sample(&mut rng);
                    }
                } else {
                    p.value.fill(0.0);
                }
            });
            stages.push(ConvStage {
                conv,
                act: LeakyRelu::new(0.2),
            });
            weights.push(vec![1.0 / (cout as f64).sqrt(); cout]);
        }
        Self {
            id: format!("random:{seed}"),
            stages,
            weights,
        }
    }
}

impl FeatureExtractor for RandomStackBackbone {
    fn id(&self) -> &str {
        &self.id
    }

    fn features(&self, img: &Feat) -> Result<Vec<Feat>> {
        let mut out = Vec::with_capacity(self.stages.len());
        let mut cur = img.clone();
        for stage in &self.stages {
            cur = stage.apply(&cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }

    fn channel_weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

/// Backbone loaded from a weights archive. The archive manifest lists the
/// conv stages and per-layer channel weights; tensors hold the kernels.
/// This is how scores comparable with a reference pretrained perceptual
/// network are produced: convert its weights into an archive once, then
/// point the config at the file.
pub struct ArchiveBackbone {
    id: String,
    stages: Vec<ConvStage>,
    weights: Vec<Vec<f64>>,
}

impl ArchiveBackbone {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Metric(format!(
                "perceptual backbone weights not found at {}; convert a pretrained \
                 feature network into a backbone archive (see README, \"LPIPS backbones\") \
                 or use the `random` backbone for axiom-level checks",
                path.display()
            )));
        }
        let archive = Archive::load(path)?;
        if archive.manifest["kind"].as_str() != Some("lpips-backbone") {
            return Err(Error::Metric(format!(
                "{} is not an lpips-backbone archive",
                path.display()
            )));
        }
        let stage_specs = archive.manifest["stages"]
            .as_array()
            .ok_or_else(|| Error::Metric("backbone manifest lists no stages".into()))?
            .clone();
        let mut stages = Vec::new();
        let mut weights = Vec::new();
        for (i, spec) in stage_specs.iter().enumerate() {
            let cin = spec["in"].as_u64().unwrap_or(0) as usize;
            let cout = spec["out"].as_u64().unwrap_or(0) as usize;
            let kernel = spec["kernel"].as_u64().unwrap_or(3) as usize;
            let stride = spec["stride"].as_u64().unwrap_or(1) as usize;
            let padding = spec["padding"].as_u64().unwrap_or(1) as usize;
            let mut conv = Conv2d::new(cin, cout, kernel, stride, PadMode::Zero(padding));
            let weight = archive
                .tensors
                .get(&format!("stage{i}.weight"))
                .ok_or_else(|| Error::Metric(format!("backbone tensor stage{i}.weight missing")))?;
            let bias = archive
                .tensors
                .get(&format!("stage{i}.bias"))
                .ok_or_else(|| Error::Metric(format!("backbone tensor stage{i}.bias missing")))?;
            let mut loaded = Ok(());
            conv.visit_params("s", &mut |mut p| {
                let src = if p.kind == crate::nn::ParamKind::ConvWeight {
                    weight
                } else {
                    bias
                };
                if src.shape != p.value.shape() {
                    loaded = Err(Error::shape_mismatch(
                        format!("backbone stage{i}"),
                        &src.shape,
                        p.value.shape(),
                    ));
                    return;
                }
                for (dst, v) in p.value.iter_mut().zip(src.data.iter()) {
                    *dst = *v;
                }
            });
            loaded?;
            let w: Vec<f64> = spec["channel_weights"]
                .as_array()
                .map(|a| a.iter().map(|v| v.as_f64().unwrap_or(0.0)).collect())
                .unwrap_or_else(|| vec![1.0 / (cout as f64).sqrt(); cout]);
            stages.push(ConvStage {
                conv,
                act: LeakyRelu::new(0.2),
            });
            weights.push(w);
        }
        Ok(Self {
            id: format!("archive:{}", path.display()),
            stages,
            weights,
        })
    }

    /// Writes a backbone archive; used to produce fixtures and to convert
    /// external weights.
    pub fn write_archive(
        path: &Path,
        stages: &[(usize, usize, usize, usize, usize)],
        tensors: crate::nn::ParameterStore,
        channel_weights: &[Vec<f64>],
    ) -> Result<()> {
        let stage_specs: Vec<serde_json::Value> = stages
            .iter()
            .zip(channel_weights.iter())
            .map(|(&(cin, cout, kernel, stride, padding), w)| {
                serde_json::json!({
                    "in": cin, "out": cout, "kernel": kernel,
                    "stride": stride, "padding": padding,
                    "channel_weights": w,
                })
            })
            .collect();
        Archive {
            manifest: serde_json::json!({"kind": "lpips-backbone", "stages": stage_specs}),
            tensors,
        }
        .save(path)
    }
}

impl FeatureExtractor for ArchiveBackbone {
    fn id(&self) -> &str {
        &self.id
    }

    fn features(&self, img: &Feat) -> Result<Vec<Feat>> {
        let mut out = Vec::with_capacity(self.stages.len());
        let mut cur = img.clone();
        for stage in &self.stages {
            cur = stage.apply(&cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }

    fn channel_weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

/// Backbone registry: `random`, `random:<seed>`, or `archive:<path>`.
pub fn backbone_from_spec(spec: &str) -> Result<Box<dyn FeatureExtractor>> {
    if spec == "random" {
        return Ok(Box::new(RandomStackBackbone::new(0)));
    }
    if let Some(seed) = spec.strip_prefix("random:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::Config(format!("bad backbone seed in `{spec}`")))?;
        return Ok(Box::new(RandomStackBackbone::new(seed)));
    }
    if let Some(path) = spec.strip_prefix("archive:") {
        return Ok(Box::new(ArchiveBackbone::load(Path::new(path))?));
    }
    Err(Error::Config(format!(
        "unknown lpips backbone `{spec}` (random | random:<seed> | archive:<path>)"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};

    fn byte_image(data: Array3<f64>) -> ImageTensor {
        ImageTensor::new(data, ValueRange::Byte).unwrap()
    }

    #[test]
    fn lpips_axioms_hold_for_the_random_backbone() {
        let backbone = RandomStackBackbone::new(7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = byte_image(Array3::from_shape_fn((3, 16, 16), |_| rng.gen_range(0.0..255.0)));
        let y = byte_image(Array3::from_shape_fn((3, 16, 16), |_| rng.gen_range(0.0..255.0)));
        assert!(lpips(&x, &x, &backbone).unwrap().abs() < 1e-12);
        let xy = lpips(&x, &y, &backbone).unwrap();
        let yx = lpips(&y, &x, &backbone).unwrap();
        assert!(xy >= 0.0);
        assert!((xy - yx).abs() < 1e-12);
    }

    #[test]
    fn lpips_grows_with_noise_magnitude() {
        let backbone = RandomStackBackbone::new(7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = Array3::from_shape_fn((3, 16, 16), |_| rng.gen_range(60.0..200.0));
        let noise = Array3::from_shape_fn((3, 16, 16), |_| rng.gen_range(-1.0..1.0));
        let x = byte_image(base.clone());
        let mut prev = 0.0;
        for sigma in [0.0, 25.0, 50.0] {
            let noisy = byte_image((&base + &(noise.mapv(|v| v * sigma))).mapv(|v| v.clamp(0.0, 255.0)));
            let d = lpips(&x, &noisy, &backbone).unwrap();
            assert!(d >= prev, "sigma {sigma}: {d} < {prev}");
            prev = d;
        }
    }

    #[test]
    fn missing_archive_error_carries_instructions() {
        match ArchiveBackbone::load(Path::new("/nonexistent/weights.ckpt")) {
            Err(Error::Metric(msg)) => assert!(msg.contains("README"), "{msg}"),
            Err(other) => panic!("expected metric error, got {other:?}"),
            Ok(_) => panic!("expected an error for a missing file"),
        }
    }

    #[test]
    fn archive_backbone_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backbone.ckpt");
        // build a tiny one-stage backbone by hand
        let mut tensors = crate::nn::ParameterStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        tensors.insert(
            "stage0.weight",
            crate::nn::TensorData {
                shape: vec![4, 3, 3, 3],
                data: (0..108).map(|_| rng.gen_range(-0.2..0.2)).collect(),
            },
        );
        tensors.insert(
            "stage0.bias",
            crate::nn::TensorData {
                shape: vec![4],
                data: vec![0.0; 4],
            },
        );
        ArchiveBackbone::write_archive(&path, &[(3, 4, 3, 2, 1)], tensors, &[vec![0.5; 4]]).unwrap();
        let backbone = ArchiveBackbone::load(&path).unwrap();
        let x = byte_image(Array3::from_elem((3, 8, 8), 100.0));
        let y = byte_image(Array3::from_elem((3, 8, 8), 150.0));
        assert!(lpips(&x, &x, &backbone).unwrap().abs() < 1e-12);
        assert!(lpips(&x, &y, &backbone).unwrap() > 0.0);
        // registry resolves the same file
        let via_registry = backbone_from_spec(&format!("archive:{}", path.display())).unwrap();
        assert_eq!(
            lpips(&x, &y, via_registry.as_ref()).unwrap(),
            lpips(&x, &y, &backbone).unwrap()
        );
    }

    #[test]
    fn registry_rejects_unknown_specs() {
        assert!(backbone_from_spec("vgg16").is_err());
        assert!(backbone_from_spec("random:notanumber").is_err());
    }
}
