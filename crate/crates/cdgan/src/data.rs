//! Paired-dataset ingestion, image preprocessing, and the deterministic
//! synthetic toy dataset used by desk-scale tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::DynamicImage;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, PairedSample, ValueRange};

/// Edge length every real dataset image is resized to.
pub const TARGET_SIZE: usize = 256;

/// How the two domains of a pair are stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// One image per pair; domain A is the left half, domain B the right.
    SideBySideImage,
    /// Two directories `a/` and `b/` with matching file stems.
    ParallelDirs,
}

/// Describes one dataset on disk together with its split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub root: PathBuf,
    pub pairing: Pairing,
    pub train_count: usize,
    pub test_count: usize,
    #[serde(default)]
    pub seed: u64,
    /// When true, the split is drawn from a seeded shuffle instead of
    /// lexicographic id order.
    #[serde(default)]
    pub shuffle: bool,
}

/// (name, total, train, test) for the three reference datasets.
pub const KNOWN_SPLITS: [(&str, usize, usize, usize); 3] = [
    ("cuhk", 188, 100, 88),
    ("facades", 606, 400, 206),
    ("rgb-nir", 477, 387, 90),
];

impl DatasetManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        let manifest: DatasetManifest = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_count == 0 {
            return Err(Error::Config("train_count must be >= 1".into()));
        }
        if let Some((_, total, train, test)) = KNOWN_SPLITS
            .iter()
            .find(|(n, _, _, _)| *n == self.name.to_ascii_lowercase())
        {
            if self.train_count != *train || self.test_count != *test {
                return Err(Error::Config(format!(
                    "dataset `{}` uses the {}/{} split of its {} pairs; manifest says {}/{}",
                    self.name, train, test, total, self.train_count, self.test_count
                )));
            }
        }
        Ok(())
    }
}

/// Decodes, resizes to 256x256 (bicubic), replicates grayscale to three
/// channels, and normalizes to [-1, 1].
pub fn preprocess(img: &DynamicImage) -> Result<ImageTensor> {
    preprocess_to(img, TARGET_SIZE)
}

/// [`preprocess`] with an explicit target edge length.
pub fn preprocess_to(img: &DynamicImage, size: usize) -> Result<ImageTensor> {
    let resized = if img.width() as usize == size && img.height() as usize == size {
        img.clone()
    } else {
        img.resize_exact(size as u32, size as u32, FilterType::CatmullRom)
    };
    let rgb = resized.to_rgb8();
    let mut data = Array3::<f64>::zeros((3, size, size));
    for (x, y, pixel) in rgb.enumerate_pixels() {
        for c in 0..3 {
            data[(c, y as usize, x as usize)] = pixel[c] as f64;
        }
    }
    ImageTensor::new(data, ValueRange::Byte)?.normalized()
}

/// Loads and preprocesses one image file.
pub fn load_and_preprocess(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path)?;
    preprocess(&img)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!(
            "dataset root {} does not exist or is not a directory",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn stem_of(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

fn load_side_by_side(root: &Path, size: usize) -> Result<Vec<PairedSample>> {
    let mut pairs = Vec::new();
    for path in list_images(root)? {
        let img = image::open(&path)?;
        let (w, h) = (img.width(), img.height());
        if w < 2 {
            return Err(Error::Dataset(format!(
                "{}: image too narrow to split into left/right halves",
                path.display()
            )));
        }
        let left = img.crop_imm(0, 0, w / 2, h);
        let right = img.crop_imm(w / 2, 0, w - w / 2, h);
        pairs.push(PairedSample::new(
            stem_of(&path),
            preprocess_to(&left, size)?,
            preprocess_to(&right, size)?,
        )?);
    }
    Ok(pairs)
}

fn load_parallel_dirs(root: &Path, size: usize) -> Result<Vec<PairedSample>> {
    let dir_a = root.join("a");
    let dir_b = root.join("b");
    let mut by_stem: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for path in list_images(&dir_a)? {
        let stem = stem_of(&path);
        by_stem.entry(stem).or_default().0 = Some(path);
    }
    for path in list_images(&dir_b)? {
        let stem = stem_of(&path);
        by_stem.entry(stem).or_default().1 = Some(path);
    }
    let mut pairs = Vec::new();
    for (stem, entry) in by_stem {
        match entry {
            (Some(pa), Some(pb)) => pairs.push(PairedSample::new(
                stem,
                load_and_preprocess_sized(&pa, size)?,
                load_and_preprocess_sized(&pb, size)?,
            )?),
            (Some(_), None) => {
                return Err(Error::Dataset(format!(
                    "pair `{stem}` is missing its domain-B counterpart"
                )))
            }
            (None, Some(_)) => {
                return Err(Error::Dataset(format!(
                    "pair `{stem}` is missing its domain-A counterpart"
                )))
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(pairs)
}

fn load_and_preprocess_sized(path: &Path, size: usize) -> Result<ImageTensor> {
    let img = image::open(path)?;
    preprocess_to(&img, size)
}

/// Loads a paired dataset and splits it into train/test per the manifest.
///
/// Pairs are ordered by id; the first `train_count` become the training
/// split unless `shuffle` requests a seeded reordering first. The
/// discovered pair count must equal `train_count + test_count`.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<(Vec<PairedSample>, Vec<PairedSample>)> {
    load_dataset_sized(manifest, TARGET_SIZE)
}

/// [`load_dataset`] with an explicit preprocessing size (desk-scale runs).
pub fn load_dataset_sized(
    manifest: &DatasetManifest,
    size: usize,
) -> Result<(Vec<PairedSample>, Vec<PairedSample>)> {
    manifest.validate()?;
    let mut pairs = match manifest.pairing {
        Pairing::SideBySideImage => load_side_by_side(&manifest.root, size)?,
        Pairing::ParallelDirs => load_parallel_dirs(&manifest.root, size)?,
    };
    let total = manifest.train_count + manifest.test_count;
    if pairs.len() != total {
        return Err(Error::Dataset(format!(
            "dataset `{}` has {} pairs but the manifest expects {} ({} train + {} test)",
            manifest.name,
            pairs.len(),
            total,
            manifest.train_count,
            manifest.test_count
        )));
    }
    pairs.sort_by(|x, y| x.id.cmp(&y.id));
    if manifest.shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
        // Fisher-Yates so the order is a pure function of the seed
        for i in (1..pairs.len()).rev() {
            let j = rng.gen_range(0..=i);
            pairs.swap(i, j);
        }
    }
    let test = pairs.split_off(manifest.train_count);
    Ok((pairs, test))
}

/// The ground-truth toy mapping: rotate channels (r,g,b) -> (g,b,r) and
/// invert intensity. Exactly invertible and learnable by construction.
pub fn toy_transform(a: &ImageTensor) -> ImageTensor {
    let data = a.data();
    let (c, h, w) = data.dim();
    debug_assert_eq!(c, 3);
    let mut out = Array3::<f64>::zeros((c, h, w));
    for ch in 0..3 {
        let src = (ch + 1) % 3;
        for y in 0..h {
            for x in 0..w {
                out[(ch, y, x)] = -data[(src, y, x)];
            }
        }
    }
    ImageTensor::new(out, ValueRange::SignedUnit).expect("negation preserves the range")
}

fn fill_rect(data: &mut Array3<f64>, x0: usize, y0: usize, x1: usize, y1: usize, color: [f64; 3]) {
    for y in y0..y1 {
        for x in x0..x1 {
            for c in 0..3 {
                data[(c, y, x)] = color[c];
            }
        }
    }
}

fn fill_disc(data: &mut Array3<f64>, cx: f64, cy: f64, r: f64, color: [f64; 3]) {
    let (_, h, w) = data.dim();
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r * r {
                for c in 0..3 {
                    data[(c, y, x)] = color[c];
                }
            }
        }
    }
}

/// Builds `n` synthetic pairs of size `size`: domain A is a random
/// arrangement of filled shapes on a flat background, domain B is
/// [`toy_transform`] of A. Deterministic for a given seed.
pub fn make_toy_dataset(n: usize, size: usize, seed: u64) -> Result<Vec<PairedSample>> {
    if n == 0 {
        return Err(Error::Dataset("toy dataset needs n >= 1".into()));
    }
    if size % 4 != 0 {
        return Err(Error::Dataset(format!("toy size {size} must be divisible by 4")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Moderate amplitudes and low shape contrast keep the pair statistics
    // close to what a freshly initialized generator can reach in a short
    // smoke run while the mapping stays exactly invertible.
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let mut data = Array3::<f64>::zeros((3, size, size));
        let bg = [
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-0.2..0.2),
        ];
        fill_rect(&mut data, 0, 0, size, size, bg);
        let shapes = rng.gen_range(2..=4);
        for _ in 0..shapes {
            let mut c = [0.0; 3];
            for (cv, bv) in c.iter_mut().zip(bg.iter()) {
                *cv = (bv + rng.gen_range(-0.15..0.15)).clamp(-0.4, 0.4);
            }
            if rng.gen_bool(0.5) {
                let w = rng.gen_range(size / 8..size / 2);
                let h = rng.gen_range(size / 8..size / 2);
                let x0 = rng.gen_range(0..size - w);
                let y0 = rng.gen_range(0..size - h);
                fill_rect(&mut data, x0, y0, x0 + w, y0 + h, c);
            } else {
                let r = rng.gen_range(size as f64 / 10.0..size as f64 / 4.0);
                let cx = rng.gen_range(0.0..size as f64);
                let cy = rng.gen_range(0.0..size as f64);
                fill_disc(&mut data, cx, cy, r, c);
            }
        }
        let image_a = ImageTensor::new(data, ValueRange::SignedUnit)?;
        let image_b = toy_transform(&image_a);
        pairs.push(PairedSample::new(format!("toy_{i:04}"), image_a, image_b)?);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};
    use tempfile::TempDir;

    fn write_png(path: &Path, w: u32, h: u32, seed: u8) {
        let img = RgbImage::from_fn(w, h, |x, y| {
            Rgb([
                (x as u8).wrapping_mul(seed),
                (y as u8).wrapping_add(seed),
                seed,
            ])
        });
        img.save(path).unwrap();
    }

    fn fake_parallel_dataset(dir: &Path, count: usize) {
        std::fs::create_dir_all(dir.join("a")).unwrap();
        std::fs::create_dir_all(dir.join("b")).unwrap();
        for i in 0..count {
            write_png(&dir.join("a").join(format!("img_{i:04}.png")), 25, 20, 3);
            write_png(&dir.join("b").join(format!("img_{i:04}.png")), 25, 20, 7);
        }
    }

    #[test]
    fn parallel_split_counts_follow_the_manifest() {
        let tmp = TempDir::new().unwrap();
        fake_parallel_dataset(tmp.path(), 12);
        let manifest = DatasetManifest {
            name: "mini".into(),
            root: tmp.path().to_path_buf(),
            pairing: Pairing::ParallelDirs,
            train_count: 9,
            test_count: 3,
            seed: 0,
            shuffle: false,
        };
        let (train, test) = load_dataset_sized(&manifest, 16).unwrap();
        assert_eq!((train.len(), test.len()), (9, 3));
        // ids are disjoint across splits
        for t in &test {
            assert!(train.iter().all(|s| s.id != t.id));
        }
        // lexicographic order puts the first ids in train
        assert_eq!(train[0].id, "img_0000");
        assert_eq!(test[0].id, "img_0009");
    }

    #[test]
    fn missing_counterpart_is_reported_by_id() {
        let tmp = TempDir::new().unwrap();
        fake_parallel_dataset(tmp.path(), 3);
        std::fs::remove_file(tmp.path().join("b").join("img_0001.png")).unwrap();
        let manifest = DatasetManifest {
            name: "mini".into(),
            root: tmp.path().to_path_buf(),
            pairing: Pairing::ParallelDirs,
            train_count: 2,
            test_count: 1,
            seed: 0,
            shuffle: false,
        };
        match load_dataset_sized(&manifest, 16) {
            Err(Error::Dataset(msg)) => assert!(msg.contains("img_0001"), "{msg}"),
            other => panic!("expected dataset error, got {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let tmp = TempDir::new().unwrap();
        fake_parallel_dataset(tmp.path(), 5);
        let manifest = DatasetManifest {
            name: "mini".into(),
            root: tmp.path().to_path_buf(),
            pairing: Pairing::ParallelDirs,
            train_count: 9,
            test_count: 3,
            seed: 0,
            shuffle: false,
        };
        assert!(matches!(load_dataset_sized(&manifest, 16), Err(Error::Dataset(_))));
    }

    #[test]
    fn side_by_side_images_split_into_halves() {
        let tmp = TempDir::new().unwrap();
        for i in 0..4 {
            write_png(&tmp.path().join(format!("f{i}.png")), 64, 32, 5);
        }
        let manifest = DatasetManifest {
            name: "sbs".into(),
            root: tmp.path().to_path_buf(),
            pairing: Pairing::SideBySideImage,
            train_count: 3,
            test_count: 1,
            seed: 0,
            shuffle: false,
        };
        let (train, test) = load_dataset_sized(&manifest, 16).unwrap();
        assert_eq!((train.len(), test.len()), (3, 1));
        let s = &train[0];
        assert_eq!(s.image_a.shape(), (3, 16, 16));
        assert_eq!(s.image_b.shape(), (3, 16, 16));
    }

    #[test]
    fn known_dataset_manifests_must_match_published_splits() {
        let manifest = DatasetManifest {
            name: "cuhk".into(),
            root: PathBuf::from("/nowhere"),
            pairing: Pairing::ParallelDirs,
            train_count: 120,
            test_count: 68,
            seed: 0,
            shuffle: false,
        };
        assert!(matches!(manifest.validate(), Err(Error::Config(_))));
        let ok = DatasetManifest {
            train_count: 100,
            test_count: 88,
            ..manifest
        };
        ok.validate().unwrap();
    }

    #[test]
    fn same_seed_gives_identical_split_ordering() {
        let tmp = TempDir::new().unwrap();
        fake_parallel_dataset(tmp.path(), 8);
        let manifest = DatasetManifest {
            name: "mini".into(),
            root: tmp.path().to_path_buf(),
            pairing: Pairing::ParallelDirs,
            train_count: 5,
            test_count: 3,
            seed: 11,
            shuffle: true,
        };
        let (train1, _) = load_dataset_sized(&manifest, 16).unwrap();
        let (train2, _) = load_dataset_sized(&manifest, 16).unwrap();
        let ids1: Vec<_> = train1.iter().map(|s| s.id.clone()).collect();
        let ids2: Vec<_> = train2.iter().map(|s| s.id.clone()).collect();
        assert_eq!(ids1, ids2);
    }

    #[test]
    fn preprocess_resizes_and_replicates_grayscale() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("gray.png");
        let img = image::GrayImage::from_fn(250, 200, |x, y| image::Luma([((x + y) % 251) as u8]));
        img.save(&path).unwrap();
        let raw = image::open(&path).unwrap();
        let tensor = preprocess(&raw).unwrap();
        assert_eq!(tensor.shape(), (3, 256, 256));
        // three identical channels
        let d = tensor.data();
        for y in (0..256).step_by(37) {
            for x in (0..256).step_by(41) {
                assert_eq!(d[(0, y, x)], d[(1, y, x)]);
                assert_eq!(d[(1, y, x)], d[(2, y, x)]);
            }
        }
    }

    #[test]
    fn preprocess_keeps_geometry_of_already_sized_images() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_fn(16, 16, |x, y| {
            Rgb([x as u8 * 16, y as u8 * 16, 128])
        }));
        let tensor = preprocess_to(&img, 16).unwrap();
        // values are only rescaled: spot-check one pixel
        let expected = 128.0 / 127.5 - 1.0;
        assert!((tensor.data()[(2, 5, 9)] - expected).abs() < 1e-12);
    }

    #[test]
    fn toy_dataset_is_deterministic_and_self_consistent() {
        let a = make_toy_dataset(6, 16, 9).unwrap();
        let b = make_toy_dataset(6, 16, 9).unwrap();
        assert_eq!(a.len(), 6);
        for (s1, s2) in a.iter().zip(b.iter()) {
            assert_eq!(s1.image_a, s2.image_a);
            assert_eq!(s1.image_b, s2.image_b);
            assert_eq!(s1.image_a.shape(), (3, 16, 16));
            // the published transform reproduces image_b exactly
            assert_eq!(toy_transform(&s1.image_a), s1.image_b);
        }
        let c = make_toy_dataset(6, 16, 10).unwrap();
        assert_ne!(a[0].image_a, c[0].image_a);
    }

    #[test]
    fn toy_rejects_bad_arguments() {
        assert!(make_toy_dataset(0, 16, 0).is_err());
        assert!(make_toy_dataset(4, 15, 0).is_err());
    }
}
