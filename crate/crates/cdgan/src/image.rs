//! Image tensors and the two pixel-value conventions used throughout the
//! toolkit: network-side images live in [-1, 1], metric-side images in
//! [0, 255].

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared value range of an [`ImageTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueRange {
    /// Values in [-1, 1]; the convention on the network side (tanh output).
    SignedUnit,
    /// Values in [0, 255]; the convention on the metric side.
    Byte,
}

impl ValueRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ValueRange::SignedUnit => (-1.0, 1.0),
            ValueRange::Byte => (0.0, 255.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ValueRange::SignedUnit => "signed-unit [-1, 1]",
            ValueRange::Byte => "byte [0, 255]",
        }
    }
}

/// A C×H×W image with a declared value range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f64>,
    range: ValueRange,
}

impl ImageTensor {
    /// Builds an image tensor, validating geometry and the declared range.
    pub fn new(data: Array3<f64>, range: ValueRange) -> Result<Self> {
        let (channels, height, width) = data.dim();
        if !(channels == 1 || channels == 3) || height == 0 || width == 0 {
            return Err(Error::BadGeometry {
                channels,
                height,
                width,
            });
        }
        let (lo, hi) = range.bounds();
        for &v in data.iter() {
            if !v.is_finite() || v < lo || v > hi {
                return Err(Error::OutOfRange {
                    value: v,
                    range: range.label(),
                });
            }
        }
        Ok(Self { data, range })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    /// Maps a [0, 255] image to [-1, 1]: `out = x / 127.5 - 1`.
    pub fn normalized(&self) -> Result<ImageTensor> {
        if self.range != ValueRange::Byte {
            return Err(Error::OutOfRange {
                value: f64::NAN,
                range: "normalize expects a byte-range input",
            });
        }
        let data = self.data.mapv(|v| v / 127.5 - 1.0);
        ImageTensor::new(data, ValueRange::SignedUnit)
    }

    /// Maps a [-1, 1] image back to [0, 255]: `out = (x + 1) * 127.5`,
    /// clamping out-of-range values. Returns the image together with the
    /// number of elements that had to be clamped.
    pub fn denormalized(&self) -> (ImageTensor, usize) {
        let mut clamped = 0usize;
        let data = self.data.mapv(|v| {
            let raw = (v + 1.0) * 127.5;
            if raw < 0.0 {
                clamped += 1;
                0.0
            } else if raw > 255.0 {
                clamped += 1;
                255.0
            } else {
                raw
            }
        });
        let img = ImageTensor {
            data,
            range: ValueRange::Byte,
        };
        (img, clamped)
    }
}

/// A sample from a paired dataset: one image per domain, plus a stable id.
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub id: String,
    pub image_a: ImageTensor,
    pub image_b: ImageTensor,
}

impl PairedSample {
    pub fn new(id: impl Into<String>, image_a: ImageTensor, image_b: ImageTensor) -> Result<Self> {
        if image_a.height() != image_b.height() || image_a.width() != image_b.width() {
            return Err(Error::shape_mismatch(
                "paired sample domains",
                &[image_a.channels(), image_a.height(), image_a.width()],
                &[image_b.channels(), image_b.height(), image_b.width()],
            ));
        }
        Ok(Self {
            id: id.into(),
            image_a,
            image_b,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;

    fn byte_image(value: f64) -> ImageTensor {
        ImageTensor::new(Array3::from_elem((3, 4, 4), value), ValueRange::Byte).unwrap()
    }

    #[test]
    fn normalize_maps_range_endpoints() {
        let lo = byte_image(0.0).normalized().unwrap();
        assert!(lo.data().iter().all(|&v| v == -1.0));
        let hi = byte_image(255.0).normalized().unwrap();
        assert!(hi.data().iter().all(|&v| v == 1.0));
        let mid = byte_image(127.5).normalized().unwrap();
        assert!(mid.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let err = ImageTensor::new(Array3::from_elem((3, 2, 2), 256.0), ValueRange::Byte);
        assert!(matches!(err, Err(Error::OutOfRange { .. })));
        let err = ImageTensor::new(Array3::from_elem((3, 2, 2), -1.5), ValueRange::SignedUnit);
        assert!(matches!(err, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn bad_geometry_is_rejected() {
        let err = ImageTensor::new(Array3::zeros((2, 4, 4)), ValueRange::SignedUnit);
        assert!(matches!(err, Err(Error::BadGeometry { .. })));
    }

    #[test]
    fn denormalize_maps_endpoints_and_counts_clamps() {
        let lo = ImageTensor::new(Array3::from_elem((3, 2, 2), -1.0), ValueRange::SignedUnit).unwrap();
        let (img, clamped) = lo.denormalized();
        assert_eq!(clamped, 0);
        assert!(img.data().iter().all(|&v| v == 0.0));

        let hi = ImageTensor::new(Array3::from_elem((3, 2, 2), 1.0), ValueRange::SignedUnit).unwrap();
        let (img, _) = hi.denormalized();
        assert!(img.data().iter().all(|&v| v == 255.0));
    }

    #[test]
    fn mismatched_pair_heights_are_rejected() {
        let a = ImageTensor::new(Array3::zeros((3, 4, 4)), ValueRange::SignedUnit).unwrap();
        let b = ImageTensor::new(Array3::zeros((3, 8, 4)), ValueRange::SignedUnit).unwrap();
        assert!(PairedSample::new("x", a, b).is_err());
    }

    proptest! {
        // normalize and denormalize are mutually inverse on [0, 255] inputs.
        #[test]
        fn normalize_round_trips(values in proptest::collection::vec(0.0f64..=255.0, 48)) {
            let data = Array3::from_shape_vec((3, 4, 4), values).unwrap();
            let img = ImageTensor::new(data.clone(), ValueRange::Byte).unwrap();
            let (back, clamped) = img.normalized().unwrap().denormalized();
            prop_assert_eq!(clamped, 0);
            for (orig, round) in data.iter().zip(back.data().iter()) {
                prop_assert!((orig - round).abs() < 1e-6);
            }
        }
    }
}
