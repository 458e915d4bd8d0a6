//! Dense image container and labeled datasets.

use crate::error::Error;
use crate::scalar::Real;
use crate::Result;

/// A dense `height x width x channels` image, row-major with interleaved
/// channels (index `(y * width + x) * channels + c`).
///
/// Images are immutable after construction; operations that change pixels
/// return a new image. Intensities are nominally in `[0, 1]` after loading,
/// but arithmetic (noise addition, averaging) may leave that range; values
/// are clamped only when written back to a pixel file.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    /// Builds an image from raw row-major interleaved data.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Domain(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Domain(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}x{channels} = {expected} samples"),
                got: format!("{} samples", data.len()),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// All-zero image of the given shape.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![T::zero(); height * width * channels])
    }

    /// Constant-intensity image of the given shape.
    pub fn constant(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Pixels per channel plane.
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Total scalar entries (`pixel_count * channels`).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `"HxWxC"`, for error messages.
    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    /// True when `other` has the same height, width, and channel count.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Intensity at `(y, x)` in channel `c`.
    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Elementwise difference; shapes must match.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch {
                expected: self.shape_string(),
                got: other.shape_string(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        })
    }

    /// New image with every entry mapped through `f`.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// New image scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let k = T::from64(factor);
        self.map(|v| v * k)
    }

    /// L2 norm over all entries, accumulated in `f64`.
    pub fn l2_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let x = v.into64();
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Inner product with `other` over all entries, accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch {
                expected: self.shape_string(),
                got: other.shape_string(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.into64() * b.into64())
            .sum())
    }

    /// Converts the pixel scalar type.
    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::from64(v.into64())).collect(),
        }
    }
}

/// Images with integer class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset<T> {
    images: Vec<Image<T>>,
    labels: Vec<usize>,
    class_count: usize,
}

impl<T: Real> LabeledDataset<T> {
    /// Builds a dataset, checking that lengths agree, shapes are uniform,
    /// and every label is below `class_count`.
    pub fn new(images: Vec<Image<T>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::CountMismatch {
                left_name: "images".into(),
                left: images.len(),
                right_name: "labels".into(),
                right: labels.len(),
            });
        }
        if let Some(first) = images.first() {
            for img in &images[1..] {
                if !first.same_shape(img) {
                    return Err(Error::ShapeMismatch {
                        expected: first.shape_string(),
                        got: img.shape_string(),
                    });
                }
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::MissingClass {
                class: bad,
                reason: format!("label out of range for {class_count} classes"),
            });
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image<T>] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Dataset holding only the first `n` entries (or all, if fewer).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            class_count: self.class_count,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::<f64>::new(0, 4, 1, vec![]).is_err());
        assert!(Image::<f64>::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Image::<f64>::new(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn indexing_is_row_major_interleaved() {
        let data: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let img = Image::new(2, 2, 3, data).unwrap();
        assert_eq!(img.get(0, 0, 0), 0.0);
        assert_eq!(img.get(0, 0, 2), 2.0);
        assert_eq!(img.get(0, 1, 0), 3.0);
        assert_eq!(img.get(1, 0, 1), 7.0);
        assert_eq!(img.get(1, 1, 2), 11.0);
    }

    #[test]
    fn arithmetic_and_norms() {
        let a = Image::new(1, 2, 1, vec![3.0, 4.0]).unwrap();
        let b = Image::new(1, 2, 1, vec![1.0, 1.0]).unwrap();
        assert_eq!(a.l2_norm(), 5.0);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 5.0]);
        assert_eq!(a.sub(&b).unwrap().data(), &[2.0, 3.0]);
        assert_eq!(a.dot(&b).unwrap(), 7.0);
        let c = Image::<f64>::zeros(2, 1, 1).unwrap();
        assert!(a.add(&c).is_err());
    }

    #[test]
    fn dataset_validation() {
        let img = Image::<f64>::zeros(2, 2, 1).unwrap();
        assert!(LabeledDataset::new(vec![img.clone()], vec![0, 1], 2).is_err());
        assert!(LabeledDataset::new(vec![img.clone()], vec![2], 2).is_err());
        let other = Image::<f64>::zeros(3, 2, 1).unwrap();
        assert!(LabeledDataset::new(vec![img.clone(), other], vec![0, 1], 2).is_err());
        let ds = LabeledDataset::new(vec![img.clone(), img], vec![0, 1], 2).unwrap();
        assert_eq!(ds.take(1).len(), 1);
    }
}
