//! Image partitions (superpixel segmentations) and partition averaging.
//!
//! A [`Segmentation`] assigns every pixel one partition label (all channels
//! of a pixel share the label). [`partition_average`] replaces each pixel
//! by the mean of its partition per channel; as a linear operator this is
//! an orthogonal projection, so applying it twice equals applying it once
//! and it never increases the L2 norm. Averaging a pure-noise field shrinks
//! the per-pixel noise std inside a partition of `m` pixels by `sqrt(m)`.

mod felzenszwalb;
mod grid;
mod opnorm;
mod quickshift;
mod slic;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use felzenszwalb::felzenszwalb;
pub use grid::grid_partition;
pub use opnorm::{estimate_rho, operator_norm_diff};
pub use quickshift::quickshift;
pub use slic::slic;

use crate::error::Error;
use crate::image::Image;
use crate::scalar::Real;
use crate::Result;

/// A partition of the `height x width` pixel grid.
///
/// Labels are compact: exactly the values `0..partition_count`, numbered by
/// first appearance in row-major order, so two segmentations describe the
/// same partition iff their label vectors are equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    sizes: Vec<usize>,
}

impl Segmentation {
    /// Builds a segmentation from arbitrary labels, renumbering them into
    /// compact first-appearance order.
    pub fn from_labels(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Domain(format!(
                "segmentation dimensions must be positive, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", height * width),
                got: format!("{} labels", labels.len()),
            });
        }
        let mut remap: std::collections::HashMap<u32, u32> = Default::default();
        let mut compact = Vec::with_capacity(labels.len());
        let mut sizes = Vec::new();
        for &raw in &labels {
            let next = remap.len() as u32;
            let id = *remap.entry(raw).or_insert(next);
            if id as usize == sizes.len() {
                sizes.push(0);
            }
            sizes[id as usize] += 1;
            compact.push(id);
        }
        Ok(Self {
            height,
            width,
            labels: compact,
            sizes,
        })
    }

    /// Every pixel its own partition.
    pub fn identity(height: usize, width: usize) -> Result<Self> {
        let labels = (0..height * width).map(|i| i as u32).collect();
        Self::from_labels(height, width, labels)
    }

    /// All pixels in one partition.
    pub fn single(height: usize, width: usize) -> Result<Self> {
        Self::from_labels(height, width, vec![0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn partition_count(&self) -> usize {
        self.sizes.len()
    }

    /// Row-major per-pixel labels.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Pixel count per partition; sums to `pixel_count`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    #[inline]
    pub fn label_at(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Plain-text label map: a `width height partition_count` header line,
    /// then one line of labels per pixel row.
    pub fn format_label_map(&self) -> String {
        let mut out = format!("{} {} {}\n", self.width, self.height, self.partition_count());
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| self.label_at(y, x).to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write_label_map(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.format_label_map())?;
        Ok(())
    }
}

/// Replaces every pixel by the per-channel arithmetic mean of its
/// partition. Accumulation happens in `f64` regardless of the pixel
/// scalar.
pub fn partition_average<T: Real>(image: &Image<T>, seg: &Segmentation) -> Result<Image<T>> {
    if image.height() != seg.height() || image.width() != seg.width() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} segmentation", image.height(), image.width()),
            got: format!("{}x{}", seg.height(), seg.width()),
        });
    }
    let channels = image.channels();
    let parts = seg.partition_count();
    let mut sums = vec![0.0f64; parts * channels];
    for (pix, &label) in seg.labels().iter().enumerate() {
        for c in 0..channels {
            sums[label as usize * channels + c] += image.data()[pix * channels + c].into64();
        }
    }
    let mut means = sums;
    for (label, &size) in seg.sizes().iter().enumerate() {
        for c in 0..channels {
            means[label * channels + c] /= size as f64;
        }
    }
    let mut out = image.clone();
    for (pix, &label) in seg.labels().iter().enumerate() {
        for c in 0..channels {
            out.data_mut()[pix * channels + c] = T::from64(means[label as usize * channels + c]);
        }
    }
    Ok(out)
}

/// A segmentation algorithm plus its parameters, applicable to any image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SegScheme {
    /// Fixed rectangular cells, independent of image content.
    Grid { cell_height: usize, cell_width: usize },
    /// SLIC superpixels: local k-means over (color, position).
    Slic {
        components: usize,
        compactness: f64,
        iterations: usize,
    },
    /// Graph-based segmentation with an adaptive merge threshold.
    Felzenszwalb { scale: f64, min_size: usize },
    /// Mode seeking on a kernel density estimate in (color, position).
    Quickshift {
        kernel_size: f64,
        max_dist: f64,
        ratio: f64,
    },
}

impl SegScheme {
    /// Runs the scheme on an image.
    pub fn segment<T: Real>(&self, image: &Image<T>) -> Result<Segmentation> {
        match *self {
            SegScheme::Grid {
                cell_height,
                cell_width,
            } => grid_partition(image.height(), image.width(), cell_height, cell_width),
            SegScheme::Slic {
                components,
                compactness,
                iterations,
            } => slic(image, components, compactness, iterations),
            SegScheme::Felzenszwalb { scale, min_size } => felzenszwalb(image, scale, min_size),
            SegScheme::Quickshift {
                kernel_size,
                max_dist,
                ratio,
            } => quickshift(image, kernel_size, max_dist, ratio),
        }
    }

    /// Stable one-line descriptor for manifests and reports.
    pub fn describe(&self) -> String {
        match *self {
            SegScheme::Grid {
                cell_height,
                cell_width,
            } => format!("grid(cell={cell_height}x{cell_width})"),
            SegScheme::Slic {
                components,
                compactness,
                iterations,
            } => format!("slic(components={components},compactness={compactness},iterations={iterations})"),
            SegScheme::Felzenszwalb { scale, min_size } => {
                format!("felzenszwalb(scale={scale},min_size={min_size})")
            }
            SegScheme::Quickshift {
                kernel_size,
                max_dist,
                ratio,
            } => format!("quickshift(kernel_size={kernel_size},max_dist={max_dist},ratio={ratio})"),
        }
    }
}
