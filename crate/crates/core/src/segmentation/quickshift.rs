//! Quickshift segmentation: mode seeking in a joint (color, position)
//! feature space. Each pixel links to the nearest denser pixel within
//! `max_dist`, and the resulting link forest defines the segments.

use super::Segmentation;
use crate::error::Error;
use crate::image::Image;
use crate::scalar::Real;
use crate::Result;

/// Segments by kernelized density estimation over features
/// `(ratio * color, y, x)`. Density at a pixel is a Gaussian sum with
/// bandwidth `kernel_size` over a window of spatial radius
/// `ceil(3 * kernel_size)`. Each pixel then links to its nearest neighbor
/// (in feature distance, at most `max_dist`) that ranks higher in the
/// total order (density, then lower pixel index); pixels with no such
/// neighbor become segment roots. Ranking by index among equal densities
/// keeps plateaus, such as constant images, in a single segment instead
/// of splintering them into one segment per tied pixel.
pub fn quickshift<T: Real>(
    image: &Image<T>,
    kernel_size: f64,
    max_dist: f64,
    ratio: f64,
) -> Result<Segmentation> {
    let (h, w) = (image.height(), image.width());
    if !(kernel_size > 0.0) || !kernel_size.is_finite() {
        return Err(Error::Domain(format!(
            "kernel_size must be positive, got {kernel_size}"
        )));
    }
    if !(max_dist > 0.0) || !max_dist.is_finite() {
        return Err(Error::Domain(format!(
            "max_dist must be positive, got {max_dist}"
        )));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Domain(format!(
            "ratio must lie in (0, 1], got {ratio}"
        )));
    }

    let features = feature_vectors(image, ratio);
    let dim = image.channels() + 2;
    let feature_dist_sq = |a: usize, b: usize| -> f64 {
        let (pa, pb) = (a * dim, b * dim);
        let mut sq = 0.0;
        for k in 0..dim {
            let d = features[pa + k] - features[pb + k];
            sq += d * d;
        }
        sq
    };

    let density = densities(&features, h, w, dim, kernel_size);
    let ranks_higher = |j: usize, i: usize| -> bool {
        density[j] > density[i] || (density[j] == density[i] && j < i)
    };

    // The spatial coordinates alone bound the feature distance from
    // below, so candidates beyond a spatial radius of max_dist are
    // impossible.
    let link_radius = max_dist.floor() as isize;
    let max_dist_sq = max_dist * max_dist;
    let mut parent: Vec<usize> = (0..h * w).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut best: Option<(f64, usize)> = None;
            for ny in window(y, link_radius, h) {
                for nx in window(x, link_radius, w) {
                    let j = ny * w + nx;
                    if j == i || !ranks_higher(j, i) {
                        continue;
                    }
                    let d = feature_dist_sq(i, j);
                    if d > max_dist_sq {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bd, bj)) => d < bd || (d == bd && j < bj),
                    };
                    if better {
                        best = Some((d, j));
                    }
                }
            }
            if let Some((_, j)) = best {
                parent[i] = j;
            }
        }
    }

    // Labels are the link-forest roots. Links move strictly up the
    // (density, lower index) order, so every walk terminates.
    let mut labels = vec![u32::MAX; h * w];
    for start in 0..h * w {
        if labels[start] != u32::MAX {
            continue;
        }
        let mut chain = vec![start];
        let mut i = start;
        while labels[i] == u32::MAX && parent[i] != i {
            i = parent[i];
            chain.push(i);
        }
        let root = if labels[i] == u32::MAX { i as u32 } else { labels[i] };
        for p in chain {
            labels[p] = root;
        }
    }
    Segmentation::from_labels(h, w, labels)
}

/// Feature vector per pixel: scaled color channels, then row, column.
fn feature_vectors<T: Real>(image: &Image<T>, ratio: f64) -> Vec<f64> {
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let dim = ch + 2;
    let mut features = vec![0.0f64; h * w * dim];
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * dim;
            for k in 0..ch {
                features[base + k] = ratio * image.get(y, x, k).into64();
            }
            features[base + ch] = y as f64;
            features[base + ch + 1] = x as f64;
        }
    }
    features
}

/// Gaussian kernel density per pixel over a window of spatial radius
/// `ceil(3 * kernel_size)`; beyond that the kernel is negligible.
fn densities(features: &[f64], h: usize, w: usize, dim: usize, kernel_size: f64) -> Vec<f64> {
    let radius = (3.0 * kernel_size).ceil() as isize;
    let inv_two_h_sq = 1.0 / (2.0 * kernel_size * kernel_size);
    let mut density = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut sum = 0.0;
            for ny in window(y, radius, h) {
                for nx in window(x, radius, w) {
                    let j = ny * w + nx;
                    let mut sq = 0.0;
                    for k in 0..dim {
                        let d = features[i * dim + k] - features[j * dim + k];
                        sq += d * d;
                    }
                    sum += (-sq * inv_two_h_sq).exp();
                }
            }
            density[i] = sum;
        }
    }
    density
}

#[inline]
fn window(center: usize, radius: isize, len: usize) -> std::ops::RangeInclusive<usize> {
    let lo = (center as isize - radius).max(0) as usize;
    let hi = ((center as isize + radius) as usize).min(len - 1);
    lo..=hi
}
