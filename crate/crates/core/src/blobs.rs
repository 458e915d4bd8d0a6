//! Synthetic piecewise-constant images: Voronoi cells of random sites,
//! each filled with one of a small set of intensity levels.
//!
//! The label of an image is the intensity bucket of its dominant (largest)
//! cell, so labels are predictable from image content, which makes the
//! dataset suitable for training and certifying small classifiers.

use crate::error::Error;
use crate::image::{Image, LabeledDataset};
use crate::rng::{split_seed, Rng};
use crate::scalar::Real;
use crate::Result;

/// The Voronoi cell index per pixel (row-major), for the same `(height,
/// width, num_regions, seed)` arguments as [`generate_blobs`]. Cells are
/// numbered by site draw order.
pub fn blobs_cell_map(
    height: usize,
    width: usize,
    num_regions: usize,
    seed: u64,
) -> Result<Vec<u32>> {
    let mut rng = Rng::from_seed(seed);
    Ok(sample_cells(height, width, num_regions, &mut rng)?.0)
}

/// One synthetic image and its label.
///
/// Pure function of its arguments: the same inputs always produce the same
/// image. Intensities take at most `num_regions` distinct values, drawn
/// from `num_classes` evenly spaced levels `(2b + 1) / (2 * num_classes)`;
/// when `num_regions <= num_classes` the cells get pairwise distinct
/// levels. The label is the level bucket of the largest cell.
pub fn generate_blobs<T: Real>(
    height: usize,
    width: usize,
    num_regions: usize,
    num_classes: usize,
    seed: u64,
) -> Result<(Image<T>, usize)> {
    if num_classes == 0 {
        return Err(Error::Domain("class count must be positive".into()));
    }
    let mut rng = Rng::from_seed(seed);
    let (cells, sizes) = sample_cells(height, width, num_regions, &mut rng)?;

    // Bucket per cell: a random permutation keeps buckets distinct while
    // they last, then extra cells draw uniformly.
    let perm = rng.permutation(num_classes);
    let buckets: Vec<usize> = (0..num_regions)
        .map(|i| {
            if i < num_classes {
                perm[i]
            } else {
                rng.below(num_classes as u64) as usize
            }
        })
        .collect();

    let level = |b: usize| (2 * b + 1) as f64 / (2 * num_classes) as f64;
    let data = cells
        .iter()
        .map(|&c| T::from64(level(buckets[c as usize])))
        .collect();
    let image = Image::new(height, width, 1, data)?;

    // Dominant cell: largest, ties to the lower cell index.
    let dominant = (0..num_regions)
        .max_by_key(|&i| (sizes[i], std::cmp::Reverse(i)))
        .expect("num_regions >= 1 was validated");
    Ok((image, buckets[dominant]))
}

/// A labeled dataset of `count` independent blob images; entry `i` is
/// generated from the child seed `split_seed(seed, i)`.
pub fn generate_blobs_dataset<T: Real>(
    height: usize,
    width: usize,
    num_regions: usize,
    num_classes: usize,
    count: usize,
    seed: u64,
) -> Result<LabeledDataset<T>> {
    if count == 0 {
        return Err(Error::Domain("dataset size must be positive".into()));
    }
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let (img, label) =
            generate_blobs::<T>(height, width, num_regions, num_classes, split_seed(seed, i as u64))?;
        images.push(img);
        labels.push(label);
    }
    LabeledDataset::new(images, labels, num_classes)
}

/// Draws Voronoi sites and returns `(cell index per pixel, cell sizes)`.
///
/// Sites are resampled a few times in favor of layouts whose smallest cell
/// is not degenerately tiny, keeping cells usable as segmentation ground
/// truth; the procedure stays a pure function of the generator state.
fn sample_cells(
    height: usize,
    width: usize,
    num_regions: usize,
    rng: &mut Rng,
) -> Result<(Vec<u32>, Vec<usize>)> {
    if height == 0 || width == 0 {
        return Err(Error::Domain(format!(
            "image dimensions must be positive, got {height}x{width}"
        )));
    }
    let pixels = height * width;
    if num_regions == 0 || num_regions > pixels {
        return Err(Error::Domain(format!(
            "region count must lie in 1..={pixels}, got {num_regions}"
        )));
    }
    let target_min = pixels / (3 * num_regions);
    let mut best: Option<(Vec<u32>, Vec<usize>, usize)> = None;
    for _ in 0..8 {
        let sites = rng.sample_distinct(pixels, num_regions);
        let (cells, sizes) = voronoi(height, width, &sites);
        let min_size = sizes.iter().copied().min().unwrap_or(0);
        if best.as_ref().is_none_or(|(_, _, m)| min_size > *m) {
            best = Some((cells, sizes, min_size));
        }
        if min_size >= target_min {
            break;
        }
    }
    let (cells, sizes, _) = best.expect("at least one attempt always runs");
    Ok((cells, sizes))
}

fn voronoi(height: usize, width: usize, sites: &[usize]) -> (Vec<u32>, Vec<usize>) {
    let coords: Vec<(isize, isize)> = sites
        .iter()
        .map(|&s| ((s / width) as isize, (s % width) as isize))
        .collect();
    let mut cells = vec![0u32; height * width];
    let mut sizes = vec![0usize; sites.len()];
    for y in 0..height {
        for x in 0..width {
            let mut best = 0usize;
            let mut best_d = isize::MAX;
            for (i, &(sy, sx)) in coords.iter().enumerate() {
                let dy = sy - y as isize;
                let dx = sx - x as isize;
                let d = dy * dy + dx * dx;
                // Strict comparison keeps ties at the lower site index.
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            cells[y * width + x] = best as u32;
            sizes[best] += 1;
        }
    }
    (cells, sizes)
}
