//! Uniform rectangular partitions.

use super::Segmentation;
use crate::error::Error;
use crate::Result;

/// Partitions the pixel grid into `cell_height x cell_width` cells, with
/// smaller cells on the bottom/right edges when the dimensions do not
/// divide evenly. Cells are numbered in row-major cell order.
pub fn grid_partition(
    height: usize,
    width: usize,
    cell_height: usize,
    cell_width: usize,
) -> Result<Segmentation> {
    if cell_height == 0 || cell_width == 0 {
        return Err(Error::Domain(format!(
            "cell dimensions must be positive, got {cell_height}x{cell_width}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::Domain(format!(
            "image dimensions must be positive, got {height}x{width}"
        )));
    }
    let cells_x = width.div_ceil(cell_width);
    let mut labels = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            labels.push(((y / cell_height) * cells_x + x / cell_width) as u32);
        }
    }
    Segmentation::from_labels(height, width, labels)
}
