//! Graph-based segmentation: greedy region merging over the 8-connected
//! pixel graph, with an adaptive threshold that favors merging small
//! regions.

use super::Segmentation;
use crate::error::Error;
use crate::image::Image;
use crate::scalar::Real;
use crate::Result;

/// Segments by sorting all 8-neighbor edges by color distance and merging
/// the two regions of an edge of weight `w` when
/// `w <= min(Int(C) + scale / |C|)` over both regions, where `Int` is the
/// largest edge weight already absorbed into a region. A second pass
/// merges every region smaller than `min_size` into a neighbor. Larger
/// `scale` yields coarser partitions.
pub fn felzenszwalb<T: Real>(
    image: &Image<T>,
    scale: f64,
    min_size: usize,
) -> Result<Segmentation> {
    let (h, w) = (image.height(), image.width());
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Domain(format!("scale must be positive, got {scale}")));
    }
    if min_size == 0 || min_size > h * w {
        return Err(Error::Domain(format!(
            "min_size must lie in 1..={}, got {min_size}",
            h * w
        )));
    }

    // Forward edges (east, south, south-east, south-west) cover every
    // 8-adjacent pair exactly once, in row-major generation order.
    let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(4 * h * w);
    for y in 0..h {
        for x in 0..w {
            let a = (y * w + x) as u32;
            if x + 1 < w {
                edges.push((color_distance(image, y, x, y, x + 1), a, a + 1));
            }
            if y + 1 < h {
                edges.push((color_distance(image, y, x, y + 1, x), a, a + w as u32));
            }
            if y + 1 < h && x + 1 < w {
                edges.push((color_distance(image, y, x, y + 1, x + 1), a, a + w as u32 + 1));
            }
            if y + 1 < h && x > 0 {
                edges.push((color_distance(image, y, x, y + 1, x - 1), a, a + w as u32 - 1));
            }
        }
    }
    // Stable sort keeps equal-weight edges in generation order, making the
    // result deterministic.
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut forest = Forest::new(h * w);
    for &(weight, a, b) in &edges {
        let (ra, rb) = (forest.find(a as usize), forest.find(b as usize));
        if ra == rb {
            continue;
        }
        let reach_a = forest.internal[ra] + scale / forest.size[ra] as f64;
        let reach_b = forest.internal[rb] + scale / forest.size[rb] as f64;
        if weight <= reach_a.min(reach_b) {
            forest.union(ra, rb, weight);
        }
    }

    // Absorb undersized regions into whatever neighbor the edge order
    // offers first.
    for &(weight, a, b) in &edges {
        let (ra, rb) = (forest.find(a as usize), forest.find(b as usize));
        if ra != rb && (forest.size[ra] < min_size || forest.size[rb] < min_size) {
            forest.union(ra, rb, weight);
        }
    }

    let labels: Vec<u32> = (0..h * w).map(|i| forest.find(i) as u32).collect();
    Segmentation::from_labels(h, w, labels)
}

#[inline]
fn color_distance<T: Real>(image: &Image<T>, y0: usize, x0: usize, y1: usize, x1: usize) -> f64 {
    let mut sq = 0.0;
    for k in 0..image.channels() {
        let d = image.get(y0, x0, k).into64() - image.get(y1, x1, k).into64();
        sq += d * d;
    }
    sq.sqrt()
}

struct Forest {
    parent: Vec<usize>,
    size: Vec<usize>,
    internal: Vec<f64>,
}

impl Forest {
    fn new(n: usize) -> Self {
        Forest {
            parent: (0..n).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// Merges two roots; edges arrive in ascending weight order, so the
    /// merging weight is the new region's largest internal edge.
    fn union(&mut self, ra: usize, rb: usize, weight: f64) {
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = self.internal[big].max(self.internal[small]).max(weight);
    }
}
