//! SLIC superpixels: localized k-means over joint (color, position)
//! features, followed by connectivity enforcement.

use super::Segmentation;
use crate::error::Error;
use crate::image::Image;
use crate::scalar::Real;
use crate::Result;

/// Segments into roughly `components` superpixels.
///
/// Cluster centers start on a regular grid with spacing `S =
/// sqrt(height * width / components)` and are refined by `iterations`
/// rounds of assignment and recentering. A pixel competes only for centers
/// within a `2S x 2S` window, under the distance
/// `sqrt(d_color^2 + (d_spatial / S)^2 * compactness^2)` with colors in
/// their raw `[0, 1]` range; ties go to the lower center index. Fragments
/// disconnected from their cluster's main body are relabeled to the
/// largest 4-adjacent neighbor segment, so every returned segment is
/// 4-connected. The final partition count can fall below `components`
/// when fragments merge.
pub fn slic<T: Real>(
    image: &Image<T>,
    components: usize,
    compactness: f64,
    iterations: usize,
) -> Result<Segmentation> {
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    if components == 0 || components > h * w {
        return Err(Error::Domain(format!(
            "component count must lie in 1..={}, got {components}",
            h * w
        )));
    }
    if !(compactness > 0.0) || !compactness.is_finite() {
        return Err(Error::Domain(format!(
            "compactness must be positive, got {compactness}"
        )));
    }
    if iterations == 0 {
        return Err(Error::Domain("iteration count must be positive".into()));
    }

    let spacing = ((h * w) as f64 / components as f64).sqrt();
    let grid_rows = ((h as f64 / spacing).round() as usize).clamp(1, h);
    let grid_cols = ((w as f64 / spacing).round() as usize).clamp(1, w);

    // Center state: color per channel, then row, then column.
    let mut centers: Vec<Center> = Vec::with_capacity(grid_rows * grid_cols);
    for r in 0..grid_rows {
        for c in 0..grid_cols {
            let cy = (r as f64 + 0.5) * h as f64 / grid_rows as f64 - 0.5;
            let cx = (c as f64 + 0.5) * w as f64 / grid_cols as f64 - 0.5;
            let py = (cy.round() as usize).min(h - 1);
            let px = (cx.round() as usize).min(w - 1);
            let color = (0..ch).map(|k| image.get(py, px, k).into64()).collect();
            centers.push(Center { color, y: cy, x: cx });
        }
    }

    let spatial_weight = (compactness / spacing) * (compactness / spacing);
    let mut assignment = vec![u32::MAX; h * w];
    let mut best_dist = vec![f64::INFINITY; h * w];

    for iter in 0..iterations {
        assignment.fill(u32::MAX);
        best_dist.fill(f64::INFINITY);
        for (ci, center) in centers.iter().enumerate() {
            let y_lo = (center.y - spacing).ceil().max(0.0) as usize;
            let y_hi = (center.y + spacing).floor().min((h - 1) as f64) as usize;
            let x_lo = (center.x - spacing).ceil().max(0.0) as usize;
            let x_hi = (center.x + spacing).floor().min((w - 1) as f64) as usize;
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let d = center.distance_sq(image, y, x, spatial_weight);
                    let idx = y * w + x;
                    // Strict comparison keeps ties at the lower center index.
                    if d < best_dist[idx] {
                        best_dist[idx] = d;
                        assignment[idx] = ci as u32;
                    }
                }
            }
        }
        // A pixel can fall outside every window when the center grid is
        // sparse; give it the globally nearest center.
        for y in 0..h {
            for x in 0..w {
                let idx = y * w + x;
                if assignment[idx] == u32::MAX {
                    let mut best = f64::INFINITY;
                    for (ci, center) in centers.iter().enumerate() {
                        let d = center.distance_sq(image, y, x, spatial_weight);
                        if d < best {
                            best = d;
                            assignment[idx] = ci as u32;
                        }
                    }
                }
            }
        }
        if iter + 1 == iterations {
            break;
        }
        recenter(image, &assignment, &mut centers);
    }

    let labels = enforce_connectivity(h, w, assignment);
    Segmentation::from_labels(h, w, labels)
}

struct Center {
    color: Vec<f64>,
    y: f64,
    x: f64,
}

impl Center {
    #[inline]
    fn distance_sq<T: Real>(&self, image: &Image<T>, y: usize, x: usize, spatial_weight: f64) -> f64 {
        let mut color_sq = 0.0;
        for (k, &cc) in self.color.iter().enumerate() {
            let d = image.get(y, x, k).into64() - cc;
            color_sq += d * d;
        }
        let dy = y as f64 - self.y;
        let dx = x as f64 - self.x;
        color_sq + (dy * dy + dx * dx) * spatial_weight
    }
}

/// Moves every center to the mean color/position of its assigned pixels;
/// centers that attracted nothing stay put.
fn recenter<T: Real>(image: &Image<T>, assignment: &[u32], centers: &mut [Center]) {
    let ch = image.channels();
    let w = image.width();
    let mut acc = vec![0.0f64; centers.len() * (ch + 2)];
    let mut counts = vec![0usize; centers.len()];
    for (idx, &ci) in assignment.iter().enumerate() {
        let ci = ci as usize;
        let (y, x) = (idx / w, idx % w);
        let base = ci * (ch + 2);
        for k in 0..ch {
            acc[base + k] += image.get(y, x, k).into64();
        }
        acc[base + ch] += y as f64;
        acc[base + ch + 1] += x as f64;
        counts[ci] += 1;
    }
    for (ci, center) in centers.iter_mut().enumerate() {
        if counts[ci] == 0 {
            continue;
        }
        let n = counts[ci] as f64;
        let base = ci * (ch + 2);
        for k in 0..ch {
            center.color[k] = acc[base + k] / n;
        }
        center.y = acc[base + ch] / n;
        center.x = acc[base + ch + 1] / n;
    }
}

/// Relabels fragments (connected components that are not their cluster's
/// largest) to the largest 4-adjacent neighbor segment, repeating until
/// every segment is one 4-connected component.
fn enforce_connectivity(h: usize, w: usize, mut labels: Vec<u32>) -> Vec<u32> {
    loop {
        let comps = connected_components(h, w, &labels);
        // Largest component per label wins; earlier discovery breaks ties.
        let mut largest: std::collections::HashMap<u32, usize> = Default::default();
        for (id, comp) in comps.list.iter().enumerate() {
            let entry = largest.entry(comp.label).or_insert(id);
            if comps.list[*entry].size < comp.size {
                *entry = id;
            }
        }
        let kept: Vec<bool> = comps
            .list
            .iter()
            .enumerate()
            .map(|(id, comp)| largest[&comp.label] == id)
            .collect();
        if kept.iter().all(|&k| k) {
            return labels;
        }

        // Union every fragment with its biggest 4-adjacent neighbor.
        let mut parent: Vec<usize> = (0..comps.list.len()).collect();
        for frag in 0..comps.list.len() {
            if kept[frag] {
                continue;
            }
            let mut best: Option<(usize, usize)> = None; // (size, id)
            for idx in 0..labels.len() {
                if comps.by_pixel[idx] as usize != frag {
                    continue;
                }
                let (y, x) = (idx / w, idx % w);
                let mut consider = |ny: usize, nx: usize| {
                    let n = comps.by_pixel[ny * w + nx] as usize;
                    if n != frag {
                        let cand = (comps.list[n].size, n);
                        let better = match best {
                            None => true,
                            Some((bs, bi)) => cand.0 > bs || (cand.0 == bs && cand.1 < bi),
                        };
                        if better {
                            best = Some(cand);
                        }
                    }
                };
                if y > 0 {
                    consider(y - 1, x);
                }
                if y + 1 < h {
                    consider(y + 1, x);
                }
                if x > 0 {
                    consider(y, x - 1);
                }
                if x + 1 < w {
                    consider(y, x + 1);
                }
            }
            if let Some((_, neighbor)) = best {
                union(&mut parent, frag, neighbor);
            }
        }

        // Each merged class takes the label of its kept member, or of its
        // largest member when the class is all fragments.
        let mut class_label: std::collections::HashMap<usize, (bool, usize, usize, u32)> =
            Default::default();
        for (id, comp) in comps.list.iter().enumerate() {
            let root = find(&mut parent, id);
            let cand = (kept[id], comp.size, usize::MAX - id, comp.label);
            let entry = class_label.entry(root).or_insert(cand);
            if cand > *entry {
                *entry = cand;
            }
        }
        for idx in 0..labels.len() {
            let root = find(&mut parent, comps.by_pixel[idx] as usize);
            labels[idx] = class_label[&root].3;
        }
    }
}

struct Component {
    label: u32,
    size: usize,
}

struct Components {
    by_pixel: Vec<u32>,
    list: Vec<Component>,
}

/// 4-connected components of equal-label pixels, discovered in row-major
/// scan order.
fn connected_components(h: usize, w: usize, labels: &[u32]) -> Components {
    let mut by_pixel = vec![u32::MAX; h * w];
    let mut list = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if by_pixel[start] != u32::MAX {
            continue;
        }
        let id = list.len() as u32;
        let label = labels[start];
        let mut size = 0usize;
        by_pixel[start] = id;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            size += 1;
            let (y, x) = (idx / w, idx % w);
            let mut visit = |n: usize| {
                if by_pixel[n] == u32::MAX && labels[n] == label {
                    by_pixel[n] = id;
                    stack.push(n);
                }
            };
            if y > 0 {
                visit(idx - w);
            }
            if y + 1 < h {
                visit(idx + w);
            }
            if x > 0 {
                visit(idx - 1);
            }
            if x + 1 < w {
                visit(idx + 1);
            }
        }
        list.push(Component { label, size });
    }
    Components { by_pixel, list }
}

fn find(parent: &mut Vec<usize>, mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

fn union(parent: &mut Vec<usize>, a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra] = rb;
    }
}
