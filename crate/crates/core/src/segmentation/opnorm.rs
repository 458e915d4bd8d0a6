//! L2 operator norm of the difference between two partition-averaging
//! projections, and an empirical sensitivity probe for input-dependent
//! segmentation schemes.

use super::{SegScheme, Segmentation};
use crate::error::Error;
use crate::image::Image;
use crate::rng::{sample_gaussian_image, Rng};
use crate::scalar::Real;
use crate::Result;

/// Estimates `‖A − A'‖₂` for the averaging projections of two
/// segmentations of the same pixel grid.
///
/// Power iteration runs on the symmetric map `v ↦ (A − A')((A − A')v)`
/// over a single channel plane; `iters` below 50 is raised to 50. The
/// projections are never materialized. Identical segmentations return 0
/// exactly.
pub fn operator_norm_diff(
    seg_a: &Segmentation,
    seg_b: &Segmentation,
    iters: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if seg_a.height() != seg_b.height() || seg_a.width() != seg_b.width() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", seg_a.height(), seg_a.width()),
            got: format!("{}x{}", seg_b.height(), seg_b.width()),
        });
    }
    if seg_a.labels() == seg_b.labels() {
        return Ok(0.0);
    }

    let n = seg_a.height() * seg_a.width();
    let iters = iters.max(50);
    let mut v: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
    normalize(&mut v);
    let mut dv = vec![0.0f64; n];
    let mut ddv = vec![0.0f64; n];
    let mut sums_a = vec![0.0f64; seg_a.partition_count()];
    let mut sums_b = vec![0.0f64; seg_b.partition_count()];
    let mut restarts = 0;
    for _ in 0..iters {
        apply_diff(seg_a, seg_b, &v, &mut sums_a, &mut sums_b, &mut dv);
        apply_diff(seg_a, seg_b, &dv, &mut sums_a, &mut sums_b, &mut ddv);
        let norm = l2(&ddv);
        if norm < 1e-280 {
            // The start vector all but vanished under the map; one
            // re-draw rules out bad luck, after which the difference is
            // numerically zero.
            if restarts > 0 {
                return Ok(0.0);
            }
            restarts += 1;
            for entry in v.iter_mut() {
                *entry = rng.standard_normal();
            }
            normalize(&mut v);
            continue;
        }
        for (vi, wi) in v.iter_mut().zip(&ddv) {
            *vi = wi / norm;
        }
    }
    apply_diff(seg_a, seg_b, &v, &mut sums_a, &mut sums_b, &mut dv);
    Ok(l2(&dv))
}

/// Empirical sensitivity of a segmentation scheme: the largest observed
/// ratio `‖A_{S(x)} − A_{S(x + δ)}‖₂ / ‖δ‖₂` over `pairs` Gaussian
/// perturbations `δ` of standard deviation `perturb_scale`, cycling
/// through `images`.
///
/// Superpixel maps are piecewise constant in the input, so no finite
/// global Lipschitz constant exists in general; the returned value is an
/// empirical lower bound on the local sensitivity, not a certified bound.
/// `perturb_scale` 0 is degenerate and returns 0.
pub fn estimate_rho<T: Real>(
    images: &[Image<T>],
    scheme: &SegScheme,
    pairs: usize,
    perturb_scale: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Domain("sensitivity probe needs a nonempty dataset".into()));
    }
    if pairs == 0 {
        return Err(Error::Domain("pair count must be positive".into()));
    }
    if !(perturb_scale >= 0.0) || !perturb_scale.is_finite() {
        return Err(Error::Domain(format!(
            "perturb_scale must be nonnegative, got {perturb_scale}"
        )));
    }
    if perturb_scale == 0.0 {
        return Ok(0.0);
    }

    let mut base_segs: Vec<Option<Segmentation>> = vec![None; images.len()];
    let mut worst = 0.0f64;
    for pair in 0..pairs {
        let index = pair % images.len();
        let image = &images[index];
        if base_segs[index].is_none() {
            base_segs[index] = Some(scheme.segment(image)?);
        }
        let mut child = rng.child(pair as u64);
        let noise = sample_gaussian_image::<T>(
            image.height(),
            image.width(),
            image.channels(),
            perturb_scale,
            &mut child,
        )?;
        let perturbed = image.add(&noise)?;
        let seg_perturbed = scheme.segment(&perturbed)?;
        let diff = operator_norm_diff(
            base_segs[index].as_ref().expect("cached above"),
            &seg_perturbed,
            100,
            &mut child,
        )?;
        let delta_norm = noise.l2_norm();
        if diff > 0.0 && delta_norm > 0.0 {
            worst = worst.max(diff / delta_norm);
        }
    }
    Ok(worst)
}

/// out = A_a v − A_b v, where A_s v replaces each entry by its partition
/// mean.
fn apply_diff(
    seg_a: &Segmentation,
    seg_b: &Segmentation,
    v: &[f64],
    sums_a: &mut [f64],
    sums_b: &mut [f64],
    out: &mut [f64],
) {
    sums_a.fill(0.0);
    sums_b.fill(0.0);
    for (i, &value) in v.iter().enumerate() {
        sums_a[seg_a.labels()[i] as usize] += value;
        sums_b[seg_b.labels()[i] as usize] += value;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        let la = seg_a.labels()[i] as usize;
        let lb = seg_b.labels()[i] as usize;
        *slot = sums_a[la] / seg_a.sizes()[la] as f64 - sums_b[lb] / seg_b.sizes()[lb] as f64;
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let norm = l2(v);
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}
