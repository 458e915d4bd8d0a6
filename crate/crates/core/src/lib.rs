//! Certified L2 robustness for image classifiers via Gaussian randomized
//! smoothing, optionally boosted by pixel-partition averaging (PPRS).
//!
//! A smoothed classifier predicts the majority vote of a base classifier
//! under isotropic Gaussian input noise and comes with a certified L2 radius
//! derived from a lower confidence bound on the top-class probability.
//! Averaging pixel intensities within superpixel partitions before
//! classification shrinks the effective noise seen by the base classifier
//! (per-partition noise std drops by the square root of the partition size),
//! which raises the certified bound without retraining.
//!
//! The crate is organized as:
//! - [`image`], [`pnm`], [`idx`], [`blobs`]: image containers and file I/O
//! - [`rng`], [`stats`]: deterministic sampling and the exact statistics
//!   behind the certificates
//! - [`segmentation`]: grid, SLIC, Felzenszwalb, and quickshift partitioners
//!   plus partition averaging and operator-norm diagnostics
//! - [`classifier`]: small base classifiers (halfspace, nearest centroid,
//!   tiny MLP)
//! - [`certify`]: the two-phase Monte-Carlo certification engine
//! - [`eval`]: certified-accuracy curves, sweeps, attack probes, manifests
//!
//! Core containers are generic over the scalar type via [`scalar::Real`]
//! (`f32` or `f64`); certificate statistics are always computed in `f64`.

pub mod blobs;
pub mod certify;
pub mod classifier;
pub mod error;
pub mod eval;
pub mod idx;
pub mod image;
pub mod pnm;
pub mod rng;
pub mod scalar;
pub mod segmentation;
pub mod stats;

pub use error::Error;
pub use scalar::Real;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Single-precision image.
pub type Image32 = image::Image<f32>;
/// Double-precision image, the default throughout the pipeline.
pub type Image64 = image::Image<f64>;
/// Single-precision labeled dataset.
pub type Dataset32 = image::LabeledDataset<f32>;
/// Double-precision labeled dataset, the default throughout the pipeline.
pub type Dataset64 = image::LabeledDataset<f64>;

/// Runs `f` inside a dedicated rayon pool of `workers` threads, or on the
/// global pool when `workers` is `None`.
///
/// Sampling loops derive one RNG per sample index, so results are identical
/// for every worker count; this only controls how the work is spread.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        None => f(),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .expect("building a rayon pool cannot fail with a positive thread count")
            .install(f),
    }
}
