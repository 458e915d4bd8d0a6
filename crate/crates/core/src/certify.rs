//! Randomized-smoothing certification.
//!
//! The smoothed classifier predicts the most likely label of `f(x + Z)`
//! under isotropic Gaussian noise `Z`. Its prediction at `x` is provably
//! stable under any L2 perturbation of norm at most `sigma * C`, where
//! `C = Φ⁻¹(p_A)` comes from a lower confidence bound `p_A` on the top
//! class probability. Certification is two-phase Monte-Carlo: a small
//! selection round picks the candidate class, a larger estimation round
//! bounds its probability, and the engine abstains when the bound cannot
//! clear one half.
//!
//! A transform can average pixels within a partition before the base
//! classifier sees the noisy image; averaging over a partition of size m
//! shrinks the effective per-pixel noise to `sigma / sqrt(m)` while the
//! certified radius formula is unchanged for a fixed partition. For
//! input-dependent partitions the radius can be discounted by a
//! sensitivity factor rho; two corrected forms, `(1 - rho) * sigma * C`
//! and `sigma * C / (1 + 3 * rho)`, are exposed because the two
//! derivations they come from disagree, and neither is the default
//! reported radius.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::Error;
use crate::image::Image;
use crate::rng::{sample_gaussian_image, Rng};
use crate::scalar::Real;
use crate::segmentation::{partition_average, SegScheme, Segmentation};
use crate::stats::{binom_two_sided_p, clopper_pearson_lower, std_normal_inv_cdf};
use crate::Result;

/// Monte-Carlo smoothing parameters.
///
/// `n0` selection samples pick the candidate class, `n` fresh samples
/// estimate its probability lower bound at failure level `alpha`, and
/// `batch` is the scheduling granularity for parallel sampling (it never
/// affects results).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub n0: usize,
    pub n: usize,
    pub alpha: f64,
    pub batch: usize,
}

pub const DEFAULT_BATCH: usize = 32;

impl SmoothingConfig {
    pub fn new(sigma: f64, n0: usize, n: usize, alpha: f64) -> Result<Self> {
        let cfg = Self {
            sigma,
            n0,
            n,
            alpha,
            batch: DEFAULT_BATCH,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default estimation budget: 100 selection and 10^4 estimation
    /// samples at alpha 0.001.
    pub fn desk_preset(sigma: f64) -> Self {
        Self {
            sigma,
            n0: 100,
            n: 10_000,
            alpha: 0.001,
            batch: DEFAULT_BATCH,
        }
    }

    /// Reduced budget (100 selection, 1000 estimation samples) for quick
    /// runs.
    pub fn light_preset(sigma: f64) -> Self {
        Self {
            sigma,
            n0: 100,
            n: 1_000,
            alpha: 0.001,
            batch: DEFAULT_BATCH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain(format!(
                "noise std must be positive, got {}",
                self.sigma
            )));
        }
        if self.n0 == 0 {
            return Err(Error::Domain("selection sample count must be positive".into()));
        }
        if self.n < self.n0 {
            return Err(Error::Domain(format!(
                "estimation samples ({}) must be at least the selection samples ({})",
                self.n, self.n0
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!(
                "failure probability must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.batch == 0 {
            return Err(Error::Domain("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// What happens to each noisy sample before the base classifier sees it.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformSpec {
    /// Plain randomized smoothing: the noisy image goes straight in.
    None,
    /// Partition averaging with one fixed, caller-supplied segmentation.
    Static(Segmentation),
    /// The scheme runs once on the clean input; that segmentation then
    /// averages every noisy sample.
    FixedOnInput(SegScheme),
    /// The scheme runs on each noisy sample before averaging.
    Dynamic(SegScheme),
}

impl TransformSpec {
    /// Stable one-line descriptor for manifests and reports.
    pub fn describe(&self) -> String {
        match self {
            TransformSpec::None => "rs".into(),
            TransformSpec::Static(seg) => format!(
                "pprs-static({}x{},partitions={})",
                seg.height(),
                seg.width(),
                seg.partition_count()
            ),
            TransformSpec::FixedOnInput(scheme) => format!("pprs-fixed({})", scheme.describe()),
            TransformSpec::Dynamic(scheme) => format!("pprs-dynamic({})", scheme.describe()),
        }
    }

    /// Which radius formula family applies to certificates made with this
    /// transform.
    pub fn variant(&self) -> RadiusVariant {
        match self {
            TransformSpec::None => RadiusVariant::Vanilla,
            TransformSpec::Static(_) | TransformSpec::FixedOnInput(_) => {
                RadiusVariant::StaticPartition
            }
            TransformSpec::Dynamic(_) => RadiusVariant::DynamicUncorrected,
        }
    }

    fn resolve<T: Real>(&self, image: &Image<T>) -> Result<ResolvedTransform<'_>> {
        match self {
            TransformSpec::None => Ok(ResolvedTransform::Identity),
            TransformSpec::Static(seg) => {
                if seg.height() != image.height() || seg.width() != image.width() {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{}x{} segmentation", image.height(), image.width()),
                        got: format!("{}x{}", seg.height(), seg.width()),
                    });
                }
                Ok(ResolvedTransform::Fixed(std::borrow::Cow::Borrowed(seg)))
            }
            TransformSpec::FixedOnInput(scheme) => Ok(ResolvedTransform::Fixed(
                std::borrow::Cow::Owned(scheme.segment(image)?),
            )),
            TransformSpec::Dynamic(scheme) => Ok(ResolvedTransform::PerSample(scheme)),
        }
    }
}

enum ResolvedTransform<'a> {
    Identity,
    Fixed(std::borrow::Cow<'a, Segmentation>),
    PerSample(&'a SegScheme),
}

/// A smoothed classifier's answer: a class index, or a refusal when the
/// Monte-Carlo evidence cannot statistically separate the top class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    Abstain,
}

impl Prediction {
    pub fn is_abstain(&self) -> bool {
        matches!(self, Prediction::Abstain)
    }

    pub fn class(&self) -> Option<usize> {
        match *self {
            Prediction::Class(c) => Some(c),
            Prediction::Abstain => None,
        }
    }
}

impl Serialize for Prediction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Prediction::Class(c) => serializer.serialize_u64(c as u64),
            Prediction::Abstain => serializer.serialize_str("abstain"),
        }
    }
}

impl<'de> Deserialize<'de> for Prediction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = Prediction;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("a class index or the string \"abstain\"")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Prediction, E> {
                Ok(Prediction::Class(v as usize))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Prediction, E> {
                if v < 0 {
                    return Err(E::custom(format!("negative class index {v}")));
                }
                Ok(Prediction::Class(v as usize))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Prediction, E> {
                if v == "abstain" {
                    Ok(Prediction::Abstain)
                } else {
                    Err(E::custom(format!("unknown prediction string {v:?}")))
                }
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

/// Which radius formula family produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadiusVariant {
    #[serde(rename = "vanilla")]
    Vanilla,
    #[serde(rename = "static")]
    StaticPartition,
    #[serde(rename = "dynamic-uncorrected")]
    DynamicUncorrected,
}

/// Output of `certify`: the smoothed prediction with its probability
/// bound, confidence, and certified L2 radius.
///
/// A positive radius always comes with a non-abstaining prediction; the
/// rho-corrected fields appear only when a sensitivity value was
/// supplied, and they bound the perturbation in the partition-projected
/// norm rather than the raw input norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub prediction: Prediction,
    pub p_a_lower: f64,
    pub confidence: f64,
    pub radius: f64,
    pub variant: RadiusVariant,
    pub counts: Vec<u64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub radius_rho_corrected: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub radius_rho_appendix: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub avg_partition_count: Option<f64>,
}

/// Per-class tallies from one sampling round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleTally {
    pub counts: Vec<u64>,
    pub partition_count_sum: u64,
    pub samples: u64,
}

impl SampleTally {
    fn zero(class_count: usize) -> Self {
        Self {
            counts: vec![0; class_count],
            partition_count_sum: 0,
            samples: 0,
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.partition_count_sum += other.partition_count_sum;
        self.samples += other.samples;
    }
}

/// Draws `n` noisy samples of `image`, pushes each through the transform
/// and classifier, and tallies the predicted labels.
///
/// Sample `i` uses a generator derived from `(rng.seed(), i)`, so the
/// tallies are bitwise identical however the samples are distributed over
/// worker threads. Failures carry the index of the offending sample.
pub fn smoothed_sample_counts<T: Real, F: Classifier<T> + ?Sized>(
    classifier: &F,
    image: &Image<T>,
    transform: &TransformSpec,
    sigma: f64,
    n: usize,
    rng: &Rng,
    batch: usize,
) -> Result<SampleTally> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!(
            "noise std must be positive, got {sigma}"
        )));
    }
    if n == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let class_count = classifier.class_count();
    if class_count == 0 {
        return Err(Error::Domain("classifier reports zero classes".into()));
    }
    let resolved = transform.resolve(image)?;
    let batch = batch.max(1);

    (0..n)
        .into_par_iter()
        .with_min_len(batch)
        .try_fold(
            || SampleTally::zero(class_count),
            |mut tally, i| {
                let (label, partitions) =
                    one_sample(classifier, image, &resolved, sigma, rng, i)
                        .map_err(|e| e.at_sample(i))?;
                if label >= class_count {
                    return Err(Error::MissingClass {
                        class: label,
                        reason: format!("classifier emitted a label beyond its {class_count} classes"),
                    }
                    .at_sample(i));
                }
                tally.counts[label] += 1;
                if let Some(p) = partitions {
                    tally.partition_count_sum += p as u64;
                }
                tally.samples += 1;
                Ok(tally)
            },
        )
        .try_reduce(
            || SampleTally::zero(class_count),
            |mut a, b| {
                a.merge(&b);
                Ok(a)
            },
        )
}

fn one_sample<T: Real, F: Classifier<T> + ?Sized>(
    classifier: &F,
    image: &Image<T>,
    resolved: &ResolvedTransform<'_>,
    sigma: f64,
    rng: &Rng,
    index: usize,
) -> Result<(usize, Option<usize>)> {
    let mut child = rng.child(index as u64);
    let noise = sample_gaussian_image::<T>(
        image.height(),
        image.width(),
        image.channels(),
        sigma,
        &mut child,
    )?;
    let noisy = image.add(&noise)?;
    match resolved {
        ResolvedTransform::Identity => Ok((classifier.classify(&noisy)?, None)),
        ResolvedTransform::Fixed(seg) => {
            let averaged = partition_average(&noisy, seg)?;
            Ok((classifier.classify(&averaged)?, Some(seg.partition_count())))
        }
        ResolvedTransform::PerSample(scheme) => {
            let seg = scheme.segment(&noisy)?;
            let averaged = partition_average(&noisy, &seg)?;
            Ok((classifier.classify(&averaged)?, Some(seg.partition_count())))
        }
    }
}

/// Selects the top class from raw tallies and tests it against the
/// runner-up with an exact two-sided binomial test; the class is returned
/// only when the test rejects an even split at level `alpha`.
pub fn predict_from_counts(counts: &[u64], alpha: f64) -> Result<Prediction> {
    if counts.is_empty() {
        return Err(Error::Domain("empty count vector".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "failure probability must lie in (0, 1), got {alpha}"
        )));
    }
    let top = argmax_counts(counts);
    let runner_up = counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(_, &c)| c)
        .unwrap_or(0);
    let n_a = counts[top];
    if n_a + runner_up == 0 {
        return Ok(Prediction::Abstain);
    }
    let p = binom_two_sided_p(n_a, n_a + runner_up)?;
    Ok(if p <= alpha {
        Prediction::Class(top)
    } else {
        Prediction::Abstain
    })
}

/// Smoothed prediction with abstention: draws `cfg.n` samples and applies
/// the top-two hypothesis test.
pub fn predict<T: Real, F: Classifier<T> + ?Sized>(
    classifier: &F,
    image: &Image<T>,
    transform: &TransformSpec,
    cfg: &SmoothingConfig,
    rng: &Rng,
) -> Result<Prediction> {
    cfg.validate()?;
    let tally = smoothed_sample_counts(
        classifier, image, transform, cfg.sigma, cfg.n, rng, cfg.batch,
    )?;
    predict_from_counts(&tally.counts, cfg.alpha)
}

/// Two-phase certification.
///
/// Phase one (`cfg.n0` samples, child stream 0) selects the candidate
/// class; phase two (`cfg.n` fresh samples, child stream 1) lower-bounds
/// its probability with a one-sided exact binomial bound at level
/// `cfg.alpha`. A bound above one half yields radius
/// `cfg.sigma * Φ⁻¹(bound)`; otherwise the certificate abstains with
/// radius zero. The guarantee holds with probability at least
/// `1 - cfg.alpha` over the sampling.
///
/// `rho` opts into the corrected radii for input-dependent partitions and
/// must lie in `[0, 1)`.
pub fn certify<T: Real, F: Classifier<T> + ?Sized>(
    classifier: &F,
    image: &Image<T>,
    transform: &TransformSpec,
    cfg: &SmoothingConfig,
    rng: &Rng,
    rho: Option<f64>,
) -> Result<Certificate> {
    cfg.validate()?;
    if let Some(r) = rho {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Domain(format!(
                "sensitivity rho must lie in [0, 1), got {r}"
            )));
        }
    }

    let selection = smoothed_sample_counts(
        classifier,
        image,
        transform,
        cfg.sigma,
        cfg.n0,
        &rng.child(0),
        cfg.batch,
    )?;
    let candidate = argmax_counts(&selection.counts);

    let estimation = smoothed_sample_counts(
        classifier,
        image,
        transform,
        cfg.sigma,
        cfg.n,
        &rng.child(1),
        cfg.batch,
    )?;
    let p_lower = clopper_pearson_lower(estimation.counts[candidate], cfg.n as u64, cfg.alpha)?;

    let avg_partition_count = match transform {
        TransformSpec::None => None,
        _ => Some(estimation.partition_count_sum as f64 / estimation.samples as f64),
    };
    let variant = transform.variant();

    if p_lower <= 0.5 {
        return Ok(Certificate {
            prediction: Prediction::Abstain,
            p_a_lower: p_lower,
            confidence: 0.0,
            radius: 0.0,
            variant,
            counts: estimation.counts,
            seed: rng.seed(),
            radius_rho_corrected: None,
            radius_rho_appendix: None,
            avg_partition_count,
        });
    }

    let confidence = std_normal_inv_cdf(p_lower)?;
    let radius = cfg.sigma * confidence;
    let (radius_rho_corrected, radius_rho_appendix) = match rho {
        Some(r) => (
            Some(radius_dynamic(cfg.sigma, confidence, r)?),
            Some(radius_dynamic_appendix(cfg.sigma, confidence, r)?),
        ),
        None => (None, None),
    };
    Ok(Certificate {
        prediction: Prediction::Class(candidate),
        p_a_lower: p_lower,
        confidence,
        radius,
        variant,
        counts: estimation.counts,
        seed: rng.seed(),
        radius_rho_corrected,
        radius_rho_appendix,
        avg_partition_count,
    })
}

/// Prediction margin in probit units between the top-class probability
/// and the runner-up probability: `½(Φ⁻¹(pa) − Φ⁻¹(pb))`.
///
/// With the practical single-bound substitution `pb = 1 − pa` this
/// collapses to `Φ⁻¹(pa)`.
pub fn confidence_score(pa: f64, pb: f64) -> Result<f64> {
    if !(pa > 0.0 && pa < 1.0) || !(pb > 0.0 && pb < 1.0) || pb > pa {
        return Err(Error::Domain(format!(
            "need 0 < pb <= pa < 1, got pa {pa}, pb {pb}"
        )));
    }
    Ok(0.5 * (std_normal_inv_cdf(pa)? - std_normal_inv_cdf(pb)?))
}

/// Certified radius for plain smoothing or a fixed partition transform:
/// `sigma * confidence`.
pub fn radius_static(sigma: f64, confidence: f64) -> Result<f64> {
    check_radius_args(sigma, confidence)?;
    Ok(sigma * confidence)
}

/// Sensitivity-discounted radius for input-dependent partitions:
/// `(1 - rho) * sigma * confidence`.
pub fn radius_dynamic(sigma: f64, confidence: f64, rho: f64) -> Result<f64> {
    check_radius_args(sigma, confidence)?;
    check_rho(rho)?;
    Ok((1.0 - rho) * sigma * confidence)
}

/// Alternate corrected radius `sigma * confidence / (1 + 3 * rho)`, from
/// a derivation that reaches the discount through the triangle inequality
/// instead of a direct operator bound. The two corrected forms do not
/// agree for rho > 0; both are reported so the discrepancy stays visible.
pub fn radius_dynamic_appendix(sigma: f64, confidence: f64, rho: f64) -> Result<f64> {
    check_radius_args(sigma, confidence)?;
    check_rho(rho)?;
    Ok(sigma * confidence / (1.0 + 3.0 * rho))
}

fn check_radius_args(sigma: f64, confidence: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!(
            "noise std must be positive, got {sigma}"
        )));
    }
    if !(confidence >= 0.0) || !confidence.is_finite() {
        return Err(Error::Domain(format!(
            "confidence must be nonnegative, got {confidence}"
        )));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!(
            "sensitivity rho must lie in [0, 1), got {rho}"
        )));
    }
    Ok(())
}

fn argmax_counts(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Writes one JSON object per certificate, newline-delimited.
pub fn write_certificates_jsonl(certs: &[Certificate], mut writer: impl Write) -> Result<()> {
    for cert in certs {
        let line = serde_json::to_string(cert).map_err(|e| Error::Record(e.to_string()))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads newline-delimited certificate JSON, skipping blank lines.
pub fn read_certificates_jsonl(reader: impl BufRead) -> Result<Vec<Certificate>> {
    let mut certs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cert: Certificate = serde_json::from_str(&line)
            .map_err(|e| Error::Record(format!("line {}: {e}", lineno + 1)))?;
        certs.push(cert);
    }
    Ok(certs)
}
