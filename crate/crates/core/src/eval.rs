//! Dataset-level evaluation of smoothed classifiers.
//!
//! Runs certification over a labeled dataset for one or more transforms,
//! turns the certificates into certified-accuracy curves and summary
//! scalars, and writes reproducible reports. Every run is keyed by a
//! manifest whose hash covers all inputs except the wall-clock timestamp,
//! so a rerun with the same inputs produces byte-identical report files.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::{
    certify, predict, Certificate, Prediction, SmoothingConfig, TransformSpec,
};
use crate::classifier::Classifier;
use crate::error::Error;
use crate::image::{Image, LabeledDataset};
use crate::rng::{sample_unit_direction, Rng};
use crate::scalar::Real;
use crate::Result;

/// One point on a certified-accuracy curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub radius: f64,
    pub certified_accuracy: f64,
}

/// Fraction of predictions that miss their label; abstentions count as
/// misses.
pub fn zero_one_loss(predictions: &[Prediction], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::CountMismatch {
            left_name: "predictions".into(),
            left: predictions.len(),
            right_name: "labels".into(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Domain("cannot score an empty prediction set".into()));
    }
    let misses = predictions
        .iter()
        .zip(labels)
        .filter(|(p, &y)| p.class() != Some(y))
        .count();
    Ok(misses as f64 / predictions.len() as f64)
}

/// Certified accuracy at each radius: the fraction of samples whose
/// certificate names the true label with a radius at least that large.
///
/// The curve is nonincreasing in the radius by construction.
pub fn certified_accuracy_curve(
    certificates: &[Certificate],
    labels: &[usize],
    radii: &[f64],
) -> Result<Vec<CurvePoint>> {
    if certificates.len() != labels.len() {
        return Err(Error::CountMismatch {
            left_name: "certificates".into(),
            left: certificates.len(),
            right_name: "labels".into(),
            right: labels.len(),
        });
    }
    if certificates.is_empty() {
        return Err(Error::Domain("cannot score an empty certificate set".into()));
    }
    check_radii(radii)?;
    let total = certificates.len() as f64;
    Ok(radii
        .iter()
        .map(|&r| {
            let certified = certificates
                .iter()
                .zip(labels)
                .filter(|(c, &y)| c.prediction.class() == Some(y) && c.radius >= r)
                .count();
            CurvePoint {
                radius: r,
                certified_accuracy: certified as f64 / total,
            }
        })
        .collect())
}

/// Macro-averaged F-measure of the certified predictions, treating
/// abstentions as wrong for both precision and recall. Classes absent
/// from the labels are left out of the average.
pub fn certified_f_measure(
    certificates: &[Certificate],
    labels: &[usize],
    class_count: usize,
) -> Result<f64> {
    if certificates.len() != labels.len() {
        return Err(Error::CountMismatch {
            left_name: "certificates".into(),
            left: certificates.len(),
            right_name: "labels".into(),
            right: labels.len(),
        });
    }
    if certificates.is_empty() || class_count == 0 {
        return Err(Error::Domain("cannot score an empty certificate set".into()));
    }
    let mut true_pos = vec![0usize; class_count];
    let mut predicted = vec![0usize; class_count];
    let mut actual = vec![0usize; class_count];
    for (cert, &y) in certificates.iter().zip(labels) {
        if y >= class_count {
            return Err(Error::Domain(format!(
                "label {y} exceeds the class count {class_count}"
            )));
        }
        actual[y] += 1;
        if let Some(c) = cert.prediction.class() {
            if c >= class_count {
                return Err(Error::Domain(format!(
                    "predicted class {c} exceeds the class count {class_count}"
                )));
            }
            predicted[c] += 1;
            if c == y {
                true_pos[c] += 1;
            }
        }
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..class_count {
        if actual[c] == 0 {
            continue;
        }
        present += 1;
        let precision = if predicted[c] == 0 {
            0.0
        } else {
            true_pos[c] as f64 / predicted[c] as f64
        };
        let recall = true_pos[c] as f64 / actual[c] as f64;
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(sum / present as f64)
}

/// Evenly spaced radii from `start` up to and including `stop` whenever
/// `stop` falls on the grid; values beyond `stop + step / 2` are cut off.
pub fn radius_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !start.is_finite() || start < 0.0 {
        return Err(Error::Domain(format!(
            "grid start must be finite and nonnegative, got {start}"
        )));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Domain(format!("grid step must be positive, got {step}")));
    }
    if !stop.is_finite() || stop < start {
        return Err(Error::Domain(format!(
            "grid stop must be finite and at least the start, got {stop}"
        )));
    }
    let mut out = Vec::new();
    let mut i = 0u64;
    loop {
        let v = start + i as f64 * step;
        if v >= stop + step / 2.0 {
            break;
        }
        out.push(v);
        i += 1;
    }
    Ok(out)
}

/// The report default: radii 0 through 2 in steps of 0.05.
pub fn default_radius_grid() -> Vec<f64> {
    radius_grid(0.0, 2.0, 0.05).unwrap()
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::Domain("radius grid must be nonempty".into()));
    }
    for &r in radii {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::Domain(format!(
                "curve radii must be finite and nonnegative, got {r}"
            )));
        }
    }
    Ok(())
}

/// Evaluation results for one transform over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformEval {
    pub transform: String,
    pub certificates: Vec<Certificate>,
    pub curve: Vec<CurvePoint>,
    pub certified_accuracy: f64,
    pub certified_f_measure: f64,
    /// Mean pixels per partition, absent for plain smoothing.
    pub avg_superpixel_size: Option<f64>,
}

/// Certifies every image in `data` under each transform and scores the
/// results.
///
/// Image `i` always draws its noise from child stream `i` of `rng`, for
/// every transform, so transforms that compute the same function (for
/// example plain smoothing and averaging over single-pixel partitions)
/// produce bitwise identical tallies.
pub fn evaluate<T: Real, F: Classifier<T> + ?Sized>(
    classifier: &F,
    data: &LabeledDataset<T>,
    transforms: &[TransformSpec],
    cfg: &SmoothingConfig,
    radii: &[f64],
    rng: &Rng,
    rho: Option<f64>,
) -> Result<Vec<TransformEval>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Domain("cannot evaluate an empty dataset".into()));
    }
    if transforms.is_empty() {
        return Err(Error::Domain("need at least one transform".into()));
    }
    check_radii(radii)?;

    let pixel_count = data.images()[0].pixel_count() as f64;
    let mut results = Vec::with_capacity(transforms.len());
    for transform in transforms {
        let mut certificates = Vec::with_capacity(data.len());
        for (i, image) in data.images().iter().enumerate() {
            let cert = certify(classifier, image, transform, cfg, &rng.child(i as u64), rho)
                .map_err(|e| e.at_sample(i))?;
            certificates.push(cert);
        }
        let curve = certified_accuracy_curve(&certificates, data.labels(), radii)?;
        let correct = certificates
            .iter()
            .zip(data.labels())
            .filter(|(c, &y)| c.prediction.class() == Some(y))
            .count();
        let certified_accuracy = correct as f64 / data.len() as f64;
        let score_classes = data.class_count().max(classifier.class_count());
        let f_measure = certified_f_measure(&certificates, data.labels(), score_classes)?;
        let avg_superpixel_size = match transform {
            TransformSpec::None => None,
            _ => {
                let mean_partitions = certificates
                    .iter()
                    .filter_map(|c| c.avg_partition_count)
                    .sum::<f64>()
                    / certificates.len() as f64;
                Some(pixel_count / mean_partitions)
            }
        };
        results.push(TransformEval {
            transform: transform.describe(),
            certificates,
            curve,
            certified_accuracy,
            certified_f_measure: f_measure,
            avg_superpixel_size,
        });
    }
    Ok(results)
}

/// Evaluation results at one noise level of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub transforms: Vec<TransformEval>,
}

/// Runs `evaluate` once per noise level; sigma index `s` uses child
/// stream `s` of `rng`.
pub fn sigma_sweep<T: Real, F: Classifier<T> + ?Sized>(
    classifier: &F,
    data: &LabeledDataset<T>,
    transforms: &[TransformSpec],
    base: &SmoothingConfig,
    sigmas: &[f64],
    radii: &[f64],
    rng: &Rng,
    rho: Option<f64>,
) -> Result<Vec<SweepPoint>> {
    if sigmas.is_empty() {
        return Err(Error::Domain("sigma sweep needs at least one noise level".into()));
    }
    let mut points = Vec::with_capacity(sigmas.len());
    for (s, &sigma) in sigmas.iter().enumerate() {
        let mut cfg = *base;
        cfg.sigma = sigma;
        let transforms = evaluate(
            classifier,
            data,
            transforms,
            &cfg,
            radii,
            &rng.child(s as u64),
            rho,
        )?;
        points.push(SweepPoint { sigma, transforms });
    }
    Ok(points)
}

/// Tally of empirical probes against one certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttackOutcome {
    pub probes: usize,
    /// Probes where the smoothed classifier named a different class
    /// inside the certified radius; any nonzero value falsifies the
    /// certificate.
    pub violations: usize,
    /// Probes where it abstained, which the guarantee permits.
    pub inconclusive: usize,
}

/// Probes a certificate by re-running smoothed prediction at points just
/// inside the certified radius (99 percent of it).
///
/// `trials` random unit directions are probed, plus `worst_direction`
/// when given (it is normalized first; for a linear classifier the
/// analytic worst case is the scaled weight vector). A changed class is
/// a violation; an abstention is inconclusive because the guarantee only
/// promises the class cannot flip.
pub fn attack_check<T: Real, F: Classifier<T> + ?Sized>(
    classifier: &F,
    image: &Image<T>,
    certificate: &Certificate,
    transform: &TransformSpec,
    cfg: &SmoothingConfig,
    trials: usize,
    rng: &Rng,
    worst_direction: Option<&Image<T>>,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    let target = certificate.prediction.class().ok_or_else(|| {
        Error::Domain("cannot probe an abstaining certificate".into())
    })?;
    if !(certificate.radius > 0.0) || !certificate.radius.is_finite() {
        return Err(Error::Domain(format!(
            "certificate radius must be positive, got {}",
            certificate.radius
        )));
    }

    let mut directions: Vec<(Image<T>, Rng)> = Vec::with_capacity(trials + 1);
    for k in 0..trials {
        let mut dir_rng = rng.child(2 * k as u64);
        let dir = sample_unit_direction::<T>(
            image.height(),
            image.width(),
            image.channels(),
            &mut dir_rng,
        )?;
        directions.push((dir, rng.child(2 * k as u64 + 1)));
    }
    if let Some(d) = worst_direction {
        let norm = d.l2_norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain("worst direction must have positive norm".into()));
        }
        directions.push((d.scaled(1.0 / norm), rng.child(2 * trials as u64 + 1)));
    }

    let step = 0.99 * certificate.radius;
    let mut outcome = AttackOutcome::default();
    for (dir, probe_rng) in &directions {
        let probe = image.add(&dir.scaled(step))?;
        outcome.probes += 1;
        match predict(classifier, &probe, transform, cfg, probe_rng)? {
            Prediction::Class(c) if c == target => {}
            Prediction::Class(_) => outcome.violations += 1,
            Prediction::Abstain => outcome.inconclusive += 1,
        }
    }
    Ok(outcome)
}

/// Identifies one evaluation run: the inputs, the budget, and the code
/// version that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: String,
    pub classifier: String,
    pub transform: String,
    pub smoothing: SmoothingConfig,
    pub seed: u64,
    pub sigmas: Vec<f64>,
    pub timestamp: u64,
    pub code_version: String,
}

impl RunManifest {
    pub fn new(
        dataset: impl Into<String>,
        classifier: impl Into<String>,
        transform: impl Into<String>,
        smoothing: SmoothingConfig,
        seed: u64,
        sigmas: Vec<f64>,
    ) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            dataset: dataset.into(),
            classifier: classifier.into(),
            transform: transform.into(),
            smoothing,
            seed,
            sigmas,
            timestamp,
            code_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    /// Hex digest over every field except the timestamp, so reruns with
    /// identical inputs hash identically.
    pub fn hash(&self) -> String {
        let canonical = serde_json::json!({
            "dataset": self.dataset,
            "classifier": self.classifier,
            "transform": self.transform,
            "smoothing": self.smoothing,
            "seed": self.seed,
            "sigmas": self.sigmas,
            "code_version": self.code_version,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Record(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Record(e.to_string()))
    }
}

/// Writes a certified-accuracy curve as CSV, keyed by the manifest hash
/// in a leading comment line.
pub fn write_curve_csv(
    mut writer: impl Write,
    curve: &[CurvePoint],
    manifest_hash: &str,
) -> Result<()> {
    writeln!(writer, "# manifest_hash={manifest_hash}")?;
    writeln!(writer, "radius,certified_accuracy")?;
    for point in curve {
        writeln!(writer, "{:.6},{:.6}", point.radius, point.certified_accuracy)?;
    }
    Ok(())
}

/// Writes one summary row per transform; the superpixel column shows `-`
/// for plain smoothing.
pub fn write_summary_csv(
    mut writer: impl Write,
    rows: &[TransformEval],
    manifest_hash: &str,
) -> Result<()> {
    writeln!(writer, "# manifest_hash={manifest_hash}")?;
    writeln!(
        writer,
        "transform,certified_accuracy,certified_f_measure,avg_superpixel_size"
    )?;
    for row in rows {
        let superpixel = row
            .avg_superpixel_size
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "-".into());
        writeln!(
            writer,
            "{},{:.6},{:.6},{}",
            row.transform, row.certified_accuracy, row.certified_f_measure, superpixel
        )?;
    }
    Ok(())
}
