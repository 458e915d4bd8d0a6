//! Spec-string parsing for datasets, classifiers, and labels, plus the
//! output guard that keeps failed runs from leaving partial files behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pprs_core::blobs::generate_blobs_dataset;
use pprs_core::classifier::{Classifier, Halfspace, NearestCentroid, TinyMlp};
use pprs_core::idx::load_idx;
use pprs_core::image::LabeledDataset;
use pprs_core::pnm::load_pnm;
use pprs_core::rng::{sample_gaussian_image, Rng};
use pprs_core::{Dataset64, Image64};

/// Loads a dataset from a spec string.
///
/// Accepted forms:
/// - `idx:IMAGES,LABELS` pairs an IDX image file with an IDX label file
/// - `pgmdir:DIR` reads every `.pgm`/`.ppm`/`.pnm` file in a directory,
///   sorted by name, taking each label from the leading integer of the
///   file name (`3_digit_0071.pgm` is class 3)
/// - `blobs:count=N,height=H,width=W[,regions=R][,classes=C][,seed=S]`
///   generates the synthetic blob dataset (regions and classes default
///   to 4, seed to 0)
///
/// Every form accepts a `?limit=N` suffix keeping only the first `N`
/// entries.
pub fn load_dataset(spec: &str) -> Result<Dataset64> {
    let (body, limit) = split_limit(spec)?;
    let data = if let Some(rest) = body.strip_prefix("idx:") {
        let (images, labels) = rest
            .split_once(',')
            .ok_or_else(|| anyhow!("idx dataset spec needs two paths: idx:IMAGES,LABELS"))?;
        load_idx::<f64>(images.trim(), labels.trim())
            .with_context(|| format!("loading idx dataset {body:?}"))?
    } else if let Some(dir) = body.strip_prefix("pgmdir:") {
        load_pgm_dir(Path::new(dir))?
    } else if let Some(rest) = body.strip_prefix("blobs:") {
        load_blobs(rest)?
    } else {
        bail!("unknown dataset spec {spec:?}; expected idx:, pgmdir:, or blobs:");
    };
    Ok(match limit {
        Some(n) => data.take(n),
        None => data,
    })
}

fn split_limit(spec: &str) -> Result<(&str, Option<usize>)> {
    let Some((body, query)) = spec.split_once('?') else {
        return Ok((spec, None));
    };
    let n: usize = query
        .strip_prefix("limit=")
        .ok_or_else(|| anyhow!("unknown dataset option {query:?}; expected limit=N"))?
        .parse()
        .with_context(|| format!("parsing dataset option {query:?}"))?;
    if n == 0 {
        bail!("dataset limit must be positive");
    }
    Ok((body, Some(n)))
}

fn load_pgm_dir(dir: &Path) -> Result<Dataset64> {
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("pgm" | "ppm" | "pnm")) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        bail!("no .pgm/.ppm/.pnm files in {}", dir.display());
    }
    paths.sort();
    let mut images = Vec::with_capacity(paths.len());
    let mut labels = Vec::with_capacity(paths.len());
    for path in &paths {
        images.push(load_pnm::<f64>(path).with_context(|| format!("loading {}", path.display()))?);
        labels.push(label_from_name(path)?);
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok(LabeledDataset::new(images, labels, classes)?)
}

fn label_from_name(path: &Path) -> Result<usize> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("unreadable file name {}", path.display()))?;
    let digits: String = stem.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() {
        bail!("file name {stem:?} does not start with an integer class label");
    }
    digits
        .parse()
        .with_context(|| format!("parsing label from file name {stem:?}"))
}

fn load_blobs(params: &str) -> Result<Dataset64> {
    let mut count: Option<usize> = None;
    let mut height: Option<usize> = None;
    let mut width: Option<usize> = None;
    let mut regions = 4usize;
    let mut classes = 4usize;
    let mut seed = 0u64;
    for pair in params.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("blobs option {pair:?} is not key=value"))?;
        match key {
            "count" => count = Some(parse_field(key, value)?),
            "height" => height = Some(parse_field(key, value)?),
            "width" => width = Some(parse_field(key, value)?),
            "regions" => regions = parse_field(key, value)?,
            "classes" => classes = parse_field(key, value)?,
            "seed" => seed = parse_field(key, value)?,
            _ => bail!("unknown blobs option {key:?}"),
        }
    }
    let count = count.ok_or_else(|| anyhow!("blobs spec needs count=N"))?;
    let height = height.ok_or_else(|| anyhow!("blobs spec needs height=H"))?;
    let width = width.ok_or_else(|| anyhow!("blobs spec needs width=W"))?;
    Ok(generate_blobs_dataset::<f64>(
        height, width, regions, classes, count, seed,
    )?)
}

fn parse_field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value
        .parse()
        .with_context(|| format!("parsing option {key}={value}"))
}

/// A classifier built from a spec string, dispatching the core trait to
/// whichever concrete model the spec named.
pub enum AnyClassifier {
    Halfspace(Halfspace<f64>),
    Centroid(NearestCentroid<f64>),
    Mlp(TinyMlp),
}

impl AnyClassifier {
    /// The analytic worst-case perturbation direction, known in closed
    /// form for halfspaces only.
    pub fn worst_direction(&self, image: &Image64) -> Result<Option<Image64>> {
        match self {
            AnyClassifier::Halfspace(h) => Ok(Some(h.worst_direction(image)?)),
            _ => Ok(None),
        }
    }
}

impl Classifier<f64> for AnyClassifier {
    fn class_count(&self) -> usize {
        match self {
            AnyClassifier::Halfspace(c) => Classifier::<f64>::class_count(c),
            AnyClassifier::Centroid(c) => Classifier::<f64>::class_count(c),
            AnyClassifier::Mlp(c) => Classifier::<f64>::class_count(c),
        }
    }

    fn scores(&self, image: &Image64) -> pprs_core::Result<Vec<f64>> {
        match self {
            AnyClassifier::Halfspace(c) => c.scores(image),
            AnyClassifier::Centroid(c) => c.scores(image),
            AnyClassifier::Mlp(c) => Classifier::<f64>::scores(c, image),
        }
    }

    fn classify(&self, image: &Image64) -> pprs_core::Result<usize> {
        match self {
            AnyClassifier::Halfspace(c) => c.classify(image),
            AnyClassifier::Centroid(c) => c.classify(image),
            AnyClassifier::Mlp(c) => Classifier::<f64>::classify(c, image),
        }
    }
}

/// Builds a classifier from a spec string.
///
/// Accepted forms:
/// - `halfspace:seed=S[,bias=B]` draws Gaussian weights in the shape of
///   the dataset's first image
/// - `halfspace:weights=IMG[,bias=B]` maps an image file to weights via
///   `2v - 1`, so mid-gray pixels contribute nothing
/// - `centroid:DATASET` fits a nearest-centroid model on the referenced
///   dataset spec (which may carry its own `?limit=N`)
/// - `mlp:PATH` loads a saved multilayer perceptron
pub fn build_classifier(spec: &str, data: &Dataset64) -> Result<AnyClassifier> {
    if let Some(rest) = spec.strip_prefix("halfspace:") {
        build_halfspace(rest, data)
    } else if let Some(rest) = spec.strip_prefix("centroid:") {
        let train = load_dataset(rest)
            .with_context(|| format!("loading centroid training set {rest:?}"))?;
        Ok(AnyClassifier::Centroid(NearestCentroid::fit(&train)?))
    } else if let Some(path) = spec.strip_prefix("mlp:") {
        let mlp = TinyMlp::load(path).with_context(|| format!("loading mlp from {path}"))?;
        Ok(AnyClassifier::Mlp(mlp))
    } else {
        bail!("unknown classifier spec {spec:?}; expected halfspace:, centroid:, or mlp:");
    }
}

fn build_halfspace(params: &str, data: &Dataset64) -> Result<AnyClassifier> {
    let mut seed: Option<u64> = None;
    let mut weights_path: Option<String> = None;
    let mut bias = 0.0f64;
    for pair in params.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("halfspace option {pair:?} is not key=value"))?;
        match key {
            "seed" => seed = Some(parse_field(key, value)?),
            "weights" => weights_path = Some(value.to_string()),
            "bias" => bias = parse_field(key, value)?,
            _ => bail!("unknown halfspace option {key:?}"),
        }
    }
    let weights = match (seed, weights_path) {
        (Some(_), Some(_)) => bail!("halfspace takes seed= or weights=, not both"),
        (None, None) => bail!("halfspace needs seed=S or weights=IMG"),
        (Some(seed), None) => {
            let shape = data
                .images()
                .first()
                .ok_or_else(|| anyhow!("halfspace:seed= takes its shape from a nonempty dataset"))?;
            let mut rng = Rng::from_seed(seed);
            sample_gaussian_image::<f64>(
                shape.height(),
                shape.width(),
                shape.channels(),
                1.0,
                &mut rng,
            )?
        }
        (None, Some(path)) => load_pnm::<f64>(&path)
            .with_context(|| format!("loading halfspace weights from {path}"))?
            .map(|v| 2.0 * v - 1.0),
    };
    Ok(AnyClassifier::Halfspace(Halfspace::new(weights, bias)?))
}

/// Loads evaluation labels from a dataset spec or, failing the known
/// prefixes, from a text file holding one integer per line.
pub fn load_labels(spec: &str) -> Result<Vec<usize>> {
    if ["idx:", "pgmdir:", "blobs:"].iter().any(|p| spec.starts_with(p)) {
        return Ok(load_dataset(spec)?.labels().to_vec());
    }
    let text =
        fs::read_to_string(spec).with_context(|| format!("reading labels from {spec}"))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(
            line.parse::<usize>()
                .with_context(|| format!("{spec}:{}: bad label {line:?}", lineno + 1))?,
        );
    }
    if labels.is_empty() {
        bail!("label file {spec} holds no labels");
    }
    Ok(labels)
}

/// Collects output paths for a run and deletes them unless the run
/// commits.
///
/// Claim each path before writing it; call `commit` once everything is
/// on disk. A guard dropped early, by an error or a panic, removes every
/// claimed file, so a failed run never leaves partial outputs behind.
pub struct OutputGuard {
    claimed: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        Self {
            claimed: Vec::new(),
            committed: false,
        }
    }

    pub fn claim(&mut self, path: impl Into<PathBuf>) -> PathBuf {
        let path = path.into();
        self.claimed.push(path.clone());
        path
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in &self.claimed {
            let _ = fs::remove_file(path);
        }
    }
}
