//! Base classifiers: an analytically tractable halfspace oracle, a
//! nearest-centroid model, and a small fully connected network with a
//! portable binary weights format.

use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::Error;
use crate::image::{Image, LabeledDataset};
use crate::scalar::Real;
use crate::stats::std_normal_cdf;
use crate::Result;

/// A deterministic map from images to per-class scores. The hard label is
/// the argmax, with ties broken toward the lower class index.
///
/// Implementations hold read-only parameters and must be callable from
/// many threads at once; the sampling engine relies on that.
pub trait Classifier<T: Real>: Send + Sync {
    fn class_count(&self) -> usize;

    /// Score per class; the returned vector has `class_count` entries.
    fn scores(&self, image: &Image<T>) -> Result<Vec<f64>>;

    /// Hard label: index of the largest score, lowest index on ties.
    fn classify(&self, image: &Image<T>) -> Result<usize> {
        Ok(argmax(&self.scores(image)?))
    }
}

/// Index of the largest value; the lower index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Linear binary classifier: label 1 iff `⟨w, x⟩ + b > 0`.
///
/// Under Gaussian input noise its smoothed class-1 probability has the
/// closed form `Φ((⟨w, x⟩ + b) / (σ‖w‖))`, which makes it an exact oracle
/// for validating Monte-Carlo certification end to end.
#[derive(Debug, Clone)]
pub struct Halfspace<T> {
    weights: Image<T>,
    bias: f64,
    weight_norm: f64,
}

impl<T: Real> Halfspace<T> {
    /// Builds the classifier; the weight image must have positive norm.
    pub fn new(weights: Image<T>, bias: f64) -> Result<Self> {
        let weight_norm = weights.l2_norm();
        if !(weight_norm > 0.0) || !weight_norm.is_finite() || !bias.is_finite() {
            return Err(Error::Domain(format!(
                "halfspace needs finite bias and positive weight norm, got norm {weight_norm}, bias {bias}"
            )));
        }
        Ok(Self {
            weights,
            bias,
            weight_norm,
        })
    }

    pub fn weights(&self) -> &Image<T> {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weight_norm(&self) -> f64 {
        self.weight_norm
    }

    /// Signed distance numerator `⟨w, x⟩ + b`.
    pub fn margin(&self, image: &Image<T>) -> Result<f64> {
        Ok(self.weights.dot(image)? + self.bias)
    }

    /// Exact probability that `x` plus `N(0, sigma²I)` noise is labeled 1.
    pub fn smoothed_prob(&self, image: &Image<T>, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!(
                "noise std must be positive, got {sigma}"
            )));
        }
        let margin = self.margin(image)?;
        Ok(std_normal_cdf(margin / (sigma * self.weight_norm)))
    }

    /// Exact robustness radius: the L2 distance from `x` to the decision
    /// boundary, `|⟨w, x⟩ + b| / ‖w‖`.
    pub fn analytic_radius(&self, image: &Image<T>) -> Result<f64> {
        Ok(self.margin(image)?.abs() / self.weight_norm)
    }

    /// Unit direction along which the margin shrinks fastest; moving
    /// `analytic_radius` along it reaches the decision boundary.
    pub fn worst_direction(&self, image: &Image<T>) -> Result<Image<T>> {
        let margin = self.margin(image)?;
        let sign = if margin < 0.0 { -1.0 } else { 1.0 };
        Ok(self.weights.scaled(-sign / self.weight_norm))
    }
}

impl<T: Real> Classifier<T> for Halfspace<T> {
    fn class_count(&self) -> usize {
        2
    }

    fn scores(&self, image: &Image<T>) -> Result<Vec<f64>> {
        let margin = self.margin(image)?;
        Ok(vec![-margin, margin])
    }
}

/// Classifies by the nearest per-class mean image; scores are negative
/// squared L2 distances to each centroid.
#[derive(Debug, Clone)]
pub struct NearestCentroid<T> {
    centroids: Vec<Image<T>>,
}

impl<T: Real> NearestCentroid<T> {
    /// Computes per-class mean images. Every class below the dataset's
    /// class count must appear at least once.
    pub fn fit(data: &LabeledDataset<T>) -> Result<Self> {
        if data.is_empty() || data.class_count() == 0 {
            return Err(Error::Domain(
                "centroid training needs a nonempty dataset".into(),
            ));
        }
        let shape = &data.images()[0];
        let mut sums: Vec<Vec<f64>> = vec![vec![0.0; shape.len()]; data.class_count()];
        let mut counts = vec![0usize; data.class_count()];
        for (image, &label) in data.images().iter().zip(data.labels()) {
            counts[label] += 1;
            for (slot, value) in sums[label].iter_mut().zip(image.data()) {
                *slot += value.into64();
            }
        }
        let mut centroids = Vec::with_capacity(data.class_count());
        for (class, (sum, &count)) in sums.iter().zip(&counts).enumerate() {
            if count == 0 {
                return Err(Error::MissingClass {
                    class,
                    reason: "no training samples".into(),
                });
            }
            let mean: Vec<T> = sum.iter().map(|&s| T::from64(s / count as f64)).collect();
            centroids.push(Image::new(
                shape.height(),
                shape.width(),
                shape.channels(),
                mean,
            )?);
        }
        Ok(Self { centroids })
    }

    pub fn centroids(&self) -> &[Image<T>] {
        &self.centroids
    }
}

impl<T: Real> Classifier<T> for NearestCentroid<T> {
    fn class_count(&self) -> usize {
        self.centroids.len()
    }

    fn scores(&self, image: &Image<T>) -> Result<Vec<f64>> {
        self.centroids
            .iter()
            .map(|centroid| {
                let diff = image.sub(centroid)?;
                let norm = diff.l2_norm();
                Ok(-(norm * norm))
            })
            .collect()
    }
}

const MLP_MAGIC: &[u8; 4] = b"TMLP";
const MLP_VERSION: u8 = 1;
const MLP_MAX_LAYERS: usize = 64;
const MLP_MAX_DIM: usize = 1 << 24;

/// Small fully connected network: rectifier on hidden layers, identity on
/// the output layer. Weights are `f64` regardless of the image scalar
/// type.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl TinyMlp {
    /// Builds a network from explicit parameters. `dims` lists the input
    /// dimension followed by each layer's output dimension; `weights[l]`
    /// is `dims[l+1] x dims[l]` row-major and `biases[l]` has `dims[l+1]`
    /// entries.
    pub fn new(dims: Vec<usize>, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Domain(format!(
                "network needs at least input and output dims, got {}",
                dims.len()
            )));
        }
        if let Some(&bad) = dims.iter().find(|&&d| d == 0 || d > MLP_MAX_DIM) {
            return Err(Error::Domain(format!(
                "layer dims must lie in 1..={MLP_MAX_DIM}, got {bad}"
            )));
        }
        let layer_count = dims.len() - 1;
        if layer_count > MLP_MAX_LAYERS {
            return Err(Error::Domain(format!(
                "at most {MLP_MAX_LAYERS} layers supported, got {layer_count}"
            )));
        }
        if weights.len() != layer_count || biases.len() != layer_count {
            return Err(Error::CountMismatch {
                left_name: "dims-implied layers".into(),
                left: layer_count,
                right_name: "parameter layers".into(),
                right: weights.len().max(biases.len()),
            });
        }
        for l in 0..layer_count {
            if weights[l].len() != dims[l + 1] * dims[l] || biases[l].len() != dims[l + 1] {
                return Err(Error::ShapeMismatch {
                    expected: format!(
                        "layer {l}: {}x{} weights and {} biases",
                        dims[l + 1],
                        dims[l],
                        dims[l + 1]
                    ),
                    got: format!(
                        "{} weights and {} biases",
                        weights[l].len(),
                        biases[l].len()
                    ),
                });
            }
        }
        Ok(Self {
            dims,
            weights,
            biases,
        })
    }

    /// Input dimension followed by each layer's output dimension.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Affine chain with rectifier activations on all but the last layer.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.dims[0] {
            return Err(Error::ShapeMismatch {
                expected: format!("{} inputs", self.dims[0]),
                got: format!("{} inputs", input.len()),
            });
        }
        let layer_count = self.dims.len() - 1;
        let mut activation = input.to_vec();
        for l in 0..layer_count {
            let in_dim = self.dims[l];
            let mut next = self.biases[l].clone();
            for (o, slot) in next.iter_mut().enumerate() {
                let row = &self.weights[l][o * in_dim..(o + 1) * in_dim];
                *slot += row
                    .iter()
                    .zip(&activation)
                    .map(|(w, a)| w * a)
                    .sum::<f64>();
            }
            if l + 1 < layer_count {
                for v in next.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            activation = next;
        }
        Ok(activation)
    }

    /// Serializes to the binary weights format: magic `TMLP`, version
    /// byte, layer count and dims as little-endian `u32`, then per layer
    /// the row-major weight matrix and bias vector as little-endian `f64`.
    pub fn encode(&self) -> Vec<u8> {
        let layer_count = self.dims.len() - 1;
        let mut out = Vec::new();
        out.extend_from_slice(MLP_MAGIC);
        out.push(MLP_VERSION);
        out.extend_from_slice(&(layer_count as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for l in 0..layer_count {
            for &v in &self.weights[l] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for &v in &self.biases[l] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses the binary weights format, reporting byte offsets on error.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::TruncatedPayload {
                offset: 0,
                expected: 4,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != MLP_MAGIC {
            return Err(Error::UnsupportedMagic {
                offset: 0,
                found: format!("{:?}", &bytes[..4]),
            });
        }
        if bytes.len() < 9 {
            return Err(Error::TruncatedPayload {
                offset: 4,
                expected: 5,
                found: bytes.len() - 4,
            });
        }
        if bytes[4] != MLP_VERSION {
            return Err(Error::MalformedHeader {
                offset: 4,
                reason: format!("unknown version {}", bytes[4]),
            });
        }
        let layer_count = LittleEndian::read_u32(&bytes[5..9]) as usize;
        if layer_count == 0 || layer_count > MLP_MAX_LAYERS {
            return Err(Error::MalformedHeader {
                offset: 5,
                reason: format!("layer count must lie in 1..={MLP_MAX_LAYERS}, got {layer_count}"),
            });
        }
        let dims_end = 9 + 4 * (layer_count + 1);
        if bytes.len() < dims_end {
            return Err(Error::TruncatedPayload {
                offset: 9,
                expected: 4 * (layer_count + 1),
                found: bytes.len() - 9,
            });
        }
        let mut dims = Vec::with_capacity(layer_count + 1);
        for i in 0..=layer_count {
            let off = 9 + 4 * i;
            let d = LittleEndian::read_u32(&bytes[off..off + 4]) as usize;
            if d == 0 || d > MLP_MAX_DIM {
                return Err(Error::MalformedHeader {
                    offset: off,
                    reason: format!("layer dim must lie in 1..={MLP_MAX_DIM}, got {d}"),
                });
            }
            dims.push(d);
        }

        let mut offset = dims_end;
        let mut weights = Vec::with_capacity(layer_count);
        let mut biases = Vec::with_capacity(layer_count);
        for l in 0..layer_count {
            let count = dims[l + 1] * dims[l] + dims[l + 1];
            let need = 8 * count;
            if bytes.len() < offset + need {
                return Err(Error::TruncatedPayload {
                    offset,
                    expected: need,
                    found: bytes.len() - offset,
                });
            }
            let mut values = vec![0.0f64; count];
            LittleEndian::read_f64_into(&bytes[offset..offset + need], &mut values);
            let bias = values.split_off(dims[l + 1] * dims[l]);
            weights.push(values);
            biases.push(bias);
            offset += need;
        }
        if offset != bytes.len() {
            return Err(Error::MalformedHeader {
                offset,
                reason: format!("{} trailing bytes after payload", bytes.len() - offset),
            });
        }
        Self::new(dims, weights, biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

impl<T: Real> Classifier<T> for TinyMlp {
    fn class_count(&self) -> usize {
        *self.dims.last().expect("validated nonempty")
    }

    fn scores(&self, image: &Image<T>) -> Result<Vec<f64>> {
        if image.len() != self.dims[0] {
            return Err(Error::ShapeMismatch {
                expected: format!("{} inputs", self.dims[0]),
                got: format!("{} ({})", image.len(), image.shape_string()),
            });
        }
        let flat: Vec<f64> = image.data().iter().map(|v| v.into64()).collect();
        self.forward(&flat)
    }
}

/// Fits a single affine layer to one-hot class targets by ridge-penalized
/// least squares (normal equations with an appended constant feature for
/// the bias), returning it as a one-layer network. This is the only
/// training this crate ships; deeper weights come from files.
pub fn fit_linear_readout<T: Real>(data: &LabeledDataset<T>, ridge: f64) -> Result<TinyMlp> {
    if data.is_empty() {
        return Err(Error::Domain("readout fit needs a nonempty dataset".into()));
    }
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(Error::Domain(format!(
            "ridge strength must be positive, got {ridge}"
        )));
    }
    let d = data.images()[0].len();
    let k = data.class_count();
    let aug = d + 1;

    // Gram matrix of [x, 1] rows and per-class right-hand sides.
    let mut gram = vec![0.0f64; aug * aug];
    let mut rhs = vec![0.0f64; aug * k];
    let mut row = vec![0.0f64; aug];
    for (image, &label) in data.images().iter().zip(data.labels()) {
        for (slot, value) in row.iter_mut().zip(image.data()) {
            *slot = value.into64();
        }
        row[d] = 1.0;
        for i in 0..aug {
            if row[i] == 0.0 {
                continue;
            }
            for j in i..aug {
                gram[i * aug + j] += row[i] * row[j];
            }
            rhs[i * k + label] += row[i];
        }
    }
    for i in 0..aug {
        for j in 0..i {
            gram[i * aug + j] = gram[j * aug + i];
        }
        gram[i * aug + i] += ridge;
    }

    let solution = cholesky_solve(&mut gram, &mut rhs, aug, k)?;

    // solution is aug x k; the network wants k x d weights plus k biases.
    let mut weights = vec![0.0f64; k * d];
    let mut biases = vec![0.0f64; k];
    for c in 0..k {
        for i in 0..d {
            weights[c * d + i] = solution[i * k + c];
        }
        biases[c] = solution[d * k + c];
    }
    TinyMlp::new(vec![d, k], vec![weights], vec![biases])
}

/// Solves `G X = B` in place for symmetric positive definite `G` (n x n)
/// and `B` (n x m), returning `X` row-major.
fn cholesky_solve(gram: &mut [f64], rhs: &mut [f64], n: usize, m: usize) -> Result<Vec<f64>> {
    // Lower-triangular factorization G = L Lᵀ, stored over G.
    for j in 0..n {
        let mut diag = gram[j * n + j];
        for k in 0..j {
            diag -= gram[j * n + k] * gram[j * n + k];
        }
        if !(diag > 0.0) {
            return Err(Error::Domain(
                "normal equations are not positive definite".into(),
            ));
        }
        let diag = diag.sqrt();
        gram[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = gram[i * n + j];
            for k in 0..j {
                v -= gram[i * n + k] * gram[j * n + k];
            }
            gram[i * n + j] = v / diag;
        }
    }
    // Forward substitution L Y = B.
    for i in 0..n {
        for k in 0..i {
            let l = gram[i * n + k];
            for c in 0..m {
                rhs[i * m + c] -= l * rhs[k * m + c];
            }
        }
        let diag = gram[i * n + i];
        for c in 0..m {
            rhs[i * m + c] /= diag;
        }
    }
    // Back substitution Lᵀ X = Y.
    for i in (0..n).rev() {
        for k in i + 1..n {
            let l = gram[k * n + i];
            for c in 0..m {
                rhs[i * m + c] -= l * rhs[k * m + c];
            }
        }
        let diag = gram[i * n + i];
        for c in 0..m {
            rhs[i * m + c] /= diag;
        }
    }
    Ok(rhs.to_vec())
}
