//! IDX files (the MNIST container format): big-endian magics 0x00000803
//! for image tensors and 0x00000801 for label vectors.

use std::io::Cursor;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};

use crate::error::Error;
use crate::image::{Image, LabeledDataset};
use crate::scalar::Real;
use crate::Result;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Parses an IDX image tensor into grayscale images with intensities
/// scaled by 1/255.
pub fn parse_idx_images<T: Real>(bytes: &[u8]) -> Result<Vec<Image<T>>> {
    let mut rd = Cursor::new(bytes);
    let magic = rd
        .read_u32::<BigEndian>()
        .map_err(|_| truncated(bytes.len(), 4))?;
    if magic != IMAGES_MAGIC {
        return Err(Error::UnsupportedMagic {
            offset: 0,
            found: format!("{magic:#010x} (want {IMAGES_MAGIC:#010x})"),
        });
    }
    let count = read_dim(&mut rd, bytes.len(), "count")?;
    let rows = read_dim(&mut rd, bytes.len(), "rows")?;
    let cols = read_dim(&mut rd, bytes.len(), "cols")?;
    if rows == 0 || cols == 0 {
        return Err(Error::MalformedHeader {
            offset: 4,
            reason: format!("image dimensions must be positive, got {rows}x{cols}"),
        });
    }
    let header = 16usize;
    let expected = count * rows * cols;
    let available = bytes.len() - header;
    if available < expected {
        return Err(Error::TruncatedPayload {
            offset: bytes.len(),
            expected,
            found: available,
        });
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let start = header + i * rows * cols;
        let data = bytes[start..start + rows * cols]
            .iter()
            .map(|&b| T::from64(b as f64 / 255.0))
            .collect();
        images.push(Image::new(rows, cols, 1, data)?);
    }
    Ok(images)
}

/// Parses an IDX label vector.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut rd = Cursor::new(bytes);
    let magic = rd
        .read_u32::<BigEndian>()
        .map_err(|_| truncated(bytes.len(), 4))?;
    if magic != LABELS_MAGIC {
        return Err(Error::UnsupportedMagic {
            offset: 0,
            found: format!("{magic:#010x} (want {LABELS_MAGIC:#010x})"),
        });
    }
    let count = read_dim(&mut rd, bytes.len(), "count")?;
    let header = 8usize;
    let available = bytes.len() - header;
    if available < count {
        return Err(Error::TruncatedPayload {
            offset: bytes.len(),
            expected: count,
            found: available,
        });
    }
    Ok(bytes[header..header + count]
        .iter()
        .map(|&b| b as usize)
        .collect())
}

/// Loads a paired image/label IDX dataset. The class count is taken as
/// `max label + 1`.
pub fn load_idx<T: Real>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset<T>> {
    let images = parse_idx_images::<T>(&std::fs::read(&images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(&labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            left_name: images_path.as_ref().display().to_string(),
            left: images.len(),
            right_name: labels_path.as_ref().display().to_string(),
            right: labels.len(),
        });
    }
    let class_count = labels.iter().copied().max().map_or(1, |m| m + 1);
    LabeledDataset::new(images, labels, class_count)
}

/// Encodes grayscale images as an IDX tensor (clamping and quantizing to
/// bytes, like the PGM writer).
pub fn encode_idx_images<T: Real>(images: &[Image<T>]) -> Result<Vec<u8>> {
    let first = images.first().ok_or(Error::Domain(
        "cannot encode an empty image list".into(),
    ))?;
    if first.channels() != 1 {
        return Err(Error::Domain(
            "idx image tensors hold single-channel images".into(),
        ));
    }
    let mut out = Vec::new();
    out.extend(IMAGES_MAGIC.to_be_bytes());
    out.extend((images.len() as u32).to_be_bytes());
    out.extend((first.height() as u32).to_be_bytes());
    out.extend((first.width() as u32).to_be_bytes());
    for img in images {
        if !img.same_shape(first) {
            return Err(Error::ShapeMismatch {
                expected: first.shape_string(),
                got: img.shape_string(),
            });
        }
        out.extend(
            img.data()
                .iter()
                .map(|&v| (v.into64().clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    Ok(out)
}

/// Encodes labels as an IDX vector.
pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend(LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    for &l in labels {
        if l > 255 {
            return Err(Error::Domain(format!("label {l} exceeds the u8 range")));
        }
        out.push(l as u8);
    }
    Ok(out)
}

fn read_dim(rd: &mut Cursor<&[u8]>, total: usize, field: &str) -> Result<usize> {
    rd.read_u32::<BigEndian>()
        .map(|v| v as usize)
        .map_err(|_| Error::MalformedHeader {
            offset: total,
            reason: format!("missing {field} field"),
        })
}

fn truncated(found: usize, expected: usize) -> Error {
    Error::TruncatedPayload {
        offset: found,
        expected,
        found,
    }
}
