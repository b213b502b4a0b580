//! The big-endian IDX container: unsigned-byte images (`0x00000803`) and
//! labels (`0x00000801`).

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    /// One row per image, pixels row-major and scaled into `[0, 1]`.
    Images {
        rows: usize,
        cols: usize,
        pixels: Matrix<f64>,
    },
    Labels(Vec<u8>),
}

impl IdxData {
    pub fn len(&self) -> usize {
        match self {
            IdxData::Images { pixels, .. } => pixels.rows(),
            IdxData::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn idx_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Idx {
        offset,
        reason: reason.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, field: &str) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => Err(idx_err(
            bytes.len(),
            format!("truncated header while reading {field} at byte {offset}"),
        )),
    }
}

/// Errors carry the byte offset where the stream stops matching the format:
/// the magic number's offset, the first missing byte, or the first surplus
/// byte.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = read_u32(bytes, 0, "magic number")?;
    let count = read_u32(bytes, 4, "item count")? as usize;
    let (header, item) = match magic {
        IMAGES_MAGIC => {
            let rows = read_u32(bytes, 8, "row count")? as usize;
            let cols = read_u32(bytes, 12, "column count")? as usize;
            (16, rows * cols)
        }
        LABELS_MAGIC => (8, 1),
        other => return Err(idx_err(0, format!("unsupported magic number {other:#010x}"))),
    };
    let expected = count
        .checked_mul(item)
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| idx_err(4, "item count overflows"))?;
    if bytes.len() < expected {
        return Err(idx_err(
            bytes.len(),
            format!("truncated payload: header declares {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(idx_err(
            expected,
            format!("{} bytes beyond the declared item count {count}", bytes.len() - expected),
        ));
    }
    let payload = &bytes[header..];
    Ok(match magic {
        IMAGES_MAGIC => IdxData::Images {
            rows: read_u32(bytes, 8, "row count")? as usize,
            cols: read_u32(bytes, 12, "column count")? as usize,
            pixels: Matrix::from_vec(count, item, payload.iter().map(|&b| f64::from(b) / 255.0).collect())?,
        },
        _ => IdxData::Labels(payload.to_vec()),
    })
}

/// Serializes unsigned-byte images, one `rows·cols` slice per image.
pub fn encode_idx_images(rows: usize, cols: usize, images: &[u8]) -> Result<Vec<u8>> {
    let item = rows * cols;
    if item == 0 || images.len() % item != 0 {
        return Err(Error::Invalid(format!(
            "{} pixel bytes do not form whole {rows}x{cols} images",
            images.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IMAGES_MAGIC, (images.len() / item) as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(images);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
