use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: [u8; 4] = [0x00, 0x00, 0x08, 0x03];
const LABELS_MAGIC: [u8; 4] = [0x00, 0x00, 0x08, 0x01];

struct BigEndian<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> BigEndian<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::Format(format!("idx file truncated at byte {}", self.at)));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

fn header<'a>(bytes: &'a [u8], magic: [u8; 4]) -> Result<BigEndian<'a>> {
    let mut r = BigEndian { bytes, at: 0 };
    let found = r.take(4)?;
    if found != magic {
        return Err(Error::Format(format!(
            "unsupported rank/type: magic {:02x} {:02x} {:02x} {:02x}, expected {:02x} {:02x} {:02x} {:02x}",
            found[0], found[1], found[2], found[3], magic[0], magic[1], magic[2], magic[3]
        )));
    }
    Ok(r)
}

/// Unsigned-byte rank-3 image file; returns `(count × rows·cols)` with pixels in `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor> {
    let mut r = header(bytes, IMAGES_MAGIC)?;
    let (n, rows, cols) = (r.u32()?, r.u32()?, r.u32()?);
    let p = rows * cols;
    let total = n
        .checked_mul(p)
        .ok_or_else(|| Error::Format(format!("idx dimensions {n}×{rows}×{cols} overflow")))?;
    let raw = r.take(total)?;
    Tensor::matrix(n, p, raw.iter().map(|&b| b as f64 / 255.0).collect())
}

/// Unsigned-byte rank-1 label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = header(bytes, LABELS_MAGIC)?;
    let n = r.u32()?;
    Ok(r.take(n)?.iter().map(|&b| b as usize).collect())
}

/// Pair an IDX image file with its label file.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<(Tensor, usize)>> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = parse_idx_images(&read(images_path)?)?;
    let labels = parse_idx_labels(&read(labels_path)?)?;
    if images.rows() != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            images.rows(),
            labels.len()
        )));
    }
    (0..labels.len())
        .map(|i| Ok((Tensor::vector(images.row(i).to_vec())?, labels[i])))
        .collect()
}
