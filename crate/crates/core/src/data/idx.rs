//! IDX files: a big-endian `u32` magic, one big-endian `u32` per dimension,
//! then unsigned bytes.

use std::fs;
use std::path::Path;

use super::images::LabeledImageSet;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Header of an IDX file plus the payload length actually present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<usize>,
}

impl IdxHeader {
    pub fn records(&self) -> usize {
        self.dims[0]
    }

    fn payload_len(&self) -> usize {
        self.dims.iter().product()
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parses and validates a header; returns it with the payload slice.
pub fn parse_idx(bytes: &[u8], expected_magic: u32) -> Result<(IdxHeader, &[u8])> {
    let magic = read_u32(bytes, 0).ok_or(Error::Truncated {
        expected: 4,
        actual: bytes.len(),
    })?;
    if magic != expected_magic {
        return Err(Error::BadMagic {
            observed: magic,
            expected: expected_magic,
        });
    }
    let ndims = (magic & 0xff) as usize;
    let header_len = 4 + 4 * ndims;
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        let d = read_u32(bytes, 4 + 4 * i).ok_or(Error::Truncated {
            expected: header_len,
            actual: bytes.len(),
        })?;
        dims.push(d as usize);
    }
    let header = IdxHeader { magic, dims };
    let expected = header_len + header.payload_len();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after the IDX payload",
            bytes.len() - expected
        )));
    }
    Ok((header, &bytes[header_len..]))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::file(path, e))
}

fn with_path(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Reads an image/label IDX pair; pixels are kept as bytes and scaled by
/// `1/255` when a context is materialised.
pub fn load_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<LabeledImageSet> {
    let (ip, lp) = (image_path.as_ref(), label_path.as_ref());
    let image_bytes = read(ip)?;
    let label_bytes = read(lp)?;
    let (ih, pixels) = parse_idx(&image_bytes, IMAGE_MAGIC).map_err(with_path(ip))?;
    let (lh, labels) = parse_idx(&label_bytes, LABEL_MAGIC).map_err(with_path(lp))?;
    if ih.records() != lh.records() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            ih.records(),
            lh.records()
        )));
    }
    LabeledImageSet::new(pixels.to_vec(), labels.to_vec(), 1, ih.dims[1], ih.dims[2], 10)
}

/// Serialises an IDX file with the given magic and dimensions.
pub fn encode_idx(magic: u32, dims: &[usize], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + payload.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

/// Reads just the header of an IDX file and checks the payload length.
pub fn check_idx_file(path: impl AsRef<Path>) -> Result<IdxHeader> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let magic = read_u32(&bytes, 0).unwrap_or(0);
    let expected = if magic == LABEL_MAGIC { LABEL_MAGIC } else { IMAGE_MAGIC };
    parse_idx(&bytes, expected).map(|(h, _)| h).map_err(with_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let payload = [1u8, 2, 3, 4, 5, 6, 7, 8];
        let bytes = encode_idx(IMAGE_MAGIC, &[2, 2, 2], &payload);
        let (h, p) = parse_idx(&bytes, IMAGE_MAGIC).unwrap();
        assert_eq!(h.dims, vec![2, 2, 2]);
        assert_eq!(p, &payload);
    }

    #[test]
    fn zero_magic_is_rejected() {
        let bytes = encode_idx(0, &[], &[]);
        assert!(matches!(
            parse_idx(&bytes, IMAGE_MAGIC),
            Err(Error::BadMagic { observed: 0, expected: IMAGE_MAGIC })
        ));
    }

    #[test]
    fn short_payload_is_truncated() {
        let bytes = encode_idx(LABEL_MAGIC, &[5], &[1, 2, 3]);
        assert!(matches!(
            parse_idx(&bytes, LABEL_MAGIC),
            Err(Error::Truncated { expected: 13, actual: 11 })
        ));
        assert!(matches!(parse_idx(&[0, 0], LABEL_MAGIC), Err(Error::Truncated { .. })));
    }
}
