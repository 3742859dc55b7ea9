//! CIFAR-10 binary batches: records of one label byte followed by
//! `3 x 32 x 32` channel-major pixel bytes.

use std::fs;
use std::path::Path;

use super::images::LabeledImageSet;
use crate::error::{Error, Result};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CHANNELS: usize = 3;
pub const CIFAR_RECORD: usize = 1 + CIFAR_CHANNELS * CIFAR_SIDE * CIFAR_SIDE;

/// Number of records in one batch file's bytes.
pub fn cifar_records(bytes: &[u8]) -> Result<usize> {
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Format(format!(
            "length {} is not a multiple of the {CIFAR_RECORD}-byte record",
            bytes.len()
        )));
    }
    Ok(bytes.len() / CIFAR_RECORD)
}

/// Concatenates the given batches into one set.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<LabeledImageSet> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        cifar_records(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            labels.push(record[0]);
            // channel-major planes become a channel x pixel matrix
            let planes = &record[1..];
            let p = CIFAR_SIDE * CIFAR_SIDE;
            for pix in 0..p {
                for ch in 0..CIFAR_CHANNELS {
                    pixels.push(planes[ch * p + pix]);
                }
            }
        }
    }
    LabeledImageSet::new(pixels, labels, CIFAR_CHANNELS, CIFAR_SIDE, CIFAR_SIDE, 10)
}

/// Validates one batch file's length; returns its record count.
pub fn check_cifar_file(path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    cifar_records(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reorders a channel-major image into the record layout, for writing
/// fixtures.
pub fn encode_cifar_record(label: u8, channel_major: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(CIFAR_RECORD);
    out.push(label);
    out.extend_from_slice(channel_major);
    out
}
