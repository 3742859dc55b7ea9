//! Dataset readers, classification-to-bandit rounds and synthetic reward
//! streams.

mod cifar;
mod idx;
mod images;
mod synthetic;

pub use cifar::{check_cifar_file, cifar_records, encode_cifar_record, load_cifar10, CIFAR_CHANNELS, CIFAR_RECORD, CIFAR_SIDE};
pub use idx::{check_idx_file, encode_idx, load_idx, parse_idx, IdxHeader, IMAGE_MAGIC, LABEL_MAGIC};
pub use images::{build_round, normalize_unit_frobenius, BanditRound, ImageStream, LabeledImageSet};
pub use synthetic::{SyntheticKind, SyntheticRound, SyntheticStream, SyntheticTask};
