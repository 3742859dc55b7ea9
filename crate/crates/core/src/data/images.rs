use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::{ArmContext, Spatial};

/// A labelled image collection. Pixels stay as bytes; contexts are built on
/// demand with values scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    /// `N` images, each `p` pixels of `c` interleaved channel bytes.
    pixels: Vec<u8>,
    labels: Vec<u8>,
    channels: usize,
    height: usize,
    width: usize,
    n_classes: usize,
}

impl LabeledImageSet {
    pub fn new(
        pixels: Vec<u8>,
        labels: Vec<u8>,
        channels: usize,
        height: usize,
        width: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let per_image = channels * height * width;
        if per_image == 0 || n_classes == 0 {
            return Err(Error::Format("empty image shape or class count".into()));
        }
        if pixels.len() != labels.len() * per_image {
            return Err(Error::Format(format!(
                "{} pixel bytes for {} labels of {per_image} bytes each",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad as usize,
                n_classes,
            });
        }
        Ok(Self {
            pixels,
            labels,
            channels,
            height,
            width,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn spatial(&self) -> Spatial {
        Spatial::Grid {
            height: self.height,
            width: self.width,
        }
    }

    /// Raw bytes of image `i`, channel-interleaved per pixel.
    pub fn raw(&self, i: usize) -> &[u8] {
        let n = self.channels * self.pixel_count();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Image `i` as a `c x p` matrix with values `byte / 255`.
    pub fn image(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_iterator(
            self.channels,
            self.pixel_count(),
            self.raw(i).iter().map(|&b| b as f64 / 255.0),
        )
    }
}

/// `x / ||x||_F`.
pub fn normalize_unit_frobenius(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(x / n)
}

/// One classification round: arm `a` carries the image in channel block `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditRound {
    pub arms: Vec<ArmContext>,
    pub correct: usize,
    pub base_image_id: usize,
}

impl BanditRound {
    /// 1 for the arm matching the label, else 0.
    pub fn reward(&self, chosen: usize) -> f64 {
        if chosen == self.correct {
            1.0
        } else {
            0.0
        }
    }
}

/// Builds `n_classes` arms of shape `(n_classes * c) x p` from a normalised
/// `c x p` image.
pub fn build_round(
    image: &DMatrix<f64>,
    spatial: Spatial,
    label: usize,
    n_classes: usize,
    base_image_id: usize,
) -> Result<BanditRound> {
    if label >= n_classes {
        return Err(Error::LabelOutOfRange { label, n_classes });
    }
    if (image.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "image must have unit Frobenius norm, found {}",
            image.norm()
        )));
    }
    let c = image.nrows();
    let arms = (0..n_classes)
        .map(|a| {
            let mut values = DMatrix::zeros(n_classes * c, image.ncols());
            values.view_mut((a * c, 0), (c, image.ncols())).copy_from(image);
            ArmContext::new(values, spatial)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BanditRound {
        arms,
        correct: label,
        base_image_id,
    })
}

/// Rounds drawn from a seeded shuffle of an image set, cycling through the
/// shuffle if more rounds than images are requested.
#[derive(Debug, Clone)]
pub struct ImageStream<'a> {
    set: &'a LabeledImageSet,
    order: Vec<usize>,
}

impl<'a> ImageStream<'a> {
    pub fn new(set: &'a LabeledImageSet, seed: u64) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::Format("image set is empty".into()));
        }
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { set, order })
    }

    pub fn image_id(&self, t: usize) -> usize {
        self.order[t % self.order.len()]
    }

    pub fn round(&self, t: usize) -> Result<BanditRound> {
        let id = self.image_id(t);
        let image = normalize_unit_frobenius(&self.set.image(id))?;
        build_round(&image, self.set.spatial(), self.set.label(id), self.set.n_classes(), id)
    }
}
