use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel for a patch slot that falls into zero padding.
pub(crate) const PAD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            // ln(1 + e^z) without overflow for large z
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Softplus => sigmoid(z),
        }
    }

    /// Joint Lipschitz constant of the activation and its derivative.
    pub fn mu(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            Activation::Softplus => 1.0,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Spatial layout of the pixel axis. Pixels of a grid are indexed row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spatial {
    Line(usize),
    Grid { height: usize, width: usize },
}

impl Spatial {
    pub fn pixels(self) -> usize {
        match self {
            Spatial::Line(p) => p,
            Spatial::Grid { height, width } => height * width,
        }
    }
}

/// Shape of the convolutional reward network.
///
/// `q` is the number of pixels per channel in one patch; on a grid it must be
/// `k * k` for a square `k x k` kernel.
#[derive(Debug, Clone)]
pub struct NetTopology {
    layers: usize,
    channels: usize,
    patch: usize,
    in_channels: usize,
    spatial: Spatial,
    activation: Activation,
    patch_src: Vec<u32>,
}

impl NetTopology {
    pub fn new(
        layers: usize,
        channels: usize,
        patch: usize,
        in_channels: usize,
        spatial: Spatial,
        activation: Activation,
    ) -> Result<Self> {
        if layers == 0 || channels == 0 || patch == 0 || in_channels == 0 {
            return Err(Error::InvalidTopology(format!(
                "L={layers}, m={channels}, q={patch}, c={in_channels} must all be positive"
            )));
        }
        if spatial.pixels() == 0 {
            return Err(Error::InvalidTopology("pixel count must be positive".into()));
        }
        let patch_src = match spatial {
            Spatial::Line(p) => line_patches(p, patch),
            Spatial::Grid { height, width } => {
                let k = (patch as f64).sqrt().round() as usize;
                if k * k != patch {
                    return Err(Error::InvalidTopology(format!(
                        "grid patch size {patch} is not a perfect square"
                    )));
                }
                if k > height.min(width) {
                    return Err(Error::InvalidTopology(format!(
                        "kernel {k}x{k} larger than the {height}x{width} grid"
                    )));
                }
                grid_patches(height, width, k)
            }
        };
        Ok(Self {
            layers,
            channels,
            patch,
            in_channels,
            spatial,
            activation,
            patch_src,
        })
    }

    /// Same topology with a different channel count `m`.
    pub fn with_channels(&self, channels: usize) -> Result<Self> {
        Self::new(
            self.layers,
            channels,
            self.patch,
            self.in_channels,
            self.spatial,
            self.activation,
        )
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn pixels(&self) -> usize {
        self.spatial.pixels()
    }

    pub fn spatial(&self) -> Spatial {
        self.spatial
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn mu(&self) -> f64 {
        self.activation.mu()
    }

    /// Input rows of layer `l` (1-based): `c` for the first layer, `m` after.
    pub fn layer_inputs(&self, l: usize) -> usize {
        if l == 1 {
            self.in_channels
        } else {
            self.channels
        }
    }

    /// Total parameter count `d`.
    pub fn param_count(&self) -> usize {
        let (m, q) = (self.channels, self.patch);
        m * q * self.in_channels + (self.layers - 1) * m * q * m + m * self.pixels()
    }

    /// Post-activation scale `1/sqrt(q m)` applied in every conv layer.
    pub fn layer_scale(&self) -> f64 {
        1.0 / ((self.patch * self.channels) as f64).sqrt()
    }

    /// Source pixel for slot `s` of the patch centred on pixel `j`, laid out as
    /// `j * q + s`; `PAD` marks zero padding.
    pub(crate) fn patch_sources(&self) -> &[u32] {
        &self.patch_src
    }
}

fn line_patches(p: usize, q: usize) -> Vec<u32> {
    let before = (q - 1) / 2;
    let mut src = Vec::with_capacity(p * q);
    for j in 0..p {
        for s in 0..q {
            let pos = j as isize - before as isize + s as isize;
            src.push(if pos >= 0 && (pos as usize) < p {
                pos as u32
            } else {
                PAD
            });
        }
    }
    src
}

fn grid_patches(height: usize, width: usize, k: usize) -> Vec<u32> {
    let before = (k - 1) / 2;
    let mut src = Vec::with_capacity(height * width * k * k);
    for i in 0..height {
        for j in 0..width {
            for di in 0..k {
                for dj in 0..k {
                    let r = i as isize - before as isize + di as isize;
                    let c = j as isize - before as isize + dj as isize;
                    let inside =
                        r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width;
                    src.push(if inside {
                        (r as usize * width + c as usize) as u32
                    } else {
                        PAD
                    });
                }
            }
        }
    }
    src
}

/// One bandit arm: a `c x p` matrix (channels by pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct ArmContext {
    values: DMatrix<f64>,
    spatial: Spatial,
}

impl ArmContext {
    pub fn new(values: DMatrix<f64>, spatial: Spatial) -> Result<Self> {
        if values.ncols() != spatial.pixels() {
            return Err(Error::Dimension(format!(
                "context has {} columns but the layout holds {} pixels",
                values.ncols(),
                spatial.pixels()
            )));
        }
        Ok(Self { values, spatial })
    }

    /// A single-channel context on a line.
    pub fn from_vector(values: &[f64]) -> Self {
        Self {
            values: DMatrix::from_row_slice(1, values.len(), values),
            spatial: Spatial::Line(values.len()),
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn spatial(&self) -> Spatial {
        self.spatial
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.values.ncols()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.norm()
    }

    /// Column-major flattening, used by the vector-input baselines.
    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn check(&self, topology: &NetTopology) -> Result<()> {
        if self.channels() != topology.in_channels() || self.pixels() != topology.pixels() {
            return Err(Error::Dimension(format!(
                "context is {}x{}, network expects {}x{}",
                self.channels(),
                self.pixels(),
                topology.in_channels(),
                topology.pixels()
            )));
        }
        Ok(())
    }
}
